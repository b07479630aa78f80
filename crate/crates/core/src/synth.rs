//! Seeded synthetic app traffic with ground-truth roles.
//!
//! Every app gets its own data-plane profile (volume, packet size, ACK
//! pacing, duration, transport mix) so a classifier has something to
//! learn. Heartbeat, DNS, background-service and upload flows are drawn
//! from one shared distribution for all apps, as OS-level noise would be.
//! Payload prefixes are real DNS queries, TLS ClientHellos or QUIC long
//! headers so the DPI stage sees what it would on a capture.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{Read, Write};
use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};
use std::str::FromStr;

use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};

use crate::dpi::{dns, tls};
use crate::error::{Error, Result};
use crate::features::ratio;
use crate::ingest::{Endpoint, FlowRecord, Transport};
use crate::rng::SplitMix64;

const BASE_TS_US: i64 = 1_700_000_000_000_000;
const DATA_PLANE_MIN_RATIO: f64 = 0.9;
const DATA_PLANE_MIN_PASS: f64 = 0.95;
const MAX_RESAMPLES: usize = 1000;

/// Header bytes per packet: Ethernet + IP + transport.
const HDR_TCP4: u64 = 66;
const HDR_TCP6: u64 = 86;
const HDR_UDP4: u64 = 42;
const HDR_UDP6: u64 = 62;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    DataPlane,
    Heartbeat,
    Dns,
    BackgroundTls,
    Upload,
}

impl Role {
    pub const ALL: [Role; 5] = [Role::DataPlane, Role::Heartbeat, Role::Dns, Role::BackgroundTls, Role::Upload];

    pub fn name(self) -> &'static str {
        match self {
            Role::DataPlane => "dataplane",
            Role::Heartbeat => "heartbeat",
            Role::Dns => "dns",
            Role::BackgroundTls => "background_tls",
            Role::Upload => "upload",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm: String = s.chars().filter(|c| *c != '_' && *c != '-').collect::<String>().to_ascii_lowercase();
        match norm.as_str() {
            "dataplane" => Ok(Role::DataPlane),
            "heartbeat" => Ok(Role::Heartbeat),
            "dns" => Ok(Role::Dns),
            "backgroundtls" => Ok(Role::BackgroundTls),
            "upload" => Ok(Role::Upload),
            _ => Err(format!("unknown role {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AppSpec {
    pub label: String,
    /// Flow count per role, indexed like [`Role::ALL`].
    pub counts: [usize; 5],
}

impl AppSpec {
    pub fn new(label: &str, counts: [usize; 5]) -> Self {
        Self { label: label.to_string(), counts }
    }

    pub fn count(&self, role: Role) -> usize {
        self.counts[role as usize]
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub apps: Vec<AppSpec>,
    pub capture_duration_s: f64,
    pub seed: u64,
}

pub const DEFAULT_CAPTURE_DURATION_S: f64 = 7200.0;

impl ScenarioSpec {
    /// Five apps of 2,000 flows: 55% data plane, 15% heartbeat, 15% DNS,
    /// 10% background service TLS, 5% upload.
    pub fn five_apps(seed: u64) -> Self {
        let counts = [1100, 300, 300, 200, 100];
        ScenarioSpec {
            apps: ["app-a", "app-b", "app-c", "app-d", "app-e"].iter().map(|l| AppSpec::new(l, counts)).collect(),
            capture_duration_s: DEFAULT_CAPTURE_DURATION_S,
            seed,
        }
    }

    pub fn total_flows(&self) -> usize {
        self.apps.iter().map(AppSpec::total).sum()
    }

    fn validate(&self) -> Result<()> {
        if self.apps.is_empty() {
            return Err(Error::InvalidSpec("scenario has no apps".into()));
        }
        if !(self.capture_duration_s.is_finite() && self.capture_duration_s >= 60.0) {
            return Err(Error::InvalidSpec(format!(
                "capture_duration_s must be at least 60, got {}",
                self.capture_duration_s
            )));
        }
        let mut seen = BTreeSet::new();
        for a in &self.apps {
            if a.label.is_empty() || a.label.contains(',') || a.label.contains(char::is_whitespace) {
                return Err(Error::InvalidSpec(format!("invalid app label {:?}", a.label)));
            }
            if !seen.insert(&a.label) {
                return Err(Error::InvalidSpec(format!("duplicate app {:?}", a.label)));
            }
        }
        Ok(())
    }

    /// Line-oriented text: `seed <n>`, `capture_duration_s <n>`,
    /// `app <label>` followed by `role <name> <count>` lines; `#` comments.
    pub fn parse(text: &str) -> Result<ScenarioSpec> {
        let mut spec = ScenarioSpec { apps: Vec::new(), capture_duration_s: DEFAULT_CAPTURE_DURATION_S, seed: 42 };
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let err = |msg: String| Error::Parse { line, msg };
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let f: Vec<&str> = content.split_whitespace().collect();
            match (f[0], f.len()) {
                ("seed", 2) => spec.seed = f[1].parse().map_err(|_| err(format!("invalid seed {:?}", f[1])))?,
                ("capture_duration_s", 2) => {
                    spec.capture_duration_s = f[1].parse().map_err(|_| err(format!("invalid duration {:?}", f[1])))?
                }
                ("app", 2) => spec.apps.push(AppSpec::new(f[1], [0; 5])),
                ("role", 3) => {
                    let role: Role = f[1].parse().map_err(err)?;
                    let n: usize = f[2].parse().map_err(|_| err(format!("invalid count {:?}", f[2])))?;
                    let app = spec.apps.last_mut().ok_or_else(|| err("`role` before any `app`".into()))?;
                    app.counts[role as usize] = n;
                }
                _ => return Err(err(format!("unrecognised line {content:?}"))),
            }
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!("seed {}\ncapture_duration_s {}\n", self.seed, self.capture_duration_s);
        for a in &self.apps {
            s.push_str(&format!("app {}\n", a.label));
            for r in Role::ALL {
                s.push_str(&format!("role {} {}\n", r, a.count(r)));
            }
        }
        s
    }
}

/// Data-plane traffic shape of one app.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DataPlaneProfile {
    /// Log-normal download volume: median and log-space sigma.
    pub bytes_in_median: f64,
    pub bytes_in_sigma: f64,
    /// Mean wire size of server-to-client packets and its spread.
    pub pkt_in_mean: f64,
    pub pkt_in_spread: f64,
    /// Server packets per client ACK.
    pub ack_every: f64,
    /// Mean payload riding on client packets.
    pub out_payload_mean: f64,
    pub duration_s: (f64, f64),
    pub quic_share: f64,
    pub ipv6_share: f64,
}

impl DataPlaneProfile {
    pub fn bytes_in_mean(&self) -> f64 {
        self.bytes_in_median * (self.bytes_in_sigma * self.bytes_in_sigma / 2.0).exp()
    }
}

const PROFILES: [DataPlaneProfile; 5] = [
    DataPlaneProfile {
        bytes_in_median: 2.5e6,
        bytes_in_sigma: 0.7,
        pkt_in_mean: 1380.0,
        pkt_in_spread: 40.0,
        ack_every: 2.0,
        out_payload_mean: 10.0,
        duration_s: (8.0, 90.0),
        quic_share: 0.0,
        ipv6_share: 0.0,
    },
    DataPlaneProfile {
        bytes_in_median: 1.2e6,
        bytes_in_sigma: 0.6,
        pkt_in_mean: 1240.0,
        pkt_in_spread: 60.0,
        ack_every: 2.2,
        out_payload_mean: 14.0,
        duration_s: (4.0, 45.0),
        quic_share: 0.3,
        ipv6_share: 0.0,
    },
    DataPlaneProfile {
        bytes_in_median: 6.0e5,
        bytes_in_sigma: 0.8,
        pkt_in_mean: 1100.0,
        pkt_in_spread: 80.0,
        ack_every: 2.6,
        out_payload_mean: 10.0,
        duration_s: (2.0, 30.0),
        quic_share: 0.0,
        ipv6_share: 0.5,
    },
    DataPlaneProfile {
        bytes_in_median: 3.6e6,
        bytes_in_sigma: 0.5,
        pkt_in_mean: 1420.0,
        pkt_in_spread: 20.0,
        ack_every: 2.0,
        out_payload_mean: 6.0,
        duration_s: (15.0, 150.0),
        quic_share: 0.6,
        ipv6_share: 0.0,
    },
    DataPlaneProfile {
        bytes_in_median: 9.0e5,
        bytes_in_sigma: 0.7,
        pkt_in_mean: 1000.0,
        pkt_in_spread: 70.0,
        ack_every: 2.4,
        out_payload_mean: 12.0,
        duration_s: (3.0, 60.0),
        quic_share: 0.0,
        ipv6_share: 0.2,
    },
];

/// Profile of the app at position `index` in a scenario. Positions past
/// the five base profiles reuse them with a deterministic jitter.
pub fn data_plane_profile(index: usize) -> DataPlaneProfile {
    let mut p = PROFILES[index % PROFILES.len()];
    let round = index / PROFILES.len();
    if round > 0 {
        let mut rng = SplitMix64::fork(0x005E_ED0F_A995, index as u64);
        p.bytes_in_median *= rng.uniform(0.6, 1.6);
        p.pkt_in_mean = (p.pkt_in_mean + rng.uniform(-80.0, 60.0)).min(1450.0);
        p.duration_s.1 *= rng.uniform(0.7, 1.4);
    }
    p
}

/// Generated flows; `roles[i]` is the hidden role of `flows[i]`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scenario {
    pub flows: Vec<FlowRecord>,
    pub roles: Vec<Role>,
}

impl Scenario {
    pub fn role_of(&self, flow_id: u64) -> Option<Role> {
        self.flows.iter().position(|f| f.id == flow_id).map(|i| self.roles[i])
    }
}

struct Ctx {
    rng: SplitMix64,
    app_index: usize,
    host: String,
    profile: DataPlaneProfile,
    capture_s: f64,
}

struct Shape {
    transport: Transport,
    ipv6: bool,
    server_port: u16,
    bytes_in: u64,
    bytes_out: u64,
    packets_in: u64,
    packets_out: u64,
    header: u64,
    duration_s: f64,
    client_prefix: Vec<u8>,
    server_prefix: Vec<u8>,
}

/// Generates the scenario. Identical specs give identical output.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let mut out = Scenario::default();
    for (index, app) in spec.apps.iter().enumerate() {
        let profile = data_plane_profile(index);
        if app.count(Role::DataPlane) > 0 {
            validate_profile(&profile, spec.seed, index)?;
        }
        let mut ctx = Ctx {
            rng: SplitMix64::fork(spec.seed, index as u64),
            app_index: index,
            host: host_label(&app.label),
            profile,
            capture_s: spec.capture_duration_s,
        };
        let mut flows: Vec<(FlowRecord, Role)> = Vec::with_capacity(app.total());
        for role in Role::ALL {
            for _ in 0..app.count(role) {
                let shape = match role {
                    Role::DataPlane => data_plane(&mut ctx)?,
                    Role::Heartbeat => heartbeat(&mut ctx),
                    Role::Dns => dns_lookup(&mut ctx),
                    Role::BackgroundTls => background(&mut ctx),
                    Role::Upload => upload(&mut ctx),
                };
                flows.push((finish(&mut ctx, &app.label, shape), role));
            }
        }
        ctx.rng.shuffle(&mut flows);
        for (mut f, role) in flows {
            f.id = out.flows.len() as u64;
            out.flows.push(f);
            out.roles.push(role);
        }
    }
    Ok(out)
}

/// The manual-cleaning stand-in: exactly the data-plane flows.
pub fn oracle_clean(scenario: &Scenario) -> Vec<FlowRecord> {
    scenario.flows.iter().zip(&scenario.roles).filter(|(_, r)| **r == Role::DataPlane).map(|(f, _)| f.clone()).collect()
}

fn validate_profile(p: &DataPlaneProfile, seed: u64, index: usize) -> Result<()> {
    const DRAWS: usize = 2000;
    let mut rng = SplitMix64::fork(seed ^ 0xD47A_F1A1_0000_0000, index as u64);
    let passing = (0..DRAWS)
        .filter(|_| {
            let s = data_plane_draw(p, &mut rng);
            ratio(s.bytes_in as f64, s.bytes_out as f64) > DATA_PLANE_MIN_RATIO
        })
        .count();
    let share = passing as f64 / DRAWS as f64;
    if share < DATA_PLANE_MIN_PASS {
        return Err(Error::InvalidSpec(format!(
            "data-plane profile {index} yields ratio > {DATA_PLANE_MIN_RATIO} for only {:.1}% of flows",
            share * 100.0
        )));
    }
    Ok(())
}

fn host_label(label: &str) -> String {
    let s: String =
        label.to_ascii_lowercase().chars().map(|c| if c.is_ascii_alphanumeric() { c } else { '-' }).collect();
    s.trim_matches('-').to_string()
}

fn lognormal(rng: &mut SplitMix64, median: f64, sigma: f64) -> f64 {
    LogNormal::new(median.ln(), sigma).expect("finite parameters").sample(rng)
}

fn normal(rng: &mut SplitMix64, mean: f64, sd: f64) -> f64 {
    rand_distr::Normal::new(mean, sd).expect("finite parameters").sample(rng)
}

fn random_bytes<const N: usize>(rng: &mut SplitMix64) -> [u8; N] {
    std::array::from_fn(|_| rng.below(256) as u8)
}

struct Volume {
    bytes_in: u64,
    bytes_out: u64,
    packets_in: u64,
    packets_out: u64,
    quic: bool,
    ipv6: bool,
}

fn data_plane_draw(p: &DataPlaneProfile, rng: &mut SplitMix64) -> Volume {
    let quic = rng.next_f64() < p.quic_share;
    let ipv6 = rng.next_f64() < p.ipv6_share;
    let header = header_size(quic, ipv6);
    let bytes_in = lognormal(rng, p.bytes_in_median, p.bytes_in_sigma).max(20_000.0) as u64;
    let pkt_in = normal(rng, p.pkt_in_mean, p.pkt_in_spread).clamp(header as f64 + 200.0, 1514.0);
    let packets_in = ((bytes_in as f64 / pkt_in).round() as u64).max(1);
    let ack_every = p.ack_every * rng.uniform(0.85, 1.15);
    let packets_out = ((packets_in as f64 / ack_every).round() as u64).max(1);
    let out_payload = (p.out_payload_mean * rng.uniform(0.4, 1.6) * packets_out as f64) as u64;
    // Request plus ClientHello / QUIC Initial on top of the ACK stream.
    let request = rng.uniform(600.0, 1800.0) as u64;
    Volume { bytes_in, bytes_out: packets_out * header + out_payload + request, packets_in, packets_out, quic, ipv6 }
}

fn header_size(udp: bool, ipv6: bool) -> u64 {
    match (udp, ipv6) {
        (false, false) => HDR_TCP4,
        (false, true) => HDR_TCP6,
        (true, false) => HDR_UDP4,
        (true, true) => HDR_UDP6,
    }
}

fn client_hello(rng: &mut SplitMix64, sni: &str) -> Vec<u8> {
    tls::build_client_hello(Some(sni), random_bytes::<32>(rng))
}

fn server_hello_prefix(rng: &mut SplitMix64) -> Vec<u8> {
    let mut v = vec![0x16, 0x03, 0x03, 0x00, 0x7a, 0x02, 0x00, 0x00, 0x76, 0x03, 0x03];
    v.extend_from_slice(&random_bytes::<32>(rng));
    v
}

fn quic_initial(rng: &mut SplitMix64) -> Vec<u8> {
    // Long header, Initial, version 1, 8-byte connection ids, then ciphertext.
    let mut v = vec![0xC3, 0x00, 0x00, 0x00, 0x01, 0x08];
    v.extend_from_slice(&random_bytes::<8>(rng));
    v.push(0x08);
    v.extend_from_slice(&random_bytes::<8>(rng));
    while v.len() < 256 {
        v.push(rng.below(256) as u8);
    }
    v
}

fn data_plane(ctx: &mut Ctx) -> Result<Shape> {
    for _ in 0..MAX_RESAMPLES {
        let v = data_plane_draw(&ctx.profile, &mut ctx.rng);
        if ratio(v.bytes_in as f64, v.bytes_out as f64) <= DATA_PLANE_MIN_RATIO {
            continue;
        }
        let (lo, hi) = ctx.profile.duration_s;
        let duration_s = ctx.rng.uniform(lo, hi);
        let shard = ctx.rng.below(40);
        let (client_prefix, server_prefix) = if v.quic {
            (quic_initial(&mut ctx.rng), random_bytes::<48>(&mut ctx.rng).to_vec())
        } else {
            let sni = format!("v{shard}.{}-cdn.net", ctx.host);
            (client_hello(&mut ctx.rng, &sni), server_hello_prefix(&mut ctx.rng))
        };
        return Ok(Shape {
            transport: if v.quic { Transport::Udp } else { Transport::Tcp },
            ipv6: v.ipv6,
            server_port: 443,
            bytes_in: v.bytes_in,
            bytes_out: v.bytes_out,
            packets_in: v.packets_in,
            packets_out: v.packets_out,
            header: header_size(v.quic, v.ipv6),
            duration_s,
            client_prefix,
            server_prefix,
        });
    }
    Err(Error::InvalidSpec(format!(
        "data-plane profile {} never produced ratio > {DATA_PLANE_MIN_RATIO}",
        ctx.app_index
    )))
}

const PUSH_HOSTS: [&str; 3] = ["mqtt.pushsvc.net", "keepalive.msgcenter.io", "long.conn-gw.net"];
const LOOKUP_NAMES: [&str; 6] = [
    "api.example-app.net",
    "cdn.example-app.net",
    "config.mobilesdk.io",
    "time.ntp-pool.org",
    "logs.analytics-hub.com",
    "img.static-edge.net",
];
const SERVICE_HOSTS: [&str; 6] = [
    "play.googleapis.com",
    "www.gstatic.com",
    "gsp64-ssl.ls.apple.com",
    "p45-keyvalueservice.icloud.com",
    "speed.cloudflare.com",
    "android.clients.google.com",
];

fn heartbeat(ctx: &mut Ctx) -> Shape {
    let rng = &mut ctx.rng;
    let duration_s = ctx.capture_s * rng.uniform(0.3, 0.98);
    let period = rng.uniform(25.0, 60.0);
    let beats = ((duration_s / period).round() as u64).max(2);
    let ipv6 = rng.next_f64() < 0.2;
    let header = header_size(false, ipv6);
    let packets_out = beats + rng.below(3) as u64;
    let packets_in = beats;
    let bytes_out = packets_out * header + (packets_out as f64 * rng.uniform(20.0, 60.0)) as u64 + 400;
    let bytes_in = packets_in * header + (packets_in as f64 * rng.uniform(20.0, 80.0)) as u64 + 2500;
    let host = PUSH_HOSTS[rng.below(PUSH_HOSTS.len())];
    Shape {
        transport: Transport::Tcp,
        ipv6,
        server_port: 443,
        bytes_in,
        bytes_out,
        packets_in,
        packets_out,
        header,
        duration_s,
        client_prefix: client_hello(rng, host),
        server_prefix: server_hello_prefix(rng),
    }
}

fn dns_lookup(ctx: &mut Ctx) -> Shape {
    let rng = &mut ctx.rng;
    let ipv6 = rng.next_f64() < 0.2;
    let header = header_size(true, ipv6);
    let name = LOOKUP_NAMES[rng.below(LOOKUP_NAMES.len())];
    let query = dns::build_query(rng.below(65536) as u16, name);
    let response = dns::build_response(&query, random_bytes::<4>(rng));
    let exchanges = 1 + rng.below(2) as u64;
    Shape {
        transport: Transport::Udp,
        ipv6,
        server_port: dns::DNS_PORT,
        bytes_in: exchanges * (header + response.len() as u64),
        bytes_out: exchanges * (header + query.len() as u64),
        packets_in: exchanges,
        packets_out: exchanges,
        header,
        duration_s: rng.uniform(0.005, 0.15),
        client_prefix: query,
        server_prefix: response,
    }
}

fn background(ctx: &mut Ctx) -> Shape {
    let rng = &mut ctx.rng;
    let ipv6 = rng.next_f64() < 0.2;
    let header = header_size(false, ipv6);
    let bytes_in = lognormal(rng, 40_000.0, 1.0).max(3_000.0) as u64;
    let bytes_out = lognormal(rng, 8_000.0, 0.8).max(1_500.0) as u64;
    let packets_in = (bytes_in / rng.uniform(600.0, 1200.0) as u64).max(2);
    let packets_out = (bytes_out / rng.uniform(150.0, 400.0) as u64).max(2);
    let host = SERVICE_HOSTS[rng.below(SERVICE_HOSTS.len())];
    Shape {
        transport: Transport::Tcp,
        ipv6,
        server_port: 443,
        bytes_in: bytes_in.max(packets_in * header),
        bytes_out: bytes_out.max(packets_out * header),
        packets_in,
        packets_out,
        header,
        duration_s: rng.uniform(1.0, 60.0),
        client_prefix: client_hello(rng, host),
        server_prefix: server_hello_prefix(rng),
    }
}

fn upload(ctx: &mut Ctx) -> Shape {
    let rng = &mut ctx.rng;
    let ipv6 = rng.next_f64() < 0.2;
    let header = header_size(false, ipv6);
    let bytes_out = lognormal(rng, 1.5e6, 0.7).max(50_000.0) as u64;
    let packets_out = (bytes_out as f64 / rng.uniform(1200.0, 1400.0)).round() as u64;
    let packets_in = ((packets_out as f64 / rng.uniform(1.7, 2.3)).round() as u64).max(1);
    let bytes_in = packets_in * header + (packets_in as f64 * rng.uniform(0.0, 10.0)) as u64 + 3000;
    Shape {
        transport: Transport::Tcp,
        ipv6,
        server_port: 443,
        bytes_in,
        bytes_out,
        packets_in,
        packets_out: packets_out.max(1),
        header,
        duration_s: rng.uniform(5.0, 120.0),
        client_prefix: client_hello(rng, "upload.media-ingest.net"),
        server_prefix: server_hello_prefix(rng),
    }
}

fn finish(ctx: &mut Ctx, label: &str, s: Shape) -> FlowRecord {
    let rng = &mut ctx.rng;
    let duration_s = s.duration_s.min(ctx.capture_s);
    let start_s = rng.uniform(0.0, ctx.capture_s - duration_s);
    let first_ts_us = BASE_TS_US + (start_s * 1e6) as i64;
    let last_ts_us = first_ts_us + (duration_s * 1e6) as i64;
    let a = ctx.app_index as u16;
    let (client_ip, server_ip) = if s.ipv6 {
        let c = Ipv6Addr::new(0xfd00, a, 0, 0, 0, 0, rng.below(65536) as u16, 1 + rng.below(65535) as u16);
        let v = Ipv6Addr::new(0x2001, 0x0db8, rng.below(256) as u16, 0, 0, 0, 0, 1 + rng.below(65535) as u16);
        (IpAddr::V6(c), IpAddr::V6(v))
    } else {
        let c = Ipv4Addr::new(10, (a % 256) as u8, rng.below(256) as u8, 1 + rng.below(254) as u8);
        let v = Ipv4Addr::new(203, 0, 113 + rng.below(3) as u8, 1 + rng.below(254) as u8);
        (IpAddr::V4(c), IpAddr::V4(v))
    };
    let packets = s.packets_in + s.packets_out;
    let header_bytes_total = packets * s.header;
    let total = s.bytes_in + s.bytes_out;
    debug_assert!(total >= header_bytes_total, "wire bytes below header bytes");
    FlowRecord {
        id: 0,
        app_label: Some(label.to_string()),
        transport: s.transport,
        client: Endpoint::new(client_ip, 32768 + rng.below(28232) as u16),
        server: Endpoint::new(server_ip, s.server_port),
        first_ts_us,
        last_ts_us,
        bytes_in: s.bytes_in,
        bytes_out: s.bytes_out,
        packets_in: s.packets_in,
        packets_out: s.packets_out,
        header_bytes_total,
        payload_bytes_total: total.saturating_sub(header_bytes_total),
        client_payload_prefix: s.client_prefix,
        server_payload_prefix: s.server_prefix,
    }
}

/// Ground-truth sidecar CSV: `flow_id,role`.
pub fn write_roles<W: Write>(scenario: &Scenario, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flow_id", "role"])?;
    for (f, r) in scenario.flows.iter().zip(&scenario.roles) {
        w.write_record([f.id.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a roles sidecar and lines it up with `flows` by flow id.
pub fn read_roles<R: Read>(flows: Vec<FlowRecord>, input: R) -> Result<Scenario> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["flow_id", "role"] {
        return Err(Error::SchemaMismatch("roles file must have header flow_id,role".into()));
    }
    let mut by_id = std::collections::HashMap::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let id: u64 =
            rec[0].parse().map_err(|_| Error::Value { line, msg: format!("invalid flow_id {:?}", &rec[0]) })?;
        let role: Role = rec[1].parse().map_err(|msg| Error::Value { line, msg })?;
        by_id.insert(id, role);
    }
    let roles = flows
        .iter()
        .map(|f| {
            by_id
                .get(&f.id)
                .copied()
                .ok_or_else(|| Error::Value { line: 0, msg: format!("flow {} has no role in the sidecar", f.id) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Scenario { flows, roles })
}
