//! Packet capture ingestion and bidirectional flow assembly.

mod decode;
mod flow;
mod pcap;
mod table;
mod tags;

use std::fmt;
use std::net::IpAddr;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use decode::{decode_frame, Decoded};
pub use flow::{apply_tags, assemble_flows, Assembly, FlowOrigin, DEFAULT_IDLE_TIMEOUT_S};
pub use pcap::{parse_pcap, read_packets, Capture, CaptureOptions, PcapWriter, LINKTYPE_ETHERNET, LINKTYPE_RAW};
pub use table::{read_flow_table, read_flow_table_from, write_flow_table, write_flow_table_to, FLOW_TABLE_HEADER};
pub use tags::TagMap;

use crate::error::Error;

/// Bytes of payload kept per packet and per flow direction.
pub const DEFAULT_PREFIX_CAP: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Transport {
    Tcp,
    Udp,
}

impl Transport {
    pub fn as_str(self) -> &'static str {
        match self {
            Transport::Tcp => "tcp",
            Transport::Udp => "udp",
        }
    }
}

impl fmt::Display for Transport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Transport {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "tcp" => Ok(Transport::Tcp),
            "udp" => Ok(Transport::Udp),
            other => Err(format!("unknown transport {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct MacAddr(pub [u8; 6]);

impl fmt::Display for MacAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.0;
        write!(f, "{:02x}:{:02x}:{:02x}:{:02x}:{:02x}:{:02x}", b[0], b[1], b[2], b[3], b[4], b[5])
    }
}

impl FromStr for MacAddr {
    type Err = String;

    /// Accepts `aa:bb:cc:dd:ee:ff`, `aa-bb-...` or twelve bare hex digits.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits: String = s.chars().filter(|c| *c != ':' && *c != '-').collect();
        let bytes = hex::decode(&digits).map_err(|_| format!("invalid MAC address {s:?}"))?;
        let arr: [u8; 6] = bytes.try_into().map_err(|_| format!("invalid MAC address {s:?}"))?;
        Ok(MacAddr(arr))
    }
}

/// TCP control bits that matter for flow termination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct TcpFlags(u8);

impl TcpFlags {
    pub const FIN: TcpFlags = TcpFlags(0x01);
    pub const SYN: TcpFlags = TcpFlags(0x02);
    pub const RST: TcpFlags = TcpFlags(0x04);
    pub const ACK: TcpFlags = TcpFlags(0x10);

    /// Keeps the FIN, SYN, RST and ACK bits of a raw TCP flags byte.
    pub fn from_bits(bits: u8) -> Self {
        TcpFlags(bits & 0x17)
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn contains(self, other: TcpFlags) -> bool {
        self.0 & other.0 == other.0
    }
}

impl std::ops::BitOr for TcpFlags {
    type Output = TcpFlags;

    fn bitor(self, rhs: TcpFlags) -> TcpFlags {
        TcpFlags(self.0 | rhs.0)
    }
}

/// One decoded TCP or UDP packet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub timestamp_us: i64,
    pub src_mac: MacAddr,
    pub vlan_id: Option<u16>,
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub transport: Transport,
    /// Original length on the wire, link layer included.
    pub wire_len: u32,
    /// Link + IP + transport header bytes.
    pub header_len: u32,
    pub payload_len: u32,
    pub payload_prefix: Vec<u8>,
    pub tcp_flags: Option<TcpFlags>,
}

impl PacketRecord {
    pub fn src(&self) -> Endpoint {
        Endpoint::new(self.src_ip, self.src_port)
    }

    pub fn dst(&self) -> Endpoint {
        Endpoint::new(self.dst_ip, self.dst_port)
    }

    pub fn flow_key(&self) -> FlowKey {
        FlowKey::new(self.src(), self.dst(), self.transport)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Endpoint {
    pub ip: IpAddr,
    pub port: u16,
}

impl Endpoint {
    pub fn new(ip: IpAddr, port: u16) -> Self {
        Self { ip, port }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.ip {
            IpAddr::V4(ip) => write!(f, "{ip}:{}", self.port),
            IpAddr::V6(ip) => write!(f, "[{ip}]:{}", self.port),
        }
    }
}

/// Direction-independent conversation key: the two endpoints in sorted
/// order plus the transport.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlowKey {
    lo: Endpoint,
    hi: Endpoint,
    transport: Transport,
}

impl FlowKey {
    pub fn new(a: Endpoint, b: Endpoint, transport: Transport) -> Self {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        Self { lo, hi, transport }
    }

    pub fn endpoints(&self) -> (Endpoint, Endpoint) {
        (self.lo, self.hi)
    }

    pub fn transport(&self) -> Transport {
        self.transport
    }
}

/// A bidirectional flow. "Out" is client to server, "in" is server to
/// client, where the client sent the first packet observed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowRecord {
    pub id: u64,
    pub app_label: Option<String>,
    pub transport: Transport,
    pub client: Endpoint,
    pub server: Endpoint,
    pub first_ts_us: i64,
    pub last_ts_us: i64,
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub packets_in: u64,
    pub packets_out: u64,
    pub header_bytes_total: u64,
    pub payload_bytes_total: u64,
    pub client_payload_prefix: Vec<u8>,
    pub server_payload_prefix: Vec<u8>,
}

impl FlowRecord {
    pub fn key(&self) -> FlowKey {
        FlowKey::new(self.client, self.server, self.transport)
    }

    pub fn dst_port(&self) -> u16 {
        self.server.port
    }

    pub fn packets(&self) -> u64 {
        self.packets_in + self.packets_out
    }

    pub fn label(&self) -> Result<&str, Error> {
        self.app_label.as_deref().ok_or(Error::Unlabeled(self.id))
    }
}
