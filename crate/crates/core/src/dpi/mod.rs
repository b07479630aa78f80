//! Payload inspection that separates plaintext and blocklisted service
//! flows from the encrypted app traffic worth clustering.

mod blocklist;
pub mod dns;
pub mod tls;

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use blocklist::{Blocklist, DEFAULT_BLOCKLIST};
pub use dns::parse_dns;
pub use tls::{parse_client_hello, parse_tls_client_hello};

use crate::ingest::{FlowRecord, Transport};

const HTTP_METHODS: [&[u8]; 7] = [b"GET ", b"POST ", b"PUT ", b"HEAD ", b"DELETE ", b"OPTIONS ", b"CONNECT "];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "verdict", content = "sni")]
pub enum ProtocolVerdict {
    PlaintextDns,
    PlaintextHttp,
    TlsWithSni(String),
    TlsNoSni,
    OtherEncryptedAssumed,
}

impl fmt::Display for ProtocolVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProtocolVerdict::PlaintextDns => f.write_str("PlaintextDNS"),
            ProtocolVerdict::PlaintextHttp => f.write_str("PlaintextHTTP"),
            ProtocolVerdict::TlsWithSni(sni) => write!(f, "TlsWithSni({sni})"),
            ProtocolVerdict::TlsNoSni => f.write_str("TlsNoSni"),
            ProtocolVerdict::OtherEncryptedAssumed => f.write_str("OtherEncryptedAssumed"),
        }
    }
}

impl ProtocolVerdict {
    /// Whether a flow with this verdict is discarded under `blocklist`.
    pub fn is_discarded(&self, blocklist: &Blocklist) -> bool {
        match self {
            ProtocolVerdict::PlaintextDns | ProtocolVerdict::PlaintextHttp => true,
            ProtocolVerdict::TlsWithSni(sni) => blocklist.contains_match(sni),
            ProtocolVerdict::TlsNoSni | ProtocolVerdict::OtherEncryptedAssumed => false,
        }
    }
}

/// Verdict for a flow from its client-side payload prefix.
///
/// First match wins: DNS header, HTTP method token, TLS ClientHello,
/// otherwise the flow is assumed encrypted.
pub fn classify_payload(client_prefix: &[u8], dst_port: u16, transport: Transport) -> ProtocolVerdict {
    if parse_dns(client_prefix, dst_port, transport) {
        return ProtocolVerdict::PlaintextDns;
    }
    if HTTP_METHODS.iter().any(|m| client_prefix.starts_with(m)) {
        return ProtocolVerdict::PlaintextHttp;
    }
    match parse_client_hello(client_prefix) {
        Some(hello) => match hello.sni {
            Some(sni) => ProtocolVerdict::TlsWithSni(sni),
            None => ProtocolVerdict::TlsNoSni,
        },
        None => ProtocolVerdict::OtherEncryptedAssumed,
    }
}

pub fn classify_flow(flow: &FlowRecord) -> ProtocolVerdict {
    classify_payload(&flow.client_payload_prefix, flow.dst_port(), flow.transport)
}

/// Flows split by [`filter_flows`], each list in input order.
#[derive(Debug, Clone, Default)]
pub struct FilterOutcome {
    pub kept: Vec<FlowRecord>,
    pub discarded: Vec<(FlowRecord, ProtocolVerdict)>,
}

/// Discards plaintext DNS/HTTP and TLS flows whose SNI is blocklisted.
pub fn filter_flows(flows: Vec<FlowRecord>, blocklist: &Blocklist) -> FilterOutcome {
    let verdicts: Vec<ProtocolVerdict> = flows.par_iter().map(classify_flow).collect();
    let mut out = FilterOutcome::default();
    for (flow, verdict) in flows.into_iter().zip(verdicts) {
        if verdict.is_discarded(blocklist) {
            out.discarded.push((flow, verdict));
        } else {
            out.kept.push(flow);
        }
    }
    out
}
