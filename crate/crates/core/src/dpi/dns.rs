//! DNS message header check (RFC 1035 §4.1.1 layout).

use crate::ingest::Transport;

pub const DNS_PORT: u16 = 53;
const HEADER_LEN: usize = 12;
const MAX_OPCODE: u16 = 5;

/// True when `payload` sent to `dst_port` looks like a DNS message.
///
/// Over TCP the two-byte length prefix is skipped first. The header must be
/// complete, carry an opcode of at most 5, at least one question, and a
/// clear reserved Z bit.
pub fn parse_dns(payload: &[u8], dst_port: u16, transport: Transport) -> bool {
    if dst_port != DNS_PORT {
        return false;
    }
    let msg = match transport {
        Transport::Udp => payload,
        Transport::Tcp => match payload.get(2..) {
            Some(rest) => rest,
            None => return false,
        },
    };
    if msg.len() < HEADER_LEN {
        return false;
    }
    let flags = u16::from_be_bytes([msg[2], msg[3]]);
    let opcode = (flags >> 11) & 0x0F;
    let z = flags & 0x0040;
    let qdcount = u16::from_be_bytes([msg[4], msg[5]]);
    opcode <= MAX_OPCODE && z == 0 && qdcount >= 1
}

/// Standard recursive query for `name`, type A, class IN.
pub fn build_query(id: u16, name: &str) -> Vec<u8> {
    let mut m = Vec::with_capacity(HEADER_LEN + name.len() + 6);
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(&0x0100u16.to_be_bytes()); // RD
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&[0; 6]);
    encode_name(&mut m, name);
    m.extend_from_slice(&1u16.to_be_bytes());
    m.extend_from_slice(&1u16.to_be_bytes());
    m
}

/// Response echoing the question of `query` with one A record.
pub fn build_response(query: &[u8], addr: [u8; 4]) -> Vec<u8> {
    let mut m = query.to_vec();
    if m.len() < HEADER_LEN {
        return m;
    }
    m[2] = 0x81; // QR, RD
    m[3] = 0x80; // RA
    m[7] = 1; // ANCOUNT
    m.extend_from_slice(&[0xC0, 0x0C, 0x00, 0x01, 0x00, 0x01, 0x00, 0x00, 0x01, 0x2C, 0x00, 0x04]);
    m.extend_from_slice(&addr);
    m
}

fn encode_name(m: &mut Vec<u8>, name: &str) {
    for label in name.trim_end_matches('.').split('.').filter(|l| !l.is_empty()) {
        let bytes = &label.as_bytes()[..label.len().min(63)];
        m.push(bytes.len() as u8);
        m.extend_from_slice(bytes);
    }
    m.push(0);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_for_example_com() {
        let q = build_query(0x1234, "example.com");
        assert_eq!(
            q,
            [
                0x12, 0x34, 0x01, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 7, b'e', b'x', b'a', b'm',
                b'p', b'l', b'e', 3, b'c', b'o', b'm', 0, 0x00, 0x01, 0x00, 0x01
            ]
        );
        assert!(parse_dns(&q, 53, Transport::Udp));
    }

    #[test]
    fn port_gate_and_short_payloads() {
        let q = build_query(1, "example.com");
        assert!(!parse_dns(&q, 8080, Transport::Udp));
        assert!(!parse_dns(&[], 53, Transport::Udp));
        assert!(!parse_dns(&q[..11], 53, Transport::Udp));
    }

    #[test]
    fn tcp_skips_length_prefix() {
        let q = build_query(7, "example.com");
        let mut framed = (q.len() as u16).to_be_bytes().to_vec();
        framed.extend_from_slice(&q);
        assert!(parse_dns(&framed, 53, Transport::Tcp));
        assert!(!parse_dns(&q[..13], 53, Transport::Tcp));
    }

    #[test]
    fn header_sanity() {
        let mut q = build_query(7, "example.com");
        q[2] |= 6 << 3; // opcode 6
        assert!(!parse_dns(&q, 53, Transport::Udp));
        let mut q = build_query(7, "example.com");
        q[3] |= 0x40; // Z
        assert!(!parse_dns(&q, 53, Transport::Udp));
        let mut q = build_query(7, "example.com");
        q[5] = 0; // QDCOUNT
        assert!(!parse_dns(&q, 53, Transport::Udp));
        let r = build_response(&build_query(7, "example.com"), [1, 2, 3, 4]);
        assert!(parse_dns(&r, 53, Transport::Udp));
    }
}
