//! Ethernet / 802.1Q / IPv4 / IPv6 / TCP / UDP header decoding.

use std::net::{IpAddr, Ipv4Addr, Ipv6Addr};

use super::{MacAddr, PacketRecord, TcpFlags, Transport};

const ETH_HEADER: usize = 14;
const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_IPV6: u16 = 0x86DD;
const ETHERTYPE_VLAN: u16 = 0x8100;
const ETHERTYPE_QINQ: u16 = 0x88A8;
const PROTO_TCP: u8 = 6;
const PROTO_UDP: u8 = 17;

#[derive(Debug)]
pub enum Decoded {
    Packet(PacketRecord),
    Skipped,
    Truncated,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

/// Decodes one captured frame. `wire_len` is the original frame length.
pub fn decode_frame(link_type: u32, frame: &[u8], wire_len: u32, timestamp_us: i64, prefix_cap: usize) -> Decoded {
    let mut src_mac = MacAddr::default();
    let mut vlan_id = None;
    let (mut ethertype, mut at) = if link_type == super::LINKTYPE_RAW {
        match frame.first().map(|b| b >> 4) {
            Some(4) => (ETHERTYPE_IPV4, 0),
            Some(6) => (ETHERTYPE_IPV6, 0),
            Some(_) => return Decoded::Skipped,
            None => return Decoded::Truncated,
        }
    } else {
        if frame.len() < ETH_HEADER {
            return Decoded::Truncated;
        }
        src_mac.0.copy_from_slice(&frame[6..12]);
        (be16(frame, 12), ETH_HEADER)
    };
    while ethertype == ETHERTYPE_VLAN || ethertype == ETHERTYPE_QINQ {
        if frame.len() < at + 4 {
            return Decoded::Truncated;
        }
        // Outermost tag wins.
        vlan_id.get_or_insert(be16(frame, at) & 0x0FFF);
        ethertype = be16(frame, at + 2);
        at += 4;
    }
    let link_len = at;

    let (src_ip, dst_ip, proto, ip_header, ip_payload_len) = match ethertype {
        ETHERTYPE_IPV4 => {
            if frame.len() < at + 20 {
                return Decoded::Truncated;
            }
            let ip = &frame[at..];
            if ip[0] >> 4 != 4 {
                return Decoded::Skipped;
            }
            let ihl = (ip[0] & 0x0F) as usize * 4;
            let total = be16(ip, 2) as usize;
            if ihl < 20 || total < ihl {
                return Decoded::Skipped;
            }
            if ip.len() < ihl {
                return Decoded::Truncated;
            }
            // Non-first fragments carry no transport header.
            if be16(ip, 6) & 0x1FFF != 0 {
                return Decoded::Skipped;
            }
            let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
            let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);
            (IpAddr::V4(src), IpAddr::V4(dst), ip[9], ihl, total - ihl)
        }
        ETHERTYPE_IPV6 => {
            if frame.len() < at + 40 {
                return Decoded::Truncated;
            }
            let ip = &frame[at..];
            if ip[0] >> 4 != 6 {
                return Decoded::Skipped;
            }
            let mut src = [0u8; 16];
            let mut dst = [0u8; 16];
            src.copy_from_slice(&ip[8..24]);
            dst.copy_from_slice(&ip[24..40]);
            (IpAddr::V6(Ipv6Addr::from(src)), IpAddr::V6(Ipv6Addr::from(dst)), ip[6], 40, be16(ip, 4) as usize)
        }
        _ => return Decoded::Skipped,
    };
    at += ip_header;

    let (transport, l4_header, src_port, dst_port, tcp_flags) = match proto {
        PROTO_TCP => {
            if frame.len() < at + 20 {
                return Decoded::Truncated;
            }
            let tcp = &frame[at..];
            let off = (tcp[12] >> 4) as usize * 4;
            if off < 20 || off > ip_payload_len {
                return Decoded::Skipped;
            }
            if tcp.len() < off {
                return Decoded::Truncated;
            }
            (Transport::Tcp, off, be16(tcp, 0), be16(tcp, 2), Some(TcpFlags::from_bits(tcp[13])))
        }
        PROTO_UDP => {
            if frame.len() < at + 8 {
                return Decoded::Truncated;
            }
            if ip_payload_len < 8 {
                return Decoded::Skipped;
            }
            let udp = &frame[at..];
            (Transport::Udp, 8, be16(udp, 0), be16(udp, 2), None)
        }
        _ => return Decoded::Skipped,
    };
    at += l4_header;

    let header_len = (link_len + ip_header + l4_header) as u32;
    let payload_len = (ip_payload_len - l4_header) as u32;
    if header_len as u64 + payload_len as u64 > wire_len as u64 {
        return Decoded::Skipped;
    }
    // Ethernet padding past the IP total length is not payload.
    let captured = frame.len().saturating_sub(at).min(payload_len as usize);
    let keep = captured.min(prefix_cap);

    Decoded::Packet(PacketRecord {
        timestamp_us,
        src_mac,
        vlan_id,
        src_ip,
        dst_ip,
        src_port,
        dst_port,
        transport,
        wire_len,
        header_len,
        payload_len,
        payload_prefix: frame[at..at + keep].to_vec(),
        tcp_flags,
    })
}
