use std::collections::HashMap;

use super::{FlowKey, FlowRecord, MacAddr, PacketRecord, TagMap, TcpFlags, Transport, DEFAULT_PREFIX_CAP};

pub const DEFAULT_IDLE_TIMEOUT_S: f64 = 60.0;

/// Link-layer identity of the packet that opened a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowOrigin {
    pub src_mac: MacAddr,
    pub vlan_id: Option<u16>,
}

/// Assembled flows in order of their first packet, with `origins[i]`
/// describing `flows[i]`.
#[derive(Debug, Clone, Default)]
pub struct Assembly {
    pub flows: Vec<FlowRecord>,
    pub origins: Vec<FlowOrigin>,
}

struct Active {
    flow: usize,
    fin_client: bool,
    fin_server: bool,
    finished: bool,
}

/// Groups packets into bidirectional flows.
///
/// Packets are ordered by timestamp, ties by input position. A flow ends
/// when the next packet of its key arrives more than `idle_timeout_s`
/// after the previous one, or after an RST or FINs from both sides. Once
/// finished, trailing bare ACKs are still absorbed; anything else opens a
/// new flow.
pub fn assemble_flows(packets: &[PacketRecord], idle_timeout_s: f64) -> Assembly {
    let timeout_us = idle_timeout_s * 1e6;
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by_key(|&i| (packets[i].timestamp_us, i));

    let mut out = Assembly::default();
    let mut last_ts: Vec<i64> = Vec::new();
    let mut active: HashMap<FlowKey, Active> = HashMap::new();

    for i in order {
        let p = &packets[i];
        let key = p.flow_key();
        let reuse = match active.get(&key) {
            Some(a) => {
                let gap = (p.timestamp_us - last_ts[a.flow]) as f64;
                gap <= timeout_us && (!a.finished || is_trailing_ack(p))
            }
            None => false,
        };
        if !reuse {
            let id = out.flows.len();
            out.flows.push(FlowRecord {
                id: id as u64,
                app_label: None,
                transport: p.transport,
                client: p.src(),
                server: p.dst(),
                first_ts_us: p.timestamp_us,
                last_ts_us: p.timestamp_us,
                bytes_in: 0,
                bytes_out: 0,
                packets_in: 0,
                packets_out: 0,
                header_bytes_total: 0,
                payload_bytes_total: 0,
                client_payload_prefix: Vec::new(),
                server_payload_prefix: Vec::new(),
            });
            out.origins.push(FlowOrigin { src_mac: p.src_mac, vlan_id: p.vlan_id });
            last_ts.push(p.timestamp_us);
            active.insert(key, Active { flow: id, fin_client: false, fin_server: false, finished: false });
        }
        let state = active.get_mut(&key).expect("flow registered above");
        let flow = &mut out.flows[state.flow];
        last_ts[state.flow] = p.timestamp_us;
        absorb(flow, p);

        if let Some(flags) = p.tcp_flags {
            let from_client = p.src() == flow.client;
            if flags.contains(TcpFlags::RST) {
                state.finished = true;
            }
            if flags.contains(TcpFlags::FIN) {
                if from_client {
                    state.fin_client = true;
                } else {
                    state.fin_server = true;
                }
                state.finished |= state.fin_client && state.fin_server;
            }
        }
    }
    out
}

fn is_trailing_ack(p: &PacketRecord) -> bool {
    match (p.transport, p.tcp_flags) {
        (Transport::Tcp, Some(f)) => p.payload_len == 0 && !f.contains(TcpFlags::SYN),
        _ => false,
    }
}

fn absorb(flow: &mut FlowRecord, p: &PacketRecord) {
    flow.last_ts_us = flow.last_ts_us.max(p.timestamp_us);
    flow.header_bytes_total += p.header_len as u64;
    flow.payload_bytes_total += p.payload_len as u64;
    let prefix = if p.src() == flow.client {
        flow.packets_out += 1;
        flow.bytes_out += p.wire_len as u64;
        &mut flow.client_payload_prefix
    } else {
        flow.packets_in += 1;
        flow.bytes_in += p.wire_len as u64;
        &mut flow.server_payload_prefix
    };
    if prefix.is_empty() && !p.payload_prefix.is_empty() {
        let n = p.payload_prefix.len().min(DEFAULT_PREFIX_CAP);
        prefix.extend_from_slice(&p.payload_prefix[..n]);
    }
}

/// Sets `app_label` from the tag map: a VLAN entry beats a MAC entry,
/// unmatched flows keep their current label.
pub fn apply_tags(flows: &mut [FlowRecord], tags: &TagMap, origins: &[FlowOrigin]) {
    for (flow, origin) in flows.iter_mut().zip(origins) {
        let label = origin.vlan_id.and_then(|v| tags.by_vlan(v)).or_else(|| tags.by_mac(&origin.src_mac));
        if let Some(label) = label {
            flow.app_label = Some(label.to_string());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::net::IpAddr;

    fn pkt(ts_s: f64, from_client: bool, wire: u32) -> PacketRecord {
        let c: IpAddr = "10.0.0.2".parse().unwrap();
        let s: IpAddr = "93.184.216.34".parse().unwrap();
        let (src_ip, dst_ip, src_port, dst_port) = if from_client { (c, s, 50000, 443) } else { (s, c, 443, 50000) };
        PacketRecord {
            timestamp_us: (ts_s * 1e6) as i64,
            src_mac: MacAddr([0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0x01]),
            vlan_id: None,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            transport: Transport::Udp,
            wire_len: wire,
            header_len: 42,
            payload_len: wire - 42,
            payload_prefix: vec![0x17; (wire - 42).min(256) as usize],
            tcp_flags: None,
        }
    }

    #[test]
    fn single_packet_flow() {
        let a = assemble_flows(&[pkt(0.0, true, 200)], 60.0);
        assert_eq!(a.flows.len(), 1);
        let f = &a.flows[0];
        assert_eq!((f.packets_out, f.bytes_out, f.packets_in, f.bytes_in), (1, 200, 0, 0));
        assert_eq!(f.first_ts_us, f.last_ts_us);
    }

    #[test]
    fn idle_gap_splits_flow() {
        let p = [pkt(0.0, true, 100), pkt(1.0, false, 100), pkt(100.0, true, 100)];
        let a = assemble_flows(&p, 60.0);
        assert_eq!(a.flows.len(), 2);
        assert_eq!(a.flows[0].packets(), 2);
        assert_eq!(a.flows[1].packets(), 1);
        assert_eq!(a.flows[1].first_ts_us, 100_000_000);
    }

    #[test]
    fn gap_equal_to_timeout_does_not_split() {
        let p = [pkt(0.0, true, 100), pkt(60.0, true, 100)];
        assert_eq!(assemble_flows(&p, 60.0).flows.len(), 1);
    }

    #[test]
    fn first_sender_is_client_even_when_server_port() {
        let a = assemble_flows(&[pkt(0.0, false, 300), pkt(0.5, true, 100)], 60.0);
        let f = &a.flows[0];
        assert_eq!(f.client.port, 443);
        assert_eq!((f.bytes_out, f.bytes_in), (300, 100));
    }

    #[test]
    fn tags_prefer_vlan() {
        let mut flows = assemble_flows(&[pkt(0.0, true, 100)], 60.0).flows;
        let mut tags = TagMap::default();
        tags.insert_mac("aa:bb:cc:dd:ee:01".parse().unwrap(), "A").unwrap();
        tags.insert_vlan(100, "B").unwrap();
        let mac = MacAddr([0xaa, 0xbb, 0xcc, 0xdd, 0xee, 0x01]);
        apply_tags(&mut flows, &tags, &[FlowOrigin { src_mac: mac, vlan_id: Some(100) }]);
        assert_eq!(flows[0].app_label.as_deref(), Some("B"));
        apply_tags(&mut flows, &tags, &[FlowOrigin { src_mac: mac, vlan_id: None }]);
        assert_eq!(flows[0].app_label.as_deref(), Some("A"));
    }

    #[test]
    fn unmatched_flow_stays_unlabeled() {
        let mut flows = assemble_flows(&[pkt(0.0, true, 100)], 60.0).flows;
        let tags = TagMap::default();
        apply_tags(&mut flows, &tags, &[FlowOrigin::default()]);
        assert_eq!(flows[0].app_label, None);
    }
}
