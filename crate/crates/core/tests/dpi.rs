//! Filtering invariants over arbitrary and generated payloads.

use flowsieve::dpi::{classify_flow, classify_payload, filter_flows, Blocklist, ProtocolVerdict};
use flowsieve::ingest::{Endpoint, FlowRecord, Transport};
use flowsieve::synth::{generate, ScenarioSpec};
use proptest::prelude::*;

fn flow(id: u64, prefix: Vec<u8>, port: u16, udp: bool) -> FlowRecord {
    FlowRecord {
        id,
        app_label: Some("x".into()),
        transport: if udp { Transport::Udp } else { Transport::Tcp },
        client: Endpoint::new("10.0.0.1".parse().unwrap(), 40000),
        server: Endpoint::new("10.0.0.2".parse().unwrap(), port),
        first_ts_us: 0,
        last_ts_us: 1,
        bytes_in: 0,
        bytes_out: 100,
        packets_in: 0,
        packets_out: 1,
        header_bytes_total: 42,
        payload_bytes_total: 58,
        client_payload_prefix: prefix,
        server_payload_prefix: Vec::new(),
    }
}

fn arb_flow() -> impl Strategy<Value = FlowRecord> {
    let prefix = prop_oneof![
        proptest::collection::vec(any::<u8>(), 0..300),
        proptest::collection::vec(any::<u8>(), 0..120).prop_map(|mut v| {
            v.splice(0..0, [0x16, 0x03, 0x01]);
            v
        }),
        Just(b"GET / HTTP/1.1\r\n".to_vec()),
    ];
    (any::<u64>(), prefix, prop_oneof![Just(53u16), Just(443), any::<u16>()], any::<bool>())
        .prop_map(|(id, p, port, udp)| flow(id, p, port, udp))
}

proptest! {
    #[test]
    fn filter_partitions_input_in_order(flows in proptest::collection::vec(arb_flow(), 0..40)) {
        let out = filter_flows(flows.clone(), &Blocklist::shipped());
        prop_assert_eq!(out.kept.len() + out.discarded.len(), flows.len());
        let mut ki = out.kept.iter().peekable();
        let mut di = out.discarded.iter().peekable();
        for f in &flows {
            if ki.peek() == Some(&f) {
                ki.next();
            } else {
                let (d, v) = di.next().expect("flow missing from both lists");
                prop_assert_eq!(d, f);
                prop_assert_eq!(v, &classify_flow(f));
            }
        }
        prop_assert!(ki.next().is_none() && di.next().is_none());
    }

    #[test]
    fn filtering_is_idempotent(flows in proptest::collection::vec(arb_flow(), 0..40)) {
        let once = filter_flows(flows, &Blocklist::shipped()).kept;
        let twice = filter_flows(once.clone(), &Blocklist::shipped());
        prop_assert!(twice.discarded.is_empty());
        prop_assert_eq!(twice.kept, once);
    }

    #[test]
    fn sni_verdicts_are_lowercase_and_non_empty(p in proptest::collection::vec(any::<u8>(), 0..400)) {
        if let ProtocolVerdict::TlsWithSni(s) = classify_payload(&p, 443, Transport::Tcp) {
            prop_assert!(!s.is_empty());
            prop_assert_eq!(s.to_ascii_lowercase(), s);
        }
    }
}

#[test]
fn generated_scenario_discards_exactly_plaintext_and_services() {
    let mut spec = ScenarioSpec::five_apps(4);
    spec.apps.iter_mut().for_each(|a| a.counts = [40, 10, 10, 10, 10]);
    let s = generate(&spec).unwrap();
    let out = filter_flows(s.flows, &Blocklist::shipped());
    assert_eq!(out.discarded.len(), 5 * 20);
    let dns = out.discarded.iter().filter(|(_, v)| *v == ProtocolVerdict::PlaintextDns).count();
    assert_eq!(dns, 50);
}

#[test]
fn empty_blocklist_keeps_every_tls_flow() {
    let mut spec = ScenarioSpec::five_apps(4);
    spec.apps.iter_mut().for_each(|a| a.counts = [10, 10, 10, 10, 10]);
    let out = filter_flows(generate(&spec).unwrap().flows, &Blocklist::empty());
    assert!(out.discarded.iter().all(|(_, v)| *v == ProtocolVerdict::PlaintextDns));
}
