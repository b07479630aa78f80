//! Random-forest app classifier used to score a cleaned dataset.

mod forest;
mod metrics;
mod tree;

use std::collections::BTreeMap;

pub use forest::{train, ForestConfig, ForestModel};
pub use metrics::{evaluate, Metrics};
pub use tree::{DecisionTree, Node, TreeParams};

use crate::error::{Error, Result};
use crate::features::extract;
use crate::ingest::FlowRecord;
use crate::rng::SplitMix64;

/// Six clustering features plus mean header and payload size.
pub const CLASSIFIER_FEATURES: usize = 8;

pub type Sample = [f64; CLASSIFIER_FEATURES];

pub const DEFAULT_TRAIN_FRAC: f64 = 0.75;

/// Smallest per-label count [`split`] accepts.
pub const MIN_FLOWS_PER_LABEL: usize = 4;

/// Feature rows with class indices into a sorted label list.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Vec<Sample>,
    pub y: Vec<usize>,
    pub labels: Vec<String>,
}

impl Dataset {
    pub fn from_flows(flows: &[FlowRecord]) -> Result<Self> {
        let mut labels: Vec<String> = flows.iter().map(|f| f.label().map(str::to_string)).collect::<Result<_>>()?;
        labels.sort();
        labels.dedup();
        let mut x = Vec::with_capacity(flows.len());
        let mut y = Vec::with_capacity(flows.len());
        for f in flows {
            x.push(extract(f)?.all());
            let label = f.label()?;
            y.push(labels.binary_search_by(|l| l.as_str().cmp(label)).expect("label collected"));
        }
        Ok(Dataset { x, y, labels })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }
}

/// Stratified train/test split.
///
/// Within each label (processed in sorted order, one shared generator)
/// flows are shuffled and the first `round_half_up(n * train_frac)` go to
/// training.
pub fn split(flows: &[FlowRecord], train_frac: f64, seed: u64) -> Result<(Vec<FlowRecord>, Vec<FlowRecord>)> {
    if !(0.0..=1.0).contains(&train_frac) {
        return Err(Error::Config(format!("train fraction {train_frac} outside [0, 1]")));
    }
    let mut by_label: BTreeMap<&str, Vec<&FlowRecord>> = BTreeMap::new();
    for f in flows {
        by_label.entry(f.label()?).or_default().push(f);
    }
    let mut rng = SplitMix64::new(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (label, mut group) in by_label {
        if group.len() < MIN_FLOWS_PER_LABEL {
            return Err(Error::LabelTooSmall {
                label: label.to_string(),
                count: group.len(),
                need: MIN_FLOWS_PER_LABEL,
            });
        }
        rng.shuffle(&mut group);
        let n_train = (group.len() as f64 * train_frac + 0.5).floor() as usize;
        let (a, b) = group.split_at(n_train.min(group.len()));
        train.extend(a.iter().map(|f| (*f).clone()));
        test.extend(b.iter().map(|f| (*f).clone()));
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Endpoint, Transport};

    pub(crate) fn flows(per_label: &[(&str, usize)]) -> Vec<FlowRecord> {
        let mut out = Vec::new();
        for (label, n) in per_label {
            for _ in 0..*n {
                let id = out.len() as u64;
                out.push(FlowRecord {
                    id,
                    app_label: Some(label.to_string()),
                    transport: Transport::Tcp,
                    client: Endpoint::new("10.0.0.1".parse().unwrap(), 1000 + id as u16),
                    server: Endpoint::new("10.0.0.2".parse().unwrap(), 443),
                    first_ts_us: 0,
                    last_ts_us: 1_000_000,
                    bytes_in: 1000 + id,
                    bytes_out: 100,
                    packets_in: 2,
                    packets_out: 1,
                    header_bytes_total: 198,
                    payload_bytes_total: 902 + id,
                    client_payload_prefix: vec![],
                    server_payload_prefix: vec![],
                });
            }
        }
        out
    }

    #[test]
    fn split_seventy_five_percent() {
        let (train, test) = split(&flows(&[("a", 100)]), 0.75, 1).unwrap();
        assert_eq!((train.len(), test.len()), (75, 25));
    }

    #[test]
    fn split_rounds_per_label() {
        let f = flows(&[("a", 4), ("b", 4), ("c", 4), ("d", 4), ("e", 4)]);
        let (train, test) = split(&f, 0.75, 1).unwrap();
        for l in ["a", "b", "c", "d", "e"] {
            assert_eq!(train.iter().filter(|f| f.app_label.as_deref() == Some(l)).count(), 3);
            assert_eq!(test.iter().filter(|f| f.app_label.as_deref() == Some(l)).count(), 1);
        }
        // 6 * 0.75 = 4.5 rounds up
        let (train, _) = split(&flows(&[("a", 6)]), 0.75, 1).unwrap();
        assert_eq!(train.len(), 5);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let f = flows(&[("a", 30), ("b", 17)]);
        let (t1, s1) = split(&f, 0.75, 9).unwrap();
        let (t2, s2) = split(&f, 0.75, 9).unwrap();
        assert_eq!((&t1, &s1), (&t2, &s2));
        let ids: std::collections::HashSet<u64> = t1.iter().map(|f| f.id).collect();
        assert!(s1.iter().all(|f| !ids.contains(&f.id)));
        assert_eq!(t1.len() + s1.len(), f.len());
        let (t3, _) = split(&f, 0.75, 10).unwrap();
        assert_ne!(t1, t3);
    }

    #[test]
    fn split_rejects_small_labels() {
        let f = flows(&[("a", 10), ("b", 3)]);
        assert!(matches!(split(&f, 0.75, 1), Err(Error::LabelTooSmall { count: 3, .. })));
    }

    #[test]
    fn dataset_labels_sorted() {
        let d = Dataset::from_flows(&flows(&[("zeta", 1), ("alpha", 2)])).unwrap();
        assert_eq!(d.labels, ["alpha", "zeta"]);
        assert_eq!(d.y, [1, 0, 0]);
    }
}
