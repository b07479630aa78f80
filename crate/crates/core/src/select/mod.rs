//! Cluster selection rules and the end-to-end cleaning pipeline.

mod pipeline;
mod rules;

pub use pipeline::{
    clean, AppReport, CleanConfig, CleanOutcome, CleanReport, GroupClusters, StageTimings, POOLED_GROUP,
};
pub use rules::{
    evaluate, nearest_rank, parse_rules, Action, Comparator, Predicate, Rule, SelectionPolicy, Threshold,
    DEFAULT_POLICY, HEARTBEAT_DROP_POLICY,
};
