//! Automatic cleaning of app-tagged encrypted mobile traffic.
//!
//! The pipeline assembles bidirectional flows from captures ([`ingest`]),
//! drops plaintext and blocklisted service flows by payload inspection
//! ([`dpi`]), extracts per-flow statistics ([`features`]), groups the
//! surviving flows per app ([`cluster`]) and keeps only the clusters a
//! [`select::SelectionPolicy`] accepts. [`classify`] and [`experiment`]
//! measure how much a cleaned dataset helps a random-forest app classifier,
//! using seeded scenarios from [`synth`] as ground truth.

pub mod classify;
pub mod cluster;
pub mod dpi;
pub mod error;
pub mod experiment;
pub mod features;
pub mod ingest;
pub mod rng;
pub mod select;
pub mod synth;

pub use classify::{ForestConfig, ForestModel, Metrics};
pub use cluster::{Algorithm, ClusterModel, Linkage};
pub use dpi::{Blocklist, ProtocolVerdict};
pub use error::{Error, Result};
pub use features::{Feature, FeatureMatrix, FeatureVector};
pub use ingest::{Endpoint, FlowKey, FlowRecord, PacketRecord, TagMap, Transport};
pub use rng::SplitMix64;
pub use select::{CleanConfig, CleanReport, SelectionPolicy};
pub use synth::{Role, ScenarioSpec};
