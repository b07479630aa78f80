use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rules::{evaluate, SelectionPolicy};
use crate::cluster::{hierarchical, kmeans, Algorithm, ClusterModel, KMeansOptions, Linkage, DEFAULT_K};
use crate::dpi::{filter_flows, Blocklist};
use crate::error::{Error, Result};
use crate::features::{extract, FeatureMatrix, FeatureVector};
use crate::ingest::FlowRecord;

/// Group name used when all apps are clustered together.
pub const POOLED_GROUP: &str = "(pooled)";

#[derive(Debug, Clone)]
pub struct CleanConfig {
    pub blocklist: Blocklist,
    pub policy: SelectionPolicy,
    pub algorithm: Algorithm,
    pub linkage: Linkage,
    pub k: usize,
    pub seed: u64,
    pub kmeans: KMeansOptions,
    pub skip_dpi: bool,
    /// Cluster all apps together instead of one clustering per app.
    pub pooled: bool,
}

impl Default for CleanConfig {
    fn default() -> Self {
        Self {
            blocklist: Blocklist::shipped(),
            policy: SelectionPolicy::default(),
            algorithm: Algorithm::KMeans,
            linkage: Linkage::Ward,
            k: DEFAULT_K,
            seed: 42,
            kmeans: KMeansOptions::default(),
            skip_dpi: false,
            pooled: false,
        }
    }
}

/// Wall-clock milliseconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub dpi: f64,
    pub features: f64,
    pub cluster: f64,
    pub select: f64,
}

impl StageTimings {
    pub fn total(&self) -> f64 {
        self.dpi + self.features + self.cluster + self.select
    }

    fn add(&mut self, other: &StageTimings) {
        self.dpi += other.dpi;
        self.features += other.features;
        self.cluster += other.cluster;
        self.select += other.select;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AppReport {
    pub app_label: String,
    pub input: usize,
    pub dpi_discarded: usize,
    pub clusters_formed: usize,
    pub flows_kept: usize,
    pub flows_dropped: usize,
    pub kept_clusters: Vec<usize>,
    /// Why the app was left out of the cleaned set, if it was.
    pub skipped: Option<String>,
    pub stage_ms: StageTimings,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CleanReport {
    pub apps: Vec<AppReport>,
    /// Per-stage time summed over apps.
    pub stage_ms: StageTimings,
    pub total_ms: f64,
}

impl CleanReport {
    pub fn input(&self) -> usize {
        self.apps.iter().map(|a| a.input).sum()
    }

    pub fn dpi_discarded(&self) -> usize {
        self.apps.iter().map(|a| a.dpi_discarded).sum()
    }

    pub fn flows_kept(&self) -> usize {
        self.apps.iter().map(|a| a.flows_kept).sum()
    }

    pub fn flows_dropped(&self) -> usize {
        self.apps.iter().map(|a| a.flows_dropped).sum()
    }
}

/// Clustering of one app group, kept for reporting.
#[derive(Debug, Clone)]
pub struct GroupClusters {
    pub app_label: String,
    pub model: ClusterModel,
    /// Flow id of each clustered row.
    pub flow_ids: Vec<u64>,
    pub features: Vec<FeatureVector>,
}

#[derive(Debug, Clone, Default)]
pub struct CleanOutcome {
    /// Surviving flows, unchanged, sorted by `(app_label, id)`.
    pub cleaned: Vec<FlowRecord>,
    pub report: CleanReport,
    pub clusters: Vec<GroupClusters>,
}

struct GroupResult {
    kept: Vec<FlowRecord>,
    report: AppReport,
    clusters: Option<GroupClusters>,
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Runs DPI filtering, feature extraction, clustering and cluster
/// selection for every app and returns the union of the kept flows.
///
/// An app with fewer than `max(k, 2)` flows left after DPI cannot be
/// clustered; it is reported as skipped and contributes no flows.
pub fn clean(flows: Vec<FlowRecord>, cfg: &CleanConfig) -> Result<CleanOutcome> {
    let started = Instant::now();
    let mut groups: BTreeMap<String, Vec<FlowRecord>> = BTreeMap::new();
    for f in flows {
        let label = f.label()?.to_string();
        let key = if cfg.pooled { POOLED_GROUP.to_string() } else { label };
        groups.entry(key).or_default().push(f);
    }

    let results: Vec<GroupResult> =
        groups.into_par_iter().map(|(label, flows)| clean_group(label, flows, cfg)).collect::<Result<_>>()?;

    let mut out = CleanOutcome::default();
    for r in results {
        out.report.stage_ms.add(&r.report.stage_ms);
        out.report.apps.push(r.report);
        out.cleaned.extend(r.kept);
        out.clusters.extend(r.clusters);
    }
    out.cleaned.sort_by(|a, b| (&a.app_label, a.id).cmp(&(&b.app_label, b.id)));
    out.report.total_ms = ms(started);
    Ok(out)
}

fn clean_group(label: String, flows: Vec<FlowRecord>, cfg: &CleanConfig) -> Result<GroupResult> {
    let mut timing = StageTimings::default();
    let input = flows.len();

    let (survivors, dpi_discarded) = if cfg.skip_dpi {
        (flows, 0)
    } else {
        let t = Instant::now();
        let out = filter_flows(flows, &cfg.blocklist);
        timing.dpi = ms(t);
        (out.kept, out.discarded.len())
    };

    let mut report = AppReport {
        app_label: label.clone(),
        input,
        dpi_discarded,
        clusters_formed: 0,
        flows_kept: 0,
        flows_dropped: survivors.len(),
        kept_clusters: Vec::new(),
        skipped: None,
        stage_ms: timing,
    };
    let need = cfg.k.max(2);
    if survivors.len() < need {
        report.skipped = Some(Error::AppTooSmall { app: label, flows: survivors.len(), need }.to_string());
        return Ok(GroupResult { kept: Vec::new(), report, clusters: None });
    }

    let t = Instant::now();
    let features = survivors.iter().map(extract).collect::<Result<Vec<_>>>()?;
    let raw = FeatureMatrix::from_features(&features);
    let standardized = raw.standardize()?;
    timing.features = ms(t);

    let t = Instant::now();
    let model = match cfg.algorithm {
        Algorithm::KMeans => kmeans(&standardized, cfg.k, cfg.seed, cfg.kmeans)?,
        Algorithm::Hierarchical => hierarchical(&standardized, cfg.k, cfg.linkage)?,
    };
    timing.cluster = ms(t);

    let t = Instant::now();
    let keep = evaluate(&cfg.policy, &model, &raw);
    let flow_ids: Vec<u64> = survivors.iter().map(|f| f.id).collect();
    let mut kept = Vec::new();
    for (flow, &c) in survivors.into_iter().zip(&model.assignments) {
        if keep.contains(&c) {
            kept.push(flow);
        }
    }
    timing.select = ms(t);

    report.clusters_formed = model.k;
    report.flows_kept = kept.len();
    report.flows_dropped = flow_ids.len() - kept.len();
    report.kept_clusters = keep.into_iter().collect();
    report.stage_ms = timing;
    Ok(GroupResult { kept, report, clusters: Some(GroupClusters { app_label: label, model, flow_ids, features }) })
}
