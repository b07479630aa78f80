//! Side-by-side comparison of training sets: uncleaned, oracle-cleaned
//! and pipeline-cleaned, each scored by the same forest protocol.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classify::{evaluate, split, Dataset, ForestConfig, ForestModel, Metrics, DEFAULT_TRAIN_FRAC};
use crate::cluster::Algorithm;
use crate::error::{Error, Result};
use crate::ingest::FlowRecord;
use crate::select::{clean, CleanConfig, StageTimings};
use crate::synth::{oracle_clean, Role, Scenario};

#[derive(Debug, Clone)]
pub struct CompareConfig {
    /// Base cleaning config; its `algorithm` is overridden per arm.
    pub clean: CleanConfig,
    pub algorithms: Vec<Algorithm>,
    pub train_frac: f64,
    pub forest: ForestConfig,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            clean: CleanConfig::default(),
            algorithms: vec![Algorithm::KMeans, Algorithm::Hierarchical],
            train_frac: DEFAULT_TRAIN_FRAC,
            forest: ForestConfig::default(),
        }
    }
}

impl CompareConfig {
    /// Canonical text of every setting that affects the report.
    pub fn canonical(&self) -> String {
        let c = &self.clean;
        let algos: Vec<&str> = self.algorithms.iter().map(|a| a.as_str()).collect();
        let blocklist: Vec<&str> = c.blocklist.iter().collect();
        format!(
            "algorithms={}\nk={}\nseed={}\nlinkage={}\nskip_dpi={}\npooled={}\nmax_iter={}\ntol={:e}\n\
             train_frac={}\nforest={}\nblocklist={}\npolicy=\n{}",
            algos.join(","),
            c.k,
            c.seed,
            c.linkage,
            c.skip_dpi,
            c.pooled,
            c.kmeans.max_iter,
            c.kmeans.tol,
            self.train_frac,
            serde_json::to_string(&self.forest).unwrap_or_default(),
            blocklist.join(","),
            c.policy,
        )
    }

    /// FNV-1a over [`CompareConfig::canonical`], as 16 hex digits.
    pub fn hash(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical().bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        format!("{h:016x}")
    }
}

/// How well a cleaned set matches the ground-truth roles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overlap {
    pub data_plane_total: usize,
    pub data_plane_retained: usize,
    /// Heartbeat, DNS and background-service TLS flows.
    pub noise_total: usize,
    pub noise_removed: usize,
    pub upload_total: usize,
    pub upload_removed: usize,
}

impl Overlap {
    pub fn measure(scenario: &Scenario, kept: &[FlowRecord]) -> Overlap {
        let kept_ids: std::collections::HashSet<u64> = kept.iter().map(|f| f.id).collect();
        let mut o = Overlap::default();
        for (f, role) in scenario.flows.iter().zip(&scenario.roles) {
            let k = kept_ids.contains(&f.id);
            match role {
                Role::DataPlane => {
                    o.data_plane_total += 1;
                    o.data_plane_retained += usize::from(k);
                }
                Role::Upload => {
                    o.upload_total += 1;
                    o.upload_removed += usize::from(!k);
                }
                _ => {
                    o.noise_total += 1;
                    o.noise_removed += usize::from(!k);
                }
            }
        }
        o
    }

    pub fn retention(&self) -> f64 {
        frac(self.data_plane_retained, self.data_plane_total)
    }

    pub fn removal(&self) -> f64 {
        frac(self.noise_removed, self.noise_total)
    }
}

fn frac(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub arm: String,
    pub flows: usize,
    pub train: usize,
    pub test: usize,
    pub metrics: Metrics,
    /// Oracle arm minus this arm; positive means worse than oracle.
    pub accuracy_loss: f64,
    pub macro_precision_loss: f64,
    pub macro_recall_loss: f64,
    pub overlap: Overlap,
}

/// Deterministic part of a comparison run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub config_hash: String,
    pub scenario_flows: usize,
    pub arms: Vec<ArmResult>,
}

impl CompareReport {
    pub fn arm(&self, name: &str) -> Option<&ArmResult> {
        self.arms.iter().find(|a| a.arm == name)
    }

    /// Aligned plain-text table, percentages to two decimals.
    pub fn to_table(&self) -> String {
        let mut s = format!("config {}  flows {}\n", self.config_hash, self.scenario_flows);
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>9} {:>9} {:>9} {:>9} {:>10} {:>9}",
            "arm", "flows", "accuracy", "macro_p", "macro_r", "acc_loss", "dp_kept", "noise_rm"
        );
        for a in &self.arms {
            let m = &a.metrics;
            let _ = writeln!(
                s,
                "{:<10} {:>7} {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}p {:>9.2}% {:>8.2}%",
                a.arm,
                a.flows,
                m.accuracy * 100.0,
                m.macro_precision * 100.0,
                m.macro_recall * 100.0,
                a.accuracy_loss * 100.0,
                a.overlap.retention() * 100.0,
                a.overlap.removal() * 100.0,
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "arm",
            "flows",
            "train",
            "test",
            "accuracy",
            "macro_precision",
            "macro_recall",
            "accuracy_loss",
            "macro_precision_loss",
            "macro_recall_loss",
            "data_plane_retention",
            "noise_removal",
        ])?;
        for a in &self.arms {
            w.write_record([
                a.arm.clone(),
                a.flows.to_string(),
                a.train.to_string(),
                a.test.to_string(),
                a.metrics.accuracy.to_string(),
                a.metrics.macro_precision.to_string(),
                a.metrics.macro_recall.to_string(),
                a.accuracy_loss.to_string(),
                a.macro_precision_loss.to_string(),
                a.macro_recall_loss.to_string(),
                a.overlap.retention().to_string(),
                a.overlap.removal().to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub algorithm: Algorithm,
    pub dpi: bool,
    pub flows: usize,
    pub total_ms: f64,
    pub stage_ms: StageTimings,
}

/// Wall-clock part of a comparison run. Never deterministic, so it is
/// kept apart from [`CompareReport`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub threads: usize,
    pub rows: Vec<TimingRow>,
}

impl TimingReport {
    pub fn to_table(&self) -> String {
        let mut s = format!("threads {}\n", self.threads);
        let _ = writeln!(
            s,
            "{:<6} {:<4} {:>7} {:>10} {:>9} {:>9} {:>9} {:>9}",
            "algo", "dpi", "flows", "total_ms", "dpi", "features", "cluster", "select"
        );
        for r in &self.rows {
            let t = &r.stage_ms;
            let _ = writeln!(
                s,
                "{:<6} {:<4} {:>7} {:>10.1} {:>9.1} {:>9.1} {:>9.1} {:>9.1}",
                r.algorithm.as_str(),
                if r.dpi { "yes" } else { "no" },
                r.flows,
                r.total_ms,
                t.dpi,
                t.features,
                t.cluster,
                t.select
            );
        }
        s
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["algorithm", "dpi", "flows", "total_ms", "dpi_ms", "features_ms", "cluster_ms", "select_ms"])?;
        for r in &self.rows {
            let t = &r.stage_ms;
            w.write_record([
                r.algorithm.as_str().to_string(),
                r.dpi.to_string(),
                r.flows.to_string(),
                r.total_ms.to_string(),
                t.dpi.to_string(),
                t.features.to_string(),
                t.cluster.to_string(),
                t.select.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trains and scores a forest on `flows` with the shared split protocol.
pub fn score(flows: &[FlowRecord], train_frac: f64, forest: ForestConfig) -> Result<(usize, usize, Metrics)> {
    let (train, test) = split(flows, train_frac, forest.seed)?;
    let model = ForestModel::fit(&Dataset::from_flows(&train)?, forest)?;
    Ok((train.len(), test.len(), evaluate(&model, &test)?))
}

/// Runs the uncleaned and oracle arms plus one pipeline arm per
/// configured algorithm. Arms are cleaned first, then split.
pub fn compare(scenario: &Scenario, cfg: &CompareConfig) -> Result<(CompareReport, TimingReport)> {
    if cfg.algorithms.is_empty() {
        return Err(Error::Config("compare needs at least one algorithm".into()));
    }
    let mut arms: Vec<(String, Vec<FlowRecord>)> =
        vec![("uncleaned".to_string(), scenario.flows.clone()), ("oracle".to_string(), oracle_clean(scenario))];
    let mut timing = TimingReport { threads: rayon::current_num_threads(), rows: Vec::new() };
    let mut seen = Vec::new();
    for &algorithm in &cfg.algorithms {
        if seen.contains(&algorithm) {
            continue;
        }
        seen.push(algorithm);
        let arm_cfg = CleanConfig { algorithm, ..cfg.clean.clone() };
        let out = clean(scenario.flows.clone(), &arm_cfg)?;
        timing.rows.push(TimingRow {
            algorithm,
            dpi: !arm_cfg.skip_dpi,
            flows: scenario.flows.len(),
            total_ms: out.report.total_ms,
            stage_ms: out.report.stage_ms,
        });
        if !arm_cfg.skip_dpi {
            let bare = clean(scenario.flows.clone(), &CleanConfig { skip_dpi: true, ..arm_cfg.clone() })?;
            timing.rows.push(TimingRow {
                algorithm,
                dpi: false,
                flows: scenario.flows.len(),
                total_ms: bare.report.total_ms,
                stage_ms: bare.report.stage_ms,
            });
        }
        arms.push((algorithm.as_str().to_string(), out.cleaned));
    }

    let mut results = Vec::with_capacity(arms.len());
    for (name, flows) in &arms {
        let (train, test, metrics) = score(flows, cfg.train_frac, cfg.forest)?;
        results.push(ArmResult {
            arm: name.clone(),
            flows: flows.len(),
            train,
            test,
            metrics,
            accuracy_loss: 0.0,
            macro_precision_loss: 0.0,
            macro_recall_loss: 0.0,
            overlap: Overlap::measure(scenario, flows),
        });
    }
    let oracle = results[1].metrics.clone();
    for r in &mut results {
        r.accuracy_loss = oracle.accuracy - r.metrics.accuracy;
        r.macro_precision_loss = oracle.macro_precision - r.metrics.macro_precision;
        r.macro_recall_loss = oracle.macro_recall - r.metrics.macro_recall;
    }
    let report = CompareReport { config_hash: cfg.hash(), scenario_flows: scenario.flows.len(), arms: results };
    Ok((report, timing))
}

/// Role lookup by flow id, for callers holding flows and roles separately.
pub fn roles_by_id(scenario: &Scenario) -> HashMap<u64, Role> {
    scenario.flows.iter().zip(&scenario.roles).map(|(f, r)| (f.id, *r)).collect()
}
