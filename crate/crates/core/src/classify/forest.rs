use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, TreeParams};
use super::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::features::extract;
use crate::ingest::FlowRecord;
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// ⌈√8⌉ by default.
    pub features_per_split: usize,
    /// Train each tree on a bootstrap resample of the training set.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 16, min_leaf: 2, features_per_split: 3, bootstrap: true, seed: 42 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    /// Class names, sorted; class `i` is `labels[i]`.
    pub labels: Vec<String>,
    pub config: ForestConfig,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Tree `t` draws from its own stream `fork(seed, t)`, so the forest is
    /// the same however many threads build it.
    pub fn fit(data: &Dataset, config: ForestConfig) -> Result<ForestModel> {
        let mut present = data.y.clone();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return Err(Error::SingleClass);
        }
        let params = TreeParams {
            max_depth: config.max_depth,
            min_leaf: config.min_leaf,
            features_per_split: config.features_per_split,
        };
        let n = data.len();
        let trees = (0..config.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = SplitMix64::fork(config.seed, t as u64);
                let sample: Vec<usize> =
                    if config.bootstrap { (0..n).map(|_| rng.below(n)).collect() } else { (0..n).collect() };
                DecisionTree::fit(&data.x, &data.y, data.labels.len(), sample, params, &mut rng)
            })
            .collect();
        Ok(ForestModel { labels: data.labels.clone(), config, trees })
    }

    /// Majority vote over trees; ties go to the lowest class index, which
    /// is the lexicographically smallest label.
    pub fn predict_class(&self, row: &Sample) -> usize {
        let mut votes = vec![0u32; self.labels.len()];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        super::tree::argmax(&votes)
    }

    pub fn predict(&self, flow: &FlowRecord) -> Result<&str> {
        let row = extract(flow)?.all();
        Ok(&self.labels[self.predict_class(&row)])
    }
}

/// Fits a forest on labeled flows.
pub fn train(flows: &[FlowRecord], config: ForestConfig) -> Result<ForestModel> {
    ForestModel::fit(&Dataset::from_flows(flows)?, config)
}
