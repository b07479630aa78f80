//! CART decision tree with Gini impurity.

use serde::{Deserialize, Serialize};

use super::{Sample, CLASSIFIER_FEATURES};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features drawn (without replacement) as split candidates per node.
    pub features_per_split: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// Training samples per class reaching this leaf.
    Leaf { counts: Vec<u32> },
    /// `x[feature] <= threshold` goes left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

struct Best {
    feature: usize,
    threshold: f64,
    left: Vec<usize>,
    right: Vec<usize>,
}

impl DecisionTree {
    /// Grows a tree on `sample`, a list of row indices that may repeat
    /// (bootstrap draws count once per occurrence).
    pub fn fit(
        x: &[Sample],
        y: &[usize],
        n_classes: usize,
        sample: Vec<usize>,
        params: TreeParams,
        rng: &mut SplitMix64,
    ) -> DecisionTree {
        let mut tree = DecisionTree { nodes: Vec::new() };
        tree.grow(x, y, n_classes, sample, 0, params, rng);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &[Sample],
        y: &[usize],
        n_classes: usize,
        idx: Vec<usize>,
        depth: usize,
        params: TreeParams,
        rng: &mut SplitMix64,
    ) -> usize {
        let at = self.nodes.len();
        let mut counts = vec![0u32; n_classes];
        for &i in &idx {
            counts[y[i]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let min_leaf = params.min_leaf.max(1);
        if pure || depth >= params.max_depth || idx.len() < 2 * min_leaf {
            self.nodes.push(Node::Leaf { counts });
            return at;
        }
        let candidates = draw_features(params.features_per_split, rng);
        let Some(best) = best_split(x, y, n_classes, &idx, &candidates, min_leaf) else {
            self.nodes.push(Node::Leaf { counts });
            return at;
        };
        self.nodes.push(Node::Split { feature: best.feature, threshold: best.threshold, left: 0, right: 0 });
        let l = self.grow(x, y, n_classes, best.left, depth + 1, params, rng);
        let r = self.grow(x, y, n_classes, best.right, depth + 1, params, rng);
        if let Node::Split { left, right, .. } = &mut self.nodes[at] {
            *left = l;
            *right = r;
        }
        at
    }

    pub fn leaf(&self, row: &Sample) -> &[u32] {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { counts } => return counts,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Majority class of the reached leaf, lowest index on ties.
    pub fn predict(&self, row: &Sample) -> usize {
        argmax(self.leaf(row))
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

pub(crate) fn argmax(counts: &[u32]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Candidate features in ascending order.
fn draw_features(m: usize, rng: &mut SplitMix64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..CLASSIFIER_FEATURES).collect();
    if m >= CLASSIFIER_FEATURES || m == 0 {
        return all;
    }
    for i in 0..m {
        let j = i + rng.below(CLASSIFIER_FEATURES - i);
        all.swap(i, j);
    }
    let mut chosen = all[..m].to_vec();
    chosen.sort_unstable();
    chosen
}

/// Best Gini split over `candidates`; ties keep the earlier feature and
/// the lower threshold.
fn best_split(
    x: &[Sample],
    y: &[usize],
    n_classes: usize,
    idx: &[usize],
    candidates: &[usize],
    min_leaf: usize,
) -> Option<Best> {
    let n = idx.len();
    let mut total = vec![0u64; n_classes];
    for &i in idx {
        total[y[i]] += 1;
    }
    // (feature, threshold, score, left size); score is Σ count² / n over
    // both children, larger is purer.
    let mut best: Option<(usize, f64, f64, usize)> = None;
    let mut best_order: Vec<usize> = Vec::new();
    let mut order: Vec<usize> = idx.to_vec();
    for &f in candidates {
        order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
        let mut left = vec![0u64; n_classes];
        let mut right = total.clone();
        let mut sq_left: u64 = 0;
        let mut sq_right: u64 = total.iter().map(|c| c * c).sum();
        let mut found = false;
        for p in 0..n - 1 {
            let c = y[order[p]];
            sq_left += 2 * left[c] + 1;
            left[c] += 1;
            sq_right -= 2 * right[c] - 1;
            right[c] -= 1;
            let nl = p + 1;
            let nr = n - nl;
            if nl < min_leaf || nr < min_leaf {
                continue;
            }
            let (a, b) = (x[order[p]][f], x[order[p + 1]][f]);
            if a >= b {
                continue;
            }
            let score = sq_left as f64 / nl as f64 + sq_right as f64 / nr as f64;
            if best.is_none_or(|(_, _, s, _)| score > s) {
                let mid = (a + b) / 2.0;
                let threshold = if mid < b { mid } else { a };
                best = Some((f, threshold, score, nl));
                found = true;
            }
        }
        if found {
            best_order.clone_from(&order);
        }
    }
    let (feature, threshold, _, nl) = best?;
    let right = best_order.split_off(nl);
    Some(Best { feature, threshold, left: best_order, right })
}
