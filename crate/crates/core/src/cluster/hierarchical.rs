use rayon::prelude::*;

use super::{centroids_of, check_rows, sq_dist, Algorithm, ClusterModel, Linkage};
use crate::error::Result;
use crate::features::FeatureMatrix;

/// How the closest pair is found at each merge. Both produce the same
/// merge sequence, ties included.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HierarchicalStrategy {
    /// Scan every active pair at every step, O(n³).
    Naive,
    /// Keep each row's nearest higher-indexed neighbour and rescan only
    /// rows whose neighbour took part in the merge.
    #[default]
    CachedNearest,
}

/// Upper triangle of the dissimilarity matrix, row-major.
struct Condensed {
    n: usize,
    d: Vec<f64>,
}

impl Condensed {
    fn build(matrix: &FeatureMatrix, linkage: Linkage) -> Self {
        let n = matrix.rows();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let a = matrix.row(i);
                (i + 1..n)
                    .map(|j| {
                        let d = sq_dist(a, matrix.row(j));
                        match linkage {
                            Linkage::Ward => d,
                            Linkage::Average | Linkage::Complete => d.sqrt(),
                        }
                    })
                    .collect()
            })
            .collect();
        Condensed { n, d: rows.concat() }
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        i * self.n - i * (i + 1) / 2 + (j - i - 1)
    }

    #[inline]
    fn get(&self, i: usize, j: usize) -> f64 {
        self.d[self.idx(i, j)]
    }

    #[inline]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        let at = self.idx(i, j);
        self.d[at] = v;
    }
}

struct State {
    dist: Condensed,
    size: Vec<usize>,
    active: Vec<bool>,
    members: Vec<Vec<usize>>,
    linkage: Linkage,
}

impl State {
    /// Merges `j` into `i` (`i < j`) and applies the Lance–Williams update.
    fn merge(&mut self, i: usize, j: usize) {
        let (ni, nj) = (self.size[i] as f64, self.size[j] as f64);
        let dij = self.dist.get(i, j);
        for k in 0..self.dist.n {
            if !self.active[k] || k == i || k == j {
                continue;
            }
            let (dki, dkj) = (self.dist.get(k, i), self.dist.get(k, j));
            let nk = self.size[k] as f64;
            let d = match self.linkage {
                Linkage::Ward => ((ni + nk) * dki + (nj + nk) * dkj - nk * dij) / (ni + nj + nk),
                Linkage::Average => (ni * dki + nj * dkj) / (ni + nj),
                Linkage::Complete => dki.max(dkj),
            };
            self.dist.set(k, i, d);
        }
        self.active[j] = false;
        self.size[i] += self.size[j];
        let moved = std::mem::take(&mut self.members[j]);
        self.members[i].extend(moved);
    }

    /// Nearest active neighbour above `i`, lowest index on ties.
    fn nearest_above(&self, i: usize) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for j in i + 1..self.dist.n {
            if self.active[j] {
                let d = self.dist.get(i, j);
                if d < best.1 {
                    best = (j, d);
                }
            }
        }
        best
    }
}

/// Agglomerative clustering cut at `k` clusters.
///
/// Clusters are named by their lowest row index; the closest pair merges
/// first, ties going to the lexicographically smallest `(i, j)`. Ward
/// works on squared Euclidean distances, average and complete linkage on
/// Euclidean ones. Final cluster ids follow the order of each cluster's
/// lowest row.
pub fn hierarchical(matrix: &FeatureMatrix, k: usize, linkage: Linkage) -> Result<ClusterModel> {
    hierarchical_with(matrix, k, linkage, HierarchicalStrategy::default())
}

#[allow(clippy::needless_range_loop)] // index loops mirror the matrix maths
pub fn hierarchical_with(
    matrix: &FeatureMatrix,
    k: usize,
    linkage: Linkage,
    strategy: HierarchicalStrategy,
) -> Result<ClusterModel> {
    check_rows(matrix, k)?;
    let n = matrix.rows();
    let mut st = State {
        dist: Condensed::build(matrix, linkage),
        size: vec![1; n],
        active: vec![true; n],
        members: (0..n).map(|i| vec![i]).collect(),
        linkage,
    };
    let merges = n - k;
    let mut costs = Vec::with_capacity(merges);
    match strategy {
        HierarchicalStrategy::Naive => {
            for _ in 0..merges {
                let mut best = (0, 0, f64::INFINITY);
                for i in (0..n).filter(|&i| st.active[i]) {
                    for j in (i + 1..n).filter(|&j| st.active[j]) {
                        let d = st.dist.get(i, j);
                        if d < best.2 {
                            best = (i, j, d);
                        }
                    }
                }
                costs.push(best.2);
                st.merge(best.0, best.1);
            }
        }
        HierarchicalStrategy::CachedNearest => {
            let mut nn: Vec<(usize, f64)> = (0..n).into_par_iter().map(|i| st.nearest_above(i)).collect();
            for _ in 0..merges {
                let mut i = usize::MAX;
                let mut best = f64::INFINITY;
                for r in 0..n {
                    if st.active[r] && nn[r].1 < best {
                        i = r;
                        best = nn[r].1;
                    }
                }
                let j = nn[i].0;
                costs.push(best);
                st.merge(i, j);
                for r in 0..n {
                    if !st.active[r] {
                        continue;
                    }
                    if r == i || nn[r].0 == i || nn[r].0 == j {
                        nn[r] = st.nearest_above(r);
                    } else if r < i {
                        let d = st.dist.get(r, i);
                        if d < nn[r].1 || (d == nn[r].1 && i < nn[r].0) {
                            nn[r] = (i, d);
                        }
                    }
                }
            }
        }
    }

    let mut assignments = vec![0usize; n];
    let reps: Vec<usize> = (0..n).filter(|&r| st.active[r]).collect();
    for (label, &rep) in reps.iter().enumerate() {
        for &m in &st.members[rep] {
            assignments[m] = label;
        }
    }
    let centroids = centroids_of(matrix, &assignments, k);
    let sse = super::sse(matrix, &assignments, &centroids)?;
    let centroids_raw = centroids.iter().map(|c| matrix.destandardize_row(c)).collect();
    Ok(ClusterModel {
        algorithm: Algorithm::Hierarchical,
        k,
        assignments,
        centroids_std: centroids,
        centroids_raw,
        sse,
        seed: None,
        linkage: Some(linkage),
        sse_trace: Vec::new(),
        merge_costs: costs,
        iterations: merges,
    })
}
