use rayon::prelude::*;

use super::{centroids_of, check_rows, sq_dist, Algorithm, ClusterModel};
use crate::error::Result;
use crate::features::FeatureMatrix;
use crate::rng::SplitMix64;

const PAR_MIN_WORK: usize = 16_384;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansOptions {
    pub max_iter: usize,
    /// Stop once no centroid moves farther than this.
    pub tol: f64,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        Self { max_iter: 100, tol: 1e-6 }
    }
}

/// Lloyd's algorithm from a k-means++ start.
///
/// Nearest-centroid ties go to the lowest cluster id. A cluster left empty
/// by an assignment step takes over the row farthest from its own
/// centroid. Results depend only on `(matrix, k, seed, opts)`.
pub fn kmeans(matrix: &FeatureMatrix, k: usize, seed: u64, opts: KMeansOptions) -> Result<ClusterModel> {
    check_rows(matrix, k)?;
    let n = matrix.rows();
    let mut rng = SplitMix64::new(seed);
    let mut centroids = plus_plus_init(matrix, k, &mut rng);

    let mut assignments = vec![0usize; n];
    let mut dists = vec![0.0f64; n];
    let mut trace = Vec::new();
    let mut iterations = 0;
    for _ in 0..opts.max_iter.max(1) {
        iterations += 1;
        assign(matrix, &centroids, &mut assignments, &mut dists);
        repair_empty(matrix, k, &mut centroids, &mut assignments, &mut dists);
        let sse: f64 = dists.iter().sum();
        debug_assert!(trace.last().is_none_or(|&prev: &f64| sse <= prev + 1e-9 * prev.max(1.0)), "SSE increased");
        trace.push(sse);

        let updated = centroids_of(matrix, &assignments, k);
        let shift = centroids.iter().zip(&updated).map(|(a, b)| sq_dist(a, b).sqrt()).fold(0.0, f64::max);
        centroids = updated;
        if shift < opts.tol {
            break;
        }
    }

    let sse = super::sse(matrix, &assignments, &centroids)?;
    let centroids_raw = centroids.iter().map(|c| matrix.destandardize_row(c)).collect();
    Ok(ClusterModel {
        algorithm: Algorithm::KMeans,
        k,
        assignments,
        centroids_std: centroids,
        centroids_raw,
        sse,
        seed: Some(seed),
        linkage: None,
        sse_trace: trace,
        merge_costs: Vec::new(),
        iterations,
    })
}

/// k-means++ seeding: the first centre uniformly, each next one with
/// probability proportional to its squared distance to the nearest centre
/// so far. When every row already coincides with a centre, the lowest
/// unused row is taken.
fn plus_plus_init(matrix: &FeatureMatrix, k: usize, rng: &mut SplitMix64) -> Vec<Vec<f64>> {
    let n = matrix.rows();
    let mut chosen = vec![false; n];
    let first = rng.below(n);
    chosen[first] = true;
    let mut centroids = vec![matrix.row(first).to_vec()];
    let mut d2: Vec<f64> = matrix.iter_rows().map(|r| sq_dist(r, &centroids[0])).collect();

    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.next_f64() * total;
            let mut acc = 0.0;
            let mut pick = None;
            let mut last_positive = 0;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 {
                    last_positive = i;
                    acc += d;
                    if acc > target {
                        pick = Some(i);
                        break;
                    }
                }
            }
            pick.unwrap_or(last_positive)
        } else {
            (0..n).find(|&i| !chosen[i]).expect("rows >= k")
        };
        chosen[pick] = true;
        let c = matrix.row(pick).to_vec();
        for (d, r) in d2.iter_mut().zip(matrix.iter_rows()) {
            *d = d.min(sq_dist(r, &c));
        }
        centroids.push(c);
    }
    centroids
}

fn nearest(row: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(row, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn assign(matrix: &FeatureMatrix, centroids: &[Vec<f64>], assignments: &mut [usize], dists: &mut [f64]) {
    let work = matrix.rows() * centroids.len() * matrix.cols();
    if work >= PAR_MIN_WORK {
        let cols = matrix.cols();
        assignments
            .par_iter_mut()
            .zip(dists.par_iter_mut())
            .zip(matrix.as_slice().par_chunks_exact(cols))
            .for_each(|((a, d), row)| (*a, *d) = nearest(row, centroids));
    } else {
        for (i, row) in matrix.iter_rows().enumerate() {
            (assignments[i], dists[i]) = nearest(row, centroids);
        }
    }
}

fn repair_empty(
    matrix: &FeatureMatrix,
    k: usize,
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
    dists: &mut [f64],
) {
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    while let Some(empty) = counts.iter().position(|&c| c == 0) {
        let mut far: Option<usize> = None;
        for i in 0..assignments.len() {
            if counts[assignments[i]] > 1 && far.is_none_or(|f| dists[i] > dists[f]) {
                far = Some(i);
            }
        }
        let i = far.expect("rows >= k leaves a cluster with two members");
        counts[assignments[i]] -= 1;
        counts[empty] += 1;
        assignments[i] = empty;
        dists[i] = 0.0;
        centroids[empty] = matrix.row(i).to_vec();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> FeatureMatrix {
        FeatureMatrix::from_rows(&[[0.0, 0.0], [0.0, 1.0], [10.0, 10.0], [10.0, 11.0]]).unwrap()
    }

    #[test]
    fn toy_partition() {
        let m = kmeans(&toy(), 2, 1, KMeansOptions::default()).unwrap();
        assert_eq!(m.assignments[0], m.assignments[1]);
        assert_eq!(m.assignments[2], m.assignments[3]);
        assert_ne!(m.assignments[0], m.assignments[2]);
        let mut cs = m.centroids_std.clone();
        cs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(cs, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert_eq!(m.sse, 1.0);
    }

    #[test]
    fn single_cluster_is_the_mean() {
        let m = kmeans(&toy(), 1, 9, KMeansOptions::default()).unwrap();
        assert_eq!(m.centroids_std, vec![vec![5.0, 5.5]]);
        // total variance times n: 4 * (25 + 25.25)
        assert_eq!(m.sse, 201.0);
    }

    #[test]
    fn one_cluster_per_point() {
        let m = kmeans(&toy(), 4, 3, KMeansOptions::default()).unwrap();
        assert_eq!(m.sse, 0.0);
        let mut a = m.assignments.clone();
        a.sort_unstable();
        assert_eq!(a, [0, 1, 2, 3]);
    }

    #[test]
    fn duplicate_rows_still_fill_every_cluster() {
        let m = FeatureMatrix::from_rows(&[[1.0], [1.0], [1.0], [2.0]]).unwrap();
        let model = kmeans(&m, 3, 5, KMeansOptions::default()).unwrap();
        assert!(model.sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn too_few_rows() {
        assert!(matches!(
            kmeans(&toy(), 5, 0, KMeansOptions::default()),
            Err(crate::Error::TooFewRows { need: 5, got: 4 })
        ));
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = SplitMix64::new(77);
        let rows: Vec<[f64; 3]> = (0..300).map(|_| [rng.next_f64(), rng.next_f64() * 5.0, rng.next_f64()]).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let a = kmeans(&m, 4, 11, KMeansOptions::default()).unwrap();
        let b = kmeans(&m, 4, 11, KMeansOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
