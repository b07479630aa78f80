//! Unsupervised grouping of flows: Lloyd's k-means with k-means++ seeding
//! and agglomerative hierarchical clustering.

mod hierarchical;
mod kmeans;

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use hierarchical::{hierarchical, hierarchical_with, HierarchicalStrategy};
pub use kmeans::{kmeans, KMeansOptions};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, FEATURE_TABLE_HEADER};

pub const DEFAULT_K: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Linkage {
    #[default]
    Ward,
    Average,
    Complete,
}

impl FromStr for Linkage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ward" => Ok(Linkage::Ward),
            "average" => Ok(Linkage::Average),
            "complete" => Ok(Linkage::Complete),
            other => Err(format!("unknown linkage {other:?} (ward|average|complete)")),
        }
    }
}

impl fmt::Display for Linkage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Linkage::Ward => "ward",
            Linkage::Average => "average",
            Linkage::Complete => "complete",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    KMeans,
    #[serde(rename = "hier")]
    Hierarchical,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::Hierarchical => "hier",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "kmeans" | "k-means" => Ok(Algorithm::KMeans),
            "hier" | "hierarchical" => Ok(Algorithm::Hierarchical),
            other => Err(format!("unknown algorithm {other:?} (kmeans|hier)")),
        }
    }
}

/// A partition of the matrix rows into `k` non-empty clusters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub algorithm: Algorithm,
    pub k: usize,
    pub assignments: Vec<usize>,
    /// `k` rows of centroids in the space the clustering ran in.
    pub centroids_std: Vec<Vec<f64>>,
    /// The same centroids mapped back to raw feature units.
    pub centroids_raw: Vec<Vec<f64>>,
    pub sse: f64,
    pub seed: Option<u64>,
    pub linkage: Option<Linkage>,
    /// k-means: SSE after each assignment step.
    pub sse_trace: Vec<f64>,
    /// Hierarchical: linkage distance of each merge, in order.
    pub merge_costs: Vec<f64>,
    pub iterations: usize,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    pub fn members(&self, cluster: usize) -> impl Iterator<Item = usize> + '_ {
        self.assignments.iter().enumerate().filter(move |(_, &a)| a == cluster).map(|(i, _)| i)
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Sum over rows of the squared distance to the assigned centroid.
pub fn sse(matrix: &FeatureMatrix, assignments: &[usize], centroids: &[Vec<f64>]) -> Result<f64> {
    if assignments.len() != matrix.rows() {
        return Err(Error::ShapeMismatch(format!("{} assignments for {} rows", assignments.len(), matrix.rows())));
    }
    if let Some(c) = centroids.iter().find(|c| c.len() != matrix.cols()) {
        return Err(Error::ShapeMismatch(format!("centroid has {} columns, matrix has {}", c.len(), matrix.cols())));
    }
    let mut total = 0.0;
    for (row, &a) in matrix.iter_rows().zip(assignments) {
        let c = centroids
            .get(a)
            .ok_or_else(|| Error::ShapeMismatch(format!("assignment {a} but only {} centroids", centroids.len())))?;
        total += sq_dist(row, c);
    }
    Ok(total)
}

/// Member means, summed in row order.
pub(crate) fn centroids_of(matrix: &FeatureMatrix, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; matrix.cols()]; k];
    let mut counts = vec![0usize; k];
    for (row, &a) in matrix.iter_rows().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(row) {
            *s += x;
        }
    }
    for (s, n) in sums.iter_mut().zip(&counts) {
        if *n > 0 {
            s.iter_mut().for_each(|x| *x /= *n as f64);
        }
    }
    sums
}

fn check_rows(matrix: &FeatureMatrix, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if matrix.rows() < k {
        return Err(Error::TooFewRows { need: k, got: matrix.rows() });
    }
    Ok(())
}

/// Cluster report CSV: raw-space centroid and size of every cluster.
pub fn write_cluster_report<W: Write>(model: &ClusterModel, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["cluster_id", "size"];
    header.extend_from_slice(&FEATURE_TABLE_HEADER[2..8]);
    w.write_record(&header)?;
    for (c, size) in model.sizes().into_iter().enumerate() {
        let mut rec = vec![c.to_string(), size.to_string()];
        rec.extend(model.centroids_raw[c].iter().map(|x| x.to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}

/// `flow_id,cluster_id` for each row; `flow_ids[i]` names row `i`.
pub fn write_assignments<W: Write>(model: &ClusterModel, flow_ids: &[u64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["flow_id", "cluster_id"])?;
    for (id, c) in flow_ids.iter().zip(&model.assignments) {
        w.write_record([id.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
