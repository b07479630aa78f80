//! Per-flow statistics and the standardized matrix the clustering runs on.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::FlowRecord;

/// Number of clustering columns.
pub const CLUSTER_FEATURES: usize = 6;

/// The clustering columns, in matrix order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    BytesIn,
    BytesOut,
    PacketsIn,
    PacketsOut,
    DurationS,
    Ratio,
}

impl Feature {
    pub const ALL: [Feature; CLUSTER_FEATURES] = [
        Feature::BytesIn,
        Feature::BytesOut,
        Feature::PacketsIn,
        Feature::PacketsOut,
        Feature::DurationS,
        Feature::Ratio,
    ];

    pub fn column(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Feature::BytesIn => "bytes_in",
            Feature::BytesOut => "bytes_out",
            Feature::PacketsIn => "packets_in",
            Feature::PacketsOut => "packets_out",
            Feature::DurationS => "duration_s",
            Feature::Ratio => "ratio",
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Feature {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Feature::ALL.into_iter().find(|f| f.name() == s).ok_or_else(|| format!("unknown feature {s:?}"))
    }
}

/// (in − out) / (in + out), in `[-1, 1]`; 0 when both are zero.
pub fn ratio(bytes_in: f64, bytes_out: f64) -> f64 {
    let total = bytes_in + bytes_out;
    if total == 0.0 {
        0.0
    } else {
        (bytes_in - bytes_out) / total
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub bytes_in: f64,
    pub bytes_out: f64,
    pub packets_in: f64,
    pub packets_out: f64,
    pub duration_s: f64,
    pub ratio: f64,
    pub mean_header_size: f64,
    pub mean_payload_size: f64,
}

impl FeatureVector {
    pub fn clustering(&self) -> [f64; CLUSTER_FEATURES] {
        [self.bytes_in, self.bytes_out, self.packets_in, self.packets_out, self.duration_s, self.ratio]
    }

    /// Clustering columns followed by the two mean-size columns.
    pub fn all(&self) -> [f64; 8] {
        let c = self.clustering();
        [c[0], c[1], c[2], c[3], c[4], c[5], self.mean_header_size, self.mean_payload_size]
    }

    pub fn get(&self, feature: Feature) -> f64 {
        self.clustering()[feature.column()]
    }
}

pub fn extract(flow: &FlowRecord) -> Result<FeatureVector> {
    let packets = flow.packets();
    if packets == 0 {
        return Err(Error::EmptyFlow(flow.id));
    }
    let bytes_in = flow.bytes_in as f64;
    let bytes_out = flow.bytes_out as f64;
    Ok(FeatureVector {
        bytes_in,
        bytes_out,
        packets_in: flow.packets_in as f64,
        packets_out: flow.packets_out as f64,
        duration_s: (flow.last_ts_us - flow.first_ts_us) as f64 / 1e6,
        ratio: ratio(bytes_in, bytes_out),
        mean_header_size: flow.header_bytes_total as f64 / packets as f64,
        mean_payload_size: flow.payload_bytes_total as f64 / packets as f64,
    })
}

/// Column means and population standard deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Row-major real matrix. After [`FeatureMatrix::standardize`] it also
/// carries the statistics needed to map values back.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    cols: usize,
    stats: Option<ColumnStats>,
}

impl FeatureMatrix {
    pub fn new(data: Vec<f64>, cols: usize) -> Result<Self> {
        if cols == 0 || !data.len().is_multiple_of(cols) {
            return Err(Error::ShapeMismatch(format!("{} values do not fill rows of {cols} columns", data.len())));
        }
        Ok(Self { data, cols, stats: None })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(CLUSTER_FEATURES, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.as_ref().len() != cols {
                return Err(Error::ShapeMismatch("ragged rows".into()));
            }
            data.extend_from_slice(r.as_ref());
        }
        Self::new(data, cols)
    }

    /// Clustering columns of each vector.
    pub fn from_features(vectors: &[FeatureVector]) -> Self {
        let data = vectors.iter().flat_map(|v| v.clustering()).collect();
        Self { data, cols: CLUSTER_FEATURES, stats: None }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.cols
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.cols)
    }

    pub fn column(&self, c: usize) -> impl Iterator<Item = f64> + '_ {
        self.iter_rows().map(move |r| r[c])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn stats(&self) -> Option<&ColumnStats> {
        self.stats.as_ref()
    }

    /// Z-scores every column with the population standard deviation;
    /// constant columns become zeros.
    pub fn standardize(&self) -> Result<FeatureMatrix> {
        let n = self.rows();
        if n < 2 {
            return Err(Error::TooFewRows { need: 2, got: n });
        }
        let mut mean = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut std = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for ((s, x), m) in std.iter_mut().zip(r).zip(&mean) {
                *s += (x - m) * (x - m);
            }
        }
        std.iter_mut().for_each(|s| *s = (*s / n as f64).sqrt());

        let data = self
            .iter_rows()
            .flat_map(|r| {
                r.iter()
                    .zip(&mean)
                    .zip(&std)
                    .map(|((x, m), s)| if *s > 0.0 { (x - m) / s } else { 0.0 })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(FeatureMatrix { data, cols: self.cols, stats: Some(ColumnStats { mean, std }) })
    }

    /// Maps one standardized row back to raw units. Identity when the
    /// matrix was never standardized.
    pub fn destandardize_row(&self, row: &[f64]) -> Vec<f64> {
        match &self.stats {
            None => row.to_vec(),
            Some(st) => {
                row.iter().zip(&st.mean).zip(&st.std).map(|((z, m), s)| if *s > 0.0 { z * s + m } else { *m }).collect()
            }
        }
    }

    pub fn destandardize(&self) -> FeatureMatrix {
        let data = self.iter_rows().flat_map(|r| self.destandardize_row(r)).collect();
        FeatureMatrix { data, cols: self.cols, stats: None }
    }
}

pub const FEATURE_TABLE_HEADER: [&str; 10] = [
    "flow_id",
    "app_label",
    "bytes_in",
    "bytes_out",
    "packets_in",
    "packets_out",
    "duration_s",
    "ratio",
    "mean_header_size",
    "mean_payload_size",
];

/// Feature-table CSV, one row per flow.
pub fn write_feature_table<W: Write>(flows: &[FlowRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FEATURE_TABLE_HEADER)?;
    for f in flows {
        let v = extract(f)?;
        let mut rec = vec![f.id.to_string(), f.app_label.clone().unwrap_or_default()];
        rec.extend(v.all().iter().map(|x| x.to_string()));
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
