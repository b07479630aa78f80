use serde::{Deserialize, Serialize};

use super::forest::ForestModel;
use crate::error::{Error, Result};
use crate::features::extract;
use crate::ingest::FlowRecord;

/// Scores of a classifier on a test set. `confusion[actual][predicted]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub labels: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
}

impl Metrics {
    /// Macro averages run over the classes with at least one actual
    /// sample; a class's precision or recall is 0 when its denominator is.
    #[allow(clippy::needless_range_loop)]
    pub fn from_confusion(labels: Vec<String>, confusion: Vec<Vec<u64>>) -> Metrics {
        let k = labels.len();
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut present = 0usize;
        for c in 0..k {
            let actual: u64 = confusion[c].iter().sum();
            if actual == 0 {
                continue;
            }
            present += 1;
            let predicted: u64 = (0..k).map(|r| confusion[r][c]).sum();
            let tp = confusion[c][c] as f64;
            recall += tp / actual as f64;
            if predicted > 0 {
                precision += tp / predicted as f64;
            }
        }
        let avg = |s: f64| if present == 0 { 0.0 } else { s / present as f64 };
        Metrics {
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            macro_precision: avg(precision),
            macro_recall: avg(recall),
            labels,
            confusion,
        }
    }

    /// Per-class (precision, recall), in label order.
    pub fn per_class(&self) -> Vec<(f64, f64)> {
        let k = self.labels.len();
        (0..k)
            .map(|c| {
                let tp = self.confusion[c][c] as f64;
                let actual: u64 = self.confusion[c].iter().sum();
                let predicted: u64 = (0..k).map(|r| self.confusion[r][c]).sum();
                let div = |d: u64| if d == 0 { 0.0 } else { tp / d as f64 };
                (div(predicted), div(actual))
            })
            .collect()
    }
}

/// Confusion matrix and macro scores of `model` on labeled `test` flows.
/// The label axis is the sorted union of model and test labels.
pub fn evaluate(model: &ForestModel, test: &[FlowRecord]) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyTest);
    }
    let mut labels = model.labels.clone();
    for f in test {
        labels.push(f.label()?.to_string());
    }
    labels.sort();
    labels.dedup();
    let index = |l: &str| labels.binary_search_by(|x| x.as_str().cmp(l)).expect("label in axis");
    let mut confusion = vec![vec![0u64; labels.len()]; labels.len()];
    for f in test {
        let row = extract(f)?.all();
        let predicted = index(&model.labels[model.predict_class(&row)]);
        confusion[index(f.label()?)][predicted] += 1;
    }
    Ok(Metrics::from_confusion(labels, confusion))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn binary_confusion() {
        let m = Metrics::from_confusion(labels(2), vec![vec![8, 2], vec![3, 7]]);
        assert_eq!(m.accuracy, 0.75);
        assert_eq!(m.macro_precision, (8.0 / 11.0 + 7.0 / 9.0) / 2.0);
        assert_eq!(m.macro_recall, (0.8 + 0.7) / 2.0);
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_confusion(labels(3), vec![vec![4, 0, 0], vec![0, 2, 0], vec![0, 0, 9]]);
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictions_on_balanced_set() {
        let m = Metrics::from_confusion(labels(2), vec![vec![5, 0], vec![5, 0]]);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.macro_recall, 0.5);
        assert_eq!(m.macro_precision, 0.25);
    }

    #[test]
    fn absent_classes_do_not_count() {
        // Class 2 never occurs in the test set but is predicted once.
        let m = Metrics::from_confusion(labels(3), vec![vec![3, 0, 1], vec![0, 4, 0], vec![0, 0, 0]]);
        assert_eq!(m.macro_recall, (0.75 + 1.0) / 2.0);
        assert_eq!(m.macro_precision, (1.0 + 1.0) / 2.0);
    }
}
