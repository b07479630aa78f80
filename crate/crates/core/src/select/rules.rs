//! Keep/drop rules over cluster centroids.
//!
//! One rule per line: `keep|drop <feature> <cmp> <value>[, <feature> <cmp> <value>]*`
//! where `<cmp>` is one of `< <= > >=` (or `≤ ≥`) and `<value>` is a number
//! or a percentile token `pNN` of that feature over the app's flows. An
//! optional final `default keep|drop` line sets the fallback (drop when
//! absent). `#` starts a comment.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterModel;
use crate::error::{Error, Result};
use crate::features::{Feature, FeatureMatrix};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Keep,
    Drop,
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Action::Keep => "keep",
            Action::Drop => "drop",
        })
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "keep" => Ok(Action::Keep),
            "drop" => Ok(Action::Drop),
            other => Err(format!("expected keep or drop, got {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn holds(self, lhs: f64, rhs: f64) -> bool {
        match self {
            Comparator::Lt => lhs < rhs,
            Comparator::Le => lhs <= rhs,
            Comparator::Gt => lhs > rhs,
            Comparator::Ge => lhs >= rhs,
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Gt => ">",
            Comparator::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    Value(f64),
    /// Nearest-rank percentile in `[0, 100]`.
    Percentile(f64),
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Threshold::Value(v) => write!(f, "{v}"),
            Threshold::Percentile(p) => write!(f, "p{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub feature: Feature,
    pub cmp: Comparator,
    pub threshold: Threshold,
}

impl fmt::Display for Predicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.feature, self.cmp, self.threshold)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub action: Action,
    /// Conjunction; never empty.
    pub predicates: Vec<Predicate>,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ", self.action)?;
        for (i, p) in self.predicates.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

/// Ordered rules, first match wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub rules: Vec<Rule>,
    pub default_action: Action,
}

impl Default for SelectionPolicy {
    /// Keeps download-dominated clusters: `keep ratio > 0.9`, default drop.
    fn default() -> Self {
        parse_rules(DEFAULT_POLICY).expect("shipped policy parses")
    }
}

/// The shipped policy text.
pub const DEFAULT_POLICY: &str = "keep ratio > 0.9\ndefault drop\n";

/// Alternative that removes long-lived, low-upload clusters and keeps the
/// rest. The p75/p25 cut-offs are a heuristic, not a calibrated value.
pub const HEARTBEAT_DROP_POLICY: &str = "drop duration_s > p75, bytes_out < p25\ndefault keep\n";

impl fmt::Display for SelectionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.rules {
            writeln!(f, "{r}")?;
        }
        writeln!(f, "default {}", self.default_action)
    }
}

impl FromStr for SelectionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_rules(s)
    }
}

pub fn parse_rules(text: &str) -> Result<SelectionPolicy> {
    let mut rules = Vec::new();
    let mut default_action = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |msg: String| Error::Parse { line, msg };
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if default_action.is_some() {
            return Err(err("rules may not follow the `default` line".into()));
        }
        let (head, rest) =
            content.split_once(char::is_whitespace).ok_or_else(|| err(format!("incomplete rule {content:?}")))?;
        if head == "default" {
            default_action = Some(rest.trim().parse::<Action>().map_err(err)?);
            continue;
        }
        let action = head.parse::<Action>().map_err(err)?;
        let predicates = rest.split(',').map(|p| parse_predicate(p.trim()).map_err(err)).collect::<Result<Vec<_>>>()?;
        rules.push(Rule { action, predicates });
    }
    Ok(SelectionPolicy { rules, default_action: default_action.unwrap_or(Action::Drop) })
}

fn parse_predicate(text: &str) -> std::result::Result<Predicate, String> {
    let at = text.find(['<', '>', '≤', '≥']).ok_or_else(|| format!("missing comparator in {text:?}"))?;
    let feature = text[..at].trim().parse::<Feature>()?;
    let ops = &text[at..];
    let (cmp, len) = if ops.starts_with("<=") {
        (Comparator::Le, 2)
    } else if ops.starts_with(">=") {
        (Comparator::Ge, 2)
    } else if ops.starts_with('≤') {
        (Comparator::Le, '≤'.len_utf8())
    } else if ops.starts_with('≥') {
        (Comparator::Ge, '≥'.len_utf8())
    } else if ops.starts_with('<') {
        (Comparator::Lt, 1)
    } else {
        (Comparator::Gt, 1)
    };
    let value = ops[len..].trim();
    if value.is_empty() {
        return Err(format!("missing threshold in {text:?}"));
    }
    let threshold = if let Some(p) = value.strip_prefix('p') {
        let pct: f64 = p.parse().map_err(|_| format!("malformed percentile {value:?}"))?;
        if !(0.0..=100.0).contains(&pct) {
            return Err(format!("percentile {value:?} outside p0..p100"));
        }
        Threshold::Percentile(pct)
    } else {
        let v: f64 = value.parse().map_err(|_| format!("malformed threshold {value:?}"))?;
        if !v.is_finite() {
            return Err(format!("threshold {value:?} is not finite"));
        }
        Threshold::Value(v)
    };
    Ok(Predicate { feature, cmp, threshold })
}

/// Nearest-rank percentile of `values` (`p` in `[0, 100]`); NaN when empty.
pub fn nearest_rank(values: &[f64], p: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

/// Ids of the clusters the policy keeps, judged on raw-space centroids.
/// Percentile thresholds resolve over the rows of `raw_features`.
pub fn evaluate(policy: &SelectionPolicy, model: &ClusterModel, raw_features: &FeatureMatrix) -> BTreeSet<usize> {
    let resolve = |p: &Predicate| match p.threshold {
        Threshold::Value(v) => v,
        Threshold::Percentile(pct) => {
            let col: Vec<f64> = raw_features.column(p.feature.column()).collect();
            nearest_rank(&col, pct)
        }
    };
    let resolved: Vec<Vec<f64>> = policy.rules.iter().map(|r| r.predicates.iter().map(resolve).collect()).collect();

    (0..model.k)
        .filter(|&c| {
            let centroid = &model.centroids_raw[c];
            let action = policy
                .rules
                .iter()
                .zip(&resolved)
                .find(|(rule, thresholds)| {
                    rule.predicates
                        .iter()
                        .zip(thresholds.iter())
                        .all(|(p, &t)| p.cmp.holds(centroid[p.feature.column()], t))
                })
                .map_or(policy.default_action, |(rule, _)| rule.action);
            action == Action::Keep
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::Algorithm;

    fn model_with_ratios(ratios: &[f64]) -> ClusterModel {
        let centroids: Vec<Vec<f64>> = ratios.iter().map(|&r| vec![1000.0, 100.0, 10.0, 5.0, 3.0, r]).collect();
        ClusterModel {
            algorithm: Algorithm::KMeans,
            k: ratios.len(),
            assignments: (0..ratios.len()).collect(),
            centroids_std: centroids.clone(),
            centroids_raw: centroids,
            sse: 0.0,
            seed: Some(0),
            linkage: None,
            sse_trace: vec![],
            merge_costs: vec![],
            iterations: 1,
        }
    }

    fn raw(model: &ClusterModel) -> FeatureMatrix {
        FeatureMatrix::from_rows(&model.centroids_raw).unwrap()
    }

    #[test]
    fn parses_keep_rule() {
        let p = parse_rules("keep ratio > 0.9").unwrap();
        assert_eq!(p.default_action, Action::Drop);
        assert_eq!(
            p.rules,
            [Rule {
                action: Action::Keep,
                predicates: vec![Predicate {
                    feature: Feature::Ratio,
                    cmp: Comparator::Gt,
                    threshold: Threshold::Value(0.9)
                }]
            }]
        );
    }

    #[test]
    fn parses_percentile_conjunction() {
        let p = parse_rules("drop duration_s > p75, bytes_out < p25").unwrap();
        assert_eq!(p.rules.len(), 1);
        let r = &p.rules[0];
        assert_eq!(r.action, Action::Drop);
        assert_eq!(r.predicates.len(), 2);
        assert_eq!(r.predicates[0].threshold, Threshold::Percentile(75.0));
        assert_eq!(r.predicates[1].feature, Feature::BytesOut);
        assert_eq!(r.predicates[1].cmp, Comparator::Lt);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        for (text, line) in [
            ("keep frobnicate > 1", 1),
            ("# c\nkeep ratio > 0.9\nkeep ratio ~ 1", 3),
            ("keep ratio > p101", 1),
            ("keep ratio > pxx", 1),
            ("keep ratio >", 1),
            ("hold ratio > 1", 1),
            ("default drop\nkeep ratio > 0", 2),
            ("keep ratio > 0.9,", 1),
        ] {
            match parse_rules(text) {
                Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
                other => panic!("{text:?}: expected parse error, got {other:?}"),
            }
        }
    }

    #[test]
    fn display_round_trips() {
        let text = "keep ratio >= 0.9, duration_s < p50\ndrop bytes_in <= 12.5\ndefault keep\n";
        let p = parse_rules(text).unwrap();
        assert_eq!(p.to_string(), text);
        assert_eq!(parse_rules(&p.to_string()).unwrap(), p);
        assert_eq!(parse_rules("keep ratio ≥ 0.5").unwrap().rules[0].predicates[0].cmp, Comparator::Ge);
    }

    #[test]
    fn keeps_high_ratio_cluster() {
        let m = model_with_ratios(&[0.95, 0.40, -0.20]);
        let kept = evaluate(&SelectionPolicy::default(), &m, &raw(&m));
        assert_eq!(kept.into_iter().collect::<Vec<_>>(), [0]);
    }

    #[test]
    fn empty_policy_uses_default() {
        let m = model_with_ratios(&[0.95, 0.40]);
        let drop_all = parse_rules("").unwrap();
        assert!(evaluate(&drop_all, &m, &raw(&m)).is_empty());
        let keep_all = parse_rules("default keep").unwrap();
        assert_eq!(evaluate(&keep_all, &m, &raw(&m)).len(), 2);
    }

    #[test]
    fn rule_order_semantics() {
        let m = model_with_ratios(&[-0.95]);
        let p = parse_rules("keep ratio > 0.9\nkeep ratio < -0.9").unwrap();
        assert_eq!(evaluate(&p, &m, &raw(&m)).len(), 1);
        let p = parse_rules("drop ratio < 0\nkeep ratio < -0.9").unwrap();
        assert!(evaluate(&p, &m, &raw(&m)).is_empty());
    }

    #[test]
    fn nearest_rank_percentiles() {
        let v = [15.0, 20.0, 35.0, 40.0, 50.0];
        assert_eq!(nearest_rank(&v, 0.0), 15.0);
        assert_eq!(nearest_rank(&v, 5.0), 15.0);
        assert_eq!(nearest_rank(&v, 30.0), 20.0);
        assert_eq!(nearest_rank(&v, 40.0), 20.0);
        assert_eq!(nearest_rank(&v, 50.0), 35.0);
        assert_eq!(nearest_rank(&v, 100.0), 50.0);
    }

    #[test]
    fn percentile_thresholds_use_flow_distribution() {
        let m = model_with_ratios(&[0.1, 0.2]);
        // Flow-level ratio distribution whose median is 0.15.
        let flows = FeatureMatrix::from_rows(&[
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.05],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.15],
            [0.0, 0.0, 0.0, 0.0, 0.0, 0.30],
        ])
        .unwrap();
        let p = parse_rules("keep ratio > p50").unwrap();
        assert_eq!(evaluate(&p, &m, &flows).into_iter().collect::<Vec<_>>(), [1]);
    }
}
