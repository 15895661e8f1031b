//! Set-level evaluation: per-label precision/recall/F1 with macro means,
//! exact match ratio and exact match ratio by target cardinality.
//!
//! Zero denominators: a precision or recall whose denominator is zero is
//! reported as 1 when the label appears in neither predictions nor targets,
//! and 0 otherwise.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::dataio::{ActivitySet, ActivityVocabulary};
use crate::error::{Error, Result};

pub const ZERO_DENOMINATOR_CONVENTION: &str =
    "zero denominator: 1 if the label appears in no prediction and no target, else 0";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalPair {
    pub predicted: ActivitySet,
    pub target: ActivitySet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMetrics {
    pub label: String,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    /// Number of targets containing the label.
    pub support: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CardinalityMetrics {
    pub cardinality: usize,
    pub total: usize,
    pub matches: usize,
    /// `None` when no target has this cardinality.
    pub match_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_pairs: usize,
    pub labels: Vec<LabelMetrics>,
    pub precision_mean: f64,
    pub recall_mean: f64,
    pub f1_mean: f64,
    pub exact_match: f64,
    pub by_cardinality: Vec<CardinalityMetrics>,
    pub convention: String,
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn label(&self, name: &str) -> Option<&LabelMetrics> {
        self.labels.iter().find(|l| l.label == name)
    }

    pub fn match_ratio(&self, cardinality: usize) -> Option<f64> {
        self.by_cardinality.get(cardinality).and_then(|c| c.match_ratio)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "pairs: {}", self.n_pairs);
        let _ = writeln!(out, "{:<16} {:>8} {:>8} {:>8} {:>8}", "label", "P", "R", "F1", "support");
        for l in &self.labels {
            let _ = writeln!(
                out,
                "{:<16} {:>8.4} {:>8.4} {:>8.4} {:>8}",
                l.label, l.precision, l.recall, l.f1, l.support
            );
        }
        let _ = writeln!(
            out,
            "{:<16} {:>8.4} {:>8.4} {:>8.4}",
            "mean", self.precision_mean, self.recall_mean, self.f1_mean
        );
        let _ = writeln!(out, "MR: {:.4}", self.exact_match);
        for c in &self.by_cardinality {
            let ratio = c.match_ratio.map_or("-".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(out, "MR_{}: {} ({}/{})", c.cardinality, ratio, c.matches, c.total);
        }
        let _ = writeln!(out, "note: {}", self.convention);
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }
}

fn ratio(num: usize, den: usize, label_seen: bool) -> f64 {
    if den == 0 {
        if label_seen {
            0.0
        } else {
            1.0
        }
    } else {
        num as f64 / den as f64
    }
}

/// Evaluates predicted against target sets. Cardinality buckets cover
/// `0..=max(K, largest target)`.
pub fn evaluate(pairs: &[EvalPair], vocab: &ActivityVocabulary, max_cardinality: usize) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("evaluation pairs"));
    }
    let m = vocab.len();
    let limit = ActivitySet::from_indices(0..m);
    for p in pairs {
        for s in [p.predicted, p.target] {
            if s.bits() & !limit.bits() != 0 {
                return Err(Error::Config(format!("set {s} exceeds a vocabulary of {m} labels")));
            }
        }
    }

    let mut labels = Vec::with_capacity(m);
    let mut warnings = Vec::new();
    for a in 0..m {
        let (mut tp, mut fp, mut fn_) = (0, 0, 0);
        for p in pairs {
            match (p.predicted.contains(a), p.target.contains(a)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                _ => {}
            }
        }
        let seen = tp + fp + fn_ > 0;
        let precision = ratio(tp, tp + fp, seen);
        let recall = ratio(tp, tp + fn_, seen);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        let support = tp + fn_;
        if support == 0 {
            warnings.push(format!("label {} has no support and is excluded from the means", vocab.name(a)));
        }
        labels.push(LabelMetrics {
            label: vocab.name(a).to_string(),
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            support,
            precision,
            recall,
            f1,
        });
    }
    let supported: Vec<&LabelMetrics> = labels.iter().filter(|l| l.support > 0).collect();
    let mean = |f: fn(&LabelMetrics) -> f64| {
        if supported.is_empty() {
            0.0
        } else {
            supported.iter().map(|l| f(l)).sum::<f64>() / supported.len() as f64
        }
    };
    let (precision_mean, recall_mean, f1_mean) = (mean(|l| l.precision), mean(|l| l.recall), mean(|l| l.f1));

    let largest = pairs.iter().map(|p| p.target.len()).max().unwrap_or(0);
    let mut buckets: Vec<(usize, usize)> = vec![(0, 0); max_cardinality.max(largest) + 1];
    for p in pairs {
        let b = &mut buckets[p.target.len()];
        b.0 += 1;
        if p.predicted == p.target {
            b.1 += 1;
        }
    }
    let matches: usize = buckets.iter().map(|b| b.1).sum();
    let by_cardinality = buckets
        .into_iter()
        .enumerate()
        .map(|(c, (total, matches))| CardinalityMetrics {
            cardinality: c,
            total,
            matches,
            match_ratio: (total > 0).then(|| matches as f64 / total as f64),
        })
        .collect();

    Ok(MetricsReport {
        n_pairs: pairs.len(),
        labels,
        precision_mean,
        recall_mean,
        f1_mean,
        exact_match: matches as f64 / pairs.len() as f64,
        by_cardinality,
        convention: ZERO_DENOMINATOR_CONVENTION.to_string(),
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub name: String,
    pub values: Vec<Option<f64>>,
    /// Parallel to `values`: whether this row holds the column maximum.
    pub best: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub columns: Vec<String>,
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// Aligned text; best cells carry a trailing `*`.
    pub fn to_text(&self) -> String {
        let name_w = self.rows.iter().map(|r| r.name.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<name_w$}", "model");
        for c in &self.columns {
            let _ = write!(out, " {c:>9}");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{:<name_w$}", r.name);
            for (v, &b) in r.values.iter().zip(&r.best) {
                let cell = match v {
                    Some(v) => format!("{:.4}{}", v, if b { "*" } else { " " }),
                    None => "- ".to_string(),
                };
                let _ = write!(out, " {cell:>9}");
            }
            out.push('\n');
        }
        out
    }
}

/// One row per report, in input order. Columns are the macro means, MR and
/// every MR_c present in any report.
pub fn compare_runs(reports: &[(String, MetricsReport)]) -> Result<ComparisonTable> {
    let first = reports.first().ok_or(Error::Empty("reports to compare"))?;
    let names: Vec<&str> = first.1.labels.iter().map(|l| l.label.as_str()).collect();
    for (name, r) in reports {
        if r.labels.iter().map(|l| l.label.as_str()).ne(names.iter().copied()) {
            return Err(Error::Config(format!("report {name} uses a different vocabulary")));
        }
    }
    let n_card = reports.iter().map(|(_, r)| r.by_cardinality.len()).max().unwrap_or(0);
    let mut columns: Vec<String> = ["P_mean", "R_mean", "F_mean", "MR"].map(String::from).to_vec();
    columns.extend((0..n_card).map(|c| format!("MR_{c}")));

    let mut rows: Vec<ComparisonRow> = reports
        .iter()
        .map(|(name, r)| {
            let mut values = vec![Some(r.precision_mean), Some(r.recall_mean), Some(r.f1_mean), Some(r.exact_match)];
            values.extend((0..n_card).map(|c| r.match_ratio(c)));
            ComparisonRow {
                name: name.clone(),
                best: vec![false; values.len()],
                values,
            }
        })
        .collect();
    for col in 0..columns.len() {
        let max = rows.iter().filter_map(|r| r.values[col]).fold(f64::NEG_INFINITY, f64::max);
        for r in &mut rows {
            r.best[col] = r.values[col] == Some(max);
        }
    }
    Ok(ComparisonTable { columns, rows })
}
