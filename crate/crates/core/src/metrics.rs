//! Evaluation kernel. Positive class is `Generated` (label 1); every rate is
//! reported in percent. Statistics that cannot be computed (single-class
//! input, zero variance, empty bucket) are surfaced as errors or `None`,
//! never as a silent zero.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch {
            context: "scores/predictions vs labels".into(),
            expected: b,
            actual: a,
        });
    }
    if a == 0 {
        return Err(Error::InvalidInput("empty input".into()));
    }
    Ok(())
}

fn check_labels(labels: &[u8]) -> Result<()> {
    match labels.iter().find(|&&l| l > 1) {
        Some(l) => Err(Error::InvalidInput(format!("label {l} is not 0/1"))),
        None => Ok(()),
    }
}

/// Predict Generated iff `score >= threshold`.
pub fn threshold_predictions(scores: &[f64], threshold: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s >= threshold)).collect()
}

pub fn accuracy(predictions: &[u8], labels: &[u8]) -> Result<f64> {
    check_lengths(predictions.len(), labels.len())?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(100.0 * hits as f64 / labels.len() as f64)
}

/// ROC AUC as the normalized Mann-Whitney statistic, ties counting one half.
///
/// Ranks are averaged over tie groups after an O(n log n) sort; the rank sum
/// is kept doubled in integers so the statistic is exact before the final
/// division.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    check_lengths(scores.len(), labels.len())?;
    check_labels(labels)?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidInput("NaN score".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count() as u128;
    let negatives = labels.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Undefined(
            "AUC needs both positive and negative samples".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    // Sum over positives of twice their (1-based, tie-averaged) rank.
    let mut doubled_rank_sum: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let doubled_rank = (start + 1 + end) as u128;
        let group_positives = order[start..end]
            .iter()
            .filter(|&&i| labels[i] == 1)
            .count() as u128;
        doubled_rank_sum += doubled_rank * group_positives;
        start = end;
    }
    let doubled_u = doubled_rank_sum - positives * (positives + 1);
    Ok(100.0 * doubled_u as f64 / (2 * positives * negatives) as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, prediction: u8, label: u8) {
        match (prediction, label) {
            (1, 1) => self.tp += 1,
            (1, _) => self.fp += 1,
            (_, 1) => self.fn_ += 1,
            _ => self.tn += 1,
        }
    }

    pub fn accuracy(&self) -> Option<f64> {
        let n = self.total();
        (n > 0).then(|| 100.0 * (self.tp + self.tn) as f64 / n as f64)
    }

    /// Share of generated samples predicted real, in percent.
    pub fn fn_pct(&self) -> Option<f64> {
        let generated = self.fn_ + self.tp;
        (generated > 0).then(|| 100.0 * self.fn_ as f64 / generated as f64)
    }

    /// Share of real samples predicted generated, in percent.
    pub fn fp_pct(&self) -> Option<f64> {
        let real = self.fp + self.tn;
        (real > 0).then(|| 100.0 * self.fp as f64 / real as f64)
    }

    fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.tn += other.tn;
        self.fn_ += other.fn_;
    }
}

pub fn confusion_at_threshold(
    scores: &[f64],
    labels: &[u8],
    threshold: f64,
) -> Result<ConfusionCounts> {
    check_lengths(scores.len(), labels.len())?;
    check_labels(labels)?;
    let mut counts = ConfusionCounts::default();
    for (p, &l) in threshold_predictions(scores, threshold)
        .into_iter()
        .zip(labels)
    {
        counts.add(p, l);
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryErrors {
    /// `None` when the bucket has no generated members.
    pub fn_pct: Option<f64>,
    /// `None` when the bucket has no real members.
    pub fp_pct: Option<f64>,
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryErrorReport {
    pub threshold: f64,
    pub categories: BTreeMap<String, CategoryErrors>,
}

impl CategoryErrorReport {
    /// Sum of the per-bucket confusion counts.
    pub fn total(&self) -> ConfusionCounts {
        let mut total = ConfusionCounts::default();
        for c in self.categories.values() {
            total.merge(&c.confusion);
        }
        total
    }
}

/// Per-bucket FN% and FP%; any category label forms its own bucket.
pub fn category_error_rates<S: AsRef<str>>(
    scores: &[f64],
    labels: &[u8],
    categories: &[S],
    threshold: f64,
) -> Result<CategoryErrorReport> {
    check_lengths(scores.len(), labels.len())?;
    check_lengths(categories.len(), labels.len())?;
    check_labels(labels)?;
    let mut buckets: BTreeMap<String, ConfusionCounts> = BTreeMap::new();
    for ((&s, &l), c) in scores.iter().zip(labels).zip(categories) {
        buckets
            .entry(c.as_ref().to_string())
            .or_default()
            .add(u8::from(s >= threshold), l);
    }
    Ok(CategoryErrorReport {
        threshold,
        categories: buckets
            .into_iter()
            .map(|(name, confusion)| {
                let errors = CategoryErrors {
                    fn_pct: confusion.fn_pct(),
                    fp_pct: confusion.fp_pct(),
                    confusion,
                };
                (name, errors)
            })
            .collect(),
    })
}

/// Pearson correlation coefficient; zero variance in either input is
/// reported as [`Error::Undefined`].
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            context: "pearson inputs".into(),
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "pearson needs at least two samples".into(),
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite value".into()));
    }
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Undefined("zero variance".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Undefined("zero variance".into()));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Descriptive metadata of one experiment cell.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellMeta {
    pub model: String,
    pub dataset: String,
    pub mode: String,
    pub features: String,
    pub train_generator: String,
    pub test_generator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub store_sha256: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub meta: CellMeta,
    pub accuracy: f64,
    pub auc: f64,
    pub confusion: ConfusionCounts,
    pub n: u64,
}

impl EvalReport {
    pub fn from_scores(
        scores: &[f64],
        labels: &[u8],
        threshold: f64,
        meta: CellMeta,
    ) -> Result<Self> {
        let confusion = confusion_at_threshold(scores, labels, threshold)?;
        let predictions = threshold_predictions(scores, threshold);
        Ok(EvalReport {
            meta,
            accuracy: accuracy(&predictions, labels)?,
            auc: roc_auc(scores, labels)?,
            confusion,
            n: labels.len() as u64,
        })
    }
}
