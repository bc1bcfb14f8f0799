//! Per-class error rate, generalization gap, and conflict-based kappa.
//!
//! For class `i` every test sample of a cell lands in exactly one of four
//! buckets:
//!
//! | bucket | meaning |
//! |--------|---------|
//! | `a` | high-confidence near-tie that involves `i` |
//! | `b` | decisive classification into `i` |
//! | `c` | decisive classification elsewhere, or a near-tie not involving `i` |
//! | `d` | low-confidence near-tie involving `i`, or a failed sample |
//!
//! The kappa of class `i` is the chance-corrected agreement of that 2x2 table.

use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::ingest::CellStore;
use crate::record::{argmax, KappaThresholds, Manifest, PredictionRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no samples of class '{0}'")]
    NoSamplesForClass(String),
    #[error("cell has no test records")]
    EmptyCell,
    #[error("class '{0}' is not in the vocabulary")]
    UnknownClass(String),
}

/// Which conflict rule a record falls under for a given class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ConflictRule {
    /// (i) top probability below `tau_fail`, or loss above `loss_fail`.
    Failed,
    /// (ii) near-tie including the class with top probability >= `tau_high`.
    HighConflict,
    /// (iii) near-tie including the class with top probability < `tau_high`.
    LowConflict,
    /// (iv) decisive, argmax is the class.
    DecisiveIn,
    /// (v) everything else.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Bucket {
    A,
    B,
    C,
    D,
}

impl ConflictRule {
    pub fn bucket(self) -> Bucket {
        match self {
            ConflictRule::Failed | ConflictRule::LowConflict => Bucket::D,
            ConflictRule::HighConflict => Bucket::A,
            ConflictRule::DecisiveIn => Bucket::B,
            ConflictRule::Other => Bucket::C,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            ConflictRule::Failed => "i",
            ConflictRule::HighConflict => "ii",
            ConflictRule::LowConflict => "iii",
            ConflictRule::DecisiveIn => "iv",
            ConflictRule::Other => "v",
        }
    }
}

/// Applies the conflict rules to one probability vector for class index `class_i`.
pub fn classify(probs: &[f64], loss: Option<f64>, class_i: usize, th: &KappaThresholds) -> ConflictRule {
    let top_idx = argmax(probs);
    let top = probs[top_idx];
    let loss_failed = matches!((loss, th.loss_fail), (Some(l), Some(limit)) if l > limit);
    if top < th.tau_fail || loss_failed {
        return ConflictRule::Failed;
    }
    let near_tie = |j: usize| top - probs[j] <= th.delta_tie;
    let tie_size = (0..probs.len()).filter(|&j| near_tie(j)).count();
    if tie_size >= 2 && near_tie(class_i) {
        if top >= th.tau_high {
            ConflictRule::HighConflict
        } else {
            ConflictRule::LowConflict
        }
    } else if top_idx == class_i {
        ConflictRule::DecisiveIn
    } else {
        ConflictRule::Other
    }
}

/// The four cells of the per-class conflict confusion matrix.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
    pub n: u64,
}

impl ConfusionCounts {
    pub fn new(a: u64, b: u64, c: u64, d: u64) -> Self {
        ConfusionCounts { a, b, c, d, n: a + b + c + d }
    }

    fn add(&mut self, bucket: Bucket) {
        match bucket {
            Bucket::A => self.a += 1,
            Bucket::B => self.b += 1,
            Bucket::C => self.c += 1,
            Bucket::D => self.d += 1,
        }
        self.n += 1;
    }

    /// Observed agreement `(a + d) / N` and chance agreement
    /// `((a+b)(a+c) + (c+d)(b+d)) / N^2`.
    pub fn agreement(&self) -> (f64, f64) {
        let n = self.n as f64;
        let (a, b, c, d) = (self.a as f64, self.b as f64, self.c as f64, self.d as f64);
        let p1 = (a + d) / n;
        let p2 = ((a + b) * (a + c) + (c + d) * (b + d)) / (n * n);
        (p1, p2)
    }
}

/// Counts the buckets of `class_i` over all records of one cell's test split.
pub fn confusion_counts(
    records: &[PredictionRecord],
    class_i: usize,
    th: &KappaThresholds,
) -> Result<ConfusionCounts, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyCell);
    }
    let mut counts = ConfusionCounts::default();
    for r in records {
        counts.add(classify(&r.probs, r.loss, class_i, th).bucket());
    }
    Ok(counts)
}

/// Per-class kappa. A chance-agreement denominator below `epsilon` yields 0.
pub fn kappa(counts: &ConfusionCounts, epsilon: f64) -> f64 {
    let (p1, p2) = counts.agreement();
    if 1.0 - p2 < epsilon {
        return 0.0;
    }
    ((p1 - p2) / (1.0 - p2)).clamp(-1.0, 1.0)
}

/// Fraction of `class_label` records whose argmax is not `class_index`.
pub fn per_class_error_rate(
    records: &[PredictionRecord],
    class_label: &str,
    class_index: usize,
) -> Result<f64, MetricsError> {
    let (mut total, mut wrong) = (0usize, 0usize);
    for r in records.iter().filter(|r| r.true_class == class_label) {
        total += 1;
        if r.argmax() != class_index {
            wrong += 1;
        }
    }
    if total == 0 {
        return Err(MetricsError::NoSamplesForClass(class_label.to_string()));
    }
    Ok(wrong as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub value: f64,
    /// No training error existed, so `value` is the test error alone.
    pub test_error_only: bool,
}

/// Test error minus train error; falls back to the test error when there is
/// no training split for the class (zero-shot classes).
pub fn generalization_gap(test_err: f64, train_err: Option<f64>) -> Gap {
    match train_err {
        Some(train) => Gap {
            value: test_err - train,
            test_error_only: false,
        },
        None => Gap {
            value: test_err,
            test_error_only: true,
        },
    }
}

/// Which per-class value populates the `g` distribution of a cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum GapSource {
    /// The generalization gap (test error alone where no train records exist).
    #[default]
    Gap,
    /// Always the test error rate.
    TestError,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub class_label: String,
    pub error_rate_test: f64,
    pub error_rate_train: Option<f64>,
    pub gap: f64,
    pub test_error_only: bool,
    pub kappa: f64,
    pub counts: ConfusionCounts,
}

impl ClassMetrics {
    pub fn g(&self, source: GapSource) -> f64 {
        match source {
            GapSource::Gap => self.gap,
            GapSource::TestError => self.error_rate_test,
        }
    }
}

/// Metrics for every class present in the cell's test split, in vocabulary order.
pub fn cell_class_metrics(cell: &CellStore, manifest: &Manifest) -> Result<Vec<ClassMetrics>, MetricsError> {
    if cell.test_records.is_empty() {
        return Err(MetricsError::EmptyCell);
    }
    let present = cell.test_classes();
    let th = &manifest.thresholds;
    let mut out = Vec::with_capacity(present.len());
    for (idx, label) in manifest.class_vocabulary.iter().enumerate() {
        if !present.contains(label.as_str()) {
            continue;
        }
        let error_rate_test = per_class_error_rate(&cell.test_records, label, idx)?;
        let error_rate_train = match per_class_error_rate(&cell.train_records, label, idx) {
            Ok(e) => Some(e),
            Err(MetricsError::NoSamplesForClass(_)) => None,
            Err(e) => return Err(e),
        };
        let gap = generalization_gap(error_rate_test, error_rate_train);
        let counts = confusion_counts(&cell.test_records, idx, th)?;
        out.push(ClassMetrics {
            class_label: label.clone(),
            error_rate_test,
            error_rate_train,
            gap: gap.value,
            test_error_only: gap.test_error_only,
            kappa: kappa(&counts, th.epsilon_denominator),
            counts,
        });
    }
    Ok(out)
}

/// Writes one CSV row per (test record, class) with the rule that fired.
pub fn write_rule_dump<W: Write>(
    out: &mut csv::Writer<W>,
    cell: &CellStore,
    manifest: &Manifest,
) -> csv::Result<()> {
    let th = &manifest.thresholds;
    let key = cell.key;
    for r in &cell.test_records {
        for (idx, label) in manifest.class_vocabulary.iter().enumerate() {
            let rule = classify(&r.probs, r.loss, idx, th);
            let bucket = match rule.bucket() {
                Bucket::A => "a",
                Bucket::B => "b",
                Bucket::C => "c",
                Bucket::D => "d",
            };
            out.write_record([
                key.zero_shot_pct.to_string(),
                key.ssim.to_string(),
                key.weight_num.to_string(),
                r.sample_id.clone(),
                r.true_class.clone(),
                label.clone(),
                rule.label().to_string(),
                bucket.to_string(),
            ])?;
        }
    }
    Ok(())
}

pub const RULE_DUMP_HEADER: [&str; 8] = [
    "zero_shot_pct",
    "ssim",
    "weight_num",
    "sample_id",
    "true_class",
    "class_i",
    "rule",
    "bucket",
];
