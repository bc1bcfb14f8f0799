//! Record schema, run manifest, sweep axes and validation rules.
//!
//! A run is described by one [`Manifest`] (JSON) and any number of
//! [`PredictionRecord`]s (JSON Lines or CSV). Every record carries its own
//! sweep coordinates so that one stream can hold a whole sweep.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on the sum of a probability vector.
pub const PROB_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub class_vocabulary: Vec<String>,
    #[serde(default)]
    pub zero_shot_classes: Vec<String>,
    pub axes: GridAxes,
    #[serde(default)]
    pub thresholds: KappaThresholds,
    #[serde(default)]
    pub dataset_name: String,
    #[serde(default)]
    pub notes: String,
}

impl Manifest {
    /// Position of `label` in the class vocabulary.
    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.class_vocabulary.iter().position(|c| c == label)
    }

    pub fn is_zero_shot(&self, label: &str) -> bool {
        self.zero_shot_classes.iter().any(|c| c == label)
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        // Serializing plain data into a String cannot fail.
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// The three sweep dimensions plus the model label attached to each size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxes {
    pub zero_shot_levels: Vec<f64>,
    pub ssim_levels: Vec<f64>,
    pub weight_nums: Vec<u64>,
    #[serde(default)]
    pub model_ids: BTreeMap<u64, String>,
}

impl GridAxes {
    pub fn new(zero_shot_levels: Vec<f64>, ssim_levels: Vec<f64>, weight_nums: Vec<u64>) -> Self {
        GridAxes {
            zero_shot_levels,
            ssim_levels,
            weight_nums,
            model_ids: BTreeMap::new(),
        }
    }

    /// Builds axes from the distinct coordinates of a set of keys.
    pub fn from_keys<'a>(keys: impl IntoIterator<Item = &'a CellKey>) -> Self {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut zs = BTreeSet::new();
        for k in keys {
            xs.push(k.zero_shot_pct);
            ys.push(k.ssim);
            zs.insert(k.weight_num);
        }
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.dedup();
        GridAxes::new(xs, ys, zs.into_iter().collect())
    }

    pub fn contains(&self, key: &CellKey) -> bool {
        self.zero_shot_levels.contains(&key.zero_shot_pct)
            && self.ssim_levels.contains(&key.ssim)
            && self.weight_nums.contains(&key.weight_num)
    }

    /// The full Cartesian grid in key order.
    pub fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::with_capacity(self.len());
        for &x in &self.zero_shot_levels {
            for &y in &self.ssim_levels {
                for &z in &self.weight_nums {
                    out.push(CellKey::new(x, y, z));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.zero_shot_levels.len() * self.ssim_levels.len() * self.weight_nums.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_weight_num(&self) -> Option<u64> {
        self.weight_nums.last().copied()
    }

    pub fn has_no_noise_slice(&self) -> bool {
        self.ssim_levels.contains(&1.0)
    }

    pub fn has_no_zero_shot_slice(&self) -> bool {
        self.zero_shot_levels.contains(&0.0)
    }

    pub fn model_label(&self, weight_num: u64) -> Option<&str> {
        self.model_ids.get(&weight_num).map(String::as_str)
    }
}

/// Thresholds of the conflict rules that feed the per-class kappa.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KappaThresholds {
    /// Minimum top probability for a near-tie to count as a high-confidence conflict.
    pub tau_high: f64,
    /// A top probability below this marks a failed sample.
    pub tau_fail: f64,
    /// Additive margin from the top probability that defines the near-tie set.
    pub delta_tie: f64,
    /// Chance-agreement denominators below this yield kappa 0.
    pub epsilon_denominator: f64,
    /// Loss above this marks a failed sample; `None` disables the loss test.
    pub loss_fail: Option<f64>,
}

impl Default for KappaThresholds {
    fn default() -> Self {
        KappaThresholds {
            tau_high: 0.5,
            tau_fail: 0.1,
            delta_tie: 0.05,
            epsilon_denominator: 1e-9,
            loss_fail: None,
        }
    }
}

impl KappaThresholds {
    pub fn validate(&self) -> Result<(), ValidationError> {
        let bad = |field: &'static str, reason: &str| {
            Err(ValidationError::BadThreshold {
                field,
                reason: reason.to_string(),
            })
        };
        if !(self.tau_high > 0.0 && self.tau_high < 1.0) {
            return bad("tau_high", "must lie in (0, 1)");
        }
        if !(self.tau_fail >= 0.0 && self.tau_fail < 1.0) {
            return bad("tau_fail", "must lie in [0, 1)");
        }
        if !(self.delta_tie >= 0.0 && self.delta_tie < 1.0) {
            return bad("delta_tie", "must lie in [0, 1)");
        }
        if !(self.epsilon_denominator > 0.0 && self.epsilon_denominator.is_finite()) {
            return bad("epsilon_denominator", "must be a small positive real");
        }
        if self.tau_fail >= self.tau_high {
            return bad("tau_fail", "must be below tau_high");
        }
        if self.delta_tie >= self.tau_high {
            return bad("delta_tie", "must be below tau_high");
        }
        if let Some(l) = self.loss_fail {
            if l.is_nan() || l < 0.0 {
                return bad("loss_fail", "must be non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "test" => Some(Split::Test),
            _ => None,
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample's evaluation outcome under one sweep condition.
///
/// `probs` is dense and aligned to the manifest's class vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub sample_id: String,
    pub true_class: String,
    pub split: Split,
    pub zero_shot_pct: f64,
    pub ssim: f64,
    pub weight_num: u64,
    pub probs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
}

impl PredictionRecord {
    pub const FIELDS: [&'static str; 8] = [
        "sample_id",
        "true_class",
        "split",
        "zero_shot_pct",
        "ssim",
        "weight_num",
        "probs",
        "loss",
    ];

    pub fn key(&self) -> CellKey {
        CellKey::new(self.zero_shot_pct, self.ssim, self.weight_num)
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serializes")
    }
}

/// Index of the first maximal element.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Coordinates of one cell: zero-shot fraction (x), SSIM (y), weight count (z).
///
/// Ordering is lexicographic on (x, y, z) using IEEE total order, which makes
/// every map keyed by cells iterate deterministically.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CellKey {
    pub zero_shot_pct: f64,
    pub ssim: f64,
    pub weight_num: u64,
}

impl CellKey {
    pub fn new(zero_shot_pct: f64, ssim: f64, weight_num: u64) -> Self {
        CellKey {
            zero_shot_pct,
            ssim,
            weight_num,
        }
    }
}

impl PartialEq for CellKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CellKey {}

impl PartialOrd for CellKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for CellKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.zero_shot_pct
            .total_cmp(&other.zero_shot_pct)
            .then(self.ssim.total_cmp(&other.ssim))
            .then(self.weight_num.cmp(&other.weight_num))
    }
}

impl fmt::Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "(zero_shot={}, ssim={}, weight_num={})",
            self.zero_shot_pct, self.ssim, self.weight_num
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValidationError {
    #[error("probabilities sum to {sum}, expected 1 within {PROB_SUM_TOLERANCE}")]
    ProbSumError { sum: f64 },
    #[error("probability at index {index} is {value}, outside [0, 1]")]
    ProbRangeError { index: usize, value: f64 },
    #[error("probs has {found} entries but the vocabulary has {expected}")]
    ProbLengthMismatch { expected: usize, found: usize },
    #[error("unknown class '{0}'")]
    UnknownClass(String),
    #[error("{field} = {value} is not a grid level")]
    OffGridCoordinate { field: &'static str, value: String },
    #[error("split '{0}' is neither 'train' nor 'test'")]
    BadSplit(String),
    #[error("loss {0} must be non-negative")]
    BadLoss(f64),
    #[error("unknown field '{0}'")]
    UnknownField(String),
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("class '{0}' appears more than once in the vocabulary")]
    DuplicateClass(String),
    #[error("class vocabulary needs at least 2 classes, found {0}")]
    VocabularyTooSmall(usize),
    #[error("axis {0} is empty")]
    EmptyAxis(&'static str),
    #[error("axis {0} is not strictly increasing")]
    UnsortedAxis(&'static str),
    #[error("axis {axis} has out-of-range level {value}")]
    AxisRange { axis: &'static str, value: String },
    #[error("zero-shot class '{0}' is not in the vocabulary")]
    ZeroShotNotSubset(String),
    #[error("threshold {field} {reason}")]
    BadThreshold { field: &'static str, reason: String },
}

impl ValidationError {
    /// Stable short name used for error tallies and diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            ValidationError::ProbSumError { .. } => "ProbSumError",
            ValidationError::ProbRangeError { .. } => "ProbRangeError",
            ValidationError::ProbLengthMismatch { .. } => "ProbLengthMismatch",
            ValidationError::UnknownClass(_) => "UnknownClass",
            ValidationError::OffGridCoordinate { .. } => "OffGridCoordinate",
            ValidationError::BadSplit(_) => "BadSplit",
            ValidationError::BadLoss(_) => "BadLoss",
            ValidationError::UnknownField(_) => "UnknownField",
            ValidationError::Malformed(_) => "Malformed",
            ValidationError::DuplicateClass(_) => "DuplicateClass",
            ValidationError::VocabularyTooSmall(_) => "VocabularyTooSmall",
            ValidationError::EmptyAxis(_) => "EmptyAxis",
            ValidationError::UnsortedAxis(_) => "UnsortedAxis",
            ValidationError::AxisRange { .. } => "AxisRange",
            ValidationError::ZeroShotNotSubset(_) => "ZeroShotNotSubset",
            ValidationError::BadThreshold { .. } => "BadThreshold",
        }
    }
}

/// Non-fatal findings from [`validate_manifest`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ManifestWarning {
    /// Neither SSIM = 1 nor zero-shot = 0 is on the axes, so no consistency slice exists.
    NoSliceAvailable,
    /// Only one of the two consistency slices exists.
    SingleSlice(&'static str),
}

impl fmt::Display for ManifestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ManifestWarning::NoSliceAvailable => f.write_str(
                "NoSliceAvailable: neither ssim 1.0 nor zero-shot 0.0 is on the axes; consistency checks are unavailable",
            ),
            ManifestWarning::SingleSlice(which) => {
                write!(f, "only the {which} slice is available for consistency checks")
            }
        }
    }
}

fn check_strictly_increasing(values: &[f64], axis: &'static str) -> Result<(), ValidationError> {
    if values.is_empty() {
        return Err(ValidationError::EmptyAxis(axis));
    }
    if values.windows(2).any(|w| w[0].partial_cmp(&w[1]) != Some(std::cmp::Ordering::Less)) {
        return Err(ValidationError::UnsortedAxis(axis));
    }
    Ok(())
}

/// Checks the manifest and axis invariants.
///
/// Returns the warning-level findings on success.
pub fn validate_manifest(manifest: &Manifest) -> Result<Vec<ManifestWarning>, ValidationError> {
    let vocab = &manifest.class_vocabulary;
    let mut seen = BTreeSet::new();
    for c in vocab {
        if !seen.insert(c.as_str()) {
            return Err(ValidationError::DuplicateClass(c.clone()));
        }
    }
    if vocab.len() < 2 {
        return Err(ValidationError::VocabularyTooSmall(vocab.len()));
    }
    for c in &manifest.zero_shot_classes {
        if !seen.contains(c.as_str()) {
            return Err(ValidationError::ZeroShotNotSubset(c.clone()));
        }
    }

    let axes = &manifest.axes;
    check_strictly_increasing(&axes.zero_shot_levels, "zero_shot_levels")?;
    check_strictly_increasing(&axes.ssim_levels, "ssim_levels")?;
    if axes.weight_nums.is_empty() {
        return Err(ValidationError::EmptyAxis("weight_nums"));
    }
    if axes.weight_nums.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ValidationError::UnsortedAxis("weight_nums"));
    }
    if let Some(&x) = axes
        .zero_shot_levels
        .iter()
        .find(|x| !(**x >= 0.0 && **x <= 1.0))
    {
        return Err(ValidationError::AxisRange {
            axis: "zero_shot_levels",
            value: x.to_string(),
        });
    }
    if let Some(&y) = axes.ssim_levels.iter().find(|y| !(**y > 0.0 && **y <= 1.0)) {
        return Err(ValidationError::AxisRange {
            axis: "ssim_levels",
            value: y.to_string(),
        });
    }
    if axes.weight_nums[0] == 0 {
        return Err(ValidationError::AxisRange {
            axis: "weight_nums",
            value: "0".into(),
        });
    }
    manifest.thresholds.validate()?;

    let mut warnings = Vec::new();
    match (axes.has_no_noise_slice(), axes.has_no_zero_shot_slice()) {
        (false, false) => warnings.push(ManifestWarning::NoSliceAvailable),
        (true, false) => warnings.push(ManifestWarning::SingleSlice("no_noise")),
        (false, true) => warnings.push(ManifestWarning::SingleSlice("no_zero_shot")),
        (true, true) => {}
    }
    Ok(warnings)
}

/// Checks one record against a (valid) manifest.
///
/// The first violated invariant is reported.
pub fn validate_record(record: &PredictionRecord, manifest: &Manifest) -> Result<(), ValidationError> {
    if manifest.class_index(&record.true_class).is_none() {
        return Err(ValidationError::UnknownClass(record.true_class.clone()));
    }
    let expected = manifest.class_vocabulary.len();
    if record.probs.len() != expected {
        return Err(ValidationError::ProbLengthMismatch {
            expected,
            found: record.probs.len(),
        });
    }
    if let Some((index, &value)) = record
        .probs
        .iter()
        .enumerate()
        .find(|(_, p)| !(**p >= 0.0 && **p <= 1.0))
    {
        return Err(ValidationError::ProbRangeError { index, value });
    }
    let sum: f64 = record.probs.iter().sum();
    if (sum - 1.0).abs() > PROB_SUM_TOLERANCE {
        return Err(ValidationError::ProbSumError { sum });
    }
    let axes = &manifest.axes;
    if !axes.zero_shot_levels.contains(&record.zero_shot_pct) {
        return Err(ValidationError::OffGridCoordinate {
            field: "zero_shot_pct",
            value: record.zero_shot_pct.to_string(),
        });
    }
    if !axes.ssim_levels.contains(&record.ssim) {
        return Err(ValidationError::OffGridCoordinate {
            field: "ssim",
            value: record.ssim.to_string(),
        });
    }
    if !axes.weight_nums.contains(&record.weight_num) {
        return Err(ValidationError::OffGridCoordinate {
            field: "weight_num",
            value: record.weight_num.to_string(),
        });
    }
    if let Some(loss) = record.loss {
        if loss.is_nan() || loss < 0.0 {
            return Err(ValidationError::BadLoss(loss));
        }
    }
    Ok(())
}
