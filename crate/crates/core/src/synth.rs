//! Deterministic synthetic prediction records with planted structure.
//!
//! # Random stream
//!
//! Every cell draws from its own ChaCha8 stream (`rand_chacha::ChaCha8Rng`)
//! seeded with `mix(seed, x.to_bits(), y.to_bits(), z)`, where `mix` chains
//! the SplitMix64 finalizer. Only `next_u64` is consumed; bounded integers
//! use rejection sampling on the top of the `u64` range, and shuffles are
//! Fisher-Yates from the last index down. Nothing depends on the `rand`
//! crate's distribution code, so the stream can be reproduced bit-for-bit
//! elsewhere.
//!
//! # Construction
//!
//! Per class and cell, exactly `round(e * n)` samples are misclassified and
//! `round(f * n)` are near-ties, of which `round(h * ties)` are
//! high-confidence. Probability vectors put the target mass on the top class
//! (and its tie partner) and spread the remainder uniformly.

use std::collections::BTreeMap;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::Grid3D;
use crate::metrics::{classify, ConflictRule, GapSource};
use crate::record::{validate_manifest, CellKey, GridAxes, KappaThresholds, Manifest, PredictionRecord, Split};
use crate::stats::{build_grid, BuildOptions, StatGrid};
use crate::tradeoff::{find_tradeoff, objective, TradeOffConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("planted trade-off cannot be made the unique minimum: {0}")]
    InfeasiblePlant(String),
}

/// Monotone error trends along each sweep dimension.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ErrorProfile {
    pub base_error: f64,
    /// Added error per unit of SSIM decrement (1 - ssim).
    pub ssim_slope: f64,
    /// Added error per unit of zero-shot fraction.
    pub zero_shot_slope: f64,
    /// Added error per unit of ln(weight_num / smallest weight_num).
    pub log_weight_slope: f64,
}

impl Default for ErrorProfile {
    fn default() -> Self {
        ErrorProfile {
            base_error: 0.1,
            ssim_slope: 0.5,
            zero_shot_slope: 0.4,
            log_weight_slope: -0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConflictProfile {
    /// Fraction of samples emitted as two-way near-ties.
    pub near_tie_fraction: f64,
    /// Share of near-ties whose top probability reaches `tau_high`.
    pub high_confidence_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub axes: GridAxes,
    pub n_classes: usize,
    pub samples_per_class_per_cell: usize,
    #[serde(default)]
    pub error_profile: ErrorProfile,
    #[serde(default)]
    pub conflict_profile: ConflictProfile,
    #[serde(default)]
    pub planted_tradeoff: Option<CellKey>,
    /// Minimum error advantage of the planted cell over every other cell.
    #[serde(default = "default_plant_margin")]
    pub plant_margin: f64,
    #[serde(default)]
    pub thresholds: KappaThresholds,
}

fn default_plant_margin() -> f64 {
    0.1
}

impl SynthSpec {
    /// A small 3x3x4 demo sweep with a planted trade-off point.
    pub fn demo() -> Self {
        let mut axes = GridAxes::new(
            vec![0.0, 0.25, 0.5],
            vec![0.7, 0.85, 1.0],
            vec![5_000_000, 10_000_000, 20_000_000, 40_000_000],
        );
        for (i, w) in axes.weight_nums.clone().into_iter().enumerate() {
            axes.model_ids.insert(w, format!("toy-{i}"));
        }
        SynthSpec {
            seed: 2024,
            axes,
            n_classes: 4,
            samples_per_class_per_cell: 200,
            error_profile: ErrorProfile::default(),
            conflict_profile: ConflictProfile {
                near_tie_fraction: 0.1,
                high_confidence_share: 0.5,
            },
            planted_tradeoff: Some(CellKey::new(0.25, 0.85, 10_000_000)),
            plant_margin: default_plant_margin(),
            thresholds: KappaThresholds::default(),
        }
    }

    pub fn manifest(&self) -> Manifest {
        let class_vocabulary: Vec<String> = (0..self.n_classes).map(class_label).collect();
        let zero_shot_classes = class_vocabulary[self.n_classes - self.n_classes / 2..].to_vec();
        Manifest {
            class_vocabulary,
            zero_shot_classes,
            axes: self.axes.clone(),
            thresholds: self.thresholds,
            dataset_name: "synthetic".into(),
            notes: format!("generated with seed {}", self.seed),
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        let invalid = |m: String| Err(SynthError::InvalidSpec(m));
        if self.n_classes < 2 {
            return invalid(format!("n_classes must be at least 2, got {}", self.n_classes));
        }
        if self.samples_per_class_per_cell == 0 {
            return invalid("samples_per_class_per_cell must be positive".into());
        }
        let c = &self.conflict_profile;
        for (name, v) in [
            ("near_tie_fraction", c.near_tie_fraction),
            ("high_confidence_share", c.high_confidence_share),
            ("plant_margin", self.plant_margin),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return invalid(format!("{name} must lie in [0, 1], got {v}"));
            }
        }
        if c.near_tie_fraction > 0.0 && self.n_classes < 3 {
            return invalid("near-ties need at least 3 classes".into());
        }
        validate_manifest(&self.manifest()).map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        if let Some(p) = &self.planted_tradeoff {
            if !self.axes.contains(p) {
                return invalid(format!("planted trade-off {p} is not on the axes"));
            }
        }
        Ok(())
    }

    /// Profile error at a cell before plant shaping, clamped to [0, 1].
    pub fn profile_error(&self, key: &CellKey) -> f64 {
        let p = &self.error_profile;
        let z_min = self.axes.weight_nums.first().copied().unwrap_or(1).max(1) as f64;
        let e = p.base_error
            + p.ssim_slope * (1.0 - key.ssim)
            + p.zero_shot_slope * key.zero_shot_pct
            + p.log_weight_slope * (key.weight_num as f64 / z_min).ln();
        e.clamp(0.0, 1.0)
    }

    /// Target error at every cell after plant shaping.
    pub fn target_errors(&self) -> Result<BTreeMap<CellKey, f64>, SynthError> {
        let mut targets: BTreeMap<CellKey, f64> =
            self.axes.cells().into_iter().map(|k| (k, self.profile_error(&k))).collect();
        if let Some(plant) = self.planted_tradeoff {
            let floor = targets[&plant] + self.plant_margin;
            if floor > 1.0 {
                return Err(SynthError::InfeasiblePlant(format!(
                    "planted error {} plus margin {} exceeds 1",
                    targets[&plant], self.plant_margin
                )));
            }
            for (k, e) in targets.iter_mut() {
                if *k != plant {
                    *e = e.max(floor);
                }
            }
        }
        Ok(targets)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub manifest: Manifest,
    pub records: Vec<PredictionRecord>,
}

impl SynthOutput {
    /// JSON Lines text of all records.
    pub fn records_jsonl(&self) -> String {
        let mut s = String::new();
        for r in &self.records {
            s.push_str(&r.to_json_line());
            s.push('\n');
        }
        s
    }
}

fn class_label(i: usize) -> String {
    format!("c{i:02}")
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of one cell's stream.
pub fn cell_seed(seed: u64, key: &CellKey) -> u64 {
    let mut h = splitmix64(seed);
    for part in [key.zero_shot_pct.to_bits(), key.ssim.to_bits(), key.weight_num] {
        h = splitmix64(h ^ part);
    }
    h
}

struct CellRng(ChaCha8Rng);

impl CellRng {
    fn new(seed: u64) -> Self {
        CellRng(ChaCha8Rng::seed_from_u64(seed))
    }

    /// Uniform integer in `0..n` by rejection sampling.
    fn below(&mut self, n: usize) -> usize {
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let r = self.0.next_u64();
            if r < zone {
                return (r % n) as usize;
            }
        }
    }

    fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum TieKind {
    None,
    High,
    Low,
}

/// Probability vector whose argmax is `top`; `partner` is the tie partner when
/// `tie` is not `None`.
fn build_probs(k: usize, top: usize, partner: usize, tie: TieKind, th: &KappaThresholds) -> Vec<f64> {
    let (top_mass, partner_mass) = match tie {
        TieKind::None => (0.9, None),
        TieKind::High => (th.tau_high, Some(th.tau_high - th.delta_tie / 2.0)),
        TieKind::Low => {
            let m = th.tau_high - th.delta_tie / 2.0;
            (m, Some(m - th.delta_tie / 2.0))
        }
    };
    let used = top_mass + partner_mass.unwrap_or(0.0);
    let others = k - 1 - usize::from(partner_mass.is_some());
    let rest = if others > 0 { (1.0 - used) / others as f64 } else { 0.0 };
    let mut p = vec![rest; k];
    p[top] = top_mass;
    if let Some(pm) = partner_mass {
        p[partner] = pm;
    }
    p
}

fn expected_rule(tie: TieKind, correct: bool) -> ConflictRule {
    match (tie, correct) {
        (TieKind::High, _) => ConflictRule::HighConflict,
        (TieKind::Low, _) => ConflictRule::LowConflict,
        (TieKind::None, true) => ConflictRule::DecisiveIn,
        (TieKind::None, false) => ConflictRule::Other,
    }
}

fn round_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64).round() as usize).min(n)
}

/// Generates the records and manifest described by `spec`.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let manifest = spec.manifest();
    let targets = spec.target_errors()?;
    let th = spec.thresholds;
    let k = spec.n_classes;
    let n = spec.samples_per_class_per_cell;
    let cp = spec.conflict_profile;

    // Check once that the constructed vectors land in the intended rules.
    for tie in [TieKind::None, TieKind::High, TieKind::Low] {
        if tie != TieKind::None && cp.near_tie_fraction == 0.0 {
            continue;
        }
        let p = build_probs(k, 0, 1, tie, &th);
        let sum: f64 = p.iter().sum();
        let ok = p.iter().all(|v| (0.0..=1.0).contains(v))
            && (sum - 1.0).abs() <= 1e-9
            && classify(&p, None, 0, &th) == expected_rule(tie, true)
            && (k < 3 || classify(&p, None, k - 1, &th) == ConflictRule::Other);
        if !ok {
            return Err(SynthError::InvalidSpec(format!(
                "thresholds {th:?} cannot host {tie:?} samples with {k} classes"
            )));
        }
    }

    let mut records = Vec::with_capacity(targets.len() * k * n);
    for (cell_index, (key, &error)) in targets.iter().enumerate() {
        let mut rng = CellRng::new(cell_seed(spec.seed, key));
        let n_wrong = round_count(error, n);
        let n_tie = round_count(cp.near_tie_fraction, n);
        let n_high = round_count(cp.high_confidence_share, n_tie);
        for class in 0..k {
            let mut wrong: Vec<bool> = (0..n).map(|i| i < n_wrong).collect();
            rng.shuffle(&mut wrong);
            let mut ties: Vec<TieKind> = (0..n)
                .map(|i| {
                    if i < n_high {
                        TieKind::High
                    } else if i < n_tie {
                        TieKind::Low
                    } else {
                        TieKind::None
                    }
                })
                .collect();
            rng.shuffle(&mut ties);
            for s in 0..n {
                // Any class other than the true one, uniformly.
                let mut other = rng.below(k - 1);
                if other >= class {
                    other += 1;
                }
                let (top, partner) = if wrong[s] { (other, class) } else { (class, other) };
                let probs = build_probs(k, top, partner, ties[s], &th);
                records.push(PredictionRecord {
                    sample_id: format!("{cell_index}-{class}-{s}"),
                    true_class: class_label(class),
                    split: Split::Test,
                    zero_shot_pct: key.zero_shot_pct,
                    ssim: key.ssim,
                    weight_num: key.weight_num,
                    probs,
                    loss: None,
                });
            }
        }
    }

    let out = SynthOutput { manifest, records };
    if let Some(plant) = spec.planted_tradeoff {
        verify_plant(&out, plant)?;
    }
    Ok(out)
}

/// Runs the analysis pipeline on generated records and checks that `plant`
/// is the unique objective minimum and the selected trade-off point, both at
/// full precision and at report precision.
fn verify_plant(out: &SynthOutput, plant: CellKey) -> Result<(), SynthError> {
    let mut cells = Grid3D::default();
    for r in &out.records {
        cells.insert(r.clone());
    }
    let opts = BuildOptions {
        gap_source: GapSource::Gap,
        ..Default::default()
    };
    let built = build_grid(&cells, &out.manifest, opts)
        .map_err(|e| SynthError::InfeasiblePlant(e.to_string()))?;
    let cfg = TradeOffConfig::default();
    for grid in [built.grid.clone(), built.grid.quantized()] {
        check_unique_minimum(&grid, plant, cfg.objective_tolerance)?;
        let point = find_tradeoff(&grid, &cfg).map_err(|e| SynthError::InfeasiblePlant(e.to_string()))?;
        if point.key != plant {
            return Err(SynthError::InfeasiblePlant(format!(
                "pipeline selected {} instead of {plant}",
                point.key
            )));
        }
    }
    Ok(())
}

fn check_unique_minimum(grid: &StatGrid, plant: CellKey, tolerance: f64) -> Result<(), SynthError> {
    let planted = grid
        .cells
        .get(&plant)
        .map(objective)
        .ok_or_else(|| SynthError::InfeasiblePlant(format!("no statistics for {plant}")))?;
    for (key, cell) in &grid.cells {
        if *key != plant && objective(cell) <= planted + tolerance {
            return Err(SynthError::InfeasiblePlant(format!(
                "cell {key} reaches objective {} against planted {planted}",
                objective(cell)
            )));
        }
    }
    Ok(())
}
