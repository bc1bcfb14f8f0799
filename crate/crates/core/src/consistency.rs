//! Consistency between practical error-rate marginals and external
//! complexity measures.
//!
//! Two 2D slices of the grid are used: the no-noise slice (SSIM = 1, free
//! over zero-shot) and the no-zero-shot slice (zero-shot = 0, free over SSIM).
//! Each is reduced to a per-weight-number series `dtr` and compared with a
//! complexity measure through the pairwise sign-error
//!
//! ```text
//! SE = mean over pairs {w, w'} of (1 - sgn(dtr(w) - dtr(w')) * sgn(C(w) - C(w'))) / 2
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::format::sig6;
use crate::record::GridAxes;
use crate::stats::{StatGrid, Statistic};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConsistencyError {
    #[error("slice {0} is unavailable on this grid")]
    SliceUnavailable(Slice),
    #[error("need at least 2 common weight numbers, found {0}")]
    InsufficientKeys(usize),
    #[error("statistic {0} is not an error-rate statistic")]
    NotErrorRate(Statistic),
    #[error("complexity table: {0}")]
    Table(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Slice {
    /// SSIM fixed at 1, summed over zero-shot levels.
    NoNoise,
    /// Zero-shot fixed at 0, summed over SSIM levels.
    NoZeroShot,
}

impl Slice {
    pub const ALL: [Slice; 2] = [Slice::NoNoise, Slice::NoZeroShot];

    pub fn name(self) -> &'static str {
        match self {
            Slice::NoNoise => "no_noise",
            Slice::NoZeroShot => "no_zero_shot",
        }
    }

    pub fn available(self, axes: &GridAxes) -> bool {
        match self {
            Slice::NoNoise => axes.has_no_noise_slice(),
            Slice::NoZeroShot => axes.has_no_zero_shot_slice(),
        }
    }
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SliceMarginal {
    pub slice: Slice,
    pub statistic: Statistic,
    pub values: BTreeMap<u64, f64>,
}

/// Per-weight-number sum of `statistic` over the cells of `slice`.
pub fn slice_marginal(grid: &StatGrid, slice: Slice, statistic: Statistic) -> Result<SliceMarginal, ConsistencyError> {
    if !Statistic::ERROR_RATE.contains(&statistic) {
        return Err(ConsistencyError::NotErrorRate(statistic));
    }
    if !slice.available(&grid.axes) {
        return Err(ConsistencyError::SliceUnavailable(slice));
    }
    let mut values = BTreeMap::new();
    for (key, cell) in &grid.cells {
        let in_slice = match slice {
            Slice::NoNoise => key.ssim == 1.0,
            Slice::NoZeroShot => key.zero_shot_pct == 0.0,
        };
        if in_slice {
            *values.entry(key.weight_num).or_insert(0.0) += cell.get(statistic);
        }
    }
    Ok(SliceMarginal {
        slice,
        statistic,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignError {
    pub se_g: f64,
    pub n_pairs: usize,
    /// Pairs where either difference is exactly zero.
    pub n_tie_pairs: usize,
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// One unordered pair of weight numbers with both differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairTerm {
    pub w: u64,
    pub w_prime: u64,
    pub dtr_w: f64,
    pub dtr_w_prime: f64,
    pub c_w: f64,
    pub c_w_prime: f64,
    pub term: f64,
}

/// All unordered pairs of distinct common keys with their sign-error terms.
pub fn pair_terms(dtr: &BTreeMap<u64, f64>, complexity: &BTreeMap<u64, f64>) -> Vec<PairTerm> {
    let common: Vec<(u64, f64, f64)> = dtr
        .iter()
        .filter_map(|(w, d)| complexity.get(w).map(|c| (*w, *d, *c)))
        .collect();
    let mut out = Vec::new();
    for i in 0..common.len() {
        for j in i + 1..common.len() {
            let (w, d1, c1) = common[i];
            let (w2, d2, c2) = common[j];
            out.push(PairTerm {
                w,
                w_prime: w2,
                dtr_w: d1,
                dtr_w_prime: d2,
                c_w: c1,
                c_w_prime: c2,
                term: 0.5 * (1.0 - sgn(d1 - d2) * sgn(c1 - c2)),
            });
        }
    }
    out
}

pub fn sign_error(dtr: &BTreeMap<u64, f64>, complexity: &BTreeMap<u64, f64>) -> Result<SignError, ConsistencyError> {
    let terms = pair_terms(dtr, complexity);
    if terms.is_empty() {
        let common = dtr.keys().filter(|w| complexity.contains_key(w)).count();
        return Err(ConsistencyError::InsufficientKeys(common));
    }
    let n_tie_pairs = terms
        .iter()
        .filter(|t| t.dtr_w == t.dtr_w_prime || t.c_w == t.c_w_prime)
        .count();
    let total: f64 = terms.iter().map(|t| t.term).sum();
    Ok(SignError {
        se_g: total / terms.len() as f64,
        n_pairs: terms.len(),
        n_tie_pairs,
    })
}

/// Externally computed complexity measures, keyed by measure then weight number.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComplexityTable {
    pub measures: BTreeMap<String, BTreeMap<u64, f64>>,
    pub source_note: String,
}

impl ComplexityTable {
    /// Reads `measure_name,weight_num,value` rows.
    pub fn read_csv<R: Read>(input: R, source_note: &str) -> Result<Self, ConsistencyError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| ConsistencyError::Table(e.to_string()))?
            .clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| ConsistencyError::Table(format!("missing column '{name}'")))
        };
        let (ci_name, ci_w, ci_v) = (col("measure_name")?, col("weight_num")?, col("value")?);
        let mut table = ComplexityTable {
            measures: BTreeMap::new(),
            source_note: source_note.to_string(),
        };
        for (i, row) in rdr.records().enumerate() {
            let row = row.map_err(|e| ConsistencyError::Table(e.to_string()))?;
            let bad = |what: &str| ConsistencyError::Table(format!("row {}: bad {what}", i + 2));
            let name = row.get(ci_name).ok_or_else(|| bad("measure_name"))?.to_string();
            let w: u64 = row
                .get(ci_w)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("weight_num"))?;
            let v: f64 = row
                .get(ci_v)
                .and_then(|s| s.parse().ok())
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| bad("value"))?;
            if table.measures.entry(name.clone()).or_default().insert(w, v).is_some() {
                return Err(ConsistencyError::Table(format!(
                    "row {}: duplicate ({name}, {w})",
                    i + 2
                )));
            }
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["measure_name", "weight_num", "value"])?;
        for (name, values) in &self.measures {
            for (wn, v) in values {
                w.write_record([name.clone(), wn.to_string(), v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Every measure must cover at least two weight numbers on the axes.
    pub fn validate(&self, axes: &GridAxes) -> Result<(), ConsistencyError> {
        if self.measures.is_empty() {
            return Err(ConsistencyError::Table("no measures".into()));
        }
        for (name, values) in &self.measures {
            let on_axis = values.keys().filter(|w| axes.weight_nums.contains(w)).count();
            if on_axis < 2 {
                return Err(ConsistencyError::Table(format!(
                    "measure '{name}' covers {on_axis} weight numbers on the axes, need 2"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyEntry {
    pub measure_name: String,
    pub slice: Slice,
    pub statistic: Statistic,
    pub se_g: f64,
    pub n_pairs: usize,
    pub n_tie_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkippedEntry {
    pub measure_name: String,
    pub slice: Slice,
    pub statistic: Option<Statistic>,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub entries: Vec<ConsistencyEntry>,
    pub skipped: Vec<SkippedEntry>,
    /// Fraction of entries with `se_g > 0.5`; 0 when there are no entries.
    pub summary: f64,
}

impl ConsistencyReport {
    pub fn mismatches(&self) -> usize {
        self.entries.iter().filter(|e| e.se_g > 0.5).count()
    }
}

/// Sign-error for every (measure, slice, error-rate statistic) combination.
/// Unavailable slices and measures with too few shared keys are recorded in
/// `skipped` rather than failing the whole report.
pub fn consistency_report(grid: &StatGrid, table: &ComplexityTable) -> ConsistencyReport {
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for (name, measure) in &table.measures {
        for slice in Slice::ALL {
            if !slice.available(&grid.axes) {
                skipped.push(SkippedEntry {
                    measure_name: name.clone(),
                    slice,
                    statistic: None,
                    reason: ConsistencyError::SliceUnavailable(slice).to_string(),
                });
                continue;
            }
            for statistic in Statistic::ERROR_RATE {
                let outcome = slice_marginal(grid, slice, statistic)
                    .and_then(|m| sign_error(&m.values, measure));
                match outcome {
                    Ok(se) => entries.push(ConsistencyEntry {
                        measure_name: name.clone(),
                        slice,
                        statistic,
                        se_g: se.se_g,
                        n_pairs: se.n_pairs,
                        n_tie_pairs: se.n_tie_pairs,
                    }),
                    Err(e) => skipped.push(SkippedEntry {
                        measure_name: name.clone(),
                        slice,
                        statistic: Some(statistic),
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
    let summary = if entries.is_empty() {
        0.0
    } else {
        entries.iter().filter(|e| e.se_g > 0.5).count() as f64 / entries.len() as f64
    };
    ConsistencyReport {
        entries,
        skipped,
        summary,
    }
}

pub fn write_report_csv<W: Write>(report: &ConsistencyReport, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["measure_name", "slice", "statistic", "se_g", "n_pairs", "n_tie_pairs"])?;
    for e in &report.entries {
        w.write_record([
            e.measure_name.clone(),
            e.slice.name().to_string(),
            e.statistic.name().to_string(),
            sig6(e.se_g),
            e.n_pairs.to_string(),
            e.n_tie_pairs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-pair data behind every entry (dtr and C values of both members).
pub fn write_pairs_csv<W: Write>(grid: &StatGrid, table: &ComplexityTable, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "measure_name",
        "slice",
        "statistic",
        "w",
        "w_prime",
        "dtr_w",
        "dtr_w_prime",
        "c_w",
        "c_w_prime",
        "term",
    ])?;
    for (name, measure) in &table.measures {
        for slice in Slice::ALL {
            for statistic in Statistic::ERROR_RATE {
                let Ok(m) = slice_marginal(grid, slice, statistic) else {
                    continue;
                };
                for t in pair_terms(&m.values, measure) {
                    w.write_record([
                        name.clone(),
                        slice.name().to_string(),
                        statistic.name().to_string(),
                        t.w.to_string(),
                        t.w_prime.to_string(),
                        sig6(t.dtr_w),
                        sig6(t.dtr_w_prime),
                        sig6(t.c_w),
                        sig6(t.c_w_prime),
                        sig6(t.term),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
