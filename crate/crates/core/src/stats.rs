//! Cell statistics over the 3D array and per-dimension marginals.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};

use log::warn;
use serde::Serialize;
use thiserror::Error;

use crate::format::{quantize6, sig6};
use crate::ingest::Grid3D;
use crate::metrics::{cell_class_metrics, ClassMetrics, GapSource, MetricsError};
use crate::record::{CellKey, GridAxes, Manifest};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("no class metrics to summarize")]
    EmptyMetrics,
    #[error("cell {0} has no test records")]
    EmptyCellError(CellKey),
    #[error("cell {key}: {source}")]
    Metrics { key: CellKey, source: MetricsError },
    #[error("grid has no cells")]
    EmptyGrid,
    #[error("grid csv: {0}")]
    Csv(String),
    #[error("grid csv row {row}: {message}")]
    BadRow { row: usize, message: String },
}

/// The six per-cell statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Statistic {
    MeanG,
    SdG,
    P10G,
    MeanK,
    SdK,
    P10K,
}

impl Statistic {
    pub const ALL: [Statistic; 6] = [
        Statistic::MeanG,
        Statistic::SdG,
        Statistic::P10G,
        Statistic::MeanK,
        Statistic::SdK,
        Statistic::P10K,
    ];

    /// The error-rate statistics used by the consistency check.
    pub const ERROR_RATE: [Statistic; 3] = [Statistic::MeanG, Statistic::SdG, Statistic::P10G];

    pub fn name(self) -> &'static str {
        match self {
            Statistic::MeanG => "m_g",
            Statistic::SdG => "sd_g",
            Statistic::P10G => "p10_g",
            Statistic::MeanK => "m_k",
            Statistic::SdK => "sd_k",
            Statistic::P10K => "p10_k",
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Dimension {
    ZeroShot,
    Robust,
    WeightNum,
}

impl Dimension {
    pub const ALL: [Dimension; 3] = [Dimension::ZeroShot, Dimension::Robust, Dimension::WeightNum];

    /// Short name used in output file names.
    pub fn file_stem(self) -> &'static str {
        match self {
            Dimension::ZeroShot => "zeroshot",
            Dimension::Robust => "ssim",
            Dimension::WeightNum => "weightnum",
        }
    }

    pub fn coordinate(self, key: &CellKey) -> f64 {
        match self {
            Dimension::ZeroShot => key.zero_shot_pct,
            Dimension::Robust => key.ssim,
            Dimension::WeightNum => key.weight_num as f64,
        }
    }

    pub fn levels(self, axes: &GridAxes) -> Vec<f64> {
        match self {
            Dimension::ZeroShot => axes.zero_shot_levels.clone(),
            Dimension::Robust => axes.ssim_levels.clone(),
            Dimension::WeightNum => axes.weight_nums.iter().map(|&w| w as f64).collect(),
        }
    }
}

/// Mean, population SD and nearest-rank 10th percentile of one distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
    pub p10: f64,
}

/// 1-based rank of the nearest-rank 10th percentile: `ceil(n / 10)`.
pub fn p10_rank(n: usize) -> usize {
    n.div_ceil(10).max(1)
}

pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let p10 = sorted[p10_rank(sorted.len()) - 1];
    if sorted[0] == sorted[sorted.len() - 1] {
        return Some(Summary {
            mean: sorted[0],
            sd: 0.0,
            p10,
        });
    }
    let n = sorted.len() as f64;
    let mean = sorted.iter().sum::<f64>() / n;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Some(Summary {
        mean,
        sd: var.sqrt(),
        p10,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellStats {
    pub key: CellKey,
    pub m_g: f64,
    pub sd_g: f64,
    pub p10_g: f64,
    pub m_k: f64,
    pub sd_k: f64,
    pub p10_k: f64,
    pub n_classes: usize,
}

impl CellStats {
    pub fn get(&self, stat: Statistic) -> f64 {
        match stat {
            Statistic::MeanG => self.m_g,
            Statistic::SdG => self.sd_g,
            Statistic::P10G => self.p10_g,
            Statistic::MeanK => self.m_k,
            Statistic::SdK => self.sd_k,
            Statistic::P10K => self.p10_k,
        }
    }

    fn map(self, f: impl Fn(f64) -> f64) -> Self {
        CellStats {
            m_g: f(self.m_g),
            sd_g: f(self.sd_g),
            p10_g: f(self.p10_g),
            m_k: f(self.m_k),
            sd_k: f(self.sd_k),
            p10_k: f(self.p10_k),
            ..self
        }
    }
}

/// Summarizes the per-class `g` and `k` distributions of one cell.
pub fn cell_stats(key: CellKey, metrics: &[ClassMetrics], source: GapSource) -> Result<CellStats, StatsError> {
    let g: Vec<f64> = metrics.iter().map(|m| m.g(source)).collect();
    let k: Vec<f64> = metrics.iter().map(|m| m.kappa).collect();
    let sg = summarize(&g).ok_or(StatsError::EmptyMetrics)?;
    let sk = summarize(&k).ok_or(StatsError::EmptyMetrics)?;
    Ok(CellStats {
        key,
        m_g: sg.mean,
        sd_g: sg.sd,
        p10_g: sg.p10,
        m_k: sk.mean,
        sd_k: sk.sd,
        p10_k: sk.p10,
        n_classes: metrics.len(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StatGrid {
    pub axes: GridAxes,
    pub cells: BTreeMap<CellKey, CellStats>,
}

impl StatGrid {
    pub fn new(axes: GridAxes) -> Self {
        StatGrid {
            axes,
            cells: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, stats: CellStats) {
        self.cells.insert(stats.key, stats);
    }

    /// Rounds every statistic to 6 significant digits, the precision of
    /// `grid.csv`.
    pub fn quantized(&self) -> StatGrid {
        StatGrid {
            axes: self.axes.clone(),
            cells: self
                .cells
                .iter()
                .map(|(k, s)| (*k, s.map(quantize6)))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum EmptyCellPolicy {
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BuildOptions {
    pub empty_cells: EmptyCellPolicy,
    pub gap_source: GapSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuiltGrid {
    pub grid: StatGrid,
    /// Cells of the full Cartesian grid that had no test records.
    pub skipped: Vec<CellKey>,
}

/// Computes class metrics and cell statistics for every cell on the axes.
pub fn build_grid(cells: &Grid3D, manifest: &Manifest, opts: BuildOptions) -> Result<BuiltGrid, StatsError> {
    let mut grid = StatGrid::new(manifest.axes.clone());
    let mut skipped = Vec::new();
    for key in manifest.axes.cells() {
        let store = cells.get(&key).filter(|s| !s.test_records.is_empty());
        let Some(store) = store else {
            match opts.empty_cells {
                EmptyCellPolicy::Skip => {
                    skipped.push(key);
                    continue;
                }
                EmptyCellPolicy::Fail => return Err(StatsError::EmptyCellError(key)),
            }
        };
        let metrics =
            cell_class_metrics(store, manifest).map_err(|source| StatsError::Metrics { key, source })?;
        grid.insert(cell_stats(key, &metrics, opts.gap_source)?);
    }
    Ok(BuiltGrid { grid, skipped })
}

/// Per-level sums of each statistic along one dimension.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginalSet {
    pub dimension: Dimension,
    pub levels: Vec<f64>,
    pub m_g: Vec<f64>,
    pub sd_g: Vec<f64>,
    pub p10_g: Vec<f64>,
    pub m_k: Vec<f64>,
    pub sd_k: Vec<f64>,
    pub p10_k: Vec<f64>,
    /// Number of cells summed at each level.
    pub cell_counts: Vec<usize>,
    /// Values were divided by `cell_counts` (display only).
    pub normalized: bool,
    /// Levels summed over different numbers of cells, so raw sums are not comparable.
    pub uneven: bool,
}

impl MarginalSet {
    pub fn series(&self, stat: Statistic) -> &[f64] {
        match stat {
            Statistic::MeanG => &self.m_g,
            Statistic::SdG => &self.sd_g,
            Statistic::P10G => &self.p10_g,
            Statistic::MeanK => &self.m_k,
            Statistic::SdK => &self.sd_k,
            Statistic::P10K => &self.p10_k,
        }
    }

    fn series_mut(&mut self, stat: Statistic) -> &mut Vec<f64> {
        match stat {
            Statistic::MeanG => &mut self.m_g,
            Statistic::SdG => &mut self.sd_g,
            Statistic::P10G => &mut self.p10_g,
            Statistic::MeanK => &mut self.m_k,
            Statistic::SdK => &mut self.sd_k,
            Statistic::P10K => &mut self.p10_k,
        }
    }
}

/// Sums every statistic over the other two dimensions for each level of
/// `dimension`. Cells are visited in key order so results are bit-reproducible.
pub fn marginals(grid: &StatGrid, dimension: Dimension, normalize: bool) -> Result<MarginalSet, StatsError> {
    if grid.cells.is_empty() {
        return Err(StatsError::EmptyGrid);
    }
    let levels = dimension.levels(&grid.axes);
    let n = levels.len();
    let mut set = MarginalSet {
        dimension,
        levels,
        m_g: vec![0.0; n],
        sd_g: vec![0.0; n],
        p10_g: vec![0.0; n],
        m_k: vec![0.0; n],
        sd_k: vec![0.0; n],
        p10_k: vec![0.0; n],
        cell_counts: vec![0; n],
        normalized: normalize,
        uneven: false,
    };
    for (key, cell) in &grid.cells {
        let coord = dimension.coordinate(key);
        let Some(i) = set.levels.iter().position(|&l| l == coord) else {
            continue;
        };
        set.cell_counts[i] += 1;
        for stat in Statistic::ALL {
            set.series_mut(stat)[i] += cell.get(stat);
        }
    }
    set.uneven = set.cell_counts.windows(2).any(|w| w[0] != w[1]);
    if set.uneven {
        warn!(
            "marginal along {:?}: levels cover uneven cell counts {:?}; sums are not directly comparable",
            dimension, set.cell_counts
        );
    }
    if normalize {
        let counts = set.cell_counts.clone();
        for stat in Statistic::ALL {
            for (v, &c) in set.series_mut(stat).iter_mut().zip(&counts) {
                if c > 0 {
                    *v /= c as f64;
                }
            }
        }
    }
    Ok(set)
}

pub const GRID_CSV_HEADER: [&str; 10] = [
    "zero_shot_pct",
    "ssim",
    "weight_num",
    "m_g",
    "sd_g",
    "p10_g",
    "m_k",
    "sd_k",
    "p10_k",
    "n_classes",
];

pub fn write_grid_csv<W: Write>(grid: &StatGrid, out: W) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| StatsError::Csv(e.to_string());
    w.write_record(GRID_CSV_HEADER).map_err(err)?;
    for (key, s) in &grid.cells {
        w.write_record([
            sig6(key.zero_shot_pct),
            sig6(key.ssim),
            key.weight_num.to_string(),
            sig6(s.m_g),
            sig6(s.sd_g),
            sig6(s.p10_g),
            sig6(s.m_k),
            sig6(s.sd_k),
            sig6(s.p10_k),
            s.n_classes.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}

/// Reads a grid CSV. With `axes = None` the axes are the distinct coordinates
/// found in the file.
pub fn read_grid_csv<R: Read>(input: R, axes: Option<GridAxes>) -> Result<StatGrid, StatsError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| StatsError::Csv(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StatsError::Csv(format!("missing column '{name}'")))
    };
    let idx: Vec<usize> = GRID_CSV_HEADER.iter().map(|h| col(h)).collect::<Result<_, _>>()?;
    let mut cells = BTreeMap::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 2;
        let row = row.map_err(|e| StatsError::Csv(e.to_string()))?;
        let field = |j: usize| row.get(idx[j]).unwrap_or("");
        let num = |j: usize| {
            field(j).parse::<f64>().map_err(|e| StatsError::BadRow {
                row: row_no,
                message: format!("{}: {e}", GRID_CSV_HEADER[j]),
            })
        };
        let int = |j: usize| {
            field(j).parse::<u64>().map_err(|e| StatsError::BadRow {
                row: row_no,
                message: format!("{}: {e}", GRID_CSV_HEADER[j]),
            })
        };
        let key = CellKey::new(num(0)?, num(1)?, int(2)?);
        let stats = CellStats {
            key,
            m_g: num(3)?,
            sd_g: num(4)?,
            p10_g: num(5)?,
            m_k: num(6)?,
            sd_k: num(7)?,
            p10_k: num(8)?,
            n_classes: int(9)? as usize,
        };
        if cells.insert(key, stats).is_some() {
            return Err(StatsError::BadRow {
                row: row_no,
                message: format!("duplicate cell {key}"),
            });
        }
    }
    let axes = axes.unwrap_or_else(|| GridAxes::from_keys(cells.keys()));
    if let Some(off) = cells.keys().find(|k| !axes.contains(k)) {
        return Err(StatsError::Csv(format!("cell {off} is not on the axes")));
    }
    Ok(StatGrid { axes, cells })
}

pub fn write_marginals_csv<W: Write>(set: &MarginalSet, out: W) -> Result<(), StatsError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| StatsError::Csv(e.to_string());
    w.write_record(["level", "m_g", "sd_g", "p10_g", "m_k", "sd_k", "p10_k", "n_cells"])
        .map_err(err)?;
    for i in 0..set.levels.len() {
        let level = match set.dimension {
            Dimension::WeightNum => (set.levels[i] as u64).to_string(),
            _ => sig6(set.levels[i]),
        };
        let mut row = vec![level];
        row.extend(Statistic::ALL.iter().map(|&s| sig6(set.series(s)[i])));
        row.push(set.cell_counts[i].to_string());
        w.write_record(&row).map_err(err)?;
    }
    w.flush().map_err(|e| StatsError::Csv(e.to_string()))
}
