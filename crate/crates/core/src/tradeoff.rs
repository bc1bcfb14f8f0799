//! Trade-off point search over a [`StatGrid`].
//!
//! Stage 1 minimizes the sum of the six cell statistics over the feasible
//! cells. Stage 2 picks, among cells within `objective_tolerance` of that
//! minimum, the one with the smallest bound vector
//! `(1 - x, y, z / z_max)`, i.e. the largest zero-shot fraction, the lowest
//! SSIM and the smallest model. Remaining ties go to the larger `x`, then the
//! smaller `y`, then the smaller `z`.
//!
//! The grid is finite, so both stages are solved by enumeration.

use std::cmp::Ordering;
use std::io::Write;

use serde::Serialize;
use thiserror::Error;

use crate::format::{model_size, sig6};
use crate::record::CellKey;
use crate::stats::{CellStats, StatGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TradeOffError {
    #[error("no cell satisfies zero_shot >= {zero_shot_min}, ssim >= {robust_min}, weight_num <= {weight_num_max}")]
    EmptyFeasibleSet {
        zero_shot_min: f64,
        robust_min: f64,
        weight_num_max: String,
    },
    #[error("objective_tolerance must be non-negative, got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TradeOffConfig {
    pub zero_shot_min: f64,
    pub robust_min: f64,
    /// `None` leaves model size unconstrained.
    pub weight_num_max: Option<u64>,
    pub objective_tolerance: f64,
}

impl Default for TradeOffConfig {
    fn default() -> Self {
        TradeOffConfig {
            zero_shot_min: 0.0,
            robust_min: 0.0,
            weight_num_max: None,
            objective_tolerance: 1e-9,
        }
    }
}

impl TradeOffConfig {
    pub fn admits(&self, key: &CellKey) -> bool {
        key.zero_shot_pct >= self.zero_shot_min
            && key.ssim >= self.robust_min
            && self.weight_num_max.is_none_or(|max| key.weight_num <= max)
    }

    fn empty_error(&self) -> TradeOffError {
        TradeOffError::EmptyFeasibleSet {
            zero_shot_min: self.zero_shot_min,
            robust_min: self.robust_min,
            weight_num_max: self
                .weight_num_max
                .map_or_else(|| "inf".to_string(), |w| w.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TradeOffPoint {
    pub key: CellKey,
    pub objective_value: f64,
    /// `m_g + sd_g + p10_g` of the selected cell.
    pub generalization_bound: f64,
    /// `m_k + sd_k + p10_k` of the selected cell.
    pub diversity_bound: f64,
    pub ssim_lower_bound: f64,
    pub zero_shot_upper_bound: f64,
    pub model_size_lower_bound: u64,
    pub tie_set_size: usize,
    /// `(1 - x, y, z / z_max)` of the selected cell.
    pub c_vector: [f64; 3],
    pub stats: CellStats,
    pub model_id: Option<String>,
}

/// Sum of the six statistics.
pub fn objective(cell: &CellStats) -> f64 {
    cell.m_g + cell.sd_g + cell.p10_g + cell.m_k + cell.sd_k + cell.p10_k
}

/// Cells satisfying all three bounds, in key order.
pub fn feasible_set(grid: &StatGrid, cfg: &TradeOffConfig) -> Result<Vec<CellKey>, TradeOffError> {
    let keys: Vec<CellKey> = grid.cells.keys().filter(|k| cfg.admits(k)).copied().collect();
    if keys.is_empty() {
        return Err(cfg.empty_error());
    }
    Ok(keys)
}

/// The bound vector `(1 - x, y, z / z_max)`.
pub fn bound_vector(key: &CellKey, z_max: u64) -> [f64; 3] {
    [
        1.0 - key.zero_shot_pct,
        key.ssim,
        key.weight_num as f64 / z_max as f64,
    ]
}

fn norm_sq(c: &[f64; 3]) -> f64 {
    c[0] * c[0] + c[1] * c[1] + c[2] * c[2]
}

/// Lexicographic preference: larger x, then smaller y, then smaller z.
fn lexicographic(a: &CellKey, b: &CellKey) -> Ordering {
    b.zero_shot_pct
        .total_cmp(&a.zero_shot_pct)
        .then(a.ssim.total_cmp(&b.ssim))
        .then(a.weight_num.cmp(&b.weight_num))
}

pub fn find_tradeoff(grid: &StatGrid, cfg: &TradeOffConfig) -> Result<TradeOffPoint, TradeOffError> {
    if cfg.objective_tolerance.is_nan() || cfg.objective_tolerance < 0.0 {
        return Err(TradeOffError::BadTolerance(cfg.objective_tolerance));
    }
    let feasible = feasible_set(grid, cfg)?;
    let scored: Vec<(&CellStats, f64)> = feasible
        .iter()
        .map(|k| {
            let cell = &grid.cells[k];
            (cell, objective(cell))
        })
        .collect();
    let best = scored.iter().map(|(_, o)| *o).fold(f64::INFINITY, f64::min);
    let limit = best + cfg.objective_tolerance;
    let z_max = grid
        .axes
        .max_weight_num()
        .into_iter()
        .chain(grid.cells.keys().map(|k| k.weight_num))
        .max()
        .unwrap_or(1)
        .max(1);

    let tie_set: Vec<&(&CellStats, f64)> = scored.iter().filter(|(_, o)| *o <= limit).collect();
    let (winner, value) = tie_set
        .iter()
        .map(|(cell, o)| (*cell, *o, norm_sq(&bound_vector(&cell.key, z_max))))
        .min_by(|a, b| a.2.total_cmp(&b.2).then_with(|| lexicographic(&a.0.key, &b.0.key)))
        .map(|(cell, o, _)| (cell, o))
        .expect("tie set holds the minimizer");

    let key = winner.key;
    Ok(TradeOffPoint {
        key,
        objective_value: value,
        generalization_bound: winner.m_g + winner.sd_g + winner.p10_g,
        diversity_bound: winner.m_k + winner.sd_k + winner.p10_k,
        ssim_lower_bound: key.ssim,
        zero_shot_upper_bound: key.zero_shot_pct,
        model_size_lower_bound: key.weight_num,
        tie_set_size: tie_set.len(),
        c_vector: bound_vector(&key, z_max),
        stats: *winner,
        model_id: grid.axes.model_label(key.weight_num).map(str::to_string),
    })
}

/// Row labels of the trade-off table, in output order.
pub const TABLE_ROWS: [&str; 5] = [
    "GENERALIZATION BOUND",
    "DIVERSITY BOUND",
    "SSIM(lower bound)",
    "ZEROSHOT(upper bound)",
    "MODEL SIZE(lower bound)",
];

/// Writes the trade-off point as a two-column CSV: the five table rows first,
/// then the raw statistics and search details.
pub fn write_tradeoff_csv<W: Write>(point: &TradeOffPoint, out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let s = &point.stats;
    let label = point.model_id.clone().unwrap_or_else(|| "-".to_string());
    let rows: Vec<(&str, String)> = vec![
        ("MODEL TYPE", label),
        (TABLE_ROWS[0], sig6(point.generalization_bound)),
        (TABLE_ROWS[1], sig6(point.diversity_bound)),
        (TABLE_ROWS[2], sig6(point.ssim_lower_bound)),
        (TABLE_ROWS[3], sig6(point.zero_shot_upper_bound)),
        (TABLE_ROWS[4], model_size(point.model_size_lower_bound)),
        ("WEIGHT NUM", point.model_size_lower_bound.to_string()),
        ("OBJECTIVE", sig6(point.objective_value)),
        ("M_G", sig6(s.m_g)),
        ("SD_G", sig6(s.sd_g)),
        ("P10_G", sig6(s.p10_g)),
        ("M_K", sig6(s.m_k)),
        ("SD_K", sig6(s.sd_k)),
        ("P10_K", sig6(s.p10_k)),
        ("TIE SET SIZE", point.tie_set_size.to_string()),
        ("C1", sig6(point.c_vector[0])),
        ("C2", sig6(point.c_vector[1])),
        ("C3", sig6(point.c_vector[2])),
    ];
    w.write_record(["row", "value"])?;
    for (name, value) in rows {
        w.write_record([name, value.as_str()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::record::GridAxes;
    use proptest::prelude::*;

    fn stats(key: CellKey, obj: f64) -> CellStats {
        CellStats {
            key,
            m_g: obj,
            sd_g: 0.0,
            p10_g: 0.0,
            m_k: 0.0,
            sd_k: 0.0,
            p10_k: 0.0,
            n_classes: 1,
        }
    }

    fn grid_222(objs: [f64; 8]) -> StatGrid {
        let axes = GridAxes::new(vec![0.0, 0.5], vec![0.8, 1.0], vec![5, 10]);
        let mut g = StatGrid::new(axes.clone());
        for (key, obj) in axes.cells().into_iter().zip(objs) {
            g.insert(stats(key, obj));
        }
        g
    }

    #[test]
    fn objective_sums_six_fields() {
        let mut s = stats(CellKey::new(0.0, 1.0, 1), 0.0);
        assert_eq!(objective(&s), 0.0);
        s.m_g = 0.1;
        s.sd_g = 0.2;
        s.p10_g = 0.3;
        s.m_k = 0.4;
        s.sd_k = 0.5;
        s.p10_k = 0.6;
        assert!((objective(&s) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn feasible_set_filters() {
        let g = grid_222([1.0; 8]);
        assert_eq!(feasible_set(&g, &TradeOffConfig::default()).unwrap().len(), 8);
        let cfg = TradeOffConfig { zero_shot_min: 0.9, ..Default::default() };
        assert!(matches!(feasible_set(&g, &cfg), Err(TradeOffError::EmptyFeasibleSet { .. })));
        let cfg = TradeOffConfig {
            zero_shot_min: 0.5,
            robust_min: 0.9,
            weight_num_max: Some(9),
            objective_tolerance: 0.0,
        };
        // Only (0.5, 1.0, 5) satisfies x >= 0.5, y >= 0.9 and z <= 9.
        assert_eq!(feasible_set(&g, &cfg).unwrap(), vec![CellKey::new(0.5, 1.0, 5)]);
        let cfg = TradeOffConfig { weight_num_max: Some(5), ..Default::default() };
        let expected: Vec<_> = g.axes.cells().into_iter().filter(|k| k.weight_num == 5).collect();
        assert_eq!(feasible_set(&g, &cfg).unwrap(), expected);
    }

    #[test]
    fn single_cell_grid() {
        let key = CellKey::new(0.0, 1.0, 5);
        let mut g = StatGrid::new(GridAxes::new(vec![0.0], vec![1.0], vec![5]));
        g.insert(stats(key, 0.7));
        let p = find_tradeoff(&g, &TradeOffConfig::default()).unwrap();
        assert_eq!(p.key, key);
        assert_eq!(p.tie_set_size, 1);
        assert_eq!(p.c_vector, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn stage_one_dominates_coordinates() {
        // The (0, 1, 10) cell has the worst bound vector but the best objective.
        let mut objs = [2.0; 8];
        objs[3] = 1.0;
        let g = grid_222(objs);
        let p = find_tradeoff(&g, &TradeOffConfig { objective_tolerance: 0.0, ..Default::default() }).unwrap();
        assert_eq!(p.key, CellKey::new(0.0, 1.0, 10));
        assert_eq!(p.objective_value, 1.0);
    }

    #[test]
    fn infinite_tolerance_uses_norm_only() {
        let g = grid_222([3.0, 1.0, 2.0, 0.5, 9.0, 4.0, 8.0, 7.0]);
        let cfg = TradeOffConfig { objective_tolerance: f64::INFINITY, ..Default::default() };
        let p = find_tradeoff(&g, &cfg).unwrap();
        // |(0.5, 0.8, 0.5)|^2 is the smallest bound vector.
        assert_eq!(p.key, CellKey::new(0.5, 0.8, 5));
        assert_eq!(p.tie_set_size, 8);
    }

    #[test]
    fn lexicographic_breaks_exact_norm_ties() {
        // (1 - 0.6)^2 + 0.6^2 == (1 - 0.4)^2 + 0.4^2, so the norm ties and
        // the larger zero-shot fraction wins.
        let axes = GridAxes::new(vec![0.4, 0.6], vec![0.4, 0.6], vec![1]);
        let mut g = StatGrid::new(axes);
        g.insert(stats(CellKey::new(0.4, 0.4, 1), 0.0));
        g.insert(stats(CellKey::new(0.6, 0.6, 1), 0.0));
        let p = find_tradeoff(&g, &TradeOffConfig::default()).unwrap();
        assert_eq!(p.key, CellKey::new(0.6, 0.6, 1));
    }

    #[test]
    fn table_rows_render() {
        let key = CellKey::new(0.175, 0.779, 167_000_000);
        let mut g = StatGrid::new(GridAxes::new(vec![0.175], vec![0.779], vec![167_000_000]));
        g.insert(CellStats {
            key,
            m_g: 0.2,
            sd_g: 0.1,
            p10_g: 0.064,
            m_k: 0.05,
            sd_k: 0.02,
            p10_k: 0.017,
            n_classes: 3,
        });
        let p = find_tradeoff(&g, &TradeOffConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_tradeoff_csv(&p, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("GENERALIZATION BOUND,0.364\n"));
        assert!(text.contains("DIVERSITY BOUND,0.087\n"));
        assert!(text.contains("MODEL SIZE(lower bound),167M\n"));
    }

    proptest! {
        #[test]
        fn winner_feasible_and_optimal(objs in prop::array::uniform8(0.0f64..3.0), zs in 0usize..3, ys in 0usize..3, tol in 0.0f64..0.5) {
            let g = grid_222(objs);
            let cfg = TradeOffConfig {
                zero_shot_min: [0.0, 0.5, 0.6][zs],
                robust_min: [0.0, 0.8, 1.0][ys],
                weight_num_max: None,
                objective_tolerance: tol,
            };
            match find_tradeoff(&g, &cfg) {
                Ok(p) => {
                    prop_assert!(cfg.admits(&p.key));
                    let min = feasible_set(&g, &cfg).unwrap().iter().map(|k| objective(&g.cells[k])).fold(f64::INFINITY, f64::min);
                    prop_assert!(p.objective_value <= min + tol);
                    prop_assert_eq!(p.objective_value, objective(&g.cells[&p.key]));
                }
                Err(_) => prop_assert!(zs == 2),
            }
        }

        #[test]
        fn tightening_weight_bound_respected(objs in prop::array::uniform8(0.0f64..3.0)) {
            let g = grid_222(objs);
            let cfg = TradeOffConfig { weight_num_max: Some(5), ..Default::default() };
            prop_assert!(find_tradeoff(&g, &cfg).unwrap().key.weight_num <= 5);
        }

        #[test]
        fn independent_of_insertion_order(objs in prop::array::uniform8(0.0f64..3.0)) {
            let g = grid_222(objs);
            let mut reversed = StatGrid::new(g.axes.clone());
            for s in g.cells.values().rev() {
                reversed.insert(*s);
            }
            let cfg = TradeOffConfig::default();
            prop_assert_eq!(find_tradeoff(&g, &cfg).unwrap(), find_tradeoff(&reversed, &cfg).unwrap());
        }
    }
}
