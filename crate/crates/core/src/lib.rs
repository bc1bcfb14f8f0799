//! Generalization benchmarking over a zero-shot x robustness x model-size grid.
//!
//! Prediction records are ingested into a sparse 3-D grid of cells. Each cell
//! gets per-class error, generalization gap and Cohen's kappa figures, which
//! are condensed into six summary statistics. On top of that grid sit the
//! marginal sweeps, the trade-off point search and the sign-error check
//! against complexity measures.

pub mod cli;
pub mod consistency;
pub mod format;
pub mod ingest;
pub mod metrics;
pub mod record;
pub mod stats;
pub mod svg;
pub mod synth;
pub mod tradeoff;

pub use ingest::{CellStore, Grid3D, IngestOptions, IngestSummary};
pub use metrics::{classify, kappa, ConflictRule, ConfusionCounts};
pub use record::{CellKey, GridAxes, KappaThresholds, Manifest, PredictionRecord, Split, ValidationError};
pub use stats::{CellStats, Dimension, StatGrid, Statistic};
pub use tradeoff::{find_tradeoff, TradeOffConfig, TradeOffPoint};
