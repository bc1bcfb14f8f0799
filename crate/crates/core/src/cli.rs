//! Command-line front end: `validate`, `synth`, `analyze` and `consistency`.
//!
//! Exit codes: 0 success, 1 validation failure, 2 pipeline error, 3 I/O error.
//! Every output file is written to a temporary sibling and renamed into place.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use thiserror::Error;

use crate::consistency::{consistency_report, write_pairs_csv, write_report_csv, ComplexityTable, Slice};
use crate::format::{model_size, sig6};
use crate::ingest::{coverage_report, ingest_paths, Grid3D, IngestError, IngestOptions, IngestSummary};
use crate::metrics::{write_rule_dump, GapSource, RULE_DUMP_HEADER};
use crate::record::{validate_manifest, Manifest, ManifestWarning};
use crate::stats::{
    build_grid, marginals, read_grid_csv, write_grid_csv, write_marginals_csv, BuildOptions, Dimension,
    EmptyCellPolicy, StatGrid, StatsError,
};
use crate::svg;
use crate::synth::{generate, SynthError, SynthSpec};
use crate::tradeoff::{find_tradeoff, write_tradeoff_csv, TradeOffConfig, TradeOffPoint};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_PIPELINE: i32 = 2;
pub const EXIT_IO: i32 = 3;

/// Environment variable holding the `env_logger` filter.
pub const LOG_ENV: &str = "GENBENCH_LOG";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Pipeline(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Pipeline(_) => EXIT_PIPELINE,
            CliError::Io(_) => EXIT_IO,
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Abort { ref error, .. } => CliError::Validation(format!("{}: {e}", error.kind())),
            IngestError::Io { .. } => CliError::Io(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "genbench", version, about = "Practical generalization metric over a zero-shot x SSIM x model-size grid")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a manifest and record files, and report grid coverage.
    Validate(InputArgs),
    /// Write synthetic records and their manifest.
    Synth(SynthArgs),
    /// Build the statistics grid, find the trade-off point and write marginals.
    Analyze(AnalyzeArgs),
    /// Compare slice marginals with complexity measures via sign-error.
    Consistency(ConsistencyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// Run manifest (JSON).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Record file, JSON Lines or `.csv`; repeatable.
    #[arg(long)]
    pub records: Vec<PathBuf>,
    /// Abort on the first invalid record and reject unknown fields.
    #[arg(long)]
    pub strict: bool,
    /// Drop exact duplicate lines.
    #[arg(long)]
    pub dedup: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum EmptyCellArg {
    #[default]
    Skip,
    Fail,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, ValueEnum)]
pub enum GapSourceArg {
    #[default]
    Gap,
    TestError,
}

/// Where the statistics grid comes from: records (with a manifest) or a
/// previously written `grid.csv`.
#[derive(Debug, Clone, Args)]
pub struct GridSource {
    #[command(flatten)]
    pub input: InputArgs,
    /// Read statistics from a grid CSV instead of records.
    #[arg(long, conflicts_with = "records")]
    pub grid: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = EmptyCellArg::Skip)]
    pub empty_cell: EmptyCellArg,
    /// Per-class value entering the g statistics.
    #[arg(long, value_enum, default_value_t = GapSourceArg::Gap)]
    pub gap_source: GapSourceArg,
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub source: GridSource,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub zero_shot_min: f64,
    #[arg(long, default_value_t = 0.0)]
    pub robust_min: f64,
    /// Largest admissible weight number; unbounded when absent.
    #[arg(long)]
    pub weight_max: Option<u64>,
    /// Objective tolerance defining the tie set.
    #[arg(long, default_value_t = 1e-9)]
    pub tolerance: f64,
    /// Divide marginal sums by the number of cells per level (display only).
    #[arg(long)]
    pub normalize: bool,
    /// Also write rules.csv with the conflict rule of every (record, class).
    #[arg(long)]
    pub dump_rules: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ConsistencyArgs {
    #[command(flatten)]
    pub source: GridSource,
    /// Complexity table CSV with columns measure_name, weight_num, value.
    #[arg(long)]
    pub complexity: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Synth spec (JSON); the built-in demo spec when absent.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write the manifest only.
    #[arg(long)]
    pub dry_run: bool,
}

/// Parses `args` (including the program name) and runs the command,
/// printing diagnostics to stderr. Returns the process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    run(&cli)
}

pub fn run(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Validate(a) => cmd_validate(a).map(|_| ()),
        Command::Synth(a) => cmd_synth(a),
        Command::Analyze(a) => cmd_analyze(a).map(|_| ()),
        Command::Consistency(a) => cmd_consistency(a).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn load_manifest(path: &Path) -> Result<(Manifest, Vec<ManifestWarning>), CliError> {
    let manifest = Manifest::from_json(&read_text(path)?)
        .map_err(|e| CliError::Validation(format!("Malformed: {}: {e}", path.display())))?;
    let warnings = validate_manifest(&manifest)
        .map_err(|e| CliError::Validation(format!("{}: {}: {e}", e.kind(), path.display())))?;
    Ok((manifest, warnings))
}

fn require_manifest(input: &InputArgs) -> Result<(Manifest, Vec<ManifestWarning>), CliError> {
    let path = input
        .manifest
        .as_deref()
        .ok_or_else(|| CliError::Validation("--manifest is required".into()))?;
    load_manifest(path)
}

fn ingest(input: &InputArgs, manifest: &Manifest) -> Result<(Grid3D, IngestSummary), CliError> {
    if input.records.is_empty() {
        return Err(CliError::Validation("at least one --records file is required".into()));
    }
    let opts = IngestOptions {
        strict: input.strict,
        dedup: input.dedup,
    };
    Ok(ingest_paths(&input.records, manifest, opts)?)
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

fn create_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn csv_bytes<E: std::fmt::Display>(f: impl FnOnce(&mut Vec<u8>) -> Result<(), E>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::Pipeline(e.to_string()))?;
    Ok(buf)
}

pub struct ValidateOutcome {
    pub summary: IngestSummary,
    pub manifest_warnings: Vec<ManifestWarning>,
    pub missing_cells: usize,
    pub cells_with_class_gaps: usize,
}

pub fn cmd_validate(args: &InputArgs) -> Result<ValidateOutcome, CliError> {
    let (manifest, manifest_warnings) = require_manifest(args)?;
    println!(
        "manifest: ok ({} classes, {} cells)",
        manifest.class_vocabulary.len(),
        manifest.axes.len()
    );
    for w in &manifest_warnings {
        println!("manifest warning: {w}");
    }
    let (grid, summary) = ingest(args, &manifest)?;
    println!(
        "records: total {}, accepted {}, rejected {}, duplicates dropped {}",
        summary.total, summary.accepted, summary.rejected, summary.duplicates_dropped
    );
    for (kind, count) in &summary.error_tallies {
        println!("rejected {kind}: {count}");
    }
    println!("warnings: {}", summary.warnings.len());
    for w in &summary.warnings {
        println!("  {w}");
    }
    let coverage = coverage_report(&grid, &manifest);
    let missing_cells = coverage.iter().filter(|c| c.missing).count();
    let cells_with_class_gaps = coverage.iter().filter(|c| !c.class_gaps.is_empty()).count();
    println!(
        "coverage: {} of {} cells missing, {} cells with class gaps",
        missing_cells,
        coverage.len(),
        cells_with_class_gaps
    );
    for c in coverage.iter().filter(|c| c.missing || !c.class_gaps.is_empty()) {
        if c.missing {
            println!("  {} missing", c.key);
        } else {
            println!("  {} lacks {}", c.key, c.class_gaps.join(","));
        }
    }
    Ok(ValidateOutcome {
        summary,
        manifest_warnings,
        missing_cells,
        cells_with_class_gaps,
    })
}

/// The statistics grid, either built from records or read from a grid CSV.
/// The result is rounded to report precision so that the written grid.csv
/// reproduces it exactly.
fn load_grid(source: &GridSource, rule_dump: Option<&Path>) -> Result<StatGrid, CliError> {
    let grid = if let Some(path) = &source.grid {
        let axes = match &source.input.manifest {
            Some(m) => Some(load_manifest(m)?.0.axes),
            None => None,
        };
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        read_grid_csv(file, axes).map_err(|e| match e {
            StatsError::Csv(_) | StatsError::BadRow { .. } => CliError::Validation(format!("{}: {e}", path.display())),
            other => other.into(),
        })?
    } else {
        let (manifest, _) = require_manifest(&source.input)?;
        let (cells, summary) = ingest(&source.input, &manifest)?;
        info!(
            "ingested {} of {} records ({} rejected)",
            summary.accepted, summary.total, summary.rejected
        );
        for w in &summary.warnings {
            warn!("{w}");
        }
        if cells.record_count() == 0 {
            return Err(CliError::Pipeline("no valid records".into()));
        }
        if let Some(path) = rule_dump {
            let bytes = csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                w.write_record(RULE_DUMP_HEADER)?;
                for store in cells.cells.values() {
                    write_rule_dump(&mut w, store, &manifest)?;
                }
                w.flush()?;
                Ok::<(), csv::Error>(())
            })?;
            write_atomic(path, &bytes)?;
        }
        let opts = BuildOptions {
            empty_cells: match source.empty_cell {
                EmptyCellArg::Skip => EmptyCellPolicy::Skip,
                EmptyCellArg::Fail => EmptyCellPolicy::Fail,
            },
            gap_source: match source.gap_source {
                GapSourceArg::Gap => GapSource::Gap,
                GapSourceArg::TestError => GapSource::TestError,
            },
        };
        let built = build_grid(&cells, &manifest, opts)?;
        for key in &built.skipped {
            warn!("cell {key} has no test records; skipped");
        }
        built.grid
    };
    if grid.cells.is_empty() {
        return Err(CliError::Pipeline("statistics grid is empty".into()));
    }
    Ok(grid.quantized())
}

fn level_labels(dimension: Dimension, levels: &[f64]) -> Vec<String> {
    levels
        .iter()
        .map(|&v| match dimension {
            Dimension::WeightNum => model_size(v as u64),
            _ => sig6(v),
        })
        .collect()
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<TradeOffPoint, CliError> {
    create_out_dir(&args.out)?;
    let dump = args.dump_rules.then(|| args.out.join("rules.csv"));
    let grid = load_grid(&args.source, dump.as_deref())?;

    write_atomic(
        &args.out.join("grid.csv"),
        &csv_bytes(|buf| write_grid_csv(&grid, buf))?,
    )?;

    let cfg = TradeOffConfig {
        zero_shot_min: args.zero_shot_min,
        robust_min: args.robust_min,
        weight_num_max: args.weight_max,
        objective_tolerance: args.tolerance,
    };
    let point = find_tradeoff(&grid, &cfg).map_err(|e| CliError::Pipeline(e.to_string()))?;
    write_atomic(
        &args.out.join("tradeoff.csv"),
        &csv_bytes(|buf| write_tradeoff_csv(&point, buf))?,
    )?;
    let mut json = serde_json::to_string_pretty(&point).map_err(|e| CliError::Pipeline(e.to_string()))?;
    json.push('\n');
    write_atomic(&args.out.join("tradeoff.json"), json.as_bytes())?;

    for dim in Dimension::ALL {
        let set = marginals(&grid, dim, args.normalize)?;
        if set.uneven && !set.normalized {
            warn!(
                "{} levels sum over different cell counts; raw marginals are not comparable",
                dim.file_stem()
            );
        }
        let stem = dim.file_stem();
        write_atomic(
            &args.out.join(format!("marginals_{stem}.csv")),
            &csv_bytes(|buf| write_marginals_csv(&set, buf))?,
        )?;
        let coord = dim.coordinate(&point.key);
        let marker = set.levels.iter().position(|l| l.total_cmp(&coord).is_eq());
        let chart = svg::marginal_chart(&set, marker, &level_labels(dim, &set.levels));
        write_atomic(&args.out.join(format!("marginals_{stem}.svg")), chart.as_bytes())?;
    }

    println!(
        "trade-off point: {} objective {} (tie set {})",
        point.key,
        sig6(point.objective_value),
        point.tie_set_size
    );
    Ok(point)
}

pub fn cmd_consistency(args: &ConsistencyArgs) -> Result<crate::consistency::ConsistencyReport, CliError> {
    create_out_dir(&args.out)?;
    let grid = load_grid(&args.source, None)?;
    let table_file = File::open(&args.complexity).map_err(|e| CliError::io(&args.complexity, e))?;
    let table = ComplexityTable::read_csv(table_file, &args.complexity.display().to_string())
        .map_err(|e| CliError::Validation(e.to_string()))?;
    table
        .validate(&grid.axes)
        .map_err(|e| CliError::Validation(e.to_string()))?;
    let available: Vec<Slice> = Slice::ALL.into_iter().filter(|s| s.available(&grid.axes)).collect();
    if available.is_empty() {
        return Err(CliError::Pipeline(format!(
            "{}; {}",
            crate::consistency::ConsistencyError::SliceUnavailable(Slice::NoNoise),
            crate::consistency::ConsistencyError::SliceUnavailable(Slice::NoZeroShot)
        )));
    }
    let report = consistency_report(&grid, &table);
    for s in &report.skipped {
        warn!("skipped {} on {} slice: {}", s.measure_name, s.slice.name(), s.reason);
    }
    write_atomic(
        &args.out.join("consistency.csv"),
        &csv_bytes(|buf| write_report_csv(&report, buf))?,
    )?;
    write_atomic(
        &args.out.join("consistency_pairs.csv"),
        &csv_bytes(|buf| write_pairs_csv(&grid, &table, buf))?,
    )?;
    for slice in available {
        let chart = svg::sign_error_scatter(slice, &report.entries);
        write_atomic(&args.out.join(format!("scatter_{}.svg", slice.name())), chart.as_bytes())?;
    }
    println!(
        "consistency: {} entries, {} with se_g > 0.5 ({})",
        report.entries.len(),
        report.mismatches(),
        sig6(report.summary)
    );
    Ok(report)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = match &args.spec {
        Some(path) => serde_json::from_str::<SynthSpec>(&read_text(path)?)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?,
        None => SynthSpec::demo(),
    };
    create_out_dir(&args.out)?;
    if args.dry_run {
        write_atomic(&args.out.join("manifest.json"), manifest_json(&spec.manifest()).as_bytes())?;
        return Ok(());
    }
    let out = generate(&spec).map_err(|e| match e {
        SynthError::InvalidSpec(_) => CliError::Validation(e.to_string()),
        SynthError::InfeasiblePlant(_) => CliError::Pipeline(e.to_string()),
    })?;
    write_atomic(&args.out.join("manifest.json"), manifest_json(&out.manifest).as_bytes())?;
    let path = args.out.join("records.jsonl");
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        for r in &out.records {
            writeln!(w, "{}", r.to_json_line()).map_err(|e| CliError::io(&tmp, e))?;
        }
        w.flush().map_err(|e| CliError::io(&tmp, e))?;
    }
    fs::rename(&tmp, &path).map_err(|e| CliError::io(&path, e))?;
    println!("synth: {} records in {} cells", out.records.len(), spec.axes.len());
    Ok(())
}

fn manifest_json(m: &Manifest) -> String {
    let mut s = m.to_json_pretty();
    s.push('\n');
    s
}
