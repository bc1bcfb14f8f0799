//! Streaming record ingestion and per-cell grouping.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::record::{validate_record, CellKey, Manifest, PredictionRecord, Split, ValidationError};

/// All records that share one cell's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct CellStore {
    pub key: CellKey,
    pub test_records: Vec<PredictionRecord>,
    pub train_records: Vec<PredictionRecord>,
    /// Records per true class, over both splits.
    pub per_class_counts: BTreeMap<String, usize>,
}

impl CellStore {
    pub fn new(key: CellKey) -> Self {
        CellStore {
            key,
            test_records: Vec::new(),
            train_records: Vec::new(),
            per_class_counts: BTreeMap::new(),
        }
    }

    /// Adds a record whose coordinates must equal `self.key`.
    pub fn push(&mut self, record: PredictionRecord) {
        debug_assert_eq!(record.key(), self.key);
        *self.per_class_counts.entry(record.true_class.clone()).or_default() += 1;
        match record.split {
            Split::Test => self.test_records.push(record),
            Split::Train => self.train_records.push(record),
        }
    }

    pub fn len(&self) -> usize {
        self.test_records.len() + self.train_records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Distinct true classes among the test records.
    pub fn test_classes(&self) -> BTreeSet<&str> {
        self.test_records.iter().map(|r| r.true_class.as_str()).collect()
    }
}

/// Sparse 3D array of cell stores; only cells that received records are present.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Grid3D {
    pub cells: BTreeMap<CellKey, CellStore>,
}

impl Grid3D {
    pub fn get(&self, key: &CellKey) -> Option<&CellStore> {
        self.cells.get(key)
    }

    pub fn insert(&mut self, record: PredictionRecord) {
        let key = record.key();
        self.cells
            .entry(key)
            .or_insert_with(|| CellStore::new(key))
            .push(record);
    }

    pub fn record_count(&self) -> usize {
        self.cells.values().map(CellStore::len).sum()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestOptions {
    /// Abort on the first invalid line and reject unknown fields.
    pub strict: bool,
    /// Drop lines that exactly repeat an earlier line.
    pub dedup: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestSummary {
    /// Non-blank lines (or CSV rows) read.
    pub total: usize,
    pub accepted: usize,
    pub rejected: usize,
    /// Accepted lines dropped as exact duplicates (only with `dedup`).
    pub duplicates_dropped: usize,
    /// Accepted records whose sample id repeats within the same cell and split.
    pub duplicate_ids: usize,
    pub per_cell: BTreeMap<CellKey, usize>,
    pub error_tallies: BTreeMap<String, usize>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{source_name}:{line}: {error}")]
    Abort {
        source_name: String,
        line: usize,
        error: ValidationError,
    },
    #[error("reading {source_name}: {message}")]
    Io { source_name: String, message: String },
}

/// Incremental ingester; feed it any number of sources, then call [`Ingestor::finish`].
pub struct Ingestor<'m> {
    manifest: &'m Manifest,
    opts: IngestOptions,
    grid: Grid3D,
    summary: IngestSummary,
    seen_lines: BTreeSet<String>,
    seen_ids: BTreeSet<(CellKey, Split, String)>,
}

impl<'m> Ingestor<'m> {
    pub fn new(manifest: &'m Manifest, opts: IngestOptions) -> Self {
        Ingestor {
            manifest,
            opts,
            grid: Grid3D::default(),
            summary: IngestSummary::default(),
            seen_lines: BTreeSet::new(),
            seen_ids: BTreeSet::new(),
        }
    }

    /// Reads JSON Lines from `reader`. Blank lines are skipped and not counted.
    pub fn read_jsonl<R: BufRead>(&mut self, source_name: &str, reader: R) -> Result<(), IngestError> {
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| IngestError::Io {
                source_name: source_name.to_string(),
                message: e.to_string(),
            })?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let parsed = parse_json_record(trimmed, self.opts.strict);
            self.accept(source_name, idx + 1, trimmed.to_string(), parsed)?;
        }
        Ok(())
    }

    /// Reads the CSV variant: a header row naming the record fields, with
    /// `probs` as semicolon-separated decimals.
    pub fn read_csv<R: Read>(&mut self, source_name: &str, reader: R) -> Result<(), IngestError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let io_err = |e: csv::Error| IngestError::Io {
            source_name: source_name.to_string(),
            message: e.to_string(),
        };
        let headers = rdr.headers().map_err(io_err)?.clone();
        for (idx, row) in rdr.records().enumerate() {
            // Header is line 1.
            let line_no = idx + 2;
            let parsed = match row {
                Ok(row) => {
                    let text = row.iter().collect::<Vec<_>>().join(",");
                    (text, parse_csv_record(&headers, &row, self.opts.strict))
                }
                Err(e) => (String::new(), Err(ValidationError::Malformed(e.to_string()))),
            };
            self.accept(source_name, line_no, parsed.0, parsed.1)?;
        }
        Ok(())
    }

    fn accept(
        &mut self,
        source_name: &str,
        line_no: usize,
        raw: String,
        parsed: Result<(PredictionRecord, Vec<String>), ValidationError>,
    ) -> Result<(), IngestError> {
        self.summary.total += 1;
        let checked = parsed.and_then(|(rec, warns)| {
            validate_record(&rec, self.manifest)?;
            Ok((rec, warns))
        });
        let (record, field_warnings) = match checked {
            Ok(ok) => ok,
            Err(error) => {
                self.summary.rejected += 1;
                *self.summary.error_tallies.entry(error.kind().to_string()).or_default() += 1;
                if self.opts.strict {
                    return Err(IngestError::Abort {
                        source_name: source_name.to_string(),
                        line: line_no,
                        error,
                    });
                }
                self.summary
                    .warnings
                    .push(format!("{source_name}:{line_no}: rejected: {error}"));
                return Ok(());
            }
        };
        self.summary.accepted += 1;
        for w in field_warnings {
            self.summary.warnings.push(format!("{source_name}:{line_no}: {w}"));
        }
        if self.opts.dedup && !self.seen_lines.insert(raw) {
            self.summary.duplicates_dropped += 1;
            return Ok(());
        }
        let id_key = (record.key(), record.split, record.sample_id.clone());
        if !self.seen_ids.insert(id_key) {
            self.summary.duplicate_ids += 1;
            self.summary.warnings.push(format!(
                "{source_name}:{line_no}: sample_id '{}' repeats within cell {} split {}",
                record.sample_id,
                record.key(),
                record.split
            ));
        }
        *self.summary.per_cell.entry(record.key()).or_default() += 1;
        self.grid.insert(record);
        Ok(())
    }

    pub fn finish(self) -> (Grid3D, IngestSummary) {
        (self.grid, self.summary)
    }
}

/// Ingests one JSON Lines stream.
pub fn ingest_stream<R: BufRead>(
    reader: R,
    manifest: &Manifest,
    opts: IngestOptions,
) -> Result<(Grid3D, IngestSummary), IngestError> {
    let mut ing = Ingestor::new(manifest, opts);
    ing.read_jsonl("<stream>", reader)?;
    Ok(ing.finish())
}

/// Ingests several record files as one logical stream. Files ending in
/// `.csv` use the CSV variant; everything else is read as JSON Lines.
pub fn ingest_paths<P: AsRef<Path>>(
    paths: &[P],
    manifest: &Manifest,
    opts: IngestOptions,
) -> Result<(Grid3D, IngestSummary), IngestError> {
    let mut ing = Ingestor::new(manifest, opts);
    for path in paths {
        let path = path.as_ref();
        let name = path.display().to_string();
        let file = File::open(path).map_err(|e| IngestError::Io {
            source_name: name.clone(),
            message: e.to_string(),
        })?;
        let is_csv = path
            .extension()
            .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
        if is_csv {
            ing.read_csv(&name, file)?;
        } else {
            ing.read_jsonl(&name, BufReader::new(file))?;
        }
    }
    Ok(ing.finish())
}

/// Parses one JSON record line. Unknown fields are errors in strict mode and
/// warnings otherwise.
pub fn parse_json_record(
    line: &str,
    strict: bool,
) -> Result<(PredictionRecord, Vec<String>), ValidationError> {
    let value: Value =
        serde_json::from_str(line).map_err(|e| ValidationError::Malformed(e.to_string()))?;
    let Value::Object(mut map) = value else {
        return Err(ValidationError::Malformed("record must be a JSON object".into()));
    };
    let warnings = strip_unknown(&mut map, strict)?;
    if let Some(split) = map.get("split") {
        match split.as_str() {
            Some(s) if Split::parse(s).is_some() => {}
            Some(s) => return Err(ValidationError::BadSplit(s.to_string())),
            None => return Err(ValidationError::BadSplit(split.to_string())),
        }
    }
    let record: PredictionRecord = serde_json::from_value(Value::Object(map))
        .map_err(|e| ValidationError::Malformed(e.to_string()))?;
    Ok((record, warnings))
}

fn strip_unknown(map: &mut Map<String, Value>, strict: bool) -> Result<Vec<String>, ValidationError> {
    let unknown: Vec<String> = map
        .keys()
        .filter(|k| !PredictionRecord::FIELDS.contains(&k.as_str()))
        .cloned()
        .collect();
    if strict {
        if let Some(first) = unknown.into_iter().next() {
            return Err(ValidationError::UnknownField(first));
        }
        return Ok(Vec::new());
    }
    Ok(unknown
        .into_iter()
        .map(|k| {
            map.remove(&k);
            format!("ignored unknown field '{k}'")
        })
        .collect())
}

fn parse_csv_record(
    headers: &csv::StringRecord,
    row: &csv::StringRecord,
    strict: bool,
) -> Result<(PredictionRecord, Vec<String>), ValidationError> {
    let mut warnings = Vec::new();
    let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
    for (h, v) in headers.iter().zip(row.iter()) {
        if PredictionRecord::FIELDS.contains(&h) {
            fields.insert(h, v);
        } else if strict {
            return Err(ValidationError::UnknownField(h.to_string()));
        } else {
            warnings.push(format!("ignored unknown column '{h}'"));
        }
    }
    let get = |name: &str| {
        fields
            .get(name)
            .copied()
            .ok_or_else(|| ValidationError::Malformed(format!("missing column '{name}'")))
    };
    let num = |name: &str| -> Result<f64, ValidationError> {
        get(name)?
            .parse::<f64>()
            .map_err(|e| ValidationError::Malformed(format!("{name}: {e}")))
    };
    let split_text = get("split")?;
    let split = Split::parse(split_text).ok_or_else(|| ValidationError::BadSplit(split_text.into()))?;
    let weight_num = get("weight_num")?
        .parse::<u64>()
        .map_err(|e| ValidationError::Malformed(format!("weight_num: {e}")))?;
    let probs = get("probs")?
        .split(';')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| ValidationError::Malformed(format!("probs: {e}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let loss = match fields.get("loss").copied() {
        None | Some("") => None,
        Some(_) => Some(num("loss")?),
    };
    let record = PredictionRecord {
        sample_id: get("sample_id")?.to_string(),
        true_class: get("true_class")?.to_string(),
        split,
        zero_shot_pct: num("zero_shot_pct")?,
        ssim: num("ssim")?,
        weight_num,
        probs,
        loss,
    };
    Ok((record, warnings))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageEntry {
    pub key: CellKey,
    /// No test records in this cell.
    pub missing: bool,
    /// Vocabulary classes absent from the cell's test records (empty for missing cells).
    pub class_gaps: Vec<String>,
}

/// Walks the full Cartesian grid and reports empty cells and per-class gaps.
pub fn coverage_report(grid: &Grid3D, manifest: &Manifest) -> Vec<CoverageEntry> {
    manifest
        .axes
        .cells()
        .into_iter()
        .map(|key| {
            let store = grid.get(&key).filter(|s| !s.test_records.is_empty());
            match store {
                None => CoverageEntry {
                    key,
                    missing: true,
                    class_gaps: Vec::new(),
                },
                Some(s) => {
                    let present = s.test_classes();
                    CoverageEntry {
                        key,
                        missing: false,
                        class_gaps: manifest
                            .class_vocabulary
                            .iter()
                            .filter(|c| !present.contains(c.as_str()))
                            .cloned()
                            .collect(),
                    }
                }
            }
        })
        .collect()
}
