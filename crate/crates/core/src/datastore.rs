//! Persistent results, model metadata ingest and the explorer bundle.
//!
//! A results store is a line-delimited JSON file:
//!
//! ```text
//! {"kind":"header","format":"enerprof-results","v":"v1"}
//! {"kind":"setup","id":"a100/pytorch","setup":{...}}
//! {"kind":"run","id":"resnet50@a100/pytorch#8",...}
//! ```
//!
//! Each run's samples and batch marks live next to the store in
//! `<store>.samples/NNNNNN.log` (sensor log format) and `NNNNNN.marks`
//! (one nanosecond timestamp per line).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::energy::best_metrics;
use crate::error::{Error, Result};
use crate::scoring::ScoreInput;
use crate::telemetry::{is_millisecond_aligned, parse_sensor_log, serialize_samples};
use crate::types::{EnergyMetrics, Family, InferenceSetup, ModelRecord, Nanos, QualityFlag, RunMeasurement, Validate};

pub const RESULTS_FORMAT: &str = "enerprof-results";
pub const RESULTS_VERSION: &str = "v1";
pub const BUNDLE_FORMAT: &str = "enerprof-bundle";
pub const BUNDLE_VERSION: &str = "v1";

/// Key of a run: `model@gpu/runtime#batch`.
pub fn record_id(model_id: &str, setup_id: &str, batch_size: u32) -> String {
    format!("{model_id}@{setup_id}#{batch_size}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub id: String,
    pub seq: u64,
    pub model_id: String,
    pub setup_id: String,
    pub batch_size: u32,
    pub window_start: Nanos,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EnergyMetrics>,
    #[serde(default)]
    pub quality_flags: BTreeSet<QualityFlag>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_baseline: Option<f64>,
    /// Sidecar paths relative to the store's directory.
    pub samples_file: String,
    pub marks_file: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum Line {
    Header { format: String, v: String },
    Setup { id: String, setup: InferenceSetup },
    Run(RunRecord),
}

/// An opened results store.
#[derive(Debug, Clone, PartialEq)]
pub struct Store {
    pub path: PathBuf,
    pub setups: BTreeMap<String, InferenceSetup>,
    /// In file order.
    pub records: Vec<RunRecord>,
}

fn header_line() -> String {
    serde_json::to_string(&Line::Header { format: RESULTS_FORMAT.into(), v: RESULTS_VERSION.into() })
        .expect("header serializes")
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn sidecar_dir_name(path: &Path) -> String {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    format!("{name}.samples")
}

impl Store {
    pub fn empty(path: impl Into<PathBuf>) -> Self {
        Store { path: path.into(), setups: BTreeMap::new(), records: Vec::new() }
    }

    pub fn get(&self, id: &str) -> Option<&RunRecord> {
        self.records.iter().find(|r| r.id == id)
    }

    /// Rebuild the full measurement of `id` from its record and sidecars.
    pub fn load_run(&self, id: &str) -> Result<RunMeasurement> {
        let rec = self.get(id).ok_or_else(|| Error::UnknownId { kind: "run", id: id.to_string() })?;
        let setup = self
            .setups
            .get(&rec.setup_id)
            .ok_or_else(|| Error::UnknownId { kind: "setup", id: rec.setup_id.clone() })?;
        let base = base_dir(&self.path);
        let read = |rel: &str| {
            let p = base.join(rel);
            fs::read_to_string(&p).map_err(|e| Error::io(format!("reading {}", p.display()), e))
        };
        let log = read(&rec.samples_file)?;
        let samples = if log.trim().is_empty() {
            Vec::new()
        } else {
            let parsed = parse_sensor_log(&log)?;
            if parsed.malformed > 0 {
                return Err(Error::Format(format!(
                    "{}: {} malformed sample line(s)",
                    rec.samples_file, parsed.malformed
                )));
            }
            parsed.samples
        };
        let batch_marks = read(&rec.marks_file)?
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.trim().parse::<Nanos>().map_err(|_| Error::Format(format!("{}: bad mark `{l}`", rec.marks_file)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RunMeasurement {
            model_id: rec.model_id.clone(),
            setup: setup.clone(),
            batch_size: rec.batch_size,
            window_start: rec.window_start,
            batch_marks,
            samples,
            metrics: rec.metrics,
            quality_flags: rec.quality_flags.clone(),
            idle_baseline: rec.idle_baseline,
        })
    }

    /// Best-batch metrics per `(model_id, setup_id)`.
    pub fn best_metrics(&self) -> BTreeMap<(String, String), EnergyMetrics> {
        let mut groups: BTreeMap<(String, String), Vec<&EnergyMetrics>> = BTreeMap::new();
        for r in &self.records {
            if let Some(m) = &r.metrics {
                groups.entry((r.model_id.clone(), r.setup_id.clone())).or_default().push(m);
            }
        }
        groups.into_iter().filter_map(|(k, ms)| best_metrics(ms).map(|m| (k, *m))).collect()
    }
}

/// Open a store; a missing file is an error.
pub fn load_store(path: &Path) -> Result<Store> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let Some((_, first)) = lines.next() else {
        return Err(Error::Format(format!("{}: empty store", path.display())));
    };
    let header: serde_json::Value =
        serde_json::from_str(first).map_err(|e| Error::Format(format!("{}: bad header: {e}", path.display())))?;
    if header.get("kind").and_then(|k| k.as_str()) != Some("header")
        || header.get("format").and_then(|k| k.as_str()) != Some(RESULTS_FORMAT)
    {
        return Err(Error::Format(format!("{}: not an enerprof results store", path.display())));
    }
    let version = header.get("v").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != RESULTS_VERSION {
        return Err(Error::VersionMismatch { found: version.to_string(), expected: RESULTS_VERSION.into() });
    }
    let mut store = Store::empty(path);
    let mut ids = BTreeSet::new();
    for (n, line) in lines {
        let parsed: Line =
            serde_json::from_str(line).map_err(|e| Error::Format(format!("{}:{}: {e}", path.display(), n + 1)))?;
        match parsed {
            Line::Header { .. } => {
                return Err(Error::Format(format!("{}:{}: repeated header", path.display(), n + 1)));
            }
            Line::Setup { id, setup } => {
                store.setups.insert(id, setup);
            }
            Line::Run(rec) => {
                if !ids.insert(rec.id.clone()) {
                    return Err(Error::DuplicateKey(rec.id));
                }
                store.records.push(rec);
            }
        }
    }
    Ok(store)
}

fn invalid(report: crate::types::ValidationReport) -> Error {
    Error::InvalidInput(report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))
}

/// Append `run` to the store at `path`, creating it if needed. Returns the
/// record id.
pub fn save_run(run: &RunMeasurement, path: &Path) -> Result<String> {
    let report = run.validate();
    if !report.is_empty() {
        return Err(invalid(report));
    }
    if !is_millisecond_aligned(&run.samples) {
        return Err(Error::InvalidInput(
            "sample timestamps must be whole milliseconds to be stored in the sensor log format".into(),
        ));
    }
    let mut store = if path.exists() {
        load_store(path)?
    } else {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        fs::write(path, header_line() + "\n").map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Store::empty(path)
    };

    let setup_id = run.setup.id();
    let id = record_id(&run.model_id, &setup_id, run.batch_size);
    if store.get(&id).is_some() {
        return Err(Error::DuplicateKey(id));
    }
    let mut pending = String::new();
    match store.setups.get(&setup_id) {
        Some(existing) if existing != &run.setup => {
            return Err(Error::InvalidInput(format!("setup `{setup_id}` already stored with a different descriptor")));
        }
        Some(_) => {}
        None => {
            pending += &serde_json::to_string(&Line::Setup { id: setup_id.clone(), setup: run.setup.clone() })?;
            pending.push('\n');
            store.setups.insert(setup_id.clone(), run.setup.clone());
        }
    }

    let seq = store.records.iter().map(|r| r.seq).max().unwrap_or(0) + 1;
    let dir_name = sidecar_dir_name(path);
    let dir = base_dir(path).join(&dir_name);
    fs::create_dir_all(&dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let samples_file = format!("{dir_name}/{seq:06}.log");
    let marks_file = format!("{dir_name}/{seq:06}.marks");
    let write = |rel: &str, body: String| {
        let p = base_dir(path).join(rel);
        fs::write(&p, body).map_err(|e| Error::io(format!("writing {}", p.display()), e))
    };
    write(&samples_file, serialize_samples(&run.samples))?;
    write(&marks_file, run.batch_marks.iter().map(|m| format!("{m}\n")).collect::<String>())?;

    let record = RunRecord {
        id: id.clone(),
        seq,
        model_id: run.model_id.clone(),
        setup_id,
        batch_size: run.batch_size,
        window_start: run.window_start,
        metrics: run.metrics,
        quality_flags: run.quality_flags.clone(),
        idle_baseline: run.idle_baseline,
        samples_file,
        marks_file,
    };
    pending += &serde_json::to_string(&Line::Run(record))?;
    pending.push('\n');
    let mut f =
        OpenOptions::new().append(true).open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    f.write_all(pending.as_bytes())
        .and_then(|_| f.sync_data())
        .map_err(|e| Error::io(format!("appending to {}", path.display()), e))?;
    Ok(id)
}

// ---------------------------------------------------------------------------
// metadata ingest

pub const MANDATORY_COLUMNS: [&str; 7] = ["model_id", "family", "year", "params", "flops", "activations", "input_size"];

/// Optional non-dataset column holding the model's reference page.
pub const URL_COLUMN: &str = "url";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowError {
    /// 1-based line number in the table.
    pub line: u64,
    pub model_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub records: Vec<ModelRecord>,
    pub datasets: Vec<String>,
    pub rejected: Vec<RowError>,
}

fn parse_num(field: &str, value: &str) -> std::result::Result<f64, String> {
    value
        .trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| format!("{field}: `{value}` is not a number"))
}

fn optional<T>(
    value: &str,
    parse: impl FnOnce(&str) -> std::result::Result<T, String>,
) -> std::result::Result<Option<T>, String> {
    let v = value.trim();
    if v.is_empty() || v.eq_ignore_ascii_case("na") || v == "[N/A]" {
        Ok(None)
    } else {
        parse(v).map(Some)
    }
}

/// Parse a comma- or tab-separated metadata table with a header row.
///
/// Every column other than the mandatory ones and `url` is an accuracy
/// dataset. Empty cells in `year`, `activations`, `url` and dataset columns
/// mean "unknown". Rows that fail validation are reported and skipped.
pub fn ingest_metadata(text: &str) -> Result<IngestReport> {
    let first = text.lines().next().unwrap_or("");
    let delimiter = if first.contains('\t') { b'\t' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| Error::Format(format!("metadata header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = BTreeMap::new();
    for name in MANDATORY_COLUMNS {
        idx.insert(name, col(name).ok_or_else(|| Error::MissingColumn(name.to_string()))?);
    }
    let url_idx = col(URL_COLUMN);
    let dataset_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !MANDATORY_COLUMNS.contains(&h.as_str()) && h.as_str() != URL_COLUMN)
        .map(|(i, h)| (i, h.clone()))
        .collect();

    let mut report = IngestReport {
        records: Vec::new(),
        datasets: dataset_cols.iter().map(|(_, d)| d.clone()).collect(),
        rejected: Vec::new(),
    };
    let mut seen = BTreeSet::new();
    for row in reader.records() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                report.rejected.push(RowError {
                    line: e.position().map_or(0, |p| p.line()),
                    model_id: None,
                    message: e.to_string(),
                });
                continue;
            }
        };
        let line = row.position().map_or(0, |p| p.line());
        let get = |name: &str| row.get(idx[name]).unwrap_or("");
        let model_id = get("model_id").to_string();
        let parsed = (|| -> std::result::Result<ModelRecord, String> {
            if model_id.is_empty() {
                return Err("model_id is empty".into());
            }
            let input_size = get("input_size")
                .parse::<u32>()
                .map_err(|_| format!("input_size: `{}` is not a positive integer", get("input_size")))?;
            let mut rec = ModelRecord::new(
                model_id.clone(),
                Family::classify(get("family")),
                parse_num("params", get("params"))?,
                parse_num("flops", get("flops"))?,
                input_size,
            );
            rec.pub_year =
                optional(get("year"), |v| v.parse::<i32>().map_err(|_| format!("year: `{v}` is not an integer")))?;
            rec.activations = optional(get("activations"), |v| parse_num("activations", v))?;
            rec.url = url_idx.and_then(|i| row.get(i)).filter(|u| !u.is_empty()).map(str::to_string);
            for (i, dataset) in &dataset_cols {
                if let Some(acc) = optional(row.get(*i).unwrap_or(""), |v| parse_num(dataset, v))? {
                    rec.accuracies.insert(dataset.clone(), acc);
                }
            }
            let v = rec.validate();
            if !v.is_empty() {
                return Err(v.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "));
            }
            Ok(rec)
        })();
        match parsed {
            Ok(rec) if !seen.insert(rec.model_id.clone()) => {
                report.rejected.push(RowError { line, model_id: Some(model_id), message: "duplicate model_id".into() })
            }
            Ok(rec) => report.records.push(rec),
            Err(message) => {
                report.rejected.push(RowError { line, model_id: (!model_id.is_empty()).then_some(model_id), message })
            }
        }
    }
    for e in &report.rejected {
        log::warn!("metadata line {}: {}", e.line, e.message);
    }
    Ok(report)
}

pub fn ingest_metadata_file(path: &Path) -> Result<IngestReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    ingest_metadata(&text)
}

// ---------------------------------------------------------------------------
// explorer bundle

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleSetup {
    pub id: String,
    #[serde(flatten)]
    pub setup: InferenceSetup,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMetric {
    pub model_id: String,
    pub setup_id: String,
    /// Most energy-efficient batch size for this model on this setup.
    pub metrics: EnergyMetrics,
}

/// The explorer's single data file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bundle {
    pub format: String,
    pub version: String,
    /// How `models[].flops` should be read: values are passed through
    /// exactly as ingested.
    pub flops_convention: String,
    /// Sorted by id.
    pub setups: Vec<BundleSetup>,
    /// Sorted dataset ids appearing in any model's accuracies.
    pub datasets: Vec<String>,
    /// Sorted by model id.
    pub models: Vec<ModelRecord>,
    /// Sorted by (model_id, setup_id).
    pub metrics: Vec<BundleMetric>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BundleFilter {
    /// Keep only these setup ids; empty keeps all.
    pub setups: Vec<String>,
}

pub fn build_bundle(store: &Store, metadata: &[ModelRecord], filter: &BundleFilter) -> Result<Bundle> {
    for s in &filter.setups {
        if !store.setups.contains_key(s) {
            return Err(Error::UnknownId { kind: "setup", id: s.clone() });
        }
    }
    let keep_setup = |id: &str| filter.setups.is_empty() || filter.setups.iter().any(|s| s == id);
    let models: BTreeMap<&str, &ModelRecord> = metadata.iter().map(|m| (m.model_id.as_str(), m)).collect();

    let metrics: Vec<BundleMetric> = store
        .best_metrics()
        .into_iter()
        .filter(|((model, setup), _)| keep_setup(setup) && models.contains_key(model.as_str()))
        .map(|((model_id, setup_id), metrics)| BundleMetric { model_id, setup_id, metrics })
        .collect();
    if metrics.is_empty() {
        return Err(Error::InvalidInput(
            "no measured model has metadata (empty intersection of store and metadata)".into(),
        ));
    }
    let used_models: BTreeSet<&str> = metrics.iter().map(|m| m.model_id.as_str()).collect();
    let used_setups: BTreeSet<&str> = metrics.iter().map(|m| m.setup_id.as_str()).collect();
    let models: Vec<ModelRecord> = used_models.iter().map(|id| models[id].clone()).collect();
    let datasets: BTreeSet<String> = models.iter().flat_map(|m| m.accuracies.keys().cloned()).collect();
    Ok(Bundle {
        format: BUNDLE_FORMAT.into(),
        version: BUNDLE_VERSION.into(),
        flops_convention: "as-ingested".into(),
        setups: used_setups
            .iter()
            .map(|id| BundleSetup { id: id.to_string(), setup: store.setups[*id].clone() })
            .collect(),
        datasets: datasets.into_iter().collect(),
        models,
        metrics,
    })
}

/// Canonical serialized form; identical inputs give identical bytes.
pub fn bundle_to_string(bundle: &Bundle) -> Result<String> {
    Ok(serde_json::to_string_pretty(bundle)? + "\n")
}

pub fn export_bundle(store: &Store, metadata: &[ModelRecord], filter: &BundleFilter, out: &Path) -> Result<Bundle> {
    let bundle = build_bundle(store, metadata, filter)?;
    fs::write(out, bundle_to_string(&bundle)?).map_err(|e| Error::io(format!("writing {}", out.display()), e))?;
    Ok(bundle)
}

pub fn parse_bundle(text: &str) -> Result<Bundle> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    if value.get("format").and_then(|f| f.as_str()) != Some(BUNDLE_FORMAT) {
        return Err(Error::Format("not an enerprof bundle".into()));
    }
    let version = value.get("version").and_then(|v| v.as_str()).unwrap_or("<missing>");
    if version != BUNDLE_VERSION {
        return Err(Error::VersionMismatch { found: version.to_string(), expected: BUNDLE_VERSION.into() });
    }
    Ok(serde_json::from_value(value)?)
}

pub fn load_bundle(path: &Path) -> Result<Bundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_bundle(&text)
}

impl Bundle {
    /// Score inputs for one setup; see [`Dataset::score_inputs`].
    pub fn score_inputs(&self, setup_id: &str, datasets: &[String]) -> Vec<ScoreInput> {
        Dataset::from_bundle(self).score_inputs(setup_id, datasets)
    }
}

/// Best-batch metrics joined with model metadata: the common input of the
/// analyses, buildable from a store or from a bundle.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub setups: BTreeMap<String, InferenceSetup>,
    pub models: BTreeMap<String, ModelRecord>,
    /// Keyed by `(model_id, setup_id)`.
    pub best: BTreeMap<(String, String), EnergyMetrics>,
}

impl Dataset {
    pub fn from_store(store: &Store, metadata: &[ModelRecord]) -> Self {
        Dataset {
            setups: store.setups.clone(),
            models: metadata.iter().map(|m| (m.model_id.clone(), m.clone())).collect(),
            best: store.best_metrics(),
        }
    }

    pub fn from_bundle(bundle: &Bundle) -> Self {
        Dataset {
            setups: bundle.setups.iter().map(|s| (s.id.clone(), s.setup.clone())).collect(),
            models: bundle.models.iter().map(|m| (m.model_id.clone(), m.clone())).collect(),
            best: bundle.metrics.iter().map(|m| ((m.model_id.clone(), m.setup_id.clone()), m.metrics)).collect(),
        }
    }

    pub fn setup_ids(&self) -> Vec<String> {
        self.setups.keys().cloned().collect()
    }

    /// Best metrics of every model measured on `setup_id`.
    pub fn metrics_for_setup(&self, setup_id: &str) -> BTreeMap<String, EnergyMetrics> {
        self.best.iter().filter(|((_, s), _)| s == setup_id).map(|((m, _), metrics)| (m.clone(), *metrics)).collect()
    }

    /// `setup -> model -> energy per image`.
    pub fn energies_by_setup(&self) -> BTreeMap<String, BTreeMap<String, f64>> {
        let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for ((model, setup), m) in &self.best {
            out.entry(setup.clone()).or_default().insert(model.clone(), m.energy_per_image);
        }
        out
    }

    /// Models measured on `setup_id` that have metadata, with accuracy
    /// averaged over `datasets` (all of a model's datasets when empty).
    /// Models lacking a selected dataset are left out.
    pub fn score_inputs(&self, setup_id: &str, datasets: &[String]) -> Vec<ScoreInput> {
        self.joined(setup_id, datasets)
            .into_iter()
            .map(|(m, acc, metrics)| ScoreInput::new(m.model_id.clone(), acc, metrics.energy_per_image))
            .collect()
    }

    /// `(metadata, accuracy, best metrics)` for each scorable model on a setup.
    pub fn joined(&self, setup_id: &str, datasets: &[String]) -> Vec<(&ModelRecord, f64, EnergyMetrics)> {
        self.best
            .iter()
            .filter(|((_, s), _)| s == setup_id)
            .filter_map(|((model, _), metrics)| {
                let rec = self.models.get(model)?;
                Some((rec, rec.mean_accuracy(datasets)?, *metrics))
            })
            .collect()
    }
}
