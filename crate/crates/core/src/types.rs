//! Shared domain vocabulary: telemetry samples, inference setups, model
//! metadata, run measurements and derived metrics, plus invariant checks.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Nanoseconds since the Unix epoch.
pub type Nanos = u64;

pub const NANOS_PER_SEC: f64 = 1e9;

/// Relative tolerance for the `avg_power = energy_per_image * throughput` identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-6;

/// One timestamped telemetry reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSample {
    pub t: Nanos,
    /// Power draw in watts.
    pub power: f64,
    /// GPU utilization, percent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub util: Option<u32>,
    /// Memory used, MiB.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mem_used: Option<u64>,
    /// Temperature, degrees Celsius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temp: Option<i32>,
}

impl PowerSample {
    pub fn new(t: Nanos, power: f64) -> Self {
        PowerSample { t, power, util: None, mem_used: None, temp: None }
    }
}

/// A GPU + inference runtime pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceSetup {
    pub gpu_label: String,
    pub runtime_label: String,
    /// Thermal design power, watts.
    pub tdp: f64,
    /// Peak FLOPs per second, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub peak_compute: Option<f64>,
}

impl InferenceSetup {
    pub fn new(gpu_label: impl Into<String>, runtime_label: impl Into<String>, tdp: f64) -> Self {
        InferenceSetup { gpu_label: gpu_label.into(), runtime_label: runtime_label.into(), tdp, peak_compute: None }
    }

    pub fn with_peak_compute(mut self, flops_per_sec: f64) -> Self {
        self.peak_compute = Some(flops_per_sec);
        self
    }

    /// Stable identifier, `<gpu>/<runtime>`.
    pub fn id(&self) -> String {
        format!("{}/{}", self.gpu_label, self.runtime_label)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "MLP")]
    Mlp,
    #[serde(rename = "CNN")]
    Cnn,
    Transformer,
    Hybrid,
    #[default]
    Other,
}

impl Family {
    /// Lenient classification from a metadata cell; unknown labels map to `Other`.
    pub fn classify(label: &str) -> Family {
        match label.trim().to_ascii_lowercase().as_str() {
            "mlp" => Family::Mlp,
            "cnn" | "convnet" | "conv" => Family::Cnn,
            "transformer" | "vit" => Family::Transformer,
            "hybrid" => Family::Hybrid,
            _ => Family::Other,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Mlp => "MLP",
            Family::Cnn => "CNN",
            Family::Transformer => "Transformer",
            Family::Hybrid => "Hybrid",
            Family::Other => "Other",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Model metadata and per-dataset accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRecord {
    pub model_id: String,
    pub family: Family,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pub_year: Option<i32>,
    pub params: f64,
    /// Operation count per forward pass, stored exactly as ingested.
    pub flops: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub activations: Option<f64>,
    /// Input resolution, pixels per side.
    pub input_size: u32,
    /// Dataset id to top-1 accuracy in percent.
    pub accuracies: BTreeMap<String, f64>,
    /// External reference page for the model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
}

impl ModelRecord {
    pub fn new(model_id: impl Into<String>, family: Family, params: f64, flops: f64, input_size: u32) -> Self {
        ModelRecord {
            model_id: model_id.into(),
            family,
            pub_year: None,
            params,
            flops,
            activations: None,
            input_size,
            accuracies: BTreeMap::new(),
            url: None,
        }
    }

    pub fn with_accuracy(mut self, dataset: impl Into<String>, pct: f64) -> Self {
        self.accuracies.insert(dataset.into(), pct);
        self
    }

    pub fn with_year(mut self, year: i32) -> Self {
        self.pub_year = Some(year);
        self
    }

    /// Mean accuracy over `datasets`, or `None` if any of them is missing.
    /// An empty selection means every dataset present on the record.
    pub fn mean_accuracy(&self, datasets: &[String]) -> Option<f64> {
        if datasets.is_empty() {
            if self.accuracies.is_empty() {
                return None;
            }
            let sum: f64 = self.accuracies.values().sum();
            return Some(sum / self.accuracies.len() as f64);
        }
        let mut sum = 0.0;
        for d in datasets {
            sum += self.accuracies.get(d)?;
        }
        Some(sum / datasets.len() as f64)
    }
}

/// Energy, throughput, latency and power for one measured run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyMetrics {
    /// Joules per image.
    pub energy_per_image: f64,
    /// Images per second.
    pub throughput: f64,
    /// Seconds per batch.
    pub latency: f64,
    /// Watts.
    pub avg_power: f64,
    pub batch_size: u32,
    pub images_processed: u64,
    /// Seconds.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityFlag {
    /// Inter-sample interval above the gap threshold inside the window.
    SamplerGap,
    /// Average power above the TDP anomaly threshold.
    TdpAnomaly,
    /// Telemetry stream contained malformed lines.
    MalformedTelemetry,
}

/// One measured run of a model at a batch size on a setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeasurement {
    pub model_id: String,
    pub setup: InferenceSetup,
    pub batch_size: u32,
    /// When the first batch command of the measured run was issued.
    pub window_start: Nanos,
    /// Completion timestamp of every measured batch.
    pub batch_marks: Vec<Nanos>,
    pub samples: Vec<PowerSample>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<EnergyMetrics>,
    #[serde(default)]
    pub quality_flags: BTreeSet<QualityFlag>,
    /// Idle draw annotation in watts; never subtracted from metrics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub idle_baseline: Option<f64>,
}

impl RunMeasurement {
    /// End of the measured window: the last batch completion.
    pub fn window_end(&self) -> Option<Nanos> {
        self.batch_marks.last().copied()
    }
}

/// Parameters for the efficiency scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreParams {
    /// Energy weight W in [0, 1].
    pub weight: f64,
    /// Energy normalization N in joules, > 0.
    pub norm: f64,
    /// Minimum accuracy threshold in percent.
    pub min_accuracy: f64,
}

impl Default for ScoreParams {
    fn default() -> Self {
        ScoreParams { weight: 0.5, norm: 1.0, min_accuracy: 0.0 }
    }
}

/// One violated invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Result of [`Validate::validate`]; empty iff every invariant holds.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn contains(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation { field: field.into(), message: message.into() });
    }

    fn check(&mut self, ok: bool, field: &str, message: &str) {
        if !ok {
            self.push(field, message);
        }
    }

    fn extend_prefixed(&mut self, prefix: &str, other: ValidationReport) {
        for v in other.violations {
            self.push(format!("{prefix}.{}", v.field), v.message);
        }
    }
}

pub trait Validate {
    fn validate(&self) -> ValidationReport;
}

fn nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs());
    scale == 0.0 || (a - b).abs() <= tol * scale
}

impl Validate for PowerSample {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(nonneg(self.power), "power", "power negative or not finite");
        r.check(self.t > 0, "t", "timestamp not strictly positive");
        if let Some(u) = self.util {
            r.check(u <= 100, "util", "utilization out of [0,100]");
        }
        r
    }
}

impl Validate for InferenceSetup {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(self.tdp.is_finite() && self.tdp > 0.0, "tdp", "tdp not positive");
        if let Some(p) = self.peak_compute {
            r.check(p.is_finite() && p > 0.0, "peak_compute", "peak compute not positive");
        }
        r.check(!self.gpu_label.is_empty(), "gpu_label", "empty gpu label");
        r.check(!self.runtime_label.is_empty(), "runtime_label", "empty runtime label");
        r
    }
}

impl Validate for ModelRecord {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.model_id.is_empty(), "model_id", "empty model id");
        r.check(nonneg(self.params), "params", "params negative or not finite");
        r.check(nonneg(self.flops), "flops", "flops negative or not finite");
        if let Some(a) = self.activations {
            r.check(nonneg(a), "activations", "activations negative or not finite");
        }
        r.check(self.input_size > 0, "input_size", "input size not positive");
        for (ds, acc) in &self.accuracies {
            r.check(
                acc.is_finite() && (0.0..=100.0).contains(acc),
                &format!("accuracies.{ds}"),
                "accuracy out of [0,100]",
            );
        }
        r
    }
}

impl Validate for EnergyMetrics {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(nonneg(self.energy_per_image), "energy_per_image", "negative or not finite");
        r.check(nonneg(self.throughput), "throughput", "negative or not finite");
        r.check(nonneg(self.latency), "latency", "negative or not finite");
        r.check(nonneg(self.avg_power), "avg_power", "negative or not finite");
        r.check(nonneg(self.wall_time), "wall_time", "negative or not finite");
        if self.images_processed > 0 {
            r.check(self.wall_time > 0.0, "wall_time", "zero wall time with images processed");
        }
        r.check(
            rel_close(self.avg_power, self.energy_per_image * self.throughput, IDENTITY_TOLERANCE),
            "avg_power",
            "avg power != energy per image x throughput",
        );
        r
    }
}

impl Validate for ScoreParams {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check((0.0..=1.0).contains(&self.weight), "weight", "weight out of [0,1]");
        r.check(self.norm.is_finite() && self.norm > 0.0, "norm", "norm not positive");
        r.check((0.0..=100.0).contains(&self.min_accuracy), "min_accuracy", "min accuracy out of [0,100]");
        r
    }
}

impl Validate for RunMeasurement {
    fn validate(&self) -> ValidationReport {
        let mut r = ValidationReport::default();
        r.check(!self.model_id.is_empty(), "model_id", "empty model id");
        r.extend_prefixed("setup", self.setup.validate());
        r.check(self.batch_size > 0, "batch_size", "batch size not positive");
        r.check(self.batch_marks.windows(2).all(|w| w[0] < w[1]), "batch_marks", "marks not increasing");
        if let Some(&first) = self.batch_marks.first() {
            r.check(self.window_start < first, "window_start", "window start not before first mark");
        }
        r.check(self.samples.windows(2).all(|w| w[0].t <= w[1].t), "samples", "samples not ordered by t");
        for (i, s) in self.samples.iter().enumerate() {
            r.extend_prefixed(&format!("samples[{i}]"), s.validate());
        }
        if let Some(m) = &self.metrics {
            r.extend_prefixed("metrics", m.validate());
            r.check(m.batch_size == self.batch_size, "metrics.batch_size", "batch size mismatch");
            r.check(
                m.images_processed == self.batch_marks.len() as u64 * self.batch_size as u64,
                "metrics.images_processed",
                "images processed != marks x batch size",
            );
            match crate::energy::derive_metrics(self) {
                Ok(fresh) => r.check(fresh == *m, "metrics", "metrics not derived from these samples and marks"),
                Err(e) => r.push("metrics", format!("metrics not derivable: {e}")),
            }
        }
        r
    }
}
