//! Inference energy profiling: power telemetry sampling, a batch-size sweep
//! harness, energy metrics, trade-off analysis, efficiency scores and a
//! results store that feeds a static explorer.

pub mod analysis;
pub mod datastore;
pub mod energy;
pub mod error;
pub mod harness;
pub mod report;
pub mod scenario;
pub mod scoring;
pub mod telemetry;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    EnergyMetrics, Family, InferenceSetup, ModelRecord, Nanos, PowerSample, QualityFlag, RunMeasurement, ScoreParams,
    Validate, ValidationReport,
};
