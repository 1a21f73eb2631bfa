//! FLOPs-based energy estimate and its error against measurements.

use serde::Serialize;

use super::stats::{geometric_summary, GeometricSummary};
use crate::error::{Error, Result};
use crate::types::InferenceSetup;

/// Idealized energy per forward pass: `flops / peak_compute * tdp` joules.
pub fn naive_estimate(flops: f64, setup: &InferenceSetup) -> Result<f64> {
    let peak = setup.peak_compute.ok_or_else(|| Error::MissingPeakCompute(setup.id()))?;
    if !(flops.is_finite() && flops >= 0.0) {
        return Err(Error::InvalidInput(format!("flops {flops} must be nonnegative")));
    }
    Ok(flops / peak * setup.tdp)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Underestimation {
    /// measured / estimated, per model.
    pub factors: Vec<f64>,
    pub summary: GeometricSummary,
}

pub fn underestimation_factors(measured: &[f64], estimated: &[f64]) -> Result<Underestimation> {
    if measured.len() != estimated.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} measured vs {} estimated",
            measured.len(),
            estimated.len()
        )));
    }
    if measured.iter().chain(estimated).any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("energies must be positive".into()));
    }
    let factors: Vec<f64> = measured.iter().zip(estimated).map(|(m, e)| m / e).collect();
    let summary = geometric_summary(&factors)?;
    Ok(Underestimation { factors, summary })
}
