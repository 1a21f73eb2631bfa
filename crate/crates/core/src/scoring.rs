//! Efficiency scores over (accuracy, energy per image): the thresholded
//! accuracy-per-joule ratio and the weighted Manhattan distance to the ideal
//! point (100 %, 0 J). Also ranking and contour grids for the explorer.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ScoreParams, Validate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Ratio,
    Manhattan,
}

impl FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ratio" => Ok(Metric::Ratio),
            "manhattan" => Ok(Metric::Manhattan),
            other => Err(Error::InvalidInput(format!("unknown metric `{other}`"))),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Ratio => "ratio",
            Metric::Manhattan => "manhattan",
        })
    }
}

/// How the energy term enters the Manhattan score.
///
/// `Literal` uses `E/N` as written in the formula, so the energy term lives in
/// [0, 1] next to an accuracy term in [0, 100]. `Balanced` uses `100 * E/N`
/// so both terms share the 0 to 100 range.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyScale {
    #[default]
    Literal,
    Balanced,
}

fn check_params(params: &ScoreParams) -> Result<()> {
    let report = params.validate();
    if report.is_empty() {
        Ok(())
    } else {
        Err(Error::InvalidInput(report.violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")))
    }
}

/// `accuracy / energy` in %/J, or `None` when below the accuracy threshold.
pub fn ratio_score(accuracy: f64, energy: f64, params: &ScoreParams) -> Result<Option<f64>> {
    if !(energy.is_finite() && energy > 0.0) {
        return Err(Error::InvalidInput(format!("energy {energy} J must be positive")));
    }
    if accuracy < params.min_accuracy {
        return Ok(None);
    }
    Ok(Some(accuracy / energy))
}

/// `100 - (W * x + (1 - W) * (100 - A))` with `x` the normalized energy.
pub fn manhattan_score(accuracy: f64, energy: f64, params: &ScoreParams, scale: EnergyScale) -> Result<f64> {
    check_params(params)?;
    if !(energy.is_finite() && energy >= 0.0) {
        return Err(Error::InvalidInput(format!("energy {energy} J must be nonnegative")));
    }
    let x = match scale {
        EnergyScale::Literal => energy / params.norm,
        EnergyScale::Balanced => 100.0 * energy / params.norm,
    };
    let w = params.weight;
    // the endpoints are evaluated in collapsed form so W=0 returns A and W=1
    // returns 100 - x without rounding noise
    Ok(if w == 0.0 {
        accuracy
    } else if w == 1.0 {
        100.0 - x
    } else {
        100.0 - (w * x + (1.0 - w) * (100.0 - accuracy))
    })
}

/// Score under `metric`; `None` means filtered out by the accuracy threshold.
pub fn score(
    metric: Metric,
    accuracy: f64,
    energy: f64,
    params: &ScoreParams,
    scale: EnergyScale,
) -> Result<Option<f64>> {
    match metric {
        Metric::Ratio => ratio_score(accuracy, energy, params),
        Metric::Manhattan => {
            if accuracy < params.min_accuracy {
                return Ok(None);
            }
            manhattan_score(accuracy, energy, params, scale).map(Some)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreInput {
    pub model_id: String,
    pub accuracy: f64,
    pub energy: f64,
}

impl ScoreInput {
    pub fn new(model_id: impl Into<String>, accuracy: f64, energy: f64) -> Self {
        ScoreInput { model_id: model_id.into(), accuracy, energy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ranked {
    pub rank: usize,
    pub model_id: String,
    pub accuracy: f64,
    pub energy: f64,
    pub score: f64,
}

/// Default normalization: the largest energy among models that pass the
/// accuracy threshold.
pub fn auto_norm(inputs: &[ScoreInput], min_accuracy: f64) -> Option<f64> {
    inputs
        .iter()
        .filter(|m| m.accuracy >= min_accuracy)
        .map(|m| m.energy)
        .filter(|e| e.is_finite())
        .reduce(f64::max)
        .filter(|n| *n > 0.0)
}

/// Models passing the threshold, best score first; equal scores are ordered
/// by model id. `top_n = None` keeps everything.
pub fn rank(
    inputs: &[ScoreInput],
    metric: Metric,
    params: &ScoreParams,
    scale: EnergyScale,
    top_n: Option<usize>,
) -> Result<Vec<Ranked>> {
    let mut scored = Vec::with_capacity(inputs.len());
    for m in inputs {
        if let Some(s) = score(metric, m.accuracy, m.energy, params, scale)? {
            scored.push((s, m));
        }
    }
    if scored.is_empty() {
        return Err(Error::AllFiltered);
    }
    scored
        .sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal).then_with(|| a.1.model_id.cmp(&b.1.model_id)));
    Ok(scored
        .into_iter()
        .take(top_n.unwrap_or(usize::MAX))
        .enumerate()
        .map(|(i, (score, m))| Ranked {
            rank: i + 1,
            model_id: m.model_id.clone(),
            accuracy: m.accuracy,
            energy: m.energy,
            score,
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub metric: Metric,
    pub scale: EnergyScale,
    pub params: ScoreParams,
    /// Log-spaced energy axis (columns).
    pub energies: Vec<f64>,
    /// Linear accuracy axis (rows).
    pub accuracies: Vec<f64>,
    /// `values[row][col]`; `None` where the accuracy threshold filters.
    pub values: Vec<Vec<Option<f64>>>,
}

/// `n` points from `lo` to `hi` inclusive; the endpoints are exact.
fn axis(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..n)
        .map(|i| match i {
            0 => lo,
            i if i == n - 1 => hi,
            i => f(i as f64 / (n - 1) as f64),
        })
        .collect()
}

pub fn score_grid(
    metric: Metric,
    params: &ScoreParams,
    scale: EnergyScale,
    energy_range: (f64, f64),
    accuracy_range: (f64, f64),
    resolution: usize,
) -> Result<ScoreGrid> {
    check_params(params)?;
    let (e_lo, e_hi) = energy_range;
    let (a_lo, a_hi) = accuracy_range;
    if resolution < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    if !(e_lo.is_finite() && e_hi.is_finite() && 0.0 < e_lo && e_lo < e_hi) {
        return Err(Error::InvalidInput(format!("bad energy range [{e_lo}, {e_hi}]")));
    }
    if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
        return Err(Error::InvalidInput(format!("bad accuracy range [{a_lo}, {a_hi}]")));
    }
    let (l_lo, l_hi) = (e_lo.log10(), e_hi.log10());
    let energies = axis(e_lo, e_hi, resolution, |t| 10f64.powf(l_lo + t * (l_hi - l_lo)));
    let accuracies = axis(a_lo, a_hi, resolution, |t| a_lo + t * (a_hi - a_lo));
    let values = accuracies
        .iter()
        .map(|&a| energies.iter().map(|&e| score(metric, a, e, params, scale)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(ScoreGrid { metric, scale, params: *params, energies, accuracies, values })
}

/// One row of the shared score test-vector file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector {
    pub accuracy: f64,
    pub energy: f64,
    pub weight: f64,
    pub norm: f64,
    pub min_accuracy: f64,
    /// `None` when filtered out.
    pub ratio: Option<f64>,
    pub manhattan: f64,
    pub manhattan_balanced: f64,
}

impl ScoreVector {
    pub fn compute(accuracy: f64, energy: f64, params: &ScoreParams) -> Result<Self> {
        Ok(ScoreVector {
            accuracy,
            energy,
            weight: params.weight,
            norm: params.norm,
            min_accuracy: params.min_accuracy,
            ratio: ratio_score(accuracy, energy, params)?,
            manhattan: manhattan_score(accuracy, energy, params, EnergyScale::Literal)?,
            manhattan_balanced: manhattan_score(accuracy, energy, params, EnergyScale::Balanced)?,
        })
    }

    pub fn params(&self) -> ScoreParams {
        ScoreParams { weight: self.weight, norm: self.norm, min_accuracy: self.min_accuracy }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVectorFile {
    pub format: String,
    pub version: String,
    pub tolerance: f64,
    pub vectors: Vec<ScoreVector>,
}

pub const SCORE_VECTOR_FORMAT: &str = "enerprof-score-vectors";
