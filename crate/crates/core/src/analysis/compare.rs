//! Comparisons across setups, input sizes and model statistics.

use std::collections::BTreeMap;

use serde::Serialize;

use super::stats::{geometric_summary, linear_fit, pearson, spearman, GeometricSummary};
use crate::error::{Error, Result};
use crate::types::EnergyMetrics;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedImprovement {
    pub model_id: String,
    /// optimized / baseline throughput.
    pub throughput_ratio: f64,
    /// baseline / optimized energy per image.
    pub energy_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedReport {
    pub pairs: Vec<PairedImprovement>,
    pub energy_ratio: GeometricSummary,
    pub throughput_ratio: GeometricSummary,
    /// Pearson of ln(throughput ratio) against ln(energy ratio); `None` when
    /// either side has no spread.
    pub log_correlation: Option<f64>,
}

/// Per-model improvement from a baseline setup to an optimized one, over the
/// models both setups measured.
pub fn paired_improvement(
    baseline: &BTreeMap<String, EnergyMetrics>,
    optimized: &BTreeMap<String, EnergyMetrics>,
) -> Result<PairedReport> {
    let mut pairs = Vec::new();
    for (model_id, base) in baseline {
        let Some(opt) = optimized.get(model_id) else { continue };
        let throughput_ratio = opt.throughput / base.throughput;
        let energy_ratio = base.energy_per_image / opt.energy_per_image;
        if !(throughput_ratio.is_finite() && throughput_ratio > 0.0 && energy_ratio.is_finite() && energy_ratio > 0.0) {
            return Err(Error::InvalidInput(format!("{model_id}: ratios must be positive and finite")));
        }
        pairs.push(PairedImprovement { model_id: model_id.clone(), throughput_ratio, energy_ratio });
    }
    if pairs.is_empty() {
        return Err(Error::InvalidInput("no models shared by both setups".into()));
    }
    let energy: Vec<f64> = pairs.iter().map(|p| p.energy_ratio).collect();
    let throughput: Vec<f64> = pairs.iter().map(|p| p.throughput_ratio).collect();
    let ln = |v: &[f64]| v.iter().map(|x| x.ln()).collect::<Vec<_>>();
    Ok(PairedReport {
        energy_ratio: geometric_summary(&energy)?,
        throughput_ratio: geometric_summary(&throughput)?,
        log_correlation: pearson(&ln(&throughput), &ln(&energy)).ok(),
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SetupCorrelation {
    pub setup_a: String,
    pub setup_b: String,
    pub shared_models: usize,
    pub pearson: f64,
    pub spearman: f64,
}

/// Pairwise correlation of per-model energy between setups.
/// `energies[setup][model]` is the energy per image.
pub fn cross_setup_correlation(energies: &BTreeMap<String, BTreeMap<String, f64>>) -> Result<Vec<SetupCorrelation>> {
    if energies.len() < 2 {
        return Err(Error::InvalidInput("need at least two setups".into()));
    }
    let setups: Vec<&String> = energies.keys().collect();
    let mut out = Vec::new();
    for (i, a) in setups.iter().enumerate() {
        for b in &setups[i + 1..] {
            let (ea, eb) = (&energies[*a], &energies[*b]);
            let (xs, ys): (Vec<f64>, Vec<f64>) = ea.iter().filter_map(|(m, x)| eb.get(m).map(|y| (*x, *y))).unzip();
            if xs.len() < 2 {
                return Err(Error::InvalidInput(format!(
                    "setups {a} and {b} share {} model(s), need at least 2",
                    xs.len()
                )));
            }
            out.push(SetupCorrelation {
                setup_a: (*a).clone(),
                setup_b: (*b).clone(),
                shared_models: xs.len(),
                pearson: pearson(&xs, &ys)?,
                spearman: spearman(&xs, &ys)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingEntry {
    pub group: String,
    pub model_id: String,
    pub input_size: u32,
    pub accuracy: f64,
    pub energy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupScaling {
    pub group: String,
    /// Entries sorted by input size.
    pub input_sizes: Vec<u32>,
    /// Accuracy minus the accuracy at the smallest input size.
    pub accuracy_deltas: Vec<f64>,
    /// Energy over the energy at the smallest input size.
    pub energy_ratios: Vec<f64>,
    /// Least-squares energy per pixel; `None` when all sizes are equal.
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingReport {
    pub groups: Vec<GroupScaling>,
    /// Groups with a single entry.
    pub skipped: Vec<String>,
}

/// How accuracy and energy change with input resolution inside each group of
/// variants of the same model.
pub fn input_size_scaling(entries: &[ScalingEntry]) -> ScalingReport {
    let mut groups: BTreeMap<&str, Vec<&ScalingEntry>> = BTreeMap::new();
    for e in entries {
        groups.entry(e.group.as_str()).or_default().push(e);
    }
    let mut report = ScalingReport { groups: Vec::new(), skipped: Vec::new() };
    for (group, mut members) in groups {
        if members.len() < 2 {
            log::warn!("input-size scaling: group `{group}` has a single entry, skipped");
            report.skipped.push(group.to_string());
            continue;
        }
        members.sort_by(|a, b| a.input_size.cmp(&b.input_size).then(a.model_id.cmp(&b.model_id)));
        let base = members[0];
        let pixels: Vec<f64> = members.iter().map(|m| (m.input_size as f64).powi(2)).collect();
        let energy: Vec<f64> = members.iter().map(|m| m.energy).collect();
        let fit = linear_fit(&pixels, &energy).ok();
        report.groups.push(GroupScaling {
            group: group.to_string(),
            input_sizes: members.iter().map(|m| m.input_size).collect(),
            accuracy_deltas: members.iter().map(|m| m.accuracy - base.accuracy).collect(),
            energy_ratios: members.iter().map(|m| m.energy / base.energy).collect(),
            slope: fit.map(|f| f.0),
            intercept: fit.map(|f| f.1),
        });
    }
    report
}

/// Group key for resolution variants: the model id with any `_`/`.`/`-`
/// delimited token equal to the input size removed, together with the
/// delimiter in front of it.
pub fn scaling_group_key(model_id: &str, input_size: u32) -> String {
    let size = input_size.to_string();
    let mut pieces: Vec<(Option<char>, String)> = vec![(None, String::new())];
    for c in model_id.chars() {
        if matches!(c, '_' | '.' | '-') {
            pieces.push((Some(c), String::new()));
        } else {
            pieces.last_mut().expect("nonempty").1.push(c);
        }
    }
    let kept: Vec<&(Option<char>, String)> = pieces.iter().filter(|(_, t)| *t != size).collect();
    let mut key = String::new();
    for (i, (delim, token)) in kept.iter().enumerate() {
        if i > 0 {
            if let Some(d) = delim {
                key.push(*d);
            }
        }
        key.push_str(token);
    }
    key
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCorrelation {
    pub metric: String,
    pub models: usize,
    pub pearson: f64,
    pub spearman: f64,
}

/// Correlation of energy with a model statistic (parameters, FLOPs, ...).
pub fn metric_correlation(metric: &str, values: &[f64], energies: &[f64]) -> Result<MetricCorrelation> {
    Ok(MetricCorrelation {
        metric: metric.to_string(),
        models: values.len(),
        pearson: pearson(values, energies)?,
        spearman: spearman(values, energies)?,
    })
}
