//! Analysis tables over a [`Dataset`]: one function per report the `analyze`
//! command can emit.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::analysis::{
    cross_setup_correlation, extrapolate_energy, fit_frontier, input_size_scaling, metric_correlation, naive_estimate,
    paired_improvement, pareto_front, scaling_group_key, underestimation_factors, yearly_hulls, FrontierFit,
    GeometricSummary, MetricCorrelation, PairedReport, ScalingEntry, ScalingReport, SetupCorrelation, TradeoffPoint,
    YearPoint,
};
use crate::datastore::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoRow {
    pub setup_id: String,
    pub model_id: String,
    pub energy: f64,
    pub accuracy: f64,
    pub on_front: bool,
}

type ModelStat = fn(&crate::types::ModelRecord) -> Option<f64>;

fn points(ds: &Dataset, setup_id: &str, datasets: &[String]) -> (Vec<String>, Vec<TradeoffPoint>) {
    ds.joined(setup_id, datasets)
        .into_iter()
        .map(|(m, acc, metrics)| (m.model_id.clone(), TradeoffPoint::new(metrics.energy_per_image, acc)))
        .unzip()
}

/// Every scorable model per setup, front members first in energy order.
pub fn pareto_rows(ds: &Dataset, datasets: &[String]) -> Vec<ParetoRow> {
    let mut rows = Vec::new();
    for setup_id in ds.setups.keys() {
        let (ids, pts) = points(ds, setup_id, datasets);
        if pts.is_empty() {
            continue;
        }
        let front = pareto_front(&pts);
        let mut order = front.clone();
        let mut rest: Vec<usize> = (0..pts.len()).filter(|i| !front.contains(i)).collect();
        rest.sort_by(|&a, &b| pts[a].energy.total_cmp(&pts[b].energy).then(ids[a].cmp(&ids[b])));
        order.extend(rest);
        rows.extend(order.into_iter().map(|i| ParetoRow {
            setup_id: setup_id.clone(),
            model_id: ids[i].clone(),
            energy: pts[i].energy,
            accuracy: pts[i].accuracy,
            on_front: front.contains(&i),
        }));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    pub setup_id: String,
    pub front_size: usize,
    pub fit: FrontierFit,
    /// Energy the trend needs for 100 % accuracy, when representable.
    pub energy_at_100: Option<f64>,
    /// `log10(energy_at_100 / e_max)`.
    pub orders_above_max: Option<f64>,
}

/// Frontier trend per setup. Setups whose front is too small or whose fit
/// fails are returned with the reason instead.
pub fn frontier_fits(ds: &Dataset, datasets: &[String]) -> (Vec<FitRow>, Vec<(String, String)>) {
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for setup_id in ds.setups.keys() {
        let (_, pts) = points(ds, setup_id, datasets);
        let front: Vec<TradeoffPoint> = pareto_front(&pts).into_iter().map(|i| pts[i]).collect();
        match fit_frontier(&front) {
            Ok(fit) => {
                let energy_at_100 = extrapolate_energy(&fit, 100.0).ok();
                rows.push(FitRow {
                    setup_id: setup_id.clone(),
                    front_size: front.len(),
                    fit,
                    energy_at_100,
                    orders_above_max: energy_at_100.map(|e| (e / fit.e_max).log10()),
                });
            }
            Err(e) => skipped.push((setup_id.clone(), e.to_string())),
        }
    }
    (rows, skipped)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearlyRow {
    pub setup_id: String,
    pub year: i32,
    pub members: usize,
    /// Hull vertices, counter-clockwise from the lowest energy.
    pub vertices: Vec<String>,
}

pub fn yearly_rows(ds: &Dataset, datasets: &[String]) -> Vec<YearlyRow> {
    let mut rows = Vec::new();
    for setup_id in ds.setups.keys() {
        let (ids, entries): (Vec<String>, Vec<YearPoint>) = ds
            .joined(setup_id, datasets)
            .into_iter()
            .filter_map(|(m, acc, metrics)| {
                let year = m.pub_year?;
                Some((m.model_id.clone(), YearPoint { point: TradeoffPoint::new(metrics.energy_per_image, acc), year }))
            })
            .unzip();
        rows.extend(yearly_hulls(&entries).into_iter().map(|h| YearlyRow {
            setup_id: setup_id.clone(),
            year: h.year,
            members: h.members,
            vertices: h.vertices.iter().map(|&i| ids[i].clone()).collect(),
        }));
    }
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveRow {
    pub setup_id: String,
    pub model_id: String,
    pub flops: f64,
    pub estimated: f64,
    pub measured: f64,
    pub factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NaiveSummary {
    pub setup_id: String,
    pub factor: GeometricSummary,
}

/// FLOPs-based estimate against measured energy for every setup with a peak
/// compute rating.
pub fn naive_vs_measured(ds: &Dataset) -> Result<(Vec<NaiveRow>, Vec<NaiveSummary>)> {
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (setup_id, setup) in &ds.setups {
        if setup.peak_compute.is_none() {
            log::warn!("setup `{setup_id}` has no peak compute rating; skipped in naive estimate");
            continue;
        }
        let mut setup_rows = Vec::new();
        for ((model_id, s), metrics) in &ds.best {
            if s != setup_id {
                continue;
            }
            let Some(rec) = ds.models.get(model_id) else { continue };
            let estimated = naive_estimate(rec.flops, setup)?;
            if estimated <= 0.0 {
                log::warn!("{model_id}: zero estimated energy, skipped");
                continue;
            }
            setup_rows.push(NaiveRow {
                setup_id: setup_id.clone(),
                model_id: model_id.clone(),
                flops: rec.flops,
                estimated,
                measured: metrics.energy_per_image,
                factor: metrics.energy_per_image / estimated,
            });
        }
        if setup_rows.is_empty() {
            continue;
        }
        let measured: Vec<f64> = setup_rows.iter().map(|r| r.measured).collect();
        let estimated: Vec<f64> = setup_rows.iter().map(|r| r.estimated).collect();
        summaries.push(NaiveSummary {
            setup_id: setup_id.clone(),
            factor: underestimation_factors(&measured, &estimated)?.summary,
        });
        rows.extend(setup_rows);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput(
            "no setup with a peak compute rating has measured models with metadata".into(),
        ));
    }
    Ok((rows, summaries))
}

pub fn paired(ds: &Dataset, baseline: &str, optimized: &str) -> Result<PairedReport> {
    for id in [baseline, optimized] {
        if !ds.setups.contains_key(id) {
            return Err(Error::UnknownId { kind: "setup", id: id.to_string() });
        }
    }
    paired_improvement(&ds.metrics_for_setup(baseline), &ds.metrics_for_setup(optimized))
}

pub fn cross_setup(ds: &Dataset) -> Result<Vec<SetupCorrelation>> {
    cross_setup_correlation(&ds.energies_by_setup())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricCorrelationRow {
    pub setup_id: String,
    #[serde(flatten)]
    pub correlation: MetricCorrelation,
}

/// Energy against parameters, FLOPs and activations, per setup. Statistics
/// with fewer than two known values or no spread are left out.
pub fn metric_correlations(ds: &Dataset) -> Vec<MetricCorrelationRow> {
    let mut rows = Vec::new();
    for setup_id in ds.setups.keys() {
        let joined: Vec<_> = ds
            .best
            .iter()
            .filter(|((_, s), _)| s == setup_id)
            .filter_map(|((m, _), metrics)| ds.models.get(m).map(|rec| (rec, metrics.energy_per_image)))
            .collect();
        let stats: [(&str, ModelStat); 3] =
            [("params", |m| Some(m.params)), ("flops", |m| Some(m.flops)), ("activations", |m| m.activations)];
        for (name, get) in stats {
            let (values, energies): (Vec<f64>, Vec<f64>) =
                joined.iter().filter_map(|(rec, e)| get(rec).map(|v| (v, *e))).unzip();
            match metric_correlation(name, &values, &energies) {
                Ok(correlation) => rows.push(MetricCorrelationRow { setup_id: setup_id.clone(), correlation }),
                Err(e) => log::info!("{setup_id}: no {name} correlation ({e})"),
            }
        }
    }
    rows
}

/// Input-resolution scaling per setup, grouping models whose ids differ only
/// by the resolution token.
pub fn input_scaling(ds: &Dataset, datasets: &[String]) -> BTreeMap<String, ScalingReport> {
    ds.setups
        .keys()
        .map(|setup_id| {
            let entries: Vec<ScalingEntry> = ds
                .joined(setup_id, datasets)
                .into_iter()
                .map(|(m, acc, metrics)| ScalingEntry {
                    group: scaling_group_key(&m.model_id, m.input_size),
                    model_id: m.model_id.clone(),
                    input_size: m.input_size,
                    accuracy: acc,
                    energy: metrics.energy_per_image,
                })
                .collect();
            (setup_id.clone(), input_size_scaling(&entries))
        })
        .collect()
}
