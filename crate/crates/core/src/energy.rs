//! Energy accounting for measured runs.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::{EnergyMetrics, InferenceSetup, Nanos, PowerSample, RunMeasurement, NANOS_PER_SEC};

/// Average power above this multiple of TDP is flagged as an anomalous
/// measurement (sensor transients stay below it).
pub const TDP_ANOMALY_FACTOR: f64 = 1.02;

/// Power at `t`, linearly interpolated between the bracketing samples and
/// held constant beyond the first/last sample.
fn power_at(samples: &[PowerSample], t: Nanos) -> f64 {
    let idx = samples.partition_point(|s| s.t < t);
    if idx == samples.len() {
        return samples[samples.len() - 1].power;
    }
    let after = samples[idx];
    if after.t == t || idx == 0 {
        return after.power;
    }
    let before = samples[idx - 1];
    let frac = (t - before.t) as f64 / (after.t - before.t) as f64;
    before.power + (after.power - before.power) * frac
}

/// Trapezoidal integral of power over `[t0, t1]`, in joules.
///
/// Boundary values are interpolated from the neighbouring samples. Requires
/// `samples` ordered by `t` and at least two of them inside the window.
pub fn integrate_energy(samples: &[PowerSample], t0: Nanos, t1: Nanos) -> Result<f64> {
    if t0 >= t1 {
        return Err(Error::InvalidInput(format!("empty window [{t0}, {t1}]")));
    }
    let inside = samples.iter().filter(|s| s.t >= t0 && s.t <= t1).count();
    if inside < 2 {
        return Err(Error::InsufficientSamples { found: inside });
    }

    let mut prev_t = t0;
    let mut prev_p = power_at(samples, t0);
    let mut joules = 0.0;
    for s in samples.iter().filter(|s| s.t > t0 && s.t < t1) {
        joules += 0.5 * (prev_p + s.power) * ((s.t - prev_t) as f64 / NANOS_PER_SEC);
        prev_t = s.t;
        prev_p = s.power;
    }
    let end_p = power_at(samples, t1);
    joules += 0.5 * (prev_p + end_p) * ((t1 - prev_t) as f64 / NANOS_PER_SEC);
    Ok(joules)
}

/// Metrics from run totals. `batches` completed batches of `batch_size`
/// images consumed `joules` over `wall_time` seconds.
pub fn metrics_from_totals(joules: f64, batches: u64, batch_size: u32, wall_time: f64) -> Result<EnergyMetrics> {
    let images = batches * batch_size as u64;
    if images == 0 {
        return Err(Error::EmptyRun);
    }
    if !(wall_time.is_finite() && wall_time > 0.0) {
        return Err(Error::InvalidInput(format!("wall time {wall_time} not positive")));
    }
    if !(joules.is_finite() && joules >= 0.0) {
        return Err(Error::InvalidInput(format!("energy {joules} J not a nonnegative number")));
    }
    let n = images as f64;
    Ok(EnergyMetrics {
        energy_per_image: joules / n,
        throughput: n / wall_time,
        latency: wall_time / batches as f64,
        avg_power: joules / wall_time,
        batch_size,
        images_processed: images,
        wall_time,
    })
}

/// Derive metrics from a run's own samples and batch marks. The window runs
/// from `window_start` to the last batch completion.
pub fn derive_metrics(run: &RunMeasurement) -> Result<EnergyMetrics> {
    let Some(end) = run.window_end() else {
        return Err(Error::EmptyRun);
    };
    let joules = integrate_energy(&run.samples, run.window_start, end)?;
    let wall = (end - run.window_start) as f64 / NANOS_PER_SEC;
    metrics_from_totals(joules, run.batch_marks.len() as u64, run.batch_size, wall)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TdpHeadroom {
    /// Average power over TDP.
    pub ratio: f64,
    /// Set when `ratio` exceeds [`TDP_ANOMALY_FACTOR`].
    pub anomalous: bool,
}

pub fn tdp_headroom(metrics: &EnergyMetrics, setup: &InferenceSetup) -> Result<TdpHeadroom> {
    if !(setup.tdp.is_finite() && setup.tdp > 0.0) {
        return Err(Error::InvalidInput(format!("tdp {} not positive", setup.tdp)));
    }
    let ratio = metrics.avg_power / setup.tdp;
    Ok(TdpHeadroom { ratio, anomalous: ratio > TDP_ANOMALY_FACTOR })
}

/// The lowest energy-per-image entry; ties go to the smaller batch size.
pub fn best_metrics<'a, I>(metrics: I) -> Option<&'a EnergyMetrics>
where
    I: IntoIterator<Item = &'a EnergyMetrics>,
{
    metrics.into_iter().fold(None, |best: Option<&EnergyMetrics>, m| match best {
        Some(b)
            if b.energy_per_image < m.energy_per_image
                || (b.energy_per_image == m.energy_per_image && b.batch_size <= m.batch_size) =>
        {
            Some(b)
        }
        _ => Some(m),
    })
}

/// Most efficient batch size among runs of one model on one setup. Runs
/// without derived metrics are ignored.
pub fn best_batch(runs: &[RunMeasurement]) -> Option<(u32, EnergyMetrics)> {
    best_metrics(runs.iter().filter_map(|r| r.metrics.as_ref())).map(|m| (m.batch_size, *m))
}
