//! Deterministic synthetic scenarios with closed-form ground truth.
//!
//! Each case pairs a simulated workload on a slotted virtual clock with a
//! replay power log that is constant at `P(b)` while batch size `b` is busy
//! and at the idle level otherwise. Because every measured window sits inside
//! a constant-power stretch, the expected metrics are exact:
//!
//! ```text
//! energy_per_image = P(b) * lat(b) / b
//! throughput       = b / lat(b)
//! avg_power        = P(b)
//! ```

use serde::{Deserialize, Serialize};

use crate::analysis::TradeoffPoint;
use crate::harness::{FailureTrigger, SimConfig, SweepConfig};
use crate::types::{EnergyMetrics, Family, InferenceSetup, ModelRecord, Nanos, PowerSample};

/// 2024-01-01T00:00:00Z.
pub const SCENARIO_START: Nanos = 1_704_067_200_000_000_000;
/// Virtual time reserved for each batch size (one `CONFIG` each).
pub const SLOT_NS: u64 = 20_000_000_000;
pub const LOG_RATE_HZ: f64 = 100.0;
const LOG_PERIOD_NS: u64 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioCase {
    pub model_id: String,
    pub setup: InferenceSetup,
    pub base_latency_ns: u64,
    pub per_image_ns: u64,
    /// Smallest batch size that runs out of memory.
    pub oom_batch: u32,
    pub idle_power: f64,
    /// Busy power at batch size 1, its increase per doubling, and its ceiling.
    pub power_base: f64,
    pub power_step: f64,
    pub power_cap: f64,
}

fn ns_to_s(ns: u64) -> f64 {
    ns as f64 / 1e9
}

impl ScenarioCase {
    pub fn latency_ns(&self, batch_size: u32) -> u64 {
        self.base_latency_ns + self.per_image_ns * batch_size as u64
    }

    pub fn power(&self, batch_size: u32) -> f64 {
        let doublings = batch_size.ilog2() as f64;
        (self.power_base + self.power_step * doublings).min(self.power_cap)
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            start: SCENARIO_START,
            base_latency_ns: self.base_latency_ns,
            per_image_ns: self.per_image_ns,
            slot_ns: Some(SLOT_NS),
            oom: Some(FailureTrigger { min_batch: self.oom_batch, after_execs: 0 }),
            ..SimConfig::default()
        }
    }

    /// Batch sizes the sweep is expected to measure.
    pub fn feasible_batches(&self, cfg: &SweepConfig) -> Vec<u32> {
        std::iter::successors(Some(cfg.start_batch), |b| b.checked_mul(2))
            .take_while(|b| *b < self.oom_batch && cfg.max_batch.is_none_or(|m| *b <= m))
            .collect()
    }

    /// Warm-up and measured repetitions at `batch_size`.
    pub fn expected_reps(&self, batch_size: u32, cfg: &SweepConfig) -> (u64, u64) {
        let lat = self.latency_ns(batch_size);
        let warm_ns = (cfg.warmup_min_runtime * 1e9).round() as u64;
        let warmup = (cfg.warmup_min_reps as u64).max(warm_ns.div_ceil(lat));
        let run_ns = (cfg.min_runtime * 1e9).round() as u64;
        let measured = (cfg.min_reps as u64 + 1).max(run_ns / lat + 1);
        (warmup, measured)
    }

    /// Measured window of the `slot`-th batch size.
    pub fn expected_window(&self, slot: usize, batch_size: u32, cfg: &SweepConfig) -> (Nanos, Nanos) {
        let lat = self.latency_ns(batch_size);
        let (warmup, measured) = self.expected_reps(batch_size, cfg);
        let start = SCENARIO_START + slot as u64 * SLOT_NS + warmup * lat;
        (start, start + measured * lat)
    }

    pub fn expected_metrics(&self, batch_size: u32, cfg: &SweepConfig) -> EnergyMetrics {
        let lat = ns_to_s(self.latency_ns(batch_size));
        let (_, reps) = self.expected_reps(batch_size, cfg);
        let b = batch_size as f64;
        let p = self.power(batch_size);
        EnergyMetrics {
            energy_per_image: p * lat / b,
            throughput: b / lat,
            latency: lat,
            avg_power: p,
            batch_size,
            images_processed: reps * batch_size as u64,
            wall_time: reps as f64 * lat,
        }
    }

    /// Closed-form most efficient batch size.
    pub fn expected_best(&self, cfg: &SweepConfig) -> EnergyMetrics {
        self.feasible_batches(cfg)
            .into_iter()
            .map(|b| self.expected_metrics(b, cfg))
            .reduce(|best, m| if m.energy_per_image < best.energy_per_image { m } else { best })
            .expect("scenario has at least one feasible batch size")
    }

    /// Power log covering every slot the sweep uses.
    pub fn replay_log(&self, cfg: &SweepConfig) -> Vec<PowerSample> {
        let batches = self.feasible_batches(cfg);
        let slots = batches.len() as u64 + 1;
        let windows: Vec<(Nanos, f64)> =
            batches.iter().enumerate().map(|(k, &b)| (self.expected_window(k, b, cfg).1, self.power(b))).collect();
        (0..=slots * SLOT_NS / LOG_PERIOD_NS)
            .map(|k| {
                let t = SCENARIO_START + k * LOG_PERIOD_NS;
                let slot = ((t - SCENARIO_START) / SLOT_NS) as usize;
                let power = match windows.get(slot) {
                    Some(&(busy_until, p)) if t <= busy_until => p,
                    _ => self.idle_power,
                };
                let mut s = PowerSample::new(t, power);
                s.util = Some(if power > self.idle_power { 97 } else { 0 });
                s
            })
            .collect()
    }

    /// File name for this case's replay log.
    pub fn log_name(&self) -> String {
        format!("{}__{}_{}.log", self.model_id, self.setup.gpu_label, self.setup.runtime_label)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub models: Vec<ModelRecord>,
    pub cases: Vec<ScenarioCase>,
}

/// A100-class peak dense throughput used by both scenario setups.
pub const SCENARIO_PEAK_COMPUTE: f64 = 19.5e12;

/// Three models measured on two runtimes of the same GPU.
pub fn standard() -> Scenario {
    let models = vec![
        ModelRecord::new("tiny_cnn", Family::Cnn, 5.3e6, 0.6e9, 224)
            .with_year(2018)
            .with_accuracy("imagenet", 71.5)
            .with_accuracy("imagenet-v2", 60.0),
        ModelRecord::new("mid_vit", Family::Transformer, 22.1e6, 4.6e9, 224)
            .with_year(2021)
            .with_accuracy("imagenet", 79.8)
            .with_accuracy("imagenet-v2", 68.9),
        ModelRecord::new("big_hybrid", Family::Hybrid, 88.6e6, 15.4e9, 384)
            .with_year(2022)
            .with_accuracy("imagenet", 84.2)
            .with_accuracy("imagenet-v2", 74.1),
    ];
    let models: Vec<ModelRecord> = models
        .into_iter()
        .zip([8.0e6, 12.0e6, 40.0e6])
        .map(|(mut m, act)| {
            m.activations = Some(act);
            m.url = Some(format!("https://huggingface.co/timm/{}", m.model_id));
            m
        })
        .collect();

    let pytorch = InferenceSetup::new("a100", "pytorch", 250.0).with_peak_compute(SCENARIO_PEAK_COMPUTE);
    let tensorrt = InferenceSetup::new("a100", "tensorrt", 250.0).with_peak_compute(SCENARIO_PEAK_COMPUTE);
    let mut cases = Vec::new();
    for (model, scale, oom) in [("tiny_cnn", 1u64, 64u32), ("mid_vit", 3, 32), ("big_hybrid", 8, 16)] {
        cases.push(ScenarioCase {
            model_id: model.into(),
            setup: pytorch.clone(),
            base_latency_ns: 12_000_000,
            per_image_ns: 400_000 * scale,
            oom_batch: oom,
            idle_power: 55.0,
            power_base: 110.0,
            power_step: 18.0,
            power_cap: 240.0,
        });
        cases.push(ScenarioCase {
            model_id: model.into(),
            setup: tensorrt.clone(),
            base_latency_ns: 5_000_000,
            per_image_ns: 150_000 * scale,
            oom_batch: oom,
            idle_power: 55.0,
            power_base: 125.0,
            power_step: 20.0,
            power_cap: 245.0,
        });
    }
    Scenario { models, cases }
}

/// Metadata table for [`standard`] in the ingest format.
pub fn metadata_csv(models: &[ModelRecord]) -> String {
    let mut datasets: Vec<&String> = models.iter().flat_map(|m| m.accuracies.keys()).collect();
    datasets.sort();
    datasets.dedup();
    let mut out = String::from("model_id,family,year,params,flops,activations,input_size,url");
    for d in &datasets {
        out.push(',');
        out.push_str(d);
    }
    out.push('\n');
    for m in models {
        let opt = |v: Option<String>| v.unwrap_or_default();
        out += &format!(
            "{},{},{},{},{},{},{},{}",
            m.model_id,
            m.family,
            opt(m.pub_year.map(|y| y.to_string())),
            m.params,
            m.flops,
            opt(m.activations.map(|a| a.to_string())),
            m.input_size,
            opt(m.url.clone()),
        );
        for d in &datasets {
            out.push(',');
            if let Some(a) = m.accuracies.get(*d) {
                out += &a.to_string();
            }
        }
        out.push('\n');
    }
    out
}

/// One setup whose energy per image keeps falling with batch size, with
/// power saturating near TDP.
pub fn efficientvit_like() -> ScenarioCase {
    ScenarioCase {
        model_id: "efficientvit_like".into(),
        setup: InferenceSetup::new("a100", "tensorrt", 250.0),
        base_latency_ns: 40_000_000,
        per_image_ns: 500_000,
        oom_batch: 512,
        idle_power: 50.0,
        power_base: 80.0,
        power_step: 30.0,
        power_cap: 240.0,
    }
}

/// Coefficients of the frontier-shaped fixture, `A = c1 ln(ln E + c2) + c3`.
pub const FRONTIER_COEFFS: (f64, f64, f64) = (9.6, 9.26, 68.7);

/// Accuracy/energy cloud shaped like a typical efficiency frontier over
/// 1e-4 to 1 J per image: 30 front points with small deterministic noise and
/// 60 dominated interior points.
pub fn frontier_fixture() -> Vec<TradeoffPoint> {
    let (c1, c2, c3) = FRONTIER_COEFFS;
    let n = 30;
    let mut points = Vec::with_capacity(3 * n);
    for i in 0..n {
        let e = 10f64.powf(-4.0 + 4.0 * i as f64 / (n - 1) as f64);
        let noise = 0.05 * (7.3 * i as f64).sin();
        let a = c1 * (e.ln() + c2).ln() + c3 + noise;
        points.push(TradeoffPoint::new(e, a));
        points.push(TradeoffPoint::new(e * 1.7, a - 2.0 - 0.5 * (i % 3) as f64));
        points.push(TradeoffPoint::new(e * 3.1, a - 6.5 - (i % 5) as f64));
    }
    points
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_shape() {
        let s = standard();
        assert_eq!(s.models.len(), 3);
        assert_eq!(s.cases.len(), 6);
        let cfg = SweepConfig::default();
        assert_eq!(s.cases[0].feasible_batches(&cfg), vec![1, 2, 4, 8, 16, 32]);
        for case in &s.cases {
            let batches = case.feasible_batches(&cfg);
            for (k, &b) in batches.iter().enumerate() {
                let (w0, w1) = case.expected_window(k, b, &cfg);
                assert!(w1 < SCENARIO_START + (k as u64 + 1) * SLOT_NS, "{} b={b}", case.model_id);
                assert!(w0 > SCENARIO_START + k as u64 * SLOT_NS);
                assert!(case.power(b) <= case.setup.tdp);
            }
        }
    }

    #[test]
    fn stopping_counts() {
        let case = ScenarioCase { base_latency_ns: 2_000_000_000, per_image_ns: 0, ..efficientvit_like() };
        assert_eq!(case.expected_reps(1, &SweepConfig::default()), (3, 14));
        let case = ScenarioCase { base_latency_ns: 500_000_000, ..case };
        assert_eq!(case.expected_reps(1, &SweepConfig::default()), (4, 21));
    }

    #[test]
    fn monotone_fixture() {
        let case = efficientvit_like();
        let cfg = SweepConfig::default();
        let e: Vec<f64> =
            case.feasible_batches(&cfg).iter().map(|&b| case.expected_metrics(b, &cfg).energy_per_image).collect();
        assert!(e.windows(2).all(|w| w[1] <= w[0]), "{e:?}");
    }
}
