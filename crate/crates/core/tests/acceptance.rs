//! Acceptance suite: one line per criterion, exit status 1 if any fails.
//!
//! Run with `cargo test -p enerprof --test acceptance`.

// `!(a < b)` is deliberate in checks: NaN must fail them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{self, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde_json::Value;

use enerprof::analysis::{
    extrapolate_energy, fit_frontier, geometric_summary, naive_estimate, pareto_front, pearson, spearman, yearly_hulls,
    TradeoffPoint, YearPoint,
};
use enerprof::datastore::{
    build_bundle, bundle_to_string, ingest_metadata, load_bundle, load_store, save_run, BundleFilter,
};
use enerprof::energy::{best_batch, derive_metrics, integrate_energy, TDP_ANOMALY_FACTOR};
use enerprof::harness::{run_sweep, FailureTrigger, SimConfig, SimulatedWorkload, SweepConfig};
use enerprof::scenario::{self, SCENARIO_START};
use enerprof::scoring::{manhattan_score, rank, EnergyScale, Metric, ScoreInput};
use enerprof::telemetry::{SamplerConfig, SamplerSource, SyntheticProfile};
use enerprof::{EnergyMetrics, InferenceSetup, RunMeasurement, ScoreParams};

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn synthetic(profile: SyntheticProfile) -> SamplerConfig {
    SamplerConfig::new(SamplerSource::Synthetic(profile)).with_rate(100.0)
}

fn setup() -> InferenceSetup {
    InferenceSetup::new("sim-gpu", "sim-rt", 250.0).with_peak_compute(19.5e12)
}

/// Midpoint Riemann sum of the true piecewise-constant profile with step
/// `step` seconds.
fn riemann(segs: &[(f64, f64)], t0: f64, t1: f64, step: f64) -> f64 {
    let power = |t: f64| {
        let mut edge = 0.0;
        for &(d, p) in segs {
            edge += d;
            if t < edge {
                return p;
            }
        }
        segs.last().unwrap().1
    };
    let n = ((t1 - t0) / step).round() as usize;
    let h = (t1 - t0) / n as f64;
    (0..n).map(|k| power(t0 + (k as f64 + 0.5) * h) * h).sum()
}

fn integration() -> Outcome {
    let started = Instant::now();
    let start = SCENARIO_START;
    let window = |secs: u64| (start, start + secs * 1_000_000_000);

    let flat = SyntheticProfile::constant(200.0, 10.0).generate(start, 100.0);
    let (t0, t1) = window(10);
    let j = integrate_energy(&flat, t0, t1).map_err(|e| e.to_string())?;
    ensure!(rel_err(j, 2000.0) <= 1e-9, "constant profile gave {j} J");

    let ramp = SyntheticProfile::Ramp { start: 0.0, end: 100.0, duration: 10.0 }.generate(start, 100.0);
    let r = integrate_energy(&ramp, t0, t1).map_err(|e| e.to_string())?;
    ensure!(rel_err(r, 500.0) <= 1e-6, "ramp gave {r} J");

    // random step profiles with steps aligned to whole seconds so the
    // sampled trapezoid sees every level
    let mut rng = StdRng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let segs: Vec<(f64, f64)> =
            (0..rng.gen_range(2..8)).map(|_| (rng.gen_range(1..4) as f64, rng.gen_range(30.0..300.0))).collect();
        let profile = SyntheticProfile::Segments(segs.clone());
        let samples = profile.generate(start, 100.0);
        let total = profile.duration();
        let end = start + (total * 1e9).round() as u64;
        let got = integrate_energy(&samples, start, end).map_err(|e| e.to_string())?;
        let want = riemann(&segs, 0.0, total, 0.001);
        worst = worst.max(rel_err(got, want));
    }
    ensure!(worst <= 0.01, "random profiles: worst relative error {worst}");
    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 1.0, "took {elapsed:.3} s");
    Ok(format!("2000 J and 500 J exact; random worst {worst:.2e}; {elapsed:.3} s"))
}

fn tdp_ok(m: &EnergyMetrics, tdp: f64, what: &str) -> Result<(), String> {
    ensure!(m.avg_power <= TDP_ANOMALY_FACTOR * tdp, "{what}: {} W over {} W TDP", m.avg_power, tdp);
    Ok(())
}

fn identity() -> Outcome {
    let mut rng = StdRng::seed_from_u64(22);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut sim = SimConfig::at_rate(rng.gen_range(5.0..200.0));
        sim.per_image_ns = rng.gen_range(0..2_000_000);
        let b = 1u32 << rng.gen_range(0..6);
        let cfg = SweepConfig {
            start_batch: b,
            max_batch: Some(b),
            min_reps: rng.gen_range(1..20),
            min_runtime: rng.gen_range(0.1..1.5),
            warmup_min_reps: 1,
            warmup_min_runtime: 0.0,
        };
        let segs: Vec<(f64, f64)> = (0..rng.gen_range(1..6))
            .map(|_| (rng.gen_range(0.5..4.0), rng.gen_range(20.0..240.0)))
            .chain([(30.0, 100.0)])
            .collect();
        let mut w = SimulatedWorkload::new(sim);
        let sweep = run_sweep(&mut w, "m", &setup(), &cfg, &synthetic(SyntheticProfile::Segments(segs)))
            .map_err(|e| e.to_string())?;
        let m = sweep.runs[0].metrics.unwrap();
        worst = worst.max(rel_err(m.throughput * m.energy_per_image, m.avg_power));
    }
    ensure!(worst <= 1e-6, "identity off by {worst:e}");

    let mut checked = 0;
    let store = load_store(&fixtures().join("store/results.jsonl")).map_err(|e| e.to_string())?;
    for rec in &store.records {
        let m = rec.metrics.ok_or_else(|| format!("{}: no stored metrics", rec.id))?;
        tdp_ok(&m, store.setups[&rec.setup_id].tdp, &rec.id)?;
        checked += 1;
    }
    let bundle = load_bundle(&fixtures().join("demo_bundle.json")).map_err(|e| e.to_string())?;
    for m in &bundle.metrics {
        let tdp = bundle.setups.iter().find(|s| s.id == m.setup_id).unwrap().setup.tdp;
        tdp_ok(&m.metrics, tdp, &m.model_id)?;
        checked += 1;
    }
    let cfg = SweepConfig::default();
    let mut cases = scenario::standard().cases;
    cases.push(scenario::efficientvit_like());
    for case in &cases {
        for b in case.feasible_batches(&cfg) {
            tdp_ok(&case.expected_metrics(b, &cfg), case.setup.tdp, &case.model_id)?;
            checked += 1;
        }
    }
    Ok(format!("1000 runs, worst {worst:.1e}; {checked} fixture entries within TDP bound"))
}

fn stopping() -> Outcome {
    let cfg = SweepConfig { max_batch: Some(1), ..SweepConfig::default() };
    let mut counts = Vec::new();
    for (rate, duration) in [(0.5, 60.0), (2.0, 30.0), (100.0, 20.0)] {
        let sim = SimConfig::at_rate(rate);
        let lat = sim.latency_ns(1);
        let want = stopping_count(lat, 13, 10_000_000_000);
        let mut w = SimulatedWorkload::new(sim);
        let sweep = run_sweep(&mut w, "m", &setup(), &cfg, &synthetic(SyntheticProfile::constant(150.0, duration)))
            .map_err(|e| e.to_string())?;
        let got = sweep.runs[0].batch_marks.len() as u64;
        ensure!(got == want, "{rate} batches/s stopped after {got}, oracle says {want}");
        counts.push(got);
    }
    ensure!(counts == [14, 21, 1001], "counts {counts:?}");
    Ok(format!("counts {counts:?}"))
}

fn random_metrics(rng: &mut StdRng, b: u32) -> EnergyMetrics {
    // a coarse grid makes exact ties common
    let e = rng.gen_range(1..6) as f64 * 0.25;
    EnergyMetrics {
        energy_per_image: e,
        throughput: 100.0,
        latency: b as f64 / 100.0,
        avg_power: e * 100.0,
        batch_size: b,
        images_processed: 14 * b as u64,
        wall_time: 14.0 * b as f64 / 100.0,
    }
}

fn sweep() -> Outcome {
    let sim = SimConfig { oom: Some(FailureTrigger { min_batch: 8, after_execs: 0 }), ..SimConfig::at_rate(50.0) };
    let mut w = SimulatedWorkload::new(sim);
    let r =
        run_sweep(&mut w, "m", &setup(), &SweepConfig::default(), &synthetic(SyntheticProfile::constant(120.0, 30.0)))
            .map_err(|e| e.to_string())?;
    let sizes: Vec<u32> = r.runs.iter().map(|r| r.batch_size).collect();
    ensure!(sizes == [1, 2, 4], "measured {sizes:?}");
    ensure!(r.infeasible == Some(8), "first infeasible {:?}", r.infeasible);

    let mut rng = StdRng::seed_from_u64(33);
    for set in 0..500 {
        let n = rng.gen_range(1..10);
        let runs: Vec<RunMeasurement> = (0..n)
            .map(|k| {
                let b = 1u32 << k;
                RunMeasurement {
                    model_id: "m".into(),
                    setup: setup(),
                    batch_size: b,
                    window_start: 0,
                    batch_marks: vec![],
                    samples: vec![],
                    metrics: Some(random_metrics(&mut rng, b)),
                    quality_flags: BTreeSet::new(),
                    idle_baseline: None,
                }
            })
            .collect();
        let mut shuffled = runs.clone();
        shuffled.reverse();
        let all: Vec<EnergyMetrics> = runs.iter().map(|r| r.metrics.unwrap()).collect();
        let want = best_exhaustive(&all);
        for rs in [&runs, &shuffled] {
            let got = best_batch(rs).map(|(b, m)| (b, m.energy_per_image));
            ensure!(got == want, "set {set}: best {got:?}, oracle {want:?}");
        }
    }
    Ok("runs {1,2,4}, OOM at 8; best_batch agrees on 500 sets".into())
}

fn statistics() -> Outcome {
    let g = geometric_summary(&[2.0, 8.0]).map_err(|e| e.to_string())?;
    ensure!(g.mean == 4.0, "gmean(2, 8) = {:?}", g.mean);

    let mut rng = StdRng::seed_from_u64(44);
    let mut worst_p: f64 = 0.0;
    let mut worst_s: f64 = 0.0;
    let mut compared = 0;
    while compared < 1000 {
        let n = rng.gen_range(3..60);
        let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(0..9) as f64).collect();
        let ys: Vec<f64> = (0..n).map(|_| rng.gen_range(0..9) as f64 + 0.5 * rng.gen_range(0..3) as f64).collect();
        let (Ok(p), Ok(s)) = (pearson(&xs, &ys), spearman(&xs, &ys)) else { continue };
        worst_p = worst_p.max((p - pearson_direct(&xs, &ys)).abs());
        worst_s = worst_s.max((s - spearman_direct(&xs, &ys)).abs());
        compared += 1;
    }
    ensure!(worst_p <= 1e-12 && worst_s <= 1e-12, "pearson {worst_p:e}, spearman {worst_s:e}");

    for set in 0..20 {
        let pts: Vec<TradeoffPoint> = (0..1000)
            .map(|_| TradeoffPoint::new(rng.gen_range(1..400) as f64 * 1e-3, rng.gen_range(500..900) as f64 / 10.0))
            .collect();
        let mut got = pareto_front(&pts);
        got.sort_unstable();
        let want = pareto_scan(&pts);
        ensure!(got == want, "pareto set {set}: {} vs oracle {}", got.len(), want.len());
    }

    let mut hulls = 0;
    for set in 0..200 {
        let entries: Vec<YearPoint> = (0..rng.gen_range(1..30))
            .map(|_| YearPoint {
                point: TradeoffPoint::new(10f64.powi(-rng.gen_range(0..5)), rng.gen_range(60..85) as f64),
                year: rng.gen_range(2015..2021),
            })
            .collect();
        for h in yearly_hulls(&entries) {
            let coords = |i: usize| (entries[i].point.energy.log10(), entries[i].point.accuracy);
            let members: Vec<(f64, f64)> =
                (0..entries.len()).filter(|&i| entries[i].year <= h.year).map(coords).collect();
            ensure!(members.len() == h.members, "set {set} year {}: member count", h.year);
            let mut got: Vec<(f64, f64)> = h.vertices.iter().map(|&i| coords(i)).collect();
            got.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
            let want = hull_exhaustive(&members);
            ensure!(got == want, "set {set} year {}: hull {got:?} vs oracle {want:?}", h.year);
            hulls += 1;
        }
    }
    Ok(format!("gmean exact; pearson {worst_p:.1e}, spearman {worst_s:.1e}; 20 pareto sets; {hulls} yearly hulls"))
}

fn frontier() -> Outcome {
    let energies: Vec<f64> = (0..30).map(|i| 10f64.powf(-4.0 + 4.0 * i as f64 / 29.0)).collect();
    let mut worst: f64 = 0.0;
    for (c1, c2, c3) in [scenario::FRONTIER_COEFFS, (5.0, 12.0, 70.0), (12.0, 15.0, 60.0), (3.0, 10.5, 80.0)] {
        let pts: Vec<TradeoffPoint> =
            energies.iter().map(|&e| TradeoffPoint::new(e, c1 * (e.ln() + c2).ln() + c3)).collect();
        let fit = fit_frontier(&pts).map_err(|e| e.to_string())?;
        for (got, want) in [(fit.c1, c1), (fit.c2, c2), (fit.c3, c3)] {
            worst = worst.max(rel_err(got, want));
        }
        for &e in &energies {
            let back = extrapolate_energy(&fit, fit.eval(e)).map_err(|e| e.to_string())?;
            ensure!(rel_err(back, e) <= 1e-6, "inverse at {e}: {back}");
        }
    }
    ensure!(worst <= 1e-4, "coefficients off by {worst:e}");

    let pts = scenario::frontier_fixture();
    let front: Vec<TradeoffPoint> = pareto_front(&pts).into_iter().map(|i| pts[i]).collect();
    let fit = fit_frontier(&front).map_err(|e| e.to_string())?;
    let max_e = pts.iter().map(|p| p.energy).fold(0.0, f64::max);
    let at_100 = extrapolate_energy(&fit, 100.0).map_err(|e| e.to_string())?;
    let orders = (at_100 / max_e).log10();
    ensure!(orders >= 6.0, "100% needs only {orders:.2} orders above the data");
    Ok(format!("coefficients within {worst:.1e}; 100% at {at_100:.3e} J, {orders:.2} orders above max"))
}

fn argsort(inputs: &[ScoreInput], key: impl Fn(&ScoreInput) -> f64) -> Vec<String> {
    let mut v: Vec<&ScoreInput> = inputs.iter().collect();
    v.sort_by(|a, b| key(b).total_cmp(&key(a)).then(a.model_id.cmp(&b.model_id)));
    v.into_iter().map(|s| s.model_id.clone()).collect()
}

fn scoring() -> Outcome {
    let mut rng = StdRng::seed_from_u64(55);
    for _ in 0..1000 {
        let params = ScoreParams { weight: 0.0, norm: rng.gen_range(0.01..10.0), min_accuracy: 0.0 };
        let a = rng.gen_range(0.0..100.0);
        let e = rng.gen_range(0.0..20.0);
        for scale in [EnergyScale::Literal, EnergyScale::Balanced] {
            let s = manhattan_score(a, e, &params, scale).map_err(|e| e.to_string())?;
            ensure!(s == a, "W=0 score {s} for accuracy {a}");
        }
    }

    for set in 0..1000 {
        let mut inputs: Vec<ScoreInput> = (0..rng.gen_range(2..25))
            .map(|i| ScoreInput::new(format!("m{i:02}"), rng.gen_range(50..90) as f64, rng.gen_range(0.001..5.0)))
            .collect();
        // duplicate a model's energy to exercise tie handling
        let twin = inputs[0].energy;
        inputs[1].energy = twin;
        let norm = inputs.iter().map(|s| s.energy).fold(0.0, f64::max);
        for (w, want) in [(0.0, argsort(&inputs, |s| s.accuracy)), (1.0, argsort(&inputs, |s| -s.energy))] {
            let params = ScoreParams { weight: w, norm, min_accuracy: 0.0 };
            for scale in [EnergyScale::Literal, EnergyScale::Balanced] {
                let got: Vec<String> = rank(&inputs, Metric::Manhattan, &params, scale, None)
                    .map_err(|e| e.to_string())?
                    .into_iter()
                    .map(|r| r.model_id)
                    .collect();
                ensure!(got == want, "set {set} W={w}: {got:?} vs {want:?}");
            }
        }

        let min_accuracy = rng.gen_range(50..95) as f64;
        let params = ScoreParams { weight: 0.5, norm, min_accuracy };
        let passing: BTreeSet<&str> =
            inputs.iter().filter(|s| s.accuracy >= min_accuracy).map(|s| s.model_id.as_str()).collect();
        match rank(&inputs, Metric::Ratio, &params, EnergyScale::Literal, None) {
            Ok(ranked) => {
                let got: BTreeSet<&str> = ranked.iter().map(|r| r.model_id.as_str()).collect();
                ensure!(got == passing, "set {set}: ratio kept {got:?}, expected {passing:?}");
            }
            Err(_) => ensure!(passing.is_empty(), "set {set}: ranking failed with models passing"),
        }
    }

    let estimate = naive_estimate(4e9, &InferenceSetup::new("g", "r", 250.0).with_peak_compute(19.5e12))
        .map_err(|e| e.to_string())?;
    let exact = 4e9 / 19.5e12 * 250.0;
    ensure!((estimate - exact).abs() <= 1e-9, "naive estimate {estimate}");
    ensure!(format!("{estimate:.6}") == "0.051282", "naive estimate {estimate} does not round to 0.051282");
    Ok(format!("W=0 identity; 1000 argsort checks; ratio filter; naive {estimate:.10} J"))
}

fn same_bits(a: &EnergyMetrics, b: &EnergyMetrics) -> bool {
    let bits =
        |m: &EnergyMetrics| [m.energy_per_image, m.throughput, m.latency, m.avg_power, m.wall_time].map(f64::to_bits);
    bits(a) == bits(b) && a.batch_size == b.batch_size && a.images_processed == b.images_processed
}

fn replay_store(path: &Path) -> Result<usize, String> {
    let store = load_store(path).map_err(|e| e.to_string())?;
    for rec in &store.records {
        let run = store.load_run(&rec.id).map_err(|e| e.to_string())?;
        let derived = derive_metrics(&run).map_err(|e| e.to_string())?;
        let stored = rec.metrics.ok_or_else(|| format!("{}: no stored metrics", rec.id))?;
        ensure!(same_bits(&derived, &stored), "{}: {derived:?} vs stored {stored:?}", rec.id);
    }
    Ok(store.records.len())
}

fn determinism() -> Outcome {
    let fixture_runs = replay_store(&fixtures().join("store/results.jsonl"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("results.jsonl");
    let mut rng = StdRng::seed_from_u64(66);
    let profile = SyntheticProfile::Segments(vec![(0.7, 180.0), (0.9, 95.5), (1.3, 212.25), (20.0, 140.0)]);
    for model in ["alpha", "beta"] {
        let mut sim = SimConfig::at_rate(rng.gen_range(20.0..80.0));
        sim.per_image_ns = rng.gen_range(100_000..900_000);
        sim.oom = Some(FailureTrigger { min_batch: 16, after_execs: 0 });
        let cfg = SweepConfig { min_runtime: 1.0, ..SweepConfig::default() };
        let sweep = run_sweep(&mut SimulatedWorkload::new(sim), model, &setup(), &cfg, &synthetic(profile.clone()))
            .map_err(|e| e.to_string())?;
        for run in &sweep.runs {
            save_run(run, &path).map_err(|e| e.to_string())?;
        }
    }
    let fresh_runs = replay_store(&path)?;

    let store = load_store(&fixtures().join("store/results.jsonl")).map_err(|e| e.to_string())?;
    let text = std::fs::read_to_string(fixtures().join("metadata.csv")).map_err(|e| e.to_string())?;
    let mut lines: Vec<&str> = text.lines().collect();
    let header = lines.remove(0);
    lines.reverse();
    let reordered = std::iter::once(header).chain(lines).collect::<Vec<_>>().join("\n") + "\n";
    let mut outputs = Vec::new();
    for meta in [&text, &text, &reordered] {
        let records = ingest_metadata(meta).map_err(|e| e.to_string())?.records;
        let bundle = build_bundle(&store, &records, &BundleFilter::default()).map_err(|e| e.to_string())?;
        outputs.push(bundle_to_string(&bundle).map_err(|e| e.to_string())?);
    }
    ensure!(outputs[0] == outputs[1], "two exports differ");
    ensure!(outputs[0] == outputs[2], "export depends on metadata row order");
    Ok(format!(
        "{fixture_runs} fixture and {fresh_runs} fresh runs replay bit-exact; bundle bytes stable ({} B)",
        outputs[0].len()
    ))
}

struct Cli {
    state: tempfile::TempDir,
}

impl Cli {
    fn run(&self, args: &[&str]) -> Result<String, String> {
        let out = Command::new(env!("CARGO_BIN_EXE_enerprof"))
            .args(args)
            .env("ENERPROF_STATE_DIR", self.state.path())
            .output()
            .map_err(|e| e.to_string())?;
        if !out.status.success() {
            return Err(format!("enerprof {}: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)));
        }
        String::from_utf8(out.stdout).map_err(|e| e.to_string())
    }

    fn json(&self, args: &[&str]) -> Result<Vec<Value>, String> {
        let mut full = vec!["--format", "json-lines"];
        full.extend_from_slice(args);
        self.run(&full)?
            .lines()
            .map(|l| serde_json::from_str(l).map_err(|e| format!("bad json line `{l}`: {e}")))
            .collect()
    }
}

fn rows<'a>(lines: &'a [Value], table: &str) -> Vec<&'a Value> {
    lines.iter().filter(|v| v["table"] == table).collect()
}

fn num(v: &Value, key: &str) -> f64 {
    v[key].as_f64().unwrap_or(f64::NAN)
}

fn close(got: f64, want: f64, what: &str) -> Result<(), String> {
    ensure!(rel_err(got, want) <= 1e-6, "{what}: got {got}, closed form {want}");
    Ok(())
}

fn end_to_end() -> Outcome {
    let started = Instant::now();
    let cli = Cli { state: tempfile::tempdir().map_err(|e| e.to_string())? };
    let work = tempfile::tempdir().map_err(|e| e.to_string())?;
    let dir = work.path();
    let path = |name: &str| dir.join(name).to_string_lossy().into_owned();
    let scen = scenario::standard();
    let cfg = SweepConfig::default();

    cli.run(&["scenario", "--out", &path("scenario")])?;
    let cases: Vec<Value> =
        serde_json::from_str(&std::fs::read_to_string(dir.join("scenario/cases.json")).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    ensure!(cases.len() == 6, "{} cases", cases.len());

    let store = path("results.jsonl");
    let metadata = path("scenario/metadata.csv");
    for (case, listed) in scen.cases.iter().zip(&cases) {
        let log = dir.join("scenario").join(listed["replay_log"].as_str().unwrap_or_default());
        let out = cli.json(&[
            "measure",
            "--workload",
            listed["workload"].as_str().unwrap_or_default(),
            "--model",
            &case.model_id,
            "--gpu-label",
            &case.setup.gpu_label,
            "--runtime-label",
            &case.setup.runtime_label,
            "--tdp",
            "250",
            "--peak-compute",
            "19.5e12",
            "--sampler",
            "replay",
            "--sampler-source",
            &log.to_string_lossy(),
            "--out",
            &store,
        ])?;
        let want_sizes = case.feasible_batches(&cfg);
        let runs = rows(&out, "runs");
        ensure!(runs.len() == want_sizes.len(), "{}: {} runs", case.model_id, runs.len());
        for (row, &b) in runs.iter().zip(&want_sizes) {
            let m = case.expected_metrics(b, &cfg);
            let what = format!("{}@{} b={b}", case.model_id, case.setup.id());
            close(num(row, "energy_per_image_j"), m.energy_per_image, &what)?;
            close(num(row, "throughput_ips"), m.throughput, &what)?;
            close(num(row, "avg_power_w"), m.avg_power, &what)?;
            ensure!(row["flags"] == "", "{what}: flags {}", row["flags"]);
        }
        let best = case.expected_best(&cfg);
        let sweep = rows(&out, "sweep");
        ensure!(
            sweep[0]["best_batch"].as_u64() == Some(best.batch_size as u64),
            "{}: best batch {} vs {}",
            case.model_id,
            sweep[0]["best_batch"],
            best.batch_size
        );
    }

    let best: BTreeMap<(String, String), EnergyMetrics> =
        scen.cases.iter().map(|c| ((c.model_id.clone(), c.setup.id()), c.expected_best(&cfg))).collect();
    let acc = |model: &str| {
        let m = scen.models.iter().find(|m| m.model_id == model).unwrap();
        m.accuracies.values().sum::<f64>() / m.accuracies.len() as f64
    };
    let (base, opt) = ("a100/pytorch", "a100/tensorrt");

    let out = cli.json(&[
        "analyze",
        "--in",
        &store,
        "--metadata",
        &metadata,
        "--paired",
        base,
        opt,
        "--naive-vs-measured",
        "--pareto",
    ])?;
    let paired = rows(&out, "paired");
    ensure!(paired.len() == 3, "{} paired rows", paired.len());
    let mut ratios = Vec::new();
    for row in paired {
        let model = row["model_id"].as_str().unwrap_or_default().to_string();
        let (b, o) = (&best[&(model.clone(), base.into())], &best[&(model.clone(), opt.into())]);
        let ratio = b.energy_per_image / o.energy_per_image;
        close(num(row, "energy_ratio"), ratio, &format!("{model} energy ratio"))?;
        close(num(row, "throughput_ratio"), o.throughput / b.throughput, &format!("{model} throughput ratio"))?;
        ratios.push(ratio);
    }
    let gmean = (ratios.iter().map(|r| r.ln()).sum::<f64>() / ratios.len() as f64).exp();
    close(num(rows(&out, "paired_summary")[0], "energy_ratio_gmean"), gmean, "paired gmean")?;
    for row in rows(&out, "naive_vs_measured") {
        let model = row["model_id"].as_str().unwrap_or_default();
        let setup_id = row["setup_id"].as_str().unwrap_or_default();
        let flops = scen.models.iter().find(|m| m.model_id == model).unwrap().flops;
        let estimated = flops / 19.5e12 * 250.0;
        let measured = best[&(model.to_string(), setup_id.to_string())].energy_per_image;
        close(num(row, "estimated_j"), estimated, "naive estimate")?;
        close(num(row, "underestimation"), measured / estimated, "underestimation")?;
    }
    for setup_id in [base, opt] {
        let models: Vec<&str> = scen.models.iter().map(|m| m.model_id.as_str()).collect();
        let pts: Vec<TradeoffPoint> = models
            .iter()
            .map(|m| TradeoffPoint::new(best[&(m.to_string(), setup_id.into())].energy_per_image, acc(m)))
            .collect();
        let want: BTreeSet<&str> = pareto_scan(&pts).into_iter().map(|i| models[i]).collect();
        let got: BTreeSet<&str> = rows(&out, "pareto")
            .into_iter()
            .filter(|r| r["setup_id"] == setup_id && r["on_front"] == true)
            .filter_map(|r| r["model_id"].as_str())
            .collect();
        ensure!(got == want, "{setup_id} front {got:?} vs {want:?}");
    }

    let out = cli.json(&["score", "--in", &store, "--metadata", &metadata, "--setup", opt, "--metric", "ratio"])?;
    for row in rows(&out, "ranking") {
        let model = row["model_id"].as_str().unwrap_or_default();
        let e = best[&(model.to_string(), opt.into())].energy_per_image;
        close(num(row, "score"), acc(model) / e, &format!("{model} ratio score"))?;
    }
    let out = cli.json(&[
        "score",
        "--in",
        &store,
        "--metadata",
        &metadata,
        "--setup",
        base,
        "--metric",
        "manhattan",
        "--weight",
        "0.5",
    ])?;
    let norm =
        scen.models.iter().map(|m| best[&(m.model_id.clone(), base.into())].energy_per_image).fold(0.0, f64::max);
    for row in rows(&out, "ranking") {
        let model = row["model_id"].as_str().unwrap_or_default();
        let e = best[&(model.to_string(), base.into())].energy_per_image;
        let want = 100.0 - (0.5 * e / norm + 0.5 * (100.0 - acc(model)));
        close(num(row, "score"), want, &format!("{model} manhattan score"))?;
    }

    let bundle_path = path("bundle.json");
    cli.run(&["export", "--in", &store, "--metadata", &metadata, "--out", &bundle_path])?;
    let bundle = load_bundle(Path::new(&bundle_path)).map_err(|e| e.to_string())?;
    ensure!(bundle.metrics.len() == 6, "{} bundle entries", bundle.metrics.len());
    for m in &bundle.metrics {
        let want = best[&(m.model_id.clone(), m.setup_id.clone())];
        let what = format!("bundle {}@{}", m.model_id, m.setup_id);
        ensure!(m.metrics.batch_size == want.batch_size, "{what}: batch {}", m.metrics.batch_size);
        close(m.metrics.energy_per_image, want.energy_per_image, &what)?;
        close(m.metrics.throughput, want.throughput, &what)?;
    }
    cli.run(&["validate", "--bundle", &bundle_path, "--in", &store, "--metadata", &metadata])?;

    let elapsed = started.elapsed().as_secs_f64();
    ensure!(elapsed < 60.0, "took {elapsed:.1} s");
    Ok(format!("6 sweeps, analysis, scores and bundle match closed form; {elapsed:.1} s"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("energy-integration", integration),
        ("avg-power-identity", identity),
        ("stopping-rule", stopping),
        ("batch-sweep", sweep),
        ("statistics-oracles", statistics),
        ("frontier-fit", frontier),
        ("scoring", scoring),
        ("determinism", determinism),
        ("end-to-end", end_to_end),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, check) in criteria {
        let outcome = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL {name}: {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
