use std::io::{BufRead, Write};
use std::path::Path;
use std::time::Duration;

use anyhow::{bail, Context};
use serde::Serialize;

use enerprof::datastore::{
    export_bundle, ingest_metadata_file, load_bundle, load_store, save_run, BundleFilter, Dataset,
};
use enerprof::energy::derive_metrics;
use enerprof::harness::{
    run_sweep, state_dir, wall_clock_ns, GpuLock, HarnessCommand, ProcessWorkload, SimConfig, SimulatedWorkload,
    SweepConfig, Workload, WorkloadEvent,
};
use enerprof::report;
use enerprof::scenario;
use enerprof::scoring::{auto_norm, rank, score_grid, EnergyScale, Metric};
use enerprof::telemetry::{serialize_samples, SamplerConfig, SamplerSource, SyntheticProfile, DEFAULT_LIVE_COMMAND};
use enerprof::{EnergyMetrics, InferenceSetup, ModelRecord, ScoreParams, Validate};

use super::output::{emit, Cell, Format, Table};
use super::usage;
use crate::{
    AnalyzeArgs, ExportArgs, MeasureArgs, MetricArg, ReplayArgs, SamplerKind, ScenarioArgs, ScoreArgs, SimWorkloadArgs,
    SourceArgs, ValidateArgs,
};

fn metrics_headers() -> [&'static str; 6] {
    ["energy_per_image_j", "throughput_ips", "latency_s", "avg_power_w", "images", "wall_time_s"]
}

fn metrics_cells(m: &EnergyMetrics) -> Vec<Cell> {
    vec![
        m.energy_per_image.into(),
        m.throughput.into(),
        m.latency.into(),
        m.avg_power.into(),
        m.images_processed.into(),
        m.wall_time.into(),
    ]
}

fn flags_text<T: Serialize>(flags: &T) -> String {
    match serde_json::to_value(flags) {
        Ok(serde_json::Value::Array(items)) => items.iter().filter_map(|v| v.as_str()).collect::<Vec<_>>().join("|"),
        _ => String::new(),
    }
}

pub fn measure(a: MeasureArgs, format: Format) -> anyhow::Result<()> {
    let mut setup = InferenceSetup::new(&a.gpu_label, &a.runtime_label, a.tdp);
    setup.peak_compute = a.peak_compute;
    let report = setup.validate();
    if !report.is_empty() {
        return usage(format!("invalid setup: {}", report.violations[0]));
    }
    let cfg = SweepConfig {
        start_batch: a.start_batch,
        max_batch: a.max_batch,
        min_reps: a.min_reps,
        min_runtime: a.min_runtime_s,
        ..SweepConfig::default()
    };
    if let Err(e) = cfg.check() {
        return usage(e.to_string());
    }
    let source = match (a.sampler, a.sampler_source) {
        (SamplerKind::Live, src) => SamplerSource::LiveCommand(src.unwrap_or_else(|| DEFAULT_LIVE_COMMAND.to_string())),
        (SamplerKind::Replay, Some(path)) => SamplerSource::ReplayFile(path.into()),
        (SamplerKind::Synthetic, Some(params)) => match SyntheticProfile::parse(&params) {
            Ok(p) => SamplerSource::Synthetic(p),
            Err(e) => return usage(e.to_string()),
        },
        (_, None) => return usage("--sampler replay|synthetic requires --sampler-source"),
    };
    let sampler = SamplerConfig::new(source).with_rate(a.sampler_rate);
    if let Err(e) = sampler.check() {
        return usage(e.to_string());
    }

    let _lock = GpuLock::acquire(&state_dir(), &a.gpu_label)?;
    let mut workload: Box<dyn Workload> = match a.workload.strip_prefix("sim:") {
        Some(params) => Box::new(SimulatedWorkload::new(SimConfig::parse(params)?)),
        None => Box::new(ProcessWorkload::spawn(&a.workload)?),
    };
    let sweep = run_sweep(workload.as_mut(), &a.model, &setup, &cfg, &sampler)?;

    let mut headers = vec!["id", "batch_size", "batches"];
    headers.extend(metrics_headers());
    headers.push("flags");
    let mut table = Table::new("runs", &headers);
    let best = enerprof::energy::best_batch(&sweep.runs).map(|(b, _)| b);
    for mut run in sweep.runs {
        run.idle_baseline = a.idle_baseline;
        let id = save_run(&run, &a.out).with_context(|| format!("saving to {}", a.out.display()))?;
        let m = run.metrics.expect("measured runs carry metrics");
        let mut row: Vec<Cell> = vec![id.into(), run.batch_size.into(), run.batch_marks.len().into()];
        row.extend(metrics_cells(&m));
        row.push(flags_text(&run.quality_flags).into());
        table.push(row);
    }
    let mut summary =
        Table::new("sweep", &["model_id", "setup_id", "largest_feasible", "first_infeasible", "best_batch"]);
    summary.push(vec![
        a.model.into(),
        setup.id().into(),
        sweep.largest_feasible.into(),
        sweep.infeasible.into(),
        best.into(),
    ]);
    emit(&[table, summary], format)
}

fn same_bits(a: &EnergyMetrics, b: &EnergyMetrics) -> bool {
    let f =
        |m: &EnergyMetrics| [m.energy_per_image, m.throughput, m.latency, m.avg_power, m.wall_time].map(f64::to_bits);
    f(a) == f(b) && a.batch_size == b.batch_size && a.images_processed == b.images_processed
}

pub fn replay(a: ReplayArgs, format: Format) -> anyhow::Result<()> {
    let store = load_store(&a.store)?;
    let ids: Vec<String> =
        if a.run.is_empty() { store.records.iter().map(|r| r.id.clone()).collect() } else { a.run.clone() };
    let mut headers = vec!["id"];
    headers.extend(metrics_headers());
    headers.push("matches_stored");
    let mut table = Table::new("replay", &headers);
    let mut mismatches = Vec::new();
    for id in ids {
        let run = store.load_run(&id)?;
        let derived = derive_metrics(&run).with_context(|| format!("re-deriving {id}"))?;
        let matches = run.metrics.as_ref().is_some_and(|m| same_bits(m, &derived));
        if !matches {
            mismatches.push(id.clone());
        }
        let mut row: Vec<Cell> = vec![id.into()];
        row.extend(metrics_cells(&derived));
        row.push(matches.into());
        table.push(row);
    }
    emit(&[table], format)?;
    if !mismatches.is_empty() {
        bail!("re-derived metrics differ from stored values for {}", mismatches.join(", "));
    }
    Ok(())
}

fn load_metadata(path: &Path) -> anyhow::Result<Vec<ModelRecord>> {
    let report = ingest_metadata_file(path)?;
    for e in &report.rejected {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    Ok(report.records)
}

fn load_dataset(src: &SourceArgs) -> anyhow::Result<Dataset> {
    match (&src.store, &src.bundle) {
        (_, Some(bundle)) => Ok(Dataset::from_bundle(&load_bundle(bundle)?)),
        (Some(store), None) => {
            let store = load_store(store)?;
            let metadata = match &src.metadata {
                Some(m) => load_metadata(m)?,
                None => Vec::new(),
            };
            Ok(Dataset::from_store(&store, &metadata))
        }
        (None, None) => usage("give --in <results> (with --metadata) or --bundle <file>"),
    }
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> anyhow::Result<()> {
    let path = dir.join(format!("{name}.json"));
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn analyze(a: AnalyzeArgs, format: Format) -> anyhow::Result<()> {
    let ds = load_dataset(&a.source)?;
    let explicit =
        a.pareto || a.fit || a.naive_vs_measured || a.paired.is_some() || a.yearly || a.correlations || a.input_scaling;
    let want = |flag: bool| flag || !explicit;
    let needs_metadata = want(a.pareto) || want(a.fit) || want(a.yearly) || want(a.naive_vs_measured);
    if needs_metadata && ds.models.is_empty() {
        if explicit {
            return usage("this analysis needs model metadata: pass --metadata or use --bundle");
        }
        log::warn!("no model metadata; only setup comparisons are available");
    }
    if let Some(dir) = &a.report {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let datasets = &a.source.datasets;
    let mut tables = Vec::new();
    // explicit requests propagate errors; the default run skips what does not apply
    let soft = |name: &str, e: enerprof::Error| -> anyhow::Result<()> {
        if explicit {
            Err(anyhow::Error::new(e).context(format!("{name} analysis")))
        } else {
            log::warn!("{name}: {e}");
            Ok(())
        }
    };

    if want(a.pareto) && !ds.models.is_empty() {
        let rows = report::pareto_rows(&ds, datasets);
        let mut t = Table::new("pareto", &["setup_id", "model_id", "energy_per_image_j", "accuracy", "on_front"]);
        for r in &rows {
            t.push(vec![
                (&r.setup_id).into(),
                (&r.model_id).into(),
                r.energy.into(),
                r.accuracy.into(),
                r.on_front.into(),
            ]);
        }
        if let Some(dir) = &a.report {
            write_json(dir, "pareto", &rows)?;
        }
        tables.push(t);
    }
    if want(a.fit) && !ds.models.is_empty() {
        let (rows, skipped) = report::frontier_fits(&ds, datasets);
        for (setup, reason) in &skipped {
            log::warn!("frontier fit for {setup} skipped: {reason}");
        }
        if explicit && rows.is_empty() {
            bail!(
                "no setup could be fitted: {}",
                skipped.iter().map(|(s, r)| format!("{s}: {r}")).collect::<Vec<_>>().join("; ")
            );
        }
        let mut t = Table::new(
            "frontier_fit",
            &[
                "setup_id",
                "front_size",
                "c1",
                "c2",
                "c3",
                "rms_residual",
                "e_min_j",
                "e_max_j",
                "energy_at_100_j",
                "orders_above_max",
            ],
        );
        for r in &rows {
            t.push(vec![
                (&r.setup_id).into(),
                r.front_size.into(),
                r.fit.c1.into(),
                r.fit.c2.into(),
                r.fit.c3.into(),
                r.fit.residual_norm.into(),
                r.fit.e_min.into(),
                r.fit.e_max.into(),
                r.energy_at_100.into(),
                r.orders_above_max.into(),
            ]);
        }
        if let Some(dir) = &a.report {
            write_json(dir, "frontier_fit", &rows)?;
        }
        tables.push(t);
    }
    if want(a.yearly) && !ds.models.is_empty() {
        let rows = report::yearly_rows(&ds, datasets);
        let mut t = Table::new("yearly_hulls", &["setup_id", "year", "members", "vertices"]);
        for r in &rows {
            t.push(vec![(&r.setup_id).into(), r.year.into(), r.members.into(), r.vertices.join("|").into()]);
        }
        if let Some(dir) = &a.report {
            write_json(dir, "yearly_hulls", &rows)?;
        }
        tables.push(t);
    }
    if want(a.naive_vs_measured) && !ds.models.is_empty() {
        match report::naive_vs_measured(&ds) {
            Ok((rows, summaries)) => {
                let mut t = Table::new(
                    "naive_vs_measured",
                    &["setup_id", "model_id", "flops", "estimated_j", "measured_j", "underestimation"],
                );
                for r in &rows {
                    t.push(vec![
                        (&r.setup_id).into(),
                        (&r.model_id).into(),
                        r.flops.into(),
                        r.estimated.into(),
                        r.measured.into(),
                        r.factor.into(),
                    ]);
                }
                let mut s = Table::new("naive_summary", &["setup_id", "models", "geometric_mean", "geometric_std"]);
                for r in &summaries {
                    s.push(vec![
                        (&r.setup_id).into(),
                        r.factor.count.into(),
                        r.factor.mean.into(),
                        r.factor.std.into(),
                    ]);
                }
                if let Some(dir) = &a.report {
                    write_json(dir, "naive_vs_measured", &serde_json::json!({"rows": rows, "summary": summaries}))?;
                }
                tables.push(t);
                tables.push(s);
            }
            Err(e) => soft("naive-vs-measured", e)?,
        }
    }
    if let Some(pair) = &a.paired {
        let r = report::paired(&ds, &pair[0], &pair[1])?;
        let mut t = Table::new("paired", &["model_id", "throughput_ratio", "energy_ratio"]);
        for p in &r.pairs {
            t.push(vec![(&p.model_id).into(), p.throughput_ratio.into(), p.energy_ratio.into()]);
        }
        let mut s = Table::new(
            "paired_summary",
            &[
                "baseline",
                "optimized",
                "models",
                "energy_ratio_gmean",
                "energy_ratio_gstd",
                "throughput_ratio_gmean",
                "log_pearson",
            ],
        );
        s.push(vec![
            (&pair[0]).into(),
            (&pair[1]).into(),
            r.pairs.len().into(),
            r.energy_ratio.mean.into(),
            r.energy_ratio.std.into(),
            r.throughput_ratio.mean.into(),
            r.log_correlation.into(),
        ]);
        if let Some(dir) = &a.report {
            write_json(dir, "paired", &r)?;
        }
        tables.push(t);
        tables.push(s);
    }
    if want(a.correlations) {
        if ds.setups.len() >= 2 {
            match report::cross_setup(&ds) {
                Ok(rows) => {
                    let mut t = Table::new(
                        "setup_correlation",
                        &["setup_a", "setup_b", "shared_models", "pearson", "spearman"],
                    );
                    for r in &rows {
                        t.push(vec![
                            (&r.setup_a).into(),
                            (&r.setup_b).into(),
                            r.shared_models.into(),
                            r.pearson.into(),
                            r.spearman.into(),
                        ]);
                    }
                    if let Some(dir) = &a.report {
                        write_json(dir, "setup_correlation", &rows)?;
                    }
                    tables.push(t);
                }
                Err(e) => soft("setup correlation", e)?,
            }
        }
        let rows = report::metric_correlations(&ds);
        let mut t = Table::new("metric_correlation", &["setup_id", "metric", "models", "pearson", "spearman"]);
        for r in &rows {
            let c = &r.correlation;
            t.push(vec![
                (&r.setup_id).into(),
                (&c.metric).into(),
                c.models.into(),
                c.pearson.into(),
                c.spearman.into(),
            ]);
        }
        if let Some(dir) = &a.report {
            write_json(dir, "metric_correlation", &rows)?;
        }
        tables.push(t);
    }
    if want(a.input_scaling) && !ds.models.is_empty() {
        let reports = report::input_scaling(&ds, datasets);
        let mut t = Table::new(
            "input_scaling",
            &["setup_id", "group", "input_size", "accuracy_delta", "energy_ratio", "energy_per_pixel"],
        );
        for (setup, r) in &reports {
            for g in &r.groups {
                for i in 0..g.input_sizes.len() {
                    t.push(vec![
                        setup.into(),
                        (&g.group).into(),
                        g.input_sizes[i].into(),
                        g.accuracy_deltas[i].into(),
                        g.energy_ratios[i].into(),
                        g.slope.into(),
                    ]);
                }
            }
        }
        if let Some(dir) = &a.report {
            write_json(dir, "input_scaling", &reports)?;
        }
        tables.push(t);
    }
    if let Some(dir) = &a.report {
        for t in &tables {
            t.save_csv(dir)?;
        }
    }
    emit(&tables, format)
}

fn pick_setup(ds: &Dataset, requested: Option<String>) -> anyhow::Result<String> {
    match requested {
        Some(s) if ds.setups.contains_key(&s) => Ok(s),
        Some(s) => bail!("unknown setup `{s}` (available: {})", ds.setup_ids().join(", ")),
        None if ds.setups.len() == 1 => Ok(ds.setup_ids().remove(0)),
        None => usage(format!("several setups present; choose one with --setup ({})", ds.setup_ids().join(", "))),
    }
}

pub fn score(a: ScoreArgs, format: Format) -> anyhow::Result<()> {
    let ds = load_dataset(&a.source)?;
    if ds.models.is_empty() {
        return usage("scoring needs model metadata: pass --metadata or use --bundle");
    }
    let setup = pick_setup(&ds, a.setup)?;
    let inputs = ds.score_inputs(&setup, &a.source.datasets);
    if inputs.is_empty() {
        bail!("no model on {setup} has metadata and the selected accuracies");
    }
    let norm = match (a.fixed_norm, a.norm.as_str()) {
        (Some(n), _) => n,
        (None, "auto") => auto_norm(&inputs, a.min_accuracy).ok_or(enerprof::Error::AllFiltered)?,
        (None, n) => match n.parse::<f64>() {
            Ok(v) => v,
            Err(_) => return usage(format!("--norm expects `auto` or joules, got `{n}`")),
        },
    };
    let params = ScoreParams { weight: a.weight, norm, min_accuracy: a.min_accuracy };
    let report = params.validate();
    if !report.is_empty() {
        return usage(format!("invalid score parameters: {}", report.violations[0]));
    }
    let metric = match a.metric {
        MetricArg::Ratio => Metric::Ratio,
        MetricArg::Manhattan => Metric::Manhattan,
    };
    let scale = if a.balanced { EnergyScale::Balanced } else { EnergyScale::Literal };
    let ranked = rank(&inputs, metric, &params, scale, a.top)?;
    let mut t = Table::new("ranking", &["rank", "model_id", "accuracy", "energy_per_image_j", "score"]);
    for r in &ranked {
        t.push(vec![r.rank.into(), (&r.model_id).into(), r.accuracy.into(), r.energy.into(), r.score.into()]);
    }
    let mut p = Table::new("score_params", &["setup_id", "metric", "weight", "norm_j", "min_accuracy", "energy_scale"]);
    p.push(vec![
        setup.into(),
        metric.to_string().into(),
        params.weight.into(),
        params.norm.into(),
        params.min_accuracy.into(),
        (if a.balanced { "balanced" } else { "literal" }).into(),
    ]);
    let mut tables = vec![t, p];

    if let Some(res) = a.grid {
        let (e_lo, e_hi) =
            inputs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), m| (lo.min(m.energy), hi.max(m.energy)));
        let (a_lo, a_hi) = inputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.accuracy), hi.max(m.accuracy)));
        let grid = score_grid(
            metric,
            &params,
            scale,
            (e_lo / 2.0, e_hi * 2.0),
            ((a_lo - 5.0).max(0.0), (a_hi + 5.0).min(100.0)),
            res,
        )?;
        match &a.grid_out {
            Some(path) => {
                let text = serde_json::to_string(&grid)? + "\n";
                std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
            }
            None => {
                let mut g = Table::new("score_grid", &["accuracy", "energy_per_image_j", "score"]);
                for (row, acc) in grid.values.iter().zip(&grid.accuracies) {
                    for (v, e) in row.iter().zip(&grid.energies) {
                        g.push(vec![(*acc).into(), (*e).into(), (*v).into()]);
                    }
                }
                tables.push(g);
            }
        }
    }
    emit(&tables, format)
}

pub fn export(a: ExportArgs, format: Format) -> anyhow::Result<()> {
    let store = load_store(&a.store)?;
    let metadata = load_metadata(&a.metadata)?;
    let filter = BundleFilter { setups: a.setup };
    let bundle = export_bundle(&store, &metadata, &filter, &a.out)?;
    let mut t = Table::new("bundle", &["path", "setups", "models", "datasets", "metric_entries"]);
    t.push(vec![
        a.out.display().to_string().into(),
        bundle.setups.len().into(),
        bundle.models.len().into(),
        bundle.datasets.len().into(),
        bundle.metrics.len().into(),
    ]);
    emit(&[t], format)
}

pub fn validate(a: ValidateArgs, format: Format) -> anyhow::Result<()> {
    if a.store.is_none() && a.metadata.is_none() && a.bundle.is_none() {
        return usage("nothing to validate: pass --in, --metadata and/or --bundle");
    }
    let mut t = Table::new("violations", &["source", "object", "field", "message"]);
    let mut checked = Table::new("checked", &["source", "objects"]);
    if let Some(path) = &a.store {
        let store = load_store(path)?;
        let src = path.display().to_string();
        for (id, setup) in &store.setups {
            for v in setup.validate().violations {
                t.push(vec![(&src).into(), id.into(), v.field.into(), v.message.into()]);
            }
        }
        for rec in &store.records {
            match store.load_run(&rec.id) {
                Ok(run) => {
                    for v in run.validate().violations {
                        t.push(vec![(&src).into(), (&rec.id).into(), v.field.into(), v.message.into()]);
                    }
                }
                Err(e) => t.push(vec![(&src).into(), (&rec.id).into(), "sidecar".into(), e.to_string().into()]),
            }
        }
        checked.push(vec![src.into(), (store.setups.len() + store.records.len()).into()]);
    }
    if let Some(path) = &a.metadata {
        let report = ingest_metadata_file(path)?;
        let src = path.display().to_string();
        for e in &report.rejected {
            let object = e.model_id.clone().unwrap_or_else(|| format!("line {}", e.line));
            t.push(vec![(&src).into(), object.into(), "row".into(), (&e.message).into()]);
        }
        checked.push(vec![src.into(), (report.records.len() + report.rejected.len()).into()]);
    }
    if let Some(path) = &a.bundle {
        let bundle = load_bundle(path)?;
        let src = path.display().to_string();
        for m in &bundle.models {
            for v in m.validate().violations {
                t.push(vec![(&src).into(), (&m.model_id).into(), v.field.into(), v.message.into()]);
            }
        }
        for m in &bundle.metrics {
            let object = format!("{}@{}", m.model_id, m.setup_id);
            for v in m.metrics.validate().violations {
                t.push(vec![(&src).into(), (&object).into(), v.field.into(), v.message.into()]);
            }
        }
        checked.push(vec![src.into(), (bundle.models.len() + bundle.metrics.len()).into()]);
    }
    let failed = t.rows.len();
    emit(&[checked, t], format)?;
    if failed > 0 {
        bail!("{failed} violation(s)");
    }
    Ok(())
}

pub fn scenario(a: ScenarioArgs, format: Format) -> anyhow::Result<()> {
    let s = scenario::standard();
    let cfg = SweepConfig::default();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let write = |name: &str, body: String| {
        let p = a.out.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    };
    write("metadata.csv", scenario::metadata_csv(&s.models))?;
    let mut t = Table::new(
        "scenario",
        &["model_id", "setup_id", "workload", "replay_log", "expected_best_batch", "expected_energy_per_image_j"],
    );
    let mut cases = Vec::new();
    for case in &s.cases {
        write(&case.log_name(), serialize_samples(&case.replay_log(&cfg)))?;
        let best = case.expected_best(&cfg);
        let workload = format!("sim:{}", case.sim_config().to_params());
        cases.push(serde_json::json!({
            "model_id": case.model_id,
            "setup": case.setup,
            "workload": workload,
            "replay_log": case.log_name(),
            "expected_best": best,
        }));
        t.push(vec![
            (&case.model_id).into(),
            case.setup.id().into(),
            workload.into(),
            case.log_name().into(),
            best.batch_size.into(),
            best.energy_per_image.into(),
        ]);
    }
    write("cases.json", serde_json::to_string_pretty(&cases)? + "\n")?;
    emit(&[t], format)
}

/// Real-time protocol speaker: the simulator decides outcomes, the host
/// clock supplies timestamps.
pub fn sim_workload(a: SimWorkloadArgs) -> anyhow::Result<()> {
    let cfg = SimConfig::parse(&a.params)?;
    if !(a.time_scale.is_finite() && a.time_scale >= 0.0) {
        return usage("--time-scale must be nonnegative");
    }
    let mut sim = SimulatedWorkload::new(cfg.clone());
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut say = |event: &WorkloadEvent| -> anyhow::Result<()> {
        writeln!(out, "{event}")?;
        out.flush()?;
        Ok(())
    };
    say(&sim.recv()?)?;
    let mut batch_size = 0;
    for line in std::io::stdin().lock().lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cmd = HarnessCommand::parse(line.trim())?;
        if let HarnessCommand::Config(b) = cmd {
            batch_size = b;
        }
        sim.send(cmd)?;
        let event = match sim.recv()? {
            WorkloadEvent::BatchEnd(_) => {
                let ns = cfg.latency_ns(batch_size) as f64 * a.time_scale;
                std::thread::sleep(Duration::from_nanos(ns.round() as u64));
                WorkloadEvent::BatchEnd(wall_clock_ns())
            }
            other => other,
        };
        say(&event)?;
        if cmd == HarnessCommand::Stop {
            break;
        }
    }
    Ok(())
}
