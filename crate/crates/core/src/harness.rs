//! Batch-size sweep harness.
//!
//! A workload is any process that speaks a line protocol over its standard
//! streams:
//!
//! ```text
//! child -> harness (stdout):  READY | BATCH_END <t_ns> | OOM | FATAL <message> | DONE
//! harness -> child (stdin):   CONFIG <batch_size> | EXEC | STOP
//! ```
//!
//! The child announces `READY` once loaded. Each `CONFIG` is answered with
//! `READY` (or `OOM` if the batch size cannot be allocated), each `EXEC` runs
//! exactly one batch and is answered with `BATCH_END` carrying the completion
//! time, and `STOP` is answered with `DONE`. Execution is synchronous: the
//! harness never issues a second `EXEC` before the previous `BATCH_END`.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::energy::{derive_metrics, tdp_headroom};
use crate::error::{Error, Result};
use crate::telemetry::{gap_report, start_sampler, SamplerConfig, GAP_FACTOR};
use crate::types::{InferenceSetup, Nanos, QualityFlag, RunMeasurement};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub start_batch: u32,
    pub max_batch: Option<u32>,
    /// The measured run needs strictly more repetitions than this.
    pub min_reps: u32,
    /// The measured run needs strictly more seconds than this.
    pub min_runtime: f64,
    pub warmup_min_reps: u32,
    pub warmup_min_runtime: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            start_batch: 1,
            max_batch: None,
            min_reps: 13,
            min_runtime: 10.0,
            warmup_min_reps: 3,
            warmup_min_runtime: 2.0,
        }
    }
}

fn secs_to_ns(s: f64) -> u64 {
    (s * 1e9).round() as u64
}

impl SweepConfig {
    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(m.to_string()));
        if self.start_batch < 1 {
            return bad("start batch must be at least 1");
        }
        if self.min_reps < 1 {
            return bad("min reps must be at least 1");
        }
        if !(self.min_runtime.is_finite() && self.min_runtime > 0.0) {
            return bad("min runtime must be positive");
        }
        if !(self.warmup_min_runtime.is_finite() && self.warmup_min_runtime >= 0.0) {
            return bad("warm-up runtime must be nonnegative");
        }
        if self.max_batch.is_some_and(|m| m < self.start_batch) {
            return bad("max batch below start batch");
        }
        Ok(())
    }

    /// Stop condition of the measured run: both thresholds exceeded.
    pub fn measured_done(&self, reps: u32, elapsed_ns: u64) -> bool {
        reps > self.min_reps && elapsed_ns > secs_to_ns(self.min_runtime)
    }

    /// Stop condition of the warm-up: both minimums reached.
    pub fn warmup_done(&self, reps: u32, elapsed_ns: u64) -> bool {
        reps >= self.warmup_min_reps && elapsed_ns >= secs_to_ns(self.warmup_min_runtime)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WorkloadEvent {
    Ready,
    BatchEnd(Nanos),
    Oom,
    Fatal(String),
    Done,
}

impl WorkloadEvent {
    pub fn parse(line: &str) -> Result<Self> {
        let line = line.trim_end_matches(['\r', '\n']);
        let (word, rest) = line.split_once(' ').unwrap_or((line, ""));
        match (word, rest) {
            ("READY", "") => Ok(WorkloadEvent::Ready),
            ("OOM", "") => Ok(WorkloadEvent::Oom),
            ("DONE", "") => Ok(WorkloadEvent::Done),
            ("FATAL", msg) => Ok(WorkloadEvent::Fatal(msg.to_string())),
            ("BATCH_END", t) => t
                .parse::<u64>()
                .map(WorkloadEvent::BatchEnd)
                .map_err(|_| Error::Protocol(format!("bad BATCH_END timestamp `{t}`"))),
            _ => Err(Error::Protocol(format!("unrecognized line `{line}`"))),
        }
    }
}

impl fmt::Display for WorkloadEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WorkloadEvent::Ready => f.write_str("READY"),
            WorkloadEvent::BatchEnd(t) => write!(f, "BATCH_END {t}"),
            WorkloadEvent::Oom => f.write_str("OOM"),
            WorkloadEvent::Fatal(m) => write!(f, "FATAL {m}"),
            WorkloadEvent::Done => f.write_str("DONE"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HarnessCommand {
    Config(u32),
    Exec,
    Stop,
}

impl HarnessCommand {
    pub fn parse(line: &str) -> Result<Self> {
        let line = line.trim_end_matches(['\r', '\n']);
        match line.split_once(' ') {
            Some(("CONFIG", b)) => b
                .parse()
                .map(HarnessCommand::Config)
                .map_err(|_| Error::Protocol(format!("bad CONFIG batch size `{b}`"))),
            None if line == "EXEC" => Ok(HarnessCommand::Exec),
            None if line == "STOP" => Ok(HarnessCommand::Stop),
            _ => Err(Error::Protocol(format!("unrecognized command `{line}`"))),
        }
    }
}

impl fmt::Display for HarnessCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessCommand::Config(b) => write!(f, "CONFIG {b}"),
            HarnessCommand::Exec => f.write_str("EXEC"),
            HarnessCommand::Stop => f.write_str("STOP"),
        }
    }
}

/// A workload the harness can drive. `now` is the time base the workload's
/// `BATCH_END` timestamps are expressed in.
pub trait Workload {
    fn send(&mut self, cmd: HarnessCommand) -> Result<()>;
    fn recv(&mut self) -> Result<WorkloadEvent>;
    fn now(&self) -> Nanos;
}

pub fn wall_clock_ns() -> Nanos {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_nanos() as u64).unwrap_or(1)
}

/// A child process speaking the workload protocol; runs on the host clock.
pub struct ProcessWorkload {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<String>,
    timeout: Duration,
}

impl ProcessWorkload {
    /// Spawn `command` through `sh -c`.
    pub fn spawn(command: &str) -> Result<Self> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| Error::WorkloadFailure(format!("cannot spawn `{command}`: {e}")))?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout is piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let Ok(line) = line else { break };
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(ProcessWorkload { child, stdin, lines: rx, timeout: Duration::from_secs(600) })
    }

    /// Maximum wait for any single event.
    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }
}

impl Workload for ProcessWorkload {
    fn send(&mut self, cmd: HarnessCommand) -> Result<()> {
        let stdin = self.stdin.as_mut().ok_or_else(|| Error::WorkloadFailure("workload stdin closed".into()))?;
        writeln!(stdin, "{cmd}")
            .and_then(|_| stdin.flush())
            .map_err(|e| Error::WorkloadFailure(format!("workload exited: {e}")))
    }

    fn recv(&mut self) -> Result<WorkloadEvent> {
        loop {
            let line = match self.lines.recv_timeout(self.timeout) {
                Ok(line) => line,
                Err(RecvTimeoutError::Timeout) => {
                    return Err(Error::WorkloadFailure(format!("no event within {:?}", self.timeout)))
                }
                Err(RecvTimeoutError::Disconnected) => {
                    return Err(Error::WorkloadFailure("workload exited unexpectedly".into()))
                }
            };
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            return WorkloadEvent::parse(&line);
        }
    }

    fn now(&self) -> Nanos {
        wall_clock_ns()
    }
}

impl Drop for ProcessWorkload {
    fn drop(&mut self) {
        drop(self.stdin.take());
        let deadline = std::time::Instant::now() + Duration::from_millis(500);
        while std::time::Instant::now() < deadline {
            if let Ok(Some(_)) = self.child.try_wait() {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// Where a simulated failure fires: on the `after_execs`-th `EXEC` (0-based,
/// counted from the latest `CONFIG`) at every batch size `>= min_batch`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureTrigger {
    pub min_batch: u32,
    pub after_execs: u32,
}

/// Scripted workload on a virtual clock: batch latency is
/// `base_latency_ns + per_image_ns * batch_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub start: Nanos,
    pub base_latency_ns: u64,
    pub per_image_ns: u64,
    /// Per-batch-size override of the latency model.
    #[serde(default)]
    pub latency_overrides: Vec<(u32, u64)>,
    /// Clock advance on every `CONFIG` when no slot length is set.
    pub config_gap_ns: u64,
    /// When set, the n-th `CONFIG` jumps the clock to `start + n * slot_ns`.
    pub slot_ns: Option<u64>,
    pub oom: Option<FailureTrigger>,
    pub fatal: Option<FailureTrigger>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start: 1_704_067_200_000_000_000,
            base_latency_ns: 10_000_000,
            per_image_ns: 0,
            latency_overrides: Vec::new(),
            config_gap_ns: 1_000_000_000,
            slot_ns: None,
            oom: None,
            fatal: None,
        }
    }
}

impl SimConfig {
    /// Fixed batches-per-second workload.
    pub fn at_rate(batches_per_sec: f64) -> Self {
        SimConfig { base_latency_ns: (1e9 / batches_per_sec).round() as u64, ..SimConfig::default() }
    }

    pub fn latency_ns(&self, batch_size: u32) -> u64 {
        self.latency_overrides
            .iter()
            .find(|(b, _)| *b == batch_size)
            .map(|(_, l)| *l)
            .unwrap_or(self.base_latency_ns + self.per_image_ns * batch_size as u64)
    }

    /// Parse `key=value` pairs separated by commas, e.g.
    /// `base_ms=5,per_image_ms=0.25,oom=64,slot_s=60`. Durations also accept
    /// integer nanoseconds (`base_ns`, `per_image_ns`, `gap_ns`, `slot_ns`).
    pub fn parse(params: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidInput(format!("simulated workload `{params}`: {m}"));
        let mut cfg = SimConfig::default();
        for pair in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = pair.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{pair}`")))?;
            let f = |v: &str| v.trim().parse::<f64>().map_err(|_| bad(format!("bad number `{v}`")));
            let u = |v: &str| v.trim().parse::<u64>().map_err(|_| bad(format!("bad integer `{v}`")));
            let trigger = |v: &str| -> Result<FailureTrigger> {
                let (b, n) = v.split_once('@').unwrap_or((v, "0"));
                Ok(FailureTrigger { min_batch: u(b)? as u32, after_execs: u(n)? as u32 })
            };
            match k.trim() {
                "rate" => cfg.base_latency_ns = (1e9 / f(v)?).round() as u64,
                "base_ms" => cfg.base_latency_ns = (f(v)? * 1e6).round() as u64,
                "per_image_ms" => cfg.per_image_ns = (f(v)? * 1e6).round() as u64,
                "base_ns" => cfg.base_latency_ns = u(v)?,
                "per_image_ns" => cfg.per_image_ns = u(v)?,
                "gap_s" => cfg.config_gap_ns = (f(v)? * 1e9).round() as u64,
                "gap_ns" => cfg.config_gap_ns = u(v)?,
                "slot_ns" => cfg.slot_ns = Some(u(v)?),
                "slot_s" => cfg.slot_ns = Some((f(v)? * 1e9).round() as u64),
                "start" => cfg.start = u(v)? * 1_000_000_000,
                "start_ns" => cfg.start = u(v)?,
                "oom" => cfg.oom = Some(trigger(v)?),
                "fatal" => cfg.fatal = Some(trigger(v)?),
                other => return Err(bad(format!("unknown key `{other}`"))),
            }
        }
        if cfg.base_latency_ns == 0 && cfg.per_image_ns == 0 {
            return Err(bad("latency must be positive".into()));
        }
        Ok(cfg)
    }
}

impl SimConfig {
    /// Inverse of [`SimConfig::parse`] in integer nanoseconds. Latency
    /// overrides have no textual form and are dropped.
    pub fn to_params(&self) -> String {
        let mut parts = vec![
            format!("start_ns={}", self.start),
            format!("base_ns={}", self.base_latency_ns),
            format!("per_image_ns={}", self.per_image_ns),
            format!("gap_ns={}", self.config_gap_ns),
        ];
        if let Some(slot) = self.slot_ns {
            parts.push(format!("slot_ns={slot}"));
        }
        for (key, trigger) in [("oom", self.oom), ("fatal", self.fatal)] {
            if let Some(t) = trigger {
                parts.push(format!("{key}={}@{}", t.min_batch, t.after_execs));
            }
        }
        parts.join(",")
    }
}

pub struct SimulatedWorkload {
    cfg: SimConfig,
    clock: Nanos,
    batch_size: u32,
    configs: u64,
    execs_since_config: u32,
    total_execs: u64,
    pending: VecDeque<WorkloadEvent>,
}

impl SimulatedWorkload {
    pub fn new(cfg: SimConfig) -> Self {
        let clock = cfg.start;
        SimulatedWorkload {
            cfg,
            clock,
            batch_size: 0,
            configs: 0,
            execs_since_config: 0,
            total_execs: 0,
            pending: VecDeque::from([WorkloadEvent::Ready]),
        }
    }

    /// Batches executed so far, including warm-up.
    pub fn total_execs(&self) -> u64 {
        self.total_execs
    }

    fn fires(&self, trigger: Option<FailureTrigger>) -> bool {
        trigger.is_some_and(|t| self.batch_size >= t.min_batch && self.execs_since_config == t.after_execs)
    }
}

impl Workload for SimulatedWorkload {
    fn send(&mut self, cmd: HarnessCommand) -> Result<()> {
        let event = match cmd {
            HarnessCommand::Config(b) => {
                self.clock = match self.cfg.slot_ns {
                    Some(slot) => self.cfg.start + self.configs * slot,
                    None => self.clock + self.cfg.config_gap_ns,
                };
                self.configs += 1;
                self.batch_size = b;
                self.execs_since_config = 0;
                WorkloadEvent::Ready
            }
            HarnessCommand::Exec => {
                let event = if self.fires(self.cfg.fatal) {
                    WorkloadEvent::Fatal("simulated failure".into())
                } else if self.fires(self.cfg.oom) {
                    WorkloadEvent::Oom
                } else {
                    self.clock += self.cfg.latency_ns(self.batch_size);
                    self.total_execs += 1;
                    WorkloadEvent::BatchEnd(self.clock)
                };
                self.execs_since_config += 1;
                event
            }
            HarnessCommand::Stop => WorkloadEvent::Done,
        };
        self.pending.push_back(event);
        Ok(())
    }

    fn recv(&mut self) -> Result<WorkloadEvent> {
        self.pending.pop_front().ok_or_else(|| Error::Protocol("no pending event".into()))
    }

    fn now(&self) -> Nanos {
        self.clock
    }
}

/// Outcome of a warm-up that did not hit a fatal error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarmupOutcome {
    Completed { batches: u32 },
    OutOfMemory,
}

fn exec_one(workload: &mut dyn Workload, batch_size: u32) -> Result<Nanos> {
    workload.send(HarnessCommand::Exec)?;
    match workload.recv()? {
        WorkloadEvent::BatchEnd(t) => Ok(t),
        WorkloadEvent::Oom => Err(Error::OutOfMemory { batch_size }),
        WorkloadEvent::Fatal(msg) => Err(Error::WorkloadFailure(msg)),
        other => Err(Error::Protocol(format!("expected BATCH_END, got `{other}`"))),
    }
}

/// Run batches until both warm-up minimums are reached; output is discarded.
pub fn run_warmup(workload: &mut dyn Workload, batch_size: u32, cfg: &SweepConfig) -> Result<WarmupOutcome> {
    let start = workload.now();
    let mut reps = 0;
    loop {
        let t = match exec_one(workload, batch_size) {
            Ok(t) => t,
            Err(Error::OutOfMemory { .. }) => return Ok(WarmupOutcome::OutOfMemory),
            Err(e) => return Err(e),
        };
        reps += 1;
        if cfg.warmup_done(reps, t.saturating_sub(start)) {
            return Ok(WarmupOutcome::Completed { batches: reps });
        }
    }
}

/// Run batches synchronously until more than `min_reps` batches and more
/// than `min_runtime` seconds have elapsed, sampling power throughout.
///
/// The window spans from issuing the first `EXEC` to the last `BATCH_END`;
/// only samples inside it are kept.
pub fn run_measured(
    workload: &mut dyn Workload,
    model_id: &str,
    setup: &InferenceSetup,
    batch_size: u32,
    cfg: &SweepConfig,
    sampler: &SamplerConfig,
) -> Result<RunMeasurement> {
    let mut handle = start_sampler(sampler, workload.now())?;
    let window_start = workload.now();
    let mut marks: Vec<Nanos> = Vec::new();
    loop {
        let t = exec_one(workload, batch_size)?;
        let prev = marks.last().copied().unwrap_or(window_start);
        if t <= prev {
            return Err(Error::Protocol(format!("BATCH_END {t} not after {prev}")));
        }
        marks.push(t);
        if cfg.measured_done(marks.len() as u32, t - window_start) {
            break;
        }
    }
    let output = handle.stop()?;
    let window_end = *marks.last().expect("at least one mark");
    let samples: Vec<_> = output.samples.into_iter().filter(|s| s.t >= window_start && s.t <= window_end).collect();

    let mut flags = BTreeSet::new();
    if output.malformed > 0 {
        flags.insert(QualityFlag::MalformedTelemetry);
    }
    let threshold = GAP_FACTOR * sampler.period_ns();
    let uncovered_edge = match (samples.first(), samples.last()) {
        (Some(first), Some(last)) => {
            (first.t - window_start) as f64 > threshold || (window_end - last.t) as f64 > threshold
        }
        _ => true,
    };
    if uncovered_edge || !gap_report(&samples, sampler.rate).is_empty() {
        flags.insert(QualityFlag::SamplerGap);
    }

    let mut run = RunMeasurement {
        model_id: model_id.to_string(),
        setup: setup.clone(),
        batch_size,
        window_start,
        batch_marks: marks,
        samples,
        metrics: None,
        quality_flags: flags,
        idle_baseline: None,
    };
    let metrics = derive_metrics(&run)?;
    if tdp_headroom(&metrics, setup)?.anomalous {
        run.quality_flags.insert(QualityFlag::TdpAnomaly);
    }
    run.metrics = Some(metrics);
    Ok(run)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub runs: Vec<RunMeasurement>,
    pub largest_feasible: u32,
    /// First batch size that ran out of memory, if the sweep ended that way.
    pub infeasible: Option<u32>,
}

fn expect_ready(workload: &mut dyn Workload, batch_size: u32) -> Result<bool> {
    match workload.recv()? {
        WorkloadEvent::Ready => Ok(true),
        WorkloadEvent::Oom => Ok(false),
        WorkloadEvent::Fatal(msg) => Err(Error::WorkloadFailure(msg)),
        other => Err(Error::Protocol(format!("expected READY for batch size {batch_size}, got `{other}`"))),
    }
}

/// Sweep batch sizes `start, 2*start, 4*start, ...` until the workload runs
/// out of memory or `max_batch` is passed. Each feasible size gets a warm-up
/// and a measured run.
pub fn run_sweep(
    workload: &mut dyn Workload,
    model_id: &str,
    setup: &InferenceSetup,
    cfg: &SweepConfig,
    sampler: &SamplerConfig,
) -> Result<SweepResult> {
    cfg.check()?;
    sampler.check()?;
    if workload.recv()? != WorkloadEvent::Ready {
        return Err(Error::Protocol("workload did not announce READY".into()));
    }

    let mut runs = Vec::new();
    let mut infeasible = None;
    let mut batch = Some(cfg.start_batch);
    while let Some(b) = batch.filter(|b| cfg.max_batch.is_none_or(|m| *b <= m)) {
        workload.send(HarnessCommand::Config(b))?;
        if !expect_ready(workload, b)? {
            infeasible = Some(b);
            break;
        }
        if run_warmup(workload, b, cfg)? == WarmupOutcome::OutOfMemory {
            log::info!("{model_id}: batch size {b} out of memory during warm-up");
            infeasible = Some(b);
            break;
        }
        match run_measured(workload, model_id, setup, b, cfg, sampler) {
            Ok(run) => runs.push(run),
            Err(Error::OutOfMemory { .. }) => {
                log::info!("{model_id}: batch size {b} out of memory during measured run");
                infeasible = Some(b);
                break;
            }
            Err(e) => return Err(e),
        }
        batch = b.checked_mul(2);
    }

    if workload.send(HarnessCommand::Stop).is_ok() {
        let _ = workload.recv();
    }
    let largest_feasible = runs.last().map(|r| r.batch_size).ok_or(Error::ModelDoesNotFit)?;
    Ok(SweepResult { runs, largest_feasible, infeasible })
}

/// Directory for lock files: `ENERPROF_STATE_DIR`, else the XDG state home.
pub fn state_dir() -> PathBuf {
    if let Some(dir) = std::env::var_os("ENERPROF_STATE_DIR") {
        return PathBuf::from(dir);
    }
    if let Some(dir) = std::env::var_os("XDG_STATE_HOME") {
        return PathBuf::from(dir).join("enerprof");
    }
    match std::env::var_os("HOME") {
        Some(home) => PathBuf::from(home).join(".local/state/enerprof"),
        None => PathBuf::from(".enerprof"),
    }
}

/// Exclusive per-GPU lock held for the duration of a sweep.
#[derive(Debug)]
pub struct GpuLock {
    path: PathBuf,
}

impl GpuLock {
    pub fn acquire(state_dir: &Path, gpu_label: &str) -> Result<Self> {
        std::fs::create_dir_all(state_dir).map_err(|e| Error::io(format!("creating {}", state_dir.display()), e))?;
        let path = state_dir.join(format!("{gpu_label}.lock"));
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(GpuLock { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => {
                Err(Error::GpuBusy { gpu: gpu_label.to_string(), path })
            }
            Err(e) => Err(Error::io(format!("creating {}", path.display()), e)),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

impl Drop for GpuLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
