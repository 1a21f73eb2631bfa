//! Power telemetry: sensor-log parsing and serialization, and a sampler that
//! collects ordered [`PowerSample`] streams from a live command, a replay
//! file or a synthetic power profile.
//!
//! Log lines follow the vendor query-CSV layout:
//!
//! ```text
//! 2024/01/01 00:00:00.010, 250.00 W, 98 %, 4096 MiB, 55
//! ```
//!
//! Timestamps are read as UTC with millisecond resolution. Everything after
//! the power column is optional.

use std::io::{BufRead, BufReader};
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Nanos, PowerSample};

pub const DEFAULT_RATE_HZ: f64 = 100.0;

/// Inter-sample intervals above this multiple of the expected period are gaps.
pub const GAP_FACTOR: f64 = 5.0;

/// Sensor-log timestamps carry milliseconds, so rates above 1 kHz cannot be
/// represented.
pub const MAX_RATE_HZ: f64 = 1000.0;

/// Default live command; `{period_ms}` is replaced by the sampling period.
pub const DEFAULT_LIVE_COMMAND: &str = "nvidia-smi \
    --query-gpu=timestamp,power.draw,utilization.gpu,memory.used,temperature.gpu \
    --format=csv,noheader -lms {period_ms}";

const NANOS_PER_MILLI: u64 = 1_000_000;
const TIMESTAMP_FORMAT: &str = "%Y/%m/%d %H:%M:%S%.f";

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedLog {
    pub samples: Vec<PowerSample>,
    pub malformed: usize,
}

fn parse_timestamp(field: &str) -> Option<Nanos> {
    let dt = NaiveDateTime::parse_from_str(field.trim(), TIMESTAMP_FORMAT).ok()?;
    let ns = dt.and_utc().timestamp_nanos_opt()?;
    u64::try_from(ns).ok().filter(|&t| t > 0)
}

fn format_timestamp(t: Nanos) -> String {
    let secs = (t / 1_000_000_000) as i64;
    let nanos = (t % 1_000_000_000) as u32;
    match DateTime::from_timestamp(secs, nanos) {
        Some(dt) => dt.naive_utc().format("%Y/%m/%d %H:%M:%S%.3f").to_string(),
        None => unreachable!("u64 nanoseconds always fit a chrono DateTime"),
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("[n/a]") || f.eq_ignore_ascii_case("n/a")
}

/// Strip a unit suffix and parse; `Ok(None)` for a missing value.
fn parse_field<T: std::str::FromStr>(field: Option<&str>, unit: &str) -> std::result::Result<Option<T>, ()> {
    let Some(field) = field else { return Ok(None) };
    if is_missing(field) {
        return Ok(None);
    }
    let f = field.trim();
    let f = f.strip_suffix(unit).unwrap_or(f).trim();
    f.parse::<T>().map(Some).map_err(|_| ())
}

/// Parse one log line. Returns `None` for malformed lines.
pub fn parse_line(line: &str) -> Option<PowerSample> {
    let mut fields = line.split(',');
    let t = parse_timestamp(fields.next()?)?;
    let power: f64 = parse_field(fields.next(), "W").ok()??;
    if !power.is_finite() || power < 0.0 {
        return None;
    }
    let util = parse_field::<u32>(fields.next(), "%").ok()?;
    let mem_used = parse_field::<u64>(fields.next(), "MiB").ok()?;
    let temp = parse_field::<i32>(fields.next(), "").ok()?;
    Some(PowerSample { t, power, util, mem_used, temp })
}

fn is_header(line: &str) -> bool {
    line.trim_start().to_ascii_lowercase().starts_with("timestamp")
}

/// Parse a sensor log into samples, preserving line order.
///
/// Blank lines and a CSV header row are ignored; any other line that does not
/// parse is counted as malformed. Fails only when nothing parses.
pub fn parse_sensor_log(text: &str) -> Result<ParsedLog> {
    let mut out = ParsedLog::default();
    for line in text.lines() {
        if line.trim().is_empty() || is_header(line) {
            continue;
        }
        match parse_line(line) {
            Some(s) => out.samples.push(s),
            None => out.malformed += 1,
        }
    }
    if out.samples.is_empty() {
        return Err(Error::NoSamples { malformed: out.malformed });
    }
    Ok(out)
}

fn format_power(p: f64) -> String {
    let two = format!("{p:.2}");
    if two.parse::<f64>() == Ok(p) {
        two
    } else {
        format!("{p}")
    }
}

/// Render one sample as a log line. Optional fields are emitted positionally,
/// so a missing middle field becomes `[N/A]`.
pub fn format_sample(s: &PowerSample) -> String {
    let mut line = format!("{}, {} W", format_timestamp(s.t), format_power(s.power));
    let last = if s.temp.is_some() {
        3
    } else if s.mem_used.is_some() {
        2
    } else if s.util.is_some() {
        1
    } else {
        0
    };
    let na = || "[N/A]".to_string();
    if last >= 1 {
        line += &format!(", {}", s.util.map_or_else(na, |u| format!("{u} %")));
    }
    if last >= 2 {
        line += &format!(", {}", s.mem_used.map_or_else(na, |m| format!("{m} MiB")));
    }
    if last >= 3 {
        line += &format!(", {}", s.temp.map_or_else(na, |c| c.to_string()));
    }
    line
}

pub fn serialize_samples(samples: &[PowerSample]) -> String {
    let mut out = String::with_capacity(samples.len() * 48);
    for s in samples {
        out.push_str(&format_sample(s));
        out.push('\n');
    }
    out
}

/// Whether every timestamp survives the millisecond log format unchanged.
pub fn is_millisecond_aligned(samples: &[PowerSample]) -> bool {
    samples.iter().all(|s| s.t % NANOS_PER_MILLI == 0)
}

/// Piecewise power profile for synthetic sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SyntheticProfile {
    /// Consecutive `(duration seconds, watts)` segments.
    Segments(Vec<(f64, f64)>),
    /// Linear ramp from `start` to `end` watts over `duration` seconds.
    Ramp { start: f64, end: f64, duration: f64 },
}

impl SyntheticProfile {
    pub fn constant(watts: f64, duration: f64) -> Self {
        SyntheticProfile::Segments(vec![(duration, watts)])
    }

    pub fn check(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::SamplerConfig(msg.to_string()));
        match self {
            SyntheticProfile::Segments(segs) => {
                if segs.is_empty() {
                    return bad("synthetic profile has no segments");
                }
                for &(d, p) in segs {
                    if !(d.is_finite() && d > 0.0) {
                        return bad("segment duration must be positive");
                    }
                    if !(p.is_finite() && p >= 0.0) {
                        return bad("segment power must be nonnegative");
                    }
                }
            }
            SyntheticProfile::Ramp { start, end, duration } => {
                if !(duration.is_finite() && *duration > 0.0) {
                    return bad("ramp duration must be positive");
                }
                if !(start.is_finite() && *start >= 0.0 && end.is_finite() && *end >= 0.0) {
                    return bad("ramp power must be nonnegative");
                }
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        match self {
            SyntheticProfile::Segments(segs) => segs.iter().map(|s| s.0).sum(),
            SyntheticProfile::Ramp { duration, .. } => *duration,
        }
    }

    /// Power at `offset` seconds from the profile start. Segment boundaries
    /// belong to the following segment; the end belongs to the last one.
    pub fn power_at(&self, offset: f64) -> f64 {
        match self {
            SyntheticProfile::Segments(segs) => {
                let mut edge = 0.0;
                for &(d, p) in segs {
                    edge += d;
                    if offset < edge {
                        return p;
                    }
                }
                segs.last().map_or(0.0, |s| s.1)
            }
            SyntheticProfile::Ramp { start, end, duration } => {
                let frac = (offset / duration).clamp(0.0, 1.0);
                start + (end - start) * frac
            }
        }
    }

    /// Samples at `rate` Hz covering `[0, duration]`, anchored at `start`.
    /// Timestamps are rounded to whole milliseconds.
    pub fn generate(&self, start: Nanos, rate: f64) -> Vec<PowerSample> {
        let duration = self.duration();
        let count = (duration * rate + 1e-9).floor() as u64;
        (0..=count)
            .map(|k| {
                let offset_ms = (k as f64 * 1000.0 / rate).round() as u64;
                let offset = offset_ms as f64 / 1000.0;
                PowerSample::new(start + offset_ms * NANOS_PER_MILLI, self.power_at(offset))
            })
            .collect()
    }

    /// Parse `ramp:<start W>:<end W>:<seconds>` or a comma list of
    /// `<seconds>:<watts>` segments.
    pub fn parse(params: &str) -> Result<Self> {
        let bad = || Error::SamplerConfig(format!("invalid synthetic profile `{params}`"));
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        let profile = if let Some(rest) = params.strip_prefix("ramp:") {
            let parts: Vec<&str> = rest.split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            SyntheticProfile::Ramp { start: num(parts[0])?, end: num(parts[1])?, duration: num(parts[2])? }
        } else {
            let segs = params
                .split(',')
                .map(|seg| {
                    let (d, p) = seg.split_once(':').ok_or_else(bad)?;
                    Ok((num(d)?, num(p)?))
                })
                .collect::<Result<Vec<_>>>()?;
            SyntheticProfile::Segments(segs)
        };
        profile.check()?;
        Ok(profile)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SamplerSource {
    /// Command printing sensor-log lines to stdout; `{period_ms}` is substituted.
    LiveCommand(String),
    ReplayFile(PathBuf),
    Synthetic(SyntheticProfile),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    /// Samples per second.
    pub rate: f64,
    pub source: SamplerSource,
}

impl SamplerConfig {
    pub fn new(source: SamplerSource) -> Self {
        SamplerConfig { rate: DEFAULT_RATE_HZ, source }
    }

    pub fn with_rate(mut self, rate: f64) -> Self {
        self.rate = rate;
        self
    }

    pub fn period_ns(&self) -> f64 {
        1e9 / self.rate
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rate.is_finite() && self.rate > 0.0 && self.rate <= MAX_RATE_HZ) {
            return Err(Error::SamplerConfig(format!("rate must be in (0, {MAX_RATE_HZ}] Hz, got {}", self.rate)));
        }
        if let SamplerSource::Synthetic(p) = &self.source {
            p.check()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Gap {
    pub from: Nanos,
    pub to: Nanos,
}

/// Intervals between consecutive samples exceeding [`GAP_FACTOR`] periods.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapReport {
    pub threshold_ns: f64,
    pub gaps: Vec<Gap>,
}

impl GapReport {
    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }
}

pub fn gap_report(samples: &[PowerSample], rate: f64) -> GapReport {
    let threshold_ns = GAP_FACTOR * 1e9 / rate;
    let gaps = samples
        .windows(2)
        .filter(|w| (w[1].t - w[0].t) as f64 > threshold_ns)
        .map(|w| Gap { from: w[0].t, to: w[1].t })
        .collect();
    GapReport { threshold_ns, gaps }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerOutput {
    pub samples: Vec<PowerSample>,
    pub gaps: GapReport,
    pub malformed: usize,
}

const READER_GRACE: std::time::Duration = std::time::Duration::from_millis(500);

struct LiveState {
    child: Child,
    reader: Option<JoinHandle<()>>,
    buffer: Arc<Mutex<Vec<PowerSample>>>,
    malformed: Arc<AtomicUsize>,
}

enum State {
    Buffered(ParsedLog),
    Live(LiveState),
    Stopped,
}

/// A running sampler. Samples accumulate until [`Sampler::stop`]; reading
/// while running is not supported.
pub struct Sampler {
    rate: f64,
    state: State,
}

fn split_command(command: &str) -> Vec<String> {
    command.split_whitespace().map(str::to_string).collect()
}

/// Start collecting samples. `anchor` is the start time given to synthetic
/// profiles (rounded up to the next millisecond).
pub fn start_sampler(config: &SamplerConfig, anchor: Nanos) -> Result<Sampler> {
    config.check()?;
    let state = match &config.source {
        SamplerSource::Synthetic(profile) => {
            let start = anchor.div_ceil(NANOS_PER_MILLI).max(1) * NANOS_PER_MILLI;
            State::Buffered(ParsedLog { samples: profile.generate(start, config.rate), malformed: 0 })
        }
        SamplerSource::ReplayFile(path) => {
            if !path.is_file() {
                return Err(Error::ReplayMissing(path.clone()));
            }
            let text =
                std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
            State::Buffered(parse_sensor_log(&text)?)
        }
        SamplerSource::LiveCommand(template) => {
            let period_ms = (1000.0 / config.rate).round().max(1.0) as u64;
            let command = template.replace("{period_ms}", &period_ms.to_string());
            let argv = split_command(&command);
            let Some((program, args)) = argv.split_first() else {
                return Err(Error::SamplerConfig("empty live command".into()));
            };
            let mut child = Command::new(program)
                .args(args)
                .env("TZ", "UTC")
                .stdin(Stdio::null())
                .stdout(Stdio::piped())
                .stderr(Stdio::null())
                .spawn()
                .map_err(|source| Error::SamplerSpawn { command: command.clone(), source })?;
            let stdout = child.stdout.take().expect("stdout is piped");
            let buffer = Arc::new(Mutex::new(Vec::new()));
            let malformed = Arc::new(AtomicUsize::new(0));
            let (buf, bad) = (Arc::clone(&buffer), Arc::clone(&malformed));
            let reader = std::thread::spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let Ok(line) = line else { break };
                    if line.trim().is_empty() || is_header(&line) {
                        continue;
                    }
                    match parse_line(&line) {
                        Some(s) => buf.lock().expect("sample buffer poisoned").push(s),
                        None => {
                            bad.fetch_add(1, Ordering::Relaxed);
                        }
                    }
                }
            });
            State::Live(LiveState { child, reader: Some(reader), buffer, malformed })
        }
    };
    Ok(Sampler { rate: config.rate, state })
}

impl Sampler {
    pub fn is_running(&self) -> bool {
        !matches!(self.state, State::Stopped)
    }

    /// Stop sampling and hand back the ordered sample sequence.
    pub fn stop(&mut self) -> Result<SamplerOutput> {
        let (mut samples, malformed) = match std::mem::replace(&mut self.state, State::Stopped) {
            State::Stopped => return Err(Error::AlreadyStopped),
            State::Buffered(log) => (log.samples, log.malformed),
            State::Live(mut live) => {
                let _ = live.child.kill();
                let _ = live.child.wait();
                // A grandchild may keep the pipe open after the kill, so the
                // reader gets a short grace period and is otherwise detached.
                if let Some(handle) = live.reader.take() {
                    let deadline = std::time::Instant::now() + READER_GRACE;
                    while !handle.is_finished() && std::time::Instant::now() < deadline {
                        std::thread::sleep(std::time::Duration::from_millis(5));
                    }
                    if handle.is_finished() {
                        let _ = handle.join();
                    }
                }
                let samples = std::mem::take(&mut *live.buffer.lock().expect("sample buffer poisoned"));
                (samples, live.malformed.load(Ordering::Relaxed))
            }
        };
        samples.sort_by_key(|s| s.t);
        let gaps = gap_report(&samples, self.rate);
        Ok(SamplerOutput { samples, gaps, malformed })
    }
}

impl Drop for Sampler {
    fn drop(&mut self) {
        if let State::Live(live) = &mut self.state {
            let _ = live.child.kill();
            let _ = live.child.wait();
        }
    }
}

/// Convenience wrapper matching the free-function style of [`start_sampler`].
pub fn stop_sampler(sampler: &mut Sampler) -> Result<SamplerOutput> {
    sampler.stop()
}
