//! C ABI over the enerprof analysis and scoring core.
//!
//! Every fallible function returns an [`EpStatus`] and writes its result
//! through an out pointer. On failure the message is kept per thread and can
//! be read with [`ep_last_error`]. Handles are opaque and owned by the caller
//! until passed to their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use enerprof::analysis::{
    extrapolate_energy, fit_frontier, naive_estimate, pareto_front, pearson, spearman, FrontierFit, TradeoffPoint,
};
use enerprof::energy::{integrate_energy, metrics_from_totals};
use enerprof::scoring::{manhattan_score, ratio_score, EnergyScale};
use enerprof::{Error, InferenceSetup, PowerSample, ScoreParams};

/// Status codes. Zero is success; everything else has a message available
/// from [`ep_last_error`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    InsufficientSamples = 3,
    EmptyRun = 4,
    Degenerate = 5,
    FitFailed = 6,
    BufferTooSmall = 7,
    Panic = 8,
    Other = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpEnergyScale {
    /// Energy term is `E/N`.
    Literal = 0,
    /// Energy term is `100 * E/N`.
    Balanced = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpScoreParams {
    /// Energy weight in [0, 1].
    pub weight: f64,
    /// Energy normalization in joules.
    pub norm: f64,
    /// Accuracy threshold in percent.
    pub min_accuracy: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpMetrics {
    pub energy_per_image: f64,
    pub throughput: f64,
    pub latency: f64,
    pub avg_power: f64,
    pub batch_size: u32,
    pub images_processed: u64,
    pub wall_time: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EpFitCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// RMS residual in accuracy percent.
    pub residual: f64,
}

/// Power samples in nanoseconds and watts.
pub struct EpSampleSeries {
    samples: Vec<PowerSample>,
}

/// A fitted accuracy-versus-energy frontier.
pub struct EpFrontierFit {
    fit: FrontierFit,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> EpStatus {
    match err {
        Error::InvalidInput(_) | Error::MissingPeakCompute(_) => EpStatus::InvalidInput,
        Error::InsufficientSamples { .. } => EpStatus::InsufficientSamples,
        Error::EmptyRun => EpStatus::EmptyRun,
        Error::Degenerate(_) => EpStatus::Degenerate,
        Error::FitFailed(_) => EpStatus::FitFailed,
        _ => EpStatus::Other,
    }
}

/// Runs `f`, recording the error message and turning panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (EpStatus, String)>) -> EpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EpStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            EpStatus::Panic
        }
    }
}

fn lift<T>(r: enerprof::Result<T>) -> Result<T, (EpStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (EpStatus, String) {
    (EpStatus::NullPointer, format!("{what} is null"))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, (EpStatus, String)> {
    p.as_mut().ok_or_else(|| null(what))
}

/// A slice from a pointer and length; a null pointer is allowed when `n` is 0.
unsafe fn input<'a, T>(p: *const T, n: usize, what: &str) -> Result<&'a [T], (EpStatus, String)> {
    if n == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(slice::from_raw_parts(p, n))
    }
}

/// Copies the last error message on this thread into `buf` (nul terminated,
/// truncated to `len`). Returns the full message length without the nul, or
/// 0 when there is none.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn ep_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn ep_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

#[no_mangle]
pub extern "C" fn ep_series_new() -> *mut EpSampleSeries {
    Box::into_raw(Box::new(EpSampleSeries { samples: Vec::new() }))
}

/// # Safety
/// `series` must come from [`ep_series_new`] and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn ep_series_free(series: *mut EpSampleSeries) {
    if !series.is_null() {
        drop(Box::from_raw(series));
    }
}

/// Appends one sample. Samples may arrive out of order.
///
/// # Safety
/// `series` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ep_series_push(series: *mut EpSampleSeries, t_ns: u64, watts: f64) -> EpStatus {
    guard(|| {
        let s = out(series, "series")?;
        if !(watts.is_finite() && watts >= 0.0) {
            return Err((EpStatus::InvalidInput, format!("power {watts} W must be nonnegative")));
        }
        s.samples.push(PowerSample::new(t_ns, watts));
        Ok(())
    })
}

/// # Safety
/// `series` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn ep_series_len(series: *const EpSampleSeries) -> usize {
    series.as_ref().map_or(0, |s| s.samples.len())
}

unsafe fn sorted(series: *const EpSampleSeries) -> Result<Vec<PowerSample>, (EpStatus, String)> {
    let s = series.as_ref().ok_or_else(|| null("series"))?;
    let mut samples = s.samples.clone();
    samples.sort_by_key(|p| p.t);
    Ok(samples)
}

/// Energy in joules over `[t0, t1]` by the trapezoid rule, with power held
/// constant beyond the first and last sample.
///
/// # Safety
/// `series` must be a live handle; `joules` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_series_integrate(
    series: *const EpSampleSeries,
    t0_ns: u64,
    t1_ns: u64,
    joules: *mut f64,
) -> EpStatus {
    guard(|| {
        let samples = sorted(series)?;
        *out(joules, "joules")? = lift(integrate_energy(&samples, t0_ns, t1_ns))?;
        Ok(())
    })
}

/// Metrics for a run that started at `window_start_ns` and completed
/// `n_marks` batches of `batch_size` images at the given times.
///
/// # Safety
/// `series` must be a live handle, `marks_ns` valid for `n_marks` values and
/// `metrics` writable.
#[no_mangle]
pub unsafe extern "C" fn ep_series_derive(
    series: *const EpSampleSeries,
    window_start_ns: u64,
    marks_ns: *const u64,
    n_marks: usize,
    batch_size: u32,
    metrics: *mut EpMetrics,
) -> EpStatus {
    guard(|| {
        let samples = sorted(series)?;
        let marks = input(marks_ns, n_marks, "marks")?;
        let Some(&end) = marks.iter().max() else {
            return Err((EpStatus::EmptyRun, Error::EmptyRun.to_string()));
        };
        if end <= window_start_ns {
            return Err((EpStatus::InvalidInput, "last mark not after window start".into()));
        }
        let joules = lift(integrate_energy(&samples, window_start_ns, end))?;
        let wall = (end - window_start_ns) as f64 / 1e9;
        let m = lift(metrics_from_totals(joules, marks.len() as u64, batch_size, wall))?;
        *out(metrics, "metrics")? = EpMetrics {
            energy_per_image: m.energy_per_image,
            throughput: m.throughput,
            latency: m.latency,
            avg_power: m.avg_power,
            batch_size: m.batch_size,
            images_processed: m.images_processed,
            wall_time: m.wall_time,
        };
        Ok(())
    })
}

fn params(p: EpScoreParams) -> ScoreParams {
    ScoreParams { weight: p.weight, norm: p.norm, min_accuracy: p.min_accuracy }
}

/// Accuracy per joule. `*kept` is set to 0 and `*score` left untouched when
/// the accuracy is below the threshold.
///
/// # Safety
/// `score` and `kept` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_ratio_score(
    accuracy: f64,
    energy: f64,
    p: EpScoreParams,
    score: *mut f64,
    kept: *mut bool,
) -> EpStatus {
    guard(|| {
        let kept = out(kept, "kept")?;
        let score = out(score, "score")?;
        match lift(ratio_score(accuracy, energy, &params(p)))? {
            Some(s) => {
                *score = s;
                *kept = true;
            }
            None => *kept = false,
        }
        Ok(())
    })
}

/// Weighted Manhattan score, higher is better.
///
/// # Safety
/// `score` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_manhattan_score(
    accuracy: f64,
    energy: f64,
    p: EpScoreParams,
    scale: EpEnergyScale,
    score: *mut f64,
) -> EpStatus {
    guard(|| {
        let scale = match scale {
            EpEnergyScale::Literal => EnergyScale::Literal,
            EpEnergyScale::Balanced => EnergyScale::Balanced,
        };
        *out(score, "score")? = lift(manhattan_score(accuracy, energy, &params(p), scale))?;
        Ok(())
    })
}

/// FLOPs-based energy estimate in joules per image: `flops / peak * tdp`.
///
/// # Safety
/// `joules` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_naive_estimate(flops: f64, peak_flops: f64, tdp: f64, joules: *mut f64) -> EpStatus {
    guard(|| {
        if !(peak_flops.is_finite() && peak_flops > 0.0 && tdp.is_finite() && tdp > 0.0) {
            return Err((EpStatus::InvalidInput, "peak compute and TDP must be positive".into()));
        }
        let setup = InferenceSetup::new("ffi", "ffi", tdp).with_peak_compute(peak_flops);
        *out(joules, "joules")? = lift(naive_estimate(flops, &setup))?;
        Ok(())
    })
}

/// # Safety
/// `xs` and `ys` must be valid for `n` values; `r` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_pearson(xs: *const f64, ys: *const f64, n: usize, r: *mut f64) -> EpStatus {
    guard(|| {
        *out(r, "r")? = lift(pearson(input(xs, n, "xs")?, input(ys, n, "ys")?))?;
        Ok(())
    })
}

/// Rank correlation with average ranks for ties.
///
/// # Safety
/// `xs` and `ys` must be valid for `n` values; `rho` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_spearman(xs: *const f64, ys: *const f64, n: usize, rho: *mut f64) -> EpStatus {
    guard(|| {
        *out(rho, "rho")? = lift(spearman(input(xs, n, "xs")?, input(ys, n, "ys")?))?;
        Ok(())
    })
}

unsafe fn points(energy: *const f64, accuracy: *const f64, n: usize) -> Result<Vec<TradeoffPoint>, (EpStatus, String)> {
    let (e, a) = (input(energy, n, "energy")?, input(accuracy, n, "accuracy")?);
    Ok(e.iter().zip(a).map(|(&e, &a)| TradeoffPoint::new(e, a)).collect())
}

/// Indices of the non-dominated points (lower energy and higher accuracy
/// are better), in increasing energy. `*count` receives the front size; if
/// it exceeds `capacity` the status is `BufferTooSmall` and nothing is
/// written to `indices`.
///
/// # Safety
/// `energy` and `accuracy` must be valid for `n` values, `indices` for
/// `capacity` values, and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn ep_pareto_front(
    energy: *const f64,
    accuracy: *const f64,
    n: usize,
    indices: *mut usize,
    capacity: usize,
    count: *mut usize,
) -> EpStatus {
    guard(|| {
        let front = pareto_front(&points(energy, accuracy, n)?);
        *out(count, "count")? = front.len();
        if front.len() > capacity {
            return Err((EpStatus::BufferTooSmall, format!("front has {} points, capacity {capacity}", front.len())));
        }
        if !front.is_empty() {
            if indices.is_null() {
                return Err(null("indices"));
            }
            ptr::copy_nonoverlapping(front.as_ptr(), indices, front.len());
        }
        Ok(())
    })
}

/// Fits `accuracy = c1 * ln(ln(E) + c2) + c3` to at least four points.
///
/// # Safety
/// `energy` and `accuracy` must be valid for `n` values; `fit` must be
/// writable. The new handle is released with [`ep_frontier_free`].
#[no_mangle]
pub unsafe extern "C" fn ep_frontier_fit(
    energy: *const f64,
    accuracy: *const f64,
    n: usize,
    fit: *mut *mut EpFrontierFit,
) -> EpStatus {
    guard(|| {
        let slot = out(fit, "fit")?;
        let f = lift(fit_frontier(&points(energy, accuracy, n)?))?;
        *slot = Box::into_raw(Box::new(EpFrontierFit { fit: f }));
        Ok(())
    })
}

/// # Safety
/// `fit` must come from [`ep_frontier_fit`] and not be freed yet, or be null.
#[no_mangle]
pub unsafe extern "C" fn ep_frontier_free(fit: *mut EpFrontierFit) {
    if !fit.is_null() {
        drop(Box::from_raw(fit));
    }
}

/// # Safety
/// `fit` must be a live handle; `coefficients` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_frontier_coefficients(
    fit: *const EpFrontierFit,
    coefficients: *mut EpFitCoefficients,
) -> EpStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.fit;
        *out(coefficients, "coefficients")? =
            EpFitCoefficients { c1: f.c1, c2: f.c2, c3: f.c3, residual: f.residual_norm };
        Ok(())
    })
}

/// Accuracy predicted at `energy` joules per image.
///
/// # Safety
/// `fit` must be a live handle; `accuracy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_frontier_eval(fit: *const EpFrontierFit, energy: f64, accuracy: *mut f64) -> EpStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.fit;
        if !(energy.is_finite() && energy > 0.0) {
            return Err((EpStatus::InvalidInput, format!("energy {energy} J must be positive")));
        }
        *out(accuracy, "accuracy")? = f.eval(energy);
        Ok(())
    })
}

/// Energy per image the fitted trend needs to reach `target_accuracy`.
///
/// # Safety
/// `fit` must be a live handle; `energy` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ep_frontier_extrapolate(
    fit: *const EpFrontierFit,
    target_accuracy: f64,
    energy: *mut f64,
) -> EpStatus {
    guard(|| {
        let f = &fit.as_ref().ok_or_else(|| null("fit"))?.fit;
        *out(energy, "energy")? = lift(extrapolate_energy(f, target_accuracy))?;
        Ok(())
    })
}
