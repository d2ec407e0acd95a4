//! C interface to `ddtrack`.
//!
//! Every function returns a `DdtStatus`; on failure the message is kept per
//! thread and can be read with `ddt_last_error`. Objects are opaque handles
//! released with their `_free` function. Passing NULL to a `_free` function
//! is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use num_complex::Complex64;

use ddtrack::cli::LoadedConfig;
use ddtrack::error::Error;
use ddtrack::evalsim::{self, NoiseKind, SimulationConfig};
use ddtrack::freqdata;
use ddtrack::polysys::Controller;
use ddtrack::synth::{self, DesignReport, SynthesisSpec, UNSTABLE_CERTIFICATE};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdtStatus {
    Ok = 0,
    /// Internal failure, including caught panics.
    Failure = 1,
    /// Bad argument, configuration, input file or data.
    Config = 2,
    Infeasible = 3,
    /// Synthesis finished but the stability certificate failed. The report
    /// is still returned.
    Unstable = 4,
    NullArgument = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdtNoise {
    Uniform = 0,
    Gaussian = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DdtSimMetrics {
    pub sigma3_e_m: f64,
    pub sigma3_e_pct: f64,
    pub max_abs_ycp_m: f64,
    pub var_ycp_m2: f64,
    pub var_e_m2: f64,
}

/// A loaded design: plants, spectra, weights and settings.
pub struct DdtSpec(SynthesisSpec);

pub struct DdtReport(DesignReport);

pub struct DdtController(Controller);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let mut msg = msg.into().into_bytes();
    msg.retain(|&b| b != 0);
    let c = CString::new(msg).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DdtStatus {
    match ddtrack::cli::exit_code(e) {
        2 => DdtStatus::Config,
        3 => DdtStatus::Infeasible,
        _ => DdtStatus::Failure,
    }
}

fn guard(f: impl FnOnce() -> Result<DdtStatus, DdtStatus>) -> DdtStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(s)) | Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            DdtStatus::Failure
        }
    }
}

fn fail(e: Error) -> DdtStatus {
    set_error(e.to_string());
    status_of(&e)
}

fn null(name: &str) -> DdtStatus {
    set_error(format!("{name} is NULL"));
    DdtStatus::NullArgument
}

unsafe fn path_arg(p: *const c_char, name: &str) -> Result<PathBuf, DdtStatus> {
    if p.is_null() {
        return Err(null(name));
    }
    let s = CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{name} is not UTF-8"));
        DdtStatus::Config
    })?;
    Ok(PathBuf::from(s))
}

unsafe fn get<'a, T>(p: *const T, name: &str) -> Result<&'a T, DdtStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

/// Message of the last failed call on this thread, or an empty string. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ddt_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn ddt_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads `design.json` and its referenced files. `plants_path` may be NULL,
/// in which case the config's `plants` entry is used.
///
/// # Safety
/// Path arguments must be NUL-terminated strings or NULL; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_spec_load(
    config_path: *const c_char,
    plants_path: *const c_char,
    out: *mut *mut DdtSpec,
) -> DdtStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let config = path_arg(config_path, "config_path")?;
        let plants = if plants_path.is_null() {
            None
        } else {
            Some(path_arg(plants_path, "plants_path")?)
        };
        let load = || -> ddtrack::error::Result<SynthesisSpec> {
            let loaded = LoadedConfig::read(&config)?;
            let path = loaded.plants_path(plants.as_deref())?;
            let set = freqdata::load_plant_set(&path, loaded.config.ts)?;
            loaded.spec(set)
        };
        let spec = load().map_err(fail)?;
        put(out, DdtSpec(spec));
        Ok(DdtStatus::Ok)
    })
}

/// # Safety
/// `spec` must come from `ddt_spec_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddt_spec_free(spec: *mut DdtSpec) {
    if !spec.is_null() {
        drop(Box::from_raw(spec));
    }
}

/// Number of plant cases, or 0 for NULL.
///
/// # Safety
/// `spec` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ddt_spec_num_cases(spec: *const DdtSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.0.plants.len())
}

/// Number of frequency points, or 0 for NULL.
///
/// # Safety
/// `spec` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ddt_spec_num_points(spec: *const DdtSpec) -> usize {
    spec.as_ref().map_or(0, |s| s.0.grid().len())
}

/// Overrides the controller order and iteration count. Zero keeps the
/// current value.
///
/// # Safety
/// `spec` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn ddt_spec_set_order(spec: *mut DdtSpec, order: usize, n_iter: usize) -> DdtStatus {
    guard(|| {
        let s = spec.as_mut().ok_or_else(|| null("spec"))?;
        if order > 0 {
            s.0.order = order;
        }
        if n_iter > 0 {
            s.0.n_iter = n_iter;
        }
        Ok(DdtStatus::Ok)
    })
}

/// Runs the full synthesis. Returns `Unstable` with a valid report when the
/// final controller fails the stability certificate.
///
/// # Safety
/// `spec` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_synthesize(spec: *const DdtSpec, out: *mut *mut DdtReport) -> DdtStatus {
    guard(|| {
        let spec = get(spec, "spec")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let report = synth::synthesize(&spec.0).map_err(fail)?;
        let unstable = report.is_flagged(UNSTABLE_CERTIFICATE);
        put(out, DdtReport(report));
        if unstable {
            set_error("final controller fails the stability certificate");
            return Ok(DdtStatus::Unstable);
        }
        Ok(DdtStatus::Ok)
    })
}

/// # Safety
/// `report` must come from `ddt_synthesize` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddt_report_free(report: *mut DdtReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Copies the objective trace into `buf` (up to `cap` values) and returns
/// its full length.
///
/// # Safety
/// `report` must be a live handle; `buf` must hold `cap` doubles or be NULL
/// with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn ddt_report_objective_trace(report: *const DdtReport, buf: *mut f64, cap: usize) -> usize {
    let Some(r) = report.as_ref() else {
        return 0;
    };
    let trace = &r.0.objective_trace;
    if !buf.is_null() {
        let n = cap.min(trace.len());
        std::ptr::copy_nonoverlapping(trace.as_ptr(), buf, n);
    }
    trace.len()
}

/// Smallest audited H∞ margin, NaN for NULL.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ddt_report_min_margin(report: *const DdtReport) -> f64 {
    report.as_ref().map_or(f64::NAN, |r| r.0.min_audit_margin())
}

/// Report as a JSON string, freed with `ddt_string_free`.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_report_json(report: *const DdtReport, out: *mut *mut c_char) -> DdtStatus {
    guard(|| {
        let r = get(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = CString::new(r.0.to_json()).expect("JSON has no nul").into_raw();
        Ok(DdtStatus::Ok)
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddt_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Copies the synthesized controller into a new handle.
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_report_controller(report: *const DdtReport, out: *mut *mut DdtController) -> DdtStatus {
    guard(|| {
        let r = get(report, "report")?;
        if out.is_null() {
            return Err(null("out"));
        }
        put(out, DdtController(r.0.controller.clone()));
        Ok(DdtStatus::Ok)
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_controller_load(path: *const c_char, out: *mut *mut DdtController) -> DdtStatus {
    guard(|| {
        let path = path_arg(path, "path")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let k = Controller::load(&path).map_err(fail)?;
        put(out, DdtController(k));
        Ok(DdtStatus::Ok)
    })
}

/// Writes the controller JSON atomically.
///
/// # Safety
/// `k` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ddt_controller_save(k: *const DdtController, path: *const c_char) -> DdtStatus {
    guard(|| {
        let k = get(k, "controller")?;
        let path = path_arg(path, "path")?;
        k.0.save(&path).map_err(fail)?;
        Ok(DdtStatus::Ok)
    })
}

/// # Safety
/// `k` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ddt_controller_free(k: *mut DdtController) {
    if !k.is_null() {
        drop(Box::from_raw(k));
    }
}

/// Controller order, or 0 for NULL.
///
/// # Safety
/// `k` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn ddt_controller_order(k: *const DdtController) -> usize {
    k.as_ref().map_or(0, |k| k.0.order())
}

/// Evaluates `X_vcm`, `X_pzt` and `Y` at `z = exp(j 2 pi f ts)`. Real and
/// imaginary parts go to `re[0..3]` and `im[0..3]`.
///
/// # Safety
/// `k` must be a live handle; `re` and `im` must each hold 3 doubles.
#[no_mangle]
pub unsafe extern "C" fn ddt_controller_eval(k: *const DdtController, freq_hz: f64, re: *mut f64, im: *mut f64) -> DdtStatus {
    guard(|| {
        let k = get(k, "controller")?;
        if re.is_null() || im.is_null() {
            return Err(null("re/im"));
        }
        let w = 2.0 * std::f64::consts::PI * freq_hz * k.0.ts();
        let v = k.0.eval_at(Complex64::from_polar(1.0, w));
        for (i, c) in v.iter().enumerate() {
            *re.add(i) = c.re;
            *im.add(i) = c.im;
        }
        Ok(DdtStatus::Ok)
    })
}

/// Simulates plant case `case_index` (0-based) of `spec` under controller `k`.
///
/// # Safety
/// Handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ddt_simulate(
    spec: *const DdtSpec,
    k: *const DdtController,
    case_index: usize,
    seed: u64,
    samples: usize,
    noise: DdtNoise,
    track_width_m: f64,
    out: *mut DdtSimMetrics,
) -> DdtStatus {
    guard(|| {
        let spec = get(spec, "spec")?;
        let k = get(k, "controller")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let Some(plant) = spec.0.plants.cases().get(case_index) else {
            set_error(format!("case index {case_index} out of range ({} cases)", spec.0.plants.len()));
            return Err(DdtStatus::Config);
        };
        let cfg = SimulationConfig {
            seed,
            samples,
            noise: match noise {
                DdtNoise::Uniform => NoiseKind::Uniform,
                DdtNoise::Gaussian => NoiseKind::Gaussian,
            },
            track_width_m,
        };
        let sim = evalsim::simulate(&k.0, plant, &spec.0.dp, &spec.0.df, &cfg).map_err(fail)?;
        let m = sim.metrics;
        *out = DdtSimMetrics {
            sigma3_e_m: m.sigma3_e_m,
            sigma3_e_pct: m.sigma3_e_pct,
            max_abs_ycp_m: m.max_abs_ycp_m,
            var_ycp_m2: m.var_ycp_m2,
            var_e_m2: m.var_e_m2,
        };
        Ok(DdtStatus::Ok)
    })
}
