//! C interface to the simulator.
//!
//! Objects are opaque handles created and released through this API.
//! Every fallible call returns a [`PqsimStatus`]; on failure the message
//! is kept per thread and read with [`pqsim_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use pqsim::measurement::SampleKind;
use pqsim::metrics::{simple_model_xi2, PlanarMoments};
use pqsim::runner::config::SimConfig;
use pqsim::runner::report::{simulate, SqueezingReport};
use pqsim::runner::scenario::Scenario;
use pqsim::{magnetometry, SimError};

/// Result of a call. Values 1 to 3 match the command-line exit codes.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PqsimStatus {
    Ok = 0,
    ConfigError = 1,
    NumericalError = 2,
    AcceptanceFailure = 3,
    NullPointer = 4,
    InvalidArgument = 5,
    Panic = 6,
}

/// A validated simulation configuration.
pub struct PqsimConfig {
    inner: SimConfig,
}

/// A finished single-cell simulation.
pub struct PqsimRun {
    report: SqueezingReport,
}

/// One time-series sample. `kind` is 0 on the grid, 1 at an event start
/// and 2 at an event end.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PqsimSample {
    pub t: f64,
    pub kind: i32,
    pub atom_number: f64,
    pub mean_fx: f64,
    pub mean_fy: f64,
    pub mean_fz: f64,
    pub var_fx: f64,
    pub var_fy: f64,
    pub var_fz: f64,
    pub cov_xz: f64,
    pub f_par: f64,
    pub xi_par2: f64,
    pub xi_x2: f64,
    pub xi_z2: f64,
    pub he_value: f64,
    pub xid2: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PqsimSummary {
    pub initial_atom_number: f64,
    pub min_xi_par2: f64,
    pub t_min_xi_par2: f64,
    pub xi_x2_at_min: f64,
    pub xi_z2_at_min: f64,
    pub coherence_at_min: f64,
    pub min_he_value: f64,
    pub min_xid2: f64,
    pub planar_squeezed_at_min: bool,
    pub he_entangled: bool,
    pub xid_entangled: bool,
}

/// In-plane moments of a prepared state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PqsimPlanarMoments {
    pub mean_fx: f64,
    pub mean_fz: f64,
    pub var_fx: f64,
    pub var_fz: f64,
    pub cov_xz: f64,
    pub n_at: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

enum Failure {
    Sim(SimError),
    Status(PqsimStatus, String),
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        Failure::Sim(e)
    }
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<PqsimStatus, Failure>) -> PqsimStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(status)) => status,
        Ok(Err(Failure::Sim(e))) => {
            set_last_error(e.to_string());
            match e.exit_code() {
                1 => PqsimStatus::ConfigError,
                _ => PqsimStatus::NumericalError,
            }
        }
        Ok(Err(Failure::Status(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            PqsimStatus::Panic
        }
    }
}

fn null(name: &str) -> Failure {
    Failure::Status(PqsimStatus::NullPointer, format!("{name} is null"))
}

/// # Safety
/// `p` must be null or a valid NUL-terminated string.
unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(PqsimStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` must be null or point to a live `T`.
unsafe fn reference<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(name))
}

/// # Safety
/// `out` must be null or writable.
unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<PqsimStatus, Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(PqsimStatus::Ok)
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn pqsim_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn pqsim_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration. Release with [`pqsim_config_free`].
#[no_mangle]
pub extern "C" fn pqsim_config_new() -> *mut PqsimConfig {
    Box::into_raw(Box::new(PqsimConfig {
        inner: SimConfig::default(),
    }))
}

/// Parses a TOML configuration into `*out`.
///
/// # Safety
/// `toml` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_config_from_toml(
    toml: *const c_char,
    out: *mut *mut PqsimConfig,
) -> PqsimStatus {
    guard(|| {
        let text = text(toml, "toml")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let inner = SimConfig::from_toml_str(text, &[])?;
        write_out(out, Box::into_raw(Box::new(PqsimConfig { inner })), "out")
    })
}

/// Applies one `section.key=value` assignment. The config is unchanged
/// if the result does not validate.
///
/// # Safety
/// `config` must come from this library; `assignment` must be a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pqsim_config_set(
    config: *mut PqsimConfig,
    assignment: *const c_char,
) -> PqsimStatus {
    guard(|| {
        let cfg = config.as_mut().ok_or_else(|| null("config"))?;
        let assignment = text(assignment, "assignment")?.to_string();
        let base = cfg.inner.to_toml_string()?;
        cfg.inner = SimConfig::from_toml_str(&base, &[assignment])?;
        Ok(PqsimStatus::Ok)
    })
}

/// # Safety
/// `config` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pqsim_config_free(config: *mut PqsimConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs one cell. Release the result with [`pqsim_run_free`].
///
/// # Safety
/// `config` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_simulate(
    config: *const PqsimConfig,
    out: *mut *mut PqsimRun,
) -> PqsimStatus {
    guard(|| {
        let cfg = reference(config, "config")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let run = simulate(&cfg.inner)?;
        let report = SqueezingReport::build("ffi", "c000", &run)?;
        write_out(out, Box::into_raw(Box::new(PqsimRun { report })), "out")
    })
}

/// Number of recorded samples; zero for a null handle.
///
/// # Safety
/// `run` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn pqsim_run_sample_count(run: *const PqsimRun) -> usize {
    run.as_ref().map_or(0, |r| r.report.rows.len())
}

/// # Safety
/// `run` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_run_sample(
    run: *const PqsimRun,
    index: usize,
    out: *mut PqsimSample,
) -> PqsimStatus {
    guard(|| {
        let run = reference(run, "run")?;
        let r = run.report.rows.get(index).ok_or_else(|| {
            Failure::Status(
                PqsimStatus::InvalidArgument,
                format!("sample index {index} out of range ({} samples)", run.report.rows.len()),
            )
        })?;
        let kind = match r.kind {
            SampleKind::Grid => 0,
            SampleKind::EventStart => 1,
            SampleKind::EventEnd => 2,
        };
        let sample = PqsimSample {
            t: r.t,
            kind,
            atom_number: r.atom_number,
            mean_fx: r.mean_fx,
            mean_fy: r.mean_fy,
            mean_fz: r.mean_fz,
            var_fx: r.var_fx,
            var_fy: r.var_fy,
            var_fz: r.var_fz,
            cov_xz: r.cov_xz,
            f_par: r.f_par,
            xi_par2: r.xi_par2,
            xi_x2: r.xi_x2,
            xi_z2: r.xi_z2,
            he_value: r.he_value,
            xid2: r.xid2,
        };
        write_out(out, sample, "out")
    })
}

/// # Safety
/// `run` must come from this library and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_run_summary(
    run: *const PqsimRun,
    out: *mut PqsimSummary,
) -> PqsimStatus {
    guard(|| {
        let s = &reference(run, "run")?.report.summary;
        let summary = PqsimSummary {
            initial_atom_number: s.initial_atom_number,
            min_xi_par2: s.min_xi_par2,
            t_min_xi_par2: s.t_min_xi_par2,
            xi_x2_at_min: s.xi_x2_at_min,
            xi_z2_at_min: s.xi_z2_at_min,
            coherence_at_min: s.coherence_at_min,
            min_he_value: s.min_he_value,
            min_xid2: s.min_xid2,
            planar_squeezed_at_min: s.planar_squeezed_at_min,
            he_entangled: s.he_entangled,
            xid_entangled: s.xid_entangled,
        };
        write_out(out, summary, "out")
    })
}

/// Writes the series CSV and summary JSON into `dir`.
///
/// # Safety
/// `run` must come from this library; `dir` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pqsim_run_write(run: *const PqsimRun, dir: *const c_char) -> PqsimStatus {
    guard(|| {
        let run = reference(run, "run")?;
        run.report.write(Path::new(text(dir, "dir")?))?;
        Ok(PqsimStatus::Ok)
    })
}

/// # Safety
/// `run` must be null or come from this library and not be used again.
#[no_mangle]
pub unsafe extern "C" fn pqsim_run_free(run: *mut PqsimRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Runs a named scenario. `config_toml` and `out_dir` may be null for the
/// scenario defaults and for no file output. `*passed` receives the
/// verdict, and a failed verdict also returns `AcceptanceFailure`.
///
/// # Safety
/// String arguments must be null or NUL-terminated; `passed` may be null.
#[no_mangle]
pub unsafe extern "C" fn pqsim_scenario_run(
    name: *const c_char,
    config_toml: *const c_char,
    out_dir: *const c_char,
    passed: *mut bool,
) -> PqsimStatus {
    guard(|| {
        let scenario: Scenario = text(name, "name")?.parse()?;
        let body = if config_toml.is_null() { "" } else { text(config_toml, "config_toml")? };
        let config = scenario.config(body, &[])?;
        let output = scenario.run(&config)?;
        if !out_dir.is_null() {
            output.write(Path::new(text(out_dir, "out_dir")?))?;
        }
        let ok = output.passed();
        if let Some(p) = passed.as_mut() {
            *p = ok;
        }
        if ok {
            Ok(PqsimStatus::Ok)
        } else {
            let failed: Vec<&str> = output
                .checks
                .iter()
                .filter(|c| c.required && !c.passed)
                .map(|c| c.name.as_str())
                .collect();
            Err(Failure::Status(
                PqsimStatus::AcceptanceFailure,
                format!("failed checks: {}", failed.join("; ")),
            ))
        }
    })
}

/// Phase-estimation variance of a state with its mean spin along +x.
///
/// # Safety
/// `moments` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_phase_variance(
    moments: *const PqsimPlanarMoments,
    phi: f64,
    out: *mut f64,
) -> PqsimStatus {
    guard(|| {
        let m = reference(moments, "moments")?;
        let pm = PlanarMoments {
            mean_fx: m.mean_fx,
            mean_fy: 0.0,
            mean_fz: m.mean_fz,
            var_fx: m.var_fx,
            var_fy: 0.0,
            var_fz: m.var_fz,
            cov_xz: m.cov_xz,
            n_at: m.n_at,
        };
        let v = magnetometry::phase_variance(&pm, phi)?;
        write_out(out, v, "out")
    })
}

/// `1/(1 + α₀η) + 2η`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pqsim_simple_model_xi2(alpha0: f64, eta: f64, out: *mut f64) -> PqsimStatus {
    guard(|| {
        let v = simple_model_xi2(alpha0, eta)?;
        write_out(out, v, "out")
    })
}
