//! C ABI over `cdd-core`.
//!
//! Every fallible function returns a [`CddStatus`] and writes results through
//! out-pointers. Objects cross the boundary as opaque handles that the caller
//! releases with the matching `*_free` function. The message of the last
//! error on the calling thread is available from [`cdd_last_error`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use cdd_core::analysis::{self, SensitivityInputs};
use cdd_core::dynamics::{self, CurveKind, Estimator, FidelityCurve, ProtocolKind, ProtocolSpec, PulseKind};
use cdd_core::noise::{NoiseConfig, OuParams};
use cdd_core::protocol::{self, DriveConfig, ShiftPolicy};
use cdd_core::scenarios::{self, ScenarioConfig};
use cdd_core::{cli, lindblad, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddStatus {
    Ok = 0,
    InvalidArgument = 1,
    ContractViolation = 2,
    NoPositiveSolution = 3,
    FitFailure = 4,
    Numerical = 5,
    Config = 6,
    Io = 7,
    NullPointer = 8,
    Panic = 9,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> CddStatus {
    match e {
        Error::InvalidArgument(_) => CddStatus::InvalidArgument,
        Error::ContractViolation(_) => CddStatus::ContractViolation,
        Error::NoPositiveSolution(_) => CddStatus::NoPositiveSolution,
        Error::FitFailure { .. } => CddStatus::FitFailure,
        Error::Numerical(_) => CddStatus::Numerical,
        Error::Config { .. } | Error::ConfigIo { .. } => CddStatus::Config,
        Error::Scenario { source, .. } => status_of(source),
        Error::Io(_) | Error::Csv(_) => CddStatus::Io,
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CddStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CddStatus::Ok,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            CddStatus::NullPointer
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            CddStatus::Panic
        }
    }
}

enum Failure {
    Core(Error),
    Null(&'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Core(Error::InvalidArgument(msg.into()))
}

/// # Safety
/// `p` must be null or valid for the lifetime of the returned reference.
unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

/// # Safety
/// `p` must be null or valid and exclusively borrowed.
unsafe fn deref_mut<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// # Safety
/// `p` must be null or a NUL-terminated string.
unsafe fn string<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length plus one, so a
/// caller can size the buffer with a first call passing `len = 0`.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cdd_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

// ---------------------------------------------------------------- drive

/// Opaque double-drive configuration.
pub struct CddDrive {
    inner: DriveConfig,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddShiftKind {
    Resonant = 0,
    /// Optimal shift for correlation `param`.
    Correlated = 1,
    /// As `Correlated` plus the Bloch-Siegert term.
    CorrelatedBs = 2,
    /// Modulation frequency `param` in rad/s.
    Explicit = 3,
}

/// Creates a drive with amplitudes in rad/s.
///
/// # Safety
/// `out` must be a valid pointer to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_new(
    omega1: f64,
    omega2: f64,
    kind: CddShiftKind,
    param: f64,
    out: *mut *mut CddDrive,
) -> CddStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let policy = match kind {
            CddShiftKind::Resonant => ShiftPolicy::Resonant,
            CddShiftKind::Correlated => ShiftPolicy::Correlated(param),
            CddShiftKind::CorrelatedBs => ShiftPolicy::CorrelatedBs(param),
            CddShiftKind::Explicit => ShiftPolicy::Explicit(param),
        };
        let inner = DriveConfig::new(omega1, omega2, policy)?;
        *slot = Box::into_raw(Box::new(CddDrive { inner }));
        Ok(())
    })
}

/// # Safety
/// `drive` must be null or a handle from [`cdd_drive_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_free(drive: *mut CddDrive) {
    if !drive.is_null() {
        drop(Box::from_raw(drive));
    }
}

/// Modulation frequency Ω̃₁ of the second drive, rad/s.
///
/// # Safety
/// `drive` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_modulation(drive: *const CddDrive, out: *mut f64) -> CddStatus {
    guard(|| {
        let d = deref(drive, "drive")?;
        *deref_mut(out, "out")? = d.inner.omega1_tilde;
        Ok(())
    })
}

/// Dressed-state splitting for relative amplitude errors `eps1`, `eps2`.
///
/// # Safety
/// `drive` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_drive_dressed_gap(
    drive: *const CddDrive,
    eps1: f64,
    eps2: f64,
    out: *mut f64,
) -> CddStatus {
    guard(|| {
        let d = deref(drive, "drive")?;
        *deref_mut(out, "out")? = protocol::dressed_gap(&d.inner, eps1, eps2);
        Ok(())
    })
}

/// Modulation frequency that minimizes the gap variance for correlation `c`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_optimal_shift(
    omega1: f64,
    omega2: f64,
    c: f64,
    bloch_siegert: bool,
    out: *mut f64,
) -> CddStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        if !(omega1 > 0.0 && omega2 > 0.0 && omega2 < omega1 && c.abs() <= 1.0) {
            return Err(invalid("need 0 < omega2 < omega1 and |c| <= 1"));
        }
        let bs = if bloch_siegert {
            omega2 * omega2 / (4.0 * omega1)
        } else {
            0.0
        };
        *slot = protocol::optimal_shift_exact(omega1, omega2, c) + bs;
        Ok(())
    })
}

// ---------------------------------------------------------------- ensembles

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CddNoiseParams {
    /// Free-evolution dephasing time, s.
    pub t2_star: f64,
    /// Correlation time of the detuning noise, s.
    pub tau_delta: f64,
    /// Correlation time of the amplitude noise, s.
    pub tau_eps: f64,
    /// Relative amplitude noise standard deviation.
    pub delta_eps: f64,
    /// Correlation between the two amplitude errors.
    pub c: f64,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddProtocol {
    Free = 0,
    SingleDrive = 1,
    DoubleDrive = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddCurveKind {
    Average = 0,
    StateX = 1,
    StateY = 2,
    StateZ = 3,
}

/// Opaque sampled fidelity curve.
pub struct CddCurve {
    inner: FidelityCurve,
}

/// Ensemble fidelity curve on the default log-spaced grid of `n_samples`
/// points. `envelope` selects the rotation-free estimator.
///
/// # Safety
/// `drive` and `noise` must be valid pointers and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_simulate_fidelity(
    drive: *const CddDrive,
    protocol: CddProtocol,
    noise: *const CddNoiseParams,
    kind: CddCurveKind,
    envelope: bool,
    duration: f64,
    n_realizations: usize,
    n_samples: usize,
    out: *mut *mut CddCurve,
) -> CddStatus {
    guard(|| {
        let d = deref(drive, "drive")?;
        let n = deref(noise, "noise")?;
        let slot = deref_mut(out, "out")?;
        if !(n.t2_star > 0.0) {
            return Err(invalid("t2_star must be > 0"));
        }
        let cfg = NoiseConfig {
            delta: OuParams::new(n.tau_delta, 2f64.sqrt() / n.t2_star, 1e-9)?,
            eps: OuParams::new(n.tau_eps, n.delta_eps, 1e-9)?,
            c: n.c,
            seed: n.seed,
        };
        let pk = match protocol {
            CddProtocol::Free => ProtocolKind::Free,
            CddProtocol::SingleDrive => ProtocolKind::SingleDrive,
            CddProtocol::DoubleDrive => ProtocolKind::DoubleDrive,
        };
        let spec = ProtocolSpec::new(pk, d.inner, cfg, duration)?;
        let times = dynamics::default_sample_times(&spec, n_samples);
        let ens = dynamics::run_ensemble(&spec, n_realizations, &times)?;
        let ck = match kind {
            CddCurveKind::Average => CurveKind::AvgFidelity,
            CddCurveKind::StateX => CurveKind::FidelityX,
            CddCurveKind::StateY => CurveKind::FidelityY,
            CddCurveKind::StateZ => CurveKind::FidelityZ,
        };
        let est = if envelope { Estimator::Envelope } else { Estimator::Raw };
        let inner = ens.curve(ck, est)?;
        *slot = Box::into_raw(Box::new(CddCurve { inner }));
        Ok(())
    })
}

/// Number of samples, or 0 for a null handle.
///
/// # Safety
/// `curve` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cdd_curve_len(curve: *const CddCurve) -> usize {
    curve.as_ref().map_or(0, |c| c.inner.len())
}

/// Time (s), value and standard error of sample `index`.
///
/// # Safety
/// `curve` must be a live handle; each out-pointer must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn cdd_curve_point(
    curve: *const CddCurve,
    index: usize,
    time: *mut f64,
    value: *mut f64,
    stderr: *mut f64,
) -> CddStatus {
    guard(|| {
        let c = &deref(curve, "curve")?.inner;
        if index >= c.len() {
            return Err(invalid(format!("index {index} out of range for {} samples", c.len())));
        }
        if let Some(t) = time.as_mut() {
            *t = c.times[index];
        }
        if let Some(v) = value.as_mut() {
            *v = c.values[index];
        }
        if let Some(s) = stderr.as_mut() {
            *s = c.stderr[index];
        }
        Ok(())
    })
}

/// First crossing of `threshold`; `reached` is false when the curve stays above.
///
/// # Safety
/// `curve` must be a live handle; `out` and `reached` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_curve_threshold_time(
    curve: *const CddCurve,
    threshold: f64,
    out: *mut f64,
    reached: *mut bool,
) -> CddStatus {
    guard(|| {
        let c = &deref(curve, "curve")?.inner;
        let x = analysis::threshold_time(c, threshold)?;
        *deref_mut(out, "out")? = x.time;
        *deref_mut(reached, "reached")? = x.reached;
        Ok(())
    })
}

/// # Safety
/// `curve` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdd_curve_free(curve: *mut CddCurve) {
    if !curve.is_null() {
        drop(Box::from_raw(curve));
    }
}

// ---------------------------------------------------------------- closed forms

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CddPulse {
    Conventional = 0,
    Sdd = 1,
    Cdd = 2,
}

/// π-pulse fidelity under a relative amplitude error `eps` (|eps| ≤ 0.5).
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_pulse_fidelity(kind: CddPulse, omega1: f64, eps: f64, out: *mut f64) -> CddStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        let k = match kind {
            CddPulse::Conventional => PulseKind::Conventional,
            CddPulse::Sdd => PulseKind::Sdd,
            CddPulse::Cdd => PulseKind::Cdd,
        };
        *slot = dynamics::pulse_fidelity(k, omega1, eps)?;
        Ok(())
    })
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CddSensitivityInputs {
    /// Gyromagnetic ratio, rad/(s·T).
    pub gamma: f64,
    pub alpha: f64,
    pub bright: f64,
    pub dark: f64,
    pub t2rho: f64,
    pub n_ph: f64,
    pub tau: f64,
    pub dead_time: f64,
    pub overhead: f64,
    pub decay_p: f64,
    /// Measured contrast; a value ≤ 0 means "use the decay model".
    pub contrast: f64,
}

/// Shot-noise-limited sensitivity in T/√Hz.
///
/// # Safety
/// `inputs` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_sensitivity(inputs: *const CddSensitivityInputs, out: *mut f64) -> CddStatus {
    guard(|| {
        let i = deref(inputs, "inputs")?;
        let slot = deref_mut(out, "out")?;
        let s = analysis::sensitivity(&SensitivityInputs {
            gamma_nv: i.gamma,
            alpha: i.alpha,
            a: i.bright,
            b: i.dark,
            t2rho: i.t2rho,
            n_ph: i.n_ph,
            tau: i.tau,
            t_r: i.dead_time,
            overhead_factor: i.overhead,
            p: i.decay_p,
            contrast: (i.contrast > 0.0).then_some(i.contrast),
        })?;
        *slot = s.eta;
        Ok(())
    })
}

/// Pure-dephasing time from a total coherence time and its relaxation limit.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_relaxation_free_time(t_total: f64, t_limit: f64, out: *mut f64) -> CddStatus {
    guard(|| {
        let slot = deref_mut(out, "out")?;
        *slot = lindblad::relaxation_free_time(t_total, t_limit)?;
        Ok(())
    })
}

// ---------------------------------------------------------------- scenarios

/// Opaque scenario configuration.
pub struct CddConfig {
    inner: ScenarioConfig,
}

/// Built-in defaults.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_config_default(out: *mut *mut CddConfig) -> CddStatus {
    guard(|| {
        *deref_mut(out, "out")? = Box::into_raw(Box::new(CddConfig {
            inner: ScenarioConfig::default(),
        }));
        Ok(())
    })
}

/// Parses an INI config file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cdd_config_load(path: *const c_char, out: *mut *mut CddConfig) -> CddStatus {
    guard(|| {
        let p = string(path, "path")?;
        let slot = deref_mut(out, "out")?;
        let inner = cli::parse_config(Path::new(p))?;
        *slot = Box::into_raw(Box::new(CddConfig { inner }));
        Ok(())
    })
}

/// Applies one `key=value` or `section.key=value` assignment.
///
/// # Safety
/// `cfg` must be a live handle and `assignment` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn cdd_config_set(cfg: *mut CddConfig, assignment: *const c_char) -> CddStatus {
    guard(|| {
        let c = deref_mut(cfg, "cfg")?;
        let a = string(assignment, "assignment")?;
        cli::apply_override(&mut c.inner, a)?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn cdd_config_free(cfg: *mut CddConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the named scenario with `cfg`, writing files to its output directory.
/// `rows` receives the number of summary rows.
///
/// # Safety
/// `cfg` must be a live handle, `scenario` a NUL-terminated string and
/// `rows` writable or null.
#[no_mangle]
pub unsafe extern "C" fn cdd_run_scenario(
    cfg: *const CddConfig,
    scenario: *const c_char,
    rows: *mut usize,
) -> CddStatus {
    guard(|| {
        let c = deref(cfg, "cfg")?;
        let name = string(scenario, "scenario")?;
        let mut run = c.inner.clone();
        run.scenario = name.parse()?;
        let summary = scenarios::run_scenario(&run)?;
        if let Some(r) = rows.as_mut() {
            *r = summary.rows.len();
        }
        Ok(())
    })
}
