//! C ABI over `mfmarket`.
//!
//! Objects are opaque handles created by `*_new` and released by `*_free`.
//! Every fallible call returns an [`MfmStatus`]; on failure the message is
//! kept per thread and can be read with [`mfm_last_error_message`]. Panics
//! never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use mfmarket::calibration::{self, CalibrationConfig, OptionType, Side};
use mfmarket::dynamics::{InitSpec, ParticleSystem};
use mfmarket::mean_field::{self, Stability};
use mfmarket::phase;
use mfmarket::{Error, Potential, PotentialParams};

/// Status codes. Zero is success; the others mirror the library error kinds.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfmStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidParams = 2,
    InvalidInput = 3,
    ConstraintViolation = 4,
    NonCritical = 5,
    CriticalDivergence = 6,
    OrderedPhase = 7,
    InsufficientBranch = 8,
    NearSingular = 9,
    NonConvergence = 10,
    UnstableStep = 11,
    CflViolation = 12,
    InsufficientQuotes = 13,
    OptimizerFailure = 14,
    BufferTooSmall = 15,
    Panic = 16,
}

impl From<&Error> for MfmStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::InvalidParams(_) => MfmStatus::InvalidParams,
            Error::InvalidInput(_) => MfmStatus::InvalidInput,
            Error::ConstraintViolation(_) => MfmStatus::ConstraintViolation,
            Error::NonCritical(_) => MfmStatus::NonCritical,
            Error::CriticalDivergence { .. } => MfmStatus::CriticalDivergence,
            Error::OrderedPhase { .. } => MfmStatus::OrderedPhase,
            Error::InsufficientBranch { .. } => MfmStatus::InsufficientBranch,
            Error::NearSingular { .. } => MfmStatus::NearSingular,
            Error::NonConvergence { .. } => MfmStatus::NonConvergence,
            Error::UnstableStep { .. } => MfmStatus::UnstableStep,
            Error::CflViolation { .. } => MfmStatus::CflViolation,
            Error::InsufficientQuotes { .. } => MfmStatus::InsufficientQuotes,
            Error::OptimizerFailure { .. } => MfmStatus::OptimizerFailure,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: MfmStatus, msg: impl Into<String>) -> MfmStatus {
    set_error(msg);
    status
}

fn from_error(e: Error) -> MfmStatus {
    let status = MfmStatus::from(&e);
    fail(status, e.to_string())
}

fn guard<F: FnOnce() -> MfmStatus>(f: F) -> MfmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => {
            if s == MfmStatus::Ok {
                set_error("");
            }
            s
        }
        Err(_) => fail(MfmStatus::Panic, "internal panic"),
    }
}

/// Copies the calling thread's last error message into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length plus one.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn mfm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        let bytes = msg.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            ptr::copy_nonoverlapping(bytes.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        bytes.len() + 1
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mfm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Parameters of one asset's potential plus the market coupling.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MfmParams {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub a: f64,
    pub t: f64,
    pub h: f64,
    /// Coupling constant.
    pub g: f64,
    /// External field.
    pub field: f64,
}

/// Opaque model handle.
pub struct MfmModel {
    params: PotentialParams,
    g: f64,
    field: f64,
    potential: Potential,
}

macro_rules! deref {
    ($p:expr) => {
        match unsafe { $p.as_ref() } {
            Some(v) => v,
            None => return fail(MfmStatus::NullPointer, concat!(stringify!($p), " is null")),
        }
    };
}

macro_rules! out {
    ($p:expr, $v:expr) => {{
        if $p.is_null() {
            return fail(MfmStatus::NullPointer, concat!(stringify!($p), " is null"));
        }
        unsafe { *$p = $v };
    }};
}

/// Validates `params` and creates a model.
///
/// # Safety
/// `params` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_new(params: *const MfmParams, out: *mut *mut MfmModel) -> MfmStatus {
    guard(|| {
        let p = deref!(params);
        if out.is_null() {
            return fail(MfmStatus::NullPointer, "out is null");
        }
        let pp = PotentialParams { mu1: p.mu1, mu2: p.mu2, sigma1: p.sigma1, sigma2: p.sigma2, a: p.a, t: p.t, h: p.h };
        if let Err(e) = pp.validate() {
            return from_error(e);
        }
        if !(p.g >= 0.0) || !p.field.is_finite() {
            return fail(MfmStatus::InvalidParams, "need g >= 0 and a finite field");
        }
        let model = MfmModel { params: pp, g: p.g, field: p.field, potential: Potential::new(&pp) };
        *out = Box::into_raw(Box::new(model));
        MfmStatus::Ok
    })
}

/// Releases a model. Null is ignored.
///
/// # Safety
/// `model` must come from [`mfm_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_free(model: *mut MfmModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Potential `V(y)`, zero at its minimum.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_potential(model: *const MfmModel, y: f64, out: *mut f64) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        out!(out, m.potential.value(y));
        MfmStatus::Ok
    })
}

/// Stationary density at `g = 0`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_stationary_pdf(model: *const MfmModel, y: f64, out: *mut f64) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        out!(out, mfmarket::stationary_density(&m.params).pdf(y));
        MfmStatus::Ok
    })
}

/// Landau free energy `F(m)`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_free_energy(model: *const MfmModel, m: f64, out: *mut f64) -> MfmStatus {
    guard(|| {
        let h = deref!(model);
        out!(out, mean_field::free_energy(&h.params, h.g, m, h.field));
        MfmStatus::Ok
    })
}

/// Mean return `<y>` under the Boltzmann density for a given market mean `m`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_mean_return(model: *const MfmModel, m: f64, out: *mut f64) -> MfmStatus {
    guard(|| {
        let h = deref!(model);
        out!(out, mean_field::mean_return(&h.params, h.g, m, h.field));
        MfmStatus::Ok
    })
}

/// Roots of the self-consistency equation in ascending order. `stable[i]`
/// is 1 for locally stable roots. Writes the root count to `count`; returns
/// `BufferTooSmall` (with `count` set) when `capacity` is insufficient.
///
/// # Safety
/// `roots` and `stable` must each hold `capacity` elements (or be null when
/// `capacity` is 0); `count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_roots(
    model: *const MfmModel,
    roots: *mut f64,
    stable: *mut u8,
    capacity: usize,
    count: *mut usize,
) -> MfmStatus {
    guard(|| {
        let h = deref!(model);
        let r = match mean_field::solve_self_consistency(&h.params, h.g, h.field) {
            Ok(r) => r,
            Err(e) => return from_error(e),
        };
        out!(count, r.roots.len());
        if r.roots.len() > capacity {
            return fail(MfmStatus::BufferTooSmall, format!("{} roots, capacity {capacity}", r.roots.len()));
        }
        if roots.is_null() || stable.is_null() {
            if r.roots.is_empty() {
                return MfmStatus::Ok;
            }
            return fail(MfmStatus::NullPointer, "roots or stable is null");
        }
        for (i, root) in r.roots.iter().enumerate() {
            *roots.add(i) = root.m;
            *stable.add(i) = u8::from(root.stability == Stability::Stable);
        }
        MfmStatus::Ok
    })
}

/// Critical volatility of the symmetric potential.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_critical_volatility(mu: f64, sigma: f64, t: f64, g: f64, out: *mut f64) -> MfmStatus {
    guard(|| match phase::critical_volatility(mu, sigma, t, g) {
        Ok(cp) => {
            out!(out, cp.h_c);
            MfmStatus::Ok
        }
        Err(e) => from_error(e),
    })
}

/// Susceptibility `dm/dB` of a symmetric model at noise level `h`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_susceptibility(model: *const MfmModel, h: f64, out: *mut f64) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        match phase::susceptibility(&m.params, m.g, h) {
            Ok(chi) => {
                out!(out, chi);
                MfmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// European option price with the model's parameters read as effective
/// parameters and `t` as the tenor.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_price(
    model: *const MfmModel,
    spot: f64,
    rate: f64,
    strike: f64,
    is_call: bool,
    out: *mut f64,
) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        if !(spot > 0.0) || !(strike > 0.0) || !rate.is_finite() {
            return fail(MfmStatus::InvalidInput, "need spot > 0, strike > 0 and a finite rate");
        }
        let ty = if is_call { OptionType::Call } else { OptionType::Put };
        out!(out, calibration::price_european(&m.params, spot, rate, strike, ty));
        MfmStatus::Ok
    })
}

/// Closed-form equilibrium market log-return of the model's parameters read
/// as effective parameters.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_model_equilibrium_return(model: *const MfmModel, out: *mut f64) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        out!(out, calibration::equilibrium_return(&m.params));
        MfmStatus::Ok
    })
}

/// Coupling estimate `h^2 / (2 sigma_M^2 T)`.
#[no_mangle]
pub extern "C" fn mfm_estimate_coupling(sigma1: f64, sigma2: f64, h: f64, t: f64, delta_sigma2: f64) -> f64 {
    calibration::estimate_coupling(sigma1, sigma2, h, t, delta_sigma2)
}

/// Opaque particle-ensemble handle.
pub struct MfmParticles {
    system: ParticleSystem,
}

/// Creates `n` particles at `y0` for the model, with step `dt` and `seed`.
///
/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_particles_new(
    model: *const MfmModel,
    n: usize,
    dt: f64,
    seed: u64,
    y0: f64,
    out: *mut *mut MfmParticles,
) -> MfmStatus {
    guard(|| {
        let m = deref!(model);
        if out.is_null() {
            return fail(MfmStatus::NullPointer, "out is null");
        }
        if n == 0 || !(dt > 0.0) || !y0.is_finite() {
            return fail(MfmStatus::InvalidInput, "need n > 0, dt > 0 and finite y0");
        }
        let system = ParticleSystem::new(&m.params, m.g, n, dt, seed, InitSpec::PointMass { y: y0 });
        *out = Box::into_raw(Box::new(MfmParticles { system }));
        MfmStatus::Ok
    })
}

/// Releases a particle ensemble. Null is ignored.
///
/// # Safety
/// `particles` must come from [`mfm_particles_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn mfm_particles_free(particles: *mut MfmParticles) {
    if !particles.is_null() {
        drop(Box::from_raw(particles));
    }
}

/// Advances the ensemble by `steps` Euler-Maruyama steps.
///
/// # Safety
/// `particles` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfm_particles_step(particles: *mut MfmParticles, steps: usize) -> MfmStatus {
    guard(|| {
        let p = match particles.as_mut() {
            Some(p) => p,
            None => return fail(MfmStatus::NullPointer, "particles is null"),
        };
        for _ in 0..steps {
            if let Err(e) = p.system.step() {
                return from_error(e);
            }
        }
        MfmStatus::Ok
    })
}

/// Ensemble mean return.
///
/// # Safety
/// `particles` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_particles_mean(particles: *const MfmParticles, out: *mut f64) -> MfmStatus {
    guard(|| {
        let p = deref!(particles);
        out!(out, p.system.mean());
        MfmStatus::Ok
    })
}

/// Copies positions into `buf`, which must hold at least the particle count.
///
/// # Safety
/// `particles` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mfm_particles_positions(particles: *const MfmParticles, buf: *mut f64, len: usize) -> MfmStatus {
    guard(|| {
        let p = deref!(particles);
        let y = p.system.positions();
        if len < y.len() {
            return fail(MfmStatus::BufferTooSmall, format!("{} particles, buffer {len}", y.len()));
        }
        if buf.is_null() {
            return fail(MfmStatus::NullPointer, "buf is null");
        }
        ptr::copy_nonoverlapping(y.as_ptr(), buf, y.len());
        MfmStatus::Ok
    })
}

/// Flat calibration output.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MfmCalibration {
    pub mu1: f64,
    pub mu2: f64,
    pub sigma1: f64,
    pub sigma2: f64,
    pub a: f64,
    pub t: f64,
    /// Mean absolute percentage pricing error, in percent.
    pub mape: f64,
    pub g: f64,
    pub m: f64,
    /// 1 when bare parameters exist for `g`.
    pub g_valid: u8,
}

/// Calibrates to the quotes in `csv_text` (same layout as the CLI input).
/// `side` is 0 for calls and 1 for puts.
///
/// # Safety
/// `csv_text` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn mfm_calibrate_csv(
    csv_text: *const c_char,
    side: u8,
    h: f64,
    seed: u64,
    out: *mut MfmCalibration,
) -> MfmStatus {
    guard(|| {
        if csv_text.is_null() {
            return fail(MfmStatus::NullPointer, "csv_text is null");
        }
        let text = match CStr::from_ptr(csv_text).to_str() {
            Ok(t) => t,
            Err(_) => return fail(MfmStatus::InvalidInput, "csv_text is not UTF-8"),
        };
        let side = match side {
            0 => Side::Calls,
            1 => Side::Puts,
            _ => return fail(MfmStatus::InvalidInput, "side must be 0 (calls) or 1 (puts)"),
        };
        let quotes = match calibration::read_quotes(text.as_bytes()) {
            Ok(q) => q,
            Err(e) => return from_error(e),
        };
        let cfg = CalibrationConfig { seed, ..CalibrationConfig::new(h) };
        match calibration::calibrate(&quotes, side, &cfg) {
            Ok(r) => {
                let b = r.barred;
                out!(
                    out,
                    MfmCalibration {
                        mu1: b.mu1,
                        mu2: b.mu2,
                        sigma1: b.sigma1,
                        sigma2: b.sigma2,
                        a: b.a,
                        t: b.t,
                        mape: r.mape,
                        g: r.g,
                        m: r.m,
                        g_valid: u8::from(r.g_valid),
                    }
                );
                MfmStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}
