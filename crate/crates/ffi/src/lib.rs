//! C interface to the `nlfrac` solver.
//!
//! Objects are opaque handles created by `*_new`/`*_from_*` functions and released with the
//! matching `*_free`. Every function returns an [`NlfracStatus`]; on failure the message is
//! available from [`nlfrac_last_error`] on the same thread. Arrays are caller-allocated
//! `double` buffers whose lengths are passed explicitly and checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nlfrac::config::ExperimentConfig;
use nlfrac::dn_map::measure;
use nlfrac::experiment::{self, RunMode};
use nlfrac::solvers::{CoefficientSet, Model, PicardOptions};
use nlfrac::{Error, Field, Grid};

/// Result of every call. Codes 2 to 4 match the exit codes of the command line tool.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlfracStatus {
    Ok = 0,
    Io = 1,
    Config = 2,
    Solver = 3,
    Inversion = 4,
    NullPointer = 5,
    InvalidArgument = 6,
    Panic = 7,
}

/// Parsed experiment configuration.
pub struct NlfracConfig(ExperimentConfig);

/// Grid, assembled operator and factorization.
pub struct NlfracModel(Model);

/// Coefficients `b`, `d(x, y)(x - y)` and the Taylor coefficients of `a`, sampled on Ω.
pub struct NlfracCoefficients(CoefficientSet);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NlfracStatus {
    if err.is_solver_failure() {
        NlfracStatus::Solver
    } else if err.is_inversion_failure() {
        NlfracStatus::Inversion
    } else if matches!(err, Error::Io(_)) {
        NlfracStatus::Io
    } else {
        NlfracStatus::Config
    }
}

struct Fail(NlfracStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(NlfracStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: String) -> Fail {
    Fail(NlfracStatus::InvalidArgument, msg)
}

/// Runs `body`, converting errors and panics into a status and the thread's last error.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> NlfracStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            NlfracStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            NlfracStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(invalid(format!("{what} has length {len}, expected {expected}")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_out<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(invalid(format!("{what} has length {len}, expected {expected}")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the next call.
#[no_mangle]
pub extern "C" fn nlfrac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static name of a status code.
#[no_mangle]
pub extern "C" fn nlfrac_status_name(status: NlfracStatus) -> *const c_char {
    let s: &'static CStr = match status {
        NlfracStatus::Ok => c"ok",
        NlfracStatus::Io => c"io",
        NlfracStatus::Config => c"config",
        NlfracStatus::Solver => c"solver",
        NlfracStatus::Inversion => c"inversion",
        NlfracStatus::NullPointer => c"null pointer",
        NlfracStatus::InvalidArgument => c"invalid argument",
        NlfracStatus::Panic => c"panic",
    };
    s.as_ptr()
}

/// Parses a TOML configuration (may be empty) and `n_overrides` strings `key=value`.
///
/// # Safety
/// `toml` must be a nul-terminated string; `overrides` must point to `n_overrides` such
/// strings (or be null when `n_overrides` is 0); `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_config_from_toml(
    toml: *const c_char,
    overrides: *const *const c_char,
    n_overrides: usize,
    out: *mut *mut NlfracConfig,
) -> NlfracStatus {
    guard(|| {
        let text = str_arg(toml, "toml")?;
        let mut list = Vec::with_capacity(n_overrides);
        if n_overrides > 0 {
            if overrides.is_null() {
                return Err(null("overrides"));
            }
            for k in 0..n_overrides {
                list.push(str_arg(*overrides.add(k), "override")?.to_string());
            }
        }
        put(out, NlfracConfig(ExperimentConfig::from_toml_str(text, &list)?))
    })
}

/// # Safety
/// `config` must come from [`nlfrac_config_from_toml`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_config_free(config: *mut NlfracConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Runs an experiment mode (`"forward"`, `"dn"`, `"linearize"`, `"runge"`,
/// `"invert-oracle"`, `"invert-exterior"`, `"verify-bounds"`) and writes its files and
/// manifest into `out_dir`.
///
/// # Safety
/// Pointers must be valid; strings nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_run(
    config: *const NlfracConfig,
    mode: *const c_char,
    out_dir: *const c_char,
) -> NlfracStatus {
    guard(|| {
        let config = &ref_arg(config, "config")?.0;
        let mode: RunMode = str_arg(mode, "mode")?.parse()?;
        let dir = str_arg(out_dir, "out_dir")?;
        let artifacts = experiment::run(config, mode)?;
        experiment::write_artifacts(Path::new(dir), config, mode, &artifacts)?;
        Ok(())
    })
}

/// Builds the grid `[-half_width, half_width]` with `n_points` points and windows
/// `W₁ = (w1_lo, w1_hi)`, `W₂ = (w2_lo, w2_hi)`, and assembles the operator of order `s`
/// with gradient order `t`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_model_new(
    half_width: f64,
    n_points: usize,
    w1_lo: f64,
    w1_hi: f64,
    w2_lo: f64,
    w2_hi: f64,
    s: f64,
    t: f64,
    out: *mut *mut NlfracModel,
) -> NlfracStatus {
    guard(|| {
        let grid = Grid::build(half_width, n_points, (w1_lo, w1_hi), (w2_lo, w2_hi))?;
        put(out, NlfracModel(Model::new(grid, s, t)?))
    })
}

/// # Safety
/// `config` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_model_from_config(
    config: *const NlfracConfig,
    out: *mut *mut NlfracModel,
) -> NlfracStatus {
    guard(|| {
        let config = &ref_arg(config, "config")?.0;
        put(out, NlfracModel(config.model()?))
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_model_free(model: *mut NlfracModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of grid points, or 0 for a null handle.
///
/// # Safety
/// `model` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_model_n_points(model: *const NlfracModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.grid().n_points())
}

/// Grid coordinates and the half-open index range `[omega_start, omega_end)` of Ω.
///
/// # Safety
/// `x` must hold `len` doubles; the index pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_model_grid(
    model: *const NlfracModel,
    x: *mut f64,
    len: usize,
    omega_start: *mut usize,
    omega_end: *mut usize,
) -> NlfracStatus {
    guard(|| {
        let grid = ref_arg(model, "model")?.0.grid();
        let x = slice_out(x, len, grid.n_points(), "x")?;
        if omega_start.is_null() || omega_end.is_null() {
            return Err(null("omega range"));
        }
        x.copy_from_slice(&grid.points());
        *omega_start = grid.omega().start;
        *omega_end = grid.omega().end;
        Ok(())
    })
}

/// `out = A u` over the whole grid.
///
/// # Safety
/// `u` and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_apply_laplacian(
    model: *const NlfracModel,
    u: *const f64,
    out: *mut f64,
    len: usize,
) -> NlfracStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let n = model.grid().n_points();
        let u = Field::new(slice_arg(u, len, n, "u")?.to_vec());
        slice_out(out, len, n, "out")?.copy_from_slice(&model.operator().apply(&u));
        Ok(())
    })
}

/// Coefficients of the configuration sampled on the model's grid.
///
/// # Safety
/// Handles must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_coefficients_from_config(
    config: *const NlfracConfig,
    model: *const NlfracModel,
    out: *mut *mut NlfracCoefficients,
) -> NlfracStatus {
    guard(|| {
        let config = &ref_arg(config, "config")?.0;
        let model = &ref_arg(model, "model")?.0;
        put(out, NlfracCoefficients(config.coefficients(model.grid())?))
    })
}

/// All-zero coefficients with exponent `m` and highest Taylor order `k_max`.
///
/// # Safety
/// `model` must be valid and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_coefficients_zero(
    model: *const NlfracModel,
    m: u32,
    k_max: usize,
    out: *mut *mut NlfracCoefficients,
) -> NlfracStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        put(out, NlfracCoefficients(CoefficientSet::zeros(model.grid(), m, k_max)?))
    })
}

/// Replaces `b` by the `len` values at the Ω points.
///
/// # Safety
/// `coeffs` must be valid and `b` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_coefficients_set_b(
    coeffs: *mut NlfracCoefficients,
    b: *const f64,
    len: usize,
) -> NlfracStatus {
    guard(|| {
        let c = &mut coeffs.as_mut().ok_or_else(|| null("coefficients"))?.0;
        let n = c.b().len();
        c.set_b(slice_arg(b, len, n, "b")?.to_vec())?;
        Ok(())
    })
}

/// # Safety
/// `coeffs` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_coefficients_free(coeffs: *mut NlfracCoefficients) {
    if !coeffs.is_null() {
        drop(Box::from_raw(coeffs));
    }
}

/// Solves the forward problem for exterior data `f` (full grid, zero on Ω) by Picard
/// iteration. Writes the solution to `u` and the iteration count to `iterations` (may be null).
///
/// # Safety
/// `f` and `u` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_solve(
    model: *const NlfracModel,
    coeffs: *const NlfracCoefficients,
    f: *const f64,
    u: *mut f64,
    len: usize,
    tol: f64,
    max_iter: usize,
    iterations: *mut usize,
) -> NlfracStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let coeffs = &ref_arg(coeffs, "coefficients")?.0;
        let n = model.grid().n_points();
        let f = Field::new(slice_arg(f, len, n, "f")?.to_vec());
        let opts = PicardOptions {
            tol,
            max_iter,
            initial: None,
        };
        let (sol, report) = model.solve_nonlinear(&f, coeffs, &opts)?;
        slice_out(u, len, n, "u")?.copy_from_slice(&sol.values);
        if !iterations.is_null() {
            *iterations = report.iterations;
        }
        Ok(())
    })
}

/// Exterior measurement `(-Δ)^s u_f` at every exterior point; `out` is zero on Ω.
///
/// # Safety
/// `f` and `out` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nlfrac_dn_map(
    model: *const NlfracModel,
    coeffs: *const NlfracCoefficients,
    f: *const f64,
    out: *mut f64,
    len: usize,
    tol: f64,
    max_iter: usize,
) -> NlfracStatus {
    guard(|| {
        let model = &ref_arg(model, "model")?.0;
        let coeffs = &ref_arg(coeffs, "coefficients")?.0;
        let n = model.grid().n_points();
        let f = Field::new(slice_arg(f, len, n, "f")?.to_vec());
        let opts = PicardOptions {
            tol,
            max_iter,
            initial: None,
        };
        let (u, _) = model.solve_nonlinear(&f, coeffs, &opts)?;
        let m = measure(model, &u).to_field(model.grid());
        slice_out(out, len, n, "out")?.copy_from_slice(&m.values);
        Ok(())
    })
}
