//! C ABI for the sace solver.
//!
//! Every fallible function returns a [`SaceStatus`]; on failure the message is
//! available from [`sace_last_error_message`] on the same thread. Objects are
//! opaque handles created by `*_new` / `*_parse` and released by `*_free`.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sace::analysis::mc_weak_value;
use sace::config::ExperimentConfig;
use sace::noise::RngStream;
use sace::scheme::Simulation;
use sace::selftest::run_self_test;
use sace::spectral::{to_physical, to_spectral, CollocationGrid, SpectralField};
use sace::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaceStatus {
    Ok = 0,
    NullPointer = 1,
    /// Argument outside the mathematical domain.
    Domain = 2,
    /// Sizes, grid resolution or divisibility.
    Precondition = 3,
    /// Dissipativity or noise regularity violated.
    Assumption = 4,
    Config = 5,
    Numerical = 6,
    BlowUp = 7,
    Io = 8,
    BufferTooSmall = 9,
    InvalidUtf8 = 10,
    Panic = 11,
}

/// Parsed and validated experiment configuration.
pub struct SaceConfig {
    inner: ExperimentConfig,
}

/// One sample path of the configured scheme.
pub struct SaceSimulation {
    inner: Simulation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SaceStatus {
    match err {
        Error::Domain(_) => SaceStatus::Domain,
        Error::Precondition(_) => SaceStatus::Precondition,
        Error::Assumption(_) => SaceStatus::Assumption,
        Error::Config(_) => SaceStatus::Config,
        Error::Numerical(_) => SaceStatus::Numerical,
        Error::BlowUp { .. } => SaceStatus::BlowUp,
        Error::Io(_) => SaceStatus::Io,
    }
}

struct Failure(SaceStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SaceStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SaceStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SaceStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            SaceStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a, T>(ptr: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sace_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sace_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses a TOML experiment config. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sace_config_parse(text: *const c_char, out: *mut *mut SaceConfig) -> SaceStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let text = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Failure(SaceStatus::InvalidUtf8, e.to_string()))?;
        let inner = ExperimentConfig::parse(text)?;
        write_out(out, Box::into_raw(Box::new(SaceConfig { inner })), "out")
    })
}

/// # Safety
/// `cfg` must come from [`sace_config_parse`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sace_config_free(cfg: *mut SaceConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Galerkin dimension `N` of a config.
///
/// # Safety
/// `cfg` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn sace_config_n_modes(cfg: *const SaceConfig) -> usize {
    cfg.as_ref().map_or(0, |c| c.inner.scheme.n_modes)
}

/// Starts sample path `stream_id` of the configured experiment, seeded with
/// the config's seed.
///
/// # Safety
/// `cfg` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_new(
    cfg: *const SaceConfig,
    stream_id: u64,
    out: *mut *mut SaceSimulation,
) -> SaceStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let inner = Simulation::new(
            &cfg.scheme_config()?,
            cfg.drift()?,
            &cfg.spectrum()?,
            &cfg.initial_state()?,
            RngStream::new(cfg.run.seed, stream_id),
        )?;
        write_out(out, Box::into_raw(Box::new(SaceSimulation { inner })), "out")
    })
}

/// # Safety
/// `sim` must come from [`sace_simulation_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_free(sim: *mut SaceSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances `n_steps` steps; stops at the first blow-up.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_step(sim: *mut SaceSimulation, n_steps: usize) -> SaceStatus {
    guard(|| {
        let sim = &mut sim.as_mut().ok_or_else(|| null("sim"))?.inner;
        for _ in 0..n_steps {
            sim.advance()?;
        }
        Ok(())
    })
}

/// Copies the spectral coefficients into `out[0..len]`; `len` must be at least `N`.
///
/// # Safety
/// `sim` must be a live handle and `out` valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_state(sim: *const SaceSimulation, out: *mut f64, len: usize) -> SaceStatus {
    guard(|| {
        let state = sim.as_ref().ok_or_else(|| null("sim"))?.inner.state();
        if len < state.len() {
            return Err(Failure(SaceStatus::BufferTooSmall, format!("need {} values, got {len}", state.len())));
        }
        slice_mut(out, len, "out")?[..state.len()].copy_from_slice(state);
        Ok(())
    })
}

/// Replaces the state with `coeffs[0..len]`; `len` must equal `N`.
///
/// # Safety
/// `sim` must be a live handle and `coeffs` valid for `len` reads.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_set_state(
    sim: *mut SaceSimulation,
    coeffs: *const f64,
    len: usize,
) -> SaceStatus {
    guard(|| {
        let sim = &mut sim.as_mut().ok_or_else(|| null("sim"))?.inner;
        let coeffs = slice(coeffs, len, "coeffs")?;
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Failure(SaceStatus::Domain, "state coefficients must be finite".into()));
        }
        sim.set_state(coeffs)?;
        Ok(())
    })
}

/// Current time `k tau`, or NaN for a null handle.
///
/// # Safety
/// `sim` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_time(sim: *const SaceSimulation) -> f64 {
    sim.as_ref().map_or(f64::NAN, |s| s.inner.time())
}

/// Sup norm of the current state on the oversampled grid.
///
/// # Safety
/// `sim` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sace_simulation_sup_norm(sim: *mut SaceSimulation, out: *mut f64) -> SaceStatus {
    guard(|| {
        let sim = &mut sim.as_mut().ok_or_else(|| null("sim"))?.inner;
        write_out(out, sim.sup_norm(), "out")
    })
}

/// Monte Carlo estimate of `E Phi(V_K)` with the config's functional,
/// sample count and seed.
///
/// # Safety
/// `cfg` must be a live handle; output pointers must be valid (`blowups` may be null).
#[no_mangle]
pub unsafe extern "C" fn sace_weak_value(
    cfg: *const SaceConfig,
    mean: *mut f64,
    standard_error: *mut f64,
    blowups: *mut usize,
) -> SaceStatus {
    guard(|| {
        let cfg = &cfg.as_ref().ok_or_else(|| null("cfg"))?.inner;
        let est = mc_weak_value(&cfg.scheme_config()?, &cfg.mc_setup()?)?;
        write_out(mean, est.mean, "mean")?;
        write_out(standard_error, est.standard_error, "standard_error")?;
        if !blowups.is_null() {
            blowups.write(est.blowups);
        }
        Ok(())
    })
}

/// Number of points `m` of the default (oversampled) grid for `n_modes`.
#[no_mangle]
pub extern "C" fn sace_grid_points(n_modes: usize) -> usize {
    CollocationGrid::oversampled(n_modes).m_points()
}

/// Grid values `v(j / (m + 1))`, `j = 1..m`, of the field with `n_modes`
/// coefficients, on a grid of `m >= n_modes` points.
///
/// # Safety
/// `coeffs` must be valid for `n_modes` reads and `values` for `m` writes.
#[no_mangle]
pub unsafe extern "C" fn sace_to_physical(
    coeffs: *const f64,
    n_modes: usize,
    values: *mut f64,
    m: usize,
) -> SaceStatus {
    guard(|| {
        let field = SpectralField::new(slice(coeffs, n_modes, "coeffs")?.to_vec())?;
        let grid = CollocationGrid::new(m)?;
        let v = to_physical(&field, &grid)?;
        slice_mut(values, m, "values")?.copy_from_slice(&v);
        Ok(())
    })
}

/// First `n_modes` sine coefficients of `m` grid values.
///
/// # Safety
/// `values` must be valid for `m` reads and `coeffs` for `n_modes` writes.
#[no_mangle]
pub unsafe extern "C" fn sace_to_spectral(
    values: *const f64,
    m: usize,
    coeffs: *mut f64,
    n_modes: usize,
) -> SaceStatus {
    guard(|| {
        let grid = CollocationGrid::new(m)?;
        let field = to_spectral(slice(values, m, "values")?, &grid, n_modes)?;
        slice_mut(coeffs, n_modes, "coeffs")?.copy_from_slice(field.coeffs());
        Ok(())
    })
}

/// Runs the algebraic self-test suite; `*passed` receives the verdict.
///
/// # Safety
/// `passed` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn sace_self_test(passed: *mut bool) -> SaceStatus {
    guard(|| write_out(passed, run_self_test().passed(), "passed"))
}
