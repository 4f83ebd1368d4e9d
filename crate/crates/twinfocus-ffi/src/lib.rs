//! C ABI over the twinfocus core.
//!
//! Objects cross the boundary as opaque handles created by `tf_*_new`
//! functions and released with the matching `tf_*_free`. Every fallible
//! call returns a [`TfStatus`]; on failure the message is kept per thread
//! and can be copied out with [`tf_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use twinfocus::cli::{parse_config, run_scenario};
use twinfocus::measure::{coincidence_map, sum_projection};
use twinfocus::medium::{make_medium, MediumKind, MediumSpec, ScatteringMatrix};
use twinfocus::shape::{
    optimal_phase, optimize_nonclassical, ModulationModel, OptimizerConfig, Source, System, TargetKind, TargetSpec,
};
use twinfocus::state::{build_double_gaussian, schmidt_number, GaussianStateParams, ModeGrid, PhaseMask, TwoPhotonState};
use twinfocus::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    Degenerate = 4,
    Io = 5,
    Format = 6,
    Config = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TfMediumKind {
    IidComplex = 0,
    PhaseScreenFourier = 1,
    Dft = 2,
}

/// Opaque scattering matrix.
pub struct TfMedium(ScatteringMatrix);

/// Opaque two-photon state.
pub struct TfState(TwoPhotonState);

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> TfStatus {
    match e {
        Error::Dimension(_) => TfStatus::Dimension,
        Error::InvalidParameter(_) => TfStatus::InvalidArgument,
        Error::Degenerate(_) => TfStatus::Degenerate,
        Error::Format(_) | Error::Json(_) => TfStatus::Format,
        Error::Config(_) => TfStatus::Config,
        Error::Io(_) => TfStatus::Io,
    }
}

/// Failure raised inside the shim itself.
struct Fail(TfStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> TfStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            TfStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside twinfocus".into());
            TfStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(TfStatus::NullPointer, format!("{what} is null"))
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(TfStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// Copy the last error message of this thread into `buf` (NUL-terminated).
/// Returns the message length in bytes excluding the terminator; when
/// `buf_len` is too small the message is truncated.
///
/// # Safety
/// `buf` must be null or point to `buf_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn tf_last_error_message(buf: *mut c_char, buf_len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && buf_len > 0 {
            let n = msg.len().min(buf_len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static NUL-terminated version string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Schmidt number of the double-Gaussian state.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tf_schmidt_number(sigma_r: f64, sigma_k: f64, out: *mut f64) -> TfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = schmidt_number(&GaussianStateParams::new(sigma_r, sigma_k)?)?;
        Ok(())
    })
}

/// Maximizer in `[0, 2 pi)` of `c + a cos(2t + theta_a) + b cos(t + theta_b)`.
///
/// # Safety
/// `out` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tf_optimal_phase(a: f64, b: f64, c: f64, theta_a: f64, theta_b: f64, out: *mut f64) -> TfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = optimal_phase(&ModulationModel { a, b, c, theta_a, theta_b })?;
        Ok(())
    })
}

/// Generate a medium for a `rows x cols` modulator grid and an
/// `out_h x out_w` camera.
///
/// # Safety
/// `out` must be null or valid for writes; on success it receives a handle
/// to release with [`tf_medium_free`].
#[no_mangle]
pub unsafe extern "C" fn tf_medium_new(
    kind: TfMediumKind,
    seed: u64,
    rows: usize,
    cols: usize,
    pitch: f64,
    out_h: usize,
    out_w: usize,
    out: *mut *mut TfMedium,
) -> TfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let kind = match kind {
            TfMediumKind::IidComplex => MediumKind::IidComplex,
            TfMediumKind::PhaseScreenFourier => MediumKind::PhaseScreenFourier,
            TfMediumKind::Dft => MediumKind::Dft,
        };
        let grid = ModeGrid::new(rows, cols, pitch)?;
        let m = make_medium(&MediumSpec::new(kind, seed), (out_h, out_w), &grid)?;
        *out = Box::into_raw(Box::new(TfMedium(m)));
        Ok(())
    })
}

/// # Safety
/// `m` must be null or a handle from [`tf_medium_new`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn tf_medium_free(m: *mut TfMedium) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of output pixels and input modes.
///
/// # Safety
/// `m` must be a live handle; `n_out` and `n_in` null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tf_medium_dims(m: *const TfMedium, n_out: *mut usize, n_in: *mut usize) -> TfStatus {
    guard(|| {
        let m = handle(m, "medium")?;
        *n_out.as_mut().ok_or_else(|| null("n_out"))? = m.0.n_out();
        *n_in.as_mut().ok_or_else(|| null("n_in"))? = m.0.n_in();
        Ok(())
    })
}

/// Double-Gaussian two-photon state on a `rows x cols` grid.
///
/// # Safety
/// `out` must be null or valid for writes; on success it receives a handle
/// to release with [`tf_state_free`].
#[no_mangle]
pub unsafe extern "C" fn tf_state_double_gaussian(
    rows: usize,
    cols: usize,
    pitch: f64,
    sigma_r: f64,
    sigma_k: f64,
    out: *mut *mut TfState,
) -> TfStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let grid = ModeGrid::new(rows, cols, pitch)?;
        let s = build_double_gaussian(&grid, &GaussianStateParams::new(sigma_r, sigma_k)?)?;
        *out = Box::into_raw(Box::new(TfState(s)));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from a `tf_state_*` constructor not freed before.
#[no_mangle]
pub unsafe extern "C" fn tf_state_free(s: *mut TfState) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn mask_from(theta: *const f64, n: usize, grid: ModeGrid) -> Result<PhaseMask, Fail> {
    if theta.is_null() {
        return Err(null("theta"));
    }
    Ok(PhaseMask::new(grid, slice::from_raw_parts(theta, n).to_vec())?)
}

/// Sum-coordinate projection of the coincidences for phases `theta`
/// (`n_modes` values), written row-major into `out` of
/// `(2h - 1) * (2w - 1)` values.
///
/// # Safety
/// Handles must be live; `theta` must hold `n_theta` values and `out`
/// must hold `out_len` writable values.
#[no_mangle]
pub unsafe extern "C" fn tf_sum_projection(
    state: *const TfState,
    medium: *const TfMedium,
    theta: *const f64,
    n_theta: usize,
    out: *mut f64,
    out_len: usize,
) -> TfStatus {
    guard(|| {
        let (s, m) = (handle(state, "state")?, handle(medium, "medium")?);
        let mask = mask_from(theta, n_theta, m.0.in_grid)?;
        let gp = sum_projection(&coincidence_map(&s.0, &mask, &m.0)?, false);
        if out.is_null() {
            return Err(null("out"));
        }
        if out_len < gp.data.len() {
            return Err(Fail(TfStatus::BufferTooSmall, format!("need {} values, got {out_len}", gp.data.len())));
        }
        slice::from_raw_parts_mut(out, gp.data.len()).copy_from_slice(&gp.data);
        Ok(())
    })
}

/// Random-partition optimization of the sum-coordinate target at
/// `(row, col)` starting from a flat mask. The final phases go to
/// `theta_out` (`n_theta` = number of modes) and the final target value
/// to `final_value`.
///
/// # Safety
/// Handles must be live; `theta_out` must hold `n_theta` writable values;
/// `final_value` must be null or valid for writes.
#[no_mangle]
pub unsafe extern "C" fn tf_optimize_sum_coordinate(
    state: *const TfState,
    medium: *const TfMedium,
    row: usize,
    col: usize,
    steps: usize,
    fraction: f64,
    seed: u64,
    theta_out: *mut f64,
    n_theta: usize,
    final_value: *mut f64,
) -> TfStatus {
    guard(|| {
        let (s, m) = (handle(state, "state")?, handle(medium, "medium")?);
        if theta_out.is_null() {
            return Err(null("theta_out"));
        }
        let grid = m.0.in_grid;
        if n_theta != grid.n_modes() {
            return Err(Fail(TfStatus::Dimension, format!("theta_out holds {n_theta}, need {}", grid.n_modes())));
        }
        let sys = System::new(Source::Entangled(&s.0), &m.0)?;
        let target = TargetSpec::new(TargetKind::SumCoordinate { coord: [row, col] });
        let cfg = OptimizerConfig { steps, fraction, ..OptimizerConfig::default() };
        let trace = optimize_nonclassical(&sys, &target, &PhaseMask::flat(grid), &cfg, seed)?;
        slice::from_raw_parts_mut(theta_out, n_theta).copy_from_slice(&trace.final_mask.theta);
        if let Some(v) = final_value.as_mut() {
            *v = trace.final_value();
        }
        Ok(())
    })
}

/// Run a scenario from a JSON config; `out_dir` (nullable) overrides the
/// configured output directory. The manifest lands in that directory.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out_dir` null or one.
#[no_mangle]
pub unsafe extern "C" fn tf_run_scenario(config_json: *const c_char, out_dir: *const c_char) -> TfStatus {
    guard(|| {
        let text = cstr(config_json, "config_json")?;
        if !text.trim_start().starts_with('{') {
            return Err(Fail(TfStatus::Config, "config_json must be an inline JSON object".into()));
        }
        let mut cfg = parse_config(text)?;
        if !out_dir.is_null() {
            cfg.output_dir = PathBuf::from(cstr(out_dir, "out_dir")?);
        }
        run_scenario(&cfg)?;
        Ok(())
    })
}
