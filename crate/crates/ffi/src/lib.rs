//! C ABI over `patchsis`.
//!
//! Every fallible entry point returns a [`PatchsisStatus`]; on failure the
//! message is available from [`patchsis_last_error`] on the same thread.
//! Handles are opaque and must be released with their `_free` function.
//! Output buffers are caller-allocated with an explicit length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nalgebra::DMatrix;
use patchsis::analysis::{
    b_plus_v, drift_jacobian, endemic_equilibrium_equal_diffusion, mass_reduced_jacobian, r0,
    stability_modulus, stationary_n, steady_state_general, AnalysisError,
};
use patchsis::config::{parse_config_str, ConfigError};
use patchsis::model::{
    validate, ContinuousState, ModelError, Network, PatchParams, ValidatedModel,
};
use patchsis::ode::{integrate, OdeConfig, OdeError, OdeMethod};
use patchsis::stochastic::{scale, simulate, Recording, SimConfig, SimError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchsisStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Model or configuration rejected.
    Validation = 3,
    /// Solver did not converge or left the admissible region.
    Solver = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatchsisRecording {
    EveryEvent = 0,
    Grid = 1,
    FinalOnly = 2,
}

/// Opaque validated model.
pub struct PatchsisModel {
    inner: ValidatedModel,
}

/// Opaque trajectory. Rows are `[s_1..s_ell, i_1..i_ell]` in population
/// fractions.
pub struct PatchsisTrajectory {
    ell: usize,
    times: Vec<f64>,
    values: Vec<f64>,
    absorbed: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(PatchsisStatus, String);

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure(PatchsisStatus::Validation, e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure(PatchsisStatus::Validation, e.to_string())
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let code = match e {
            AnalysisError::InvalidInput(_) => PatchsisStatus::InvalidArgument,
            _ => PatchsisStatus::Solver,
        };
        Failure(code, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let code = match e {
            SimError::InvalidConfig(_) | SimError::InvalidState(_) => {
                PatchsisStatus::InvalidArgument
            }
            _ => PatchsisStatus::Solver,
        };
        Failure(code, e.to_string())
    }
}

impl From<OdeError> for Failure {
    fn from(e: OdeError) -> Self {
        let code = match e {
            OdeError::InvalidConfig(_) | OdeError::InvalidState(_) => {
                PatchsisStatus::InvalidArgument
            }
            _ => PatchsisStatus::Solver,
        };
        Failure(code, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard<F>(f: F) -> PatchsisStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PatchsisStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_last_error(&msg);
            code
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            PatchsisStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(PatchsisStatus::NullPointer, format!("{what} is null"))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const PatchsisModel) -> Result<&'a ValidatedModel, Failure> {
    m.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

fn need(len: usize, want: usize, what: &str) -> Result<(), Failure> {
    if len < want {
        Err(Failure(
            PatchsisStatus::BufferTooSmall,
            format!("{what}: need {want} entries, got {len}"),
        ))
    } else {
        Ok(())
    }
}

unsafe fn read_state(
    model: &ValidatedModel,
    s: *const f64,
    i: *const f64,
) -> Result<ContinuousState, Failure> {
    let ell = model.ell();
    let st = ContinuousState::new(slice(s, ell, "s")?.to_vec(), slice(i, ell, "i")?.to_vec());
    st.check(ell)
        .map_err(|e| Failure(PatchsisStatus::InvalidArgument, e.to_string()))?;
    Ok(st)
}

fn write_state(z: &ContinuousState, s_out: &mut [f64], i_out: &mut [f64]) {
    s_out[..z.s.len()].copy_from_slice(&z.s);
    i_out[..z.i.len()].copy_from_slice(&z.i);
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn patchsis_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn patchsis_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds and validates a model. `adjacency` is `ell * ell`, row-major, and
/// may be null when `ell == 1`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_model_new(
    ell: usize,
    lambda: *const f64,
    gamma: *const f64,
    adjacency: *const f64,
    nu_s: f64,
    nu_i: f64,
    out: *mut *mut PatchsisModel,
) -> PatchsisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if ell == 0 {
            return Err(Failure(
                PatchsisStatus::InvalidArgument,
                "ell must be > 0".into(),
            ));
        }
        let lambda = slice(lambda, ell, "lambda")?;
        let gamma = slice(gamma, ell, "gamma")?;
        let adj = if adjacency.is_null() && ell == 1 {
            DMatrix::zeros(1, 1)
        } else {
            DMatrix::from_row_slice(ell, ell, slice(adjacency, ell * ell, "adjacency")?)
        };
        let patches = lambda
            .iter()
            .zip(gamma)
            .map(|(&l, &g)| PatchParams::new(l, g))
            .collect();
        let inner = validate(patches, Network::new(adj, nu_s, nu_i))?;
        *out = Box::into_raw(Box::new(PatchsisModel { inner }));
        Ok(())
    })
}

/// Builds a model from a JSON configuration document (the `model` section is
/// used; other sections are validated and ignored).
///
/// # Safety
/// `json` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_model_from_json(
    json: *const c_char,
    out: *mut *mut PatchsisModel,
) -> PatchsisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if json.is_null() {
            return Err(null("json"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            Failure(
                PatchsisStatus::InvalidArgument,
                format!("json is not UTF-8: {e}"),
            )
        })?;
        let cfg = parse_config_str(text)?;
        *out = Box::into_raw(Box::new(PatchsisModel { inner: cfg.model }));
        Ok(())
    })
}

/// # Safety
/// `m` must come from a `patchsis_model_*` constructor and not be used after.
#[no_mangle]
pub unsafe extern "C" fn patchsis_model_free(m: *mut PatchsisModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Number of patches, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn patchsis_model_patch_count(m: *const PatchsisModel) -> usize {
    m.as_ref().map_or(0, |m| m.inner.ell())
}

/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_r0(m: *const PatchsisModel, out: *mut f64) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = r0(model)?;
        Ok(())
    })
}

/// Stability modulus of `B + V`; same sign as `R0 - 1`.
///
/// # Safety
/// `m` must be a live model handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_alpha_b_plus_v(
    m: *const PatchsisModel,
    out: *mut f64,
) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = stability_modulus(&b_plus_v(model))?;
        Ok(())
    })
}

/// # Safety
/// `out` must hold `len >= ell` doubles.
#[no_mangle]
pub unsafe extern "C" fn patchsis_stationary_n(
    m: *const PatchsisModel,
    mass: f64,
    out: *mut f64,
    len: usize,
) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        need(len, model.ell(), "out")?;
        let out = slice_mut(out, len, "out")?;
        let n = stationary_n(model, mass)?;
        out[..n.len()].copy_from_slice(&n);
        Ok(())
    })
}

/// Endemic equilibrium for equal diffusion coefficients.
///
/// # Safety
/// `s_out` and `i_out` must each hold `len >= ell` doubles.
#[no_mangle]
pub unsafe extern "C" fn patchsis_endemic_equilibrium(
    m: *const PatchsisModel,
    mass: f64,
    s_out: *mut f64,
    i_out: *mut f64,
    len: usize,
) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        need(len, model.ell(), "output")?;
        let (s_out, i_out) = (
            slice_mut(s_out, len, "s_out")?,
            slice_mut(i_out, len, "i_out")?,
        );
        let ee = endemic_equilibrium_equal_diffusion(model, mass)?;
        write_state(&ee.state, s_out, i_out);
        Ok(())
    })
}

/// Steady state for arbitrary diffusion coefficients, started from
/// `(s0, i0)`. `is_dfe` (optional) receives whether the root found is the
/// disease-free state.
///
/// # Safety
/// Input arrays hold `ell` doubles, outputs `len >= ell`.
#[no_mangle]
pub unsafe extern "C" fn patchsis_steady_state_general(
    m: *const PatchsisModel,
    s0: *const f64,
    i0: *const f64,
    mass: f64,
    s_out: *mut f64,
    i_out: *mut f64,
    len: usize,
    is_dfe: *mut bool,
) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        need(len, model.ell(), "output")?;
        let guess = read_state(model, s0, i0)?;
        let (s_out, i_out) = (
            slice_mut(s_out, len, "s_out")?,
            slice_mut(i_out, len, "i_out")?,
        );
        let ss = steady_state_general(model, &guess, mass)?;
        write_state(&ss.state, s_out, i_out);
        if let Some(flag) = is_dfe.as_mut() {
            *flag = ss.converged_to_dfe;
        }
        Ok(())
    })
}

/// Stability modulus of the drift Jacobian at `(s, i)`, restricted to the
/// mass-preserving subspace.
///
/// # Safety
/// `s` and `i` hold `ell` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_stability_modulus(
    m: *const PatchsisModel,
    s: *const f64,
    i: *const f64,
    out: *mut f64,
) -> PatchsisStatus {
    guard(|| {
        let model = model_ref(m)?;
        let z = read_state(model, s, i)?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = stability_modulus(&mass_reduced_jacobian(&drift_jacobian(model, &z)))?;
        Ok(())
    })
}

/// Direct-method simulation from `[n x0]`, returned as population fractions.
/// `recording` is a `PatchsisRecording` value; `grid_dt` is used only with
/// `PATCHSIS_RECORDING_GRID`.
///
/// # Safety
/// `s0` and `i0` hold `ell` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_simulate(
    m: *const PatchsisModel,
    s0: *const f64,
    i0: *const f64,
    n: u64,
    t_max: f64,
    seed: u64,
    recording: u32,
    grid_dt: f64,
    out: *mut *mut PatchsisTrajectory,
) -> PatchsisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = model_ref(m)?;
        let x0 = read_state(model, s0, i0)?;
        let recording = match recording {
            r if r == PatchsisRecording::EveryEvent as u32 => Recording::EveryEvent,
            r if r == PatchsisRecording::Grid as u32 => Recording::Grid(grid_dt),
            r if r == PatchsisRecording::FinalOnly as u32 => Recording::FinalOnly,
            r => {
                return Err(Failure(
                    PatchsisStatus::InvalidArgument,
                    format!("unknown recording kind {r}"),
                ))
            }
        };
        let cfg = SimConfig {
            population_n: n,
            t_max,
            seed,
            recording,
        };
        let traj = simulate(model, &x0, &cfg)?;
        let absorbed = traj.absorbed;
        let scaled = scale(&traj, n);
        let values = (0..scaled.len())
            .flat_map(|k| scaled.row(k).to_vec())
            .collect();
        *out = Box::into_raw(Box::new(PatchsisTrajectory {
            ell: scaled.ell,
            times: scaled.times,
            values,
            absorbed,
        }));
        Ok(())
    })
}

/// Integrates the limiting ODE. `rk4_dt > 0` selects fixed-step RK4,
/// otherwise adaptive Dormand-Prince with default tolerances.
///
/// # Safety
/// `s0` and `i0` hold `ell` doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn patchsis_integrate(
    m: *const PatchsisModel,
    s0: *const f64,
    i0: *const f64,
    t_max: f64,
    record_dt: f64,
    rk4_dt: f64,
    out: *mut *mut PatchsisTrajectory,
) -> PatchsisStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let model = model_ref(m)?;
        let z0 = read_state(model, s0, i0)?;
        let method = if rk4_dt > 0.0 {
            OdeMethod::Rk4Fixed { dt: rk4_dt }
        } else {
            OdeMethod::default()
        };
        let cfg = OdeConfig {
            t_max,
            method,
            record_dt,
        };
        let traj = integrate(model, &z0, &cfg)?;
        let values = (0..traj.len()).flat_map(|k| traj.row(k).to_vec()).collect();
        *out = Box::into_raw(Box::new(PatchsisTrajectory {
            ell: traj.ell,
            times: traj.times,
            values,
            absorbed: false,
        }));
        Ok(())
    })
}

/// Number of record points, or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn patchsis_trajectory_len(t: *const PatchsisTrajectory) -> usize {
    t.as_ref().map_or(0, |t| t.times.len())
}

/// Values per record point (`2 * ell`), or 0 for a null handle.
///
/// # Safety
/// `t` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn patchsis_trajectory_width(t: *const PatchsisTrajectory) -> usize {
    t.as_ref().map_or(0, |t| 2 * t.ell)
}

/// # Safety
/// `t` must be null or a live trajectory handle.
#[no_mangle]
pub unsafe extern "C" fn patchsis_trajectory_absorbed(t: *const PatchsisTrajectory) -> bool {
    t.as_ref().is_some_and(|t| t.absorbed)
}

/// Copies record times (`len` entries) and row-major values (`len * width`
/// entries). Either output may be null to skip it.
///
/// # Safety
/// Non-null outputs must hold at least the stated capacities.
#[no_mangle]
pub unsafe extern "C" fn patchsis_trajectory_copy(
    t: *const PatchsisTrajectory,
    times_out: *mut f64,
    times_cap: usize,
    values_out: *mut f64,
    values_cap: usize,
) -> PatchsisStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("trajectory"))?;
        if !times_out.is_null() {
            need(times_cap, t.times.len(), "times_out")?;
            slice_mut(times_out, times_cap, "times_out")?[..t.times.len()]
                .copy_from_slice(&t.times);
        }
        if !values_out.is_null() {
            need(values_cap, t.values.len(), "values_out")?;
            slice_mut(values_out, values_cap, "values_out")?[..t.values.len()]
                .copy_from_slice(&t.values);
        }
        Ok(())
    })
}

/// # Safety
/// `t` must come from `patchsis_simulate` or `patchsis_integrate` and not be
/// used after.
#[no_mangle]
pub unsafe extern "C" fn patchsis_trajectory_free(t: *mut PatchsisTrajectory) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}
