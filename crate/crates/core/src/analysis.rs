//! Threshold quantities and equilibria of the limit system.
//!
//! * disease-free equilibrium `(mass/ell, 0, ...)`,
//! * `R0 = rho(-B V^{-1})` with `V = nu_I D - A_gamma`,
//! * the stationary patch masses `N*` of `dN/dt = nu D N`,
//! * the endemic equilibrium, by Newton on the infectious subsystem when
//!   `nu_S = nu_I` and by Newton on the full system otherwise,
//! * stability moduli and the left Perron vector used as a Lyapunov
//!   function at criticality.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, LinalgError};
use crate::model::{derive_matrices, ContinuousState, ValidatedModel};
use crate::ode::{self, OdeConfig};

/// Tolerance on `|alpha(B + V)|` for treating a model as critical.
pub const CRITICALITY_TOL: f64 = 1e-8;
/// `||i*||_1` below this is reported as convergence to the DFE.
pub const DFE_THRESHOLD: f64 = 1e-8;
/// Residual target of the equal-diffusion Newton solver.
pub const EE_TOL: f64 = 1e-12;
/// Residual target of the general steady-state solver.
pub const GENERAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("V = nu_I D - A_gamma is singular")]
    SingularV,
    #[error("eigenvalue computation did not converge: {0}")]
    ConvergenceFailure(String),
    #[error("generator has rank deficiency beyond one")]
    RankDeficiency,
    #[error("model is not supercritical (R0 = {r0})")]
    SubcriticalModel { r0: f64 },
    #[error("solver did not converge: {0}")]
    NoConvergence(SolverDiagnostics),
    #[error("needs nu_s == nu_i (got nu_s = {nu_s}, nu_i = {nu_i})")]
    UnequalDiffusion { nu_s: f64, nu_i: f64 },
    #[error("model is not critical: alpha(B + V) = {alpha}")]
    NotCritical { alpha: f64 },
    #[error("no endemic state: lambda = {lambda} <= gamma = {gamma}")]
    Subcritical { lambda: f64, gamma: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl From<LinalgError> for AnalysisError {
    fn from(e: LinalgError) -> Self {
        match e {
            LinalgError::Singular => AnalysisError::ConvergenceFailure("singular matrix".into()),
            other => AnalysisError::ConvergenceFailure(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SolverDiagnostics {
    pub method: String,
    pub iterations: usize,
    pub residual: f64,
    pub starts: usize,
    pub fallback: Option<String>,
}

impl std::fmt::Display for SolverDiagnostics {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{} after {} iterations ({} starts), residual {:e}",
            self.method, self.iterations, self.starts, self.residual
        )?;
        if let Some(fb) = &self.fallback {
            write!(f, ", fallback: {fb}")?;
        }
        Ok(())
    }
}

/// `s_j = mass / ell`, `i = 0`.
pub fn dfe(ell: usize, mass: f64) -> ContinuousState {
    ContinuousState::new(vec![mass / ell as f64; ell], vec![0.0; ell])
}

/// `-B V^{-1}`, entrywise nonnegative.
pub fn next_gen_matrix(model: &ValidatedModel) -> Result<DMatrix<f64>, AnalysisError> {
    let dm = derive_matrices(model);
    let v_inv = linalg::inverse(&dm.v).map_err(|_| AnalysisError::SingularV)?;
    let mut k = -(&dm.b * v_inv);
    // -V is a nonsingular M-matrix so -V^{-1} >= 0; drop LU round-off below zero
    let scale = k.amax();
    for x in k.iter_mut() {
        if *x < 0.0 && *x > -1e-12 * scale {
            *x = 0.0;
        }
    }
    Ok(k)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum R0Method {
    PowerIteration,
    DenseEigensolver,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct R0Estimate {
    pub value: f64,
    pub method: R0Method,
    pub iterations: usize,
}

/// Basic reproduction number, see [`r0_detailed`].
pub fn r0(model: &ValidatedModel) -> Result<f64, AnalysisError> {
    r0_detailed(model).map(|e| e.value)
}

/// Spectral radius of the next-generation matrix by power iteration
/// (relative tolerance 1e-12), falling back to the dense eigensolver when
/// the iteration converges too slowly.
pub fn r0_detailed(model: &ValidatedModel) -> Result<R0Estimate, AnalysisError> {
    let k = next_gen_matrix(model)?;
    let p = linalg::power_iteration(&k, 1e-12, 5_000);
    if p.converged {
        return Ok(R0Estimate {
            value: p.value,
            method: R0Method::PowerIteration,
            iterations: p.iterations,
        });
    }
    let ev = linalg::eigenvalues(&k).map_err(|e| {
        AnalysisError::ConvergenceFailure(format!(
            "power iteration stalled (bracket {:e} after {} iterations) and {e}",
            p.bracket, p.iterations
        ))
    })?;
    let rho = ev.iter().map(|c| c.norm()).fold(0.0, f64::max);
    Ok(R0Estimate {
        value: rho,
        method: R0Method::DenseEigensolver,
        iterations: p.iterations,
    })
}

/// Unique positive `N*` with `N*^T Q = 0` and `sum N* = mass`.
pub fn stationary_n(model: &ValidatedModel, mass: f64) -> Result<Vec<f64>, AnalysisError> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "mass must be > 0, got {mass}"
        )));
    }
    let dm = derive_matrices(model);
    // N*^T Q = 0  <=>  Q^T N* = D N* = 0
    let n = linalg::normalized_null_vector(&dm.q.transpose(), mass)
        .map_err(|_| AnalysisError::RankDeficiency)?;
    if n.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(AnalysisError::RankDeficiency);
    }
    Ok(n.iter().copied().collect())
}

/// `L(I) = (nu D - A_gamma + B) I - diag(1/N*) diag(I) B I`.
fn ee_residual(
    model: &ValidatedModel,
    bv: &DMatrix<f64>,
    n_star: &[f64],
    i: &DVector<f64>,
) -> DVector<f64> {
    let mut r = bv * i;
    for j in 0..model.ell() {
        r[j] -= model.lambda(j) * i[j] * i[j] / n_star[j];
    }
    r
}

/// `DL(I) = nu D - A_gamma + B - diag(1/N*) diag(I) B - diag(1/N*) diag(B I)`.
pub fn jacobian_dl(model: &ValidatedModel, n_star: &[f64], i: &[f64]) -> DMatrix<f64> {
    let dm = derive_matrices(model);
    let mut j = &dm.v + &dm.b;
    for p in 0..model.ell() {
        j[(p, p)] -= 2.0 * model.lambda(p) * i[p] / n_star[p];
    }
    j
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquilibriumSolution {
    pub state: ContinuousState,
    pub diagnostics: SolverDiagnostics,
}

/// Endemic equilibrium for `nu_S = nu_I`: the root `I*` of
/// `(nu D - A_gamma + B) I - diag(1/N*) diag(I) B I = 0` in the open box
/// `(0, N*)`, returned as `(s*, i*) = (N* - I*, I*)`.
pub fn endemic_equilibrium_equal_diffusion(
    model: &ValidatedModel,
    mass: f64,
) -> Result<EquilibriumSolution, AnalysisError> {
    if !model.has_equal_diffusion() {
        return Err(AnalysisError::UnequalDiffusion {
            nu_s: model.nu_s(),
            nu_i: model.nu_i(),
        });
    }
    let r0v = r0(model)?;
    if r0v <= 1.0 {
        return Err(AnalysisError::SubcriticalModel { r0: r0v });
    }
    let n_star = stationary_n(model, mass)?;
    let dm = derive_matrices(model);
    let bv = &dm.v + &dm.b;
    let tol = EE_TOL * mass.max(1.0);

    let guess = DVector::from_iterator(
        model.ell(),
        n_star
            .iter()
            .map(|&n| (0.5 * n * (1.0 - 1.0 / r0v)).clamp(1e-9 * n, (1.0 - 1e-9) * n)),
    );

    let first = newton_box(model, &bv, &n_star, guess.clone(), tol);
    let (i_star, mut diag) = match first {
        Ok(ok) => ok,
        Err(stalled) => {
            // integrate towards the attracting root, then polish
            let cfg = OdeConfig {
                t_max: 1e4,
                method: ode::OdeMethod::Rk45Adaptive {
                    rel_tol: 1e-10,
                    abs_tol: 1e-13,
                },
                record_dt: 1e4,
            };
            let tr =
                ode::integrate_reduced(model, &n_star, guess.as_slice(), &cfg).map_err(|e| {
                    AnalysisError::NoConvergence(SolverDiagnostics {
                        fallback: Some(format!("reduced ODE failed: {e}")),
                        ..stalled.clone()
                    })
                })?;
            let end = tr.final_state();
            let start = DVector::from_iterator(
                model.ell(),
                end.i
                    .iter()
                    .zip(&n_star)
                    .map(|(&i, &n)| i.clamp(1e-12 * n, (1.0 - 1e-12) * n)),
            );
            match newton_box(model, &bv, &n_star, start, tol) {
                Ok((i, mut d)) => {
                    d.iterations += stalled.iterations;
                    d.fallback = Some("reduced ODE to t = 1e4, then Newton polish".into());
                    (i, d)
                }
                Err(mut d) => {
                    d.fallback = Some("reduced ODE to t = 1e4, polish failed".into());
                    return Err(AnalysisError::NoConvergence(d));
                }
            }
        }
    };
    diag.starts = 1;
    let state = ContinuousState::new(
        n_star
            .iter()
            .zip(i_star.iter())
            .map(|(n, i)| n - i)
            .collect(),
        i_star.iter().copied().collect(),
    );
    Ok(EquilibriumSolution {
        state,
        diagnostics: diag,
    })
}

fn newton_box(
    model: &ValidatedModel,
    bv: &DMatrix<f64>,
    n_star: &[f64],
    mut i: DVector<f64>,
    tol: f64,
) -> Result<(DVector<f64>, SolverDiagnostics), SolverDiagnostics> {
    let mut diag = SolverDiagnostics {
        method: "damped Newton on the infectious subsystem".into(),
        ..Default::default()
    };
    let inside = |v: &DVector<f64>| v.iter().zip(n_star).all(|(&x, &n)| x > 0.0 && x < n);
    let mut f = ee_residual(model, bv, n_star, &i);
    let mut res = f.amax();
    for it in 0..100 {
        diag.iterations = it;
        diag.residual = res;
        if res < tol {
            return Ok((i, diag));
        }
        let jac = jacobian_dl(model, n_star, i.as_slice());
        let Ok(delta) = linalg::solve(&jac, &(-&f)) else {
            return Err(diag);
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &i + &delta * step;
            if inside(&cand) {
                let fc = ee_residual(model, bv, n_star, &cand);
                let rc = fc.amax();
                if rc < res {
                    i = cand;
                    f = fc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return Err(diag);
        }
    }
    diag.iterations = 100;
    diag.residual = res;
    if res < tol {
        Ok((i, diag))
    } else {
        Err(diag)
    }
}

/// Jacobian of the full drift in the stacked layout.
pub fn drift_jacobian(model: &ValidatedModel, z: &ContinuousState) -> DMatrix<f64> {
    let ell = model.ell();
    let a = model.adjacency();
    let (nu_s, nu_i) = (model.nu_s(), model.nu_i());
    let mut jac = DMatrix::zeros(2 * ell, 2 * ell);
    for j in 0..ell {
        let (s, i) = (z.s[j], z.i[j]);
        let n = s + i;
        let lam = model.lambda(j);
        let (fs, fi) = if n > 0.0 {
            (lam * i * i / (n * n), lam * s * s / (n * n))
        } else {
            (0.0, 0.0)
        };
        let out: f64 = (0..ell).filter(|&k| k != j).map(|k| a[(j, k)]).sum();
        jac[(j, j)] = -fs - nu_s * out;
        jac[(j, ell + j)] = -fi + model.gamma(j);
        jac[(ell + j, j)] = fs;
        jac[(ell + j, ell + j)] = fi - model.gamma(j) - nu_i * out;
        for k in 0..ell {
            if k != j {
                jac[(j, k)] = nu_s * a[(k, j)];
                jac[(ell + j, ell + k)] = nu_i * a[(k, j)];
            }
        }
    }
    jac
}

/// Jacobian on the mass-conserving coordinates `z_1..z_{2 ell - 1}` (the
/// first coordinate eliminated through the mass constraint). Its spectrum
/// is that of the full Jacobian minus the structural zero eigenvalue.
pub fn mass_reduced_jacobian(full: &DMatrix<f64>) -> DMatrix<f64> {
    let n = full.nrows();
    DMatrix::from_fn(n - 1, n - 1, |a, b| full[(a + 1, b + 1)] - full[(a + 1, 0)])
}

/// Starting point for [`steady_state_general`]: each patch at its isolated
/// endemic prevalence with uniform patch masses.
pub fn isolated_patch_guess(model: &ValidatedModel, mass: f64) -> ContinuousState {
    let ell = model.ell();
    let n = mass / ell as f64;
    let prev: Vec<f64> = model
        .patches()
        .iter()
        .map(|p| {
            if p.lambda > p.gamma {
                1.0 - p.gamma / p.lambda
            } else {
                1e-3
            }
        })
        .collect();
    ContinuousState::new(
        prev.iter().map(|p| n * (1.0 - p)).collect(),
        prev.iter().map(|p| n * p).collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneralSteadyState {
    pub state: ContinuousState,
    /// `||i*||_1 < 1e-8`: the root found is the disease-free one.
    pub converged_to_dfe: bool,
    pub diagnostics: SolverDiagnostics,
}

fn general_residual(model: &ValidatedModel, z: &[f64], mass: f64, out: &mut [f64]) {
    ode::drift_into(model, z, out);
    out[0] = z.iter().sum::<f64>() - mass;
}

/// Root of the full drift with `sum (s_j + i_j) = mass`, by damped Newton on
/// the `2 ell` system whose first equation is replaced by the mass
/// constraint. Retries from 8 perturbed guesses if the first start fails.
pub fn steady_state_general(
    model: &ValidatedModel,
    initial_guess: &ContinuousState,
    mass: f64,
) -> Result<GeneralSteadyState, AnalysisError> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(AnalysisError::InvalidInput(format!(
            "mass must be > 0, got {mass}"
        )));
    }
    initial_guess
        .check(model.ell())
        .map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    let tol = GENERAL_TOL * mass.max(1.0);
    let base = initial_guess.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut best = SolverDiagnostics {
        residual: f64::INFINITY,
        ..Default::default()
    };
    let mut total_iterations = 0;
    for start in 0..9 {
        let mut z0 = base.clone();
        if start > 0 {
            for x in z0.iter_mut() {
                let u: f64 = rng.random_range(-0.5..0.5);
                *x = (*x * (1.0 + u)).max(1e-6 * mass);
            }
        }
        let total: f64 = z0.iter().sum();
        if total > 0.0 {
            z0.iter_mut().for_each(|x| *x *= mass / total);
        }
        let (z, res, its) = newton_general(model, z0, mass);
        total_iterations += its;
        if res < best.residual {
            best.residual = res;
        }
        if res < tol {
            let state = ContinuousState::from_slice(&z);
            let converged_to_dfe = state.i.iter().sum::<f64>() < DFE_THRESHOLD;
            return Ok(GeneralSteadyState {
                state,
                converged_to_dfe,
                diagnostics: SolverDiagnostics {
                    method: "damped Newton on the full system with mass constraint".into(),
                    iterations: total_iterations,
                    residual: res,
                    starts: start + 1,
                    fallback: (start > 0).then(|| format!("perturbed start {start}")),
                },
            });
        }
    }
    best.method = "damped Newton on the full system with mass constraint".into();
    best.iterations = total_iterations;
    best.starts = 9;
    Err(AnalysisError::NoConvergence(best))
}

fn newton_general(model: &ValidatedModel, mut z: Vec<f64>, mass: f64) -> (Vec<f64>, f64, usize) {
    let dim = z.len();
    let mut f = vec![0.0; dim];
    general_residual(model, &z, mass, &mut f);
    let mut res = linalg::inf_norm(&f);
    let mut cand_f = vec![0.0; dim];
    for it in 0..200 {
        if res < 1e-14 * mass.max(1.0) {
            return (z, res, it);
        }
        let mut jac = drift_jacobian(model, &ContinuousState::from_slice(&z));
        for c in 0..dim {
            jac[(0, c)] = 1.0;
        }
        let rhs = -DVector::from_column_slice(&f);
        let Ok(delta) = linalg::solve(&jac, &rhs) else {
            return (z, res, it);
        };
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = z
                .iter()
                .zip(delta.iter())
                .map(|(a, d)| a + step * d)
                .collect();
            if cand.iter().all(|&x| x >= 0.0) {
                general_residual(model, &cand, mass, &mut cand_f);
                let rc = linalg::inf_norm(&cand_f);
                if rc < res {
                    z = cand;
                    std::mem::swap(&mut f, &mut cand_f);
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            return (z, res, it);
        }
    }
    (z, res, 200)
}

/// Largest real part over the spectrum. For 1x1 and 2x2 input the closed
/// form from the characteristic polynomial is cross-checked against the
/// Schur route.
pub fn stability_modulus(m: &DMatrix<f64>) -> Result<f64, AnalysisError> {
    linalg::ensure_square(m).map_err(|e| AnalysisError::InvalidInput(e.to_string()))?;
    if m.nrows() == 0 {
        return Err(AnalysisError::InvalidInput("empty matrix".into()));
    }
    let ev = linalg::eigenvalues(m)?;
    let schur = ev.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
    if let Some(cf) = linalg::stability_modulus_closed_form(m) {
        if (cf - schur).abs() > 1e-8 * (1.0 + m.amax()) {
            return Err(AnalysisError::ConvergenceFailure(format!(
                "closed form {cf} disagrees with Schur {schur}"
            )));
        }
        return Ok(cf);
    }
    Ok(schur)
}

/// `B + V = nu_I D - A_gamma + B`.
pub fn b_plus_v(model: &ValidatedModel) -> DMatrix<f64> {
    let dm = derive_matrices(model);
    dm.b + dm.v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovVector {
    /// Positive, unit sum.
    pub v: Vec<f64>,
    /// `alpha(B + V)` at which `v` was computed.
    pub alpha: f64,
    /// `||(B + V)^T v||_inf`, equal to `|alpha| * ||v||_inf` up to rounding.
    pub residual: f64,
}

/// Left Perron vector of `B + V` for a critical model (`alpha(B + V) = 0`
/// within 1e-8).
pub fn lyapunov_left_vector(model: &ValidatedModel) -> Result<LyapunovVector, AnalysisError> {
    let m = b_plus_v(model);
    let alpha = stability_modulus(&m)?;
    if alpha.abs() > CRITICALITY_TOL {
        return Err(AnalysisError::NotCritical { alpha });
    }
    let ell = model.ell();
    let shifted = m.transpose() - DMatrix::identity(ell, ell) * alpha;
    let v = linalg::normalized_null_vector(&shifted, 1.0)?;
    if v.iter().any(|&x| x.is_nan() || x <= 0.0) {
        return Err(AnalysisError::ConvergenceFailure(
            "left null vector is not positive".into(),
        ));
    }
    let residual = (m.transpose() * &v).amax();
    Ok(LyapunovVector {
        v: v.iter().copied().collect(),
        alpha,
        residual,
    })
}

/// `(gamma/lambda, 1 - gamma/lambda)` for the homogeneous mass-action model.
pub fn homogeneous_ee(lambda: f64, gamma: f64) -> Result<(f64, f64), AnalysisError> {
    if lambda.is_nan() || lambda <= gamma || gamma.is_nan() || gamma <= 0.0 {
        return Err(AnalysisError::Subcritical { lambda, gamma });
    }
    let s = gamma / lambda;
    Ok((s, 1.0 - s))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub r0: f64,
    pub r0_method: R0Method,
    /// `alpha(B + V)`, same sign as `R0 - 1`.
    pub alpha_b_plus_v: f64,
    pub mass: f64,
    pub dfe: ContinuousState,
    pub n_star: Vec<f64>,
    pub ee: Option<ContinuousState>,
    pub ee_prevalences: Option<Vec<f64>>,
    pub stability_modulus_at_ee: Option<f64>,
    pub solver_diagnostics: Option<SolverDiagnostics>,
    pub notes: Vec<String>,
}

/// Full threshold and equilibrium analysis of a model at a given mass.
pub fn analyze(model: &ValidatedModel, mass: f64) -> Result<AnalysisReport, AnalysisError> {
    let est = r0_detailed(model)?;
    let alpha = stability_modulus(&b_plus_v(model))?;
    let n_star = stationary_n(model, mass)?;
    let mut report = AnalysisReport {
        r0: est.value,
        r0_method: est.method,
        alpha_b_plus_v: alpha,
        mass,
        dfe: dfe(model.ell(), mass),
        n_star: n_star.clone(),
        ee: None,
        ee_prevalences: None,
        stability_modulus_at_ee: None,
        solver_diagnostics: None,
        notes: Vec::new(),
    };
    if est.value <= 1.0 {
        report
            .notes
            .push("R0 <= 1: the disease-free equilibrium is the only equilibrium".into());
        return Ok(report);
    }
    if model.has_equal_diffusion() {
        let sol = endemic_equilibrium_equal_diffusion(model, mass)?;
        let jac = jacobian_dl(model, &n_star, &sol.state.i);
        report.stability_modulus_at_ee = Some(stability_modulus(&jac)?);
        report.ee_prevalences = Some(sol.state.prevalences());
        report.ee = Some(sol.state);
        report.solver_diagnostics = Some(sol.diagnostics);
        report
            .notes
            .push("stability modulus is alpha(DL(I*)) of the infectious subsystem".into());
    } else {
        let sol = steady_state_general(model, &isolated_patch_guess(model, mass), mass)?;
        if sol.converged_to_dfe {
            report
                .notes
                .push("general solver converged to the disease-free root".into());
            report.solver_diagnostics = Some(sol.diagnostics);
            return Ok(report);
        }
        let jac = mass_reduced_jacobian(&drift_jacobian(model, &sol.state));
        report.stability_modulus_at_ee = Some(stability_modulus(&jac)?);
        report.ee_prevalences = Some(sol.state.prevalences());
        report.ee = Some(sol.state);
        report.solver_diagnostics = Some(sol.diagnostics);
        report.notes.push(
            "stability modulus is taken on the mass-conserving coordinates of the full Jacobian"
                .into(),
        );
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate, Network, PatchParams};

    fn model(lambdas: &[f64], gammas: &[f64], net: Network) -> ValidatedModel {
        let patches = lambdas
            .iter()
            .zip(gammas)
            .map(|(&l, &g)| PatchParams::new(l, g))
            .collect();
        validate(patches, net).unwrap()
    }

    #[test]
    fn dfe_values() {
        assert_eq!(dfe(4, 1.0).s, vec![0.25; 4]);
        assert_eq!(dfe(1, 1.0), ContinuousState::new(vec![1.0], vec![0.0]));
    }

    #[test]
    fn r0_single_patch() {
        let m = model(&[1.5], &[1.0], Network::path(1, 0.0, 0.0));
        assert_eq!(
            next_gen_matrix(&m).unwrap(),
            DMatrix::from_element(1, 1, 1.5)
        );
        assert!((r0(&m).unwrap() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn r0_two_patch_heterogeneous_matches_quadratic_formula() {
        // frozen from the 2x2 quadratic-formula oracle
        let m = model(
            &[1.5, 2.0],
            &[1.0, 1.0],
            Network::two_patch(1.0, 1e-4, 1e-4),
        );
        let v = r0(&m).unwrap();
        assert!((v - 1.9998000999739978).abs() < 1e-12, "{v}");
    }

    #[test]
    fn r0_slow_mixing_falls_back() {
        // second eigenvalue 2/(1 + 2e-6), power iteration cannot separate it
        let m = model(
            &[2.0, 2.0],
            &[1.0, 1.0],
            Network::two_patch(1.0, 1e-6, 1e-6),
        );
        let est = r0_detailed(&m).unwrap();
        assert!((est.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn stationary_n_uniform_for_symmetric() {
        let m = model(&[2.0; 3], &[1.0; 3], Network::path(3, 0.1, 0.1));
        for x in stationary_n(&m, 1.0).unwrap() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        let m1 = model(&[2.0], &[1.0], Network::path(1, 0.1, 0.1));
        assert_eq!(stationary_n(&m1, 2.5).unwrap(), vec![2.5]);
    }

    #[test]
    fn ee_single_patch() {
        let m = model(&[2.0], &[1.0], Network::path(1, 0.0, 0.0));
        let sol = endemic_equilibrium_equal_diffusion(&m, 1.0).unwrap();
        assert!((sol.state.s[0] - 0.5).abs() < 1e-12);
        assert!((sol.state.i[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ee_rejects_subcritical_and_unequal() {
        let m = model(&[0.8, 0.9], &[1.0, 1.0], Network::two_patch(1.0, 0.1, 0.1));
        assert!(matches!(
            endemic_equilibrium_equal_diffusion(&m, 1.0),
            Err(AnalysisError::SubcriticalModel { .. })
        ));
        let m = model(&[2.0, 2.0], &[1.0, 1.0], Network::two_patch(1.0, 0.1, 0.2));
        assert!(matches!(
            endemic_equilibrium_equal_diffusion(&m, 1.0),
            Err(AnalysisError::UnequalDiffusion { .. })
        ));
    }

    #[test]
    fn general_matches_equal_diffusion_solver() {
        let m = model(
            &[1.5, 2.0, 1.2],
            &[1.0, 0.9, 0.8],
            Network::path(3, 0.05, 0.05),
        );
        let a = endemic_equilibrium_equal_diffusion(&m, 1.0).unwrap();
        let b = steady_state_general(&m, &isolated_patch_guess(&m, 1.0), 1.0).unwrap();
        assert!(!b.converged_to_dfe);
        assert!(a.state.l1_distance(&b.state) < 1e-8);
    }

    #[test]
    fn general_flags_dfe_root() {
        let m = model(&[0.5, 0.6], &[1.0, 1.0], Network::two_patch(1.0, 0.1, 0.3));
        let sol = steady_state_general(&m, &isolated_patch_guess(&m, 1.0), 1.0).unwrap();
        assert!(sol.converged_to_dfe);
    }

    #[test]
    fn drift_jacobian_matches_finite_differences() {
        let m = model(&[1.5, 2.0], &[1.0, 0.7], Network::two_patch(0.8, 0.3, 0.1));
        let z = ContinuousState::new(vec![0.3, 0.2], vec![0.1, 0.4]);
        let jac = drift_jacobian(&m, &z);
        let base = z.to_vec();
        let h = 1e-7;
        for c in 0..4 {
            let mut up = base.clone();
            let mut dn = base.clone();
            up[c] += h;
            dn[c] -= h;
            let fu = ode::drift(&ContinuousState::from_slice(&up), &m);
            let fd = ode::drift(&ContinuousState::from_slice(&dn), &m);
            for r in 0..4 {
                let fdv = (fu[r] - fd[r]) / (2.0 * h);
                assert!((jac[(r, c)] - fdv).abs() < 1e-7, "({r},{c})");
            }
        }
    }

    #[test]
    fn stability_modulus_diag() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![-1.0, -2.0]));
        assert_eq!(stability_modulus(&m).unwrap(), -1.0);
        let m3 = DMatrix::from_diagonal(&DVector::from_vec(vec![-3.0, -1.0, -2.0]));
        assert!((stability_modulus(&m3).unwrap() + 1.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_single_patch() {
        let m = model(&[1.0], &[1.0], Network::path(1, 0.0, 0.0));
        let l = lyapunov_left_vector(&m).unwrap();
        assert_eq!(l.v, vec![1.0]);
    }

    #[test]
    fn lyapunov_equal_rates_two_patch() {
        let m = model(&[1.0, 1.0], &[1.0, 1.0], Network::two_patch(1.0, 0.2, 0.2));
        let l = lyapunov_left_vector(&m).unwrap();
        assert!((l.v[0] - 0.5).abs() < 1e-15 && (l.v[1] - 0.5).abs() < 1e-15);
        assert!(l.residual < 1e-10);
        let sup = model(&[2.0, 1.0], &[1.0, 1.0], Network::two_patch(1.0, 0.2, 0.2));
        assert!(matches!(
            lyapunov_left_vector(&sup),
            Err(AnalysisError::NotCritical { .. })
        ));
    }

    #[test]
    fn homogeneous_values() {
        assert_eq!(homogeneous_ee(2.0, 1.0).unwrap(), (0.5, 0.5));
        let (s, i) = homogeneous_ee(1.5, 1.0).unwrap();
        assert!((s - 2.0 / 3.0).abs() < 1e-15 && (i - 1.0 / 3.0).abs() < 1e-15);
        let (s, i) = homogeneous_ee(1.2, 1.0).unwrap();
        assert!((s - 5.0 / 6.0).abs() < 1e-15 && (i - 1.0 / 6.0).abs() < 1e-15);
        assert!(matches!(
            homogeneous_ee(1.0, 1.0),
            Err(AnalysisError::Subcritical { .. })
        ));
    }

    #[test]
    fn analyze_subcritical_has_no_ee() {
        let m = model(&[0.5, 0.7], &[1.0, 1.0], Network::two_patch(1.0, 0.1, 0.1));
        let rep = analyze(&m, 1.0).unwrap();
        assert!(rep.r0 < 1.0);
        assert!(rep.alpha_b_plus_v < 0.0);
        assert!(rep.ee.is_none());
    }

    #[test]
    fn analyze_general_ee_is_stable() {
        let m = model(
            &[1.5, 2.0],
            &[1.0, 1.0],
            Network::two_patch(1.0, 5e-4, 1e-4),
        );
        let rep = analyze(&m, 1.0).unwrap();
        assert!(rep.ee.is_some());
        assert!(rep.stability_modulus_at_ee.unwrap() < 0.0);
    }
}
