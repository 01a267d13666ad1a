//! Deterministic limit of the patch model and its integrators.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContinuousState, ValidatedModel};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OdeError {
    #[error("reduced system needs nu_s == nu_i (got nu_s = {nu_s}, nu_i = {nu_i})")]
    UnequalDiffusion { nu_s: f64, nu_i: f64 },
    #[error("step size underflow at t = {t} (h = {h})")]
    StepSizeUnderflow { t: f64, h: f64 },
    #[error("component {index} went to {value} at t = {t}, below the clamp tolerance")]
    NegativeState { t: f64, index: usize, value: f64 },
    #[error("invalid ODE config: {0}")]
    InvalidConfig(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMethod {
    Rk4Fixed { dt: f64 },
    Rk45Adaptive { rel_tol: f64, abs_tol: f64 },
}

impl Default for OdeMethod {
    fn default() -> Self {
        OdeMethod::Rk45Adaptive {
            rel_tol: 1e-8,
            abs_tol: 1e-10,
        }
    }
}

impl OdeMethod {
    /// Undershoot below `-clamp_tol` is an error, above it is clamped to 0.
    fn clamp_tol(&self) -> f64 {
        match *self {
            OdeMethod::Rk4Fixed { .. } => 1e-10,
            OdeMethod::Rk45Adaptive { abs_tol, .. } => abs_tol,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub t_max: f64,
    pub method: OdeMethod,
    pub record_dt: f64,
}

impl OdeConfig {
    /// Default adaptive method, records on a grid of `record_dt`.
    pub fn adaptive(t_max: f64, record_dt: f64) -> Self {
        Self {
            t_max,
            method: OdeMethod::default(),
            record_dt,
        }
    }

    pub fn validate(&self) -> Result<(), OdeError> {
        let bad = |msg: String| Err(OdeError::InvalidConfig(msg));
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return bad(format!("t_max must be finite and >= 0, got {}", self.t_max));
        }
        if !(self.record_dt.is_finite() && self.record_dt > 0.0) {
            return bad(format!("record_dt must be > 0, got {}", self.record_dt));
        }
        match self.method {
            OdeMethod::Rk4Fixed { dt } if !(dt.is_finite() && dt > 0.0) => {
                bad(format!("dt must be > 0, got {dt}"))
            }
            OdeMethod::Rk45Adaptive { rel_tol, abs_tol } if !(rel_tol > 0.0 && abs_tol > 0.0) => {
                bad("tolerances must be > 0".to_string())
            }
            _ => Ok(()),
        }
    }
}

/// Solution sampled on the record grid; states stored flat in the stacked
/// layout `[s_1..s_ell, i_1..i_ell]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuousTrajectory {
    pub ell: usize,
    pub times: Vec<f64>,
    values: Vec<f64>,
    /// Accepted integration steps.
    pub steps: usize,
    pub rejected_steps: usize,
}

impl ContinuousTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[f64] {
        let w = 2 * self.ell;
        &self.values[k * w..(k + 1) * w]
    }

    pub fn state(&self, k: usize) -> ContinuousState {
        ContinuousState::from_slice(self.row(k))
    }

    pub fn states(&self) -> impl Iterator<Item = ContinuousState> + '_ {
        (0..self.len()).map(|k| self.state(k))
    }

    pub fn final_state(&self) -> ContinuousState {
        self.state(self.len() - 1)
    }

    /// Linear interpolation between records; `None` outside the recorded span.
    pub fn at(&self, t: f64) -> Option<Vec<f64>> {
        let first = *self.times.first()?;
        let last = *self.times.last()?;
        if t < first || t > last {
            return None;
        }
        let k = self.times.partition_point(|&r| r <= t);
        if k == self.len() {
            return Some(self.row(k - 1).to_vec());
        }
        let (t0, t1) = (self.times[k - 1], self.times[k]);
        let w = (t - t0) / (t1 - t0);
        Some(
            self.row(k - 1)
                .iter()
                .zip(self.row(k))
                .map(|(a, b)| a + w * (b - a))
                .collect(),
        )
    }
}

#[inline]
fn incidence(lambda: f64, s: f64, i: f64) -> f64 {
    let n = s + i;
    if n > 0.0 {
        lambda * s * i / n
    } else {
        0.0
    }
}

/// Right-hand side of the limit system in the stacked layout.
pub fn drift_into(model: &ValidatedModel, z: &[f64], out: &mut [f64]) {
    let ell = model.ell();
    let a = model.adjacency();
    let (s, i) = z.split_at(ell);
    let (nu_s, nu_i) = (model.nu_s(), model.nu_i());
    for j in 0..ell {
        let f = incidence(model.lambda(j), s[j], i[j]);
        let rec = model.gamma(j) * i[j];
        let (mut ms, mut mi) = (0.0, 0.0);
        for k in 0..ell {
            if k != j {
                ms += a[(k, j)] * s[k] - a[(j, k)] * s[j];
                mi += a[(k, j)] * i[k] - a[(j, k)] * i[j];
            }
        }
        out[j] = -f + rec + nu_s * ms;
        out[ell + j] = f - rec + nu_i * mi;
    }
}

/// Time derivative `[ds/dt; di/dt]` of the limit system.
pub fn drift(z: &ContinuousState, model: &ValidatedModel) -> Vec<f64> {
    let zv = z.to_vec();
    let mut out = vec![0.0; zv.len()];
    drift_into(model, &zv, &mut out);
    out
}

/// Patch-total / infectious form, valid when `nu_s == nu_i`:
/// `dN/dt = nu D N`, `dI/dt = nu D I - A_gamma I + (Id - diag(1/N) diag(I)) B I`.
pub fn drift_reduced(
    n_vec: &[f64],
    i_vec: &[f64],
    model: &ValidatedModel,
) -> Result<(Vec<f64>, Vec<f64>), OdeError> {
    if !model.has_equal_diffusion() {
        return Err(OdeError::UnequalDiffusion {
            nu_s: model.nu_s(),
            nu_i: model.nu_i(),
        });
    }
    let ell = model.ell();
    let nu = model.nu_i();
    let a = model.adjacency();
    let mut dn = vec![0.0; ell];
    let mut di = vec![0.0; ell];
    for j in 0..ell {
        let (mut mn, mut mi) = (0.0, 0.0);
        for k in 0..ell {
            if k != j {
                mn += a[(k, j)] * n_vec[k] - a[(j, k)] * n_vec[j];
                mi += a[(k, j)] * i_vec[k] - a[(j, k)] * i_vec[j];
            }
        }
        let frac = if n_vec[j] > 0.0 {
            i_vec[j] / n_vec[j]
        } else {
            0.0
        };
        dn[j] = nu * mn;
        di[j] = nu * mi - model.gamma(j) * i_vec[j] + (1.0 - frac) * model.lambda(j) * i_vec[j];
    }
    Ok((dn, di))
}

/// Homogeneous mass-action SIS: `ds/dt = -lambda s i + gamma i`.
pub fn drift_homogeneous(s: f64, i: f64, lambda: f64, gamma: f64) -> (f64, f64) {
    let flow = lambda * s * i - gamma * i;
    (-flow, flow)
}

/// Integrates the limit system from `z0`.
pub fn integrate(
    model: &ValidatedModel,
    z0: &ContinuousState,
    cfg: &OdeConfig,
) -> Result<ContinuousTrajectory, OdeError> {
    z0.check(model.ell())
        .map_err(|e| OdeError::InvalidState(e.to_string()))?;
    let (times, values, stats) =
        integrate_system(&z0.to_vec(), |y, dy| drift_into(model, y, dy), cfg)?;
    Ok(ContinuousTrajectory {
        ell: model.ell(),
        times,
        values,
        steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

/// Integrates the `(N, I)` form; the returned trajectory is expressed in
/// `(s, i) = (N - I, I)`.
pub fn integrate_reduced(
    model: &ValidatedModel,
    n0: &[f64],
    i0: &[f64],
    cfg: &OdeConfig,
) -> Result<ContinuousTrajectory, OdeError> {
    let ell = model.ell();
    if !model.has_equal_diffusion() {
        return Err(OdeError::UnequalDiffusion {
            nu_s: model.nu_s(),
            nu_i: model.nu_i(),
        });
    }
    if n0.len() != ell || i0.len() != ell {
        return Err(OdeError::InvalidState("length mismatch".into()));
    }
    let mut y0 = n0.to_vec();
    y0.extend_from_slice(i0);
    let (times, mut values, stats) = integrate_system(
        &y0,
        |y, dy| {
            let (n, i) = y.split_at(ell);
            // shape already checked, equal diffusion already checked
            let (dn, di) = drift_reduced(n, i, model).expect("equal diffusion");
            dy[..ell].copy_from_slice(&dn);
            dy[ell..].copy_from_slice(&di);
        },
        cfg,
    )?;
    for row in values.chunks_mut(2 * ell) {
        for j in 0..ell {
            row[j] = (row[j] - row[ell + j]).max(0.0);
        }
    }
    Ok(ContinuousTrajectory {
        ell,
        times,
        values,
        steps: stats.accepted,
        rejected_steps: stats.rejected,
    })
}

#[derive(Debug, Default, Clone, Copy)]
struct StepStats {
    accepted: usize,
    rejected: usize,
}

// Dormand-Prince 5(4) tableau (autonomous systems, no node vector needed).
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Record times `0, dt, 2dt, ...` plus `t_max` when it is off-grid.
fn record_grid(t_max: f64, record_dt: f64) -> Vec<f64> {
    let k_max = ((t_max / record_dt) * (1.0 + 1e-12)).floor() as usize;
    let mut grid: Vec<f64> = (0..=k_max)
        .map(|k| (k as f64 * record_dt).min(t_max))
        .collect();
    if t_max - grid[grid.len() - 1] > 1e-12 * t_max.max(1.0) {
        grid.push(t_max);
    }
    grid.dedup();
    grid
}

fn integrate_system<F>(
    y0: &[f64],
    mut rhs: F,
    cfg: &OdeConfig,
) -> Result<(Vec<f64>, Vec<f64>, StepStats), OdeError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    cfg.validate()?;
    let dim = y0.len();
    let grid = record_grid(cfg.t_max, cfg.record_dt);
    let mut times = Vec::with_capacity(grid.len());
    let mut values = Vec::with_capacity(grid.len() * dim);
    times.push(0.0);
    values.extend_from_slice(y0);

    let clamp_tol = cfg.method.clamp_tol();
    let mut y = y0.to_vec();
    let mut t = 0.0;
    let mut stats = StepStats::default();
    let mut k = vec![vec![0.0; dim]; 7];
    let mut ytmp = vec![0.0; dim];
    let mut ynew = vec![0.0; dim];

    let mut h = match cfg.method {
        OdeMethod::Rk4Fixed { dt } => dt,
        OdeMethod::Rk45Adaptive { .. } => (1e-3 * cfg.t_max.max(1.0)).min(cfg.record_dt),
    };

    for &target in grid.iter().skip(1) {
        while t < target {
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            if hs < 1e-14 * t.abs().max(1.0) && !last {
                return Err(OdeError::StepSizeUnderflow { t, h: hs });
            }
            match cfg.method {
                OdeMethod::Rk4Fixed { .. } => {
                    rk4_step(&mut rhs, &y, hs, &mut k, &mut ytmp, &mut ynew);
                    clamp(&mut ynew, clamp_tol).map_err(|(index, value)| {
                        OdeError::NegativeState {
                            t: t + hs,
                            index,
                            value,
                        }
                    })?;
                    std::mem::swap(&mut y, &mut ynew);
                    t = if last { target } else { t + hs };
                    stats.accepted += 1;
                }
                OdeMethod::Rk45Adaptive { rel_tol, abs_tol } => {
                    let err = dopri_step(
                        &mut rhs, &y, hs, &mut k, &mut ytmp, &mut ynew, rel_tol, abs_tol,
                    );
                    let negative = clamp(&mut ynew, clamp_tol).is_err();
                    if err <= 1.0 && !negative {
                        std::mem::swap(&mut y, &mut ynew);
                        t = if last { target } else { t + hs };
                        stats.accepted += 1;
                        let factor = if err == 0.0 {
                            5.0
                        } else {
                            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
                        };
                        // a step shortened to hit the grid does not shrink h
                        h = if last {
                            h.max(hs * factor)
                        } else {
                            hs * factor
                        };
                    } else {
                        stats.rejected += 1;
                        let factor = if negative {
                            0.25
                        } else {
                            (0.9 * err.powf(-0.2)).clamp(0.2, 1.0)
                        };
                        h = hs * factor;
                        if h < 1e-14 * t.abs().max(1.0) {
                            return Err(OdeError::StepSizeUnderflow { t, h });
                        }
                    }
                }
            }
        }
        times.push(target);
        values.extend_from_slice(&y);
    }
    Ok((times, values, stats))
}

fn clamp(y: &mut [f64], tol: f64) -> Result<(), (usize, f64)> {
    for (idx, v) in y.iter_mut().enumerate() {
        if *v < 0.0 {
            if *v < -tol {
                return Err((idx, *v));
            }
            *v = 0.0;
        }
    }
    Ok(())
}

fn rk4_step<F: FnMut(&[f64], &mut [f64])>(
    rhs: &mut F,
    y: &[f64],
    h: f64,
    k: &mut [Vec<f64>],
    ytmp: &mut [f64],
    ynew: &mut [f64],
) {
    let dim = y.len();
    rhs(y, &mut k[0]);
    for d in 0..dim {
        ytmp[d] = y[d] + 0.5 * h * k[0][d];
    }
    rhs(ytmp, &mut k[1]);
    for d in 0..dim {
        ytmp[d] = y[d] + 0.5 * h * k[1][d];
    }
    rhs(ytmp, &mut k[2]);
    for d in 0..dim {
        ytmp[d] = y[d] + h * k[2][d];
    }
    rhs(ytmp, &mut k[3]);
    for d in 0..dim {
        ynew[d] = y[d] + h / 6.0 * (k[0][d] + 2.0 * k[1][d] + 2.0 * k[2][d] + k[3][d]);
    }
}

/// One Dormand-Prince step; returns the scaled RMS error estimate.
#[allow(clippy::too_many_arguments)]
fn dopri_step<F: FnMut(&[f64], &mut [f64])>(
    rhs: &mut F,
    y: &[f64],
    h: f64,
    k: &mut [Vec<f64>],
    ytmp: &mut [f64],
    ynew: &mut [f64],
    rel_tol: f64,
    abs_tol: f64,
) -> f64 {
    let dim = y.len();
    rhs(y, &mut k[0]);
    for stage in 1..7 {
        for d in 0..dim {
            let mut acc = 0.0;
            for (prev, a) in A[stage].iter().enumerate().take(stage) {
                acc += a * k[prev][d];
            }
            ytmp[d] = y[d] + h * acc;
        }
        rhs(ytmp, &mut k[stage]);
    }
    let mut sum = 0.0;
    for d in 0..dim {
        let mut acc = 0.0;
        let mut err = 0.0;
        for stage in 0..7 {
            acc += B5[stage] * k[stage][d];
            err += E[stage] * k[stage][d];
        }
        ynew[d] = y[d] + h * acc;
        let scale = abs_tol + rel_tol * y[d].abs().max(ynew[d].abs());
        let e = h * err / scale;
        sum += e * e;
    }
    (sum / dim as f64).sqrt()
}
