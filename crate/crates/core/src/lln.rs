//! Empirical law-of-large-numbers study: sup-norm distance between the
//! scaled jump process and the deterministic solution, across population
//! sizes and seeded replicates.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContinuousState, ValidatedModel};
use crate::ode::{self, ContinuousTrajectory, OdeConfig, OdeError};
use crate::stochastic::{self, Recording, ScaledTrajectory, SimConfig};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LlnError {
    #[error("grid point t = {t} is outside the {which} trajectory")]
    GridOutOfRange { t: f64, which: &'static str },
    #[error("need at least 3 population sizes with positive median error, got {0}")]
    InsufficientData(usize),
    #[error("invalid study config: {0}")]
    InvalidConfig(String),
    #[error("deterministic reference failed: {0}")]
    Ode(#[from] OdeError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlnStudyConfig {
    pub populations: Vec<u64>,
    pub replicates: usize,
    pub t_max: f64,
    /// Defaults to `t_max / 200` when `None`.
    pub grid_dt: Option<f64>,
    pub master_seed: u64,
}

impl LlnStudyConfig {
    pub fn grid_dt(&self) -> f64 {
        self.grid_dt.unwrap_or(self.t_max / 200.0)
    }

    pub fn validate(&self) -> Result<(), LlnError> {
        let bad = |m: &str| Err(LlnError::InvalidConfig(m.to_string()));
        if self.populations.is_empty() || self.populations.windows(2).any(|w| w[0] >= w[1]) {
            return bad("populations must be nonempty and strictly increasing");
        }
        if self.populations[0] == 0 {
            return bad("populations must be >= 1");
        }
        if self.replicates == 0 {
            return bad("replicates must be >= 1");
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return bad("t_max must be > 0");
        }
        let dt = self.grid_dt();
        if !(dt.is_finite() && dt > 0.0) {
            return bad("grid_dt must be > 0");
        }
        Ok(())
    }

    /// Comparison grid `0, dt, ..., t_max`.
    pub fn grid(&self) -> Vec<f64> {
        let dt = self.grid_dt();
        let k_max = ((self.t_max / dt) * (1.0 + 1e-12)).floor() as usize;
        (0..=k_max)
            .map(|k| (k as f64 * dt).min(self.t_max))
            .collect()
    }
}

/// Max over `grid` of the L1 distance over all `2 ell` components. The
/// stochastic path is held constant between records, the deterministic one
/// interpolated linearly.
pub fn sup_distance(
    stoch: &ScaledTrajectory,
    det: &ContinuousTrajectory,
    grid: &[f64],
) -> Result<f64, LlnError> {
    let mut sup = 0.0f64;
    for &t in grid {
        let zs = stoch.at(t).ok_or(LlnError::GridOutOfRange {
            t,
            which: "stochastic",
        })?;
        let zd = det.at(t).ok_or(LlnError::GridOutOfRange {
            t,
            which: "deterministic",
        })?;
        let d: f64 = zs.iter().zip(&zd).map(|(a, b)| (a - b).abs()).sum();
        sup = sup.max(d);
    }
    Ok(sup)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub population_n: u64,
    pub replicate: usize,
    /// `Err` holds the failure message; the study continues.
    pub sup_error: Result<f64, String>,
    pub absorbed: bool,
    pub events: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub population_n: u64,
    pub completed: usize,
    pub failed: usize,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LlnResult {
    pub cells: Vec<CellResult>,
    pub aggregates: Vec<Aggregate>,
    pub grid_dt: f64,
    pub t_max: f64,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Runs every `(N, replicate)` cell (in parallel on the current rayon pool)
/// against one shared ODE solution.
pub fn convergence_study(
    model: &ValidatedModel,
    x0: &ContinuousState,
    cfg: &LlnStudyConfig,
) -> Result<LlnResult, LlnError> {
    cfg.validate()?;
    let grid_dt = cfg.grid_dt();
    let grid = cfg.grid();
    let det = ode::integrate(model, x0, &OdeConfig::adaptive(cfg.t_max, grid_dt))?;

    let cells: Vec<(usize, u64, usize)> = cfg
        .populations
        .iter()
        .enumerate()
        .flat_map(|(pi, &n)| (0..cfg.replicates).map(move |r| (pi, n, r)))
        .collect();

    let results: Vec<CellResult> = cells
        .par_iter()
        .map(|&(pi, n, r)| {
            let stream = (pi * cfg.replicates + r) as u64;
            let sim_cfg = SimConfig {
                population_n: n,
                t_max: cfg.t_max,
                seed: cfg.master_seed,
                recording: Recording::Grid(grid_dt),
            };
            let rng = stochastic::replicate_rng(cfg.master_seed, stream);
            match stochastic::simulate_with_rng(model, x0, &sim_cfg, rng) {
                Ok(tr) => {
                    let scaled = stochastic::scale(&tr, n);
                    CellResult {
                        population_n: n,
                        replicate: r,
                        sup_error: sup_distance(&scaled, &det, &grid).map_err(|e| e.to_string()),
                        absorbed: tr.absorbed,
                        events: tr.event_count,
                    }
                }
                Err(e) => CellResult {
                    population_n: n,
                    replicate: r,
                    sup_error: Err(e.to_string()),
                    absorbed: false,
                    events: 0,
                },
            }
        })
        .collect();

    let aggregates = cfg
        .populations
        .iter()
        .map(|&n| {
            let mut errs: Vec<f64> = results
                .iter()
                .filter(|c| c.population_n == n)
                .filter_map(|c| c.sup_error.as_ref().ok().copied())
                .collect();
            errs.sort_by(f64::total_cmp);
            let completed = errs.len();
            Aggregate {
                population_n: n,
                completed,
                failed: cfg.replicates - completed,
                median: median(&errs),
                mean: if completed > 0 {
                    errs.iter().sum::<f64>() / completed as f64
                } else {
                    f64::NAN
                },
                max: errs.last().copied().unwrap_or(f64::NAN),
            }
        })
        .collect();

    Ok(LlnResult {
        cells: results,
        aggregates,
        grid_dt,
        t_max: cfg.t_max,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
    pub points: usize,
}

/// Least-squares slope of `log(median)` against `log(N)`.
pub fn rate_fit(result: &LlnResult) -> Result<RateFit, LlnError> {
    let pts: Vec<(f64, f64)> = result
        .aggregates
        .iter()
        .filter(|a| a.median.is_finite() && a.median > 0.0)
        .map(|a| ((a.population_n as f64).ln(), a.median.ln()))
        .collect();
    fit_line(&pts)
}

fn fit_line(pts: &[(f64, f64)]) -> Result<RateFit, LlnError> {
    if pts.len() < 3 {
        return Err(LlnError::InsufficientData(pts.len()));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(RateFit {
        slope,
        intercept,
        residual,
        points: pts.len(),
    })
}
