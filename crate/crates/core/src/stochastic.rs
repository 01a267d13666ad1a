//! Exact event-driven simulation of the Poisson-driven patch model.
//!
//! The jump process is simulated with the direct stochastic simulation
//! algorithm: an exponential holding time at the total rate followed by a
//! categorical draw of the firing channel. Channels are
//!
//! * `Infection(j)` at rate `lambda_j S_j I_j / (S_j + I_j)` (0 on an empty patch),
//! * `Recovery(j)` at rate `gamma_j I_j`,
//! * `MigrateS(j, k)` at rate `nu_S a_jk S_j`,
//! * `MigrateI(j, k)` at rate `nu_I a_jk I_j`,
//!
//! with migration channels enumerated only where `a_jk > 0`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ContinuousState, DiscreteState, ValidatedModel};

/// Full rate recomputation period, bounds drift of the running total.
const REFRESH_PERIOD: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    /// Every channel has rate zero; the state is final.
    #[error("process is absorbed: total event rate is zero")]
    Absorbed,
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("invalid initial state: {0}")]
    InvalidState(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventChannel {
    Infection(usize),
    Recovery(usize),
    MigrateS(usize, usize),
    MigrateI(usize, usize),
}

impl EventChannel {
    /// Applies the channel's jump vector. Panics on underflow, which can
    /// only happen if a zero-rate channel was selected.
    pub fn apply(&self, state: &mut DiscreteState) {
        match *self {
            EventChannel::Infection(j) => {
                state.s[j] -= 1;
                state.i[j] += 1;
            }
            EventChannel::Recovery(j) => {
                state.i[j] -= 1;
                state.s[j] += 1;
            }
            EventChannel::MigrateS(j, k) => {
                state.s[j] -= 1;
                state.s[k] += 1;
            }
            EventChannel::MigrateI(j, k) => {
                state.i[j] -= 1;
                state.i[k] += 1;
            }
        }
    }

    fn source(&self) -> usize {
        match *self {
            EventChannel::Infection(j)
            | EventChannel::Recovery(j)
            | EventChannel::MigrateS(j, _)
            | EventChannel::MigrateI(j, _) => j,
        }
    }

    fn destination(&self) -> Option<usize> {
        match *self {
            EventChannel::MigrateS(_, k) | EventChannel::MigrateI(_, k) => Some(k),
            _ => None,
        }
    }
}

/// Recording policy for [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Recording {
    EveryEvent,
    /// State at `0, dt, 2dt, ...` up to `t_max` (last-event holding).
    Grid(f64),
    FinalOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub population_n: u64,
    pub t_max: f64,
    pub seed: u64,
    pub recording: Recording,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.population_n == 0 {
            return Err(SimError::InvalidConfig("population_n must be >= 1".into()));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(SimError::InvalidConfig(format!(
                "t_max must be finite and >= 0, got {}",
                self.t_max
            )));
        }
        if let Recording::Grid(dt) = self.recording {
            if !(dt.is_finite() && dt > 0.0) {
                return Err(SimError::InvalidConfig(format!(
                    "grid spacing must be > 0, got {dt}"
                )));
            }
        }
        Ok(())
    }
}

/// Channels enumerated for a model, in a fixed order: per patch, infection,
/// recovery, then outgoing S and I migrations by increasing destination.
pub fn channels(model: &ValidatedModel) -> Vec<EventChannel> {
    let ell = model.ell();
    let a = model.adjacency();
    let mut out = Vec::new();
    for j in 0..ell {
        out.push(EventChannel::Infection(j));
        out.push(EventChannel::Recovery(j));
        for k in 0..ell {
            if k != j && a[(j, k)] > 0.0 {
                out.push(EventChannel::MigrateS(j, k));
                out.push(EventChannel::MigrateI(j, k));
            }
        }
    }
    out
}

/// Rate of a single channel in a given state.
pub fn channel_rate(channel: EventChannel, state: &DiscreteState, model: &ValidatedModel) -> f64 {
    match channel {
        EventChannel::Infection(j) => {
            let (s, i) = (state.s[j] as f64, state.i[j] as f64);
            if s == 0.0 || i == 0.0 {
                0.0
            } else {
                model.lambda(j) * s * i / (s + i)
            }
        }
        EventChannel::Recovery(j) => model.gamma(j) * state.i[j] as f64,
        EventChannel::MigrateS(j, k) => {
            model.nu_s() * model.adjacency()[(j, k)] * state.s[j] as f64
        }
        EventChannel::MigrateI(j, k) => {
            model.nu_i() * model.adjacency()[(j, k)] * state.i[j] as f64
        }
    }
}

/// Rates of every enumerated channel, in the order of [`channels`].
pub fn event_rates(state: &DiscreteState, model: &ValidatedModel) -> Vec<(EventChannel, f64)> {
    channels(model)
        .into_iter()
        .map(|c| (c, channel_rate(c, state, model)))
        .collect()
}

/// `[N x]`: per-compartment floor of `n * x`.
pub fn initial_counts(x: &ContinuousState, n: u64) -> DiscreteState {
    let nf = n as f64;
    let floor = |v: &f64| (nf * v).floor().max(0.0) as u64;
    DiscreteState {
        s: x.s.iter().map(floor).collect(),
        i: x.i.iter().map(floor).collect(),
    }
}

/// One jump of the process.
#[derive(Debug, Clone, PartialEq)]
pub struct Jump {
    pub dt: f64,
    pub channel: EventChannel,
    pub next: DiscreteState,
}

/// Draws the holding time and firing channel from a rate table.
fn sample<R: Rng + ?Sized>(rates: &[f64], total: f64, rng: &mut R) -> Option<(f64, usize)> {
    if total.is_nan() || total <= 0.0 {
        return None;
    }
    let e: f64 = rng.sample(Exp1);
    let dt = e / total;
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (idx, &r) in rates.iter().enumerate() {
        if r > 0.0 {
            acc += r;
            last_positive = Some(idx);
            if target < acc {
                return Some((dt, idx));
            }
        }
    }
    // rounding left target at or above the running sum
    last_positive.map(|idx| (dt, idx))
}

/// A single step of the direct method from `state`, recomputing all rates.
pub fn step<R: Rng + ?Sized>(
    state: &DiscreteState,
    model: &ValidatedModel,
    rng: &mut R,
) -> Result<Jump, SimError> {
    let table = event_rates(state, model);
    let rates: Vec<f64> = table.iter().map(|(_, r)| *r).collect();
    let total: f64 = rates.iter().sum();
    let (dt, idx) = sample(&rates, total, rng).ok_or(SimError::Absorbed)?;
    let channel = table[idx].0;
    let mut next = state.clone();
    channel.apply(&mut next);
    Ok(Jump { dt, channel, next })
}

/// Stateful simulator with incremental rate maintenance.
///
/// After an event only the channels leaving the touched patches are
/// recomputed; the running total is refreshed from scratch every
/// `2^16` events.
#[derive(Debug, Clone)]
pub struct Simulator<'m> {
    model: &'m ValidatedModel,
    channels: Vec<EventChannel>,
    by_source: Vec<Vec<usize>>,
    rates: Vec<f64>,
    total: f64,
    state: DiscreteState,
    time: f64,
    events: u64,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m ValidatedModel, state: DiscreteState) -> Result<Self, SimError> {
        if state.ell() != model.ell() || state.i.len() != model.ell() {
            return Err(SimError::InvalidState(format!(
                "state has {} patches, model has {}",
                state.ell(),
                model.ell()
            )));
        }
        let channels = channels(model);
        let mut by_source = vec![Vec::new(); model.ell()];
        for (idx, c) in channels.iter().enumerate() {
            by_source[c.source()].push(idx);
        }
        let mut sim = Self {
            model,
            rates: vec![0.0; channels.len()],
            channels,
            by_source,
            total: 0.0,
            state,
            time: 0.0,
            events: 0,
        };
        sim.refresh();
        Ok(sim)
    }

    fn refresh(&mut self) {
        for (r, c) in self.rates.iter_mut().zip(&self.channels) {
            *r = channel_rate(*c, &self.state, self.model);
        }
        self.total = self.rates.iter().sum();
    }

    fn update_patch(&mut self, j: usize) {
        for &idx in &self.by_source[j] {
            let new = channel_rate(self.channels[idx], &self.state, self.model);
            self.total += new - self.rates[idx];
            self.rates[idx] = new;
        }
    }

    pub fn state(&self) -> &DiscreteState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn event_count(&self) -> u64 {
        self.events
    }

    pub fn total_rate(&self) -> f64 {
        self.total
    }

    /// Samples the next jump without applying it.
    pub fn propose<R: Rng + ?Sized>(
        &mut self,
        rng: &mut R,
    ) -> Result<(f64, EventChannel), SimError> {
        if self.total <= 0.0 {
            // drift can leave a tiny residue either way; decide on exact rates
            self.refresh();
        }
        match sample(&self.rates, self.total, rng) {
            Some((dt, idx)) => Ok((dt, self.channels[idx])),
            None => Err(SimError::Absorbed),
        }
    }

    /// Applies a channel at time `self.time() + dt`.
    pub fn apply(&mut self, dt: f64, channel: EventChannel) {
        channel.apply(&mut self.state);
        self.time += dt;
        self.events += 1;
        if self.events.is_multiple_of(REFRESH_PERIOD) {
            self.refresh();
        } else {
            self.update_patch(channel.source());
            if let Some(k) = channel.destination() {
                self.update_patch(k);
            }
        }
    }

    /// Samples and applies the next jump.
    pub fn advance<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventChannel, SimError> {
        let (dt, channel) = self.propose(rng)?;
        self.apply(dt, channel);
        Ok(channel)
    }
}

/// Recorded path of the jump process. States are stored flat, one row of
/// `2 ell` counts `[S_1..S_ell, I_1..I_ell]` per record time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteTrajectory {
    pub ell: usize,
    pub population_n: u64,
    pub times: Vec<f64>,
    counts: Vec<u64>,
    pub event_count: u64,
    /// The process reached a state with total rate zero before `t_max`.
    pub absorbed: bool,
    pub t_max: f64,
    pub recording: Recording,
}

impl DiscreteTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn row(&self, k: usize) -> &[u64] {
        &self.counts[k * 2 * self.ell..(k + 1) * 2 * self.ell]
    }

    pub fn state(&self, k: usize) -> DiscreteState {
        let row = self.row(k);
        DiscreteState {
            s: row[..self.ell].to_vec(),
            i: row[self.ell..].to_vec(),
        }
    }

    pub fn states(&self) -> impl Iterator<Item = DiscreteState> + '_ {
        (0..self.len()).map(|k| self.state(k))
    }

    /// Time up to which the path is known: `t_max`, or forever once absorbed.
    pub fn valid_until(&self) -> f64 {
        if self.absorbed {
            f64::INFINITY
        } else {
            self.t_max
        }
    }

    fn push(&mut self, t: f64, state: &DiscreteState) {
        self.times.push(t);
        self.counts.extend_from_slice(&state.s);
        self.counts.extend_from_slice(&state.i);
    }
}

/// Runs the direct method from `[N x0]` until `t_max` or absorption.
pub fn simulate(
    model: &ValidatedModel,
    x0: &ContinuousState,
    cfg: &SimConfig,
) -> Result<DiscreteTrajectory, SimError> {
    let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    simulate_with_rng(model, x0, cfg, rng)
}

/// RNG for replicate `stream` of a study seeded with `master_seed`.
pub fn replicate_rng(master_seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream);
    rng
}

pub fn simulate_with_rng<R: Rng>(
    model: &ValidatedModel,
    x0: &ContinuousState,
    cfg: &SimConfig,
    mut rng: R,
) -> Result<DiscreteTrajectory, SimError> {
    cfg.validate()?;
    x0.check(model.ell())
        .map_err(|e| SimError::InvalidState(e.to_string()))?;
    let mass = x0.mass();
    if mass > 1.0 + 1e-9 {
        return Err(SimError::InvalidState(format!(
            "initial proportions sum to {mass} > 1"
        )));
    }
    let start = initial_counts(x0, cfg.population_n);
    if start.total() == 0 {
        return Err(SimError::InvalidState(
            "initial counts are all zero at this population size".into(),
        ));
    }
    let mut sim = Simulator::new(model, start)?;
    let mut traj = DiscreteTrajectory {
        ell: model.ell(),
        population_n: cfg.population_n,
        times: Vec::new(),
        counts: Vec::new(),
        event_count: 0,
        absorbed: false,
        t_max: cfg.t_max,
        recording: cfg.recording,
    };

    let grid_points = match cfg.recording {
        Recording::Grid(dt) => ((cfg.t_max / dt) * (1.0 + 1e-12)).floor() as u64 + 1,
        _ => 0,
    };
    let mut next_grid: u64 = 0;

    match cfg.recording {
        Recording::EveryEvent => traj.push(0.0, sim.state()),
        Recording::Grid(_) | Recording::FinalOnly => {}
    }

    loop {
        let proposal = sim.propose(&mut rng);
        let t_next = match &proposal {
            Ok((dt, _)) => sim.time() + dt,
            Err(_) => f64::INFINITY,
        };
        // grid points strictly before the next jump see the current state
        if let (Recording::Grid(dt), Ok(_)) = (cfg.recording, &proposal) {
            while next_grid < grid_points {
                let g = next_grid as f64 * dt;
                if g >= t_next {
                    break;
                }
                traj.push(g.min(cfg.t_max), sim.state());
                next_grid += 1;
            }
        }
        match proposal {
            Err(_) => {
                traj.absorbed = true;
                if let Recording::Grid(dt) = cfg.recording {
                    // one more grid point with the frozen state, then stop
                    if next_grid < grid_points {
                        let g = next_grid as f64 * dt;
                        traj.push(g.min(cfg.t_max), sim.state());
                    }
                }
                break;
            }
            Ok((dt, channel)) => {
                if t_next > cfg.t_max {
                    break;
                }
                sim.apply(dt, channel);
                if cfg.recording == Recording::EveryEvent {
                    traj.push(sim.time(), sim.state());
                }
            }
        }
    }
    if cfg.recording == Recording::FinalOnly {
        traj.push(cfg.t_max, sim.state());
    }
    traj.event_count = sim.event_count();
    Ok(traj)
}

/// Scaled path `Z^N = counts / N`, piecewise constant between records.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaledTrajectory {
    pub ell: usize,
    pub times: Vec<f64>,
    values: Vec<f64>,
    pub valid_until: f64,
}

impl ScaledTrajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Stacked row `[s_1..s_ell, i_1..i_ell]`.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[k * 2 * self.ell..(k + 1) * 2 * self.ell]
    }

    pub fn state(&self, k: usize) -> ContinuousState {
        ContinuousState::from_slice(self.row(k))
    }

    /// Right-continuous evaluation: the last record at or before `t`.
    pub fn at(&self, t: f64) -> Option<&[f64]> {
        if t < self.times.first().copied()? || t > self.valid_until {
            return None;
        }
        let k = self.times.partition_point(|&r| r <= t);
        Some(self.row(k - 1))
    }
}

/// Divides every count by `n`.
pub fn scale(traj: &DiscreteTrajectory, n: u64) -> ScaledTrajectory {
    let nf = n as f64;
    ScaledTrajectory {
        ell: traj.ell,
        times: traj.times.clone(),
        values: traj.counts.iter().map(|&c| c as f64 / nf).collect(),
        valid_until: traj.valid_until(),
    }
}
