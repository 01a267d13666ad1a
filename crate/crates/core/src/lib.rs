//! Stochastic SIS epidemics on a network of patches and their
//! deterministic large-population limit.
//!
//! * [`model`]: parameters, validation, states and derived matrices.
//! * [`stochastic`]: exact direct-method simulation.
//! * [`ode`]: the limiting ODE and its integrators.
//! * [`analysis`]: `R0`, equilibria, stability and the Lyapunov vector.
//! * [`lln`]: convergence of scaled simulations to the ODE.
//! * [`config`], [`export`], [`table1`], [`cli`]: file formats and the binary.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod export;
pub mod linalg;
pub mod lln;
pub mod model;
pub mod ode;
pub mod stochastic;
pub mod table1;

pub use analysis::{
    analyze, endemic_equilibrium_equal_diffusion, lyapunov_left_vector, r0, stability_modulus,
    stationary_n, steady_state_general, AnalysisError, AnalysisReport,
};
pub use config::{parse_config, ConfigError, ParsedConfig, RunConfigFile};
pub use lln::{convergence_study, LlnStudyConfig};
pub use model::{
    validate, ContinuousState, DiscreteState, ModelError, Network, PatchParams, ValidatedModel,
};
pub use ode::{integrate, OdeConfig, OdeMethod};
pub use stochastic::{simulate, Recording, SimConfig};
