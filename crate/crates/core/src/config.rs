//! JSON run configuration.
//!
//! ```json
//! {
//!   "model": {
//!     "patches": [{"lambda": 1.5, "gamma": 1.0}, {"lambda": 2.0, "gamma": 1.0}],
//!     "adjacency": [[0, 1], [1, 0]],
//!     "nu_s": 0.0001,
//!     "nu_i": 0.0001
//!   },
//!   "initial": {"s": [0.45, 0.45], "i": [0.05, 0.05]},
//!   "sim": {"population_n": 1000, "t_max": 10, "seed": 42, "recording": "grid:0.1"},
//!   "ode": {"t_max": 100, "method": {"rk45_adaptive": {"rel_tol": 1e-8, "abs_tol": 1e-10}}},
//!   "lln": {"populations": [100, 1000], "replicates": 20, "t_max": 10, "master_seed": 7}
//! }
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{validate, ContinuousState, ModelError, Network, PatchParams, ValidatedModel};
use crate::ode::OdeMethod;
use crate::stochastic::Recording;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid model: {0}")]
    Validation(#[from] ModelError),
    #[error("invalid {field}: {message}")]
    Invalid { field: String, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub patches: Vec<PatchParams>,
    #[serde(default)]
    pub adjacency: Vec<Vec<f64>>,
    pub nu_s: f64,
    pub nu_i: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub population_n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// `every`, `final` or `grid:<dt>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recording: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<OdeMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_dt: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlnSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub populations: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replicates: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub model: ModelSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<InitialSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ode: Option<OdeSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lln: Option<LlnSection>,
}

impl RunConfigFile {
    pub fn from_model(model: &ValidatedModel) -> Self {
        Self {
            model: ModelSection {
                patches: model.patches().to_vec(),
                adjacency: model.network().rows(),
                nu_s: model.nu_s(),
                nu_i: model.nu_i(),
            },
            initial: None,
            sim: None,
            ode: None,
            lln: None,
        }
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    /// SHA-256 of the compact canonical serialisation.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }
}

/// A parsed and validated configuration.
#[derive(Debug, Clone)]
pub struct ParsedConfig {
    pub raw: RunConfigFile,
    pub model: ValidatedModel,
    pub initial: Option<ContinuousState>,
    /// Total mass used by the equilibrium solvers (default 1).
    pub mass: f64,
    pub config_hash: String,
}

pub fn parse_config(path: impl AsRef<Path>) -> Result<ParsedConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<ParsedConfig, ConfigError> {
    let raw: RunConfigFile = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    from_raw(raw)
}

pub fn from_raw(raw: RunConfigFile) -> Result<ParsedConfig, ConfigError> {
    let m = &raw.model;
    let network = Network::from_rows(&m.adjacency, m.nu_s, m.nu_i)?;
    let model = validate(m.patches.clone(), network)?;
    let mass = raw.initial.as_ref().and_then(|i| i.mass).unwrap_or(1.0);
    if !(mass.is_finite() && mass > 0.0) {
        return Err(ConfigError::Invalid {
            field: "initial.mass".into(),
            message: format!("must be > 0, got {mass}"),
        });
    }
    let initial = match &raw.initial {
        None => None,
        Some(sec) => {
            let st = ContinuousState::new(sec.s.clone(), sec.i.clone());
            st.check(model.ell()).map_err(|e| ConfigError::Invalid {
                field: "initial".into(),
                message: e.to_string(),
            })?;
            let total = st.mass();
            if (total - mass).abs() > 1e-6 * mass {
                return Err(ConfigError::Invalid {
                    field: "initial".into(),
                    message: format!("s and i sum to {total}, expected mass {mass}"),
                });
            }
            Some(st)
        }
    };
    if let Some(rec) = raw.sim.as_ref().and_then(|s| s.recording.as_deref()) {
        parse_recording(rec).map_err(|message| ConfigError::Invalid {
            field: "sim.recording".into(),
            message,
        })?;
    }
    let config_hash = raw.hash();
    Ok(ParsedConfig {
        raw,
        model,
        initial,
        mass,
        config_hash,
    })
}

/// Parses `every`, `final` or `grid:<dt>`.
pub fn parse_recording(spec: &str) -> Result<Recording, String> {
    match spec {
        "every" => Ok(Recording::EveryEvent),
        "final" => Ok(Recording::FinalOnly),
        other => {
            let dt = other
                .strip_prefix("grid:")
                .ok_or_else(|| format!("expected every, final or grid:<dt>, got {other:?}"))?;
            let dt: f64 = dt.parse().map_err(|_| format!("bad grid spacing {dt:?}"))?;
            if dt.is_finite() && dt > 0.0 {
                Ok(Recording::Grid(dt))
            } else {
                Err(format!("grid spacing must be > 0, got {dt}"))
            }
        }
    }
}

pub fn recording_label(r: &Recording) -> String {
    match r {
        Recording::EveryEvent => "every".into(),
        Recording::FinalOnly => "final".into(),
        Recording::Grid(dt) => format!("grid:{dt}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str =
        r#"{"model": {"patches": [{"lambda": 1.5, "gamma": 1}], "nu_s": 0, "nu_i": 0}}"#;

    #[test]
    fn minimal_single_patch() {
        let p = parse_config_str(MINIMAL).unwrap();
        assert_eq!(p.model.ell(), 1);
        assert_eq!(p.mass, 1.0);
        assert!(p.initial.is_none());
    }

    #[test]
    fn two_patch_topology() {
        let text = r#"{
            "model": {"patches": [{"lambda": 1.5, "gamma": 1}, {"lambda": 2, "gamma": 1}],
                      "adjacency": [[0, 1], [1, 0]], "nu_s": 1e-4, "nu_i": 1e-4},
            "initial": {"s": [0.45, 0.45], "i": [0.05, 0.05]}
        }"#;
        let p = parse_config_str(text).unwrap();
        assert_eq!(p.model.adjacency()[(0, 1)], 1.0);
        assert_eq!(p.initial.unwrap().i, vec![0.05, 0.05]);
    }

    #[test]
    fn negative_lambda_names_patch() {
        let text = r#"{"model": {"patches": [{"lambda": 1, "gamma": 1}, {"lambda": -1, "gamma": 1}],
                      "adjacency": [[0, 1], [1, 0]], "nu_s": 0, "nu_i": 0}}"#;
        let err = parse_config_str(text).unwrap_err();
        assert!(err.to_string().contains("patch 1"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected_with_position() {
        let text = "{\"model\": {\"patches\": [], \"nu_s\": 0, \"nu_i\": 0, \"bogus\": 1}}";
        match parse_config_str(text).unwrap_err() {
            ConfigError::Parse { line, column, .. } => {
                assert_eq!(line, 1);
                assert!(column > 0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn initial_mass_mismatch() {
        let text = r#"{"model": {"patches": [{"lambda": 1.5, "gamma": 1}], "nu_s": 0, "nu_i": 0},
                       "initial": {"s": [0.5], "i": [0.1]}}"#;
        assert!(matches!(
            parse_config_str(text),
            Err(ConfigError::Invalid { .. })
        ));
        let ok = r#"{"model": {"patches": [{"lambda": 1.5, "gamma": 1}], "nu_s": 0, "nu_i": 0},
                       "initial": {"s": [0.5], "i": [0.1], "mass": 0.6}}"#;
        assert_eq!(parse_config_str(ok).unwrap().mass, 0.6);
    }

    #[test]
    fn recording_specs() {
        assert_eq!(parse_recording("every"), Ok(Recording::EveryEvent));
        assert_eq!(parse_recording("final"), Ok(Recording::FinalOnly));
        assert_eq!(parse_recording("grid:0.5"), Ok(Recording::Grid(0.5)));
        assert!(parse_recording("grid:-1").is_err());
        assert!(parse_recording("sometimes").is_err());
    }

    #[test]
    fn echo_round_trip() {
        let text = r#"{
            "model": {"patches": [{"lambda": 1.5, "gamma": 1}, {"lambda": 2, "gamma": 0.3}],
                      "adjacency": [[0, 0.7], [0.7, 0]], "nu_s": 0.1, "nu_i": 1e-4},
            "initial": {"s": [0.4, 0.5], "i": [0.05, 0.05]},
            "ode": {"method": {"rk4_fixed": {"dt": 0.01}}}
        }"#;
        let p = parse_config_str(text).unwrap();
        let again = parse_config_str(&p.raw.to_json_pretty()).unwrap();
        assert_eq!(p.model, again.model);
        assert_eq!(p.raw, again.raw);
        assert_eq!(p.config_hash, again.config_hash);
    }
}
