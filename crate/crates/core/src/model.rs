//! Patch parameters, the mobility network and the validated model.
//!
//! A [`ValidatedModel`] can only be obtained through [`validate`] (or
//! [`validate_with_zero_rates`] for degenerate simulation studies), so every
//! engine downstream may assume a symmetric, irreducible, nonnegative
//! adjacency and finite rates.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised while building a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("adjacency is not symmetric: a[{i}][{j}] = {a_ij} but a[{j}][{i}] = {a_ji}")]
    SymmetryViolation {
        i: usize,
        j: usize,
        a_ij: f64,
        a_ji: f64,
    },
    #[error("adjacency is not irreducible: patches {component:?} are disconnected from the rest")]
    NotIrreducible { component: Vec<usize> },
    #[error("patch {patch}: {field} must be positive and finite, got {value}")]
    NonpositiveRate {
        patch: usize,
        field: &'static str,
        value: f64,
    },
    #[error("{what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("adjacency entry a[{i}][{j}] = {value} is invalid (entries must be finite, >= 0, zero on the diagonal)")]
    InvalidAdjacency { i: usize, j: usize, value: f64 },
    #[error("{field} must be finite and >= 0, got {value}")]
    InvalidDiffusion { field: &'static str, value: f64 },
    #[error("model must have at least one patch")]
    Empty,
    #[error("invalid state: {0}")]
    InvalidState(String),
}

/// Epidemic rates of a single patch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchParams {
    /// Per-capita effective contact rate.
    pub lambda: f64,
    /// Recovery rate.
    pub gamma: f64,
}

impl PatchParams {
    pub fn new(lambda: f64, gamma: f64) -> Self {
        Self { lambda, gamma }
    }
}

/// Movement graph between patches and the two diffusion coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    /// `adjacency[(i, j)]` is the degree of movement from patch `i` into patch `j`.
    pub adjacency: DMatrix<f64>,
    pub nu_s: f64,
    pub nu_i: f64,
}

impl Network {
    pub fn new(adjacency: DMatrix<f64>, nu_s: f64, nu_i: f64) -> Self {
        Self {
            adjacency,
            nu_s,
            nu_i,
        }
    }

    /// Builds a network from a row-major nested list. An empty list stands
    /// for the 1x1 zero matrix of an isolated patch.
    pub fn from_rows(rows: &[Vec<f64>], nu_s: f64, nu_i: f64) -> Result<Self, ModelError> {
        if rows.is_empty() {
            return Ok(Self::new(DMatrix::zeros(1, 1), nu_s, nu_i));
        }
        let n = rows.len();
        for row in rows {
            if row.len() != n {
                return Err(ModelError::DimensionMismatch {
                    what: "adjacency row length",
                    expected: n,
                    got: row.len(),
                });
            }
        }
        let adjacency = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
        Ok(Self::new(adjacency, nu_s, nu_i))
    }

    pub fn patch_count(&self) -> usize {
        self.adjacency.nrows()
    }

    /// Two patches joined by an edge of weight `a`.
    pub fn two_patch(a: f64, nu_s: f64, nu_i: f64) -> Self {
        Self::new(DMatrix::from_row_slice(2, 2, &[0.0, a, a, 0.0]), nu_s, nu_i)
    }

    /// Path graph `1 - 2 - ... - ell` with unit weights.
    pub fn path(ell: usize, nu_s: f64, nu_i: f64) -> Self {
        let mut adjacency = DMatrix::zeros(ell, ell);
        for j in 1..ell {
            adjacency[(j - 1, j)] = 1.0;
            adjacency[(j, j - 1)] = 1.0;
        }
        Self::new(adjacency, nu_s, nu_i)
    }

    /// Complete graph with unit weights.
    pub fn complete(ell: usize, nu_s: f64, nu_i: f64) -> Self {
        let adjacency = DMatrix::from_fn(ell, ell, |i, j| if i == j { 0.0 } else { 1.0 });
        Self::new(adjacency, nu_s, nu_i)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        let n = self.patch_count();
        (0..n)
            .map(|i| (0..n).map(|j| self.adjacency[(i, j)]).collect())
            .collect()
    }
}

/// A model whose structural assumptions have been checked.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    patches: Vec<PatchParams>,
    network: Network,
}

impl ValidatedModel {
    pub fn patches(&self) -> &[PatchParams] {
        &self.patches
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn ell(&self) -> usize {
        self.patches.len()
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.patches[j].lambda
    }

    pub fn gamma(&self, j: usize) -> f64 {
        self.patches[j].gamma
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.network.adjacency
    }

    pub fn nu_s(&self) -> f64 {
        self.network.nu_s
    }

    pub fn nu_i(&self) -> f64 {
        self.network.nu_i
    }

    pub fn has_equal_diffusion(&self) -> bool {
        self.network.nu_s == self.network.nu_i
    }

    /// Same network, new patch rates. Re-validated.
    pub fn with_patches(&self, patches: Vec<PatchParams>) -> Result<Self, ModelError> {
        validate(patches, self.network.clone())
    }

    /// Same patch rates, adjacency multiplied by `factor`.
    pub fn with_adjacency_scaled(&self, factor: f64) -> Result<Self, ModelError> {
        let mut network = self.network.clone();
        network.adjacency *= factor;
        validate(self.patches.clone(), network)
    }
}

/// Checks patch rates and network structure.
pub fn validate(patches: Vec<PatchParams>, network: Network) -> Result<ValidatedModel, ModelError> {
    validate_inner(patches, network, false)
}

/// Like [`validate`] but admits zero (never negative) contact and recovery
/// rates. Intended for degenerate simulation runs (pure migration, frozen
/// states); the threshold analysis needs strictly positive recovery rates.
pub fn validate_with_zero_rates(
    patches: Vec<PatchParams>,
    network: Network,
) -> Result<ValidatedModel, ModelError> {
    validate_inner(patches, network, true)
}

fn validate_inner(
    patches: Vec<PatchParams>,
    network: Network,
    allow_zero: bool,
) -> Result<ValidatedModel, ModelError> {
    let ell = patches.len();
    if ell == 0 {
        return Err(ModelError::Empty);
    }
    let a = &network.adjacency;
    if a.nrows() != a.ncols() {
        return Err(ModelError::DimensionMismatch {
            what: "adjacency columns",
            expected: a.nrows(),
            got: a.ncols(),
        });
    }
    if a.nrows() != ell {
        return Err(ModelError::DimensionMismatch {
            what: "adjacency size vs patch count",
            expected: ell,
            got: a.nrows(),
        });
    }
    for (j, p) in patches.iter().enumerate() {
        for (field, value) in [("lambda", p.lambda), ("gamma", p.gamma)] {
            let ok = value.is_finite() && (value > 0.0 || (allow_zero && value == 0.0));
            if !ok {
                return Err(ModelError::NonpositiveRate {
                    patch: j,
                    field,
                    value,
                });
            }
        }
    }
    for (field, value) in [("nu_s", network.nu_s), ("nu_i", network.nu_i)] {
        if !(value.is_finite() && value >= 0.0) {
            return Err(ModelError::InvalidDiffusion { field, value });
        }
    }
    for i in 0..ell {
        for j in 0..ell {
            let v = a[(i, j)];
            if !v.is_finite() || v < 0.0 || (i == j && v != 0.0) {
                return Err(ModelError::InvalidAdjacency { i, j, value: v });
            }
        }
    }
    for i in 0..ell {
        for j in (i + 1)..ell {
            if a[(i, j)] != a[(j, i)] {
                return Err(ModelError::SymmetryViolation {
                    i,
                    j,
                    a_ij: a[(i, j)],
                    a_ji: a[(j, i)],
                });
            }
        }
    }
    if let Some(component) = unreachable_from_first(a) {
        return Err(ModelError::NotIrreducible { component });
    }
    Ok(ValidatedModel { patches, network })
}

/// True iff the directed graph of nonzero entries is strongly connected.
pub fn is_irreducible(adjacency: &DMatrix<f64>) -> bool {
    if adjacency.nrows() <= 1 {
        return true;
    }
    reachable(adjacency, false).iter().all(|&r| r) && reachable(adjacency, true).iter().all(|&r| r)
}

fn reachable(a: &DMatrix<f64>, reverse: bool) -> Vec<bool> {
    let n = a.nrows();
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0]);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            let w = if reverse { a[(v, u)] } else { a[(u, v)] };
            if w != 0.0 && !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

// Returns the patches not reachable from patch 0, if any.
fn unreachable_from_first(a: &DMatrix<f64>) -> Option<Vec<usize>> {
    if a.nrows() <= 1 || is_irreducible(a) {
        return None;
    }
    let seen = reachable(a, false);
    let missing: Vec<usize> = (0..a.nrows()).filter(|&j| !seen[j]).collect();
    Some(missing)
}

/// Integer counts per patch.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DiscreteState {
    pub s: Vec<u64>,
    pub i: Vec<u64>,
}

impl DiscreteState {
    pub fn new(s: Vec<u64>, i: Vec<u64>) -> Self {
        Self { s, i }
    }

    pub fn ell(&self) -> usize {
        self.s.len()
    }

    pub fn total(&self) -> u64 {
        self.s.iter().sum::<u64>() + self.i.iter().sum::<u64>()
    }
}

/// Real-valued proportions per patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuousState {
    pub s: Vec<f64>,
    pub i: Vec<f64>,
}

impl ContinuousState {
    pub fn new(s: Vec<f64>, i: Vec<f64>) -> Self {
        Self { s, i }
    }

    pub fn ell(&self) -> usize {
        self.s.len()
    }

    pub fn mass(&self) -> f64 {
        self.s.iter().sum::<f64>() + self.i.iter().sum::<f64>()
    }

    /// Patch totals `s_j + i_j`.
    pub fn patch_totals(&self) -> Vec<f64> {
        self.s.iter().zip(&self.i).map(|(s, i)| s + i).collect()
    }

    /// Per-patch prevalence `i_j / (s_j + i_j)` (0 on empty patches).
    pub fn prevalences(&self) -> Vec<f64> {
        self.s
            .iter()
            .zip(&self.i)
            .map(|(&s, &i)| if s + i > 0.0 { i / (s + i) } else { 0.0 })
            .collect()
    }

    /// Stacked layout `[s_1..s_ell, i_1..i_ell]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(2 * self.ell());
        v.extend_from_slice(&self.s);
        v.extend_from_slice(&self.i);
        v
    }

    pub fn from_slice(z: &[f64]) -> Self {
        let ell = z.len() / 2;
        Self {
            s: z[..ell].to_vec(),
            i: z[ell..].to_vec(),
        }
    }

    /// Checks dimension, finiteness and nonnegativity.
    pub fn check(&self, ell: usize) -> Result<(), ModelError> {
        if self.s.len() != ell || self.i.len() != ell {
            return Err(ModelError::DimensionMismatch {
                what: "state length",
                expected: ell,
                got: self.s.len().max(self.i.len()),
            });
        }
        for (name, v) in [("s", &self.s), ("i", &self.i)] {
            if let Some((j, x)) = v
                .iter()
                .enumerate()
                .find(|(_, x)| !(x.is_finite() && **x >= 0.0))
            {
                return Err(ModelError::InvalidState(format!(
                    "{name}[{j}] = {x} must be finite and >= 0"
                )));
            }
        }
        Ok(())
    }

    /// L1 distance over all `2 ell` components.
    pub fn l1_distance(&self, other: &ContinuousState) -> f64 {
        self.s
            .iter()
            .zip(&other.s)
            .chain(self.i.iter().zip(&other.i))
            .map(|(a, b)| (a - b).abs())
            .sum()
    }
}

/// Matrices of the linearised and reduced dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivedMatrices {
    /// `diag(lambda_j)`
    pub b: DMatrix<f64>,
    /// `diag(gamma_j)`
    pub a_gamma: DMatrix<f64>,
    /// Mobility Laplacian, zero column sums.
    pub d: DMatrix<f64>,
    /// Generator, zero row sums; `Q = D^T`.
    pub q: DMatrix<f64>,
    /// `nu_i D - A_gamma`
    pub v: DMatrix<f64>,
}

pub fn derive_matrices(model: &ValidatedModel) -> DerivedMatrices {
    let ell = model.ell();
    let a = model.adjacency();
    let mut d = DMatrix::zeros(ell, ell);
    for i in 0..ell {
        let mut out = 0.0;
        for k in 0..ell {
            if k != i {
                out += a[(i, k)];
                d[(i, k)] = a[(i, k)];
            }
        }
        d[(i, i)] = -out;
    }
    let q = d.transpose();
    let b = DMatrix::from_diagonal(&DVector::from_iterator(
        ell,
        model.patches().iter().map(|p| p.lambda),
    ));
    let a_gamma = DMatrix::from_diagonal(&DVector::from_iterator(
        ell,
        model.patches().iter().map(|p| p.gamma),
    ));
    let v = &d * model.nu_i() - &a_gamma;
    DerivedMatrices {
        b,
        a_gamma,
        d,
        q,
        v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_patch() -> ValidatedModel {
        validate(
            vec![PatchParams::new(1.5, 1.0), PatchParams::new(2.0, 1.0)],
            Network::two_patch(1.0, 1e-4, 1e-4),
        )
        .unwrap()
    }

    #[test]
    fn single_patch_with_empty_adjacency() {
        let net = Network::from_rows(&[], 0.0, 0.0).unwrap();
        let m = validate(vec![PatchParams::new(1.5, 1.0)], net).unwrap();
        assert_eq!(m.ell(), 1);
    }

    #[test]
    fn table1_configuration_is_valid() {
        let m = two_patch();
        assert_eq!(m.ell(), 2);
        assert!(m.has_equal_diffusion());
    }

    #[test]
    fn asymmetric_pair_is_rejected() {
        let net = Network::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]], 1.0, 1.0).unwrap();
        let err = validate(vec![PatchParams::new(1.0, 1.0); 2], net).unwrap_err();
        assert!(matches!(
            err,
            ModelError::SymmetryViolation { i: 0, j: 1, .. }
        ));
    }

    #[test]
    fn disconnected_graph_is_rejected() {
        let net = Network::new(DMatrix::zeros(3, 3), 1.0, 1.0);
        let err = validate(vec![PatchParams::new(1.0, 1.0); 3], net).unwrap_err();
        assert_eq!(
            err,
            ModelError::NotIrreducible {
                component: vec![1, 2]
            }
        );
    }

    #[test]
    fn negative_and_diagonal_entries_are_rejected() {
        let neg = Network::from_rows(&[vec![0.0, -1.0], vec![-1.0, 0.0]], 1.0, 1.0).unwrap();
        assert!(matches!(
            validate(vec![PatchParams::new(1.0, 1.0); 2], neg),
            Err(ModelError::InvalidAdjacency { .. })
        ));
        let diag = Network::from_rows(&[vec![1.0, 1.0], vec![1.0, 0.0]], 1.0, 1.0).unwrap();
        assert!(matches!(
            validate(vec![PatchParams::new(1.0, 1.0); 2], diag),
            Err(ModelError::InvalidAdjacency { i: 0, j: 0, .. })
        ));
    }

    #[test]
    fn rates_are_checked() {
        let err = validate(
            vec![PatchParams::new(1.0, 1.0), PatchParams::new(-2.0, 1.0)],
            Network::two_patch(1.0, 0.1, 0.1),
        )
        .unwrap_err();
        assert!(matches!(
            err,
            ModelError::NonpositiveRate {
                patch: 1,
                field: "lambda",
                ..
            }
        ));
        assert!(validate(vec![PatchParams::new(0.0, 1.0)], Network::path(1, 0.0, 0.0)).is_err());
        assert!(validate_with_zero_rates(
            vec![PatchParams::new(0.0, 0.0)],
            Network::path(1, 0.0, 0.0)
        )
        .is_ok());
        assert!(validate_with_zero_rates(
            vec![PatchParams::new(-1.0, 0.0)],
            Network::path(1, 0.0, 0.0)
        )
        .is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let err = validate(
            vec![PatchParams::new(1.0, 1.0)],
            Network::two_patch(1.0, 0.1, 0.1),
        )
        .unwrap_err();
        assert!(matches!(err, ModelError::DimensionMismatch { .. }));
    }

    #[test]
    fn irreducibility() {
        let two = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(is_irreducible(&two));
        assert!(!is_irreducible(&DMatrix::zeros(2, 2)));
        assert!(is_irreducible(&Network::path(3, 1.0, 1.0).adjacency));
        // one-way edge: 0 -> 1 only
        let directed = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(!is_irreducible(&directed));
    }

    #[test]
    fn derived_matrices_two_patch() {
        let m = two_patch();
        let dm = derive_matrices(&m);
        assert_eq!(dm.d, DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]));
        let expected_v = DMatrix::from_row_slice(2, 2, &[-1.0001, 0.0001, 0.0001, -1.0001]);
        for (a, b) in dm.v.iter().zip(expected_v.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(dm.q, dm.d.transpose());
    }

    #[test]
    fn derived_matrices_single_patch() {
        let m = validate(vec![PatchParams::new(1.5, 1.0)], Network::path(1, 0.3, 0.3)).unwrap();
        let dm = derive_matrices(&m);
        assert_eq!(dm.d, DMatrix::from_element(1, 1, 0.0));
        assert_eq!(dm.v, DMatrix::from_element(1, 1, -1.0));
        assert_eq!(dm.b, DMatrix::from_element(1, 1, 1.5));
    }
}
