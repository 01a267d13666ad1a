//! Dense linear algebra used by the threshold and equilibrium analysis.

use nalgebra::{Complex, DMatrix, DVector, Schur};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("matrix is singular (or numerically so)")]
    Singular,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("eigenvalue iteration did not converge: {0}")]
    NoConvergence(String),
}

/// Outcome of the power iteration on a nonnegative matrix.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerIteration {
    pub value: f64,
    /// Unit-sum Perron vector estimate.
    pub vector: Vec<f64>,
    pub iterations: usize,
    /// Width of the final Collatz-Wielandt bracket `max_i (Mx)_i/x_i - min_i (Mx)_i/x_i`.
    pub bracket: f64,
    pub converged: bool,
}

/// Spectral radius of a nonnegative matrix by power iteration.
///
/// Convergence is declared when the Collatz-Wielandt bounds
/// `min_i (Mx)_i/x_i <= rho <= max_i (Mx)_i/x_i` are within `rel_tol * rho`
/// of each other. That only happens for a strictly positive iterate; for a
/// reducible or slowly mixing matrix the iteration runs out and reports
/// `converged = false`.
pub fn power_iteration(m: &DMatrix<f64>, rel_tol: f64, max_iter: usize) -> PowerIteration {
    let n = m.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut value = 0.0;
    let mut bracket = f64::INFINITY;
    for it in 1..=max_iter {
        let y = m * &x;
        let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
        for (yi, xi) in y.iter().zip(x.iter()) {
            if *xi > 0.0 {
                let r = yi / xi;
                lo = lo.min(r);
                hi = hi.max(r);
            } else {
                lo = 0.0;
            }
        }
        let norm: f64 = y.iter().sum();
        if norm <= 0.0 || !norm.is_finite() {
            return PowerIteration {
                value: 0.0,
                vector: x.iter().copied().collect(),
                iterations: it,
                bracket: 0.0,
                converged: norm == 0.0,
            };
        }
        value = 0.5 * (lo + hi);
        bracket = hi - lo;
        x = y / norm;
        if bracket <= rel_tol * value {
            return PowerIteration {
                value,
                vector: x.iter().copied().collect(),
                iterations: it,
                bracket,
                converged: true,
            };
        }
    }
    PowerIteration {
        value,
        vector: x.iter().copied().collect(),
        iterations: max_iter,
        bracket,
        converged: false,
    }
}

/// All eigenvalues of a real square matrix via the real Schur form
/// (Hessenberg reduction followed by shifted QR sweeps).
pub fn eigenvalues(m: &DMatrix<f64>) -> Result<Vec<Complex<f64>>, LinalgError> {
    ensure_square(m)?;
    if m.nrows() == 0 {
        return Ok(Vec::new());
    }
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000)
        .ok_or_else(|| LinalgError::NoConvergence("Schur decomposition".into()))?;
    Ok(schur.complex_eigenvalues().iter().copied().collect())
}

/// Largest real part over the spectrum, from the characteristic polynomial.
/// Only defined for 1x1 and 2x2 matrices.
pub fn stability_modulus_closed_form(m: &DMatrix<f64>) -> Option<f64> {
    match (m.nrows(), m.ncols()) {
        (1, 1) => Some(m[(0, 0)]),
        (2, 2) => {
            let tr = m[(0, 0)] + m[(1, 1)];
            let det = m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)];
            let disc = tr * tr / 4.0 - det;
            Some(tr / 2.0 + disc.max(0.0).sqrt())
        }
        _ => None,
    }
}

pub fn ensure_square(m: &DMatrix<f64>) -> Result<(), LinalgError> {
    if m.nrows() != m.ncols() {
        return Err(LinalgError::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(())
}

/// Solves `m x = rhs` by LU with partial pivoting.
pub fn solve(m: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>, LinalgError> {
    ensure_square(m)?;
    let x = m.clone().lu().solve(rhs).ok_or(LinalgError::Singular)?;
    if x.iter().all(|v| v.is_finite()) {
        Ok(x)
    } else {
        Err(LinalgError::Singular)
    }
}

/// Inverse by LU, column by column.
pub fn inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>, LinalgError> {
    ensure_square(m)?;
    let n = m.nrows();
    let lu = m.clone().lu();
    let mut inv = DMatrix::zeros(n, n);
    for k in 0..n {
        let mut e = DVector::zeros(n);
        e[k] = 1.0;
        let col = lu.solve(&e).ok_or(LinalgError::Singular)?;
        if !col.iter().all(|v| v.is_finite()) {
            return Err(LinalgError::Singular);
        }
        inv.set_column(k, &col);
    }
    Ok(inv)
}

/// Null vector of a rank-`(n-1)` matrix, normalised so its entries sum to
/// `total`. The last equation is replaced by the normalisation row.
pub fn normalized_null_vector(m: &DMatrix<f64>, total: f64) -> Result<DVector<f64>, LinalgError> {
    ensure_square(m)?;
    let n = m.nrows();
    let mut a = m.clone();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = total;
    solve(&a, &rhs)
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_on_known_matrix() {
        // eigenvalues 3 and 1
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let p = power_iteration(&m, 1e-13, 1000);
        assert!(p.converged);
        assert!((p.value - 3.0).abs() < 1e-12);
        assert!((p.vector[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_zero_matrix() {
        let p = power_iteration(&DMatrix::zeros(3, 3), 1e-12, 10);
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn closed_form_matches_schur() {
        let m = DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, -3.0, 0.5]);
        let cf = stability_modulus_closed_form(&m).unwrap();
        let ev = eigenvalues(&m).unwrap();
        let schur = ev.iter().map(|c| c.re).fold(f64::NEG_INFINITY, f64::max);
        assert!((cf - schur).abs() < 1e-12);
        assert!((cf - (-0.25)).abs() < 1e-12);
    }

    #[test]
    fn null_vector_of_laplacian() {
        let d = DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0]);
        let v = normalized_null_vector(&d, 1.0).unwrap();
        for x in v.iter() {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn singular_solve() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert_eq!(
            solve(&m, &DVector::from_vec(vec![1.0, 1.0])),
            Err(LinalgError::Singular)
        );
    }
}
