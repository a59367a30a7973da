//! Small dense linear-algebra helpers.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

pub const POWER_ITER_TOL: f64 = 1e-10;
pub const POWER_ITER_MAX: usize = 1000;

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power iteration.
///
/// Stops when the Rayleigh quotient changes by less than `tol` (relative).
/// Nearly repeated top eigenvalues can stall the iteration; after `max_iter`
/// steps the dense symmetric eigensolver decides.
pub fn largest_eigenvalue(a: &DMatrix<f64>, tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.nrows();
    if n == 0 || a.ncols() != n {
        return Err(Error::param("power iteration needs a non-empty square matrix"));
    }
    // deterministic start with components in every direction
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.1 * ((i * 7919) % 13) as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = a * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return Ok(0.0);
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs() {
            return Ok(next);
        }
        lambda = next;
    }
    Ok(a.clone().symmetric_eigen().eigenvalues.max().max(0.0))
}

/// `1 / lambda_max(D^T D)`: the ISTA step length for dictionary `d`.
pub fn step_length(d: &DMatrix<f64>) -> Result<f64> {
    let gram = d.transpose() * d;
    let lmax = largest_eigenvalue(&gram, POWER_ITER_TOL, POWER_ITER_MAX)?;
    if lmax <= 0.0 {
        return Err(Error::param("step length undefined for a zero dictionary"));
    }
    Ok(1.0 / lmax)
}
