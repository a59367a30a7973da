//! Proximal-gradient (ISTA) sparse coding under the expected objective.

use nalgebra::{DMatrix, DVector, DVectorView};

use super::{Dictionary, SparseCode};
use crate::Result;

/// Entrywise soft-thresholding `sign(v) * max(|v| - thresh, 0)`.
pub fn soft_threshold(v: &DVector<f64>, thresh: &[f64]) -> DVector<f64> {
    assert_eq!(v.len(), thresh.len(), "one threshold per entry");
    DVector::from_iterator(v.len(), v.iter().zip(thresh).map(|(&x, &t)| shrink(x, t)))
}

#[inline]
pub(crate) fn shrink(x: f64, t: f64) -> f64 {
    x.signum() * (x.abs() - t).max(0.0)
}

/// `1 / lambda_max(D^T D)`.
pub fn step_length(d: &DMatrix<f64>) -> Result<f64> {
    crate::linalg::step_length(d)
}

/// Smooth-part gradient from precomputed `gram = D^T D` and `corr = D^T x`.
fn smooth_gradient(gram: &DMatrix<f64>, corr: &DVector<f64>, alpha: &DVector<f64>, n_target: usize, p: f64) -> DVector<f64> {
    let n = alpha.len();
    let m = n - n_target;
    let (a_t, a_b) = (alpha.rows(0, n_target), alpha.rows(n_target, m));
    let g_tt = gram.view((0, 0), (n_target, n_target));
    let g_tb = gram.view((0, n_target), (n_target, m));
    let g_bt = gram.view((n_target, 0), (m, n_target));
    let g_bb = gram.view((n_target, n_target), (m, m));

    let mut grad = DVector::zeros(n);
    let gt = (g_tt * a_t + g_tb * a_b - corr.rows(0, n_target)) * p;
    let gb = g_bt * a_t * p + g_bb * a_b - corr.rows(n_target, m);
    grad.rows_mut(0, n_target).copy_from(&gt);
    grad.rows_mut(n_target, m).copy_from(&gb);
    grad
}

/// Gradient of the expected reconstruction term (L1 excluded) for a
/// positive-bag instance with target posterior `p_target`:
/// `-[p D+, D-]^T x + (p D^T D + (1 - p) [0, D-]^T [0, D-]) alpha`.
pub fn alpha_gradient(x: DVectorView<'_, f64>, dict: &Dictionary, code: &SparseCode, p_target: f64) -> DVector<f64> {
    let full = dict.full();
    let gram = full.transpose() * &full;
    let corr = full.transpose() * x;
    smooth_gradient(&gram, &corr, &code.stacked(), dict.n_target(), p_target)
}

/// One ISTA step for a positive-bag instance. Target entries are shrunk by
/// `eta * lambda * p_target`, background entries by `eta * lambda`.
pub fn code_step_positive(
    x: DVectorView<'_, f64>,
    dict: &Dictionary,
    code: &SparseCode,
    p_target: f64,
    lambda: f64,
    eta: f64,
) -> SparseCode {
    let full = dict.full();
    let gram = full.transpose() * &full;
    let corr = full.transpose() * x;
    let next = positive_step(&gram, &corr, &code.stacked(), dict.n_target(), p_target, lambda, eta);
    SparseCode::from_stacked(&next, dict.n_target())
}

pub(crate) fn positive_step(
    gram: &DMatrix<f64>,
    corr: &DVector<f64>,
    alpha: &DVector<f64>,
    n_target: usize,
    p: f64,
    lambda: f64,
    eta: f64,
) -> DVector<f64> {
    let grad = smooth_gradient(gram, corr, alpha, n_target, p);
    let mut v = alpha - grad * eta;
    for (j, x) in v.iter_mut().enumerate() {
        let t = if j < n_target { eta * lambda * p } else { eta * lambda };
        *x = shrink(*x, t);
    }
    v
}

/// One ISTA step on the background block only; `eta` should be
/// `1 / lambda_max(D-^T D-)`. Target weights of negative-bag instances stay 0.
pub fn code_step_negative(
    x: DVectorView<'_, f64>,
    d_bg: &DMatrix<f64>,
    code_bg: &DVector<f64>,
    lambda: f64,
    eta: f64,
) -> DVector<f64> {
    let gram = d_bg.transpose() * d_bg;
    let corr = d_bg.transpose() * x;
    lasso_step(&gram, &corr, code_bg, lambda, eta)
}

/// Plain lasso ISTA step `S_{eta lambda}(alpha - eta (G alpha - c))`.
pub(crate) fn lasso_step(gram: &DMatrix<f64>, corr: &DVector<f64>, alpha: &DVector<f64>, lambda: f64, eta: f64) -> DVector<f64> {
    let mut v = alpha - (gram * alpha - corr) * eta;
    v.iter_mut().for_each(|x| *x = shrink(*x, eta * lambda));
    v
}

/// `iters` lasso ISTA steps of `x` on the background atoms, from `init` (or zero).
pub fn ista_negative(
    x: DVectorView<'_, f64>,
    d_bg: &DMatrix<f64>,
    lambda: f64,
    eta: f64,
    iters: usize,
    init: Option<&DVector<f64>>,
) -> DVector<f64> {
    let gram = d_bg.transpose() * d_bg;
    let corr = d_bg.transpose() * x;
    let mut a = init.cloned().unwrap_or_else(|| DVector::zeros(d_bg.ncols()));
    for _ in 0..iters {
        a = lasso_step(&gram, &corr, &a, lambda, eta);
    }
    a
}

/// `iters` lasso ISTA steps of `x` on the full dictionary `[D+ D-]`.
pub fn ista_full(
    x: DVectorView<'_, f64>,
    full: &DMatrix<f64>,
    lambda: f64,
    eta: f64,
    iters: usize,
    init: &DVector<f64>,
) -> DVector<f64> {
    let gram = full.transpose() * full;
    let corr = full.transpose() * x;
    let mut a = init.clone();
    for _ in 0..iters {
        a = lasso_step(&gram, &corr, &a, lambda, eta);
    }
    a
}
