//! EM dictionary learning under multiple-instance labels.
//!
//! Every instance is modelled as a sparse combination of `T` target atoms and
//! `M` background atoms. Background atoms are shared by both bag classes;
//! target atoms may only appear in positive bags, gated by a latent indicator
//! whose posterior is estimated in the E-step. The M-step updates the
//! dictionary atom-by-atom in closed form and refreshes the sparse codes with
//! iterative shrinkage-thresholding.

mod atoms;
mod coding;
mod estep;
mod learner;
mod objective;

pub use atoms::{update_background_atom, update_target_atom, AtomUpdate};
pub use coding::{
    alpha_gradient, code_step_negative, code_step_positive, ista_full, ista_negative, soft_threshold,
    step_length,
};
pub use estep::{e_step, e_step_all};
pub(crate) use coding::lasso_step;
pub use learner::{fit, FitResult, IterationReport, Learner};
pub use objective::{adaptive_gamma, objective, Discriminative};

use nalgebra::{DMatrix, DVector, DVectorView};

use crate::signal::Bag;
use crate::{Error, Result};

/// `T` target atoms and `M` background atoms, stored as `d x T` and `d x M` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    target: DMatrix<f64>,
    background: DMatrix<f64>,
}

impl Dictionary {
    pub fn new(target: DMatrix<f64>, background: DMatrix<f64>) -> Result<Self> {
        if target.nrows() != background.nrows() {
            return Err(Error::DimensionMismatch {
                expected: target.nrows(),
                actual: background.nrows(),
                context: "background atom length",
            });
        }
        if target.ncols() == 0 || background.ncols() == 0 || target.nrows() == 0 {
            return Err(Error::param("dictionary needs at least one target and one background atom"));
        }
        let dict = Self { target, background };
        if dict.atoms().any(|a| a.norm() == 0.0) {
            return Err(Error::ZeroNorm);
        }
        Ok(dict)
    }

    /// Same as [`Dictionary::new`] with every atom scaled to unit norm.
    pub fn normalized(target: DMatrix<f64>, background: DMatrix<f64>) -> Result<Self> {
        let mut dict = Self::new(target, background)?;
        for mut c in dict.target.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        for mut c in dict.background.column_iter_mut() {
            let n = c.norm();
            c /= n;
        }
        Ok(dict)
    }

    pub fn dim(&self) -> usize {
        self.target.nrows()
    }

    pub fn n_target(&self) -> usize {
        self.target.ncols()
    }

    pub fn n_background(&self) -> usize {
        self.background.ncols()
    }

    pub fn target(&self) -> &DMatrix<f64> {
        &self.target
    }

    pub fn background(&self) -> &DMatrix<f64> {
        &self.background
    }

    pub fn target_atom(&self, t: usize) -> DVectorView<'_, f64> {
        self.target.column(t)
    }

    pub fn background_atom(&self, k: usize) -> DVectorView<'_, f64> {
        self.background.column(k)
    }

    /// `[D+ D-]`.
    pub fn full(&self) -> DMatrix<f64> {
        let (d, t, m) = (self.dim(), self.n_target(), self.n_background());
        let mut full = DMatrix::zeros(d, t + m);
        full.columns_mut(0, t).copy_from(&self.target);
        full.columns_mut(t, m).copy_from(&self.background);
        full
    }

    fn atoms(&self) -> impl Iterator<Item = DVectorView<'_, f64>> {
        self.target
            .column_iter()
            .chain(self.background.column_iter())
    }

    /// Replace target atom `t`, normalising it to unit length.
    pub fn set_target_atom(&mut self, t: usize, atom: &DVector<f64>) -> Result<()> {
        let n = atom.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.target.set_column(t, &(atom / n));
        Ok(())
    }

    /// Replace background atom `k`, normalising it to unit length.
    pub fn set_background_atom(&mut self, k: usize, atom: &DVector<f64>) -> Result<()> {
        let n = atom.norm();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::ZeroNorm);
        }
        self.background.set_column(k, &(atom / n));
        Ok(())
    }

    pub(crate) fn check_dim(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: len,
                context: "instance length vs dictionary",
            });
        }
        Ok(())
    }
}

/// Per-instance sparse weights split into the target and background blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub target: DVector<f64>,
    pub background: DVector<f64>,
}

impl SparseCode {
    pub fn zeros(n_target: usize, n_background: usize) -> Self {
        Self {
            target: DVector::zeros(n_target),
            background: DVector::zeros(n_background),
        }
    }

    /// `[alpha+; alpha-]`.
    pub fn stacked(&self) -> DVector<f64> {
        let t = self.target.len();
        let mut v = DVector::zeros(t + self.background.len());
        v.rows_mut(0, t).copy_from(&self.target);
        v.rows_mut(t, self.background.len()).copy_from(&self.background);
        v
    }

    pub fn from_stacked(v: &DVector<f64>, n_target: usize) -> Self {
        Self {
            target: v.rows(0, n_target).into_owned(),
            background: v.rows(n_target, v.len() - n_target).into_owned(),
        }
    }
}

/// Learner hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FumiParams {
    /// Number of target atoms `T`.
    pub n_target: usize,
    /// Number of background atoms `M`.
    pub n_background: usize,
    /// L1 sparsity weight.
    pub lambda: f64,
    /// Scale of the discriminative penalty.
    pub big_gamma: f64,
    /// E-step scale.
    pub beta: f64,
    /// Weight of positive-bag instances; `None` means `N- / N+`.
    pub psi: Option<f64>,
    /// Code updates per EM iteration.
    pub inner_iters: usize,
    pub max_em_iters: usize,
    /// Stop when no atom moves by more than this (L2).
    pub tol: f64,
}

impl Default for FumiParams {
    /// The individual-subject setting: `T = M = 3`, `lambda = Gamma = 5e-3`, `beta = 90`.
    fn default() -> Self {
        Self {
            n_target: 3,
            n_background: 3,
            lambda: 5e-3,
            big_gamma: 5e-3,
            beta: 90.0,
            psi: None,
            inner_iters: 5,
            max_em_iters: 100,
            tol: 1e-5,
        }
    }
}

impl FumiParams {
    /// The pooled multi-subject setting: `T = M = 9`, `lambda = 1e-3`, `beta = 120`.
    pub fn batch() -> Self {
        Self {
            n_target: 9,
            n_background: 9,
            lambda: 1e-3,
            beta: 120.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_target < 1 || self.n_background < 1 {
            return Err(Error::param("need at least one target and one background atom"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::param("lambda must be >= 0"));
        }
        if !(self.big_gamma >= 0.0 && self.big_gamma.is_finite()) {
            return Err(Error::param("Gamma must be >= 0"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta must be > 0"));
        }
        if let Some(psi) = self.psi {
            if !(psi > 0.0 && psi.is_finite()) {
                return Err(Error::param("psi must be > 0"));
            }
        }
        if self.inner_iters < 1 {
            return Err(Error::param("inner_iters must be >= 1"));
        }
        if !(self.tol >= 0.0) {
            return Err(Error::param("tol must be >= 0"));
        }
        Ok(())
    }
}

/// Posterior probability that each instance carries the target.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPosteriors {
    pub p_target: Vec<f64>,
}

impl LatentPosteriors {
    pub fn p_nontarget(&self, i: usize) -> f64 {
        1.0 - self.p_target[i]
    }
}

/// Instances flattened out of their bags, columns of a `d x N` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSet {
    x: DMatrix<f64>,
    positive: Vec<bool>,
    psi: f64,
}

impl TrainingSet {
    pub fn from_bags(bags: &[Bag], psi: Option<f64>) -> Result<Self> {
        let d = bags
            .iter()
            .flat_map(|b| b.instances.first())
            .map(|i| i.features.len())
            .next()
            .ok_or_else(|| Error::InsufficientData("no instances".into()))?;
        let columns: Vec<(&DVector<f64>, bool)> = bags
            .iter()
            .flat_map(|b| b.instances.iter().map(move |i| (&i.features, b.is_positive())))
            .collect();
        if let Some((bad, _)) = columns.iter().find(|(f, _)| f.len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: bad.len(),
                context: "instance length",
            });
        }
        let x = DMatrix::from_fn(d, columns.len(), |r, c| columns[c].0[r]);
        let positive = columns.iter().map(|(_, p)| *p).collect();
        Self::new(x, positive, psi)
    }

    pub fn new(x: DMatrix<f64>, positive: Vec<bool>, psi: Option<f64>) -> Result<Self> {
        if x.ncols() != positive.len() {
            return Err(Error::DimensionMismatch {
                expected: x.ncols(),
                actual: positive.len(),
                context: "label count",
            });
        }
        let n_pos = positive.iter().filter(|&&p| p).count();
        let n_neg = positive.len() - n_pos;
        let psi = match psi {
            Some(p) => p,
            None if n_pos > 0 && n_neg > 0 => n_neg as f64 / n_pos as f64,
            None => 1.0,
        };
        Ok(Self { x, positive, psi })
    }

    pub fn len(&self) -> usize {
        self.positive.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positive.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.nrows()
    }

    pub fn instance(&self, i: usize) -> DVectorView<'_, f64> {
        self.x.column(i)
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn is_positive(&self, i: usize) -> bool {
        self.positive[i]
    }

    pub fn n_positive(&self) -> usize {
        self.positive.iter().filter(|&&p| p).count()
    }

    pub fn n_negative(&self) -> usize {
        self.len() - self.n_positive()
    }

    pub fn psi(&self) -> f64 {
        self.psi
    }

    /// `psi` for positive-bag instances, 1 otherwise.
    pub fn weight(&self, i: usize) -> f64 {
        if self.positive[i] {
            self.psi
        } else {
            1.0
        }
    }

    /// Indices of the negative-bag instances.
    pub fn negatives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| !self.positive[i])
    }

    /// Indices of the positive-bag instances.
    pub fn positives(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.positive[i])
    }
}
