//! The EM loop: initialisation, E-step, atom updates, code sweeps, stopping.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::atoms::{update_background_atom, update_target_atom, AtomUpdate};
use super::coding::{lasso_step, positive_step};
use super::{
    e_step_all, objective, Dictionary, Discriminative, FumiParams, LatentPosteriors, SparseCode,
    TrainingSet,
};
use crate::linalg;
use crate::signal::Bag;
use crate::{Error, Result};

const WARMUP_STEPS: usize = 5;
/// Consecutive stale iterations before an atom is re-seeded.
const STALE_LIMIT: usize = 3;
/// Target seeds more similar than this (|cos|) to an earlier seed are skipped.
const SEED_MAX_COS: f64 = 0.95;

/// Final state of a fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub dictionary: Dictionary,
    pub codes: Vec<SparseCode>,
    pub posteriors: LatentPosteriors,
    /// Expected objective after each EM iteration.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub training_set: TrainingSet,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationReport {
    /// Largest L2 move of any (unit-norm) atom during the M-step.
    pub max_atom_change: f64,
    pub objective: f64,
    pub stale_atoms: usize,
}

/// Stepwise access to the EM iterations.
#[derive(Debug, Clone)]
pub struct Learner {
    set: TrainingSet,
    params: FumiParams,
    dict: Dictionary,
    codes: Vec<SparseCode>,
    post: LatentPosteriors,
    stale_target: Vec<usize>,
    stale_background: Vec<usize>,
}

/// Run the EM algorithm to convergence (or `max_em_iters`).
pub fn fit(bags: &[Bag], params: &FumiParams, seed: u64) -> Result<FitResult> {
    let mut learner = Learner::new(bags, params, seed)?;
    let mut trace = Vec::new();
    let mut converged = false;
    for _ in 0..params.max_em_iters {
        let report = learner.iterate()?;
        trace.push(report.objective);
        if report.max_atom_change < params.tol {
            converged = true;
            break;
        }
    }
    let iterations = trace.len();
    Ok(learner.into_result(trace, iterations, converged))
}

impl Learner {
    pub fn new(bags: &[Bag], params: &FumiParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if !bags.iter().any(|b| b.is_positive() && !b.is_empty()) {
            return Err(Error::NoPositiveBags);
        }
        if !bags.iter().any(|b| !b.is_positive() && !b.is_empty()) {
            return Err(Error::NoNegativeBags);
        }
        let set = TrainingSet::from_bags(bags, params.psi)?;
        Self::from_set(set, params, seed)
    }

    pub fn from_set(set: TrainingSet, params: &FumiParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if set.n_positive() == 0 {
            return Err(Error::NoPositiveBags);
        }
        if set.n_negative() == 0 {
            return Err(Error::NoNegativeBags);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let background = init_background(&set, params.n_background, &mut rng)?;
        let target = init_target(&set, &background, params, &mut rng)?;
        let dict = Dictionary::new(target, background)?;

        let (t, m) = (params.n_target, params.n_background);
        let mut learner = Self {
            codes: vec![SparseCode::zeros(t, m); set.len()],
            post: LatentPosteriors {
                p_target: vec![0.0; set.len()],
            },
            stale_target: vec![0; t],
            stale_background: vec![0; m],
            set,
            params: params.clone(),
            dict,
        };
        learner.warm_up()?;
        Ok(learner)
    }

    /// Background-only codes for everyone, then posterior-gated codes for positives.
    fn warm_up(&mut self) -> Result<()> {
        let d_bg = self.dict.background().clone();
        let eta_bg = linalg::step_length(&d_bg)?;
        let gram_bg = d_bg.transpose() * &d_bg;
        let lambda = self.params.lambda;
        let set = &self.set;
        self.codes.par_iter_mut().enumerate().for_each(|(i, code)| {
            let corr = d_bg.transpose() * set.instance(i);
            for _ in 0..WARMUP_STEPS {
                code.background = lasso_step(&gram_bg, &corr, &code.background, lambda, eta_bg);
            }
        });
        self.e_step();
        let coder = SweepCoder::new(&self.dict)?;
        let (set, post) = (&self.set, &self.post);
        let t = self.params.n_target;
        self.codes
            .par_iter_mut()
            .enumerate()
            .filter(|(i, _)| set.is_positive(*i))
            .for_each(|(i, code)| {
                let corr = &coder.full_t * set.instance(i);
                let mut a = code.stacked();
                for _ in 0..WARMUP_STEPS {
                    a = positive_step(&coder.gram, &corr, &a, t, post.p_target[i], lambda, coder.eta_full);
                }
                *code = SparseCode::from_stacked(&a, t);
            });
        Ok(())
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn codes(&self) -> &[SparseCode] {
        &self.codes
    }

    pub fn posteriors(&self) -> &LatentPosteriors {
        &self.post
    }

    pub fn training_set(&self) -> &TrainingSet {
        &self.set
    }

    pub fn params(&self) -> &FumiParams {
        &self.params
    }

    pub fn e_step(&mut self) {
        self.post = e_step_all(&self.set, &self.dict, &self.codes, self.params.beta);
    }

    /// Expected objective at the current state under a frozen penalty.
    pub fn objective(&self, penalty: &Discriminative) -> Result<f64> {
        objective(&self.set, &self.dict, &self.codes, &self.post, self.params.lambda, penalty)
    }

    /// Freeze the discriminative penalty at the current atoms (start of an M-step).
    pub fn penalty(&self) -> Result<Discriminative> {
        Discriminative::from_dictionary(&self.dict, self.params.big_gamma)
    }

    /// Update every target atom, then every background atom, each renormalised
    /// right after its update. Returns the largest atom move and the number of
    /// stale updates.
    pub fn m_step_atoms(&mut self, penalty: &Discriminative) -> Result<(f64, usize)> {
        let mut max_change = 0.0f64;
        let mut stale = 0;
        for t in 0..self.params.n_target {
            let old = self.dict.target_atom(t).into_owned();
            match update_target_atom(t, &self.set, &self.codes, &self.post, &self.dict) {
                AtomUpdate::Updated(atom) if atom.norm() > 0.0 => {
                    self.dict.set_target_atom(t, &atom)?;
                    self.stale_target[t] = 0;
                }
                _ => {
                    stale += 1;
                    self.stale_target[t] += 1;
                    if self.stale_target[t] >= STALE_LIMIT {
                        let seed = self.worst_fit(true);
                        self.dict.set_target_atom(t, &seed)?;
                        self.stale_target[t] = 0;
                    }
                }
            }
            max_change = max_change.max((self.dict.target_atom(t) - old).norm());
        }
        for k in 0..self.params.n_background {
            let old = self.dict.background_atom(k).into_owned();
            match update_background_atom(k, &self.set, &self.codes, &self.post, &self.dict, penalty) {
                AtomUpdate::Updated(atom) if atom.norm() > 0.0 => {
                    self.dict.set_background_atom(k, &atom)?;
                    self.stale_background[k] = 0;
                }
                _ => {
                    stale += 1;
                    self.stale_background[k] += 1;
                    if self.stale_background[k] >= STALE_LIMIT {
                        let seed = self.worst_fit(false);
                        self.dict.set_background_atom(k, &seed)?;
                        self.stale_background[k] = 0;
                    }
                }
            }
            max_change = max_change.max((self.dict.background_atom(k) - old).norm());
        }
        Ok((max_change, stale))
    }

    /// The instance of the given class with the largest current residual.
    fn worst_fit(&self, positive: bool) -> DVector<f64> {
        let mut best = (f64::NEG_INFINITY, 0usize);
        for i in (0..self.set.len()).filter(|&i| self.set.is_positive(i) == positive) {
            let code = &self.codes[i];
            let mut r = self.set.instance(i) - self.dict.background() * &code.background;
            if positive {
                r -= self.dict.target() * &code.target;
            }
            let n = r.norm_squared();
            if n > best.0 {
                best = (n, i);
            }
        }
        self.set.instance(best.1).into_owned()
    }

    /// One pass of code updates over every instance.
    pub fn code_sweep(&mut self) -> Result<()> {
        let coder = SweepCoder::new(&self.dict)?;
        let (set, post) = (&self.set, &self.post);
        let (t, m, lambda) = (self.params.n_target, self.params.n_background, self.params.lambda);
        self.codes.par_iter_mut().enumerate().for_each(|(i, code)| {
            let corr = &coder.full_t * set.instance(i);
            if set.is_positive(i) {
                let a = positive_step(&coder.gram, &corr, &code.stacked(), t, post.p_target[i], lambda, coder.eta_full);
                *code = SparseCode::from_stacked(&a, t);
            } else {
                let corr_bg = corr.rows(t, m).into_owned();
                code.background = lasso_step(&coder.gram_bg, &corr_bg, &code.background, lambda, coder.eta_bg);
            }
        });
        Ok(())
    }

    /// E-step, M-step (atoms then `inner_iters` code sweeps), objective.
    pub fn iterate(&mut self) -> Result<IterationReport> {
        self.e_step();
        let penalty = self.penalty()?;
        let (max_atom_change, stale_atoms) = self.m_step_atoms(&penalty)?;
        for _ in 0..self.params.inner_iters {
            self.code_sweep()?;
        }
        Ok(IterationReport {
            max_atom_change,
            objective: self.objective(&penalty)?,
            stale_atoms,
        })
    }

    pub fn into_result(self, objective_trace: Vec<f64>, iterations: usize, converged: bool) -> FitResult {
        FitResult {
            dictionary: self.dict,
            codes: self.codes,
            posteriors: self.post,
            objective_trace,
            iterations,
            converged,
            training_set: self.set,
        }
    }
}

/// Per-sweep precomputation: Gram matrices and step lengths.
struct SweepCoder {
    full_t: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_bg: DMatrix<f64>,
    eta_full: f64,
    eta_bg: f64,
}

impl SweepCoder {
    fn new(dict: &Dictionary) -> Result<Self> {
        let full = dict.full();
        let full_t = full.transpose();
        let gram = &full_t * &full;
        let (t, m) = (dict.n_target(), dict.n_background());
        let gram_bg = gram.view((t, t), (m, m)).into_owned();
        let eta_full = 1.0 / linalg::largest_eigenvalue(&gram, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
        let eta_bg = 1.0 / linalg::largest_eigenvalue(&gram_bg, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
        Ok(Self {
            full_t,
            gram,
            gram_bg,
            eta_full,
            eta_bg,
        })
    }
}

/// Farthest-point sampling of negative instances on `1 - |cos|`, from a random start.
fn init_background(set: &TrainingSet, m: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let candidates: Vec<usize> = set.negatives().filter(|&i| set.instance(i).norm() > 0.0).collect();
    if candidates.len() < m {
        return Err(Error::InsufficientData(format!(
            "need at least {m} non-zero negative instances, found {}",
            candidates.len()
        )));
    }
    let unit: Vec<DVector<f64>> = candidates.iter().map(|&i| set.instance(i).normalize()).collect();
    let mut chosen = vec![rng.random_range(0..unit.len())];
    let mut min_dist: Vec<f64> = unit
        .iter()
        .map(|u| 1.0 - u.dot(&unit[chosen[0]]).abs())
        .collect();
    while chosen.len() < m {
        let (next, _) = min_dist
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |best, (i, &d)| if d > best.1 { (i, d) } else { best });
        chosen.push(next);
        for (d, u) in min_dist.iter_mut().zip(&unit) {
            *d = d.min(1.0 - u.dot(&unit[next]).abs());
        }
    }
    let d = set.dim();
    Ok(DMatrix::from_fn(d, m, |r, c| unit[chosen[c]][r]))
}

/// Positive instances with the largest background-coding residual, background
/// span projected out, pairwise-distinct, unit norm.
fn init_target(set: &TrainingSet, background: &DMatrix<f64>, params: &FumiParams, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let eta = linalg::step_length(background)?;
    let gram = background.transpose() * background;
    let gram_inv = gram
        .clone()
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::param(e.to_string()))?;
    let positives: Vec<usize> = set.positives().collect();
    let mut scored: Vec<(f64, usize)> = positives
        .par_iter()
        .map(|&i| {
            let x = set.instance(i);
            let corr = background.transpose() * x;
            let mut a = DVector::zeros(background.ncols());
            for _ in 0..WARMUP_STEPS {
                a = lasso_step(&gram, &corr, &a, params.lambda, eta);
            }
            ((x - background * a).norm_squared(), i)
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let project = |x: DVector<f64>| -> DVector<f64> {
        let coef = &gram_inv * (background.transpose() * &x);
        x - background * coef
    };
    let mut atoms: Vec<DVector<f64>> = Vec::with_capacity(params.n_target);
    for &(_, i) in &scored {
        if atoms.len() == params.n_target {
            break;
        }
        let r = project(set.instance(i).into_owned());
        let n = r.norm();
        if n <= 1e-12 {
            continue;
        }
        let r = r / n;
        if atoms.iter().all(|a| a.dot(&r).abs() < SEED_MAX_COS) {
            atoms.push(r);
        }
    }
    // degenerate data: fill up with random positives
    while atoms.len() < params.n_target {
        let i = positives[rng.random_range(0..positives.len())];
        let x = set.instance(i).into_owned();
        let n = x.norm();
        if n == 0.0 {
            return Err(Error::InsufficientData("positive instances are all zero".into()));
        }
        atoms.push(x / n);
    }
    Ok(DMatrix::from_columns(&atoms))
}
