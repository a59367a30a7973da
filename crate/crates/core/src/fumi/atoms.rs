//! Closed-form block-coordinate atom updates (codes and posteriors fixed).

use nalgebra::DVector;

use super::{Dictionary, Discriminative, LatentPosteriors, SparseCode, TrainingSet};

/// Denominators at or below this are treated as empty support.
const MIN_DENOMINATOR: f64 = 1e-14;

/// Result of a single atom update, before renormalisation.
#[derive(Debug, Clone, PartialEq)]
pub enum AtomUpdate {
    Updated(DVector<f64>),
    /// The atom had no weighted support; it is left unchanged.
    Stale,
}

impl AtomUpdate {
    pub fn is_stale(&self) -> bool {
        matches!(self, AtomUpdate::Stale)
    }

    pub fn into_atom(self) -> Option<DVector<f64>> {
        match self {
            AtomUpdate::Updated(a) => Some(a),
            AtomUpdate::Stale => None,
        }
    }
}

/// Minimiser of the expected objective over target atom `t`:
/// a posterior-weighted regression of the positive-bag residuals (with atom
/// `t` removed) on the weights `alpha_it`.
pub fn update_target_atom(
    t: usize,
    set: &TrainingSet,
    codes: &[SparseCode],
    posteriors: &LatentPosteriors,
    dict: &Dictionary,
) -> AtomUpdate {
    let mut num = DVector::zeros(dict.dim());
    let mut den = 0.0;
    for i in set.positives() {
        let p = posteriors.p_target[i];
        let a = codes[i].target[t];
        if p == 0.0 || a == 0.0 {
            continue;
        }
        let mut resid = set.instance(i) - dict.target() * &codes[i].target - dict.background() * &codes[i].background;
        resid.axpy(a, &dict.target_atom(t), 1.0);
        num.axpy(p * a, &resid, 1.0);
        den += p * a * a;
    }
    if den <= MIN_DENOMINATOR {
        AtomUpdate::Stale
    } else {
        AtomUpdate::Updated(num / den)
    }
}

/// Minimiser of the expected objective over background atom `k`: residual
/// regressions over both bag classes (positive ones weighted by `psi`, with
/// the target contribution scaled by its posterior), minus the
/// discriminative pull toward the old target atoms.
pub fn update_background_atom(
    k: usize,
    set: &TrainingSet,
    codes: &[SparseCode],
    posteriors: &LatentPosteriors,
    dict: &Dictionary,
    penalty: &Discriminative,
) -> AtomUpdate {
    let mut num = DVector::zeros(dict.dim());
    let mut den = 0.0;
    for (i, code) in codes.iter().enumerate() {
        let a = code.background[k];
        if a == 0.0 {
            continue;
        }
        let w = set.weight(i);
        let mut resid = set.instance(i) - dict.background() * &code.background;
        resid.axpy(a, &dict.background_atom(k), 1.0);
        let p = posteriors.p_target[i];
        if p > 0.0 {
            resid -= dict.target() * &code.target * p;
        }
        num.axpy(w * a, &resid, 1.0);
        den += w * a * a;
    }
    if den <= MIN_DENOMINATOR {
        return AtomUpdate::Stale;
    }
    num -= penalty.pull(k);
    AtomUpdate::Updated(num / den)
}
