use nalgebra::{DMatrix, DVector, DVectorView};

use super::{Dictionary, LatentPosteriors, SparseCode, TrainingSet};
use crate::{Error, Result};

/// `Gamma * cos(angle(d_bg, d_tgt_old))`.
pub fn adaptive_gamma(d_bg: DVectorView<'_, f64>, d_tgt_old: DVectorView<'_, f64>, big_gamma: f64) -> Result<f64> {
    let (nb, nt) = (d_bg.norm(), d_tgt_old.norm());
    if nb == 0.0 || nt == 0.0 {
        return Err(Error::ZeroNorm);
    }
    Ok(big_gamma * d_bg.dot(&d_tgt_old) / (nb * nt))
}

/// The discriminative penalty `sum_kt gamma_kt <d_k-, d_t+(old)>` with the
/// coefficients and old target atoms frozen for one EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminative {
    old_targets: DMatrix<f64>,
    /// `M x T`.
    gammas: DMatrix<f64>,
}

impl Discriminative {
    /// Freeze the penalty at the current dictionary (both factors "old").
    pub fn from_dictionary(dict: &Dictionary, big_gamma: f64) -> Result<Self> {
        Self::new(dict.background(), dict.target(), big_gamma)
    }

    pub fn new(background: &DMatrix<f64>, old_targets: &DMatrix<f64>, big_gamma: f64) -> Result<Self> {
        let (m, t) = (background.ncols(), old_targets.ncols());
        let mut gammas = DMatrix::zeros(m, t);
        for k in 0..m {
            for j in 0..t {
                gammas[(k, j)] = adaptive_gamma(background.column(k), old_targets.column(j), big_gamma)?;
            }
        }
        Ok(Self {
            old_targets: old_targets.clone(),
            gammas,
        })
    }

    pub fn gammas(&self) -> &DMatrix<f64> {
        &self.gammas
    }

    pub fn old_targets(&self) -> &DMatrix<f64> {
        &self.old_targets
    }

    /// `sum_kt gamma_kt <d_k, d_t(old)>` for the given background atoms.
    pub fn value(&self, background: &DMatrix<f64>) -> f64 {
        let inner = background.transpose() * &self.old_targets;
        self.gammas.component_mul(&inner).sum()
    }

    /// `sum_t gamma_kt d_t(old)`: the gradient of the penalty w.r.t. `d_k`.
    pub fn pull(&self, k: usize) -> DVector<f64> {
        &self.old_targets * self.gammas.row(k).transpose()
    }
}

/// Expected objective over the latent target indicators:
/// posterior-weighted reconstruction residuals, the weighted L1 term (with the
/// target block gated by the posterior), plus the discriminative penalty.
pub fn objective(
    set: &TrainingSet,
    dict: &Dictionary,
    codes: &[SparseCode],
    posteriors: &LatentPosteriors,
    lambda: f64,
    penalty: &Discriminative,
) -> Result<f64> {
    dict.check_dim(set.dim())?;
    if codes.len() != set.len() || posteriors.p_target.len() != set.len() {
        return Err(Error::DimensionMismatch {
            expected: set.len(),
            actual: codes.len().min(posteriors.p_target.len()),
            context: "codes / posteriors vs instances",
        });
    }
    if let Some(c) = codes
        .iter()
        .find(|c| c.target.len() != dict.n_target() || c.background.len() != dict.n_background())
    {
        return Err(Error::DimensionMismatch {
            expected: dict.n_target() + dict.n_background(),
            actual: c.target.len() + c.background.len(),
            context: "code length vs dictionary",
        });
    }
    if penalty.gammas.nrows() != dict.n_background() || penalty.old_targets.nrows() != dict.dim() {
        return Err(Error::DimensionMismatch {
            expected: dict.n_background(),
            actual: penalty.gammas.nrows(),
            context: "penalty shape",
        });
    }

    let mut total = 0.0;
    for (i, code) in codes.iter().enumerate() {
        let x = set.instance(i);
        let w = set.weight(i);
        let p = posteriors.p_target[i];
        let bg_recon = dict.background() * &code.background;
        let r_bg = x - &bg_recon;
        let mut smooth = (1.0 - p) * r_bg.norm_squared();
        let mut l1 = code.background.lp_norm(1);
        if p > 0.0 {
            let r_full = &r_bg - dict.target() * &code.target;
            smooth += p * r_full.norm_squared();
            l1 += p * code.target.lp_norm(1);
        }
        total += w * (0.5 * smooth + lambda * l1);
    }
    Ok(total + penalty.value(dict.background()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn col(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn gamma_examples() {
        let (e1, e2) = (col(&[1.0, 0.0]), col(&[0.0, 1.0]));
        assert_eq!(adaptive_gamma(e1.as_view(), e2.as_view(), 5e-3).unwrap(), 0.0);
        assert!((adaptive_gamma(e1.as_view(), e1.as_view(), 5e-3).unwrap() - 5e-3).abs() < 1e-18);
        let diag = col(&[1.0, 1.0]) / 2f64.sqrt();
        let g = adaptive_gamma(e1.as_view(), diag.as_view(), 1.0).unwrap();
        assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(adaptive_gamma(e1.as_view(), col(&[0.0, 0.0]).as_view(), 1.0).is_err());
    }

    #[test]
    fn penalty_is_nonnegative_when_frozen_at_same_atoms() {
        let bg = DMatrix::from_column_slice(2, 2, &[1.0, 0.2, -0.3, 1.0]);
        let tg = DMatrix::from_column_slice(2, 1, &[-1.0, 0.5]);
        let pen = Discriminative::new(&bg, &tg, 2.0).unwrap();
        assert!(pen.value(&bg) >= 0.0);
    }

    #[test]
    fn zero_data_zero_objective() {
        let dict = Dictionary::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let set = TrainingSet::new(DMatrix::zeros(2, 3), vec![true, false, false], None).unwrap();
        let codes = vec![SparseCode::zeros(1, 1); 3];
        let post = LatentPosteriors {
            p_target: vec![0.5, 0.0, 0.0],
        };
        let pen = Discriminative::from_dictionary(&dict, 5e-3).unwrap();
        assert_eq!(objective(&set, &dict, &codes, &post, 5e-3, &pen).unwrap(), 0.0);
    }

    #[test]
    fn exact_negative_reconstruction() {
        let dict = Dictionary::new(
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        )
        .unwrap();
        let set = TrainingSet::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), vec![false], None).unwrap();
        let codes = vec![SparseCode {
            target: col(&[0.0]),
            background: col(&[1.0]),
        }];
        let post = LatentPosteriors { p_target: vec![0.0] };
        let pen = Discriminative::from_dictionary(&dict, 0.0).unwrap();
        assert_eq!(objective(&set, &dict, &codes, &post, 0.0, &pen).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let dict = Dictionary::new(DMatrix::from_element(3, 1, 1.0), DMatrix::from_element(3, 1, 1.0)).unwrap();
        let set = TrainingSet::new(DMatrix::zeros(2, 1), vec![false], None).unwrap();
        let pen = Discriminative::from_dictionary(&dict, 0.0).unwrap();
        let post = LatentPosteriors { p_target: vec![0.0] };
        assert!(objective(&set, &dict, &[SparseCode::zeros(1, 1)], &post, 0.0, &pen).is_err());
    }
}
