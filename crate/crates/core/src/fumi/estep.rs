use nalgebra::{DMatrix, DVector, DVectorView};

use super::{Dictionary, LatentPosteriors, SparseCode, TrainingSet};

/// Posterior that a positive-bag instance carries the target:
/// `1 - exp(-beta * ||x - D- alpha-||^2)`.
///
/// Only meaningful for positive-bag instances; negative-bag instances have
/// posterior 0 by construction and callers must force that.
pub fn e_step(x: DVectorView<'_, f64>, d_bg: &DMatrix<f64>, code_bg: &DVector<f64>, beta: f64) -> f64 {
    let resid = x - d_bg * code_bg;
    (1.0 - (-beta * resid.norm_squared()).exp()).clamp(0.0, 1.0)
}

/// E-step over a whole training set.
pub fn e_step_all(set: &TrainingSet, dict: &Dictionary, codes: &[SparseCode], beta: f64) -> LatentPosteriors {
    let p_target = (0..set.len())
        .map(|i| {
            if set.is_positive(i) {
                e_step(set.instance(i), dict.background(), &codes[i].background, beta)
            } else {
                0.0
            }
        })
        .collect();
    LatentPosteriors { p_target }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_residual_gives_zero() {
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let x = DVector::from_vec(vec![2.0, 0.0]);
        let p = e_step(x.as_view(), &d, &DVector::from_element(1, 2.0), 90.0);
        assert_eq!(p, 0.0);
    }

    #[test]
    fn half_at_ln2_over_beta() {
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let r = (2f64.ln() / 90.0).sqrt();
        let x = DVector::from_vec(vec![0.0, r]);
        let p = e_step(x.as_view(), &d, &DVector::zeros(1), 90.0);
        assert!((p - 0.5).abs() < 1e-12);
    }

    #[test]
    fn negative_instances_are_zero() {
        let d = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let dict = Dictionary::new(DMatrix::from_column_slice(2, 1, &[0.0, 1.0]), d).unwrap();
        let x = DMatrix::from_column_slice(2, 2, &[5.0, 5.0, 5.0, 5.0]);
        let set = TrainingSet::new(x, vec![true, false], None).unwrap();
        let codes = vec![SparseCode::zeros(1, 1); 2];
        let post = e_step_all(&set, &dict, &codes, 90.0);
        assert!(post.p_target[0] > 0.99);
        assert_eq!(post.p_target[1], 0.0);
        assert_eq!(post.p_nontarget(1), 1.0);
    }
}
