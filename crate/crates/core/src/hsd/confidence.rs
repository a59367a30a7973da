use nalgebra::{DMatrix, DVector, DVectorView};
use rayon::prelude::*;

use super::BackgroundModel;
use crate::fumi::lasso_step;
use crate::fumi::Dictionary;
use crate::linalg;
use crate::signal::{channel_instances, FeatureConfig, Recording};
use crate::{Error, Result};

/// Per-channel `(peak_index, confidence)` pairs over a recording.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfidenceSeries {
    pub channels: Vec<Vec<(usize, f64)>>,
}

impl ConfidenceSeries {
    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }
}

/// Everything computed while scoring one instance.
#[derive(Debug, Clone, PartialEq)]
pub struct HsdScore {
    pub confidence: f64,
    pub background_code: DVector<f64>,
    /// `[alpha+; alpha-]` on the full dictionary.
    pub full_code: DVector<f64>,
    /// Lasso objective of the full solution.
    pub full_objective: f64,
    /// Lasso objective (full model) of the warm start `[0; alpha-]`.
    pub warm_start_objective: f64,
}

/// A trained dictionary plus background model, with Gram matrices and step
/// lengths precomputed.
#[derive(Debug, Clone)]
pub struct HsdDetector {
    dict: Dictionary,
    background: BackgroundModel,
    lambda: f64,
    code_iters: usize,
    full: DMatrix<f64>,
    full_t: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_bg: DMatrix<f64>,
    eta_full: f64,
    eta_bg: f64,
}

/// Residual Mahalanobis norms below this are floored.
const DENOMINATOR_FLOOR: f64 = 1e-12;

impl HsdDetector {
    pub fn new(dict: Dictionary, background: BackgroundModel, lambda: f64, code_iters: usize) -> Result<Self> {
        if background.dim() != dict.dim() {
            return Err(Error::DimensionMismatch {
                expected: dict.dim(),
                actual: background.dim(),
                context: "background covariance vs dictionary",
            });
        }
        let full = dict.full();
        let full_t = full.transpose();
        let gram = &full_t * &full;
        let t = dict.n_target();
        let m = dict.n_background();
        let gram_bg = gram.view((t, t), (m, m)).into_owned();
        let eta_full = 1.0 / linalg::largest_eigenvalue(&gram, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
        let eta_bg = 1.0 / linalg::largest_eigenvalue(&gram_bg, linalg::POWER_ITER_TOL, linalg::POWER_ITER_MAX)?;
        Ok(Self {
            dict,
            background,
            lambda,
            code_iters,
            full,
            full_t,
            gram,
            gram_bg,
            eta_full,
            eta_bg,
        })
    }

    pub fn dictionary(&self) -> &Dictionary {
        &self.dict
    }

    pub fn background(&self) -> &BackgroundModel {
        &self.background
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn code_iters(&self) -> usize {
        self.code_iters
    }

    fn lasso_value(&self, x: DVectorView<'_, f64>, a: &DVector<f64>) -> f64 {
        0.5 * (x - &self.full * a).norm_squared() + self.lambda * a.lp_norm(1)
    }

    /// Code `x` on the background atoms, then on the full dictionary warm-started
    /// from `[0; alpha-]`, and return the ratio of the whitened residual energies.
    pub fn score(&self, x: DVectorView<'_, f64>) -> Result<HsdScore> {
        self.dict.check_dim(x.len())?;
        let (t, m) = (self.dict.n_target(), self.dict.n_background());
        let corr = &self.full_t * x;
        let corr_bg = corr.rows(t, m).into_owned();

        let mut a_bg = DVector::zeros(m);
        for _ in 0..self.code_iters {
            a_bg = lasso_step(&self.gram_bg, &corr_bg, &a_bg, self.lambda, self.eta_bg);
        }
        let mut a = DVector::zeros(t + m);
        a.rows_mut(t, m).copy_from(&a_bg);
        let warm_start_objective = self.lasso_value(x, &a);
        for _ in 0..self.code_iters {
            a = lasso_step(&self.gram, &corr, &a, self.lambda, self.eta_full);
        }

        let r_bg = x - self.dict.background() * &a_bg;
        let r_full = x - &self.full * &a;
        let num = self.background.mahalanobis(&r_bg);
        let den = self.background.mahalanobis(&r_full).max(DENOMINATOR_FLOOR);
        let confidence = num.max(DENOMINATOR_FLOOR) / den;
        Ok(HsdScore {
            confidence,
            full_objective: self.lasso_value(x, &a),
            warm_start_objective,
            background_code: a_bg,
            full_code: a,
        })
    }

    pub fn confidence(&self, x: DVectorView<'_, f64>) -> Result<f64> {
        Ok(self.score(x)?.confidence)
    }
}

/// GLRT confidence of one instance; see [`HsdDetector::score`].
pub fn hsd_confidence(
    x: DVectorView<'_, f64>,
    dict: &Dictionary,
    background: &BackgroundModel,
    lambda: f64,
    code_iters: usize,
) -> Result<f64> {
    HsdDetector::new(dict.clone(), background.clone(), lambda, code_iters)?.confidence(x)
}

/// Filter, find candidate peaks and score every candidate on every channel.
pub fn confidence_series(recording: &Recording, detector: &HsdDetector, features: &FeatureConfig) -> Result<ConfidenceSeries> {
    if features.instance_len() != detector.dictionary().dim() {
        return Err(Error::DimensionMismatch {
            expected: detector.dictionary().dim(),
            actual: features.instance_len(),
            context: "instance length vs dictionary",
        });
    }
    let per_channel = channel_instances(recording, features)?;
    let channels = per_channel
        .par_iter()
        .map(|insts| {
            insts
                .iter()
                .map(|inst| Ok((inst.peak_index, detector.confidence(inst.features.as_view())?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ConfidenceSeries { channels })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(d: usize, i: usize) -> DVector<f64> {
        DVector::from_fn(d, |r, _| if r == i { 1.0 } else { 0.0 })
    }

    fn detector(lambda: f64) -> HsdDetector {
        let dict = Dictionary::new(DMatrix::from_columns(&[e(4, 0)]), DMatrix::from_columns(&[e(4, 1), e(4, 2)])).unwrap();
        let bg = BackgroundModel::from_covariance(DMatrix::identity(4, 4)).unwrap();
        HsdDetector::new(dict, bg, lambda, 200).unwrap()
    }

    #[test]
    fn background_explained_instance_scores_one() {
        let det = detector(0.0);
        let x = DVector::from_vec(vec![0.0, 1.0, -2.0, 0.5]);
        let s = det.score(x.as_view()).unwrap();
        assert!((s.confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ratio_arithmetic() {
        let det = detector(0.0);
        let x = DVector::from_vec(vec![3f64.sqrt(), 0.7, 0.1, 1.0]);
        let s = det.score(x.as_view()).unwrap();
        assert!((s.confidence - 4.0).abs() < 1e-9, "{}", s.confidence);
    }

    #[test]
    fn warm_start_never_worse() {
        let det = detector(0.05);
        for k in 0..20 {
            let x = DVector::from_fn(4, |i, _| ((i * 3 + k * 7) % 11) as f64 / 5.0 - 1.0);
            let s = det.score(x.as_view()).unwrap();
            assert!(s.full_objective <= s.warm_start_objective + 1e-12);
            assert!(s.confidence > 0.0);
        }
    }

    #[test]
    fn zero_recording_has_no_candidates() {
        let dict = Dictionary::normalized(DMatrix::from_element(91, 1, 1.0), DMatrix::from_fn(91, 1, |i, _| i as f64)).unwrap();
        let bg = BackgroundModel::from_covariance(DMatrix::identity(91, 91)).unwrap();
        let det = HsdDetector::new(dict, bg, 5e-3, 50).unwrap();
        let rec = Recording::new(vec![vec![0.0; 2000]; 4], 100.0, None).unwrap();
        let s = confidence_series(&rec, &det, &FeatureConfig::default()).unwrap();
        assert!(s.channels.iter().all(Vec::is_empty));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let det = detector(0.0);
        assert!(det.score(DVector::zeros(5).as_view()).is_err());
        let bg = BackgroundModel::from_covariance(DMatrix::identity(3, 3)).unwrap();
        assert!(HsdDetector::new(det.dictionary().clone(), bg, 0.0, 10).is_err());
    }
}
