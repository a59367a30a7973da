use super::{vote_beats, ConfidenceSeries, DetectionParams};
use crate::eval::match_beats;
use crate::{Error, Result};

/// Search grid for automatic detection-parameter selection.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrid {
    pub thresholds: Vec<f64>,
    pub neighborhoods: Vec<usize>,
    /// Matching tolerance for scoring detections (seconds).
    pub match_tol_s: f64,
}

impl Default for DetectionGrid {
    /// Thresholds 1.00, 1.05, ..., 3.00; neighborhoods 15..=35 step 5; +/-0.3 s matching.
    fn default() -> Self {
        Self {
            thresholds: (0..=40).map(|i| 1.0 + 0.05 * i as f64).collect(),
            neighborhoods: vec![15, 20, 25, 30, 35],
            match_tol_s: 0.3,
        }
    }
}

/// Pick threshold and neighborhood maximising beat-detection F1 on training
/// data (test-on-train). Ties keep the smaller threshold, then the smaller
/// neighborhood. Returns the parameters and their F1.
pub fn learn_detection_params(
    series: &ConfidenceSeries,
    gt_beats: &[usize],
    fs: f64,
    base: &DetectionParams,
    grid: &DetectionGrid,
) -> Result<(DetectionParams, f64)> {
    learn_detection_params_multi(&[(series, gt_beats)], fs, base, grid)
}

/// Same as [`learn_detection_params`] with F1 pooled over several recordings.
pub fn learn_detection_params_multi(
    data: &[(&ConfidenceSeries, &[usize])],
    fs: f64,
    base: &DetectionParams,
    grid: &DetectionGrid,
) -> Result<(DetectionParams, f64)> {
    if data.iter().all(|(_, gt)| gt.is_empty()) {
        return Err(Error::InsufficientData("detection parameter search needs groundtruth beats".into()));
    }
    let tol = (grid.match_tol_s * fs).round() as usize;
    let mut best: Option<(DetectionParams, f64)> = None;
    for &threshold in &grid.thresholds {
        for &neighborhood in &grid.neighborhoods {
            let params = DetectionParams {
                threshold,
                neighborhood,
                ..*base
            };
            let (mut tp, mut n_est, mut n_gt) = (0usize, 0usize, 0usize);
            for (series, gt) in data {
                let est: Vec<usize> = vote_beats(series, &params)?.iter().map(|b| b.index).collect();
                tp += match_beats(&est, gt, tol).len();
                n_est += est.len();
                n_gt += gt.len();
            }
            let f1 = 2.0 * tp as f64 / (n_est + n_gt) as f64;
            if best.as_ref().is_none_or(|(_, b)| f1 > *b) {
                best = Some((params, f1));
            }
        }
    }
    best.ok_or_else(|| Error::param("empty detection grid"))
}
