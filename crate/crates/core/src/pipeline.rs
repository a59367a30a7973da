//! End-to-end training and detection on recordings.

use nalgebra::DMatrix;

use crate::eval::HrSeries;
use crate::fumi::{fit, Dictionary, FitResult, FumiParams};
use crate::hsd::{
    background_covariance, confidence_series, hr_from_beats, hr_from_confidence_dft, learn_detection_params_multi,
    vote_beats, BackgroundModel, Beat, ConfidenceSeries, DetectionGrid, DetectionParams, HsdDetector, WindowSpec,
};
use crate::signal::{build_bags, channel_instances, Bag, FeatureConfig, Recording};
use crate::{Error, Result};

/// Test-time ISTA iterations.
pub const DEFAULT_CODE_ITERS: usize = 50;

/// DFT search band (40 to 180 bpm).
pub const DFT_BAND_HZ: (f64, f64) = (0.66, 3.0);

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub fumi: FumiParams,
    pub features: FeatureConfig,
    /// Instances per channel in each positive bag.
    pub per_positive: usize,
    /// Diagonal loading of the background covariance.
    pub ridge: f64,
    pub code_iters: usize,
    pub grid: DetectionGrid,
    pub windows: WindowSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            fumi: FumiParams::default(),
            features: FeatureConfig::default(),
            per_positive: 3,
            ridge: 0.0,
            code_iters: DEFAULT_CODE_ITERS,
            grid: DetectionGrid::default(),
            windows: WindowSpec::default(),
        }
    }
}

/// Everything `detect` needs.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dictionary: Dictionary,
    pub background: BackgroundModel,
    pub lambda: f64,
    pub code_iters: usize,
    pub detection: DetectionParams,
    pub features: FeatureConfig,
    pub windows: WindowSpec,
}

#[derive(Debug)]
pub struct Training {
    pub model: TrainedModel,
    pub fit: FitResult,
    /// Pooled training F1 of the selected detection parameters.
    pub train_f1: f64,
}

/// Bags from one recording with groundtruth.
pub fn recording_bags(recording: &Recording, features: &FeatureConfig, per_positive: usize) -> Result<Vec<Bag>> {
    let gt = recording
        .gt_beat_times()
        .ok_or_else(|| Error::InsufficientData("recording has no groundtruth beats".into()))?;
    let per_channel = channel_instances(recording, features)?;
    Ok(build_bags(&per_channel, gt, per_positive))
}

/// Learn a dictionary from the pooled bags of all recordings, estimate the
/// background covariance from negative-bag instances and pick detection
/// parameters by test-on-train.
pub fn train(recordings: &[Recording], cfg: &TrainConfig, seed: u64) -> Result<Training> {
    if recordings.is_empty() {
        return Err(Error::InsufficientData("no training recordings".into()));
    }
    let fs = recordings[0].sample_rate_hz();
    if recordings.iter().any(|r| r.sample_rate_hz() != fs) {
        return Err(Error::param("training recordings differ in sample rate"));
    }
    let mut bags = Vec::new();
    for r in recordings {
        bags.extend(recording_bags(r, &cfg.features, cfg.per_positive)?);
    }
    let fit = fit(&bags, &cfg.fumi, seed)?;

    let negatives: Vec<_> = bags
        .iter()
        .filter(|b| !b.is_positive())
        .flat_map(|b| b.instances.iter().map(|i| i.features.clone()))
        .collect();
    if negatives.is_empty() {
        return Err(Error::NoNegativeBags);
    }
    let background = background_covariance(&DMatrix::from_columns(&negatives), cfg.ridge)?;
    let detector = HsdDetector::new(fit.dictionary.clone(), background.clone(), cfg.fumi.lambda, cfg.code_iters)?;

    let series = recordings
        .iter()
        .map(|r| confidence_series(r, &detector, &cfg.features))
        .collect::<Result<Vec<_>>>()?;
    let data: Vec<(&ConfidenceSeries, &[usize])> = series
        .iter()
        .zip(recordings)
        .map(|(s, r)| (s, r.gt_beat_times().unwrap_or(&[])))
        .collect();
    let base = DetectionParams::for_sample_rate(fs);
    let (detection, train_f1) = learn_detection_params_multi(&data, fs, &base, &cfg.grid)?;

    Ok(Training {
        model: TrainedModel {
            dictionary: fit.dictionary.clone(),
            background,
            lambda: cfg.fumi.lambda,
            code_iters: cfg.code_iters,
            detection,
            features: cfg.features.clone(),
            windows: cfg.windows,
        },
        fit,
        train_f1,
    })
}

#[derive(Debug, Clone)]
pub struct Detection {
    pub series: ConfidenceSeries,
    pub beats: Vec<Beat>,
    pub hr: HrSeries,
}

/// Score, vote and extract heart rate. With `dft` the rate comes from the
/// spectrum of the confidence series instead of beat intervals.
pub fn detect(recording: &Recording, model: &TrainedModel, dft: bool) -> Result<Detection> {
    let detector = HsdDetector::new(
        model.dictionary.clone(),
        model.background.clone(),
        model.lambda,
        model.code_iters,
    )?;
    let series = confidence_series(recording, &detector, &model.features)?;
    let beats = vote_beats(&series, &model.detection)?;
    let fs = recording.sample_rate_hz();
    let hr = if dft {
        hr_from_confidence_dft(&series, fs, recording.duration_s(), model.windows, DFT_BAND_HZ)?
    } else {
        let idx: Vec<usize> = beats.iter().map(|b| b.index).collect();
        hr_from_beats(&idx, fs, recording.duration_s(), model.windows)?
    };
    Ok(Detection { series, beats, hr })
}

/// Reference heart rate from groundtruth beats on the model's window grid.
pub fn reference_hr(recording: &Recording, windows: WindowSpec) -> Result<HrSeries> {
    let gt = recording
        .gt_beat_times()
        .ok_or_else(|| Error::InsufficientData("recording has no groundtruth beats".into()))?;
    hr_from_beats(gt, recording.sample_rate_hz(), recording.duration_s(), windows)
}
