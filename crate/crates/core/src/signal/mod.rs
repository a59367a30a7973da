//! Recordings, filtering, candidate peaks, instances and multiple-instance bags.

mod bags;
mod filter;
mod peaks;

pub use bags::{build_bags, Bag, BagLabel};
pub use filter::{bandpass_filter, filtfilt, lowpass_filter, Sos};
pub use peaks::find_peaks;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::{Error, Result};

/// Default instance length (samples), centred on a candidate J-peak.
pub const INSTANCE_LEN: usize = 91;
/// Half-width of an instance window: `INSTANCE_LEN = 2 * HALF_LEN + 1`.
pub const HALF_LEN: usize = 45;

/// A multichannel BCG recording with optional groundtruth beat annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    channels: Vec<Vec<f64>>,
    sample_rate_hz: f64,
    gt_beat_times: Option<Vec<usize>>,
}

impl Recording {
    pub fn new(
        channels: Vec<Vec<f64>>,
        sample_rate_hz: f64,
        gt_beat_times: Option<Vec<usize>>,
    ) -> Result<Self> {
        if !(sample_rate_hz > 0.0 && sample_rate_hz.is_finite()) {
            return Err(Error::param(format!(
                "sample rate must be positive, got {sample_rate_hz}"
            )));
        }
        if channels.is_empty() {
            return Err(Error::param("recording needs at least one channel"));
        }
        let len = channels[0].len();
        if let Some(bad) = channels.iter().find(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                actual: bad.len(),
                context: "channel length",
            });
        }
        if let Some(gt) = &gt_beat_times {
            if gt.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::param("groundtruth beats must be strictly increasing"));
            }
            if gt.last().is_some_and(|&b| b >= len) {
                return Err(Error::param("groundtruth beat beyond end of signal"));
            }
        }
        Ok(Self {
            channels,
            sample_rate_hz,
            gt_beat_times,
        })
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// Number of samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    pub fn duration_s(&self) -> f64 {
        self.len() as f64 / self.sample_rate_hz
    }

    pub fn gt_beat_times(&self) -> Option<&[usize]> {
        self.gt_beat_times.as_deref()
    }

    /// The sub-recording covering samples `[start, end)`, groundtruth re-based.
    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.len());
        if start >= end {
            return Err(Error::param("empty recording slice"));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| c[start..end].to_vec())
            .collect();
        let gt = self.gt_beat_times.as_ref().map(|gt| {
            gt.iter()
                .filter(|&&b| b >= start && b < end)
                .map(|&b| b - start)
                .collect()
        });
        Self::new(channels, self.sample_rate_hz, gt)
    }
}

/// One fixed-length segment centred on a candidate peak.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: DVector<f64>,
    pub channel_id: usize,
    pub peak_index: usize,
}

/// Cut one instance per peak whose full window `[peak - half_len, peak + half_len]`
/// lies inside the signal. Boundary peaks are dropped, never padded.
pub fn extract_instances(
    signal: &[f64],
    peaks: &[usize],
    half_len: usize,
    channel_id: usize,
) -> Vec<Instance> {
    peaks
        .iter()
        .filter(|&&p| p >= half_len && p + half_len < signal.len())
        .map(|&p| Instance {
            features: DVector::from_column_slice(&signal[p - half_len..=p + half_len]),
            channel_id,
            peak_index: p,
        })
        .collect()
}

/// Settings for turning a raw recording into per-channel instances.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub filter_order: usize,
    pub min_separation: usize,
    pub half_len: usize,
    /// Z-score each instance (off by default; raw filtered amplitude is kept).
    pub zscore: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            low_hz: 0.4,
            high_hz: 10.0,
            filter_order: 6,
            min_separation: 10,
            half_len: HALF_LEN,
            zscore: false,
        }
    }
}

impl FeatureConfig {
    pub fn instance_len(&self) -> usize {
        2 * self.half_len + 1
    }
}

/// Filter, find peaks and extract instances on every channel.
///
/// Returns one instance list per channel, sorted by `peak_index`.
pub fn channel_instances(recording: &Recording, cfg: &FeatureConfig) -> Result<Vec<Vec<Instance>>> {
    let fs = recording.sample_rate_hz();
    recording
        .channels()
        .par_iter()
        .enumerate()
        .map(|(ch, raw)| {
            let filtered = bandpass_filter(raw, fs, cfg.low_hz, cfg.high_hz, cfg.filter_order)?;
            let peaks = find_peaks(&filtered, cfg.min_separation);
            let mut instances = extract_instances(&filtered, &peaks, cfg.half_len, ch);
            if cfg.zscore {
                instances.iter_mut().for_each(|inst| zscore(&mut inst.features));
            }
            Ok(instances)
        })
        .collect()
}

fn zscore(v: &mut DVector<f64>) {
    let n = v.len() as f64;
    let mean = v.sum() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    v.iter_mut().for_each(|x| {
        *x -= mean;
        if sd > 0.0 {
            *x /= sd;
        }
    });
}
