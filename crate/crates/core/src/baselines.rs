//! Time-domain comparison estimators: window peak-to-peak deviation (WPPD)
//! and short-term energy (EN).

use std::collections::VecDeque;

use crate::eval::{mae, HrSeries};
use crate::hsd::{hr_from_beats, WindowSpec};
use crate::signal::{bandpass_filter, find_peaks, lowpass_filter, Recording};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineConfig {
    /// WPPD sliding-maximum window.
    pub wppd_window_s: f64,
    /// WPPD smoothing low-pass.
    pub wppd_cutoff_hz: f64,
    pub wppd_order: usize,
    /// EN energy window.
    pub en_window_s: f64,
    pub low_hz: f64,
    pub high_hz: f64,
    pub filter_order: usize,
    /// Minimum spacing of detected beats.
    pub min_separation_s: f64,
    /// Peaks rising less than this fraction of a typical beat peak above the
    /// series median are dropped.
    pub min_relative_height: f64,
    /// Below this ratio of median peak value to median series value the
    /// estimate is flagged low-confidence.
    pub min_prominence: f64,
    pub windows: WindowSpec,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            wppd_window_s: 0.25,
            wppd_cutoff_hz: 4.0,
            wppd_order: 2,
            en_window_s: 0.3,
            low_hz: 0.4,
            high_hz: 10.0,
            filter_order: 6,
            min_separation_s: 0.3,
            min_relative_height: 0.5,
            min_prominence: 2.0,
            windows: WindowSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineOutput {
    pub hr: HrSeries,
    pub beats: Vec<usize>,
    /// Median peak value over median series value.
    pub prominence: f64,
    pub low_confidence: bool,
}

fn samples(seconds: f64, fs: f64) -> usize {
    ((seconds * fs).round() as usize).max(1)
}

/// Centred sliding maximum over `w` samples (shrinking at the edges).
fn sliding_max(x: &[f64], w: usize) -> Vec<f64> {
    let (before, after) = ((w - 1) / 2, w / 2);
    let mut out = Vec::with_capacity(x.len());
    let mut q: VecDeque<usize> = VecDeque::new();
    let mut next = 0;
    for i in 0..x.len() {
        while next < x.len() && next <= i + after {
            while q.back().is_some_and(|&b| x[b] <= x[next]) {
                q.pop_back();
            }
            q.push_back(next);
            next += 1;
        }
        while q.front().is_some_and(|&f| f + before < i) {
            q.pop_front();
        }
        out.push(x[q[0]]);
    }
    out
}

/// Centred sum of squares over `w` samples.
fn short_term_energy(x: &[f64], w: usize) -> Vec<f64> {
    let (before, after) = ((w - 1) / 2, w / 2);
    (0..x.len())
        .map(|i| {
            let lo = i.saturating_sub(before);
            let hi = (i + after + 1).min(x.len());
            x[lo..hi].iter().map(|v| v * v).sum()
        })
        .collect()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn quantile(v: &mut [f64], q: f64) -> f64 {
    v.sort_by(f64::total_cmp);
    v[((v.len() - 1) as f64 * q).round() as usize]
}

/// Drop peaks whose rise above the series median is below
/// `min_relative_height` of the 80th-percentile rise (a typical beat once
/// thinning has left at most a couple of spurious peaks per cycle).
fn height_gate(series: &[f64], peaks: Vec<usize>, all_med: f64, rel: f64) -> Vec<usize> {
    if peaks.is_empty() {
        return peaks;
    }
    let mut rises: Vec<f64> = peaks.iter().map(|&p| series[p] - all_med).collect();
    let floor = rel * quantile(&mut rises, 0.8);
    peaks.into_iter().filter(|&p| series[p] - all_med >= floor).collect()
}

fn finish(series: &[f64], fs: f64, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    let mut all = series.to_vec();
    let all_med = median(&mut all);
    let peaks = find_peaks(series, samples(cfg.min_separation_s, fs));
    let beats = height_gate(series, peaks, all_med, cfg.min_relative_height);
    let duration = series.len() as f64 / fs;
    let hr = hr_from_beats(&beats, fs, duration, cfg.windows)?;
    let mut at_peaks: Vec<f64> = beats.iter().map(|&b| series[b]).collect();
    let peak_med = median(&mut at_peaks);
    let prominence = if beats.is_empty() {
        0.0
    } else if all_med > 0.0 {
        peak_med / all_med
    } else {
        f64::INFINITY
    };
    Ok(BaselineOutput {
        hr,
        beats,
        prominence,
        low_confidence: prominence < cfg.min_prominence,
    })
}

/// WPPD: band-pass, sliding 0.25 s maximum, zero-phase 4 Hz low-pass, peaks
/// of the smoothed envelope are beats.
pub fn wppd_hr(signal: &[f64], fs: f64, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    if !(fs > 2.0 * cfg.wppd_cutoff_hz) {
        return Err(Error::param(format!("WPPD needs fs > {} Hz", 2.0 * cfg.wppd_cutoff_hz)));
    }
    let w = samples(cfg.wppd_window_s, fs);
    if signal.len() < w {
        return Err(Error::InsufficientData("signal shorter than one WPPD window".into()));
    }
    let filtered = bandpass_filter(signal, fs, cfg.low_hz, cfg.high_hz.min(0.45 * fs), cfg.filter_order)?;
    let env = sliding_max(&filtered, w);
    let smooth = lowpass_filter(&env, fs, cfg.wppd_cutoff_hz, cfg.wppd_order)?;
    finish(&smooth, fs, cfg)
}

/// EN: band-pass, centred short-term energy with a one-sample hop, peaks of
/// the energy are beats.
pub fn en_hr(signal: &[f64], fs: f64, cfg: &BaselineConfig) -> Result<BaselineOutput> {
    if !(fs > 2.0 * cfg.high_hz) {
        return Err(Error::param(format!("EN needs fs > {} Hz", 2.0 * cfg.high_hz)));
    }
    let w = samples(cfg.en_window_s, fs);
    if signal.len() < w {
        return Err(Error::InsufficientData("signal shorter than one EN window".into()));
    }
    let filtered = bandpass_filter(signal, fs, cfg.low_hz, cfg.high_hz, cfg.filter_order)?;
    finish(&short_term_energy(&filtered, w), fs, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Baseline {
    Wppd,
    En,
}

impl Baseline {
    pub fn run(self, signal: &[f64], fs: f64, cfg: &BaselineConfig) -> Result<BaselineOutput> {
        match self {
            Baseline::Wppd => wppd_hr(signal, fs, cfg),
            Baseline::En => en_hr(signal, fs, cfg),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Baseline::Wppd => "wppd",
            Baseline::En => "en",
        }
    }
}

/// Channel with the lowest heart-rate MAE against `reference` on a training
/// recording. Channels whose estimate never overlaps the reference are
/// skipped; ties keep the lower channel.
pub fn best_channel(
    baseline: Baseline,
    recording: &Recording,
    reference: &HrSeries,
    cfg: &BaselineConfig,
) -> Result<(usize, f64)> {
    let fs = recording.sample_rate_hz();
    let mut best: Option<(usize, f64)> = None;
    for (c, ch) in recording.channels().iter().enumerate() {
        let out = baseline.run(ch, fs, cfg)?;
        if let Ok(m) = mae(&out.hr, reference) {
            if best.is_none_or(|(_, b)| m < b) {
                best = Some((c, m));
            }
        }
    }
    best.ok_or_else(|| Error::InsufficientData(format!("{} produced no usable channel", baseline.name())))
}
