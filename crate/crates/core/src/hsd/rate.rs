use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use super::ConfidenceSeries;
use crate::eval::HrSeries;
use crate::{Error, Result};

/// Sliding analysis windows over a recording of `duration_s` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub window_s: f64,
    pub step_s: f64,
}

impl Default for WindowSpec {
    /// One-minute windows advanced every 15 s.
    fn default() -> Self {
        Self {
            window_s: 60.0,
            step_s: 15.0,
        }
    }
}

impl WindowSpec {
    /// Window start times `s` with `s + window_s <= duration_s`.
    pub fn starts(&self, duration_s: f64) -> Vec<f64> {
        let mut out = Vec::new();
        let mut k = 0usize;
        loop {
            let s = k as f64 * self.step_s;
            if s + self.window_s > duration_s + 1e-9 {
                break;
            }
            out.push(s);
            k += 1;
        }
        out
    }

    fn validate(&self) -> Result<()> {
        if !(self.window_s > 0.0 && self.step_s > 0.0) {
            return Err(Error::param("window and step must be > 0"));
        }
        Ok(())
    }
}

/// Windowed heart rate from beat indices: per window, the mean of `60 / interval`
/// over intervals with both beats inside the window. Windows with fewer than
/// two beats are gaps.
pub fn hr_from_beats(beats: &[usize], fs: f64, duration_s: f64, windows: WindowSpec) -> Result<HrSeries> {
    windows.validate()?;
    if !(fs > 0.0) {
        return Err(Error::param("fs must be > 0"));
    }
    let times: Vec<f64> = beats.iter().map(|&b| b as f64 / fs).collect();
    let samples = windows
        .starts(duration_s)
        .into_iter()
        .map(|s| {
            let e = s + windows.window_s;
            let lo = times.partition_point(|&t| t < s);
            let hi = times.partition_point(|&t| t < e);
            let inside = &times[lo..hi];
            let hr = (inside.len() >= 2).then(|| {
                inside.windows(2).map(|w| 60.0 / (w[1] - w[0])).sum::<f64>() / (inside.len() - 1) as f64
            });
            (s + windows.window_s / 2.0, hr)
        })
        .collect();
    HrSeries::new(samples)
}

/// Batch-mode heart rate: per window, embed each channel's confidences in a
/// zero-filled uniform series, remove its mean, and take the in-band DFT bin
/// with the largest magnitude across channels (`60 * f` bpm).
pub fn hr_from_confidence_dft(
    series: &ConfidenceSeries,
    fs: f64,
    duration_s: f64,
    windows: WindowSpec,
    band_hz: (f64, f64),
) -> Result<HrSeries> {
    windows.validate()?;
    if !(band_hz.0 >= 0.0 && band_hz.0 < band_hz.1) {
        return Err(Error::param("invalid DFT search band"));
    }
    let len = (windows.window_s * fs).round() as usize;
    if len < 2 {
        return Err(Error::param("window shorter than two samples"));
    }
    let mut planner = FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(len);
    let bin_hz = fs / len as f64;
    let k_lo = (band_hz.0 / bin_hz).ceil() as usize;
    let k_hi = ((band_hz.1 / bin_hz).floor() as usize).min(len / 2);

    let mut samples = Vec::new();
    for s in windows.starts(duration_s) {
        let start = (s * fs).round() as usize;
        let mut best: Option<(f64, usize)> = None;
        for ch in &series.channels {
            let lo = ch.partition_point(|&(i, _)| i < start);
            let hi = ch.partition_point(|&(i, _)| i < start + len);
            if lo == hi {
                continue;
            }
            let mut buf = vec![Complex::new(0.0, 0.0); len];
            for &(i, c) in &ch[lo..hi] {
                buf[i - start].re = c;
            }
            let mean = buf.iter().map(|z| z.re).sum::<f64>() / len as f64;
            buf.iter_mut().for_each(|z| z.re -= mean);
            fft.process(&mut buf);
            for (k, z) in buf.iter().enumerate().take(k_hi + 1).skip(k_lo) {
                let mag = z.norm();
                if best.is_none_or(|(m, _)| mag > m) {
                    best = Some((mag, k));
                }
            }
        }
        const MIN_MAGNITUDE: f64 = 1e-9;
        let hr = best.filter(|&(m, _)| m > MIN_MAGNITUDE).map(|(_, k)| 60.0 * k as f64 * bin_hz);
        samples.push((s + windows.window_s / 2.0, hr));
    }
    HrSeries::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn periodic_beats_give_exact_rate() {
        let beats: Vec<usize> = (0..300).map(|k| 50 + 100 * k).collect();
        let hr = hr_from_beats(&beats, 100.0, 300.0, WindowSpec::default()).unwrap();
        assert_eq!(hr.len(), 17);
        assert!(hr.values().all(|v| v == Some(60.0)));
        let beats: Vec<usize> = (0..400).map(|k| 20 + 75 * k).collect();
        let hr = hr_from_beats(&beats, 100.0, 300.0, WindowSpec::default()).unwrap();
        assert!(hr.values().all(|v| (v.unwrap() - 80.0).abs() < 1e-9));
    }

    #[test]
    fn sparse_windows_are_gaps() {
        let hr = hr_from_beats(&[100, 200], 100.0, 120.0, WindowSpec::default()).unwrap();
        assert_eq!(hr.samples[0], (30.0, Some(60.0)));
        assert!(hr.samples[1..].iter().all(|s| s.1.is_none()));
    }

    #[test]
    fn sinusoidal_confidence_peaks_at_72_bpm() {
        let fs = 100.0;
        let n = 18_000;
        let ch: Vec<(usize, f64)> = (0..n)
            .map(|i| (i, 2.0 + (2.0 * PI * 1.2 * i as f64 / fs).sin()))
            .collect();
        let series = ConfidenceSeries { channels: vec![ch] };
        let hr = hr_from_confidence_dft(&series, fs, 180.0, WindowSpec::default(), (0.66, 3.0)).unwrap();
        assert!(hr.values().all(|v| (v.unwrap() - 72.0).abs() <= 1.0));
    }

    #[test]
    fn constant_confidence_is_a_gap() {
        let ch: Vec<(usize, f64)> = (0..6000).map(|i| (i, 1.5)).collect();
        let series = ConfidenceSeries { channels: vec![ch] };
        let hr = hr_from_confidence_dft(&series, 100.0, 60.0, WindowSpec::default(), (0.66, 3.0)).unwrap();
        assert_eq!(hr.samples, vec![(30.0, None)]);
        let empty = ConfidenceSeries { channels: vec![vec![]] };
        let hr = hr_from_confidence_dft(&empty, 100.0, 60.0, WindowSpec::default(), (0.66, 3.0)).unwrap();
        assert_eq!(hr.samples, vec![(30.0, None)]);
    }
}
