//! Butterworth IIR design (second-order sections) and forward-backward filtering.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::{Error, Result};

/// Cascade of biquads, each `[b0, b1, b2, a1, a2]` with `a0 = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    sections: Vec<[f64; 5]>,
}

/// Edge placement of the analog prototype.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Edges {
    /// -3 dB at the edges for a single pass.
    SinglePass,
    /// -3 dB at the edges after the forward-backward (squared) response.
    ForwardBackward,
}

impl Edges {
    /// Normalised prototype frequency at which the requested edge should sit.
    fn scale(self, proto_order: usize) -> f64 {
        match self {
            Edges::SinglePass => 1.0,
            Edges::ForwardBackward => (2f64.sqrt() - 1.0).powf(1.0 / (2.0 * proto_order as f64)),
        }
    }
}

fn prewarp(f: f64, fs: f64) -> f64 {
    2.0 * fs * (PI * f / fs).tan()
}

fn bilinear(s: Complex64, fs: f64) -> Complex64 {
    let k = Complex64::new(2.0 * fs, 0.0);
    (k + s) / (k - s)
}

/// Left-half-plane poles of the order-n analog Butterworth low-pass at unit cutoff.
fn prototype_poles(n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| {
            let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            Complex64::from_polar(1.0, theta)
        })
        .collect()
}

/// Group digital poles into conjugate (or real) pairs -> denominators `[a1, a2]`.
fn pair_poles(mut poles: Vec<Complex64>) -> Vec<[f64; 2]> {
    const IM_TOL: f64 = 1e-10;
    poles.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    let mut out = Vec::new();
    let mut reals = Vec::new();
    for p in &poles {
        if p.im > IM_TOL {
            out.push([-2.0 * p.re, p.norm_sqr()]);
        } else if p.im.abs() <= IM_TOL {
            reals.push(p.re);
        }
    }
    for pair in reals.chunks(2) {
        match pair {
            [a, b] => out.push([-(a + b), a * b]),
            [a] => out.push([-a, 0.0]),
            _ => unreachable!(),
        }
    }
    out
}

impl Sos {
    fn validate_fs(fs: f64) -> Result<()> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::param(format!("sample rate must be positive, got {fs}")));
        }
        Ok(())
    }

    /// Band-pass of total order `order` (even): an order/2 low-pass prototype
    /// mapped to the band. With `zero_phase`, the edges are placed so the
    /// forward-backward response is -3 dB at `low` and `high`.
    pub fn bandpass(order: usize, low: f64, high: f64, fs: f64, zero_phase: bool) -> Result<Self> {
        Self::validate_fs(fs)?;
        if !(low > 0.0 && low < high && high < fs / 2.0) {
            return Err(Error::param(format!(
                "band edges must satisfy 0 < low < high < fs/2, got low={low} high={high} fs={fs}"
            )));
        }
        if order < 2 || !order.is_multiple_of(2) {
            return Err(Error::param(format!("band-pass order must be even and >= 2, got {order}")));
        }
        let n = order / 2;
        let edges = if zero_phase { Edges::ForwardBackward } else { Edges::SinglePass };
        let (wa, wb) = (prewarp(low, fs), prewarp(high, fs));
        let w0 = (wa * wb).sqrt();
        let bw = (wb - wa) / edges.scale(n);

        let mut poles = Vec::with_capacity(2 * n);
        for p in prototype_poles(n) {
            // s^2 - p*bw*s + w0^2 = 0
            let pb = p * bw;
            let disc = (pb * pb - 4.0 * w0 * w0).sqrt();
            for s in [(pb + disc) / 2.0, (pb - disc) / 2.0] {
                poles.push(bilinear(s, fs));
            }
        }
        let sections: Vec<[f64; 5]> = pair_poles(poles)
            .into_iter()
            .map(|[a1, a2]| [1.0, 0.0, -1.0, a1, a2])
            .collect();
        let mut sos = Sos { sections };
        let f0 = fs / PI * (w0 / (2.0 * fs)).atan();
        sos.normalize_at(f0, fs);
        Ok(sos)
    }

    /// Butterworth low-pass of order `order`.
    pub fn lowpass(order: usize, cutoff: f64, fs: f64, zero_phase: bool) -> Result<Self> {
        Self::validate_fs(fs)?;
        if !(cutoff > 0.0 && cutoff < fs / 2.0) {
            return Err(Error::param(format!(
                "cutoff must satisfy 0 < cutoff < fs/2, got {cutoff} (fs={fs})"
            )));
        }
        if order == 0 {
            return Err(Error::param("low-pass order must be >= 1"));
        }
        let edges = if zero_phase { Edges::ForwardBackward } else { Edges::SinglePass };
        let wc = prewarp(cutoff, fs) / edges.scale(order);
        let poles = prototype_poles(order)
            .into_iter()
            .map(|p| bilinear(p * wc, fs))
            .collect();
        let sections = pair_poles(poles)
            .into_iter()
            .map(|[a1, a2]| {
                if a2 == 0.0 {
                    [1.0, 1.0, 0.0, a1, a2]
                } else {
                    [1.0, 2.0, 1.0, a1, a2]
                }
            })
            .collect();
        let mut sos = Sos { sections };
        sos.normalize_at(0.0, fs);
        Ok(sos)
    }

    pub fn n_sections(&self) -> usize {
        self.sections.len()
    }

    /// Complex frequency response at `f` Hz.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -2.0 * PI * f / fs);
        let z2 = z1 * z1;
        self.sections
            .iter()
            .map(|&[b0, b1, b2, a1, a2]| (b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2))
            .product()
    }

    fn normalize_at(&mut self, f: f64, fs: f64) {
        let g = self.response(f, fs).norm();
        if let Some(first) = self.sections.first_mut() {
            for b in &mut first[..3] {
                *b /= g;
            }
        }
    }

    /// Single causal pass (transposed direct form II, zero initial state).
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = x.to_vec();
        for &[b0, b1, b2, a1, a2] in &self.sections {
            let (mut s1, mut s2) = (0.0, 0.0);
            for v in y.iter_mut() {
                let xin = *v;
                let out = b0 * xin + s1;
                s1 = b1 * xin - a1 * out + s2;
                s2 = b2 * xin - a2 * out;
                *v = out;
            }
        }
        y
    }
}

/// Zero-phase forward-backward filtering with odd-reflection padding of
/// `padlen` samples at each end (clamped to `len - 1`).
pub fn filtfilt(sos: &Sos, x: &[f64], padlen: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let pad = padlen.min(n - 1);
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let mut y = sos.apply(&ext);
    y.reverse();
    let mut y = sos.apply(&y);
    y.reverse();
    y[pad..pad + n].to_vec()
}

/// Padding long enough for the slowest pole of a filter whose lowest edge is `f_low`.
fn default_padlen(sos: &Sos, fs: f64, f_low: f64) -> usize {
    let by_order = 3 * (2 * sos.n_sections() + 1);
    let by_time = (3.0 * fs / f_low).ceil() as usize;
    by_order.max(by_time)
}

/// Zero-phase Butterworth band-pass; -3 dB (of the overall response) at both edges.
pub fn bandpass_filter(signal: &[f64], fs: f64, low: f64, high: f64, order: usize) -> Result<Vec<f64>> {
    let sos = Sos::bandpass(order, low, high, fs, true)?;
    Ok(filtfilt(&sos, signal, default_padlen(&sos, fs, low)))
}

/// Zero-phase Butterworth low-pass; -3 dB (of the overall response) at `cutoff`.
pub fn lowpass_filter(signal: &[f64], fs: f64, cutoff: f64, order: usize) -> Result<Vec<f64>> {
    let sos = Sos::lowpass(order, cutoff, fs, true)?;
    Ok(filtfilt(&sos, signal, default_padlen(&sos, fs, cutoff)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sine(f: f64, fs: f64, secs: f64) -> Vec<f64> {
        let n = (fs * secs) as usize;
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    /// RMS-based amplitude over the middle of the record, away from edge transients.
    fn steady_amplitude(y: &[f64]) -> f64 {
        let (a, b) = (y.len() / 4, 3 * y.len() / 4);
        let rms = (y[a..b].iter().map(|v| v * v).sum::<f64>() / (b - a) as f64).sqrt();
        rms * 2f64.sqrt()
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(bandpass_filter(&[0.0; 10], 100.0, 10.0, 0.4, 6).is_err());
        assert!(bandpass_filter(&[0.0; 10], 100.0, 0.4, 60.0, 6).is_err());
        assert!(bandpass_filter(&[0.0; 10], 0.0, 0.4, 10.0, 6).is_err());
        assert!(bandpass_filter(&[0.0; 10], 100.0, 0.4, 10.0, 5).is_err());
        assert!(bandpass_filter(&[0.0; 10], 100.0, 0.0, 10.0, 6).is_err());
    }

    #[test]
    fn squared_design_response_is_minus_3db_at_edges() {
        let sos = Sos::bandpass(6, 0.4, 10.0, 100.0, true).unwrap();
        for f in [0.4, 10.0] {
            // forward-backward magnitude is |H|^2
            let g2 = sos.response(f, 100.0).norm_sqr();
            let db = 20.0 * g2.log10();
            assert!((db + 3.0103).abs() < 1e-6, "f={f}: {db} dB");
        }
        let single = Sos::bandpass(6, 0.4, 10.0, 100.0, false).unwrap();
        let db = 20.0 * single.response(0.4, 100.0).norm().log10();
        assert!((db + 3.0103).abs() < 1e-6);
    }

    #[test]
    fn dc_is_rejected() {
        let y = bandpass_filter(&vec![1.0; 6000], 100.0, 0.4, 10.0, 6).unwrap();
        let tail = &y[1000..5000];
        assert!(tail.iter().all(|v| v.abs() < 0.01));
    }

    #[test]
    fn passband_sine_keeps_unit_amplitude() {
        // Analytic squared Butterworth magnitude at 2 Hz is 0.99998.
        let y = bandpass_filter(&sine(2.0, 100.0, 60.0), 100.0, 0.4, 10.0, 6).unwrap();
        let a = steady_amplitude(&y);
        assert!((0.95..=1.05).contains(&a), "{a}");
    }

    #[test]
    fn lower_edge_sine_is_attenuated_3db() {
        let y = bandpass_filter(&sine(0.4, 100.0, 200.0), 100.0, 0.4, 10.0, 6).unwrap();
        let a = steady_amplitude(&y);
        assert!((a - 10f64.powf(-3.0 / 20.0)).abs() < 0.04, "{a}");
    }

    #[test]
    fn lowpass_edge_and_dc() {
        let sos = Sos::lowpass(2, 4.0, 100.0, true).unwrap();
        assert!((sos.response(0.0, 100.0).norm() - 1.0).abs() < 1e-12);
        let db = 20.0 * sos.response(4.0, 100.0).norm_sqr().log10();
        assert!((db + 3.0103).abs() < 1e-6);
        let odd = Sos::lowpass(3, 4.0, 100.0, false).unwrap();
        assert_eq!(odd.n_sections(), 2);
        let db = 20.0 * odd.response(4.0, 100.0).norm().log10();
        assert!((db + 3.0103).abs() < 1e-6);
    }

    #[test]
    fn empty_signal() {
        assert!(bandpass_filter(&[], 100.0, 0.4, 10.0, 6).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn filtering_is_linear(
            x in prop::collection::vec(-1.0f64..1.0, 50..400),
            seed in prop::collection::vec(-1.0f64..1.0, 400),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let y: Vec<f64> = seed[..x.len()].to_vec();
            let combo: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
            let fx = bandpass_filter(&x, 100.0, 0.4, 10.0, 6).unwrap();
            let fy = bandpass_filter(&y, 100.0, 0.4, 10.0, 6).unwrap();
            let fc = bandpass_filter(&combo, 100.0, 0.4, 10.0, 6).unwrap();
            let scale = fc.iter().map(|v| v.abs()).fold(1e-300, f64::max);
            for i in 0..x.len() {
                let expect = a * fx[i] + b * fy[i];
                prop_assert!((fc[i] - expect).abs() <= 1e-9 * scale.max(1.0));
            }
        }
    }
}
