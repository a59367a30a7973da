//! Agreement statistics between estimated and reference heart rates / beats.

use crate::{Error, Result};

/// Windowed heart-rate estimates; `None` marks a window without an estimate.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct HrSeries {
    pub samples: Vec<(f64, Option<f64>)>,
}

impl HrSeries {
    pub fn new(samples: Vec<(f64, Option<f64>)>) -> Result<Self> {
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::param("HR series times must be strictly increasing"));
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = Option<f64>> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    /// `(est, gt)` pairs on matching times where neither side is a gap.
    pub fn paired_with(&self, gt: &HrSeries) -> Vec<(f64, f64)> {
        const TIME_TOL: f64 = 1e-6;
        let mut out = Vec::new();
        let mut j = 0;
        for &(t, v) in &self.samples {
            while j < gt.samples.len() && gt.samples[j].0 < t - TIME_TOL {
                j += 1;
            }
            if let Some(&(tg, g)) = gt.samples.get(j) {
                if (tg - t).abs() <= TIME_TOL {
                    if let (Some(a), Some(b)) = (v, g) {
                        out.push((a, b));
                    }
                }
            }
        }
        out
    }
}

/// Bland-Altman bias and 95% limits of agreement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementStats {
    pub bias: f64,
    pub sd: f64,
    pub loa_low: f64,
    pub loa_high: f64,
}

/// Mean absolute error over the windows where both series have a value.
pub fn mae(est: &HrSeries, gt: &HrSeries) -> Result<f64> {
    let pairs = est.paired_with(gt);
    if pairs.is_empty() {
        return Err(Error::InsufficientData("no overlapping HR windows".into()));
    }
    Ok(pairs.iter().map(|(a, b)| (a - b).abs()).sum::<f64>() / pairs.len() as f64)
}

/// Per-window absolute errors, `None` where either side is a gap or absent.
pub fn window_errors(est: &HrSeries, gt: &HrSeries) -> Vec<(f64, Option<f64>)> {
    est.samples
        .iter()
        .map(|&(t, v)| {
            let g = gt
                .samples
                .iter()
                .find(|(tg, _)| (tg - t).abs() <= 1e-6)
                .and_then(|s| s.1);
            (t, v.zip(g).map(|(a, b)| (a - b).abs()))
        })
        .collect()
}

/// One-to-one greedy matching by proximity: pairs `(est_pos, gt_pos)` (positions
/// into the two slices) with `|est - gt| <= tol`, closest pairs first, sorted
/// by `gt_pos`.
pub fn match_beats(est: &[usize], gt: &[usize], tol: usize) -> Vec<(usize, usize)> {
    let mut cands = Vec::new();
    let mut start = 0;
    for (i, &e) in est.iter().enumerate() {
        while start < gt.len() && gt[start] + tol < e {
            start += 1;
        }
        for (j, &g) in gt.iter().enumerate().skip(start) {
            if g > e + tol {
                break;
            }
            cands.push((e.abs_diff(g), i, j));
        }
    }
    cands.sort_unstable();
    let mut est_used = vec![false; est.len()];
    let mut gt_used = vec![false; gt.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in cands {
        if !est_used[i] && !gt_used[j] {
            est_used[i] = true;
            gt_used[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_by_key(|&(_, j)| j);
    pairs
}

/// Detection F1 with a matching tolerance of `tol` samples.
pub fn detection_f1(est: &[usize], gt: &[usize], tol: usize) -> f64 {
    if est.is_empty() && gt.is_empty() {
        return 1.0;
    }
    let tp = match_beats(est, gt, tol).len();
    2.0 * tp as f64 / (est.len() + gt.len()) as f64
}

/// Matched consecutive beat pairs `(est_interval, gt_interval)` in samples.
fn matched_intervals(est: &[usize], gt: &[usize], tol: usize) -> Vec<(f64, f64)> {
    let pairs = match_beats(est, gt, tol);
    pairs
        .windows(2)
        .filter(|w| w[1].1 == w[0].1 + 1 && w[1].0 == w[0].0 + 1)
        .map(|w| {
            let e = (est[w[1].0] - est[w[0].0]) as f64;
            let g = (gt[w[1].1] - gt[w[0].1]) as f64;
            (e, g)
        })
        .collect()
}

/// Mean absolute relative beat-to-beat interval error (percent). Beats are
/// matched one-to-one within +/-0.3 s; only intervals whose two endpoints are
/// consecutive matches on both sides are scored.
pub fn bbi_relative_error(est_beats: &[usize], gt_beats: &[usize], fs: f64) -> Result<f64> {
    let tol = (0.3 * fs).round() as usize;
    let iv = matched_intervals(est_beats, gt_beats, tol);
    if iv.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 matched beat intervals, found {}",
            iv.len()
        )));
    }
    Ok(100.0 * iv.iter().map(|(e, g)| (e - g).abs() / g).sum::<f64>() / iv.len() as f64)
}

/// Per-beat heart-rate pairs `(est_bpm, gt_bpm)` from matched consecutive intervals.
pub fn per_beat_hr_pairs(est_beats: &[usize], gt_beats: &[usize], fs: f64) -> Vec<(f64, f64)> {
    let tol = (0.3 * fs).round() as usize;
    matched_intervals(est_beats, gt_beats, tol)
        .into_iter()
        .map(|(e, g)| (60.0 * fs / e, 60.0 * fs / g))
        .collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Sample standard deviation (n - 1).
fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Bland-Altman agreement of `(est, gt)` pairs.
pub fn bland_altman(pairs: &[(f64, f64)]) -> Result<AgreementStats> {
    if pairs.len() < 2 {
        return Err(Error::InsufficientData("Bland-Altman needs at least 2 pairs".into()));
    }
    let diffs: Vec<f64> = pairs.iter().map(|(a, b)| a - b).collect();
    let bias = mean(&diffs);
    let sd = sd(&diffs);
    Ok(AgreementStats {
        bias,
        sd,
        loa_low: bias - 1.96 * sd,
        loa_high: bias + 1.96 * sd,
    })
}

/// Sample Pearson correlation coefficient.
pub fn pearson_r(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InsufficientData("Pearson r needs two equal-length samples of size >= 2".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InsufficientData("Pearson r undefined for constant input".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Paired t statistic `mean(a - b) / (sd(a - b) / sqrt(n))`.
pub fn paired_t(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InsufficientData("paired t needs two equal-length samples of size >= 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let s = sd(&d);
    if s == 0.0 || !s.is_finite() {
        return Err(Error::InsufficientData("paired t undefined: zero spread of differences".into()));
    }
    Ok(mean(&d) / (s / (d.len() as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn series(v: &[Option<f64>]) -> HrSeries {
        HrSeries::new(v.iter().enumerate().map(|(i, &x)| (30.0 + 15.0 * i as f64, x)).collect()).unwrap()
    }

    #[test]
    fn mae_examples() {
        let gt = series(&[Some(60.0), Some(62.0), None, Some(70.0)]);
        assert_eq!(mae(&gt, &gt).unwrap(), 0.0);
        let est = series(&[Some(61.0), Some(63.0), Some(50.0), Some(71.0)]);
        assert_eq!(mae(&est, &gt).unwrap(), 1.0);
        assert!(mae(&series(&[None, None]), &gt).is_err());
    }

    #[test]
    fn bbi_examples() {
        let gt: Vec<usize> = (0..20).map(|k| 100 + 100 * k).collect();
        assert_eq!(bbi_relative_error(&gt, &gt, 100.0).unwrap(), 0.0);
        let est: Vec<usize> = (0..20).map(|k| 100 + 105 * k).collect();
        // drift exceeds the 0.3 s tolerance after a few beats; matched part is exact 5%
        let e = bbi_relative_error(&est, &gt, 100.0).unwrap();
        assert!((e - 5.0).abs() < 1e-12, "{e}");
        assert!(bbi_relative_error(&[100], &gt, 100.0).is_err());
    }

    #[test]
    fn matching_is_one_to_one_and_nearest() {
        let pairs = match_beats(&[98, 103, 300], &[100, 200], 30);
        assert_eq!(pairs, vec![(0, 0)]);
        assert_eq!(detection_f1(&[100, 200], &[100, 200], 30), 1.0);
    }

    #[test]
    fn bland_altman_examples() {
        let same = bland_altman(&[(60.0, 60.0), (70.0, 70.0)]).unwrap();
        assert_eq!((same.bias, same.loa_low, same.loa_high), (0.0, 0.0, 0.0));
        let ba = bland_altman(&[(61.0, 60.0), (69.0, 70.0)]).unwrap();
        assert_eq!(ba.bias, 0.0);
        assert!((ba.sd - 2f64.sqrt()).abs() < 1e-15);
        assert!((ba.loa_high - 1.96 * 2f64.sqrt()).abs() < 1e-14);
        assert!(bland_altman(&[(1.0, 2.0)]).is_err());
    }

    #[test]
    fn pearson_examples() {
        let x = [1.0, 2.0, 3.0];
        assert!((pearson_r(&x, &x).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson_r(&x, &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        // hand evaluation: sxy = 3, sxx = 2, syy = 4.6667
        assert!((pearson_r(&x, &[2.0, 4.0, 5.0]).unwrap() - 0.9820).abs() < 1e-4);
        assert!(pearson_r(&x, &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn paired_t_examples() {
        let a = [1.0, 2.0, 3.0, 4.0];
        assert!(paired_t(&a, &a).is_err());
        let b: Vec<f64> = a.iter().map(|v| v - 1.0).collect();
        assert!(paired_t(&a, &b).is_err());
        let t = paired_t(&[1.0, 2.0, 3.0, 4.0], &[0.0; 4]).unwrap();
        assert!((t - 3.873).abs() < 1e-3, "{t}");
    }

    proptest! {
        #[test]
        fn statistic_symmetries(
            pairs in prop::collection::vec((40.0f64..180.0, 40.0f64..180.0), 3..40),
            scale in 0.1f64..10.0,
            shift in -50.0f64..50.0,
        ) {
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let r = pearson_r(&a, &b).unwrap();
            prop_assert!((-1.0..=1.0).contains(&r));
            let a2: Vec<f64> = a.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson_r(&a2, &b).unwrap() - r).abs() < 1e-10);
            prop_assert_eq!(paired_t(&a, &b).unwrap(), -paired_t(&b, &a).unwrap());
            let ba = bland_altman(&pairs).unwrap();
            prop_assert!(ba.loa_low <= ba.bias && ba.bias <= ba.loa_high);
            prop_assert!(((ba.loa_high - ba.bias) - (ba.bias - ba.loa_low)).abs() < 1e-12);
            let sa = series(&a.iter().map(|&v| Some(v)).collect::<Vec<_>>());
            let sb = series(&b.iter().map(|&v| Some(v)).collect::<Vec<_>>());
            prop_assert!(mae(&sa, &sb).unwrap() >= 0.0);
            prop_assert_eq!(mae(&sa, &sb).unwrap(), mae(&sb, &sa).unwrap());
        }
    }
}
