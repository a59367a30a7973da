use super::ConfidenceSeries;
use crate::{Error, Result};

/// Cross-channel voting parameters (all in samples except `threshold`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionParams {
    pub neighborhood: usize,
    pub threshold: f64,
    pub min_votes: usize,
    pub refractory: usize,
}

impl DetectionParams {
    /// Neighborhood 25 samples, threshold 1.32, two votes, 0.3 s refractory.
    pub fn for_sample_rate(fs: f64) -> Self {
        Self {
            neighborhood: 25,
            threshold: 1.32,
            min_votes: 2,
            refractory: (0.3 * fs).round() as usize,
        }
    }

    pub fn validate(&self, n_channels: usize) -> Result<()> {
        if self.neighborhood < 1 {
            return Err(Error::param("neighborhood must be >= 1"));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::param("threshold must be > 0"));
        }
        if self.min_votes < 1 || self.min_votes > n_channels {
            return Err(Error::param(format!(
                "min_votes must be in 1..={n_channels}, got {}",
                self.min_votes
            )));
        }
        Ok(())
    }
}

/// A confirmed heartbeat.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Beat {
    pub index: usize,
    pub confidence_sum: f64,
}

/// Confirm beats where supra-threshold candidates (`confidence >= threshold`)
/// from at least `min_votes` distinct channels fall within `neighborhood`
/// samples of each other. A beat sits at the median candidate index of its
/// cluster. Beats closer than `refractory` keep the larger confidence sum
/// (earlier on ties).
pub fn vote_beats(series: &ConfidenceSeries, params: &DetectionParams) -> Result<Vec<Beat>> {
    let confirmed = confirm_clusters(series, params)?;
    let mut beats: Vec<Beat> = Vec::with_capacity(confirmed.len());
    for b in confirmed {
        match beats.last_mut() {
            Some(last) if b.index.abs_diff(last.index) < params.refractory => {
                if b.confidence_sum > last.confidence_sum {
                    *last = b;
                }
            }
            _ => beats.push(b),
        }
    }
    Ok(beats)
}

/// Voting without the refractory pass: every supra-threshold candidate
/// anchors the window `[index, index + neighborhood]`, and windows holding
/// candidates from at least `min_votes` channels become candidate beats.
/// Overlapping windows are left for the refractory pass to resolve. A
/// qualifying anchor still qualifies at any lower threshold, so the result
/// can only shrink as the threshold rises.
pub fn confirm_clusters(series: &ConfidenceSeries, params: &DetectionParams) -> Result<Vec<Beat>> {
    params.validate(series.n_channels())?;
    let mut cands: Vec<(usize, usize, f64)> = series
        .channels
        .iter()
        .enumerate()
        .flat_map(|(ch, list)| {
            list.iter()
                .filter(|(_, c)| *c >= params.threshold)
                .map(move |&(idx, c)| (idx, ch, c))
        })
        .collect();
    cands.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut confirmed = Vec::new();
    let mut end = 0;
    let mut channels = Vec::new();
    for (i, &(start, _, _)) in cands.iter().enumerate() {
        if i > 0 && cands[i - 1].0 == start {
            continue;
        }
        end = end.max(i);
        while end + 1 < cands.len() && cands[end + 1].0 - start <= params.neighborhood {
            end += 1;
        }
        let cluster = &cands[i..=end];
        channels.clear();
        channels.extend(cluster.iter().map(|c| c.1));
        channels.sort_unstable();
        channels.dedup();
        if channels.len() >= params.min_votes {
            let n = cluster.len();
            // cluster is sorted by index
            let index = if n % 2 == 1 {
                cluster[n / 2].0
            } else {
                (cluster[n / 2 - 1].0 + cluster[n / 2].0) / 2
            };
            confirmed.push(Beat {
                index,
                confidence_sum: cluster.iter().map(|c| c.2).sum(),
            });
        }
    }
    Ok(confirmed)
}
