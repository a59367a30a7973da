//! Synthetic multichannel BCG with exact groundtruth beats.
//!
//! Each channel is a train of scaled, delayed and jittered copies of a
//! parametric J-peak template (a Gaussian-windowed cosine) plus a respiration
//! sinusoid and white noise. Beats follow a constant or sinusoidally varying
//! heart-rate profile.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::signal::{Recording, HALF_LEN, INSTANCE_LEN};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HrProfile {
    Constant { bpm: f64 },
    Sinusoidal { mean_bpm: f64, amplitude_bpm: f64, period_s: f64 },
}

impl HrProfile {
    pub fn bpm_at(&self, t: f64) -> f64 {
        match *self {
            HrProfile::Constant { bpm } => bpm,
            HrProfile::Sinusoidal {
                mean_bpm,
                amplitude_bpm,
                period_s,
            } => mean_bpm + amplitude_bpm * (2.0 * PI * t / period_s).sin(),
        }
    }

    /// Beats elapsed since `t = 0`: the integral of `HR / 60`.
    pub fn phase(&self, t: f64) -> f64 {
        match *self {
            HrProfile::Constant { bpm } => bpm * t / 60.0,
            HrProfile::Sinusoidal {
                mean_bpm,
                amplitude_bpm,
                period_s,
            } => {
                let w = 2.0 * PI / period_s;
                (mean_bpm * t - amplitude_bpm / w * ((w * t).cos() - 1.0)) / 60.0
            }
        }
    }

    /// Time average of the profile over `[t0, t1]`.
    pub fn mean_over(&self, t0: f64, t1: f64) -> f64 {
        60.0 * (self.phase(t1) - self.phase(t0)) / (t1 - t0)
    }

    fn min_bpm(&self) -> f64 {
        match *self {
            HrProfile::Constant { bpm } => bpm,
            HrProfile::Sinusoidal {
                mean_bpm,
                amplitude_bpm,
                ..
            } => mean_bpm - amplitude_bpm.abs(),
        }
    }
}

/// Gaussian-windowed cosine, `exp(-tau^2 / (2 sigma^2)) cos(2 pi f tau)` with
/// `sigma = width_s / 2`, sampled on `len` points and scaled to unit norm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateShape {
    pub carrier_hz: f64,
    pub width_s: f64,
}

impl Default for TemplateShape {
    fn default() -> Self {
        Self {
            carrier_hz: 7.0,
            width_s: 0.12,
        }
    }
}

impl TemplateShape {
    fn raw(&self, tau_s: f64) -> f64 {
        let sigma = self.width_s / 2.0;
        (-tau_s * tau_s / (2.0 * sigma * sigma)).exp() * (2.0 * PI * self.carrier_hz * tau_s).cos()
    }

    /// The unit-norm `INSTANCE_LEN`-sample template centred at sample `HALF_LEN`.
    pub fn sampled(&self, fs: f64) -> DVector<f64> {
        let v = DVector::from_fn(INSTANCE_LEN, |n, _| self.raw((n as f64 - HALF_LEN as f64) / fs));
        v.normalize()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub duration_s: f64,
    pub fs: f64,
    pub hr_profile: HrProfile,
    pub template: TemplateShape,
    /// One gain per channel; the channel count follows this length.
    pub gains: Vec<f64>,
    /// Per-channel delay of the BCG response after the reference beat (samples).
    pub delays: Vec<i64>,
    /// Per-beat, per-channel timing jitter (samples, standard deviation).
    pub jitter_sd: f64,
    pub resp_amplitude: f64,
    pub resp_hz: f64,
    pub noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let mut cfg = Self {
            duration_s: 300.0,
            fs: 100.0,
            hr_profile: HrProfile::Constant { bpm: 60.0 },
            template: TemplateShape::default(),
            gains: vec![0.15; 4],
            delays: vec![0, 3, 6, 9],
            jitter_sd: 2.0,
            resp_amplitude: 0.05,
            resp_hz: 0.25,
            noise_sd: 0.0,
            seed: 0,
        };
        cfg.set_snr_db(10.0);
        cfg
    }
}

impl SynthConfig {
    /// Set the noise level so that one beat's energy over an instance window
    /// (at the largest gain) is `db` above the window's noise energy.
    pub fn set_snr_db(&mut self, db: f64) {
        let gain = self.gains.iter().copied().fold(0.0, f64::max);
        self.noise_sd = gain / (INSTANCE_LEN as f64 * 10f64.powf(db / 10.0)).sqrt();
    }

    pub fn with_snr_db(mut self, db: f64) -> Self {
        self.set_snr_db(db);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0) {
            return Err(Error::param("fs must be > 0"));
        }
        if !(self.duration_s > 0.0) {
            return Err(Error::param("duration must be > 0"));
        }
        if self.gains.is_empty() || self.gains.len() != self.delays.len() {
            return Err(Error::param("need one gain and one delay per channel"));
        }
        if self.gains.iter().any(|&g| !(g >= 0.0)) {
            return Err(Error::param("gains must be >= 0"));
        }
        if !(self.hr_profile.min_bpm() > 0.0) {
            return Err(Error::param("heart-rate profile must stay positive"));
        }
        if !(self.noise_sd >= 0.0 && self.jitter_sd >= 0.0) {
            return Err(Error::param("noise and jitter must be >= 0"));
        }
        Ok(())
    }

    /// Flat key/value view (the sidecar / config file schema).
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let mut kv = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("duration_s", self.duration_s.to_string());
        put("fs", self.fs.to_string());
        match self.hr_profile {
            HrProfile::Constant { bpm } => {
                put("hr_mode", "constant".into());
                put("hr_bpm", bpm.to_string());
            }
            HrProfile::Sinusoidal {
                mean_bpm,
                amplitude_bpm,
                period_s,
            } => {
                put("hr_mode", "sinusoidal".into());
                put("hr_bpm", mean_bpm.to_string());
                put("hr_amplitude_bpm", amplitude_bpm.to_string());
                put("hr_period_s", period_s.to_string());
            }
        }
        put("carrier_hz", self.template.carrier_hz.to_string());
        put("width_s", self.template.width_s.to_string());
        put("gains", join(&self.gains));
        put("delays", join(&self.delays));
        put("jitter_sd", self.jitter_sd.to_string());
        put("resp_amplitude", self.resp_amplitude.to_string());
        put("resp_hz", self.resp_hz.to_string());
        put("noise_sd", self.noise_sd.to_string());
        put("seed", self.seed.to_string());
        kv
    }

    /// Build from key/value pairs; missing keys keep their defaults. `snr_db`,
    /// when present, overrides `noise_sd`.
    pub fn from_kv(kv: &BTreeMap<String, String>) -> Result<Self> {
        let mut cfg = Self::default();
        for key in kv.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::param(format!("unknown synth key `{key}`")));
            }
        }
        let get = |k: &str| kv.get(k).map(String::as_str);
        if let Some(v) = get("duration_s") {
            cfg.duration_s = num("duration_s", v)?;
        }
        if let Some(v) = get("fs") {
            cfg.fs = num("fs", v)?;
        }
        let mean = get("hr_bpm").map(|v| num("hr_bpm", v)).transpose()?.unwrap_or(60.0);
        cfg.hr_profile = match get("hr_mode").unwrap_or("constant") {
            "constant" => HrProfile::Constant { bpm: mean },
            "sinusoidal" => HrProfile::Sinusoidal {
                mean_bpm: mean,
                amplitude_bpm: get("hr_amplitude_bpm").map(|v| num("hr_amplitude_bpm", v)).transpose()?.unwrap_or(5.0),
                period_s: get("hr_period_s").map(|v| num("hr_period_s", v)).transpose()?.unwrap_or(60.0),
            },
            other => return Err(Error::param(format!("unknown hr_mode `{other}`"))),
        };
        if let Some(v) = get("carrier_hz") {
            cfg.template.carrier_hz = num("carrier_hz", v)?;
        }
        if let Some(v) = get("width_s") {
            cfg.template.width_s = num("width_s", v)?;
        }
        if let Some(v) = get("gains") {
            cfg.gains = list("gains", v)?;
        }
        if let Some(v) = get("delays") {
            cfg.delays = list("delays", v)?;
        }
        if let Some(v) = get("jitter_sd") {
            cfg.jitter_sd = num("jitter_sd", v)?;
        }
        if let Some(v) = get("resp_amplitude") {
            cfg.resp_amplitude = num("resp_amplitude", v)?;
        }
        if let Some(v) = get("resp_hz") {
            cfg.resp_hz = num("resp_hz", v)?;
        }
        if let Some(v) = get("noise_sd") {
            cfg.noise_sd = num("noise_sd", v)?;
        } else {
            cfg.set_snr_db(10.0);
        }
        if let Some(v) = get("snr_db") {
            cfg.set_snr_db(num("snr_db", v)?);
        }
        if let Some(v) = get("seed") {
            cfg.seed = num("seed", v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

const KNOWN_KEYS: &[&str] = &[
    "duration_s",
    "fs",
    "hr_mode",
    "hr_bpm",
    "hr_amplitude_bpm",
    "hr_period_s",
    "carrier_hz",
    "width_s",
    "gains",
    "delays",
    "jitter_sd",
    "resp_amplitude",
    "resp_hz",
    "noise_sd",
    "snr_db",
    "seed",
];


fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::param(format!("bad value for `{key}`: `{v}`")))
}

fn list<T: std::str::FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
    v.split(',').map(|s| num(key, s)).collect()
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

/// A generated recording together with everything needed to score it.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub recording: Recording,
    /// The planted unit-norm template.
    pub template: DVector<f64>,
    pub hr_profile: HrProfile,
    /// Undelayed beat instants (seconds) before rounding to samples.
    pub beat_times_s: Vec<f64>,
}

/// Generate a recording. Bit-identical for identical configs.
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let n = (cfg.duration_s * cfg.fs).round() as usize;
    let profile = cfg.hr_profile;

    // beats at phase k + 1/2
    let mut beat_times_s = Vec::new();
    let max_gap = 60.0 / profile.min_bpm() + 1.0;
    let mut t_prev = 0.0;
    for k in 0.. {
        let target = k as f64 + 0.5;
        let (mut lo, mut hi) = (t_prev, t_prev + max_gap);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if profile.phase(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t = 0.5 * (lo + hi);
        if (t * cfg.fs).round() as usize >= n {
            break;
        }
        beat_times_s.push(t);
        t_prev = t;
    }
    let gt: Vec<usize> = beat_times_s.iter().map(|t| (t * cfg.fs).round() as usize).collect();

    let template = cfg.template.sampled(cfg.fs);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jitter = Normal::new(0.0, cfg.jitter_sd.max(f64::MIN_POSITIVE)).expect("finite sd");
    let noise = Normal::new(0.0, cfg.noise_sd.max(f64::MIN_POSITIVE)).expect("finite sd");

    let mut channels = Vec::with_capacity(cfg.gains.len());
    for (ch, (&gain, &delay)) in cfg.gains.iter().zip(&cfg.delays).enumerate() {
        let mut x = vec![0.0; n];
        let resp_phase = ch as f64 * 0.3;
        for (i, v) in x.iter_mut().enumerate() {
            let t = i as f64 / cfg.fs;
            *v = cfg.resp_amplitude * (2.0 * PI * cfg.resp_hz * t + resp_phase).sin();
        }
        for &b in &gt {
            let j = if cfg.jitter_sd > 0.0 {
                jitter.sample(&mut rng).round() as i64
            } else {
                0
            };
            let center = b as i64 + delay + j;
            for (m, &tv) in template.iter().enumerate() {
                let idx = center + m as i64 - HALF_LEN as i64;
                if idx >= 0 && (idx as usize) < n {
                    x[idx as usize] += gain * tv;
                }
            }
        }
        if cfg.noise_sd > 0.0 {
            x.iter_mut().for_each(|v| *v += noise.sample(&mut rng));
        }
        channels.push(x);
    }

    Ok(SynthOutput {
        recording: Recording::new(channels, cfg.fs, Some(gt))?,
        template,
        hr_profile: profile,
        beat_times_s,
    })
}
