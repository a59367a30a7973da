//! Flat `key=value` run configuration.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::str::FromStr;

use dlfumi::fumi::FumiParams;
use dlfumi::io;
use dlfumi::pipeline::TrainConfig;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Mode {
    /// One subject: T = M = 3, beat-to-beat heart rate.
    #[default]
    Individual,
    /// Pooled subjects: T = M = 9, DFT heart rate.
    Batch,
    /// Apply a dictionary trained at rest to other data without retraining.
    Exercise,
}

impl FromStr for Mode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "individual" => Ok(Mode::Individual),
            "batch" => Ok(Mode::Batch),
            "exercise" => Ok(Mode::Exercise),
            other => Err(CliError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

pub const FUMI_KEYS: &[&str] = &[
    "n_target",
    "n_background",
    "lambda",
    "big_gamma",
    "beta",
    "psi",
    "inner_iters",
    "max_em_iters",
    "tol",
];

const OTHER_KEYS: &[&str] = &[
    "mode",
    "seed",
    "per_positive",
    "ridge",
    "code_iters",
    "low_hz",
    "high_hz",
    "filter_order",
    "min_separation",
    "half_len",
    "zscore",
    "window_s",
    "step_s",
    "threshold",
    "neighborhood",
    "min_votes",
    "refractory",
];

/// Detection-parameter overrides applied on top of a trained model.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectionOverrides {
    pub threshold: Option<f64>,
    pub neighborhood: Option<usize>,
    pub min_votes: Option<usize>,
    pub refractory: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub train: TrainConfig,
    pub detection: DetectionOverrides,
    /// Keys set from the file or flags (as opposed to defaults).
    pub explicit: BTreeSet<String>,
}

fn parse<T: FromStr>(key: &str, raw: &str) -> Result<T, CliError> {
    raw.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse {raw:?}")))
}

impl RunConfig {
    /// Defaults for `mode`, then every key in `kv`. A `mode` key in `kv` is
    /// ignored when `mode_flag` is given.
    pub fn from_kv(kv: &BTreeMap<String, String>, mode_flag: Option<Mode>) -> Result<Self, CliError> {
        if let Some(k) = kv
            .keys()
            .find(|k| !FUMI_KEYS.contains(&k.as_str()) && !OTHER_KEYS.contains(&k.as_str()))
        {
            return Err(CliError::Config(format!("unknown config key {k:?}")));
        }
        let mode = match (mode_flag, kv.get("mode")) {
            (Some(m), _) => m,
            (None, Some(raw)) => raw.parse()?,
            (None, None) => Mode::default(),
        };
        let mut cfg = RunConfig {
            mode,
            seed: 0,
            train: TrainConfig {
                fumi: if mode == Mode::Batch {
                    FumiParams::batch()
                } else {
                    FumiParams::default()
                },
                ..TrainConfig::default()
            },
            detection: DetectionOverrides::default(),
            explicit: BTreeSet::new(),
        };
        for (k, v) in kv {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, mode_flag: Option<Mode>) -> Result<Self, CliError> {
        let kv = match path {
            Some(p) => io::read_kv(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?,
            None => BTreeMap::new(),
        };
        Self::from_kv(&kv, mode_flag)
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<(), CliError> {
        let t = &mut self.train;
        let f = &mut t.fumi;
        match key {
            "mode" => {}
            "seed" => self.seed = parse(key, raw)?,
            "n_target" => f.n_target = parse(key, raw)?,
            "n_background" => f.n_background = parse(key, raw)?,
            "lambda" => f.lambda = parse(key, raw)?,
            "big_gamma" => f.big_gamma = parse(key, raw)?,
            "beta" => f.beta = parse(key, raw)?,
            "psi" => f.psi = if raw == "auto" { None } else { Some(parse(key, raw)?) },
            "inner_iters" => f.inner_iters = parse(key, raw)?,
            "max_em_iters" => f.max_em_iters = parse(key, raw)?,
            "tol" => f.tol = parse(key, raw)?,
            "per_positive" => t.per_positive = parse(key, raw)?,
            "ridge" => t.ridge = parse(key, raw)?,
            "code_iters" => t.code_iters = parse(key, raw)?,
            "low_hz" => t.features.low_hz = parse(key, raw)?,
            "high_hz" => t.features.high_hz = parse(key, raw)?,
            "filter_order" => t.features.filter_order = parse(key, raw)?,
            "min_separation" => t.features.min_separation = parse(key, raw)?,
            "half_len" => t.features.half_len = parse(key, raw)?,
            "zscore" => t.features.zscore = parse(key, raw)?,
            "window_s" => t.windows.window_s = parse(key, raw)?,
            "step_s" => t.windows.step_s = parse(key, raw)?,
            "threshold" => self.detection.threshold = Some(parse(key, raw)?),
            "neighborhood" => self.detection.neighborhood = Some(parse(key, raw)?),
            "min_votes" => self.detection.min_votes = Some(parse(key, raw)?),
            "refractory" => self.detection.refractory = Some(parse(key, raw)?),
            other => return Err(CliError::Config(format!("unknown config key {other:?}"))),
        }
        self.explicit.insert(key.to_string());
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn batch_mode_defaults() {
        let cfg = RunConfig::from_kv(&kv(&[("mode", "batch")]), None).unwrap();
        assert_eq!(cfg.train.fumi, FumiParams::batch());
        let cfg = RunConfig::from_kv(&kv(&[("mode", "batch")]), Some(Mode::Individual)).unwrap();
        assert_eq!(cfg.train.fumi, FumiParams::default());
    }

    #[test]
    fn keys_override_defaults() {
        let cfg = RunConfig::from_kv(&kv(&[("lambda", "0.01"), ("psi", "2"), ("threshold", "1.5"), ("seed", "9")]), None).unwrap();
        assert_eq!(cfg.train.fumi.lambda, 0.01);
        assert_eq!(cfg.train.fumi.psi, Some(2.0));
        assert_eq!(cfg.detection.threshold, Some(1.5));
        assert_eq!(cfg.seed, 9);
    }

    #[test]
    fn bad_keys_and_values() {
        assert!(RunConfig::from_kv(&kv(&[("lamda", "0.01")]), None).is_err());
        assert!(RunConfig::from_kv(&kv(&[("lambda", "x")]), None).is_err());
        assert!(RunConfig::from_kv(&kv(&[("mode", "sleep")]), None).is_err());
    }
}
