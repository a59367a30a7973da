use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use dlfumi::baselines::{best_channel, Baseline, BaselineConfig};
use dlfumi::eval::{bbi_relative_error, bland_altman, mae, pearson_r, paired_t, per_beat_hr_pairs, HrSeries};
use dlfumi::io;
use dlfumi::pipeline::{self, reference_hr, TrainedModel};
use dlfumi::signal::Recording;
use dlfumi::synth::{generate, SynthConfig};

use crate::config::{Mode, RunConfig};
use crate::{at, with_suffix, BaselineArgs, CliError, DetectArgs, EvalArgs, Method, SynthArgs, TrainArgs};

fn read_recording(path: &Path) -> Result<Recording, CliError> {
    io::read_recording(path).map_err(at(path))
}

fn require_gt(rec: &Recording, path: &Path) -> Result<(), CliError> {
    if rec.gt_beat_times().is_none() {
        return Err(CliError::MissingGroundtruth(format!("{} has no gt column", path.display())));
    }
    Ok(())
}

fn write_err(path: &Path) -> impl FnOnce(dlfumi::Error) -> CliError + '_ {
    at(path)
}

pub fn synth(a: &SynthArgs) -> Result<(), CliError> {
    let kv = match &a.config {
        Some(p) => io::read_kv(p).map_err(at(p))?,
        None => BTreeMap::new(),
    };
    let mut cfg = SynthConfig::from_kv(&kv).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let out = generate(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    io::write_recording(&a.out, &out.recording).map_err(write_err(&a.out))?;

    let mut meta = cfg.to_kv();
    let template: Vec<String> = out.template.iter().map(f64::to_string).collect();
    meta.insert("template".into(), template.join(","));
    let meta_path = with_suffix(&a.out, ".meta");
    io::write_kv(&meta_path, &meta).map_err(write_err(&meta_path))?;
    Ok(())
}

fn run_config(config: Option<&Path>, mode: Option<Mode>, flags: &[(&str, String)]) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(config, mode)?;
    for (k, v) in flags {
        cfg.set(k, v)?;
    }
    Ok(cfg)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let mut cfg = run_config(a.config.as_deref(), a.mode, &a.fumi.pairs())?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut recordings = Vec::with_capacity(a.recordings.len());
    for p in &a.recordings {
        let rec = read_recording(p)?;
        require_gt(&rec, p)?;
        recordings.push(rec);
    }
    let training = pipeline::train(&recordings, &cfg.train, cfg.seed)?;
    let mut model = training.model;
    apply_overrides(&mut model, &cfg);

    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    let fit = &training.fit;
    let mut report = || -> std::io::Result<()> {
        writeln!(w, "iteration,objective")?;
        for (i, v) in fit.objective_trace.iter().enumerate() {
            writeln!(w, "{},{v}", i + 1)?;
        }
        writeln!(w, "# converged={} iterations={}", fit.converged, fit.iterations)?;
        let d = &model.detection;
        writeln!(
            w,
            "# threshold={} neighborhood={} min_votes={} refractory={} train_f1={}",
            d.threshold, d.neighborhood, d.min_votes, d.refractory, training.train_f1
        )
    };
    report().map_err(|e| CliError::Config(e.to_string()))?;
    io::save_model(&a.out, &model).map_err(write_err(&a.out))?;
    Ok(())
}

fn apply_overrides(model: &mut TrainedModel, cfg: &RunConfig) {
    let o = &cfg.detection;
    let d = &mut model.detection;
    d.threshold = o.threshold.unwrap_or(d.threshold);
    d.neighborhood = o.neighborhood.unwrap_or(d.neighborhood);
    d.min_votes = o.min_votes.unwrap_or(d.min_votes);
    d.refractory = o.refractory.unwrap_or(d.refractory);
}

const FEATURE_KEYS: &[&str] = &["low_hz", "high_hz", "filter_order", "min_separation", "half_len", "zscore"];

pub fn detect(a: &DetectArgs) -> Result<(), CliError> {
    let cfg = run_config(a.config.as_deref(), a.mode, &a.detection.pairs())?;
    let mut model = io::load_model(&a.model).map_err(|e| match e {
        dlfumi::Error::DimensionMismatch { .. } => CliError::ModelMismatch(format!("{}: {e}", a.model.display())),
        other => at(&a.model)(other),
    })?;
    apply_overrides(&mut model, &cfg);
    if FEATURE_KEYS.iter().any(|k| cfg.explicit.contains(*k)) {
        model.features = cfg.train.features.clone();
    }
    if cfg.explicit.contains("window_s") || cfg.explicit.contains("step_s") {
        model.windows = cfg.train.windows;
    }
    if model.features.instance_len() != model.dictionary.dim() {
        return Err(CliError::ModelMismatch(format!(
            "instances have {} samples but the dictionary atoms have {}",
            model.features.instance_len(),
            model.dictionary.dim()
        )));
    }
    let rec = read_recording(&a.recording)?;
    if rec.n_channels() < model.detection.min_votes {
        return Err(CliError::ModelMismatch(format!(
            "{} channels cannot reach {} votes",
            rec.n_channels(),
            model.detection.min_votes
        )));
    }
    let dft = a.dft || cfg.mode == Mode::Batch;
    let det = pipeline::detect(&rec, &model, dft).map_err(|e| match e {
        dlfumi::Error::DimensionMismatch { .. } => CliError::ModelMismatch(e.to_string()),
        other => CliError::Core(other),
    })?;
    let beats = with_suffix(&a.out, ".beats.csv");
    io::write_beats(&beats, &det.beats, rec.sample_rate_hz()).map_err(write_err(&beats))?;
    let hr = with_suffix(&a.out, ".hr.csv");
    io::write_hr(&hr, &det.hr).map_err(write_err(&hr))?;
    println!("beats={} windows={} dft={dft}", det.beats.len(), det.hr.len());
    Ok(())
}

fn stat<T: Display>(r: dlfumi::Result<T>) -> String {
    r.map(|v| v.to_string()).unwrap_or_else(|_| "NA".into())
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let cfg = run_config(a.config.as_deref(), None, &[])?;
    let windows = cfg.train.windows;
    let est = io::read_hr(&a.estimate).map_err(at(&a.estimate))?;
    let rec = read_recording(&a.gt)?;
    require_gt(&rec, &a.gt)?;
    let gt = reference_hr(&rec, windows)?;
    let fs = rec.sample_rate_hz();
    let gt_beats = rec.gt_beat_times().unwrap_or(&[]);

    let m = mae(&est, &gt).map_err(|e| CliError::EvalImpossible(e.to_string()))?;
    let pairs = est.paired_with(&gt);
    let (e, g): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();

    let mut report: BTreeMap<String, String> = BTreeMap::new();
    let mut put = |k: &str, v: String| {
        report.insert(k.to_string(), v);
    };
    put("mae_bpm", m.to_string());
    put("n_windows", pairs.len().to_string());
    put("pearson_r", stat(pearson_r(&e, &g)));
    put("paired_t_est_vs_gt", stat(paired_t(&e, &g)));

    let est_beats = match &a.beats {
        Some(p) => Some(io::read_beats(p).map_err(at(p))?.into_iter().map(|b| b.index).collect::<Vec<_>>()),
        None => None,
    };
    let ba_pairs = match &est_beats {
        Some(b) => {
            put("bbi_error_percent", stat(bbi_relative_error(b, gt_beats, fs)));
            put("bland_altman_basis", "per_beat".into());
            per_beat_hr_pairs(b, gt_beats, fs)
        }
        None => {
            put("bbi_error_percent", "NA".into());
            put("bland_altman_basis", "per_window".into());
            pairs.clone()
        }
    };
    match bland_altman(&ba_pairs) {
        Ok(ba) => {
            put("bland_altman_bias", ba.bias.to_string());
            put("bland_altman_sd", ba.sd.to_string());
            put("bland_altman_loa_low", ba.loa_low.to_string());
            put("bland_altman_loa_high", ba.loa_high.to_string());
        }
        Err(_) => {
            for k in ["bias", "sd", "loa_low", "loa_high"] {
                put(&format!("bland_altman_{k}"), "NA".into());
            }
        }
    }
    put("bland_altman_pairs", ba_pairs.len().to_string());

    let base = match &a.baseline {
        Some(p) => Some(io::read_hr(p).map_err(at(p))?),
        None => None,
    };
    if let Some(base) = &base {
        put("baseline_mae_bpm", stat(mae(base, &gt)));
        // paired over windows where all three series have a value
        let (mut ours, mut theirs) = (Vec::new(), Vec::new());
        for (t, v) in &est.samples {
            let find = |s: &HrSeries| s.samples.iter().find(|(u, _)| (u - t).abs() <= 1e-6).and_then(|x| x.1);
            if let (Some(v), Some(b), Some(r)) = (v, find(base), find(&gt)) {
                ours.push((v - r).abs());
                theirs.push((b - r).abs());
            }
        }
        put("paired_t_abs_error_vs_baseline", stat(paired_t(&ours, &theirs)));
    }
    io::write_kv(&a.out, &report).map_err(write_err(&a.out))?;

    let path = with_suffix(&a.out, ".windows.csv");
    write_windows(&path, &est, &gt, base.as_ref()).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    println!("mae_bpm={m}");
    Ok(())
}

fn write_windows(path: &Path, est: &HrSeries, gt: &HrSeries, base: Option<&HrSeries>) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let cell = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let at = |s: &HrSeries, t: f64| s.samples.iter().find(|(u, _)| (u - t).abs() <= 1e-6).and_then(|x| x.1);
    write!(w, "window_center_s,est_bpm,gt_bpm,abs_error")?;
    if base.is_some() {
        write!(w, ",baseline_bpm")?;
    }
    writeln!(w)?;
    for &(t, v) in &est.samples {
        let g = at(gt, t);
        write!(w, "{t},{},{},{}", cell(v), cell(g), cell(v.zip(g).map(|(a, b)| (a - b).abs())))?;
        if let Some(b) = base {
            write!(w, ",{}", cell(at(b, t)))?;
        }
        writeln!(w)?;
    }
    w.flush()
}

pub fn baseline(a: &BaselineArgs) -> Result<(), CliError> {
    let rec = read_recording(&a.recording)?;
    let method = match a.method {
        Method::Wppd => Baseline::Wppd,
        Method::En => Baseline::En,
    };
    let cfg = BaselineConfig::default();
    let channel = match (&a.train, a.channel) {
        (Some(p), _) => {
            let train = read_recording(p)?;
            require_gt(&train, p)?;
            let reference = reference_hr(&train, cfg.windows)?;
            best_channel(method, &train, &reference, &cfg)?.0
        }
        (None, Some(c)) => c,
        (None, None) => 0,
    };
    let signal = rec
        .channels()
        .get(channel)
        .ok_or_else(|| CliError::ModelMismatch(format!("recording has no channel {channel}")))?;
    let out = method.run(signal, rec.sample_rate_hz(), &cfg)?;
    let beats: Vec<_> = out
        .beats
        .iter()
        .map(|&index| dlfumi::hsd::Beat {
            index,
            confidence_sum: 0.0,
        })
        .collect();
    let bp = with_suffix(&a.out, ".beats.csv");
    io::write_beats(&bp, &beats, rec.sample_rate_hz()).map_err(write_err(&bp))?;
    let hp = with_suffix(&a.out, ".hr.csv");
    io::write_hr(&hp, &out.hr).map_err(write_err(&hp))?;
    println!(
        "method={} channel={channel} beats={} low_confidence={}",
        method.name(),
        out.beats.len(),
        out.low_confidence
    );
    Ok(())
}
