//! On-disk formats. Floats are written with `{}` (shortest round-trip
//! representation), so a value read back is bit-identical and two runs that
//! compute the same numbers write the same bytes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};

use crate::eval::HrSeries;
use crate::fumi::Dictionary;
use crate::hsd::{BackgroundModel, Beat, DetectionParams, WindowSpec};
use crate::pipeline::TrainedModel;
use crate::signal::{FeatureConfig, Recording};
use crate::{Error, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Format(format!("{what}: cannot parse {s:?} as a number")))
}

fn csv_reader(path: &Path, headers: bool) -> Result<csv::Reader<File>> {
    Ok(csv::ReaderBuilder::new()
        .has_headers(headers)
        .trim(csv::Trim::All)
        .from_path(path)?)
}

/// Recording CSV: header `t,ch0,...,chN[,gt]`, one row per sample. The `gt`
/// column holds 1 at groundtruth beat samples and 0 elsewhere.
pub fn write_recording(path: &Path, rec: &Recording) -> Result<()> {
    let mut w = create(path)?;
    let n_ch = rec.n_channels();
    let gt = rec.gt_beat_times();
    write!(w, "t")?;
    for c in 0..n_ch {
        write!(w, ",ch{c}")?;
    }
    if gt.is_some() {
        write!(w, ",gt")?;
    }
    writeln!(w)?;
    let fs = rec.sample_rate_hz();
    let mut next_beat = 0;
    for i in 0..rec.len() {
        write!(w, "{}", i as f64 / fs)?;
        for ch in rec.channels() {
            write!(w, ",{}", ch[i])?;
        }
        if let Some(gt) = gt {
            let hit = gt.get(next_beat) == Some(&i);
            if hit {
                next_beat += 1;
            }
            write!(w, ",{}", u8::from(hit))?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a recording CSV. The sample rate is inferred from the time column,
/// which must be uniform to within a thousandth of a sample.
pub fn read_recording(path: &Path) -> Result<Recording> {
    let mut rdr = csv_reader(path, true)?;
    let headers = rdr.headers()?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.first() != Some(&"t") {
        return Err(Error::Format("recording header must start with `t`".into()));
    }
    let has_gt = names.last() == Some(&"gt");
    let n_ch = names.len() - 1 - usize::from(has_gt);
    if n_ch == 0 {
        return Err(Error::Format("recording has no channel columns".into()));
    }
    for (c, name) in names[1..=n_ch].iter().enumerate() {
        if *name != format!("ch{c}") {
            return Err(Error::Format(format!("expected column ch{c}, found {name:?}")));
        }
    }

    let mut t = Vec::new();
    let mut channels = vec![Vec::new(); n_ch];
    let mut gt = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != names.len() {
            return Err(Error::Format(format!(
                "row {}: expected {} fields, found {}",
                row + 1,
                names.len(),
                rec.len()
            )));
        }
        t.push(parse_f64(&rec[0], "t")?);
        for (c, ch) in channels.iter_mut().enumerate() {
            ch.push(parse_f64(&rec[c + 1], "channel")?);
        }
        if has_gt {
            match &rec[n_ch + 1] {
                "1" => gt.push(row),
                "0" => {}
                other => return Err(Error::Format(format!("row {}: gt must be 0 or 1, got {other:?}", row + 1))),
            }
        }
    }
    if t.len() < 2 {
        return Err(Error::Format("recording needs at least two samples".into()));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(Error::Format("time column must increase".into()));
    }
    let mut fs = (t.len() - 1) as f64 / span;
    if (fs - fs.round()).abs() <= 1e-9 * fs {
        fs = fs.round();
    }
    let tol = 1e-3 / fs;
    if let Some(i) = (0..t.len()).find(|&i| (t[i] - t[0] - i as f64 / fs).abs() > tol) {
        return Err(Error::Format(format!("time column is not uniformly sampled at row {}", i + 1)));
    }
    Recording::new(channels, fs, has_gt.then_some(gt))
}

/// Dictionary CSV: header `kind,s0,...`, one row per atom, `kind` is
/// `target` or `background`. Targets come first.
pub fn write_dictionary(path: &Path, dict: &Dictionary) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "kind")?;
    for s in 0..dict.dim() {
        write!(w, ",s{s}")?;
    }
    writeln!(w)?;
    let rows = (0..dict.n_target())
        .map(|t| ("target", dict.target_atom(t)))
        .chain((0..dict.n_background()).map(|k| ("background", dict.background_atom(k))));
    for (kind, atom) in rows {
        write!(w, "{kind}")?;
        for v in atom.iter() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dictionary(path: &Path) -> Result<Dictionary> {
    let mut rdr = csv_reader(path, true)?;
    let dim = rdr.headers()?.len().saturating_sub(1);
    if dim == 0 {
        return Err(Error::Format("dictionary has no sample columns".into()));
    }
    let mut target = Vec::new();
    let mut background = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Format(format!("dictionary row has {} fields, expected {}", rec.len(), dim + 1)));
        }
        let atom = rec.iter().skip(1).map(|s| parse_f64(s, "atom")).collect::<Result<Vec<_>>>()?;
        match &rec[0] {
            "target" => target.push(DVector::from_vec(atom)),
            "background" => background.push(DVector::from_vec(atom)),
            other => return Err(Error::Format(format!("unknown atom kind {other:?}"))),
        }
    }
    if target.is_empty() || background.is_empty() {
        return Err(Error::Format("dictionary needs target and background atoms".into()));
    }
    Dictionary::new(DMatrix::from_columns(&target), DMatrix::from_columns(&background))
}

/// Square matrix as headerless CSV.
pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = create(path)?;
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| m[(r, c)].to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let mut rows = Vec::new();
    for rec in csv_reader(path, false)?.records() {
        let rec = rec?;
        rows.push(rec.iter().map(|s| parse_f64(s, "matrix")).collect::<Result<Vec<_>>>()?);
    }
    let n = rows.len();
    if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(Error::Format("matrix rows are empty or ragged".into()));
    }
    Ok(DMatrix::from_fn(n, rows[0].len(), |r, c| rows[r][c]))
}

/// Beats CSV: `beat_index,beat_time_s,confidence_sum`.
pub fn write_beats(path: &Path, beats: &[Beat], fs: f64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "beat_index,beat_time_s,confidence_sum")?;
    for b in beats {
        writeln!(w, "{},{},{}", b.index, b.index as f64 / fs, b.confidence_sum)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_beats(path: &Path) -> Result<Vec<Beat>> {
    let mut out = Vec::new();
    for rec in csv_reader(path, true)?.records() {
        let rec = rec?;
        if rec.len() != 3 {
            return Err(Error::Format("beats row must have 3 fields".into()));
        }
        let index = rec[0]
            .parse()
            .map_err(|_| Error::Format(format!("bad beat index {:?}", &rec[0])))?;
        out.push(Beat {
            index,
            confidence_sum: parse_f64(&rec[2], "confidence_sum")?,
        });
    }
    Ok(out)
}

/// HR CSV: `window_center_s,hr_bpm`, empty `hr_bpm` for gaps.
pub fn write_hr(path: &Path, hr: &HrSeries) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "window_center_s,hr_bpm")?;
    for (t, v) in &hr.samples {
        match v {
            Some(v) => writeln!(w, "{t},{v}")?,
            None => writeln!(w, "{t},")?,
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_hr(path: &Path) -> Result<HrSeries> {
    let mut samples = Vec::new();
    for rec in csv_reader(path, true)?.records() {
        let rec = rec?;
        if rec.len() != 2 {
            return Err(Error::Format("HR row must have 2 fields".into()));
        }
        let t = parse_f64(&rec[0], "window_center_s")?;
        let v = if rec[1].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[1], "hr_bpm")?)
        };
        samples.push((t, v));
    }
    HrSeries::new(samples)
}

/// Flat `key=value` text, one pair per line, sorted by key.
pub fn write_kv(path: &Path, kv: &BTreeMap<String, String>) -> Result<()> {
    let mut w = create(path)?;
    for (k, v) in kv {
        writeln!(w, "{k}={v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Parse `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>> {
    let mut kv = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("line {}: expected key=value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Format(format!("line {}: empty key", n + 1)));
        }
        if kv.insert(k.to_string(), v.trim().to_string()).is_some() {
            return Err(Error::Format(format!("line {}: duplicate key {k:?}", n + 1)));
        }
    }
    Ok(kv)
}

pub fn read_kv(path: &Path) -> Result<BTreeMap<String, String>> {
    let mut text = String::new();
    for line in BufReader::new(File::open(path)?).lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_kv(&text)
}

/// Look up and parse a required key.
pub fn kv_get<T: std::str::FromStr>(kv: &BTreeMap<String, String>, key: &str) -> Result<T> {
    let raw = kv.get(key).ok_or_else(|| Error::Format(format!("missing key {key:?}")))?;
    raw.parse()
        .map_err(|_| Error::Format(format!("key {key:?}: cannot parse {raw:?}")))
}

/// Sidecar paths of a model whose dictionary lives at `dict`.
pub fn model_paths(dict: &Path) -> (PathBuf, PathBuf) {
    let mut params = dict.as_os_str().to_owned();
    params.push(".params");
    let mut cov = dict.as_os_str().to_owned();
    cov.push(".cov.csv");
    (PathBuf::from(params), PathBuf::from(cov))
}

fn model_kv(model: &TrainedModel) -> BTreeMap<String, String> {
    let f = &model.features;
    let d = &model.detection;
    [
        ("instance_len", f.instance_len().to_string()),
        ("lambda", model.lambda.to_string()),
        ("code_iters", model.code_iters.to_string()),
        ("ridge", model.background.ridge().to_string()),
        ("neighborhood", d.neighborhood.to_string()),
        ("threshold", d.threshold.to_string()),
        ("min_votes", d.min_votes.to_string()),
        ("refractory", d.refractory.to_string()),
        ("low_hz", f.low_hz.to_string()),
        ("high_hz", f.high_hz.to_string()),
        ("filter_order", f.filter_order.to_string()),
        ("min_separation", f.min_separation.to_string()),
        ("half_len", f.half_len.to_string()),
        ("zscore", f.zscore.to_string()),
        ("window_s", model.windows.window_s.to_string()),
        ("step_s", model.windows.step_s.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Write the dictionary at `dict` plus `<dict>.params` (key=value) and
/// `<dict>.cov.csv` (background covariance).
pub fn save_model(dict: &Path, model: &TrainedModel) -> Result<()> {
    let (params, cov) = model_paths(dict);
    write_dictionary(dict, &model.dictionary)?;
    write_kv(&params, &model_kv(model))?;
    write_matrix(&cov, model.background.covariance())
}

pub fn load_model(dict: &Path) -> Result<TrainedModel> {
    let (params, cov) = model_paths(dict);
    let dictionary = read_dictionary(dict)?;
    let kv = read_kv(&params)?;
    let background = BackgroundModel::from_covariance(read_matrix(&cov)?)?;
    let features = FeatureConfig {
        low_hz: kv_get(&kv, "low_hz")?,
        high_hz: kv_get(&kv, "high_hz")?,
        filter_order: kv_get(&kv, "filter_order")?,
        min_separation: kv_get(&kv, "min_separation")?,
        half_len: kv_get(&kv, "half_len")?,
        zscore: kv_get(&kv, "zscore")?,
    };
    let instance_len: usize = kv_get(&kv, "instance_len")?;
    for (actual, context) in [
        (features.instance_len(), "model params instance_len"),
        (dictionary.dim(), "dictionary atom length"),
        (background.dim(), "background covariance size"),
    ] {
        if actual != instance_len {
            return Err(Error::DimensionMismatch {
                expected: instance_len,
                actual,
                context,
            });
        }
    }
    Ok(TrainedModel {
        dictionary,
        background,
        lambda: kv_get(&kv, "lambda")?,
        code_iters: kv_get(&kv, "code_iters")?,
        detection: DetectionParams {
            neighborhood: kv_get(&kv, "neighborhood")?,
            threshold: kv_get(&kv, "threshold")?,
            min_votes: kv_get(&kv, "min_votes")?,
            refractory: kv_get(&kv, "refractory")?,
        },
        features,
        windows: WindowSpec {
            window_s: kv_get(&kv, "window_s")?,
            step_s: kv_get(&kv, "step_s")?,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# comment\n\nlambda = 0.005\nseed=7\n").unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(kv_get::<f64>(&kv, "lambda").unwrap(), 0.005);
        assert!(parse_kv("novalue\n").is_err());
        assert!(parse_kv("a=1\na=2\n").is_err());
        assert!(kv_get::<usize>(&kv, "lambda").is_err());
    }

    #[test]
    fn recording_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        let ch: Vec<Vec<f64>> = (0..4)
            .map(|c| (0..250).map(|i| ((i * (c + 3)) as f64 * 0.37).sin() / 3.0).collect())
            .collect();
        let rec = Recording::new(ch, 100.0, Some(vec![3, 101, 199])).unwrap();
        write_recording(&p, &rec).unwrap();
        assert_eq!(read_recording(&p).unwrap(), rec);

        let nogt = Recording::new(rec.channels().to_vec(), 250.0, None).unwrap();
        write_recording(&p, &nogt).unwrap();
        assert_eq!(read_recording(&p).unwrap(), nogt);
    }

    #[test]
    fn nonuniform_time_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.csv");
        std::fs::write(&p, "t,ch0\n0,1\n0.01,2\n0.03,3\n").unwrap();
        assert!(matches!(read_recording(&p), Err(Error::Format(_))));
        std::fs::write(&p, "t,ch0,ch1\n0,1,2\n0.01,2\n").unwrap();
        assert!(read_recording(&p).is_err());
    }

    #[test]
    fn dictionary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        let dict = Dictionary::normalized(
            DMatrix::from_fn(5, 2, |i, j| (i + 2 * j) as f64 + 0.3),
            DMatrix::from_fn(5, 3, |i, j| ((i * j) as f64).cos()),
        )
        .unwrap();
        write_dictionary(&p, &dict).unwrap();
        assert_eq!(read_dictionary(&p).unwrap(), dict);
    }

    #[test]
    fn hr_and_beats_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("hr.csv");
        let hr = HrSeries::new(vec![(30.0, Some(61.25)), (45.0, None), (60.0, Some(1.0 / 3.0))]).unwrap();
        write_hr(&p, &hr).unwrap();
        assert_eq!(read_hr(&p).unwrap(), hr);

        let b = dir.path().join("b.csv");
        let beats = vec![
            Beat {
                index: 12,
                confidence_sum: 4.5,
            },
            Beat {
                index: 99,
                confidence_sum: 0.1 + 0.2,
            },
        ];
        write_beats(&b, &beats, 100.0).unwrap();
        assert_eq!(read_beats(&b).unwrap(), beats);
        assert!(std::fs::read_to_string(&b).unwrap().starts_with("beat_index,beat_time_s,confidence_sum\n12,0.12,"));
    }
}
