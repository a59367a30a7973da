use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dlfumi::signal::Recording;

fn dlfumi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dlfumi")).args(args).output().expect("spawn dlfumi")
}

fn code(args: &[&str]) -> i32 {
    dlfumi(args).status.code().expect("exit code")
}

struct Dir(tempfile::TempDir);

impl Dir {
    fn new() -> Self {
        Dir(tempfile::tempdir().unwrap())
    }

    fn path(&self, name: &str) -> String {
        self.0.path().join(name).to_string_lossy().into_owned()
    }

    fn write(&self, name: &str, content: &str) -> String {
        let p = self.path(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    /// A short synthetic recording pair and a model trained on the first.
    fn trained(&self) -> (String, String, String) {
        let cfg = self.write("synth.cfg", "duration_s=60\n");
        let (train, test) = (self.path("train.csv"), self.path("test.csv"));
        assert_eq!(code(&["synth", "--config", &cfg, "--seed", "1", "--out", &train]), 0);
        assert_eq!(code(&["synth", "--config", &cfg, "--seed", "2", "--out", &test]), 0);
        let dict = self.path("dict.csv");
        assert_eq!(code(&["train", &train, "--max_em_iters", "3", "--out", &dict]), 0);
        (train, test, dict)
    }
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
}

#[test]
fn synth_is_byte_identical_for_a_seed() {
    let d = Dir::new();
    let cfg = d.write("synth.cfg", "duration_s=30\nhr_bpm=72\n");
    for name in ["a.csv", "b.csv"] {
        assert_eq!(code(&["synth", "--config", &cfg, "--seed", "9", "--out", &d.path(name)]), 0);
    }
    let read = |n: &str| std::fs::read(d.path(n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));
    assert_eq!(read("a.csv.meta"), read("b.csv.meta"));

    assert_eq!(code(&["synth", "--config", &cfg, "--seed", "10", "--out", &d.path("c.csv")]), 0);
    assert_ne!(read("a.csv"), read("c.csv"));
}

#[test]
fn configuration_problems_exit_2() {
    let d = Dir::new();
    assert_eq!(code(&["synth", "--config", &d.path("missing.cfg"), "--out", &d.path("x.csv")]), 2);
    let bad = d.write("bad.cfg", "duration_s=sixty\n");
    assert_eq!(code(&["synth", "--config", &bad, "--out", &d.path("x.csv")]), 2);
    let unknown = d.write("unknown.cfg", "lamda=0.1\n");
    assert_eq!(code(&["train", &d.path("x.csv"), "--config", &unknown, "--out", &d.path("m.csv")]), 2);
    assert_eq!(code(&["train", &d.path("nope.csv"), "--out", &d.path("m.csv")]), 2);
}

fn write_without_gt(src: &str, dst: &Path) {
    let rec = dlfumi::io::read_recording(Path::new(src)).unwrap();
    let bare = Recording::new(rec.channels().to_vec(), rec.sample_rate_hz(), None).unwrap();
    dlfumi::io::write_recording(dst, &bare).unwrap();
}

#[test]
fn missing_groundtruth_exits_3() {
    let d = Dir::new();
    let cfg = d.write("synth.cfg", "duration_s=30\n");
    let with_gt = d.path("gt.csv");
    assert_eq!(code(&["synth", "--config", &cfg, "--out", &with_gt]), 0);
    let bare = PathBuf::from(d.path("bare.csv"));
    write_without_gt(&with_gt, &bare);
    let bare = bare.to_string_lossy().into_owned();
    assert_eq!(code(&["train", &bare, "--out", &d.path("m.csv")]), 3);
    let hr = d.write("est.hr.csv", "window_center_s,hr_bpm\n30,60\n");
    assert_eq!(code(&["eval", &hr, "--gt", &bare, "--out", &d.path("r.txt")]), 3);
}

#[test]
fn end_to_end_and_model_mismatch() {
    let d = Dir::new();
    let (train, test, dict) = d.trained();
    let out = d.path("det");
    assert_eq!(code(&["detect", &test, "--model", &dict, "--out", &out]), 0);
    assert!(Path::new(&format!("{out}.beats.csv")).exists());
    let hr = format!("{out}.hr.csv");

    assert_eq!(code(&["baseline", &test, "--method", "wppd", "--train", &train, "--out", &d.path("w")]), 0);
    let report = d.path("report.txt");
    let beats = format!("{out}.beats.csv");
    let base = d.path("w.hr.csv");
    assert_eq!(code(&["eval", &hr, "--gt", &test, "--beats", &beats, "--baseline", &base, "--out", &report]), 0);
    let kv = dlfumi::io::read_kv(Path::new(&report)).unwrap();
    for key in ["mae_bpm", "bbi_error_percent", "bland_altman_bias", "pearson_r", "baseline_mae_bpm"] {
        assert!(kv.contains_key(key), "{key} missing from report");
    }
    assert_eq!(kv["bland_altman_basis"], "per_beat");

    // a different instance length than the dictionary was trained with
    let half = d.write("half.cfg", "half_len=30\n");
    assert_eq!(code(&["detect", &test, "--model", &dict, "--config", &half, "--out", &out]), 4);
    assert_eq!(code(&["detect", &test, "--model", &dict, "--min_votes", "5", "--out", &out]), 4);

    // a sidecar that disagrees with the dictionary
    let params = format!("{dict}.params");
    let text = std::fs::read_to_string(&params).unwrap().replace("instance_len=91", "instance_len=61");
    std::fs::write(&params, text).unwrap();
    assert_eq!(code(&["detect", &test, "--model", &dict, "--out", &out]), 4);
}

#[test]
fn eval_without_overlap_exits_5() {
    let d = Dir::new();
    let cfg = d.write("synth.cfg", "duration_s=120\n");
    let rec = d.path("rec.csv");
    assert_eq!(code(&["synth", "--config", &cfg, "--out", &rec]), 0);
    let hr = d.write("far.hr.csv", "window_center_s,hr_bpm\n1000,60\n1015,\n");
    assert_eq!(code(&["eval", &hr, "--gt", &rec, "--out", &d.path("r.txt")]), 5);
}
