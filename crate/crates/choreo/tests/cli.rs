mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use choreo_core::model::MotionClip;
use choreo_core::synth::SynthClip;
use serde_json::Value;

fn choreo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_choreo"))
        .args(args)
        .output()
        .expect("spawn choreo")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new(clips: usize, music_s: f64) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        common::write_corpus(&root, clips, 5);
        common::write_music(&root.join("music.wav"), &common::click_music(music_s, 100.0));
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn build(&self) -> PathBuf {
        let cache = self.path("rep.cgrf");
        let o = choreo(&["dataset", "build", "--dir", s(&self.path("clips")), "--out", s(&cache)]);
        assert!(o.status.success(), "{}", stderr(&o));
        cache
    }

    fn dance(&self, name: &str, extra: &[&str]) -> (Value, Value) {
        let cache = self.build();
        let out = self.path(name);
        let music = self.path("music.wav");
        let mut args = vec!["choreograph", "--music", s(&music), "--cache", s(&cache)];
        args.extend(["--out", s(&out)]);
        args.extend(extra);
        let o = choreo(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let motion = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
        let trace_file = choreo::commands::trace_path(&out);
        let trace = serde_json::from_str(&std::fs::read_to_string(trace_file).unwrap()).unwrap();
        (motion, trace)
    }
}

#[test]
fn dataset_build_succeeds_and_is_reproducible() {
    let f = Fixture::new(6, 6.0);
    let cache = f.build();
    let first = std::fs::read(&cache).unwrap();
    let cache = f.build();
    assert_eq!(first, std::fs::read(cache).unwrap());
}

#[test]
fn dataset_build_names_the_bad_clip() {
    let f = Fixture::new(4, 6.0);
    let bad = f.path("clips/clip002.json");
    let text = std::fs::read_to_string(&bad)
        .unwrap()
        .replace("\"fps\":20", "\"fps\":30");
    std::fs::write(&bad, text).unwrap();
    let o = choreo(&[
        "dataset",
        "build",
        "--dir",
        s(&f.path("clips")),
        "--out",
        s(&f.path("rep.cgrf")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("clip002"), "{}", stderr(&o));
    assert!(!f.path("rep.cgrf").exists());
}

#[test]
fn choreograph_writes_twenty_frames_per_second() {
    let f = Fixture::new(10, 6.0);
    let (motion, trace) = f.dance("dance.json", &["--k", "4"]);
    assert_eq!(motion["fps"], 20);
    assert_eq!(motion["joints"].as_array().unwrap().len(), 120);
    let steps = trace["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 6);
    assert_eq!(trace["k"], 4);
    assert!(steps.iter().all(|st| st["warp"] == "dtw"));
}

#[test]
fn motiongraph_mode_drops_style_and_completeness() {
    let f = Fixture::new(8, 6.0);
    let (_, trace) = f.dance("mg.json", &["--k", "4", "--mode", "motiongraph"]);
    assert_eq!(trace["mode"], "motiongraph");
    for st in trace["steps"].as_array().unwrap() {
        assert!(st["style_cost"].is_null());
        assert!(st["completeness_cost"].is_null());
    }
}

#[test]
fn retempo_off_cuts_middle_slices() {
    let f = Fixture::new(8, 6.0);
    let (motion, trace) = f.dance("off.json", &["--k", "4", "--retempo", "off"]);
    assert_eq!(motion["joints"].as_array().unwrap().len(), 120);
    assert_eq!(trace["retempo"], false);
    assert!(trace["steps"]
        .as_array()
        .unwrap()
        .iter()
        .all(|st| st["warp"] == "middle-slice"));
}

#[test]
fn eval_of_a_dance_against_itself() {
    let f = Fixture::new(8, 6.0);
    f.dance("dance.json", &["--k", "4"]);
    let report = f.path("eval.json");
    let windows = f.path("windows.csv");
    let o = choreo(&[
        "eval",
        "--motion",
        s(&f.path("dance.json")),
        "--music",
        s(&f.path("music.wav")),
        "--cache",
        s(&f.path("rep.cgrf")),
        "--out",
        s(&report),
        "--windows-csv",
        s(&windows),
        "--reference",
        s(&f.path("dance.json")),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["fpd"].as_f64().unwrap().abs() < 1e-6, "{r}");
    assert!(r["fmd"].as_f64().unwrap().abs() < 1e-6, "{r}");
    assert_eq!(r["label_distance"].as_array().unwrap().len(), 4);
    let csv = std::fs::read_to_string(windows).unwrap();
    // 6 s of music gives windows starting at 0, 1 and 2
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn warp_on_a_planted_identity_is_diagonal() {
    let f = Fixture::new(1, 6.0);
    let clip = f.path("clips/clip000.json");
    let dens = f.path("dens.csv");
    // first pass exports the source density, which then becomes the target
    let o = choreo(&[
        "warp",
        "--motion",
        s(&clip),
        "--random-warp",
        "--start",
        "40",
        "--out",
        s(&f.path("rw.csv")),
        "--densities",
        s(&dens),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let source: Vec<f64> = std::fs::read_to_string(&dens)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().parse().unwrap())
        .collect();
    let target = f.path("target.json");
    std::fs::write(&target, serde_json::to_string(&source[..80]).unwrap()).unwrap();
    let out = f.path("path.csv");
    let o = choreo(&[
        "warp",
        "--motion",
        s(&clip),
        "--target-density",
        s(&target),
        "--out",
        s(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows: Vec<(usize, f64)> = std::fs::read_to_string(&out)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (i, j) = l.split_once(',').unwrap();
            (i.parse().unwrap(), j.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 80);
    assert!(rows.iter().all(|&(i, j)| j == i as f64), "{rows:?}");
}

#[test]
fn frozen_clip_has_no_beats() {
    let f = Fixture::new(1, 6.0);
    let frozen = MotionClip::new(
        "frozen",
        vec![SynthClip::default().build("x", &[]).frames[0].clone(); 160],
    );
    let path = f.path("frozen.json");
    choreo::io::write_motion(&path, &frozen).unwrap();
    let out = f.path("speed.csv");
    let o = choreo(&["beats", "--motion", s(&path), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().next().unwrap(), "frame,speed,is_beat");
    assert!(text.lines().skip(1).all(|l| l.ends_with(",0")));
}

#[test]
fn music_beats_export() {
    let f = Fixture::new(1, 6.0);
    let out = f.path("onset.csv");
    let o = choreo(&["beats", "--music", s(&f.path("music.wav")), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let beats = std::fs::read_to_string(f.path("onset.beats.csv")).unwrap();
    // 100 BPM from 0.25 s over 6 s
    assert_eq!(beats.lines().count() - 1, 10);
}

#[test]
fn config_errors_exit_1() {
    let f = Fixture::new(4, 6.0);
    let cfg = f.path("run.cfg");
    std::fs::write(&cfg, "graph.lamda_s = 2\n").unwrap();
    let o = choreo(&[
        "dataset",
        "build",
        "--dir",
        s(&f.path("clips")),
        "--out",
        s(&f.path("x.cgrf")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("lamda_s"), "{}", stderr(&o));

    let o = choreo(&[
        "dataset",
        "build",
        "--dir",
        s(&f.path("clips")),
        "--out",
        s(&f.path("x.cgrf")),
        "--set",
        "k=0",
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_files_exit_2() {
    let f = Fixture::new(4, 6.0);
    let cache = f.build();
    let o = choreo(&[
        "choreograph",
        "--music",
        s(&f.path("nope.wav")),
        "--cache",
        s(&cache),
        "--out",
        s(&f.path("d.json")),
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("nope.wav"));
}

#[test]
fn stale_cache_is_rejected() {
    let f = Fixture::new(4, 6.0);
    let cache = f.build();
    let mut bytes = std::fs::read(&cache).unwrap();
    bytes[4] = 9;
    std::fs::write(&cache, bytes).unwrap();
    let o = choreo(&[
        "choreograph",
        "--music",
        s(&f.path("music.wav")),
        "--cache",
        s(&cache),
        "--out",
        s(&f.path("d.json")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn short_music_is_rejected() {
    let f = Fixture::new(4, 3.0);
    let cache = f.build();
    let o = choreo(&[
        "choreograph",
        "--music",
        s(&f.path("music.wav")),
        "--cache",
        s(&cache),
        "--out",
        s(&f.path("d.json")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(!f.path("d.json").exists());
}

#[test]
fn external_embeddings_drive_selection() {
    let f = Fixture::new(6, 6.0);
    let motion: serde_json::Map<String, Value> = (0..6)
        .map(|i| (format!("clip{i:03}"), Value::from(vec![i as f64 / 6.0; 32])))
        .collect();
    let music: serde_json::Map<String, Value> = (0..3).map(|s| (s.to_string(), Value::from(vec![0.5; 32]))).collect();
    let emb = f.path("emb.json");
    std::fs::write(&emb, serde_json::json!({"motion": motion, "music": music}).to_string()).unwrap();
    let cache = f.path("ext.cgrf");
    let set = ["--set", "style.backend=external"];
    let clips = f.path("clips");
    let mut args = vec![
        "dataset",
        "build",
        "--dir",
        s(&clips),
        "--out",
        s(&cache),
        "--embeddings",
        s(&emb),
    ];
    args.extend(set);
    let o = choreo(&args);
    assert!(o.status.success(), "{}", stderr(&o));

    let out = f.path("ext.json");
    let music_wav = f.path("music.wav");
    let mut args = vec![
        "choreograph",
        "--music",
        s(&music_wav),
        "--cache",
        s(&cache),
        "--out",
        s(&out),
    ];
    args.extend(["--k", "2", "--embeddings", s(&emb)]);
    args.extend(set);
    let o = choreo(&args);
    assert!(o.status.success(), "{}", stderr(&o));
    let trace: Value =
        serde_json::from_str(&std::fs::read_to_string(choreo::commands::trace_path(&out)).unwrap()).unwrap();
    // clips 2 and 3 sit closest to the music vector
    for st in trace["steps"].as_array().unwrap() {
        let src = st["source_id"].as_str().unwrap();
        assert!(src == "clip002" || src == "clip003", "{src}");
    }

    // the label backend cannot read a 32-dimensional cache
    let o = choreo(&[
        "choreograph",
        "--music",
        s(&music_wav),
        "--cache",
        s(&cache),
        "--out",
        s(&f.path("y.json")),
    ]);
    assert_eq!(o.status.code(), Some(1));
}
