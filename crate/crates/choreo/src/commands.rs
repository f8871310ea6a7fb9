//! The work behind each CLI subcommand, callable from tests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use choreo_core::audio::MusicFeatures;
use choreo_core::metrics::{beat_alignment, fmd, fpd, label_distance, BasReport};
use choreo_core::model::{MotionClip, SkeletonDescriptor};
use choreo_core::motion::{average_joint_speed, detect_beats, motion_beats, random_time_warp};
use choreo_core::pipeline::{populate_caches, Choreographer, Choreography, Executor};
use choreo_core::seed::derive_seed;
use choreo_core::style::{StyleBackend, StyleVector, LABEL_COUNT, MOTION_LABELS, MUSIC_LABELS};
use choreo_core::tempo::{motion_tempo_density, music_tempo_density, subsequence_dtw, TempoDensity, WarpPath};
use choreo_core::{MOTION_FPS, MUSIC_FPS, SEGMENT_FRAMES};
use serde::Serialize;

use crate::audio::analyze_wav;
use crate::cache::{read_cache, write_cache, DatasetCache};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::io::{
    ingest_repertoire, read_descriptor, read_embeddings, read_motion, read_series, write_csv, write_json, write_motion,
};

fn descriptor_or_default(path: Option<&Path>) -> Result<SkeletonDescriptor> {
    match path {
        Some(p) => read_descriptor(p),
        None => Ok(SkeletonDescriptor::standard21()),
    }
}

/// Beat statistics printed for each clip by `dataset build`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipSummary {
    pub id: String,
    pub beats: usize,
    pub middle_beats: usize,
    pub music: Option<String>,
}

pub struct DatasetArgs<'a> {
    pub dir: &'a Path,
    pub descriptor: Option<&'a Path>,
    pub out: &'a Path,
    pub embeddings: Option<&'a Path>,
}

pub fn dataset_build<E: Executor>(args: &DatasetArgs, cfg: &RunConfig, exec: &E) -> Result<Vec<ClipSummary>> {
    let descriptor = descriptor_or_default(args.descriptor)?;
    let mut ingested = ingest_repertoire(args.dir, &descriptor, args.descriptor)?;
    let music: Vec<Option<MusicFeatures>> = exec
        .map_indexed(ingested.music_paths.len(), |i| {
            ingested.music_paths[i]
                .as_deref()
                .map(|p| analyze_wav(p, &cfg.onset))
                .transpose()
        })
        .into_iter()
        .collect::<Result<_>>()?;
    let music_refs: Vec<Option<&MusicFeatures>> = music.iter().map(Option::as_ref).collect();
    let external = match (cfg.backend, args.embeddings) {
        (StyleBackend::External, Some(p)) => Some(read_embeddings(p)?.motion),
        (StyleBackend::External, None) => {
            return Err(CliError::Config("style.backend = external needs --embeddings".into()))
        }
        (StyleBackend::Labels, _) => None,
    };
    let analyses = populate_caches(
        exec,
        &mut ingested.repertoire,
        &music_refs,
        external.as_ref(),
        &cfg.dataset(),
    )?;
    let cache = DatasetCache {
        settings: cfg.dataset(),
        repertoire: ingested.repertoire,
    };
    write_cache(args.out, &cache)?;
    Ok(cache
        .repertoire
        .entries
        .iter()
        .zip(analyses)
        .map(|(e, a)| ClipSummary {
            id: e.clip.id.clone(),
            beats: a.beats.len(),
            middle_beats: a.middle_beats,
            music: e.music.clone(),
        })
        .collect())
}

pub struct ChoreographArgs<'a> {
    pub music: &'a Path,
    pub cache: &'a Path,
    pub out: &'a Path,
    pub trace: Option<&'a Path>,
    pub embeddings: Option<&'a Path>,
}

/// Default trace path: `<out stem>.trace.json` next to the output.
pub fn trace_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    out.with_file_name(format!("{stem}.trace.json"))
}

fn external_music(path: &Path) -> Result<BTreeMap<usize, StyleVector>> {
    Ok(read_embeddings(path)?
        .music
        .into_iter()
        .map(|(s, v)| (s, StyleVector::new(v, StyleBackend::External)))
        .collect())
}

/// Runs the pipeline on already-loaded inputs.
pub fn run_choreography<E: Executor>(
    music: &MusicFeatures,
    cache: &DatasetCache,
    cfg: &RunConfig,
    exec: E,
    external: Option<&BTreeMap<usize, StyleVector>>,
) -> Result<Choreography> {
    if cache.settings.beats != cfg.choreo.beats || cache.settings.tempo != cfg.choreo.tempo {
        log::warn!("cache was built with different motion/tempo settings than this run");
    }
    let mut ch = Choreographer::new(music, &cache.repertoire, cfg.choreo.clone(), exec)?;
    if let Some(map) = external {
        ch = ch.with_external_music_styles(map);
    }
    Ok(ch.run()?)
}

pub fn choreograph<E: Executor>(args: &ChoreographArgs, cfg: &RunConfig, exec: E) -> Result<Choreography> {
    let cache = read_cache(args.cache)?;
    let music = analyze_wav(args.music, &cfg.onset)?;
    let external = match cfg.backend {
        StyleBackend::External => {
            let p = args
                .embeddings
                .ok_or_else(|| CliError::Config("style.backend = external needs --embeddings".into()))?;
            Some(external_music(p)?)
        }
        StyleBackend::Labels => None,
    };
    let result = run_choreography(&music, &cache, cfg, exec, external.as_ref())?;
    write_motion(args.out, &result.motion)?;
    let trace = args
        .trace
        .map(Path::to_path_buf)
        .unwrap_or_else(|| trace_path(args.out));
    write_json(&trace, &result.trace)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasJson {
    pub motion2audio: Option<f64>,
    pub audio2motion: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub fpd: f64,
    pub fmd: f64,
    pub bas: BasJson,
    pub label_distance: [f64; LABEL_COUNT],
}

pub struct EvalArgs<'a> {
    pub motion: &'a Path,
    pub music: &'a Path,
    pub cache: &'a Path,
    pub out: &'a Path,
    pub windows_csv: Option<&'a Path>,
    pub reference: &'a [PathBuf],
}

/// Motion beats of a generated clip in seconds.
pub fn motion_beat_seconds(clip: &MotionClip, cfg: &RunConfig) -> Result<Vec<f64>> {
    let beats = motion_beats(&average_joint_speed(clip)?, &cfg.choreo.beats);
    Ok(beats.iter().map(|&b| b as f64 / MOTION_FPS as f64).collect())
}

pub fn bas(clip: &MotionClip, music: &MusicFeatures, cfg: &RunConfig) -> Result<BasReport> {
    Ok(beat_alignment(&motion_beat_seconds(clip, cfg)?, &music.beat_seconds()))
}

pub fn evaluate(args: &EvalArgs, cfg: &RunConfig) -> Result<EvalReport> {
    let cache = read_cache(args.cache)?;
    let rep = &cache.repertoire;
    let joints = rep.descriptor.joint_count;
    let generated = read_motion(args.motion, joints)?;
    let music = analyze_wav(args.music, &cfg.onset)?;
    let reference: Vec<MotionClip> = if args.reference.is_empty() {
        rep.entries.iter().map(|e| e.clip.clone()).collect()
    } else {
        args.reference
            .iter()
            .map(|p| read_motion(p, joints))
            .collect::<Result<_>>()?
    };
    let refs: Vec<&MotionClip> = reference.iter().collect();
    let table = rep
        .normalization
        .as_ref()
        .ok_or_else(|| CliError::Core(choreo_core::Error::State("cache has no label table".into())))?;
    let labels = label_distance(&generated, &music, table, &rep.descriptor)?;
    let b = bas(&generated, &music, cfg)?;
    let report = EvalReport {
        fpd: fpd(&[&generated], &refs)?,
        fmd: fmd(&[&generated], &refs)?,
        bas: BasJson {
            motion2audio: b.motion2audio,
            audio2motion: b.audio2motion,
        },
        label_distance: labels.distance,
    };
    write_json(args.out, &report)?;
    if let Some(csv) = args.windows_csv {
        let mut header = vec!["window_start_s".to_string()];
        for l in 0..LABEL_COUNT {
            header.push(format!("motion_{}", MOTION_LABELS[l]));
            header.push(format!("music_{}", MUSIC_LABELS[l]));
        }
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        write_csv(
            csv,
            &header,
            labels.windows.iter().map(|w| {
                let mut row = vec![w.start_s.to_string()];
                for l in 0..LABEL_COUNT {
                    row.push(w.motion[l].to_string());
                    row.push(w.music[l].to_string());
                }
                row
            }),
        )?;
    }
    Ok(report)
}

/// Where the target density of `warp` comes from.
pub enum WarpTarget<'a> {
    /// JSON array of density values.
    Density(&'a Path),
    /// The music window starting at this second.
    Music { path: &'a Path, start_s: usize },
    /// Beats of another motion clip.
    Motion(&'a Path),
    /// Beats of a seeded random time warp of the source, windowed from `start`.
    RandomWarp { start: usize },
}

pub struct WarpArgs<'a> {
    pub source: &'a Path,
    pub descriptor: Option<&'a Path>,
    pub target: WarpTarget<'a>,
    pub out: &'a Path,
    pub densities: Option<&'a Path>,
    pub out_motion: Option<&'a Path>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpResult {
    pub path: WarpPath,
    pub target: TempoDensity,
    pub source: TempoDensity,
}

pub fn warp(args: &WarpArgs, cfg: &RunConfig) -> Result<WarpResult> {
    let descriptor = descriptor_or_default(args.descriptor)?;
    let mut source = read_motion(args.source, descriptor.joint_count)?;
    let c = &cfg.choreo;
    let source_td = motion_tempo_density(&mut source, &c.beats, &c.tempo)?;
    let target = match args.target {
        WarpTarget::Density(p) => TempoDensity {
            values: read_series(p)?,
        },
        WarpTarget::Music { path, start_s } => {
            let music = analyze_wav(path, &cfg.onset)?;
            music_tempo_density(&music, start_s * MUSIC_FPS, &c.tempo)?
        }
        WarpTarget::Motion(p) => {
            let mut t = read_motion(p, descriptor.joint_count)?;
            motion_tempo_density(&mut t, &c.beats, &c.tempo)?
        }
        WarpTarget::RandomWarp { start } => {
            let seed = derive_seed(c.seed, "motion.random_warp");
            let (warped, _) = random_time_warp(&source, seed, &cfg.warp, &c.beats)?;
            warped_window_density(&warped, start, cfg)?
        }
    };
    let path = subsequence_dtw(&target.values, &source_td.values, c.tempo.cell_cost)?;
    write_csv(
        args.out,
        &["i", "j_hat"],
        path.source_positions()
            .iter()
            .enumerate()
            .map(|(i, j)| [i.to_string(), j.to_string()]),
    )?;
    if let Some(d) = args.densities {
        let n = target.len().max(source_td.len());
        let cell = |v: &[f64], i: usize| v.get(i).map(f64::to_string).unwrap_or_default();
        write_csv(
            d,
            &["frame", "target", "source"],
            (0..n).map(|i| [i.to_string(), cell(&target.values, i), cell(&source_td.values, i)]),
        )?;
    }
    if let Some(m) = args.out_motion {
        let warped = choreo_core::tempo::apply_warp(&source, &path, &c.beats)?;
        write_motion(m, &warped)?;
    }
    Ok(WarpResult {
        path,
        target,
        source: source_td,
    })
}

/// Density of the beats of `clip` inside the 80-frame window at `start`.
pub fn warped_window_density(clip: &MotionClip, start: usize, cfg: &RunConfig) -> Result<TempoDensity> {
    let end = start + SEGMENT_FRAMES;
    if end > clip.len() {
        return Err(choreo_core::Error::OutOfBounds {
            what: "warp window",
            start,
            end,
            available: clip.len(),
        }
        .into());
    }
    let mut c = clip.clone();
    let beats = match &c.beats {
        Some(b) => b.clone(),
        None => detect_beats(&mut c, &cfg.choreo.beats)?,
    };
    let local: Vec<usize> = beats
        .iter()
        .filter(|&&b| b >= start && b < end)
        .map(|&b| b - start)
        .collect();
    Ok(TempoDensity::from_beats(&local, SEGMENT_FRAMES, &cfg.choreo.tempo))
}

pub struct BeatsArgs<'a> {
    pub motion: Option<&'a Path>,
    pub descriptor: Option<&'a Path>,
    pub music: Option<&'a Path>,
    pub out: &'a Path,
    pub beats_out: Option<&'a Path>,
}

/// Writes the motion speed CSV, or the music onset and beat CSVs. Returns
/// the detected beat frames.
pub fn beats(args: &BeatsArgs, cfg: &RunConfig) -> Result<Vec<usize>> {
    match (args.motion, args.music) {
        (Some(m), None) => {
            let d = descriptor_or_default(args.descriptor)?;
            let clip = read_motion(m, d.joint_count)?;
            let speed = average_joint_speed(&clip)?;
            let found = motion_beats(&speed, &cfg.choreo.beats);
            write_csv(
                args.out,
                &["frame", "speed", "is_beat"],
                speed.values.iter().enumerate().map(|(f, v)| {
                    let hit = found.binary_search(&f).is_ok() as u8;
                    [f.to_string(), v.to_string(), hit.to_string()]
                }),
            )?;
            Ok(found)
        }
        (None, Some(a)) => {
            let music = analyze_wav(a, &cfg.onset)?;
            write_csv(
                args.out,
                &["frame", "onset_env"],
                music
                    .onset_env
                    .iter()
                    .enumerate()
                    .map(|(f, v)| [f.to_string(), v.to_string()]),
            )?;
            let beats_path = args.beats_out.map(Path::to_path_buf).unwrap_or_else(|| {
                let stem = args
                    .out
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default();
                args.out.with_file_name(format!("{stem}.beats.csv"))
            });
            write_csv(
                &beats_path,
                &["beat_frame"],
                music.beats.iter().map(|b| [b.to_string()]),
            )?;
            Ok(music.beats)
        }
        _ => Err(CliError::Config(
            "beats needs exactly one of --motion or --music".into(),
        )),
    }
}

pub struct SynthArgs<'a> {
    pub out: &'a Path,
    pub clips: usize,
    pub seconds: f64,
    pub bpm: f64,
    pub seed: u64,
}

/// Writes a synthetic repertoire (`repertoire/*.json`), the standard
/// descriptor and a click-track `music.wav` with a simple melody.
pub fn synth(args: &SynthArgs) -> Result<()> {
    let rep_dir = args.out.join("repertoire");
    std::fs::create_dir_all(&rep_dir).map_err(|e| CliError::io(&rep_dir, e))?;
    for clip in choreo_core::synth::corpus(args.clips, args.seed, 8, 24) {
        write_motion(&rep_dir.join(format!("{}.json", clip.id)), &clip)?;
    }
    write_json(&args.out.join("descriptor.json"), &SkeletonDescriptor::standard21())?;
    let mut music =
        choreo_core::synth::SynthMusic::metronome(args.seconds, args.bpm, 0.25, choreo_core::audio::SAMPLE_RATE);
    music.melody_hz = vec![220.0, 277.18, 329.63, 440.0, 329.63, 277.18];
    music.melody_gain = 0.2;
    crate::audio::write_wav(&args.out.join("music.wav"), &music.render(), music.sample_rate)
}
