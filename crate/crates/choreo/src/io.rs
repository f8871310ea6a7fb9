//! Motion, descriptor and embedding files, and repertoire ingestion.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use choreo_core::model::{MotionClip, Pose, Repertoire, SkeletonDescriptor};
use choreo_core::MOTION_FPS;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MotionFile {
    id: String,
    fps: u32,
    joints: Vec<Vec<[f64; 3]>>,
}

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Writes `bytes` through a temporary sibling so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    let tmp = path.with_extension("partial");
    fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn parse_motion(path: &Path, text: &str, joint_count: usize) -> Result<MotionClip> {
    let file: MotionFile = serde_json::from_str(text).map_err(|e| CliError::parse(path, e.to_string()))?;
    if file.fps != MOTION_FPS as u32 {
        return Err(CliError::parse(
            path,
            format!("field `fps`: expected {MOTION_FPS}, got {}", file.fps),
        ));
    }
    if let Some((f, frame)) = file.joints.iter().enumerate().find(|(_, f)| f.len() != joint_count) {
        return Err(CliError::parse(
            path,
            format!(
                "field `joints`: frame {f} has {} joints, expected {joint_count}",
                frame.len()
            ),
        ));
    }
    let clip = MotionClip::new(file.id, file.joints.into_iter().map(Pose::new).collect());
    clip.validate(joint_count)
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(clip)
}

pub fn read_motion(path: &Path, joint_count: usize) -> Result<MotionClip> {
    parse_motion(path, &read_text(path)?, joint_count)
}

pub fn motion_json(clip: &MotionClip) -> Result<String> {
    let file = MotionFile {
        id: clip.id.clone(),
        fps: MOTION_FPS as u32,
        joints: clip.frames.iter().map(|p| p.joints.clone()).collect(),
    };
    serde_json::to_string(&file).map_err(|e| CliError::Internal(e.to_string()))
}

pub fn write_motion(path: &Path, clip: &MotionClip) -> Result<()> {
    write_atomic(path, motion_json(clip)?.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Internal(e.to_string()))?;
    write_atomic(path, text.as_bytes())
}

pub fn read_descriptor(path: &Path) -> Result<SkeletonDescriptor> {
    let d: SkeletonDescriptor =
        serde_json::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e.to_string()))?;
    d.validate().map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(d)
}

/// An ingested repertoire plus the paired music file of each entry.
#[derive(Debug)]
pub struct Ingested {
    pub repertoire: Repertoire,
    pub music_paths: Vec<Option<PathBuf>>,
}

/// Loads every `*.json` motion file in `dir` (skipping `skip`, typically the
/// descriptor). A `<stem>.wav` next to a clip is recorded as its music.
pub fn ingest_repertoire(dir: &Path, descriptor: &SkeletonDescriptor, skip: Option<&Path>) -> Result<Ingested> {
    let skip = skip.and_then(|p| p.canonicalize().ok());
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|r| r.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<_>>()?;
    files.retain(|p| p.extension().is_some_and(|x| x == "json"));
    files.retain(|p| skip.is_none() || p.canonicalize().ok() != skip);
    files.sort();

    let mut clips = Vec::with_capacity(files.len());
    let mut music = BTreeMap::new();
    for path in &files {
        let clip = read_motion(path, descriptor.joint_count)?;
        clip.validate_source(descriptor.joint_count)
            .map_err(|e| CliError::parse(path, e.to_string()))?;
        let wav = path.with_extension("wav");
        if wav.is_file() {
            music.insert(clip.id.clone(), wav);
        }
        clips.push(clip);
    }
    let mut repertoire = Repertoire::from_clips(descriptor.clone(), clips)?;
    let mut music_paths = Vec::with_capacity(repertoire.len());
    for e in &mut repertoire.entries {
        let p = music.remove(&e.clip.id);
        e.music = p
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned());
        music_paths.push(p);
    }
    Ok(Ingested {
        repertoire,
        music_paths,
    })
}

/// Externally computed style vectors: motion keyed by clip id, music keyed
/// by window start second.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Embeddings {
    #[serde(default)]
    pub motion: BTreeMap<String, Vec<f64>>,
    #[serde(default)]
    pub music: BTreeMap<usize, Vec<f64>>,
}

pub fn read_embeddings(path: &Path) -> Result<Embeddings> {
    let e: Embeddings = serde_json::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e.to_string()))?;
    let dims: Vec<usize> = e.motion.values().chain(e.music.values()).map(Vec::len).collect();
    if let Some(&d) = dims.first() {
        if d == 0 || dims.iter().any(|&x| x != d) {
            return Err(CliError::parse(path, "style vectors must share one nonzero dimension"));
        }
    }
    if e.motion
        .values()
        .chain(e.music.values())
        .flatten()
        .any(|x| !x.is_finite())
    {
        return Err(CliError::parse(path, "style vectors must be finite"));
    }
    Ok(e)
}

/// Reads a JSON array of numbers.
pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CliError::parse(path, e.to_string()))
}

/// Writes a CSV with a header row; `rows` yields pre-formatted fields.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let mut buf = BufWriter::new(Vec::new());
    let io = |e| CliError::io(path, e);
    writeln!(buf, "{}", header.join(",")).map_err(io)?;
    for row in rows {
        let fields: Vec<String> = row.into_iter().collect();
        writeln!(buf, "{}", fields.join(",")).map_err(io)?;
    }
    let bytes = buf.into_inner().map_err(|e| CliError::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}
