//! Versioned binary repertoire cache.
//!
//! Layout (little-endian): magic `CGRF`, `u16` version, then records of
//! `u8 tag, u32 payload length, payload`. Records: settings (once),
//! descriptor (once), label table (optional), one per entry in id order.

use std::path::Path;

use choreo_core::model::{MotionClip, Pose, Repertoire, RepertoireEntry, SkeletonDescriptor};
use choreo_core::motion::BeatConfig;
use choreo_core::pipeline::DatasetConfig;
use choreo_core::style::{BoundsMode, LabelTable, StyleBackend, StyleVector};
use choreo_core::tempo::{CellCost, TempoConfig, TempoDensity};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 4] = b"CGRF";
pub const VERSION: u16 = 1;

const TAG_SETTINGS: u8 = 1;
const TAG_DESCRIPTOR: u8 = 2;
const TAG_TABLE: u8 = 3;
const TAG_ENTRY: u8 = 4;

/// A repertoire with populated caches and the settings that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetCache {
    pub settings: DatasetConfig,
    pub repertoire: Repertoire,
}

#[derive(Default)]
struct Enc(Vec<u8>);

impl Enc {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("cache field exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
    fn usizes(&mut self, v: &[usize]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.u32(x));
    }
    fn f64s(&mut self, v: &[f64]) {
        self.u32(v.len());
        v.iter().for_each(|&x| self.f64(x));
    }
    fn pairs(&mut self, v: &[(f64, f64)]) {
        self.u32(v.len());
        for &(a, b) in v {
            self.f64(a);
            self.f64(b);
        }
    }
    fn flag<T>(&mut self, v: &Option<T>) -> bool {
        self.u8(v.is_some() as u8);
        v.is_some()
    }
}

struct Dec<'a> {
    buf: &'a [u8],
    pos: usize,
}

type DecResult<T> = std::result::Result<T, String>;

impl<'a> Dec<'a> {
    fn take(&mut self, n: usize) -> DecResult<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> DecResult<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> DecResult<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> DecResult<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn f64(&mut self) -> DecResult<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn len(&mut self, elem: usize) -> DecResult<usize> {
        let n = self.u32()?;
        if n.saturating_mul(elem) > self.buf.len() - self.pos {
            return Err(format!("length {n} overruns the record at byte {}", self.pos));
        }
        Ok(n)
    }
    fn str(&mut self) -> DecResult<String> {
        let n = self.len(1)?;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| e.to_string())
    }
    fn usizes(&mut self) -> DecResult<Vec<usize>> {
        let n = self.len(4)?;
        (0..n).map(|_| self.u32()).collect()
    }
    fn f64s(&mut self) -> DecResult<Vec<f64>> {
        let n = self.len(8)?;
        (0..n).map(|_| self.f64()).collect()
    }
    fn pairs(&mut self) -> DecResult<Vec<(f64, f64)>> {
        let n = self.len(16)?;
        (0..n).map(|_| Ok((self.f64()?, self.f64()?))).collect()
    }
    fn flag(&mut self) -> DecResult<bool> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            x => Err(format!("bad option flag {x}")),
        }
    }
    fn done(&self) -> DecResult<()> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(format!("{} trailing bytes in record", self.buf.len() - self.pos))
        }
    }
}

fn record(out: &mut Vec<u8>, tag: u8, payload: Enc) {
    out.push(tag);
    out.extend_from_slice(&(payload.0.len() as u32).to_le_bytes());
    out.extend_from_slice(&payload.0);
}

fn enc_settings(s: &DatasetConfig) -> Enc {
    let mut e = Enc::default();
    e.f64(s.beats.prominence);
    e.u32(s.beats.min_separation_frames);
    e.f64(s.tempo.sigma);
    e.u32(s.tempo.radius);
    e.u8(match s.tempo.cell_cost {
        CellCost::Absolute => 0,
        CellCost::Squared => 1,
    });
    e.u8(match s.normalization {
        BoundsMode::Percentile => 0,
        BoundsMode::MinMax => 1,
    });
    e
}

fn dec_settings(d: &mut Dec) -> DecResult<DatasetConfig> {
    let beats = BeatConfig {
        prominence: d.f64()?,
        min_separation_frames: d.u32()?,
    };
    let sigma = d.f64()?;
    let radius = d.u32()?;
    let cell_cost = match d.u8()? {
        0 => CellCost::Absolute,
        1 => CellCost::Squared,
        x => return Err(format!("unknown cell cost {x}")),
    };
    let normalization = match d.u8()? {
        0 => BoundsMode::Percentile,
        1 => BoundsMode::MinMax,
        x => return Err(format!("unknown bounds mode {x}")),
    };
    Ok(DatasetConfig {
        beats,
        tempo: TempoConfig {
            sigma,
            radius,
            cell_cost,
        },
        normalization,
    })
}

fn enc_descriptor(s: &SkeletonDescriptor) -> Enc {
    let mut e = Enc::default();
    e.u32(s.joint_count);
    e.u32(s.joint_names.len());
    s.joint_names.iter().for_each(|n| e.str(n));
    e.u32(s.root_index);
    e.u32(s.head_index);
    e.usizes(&s.end_effector_indices);
    e.usizes(&s.upper_body_indices);
    e.usizes(&s.lower_body_indices);
    e
}

fn dec_descriptor(d: &mut Dec) -> DecResult<SkeletonDescriptor> {
    let joint_count = d.u32()?;
    let n = d.len(4)?;
    let joint_names = (0..n).map(|_| d.str()).collect::<DecResult<_>>()?;
    Ok(SkeletonDescriptor {
        joint_count,
        joint_names,
        root_index: d.u32()?,
        head_index: d.u32()?,
        end_effector_indices: d.usizes()?,
        upper_body_indices: d.usizes()?,
        lower_body_indices: d.usizes()?,
    })
}

fn enc_entry(x: &RepertoireEntry) -> Enc {
    let mut e = Enc::default();
    e.str(&x.clip.id);
    e.u32(x.clip.frame_rate);
    e.u32(x.clip.len());
    e.u32(x.clip.joint_count());
    for p in &x.clip.frames {
        for j in &p.joints {
            j.iter().for_each(|&c| e.f64(c));
        }
    }
    if e.flag(&x.clip.beats) {
        e.usizes(x.clip.beats.as_ref().unwrap());
    }
    if e.flag(&x.music) {
        e.str(x.music.as_ref().unwrap());
    }
    if let Some(s) = e.flag(&x.style).then(|| x.style.as_ref().unwrap()) {
        e.u8(match s.backend {
            StyleBackend::Labels => 0,
            StyleBackend::External => 1,
        });
        e.f64s(&s.values);
    }
    if e.flag(&x.beat_count) {
        e.u32(x.beat_count.unwrap());
    }
    if e.flag(&x.tempo) {
        e.f64s(&x.tempo.as_ref().unwrap().values);
    }
    e
}

fn dec_entry(d: &mut Dec) -> DecResult<RepertoireEntry> {
    let id = d.str()?;
    let frame_rate = d.u32()?;
    let n = d.u32()?;
    let joints = d.u32()?;
    if n.saturating_mul(joints).saturating_mul(24) > d.buf.len() - d.pos {
        return Err(format!("clip {id}: frame data overruns the record"));
    }
    let mut frames = Vec::with_capacity(n);
    for _ in 0..n {
        let js = (0..joints)
            .map(|_| Ok([d.f64()?, d.f64()?, d.f64()?]))
            .collect::<DecResult<Vec<_>>>()?;
        frames.push(Pose::new(js));
    }
    let beats = if d.flag()? { Some(d.usizes()?) } else { None };
    let music = if d.flag()? { Some(d.str()?) } else { None };
    let style = if d.flag()? {
        let backend = match d.u8()? {
            0 => StyleBackend::Labels,
            1 => StyleBackend::External,
            x => return Err(format!("unknown style backend {x}")),
        };
        Some(StyleVector::new(d.f64s()?, backend))
    } else {
        None
    };
    let beat_count = if d.flag()? { Some(d.u32()?) } else { None };
    let tempo = if d.flag()? {
        Some(TempoDensity { values: d.f64s()? })
    } else {
        None
    };
    let mut clip = MotionClip::new(id, frames);
    clip.frame_rate = frame_rate;
    clip.beats = beats;
    Ok(RepertoireEntry {
        clip,
        music,
        style,
        beat_count,
        tempo,
    })
}

pub fn encode(cache: &DatasetCache) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    record(&mut out, TAG_SETTINGS, enc_settings(&cache.settings));
    record(&mut out, TAG_DESCRIPTOR, enc_descriptor(&cache.repertoire.descriptor));
    if let Some(t) = &cache.repertoire.normalization {
        let mut e = Enc::default();
        e.pairs(&t.motion);
        e.pairs(&t.music);
        record(&mut out, TAG_TABLE, e);
    }
    for entry in &cache.repertoire.entries {
        record(&mut out, TAG_ENTRY, enc_entry(entry));
    }
    out
}

pub fn decode(bytes: &[u8]) -> DecResult<DatasetCache> {
    let mut d = Dec { buf: bytes, pos: 0 };
    if d.take(4).ok() != Some(&MAGIC[..]) {
        return Err("not a repertoire cache (bad magic)".into());
    }
    let version = d.u16()?;
    if version != VERSION {
        return Err(format!("stale cache version {version}, expected {VERSION}; rebuild it"));
    }
    let mut settings = None;
    let mut descriptor = None;
    let mut table = None;
    let mut entries = Vec::new();
    while d.pos < bytes.len() {
        let tag = d.u8()?;
        let n = d.u32()?;
        let mut r = Dec {
            buf: d.take(n)?,
            pos: 0,
        };
        match tag {
            TAG_SETTINGS if settings.is_none() => settings = Some(dec_settings(&mut r)?),
            TAG_DESCRIPTOR if descriptor.is_none() => descriptor = Some(dec_descriptor(&mut r)?),
            TAG_TABLE if table.is_none() => {
                table = Some(LabelTable {
                    motion: r.pairs()?,
                    music: r.pairs()?,
                })
            }
            TAG_ENTRY => entries.push(dec_entry(&mut r)?),
            _ => return Err(format!("unexpected record tag {tag}")),
        }
        r.done()?;
    }
    let settings = settings.ok_or("missing settings record")?;
    let descriptor = descriptor.ok_or("missing descriptor record")?;
    if entries.windows(2).any(|w| w[0].clip.id >= w[1].clip.id) {
        return Err("entries are not in strict id order".into());
    }
    Ok(DatasetCache {
        settings,
        repertoire: Repertoire {
            descriptor,
            entries,
            normalization: table,
        },
    })
}

pub fn write_cache(path: &Path, cache: &DatasetCache) -> Result<()> {
    crate::io::write_atomic(path, &encode(cache))
}

/// Reads a cache and checks it is ready for choreography.
pub fn read_cache(path: &Path) -> Result<DatasetCache> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    let cache = decode(&bytes).map_err(|m| CliError::parse(path, m))?;
    let rep = &cache.repertoire;
    rep.descriptor
        .validate()
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    for e in &rep.entries {
        e.clip
            .validate_source(rep.descriptor.joint_count)
            .map_err(|err| CliError::parse(path, err.to_string()))?;
    }
    rep.validate_caches()
        .map_err(|e| CliError::parse(path, e.to_string()))?;
    if let Some(t) = &rep.normalization {
        t.validate().map_err(|e| CliError::parse(path, e.to_string()))?;
    }
    Ok(cache)
}
