//! Style vectors built from quantifiable motion and music labels, their
//! normalization to a shared 1–10 scale, and style-based clip selection.
//!
//! Label pairs (motion ↔ music):
//! openness ↔ intervallic structure, intensity ↔ rhythmic density,
//! rhythm/smoothness ↔ time between onsets, asymmetry ↔ spectral content.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::audio::MusicFeatures;
use crate::math;
use crate::model::{MotionClip, Repertoire, SkeletonDescriptor};
use crate::{Error, Result, MOTION_FPS, MUSIC_FPS, SEGMENT_FRAMES};

pub const LABEL_COUNT: usize = 4;
pub const MOTION_LABELS: [&str; LABEL_COUNT] = ["openness", "intensity", "rhythm", "asymmetry"];
pub const MUSIC_LABELS: [&str; LABEL_COUNT] = ["intervallic", "rhythmic_density", "onset_gap", "spectral"];

/// Music window length in music frames (4 s).
pub const MUSIC_WINDOW: usize = SEGMENT_FRAMES * MUSIC_FPS / MOTION_FPS;

const ASYMMETRY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StyleBackend {
    /// Normalized quantifiable labels.
    Labels,
    /// Vectors loaded from an external embedding file.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StyleVector {
    pub values: Vec<f64>,
    pub backend: StyleBackend,
}

impl StyleVector {
    pub fn new(values: Vec<f64>, backend: StyleBackend) -> Self {
        StyleVector { values, backend }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    /// Euclidean distance; errors on a dimension mismatch.
    pub fn distance(&self, other: &StyleVector) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(math::l2(&self.values, &other.values))
    }
}

/// How label bounds are estimated from the repertoire (`style.normalization`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundsMode {
    /// 1st and 99th percentiles.
    #[default]
    Percentile,
    MinMax,
}

/// Per-label `(lo, hi)` normalization bounds for both modalities. Empty
/// means not fitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct LabelTable {
    pub motion: Vec<(f64, f64)>,
    pub music: Vec<(f64, f64)>,
}

/// Music bounds used when the repertoire carries no paired music.
pub const DEFAULT_MUSIC_BOUNDS: [(f64, f64); LABEL_COUNT] = [(0.0, 12.0), (0.0, 8.0), (0.125, 4.0), (0.0, 1.0)];

fn fit_bounds(samples: &[[f64; LABEL_COUNT]], mode: BoundsMode) -> Vec<(f64, f64)> {
    (0..LABEL_COUNT)
        .map(|l| {
            let mut col: Vec<f64> = samples.iter().map(|s| s[l]).collect();
            col.sort_by(f64::total_cmp);
            let (lo, hi) = match mode {
                BoundsMode::Percentile => (math::percentile_sorted(&col, 0.01), math::percentile_sorted(&col, 0.99)),
                BoundsMode::MinMax => (col[0], col[col.len() - 1]),
            };
            if hi > lo {
                (lo, hi)
            } else {
                (lo, lo + (lo.abs() * 1e-6).max(1e-9))
            }
        })
        .collect()
}

impl LabelTable {
    /// Fits motion bounds from `motion` samples and music bounds from `music`
    /// samples, falling back to [`DEFAULT_MUSIC_BOUNDS`] when there are none.
    pub fn fit(motion: &[[f64; LABEL_COUNT]], music: &[[f64; LABEL_COUNT]], mode: BoundsMode) -> Result<Self> {
        if motion.is_empty() {
            return Err(Error::State("cannot fit label bounds on an empty repertoire".into()));
        }
        let music = if music.is_empty() {
            DEFAULT_MUSIC_BOUNDS.to_vec()
        } else {
            fit_bounds(music, mode)
        };
        Ok(LabelTable {
            motion: fit_bounds(motion, mode),
            music,
        })
    }

    pub fn is_fitted(&self) -> bool {
        self.motion.len() == LABEL_COUNT && self.music.len() == LABEL_COUNT
    }

    pub fn validate(&self) -> Result<()> {
        if !self.is_fitted() {
            return Err(Error::State("label table not fitted".into()));
        }
        for &(lo, hi) in self.motion.iter().chain(&self.music) {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::validation(format!("label bounds ({lo}, {hi}) not increasing")));
            }
        }
        Ok(())
    }

    pub fn normalize_motion(&self, raw: &[f64; LABEL_COUNT]) -> Result<StyleVector> {
        normalize(raw, &self.motion)
    }

    pub fn normalize_music(&self, raw: &[f64; LABEL_COUNT]) -> Result<StyleVector> {
        normalize(raw, &self.music)
    }
}

/// `1 + 9 * clamp((x - lo) / (hi - lo), 0, 1)` per label.
pub fn normalize(raw: &[f64; LABEL_COUNT], bounds: &[(f64, f64)]) -> Result<StyleVector> {
    if bounds.len() != LABEL_COUNT {
        return Err(Error::State("label table not fitted".into()));
    }
    let values = raw
        .iter()
        .zip(bounds)
        .map(|(&x, &(lo, hi))| 1.0 + 9.0 * ((x - lo) / (hi - lo)).clamp(0.0, 1.0))
        .collect();
    Ok(StyleVector::new(values, StyleBackend::Labels))
}

fn sq_disp(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]) * (a[k] - b[k])).sum()
}

/// Raw `(openness, intensity, rhythm, asymmetry)` of a 4-second clip.
pub fn motion_labels(clip: &MotionClip, descriptor: &SkeletonDescriptor) -> Result<[f64; LABEL_COUNT]> {
    if clip.len() != SEGMENT_FRAMES {
        return Err(Error::validation(format!(
            "clip {}: motion labels need {SEGMENT_FRAMES} frames, got {}",
            clip.id,
            clip.len()
        )));
    }
    let frames = &clip.frames;
    let n = frames.len();
    let joints = clip.joint_count();

    let limbs: Vec<usize> = core::iter::once(descriptor.head_index)
        .chain(descriptor.end_effector_indices.iter().copied())
        .collect();
    let openness = frames
        .iter()
        .map(|p| {
            let root = &p.joints[descriptor.root_index];
            limbs.iter().map(|&k| math::dist3(&p.joints[k], root)).sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;

    let mut variation = 0.0;
    for w in frames.windows(2) {
        for (a, b) in w[1].joints.iter().zip(&w[0].joints) {
            variation += (0..3).map(|k| (a[k] - b[k]).abs()).sum::<f64>();
        }
    }
    let intensity = variation / ((n - 1) * joints * 3) as f64;

    let mut accel = 0.0;
    for w in frames.windows(3) {
        for j in 0..joints {
            let (a, b, c) = (&w[0].joints[j], &w[1].joints[j], &w[2].joints[j]);
            let d = [
                c[0] - 2.0 * b[0] + a[0],
                c[1] - 2.0 * b[1] + a[1],
                c[2] - 2.0 * b[2] + a[2],
            ];
            accel += math::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        }
    }
    let rhythm = accel / clip.duration_seconds();

    let energy = |set: &[usize]| -> f64 {
        frames
            .windows(2)
            .map(|w| {
                set.iter()
                    .map(|&j| sq_disp(&w[1].joints[j], &w[0].joints[j]))
                    .sum::<f64>()
            })
            .sum()
    };
    let e_up = energy(&descriptor.upper_body_indices);
    let e_low = energy(&descriptor.lower_body_indices);
    let asymmetry = (e_up - e_low).abs() / (e_up + e_low + ASYMMETRY_EPS);

    Ok([openness, intensity, rhythm, asymmetry])
}

/// Raw `(intervallic, rhythmic_density, onset_gap, spectral)` of the 4-second
/// music window starting at music frame `start`.
pub fn music_labels(features: &MusicFeatures, start: usize) -> Result<[f64; LABEL_COUNT]> {
    let end = start + MUSIC_WINDOW;
    if end > features.frame_count() {
        return Err(Error::OutOfBounds {
            what: "music window",
            start,
            end,
            available: features.frame_count(),
        });
    }
    let voiced: Vec<f64> = features.pitch_hz[start..end].iter().flatten().copied().collect();
    let intervals: Vec<f64> = voiced.windows(2).map(|w| 12.0 * math::log2(w[1] / w[0])).collect();
    let intervallic = if intervals.len() < 2 {
        0.0
    } else {
        let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
        math::sqrt(intervals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / intervals.len() as f64)
    };

    let beats: Vec<usize> = features.beats_in(start, end).collect();
    let seconds = MUSIC_WINDOW as f64 / MUSIC_FPS as f64;
    let rhythmic_density = beats.len() as f64 / seconds;
    let onset_gap = if beats.len() < 2 {
        seconds
    } else {
        (beats[beats.len() - 1] - beats[0]) as f64 / (beats.len() - 1) as f64 / MUSIC_FPS as f64
    };

    let w = (end - start) as f64;
    let flatness = features.flatness[start..end].iter().sum::<f64>() / w;
    let high = features.high_ratio[start..end].iter().sum::<f64>() / w;
    let spectral = 0.5 * (flatness + high);

    Ok([intervallic, rhythmic_density, onset_gap, spectral])
}

/// Music beats inside the window starting at `start`.
pub fn window_beat_count(features: &MusicFeatures, start: usize) -> usize {
    features.beats_in(start, start + MUSIC_WINDOW).count()
}

/// Weights of the cross-modal style loss (`style.lambda_cs`, `style.lambda_b`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StyleWeights {
    pub lambda_cs: f64,
    pub lambda_b: f64,
}

impl Default for StyleWeights {
    fn default() -> Self {
        StyleWeights {
            lambda_cs: 1.0,
            lambda_b: 0.2,
        }
    }
}

/// `lambda_cs * |s_m - s_d| + lambda_b * |music_beats - motion_beats|`.
pub fn style_distance(
    music: &StyleVector,
    motion: &StyleVector,
    music_beats: usize,
    motion_beats: usize,
    weights: &StyleWeights,
) -> Result<f64> {
    let d = music.distance(motion)?;
    Ok(weights.lambda_cs * d + weights.lambda_b * music_beats.abs_diff(motion_beats) as f64)
}

/// A selected repertoire entry and its style distance.
#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub id: String,
    pub distance: f64,
}

/// The `k` entries with the smallest style distance, ties broken by id.
pub fn select_top_k(
    music: &StyleVector,
    music_beats: usize,
    repertoire: &Repertoire,
    k: usize,
    weights: &StyleWeights,
) -> Result<Vec<Selection>> {
    if repertoire.is_empty() {
        return Err(Error::validation("cannot select from an empty repertoire"));
    }
    let mut scored = Vec::with_capacity(repertoire.len());
    for (index, e) in repertoire.entries.iter().enumerate() {
        let (style, beats) = match (&e.style, e.beat_count) {
            (Some(s), Some(b)) => (s, b),
            _ => return Err(Error::State(format!("clip {}: style cache not populated", e.id()))),
        };
        scored.push(Selection {
            index,
            id: e.clip.id.clone(),
            distance: style_distance(music, style, music_beats, beats, weights)?,
        });
    }
    scored.sort_by(|a, b| a.distance.total_cmp(&b.distance).then_with(|| a.id.cmp(&b.id)));
    scored.truncate(k.min(repertoire.len()));
    Ok(scored)
}

/// Labels of the middle 4 seconds of a source clip.
pub fn source_motion_labels(clip: &MotionClip, descriptor: &SkeletonDescriptor) -> Result<[f64; LABEL_COUNT]> {
    let start = (clip.len().saturating_sub(SEGMENT_FRAMES)) / 2;
    motion_labels(&clip.slice(start, SEGMENT_FRAMES)?, descriptor)
}

/// All-ones style vector of the given dimension (useful as a neutral query).
pub fn neutral_style(dim: usize) -> StyleVector {
    StyleVector::new(vec![1.0; dim], StyleBackend::Labels)
}
