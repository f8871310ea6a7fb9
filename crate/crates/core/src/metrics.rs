//! Evaluation metrics: Fréchet pose/movement distances, beat alignment
//! scores and artist label distances.

use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::audio::MusicFeatures;
use crate::linalg;
use crate::model::{MotionClip, SkeletonDescriptor};
use crate::style::{motion_labels, music_labels, LabelTable, LABEL_COUNT};
use crate::{Error, Result, MOTION_FPS, MUSIC_FPS, SEGMENT_FRAMES};

/// Diagonal load added to a covariance whose smallest eigenvalue falls below it.
pub const COVARIANCE_EPS: f64 = 1e-6;

/// Mean and covariance of a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    pub mean: Vec<f64>,
    /// Row-major `dim * dim`.
    pub covariance: Vec<f64>,
    pub sample_count: usize,
}

impl GaussianSummary {
    /// Fits rows of `dim` values laid out contiguously in `data`
    /// (unbiased covariance).
    pub fn fit(data: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::validation("sample data is not a whole number of rows"));
        }
        let n = data.len() / dim;
        if n < 2 {
            return Err(Error::validation(format!("need at least 2 samples, got {n}")));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::validation("non-finite sample value"));
        }
        let mut mean = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for (m, x) in mean.iter_mut().zip(row) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= n as f64;
        }
        let mut cov = vec![0.0; dim * dim];
        let mut centered = vec![0.0; dim];
        for row in data.chunks_exact(dim) {
            for k in 0..dim {
                centered[k] = row[k] - mean[k];
            }
            for i in 0..dim {
                let ci = centered[i];
                if ci == 0.0 {
                    continue;
                }
                for j in i..dim {
                    cov[i * dim + j] += ci * centered[j];
                }
            }
        }
        for i in 0..dim {
            for j in i..dim {
                let v = cov[i * dim + j] / (n - 1) as f64;
                cov[i * dim + j] = v;
                cov[j * dim + i] = v;
            }
        }
        Ok(GaussianSummary {
            mean,
            covariance: cov,
            sample_count: n,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        if self.covariance.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                found: self.covariance.len(),
            });
        }
        if self.sample_count < 2 {
            return Err(Error::validation("summary needs at least 2 samples"));
        }
        if self.mean.iter().chain(&self.covariance).any(|x| !x.is_finite()) {
            return Err(Error::validation("summary has non-finite entries"));
        }
        for i in 0..d {
            for j in i + 1..d {
                if (self.covariance[i * d + j] - self.covariance[j * d + i]).abs() > 1e-9 {
                    return Err(Error::validation("covariance is not symmetric"));
                }
            }
        }
        Ok(())
    }
}

/// `|mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2))`, both covariances
/// covariances near singular are loaded by [`COVARIANCE_EPS`]; clamped at zero.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    a.validate()?;
    b.validate()?;
    let n = a.dim();
    // Load the diagonal only when a covariance is near singular.
    let reg = |s: &[f64]| {
        let mut r = s.to_vec();
        let (eig, _) = linalg::symmetric_eigen(&r, n);
        if eig.iter().any(|&x| x < COVARIANCE_EPS) {
            for i in 0..n {
                r[i * n + i] += COVARIANCE_EPS;
            }
        }
        r
    };
    let sa = reg(&a.covariance);
    let sb = reg(&b.covariance);
    let root_a = linalg::sqrt_psd(&sa, n);
    let mut inner = linalg::matmul(&linalg::matmul(&root_a, &sb, n), &root_a, n);
    linalg::symmetrize(&mut inner, n);
    let (eig, _) = linalg::symmetric_eigen(&inner, n);
    let tr_sqrt: f64 = eig.iter().map(|&x| libm::sqrt(x.max(0.0))).sum();
    let mean_term: f64 = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y) * (x - y)).sum();
    let d = mean_term + linalg::trace(&sa, n) + linalg::trace(&sb, n) - 2.0 * tr_sqrt;
    Ok(d.max(0.0))
}

fn pose_rows<'a>(clips: impl IntoIterator<Item = &'a MotionClip>) -> (Vec<f64>, usize) {
    let mut data = Vec::new();
    let mut dim = 0;
    for c in clips {
        for p in &c.frames {
            dim = p.joint_count() * 3;
            p.flatten_into(&mut data);
        }
    }
    (data, dim)
}

fn window_rows<'a>(clips: impl IntoIterator<Item = &'a MotionClip>) -> (Vec<f64>, usize) {
    let mut data = Vec::new();
    let mut dim = 0;
    for c in clips {
        for w in c.frames.windows(3) {
            dim = w[0].joint_count() * 9;
            for p in w {
                p.flatten_into(&mut data);
            }
        }
    }
    (data, dim)
}

/// Fréchet distance between flattened poses of `generated` and `reference`.
pub fn fpd(generated: &[&MotionClip], reference: &[&MotionClip]) -> Result<f64> {
    let (g, dg) = pose_rows(generated.iter().copied());
    let (r, dr) = pose_rows(reference.iter().copied());
    if dg != dr {
        return Err(Error::DimensionMismatch {
            expected: dr,
            found: dg,
        });
    }
    frechet_distance(&GaussianSummary::fit(&g, dg)?, &GaussianSummary::fit(&r, dr)?)
}

/// Fréchet distance between three-pose windows `(p[i-1], p[i], p[i+1])`.
pub fn fmd(generated: &[&MotionClip], reference: &[&MotionClip]) -> Result<f64> {
    let (g, dg) = window_rows(generated.iter().copied());
    let (r, dr) = window_rows(reference.iter().copied());
    if dg != dr {
        return Err(Error::DimensionMismatch {
            expected: dr,
            found: dg,
        });
    }
    frechet_distance(&GaussianSummary::fit(&g, dg)?, &GaussianSummary::fit(&r, dr)?)
}

/// Beat alignment scores in squared 60 fps frames. A direction whose source
/// list is empty (or whose target list is empty) is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasReport {
    pub motion2audio: Option<f64>,
    pub audio2motion: Option<f64>,
    pub motion_beat_count: usize,
    pub music_beat_count: usize,
}

fn dedup_sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn mean_nearest_sq(from: &[f64], to: &[f64]) -> Option<f64> {
    if from.is_empty() || to.is_empty() {
        return None;
    }
    let total: f64 = from
        .iter()
        .map(|&x| {
            let idx = to.partition_point(|&y| y < x);
            let mut best = f64::INFINITY;
            if idx < to.len() {
                best = best.min((to[idx] - x).abs());
            }
            if idx > 0 {
                best = best.min((x - to[idx - 1]).abs());
            }
            let frames = best * MUSIC_FPS as f64;
            frames * frames
        })
        .sum();
    Some(total / from.len() as f64)
}

/// Mean squared distance from each beat to its nearest beat in the other
/// modality; both lists are deduplicated first.
pub fn beat_alignment(motion_beats_s: &[f64], music_beats_s: &[f64]) -> BasReport {
    let motion = dedup_sorted(motion_beats_s);
    let music = dedup_sorted(music_beats_s);
    BasReport {
        motion2audio: mean_nearest_sq(&motion, &music),
        audio2motion: mean_nearest_sq(&music, &motion),
        motion_beat_count: motion.len(),
        music_beat_count: music.len(),
    }
}

/// Normalized labels of one aligned 4-second window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLabels {
    pub start_s: usize,
    pub motion: [f64; LABEL_COUNT],
    pub music: [f64; LABEL_COUNT],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDistanceReport {
    /// Mean absolute difference per label pair.
    pub distance: [f64; LABEL_COUNT],
    pub windows: Vec<WindowLabels>,
}

/// Mean |normalized motion label - normalized paired music label| over 4 s
/// windows stepped by 1 s.
pub fn label_distance(
    generated: &MotionClip,
    music: &MusicFeatures,
    table: &LabelTable,
    descriptor: &SkeletonDescriptor,
) -> Result<LabelDistanceReport> {
    table.validate()?;
    let motion_s = generated.duration_seconds();
    let music_s = music.frame_count() as f64 / MUSIC_FPS as f64;
    if (motion_s - music_s).abs() > 1.0 {
        return Err(Error::validation(format!(
            "motion lasts {motion_s:.2} s but music {music_s:.2} s"
        )));
    }
    let whole = (generated.len() / MOTION_FPS).min(music.whole_seconds());
    if whole < 4 {
        return Err(Error::validation("label distance needs at least 4 s of overlap"));
    }
    let mut windows = Vec::new();
    let mut sum = [0.0; LABEL_COUNT];
    for s in 0..=whole - 4 {
        let clip = generated.slice(s * MOTION_FPS, SEGMENT_FRAMES)?;
        let m = table.normalize_motion(&motion_labels(&clip, descriptor)?)?;
        let a = table.normalize_music(&music_labels(music, s * MUSIC_FPS)?)?;
        let mut motion = [0.0; LABEL_COUNT];
        let mut musicv = [0.0; LABEL_COUNT];
        motion.copy_from_slice(&m.values[..LABEL_COUNT]);
        musicv.copy_from_slice(&a.values[..LABEL_COUNT]);
        for (acc, (x, y)) in sum.iter_mut().zip(motion.iter().zip(&musicv)) {
            *acc += (x - y).abs();
        }
        windows.push(WindowLabels {
            start_s: s,
            motion,
            music: musicv,
        });
    }
    let n = windows.len() as f64;
    Ok(LabelDistanceReport {
        distance: sum.map(|x| x / n),
        windows,
    })
}
