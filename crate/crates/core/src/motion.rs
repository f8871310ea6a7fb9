//! Motion rhythm: average joint speed, motion beats (speed minima) and the
//! random time warper.

use alloc::vec::Vec;
use alloc::{format, vec};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::model::{MotionClip, Pose};
use crate::peaks::{find_peaks, PeakParams};
use crate::{Error, Result};

/// Per-frame mean joint speed in m/s; `values[0] == 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeedSeries {
    pub values: Vec<f64>,
}

/// Minimum detection thresholds (`motion.prominence`, `motion.min_separation_frames`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatConfig {
    /// Minimum prominence as a fraction of the speed range.
    pub prominence: f64,
    pub min_separation_frames: usize,
}

impl Default for BeatConfig {
    fn default() -> Self {
        BeatConfig {
            prominence: 0.05,
            min_separation_frames: 5,
        }
    }
}

/// `v(t) = fps * mean_j |p_j(t) - p_j(t-1)|`, mean of per-joint norms.
pub fn average_joint_speed(clip: &MotionClip) -> Result<SpeedSeries> {
    if clip.len() < 2 {
        return Err(Error::validation(format!(
            "clip {}: speed needs at least 2 frames",
            clip.id
        )));
    }
    let fps = clip.frame_rate as f64;
    let mut values = vec![0.0; clip.len()];
    for t in 1..clip.len() {
        let (prev, cur) = (&clip.frames[t - 1], &clip.frames[t]);
        let total: f64 = cur
            .joints
            .iter()
            .zip(&prev.joints)
            .map(|(a, b)| math::dist3(a, b))
            .sum();
        values[t] = fps * total / cur.joint_count() as f64;
    }
    Ok(SpeedSeries { values })
}

/// Strict local minima of the speed series passing the prominence and
/// separation filters.
pub fn motion_beats(speed: &SpeedSeries, cfg: &BeatConfig) -> Vec<usize> {
    let v = &speed.values;
    if v.is_empty() {
        return Vec::new();
    }
    let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    });
    let range = hi - lo;
    if range <= 0.0 {
        return Vec::new();
    }
    let neg: Vec<f64> = v.iter().map(|x| -x).collect();
    find_peaks(
        &neg,
        PeakParams {
            min_prominence: cfg.prominence * range,
            min_separation: cfg.min_separation_frames,
        },
    )
}

/// Detects beats, stores them on the clip and returns them.
pub fn detect_beats(clip: &mut MotionClip, cfg: &BeatConfig) -> Result<Vec<usize>> {
    let beats = motion_beats(&average_joint_speed(clip)?, cfg);
    clip.beats = Some(beats.clone());
    Ok(beats)
}

/// Number of motion beats; caches the beat list onto the clip.
pub fn beat_count(clip: &mut MotionClip, cfg: &BeatConfig) -> Result<usize> {
    detect_beats(clip, cfg).map(|b| b.len())
}

/// Anchor correspondences of a retiming, endpoints included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    /// `(original_frame, shifted_frame)`, both strictly increasing.
    pub anchors: Vec<(usize, usize)>,
}

impl WarpSpec {
    pub fn identity(len: usize, interior: &[usize]) -> Self {
        let mut anchors = vec![(0, 0)];
        anchors.extend(interior.iter().map(|&b| (b, b)));
        anchors.push((len - 1, len - 1));
        WarpSpec { anchors }
    }

    pub fn is_identity(&self) -> bool {
        self.anchors.iter().all(|(a, b)| a == b)
    }

    pub fn validate(&self, len: usize) -> Result<()> {
        let a = &self.anchors;
        if a.len() < 2 || a[0] != (0, 0) || *a.last().unwrap() != (len - 1, len - 1) {
            return Err(Error::validation("warp anchors must pin both endpoints"));
        }
        if a.windows(2).any(|w| w[0].0 >= w[1].0 || w[0].1 >= w[1].1) {
            return Err(Error::validation("warp anchors must be strictly increasing"));
        }
        Ok(())
    }

    /// Original (fractional) time that shifted frame `f` samples from.
    pub fn source_time(&self, f: usize) -> f64 {
        let k = self
            .anchors
            .windows(2)
            .position(|w| f <= w[1].1)
            .unwrap_or(self.anchors.len() - 2);
        let (o0, s0) = self.anchors[k];
        let (o1, s1) = self.anchors[k + 1];
        let num = (f as f64 - s0 as f64) * (o1 as f64 - o0 as f64);
        o0 as f64 + num / (s1 as f64 - s0 as f64)
    }
}

/// Pose at fractional frame position `pos`, interpolating coordinates.
pub fn sample_pose(frames: &[Pose], pos: f64) -> Pose {
    let last = frames.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let lo = math::floor(pos) as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo == last {
        frames[lo].clone()
    } else {
        frames[lo].lerp(&frames[lo + 1], frac)
    }
}

/// Resamples `clip` through the piecewise-linear retiming described by `spec`.
pub fn apply_warp_spec(clip: &MotionClip, spec: &WarpSpec) -> Result<MotionClip> {
    spec.validate(clip.len())?;
    let frames = (0..clip.len())
        .map(|f| sample_pose(&clip.frames, spec.source_time(f)))
        .collect();
    Ok(MotionClip {
        id: clip.id.clone(),
        frames,
        frame_rate: clip.frame_rate,
        beats: None,
    })
}

/// Parameters of [`random_time_warp`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomWarpConfig {
    pub max_shift: usize,
    pub select_prob: f64,
    pub min_gap: usize,
}

impl Default for RandomWarpConfig {
    fn default() -> Self {
        RandomWarpConfig {
            max_shift: 4,
            select_prob: 0.5,
            min_gap: 2,
        }
    }
}

/// Randomly nudges a subset of the clip's beats (at least one) and retimes
/// the frames in between by linear interpolation. Length and both endpoint
/// frames are preserved; the result is a pure function of `seed`.
///
/// Uses the clip's cached beats when present, otherwise detects them.
pub fn random_time_warp(
    clip: &MotionClip,
    seed: u64,
    cfg: &RandomWarpConfig,
    beat_cfg: &BeatConfig,
) -> Result<(MotionClip, WarpSpec)> {
    let beats = match &clip.beats {
        Some(b) => b.clone(),
        None => motion_beats(&average_joint_speed(clip)?, beat_cfg),
    };
    let len = clip.len();
    let gap = cfg.min_gap.max(1);
    // keep only beats that leave room for the minimum gap around them
    let mut interior: Vec<usize> = Vec::with_capacity(beats.len());
    for b in beats {
        let prev = interior.last().copied().unwrap_or(0);
        if b >= prev + gap && b + gap < len {
            interior.push(b);
        }
    }
    if interior.len() < 2 {
        return Err(Error::Precondition(format!(
            "clip {}: random time warp needs at least 2 beats, found {}",
            clip.id,
            interior.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut selected: Vec<bool> = interior
        .iter()
        .map(|_| rng.random_bool(cfg.select_prob.clamp(0.0, 1.0)))
        .collect();
    if !selected.iter().any(|&s| s) {
        let k = rng.random_range(0..interior.len());
        selected[k] = true;
    }
    let s = cfg.max_shift as i64;
    let shifts: Vec<i64> = selected
        .iter()
        .map(|&sel| if sel && s > 0 { rng.random_range(-s..=s) } else { 0 })
        .collect();

    let n = interior.len();
    let mut anchors = Vec::with_capacity(n + 2);
    anchors.push((0usize, 0usize));
    let mut prev = 0i64;
    for (k, (&orig, &shift)) in interior.iter().zip(&shifts).enumerate() {
        let o = orig as i64;
        let remaining = (n - k) as i64;
        let lo = (prev + gap as i64).max(o - s);
        let hi = (len as i64 - 1 - gap as i64 * remaining).min(o + s);
        let shifted = (o + shift).clamp(lo, hi.max(lo));
        anchors.push((orig, shifted as usize));
        prev = shifted;
    }
    anchors.push((len - 1, len - 1));
    let spec = WarpSpec { anchors };
    let warped = apply_warp_spec(clip, &spec)?;
    Ok((warped, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn clip_from_speed_profile(step: impl Fn(usize) -> f64, len: usize) -> MotionClip {
        // joint 0 moves along x with per-frame displacement step(t); others still
        let mut x = 0.0;
        let frames = (0..len)
            .map(|t| {
                if t > 0 {
                    x += step(t);
                }
                let mut joints = vec![[0.0, 1.0, 0.0]; 21];
                joints[0] = [x, 1.0, 0.0];
                Pose::new(joints)
            })
            .collect();
        MotionClip::new("profile", frames)
    }

    #[test]
    fn frozen_clip_has_zero_speed_and_no_beats() {
        let mut c = clip_from_speed_profile(|_| 0.0, 160);
        let v = average_joint_speed(&c).unwrap();
        assert!(v.values.iter().all(|&x| x == 0.0));
        assert_eq!(beat_count(&mut c, &BeatConfig::default()).unwrap(), 0);
        assert_eq!(c.beats, Some(vec![]));
    }

    #[test]
    fn single_joint_speed_arithmetic() {
        let c = clip_from_speed_profile(|_| 0.05, 10);
        let v = average_joint_speed(&c).unwrap();
        assert_eq!(v.values[0], 0.0);
        for &x in &v.values[1..] {
            assert!((x - 20.0 * 0.05 / 21.0).abs() < 1e-12);
        }
    }

    #[test]
    fn speed_is_linear_in_scale() {
        let c = synth::SynthClip::default().build("s", &[20, 45, 70, 100, 130]);
        let mut doubled = c.clone();
        for p in &mut doubled.frames {
            for j in &mut p.joints {
                for x in j.iter_mut() {
                    *x *= 2.0;
                }
            }
        }
        let a = average_joint_speed(&c).unwrap();
        let b = average_joint_speed(&doubled).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!((2.0 * x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn single_frame_clip_rejected() {
        let c = clip_from_speed_profile(|_| 0.0, 1);
        assert!(average_joint_speed(&c).is_err());
    }

    #[test]
    fn cosine_speed_minima() {
        let v: Vec<f64> = (0..160)
            .map(|t| 1.0 - math::cos(2.0 * core::f64::consts::PI * t as f64 / 20.0))
            .collect();
        let beats = motion_beats(&SpeedSeries { values: v }, &BeatConfig::default());
        assert_eq!(beats, vec![20, 40, 60, 80, 100, 120, 140]);
    }

    #[test]
    fn constant_and_v_shaped_series() {
        let cfg = BeatConfig::default();
        assert!(motion_beats(&SpeedSeries { values: vec![0.7; 50] }, &cfg).is_empty());
        let v: Vec<f64> = (0..60).map(|t| (t as f64 - 30.0).abs()).collect();
        assert_eq!(motion_beats(&SpeedSeries { values: v }, &cfg), vec![30]);
    }

    #[test]
    fn cosine_clip_beat_count() {
        // per-frame displacement follows the cosine speed profile
        let mut c = clip_from_speed_profile(
            |t| 0.01 * (1.0 - math::cos(2.0 * core::f64::consts::PI * t as f64 / 20.0)),
            160,
        );
        assert_eq!(beat_count(&mut c, &BeatConfig::default()).unwrap(), 7);
    }

    #[test]
    fn self_concatenation_does_not_lose_beats() {
        let c = synth::SynthClip::default().build("s", &[12, 30, 47, 66]);
        let mut once = c.slice(0, 80).unwrap();
        // continue the same motion for twice the length
        let mut twice = c.slice(0, 160).unwrap();
        let cfg = BeatConfig::default();
        let n1 = beat_count(&mut once, &cfg).unwrap();
        let n2 = beat_count(&mut twice, &cfg).unwrap();
        assert!(n2 >= n1);
    }

    #[test]
    fn zero_shift_is_identity() {
        let c = synth::SynthClip::default().build("s", &[20, 45, 70, 100, 130]);
        let cfg = RandomWarpConfig {
            max_shift: 0,
            ..Default::default()
        };
        let (w, spec) = random_time_warp(&c, 7, &cfg, &BeatConfig::default()).unwrap();
        assert!(spec.is_identity());
        assert_eq!(w.frames, c.frames);
    }

    #[test]
    fn same_seed_same_output() {
        let c = synth::SynthClip::default().build("s", &[20, 45, 70, 100, 130]);
        let cfg = RandomWarpConfig::default();
        let a = random_time_warp(&c, 42, &cfg, &BeatConfig::default()).unwrap();
        let b = random_time_warp(&c, 42, &cfg, &BeatConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn too_few_beats_is_precondition_error() {
        let c = clip_from_speed_profile(|_| 0.0, 160);
        assert!(matches!(
            random_time_warp(&c, 1, &RandomWarpConfig::default(), &BeatConfig::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn shifted_beat_is_redetected_near_anchor() {
        let beats = [20, 45, 70, 100, 130];
        let c = synth::SynthClip::default().build("s", &beats);
        let detected = motion_beats(&average_joint_speed(&c).unwrap(), &BeatConfig::default());
        assert_eq!(detected, beats);
        let mut spec = WarpSpec::identity(160, &beats);
        spec.anchors[3] = (70, 74);
        let w = apply_warp_spec(&c, &spec).unwrap();
        let found = motion_beats(&average_joint_speed(&w).unwrap(), &BeatConfig::default());
        assert!(found.iter().any(|&b| b.abs_diff(74) <= 1), "warped beats {found:?}");
    }

    #[test]
    fn warp_preserves_endpoints_and_order_over_seeds() {
        let c = synth::SynthClip::default().build("s", &[8, 14, 30, 36, 60, 90, 96, 150]);
        let cfg = RandomWarpConfig::default();
        for seed in 0..1000 {
            let (w, spec) = random_time_warp(&c, seed, &cfg, &BeatConfig::default()).unwrap();
            spec.validate(160).unwrap();
            assert_eq!(w.len(), 160);
            assert_eq!(w.frames[0], c.frames[0]);
            assert_eq!(w.frames[159], c.frames[159]);
            for &(o, s) in &spec.anchors {
                assert!(o.abs_diff(s) <= cfg.max_shift);
            }
        }
    }
}
