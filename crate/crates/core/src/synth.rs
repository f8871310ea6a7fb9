//! Deterministic synthetic motion and music used by fixtures, demos and the
//! acceptance harness.
//!
//! Synthetic clips move every joint back and forth along a fixed direction
//! with a `(1 - cos(pi * u)) / 2` profile, where the phase `u` advances by
//! one between consecutive beats. Velocity vanishes half a frame before each
//! requested beat frame, so backward-difference speed has a strict minimum
//! exactly at the beat.

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};

use crate::math;
use crate::model::{MotionClip, Pose};
use crate::SOURCE_FRAMES;

const PI: f64 = core::f64::consts::PI;

/// Shape parameters of a synthetic 21-joint clip.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub len: usize,
    /// Peak displacement scale in meters.
    pub amplitude: f64,
    pub upper_weight: f64,
    pub lower_weight: f64,
    /// Arm abduction in [0, 1]; 1 is a T-pose.
    pub spread: f64,
    /// Root sway amplitude in meters.
    pub sway: f64,
    /// Selects the per-joint motion directions.
    pub variant: u32,
}

impl Default for SynthClip {
    fn default() -> Self {
        SynthClip {
            len: SOURCE_FRAMES,
            amplitude: 0.12,
            upper_weight: 1.0,
            lower_weight: 0.6,
            spread: 0.5,
            sway: 0.03,
            variant: 0,
        }
    }
}

/// Rest pose of the standard 21-joint skeleton.
pub fn rest_pose(spread: f64) -> Pose {
    let theta = spread.clamp(0.0, 1.0) * PI / 2.0;
    let arm = |side: f64, len: f64| {
        [
            side * (0.18 + len * math::sin(theta)),
            1.45 - len * math::cos(theta),
            0.0,
        ]
    };
    Pose::new(alloc::vec![
        [0.0, 1.0, 0.0],
        [0.1, 0.95, 0.0],
        [-0.1, 0.95, 0.0],
        [0.0, 1.15, 0.0],
        [0.1, 0.55, 0.0],
        [-0.1, 0.55, 0.0],
        [0.0, 1.35, 0.0],
        [0.1, 0.1, 0.0],
        [-0.1, 0.1, 0.0],
        [0.0, 1.5, 0.0],
        [0.1, 0.0, 0.12],
        [-0.1, 0.0, 0.12],
        [0.0, 1.65, 0.0],
        [0.18, 1.45, 0.0],
        [-0.18, 1.45, 0.0],
        arm(1.0, 0.28),
        arm(-1.0, 0.28),
        arm(1.0, 0.52),
        arm(-1.0, 0.52),
        arm(1.0, 0.6),
        arm(-1.0, 0.6),
    ])
}

const UPPER: [usize; 12] = [3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20];

/// Continuous phase with `u(b_k - 0.5) = k`, a monotone cubic between knots
/// with matching slopes on both sides of each knot. Outside the knots the
/// phase is linear and moves by less than one unit before the clip edge, so
/// no extra velocity zeros appear.
fn phase(t: f64, knots: &[f64], last: f64) -> f64 {
    let edge_rate = |gap: f64, room: f64| {
        if room > 0.0 {
            (1.0 / gap).min(0.9 / room)
        } else {
            1.0 / gap
        }
    };
    let n = knots.len();
    match n {
        0 => return 0.0,
        1 => {
            let k = knots[0];
            let room = if t <= k { k } else { last - k };
            return (t - k) * edge_rate(15.0, room);
        }
        _ => {}
    }
    let slope = |k: usize| {
        if k == 0 {
            edge_rate(knots[1] - knots[0], knots[0])
        } else if k == n - 1 {
            edge_rate(knots[n - 1] - knots[n - 2], last - knots[n - 1])
        } else {
            2.0 / (knots[k + 1] - knots[k - 1])
        }
    };
    if t <= knots[0] {
        return (t - knots[0]) * slope(0);
    }
    if t >= knots[n - 1] {
        return (n - 1) as f64 + (t - knots[n - 1]) * slope(n - 1);
    }
    let k = knots.windows(2).position(|w| t <= w[1]).unwrap();
    let h = knots[k + 1] - knots[k];
    let x = (t - knots[k]) / h;
    let (x2, x3) = (x * x, x * x * x);
    let h10 = x3 - 2.0 * x2 + x;
    let h01 = -2.0 * x3 + 3.0 * x2;
    let h11 = x3 - x2;
    k as f64 + h01 + h * (h10 * slope(k) + h11 * slope(k + 1))
}

impl SynthClip {
    fn direction(&self, joint: usize) -> [f64; 3] {
        let a = joint as f64 * 1.37 + self.variant as f64 * 0.91;
        let d = [math::sin(a), 0.6 * math::cos(1.7 * a), math::cos(a)];
        let n = math::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
        [d[0] / n, d[1] / n, d[2] / n]
    }

    /// Clip whose motion beats fall on `beats` (frame indices). Beats are not
    /// cached on the result.
    pub fn build(&self, id: impl Into<String>, beats: &[usize]) -> MotionClip {
        let rest = rest_pose(self.spread);
        let knots: Vec<f64> = beats.iter().map(|&b| b as f64 - 0.5).collect();
        let frames = (0..self.len)
            .map(|t| {
                let u = phase(t as f64, &knots, (self.len - 1) as f64);
                let s = (1.0 - math::cos(PI * u)) / 2.0;
                let sway = self.sway * s;
                let joints = rest
                    .joints
                    .iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let w = if j == 0 {
                            0.0
                        } else if UPPER.contains(&j) {
                            self.upper_weight
                        } else {
                            self.lower_weight
                        };
                        let d = self.direction(j);
                        let a = self.amplitude * w * s;
                        [p[0] + a * d[0] + sway, p[1] + a * d[1], p[2] + a * d[2]]
                    })
                    .collect();
                Pose::new(joints)
            })
            .collect();
        MotionClip::new(id, frames)
    }

    /// Randomized style parameters.
    pub fn random<R: Rng>(rng: &mut R) -> Self {
        SynthClip {
            len: SOURCE_FRAMES,
            amplitude: rng.random_range(0.06..0.2),
            upper_weight: rng.random_range(0.3..1.2),
            lower_weight: rng.random_range(0.1..1.0),
            spread: rng.random_range(0.0..1.0),
            sway: rng.random_range(0.0..0.05),
            variant: rng.random_range(0..16),
        }
    }
}

/// Beat frames with gaps drawn uniformly from `[min_gap, max_gap]`, kept at
/// least `min_gap` away from both clip ends.
pub fn random_beats<R: Rng>(rng: &mut R, len: usize, min_gap: usize, max_gap: usize) -> Vec<usize> {
    let mut beats = Vec::new();
    let mut b = rng.random_range(min_gap..=max_gap);
    while b + min_gap < len {
        beats.push(b);
        b += rng.random_range(min_gap..=max_gap);
    }
    beats
}

/// `n` clips with random shape parameters and beat gaps drawn from
/// `[min_gap, max_gap]`, ids `clip000`, `clip001`, ...
pub fn corpus(n: usize, seed: u64, min_gap: usize, max_gap: usize) -> Vec<MotionClip> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(crate::seed::derive_seed(seed, "synth.corpus"));
    (0..n)
        .map(|i| {
            let beats = random_beats(&mut rng, SOURCE_FRAMES, min_gap, max_gap);
            SynthClip::random(&mut rng).build(alloc::format!("clip{i:03}"), &beats)
        })
        .collect()
}

/// Parameters for synthetic music.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMusic {
    pub sample_rate: u32,
    pub duration_s: f64,
    /// Click times in seconds.
    pub clicks: Vec<f64>,
    pub click_gain: f64,
    /// Melody note frequencies, one per click interval, cycled.
    pub melody_hz: Vec<f64>,
    pub melody_gain: f64,
}

impl SynthMusic {
    /// Clicks at a steady tempo starting at `offset_s`.
    pub fn metronome(duration_s: f64, bpm: f64, offset_s: f64, sample_rate: u32) -> Self {
        let period = 60.0 / bpm;
        let mut clicks = Vec::new();
        let mut t = offset_s;
        while t < duration_s {
            clicks.push(t);
            t += period;
        }
        SynthMusic {
            sample_rate,
            duration_s,
            clicks,
            click_gain: 0.8,
            melody_hz: Vec::new(),
            melody_gain: 0.0,
        }
    }

    pub fn render(&self) -> Vec<f64> {
        let sr = self.sample_rate as f64;
        let n = math::round(self.duration_s * sr) as usize;
        let mut out = alloc::vec![0.0; n];
        if !self.melody_hz.is_empty() && self.melody_gain > 0.0 {
            let mut phase = 0.0;
            for (i, o) in out.iter_mut().enumerate() {
                let t = i as f64 / sr;
                let idx = self.clicks.iter().filter(|&&c| c <= t).count();
                let f = self.melody_hz[idx % self.melody_hz.len()];
                phase += 2.0 * PI * f / sr;
                *o += self.melody_gain * math::sin(phase);
            }
        }
        let burst = (0.015 * sr) as usize;
        for &c in &self.clicks {
            let start = math::round(c * sr) as usize;
            for k in 0..burst {
                if start + k >= n {
                    break;
                }
                let t = k as f64 / sr;
                let env = math::exp(-t / 0.003);
                out[start + k] +=
                    self.click_gain * env * (math::sin(2.0 * PI * 2000.0 * t) + 0.5 * math::sin(2.0 * PI * 5200.0 * t));
            }
        }
        for o in &mut out {
            *o = o.clamp(-1.0, 1.0);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::motion::{average_joint_speed, motion_beats, BeatConfig};
    use rand::SeedableRng;

    #[test]
    fn requested_beats_are_detected() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for i in 0..200 {
            let beats = random_beats(&mut rng, 160, 6, 24);
            let clip = SynthClip::random(&mut rng).build(alloc::format!("c{i}"), &beats);
            let found = motion_beats(&average_joint_speed(&clip).unwrap(), &BeatConfig::default());
            assert_eq!(found, beats);
        }
    }
}
