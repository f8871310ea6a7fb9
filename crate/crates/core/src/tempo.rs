//! Tempo-density curves and their slope-constrained subsequence alignment.
//!
//! A tempo density is a max-normalized, Gaussian-smoothed beat impulse train
//! at the motion frame rate. Music and motion densities are aligned with a
//! subsequence DTW whose steps are `(1,1)`, `(1,2)` and `(2,1)` (local slope
//! within [0.5, 2]); the resulting path retimes a source clip onto the music
//! window.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::audio::MusicFeatures;
use crate::math;
use crate::model::MotionClip;
use crate::motion::{detect_beats, sample_pose, BeatConfig};
use crate::{Error, Result, MOTION_FPS, MUSIC_FPS, SEGMENT_FRAMES};

/// Smoothing kernel and alignment cost settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TempoConfig {
    /// Gaussian standard deviation in motion frames.
    pub sigma: f64,
    /// Kernel truncation radius in motion frames.
    pub radius: usize,
    pub cell_cost: CellCost,
}

impl Default for TempoConfig {
    fn default() -> Self {
        TempoConfig {
            sigma: 2.0,
            radius: 6,
            cell_cost: CellCost::Absolute,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellCost {
    Absolute,
    Squared,
}

impl CellCost {
    #[inline]
    pub fn eval(self, a: f64, b: f64) -> f64 {
        match self {
            CellCost::Absolute => (a - b).abs(),
            CellCost::Squared => (a - b) * (a - b),
        }
    }
}

/// Non-negative rhythm curve at 20 fps; max is 1 unless all zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TempoDensity {
    pub values: Vec<f64>,
}

impl TempoDensity {
    pub fn zeros(len: usize) -> Self {
        TempoDensity { values: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_all_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Smooths `impulses` with the configured kernel and max-normalizes.
    pub fn from_impulses(impulses: &[f64], cfg: &TempoConfig) -> Self {
        let kernel = gaussian_kernel(cfg.sigma, cfg.radius);
        let r = cfg.radius as isize;
        let n = impulses.len() as isize;
        let mut values = vec![0.0; impulses.len()];
        for (t, &x) in impulses.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (k, w) in kernel.iter().enumerate() {
                let idx = t as isize + k as isize - r;
                if idx >= 0 && idx < n {
                    values[idx as usize] += x * w;
                }
            }
        }
        let mut td = TempoDensity { values };
        td.max_normalize();
        td
    }

    /// Unit impulses at `beats`, smoothed and max-normalized.
    pub fn from_beats(beats: &[usize], len: usize, cfg: &TempoConfig) -> Self {
        let mut impulses = vec![0.0; len];
        for &b in beats.iter().filter(|&&b| b < len) {
            impulses[b] = 1.0;
        }
        Self::from_impulses(&impulses, cfg)
    }

    pub fn max_normalize(&mut self) {
        let max = self.values.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            for v in &mut self.values {
                *v /= max;
            }
        }
    }
}

/// Unnormalized Gaussian weights for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    (-r..=r)
        .map(|d| math::exp(-((d * d) as f64) / (2.0 * sigma * sigma)))
        .collect()
}

/// Density of a clip's motion beats (detected and cached if absent).
pub fn motion_tempo_density(clip: &mut MotionClip, beat_cfg: &BeatConfig, cfg: &TempoConfig) -> Result<TempoDensity> {
    let beats = match &clip.beats {
        Some(b) => b.clone(),
        None => detect_beats(clip, beat_cfg)?,
    };
    Ok(TempoDensity::from_beats(&beats, clip.len(), cfg))
}

/// Density of the 4-second music window starting at music frame `start`:
/// onset envelope averaged over 3-frame groups (60 -> 20 fps), smoothed and
/// max-normalized. Always 80 frames long.
pub fn music_tempo_density(features: &MusicFeatures, start: usize, cfg: &TempoConfig) -> Result<TempoDensity> {
    let ratio = MUSIC_FPS / MOTION_FPS;
    let window = SEGMENT_FRAMES * ratio;
    let end = start + window;
    if end > features.onset_env.len() {
        return Err(Error::OutOfBounds {
            what: "music window",
            start,
            end,
            available: features.onset_env.len(),
        });
    }
    let impulses: Vec<f64> = features.onset_env[start..end]
        .chunks(ratio)
        .map(|c| c.iter().sum::<f64>() / ratio as f64)
        .collect();
    Ok(TempoDensity::from_impulses(&impulses, cfg))
}

/// Monotone target-to-source correspondence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpPath {
    /// `(target_frame, source_frame)` knots.
    pub knots: Vec<(usize, usize)>,
    pub cost: f64,
}

impl WarpPath {
    /// A slope-1 path over `len` target frames starting at source `start`.
    pub fn diagonal(start: usize, len: usize) -> Self {
        WarpPath {
            knots: (0..len).map(|i| (i, start + i)).collect(),
            cost: 0.0,
        }
    }

    pub fn source_start(&self) -> usize {
        self.knots[0].1
    }

    pub fn source_end(&self) -> usize {
        self.knots.last().unwrap().1
    }

    /// Checks the step set, full target coverage and the source span bounds.
    pub fn validate(&self, target_len: usize, source_len: usize) -> Result<()> {
        let k = &self.knots;
        if k.is_empty() {
            return Err(Error::validation("warp path has no knots"));
        }
        if k[0].0 != 0 || k.last().unwrap().0 != target_len - 1 {
            return Err(Error::validation(format!(
                "warp path covers targets {}..={} instead of 0..={}",
                k[0].0,
                k.last().unwrap().0,
                target_len - 1
            )));
        }
        for w in k.windows(2) {
            let d = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!(d, (1, 1) | (1, 2) | (2, 1)) {
                return Err(Error::validation(format!(
                    "warp path step {:?} -> {:?} outside the slope set",
                    w[0], w[1]
                )));
            }
        }
        if self.source_end() >= source_len {
            return Err(Error::validation(format!(
                "warp path reaches source frame {} of {source_len}",
                self.source_end()
            )));
        }
        let span = self.source_end() - self.source_start() + 1;
        let lo = target_len.div_ceil(2);
        if span < lo || span > 2 * target_len {
            return Err(Error::validation(format!(
                "warp path source span {span} outside [{lo}, {}]",
                2 * target_len
            )));
        }
        Ok(())
    }

    /// Fractional source position for every target frame, interpolating
    /// linearly between knots.
    pub fn source_positions(&self) -> Vec<f64> {
        let target_len = self.knots.last().unwrap().0 + 1;
        let mut out = vec![0.0; target_len];
        out[0] = self.knots[0].1 as f64;
        for w in self.knots.windows(2) {
            let (i0, j0) = w[0];
            let (i1, j1) = w[1];
            for i in i0 + 1..=i1 {
                let f = (i - i0) as f64 / (i1 - i0) as f64;
                out[i] = j0 as f64 + f * (j1 as f64 - j0 as f64);
            }
        }
        out
    }
}

// Step codes double as the tie-break order: diagonal first.
const STEP_NONE: u8 = 0;
const STEP_DIAG: u8 = 1;
const STEP_SOURCE2: u8 = 2;
const STEP_TARGET2: u8 = 3;

fn step_delta(step: u8) -> (usize, usize) {
    match step {
        STEP_DIAG => (1, 1),
        STEP_SOURCE2 => (1, 2),
        STEP_TARGET2 => (2, 1),
        _ => unreachable!("no predecessor"),
    }
}

struct Table {
    cols: usize,
    cost: Vec<f64>,
    start: Vec<usize>,
    step: Vec<u8>,
}

impl Table {
    #[inline]
    fn at(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    fn pred(&self, (i, j): (usize, usize)) -> (usize, usize) {
        let (di, dj) = step_delta(self.step[self.at(i, j)]);
        (i - di, j - dj)
    }

    /// Orders `path(a) + step_a` against `path(b) + step_b` when both share a
    /// start: the first forward difference lies on the steps leaving their
    /// latest common cell.
    fn lex_less(&self, mut a: (usize, usize), mut sa: u8, mut b: (usize, usize), mut sb: u8) -> bool {
        while a != b {
            if a.0 > b.0 {
                sa = self.step[self.at(a.0, a.1)];
                a = self.pred(a);
            } else if b.0 > a.0 {
                sb = self.step[self.at(b.0, b.1)];
                b = self.pred(b);
            } else {
                sa = self.step[self.at(a.0, a.1)];
                sb = self.step[self.at(b.0, b.1)];
                if sa == STEP_NONE || sb == STEP_NONE {
                    // distinct starts never reach here; fall back to source order
                    return a.1 < b.1;
                }
                a = self.pred(a);
                b = self.pred(b);
            }
        }
        sa < sb
    }
}

/// Subsequence DTW of `target` against `source` with steps
/// `{(1,1), (1,2), (2,1)}`.
///
/// Recurrence, with `c(i, j)` the configured cell cost:
/// `D(0, j) = c(0, j)`;
/// `D(i, j) = c(i, j) + min{ D(i-1, j-1), D(i-1, j-2), D(i-2, j-1) + c(i-1, j) }`.
/// The answer is the best `D(T-1, j)` over all `j`.
///
/// Equal-cost paths are ordered by smallest source start, then by their
/// forward step sequence with the diagonal step preferred over `(1,2)` over
/// `(2,1)`, so results are fully deterministic.
pub fn subsequence_dtw(target: &[f64], source: &[f64], cost: CellCost) -> Result<WarpPath> {
    let t_len = target.len();
    let s_len = source.len();
    if t_len == 0 || s_len == 0 {
        return Err(Error::validation("alignment inputs must be nonempty"));
    }
    let min_span = (t_len - 1).div_ceil(2) + 1;
    if s_len < min_span {
        return Err(Error::Infeasible(format!(
            "source of {s_len} frames cannot cover {t_len} target frames at slope <= 2"
        )));
    }

    let c = |i: usize, j: usize| cost.eval(target[i], source[j]);
    let mut tab = Table {
        cols: s_len,
        cost: vec![f64::INFINITY; t_len * s_len],
        start: vec![0; t_len * s_len],
        step: vec![STEP_NONE; t_len * s_len],
    };
    for j in 0..s_len {
        tab.cost[j] = c(0, j);
        tab.start[j] = j;
    }
    for i in 1..t_len {
        for j in 1..s_len {
            let cij = c(i, j);
            let mut best: Option<(f64, usize, (usize, usize), u8)> = None;
            let mut consider = |value: f64, from: (usize, usize), step: u8, tab: &Table| {
                if !value.is_finite() {
                    return;
                }
                let start = tab.start[tab.at(from.0, from.1)];
                let better = match best {
                    None => true,
                    Some((bv, bs, bfrom, bstep)) => {
                        value < bv
                            || (value == bv && (start < bs || (start == bs && tab.lex_less(from, step, bfrom, bstep))))
                    }
                };
                if better {
                    best = Some((value, start, from, step));
                }
            };
            let d = tab.cost[tab.at(i - 1, j - 1)];
            consider(cij + d, (i - 1, j - 1), STEP_DIAG, &tab);
            if j >= 2 {
                let d = tab.cost[tab.at(i - 1, j - 2)];
                consider(cij + d, (i - 1, j - 2), STEP_SOURCE2, &tab);
            }
            if i >= 2 {
                let d = tab.cost[tab.at(i - 2, j - 1)];
                consider(cij + (d + c(i - 1, j)), (i - 2, j - 1), STEP_TARGET2, &tab);
            }
            if let Some((v, s, _, step)) = best {
                let idx = tab.at(i, j);
                tab.cost[idx] = v;
                tab.start[idx] = s;
                tab.step[idx] = step;
            }
        }
    }

    let last = t_len - 1;
    let mut end: Option<usize> = None;
    for j in 0..s_len {
        let v = tab.cost[tab.at(last, j)];
        if !v.is_finite() {
            continue;
        }
        end = match end {
            None => Some(j),
            Some(e) => {
                let ev = tab.cost[tab.at(last, e)];
                let (s, es) = (tab.start[tab.at(last, j)], tab.start[tab.at(last, e)]);
                let take = v < ev
                    || (v == ev
                        && (s < es
                            || (s == es && last > 0 && {
                                let (pj, sj) = (tab.pred((last, j)), tab.step[tab.at(last, j)]);
                                let (pe, se) = (tab.pred((last, e)), tab.step[tab.at(last, e)]);
                                tab.lex_less(pj, sj, pe, se)
                            })));
                if take {
                    Some(j)
                } else {
                    Some(e)
                }
            }
        };
    }
    let end = end.ok_or_else(|| Error::Infeasible(String::from("no path reaches the last target frame")))?;

    let mut knots = vec![(last, end)];
    let mut cell = (last, end);
    while tab.step[tab.at(cell.0, cell.1)] != STEP_NONE {
        cell = tab.pred(cell);
        knots.push(cell);
    }
    knots.reverse();
    Ok(WarpPath {
        knots,
        cost: tab.cost[tab.at(last, end)],
    })
}

/// Retimes `source` along `path`: target frame `i` samples the source at the
/// interpolated position, blending the two nearest frames. Beats are
/// recomputed on the result.
pub fn apply_warp(source: &MotionClip, path: &WarpPath, beat_cfg: &BeatConfig) -> Result<MotionClip> {
    let target_len = path.knots.last().map_or(0, |k| k.0 + 1);
    path.validate(target_len, source.len())?;
    let frames = path
        .source_positions()
        .into_iter()
        .map(|pos| sample_pose(&source.frames, pos))
        .collect();
    let mut out = MotionClip {
        id: source.id.clone(),
        frames,
        frame_rate: source.frame_rate,
        beats: None,
    };
    detect_beats(&mut out, beat_cfg)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: TempoConfig = TempoConfig {
        sigma: 2.0,
        radius: 6,
        cell_cost: CellCost::Absolute,
    };

    #[test]
    fn densities_from_beats() {
        assert!(TempoDensity::from_beats(&[], 160, &CFG).is_all_zero());

        let one = TempoDensity::from_beats(&[80], 160, &CFG);
        assert_eq!(one.values[80], 1.0);
        let argmax = (0..160)
            .max_by(|&a, &b| one.values[a].total_cmp(&one.values[b]))
            .unwrap();
        assert_eq!(argmax, 80);
        assert!(one.values[..80].windows(2).all(|w| w[0] <= w[1]));
        assert!(one.values[80..].windows(2).all(|w| w[0] >= w[1]));

        let three = TempoDensity::from_beats(&[40, 80, 120], 160, &CFG);
        assert_eq!(three.values[40], three.values[80]);
        assert_eq!(three.values[80], three.values[120]);
        assert_eq!(three.values[60], three.values[100]);
        // 20 frames from every beat: beyond the kernel radius
        assert_eq!(three.values[60], 0.0);
    }

    #[test]
    fn overlapping_kernels_sum() {
        // beats 4 apart: the midpoint collects two tails of exp(-4/8) and
        // becomes the maximum
        let td = TempoDensity::from_beats(&[20, 24], 50, &CFG);
        let mid = 2.0 * math::exp(-4.0 / 8.0);
        assert_eq!(td.values[22], 1.0);
        assert!((td.values[20] - (1.0 + math::exp(-2.0)) / mid).abs() < 1e-12);
    }

    #[test]
    fn embedded_target_is_found_on_the_diagonal() {
        let source: Vec<f64> = (0..160).map(|j| math::sin(j as f64 * 0.37) + j as f64 * 0.01).collect();
        let target = source[40..120].to_vec();
        let path = subsequence_dtw(&target, &source, CellCost::Absolute).unwrap();
        assert_eq!(path.cost, 0.0);
        assert_eq!(path, WarpPath::diagonal(40, 80));
    }

    #[test]
    fn constant_inputs_take_diagonal_from_zero() {
        let path = subsequence_dtw(&[0.5; 80], &[0.5; 160], CellCost::Absolute).unwrap();
        assert_eq!(path.cost, 0.0);
        assert_eq!(path, WarpPath::diagonal(0, 80));
    }

    #[test]
    fn zero_padded_embedding_located() {
        let x: Vec<f64> = TempoDensity::from_beats(&[10, 25, 47, 60], 80, &CFG).values;
        let mut padded = vec![0.0; 160];
        padded[33..113].copy_from_slice(&x);
        let path = subsequence_dtw(&x, &padded, CellCost::Absolute).unwrap();
        assert_eq!(path.cost, 0.0);
        path.validate(80, 160).unwrap();
        // knots at beat peaks land on the embedded peaks
        for b in [10, 25, 47, 60] {
            let j = path.knots.iter().find(|k| k.0 == b).map(|k| k.1);
            assert_eq!(j, Some(b + 33));
        }
    }

    #[test]
    fn infeasible_short_source() {
        assert!(matches!(
            subsequence_dtw(&[0.0; 80], &[0.0; 39], CellCost::Absolute),
            Err(Error::Infeasible(_))
        ));
        // 41 source frames are just enough for 80 targets
        let p = subsequence_dtw(&[0.0; 80], &[0.0; 41], CellCost::Absolute).unwrap();
        p.validate(80, 41).unwrap();
    }

    #[test]
    fn cost_scales_with_common_factor() {
        let t: Vec<f64> = (0..30).map(|i| math::sin(i as f64 * 0.5).abs()).collect();
        let s: Vec<f64> = (0..60).map(|j| math::cos(j as f64 * 0.23).abs()).collect();
        let a = subsequence_dtw(&t, &s, CellCost::Absolute).unwrap();
        let t4: Vec<f64> = t.iter().map(|x| x * 4.0).collect();
        let s4: Vec<f64> = s.iter().map(|x| x * 4.0).collect();
        let b = subsequence_dtw(&t4, &s4, CellCost::Absolute).unwrap();
        assert_eq!(a.knots, b.knots);
        assert!((b.cost - 4.0 * a.cost).abs() < 1e-9);
    }

    #[test]
    fn validator_rejects_bad_paths() {
        let mut p = WarpPath::diagonal(0, 10);
        p.validate(10, 20).unwrap();
        assert!(p.validate(11, 20).is_err());
        p.knots[5].1 += 2; // a (1,3) step
        assert!(p.validate(10, 20).is_err());
        assert!(WarpPath::diagonal(15, 10).validate(10, 20).is_err());
    }

    #[test]
    fn source_positions_interpolate_skipped_rows() {
        let p = WarpPath {
            knots: vec![(0, 3), (2, 4), (3, 6)],
            cost: 0.0,
        };
        assert_eq!(p.source_positions(), vec![3.0, 3.5, 4.0, 6.0]);
    }

    #[test]
    fn music_density_window_bounds() {
        let features = MusicFeatures {
            mel: crate::audio::MelSpectrogram {
                bands: 96,
                frames: vec![vec![0.0; 96]; 300],
            },
            onset_env: vec![0.0; 300],
            beats: vec![],
            duration_seconds: 5.0,
            pitch_hz: vec![None; 300],
            flatness: vec![0.0; 300],
            high_ratio: vec![0.0; 300],
        };
        let td = music_tempo_density(&features, 60, &CFG).unwrap();
        assert_eq!(td.len(), 80);
        assert!(td.is_all_zero());
        assert!(music_tempo_density(&features, 61, &CFG).is_err());

        let mut f = features.clone();
        f.onset_env[60 + 120] = 1.0; // window second 2
        let td = music_tempo_density(&f, 60, &CFG).unwrap();
        let argmax = (0..80).max_by(|&a, &b| td.values[a].total_cmp(&td.values[b])).unwrap();
        assert_eq!(argmax, 40);
    }
}
