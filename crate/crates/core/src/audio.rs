//! Music-side features: framing, mel filterbank, per-frame spectral
//! descriptors, onset envelope and music beats.
//!
//! The FFT itself is supplied by the caller (see the `choreo` crate); this
//! module frames the signal and turns magnitude spectra into features.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::peaks::{find_peaks, PeakParams};
use crate::{Error, Result, MUSIC_FPS};

/// Internal sample rate every buffer is resampled to.
pub const SAMPLE_RATE: u32 = 24_000;
pub const FFT_SIZE: usize = 1024;
/// 24000 / 400 = 60 feature frames per second.
pub const HOP: usize = 400;
pub const MEL_BANDS: usize = 96;
pub const MEL_FMAX: f64 = 12_000.0;
/// Lower edge of the "high band" used by the spectral-content label.
pub const HIGH_BAND_HZ: f64 = 4_000.0;

const PITCH_MIN_HZ: f64 = 50.0;
const PITCH_MAX_HZ: f64 = 2_000.0;
const PITCH_HARMONICS: usize = 3;
const VOICED_MAX_FLATNESS: f64 = 0.5;

/// Mono samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::validation("audio buffer is empty"));
        }
        if sample_rate == 0 {
            return Err(Error::validation("sample rate must be positive"));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::validation("audio contains non-finite samples"));
        }
        Ok(AudioBuffer { samples, sample_rate })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Linear-interpolation resampling; output length is
    /// `floor(len * to / from)`.
    pub fn resampled(&self, to: u32) -> AudioBuffer {
        if to == self.sample_rate {
            return self.clone();
        }
        let from = self.sample_rate as u64;
        let to64 = to as u64;
        let n_out = (self.samples.len() as u64 * to64 / from) as usize;
        let last = self.samples.len() - 1;
        let samples = (0..n_out as u64)
            .map(|i| {
                let num = i * from;
                let idx = (num / to64) as usize;
                let frac = (num % to64) as f64 / to64 as f64;
                let a = self.samples[idx.min(last)];
                if frac == 0.0 {
                    a
                } else {
                    let b = self.samples[(idx + 1).min(last)];
                    a + (b - a) * frac
                }
            })
            .collect();
        AudioBuffer {
            samples,
            sample_rate: to,
        }
    }

    /// Number of feature frames: `floor(samples / HOP)`.
    pub fn frame_count(&self) -> usize {
        self.samples.len() / HOP
    }
}

/// Periodic Hann window of [`FFT_SIZE`] samples.
pub fn hann_window() -> Vec<f64> {
    (0..FFT_SIZE)
        .map(|n| 0.5 - 0.5 * math::cos(2.0 * core::f64::consts::PI * n as f64 / FFT_SIZE as f64))
        .collect()
}

/// Fills `out` with the Hann-windowed frame centred on sample `t * HOP`,
/// zero-padded past either end of the signal.
pub fn windowed_frame(samples: &[f64], t: usize, window: &[f64], out: &mut [f64]) {
    let center = (t * HOP) as isize;
    let start = center - (FFT_SIZE / 2) as isize;
    for (k, o) in out.iter_mut().enumerate() {
        let idx = start + k as isize;
        *o = if idx >= 0 && (idx as usize) < samples.len() {
            samples[idx as usize] * window[k]
        } else {
            0.0
        };
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * math::log10(1.0 + f / 700.0)
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (math::pow(10.0, m / 2595.0) - 1.0)
}

/// Triangular mel filters over the positive-frequency bins of an FFT.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    /// Band edge frequencies; band `b` spans `edges[b]..edges[b + 2]`.
    pub edges: Vec<f64>,
    /// Per band, `(first_bin, weights)`.
    filters: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn new(bands: usize, fft_size: usize, sample_rate: u32, fmin: f64, fmax: f64) -> Self {
        let mlo = hz_to_mel(fmin);
        let mhi = hz_to_mel(fmax);
        let edges: Vec<f64> = (0..bands + 2)
            .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (bands + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let n_bins = fft_size / 2 + 1;
        let filters = (0..bands)
            .map(|b| {
                let (lo, c, hi) = (edges[b], edges[b + 1], edges[b + 2]);
                let first = (lo / bin_hz) as usize;
                let mut weights = Vec::new();
                for k in first..n_bins {
                    let f = k as f64 * bin_hz;
                    if f >= hi {
                        break;
                    }
                    let w = if f <= lo {
                        0.0
                    } else if f <= c {
                        (f - lo) / (c - lo)
                    } else {
                        (hi - f) / (hi - c)
                    };
                    weights.push(w);
                }
                (first, weights)
            })
            .collect();
        MelFilterbank { edges, filters }
    }

    pub fn standard() -> Self {
        MelFilterbank::new(MEL_BANDS, FFT_SIZE, SAMPLE_RATE, 0.0, MEL_FMAX)
    }

    pub fn bands(&self) -> usize {
        self.filters.len()
    }

    /// Weighted magnitude per band (before log compression).
    pub fn apply(&self, magnitudes: &[f64]) -> Vec<f64> {
        self.filters
            .iter()
            .map(|(first, w)| w.iter().zip(&magnitudes[*first..]).map(|(w, m)| w * m).sum())
            .collect()
    }
}

/// Spectral flatness of a magnitude spectrum (DC excluded); 0 for silence.
pub fn spectral_flatness(magnitudes: &[f64]) -> f64 {
    let m = &magnitudes[1..];
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    if mean < 1e-10 {
        return 0.0;
    }
    let log_mean = m.iter().map(|x| math::ln(x + 1e-12)).sum::<f64>() / m.len() as f64;
    (math::exp(log_mean) / (mean + 1e-12)).min(1.0)
}

/// Fraction of spectral energy at or above `cutoff_hz`; 0 for silence.
pub fn high_band_ratio(magnitudes: &[f64], bin_hz: f64, cutoff_hz: f64) -> f64 {
    let mut total = 0.0;
    let mut high = 0.0;
    for (k, m) in magnitudes.iter().enumerate() {
        let e = m * m;
        total += e;
        if k as f64 * bin_hz >= cutoff_hz {
            high += e;
        }
    }
    if total < 1e-20 {
        0.0
    } else {
        high / total
    }
}

/// Harmonic-product-spectrum fundamental estimate in Hz, or `None` when the
/// frame is silent or noise-like.
///
/// Candidates are bins in 50–2000 Hz holding at least 10% of the peak
/// magnitude of that range; the score is the sum of log magnitudes at the
/// first three harmonics, floored at 1% of that peak.
pub fn hps_pitch(magnitudes: &[f64], bin_hz: f64) -> Option<f64> {
    let lo = math::ceil(PITCH_MIN_HZ / bin_hz) as usize;
    let hi = ((PITCH_MAX_HZ / bin_hz) as usize).min(magnitudes.len() - 1);
    if lo > hi {
        return None;
    }
    let peak = magnitudes[lo..=hi].iter().copied().fold(0.0, f64::max);
    if peak < 1e-3 || spectral_flatness(magnitudes) >= VOICED_MAX_FLATNESS {
        return None;
    }
    let floor = peak * 1e-2;
    let mut best: Option<(usize, f64)> = None;
    for k in lo..=hi {
        if magnitudes[k] < 0.1 * peak {
            continue;
        }
        let score: f64 = (1..=PITCH_HARMONICS)
            .map(|h| {
                let m = magnitudes.get(h * k).copied().unwrap_or(0.0);
                math::ln(m.max(floor))
            })
            .sum();
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((k, score));
        }
    }
    best.map(|(k, _)| k as f64 * bin_hz)
}

/// Log-amplitude mel spectrogram stored frame-major: `frames[t][band]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MelSpectrogram {
    pub bands: usize,
    pub frames: Vec<Vec<f64>>,
}

impl MelSpectrogram {
    /// `(bands, frames)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.bands, self.frames.len())
    }

    pub fn get(&self, band: usize, frame: usize) -> f64 {
        self.frames[frame][band]
    }
}

/// Onset picking thresholds (`onset.prominence`, `onset.min_separation_frames`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OnsetConfig {
    /// Minimum prominence as a fraction of the envelope maximum.
    pub prominence: f64,
    pub min_separation_frames: usize,
}

impl Default for OnsetConfig {
    fn default() -> Self {
        OnsetConfig {
            prominence: 0.1,
            min_separation_frames: 15,
        }
    }
}

/// Everything the engine needs from a piece of music, at 60 frames/second.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MusicFeatures {
    pub mel: MelSpectrogram,
    pub onset_env: Vec<f64>,
    pub beats: Vec<usize>,
    pub duration_seconds: f64,
    /// Per-frame fundamental estimate, `None` when unvoiced.
    pub pitch_hz: Vec<Option<f64>>,
    pub flatness: Vec<f64>,
    pub high_ratio: Vec<f64>,
}

impl MusicFeatures {
    pub fn frame_count(&self) -> usize {
        self.onset_env.len()
    }

    /// Whole seconds of music available.
    pub fn whole_seconds(&self) -> usize {
        self.frame_count() / MUSIC_FPS
    }

    pub fn beats_in(&self, start: usize, end: usize) -> impl Iterator<Item = usize> + '_ {
        self.beats.iter().copied().filter(move |&b| b >= start && b < end)
    }

    pub fn beat_seconds(&self) -> Vec<f64> {
        self.beats.iter().map(|&b| b as f64 / MUSIC_FPS as f64).collect()
    }
}

/// Accumulates per-frame magnitude spectra into [`MusicFeatures`].
#[derive(Debug, Clone)]
pub struct FeatureBuilder {
    filterbank: MelFilterbank,
    bin_hz: f64,
    mel: Vec<Vec<f64>>,
    pitch: Vec<Option<f64>>,
    flatness: Vec<f64>,
    high: Vec<f64>,
}

impl Default for FeatureBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl FeatureBuilder {
    pub fn new() -> Self {
        FeatureBuilder {
            filterbank: MelFilterbank::standard(),
            bin_hz: SAMPLE_RATE as f64 / FFT_SIZE as f64,
            mel: Vec::new(),
            pitch: Vec::new(),
            flatness: Vec::new(),
            high: Vec::new(),
        }
    }

    /// `magnitudes` holds the `FFT_SIZE / 2 + 1` non-negative-frequency bins.
    pub fn push_frame(&mut self, magnitudes: &[f64]) {
        debug_assert_eq!(magnitudes.len(), FFT_SIZE / 2 + 1);
        let col = self.filterbank.apply(magnitudes).into_iter().map(math::ln_1p).collect();
        self.mel.push(col);
        self.pitch.push(hps_pitch(magnitudes, self.bin_hz));
        self.flatness.push(spectral_flatness(magnitudes));
        self.high.push(high_band_ratio(magnitudes, self.bin_hz, HIGH_BAND_HZ));
    }

    pub fn finish(self, duration_seconds: f64, onset: &OnsetConfig) -> MusicFeatures {
        let mel = MelSpectrogram {
            bands: self.filterbank.bands(),
            frames: self.mel,
        };
        let onset_env = onset_envelope(&mel);
        let beats = music_beats(&onset_env, onset);
        MusicFeatures {
            mel,
            onset_env,
            beats,
            duration_seconds,
            pitch_hz: self.pitch,
            flatness: self.flatness,
            high_ratio: self.high,
        }
    }
}

/// Half-wave rectified spectral flux summed over bands; `o(0) = 0`.
pub fn onset_envelope(mel: &MelSpectrogram) -> Vec<f64> {
    let mut env = vec![0.0; mel.frames.len()];
    for t in 1..mel.frames.len() {
        env[t] = mel.frames[t]
            .iter()
            .zip(&mel.frames[t - 1])
            .map(|(cur, prev)| (cur - prev).max(0.0))
            .sum();
    }
    env
}

/// Peaks of the onset envelope; empty for an all-zero envelope.
pub fn music_beats(onset_env: &[f64], cfg: &OnsetConfig) -> Vec<usize> {
    let max = onset_env.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Vec::new();
    }
    find_peaks(
        onset_env,
        PeakParams {
            min_prominence: cfg.prominence * max,
            min_separation: cfg.min_separation_frames,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_mel_band_sees_some_bin() {
        let fb = MelFilterbank::standard();
        assert_eq!(fb.bands(), 96);
        for (b, (_, w)) in fb.filters.iter().enumerate() {
            assert!(w.iter().any(|&x| x > 0.0), "band {b} empty");
        }
        assert!((fb.edges[97] - 12_000.0).abs() < 1e-6);
    }

    #[test]
    fn resample_halves_length() {
        let a = AudioBuffer::new(vec![0.0; 48_000], 48_000).unwrap();
        let r = a.resampled(SAMPLE_RATE);
        assert_eq!(r.samples.len(), 24_000);
        assert!(r.samples.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn resample_interpolates() {
        let a = AudioBuffer::new(vec![0.0, 1.0, 2.0, 3.0], 2).unwrap();
        let r = a.resampled(4);
        assert_eq!(r.samples, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.0]);
    }

    #[test]
    fn empty_audio_rejected() {
        assert!(AudioBuffer::new(Vec::new(), 24_000).is_err());
    }

    #[test]
    fn constant_mel_has_zero_flux() {
        let mel = MelSpectrogram {
            bands: 96,
            frames: vec![vec![0.7; 96]; 50],
        };
        assert!(onset_envelope(&mel).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn loud_frame_is_unique_envelope_max() {
        let mut frames = vec![vec![0.0; 96]; 50];
        frames[20] = vec![1.0; 96];
        let env = onset_envelope(&MelSpectrogram { bands: 96, frames });
        let argmax = (0..env.len()).max_by(|&a, &b| env[a].total_cmp(&env[b])).unwrap();
        assert_eq!(argmax, 20);
        assert_eq!(env.iter().filter(|&&v| v == env[20]).count(), 1);
    }

    #[test]
    fn beats_on_degenerate_envelopes() {
        let cfg = OnsetConfig::default();
        assert!(music_beats(&[0.0; 100], &cfg).is_empty());
        let mut env = vec![0.0; 100];
        env[50] = 3.0;
        assert_eq!(music_beats(&env, &cfg), vec![50]);
    }

    #[test]
    fn flatness_extremes() {
        assert_eq!(spectral_flatness(&[0.0; 513]), 0.0);
        assert!((spectral_flatness(&[2.0; 513]) - 1.0).abs() < 1e-9);
        let mut tone = vec![0.0; 513];
        tone[19] = 100.0;
        assert!(spectral_flatness(&tone) < 0.01);
    }

    #[test]
    fn hps_prefers_fundamental_of_harmonic_series() {
        let bin_hz = SAMPLE_RATE as f64 / FFT_SIZE as f64;
        let mut m = vec![0.0; 513];
        m[10] = 50.0;
        m[20] = 80.0;
        m[30] = 60.0;
        assert_eq!(hps_pitch(&m, bin_hz), Some(10.0 * bin_hz));
        assert_eq!(hps_pitch(&[0.0; 513], bin_hz), None);
    }
}
