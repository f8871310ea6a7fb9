//! WAV decoding and the short-time Fourier transform feeding the core
//! feature builder.

use std::path::Path;

use choreo_core::audio::{
    hann_window, windowed_frame, AudioBuffer, FeatureBuilder, MusicFeatures, OnsetConfig, FFT_SIZE, SAMPLE_RATE,
};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{CliError, Result};

/// Decodes a PCM or float WAV file to mono, resampled to the internal rate.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let mut reader = hound::WavReader::open(path).map_err(|e| match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        other => CliError::parse(path, other.to_string()),
    })?;
    let spec = reader.spec();
    let channels = spec.channels as usize;
    let bad = |e: hound::Error| CliError::parse(path, e.to_string());
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<Result<_, _>>()
            .map_err(bad)?,
        hound::SampleFormat::Int => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(bad)?
        }
    };
    if channels == 0 || interleaved.is_empty() {
        return Err(CliError::parse(path, "no audio samples"));
    }
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect();
    let buf = AudioBuffer::new(mono, spec.sample_rate).map_err(|e| CliError::parse(path, e.to_string()))?;
    Ok(buf.resampled(SAMPLE_RATE))
}

/// Writes mono 32-bit float samples.
pub fn write_wav(path: &Path, samples: &[f64], sample_rate: u32) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate,
        bits_per_sample: 32,
        sample_format: hound::SampleFormat::Float,
    };
    let wrap = |e: hound::Error| match e {
        hound::Error::IoError(io) => CliError::io(path, io),
        other => CliError::Internal(other.to_string()),
    };
    let mut w = hound::WavWriter::create(path, spec).map_err(wrap)?;
    for &s in samples {
        w.write_sample(s as f32).map_err(wrap)?;
    }
    w.finalize().map_err(wrap)
}

/// Magnitude spectra of every frame, `FFT_SIZE / 2 + 1` bins each.
pub fn stft_magnitudes(buffer: &AudioBuffer) -> Vec<Vec<f64>> {
    let window = hann_window();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(FFT_SIZE);
    let mut frame = vec![0.0; FFT_SIZE];
    let mut spectrum = vec![Complex::new(0.0, 0.0); FFT_SIZE];
    (0..buffer.frame_count())
        .map(|t| {
            windowed_frame(&buffer.samples, t, &window, &mut frame);
            for (c, &x) in spectrum.iter_mut().zip(&frame) {
                *c = Complex::new(x, 0.0);
            }
            fft.process(&mut spectrum);
            spectrum[..=FFT_SIZE / 2].iter().map(|c| c.norm()).collect()
        })
        .collect()
}

/// Mel spectrogram, onset envelope, beats and label inputs of a buffer at
/// the internal rate.
pub fn analyze(buffer: &AudioBuffer, onset: &OnsetConfig) -> Result<MusicFeatures> {
    if buffer.sample_rate != SAMPLE_RATE {
        return Err(CliError::Internal(format!(
            "analysis expects {SAMPLE_RATE} Hz audio, got {}",
            buffer.sample_rate
        )));
    }
    let mut builder = FeatureBuilder::new();
    for mags in stft_magnitudes(buffer) {
        builder.push_frame(&mags);
    }
    Ok(builder.finish(buffer.duration_seconds(), onset))
}

pub fn analyze_wav(path: &Path, onset: &OnsetConfig) -> Result<MusicFeatures> {
    analyze(&read_wav(path)?, onset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use choreo_core::synth::SynthMusic;

    #[test]
    fn pure_tone_peaks_at_its_bin() {
        let f = 1500.0;
        let samples: Vec<f64> = (0..24_000)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / 24_000.0).sin())
            .collect();
        let buf = AudioBuffer::new(samples, SAMPLE_RATE).unwrap();
        let mags = stft_magnitudes(&buf);
        assert_eq!(mags.len(), 60);
        let col = &mags[30];
        let peak = col.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(peak, (f / (24_000.0 / FFT_SIZE as f64)).round() as usize);
    }

    #[test]
    fn metronome_beats_are_recovered() {
        let music = SynthMusic::metronome(6.0, 120.0, 0.25, SAMPLE_RATE);
        let buf = AudioBuffer::new(music.render(), SAMPLE_RATE).unwrap();
        let feats = analyze(&buf, &OnsetConfig::default()).unwrap();
        assert_eq!(feats.frame_count(), 360);
        let want: Vec<usize> = (0..12).map(|k| 15 + 30 * k).collect();
        assert_eq!(feats.beats.len(), want.len(), "{:?}", feats.beats);
        for (got, want) in feats.beats.iter().zip(&want) {
            assert!(got.abs_diff(*want) <= 1, "{got} vs {want}");
        }
    }

    #[test]
    fn wav_round_trip_and_resample() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wav");
        let samples: Vec<f64> = (0..48_000).map(|i| ((i % 100) as f64 / 100.0) - 0.5).collect();
        write_wav(&p, &samples, 48_000).unwrap();
        let buf = read_wav(&p).unwrap();
        assert_eq!(buf.sample_rate, SAMPLE_RATE);
        assert_eq!(buf.samples.len(), 24_000);
        assert!((buf.samples[10] - samples[20]).abs() < 1e-6);
    }
}
