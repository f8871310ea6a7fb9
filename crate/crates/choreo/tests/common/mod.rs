#![allow(dead_code)]

use std::path::Path;

use choreo::audio::{analyze, write_wav};
use choreo::io::{write_json, write_motion};
use choreo_core::audio::{AudioBuffer, MusicFeatures, OnsetConfig, SAMPLE_RATE};
use choreo_core::model::{Repertoire, SkeletonDescriptor};
use choreo_core::pipeline::{populate_caches, DatasetConfig, Sequential};
use choreo_core::synth::{corpus, SynthMusic};

pub fn click_music(seconds: f64, bpm: f64) -> SynthMusic {
    let mut m = SynthMusic::metronome(seconds, bpm, 0.25, SAMPLE_RATE);
    m.melody_hz = vec![220.0, 277.18, 329.63, 440.0, 329.63, 277.18];
    m.melody_gain = 0.2;
    m
}

pub fn features(music: &SynthMusic) -> MusicFeatures {
    let buf = AudioBuffer::new(music.render(), music.sample_rate).unwrap();
    analyze(&buf, &OnsetConfig::default()).unwrap()
}

/// A synthetic repertoire with every cache populated.
pub fn repertoire(n: usize, seed: u64) -> Repertoire {
    let mut rep = Repertoire::from_clips(SkeletonDescriptor::standard21(), corpus(n, seed, 8, 24)).unwrap();
    let none = vec![None; rep.len()];
    populate_caches(&Sequential, &mut rep, &none, None, &DatasetConfig::default()).unwrap();
    rep
}

/// Writes `n` synthetic clips and the standard descriptor under `dir`.
pub fn write_corpus(dir: &Path, n: usize, seed: u64) {
    let clips = dir.join("clips");
    std::fs::create_dir_all(&clips).unwrap();
    for c in corpus(n, seed, 8, 24) {
        write_motion(&clips.join(format!("{}.json", c.id)), &c).unwrap();
    }
    write_json(&dir.join("descriptor.json"), &SkeletonDescriptor::standard21()).unwrap();
}

pub fn write_music(path: &Path, music: &SynthMusic) {
    write_wav(path, &music.render(), music.sample_rate).unwrap();
}
