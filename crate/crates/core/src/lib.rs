//! Allocation-only kernels for repertoire-based dance choreography.
//!
//! Given music features and a repertoire of 8-second motion clips, the engine
//! picks style-matched clips for every 4-second music window, retimes them so
//! their motion beats follow the music's rhythm, and stitches one second of
//! motion per music second out of a dynamically maintained graph of candidate
//! nodes.
//!
//! Everything here is `no_std` + `alloc`: decoding audio, computing FFTs,
//! reading files and driving the command line live in the `choreo` crate.
//!
//! Module map:
//! - [`model`]: skeleton descriptor, poses, clips, the repertoire.
//! - [`audio`]: mel filterbank, per-frame spectral descriptors, onset envelope, music beats.
//! - [`motion`]: joint speed, motion beats, random time warping.
//! - [`tempo`]: tempo-density curves, slope-constrained subsequence DTW, warping.
//! - [`style`]: quantifiable style labels, normalization, top-K selection.
//! - [`graph`]: the dynamic graph, node costs, blending.
//! - [`pipeline`]: the per-second choreography loop.
//! - [`metrics`]: Fréchet distances, beat alignment, label distances.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod audio;
mod error;
pub mod graph;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod model;
pub mod motion;
pub mod peaks;
pub mod pipeline;
pub mod seed;
pub mod style;
pub mod synth;
pub mod tempo;

pub use error::{Error, Result};

/// Motion frame rate of every clip handled by the engine.
pub const MOTION_FPS: usize = 20;
/// Music feature frame rate (mel columns per second).
pub const MUSIC_FPS: usize = 60;
/// Frames in a repertoire source clip (8 s).
pub const SOURCE_FRAMES: usize = 8 * MOTION_FPS;
/// Frames in a music-window-sized motion segment (4 s).
pub const SEGMENT_FRAMES: usize = 4 * MOTION_FPS;
/// Frames in one graph node (1 s).
pub const NODE_FRAMES: usize = MOTION_FPS;
