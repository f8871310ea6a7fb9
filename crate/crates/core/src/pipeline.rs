//! The per-second choreography loop.
//!
//! For every music second `t` the 4-second window starting at `t` (clamped to
//! the end of the music) is scored for style and tempo density, the top-K
//! style matches are retimed onto it, their nodes are inserted into the
//! dynamic graph, and one node is selected. The selections are blended into
//! the output motion.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::audio::MusicFeatures;
use crate::graph::{blend_output, CompletenessVariant, CostWeights, DynamicGraph, GraphMode, GraphNode, Selected};
use crate::model::{MotionClip, Repertoire, RepertoireEntry};
use crate::motion::{detect_beats, BeatConfig};
use crate::style::{
    music_labels, select_top_k, source_motion_labels, window_beat_count, BoundsMode, LabelTable, StyleBackend,
    StyleVector, StyleWeights, LABEL_COUNT, MUSIC_WINDOW,
};
use crate::tempo::{apply_warp, motion_tempo_density, music_tempo_density, subsequence_dtw, TempoConfig, TempoDensity};
use crate::{Error, Result, MUSIC_FPS, SEGMENT_FRAMES, SOURCE_FRAMES};

/// Every tunable of a choreography run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoreoConfig {
    pub k: usize,
    pub style: StyleWeights,
    pub graph: CostWeights,
    pub mode: GraphMode,
    pub completeness_variant: CompletenessVariant,
    pub blend_frames: usize,
    pub retempo: bool,
    pub tempo: TempoConfig,
    pub beats: BeatConfig,
    pub seed: u64,
}

impl Default for ChoreoConfig {
    fn default() -> Self {
        ChoreoConfig {
            k: 512,
            style: StyleWeights::default(),
            graph: CostWeights::default(),
            mode: GraphMode::Dynamic,
            completeness_variant: CompletenessVariant::Centered,
            blend_frames: 8,
            retempo: true,
            tempo: TempoConfig::default(),
            beats: BeatConfig::default(),
            seed: 0,
        }
    }
}

/// Runs independent per-candidate work; implementations must return results
/// in index order.
pub trait Executor {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs everything on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_indexed<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// How a selected segment was cut from its source clip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WarpKind {
    Dtw,
    MiddleSlice,
}

/// A retimed 4-second segment ready for insertion.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedSegment {
    pub clip: MotionClip,
    pub style: StyleVector,
    pub source_start: usize,
    pub source_end: usize,
}

/// Retimes one repertoire clip onto the music window density, or cuts its
/// middle 4 seconds when retiming is off.
pub fn warp_candidate(
    entry: &RepertoireEntry,
    music_td: &TempoDensity,
    config: &ChoreoConfig,
) -> Result<WarpedSegment> {
    let style = entry
        .style
        .clone()
        .ok_or_else(|| Error::State(format!("clip {}: style cache missing", entry.id())))?;
    if !config.retempo {
        let start = (entry.clip.len() - SEGMENT_FRAMES) / 2;
        let mut clip = entry.clip.slice(start, SEGMENT_FRAMES)?;
        detect_beats(&mut clip, &config.beats)?;
        return Ok(WarpedSegment {
            clip,
            style,
            source_start: start,
            source_end: start + SEGMENT_FRAMES - 1,
        });
    }
    let source = entry
        .tempo
        .as_ref()
        .ok_or_else(|| Error::State(format!("clip {}: tempo density missing", entry.id())))?;
    let path = subsequence_dtw(&music_td.values, &source.values, config.tempo.cell_cost)?;
    let clip = apply_warp(&entry.clip, &path, &config.beats)?;
    Ok(WarpedSegment {
        clip,
        style,
        source_start: path.source_start(),
        source_end: path.source_end(),
    })
}

/// Retimes every candidate, keeping input order. Failed candidates are
/// dropped with a warning.
pub fn retempo<E: Executor>(
    executor: &E,
    music_td: &TempoDensity,
    candidates: &[&RepertoireEntry],
    config: &ChoreoConfig,
) -> Vec<WarpedSegment> {
    executor
        .map_indexed(candidates.len(), |i| warp_candidate(candidates[i], music_td, config))
        .into_iter()
        .zip(candidates)
        .filter_map(|(r, e)| match r {
            Ok(s) => Some(s),
            Err(err) => {
                log::warn!("dropping candidate {}: {err}", e.id());
                None
            }
        })
        .collect()
}

/// One line of the per-second trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub t: usize,
    pub window_start_s: usize,
    pub segment_id: u64,
    pub source_id: String,
    pub node_index: usize,
    pub birth_time: usize,
    pub style_cost: Option<f64>,
    pub completeness_cost: Option<f64>,
    pub transition_cost: f64,
    pub total: f64,
    pub active_candidates: usize,
    pub inserted: usize,
    pub live_births: Vec<usize>,
    pub warp: WarpKind,
}

/// Run metadata plus the per-second steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub k: usize,
    pub mode: GraphMode,
    pub retempo: bool,
    pub weights: CostWeights,
    pub steps: Vec<StepTrace>,
}

/// Output motion plus its trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Choreography {
    pub motion: MotionClip,
    pub trace: Trace,
    pub selected: Vec<GraphNode>,
}

/// Music-side inputs of one second.
#[derive(Debug, Clone, PartialEq)]
pub struct MusicWindow {
    pub start_s: usize,
    pub style: StyleVector,
    pub beat_count: usize,
    pub tempo: TempoDensity,
}

/// Stepwise driver; [`choreograph`] runs it to completion.
pub struct Choreographer<'a, E: Executor = Sequential> {
    music: &'a MusicFeatures,
    repertoire: &'a Repertoire,
    config: ChoreoConfig,
    executor: E,
    external_music: Option<&'a BTreeMap<usize, StyleVector>>,
    graph: DynamicGraph,
    seconds: usize,
    selected: Vec<GraphNode>,
    steps: Vec<StepTrace>,
    window: Option<MusicWindow>,
    inserted: usize,
}

impl<'a, E: Executor> Choreographer<'a, E> {
    pub fn new(
        music: &'a MusicFeatures,
        repertoire: &'a Repertoire,
        config: ChoreoConfig,
        executor: E,
    ) -> Result<Self> {
        let seconds = music.whole_seconds();
        if seconds < 4 {
            return Err(Error::validation(format!(
                "music must last at least 4 s, got {:.2} s",
                music.frame_count() as f64 / MUSIC_FPS as f64
            )));
        }
        if repertoire.is_empty() {
            return Err(Error::validation("repertoire is empty"));
        }
        if config.k == 0 {
            return Err(Error::validation("k must be positive"));
        }
        for e in &repertoire.entries {
            if e.clip.len() != SOURCE_FRAMES {
                return Err(Error::validation(format!("clip {}: not an 8-second clip", e.id())));
            }
            if e.style.is_none() || e.beat_count.is_none() || (config.retempo && e.tempo.is_none()) {
                return Err(Error::State(format!("clip {}: caches not populated", e.id())));
            }
        }
        repertoire.validate_caches()?;
        let graph = DynamicGraph::new(config.graph, config.mode, config.completeness_variant)?;
        Ok(Choreographer {
            music,
            repertoire,
            config,
            executor,
            external_music: None,
            graph,
            seconds,
            selected: Vec::new(),
            steps: Vec::new(),
            window: None,
            inserted: 0,
        })
    }

    /// Uses externally computed music style vectors keyed by window start
    /// second instead of normalized labels.
    pub fn with_external_music_styles(mut self, styles: &'a BTreeMap<usize, StyleVector>) -> Self {
        self.external_music = Some(styles);
        self
    }

    pub fn seconds(&self) -> usize {
        self.seconds
    }

    pub fn graph(&self) -> &DynamicGraph {
        &self.graph
    }

    pub fn is_done(&self) -> bool {
        self.graph.time() >= self.seconds
    }

    /// Music window start (seconds) serving second `t`.
    pub fn window_start(&self, t: usize) -> usize {
        t.min(self.seconds - 4)
    }

    pub fn music_window(&self, t: usize) -> Result<MusicWindow> {
        let start_s = self.window_start(t);
        let start = start_s * MUSIC_FPS;
        let style = match self.external_music {
            Some(map) => map
                .get(&start_s)
                .cloned()
                .ok_or_else(|| Error::State(format!("no external music style for window {start_s}")))?,
            None => {
                let table = self
                    .repertoire
                    .normalization
                    .as_ref()
                    .ok_or_else(|| Error::State("repertoire label table not fitted".into()))?;
                table.normalize_music(&music_labels(self.music, start)?)?
            }
        };
        Ok(MusicWindow {
            start_s,
            style,
            beat_count: window_beat_count(self.music, start),
            tempo: music_tempo_density(self.music, start, &self.config.tempo)?,
        })
    }

    /// Selects, retimes and inserts the candidates for the current second.
    pub fn insert_next(&mut self) -> Result<()> {
        let t = self.graph.time();
        let window = self.music_window(t)?;
        let picks = select_top_k(
            &window.style,
            window.beat_count,
            self.repertoire,
            self.config.k,
            &self.config.style,
        )?;
        let entries: Vec<&RepertoireEntry> = picks.iter().map(|p| &self.repertoire.entries[p.index]).collect();
        let warped = retempo(&self.executor, &window.tempo, &entries, &self.config);
        let batch: Vec<(MotionClip, StyleVector)> = warped.into_iter().map(|w| (w.clip, w.style)).collect();
        self.graph.insert_segments_anchored(&batch, t, window.start_s)?;
        self.inserted = batch.len();
        self.window = Some(window);
        Ok(())
    }

    /// Selects the node for the current second (after [`insert_next`](Self::insert_next)).
    pub fn select_next(&mut self) -> Result<Selected> {
        let window = self
            .window
            .take()
            .ok_or_else(|| Error::State("select_next called before insert_next".into()))?;
        let live_births = self.graph.live_births();
        let sel = self.graph.select_node(&window.style)?;
        self.steps.push(StepTrace {
            t: sel.time,
            window_start_s: window.start_s,
            segment_id: sel.node.segment_id,
            source_id: sel.node.source_id.clone(),
            node_index: sel.node.node_index,
            birth_time: sel.node.birth_time,
            style_cost: sel.cost.style,
            completeness_cost: sel.cost.completeness,
            transition_cost: sel.cost.transition,
            total: sel.cost.total,
            active_candidates: sel.active_count,
            inserted: self.inserted,
            live_births,
            warp: if self.config.retempo {
                WarpKind::Dtw
            } else {
                WarpKind::MiddleSlice
            },
        });
        self.selected.push(sel.node.clone());
        Ok(sel)
    }

    /// The music style for the pending selection, if a window is prepared.
    pub fn pending_style(&self) -> Option<&StyleVector> {
        self.window.as_ref().map(|w| &w.style)
    }

    pub fn step(&mut self) -> Result<Option<Selected>> {
        if self.is_done() {
            return Ok(None);
        }
        self.insert_next()?;
        self.select_next().map(Some)
    }

    pub fn run(mut self) -> Result<Choreography> {
        while self.step()?.is_some() {}
        self.finish()
    }

    pub fn finish(self) -> Result<Choreography> {
        let motion = blend_output(
            &self.selected,
            self.repertoire.descriptor.root_index,
            self.config.blend_frames,
            "choreography",
        )?;
        Ok(Choreography {
            motion,
            trace: Trace {
                k: self.config.k.min(self.repertoire.len()),
                mode: self.config.mode,
                retempo: self.config.retempo,
                weights: self.config.graph,
                steps: self.steps,
            },
            selected: self.selected,
        })
    }
}

/// Runs the whole pipeline on the calling thread.
pub fn choreograph(music: &MusicFeatures, repertoire: &Repertoire, config: &ChoreoConfig) -> Result<Choreography> {
    Choreographer::new(music, repertoire, config.clone(), Sequential)?.run()
}

/// Whether every cached style vector uses `backend`.
pub fn uses_backend(repertoire: &Repertoire, backend: StyleBackend) -> bool {
    repertoire
        .entries
        .iter()
        .all(|e| e.style.as_ref().is_some_and(|s| s.backend == backend))
}

/// Settings that shape the repertoire caches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct DatasetConfig {
    pub beats: BeatConfig,
    pub tempo: TempoConfig,
    pub normalization: BoundsMode,
}

/// Per-clip values computed while populating caches.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipAnalysis {
    pub beats: Vec<usize>,
    pub middle_beats: usize,
    pub raw_labels: [f64; LABEL_COUNT],
    pub tempo: TempoDensity,
}

fn analyze_clip(entry: &RepertoireEntry, repertoire: &Repertoire, cfg: &DatasetConfig) -> Result<ClipAnalysis> {
    let mut clip = entry.clip.clone();
    let beats = detect_beats(&mut clip, &cfg.beats)?;
    let lo = (clip.len() - SEGMENT_FRAMES) / 2;
    let middle_beats = beats.iter().filter(|&&b| b >= lo && b < lo + SEGMENT_FRAMES).count();
    let raw_labels = source_motion_labels(&clip, &repertoire.descriptor)?;
    let tempo = motion_tempo_density(&mut clip, &cfg.beats, &cfg.tempo)?;
    Ok(ClipAnalysis {
        beats,
        middle_beats,
        raw_labels,
        tempo,
    })
}

/// Labels of the middle 4-second window of a piece of paired music, if it is
/// long enough.
pub fn paired_music_labels(music: &MusicFeatures) -> Result<Option<[f64; LABEL_COUNT]>> {
    let n = music.frame_count();
    if n < MUSIC_WINDOW {
        return Ok(None);
    }
    music_labels(music, (n - MUSIC_WINDOW) / 2).map(Some)
}

/// Detects beats and fills every cache of `repertoire`, fitting the label
/// table on the clips and on any paired music. With `external` set, style
/// vectors come from that map (keyed by clip id) instead of the labels.
pub fn populate_caches<E: Executor>(
    executor: &E,
    repertoire: &mut Repertoire,
    paired_music: &[Option<&MusicFeatures>],
    external: Option<&BTreeMap<String, Vec<f64>>>,
    cfg: &DatasetConfig,
) -> Result<Vec<ClipAnalysis>> {
    if repertoire.is_empty() {
        return Err(Error::validation("repertoire is empty"));
    }
    if paired_music.len() != repertoire.len() {
        return Err(Error::DimensionMismatch {
            expected: repertoire.len(),
            found: paired_music.len(),
        });
    }
    let rep: &Repertoire = repertoire;
    let analyses: Result<Vec<ClipAnalysis>> = executor
        .map_indexed(rep.len(), |i| analyze_clip(&rep.entries[i], rep, cfg))
        .into_iter()
        .collect();
    let analyses = analyses?;
    let music_raw: Result<Vec<Option<[f64; LABEL_COUNT]>>> = executor
        .map_indexed(paired_music.len(), |i| match paired_music[i] {
            Some(m) => paired_music_labels(m),
            None => Ok(None),
        })
        .into_iter()
        .collect();
    let music_raw: Vec<[f64; LABEL_COUNT]> = music_raw?.into_iter().flatten().collect();
    if music_raw.is_empty() && external.is_none() {
        log::warn!("no paired music found; music labels use default bounds");
    }
    let motion_raw: Vec<[f64; LABEL_COUNT]> = analyses.iter().map(|a| a.raw_labels).collect();
    let table = LabelTable::fit(&motion_raw, &music_raw, cfg.normalization)?;

    let mut dim = None;
    for (entry, a) in repertoire.entries.iter_mut().zip(&analyses) {
        let style = match external {
            None => table.normalize_motion(&a.raw_labels)?,
            Some(map) => {
                let v = map
                    .get(entry.id())
                    .ok_or_else(|| Error::validation(format!("no external style vector for clip {}", entry.id())))?;
                if *dim.get_or_insert(v.len()) != v.len() || v.is_empty() {
                    return Err(Error::DimensionMismatch {
                        expected: dim.unwrap_or(0),
                        found: v.len(),
                    });
                }
                StyleVector::new(v.clone(), StyleBackend::External)
            }
        };
        entry.clip.beats = Some(a.beats.clone());
        entry.beat_count = Some(a.middle_beats);
        entry.tempo = Some(a.tempo.clone());
        entry.style = Some(style);
    }
    repertoire.normalization = Some(table);
    repertoire.validate_caches()?;
    Ok(analyses)
}
