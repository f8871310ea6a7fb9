//! The dynamic graph: warped 4-second segments are split into four 1-second
//! nodes, each segment stays live for four seconds, and every second one
//! active node is chosen by minimizing a weighted sum of style, action
//! completeness and transition costs.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::model::{MotionClip, Pose};
use crate::style::StyleVector;
use crate::{Error, Result, NODE_FRAMES, SEGMENT_FRAMES};

/// Nodes per warped segment.
pub const NODES_PER_SEGMENT: usize = SEGMENT_FRAMES / NODE_FRAMES;
/// Beat distance used when either node has no beat (window maximum).
const NO_BEAT_DISTANCE: f64 = (2 * NODE_FRAMES) as f64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub lambda_s: f64,
    pub lambda_c: f64,
    pub lambda_t: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        CostWeights {
            lambda_s: 1.0,
            lambda_c: 1.0,
            lambda_t: 2.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, w) in [
            ("lambda_s", self.lambda_s),
            ("lambda_c", self.lambda_c),
            ("lambda_t", self.lambda_t),
        ] {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::validation(format!(
                    "graph.{name} must be finite and >= 0, got {w}"
                )));
            }
        }
        Ok(())
    }
}

/// Which graph is maintained (`graph.mode`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum GraphMode {
    /// All four nodes of every segment, live for four seconds.
    #[default]
    Dynamic,
    /// Only the node for the current second is inserted; selection uses the
    /// transition cost alone.
    MotionGraph,
}

/// Reading of the completeness sigmoid argument (`graph.eq6_variant`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CompletenessVariant {
    /// `sigmoid((20 - V) / 5)`: a one-second beat distance sits at 0.5.
    #[default]
    Centered,
    /// `sigmoid(20 - V / 5)`.
    Literal,
}

/// One second of a warped segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphNode {
    pub segment_id: u64,
    /// 1-based position within the segment.
    pub node_index: usize,
    pub frames: Vec<Pose>,
    pub segment_style: StyleVector,
    /// Beat frames local to this node.
    pub node_beats: Vec<usize>,
    pub birth_time: usize,
    pub source_id: String,
}

impl GraphNode {
    pub fn first_frame(&self) -> &Pose {
        &self.frames[0]
    }

    pub fn last_frame(&self) -> &Pose {
        &self.frames[self.frames.len() - 1]
    }
}

/// Splits a warped 80-frame clip into its four nodes.
pub fn split_segment(
    clip: &MotionClip,
    style: &StyleVector,
    segment_id: u64,
    birth_time: usize,
) -> Result<Vec<GraphNode>> {
    if clip.len() != SEGMENT_FRAMES {
        return Err(Error::validation(format!(
            "segment {}: {} frames, expected {SEGMENT_FRAMES}",
            clip.id,
            clip.len()
        )));
    }
    let beats = clip.beats.as_deref().unwrap_or(&[]);
    Ok((0..NODES_PER_SEGMENT)
        .map(|k| {
            let lo = k * NODE_FRAMES;
            let hi = lo + NODE_FRAMES;
            GraphNode {
                segment_id,
                node_index: k + 1,
                frames: clip.frames[lo..hi].to_vec(),
                segment_style: style.clone(),
                node_beats: beats.iter().filter(|&&b| b >= lo && b < hi).map(|&b| b - lo).collect(),
                birth_time,
                source_id: clip.id.clone(),
            }
        })
        .collect())
}

/// `|segment_style - music_style|`.
pub fn style_cost(candidate: &GraphNode, music_style: &StyleVector) -> Result<f64> {
    candidate.segment_style.distance(music_style)
}

/// 1 across segments; otherwise a sigmoid of the distance between the last
/// beat of `prev` and the first beat of `candidate` in their concatenated
/// two-second window.
pub fn completeness_cost(prev: &GraphNode, candidate: &GraphNode, variant: CompletenessVariant) -> f64 {
    if prev.segment_id != candidate.segment_id {
        return 1.0;
    }
    let v = match (prev.node_beats.last(), candidate.node_beats.first()) {
        (Some(&last), Some(&first)) => (NODE_FRAMES + first) as f64 - last as f64,
        _ => NO_BEAT_DISTANCE,
    };
    match variant {
        CompletenessVariant::Centered => math::sigmoid((NODE_FRAMES as f64 - v) / 5.0),
        CompletenessVariant::Literal => math::sigmoid(NODE_FRAMES as f64 - v / 5.0),
    }
}

/// Mean per-joint distance between `prev`'s last frame and `candidate`'s
/// first frame; 0 when there is no previous node.
pub fn transition_cost(prev: Option<&GraphNode>, candidate: &GraphNode) -> f64 {
    let Some(prev) = prev else { return 0.0 };
    let a = &prev.last_frame().joints;
    let b = &candidate.first_frame().joints;
    a.iter().zip(b).map(|(x, y)| math::dist3(x, y)).sum::<f64>() / a.len() as f64
}

/// Per-term costs of one candidate; terms disabled by the mode are `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    pub style: Option<f64>,
    pub completeness: Option<f64>,
    pub transition: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct Segment {
    id: u64,
    birth_time: usize,
    /// Music second the segment's first node corresponds to.
    anchor_time: usize,
    nodes: Vec<GraphNode>,
}

/// The node chosen for one second.
#[derive(Debug, Clone, PartialEq)]
pub struct Selected {
    pub time: usize,
    pub node: GraphNode,
    pub cost: CostBreakdown,
    pub active_count: usize,
}

/// Time-indexed store of candidate nodes. Mutation is single-threaded.
#[derive(Debug, Clone)]
pub struct DynamicGraph {
    segments: Vec<Segment>,
    time: usize,
    current: Option<GraphNode>,
    weights: CostWeights,
    mode: GraphMode,
    variant: CompletenessVariant,
    next_id: u64,
}

impl DynamicGraph {
    pub fn new(weights: CostWeights, mode: GraphMode, variant: CompletenessVariant) -> Result<Self> {
        weights.validate()?;
        Ok(DynamicGraph {
            segments: Vec::new(),
            time: 0,
            current: None,
            weights,
            mode,
            variant,
            next_id: 0,
        })
    }

    /// Time of the next selection.
    pub fn time(&self) -> usize {
        self.time
    }

    pub fn current_node(&self) -> Option<&GraphNode> {
        self.current.as_ref()
    }

    pub fn mode(&self) -> GraphMode {
        self.mode
    }

    /// Birth times of live segments, ascending and deduplicated.
    pub fn live_births(&self) -> Vec<usize> {
        let mut b: Vec<usize> = self.segments.iter().map(|s| s.birth_time).collect();
        b.dedup();
        b
    }

    pub fn live_segment_ids(&self) -> Vec<u64> {
        self.segments.iter().map(|s| s.id).collect()
    }

    pub fn stored_node_count(&self) -> usize {
        self.segments.iter().map(|s| s.nodes.len()).sum()
    }

    /// Inserts segments born at the current time whose first node matches
    /// the current music second.
    pub fn insert_segments(&mut self, warped: &[(MotionClip, StyleVector)], t: usize) -> Result<Vec<u64>> {
        self.insert_segments_anchored(warped, t, t)
    }

    /// Like [`insert_segments`](Self::insert_segments), but the segment's
    /// first node corresponds to music second `anchor <= t` (clamped end
    /// windows). Evicts segments born before `t - 3`.
    pub fn insert_segments_anchored(
        &mut self,
        warped: &[(MotionClip, StyleVector)],
        t: usize,
        anchor: usize,
    ) -> Result<Vec<u64>> {
        if t != self.time {
            return Err(Error::State(format!(
                "insertion at t={t} while the graph is at t={}",
                self.time
            )));
        }
        if anchor > t || t - anchor >= NODES_PER_SEGMENT {
            return Err(Error::State(format!("anchor {anchor} cannot serve second {t}")));
        }
        let mut fresh = Vec::with_capacity(warped.len());
        for (clip, style) in warped {
            let id = self.next_id;
            let mut nodes = split_segment(clip, style, id, t)?;
            if self.mode == GraphMode::MotionGraph {
                let j = t - anchor + 1;
                nodes.retain(|n| n.node_index == j);
            }
            self.next_id += 1;
            fresh.push(Segment {
                id,
                birth_time: t,
                anchor_time: anchor,
                nodes,
            });
        }
        self.evict();
        let ids = fresh.iter().map(|s| s.id).collect();
        self.segments.extend(fresh);
        Ok(ids)
    }

    fn evict(&mut self) {
        let horizon = self.time.saturating_sub(NODES_PER_SEGMENT - 1);
        self.segments.retain(|s| s.birth_time >= horizon);
    }

    /// Nodes selectable at the current time: for each live segment, the node
    /// matching the current music second.
    pub fn active_candidates(&self) -> Vec<&GraphNode> {
        let t = self.time;
        self.segments
            .iter()
            .filter(|s| s.birth_time <= t && s.birth_time + NODES_PER_SEGMENT > t)
            .filter_map(|s| {
                let j = t.checked_sub(s.anchor_time)? + 1;
                s.nodes.iter().find(|n| n.node_index == j)
            })
            .collect()
    }

    /// Cost of moving from the current node to `candidate`.
    pub fn node_cost(&self, candidate: &GraphNode, music_style: &StyleVector) -> Result<CostBreakdown> {
        let prev = self.current.as_ref();
        let transition = transition_cost(prev, candidate);
        let (style, completeness) = match self.mode {
            GraphMode::MotionGraph => (None, None),
            GraphMode::Dynamic => (
                Some(style_cost(candidate, music_style)?),
                prev.map(|p| completeness_cost(p, candidate, self.variant)),
            ),
        };
        let total = self.weights.lambda_s * style.unwrap_or(0.0)
            + self.weights.lambda_c * completeness.unwrap_or(0.0)
            + self.weights.lambda_t * transition;
        Ok(CostBreakdown {
            style,
            completeness,
            transition,
            total,
        })
    }

    /// Picks the cheapest active node, makes it current and advances time.
    /// Ties prefer staying in the current segment, then the smaller segment
    /// id, then the smaller node index.
    pub fn select_node(&mut self, music_style: &StyleVector) -> Result<Selected> {
        let candidates = self.active_candidates();
        if candidates.is_empty() {
            return Err(Error::State(format!("no active candidates at t={}", self.time)));
        }
        let prev_segment = self.current.as_ref().map(|n| n.segment_id);
        let mut best: Option<(&GraphNode, CostBreakdown)> = None;
        for cand in candidates.iter().copied() {
            let cost = self.node_cost(cand, music_style)?;
            let better = match &best {
                None => true,
                Some((b, bc)) => {
                    let key = |n: &GraphNode| (Some(n.segment_id) != prev_segment, n.segment_id, n.node_index);
                    cost.total < bc.total || (cost.total == bc.total && key(cand) < key(b))
                }
            };
            if better {
                best = Some((cand, cost));
            }
        }
        let active_count = candidates.len();
        let (node, cost) = best.map(|(n, c)| (n.clone(), c)).unwrap();
        let selected = Selected {
            time: self.time,
            node: node.clone(),
            cost,
            active_count,
        };
        self.current = Some(node);
        self.time += 1;
        Ok(selected)
    }
}

/// Concatenates the selected nodes. Consecutive nodes of one segment join
/// directly; on a switch the incoming node is translated horizontally so its
/// first root position meets the previous last root, then the `blend_frames`
/// frames around the seam are crossfaded linearly.
pub fn blend_output(
    selected: &[GraphNode],
    root_index: usize,
    blend_frames: usize,
    id: impl Into<String>,
) -> Result<MotionClip> {
    let first = selected
        .first()
        .ok_or_else(|| Error::validation("cannot blend an empty selection"))?;
    let mut out: Vec<Pose> = first.frames.clone();
    let mut offset = [0.0; 3];
    for w in selected.windows(2) {
        let (prev, node) = (&w[0], &w[1]);
        let continuous = node.segment_id == prev.segment_id && node.node_index == prev.node_index + 1;
        if continuous {
            out.extend(node.frames.iter().map(|p| p.translated(offset)));
            continue;
        }
        let last_root = out[out.len() - 1].joints[root_index];
        let first_root = node.frames[0].joints[root_index];
        offset = [last_root[0] - first_root[0], 0.0, last_root[2] - first_root[2]];
        let incoming: Vec<Pose> = node.frames.iter().map(|p| p.translated(offset)).collect();

        let half = (blend_frames / 2).min(out.len()).min(incoming.len());
        let width = 2 * half;
        let seam = out.len();
        let held_out = out[seam - 1].clone();
        for r in 0..width {
            let wgt = (r + 1) as f64 / (width + 1) as f64;
            if r < half {
                let g = seam - half + r;
                out[g] = out[g].lerp(&incoming[0], wgt);
            } else {
                out.push(held_out.lerp(&incoming[r - half], wgt));
            }
        }
        out.extend(incoming[half..].iter().cloned());
    }
    Ok(MotionClip::new(id, out))
}

/// Total-cost oracle used by tests: evaluates every candidate from scratch.
pub fn exhaustive_min_cost(graph: &DynamicGraph, music_style: &StyleVector) -> Result<f64> {
    let mut best = f64::INFINITY;
    for c in graph.active_candidates() {
        best = best.min(graph.node_cost(c, music_style)?.total);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::State("no active candidates".into()))
    }
}

/// Per-joint frame-to-frame displacements of a clip.
pub fn joint_displacements(frames: &[Pose]) -> Vec<f64> {
    let mut out = Vec::new();
    for w in frames.windows(2) {
        out.extend(w[0].joints.iter().zip(&w[1].joints).map(|(a, b)| math::dist3(a, b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::style::StyleBackend;
    use alloc::vec;

    fn style(v: &[f64]) -> StyleVector {
        StyleVector::new(v.to_vec(), StyleBackend::Labels)
    }

    fn static_pose(x: f64) -> Pose {
        Pose::new(vec![[x, 1.0, 0.0]; 21])
    }

    fn node(seg: u64, j: usize, beats: Vec<usize>) -> GraphNode {
        GraphNode {
            segment_id: seg,
            node_index: j,
            frames: vec![static_pose(0.0); NODE_FRAMES],
            segment_style: style(&[1.0; 4]),
            node_beats: beats,
            birth_time: 0,
            source_id: "s".into(),
        }
    }

    fn segment_clip(id: &str, x0: f64) -> MotionClip {
        let frames = (0..SEGMENT_FRAMES).map(|t| static_pose(x0 + t as f64 * 0.01)).collect();
        let mut c = MotionClip::new(id, frames);
        c.beats = Some(vec![10, 30, 50, 70]);
        c
    }

    #[test]
    fn completeness_endpoints() {
        let v = CompletenessVariant::Centered;
        assert_eq!(completeness_cost(&node(1, 1, vec![5]), &node(2, 2, vec![5]), v), 1.0);
        // last beat 10, first beat 10 of next second: V = 20
        assert!((completeness_cost(&node(1, 1, vec![10]), &node(1, 2, vec![10]), v) - 0.5).abs() < 1e-12);
        let c = completeness_cost(&node(1, 1, vec![3, 19]), &node(1, 2, vec![1]), v);
        assert!((c - 1.0 / (1.0 + math::exp(-3.6))).abs() < 1e-12);
        assert!((c - 0.9734).abs() < 1e-4);
        // no beats: V = 40
        let c = completeness_cost(&node(1, 1, vec![]), &node(1, 2, vec![4]), v);
        assert!((c - math::sigmoid(-4.0)).abs() < 1e-12);
        let lit = completeness_cost(
            &node(1, 1, vec![10]),
            &node(1, 2, vec![10]),
            CompletenessVariant::Literal,
        );
        assert!((lit - math::sigmoid(16.0)).abs() < 1e-12);
    }

    #[test]
    fn transition_cost_cases() {
        let a = node(1, 1, vec![]);
        assert_eq!(transition_cost(None, &a), 0.0);
        assert_eq!(transition_cost(Some(&a), &a), 0.0);
        let mut b = a.clone();
        b.frames[0].joints[5][1] += 0.3;
        assert!((transition_cost(Some(&a), &b) - 0.3 / 21.0).abs() < 1e-12);
    }

    #[test]
    fn style_cost_cases() {
        let mut n = node(1, 1, vec![]);
        assert_eq!(style_cost(&n, &style(&[1.0; 4])).unwrap(), 0.0);
        n.segment_style = style(&[1.0, 4.0, 1.0, 1.0]);
        assert_eq!(style_cost(&n, &style(&[1.0; 4])).unwrap(), 3.0);
        assert!(style_cost(&n, &style(&[1.0; 3])).is_err());
    }

    #[test]
    fn warm_up_and_window_arithmetic() {
        let mut g = DynamicGraph::new(CostWeights::default(), GraphMode::Dynamic, Default::default()).unwrap();
        let k = 3;
        let s = style(&[1.0; 4]);
        let batch: Vec<_> = (0..k)
            .map(|i| (segment_clip(&format!("c{i}"), i as f64), s.clone()))
            .collect();
        g.insert_segments(&batch, 0).unwrap();
        assert_eq!(g.stored_node_count(), 4 * k);
        let active = g.active_candidates();
        assert_eq!(active.len(), k);
        assert!(active.iter().all(|n| n.node_index == 1));
        g.select_node(&s).unwrap();
        for t in 1..=5 {
            g.insert_segments(&batch, t).unwrap();
            let active = g.active_candidates();
            assert_eq!(active.len(), k * (t + 1).min(4));
            for n in active {
                assert_eq!(n.node_index, t - n.birth_time + 1);
            }
            g.select_node(&s).unwrap();
        }
        // after inserting at t=5: births 2..=5 live
        assert_eq!(g.live_births(), vec![2, 3, 4, 5]);
    }

    #[test]
    fn insertion_rejects_wrong_length() {
        let mut g = DynamicGraph::new(CostWeights::default(), GraphMode::Dynamic, Default::default()).unwrap();
        let short = MotionClip::new("x", vec![static_pose(0.0); 79]);
        assert!(g.insert_segments(&[(short, style(&[1.0; 4]))], 0).is_err());
    }

    #[test]
    fn single_candidate_always_wins_and_empty_graph_errors() {
        let mut g = DynamicGraph::new(CostWeights::default(), GraphMode::Dynamic, Default::default()).unwrap();
        assert!(matches!(g.select_node(&style(&[1.0; 4])), Err(Error::State(_))));
        g.insert_segments(&[(segment_clip("a", 0.0), style(&[9.0; 4]))], 0)
            .unwrap();
        let sel = g.select_node(&style(&[1.0; 4])).unwrap();
        assert_eq!(sel.node.source_id, "a");
        assert_eq!(g.time(), 1);
    }

    #[test]
    fn matching_style_wins_without_other_terms() {
        let w = CostWeights {
            lambda_s: 1.0,
            lambda_c: 0.0,
            lambda_t: 0.0,
        };
        let mut g = DynamicGraph::new(w, GraphMode::Dynamic, Default::default()).unwrap();
        let target = style(&[3.0, 4.0, 5.0, 6.0]);
        let batch = vec![
            (segment_clip("far", 0.0), style(&[9.0; 4])),
            (segment_clip("match", 0.0), target.clone()),
        ];
        g.insert_segments(&batch, 0).unwrap();
        assert_eq!(g.select_node(&target).unwrap().node.source_id, "match");
    }

    #[test]
    fn blend_concatenates_one_segment_exactly() {
        let clip = segment_clip("a", 0.0);
        let nodes = split_segment(&clip, &style(&[1.0; 4]), 0, 0).unwrap();
        let out = blend_output(&nodes, 0, 8, "out").unwrap();
        assert_eq!(out.frames, clip.frames);
    }

    #[test]
    fn blend_of_identical_static_nodes_is_identity() {
        let a = node(1, 1, vec![]);
        let b = node(2, 3, vec![]);
        let out = blend_output(&[a.clone(), b], 0, 8, "out").unwrap();
        assert_eq!(out.len(), 40);
        for p in &out.frames {
            assert_eq!(p, &a.frames[0]);
        }
    }

    #[test]
    fn blend_removes_root_offset() {
        let a = GraphNode {
            frames: (0..NODE_FRAMES).map(|t| static_pose(t as f64 * 0.01)).collect(),
            ..node(1, 1, vec![])
        };
        let b = GraphNode {
            frames: (0..NODE_FRAMES).map(|t| static_pose(0.5 + t as f64 * 0.01)).collect(),
            ..node(2, 1, vec![])
        };
        let out = blend_output(&[a, b], 0, 8, "out").unwrap();
        assert_eq!(out.len(), 40);
        let roots = out.root_positions(0);
        let max_step = roots.windows(2).map(|w| math::dist3(&w[0], &w[1])).fold(0.0, f64::max);
        assert!(max_step <= 0.5 / 8.0 + 0.01 + 1e-12, "max step {max_step}");
    }

    #[test]
    fn empty_blend_errors() {
        assert!(blend_output(&[], 0, 8, "x").is_err());
    }
}
