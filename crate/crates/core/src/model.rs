//! Domain types shared by every stage: skeleton descriptor, poses, clips and
//! the repertoire of source clips.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use alloc::{format, vec};

use serde::{Deserialize, Serialize};

use crate::style::{LabelTable, StyleVector};
use crate::tempo::TempoDensity;
use crate::{Error, Result, MOTION_FPS, SOURCE_FRAMES};

/// Joint layout and the role indices the style labels depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkeletonDescriptor {
    pub joint_count: usize,
    pub joint_names: Vec<String>,
    pub root_index: usize,
    pub head_index: usize,
    /// Hands and feet.
    pub end_effector_indices: Vec<usize>,
    pub upper_body_indices: Vec<usize>,
    pub lower_body_indices: Vec<usize>,
}

impl SkeletonDescriptor {
    /// A 21-joint layout used by the synthetic fixtures and as a fallback when
    /// no descriptor file is supplied.
    pub fn standard21() -> Self {
        const NAMES: [&str; 21] = [
            "pelvis",
            "left_hip",
            "right_hip",
            "spine",
            "left_knee",
            "right_knee",
            "chest",
            "left_ankle",
            "right_ankle",
            "neck",
            "left_toe",
            "right_toe",
            "head",
            "left_shoulder",
            "right_shoulder",
            "left_elbow",
            "right_elbow",
            "left_wrist",
            "right_wrist",
            "left_hand",
            "right_hand",
        ];
        SkeletonDescriptor {
            joint_count: 21,
            joint_names: NAMES.iter().map(|s| s.to_string()).collect(),
            root_index: 0,
            head_index: 12,
            end_effector_indices: vec![19, 20, 10, 11],
            upper_body_indices: vec![3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20],
            lower_body_indices: vec![0, 1, 2, 4, 5, 7, 8, 10, 11],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joint_count;
        if n == 0 {
            return Err(Error::validation("descriptor: joint_count must be positive"));
        }
        if !self.joint_names.is_empty() && self.joint_names.len() != n {
            return Err(Error::validation(format!(
                "descriptor: {} joint names for joint_count {n}",
                self.joint_names.len()
            )));
        }
        let all = [self.root_index, self.head_index]
            .into_iter()
            .chain(self.end_effector_indices.iter().copied())
            .chain(self.upper_body_indices.iter().copied())
            .chain(self.lower_body_indices.iter().copied());
        for idx in all {
            if idx >= n {
                return Err(Error::validation(format!(
                    "descriptor: joint index {idx} out of range for {n} joints"
                )));
            }
        }
        if self.upper_body_indices.is_empty() || self.lower_body_indices.is_empty() {
            return Err(Error::validation(
                "descriptor: upper and lower body sets must be nonempty",
            ));
        }
        if self
            .upper_body_indices
            .iter()
            .any(|i| self.lower_body_indices.contains(i))
        {
            return Err(Error::validation("descriptor: upper and lower body sets overlap"));
        }
        if self.end_effector_indices.contains(&self.root_index) {
            return Err(Error::validation("descriptor: root joint listed as an end effector"));
        }
        Ok(())
    }
}

/// Joint positions of one frame, meters, Y-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pose {
    pub joints: Vec<[f64; 3]>,
}

impl Pose {
    pub fn new(joints: Vec<[f64; 3]>) -> Self {
        Pose { joints }
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn is_finite(&self) -> bool {
        self.joints.iter().flatten().all(|c| c.is_finite())
    }

    /// `self * (1 - w) + other * w`, coordinate-wise.
    pub fn lerp(&self, other: &Pose, w: f64) -> Pose {
        if w == 0.0 {
            return self.clone();
        }
        let joints = self
            .joints
            .iter()
            .zip(&other.joints)
            .map(|(a, b)| {
                [
                    a[0] + (b[0] - a[0]) * w,
                    a[1] + (b[1] - a[1]) * w,
                    a[2] + (b[2] - a[2]) * w,
                ]
            })
            .collect();
        Pose { joints }
    }

    pub fn translated(&self, offset: [f64; 3]) -> Pose {
        Pose {
            joints: self
                .joints
                .iter()
                .map(|j| [j[0] + offset[0], j[1] + offset[1], j[2] + offset[2]])
                .collect(),
        }
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        for j in &self.joints {
            out.extend_from_slice(j);
        }
    }
}

/// A fixed-rate sequence of poses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionClip {
    pub id: String,
    pub frames: Vec<Pose>,
    pub frame_rate: usize,
    /// Cached motion beat frames, strictly increasing.
    pub beats: Option<Vec<usize>>,
}

impl MotionClip {
    pub fn new(id: impl Into<String>, frames: Vec<Pose>) -> Self {
        MotionClip {
            id: id.into(),
            frames,
            frame_rate: MOTION_FPS,
            beats: None,
        }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joint_count(&self) -> usize {
        self.frames.first().map_or(0, Pose::joint_count)
    }

    pub fn duration_seconds(&self) -> f64 {
        self.frames.len() as f64 / self.frame_rate as f64
    }

    /// Checks frame rate, uniform joint count, finiteness and the beat cache.
    pub fn validate(&self, joint_count: usize) -> Result<()> {
        if self.frame_rate != MOTION_FPS {
            return Err(Error::validation(format!(
                "clip {}: frame rate {} (expected {MOTION_FPS})",
                self.id, self.frame_rate
            )));
        }
        for (t, pose) in self.frames.iter().enumerate() {
            if pose.joint_count() != joint_count {
                return Err(Error::validation(format!(
                    "clip {}: frame {t} has {} joints (expected {joint_count})",
                    self.id,
                    pose.joint_count()
                )));
            }
            if !pose.is_finite() {
                return Err(Error::validation(format!(
                    "clip {}: frame {t} has a non-finite coordinate",
                    self.id
                )));
            }
        }
        if let Some(beats) = &self.beats {
            let increasing = beats.windows(2).all(|w| w[0] < w[1]);
            if !increasing || beats.iter().any(|&b| b >= self.len()) {
                return Err(Error::validation(format!(
                    "clip {}: cached beats not strictly increasing within the clip",
                    self.id
                )));
            }
        }
        Ok(())
    }

    /// Repertoire clips must be exactly 8 s at 20 fps.
    pub fn validate_source(&self, joint_count: usize) -> Result<()> {
        if self.len() != SOURCE_FRAMES {
            return Err(Error::validation(format!(
                "clip {}: {} frames, expected {SOURCE_FRAMES}",
                self.id,
                self.len()
            )));
        }
        self.validate(joint_count)
    }

    /// Frames `[start, start + length)`; the beat cache is re-indexed and filtered.
    pub fn slice(&self, start: usize, length: usize) -> Result<MotionClip> {
        let end = start.saturating_add(length);
        if end > self.len() {
            return Err(Error::OutOfBounds {
                what: "clip slice",
                start,
                end,
                available: self.len(),
            });
        }
        let beats = self.beats.as_ref().map(|b| {
            b.iter()
                .filter(|&&f| f >= start && f < end)
                .map(|&f| f - start)
                .collect()
        });
        Ok(MotionClip {
            id: self.id.clone(),
            frames: self.frames[start..end].to_vec(),
            frame_rate: self.frame_rate,
            beats,
        })
    }

    pub fn root_positions(&self, root: usize) -> Vec<[f64; 3]> {
        self.frames.iter().map(|p| p.joints[root]).collect()
    }
}

/// One repertoire clip plus its derived caches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepertoireEntry {
    pub clip: MotionClip,
    /// Path or name of a paired music file, when one was found next to the clip.
    pub music: Option<String>,
    /// Style of the middle 4 seconds.
    pub style: Option<StyleVector>,
    /// Motion beat count of the middle 4 seconds.
    pub beat_count: Option<usize>,
    /// Tempo density of the whole 8-second clip.
    pub tempo: Option<TempoDensity>,
}

impl RepertoireEntry {
    pub fn new(clip: MotionClip) -> Self {
        RepertoireEntry {
            clip,
            music: None,
            style: None,
            beat_count: None,
            tempo: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.clip.id
    }
}

/// The database of source clips.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Repertoire {
    pub descriptor: SkeletonDescriptor,
    pub entries: Vec<RepertoireEntry>,
    pub normalization: Option<LabelTable>,
}

impl Repertoire {
    pub fn new(descriptor: SkeletonDescriptor) -> Self {
        Repertoire {
            descriptor,
            entries: Vec::new(),
            normalization: None,
        }
    }

    /// Builds a repertoire from clips, validating each and ordering entries by id.
    pub fn from_clips(descriptor: SkeletonDescriptor, clips: impl IntoIterator<Item = MotionClip>) -> Result<Self> {
        descriptor.validate()?;
        let mut entries = Vec::new();
        for clip in clips {
            clip.validate_source(descriptor.joint_count)?;
            entries.push(RepertoireEntry::new(clip));
        }
        entries.sort_by(|a, b| a.clip.id.cmp(&b.clip.id));
        if let Some(w) = entries.windows(2).find(|w| w[0].clip.id == w[1].clip.id) {
            return Err(Error::validation(format!("duplicate clip id {}", w[0].clip.id)));
        }
        Ok(Repertoire {
            descriptor,
            entries,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&RepertoireEntry> {
        self.entries
            .binary_search_by(|e| e.clip.id.as_str().cmp(id))
            .ok()
            .map(|i| &self.entries[i])
    }

    /// Checks that caches agree with their clips and with each other.
    pub fn validate_caches(&self) -> Result<()> {
        let mut dim = None;
        for e in &self.entries {
            if let Some(td) = &e.tempo {
                if td.len() != e.clip.len() {
                    return Err(Error::validation(format!(
                        "clip {}: tempo density has {} frames for a {}-frame clip",
                        e.id(),
                        td.len(),
                        e.clip.len()
                    )));
                }
            }
            if let Some(s) = &e.style {
                match dim {
                    None => dim = Some(s.dim()),
                    Some(d) if d != s.dim() => {
                        return Err(Error::DimensionMismatch {
                            expected: d,
                            found: s.dim(),
                        })
                    }
                    _ => {}
                }
            }
        }
        if let Some(table) = &self.normalization {
            table.validate()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_clip(len: usize) -> MotionClip {
        let frames = (0..len).map(|t| Pose::new(vec![[t as f64, 0.0, 0.0]; 21])).collect();
        let mut c = MotionClip::new("ramp", frames);
        c.beats = Some((0..len).step_by(7).collect());
        c
    }

    #[test]
    fn standard_descriptor_is_valid() {
        SkeletonDescriptor::standard21().validate().unwrap();
    }

    #[test]
    fn descriptor_rejects_overlap_and_root_effector() {
        let mut d = SkeletonDescriptor::standard21();
        d.lower_body_indices.push(3);
        assert!(d.validate().is_err());
        let mut d = SkeletonDescriptor::standard21();
        d.end_effector_indices.push(0);
        assert!(d.validate().is_err());
        let mut d = SkeletonDescriptor::standard21();
        d.head_index = 21;
        assert!(d.validate().is_err());
    }

    #[test]
    fn middle_four_seconds() {
        let c = ramp_clip(160);
        let mid = c.slice(40, 80).unwrap();
        assert_eq!(mid.len(), 80);
        assert_eq!(mid.frames[0].joints[0][0], 40.0);
        assert_eq!(mid.frames[79].joints[0][0], 119.0);
        // beats 42, 49, ..., 112 re-indexed
        assert_eq!(mid.beats.as_ref().unwrap()[0], 2);
        assert!(mid.beats.unwrap().iter().all(|&b| b < 80));
    }

    #[test]
    fn full_slice_is_identity() {
        let c = ramp_clip(160);
        assert_eq!(c.slice(0, 160).unwrap(), c);
    }

    #[test]
    fn slice_out_of_range() {
        let c = ramp_clip(160);
        assert!(matches!(c.slice(100, 80), Err(Error::OutOfBounds { end: 180, .. })));
    }

    #[test]
    fn wrong_frame_count_names_clip() {
        let mut c = ramp_clip(150);
        c.id = "short_one".into();
        let err = Repertoire::from_clips(SkeletonDescriptor::standard21(), [c]).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("short_one") && msg.contains("expected 160"), "{msg}");
    }

    #[test]
    fn entries_sorted_by_id() {
        let mk = |id: &str| {
            let mut c = ramp_clip(160);
            c.id = id.into();
            c
        };
        let r = Repertoire::from_clips(SkeletonDescriptor::standard21(), [mk("c"), mk("a"), mk("b")]).unwrap();
        let ids: Vec<_> = r.entries.iter().map(|e| e.id()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(r.get("b").is_some());
        assert!(r.get("z").is_none());
    }

    proptest! {
        #[test]
        fn slice_composes(a in 0usize..60, n in 1usize..100, b in 0usize..60, m in 1usize..60) {
            let c = ramp_clip(160);
            prop_assume!(a + n <= 160 && b + m <= n);
            let twice = c.slice(a, n).unwrap().slice(b, m).unwrap();
            prop_assert_eq!(twice, c.slice(a + b, m).unwrap());
        }
    }
}
