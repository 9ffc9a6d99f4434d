//! Expert stroke recordings and the authoring operations on them.
//!
//! Trimming only moves the start and end markers; frame data is never removed,
//! so [`StrokeRecording::reset`] can always restore the full take.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::paddle;
use crate::skeleton::{
    joint_angles, JointAngleFrame, PaddleFrame, PoseFrame, SkeletonError, SkeletonTopology,
};

/// Used when a recording has a single frame and no measurable frame rate.
pub const FALLBACK_FPS: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamKind {
    Pose,
    Paddle,
    Angle,
}

impl core::fmt::Display for StreamKind {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(match self {
            StreamKind::Pose => "pose",
            StreamKind::Paddle => "paddle",
            StreamKind::Angle => "angle",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordingError {
    #[error("{0} stream is empty")]
    EmptyStream(StreamKind),
    #[error("{stream} timestamps not strictly increasing at index {index}")]
    NonMonotonicTimestamps { stream: StreamKind, index: usize },
    #[error("frame index {index} outside [{lo}, {hi}]")]
    IndexOutOfRange { index: usize, lo: usize, hi: usize },
    #[error("start frame {start} is after end frame {end}")]
    InvertedRange { start: usize, end: usize },
    #[error("{0}")]
    Invariant(&'static str),
    #[error("recording uses topology `{found}`, expected `{expected}`")]
    TopologyMismatch { expected: String, found: String },
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
}

/// A marked stage posture, e.g. "back swing".
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

/// Identity and metadata supplied when a take is ingested.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingMeta {
    pub id: String,
    pub name: String,
    pub expert_height: f64,
    /// Milliseconds since the Unix epoch.
    pub created_at: u64,
}

/// Every field of a recording, unchecked. Convert with
/// [`StrokeRecording::from_parts`].
#[derive(Debug, Clone, PartialEq)]
pub struct RecordingParts {
    pub id: String,
    pub name: String,
    pub expert_height: f64,
    pub created_at: u64,
    pub topology_name: String,
    pub pose_frames: Vec<PoseFrame>,
    pub angle_frames: Vec<JointAngleFrame>,
    pub paddle_frames: Vec<PaddleFrame>,
    pub start_frame: usize,
    pub end_frame: usize,
    pub keyframes: Vec<Keyframe>,
}

/// An authored expert stroke whose invariants always hold.
#[derive(Debug, Clone, PartialEq)]
pub struct StrokeRecording {
    parts: RecordingParts,
}

fn check_increasing(ts: impl Iterator<Item = f64>, stream: StreamKind) -> Result<(), RecordingError> {
    let mut prev = f64::NEG_INFINITY;
    for (index, t) in ts.enumerate() {
        if !(t > prev) {
            return Err(RecordingError::NonMonotonicTimestamps { stream, index });
        }
        prev = t;
    }
    Ok(())
}

impl StrokeRecording {
    /// Builds a recording from raw capture streams.
    ///
    /// Joint angles are computed for every pose frame and the paddle stream is
    /// resampled onto the pose timestamps. Bounds cover the whole take.
    pub fn ingest(
        pose_stream: Vec<PoseFrame>,
        paddle_stream: &[PaddleFrame],
        topo: &SkeletonTopology,
        meta: RecordingMeta,
    ) -> Result<Self, RecordingError> {
        if pose_stream.is_empty() {
            return Err(RecordingError::EmptyStream(StreamKind::Pose));
        }
        if paddle_stream.is_empty() {
            return Err(RecordingError::EmptyStream(StreamKind::Paddle));
        }
        crate::skeleton::height_scale(meta.expert_height, meta.expert_height)?;
        check_increasing(pose_stream.iter().map(|f| f.timestamp), StreamKind::Pose)?;
        check_increasing(paddle_stream.iter().map(|f| f.timestamp), StreamKind::Paddle)?;

        let angle_frames = pose_stream
            .iter()
            .map(|f| joint_angles(f, topo))
            .collect::<Result<Vec<_>, _>>()?;
        let timestamps: Vec<f64> = pose_stream.iter().map(|f| f.timestamp).collect();
        let paddle_stream = paddle_stream
            .iter()
            .map(paddle::normalized)
            .collect::<Option<Vec<_>>>()
            .ok_or(RecordingError::Invariant("paddle orientation is degenerate"))?;
        let paddle_frames = paddle::resample(&paddle_stream, &timestamps)
            .ok_or(RecordingError::EmptyStream(StreamKind::Paddle))?;
        let end_frame = pose_stream.len() - 1;

        Self::from_parts(RecordingParts {
            id: meta.id,
            name: meta.name,
            expert_height: meta.expert_height,
            created_at: meta.created_at,
            topology_name: String::from(topo.name()),
            pose_frames: pose_stream,
            angle_frames,
            paddle_frames,
            start_frame: 0,
            end_frame,
            keyframes: Vec::new(),
        })
    }

    /// Checks every recording invariant.
    pub fn from_parts(parts: RecordingParts) -> Result<Self, RecordingError> {
        let len = parts.pose_frames.len();
        if len == 0 {
            return Err(RecordingError::EmptyStream(StreamKind::Pose));
        }
        if parts.end_frame >= len {
            return Err(RecordingError::IndexOutOfRange {
                index: parts.end_frame,
                lo: 0,
                hi: len - 1,
            });
        }
        if parts.start_frame > parts.end_frame {
            return Err(RecordingError::InvertedRange {
                start: parts.start_frame,
                end: parts.end_frame,
            });
        }
        if parts.angle_frames.len() != len {
            return Err(RecordingError::Invariant("angle frame count differs from pose frame count"));
        }
        if parts.paddle_frames.len() != len {
            return Err(RecordingError::Invariant("paddle frame count differs from pose frame count"));
        }
        if !(parts.expert_height > 0.5 && parts.expert_height < 2.5) {
            return Err(SkeletonError::InvalidHeight(parts.expert_height).into());
        }
        check_increasing(parts.pose_frames.iter().map(|f| f.timestamp), StreamKind::Pose)?;
        check_increasing(parts.paddle_frames.iter().map(|f| f.timestamp), StreamKind::Paddle)?;
        check_increasing(parts.angle_frames.iter().map(|f| f.timestamp), StreamKind::Angle)?;
        let joints = parts.angle_frames[0].angles.len();
        for f in &parts.angle_frames {
            if f.angles.len() != joints {
                return Err(RecordingError::Invariant("angle frames disagree on joint count"));
            }
            if !f.angles.iter().all(|q| q.is_unit(1e-6)) {
                return Err(RecordingError::Invariant("joint angle is not a unit quaternion"));
            }
        }
        if !parts.paddle_frames.iter().all(|f| f.orientation.is_unit(1e-6)) {
            return Err(RecordingError::Invariant("paddle orientation is not a unit quaternion"));
        }
        if parts.pose_frames.iter().any(|f| {
            f.positions.len() != parts.pose_frames[0].positions.len()
                || !f.positions.iter().all(|p| p.is_finite())
        }) {
            return Err(RecordingError::Invariant("pose frames are ragged or non-finite"));
        }
        for w in parts.keyframes.windows(2) {
            if w[0].index >= w[1].index {
                return Err(RecordingError::Invariant("keyframes must be sorted and unique"));
            }
        }
        for k in &parts.keyframes {
            if k.index < parts.start_frame || k.index > parts.end_frame {
                return Err(RecordingError::IndexOutOfRange {
                    index: k.index,
                    lo: parts.start_frame,
                    hi: parts.end_frame,
                });
            }
        }
        Ok(Self { parts })
    }

    /// Like [`from_parts`](Self::from_parts), also checking the frames against
    /// `topo`.
    pub fn from_parts_with_topology(
        parts: RecordingParts,
        topo: &SkeletonTopology,
    ) -> Result<Self, RecordingError> {
        if parts.topology_name != topo.name() {
            return Err(RecordingError::TopologyMismatch {
                expected: String::from(topo.name()),
                found: parts.topology_name,
            });
        }
        let rec = Self::from_parts(parts)?;
        for f in &rec.parts.pose_frames {
            f.validate(topo)?;
        }
        if rec.parts.angle_frames[0].angles.len() != topo.comparison_joints().len() {
            return Err(RecordingError::Invariant("angle frames do not match topology"));
        }
        Ok(rec)
    }

    pub fn parts(&self) -> &RecordingParts {
        &self.parts
    }

    pub fn into_parts(self) -> RecordingParts {
        self.parts
    }

    pub fn id(&self) -> &str {
        &self.parts.id
    }

    pub fn name(&self) -> &str {
        &self.parts.name
    }

    pub fn expert_height(&self) -> f64 {
        self.parts.expert_height
    }

    pub fn topology_name(&self) -> &str {
        &self.parts.topology_name
    }

    pub fn created_at(&self) -> u64 {
        self.parts.created_at
    }

    pub fn frame_count(&self) -> usize {
        self.parts.pose_frames.len()
    }

    pub fn start_frame(&self) -> usize {
        self.parts.start_frame
    }

    pub fn end_frame(&self) -> usize {
        self.parts.end_frame
    }

    /// Frames between the markers, inclusive.
    pub fn trimmed_len(&self) -> usize {
        self.parts.end_frame - self.parts.start_frame + 1
    }

    pub fn keyframes(&self) -> &[Keyframe] {
        &self.parts.keyframes
    }

    pub fn pose_frames(&self) -> &[PoseFrame] {
        &self.parts.pose_frames
    }

    pub fn angle_frames(&self) -> &[JointAngleFrame] {
        &self.parts.angle_frames
    }

    pub fn paddle_frames(&self) -> &[PaddleFrame] {
        &self.parts.paddle_frames
    }

    pub fn trimmed_poses(&self) -> &[PoseFrame] {
        &self.parts.pose_frames[self.parts.start_frame..=self.parts.end_frame]
    }

    pub fn trimmed_angles(&self) -> &[JointAngleFrame] {
        &self.parts.angle_frames[self.parts.start_frame..=self.parts.end_frame]
    }

    pub fn trimmed_paddle(&self) -> &[PaddleFrame] {
        &self.parts.paddle_frames[self.parts.start_frame..=self.parts.end_frame]
    }

    /// Duration between the first and last trimmed frames, in milliseconds.
    pub fn duration_ms(&self) -> f64 {
        let f = self.trimmed_poses();
        f[f.len() - 1].timestamp - f[0].timestamp
    }

    /// Native frame rate estimated from the full take.
    pub fn native_fps(&self) -> f64 {
        let f = &self.parts.pose_frames;
        let span = f[f.len() - 1].timestamp - f[0].timestamp;
        if f.len() < 2 || !(span > 0.0) {
            return FALLBACK_FPS;
        }
        (f.len() - 1) as f64 * 1000.0 / span
    }

    /// Moves the start and end markers. Keyframes outside the new range are
    /// dropped; frame data is kept.
    pub fn trim(&self, start: usize, end: usize) -> Result<Self, RecordingError> {
        let last = self.frame_count() - 1;
        for index in [start, end] {
            if index > last {
                return Err(RecordingError::IndexOutOfRange { index, lo: 0, hi: last });
            }
        }
        if start > end {
            return Err(RecordingError::InvertedRange { start, end });
        }
        let mut parts = self.parts.clone();
        parts.start_frame = start;
        parts.end_frame = end;
        parts.keyframes.retain(|k| k.index >= start && k.index <= end);
        Ok(Self { parts })
    }

    fn check_in_bounds(&self, index: usize) -> Result<(), RecordingError> {
        if index < self.parts.start_frame || index > self.parts.end_frame {
            return Err(RecordingError::IndexOutOfRange {
                index,
                lo: self.parts.start_frame,
                hi: self.parts.end_frame,
            });
        }
        Ok(())
    }

    /// Replaces the keyframes with the sorted, deduplicated `indices`. Labels
    /// of indices that were already keyframes are kept.
    pub fn set_keyframes(&self, indices: &[usize]) -> Result<Self, RecordingError> {
        for &i in indices {
            self.check_in_bounds(i)?;
        }
        let mut sorted = indices.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        let mut parts = self.parts.clone();
        parts.keyframes = sorted
            .into_iter()
            .map(|index| Keyframe {
                index,
                label: self
                    .parts
                    .keyframes
                    .iter()
                    .find(|k| k.index == index)
                    .and_then(|k| k.label.clone()),
            })
            .collect();
        Ok(Self { parts })
    }

    /// Adds or relabels a single keyframe.
    pub fn add_keyframe(&self, index: usize, label: Option<String>) -> Result<Self, RecordingError> {
        self.check_in_bounds(index)?;
        let mut parts = self.parts.clone();
        match parts.keyframes.binary_search_by_key(&index, |k| k.index) {
            Ok(pos) => parts.keyframes[pos].label = label,
            Err(pos) => parts.keyframes.insert(pos, Keyframe { index, label }),
        }
        Ok(Self { parts })
    }

    /// Restores full bounds and clears every keyframe.
    pub fn reset(&self) -> Self {
        let mut parts = self.parts.clone();
        parts.start_frame = 0;
        parts.end_frame = parts.pose_frames.len() - 1;
        parts.keyframes.clear();
        Self { parts }
    }
}
