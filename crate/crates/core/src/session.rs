//! Live training sessions.
//!
//! A [`Session`] owns the expert playback clock, the trailing windows of user
//! joint angles and paddle orientations, and the cue toggles. Each ingested
//! user frame produces a [`FeedbackEvent`] once both windows are full.
//!
//! The expert window is the `window` trimmed frames ending at the current
//! playback frame, shifted forward when playback is too close to the start.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{window_compare, AlignError, CompareConfig, ComparisonResult};
use crate::paddle;
use crate::quat::Vec3;
use crate::recording::StrokeRecording;
use crate::skeleton::{
    height_scale, joint_angles, JointAngleFrame, PaddleFrame, PoseFrame, SkeletonError,
    SkeletonTopology,
};

/// Playback speed multipliers offered by the controls.
pub const SPEED_STEPS: [f64; 7] = [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0];
/// Default number of expert frames covered by a guidance trajectory.
pub const DEFAULT_GUIDANCE_HORIZON: usize = 10;
/// Name used for the paddle in guidance cues.
pub const PADDLE_CUE: &str = "paddle";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("stroke `{0}` not found")]
    StrokeNotFound(String),
    #[error("speed {0} is not one of the offered steps")]
    InvalidSpeed(f64),
    #[error("user frame timestamp {got} does not follow {last}")]
    NonMonotonicTimestamps { last: f64, got: f64 },
    #[error("no paddle samples received yet")]
    MissingPaddle,
    #[error("stroke has {frames} trimmed frames, window needs {window}")]
    StrokeTooShort { frames: usize, window: usize },
    #[error("stroke uses topology `{found}`, session uses `{expected}`")]
    TopologyMismatch { expected: String, found: String },
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// Anything that can hand out recordings by id.
pub trait StrokeSource {
    fn stroke(&self, id: &str) -> Option<Arc<StrokeRecording>>;
}

impl StrokeSource for BTreeMap<String, Arc<StrokeRecording>> {
    fn stroke(&self, id: &str) -> Option<Arc<StrokeRecording>> {
        self.get(id).cloned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Cue {
    DetachedExpert,
    DetachedUser,
    OnbodyBody,
    OnbodyPaddle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CueToggles {
    pub detached_expert: bool,
    pub detached_user: bool,
    pub onbody_body: bool,
    pub onbody_paddle: bool,
}

impl Default for CueToggles {
    fn default() -> Self {
        Self {
            detached_expert: true,
            detached_user: true,
            onbody_body: true,
            onbody_paddle: true,
        }
    }
}

impl CueToggles {
    fn flip(&mut self, cue: Cue) {
        let slot = match cue {
            Cue::DetachedExpert => &mut self.detached_expert,
            Cue::DetachedUser => &mut self.detached_user,
            Cue::OnbodyBody => &mut self.onbody_body,
            Cue::OnbodyPaddle => &mut self.onbody_paddle,
        };
        *slot = !*slot;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Playback {
    /// Fractional frame index relative to the stroke's start marker.
    pub position: f64,
    pub speed: f64,
    pub paused: bool,
    pub looping: bool,
}

/// Control commands, serialized as `{"command": "set_speed", "value": 0.5}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Command {
    Pause,
    Resume,
    SetSpeed { value: f64 },
    Seek { frame: f64 },
    Toggle { cue: Cue },
    Loop { on: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub compare: CompareConfig,
    pub guidance_horizon: usize,
    /// Joint the paddle is held by; the paddle cue is offset from it.
    pub paddle_joint: String,
    /// Paddle point relative to the hand, in the paddle's own frame.
    pub paddle_offset: Vec3,
    /// Distance of the detached avatars in front of the user, for viewers.
    pub detached_distance_m: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            compare: CompareConfig::default(),
            guidance_horizon: DEFAULT_GUIDANCE_HORIZON,
            paddle_joint: String::from("R_wrist"),
            paddle_offset: Vec3::new(0.0, -0.15, 0.0),
            detached_distance_m: 3.0,
        }
    }
}

/// Serializable view of a session's state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub session_id: String,
    pub stroke_id: String,
    pub user_height_m: f64,
    pub scale: f64,
    pub anchor: Vec3,
    pub playback: Playback,
    pub cue_toggles: CueToggles,
    pub window: usize,
    pub window_fill: usize,
    pub detached_distance_m: f64,
}

/// Output of one comparison tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub session_id: String,
    pub user_frame_timestamp: f64,
    pub playback_position: f64,
    /// Absolute index of the expert frame the window ends at.
    pub expert_frame: usize,
    pub per_joint_score: Vec<f64>,
    /// Comparison-joint slots, ascending.
    pub joint_errors: Vec<usize>,
    pub paddle_score: f64,
    pub paddle_error: bool,
    pub expert_angle_frame: JointAngleFrame,
    pub user_angle_frame: JointAngleFrame,
}

impl FeedbackEvent {
    fn from_result(
        session_id: &str,
        playback_position: f64,
        expert_frame: usize,
        result: ComparisonResult,
        expert_angle_frame: JointAngleFrame,
        user_angle_frame: JointAngleFrame,
    ) -> Self {
        Self {
            session_id: String::from(session_id),
            user_frame_timestamp: user_angle_frame.timestamp,
            playback_position,
            expert_frame,
            per_joint_score: result.per_joint_score,
            joint_errors: result.joint_errors,
            paddle_score: result.paddle_score,
            paddle_error: result.paddle_error,
            expert_angle_frame,
            user_angle_frame,
        }
    }
}

/// Expert trajectory mapped onto the user for one flagged joint or the paddle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceCue {
    /// Joint name, or [`PADDLE_CUE`].
    pub joint: String,
    pub trajectory: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Ingest {
    /// Windows still filling; holds the current fill level.
    Pending(usize),
    Feedback(FeedbackEvent),
}

#[derive(Debug, Clone)]
pub struct Session {
    id: String,
    stroke: Arc<StrokeRecording>,
    topo: Arc<SkeletonTopology>,
    config: SessionConfig,
    user_height: f64,
    scale: f64,
    anchor: Vec3,
    playback: Playback,
    toggles: CueToggles,
    expert_fps: f64,
    user_angles: VecDeque<JointAngleFrame>,
    user_paddle: VecDeque<PaddleFrame>,
    paddle_history: Vec<PaddleFrame>,
    last_user_timestamp: Option<f64>,
    paddle_joint: Option<usize>,
}

/// Looks the stroke up in `source` and opens a session on it.
pub fn create_session(
    source: &impl StrokeSource,
    session_id: String,
    stroke_id: &str,
    topo: Arc<SkeletonTopology>,
    user_height: f64,
    anchor: Vec3,
    config: SessionConfig,
) -> Result<Session, SessionError> {
    let stroke = source
        .stroke(stroke_id)
        .ok_or_else(|| SessionError::StrokeNotFound(String::from(stroke_id)))?;
    Session::new(session_id, stroke, topo, user_height, anchor, config)
}

impl Session {
    pub fn new(
        id: String,
        stroke: Arc<StrokeRecording>,
        topo: Arc<SkeletonTopology>,
        user_height: f64,
        anchor: Vec3,
        config: SessionConfig,
    ) -> Result<Self, SessionError> {
        let scale = height_scale(user_height, stroke.expert_height())?;
        if stroke.topology_name() != topo.name() {
            return Err(SessionError::TopologyMismatch {
                expected: String::from(topo.name()),
                found: String::from(stroke.topology_name()),
            });
        }
        config.compare.thresholds.validate()?;
        let window = config.compare.window;
        if window == 0 || stroke.trimmed_len() < window {
            return Err(SessionError::StrokeTooShort {
                frames: stroke.trimmed_len(),
                window,
            });
        }
        let paddle_joint = topo.joint_index(&config.paddle_joint);
        Ok(Self {
            id,
            expert_fps: stroke.native_fps(),
            stroke,
            paddle_joint,
            topo,
            user_height,
            scale,
            anchor,
            playback: Playback {
                position: 0.0,
                speed: 1.0,
                paused: true,
                looping: false,
            },
            toggles: CueToggles::default(),
            user_angles: VecDeque::with_capacity(window),
            user_paddle: VecDeque::with_capacity(window),
            paddle_history: Vec::new(),
            last_user_timestamp: None,
            config,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn stroke(&self) -> &Arc<StrokeRecording> {
        &self.stroke
    }

    pub fn topology(&self) -> &Arc<SkeletonTopology> {
        &self.topo
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn anchor(&self) -> Vec3 {
        self.anchor
    }

    pub fn playback(&self) -> Playback {
        self.playback
    }

    pub fn toggles(&self) -> CueToggles {
        self.toggles
    }

    pub fn expert_fps(&self) -> f64 {
        self.expert_fps
    }

    pub fn window_fill(&self) -> usize {
        self.user_angles.len()
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        SessionSnapshot {
            session_id: self.id.clone(),
            stroke_id: String::from(self.stroke.id()),
            user_height_m: self.user_height,
            scale: self.scale,
            anchor: self.anchor,
            playback: self.playback,
            cue_toggles: self.toggles,
            window: self.config.compare.window,
            window_fill: self.window_fill(),
            detached_distance_m: self.config.detached_distance_m,
        }
    }

    /// Last valid playback position.
    fn span(&self) -> f64 {
        (self.stroke.trimmed_len() - 1) as f64
    }

    pub fn control(&mut self, command: Command) -> Result<(), SessionError> {
        match command {
            Command::Pause => self.playback.paused = true,
            Command::Resume => self.playback.paused = false,
            Command::SetSpeed { value } => {
                if !SPEED_STEPS.contains(&value) {
                    return Err(SessionError::InvalidSpeed(value));
                }
                self.playback.speed = value;
            }
            Command::Seek { frame } => {
                let frame = if frame.is_nan() { 0.0 } else { frame };
                self.playback.position = frame.clamp(0.0, self.span());
            }
            Command::Toggle { cue } => self.toggles.flip(cue),
            Command::Loop { on } => self.playback.looping = on,
        }
        Ok(())
    }

    /// Advances playback by `wall_dt` milliseconds of wall time.
    pub fn advance_clock(&mut self, wall_dt: f64) {
        if self.playback.paused || !(wall_dt > 0.0) {
            return;
        }
        let span = self.span();
        let next = self.playback.position + wall_dt * self.playback.speed * self.expert_fps / 1000.0;
        self.playback.position = if self.playback.looping && span > 0.0 {
            next % span
        } else {
            next.min(span)
        };
    }

    /// Absolute index of the expert frame at the playback position.
    pub fn current_expert_frame(&self) -> usize {
        let offset = libm::round(self.playback.position) as usize;
        self.stroke.start_frame() + offset.min(self.stroke.trimmed_len() - 1)
    }

    /// Absolute range of the expert comparison window.
    pub fn expert_window(&self) -> core::ops::Range<usize> {
        let w = self.config.compare.window;
        let start = self.stroke.start_frame();
        let first = (self.current_expert_frame() + 1).saturating_sub(w).max(start);
        first..first + w
    }

    fn absorb_paddle(&mut self, samples: &[PaddleFrame]) {
        for s in samples {
            let newer = self
                .paddle_history
                .last()
                .is_none_or(|last| s.timestamp > last.timestamp);
            if newer {
                if let Some(s) = paddle::normalized(s) {
                    self.paddle_history.push(s);
                }
            }
        }
    }

    /// Feeds one user pose and the paddle samples received since the last one.
    pub fn ingest_user(
        &mut self,
        pose: &PoseFrame,
        paddle_samples: &[PaddleFrame],
    ) -> Result<Ingest, SessionError> {
        if let Some(last) = self.last_user_timestamp {
            if !(pose.timestamp > last) {
                return Err(SessionError::NonMonotonicTimestamps {
                    last,
                    got: pose.timestamp,
                });
            }
        }
        let angles = joint_angles(pose, &self.topo)?;
        self.absorb_paddle(paddle_samples);
        let paddle = paddle::sample_at(&self.paddle_history, pose.timestamp)
            .ok_or(SessionError::MissingPaddle)?;
        // keep the newest sample at or before this pose, plus everything after it
        let keep_from = self
            .paddle_history
            .partition_point(|s| s.timestamp <= pose.timestamp)
            .saturating_sub(1);
        self.paddle_history.drain(..keep_from);

        self.last_user_timestamp = Some(pose.timestamp);
        let w = self.config.compare.window;
        if self.user_angles.len() == w {
            self.user_angles.pop_front();
            self.user_paddle.pop_front();
        }
        self.user_angles.push_back(angles);
        self.user_paddle.push_back(paddle);
        if self.user_angles.len() < w {
            return Ok(Ingest::Pending(self.user_angles.len()));
        }

        let range = self.expert_window();
        let expert_frame = self.current_expert_frame();
        let user_angles = self.user_angles.make_contiguous();
        let user_paddle = self.user_paddle.make_contiguous();
        let result = window_compare(
            user_angles,
            user_paddle,
            &self.stroke.angle_frames()[range.clone()],
            &self.stroke.paddle_frames()[range],
            &self.config.compare,
        )?;
        Ok(Ingest::Feedback(FeedbackEvent::from_result(
            &self.id,
            self.playback.position,
            expert_frame,
            result,
            self.stroke.angle_frames()[expert_frame].clone(),
            user_angles[w - 1].clone(),
        )))
    }

    /// Maps an expert point into the user's space: scaled about the expert's
    /// starting pelvis, which lands on the session anchor.
    pub fn map_expert_point(&self, p: Vec3) -> Vec3 {
        let origin = self.stroke.pose_frames()[self.stroke.start_frame()].position(self.topo.root());
        self.anchor + (p - origin).scale(self.scale)
    }

    /// Every joint of expert frame `index`, mapped into the user's space.
    pub fn mapped_expert_pose(&self, index: usize) -> Vec<Vec3> {
        self.stroke.pose_frames()[index]
            .positions
            .iter()
            .map(|p| self.map_expert_point(*p))
            .collect()
    }

    fn paddle_point(&self, index: usize) -> Vec3 {
        let frame = &self.stroke.pose_frames()[index];
        let hand = frame.position(self.paddle_joint.unwrap_or(self.topo.root()));
        hand + self.stroke.paddle_frames()[index]
            .orientation
            .rotate(self.config.paddle_offset)
    }

    /// Expert trajectories over the guidance horizon for each flagged joint
    /// slot, plus the paddle when `paddle_error` is set.
    pub fn guidance(&self, joint_errors: &[usize], paddle_error: bool) -> Vec<GuidanceCue> {
        let start = self.current_expert_frame();
        let end = self.stroke.end_frame();
        let frames: Vec<usize> = (0..self.config.guidance_horizon)
            .map(|h| (start + h).min(end))
            .collect();
        let comparison = self.topo.comparison_joints();
        let mut cues: Vec<GuidanceCue> = joint_errors
            .iter()
            .filter_map(|&slot| comparison.get(slot).copied())
            .map(|joint| GuidanceCue {
                joint: self.topo.joint_names()[joint].clone(),
                trajectory: frames
                    .iter()
                    .map(|&i| self.map_expert_point(self.stroke.pose_frames()[i].position(joint)))
                    .collect(),
            })
            .collect();
        if paddle_error {
            cues.push(GuidanceCue {
                joint: String::from(PADDLE_CUE),
                trajectory: frames
                    .iter()
                    .map(|&i| self.map_expert_point(self.paddle_point(i)))
                    .collect(),
            });
        }
        cues
    }

    /// Flagged slots as joint names.
    pub fn joint_error_names(&self, joint_errors: &[usize]) -> Vec<String> {
        let comparison = self.topo.comparison_joints();
        joint_errors
            .iter()
            .filter_map(|&slot| comparison.get(slot))
            .map(|&j| self.topo.joint_names()[j].clone())
            .collect()
    }
}
