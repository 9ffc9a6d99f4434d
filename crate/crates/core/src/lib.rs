//! Motion comparison engine for stroke training.
//!
//! Learner body and paddle orientation streams are aligned against recorded
//! expert strokes with quaternion-dissimilarity dynamic time warping, and
//! joints whose normalized cost exceeds a threshold are flagged.
//!
//! - [`quat`]: quaternions, vectors and the dissimilarity metric
//! - [`kalman`]: smoothing of quaternion sequences
//! - [`skeleton`]: topology, pose frames, joint-angle extraction
//! - [`paddle`]: resampling of the paddle IMU stream
//! - [`align`]: per-joint and paddle DTW, classification, windowed comparison
//! - [`recording`]: expert strokes and authoring (trim, keyframes)
//! - [`session`]: live sessions, playback clock and guidance cues
//! - [`synth`]: deterministic synthetic strokes for demos and fixtures
//!
//! The crate is `no_std` and needs only `alloc`.

// NaN must fail range checks, which `!(x > lo)` expresses directly.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(not(test), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod align;
pub mod kalman;
pub mod paddle;
pub mod quat;
pub mod recording;
pub mod session;
pub mod skeleton;
pub mod synth;

pub use align::{
    classify, compare, dtw_body, dtw_paddle, window_compare, AlignError, BodyCostTensor,
    CompareConfig, ComparisonResult, PaddleCostMatrix, Thresholds,
};
pub use kalman::{kalman_filter, KalmanParams};
pub use quat::{canonicalize, normalize, quaternion_dissimilarity, Quat, QuatError, Vec3};
pub use recording::{Keyframe, RecordingError, RecordingMeta, RecordingParts, StrokeRecording};
pub use session::{
    create_session, Command, Cue, CueToggles, FeedbackEvent, GuidanceCue, Ingest, Playback,
    Session, SessionConfig, SessionError, SessionSnapshot,
};
pub use skeleton::{
    default_topology, height_scale, joint_angles, normalize_pose, JointAngleFrame, PaddleFrame,
    PoseFrame, SkeletonError, SkeletonTopology,
};
