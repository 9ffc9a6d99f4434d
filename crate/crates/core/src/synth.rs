//! Deterministic synthetic strokes.
//!
//! Every non-root joint swings about an axis perpendicular to its rest bone
//! direction, so its extracted joint angle is exactly the swing rotation. The
//! paddle follows its own swing. Used for demos, replay fixtures and tests.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::quat::{Quat, Vec3};
use crate::skeleton::{PaddleFrame, PoseFrame, SkeletonTopology};

/// Rotation `axis, base + amplitude · sin(2π · frequency · t + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Swing {
    pub axis: Vec3,
    /// Radians.
    pub base: f64,
    /// Radians.
    pub amplitude: f64,
    /// Hertz.
    pub frequency: f64,
    pub phase: f64,
}

impl Swing {
    pub const STILL: Swing = Swing {
        axis: Vec3::X,
        base: 0.0,
        amplitude: 0.0,
        frequency: 0.0,
        phase: 0.0,
    };

    pub fn angle_at(&self, seconds: f64) -> f64 {
        self.base + self.amplitude * libm::sin(2.0 * PI * self.frequency * seconds + self.phase)
    }

    pub fn rotation_at(&self, seconds: f64) -> Quat {
        Quat::from_axis_angle(self.axis, self.angle_at(seconds))
    }
}

/// The part of `axis` perpendicular to `rest`, normalized; `None` when the two
/// are collinear.
pub fn perpendicular_axis(axis: Vec3, rest: Vec3) -> Option<Vec3> {
    (axis - rest.scale(axis.dot(rest))).normalized(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticStroke {
    pub frames: usize,
    pub fps: f64,
    /// Timestamp of the first frame, milliseconds.
    pub start_ms: f64,
    /// One swing per topology joint; the root entry is ignored.
    pub joints: Vec<Swing>,
    pub paddle: Swing,
    pub paddle_rate_hz: f64,
    pub root: Vec3,
    /// Facing rotation about the vertical, radians.
    pub yaw: f64,
    /// Uniform body size factor.
    pub body_scale: f64,
}

impl SyntheticStroke {
    /// A motionless rest pose.
    pub fn still(topo: &SkeletonTopology, frames: usize, fps: f64) -> Self {
        Self {
            frames,
            fps,
            start_ms: 0.0,
            joints: alloc::vec![Swing::STILL; topo.joint_count()],
            paddle: Swing::STILL,
            paddle_rate_hz: 250.0,
            root: Vec3::new(0.0, 1.0, 0.0),
            yaw: 0.0,
            body_scale: 1.0,
        }
    }

    pub fn frame_time_ms(&self, i: usize) -> f64 {
        self.start_ms + i as f64 * 1000.0 / self.fps
    }

    pub fn duration_ms(&self) -> f64 {
        self.frame_time_ms(self.frames.saturating_sub(1))
    }

    pub fn pose_at(&self, topo: &SkeletonTopology, t_ms: f64) -> PoseFrame {
        let seconds = (t_ms - self.start_ms) / 1000.0;
        let rotations: Vec<Quat> = self.joints.iter().map(|s| s.rotation_at(seconds)).collect();
        let local = topo.forward_kinematics(t_ms, Vec3::ZERO, &rotations, self.body_scale);
        let yaw = Quat::from_axis_angle(Vec3::Y, self.yaw);
        PoseFrame {
            timestamp: t_ms,
            positions: local
                .positions
                .iter()
                .map(|p| yaw.rotate(*p) + self.root)
                .collect(),
        }
    }

    pub fn poses(&self, topo: &SkeletonTopology) -> Vec<PoseFrame> {
        (0..self.frames)
            .map(|i| self.pose_at(topo, self.frame_time_ms(i)))
            .collect()
    }

    pub fn paddle_at(&self, t_ms: f64) -> PaddleFrame {
        PaddleFrame {
            timestamp: t_ms,
            orientation: self
                .paddle
                .rotation_at((t_ms - self.start_ms) / 1000.0)
                .canonical(),
        }
    }

    /// Paddle samples at `paddle_rate_hz` covering every pose timestamp.
    pub fn paddle_stream(&self) -> Vec<PaddleFrame> {
        let step = 1000.0 / self.paddle_rate_hz;
        let count = libm::ceil(self.duration_ms() / step) as usize + 1;
        (0..count)
            .map(|i| self.paddle_at(self.start_ms + i as f64 * step))
            .collect()
    }

    /// Paddle samples taken exactly at the pose timestamps.
    pub fn paddle_at_frames(&self) -> Vec<PaddleFrame> {
        (0..self.frames)
            .map(|i| self.paddle_at(self.frame_time_ms(i)))
            .collect()
    }
}
