//! Seeded synthetic strokes for demos, replay fixtures and tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stroke_core::quat::Vec3;
use stroke_core::recording::{RecordingMeta, RecordingParts, StrokeRecording};
use stroke_core::skeleton::SkeletonTopology;
use stroke_core::synth::{perpendicular_axis, Swing, SyntheticStroke};

fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if let Some(v) = v.normalized(0.1) {
            return v;
        }
    }
}

fn random_swing(rng: &mut impl Rng, rest: Vec3, max_amplitude: f64) -> Swing {
    let axis = loop {
        if let Some(a) = perpendicular_axis(random_unit(rng), rest) {
            break a;
        }
    };
    Swing {
        axis,
        base: rng.random_range(-0.3..0.3),
        amplitude: rng.random_range(0.05..max_amplitude),
        frequency: rng.random_range(0.5..1.5),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
    }
}

/// A stroke where every joint and the paddle swing with random parameters.
pub fn random_stroke(seed: u64, topo: &SkeletonTopology, frames: usize, fps: f64) -> SyntheticStroke {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = SyntheticStroke::still(topo, frames, fps);
    for j in 0..topo.joint_count() {
        if j != topo.root() {
            s.joints[j] = random_swing(&mut rng, topo.rest_direction(j), 0.6);
        }
    }
    s.paddle = random_swing(&mut rng, Vec3::Z, 0.8);
    s.yaw = rng.random_range(-3.0..3.0);
    s.root = Vec3::new(rng.random_range(-1.0..1.0), 1.0, rng.random_range(-1.0..1.0));
    s
}

/// Copy of `stroke` with `joint` rotated by a constant `degrees` about its
/// swing axis.
///
/// The joint's own motion is damped to a few degrees so that warping cannot
/// line the offset pose up with a different part of the motion.
pub fn offset_joint(stroke: &SyntheticStroke, joint: usize, degrees: f64) -> SyntheticStroke {
    let mut s = stroke.clone();
    s.joints[joint].amplitude = s.joints[joint].amplitude.min(0.05);
    s.joints[joint].base += degrees.to_radians();
    s
}

/// Like [`offset_joint`] but only damps the joint, for the offset-free twin.
pub fn damp_joint(stroke: &SyntheticStroke, joint: usize) -> SyntheticStroke {
    offset_joint(stroke, joint, 0.0)
}

pub fn record(
    stroke: &SyntheticStroke,
    topo: &SkeletonTopology,
    id: &str,
    expert_height: f64,
) -> Result<StrokeRecording, stroke_core::recording::RecordingError> {
    StrokeRecording::ingest(
        stroke.poses(topo),
        &stroke.paddle_stream(),
        topo,
        RecordingMeta {
            id: id.to_string(),
            name: format!("synthetic {id}"),
            expert_height,
            created_at: 0,
        },
    )
}

/// Every frame of `rec` twice in a row, at double the frame rate. Bounds and
/// keyframes are reset.
pub fn duplicate_frames(rec: &StrokeRecording, id: &str) -> StrokeRecording {
    let p = rec.parts();
    let dt = if p.pose_frames.len() > 1 {
        (p.pose_frames[1].timestamp - p.pose_frames[0].timestamp) / 2.0
    } else {
        1.0
    };
    let t0 = p.pose_frames[0].timestamp;
    let n = p.pose_frames.len() * 2;
    let at = |i: usize| t0 + i as f64 * dt;
    let mut parts = RecordingParts {
        id: id.to_string(),
        start_frame: 0,
        end_frame: n - 1,
        keyframes: Vec::new(),
        pose_frames: Vec::with_capacity(n),
        angle_frames: Vec::with_capacity(n),
        paddle_frames: Vec::with_capacity(n),
        ..p.clone()
    };
    for i in 0..n {
        let mut pose = p.pose_frames[i / 2].clone();
        pose.timestamp = at(i);
        let mut angles = p.angle_frames[i / 2].clone();
        angles.timestamp = at(i);
        let mut paddle = p.paddle_frames[i / 2];
        paddle.timestamp = at(i);
        parts.pose_frames.push(pose);
        parts.angle_frames.push(angles);
        parts.paddle_frames.push(paddle);
    }
    StrokeRecording::from_parts(parts).expect("duplicated recording keeps every invariant")
}
