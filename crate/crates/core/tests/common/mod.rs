#![allow(dead_code)]

use rand::Rng;
use stroke_core::quat::Vec3;
use stroke_core::recording::{RecordingMeta, StrokeRecording};
use stroke_core::skeleton::SkeletonTopology;
use stroke_core::synth::{perpendicular_axis, Swing, SyntheticStroke};

pub fn random_axis(rng: &mut impl Rng) -> Vec3 {
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

pub fn random_swing(rng: &mut impl Rng, rest: Vec3, max_amplitude: f64) -> Swing {
    let axis = loop {
        if let Some(a) = perpendicular_axis(random_axis(rng), rest) {
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

/// Random swinging motion; every non-root joint moves.
pub fn random_stroke(rng: &mut impl Rng, topo: &SkeletonTopology, frames: usize) -> SyntheticStroke {
    let mut s = SyntheticStroke::still(topo, frames, 30.0);
    for j in 0..topo.joint_count() {
        if j != topo.root() {
            s.joints[j] = random_swing(rng, topo.rest_direction(j), 0.6);
        }
    }
    s.paddle = random_swing(rng, Vec3::Z, 0.8);
    s.yaw = rng.random_range(-3.0..3.0);
    s.root = Vec3::new(rng.random_range(-1.0..1.0), 1.0, rng.random_range(-1.0..1.0));
    s
}

pub fn record(stroke: &SyntheticStroke, topo: &SkeletonTopology, id: &str) -> StrokeRecording {
    StrokeRecording::ingest(
        stroke.poses(topo),
        &stroke.paddle_stream(),
        topo,
        RecordingMeta {
            id: id.to_string(),
            name: format!("stroke {id}"),
            expert_height: 1.8,
            created_at: 0,
        },
    )
    .unwrap()
}
