#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use stroke_core::skeleton::{default_topology, SkeletonTopology};
use stroke_core::synth::SyntheticStroke;
use stroke_trainer::format::{PaddleRecord, PoseRecord};
use stroke_trainer::library::StrokeLibrary;
use stroke_trainer::service::{self, AppState, ServiceConfig};
use stroke_trainer::synthetic;

pub fn topo() -> Arc<SkeletonTopology> {
    Arc::new(default_topology())
}

/// Library at `dir` holding `stroke-<seed>` for each seed.
pub fn library(dir: &Path, seeds: &[u64], frames: usize) -> Arc<StrokeLibrary> {
    let topo = topo();
    let lib = StrokeLibrary::open(dir, topo.clone()).unwrap();
    for &seed in seeds {
        let s = synthetic::random_stroke(seed, &topo, frames, 30.0);
        lib.save(synthetic::record(&s, &topo, &format!("stroke-{seed}"), 1.8).unwrap())
            .unwrap();
    }
    Arc::new(lib)
}

pub async fn start(lib: Arc<StrokeLibrary>, config: ServiceConfig) -> (SocketAddr, Arc<AppState>) {
    let state = AppState::new(lib, config);
    let addr = service::spawn("127.0.0.1:0".parse().unwrap(), state.clone()).await.unwrap();
    (addr, state)
}

pub fn records(stroke: &SyntheticStroke, topo: &SkeletonTopology) -> (Vec<PoseRecord>, Vec<PaddleRecord>) {
    (
        stroke.poses(topo).iter().map(|p| PoseRecord::from_frame(p, topo)).collect(),
        stroke.paddle_stream().iter().map(PaddleRecord::from_frame).collect(),
    )
}
