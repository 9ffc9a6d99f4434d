//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure. Run with `cargo test --test acceptance`.

// `ensure!` negates its condition so that NaN counts as a failure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stroke_core::align::{dtw_body, dtw_paddle, window_compare, CompareConfig};
use stroke_core::kalman::{kalman_filter, KalmanParams};
use stroke_core::quat::{Quat, Vec3};
use stroke_core::recording::{RecordingError, StrokeRecording};
use stroke_core::skeleton::{default_topology, JointAngleFrame, PaddleFrame};
use stroke_trainer::format;
use stroke_trainer::replay::{percentile, replay, ReplayOptions};
use stroke_trainer::report::analyze;
use stroke_trainer::service::ServiceConfig;
use stroke_trainer::synthetic;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !($cond) {
            return Err(format!($($fmt)+));
        }
    };
}

/// `1 − |⟨a, b⟩|`, written independently of the library.
fn d(a: Quat, b: Quat) -> f64 {
    1.0 - (a.w * b.w + a.x * b.x + a.y * b.y + a.z * b.z).abs()
}

/// Minimum cumulative cost over every monotone warping path, by enumeration.
fn oracle(a: &[Quat], b: &[Quat]) -> f64 {
    fn walk(a: &[Quat], b: &[Quat], i: usize, j: usize, acc: f64) -> f64 {
        let acc = acc + d(a[i], b[j]);
        if i + 1 == a.len() && j + 1 == b.len() {
            return acc;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.len() {
            best = best.min(walk(a, b, i + 1, j, acc));
        }
        if j + 1 < b.len() {
            best = best.min(walk(a, b, i, j + 1, acc));
        }
        if i + 1 < a.len() && j + 1 < b.len() {
            best = best.min(walk(a, b, i + 1, j + 1, acc));
        }
        best
    }
    walk(a, b, 0, 0, 0.0)
}

fn random_quat(rng: &mut impl Rng) -> Quat {
    loop {
        let q = Quat::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if let Ok(q) = q.normalized() {
            return q;
        }
    }
}

fn column(frames: &[JointAngleFrame], k: usize) -> Vec<Quat> {
    frames.iter().map(|f| f.angles[k]).collect()
}

fn orientations(frames: &[PaddleFrame]) -> Vec<Quat> {
    frames.iter().map(|f| f.orientation).collect()
}

fn dtw_oracle_equivalence() -> Check {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xD7A);
    let mut worst = 0.0f64;
    let instances = 1000;
    for _ in 0..instances {
        let joints = rng.random_range(1..=4);
        let (n, m) = (rng.random_range(1..=7), rng.random_range(1..=7));
        let mut frames = |len: usize| -> Vec<JointAngleFrame> {
            (0..len)
                .map(|i| JointAngleFrame {
                    timestamp: i as f64,
                    angles: (0..joints).map(|_| random_quat(&mut rng)).collect(),
                })
                .collect()
        };
        let (u, e) = (frames(n), frames(m));
        let body = dtw_body(&u, &e).map_err(|e| e.to_string())?;
        for k in 0..joints {
            worst = worst.max((body.terminal(k) - oracle(&column(&u, k), &column(&e, k))).abs());
        }
        let paddle = |f: &[JointAngleFrame]| -> Vec<PaddleFrame> {
            f.iter()
                .map(|f| PaddleFrame { timestamp: f.timestamp, orientation: f.angles[0] })
                .collect()
        };
        let (pu, pe) = (paddle(&u), paddle(&e));
        let p = dtw_paddle(&pu, &pe).map_err(|e| e.to_string())?;
        worst = worst.max((p.terminal() - oracle(&orientations(&pu), &orientations(&pe))).abs());
    }
    let elapsed = started.elapsed();
    ensure!(worst <= 1e-9, "max deviation {worst:e}");
    ensure!(elapsed < Duration::from_secs(30), "took {elapsed:?}");
    Ok(format!("{instances} instances, max deviation {worst:.1e}, {:.2} s", elapsed.as_secs_f64()))
}

fn dissimilarity_laws() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(0x51);
    let tol = 1e-12;
    let samples = 10_000;
    for _ in 0..samples {
        let (q, p) = (random_quat(&mut rng), random_quat(&mut rng));
        let dqp = q.dissimilarity(p);
        ensure!(q.dissimilarity(q).abs() <= tol, "d(q,q) = {} for {q:?}", q.dissimilarity(q));
        ensure!((-tol..=1.0 + tol).contains(&dqp), "d = {dqp} out of range");
        ensure!((dqp - p.dissimilarity(q)).abs() <= tol, "asymmetric for {q:?} {p:?}");
        ensure!((dqp - q.dissimilarity(-p)).abs() <= tol, "sign flip changes d for {q:?} {p:?}");
        ensure!((dqp - (-q).dissimilarity(p)).abs() <= tol, "sign flip changes d for {q:?} {p:?}");
        ensure!((dqp - d(q, p)).abs() <= tol, "disagrees with 1 - |<q,p>|: {dqp} vs {}", d(q, p));
    }
    let axis = Vec3::new(0.3, -0.5, 0.8);
    let mut last = -1.0;
    for deg in [0.0f64, 30.0, 60.0, 120.0, 180.0] {
        let base = random_quat(&mut rng);
        let got = base.dissimilarity(Quat::from_axis_angle(axis, deg.to_radians()) * base);
        let want = 1.0 - (deg.to_radians() / 2.0).cos();
        ensure!((got - want).abs() <= tol, "{deg}°: {got} vs {want}");
        ensure!(got > last, "not monotone at {deg}°");
        last = got;
    }
    Ok(format!("{samples} random pairs and the 0/30/60/120/180° fixture within 1e-12"))
}

fn self_comparison(rt: &tokio::runtime::Runtime) -> Check {
    let topo = common::topo();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let seeds: Vec<u64> = (1000..1100).collect();
    let frames = 45;
    let lib = common::library(dir.path(), &seeds, frames);
    let cfg = CompareConfig::default();
    for &seed in &seeds {
        let rec = lib.get(&format!("stroke-{seed}")).map_err(|e| e.to_string())?;
        let r = analyze(&rec, &rec, &topo, &cfg).map_err(|e| e.to_string())?;
        ensure!(r.flag_count() == 0, "analyze flags {:?} for seed {seed}", r.flagged_joints);
    }
    let (events, flagged) = rt.block_on(async {
        let (addr, _) = common::start(lib.clone(), ServiceConfig::new(cfg.window, cfg.thresholds)).await;
        let (mut events, mut flagged) = (0, 0);
        for &seed in &seeds {
            let (poses, paddle) = common::records(&synthetic::random_stroke(seed, &topo, frames, 30.0), &topo);
            let mut opts = ReplayOptions::new(format!("http://{addr}"), format!("stroke-{seed}"));
            opts.rate = None;
            let s = replay(&poses, &paddle, &opts, |_| {}).await.map_err(|e| e.to_string())?;
            if s.events != frames - (cfg.window - 1) || !s.stream_errors.is_empty() {
                return Err(format!("seed {seed}: {} events, errors {:?}", s.events, s.stream_errors));
            }
            events += s.events;
            flagged += s.events_with_joint_flags + s.events_with_paddle_flag;
        }
        Ok((events, flagged))
    })?;
    ensure!(flagged == 0, "{flagged} streamed events carried flags");
    Ok(format!("{} recordings: analyze 0 flags; echo {events} events, 0 flags", seeds.len()))
}

fn threshold_geometry() -> Check {
    let topo = default_topology();
    // the hips define the heading used for yaw normalization, so an offset
    // there re-orients the whole body rather than one joint
    let names = topo.joint_names();
    let joints: Vec<usize> = topo
        .comparison_joints()
        .iter()
        .copied()
        .filter(|&j| !matches!(names[j].as_str(), "L_hip" | "R_hip"))
        .collect();
    let raw = CompareConfig { smoothing: None, ..CompareConfig::default() };
    let trials = 50;
    let (mut flagged_60, mut min_60, mut max_30) = (0, f64::INFINITY, 0.0f64);
    for trial in 0..trials {
        let joint = joints[trial % joints.len()];
        let slot = topo.comparison_slot(joint).unwrap();
        let name = &topo.joint_names()[joint];
        let base = synthetic::random_stroke(7000 + trial as u64, &topo, 60, 30.0);
        let expert = synthetic::record(&synthetic::damp_joint(&base, joint), &topo, "e", 1.8).map_err(|e| e.to_string())?;
        for (deg, should_flag) in [(60.0, true), (30.0, false)] {
            let user = synthetic::record(&synthetic::offset_joint(&base, joint, deg), &topo, "u", 1.8)
                .map_err(|e| e.to_string())?;
            let r = analyze(&user, &expert, &topo, &CompareConfig::default()).map_err(|e| e.to_string())?;
            let want: Vec<String> = if should_flag { vec![name.clone()] } else { vec![] };
            ensure!(r.flagged_joints == want, "trial {trial}, {name} {deg}°: flagged {:?}", r.flagged_joints);
            ensure!(!r.paddle.flagged, "trial {trial}: paddle flagged");
            if should_flag {
                flagged_60 += 1;
                min_60 = min_60.min(r.joints[slot].cost);
            } else {
                max_30 = max_30.max(r.joints[slot].cost);
            }

            // brute-force check of live windows at a few playback positions
            let (ua, ea) = (user.angle_frames(), expert.angle_frames());
            let (up, ep) = (user.paddle_frames(), expert.paddle_frames());
            for end in [10usize, 30, 60] {
                let w = end - raw.window..end;
                let c = window_compare(&ua[w.clone()], &up[w.clone()], &ea[w.clone()], &ep[w.clone()], &raw)
                    .map_err(|e| e.to_string())?;
                let score = oracle(&column(&ua[w.clone()], slot), &column(&ea[w.clone()], slot)) / raw.window as f64;
                ensure!((c.per_joint_score[slot] - score).abs() <= 1e-9, "window score {} vs oracle {score}", c.per_joint_score[slot]);
                let want: Vec<usize> = if should_flag { vec![slot] } else { vec![] };
                ensure!(c.joint_errors == want, "trial {trial}, {name} {deg}°, window ending {end}: {:?}", c.joint_errors);
            }
        }
    }
    Ok(format!(
        "{trials} trials over {} joints: 60° flagged {flagged_60}/{trials} (min cost {min_60:.4}), 30° never (max cost {max_30:.4}); closed-form boundary {:.2}°",
        joints.len(),
        2.0 * 0.9f64.acos().to_degrees()
    ))
}

fn tempo_invariance() -> Check {
    let topo = default_topology();
    let mut checked = 0;
    for seed in 0..20 {
        let rec = synthetic::record(&synthetic::random_stroke(300 + seed, &topo, 40, 30.0), &topo, "a", 1.8)
            .map_err(|e| e.to_string())?;
        let slow = synthetic::duplicate_frames(&rec, "slow");
        for (u, e) in [(&slow, &rec), (&rec, &slow)] {
            let body = dtw_body(u.angle_frames(), e.angle_frames()).map_err(|e| e.to_string())?;
            let paddle = dtw_paddle(u.paddle_frames(), e.paddle_frames()).map_err(|e| e.to_string())?;
            ensure!(body.terminals().iter().all(|&c| c == 0.0), "seed {seed}: body costs {:?}", body.terminals());
            ensure!(paddle.terminal() == 0.0, "seed {seed}: paddle cost {}", paddle.terminal());
            checked += 1;
        }
        // the enumeration also finds a zero-cost path on a prefix
        let (a, b) = (&rec.angle_frames()[..5], &slow.angle_frames()[..10]);
        for k in 0..a[0].angles.len() {
            let best = oracle(&column(b, k), &column(a, k));
            ensure!(best.abs() <= 1e-12, "seed {seed}: oracle finds {best} for joint {k}");
        }
    }
    Ok(format!("{checked} duplicated/original pairs at exactly 0; oracle agrees"))
}

fn realtime_budget(rt: &tokio::runtime::Runtime) -> Check {
    let topo = default_topology();
    let cfg = CompareConfig::default();
    let a = synthetic::record(&synthetic::random_stroke(1, &topo, 40, 30.0), &topo, "a", 1.8).map_err(|e| e.to_string())?;
    let b = synthetic::record(&synthetic::random_stroke(2, &topo, 40, 30.0), &topo, "b", 1.8).map_err(|e| e.to_string())?;
    ensure!(a.angle_frames()[0].angles.len() == 11, "expected 11 comparison joints");
    let mut times = Vec::new();
    for i in 0..1000 {
        let w = (i % 30)..(i % 30) + 10;
        let t = Instant::now();
        let r = window_compare(
            &a.angle_frames()[w.clone()],
            &a.paddle_frames()[w.clone()],
            &b.angle_frames()[w.clone()],
            &b.paddle_frames()[w.clone()],
            &cfg,
        );
        times.push(t.elapsed().as_secs_f64() * 1e3);
        std::hint::black_box(r).map_err(|e| e.to_string())?;
    }
    let median = percentile(&times, 50.0);
    ensure!(median < 5.0, "window_compare median {median:.3} ms");

    let frames = 1800;
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let lib = common::library(dir.path(), &[5], frames);
    let s = rt.block_on(async {
        let (addr, _) = common::start(lib, ServiceConfig::new(cfg.window, cfg.thresholds)).await;
        let (poses, paddle) = common::records(&synthetic::random_stroke(6, &topo, frames, 30.0), &topo);
        let mut opts = ReplayOptions::new(format!("http://{addr}"), "stroke-5");
        opts.rate = Some(1.0);
        replay(&poses, &paddle, &opts, |_| {}).await
    });
    let s = s.map_err(|e| e.to_string())?;
    ensure!(s.latencies_ms.len() == frames - (cfg.window - 1), "{} of {} feedback events", s.latencies_ms.len(), frames - 9);
    let p95 = percentile(&s.latencies_ms, 95.0);
    ensure!(p95 < 15.0, "loopback p95 {p95:.2} ms");
    Ok(format!(
        "window_compare median {median:.3} ms; loopback {} events over {:.1} s, p50 {:.2} ms, p95 {p95:.2} ms",
        s.latencies_ms.len(),
        s.wall_ms / 1e3,
        percentile(&s.latencies_ms, 50.0)
    ))
}

fn rms_angle(seq: &[Quat], target: Quat) -> f64 {
    (seq.iter().map(|q| q.angle_to(target).powi(2)).sum::<f64>() / seq.len() as f64).sqrt()
}

fn kalman_improvement() -> Check {
    let target = Quat::from_axis_angle(Vec3::new(0.2, 1.0, -0.4), 0.9);
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let mut n = || noise.sample(&mut rng);
    let raw: Vec<Quat> = (0..200)
        .map(|_| Quat::new(target.w + n(), target.x + n(), target.y + n(), target.z + n()).normalized().unwrap())
        .collect();
    let params = KalmanParams::default();
    let filtered = kalman_filter(&raw, &params).map_err(|e| e.to_string())?;
    let (raw_rms, filtered_rms) = (rms_angle(&raw[100..], target), rms_angle(&filtered[100..], target));
    ensure!(filtered_rms < raw_rms, "filtered tail {filtered_rms} ≥ raw {raw_rms}");

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..1000 {
        let len = rng.random_range(1..40);
        let seq: Vec<Quat> = (0..len).map(|_| random_quat(&mut rng)).collect();
        let out = kalman_filter(&seq, &params).map_err(|e| e.to_string())?;
        ensure!(out.len() == seq.len(), "length {} -> {}", seq.len(), out.len());
        ensure!(out.iter().all(|q| (q.norm() - 1.0).abs() < 1e-9), "non-unit output");
    }
    Ok(format!("tail RMS {raw_rms:.4} -> {filtered_rms:.4} rad; 1000 sequences keep length and unit norm"))
}

fn max_diff(a: &StrokeRecording, b: &StrokeRecording) -> f64 {
    let q = |q: &Quat| [q.w, q.x, q.y, q.z];
    let mut worst = 0.0f64;
    for (x, y) in a.pose_frames().iter().zip(b.pose_frames()) {
        worst = worst.max((x.timestamp - y.timestamp).abs());
        for (p, r) in x.positions.iter().zip(&y.positions) {
            worst = worst.max((p.x - r.x).abs()).max((p.y - r.y).abs()).max((p.z - r.z).abs());
        }
    }
    for (x, y) in a.angle_frames().iter().zip(b.angle_frames()) {
        for (p, r) in x.angles.iter().zip(&y.angles) {
            worst = q(p).iter().zip(q(r)).fold(worst, |m, (s, t)| m.max((s - t).abs()));
        }
    }
    for (x, y) in a.paddle_frames().iter().zip(b.paddle_frames()) {
        worst = worst.max((x.timestamp - y.timestamp).abs());
        worst = q(&x.orientation).iter().zip(q(&y.orientation)).fold(worst, |m, (s, t)| m.max((s - t).abs()));
    }
    worst
}

fn same_structure(a: &StrokeRecording, b: &StrokeRecording) -> bool {
    a.id() == b.id()
        && a.name() == b.name()
        && a.expert_height() == b.expert_height()
        && a.frame_count() == b.frame_count()
        && a.start_frame() == b.start_frame()
        && a.end_frame() == b.end_frame()
        && a.keyframes() == b.keyframes()
        && a.paddle_frames().len() == b.paddle_frames().len()
}

#[derive(Debug, Clone)]
enum Op {
    Trim(usize, usize),
    Keyframe(usize, bool),
    Reset,
}

fn recording_round_trip() -> Check {
    let topo = default_topology();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = dir.path().join("r.json");
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let rec = synthetic::record(&synthetic::random_stroke(seed, &topo, 50, 30.0), &topo, "r", 1.7)
            .and_then(|r| r.trim(5, 44))
            .and_then(|r| r.add_keyframe(20, Some("back swing".into())))
            .map_err(|e| e.to_string())?;
        format::write_recording(&path, &rec, &topo).map_err(|e| e.to_string())?;
        let back = format::read_recording(&path, &topo).map_err(|e| e.to_string())?;
        ensure!(same_structure(&rec, &back), "seed {seed}: metadata changed");
        worst = worst.max(max_diff(&rec, &back));
    }
    ensure!(worst <= 1e-9, "round trip drifts by {worst:e}");

    // authoring semantics
    let rec = synthetic::record(&synthetic::random_stroke(1, &topo, 100, 30.0), &topo, "s", 1.7).map_err(|e| e.to_string())?;
    let t = rec.trim(10, 90).map_err(|e| e.to_string())?;
    ensure!((t.start_frame(), t.end_frame(), t.trimmed_len(), t.frame_count()) == (10, 90, 81, 100), "trim bounds");
    ensure!(t.trimmed_angles().first() == rec.angle_frames().get(10), "trim window misaligned");
    ensure!(matches!(rec.trim(90, 10), Err(RecordingError::InvertedRange { .. })), "inverted trim accepted");
    ensure!(matches!(rec.trim(0, 100), Err(RecordingError::IndexOutOfRange { .. })), "trim past end accepted");
    let k = t.add_keyframe(30, Some("back swing".into())).map_err(|e| e.to_string())?;
    ensure!(k.keyframes().len() == 1 && k.keyframes()[0].label.as_deref() == Some("back swing"), "keyframe label lost");
    ensure!(k.add_keyframe(5, None).is_err(), "keyframe outside trim accepted");
    ensure!(k.trim(40, 90).map_err(|e| e.to_string())?.keyframes().is_empty(), "trim kept an out-of-range keyframe");
    let r = k.reset();
    ensure!((r.start_frame(), r.end_frame()) == (0, 99) && r.keyframes().is_empty(), "reset");
    ensure!(r.angle_frames() == rec.angle_frames(), "reset changed frame data");

    // random op sequences through save and load
    let base = synthetic::record(&synthetic::random_stroke(4, &topo, 36, 30.0), &topo, "p", 1.7).map_err(|e| e.to_string())?;
    let op = prop_oneof![
        (0usize..40, 0usize..40).prop_map(|(a, b)| Op::Trim(a, b)),
        (0usize..40, any::<bool>()).prop_map(|(i, l)| Op::Keyframe(i, l)),
        Just(Op::Reset),
    ];
    let cases = 128;
    let mut runner = TestRunner::new_with_rng(
        Config { cases, failure_persistence: None, ..Config::default() },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner
        .run(&proptest::collection::vec(op, 0..12), |ops| {
            let mut rec = base.clone();
            for op in ops {
                let next = match op {
                    Op::Trim(a, b) => rec.trim(a, b),
                    Op::Keyframe(i, labelled) => rec.add_keyframe(i, labelled.then(|| format!("stage {i}"))),
                    Op::Reset => Ok(rec.reset()),
                };
                if let Ok(r) = next {
                    rec = r;
                }
                prop_assert!(rec.start_frame() <= rec.end_frame() && rec.end_frame() < rec.frame_count());
                prop_assert!(rec.keyframes().windows(2).all(|w| w[0].index < w[1].index));
                prop_assert!(rec.keyframes().iter().all(|k| k.index >= rec.start_frame() && k.index <= rec.end_frame()));
                prop_assert!(StrokeRecording::from_parts(rec.clone().into_parts()).is_ok());
                format::write_recording(&path, &rec, &topo).unwrap();
                let back = format::read_recording(&path, &topo).unwrap();
                prop_assert!(same_structure(&rec, &back) && max_diff(&rec, &back) <= 1e-9);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    Ok(format!("20 files within {worst:.1e}; trim/keyframe/reset semantics hold; {cases} op sequences keep invariants"))
}

fn main() -> ExitCode {
    let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
    let criteria: Vec<Criterion> = vec![
        ("dtw oracle equivalence", Box::new(dtw_oracle_equivalence)),
        ("dissimilarity laws", Box::new(dissimilarity_laws)),
        ("self-comparison zero law", Box::new(|| self_comparison(&rt))),
        ("detection threshold geometry", Box::new(threshold_geometry)),
        ("tempo invariance", Box::new(tempo_invariance)),
        ("real-time budget", Box::new(|| realtime_budget(&rt))),
        ("kalman improvement", Box::new(kalman_improvement)),
        ("recording round-trip and authoring", Box::new(recording_round_trip)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
