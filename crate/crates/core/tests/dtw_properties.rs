mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stroke_core::align::{dtw_body, dtw_paddle, smooth_body, window_compare, CompareConfig};
use stroke_core::quat::Quat;
use stroke_core::skeleton::{default_topology, joint_angles, JointAngleFrame, PaddleFrame};

/// Exhaustive minimum over monotone warping paths; no memoization.
fn oracle(a: &[Quat], b: &[Quat]) -> f64 {
    fn d(x: Quat, y: Quat) -> f64 {
        1.0 - (x.w * y.w + x.x * y.x + x.y * y.y + x.z * y.z).abs()
    }
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

fn unit_quat() -> impl Strategy<Value = Quat> {
    (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
        .prop_filter_map("degenerate", |(w, x, y, z)| Quat::new(w, x, y, z).normalized().ok())
}

fn body(joints: usize, len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<JointAngleFrame>> {
    proptest::collection::vec(proptest::collection::vec(unit_quat(), joints), len).prop_map(|rows| {
        rows.into_iter()
            .enumerate()
            .map(|(i, angles)| JointAngleFrame { timestamp: i as f64, angles })
            .collect()
    })
}

fn column(frames: &[JointAngleFrame], k: usize) -> Vec<Quat> {
    frames.iter().map(|f| f.angles[k]).collect()
}

fn paddle(qs: &[Quat]) -> Vec<PaddleFrame> {
    qs.iter()
        .enumerate()
        .map(|(i, q)| PaddleFrame { timestamp: i as f64, orientation: *q })
        .collect()
}

fn duplicate_some(frames: &[JointAngleFrame], mask: &[bool]) -> Vec<JointAngleFrame> {
    let mut out = Vec::new();
    for (f, dup) in frames.iter().zip(mask.iter().cycle()) {
        out.push(f.clone());
        if *dup {
            out.push(f.clone());
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn body_matches_oracle(
        (u, e) in (1usize..=4).prop_flat_map(|j| (body(j, 1..8), body(j, 1..8)))
    ) {
        let t = dtw_body(&u, &e).unwrap();
        for k in 0..u[0].angles.len() {
            let expected = oracle(&column(&u, k), &column(&e, k));
            prop_assert!((t.terminal(k) - expected).abs() <= 1e-9);
        }
    }

    #[test]
    fn paddle_matches_oracle(
        a in proptest::collection::vec(unit_quat(), 1..8),
        b in proptest::collection::vec(unit_quat(), 1..8),
    ) {
        let m = dtw_paddle(&paddle(&a), &paddle(&b)).unwrap();
        prop_assert!((m.terminal() - oracle(&a, &b)).abs() <= 1e-9);
    }

    #[test]
    fn self_duplication_keeps_zero(frames in body(3, 1..10), mask in proptest::collection::vec(any::<bool>(), 1..10)) {
        let stretched = duplicate_some(&frames, &mask);
        let t = dtw_body(&stretched, &frames).unwrap();
        prop_assert_eq!(t.terminals(), vec![0.0; 3]);
        let t = dtw_body(&frames, &stretched).unwrap();
        prop_assert_eq!(t.terminals(), vec![0.0; 3]);
    }

    #[test]
    fn joint_permutation_permutes_scores(
        (u, e) in body(4, 1..7).prop_flat_map(|u| (Just(u), body(4, 1..7))),
        perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
    ) {
        let permute = |fs: &[JointAngleFrame]| -> Vec<JointAngleFrame> {
            fs.iter()
                .map(|f| JointAngleFrame {
                    timestamp: f.timestamp,
                    angles: perm.iter().map(|&p| f.angles[p]).collect(),
                })
                .collect()
        };
        let base = dtw_body(&u, &e).unwrap().terminals();
        let permuted = dtw_body(&permute(&u), &permute(&e)).unwrap().terminals();
        for (slot, &p) in perm.iter().enumerate() {
            prop_assert_eq!(permuted[slot], base[p]);
        }
    }

    #[test]
    fn tables_are_monotone_along_paths((u, e) in body(2, 1..7).prop_flat_map(|u| (Just(u), body(2, 1..7)))) {
        let t = dtw_body(&u, &e).unwrap();
        for k in 0..2 {
            for i in 1..=t.n() {
                for j in 1..=t.m() {
                    let here = t.at(i, j, k);
                    prop_assert!(here.is_finite() && here >= 0.0);
                    let best = t.at(i - 1, j, k).min(t.at(i, j - 1, k)).min(t.at(i - 1, j - 1, k));
                    prop_assert!(here >= best);
                }
            }
        }
    }
}

#[test]
fn zero_cost_iff_zero_path_exists() {
    // expert visits a, b, c; user visits a, a, b, c, c: a zero path exists
    let q = |k: f64| Quat::new(k.cos(), k.sin(), 0.0, 0.0);
    let seq = |ks: &[f64]| -> Vec<JointAngleFrame> {
        ks.iter()
            .enumerate()
            .map(|(i, k)| JointAngleFrame { timestamp: i as f64, angles: vec![q(*k)] })
            .collect()
    };
    let t = dtw_body(&seq(&[0.0, 0.0, 0.3, 0.6, 0.6]), &seq(&[0.0, 0.3, 0.6])).unwrap();
    assert_eq!(t.terminal(0), 0.0);
    // skipping b in the user sequence makes every path pay
    let t = dtw_body(&seq(&[0.0, 0.6]), &seq(&[0.0, 0.3, 0.6])).unwrap();
    assert!(t.terminal(0) > 0.0);
}

#[test]
fn shifted_window_beats_frame_by_frame() {
    let topo = default_topology();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let stroke = common::random_stroke(&mut rng, &topo, 40);
    let angles: Vec<JointAngleFrame> = stroke
        .poses(&topo)
        .iter()
        .map(|p| joint_angles(p, &topo).unwrap())
        .collect();
    let paddle = stroke.paddle_at_frames();
    let cfg = CompareConfig::default();

    // user lags the expert by two frames
    let user = &angles[10..20];
    let expert = &angles[12..22];
    let r = window_compare(user, &paddle[10..20], expert, &paddle[12..22], &cfg).unwrap();

    let params = cfg.smoothing.unwrap();
    let su = smooth_body(user, &params).unwrap();
    let se = smooth_body(expert, &params).unwrap();
    for k in 0..topo.comparison_joints().len() {
        let no_warp: f64 =
            su.iter().zip(&se).map(|(a, b)| a.angles[k].dissimilarity(b.angles[k])).sum::<f64>() / 10.0;
        assert!(
            r.per_joint_score[k] < no_warp,
            "joint {k}: {} vs {no_warp}",
            r.per_joint_score[k]
        );
    }
}
