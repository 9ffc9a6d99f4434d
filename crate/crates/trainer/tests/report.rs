use stroke_core::align::CompareConfig;
use stroke_core::skeleton::default_topology;
use stroke_trainer::report::{analyze, AnalyzeError};
use stroke_trainer::synthetic;

fn raw() -> CompareConfig {
    CompareConfig {
        smoothing: None,
        ..CompareConfig::default()
    }
}

#[test]
fn self_analysis_is_all_zero() {
    let topo = default_topology();
    for seed in 0..10 {
        let rec = synthetic::record(&synthetic::random_stroke(seed, &topo, 45, 30.0), &topo, "a", 1.8)
            .unwrap()
            .add_keyframe(20, Some("back swing".into()))
            .unwrap();
        for cfg in [CompareConfig::default(), raw()] {
            let r = analyze(&rec, &rec, &topo, &cfg).unwrap();
            assert!(r.joints.iter().all(|j| j.cost == 0.0 && !j.flagged));
            assert_eq!(r.paddle.cost, 0.0);
            assert_eq!(r.flag_count(), 0);
            assert_eq!(r.mean_body_cost, 0.0);
            assert_eq!(r.keyframes.len(), 1);
            assert_eq!(r.keyframes[0].dissimilarity, 0.0);
            assert!(r.keyframes[0].user_frames.iter().all(|&i| i == 20));
        }
    }
}

#[test]
fn offsets_follow_the_closed_form() {
    let topo = default_topology();
    let knee = topo.joint_index("L_knee").unwrap();
    let slot = topo.comparison_slot(knee).unwrap();
    let base = synthetic::random_stroke(21, &topo, 60, 30.0);
    let expert = synthetic::record(&synthetic::damp_joint(&base, knee), &topo, "e", 1.8).unwrap();
    for (deg, flagged) in [(60.0, true), (30.0, false)] {
        let user = synthetic::record(&synthetic::offset_joint(&base, knee, deg), &topo, "u", 1.8).unwrap();
        let r = analyze(&user, &expert, &topo, &CompareConfig::default()).unwrap();
        let closed = 1.0 - (deg / 2.0_f64).to_radians().cos();
        assert!((r.joints[slot].cost - closed).abs() < 0.02, "{deg}: {} vs {closed}", r.joints[slot].cost);
        assert_eq!(r.joints[slot].flagged, flagged);
        for (k, j) in r.joints.iter().enumerate() {
            if k != slot {
                assert!(j.cost < 1e-12, "{}: {}", j.name, j.cost);
            }
        }
        let expected: Vec<String> = if flagged { vec!["L_knee".into()] } else { vec![] };
        assert_eq!(r.flagged_joints, expected);
    }
}

#[test]
fn duplicated_frames_cost_nothing() {
    let topo = default_topology();
    let rec = synthetic::record(&synthetic::random_stroke(5, &topo, 40, 30.0), &topo, "a", 1.8).unwrap();
    let slow = synthetic::duplicate_frames(&rec, "slow");
    for (u, e) in [(&slow, &rec), (&rec, &slow)] {
        let r = analyze(u, e, &topo, &raw()).unwrap();
        assert!(r.joints.iter().all(|j| j.cost == 0.0));
        assert_eq!(r.paddle.cost, 0.0);
        let smoothed = analyze(u, e, &topo, &CompareConfig::default()).unwrap();
        assert_eq!(smoothed.flag_count(), 0);
    }
}

#[test]
fn trimmed_ranges_are_compared() {
    let topo = default_topology();
    let rec = synthetic::record(&synthetic::random_stroke(6, &topo, 60, 30.0), &topo, "a", 1.8).unwrap();
    let head = rec.trim(0, 29).unwrap();
    let r = analyze(&head, &rec.trim(0, 29).unwrap(), &topo, &raw()).unwrap();
    assert_eq!((r.user_frames, r.expert_frames), (30, 30));
    assert_eq!(r.flag_count(), 0);
    let r = analyze(&head, &rec, &topo, &raw()).unwrap();
    assert_eq!(r.expert_frames, 60);
}

#[test]
fn topology_mismatch_is_rejected() {
    let topo = default_topology();
    let rec = synthetic::record(&synthetic::random_stroke(7, &topo, 20, 30.0), &topo, "a", 1.8).unwrap();
    let mut other = rec.clone().into_parts();
    other.topology_name = "other".into();
    let other = stroke_core::recording::StrokeRecording::from_parts(other).unwrap();
    assert!(matches!(
        analyze(&rec, &other, &topo, &raw()),
        Err(AnalyzeError::TopologyMismatch { .. })
    ));
}

#[test]
fn report_serializes_and_tabulates() {
    let topo = default_topology();
    let rec = synthetic::record(&synthetic::random_stroke(8, &topo, 30, 30.0), &topo, "a", 1.8).unwrap();
    let r = analyze(&rec, &rec, &topo, &CompareConfig::default()).unwrap();
    let json = serde_json::to_string(&r).unwrap();
    assert_eq!(serde_json::from_str::<stroke_trainer::report::AnalysisReport>(&json).unwrap(), r);
    let table = r.table();
    assert!(table.contains("R_elbow"));
    assert!(table.contains("0 flagged"));
}
