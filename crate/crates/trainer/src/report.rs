//! Full-sequence comparison of two recordings.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use stroke_core::align::{
    classify, dtw_body, dtw_paddle, smooth_body, smooth_paddle, AlignError, CompareConfig, Thresholds,
};
use stroke_core::recording::StrokeRecording;
use stroke_core::skeleton::SkeletonTopology;

#[derive(Debug, thiserror::Error)]
pub enum AnalyzeError {
    #[error("user recording uses topology `{user}`, expert uses `{expert}`")]
    TopologyMismatch { user: String, expert: String },
    #[error(transparent)]
    Align(#[from] AlignError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointReport {
    pub name: String,
    /// Terminal DTW cost divided by the user length.
    pub cost: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaddleReport {
    pub cost: f64,
    pub flagged: bool,
}

/// Expert keyframe posture against the closest user frame the warping path
/// aligns with it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyframeReport {
    /// Absolute expert frame index.
    pub index: usize,
    pub label: Option<String>,
    /// Mean of `per_joint`.
    pub dissimilarity: f64,
    pub per_joint: Vec<f64>,
    /// Absolute user frame index chosen for each joint.
    pub user_frames: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub user_id: String,
    pub expert_id: String,
    pub topology: String,
    pub thresholds: Thresholds,
    pub smoothing: bool,
    pub user_frames: usize,
    pub expert_frames: usize,
    pub joints: Vec<JointReport>,
    pub paddle: PaddleReport,
    pub flagged_joints: Vec<String>,
    pub keyframes: Vec<KeyframeReport>,
    /// Average quaternion error: mean of the per-joint costs.
    pub mean_body_cost: f64,
    pub mean_paddle_cost: f64,
}

impl AnalysisReport {
    pub fn flag_count(&self) -> usize {
        self.flagged_joints.len() + usize::from(self.paddle.flagged)
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "user `{}` ({} frames) vs expert `{}` ({} frames), ξ joint {} paddle {}, smoothing {}",
            self.user_id,
            self.user_frames,
            self.expert_id,
            self.expert_frames,
            self.thresholds.joint,
            self.thresholds.paddle,
            if self.smoothing { "on" } else { "off" },
        );
        let _ = writeln!(s, "{:<12} {:>10}  flag", "joint", "cost");
        for j in &self.joints {
            let _ = writeln!(s, "{:<12} {:>10.6}  {}", j.name, j.cost, if j.flagged { "ERROR" } else { "" });
        }
        let _ = writeln!(
            s,
            "{:<12} {:>10.6}  {}",
            "paddle",
            self.paddle.cost,
            if self.paddle.flagged { "ERROR" } else { "" }
        );
        for k in &self.keyframes {
            let _ = writeln!(
                s,
                "keyframe {:>5} {:<16} {:>10.6}",
                k.index,
                k.label.as_deref().unwrap_or("-"),
                k.dissimilarity
            );
        }
        let _ = writeln!(
            s,
            "mean body cost {:.6}, mean paddle cost {:.6}, {} flagged",
            self.mean_body_cost,
            self.mean_paddle_cost,
            self.flag_count()
        );
        s
    }
}

/// Compares the trimmed ranges of `user` and `expert` over their full length.
pub fn analyze(
    user: &StrokeRecording,
    expert: &StrokeRecording,
    topo: &SkeletonTopology,
    config: &CompareConfig,
) -> Result<AnalysisReport, AnalyzeError> {
    if user.topology_name() != expert.topology_name() {
        return Err(AnalyzeError::TopologyMismatch {
            user: user.topology_name().to_string(),
            expert: expert.topology_name().to_string(),
        });
    }
    config.thresholds.validate()?;
    let (ub, eb, up, ep) = match &config.smoothing {
        Some(p) => (
            smooth_body(user.trimmed_angles(), p)?,
            smooth_body(expert.trimmed_angles(), p)?,
            smooth_paddle(user.trimmed_paddle(), p)?,
            smooth_paddle(expert.trimmed_paddle(), p)?,
        ),
        None => (
            user.trimmed_angles().to_vec(),
            expert.trimmed_angles().to_vec(),
            user.trimmed_paddle().to_vec(),
            expert.trimmed_paddle().to_vec(),
        ),
    };
    let body = dtw_body(&ub, &eb)?;
    let paddle = dtw_paddle(&up, &ep)?;
    let result = classify(&body, &paddle, &config.thresholds);

    let names: Vec<String> = topo.comparison_names().map(str::to_string).collect();
    let joints: Vec<JointReport> = names
        .iter()
        .zip(&result.per_joint_score)
        .enumerate()
        .map(|(k, (name, &cost))| JointReport {
            name: name.clone(),
            cost,
            flagged: result.joint_errors.contains(&k),
        })
        .collect();

    let paths: Vec<Vec<(usize, usize)>> = (0..body.joint_count()).map(|k| body.path(k)).collect();
    let keyframes = expert
        .keyframes()
        .iter()
        .map(|kf| {
            let e = kf.index - expert.start_frame();
            let (per_joint, user_frames): (Vec<f64>, Vec<usize>) = paths
                .iter()
                .enumerate()
                .map(|(k, path)| {
                    path.iter()
                        .filter(|(_, j)| *j == e)
                        .map(|&(i, _)| (ub[i].angles[k].dissimilarity(eb[e].angles[k]), i))
                        .min_by(|a, b| a.0.total_cmp(&b.0))
                        .map(|(d, i)| (d, i + user.start_frame()))
                        .expect("every warping path visits every expert frame")
                })
                .unzip();
            KeyframeReport {
                index: kf.index,
                label: kf.label.clone(),
                dissimilarity: mean(&per_joint),
                per_joint,
                user_frames,
            }
        })
        .collect();

    Ok(AnalysisReport {
        user_id: user.id().to_string(),
        expert_id: expert.id().to_string(),
        topology: topo.name().to_string(),
        thresholds: config.thresholds,
        smoothing: config.smoothing.is_some(),
        user_frames: body.n(),
        expert_frames: body.m(),
        flagged_joints: joints.iter().filter(|j| j.flagged).map(|j| j.name.clone()).collect(),
        joints,
        paddle: PaddleReport {
            cost: result.paddle_score,
            flagged: result.paddle_error,
        },
        keyframes,
        mean_body_cost: result.mean_joint_score(),
        mean_paddle_cost: result.paddle_score,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}
