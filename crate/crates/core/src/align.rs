//! Quaternion-dissimilarity dynamic time warping.
//!
//! Body sequences are aligned per joint, each joint getting its own DTW table;
//! the paddle stream gets a single table. Tables use the usual padding: a
//! virtual row and column of `+∞` with `D[0][0] = 0`, cells filled 1-based with
//! steps `(i-1, j)`, `(i, j-1)` and `(i-1, j-1)`.
//!
//! A sequence is flagged when its terminal cost divided by the user length
//! exceeds the threshold. A score exactly equal to the threshold is not flagged.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kalman::{kalman_filter, KalmanParams};
use crate::quat::{Quat, QuatError};
use crate::skeleton::{JointAngleFrame, PaddleFrame};

/// Default threshold for both joints and paddle.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Default live comparison window length.
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AlignError {
    #[error("sequence is empty")]
    EmptySequence,
    #[error("user frames have {user} joints, expert frames have {expert}")]
    JointSetMismatch { user: usize, expert: usize },
    #[error("window needs {needed} frames, {available} available")]
    WindowUnderfilled { needed: usize, available: usize },
    #[error("threshold {0} outside (0, 1)")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Quat(#[from] QuatError),
}

/// Accumulated DTW cost per joint, `(n+1) × (m+1) × joints` including padding.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyCostTensor {
    n: usize,
    m: usize,
    joints: usize,
    costs: Vec<f64>,
}

impl BodyCostTensor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn joint_count(&self) -> usize {
        self.joints
    }

    /// `D[i][j][k]` with 1-based `i, j`; row and column 0 are padding.
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.costs[(i * (self.m + 1) + j) * self.joints + k]
    }

    /// Optimal warping cost of joint `k`, `D[N][M][k]`.
    pub fn terminal(&self, k: usize) -> f64 {
        self.at(self.n, self.m, k)
    }

    pub fn terminals(&self) -> Vec<f64> {
        (0..self.joints).map(|k| self.terminal(k)).collect()
    }

    /// Warping path of joint `k` as 0-based `(user, expert)` index pairs.
    pub fn path(&self, k: usize) -> Vec<(usize, usize)> {
        backtrack(self.n, self.m, |i, j| self.at(i, j, k))
    }
}

/// Accumulated DTW cost for the paddle, `(n+1) × (m+1)` including padding.
#[derive(Debug, Clone, PartialEq)]
pub struct PaddleCostMatrix {
    n: usize,
    m: usize,
    costs: Vec<f64>,
}

impl PaddleCostMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.costs[i * (self.m + 1) + j]
    }

    pub fn terminal(&self) -> f64 {
        self.at(self.n, self.m)
    }

    pub fn path(&self) -> Vec<(usize, usize)> {
        backtrack(self.n, self.m, |i, j| self.at(i, j))
    }
}

fn backtrack(n: usize, m: usize, cost: impl Fn(usize, usize) -> f64) -> Vec<(usize, usize)> {
    let (mut i, mut j) = (n, m);
    let mut path = vec![(i - 1, j - 1)];
    while (i, j) != (1, 1) {
        let diag = cost(i - 1, j - 1);
        let up = cost(i - 1, j);
        let left = cost(i, j - 1);
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i - 1, j - 1));
    }
    path.reverse();
    path
}

/// Fills one DTW table of `(n+1) × (m+1)` cells, stride `stride`, offset `k`.
fn fill_table(
    table: &mut [f64],
    n: usize,
    m: usize,
    stride: usize,
    k: usize,
    dissimilarity: impl Fn(usize, usize) -> f64,
) {
    let idx = |i: usize, j: usize| (i * (m + 1) + j) * stride + k;
    table[idx(0, 0)] = 0.0;
    for i in 1..=n {
        for j in 1..=m {
            let best = table[idx(i - 1, j)]
                .min(table[idx(i, j - 1)])
                .min(table[idx(i - 1, j - 1)]);
            table[idx(i, j)] = dissimilarity(i - 1, j - 1) + best;
        }
    }
}

/// Per-joint DTW between two joint-angle sequences.
///
/// Inputs are used as given; [`compare`] applies the Kalman smoothing first.
pub fn dtw_body(
    user: &[JointAngleFrame],
    expert: &[JointAngleFrame],
) -> Result<BodyCostTensor, AlignError> {
    let (Some(u0), Some(e0)) = (user.first(), expert.first()) else {
        return Err(AlignError::EmptySequence);
    };
    let joints = u0.angles.len();
    for f in user {
        if f.angles.len() != joints {
            return Err(AlignError::JointSetMismatch {
                user: f.angles.len(),
                expert: e0.angles.len(),
            });
        }
    }
    for f in expert {
        if f.angles.len() != joints {
            return Err(AlignError::JointSetMismatch {
                user: joints,
                expert: f.angles.len(),
            });
        }
    }
    let (n, m) = (user.len(), expert.len());
    let mut costs = vec![f64::INFINITY; (n + 1) * (m + 1) * joints];
    for k in 0..joints {
        fill_table(&mut costs, n, m, joints, k, |i, j| {
            user[i].angles[k].dissimilarity(expert[j].angles[k])
        });
    }
    Ok(BodyCostTensor {
        n,
        m,
        joints,
        costs,
    })
}

/// DTW between two paddle orientation sequences.
pub fn dtw_paddle(
    user: &[PaddleFrame],
    expert: &[PaddleFrame],
) -> Result<PaddleCostMatrix, AlignError> {
    if user.is_empty() || expert.is_empty() {
        return Err(AlignError::EmptySequence);
    }
    let (n, m) = (user.len(), expert.len());
    let mut costs = vec![f64::INFINITY; (n + 1) * (m + 1)];
    fill_table(&mut costs, n, m, 1, 0, |i, j| {
        user[i].orientation.dissimilarity(expert[j].orientation)
    });
    Ok(PaddleCostMatrix { n, m, costs })
}

/// Error thresholds for body joints and paddle, each in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub joint: f64,
    pub paddle: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            joint: DEFAULT_THRESHOLD,
            paddle: DEFAULT_THRESHOLD,
        }
    }
}

impl Thresholds {
    pub fn new(joint: f64, paddle: f64) -> Result<Self, AlignError> {
        let t = Self { joint, paddle };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), AlignError> {
        for v in [self.joint, self.paddle] {
            if !(v > 0.0 && v < 1.0) {
                return Err(AlignError::InvalidThreshold(v));
            }
        }
        Ok(())
    }
}

/// Normalized costs and error flags from one comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    /// `D[N][M][k] / N`, indexed by comparison joint.
    pub per_joint_score: Vec<f64>,
    /// `D[N][M] / N` for the paddle.
    pub paddle_score: f64,
    /// Comparison-joint slots whose score exceeds the joint threshold, ascending.
    pub joint_errors: Vec<usize>,
    pub paddle_error: bool,
    /// User and expert frame counts compared.
    pub window_span: (usize, usize),
}

impl ComparisonResult {
    /// Mean of the per-joint scores.
    pub fn mean_joint_score(&self) -> f64 {
        if self.per_joint_score.is_empty() {
            return 0.0;
        }
        self.per_joint_score.iter().sum::<f64>() / self.per_joint_score.len() as f64
    }
}

/// Divides terminal costs by the user length and applies the thresholds.
pub fn classify(
    body: &BodyCostTensor,
    paddle: &PaddleCostMatrix,
    thresholds: &Thresholds,
) -> ComparisonResult {
    let n = body.n as f64;
    let per_joint_score: Vec<f64> = body.terminals().into_iter().map(|c| c / n).collect();
    let joint_errors = per_joint_score
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > thresholds.joint)
        .map(|(k, _)| k)
        .collect();
    let paddle_score = paddle.terminal() / paddle.n as f64;
    ComparisonResult {
        per_joint_score,
        paddle_score,
        joint_errors,
        paddle_error: paddle_score > thresholds.paddle,
        window_span: (body.n, body.m),
    }
}

/// Smoothing and thresholds used by [`compare`] and [`window_compare`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub thresholds: Thresholds,
    /// `None` compares the raw sequences.
    pub smoothing: Option<KalmanParams>,
    pub window: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            thresholds: Thresholds::default(),
            smoothing: Some(KalmanParams::default()),
            window: DEFAULT_WINDOW,
        }
    }
}

/// Applies the Kalman filter to each joint column of a sequence.
pub fn smooth_body(
    frames: &[JointAngleFrame],
    params: &KalmanParams,
) -> Result<Vec<JointAngleFrame>, AlignError> {
    let Some(first) = frames.first() else {
        return Err(AlignError::EmptySequence);
    };
    let joints = first.angles.len();
    let mut out: Vec<JointAngleFrame> = frames
        .iter()
        .map(|f| JointAngleFrame {
            timestamp: f.timestamp,
            angles: Vec::with_capacity(joints),
        })
        .collect();
    let mut column: Vec<Quat> = Vec::with_capacity(frames.len());
    for k in 0..joints {
        column.clear();
        for f in frames {
            let q = f.angles.get(k).copied().ok_or(AlignError::JointSetMismatch {
                user: f.angles.len(),
                expert: joints,
            })?;
            column.push(q);
        }
        for (o, q) in out.iter_mut().zip(kalman_filter(&column, params)?) {
            o.angles.push(q);
        }
    }
    Ok(out)
}

pub fn smooth_paddle(
    frames: &[PaddleFrame],
    params: &KalmanParams,
) -> Result<Vec<PaddleFrame>, AlignError> {
    let column: Vec<Quat> = frames.iter().map(|f| f.orientation).collect();
    let filtered = kalman_filter(&column, params)?;
    Ok(frames
        .iter()
        .zip(filtered)
        .map(|(f, orientation)| PaddleFrame {
            timestamp: f.timestamp,
            orientation,
        })
        .collect())
}

/// Full pipeline: optional smoothing of both sides, body and paddle DTW, then
/// classification.
pub fn compare(
    user_body: &[JointAngleFrame],
    expert_body: &[JointAngleFrame],
    user_paddle: &[PaddleFrame],
    expert_paddle: &[PaddleFrame],
    config: &CompareConfig,
) -> Result<ComparisonResult, AlignError> {
    config.thresholds.validate()?;
    let (body, paddle) = match &config.smoothing {
        Some(params) => (
            dtw_body(&smooth_body(user_body, params)?, &smooth_body(expert_body, params)?)?,
            dtw_paddle(
                &smooth_paddle(user_paddle, params)?,
                &smooth_paddle(expert_paddle, params)?,
            )?,
        ),
        None => (
            dtw_body(user_body, expert_body)?,
            dtw_paddle(user_paddle, expert_paddle)?,
        ),
    };
    Ok(classify(&body, &paddle, &config.thresholds))
}

/// [`compare`] restricted to windows of exactly `config.window` frames.
///
/// Longer inputs are cut to their trailing `config.window` frames.
pub fn window_compare(
    user_body: &[JointAngleFrame],
    user_paddle: &[PaddleFrame],
    expert_body: &[JointAngleFrame],
    expert_paddle: &[PaddleFrame],
    config: &CompareConfig,
) -> Result<ComparisonResult, AlignError> {
    let w = config.window;
    let available = user_body
        .len()
        .min(user_paddle.len())
        .min(expert_body.len())
        .min(expert_paddle.len());
    if w == 0 || available < w {
        return Err(AlignError::WindowUnderfilled {
            needed: w.max(1),
            available,
        });
    }
    let tail = |len: usize| len - w..len;
    compare(
        &user_body[tail(user_body.len())],
        &expert_body[tail(expert_body.len())],
        &user_paddle[tail(user_paddle.len())],
        &expert_paddle[tail(expert_paddle.len())],
        config,
    )
}
