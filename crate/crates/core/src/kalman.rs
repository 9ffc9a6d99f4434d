//! Kalman smoothing of quaternion sequences.
//!
//! Each of the four quaternion components runs through its own scalar
//! constant-position Kalman filter. Inputs are first made sign-continuous so
//! the component-space filter never averages `q` with `-q`; outputs are
//! renormalized and canonicalized.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::quat::{Quat, QuatError};

/// Noise model for [`kalman_filter`]. All variances must be strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KalmanParams {
    /// Variance added to each component per step.
    pub process_noise: f64,
    /// Variance of each measured component.
    pub measurement_noise: f64,
    /// Variance of the initial estimate.
    pub initial_covariance: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_noise: 1e-3,
            measurement_noise: 1e-2,
            initial_covariance: 1.0,
        }
    }
}

impl KalmanParams {
    pub fn new(
        process_noise: f64,
        measurement_noise: f64,
        initial_covariance: f64,
    ) -> Result<Self, QuatError> {
        let p = Self {
            process_noise,
            measurement_noise,
            initial_covariance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), QuatError> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.process_noise) && ok(self.measurement_noise) && ok(self.initial_covariance) {
            Ok(())
        } else {
            Err(QuatError::InvalidKalmanParams)
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ScalarFilter {
    estimate: f64,
    covariance: f64,
}

impl ScalarFilter {
    fn step(&mut self, measurement: f64, params: &KalmanParams) -> f64 {
        let predicted = self.covariance + params.process_noise;
        let gain = predicted / (predicted + params.measurement_noise);
        self.estimate += gain * (measurement - self.estimate);
        self.covariance = (1.0 - gain) * predicted;
        self.estimate
    }
}

/// Flips elements so consecutive quaternions never have a negative inner
/// product. The first element is canonicalized.
pub fn enforce_sign_continuity(seq: &[Quat]) -> Vec<Quat> {
    let mut out: Vec<Quat> = Vec::with_capacity(seq.len());
    for &q in seq {
        let q = match out.last() {
            None => q.canonical(),
            Some(prev) if prev.dot(q) < 0.0 => -q,
            Some(_) => q,
        };
        out.push(q);
    }
    out
}

/// Smooths a sequence of unit quaternions.
///
/// The output has the same length, every element is unit-norm and canonical,
/// and the first element equals the canonicalized first input.
pub fn kalman_filter(seq: &[Quat], params: &KalmanParams) -> Result<Vec<Quat>, QuatError> {
    params.validate()?;
    let continuous = enforce_sign_continuity(seq);
    let first = *continuous.first().ok_or(QuatError::EmptySequence)?;

    let mut filters = [first.w, first.x, first.y, first.z].map(|c| ScalarFilter {
        estimate: c,
        covariance: params.initial_covariance,
    });

    let mut out = Vec::with_capacity(seq.len());
    out.push(first);
    for q in &continuous[1..] {
        let z = [q.w, q.x, q.y, q.z];
        let mut s = [0.0; 4];
        for ((slot, f), m) in s.iter_mut().zip(filters.iter_mut()).zip(z) {
            *slot = f.step(m, params);
        }
        // a filtered state that collapses to zero carries no direction; keep the measurement
        let smoothed = Quat::from(s).normalized().unwrap_or(*q);
        out.push(smoothed.canonical());
    }
    Ok(out)
}
