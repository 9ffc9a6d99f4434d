//! Resampling of the high-rate paddle orientation stream onto pose timestamps.

use alloc::vec::Vec;

use crate::skeleton::PaddleFrame;

/// Orientation at `t`, slerped between the two samples bracketing it.
///
/// Outside the covered span the nearest edge sample is used. `samples` must be
/// sorted by timestamp; returns `None` only when it is empty.
pub fn sample_at(samples: &[PaddleFrame], t: f64) -> Option<PaddleFrame> {
    let first = samples.first()?;
    let last = samples.last()?;
    let orientation = if t <= first.timestamp {
        first.orientation
    } else if t >= last.timestamp {
        last.orientation
    } else {
        // first index with timestamp >= t; always in 1..len here
        let hi = samples.partition_point(|s| s.timestamp < t);
        let (a, b) = (samples[hi - 1], samples[hi]);
        if b.timestamp == t {
            b.orientation
        } else {
            let u = (t - a.timestamp) / (b.timestamp - a.timestamp);
            a.orientation.slerp(b.orientation, u)
        }
    };
    Some(PaddleFrame {
        timestamp: t,
        orientation,
    })
}

/// `s` with a unit orientation; `None` when it is non-finite or degenerate.
pub fn normalized(s: &PaddleFrame) -> Option<PaddleFrame> {
    if !s.orientation.is_finite() {
        return None;
    }
    let orientation = s.orientation.normalized().ok()?;
    Some(PaddleFrame {
        timestamp: s.timestamp,
        orientation,
    })
}

/// Resamples `samples` at each of `timestamps`.
pub fn resample(samples: &[PaddleFrame], timestamps: &[f64]) -> Option<Vec<PaddleFrame>> {
    timestamps.iter().map(|&t| sample_at(samples, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quat::{Quat, Vec3};
    use core::f64::consts::PI;

    fn frame(t: f64, angle: f64) -> PaddleFrame {
        PaddleFrame {
            timestamp: t,
            orientation: Quat::from_axis_angle(Vec3::Z, angle),
        }
    }

    #[test]
    fn interpolates_between_brackets() {
        let s = [frame(0.0, 0.0), frame(4.0, PI / 2.0), frame(8.0, PI)];
        let mid = sample_at(&s, 2.0).unwrap();
        assert!(mid.orientation.dissimilarity(Quat::from_axis_angle(Vec3::Z, PI / 4.0)) < 1e-12);
        assert_eq!(sample_at(&s, 4.0).unwrap().orientation, s[1].orientation);
    }

    #[test]
    fn clamps_at_edges() {
        let s = [frame(10.0, 0.1), frame(14.0, 0.2)];
        assert_eq!(sample_at(&s, 0.0).unwrap().orientation, s[0].orientation);
        assert_eq!(sample_at(&s, 99.0).unwrap().orientation, s[1].orientation);
        assert_eq!(sample_at(&s, 99.0).unwrap().timestamp, 99.0);
        assert!(sample_at(&[], 1.0).is_none());
    }

    #[test]
    fn resample_cardinality() {
        let s: Vec<PaddleFrame> = (0..1000).map(|i| frame(i as f64 * 4.0, i as f64 * 0.001)).collect();
        let ts: Vec<f64> = (0..120).map(|i| i as f64 * 33.3).collect();
        assert_eq!(resample(&s, &ts).unwrap().len(), 120);
    }
}
