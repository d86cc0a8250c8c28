//! Nearest-rank percentile thresholds on reconstruction error.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::imu::IntakeState;

pub const MIN_CALIBRATION: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    pub percentile: f64,
    pub tau: f64,
    pub calibration_size: usize,
}

/// 1-based nearest rank `ceil(p/100 * n)`, clamped to `[1, n]`.
pub fn nearest_rank(percentile: f64, n: usize) -> usize {
    // the epsilon keeps exact products such as 0.8 * 10 from rounding up
    ((percentile / 100.0 * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// `tau` is the nearest-rank percentile of `errors`: sort ascending and take
/// the `ceil(p/100 * n)`-th value.
pub fn calibrate(errors: &[f64], percentile: f64) -> Result<ThresholdCalibration> {
    if !(percentile > 0.0 && percentile <= 100.0) {
        return Err(CoreError::InvalidArgument(format!("percentile {percentile} outside (0, 100]")));
    }
    if errors.len() < MIN_CALIBRATION {
        return Err(CoreError::TooFewSamples {
            needed: MIN_CALIBRATION,
            got: errors.len(),
        });
    }
    if errors.iter().any(|e| !(e.is_finite() && *e >= 0.0)) {
        return Err(CoreError::InvalidArgument("calibration errors must be finite and nonnegative".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(ThresholdCalibration {
        percentile,
        tau: sorted[nearest_rank(percentile, sorted.len()) - 1],
        calibration_size: errors.len(),
    })
}

/// Eating iff the error does not exceed `tau`.
pub fn decide(error: f64, cal: &ThresholdCalibration) -> IntakeState {
    if error <= cal.tau {
        IntakeState::Eating
    } else {
        IntakeState::NonEating
    }
}
