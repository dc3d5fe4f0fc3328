//! Order-statistic quantiles.

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// Products like 25 * 0.84 land a few ulps off the integer they denote; snap
// those before taking the ceiling so the rank is not bumped by rounding noise.
const RANK_SNAP: f64 = 1e-9;

fn snapped_ceil(x: f64) -> usize {
    let nearest = x.round();
    if (x - nearest).abs() <= RANK_SNAP * x.abs().max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}

fn check_values<T: Scalar>(values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidInput("NaN in quantile input".into()));
    }
    Ok(())
}

fn check_level<T: Scalar>(level: T) -> Result<f64> {
    let l = level.to_f64().unwrap_or(f64::NAN);
    if !(l > 0.0 && l < 1.0) {
        return Err(Error::BadConfidenceBudget(format!(
            "quantile level {l} outside (0, 1)"
        )));
    }
    Ok(l)
}

fn kth_smallest<T: Scalar>(values: &[T], k: usize) -> T {
    let mut v = values.to_vec();
    let (_, kth, _) =
        v.select_nth_unstable_by(k - 1, |a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    *kth
}

/// Rank used by [`conformal_quantile`]: `ceil((n + 1) * level)`.
pub fn conformal_rank(n: usize, level: f64) -> usize {
    snapped_ceil((n as f64 + 1.0) * level)
}

/// The `ceil((n+1) * level)`-th smallest value, or `+inf` when that rank
/// exceeds `n`. The infinite sentinel tells callers to emit a full-range
/// interval.
pub fn conformal_quantile<T: Scalar>(values: &[T], level: T) -> Result<T> {
    check_values(values)?;
    let l = check_level(level)?;
    let k = conformal_rank(values.len(), l).max(1);
    if k > values.len() {
        return Ok(T::infinity());
    }
    Ok(kth_smallest(values, k))
}

/// Nearest-rank empirical quantile, `ceil(n * level)`-th smallest clamped to
/// `[1, n]`. No finite-sample correction.
pub fn nearest_rank_quantile<T: Scalar>(values: &[T], level: T) -> Result<T> {
    check_values(values)?;
    let l = level.to_f64().unwrap_or(f64::NAN);
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::InvalidInput(format!("quantile level {l} outside [0, 1]")));
    }
    let k = snapped_ceil(values.len() as f64 * l).clamp(1, values.len());
    Ok(kth_smallest(values, k))
}
