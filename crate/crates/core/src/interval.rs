//! Interval estimates and the method tags that produce them.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::scalar::Scalar;

/// Interval construction method. Declaration order is the report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    Cqr,
    Acqr,
    CareVbias,
    CareEce,
    MarkovOnly,
    Bootstrap,
    Subsample,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Cqr,
        Method::Acqr,
        Method::CareVbias,
        Method::CareEce,
        Method::MarkovOnly,
        Method::Bootstrap,
        Method::Subsample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Cqr => "CQR",
            Method::Acqr => "ACQR",
            Method::CareVbias => "CARE_VBIAS",
            Method::CareEce => "CARE_ECE",
            Method::MarkovOnly => "MARKOV_ONLY",
            Method::Bootstrap => "BOOTSTRAP",
            Method::Subsample => "SUBSAMPLE",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Format(format!("unknown method tag {s:?}")))
    }
}

/// A point ratio with lower/upper bounds in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalEstimate<T> {
    pub r_hat: T,
    pub lower: T,
    pub upper: T,
    pub method: Method,
    /// Estimation budget; zero when the method does not use one.
    pub alpha: T,
    /// Calibration budget; zero when the method does not use one.
    pub delta: T,
    /// Set when a bound was clipped from a non-finite or out-of-range value.
    pub degenerate: bool,
}

/// Clamps `x` into `[lo, hi]`; NaN maps to `fallback`. Returns whether the
/// value changed.
pub(crate) fn clip<T: Scalar>(x: T, lo: T, hi: T, fallback: T) -> (T, bool) {
    if x.is_nan() {
        (fallback, true)
    } else if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

impl<T: Scalar> IntervalEstimate<T> {
    /// Builds an interval, clipping every bound into `[0, 1]` and widening it
    /// to contain `r_hat`. Any adjustment sets `degenerate`.
    pub fn clipped(r_hat: T, lower: T, upper: T, method: Method, alpha: T, delta: T) -> Self {
        let (zero, one) = (T::zero(), T::one());
        let (r_hat, _) = clip(r_hat, zero, one, zero);
        let (lower, lo_clip) = clip(lower, zero, r_hat, zero);
        let (upper, hi_clip) = clip(upper, r_hat, one, one);
        Self {
            r_hat,
            lower,
            upper,
            method,
            alpha,
            delta,
            degenerate: lo_clip || hi_clip,
        }
    }

    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    /// Closed-interval membership.
    pub fn contains(&self, r: T) -> bool {
        self.lower <= r && r <= self.upper
    }

    pub(crate) fn flag_degenerate(mut self, flag: bool) -> Self {
        self.degenerate |= flag;
        self
    }
}
