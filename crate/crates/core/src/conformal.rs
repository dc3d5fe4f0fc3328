//! Split-conformal baselines on the ratio residual: CQR and its adaptive
//! variant ACQR with tumor-size uncertainty measures.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{IntervalEstimate, Method};
use crate::quantile::conformal_quantile;
use crate::scalar::Scalar;
use crate::volume::{soft_volume, Channel, InstanceVolume};

pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum UncertaintyKind {
    /// `u = 1`; ACQR reduces to CQR.
    Unit,
    /// `u = lambda * (1 - V_T / (V_T,max + eps))` with `lambda` fitted so the
    /// widest interval spans the whole ratio range.
    SizeScaled,
    /// `u = 1 - V_T / (V_T,max + eps)`.
    SizeNoLambda,
    /// `u = 1 - V_T / (V / 8)` for a known whole-volume size `V`.
    VoxelFraction,
}

impl fmt::Display for UncertaintyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UncertaintyKind::Unit => "unit",
            UncertaintyKind::SizeScaled => "size_scaled",
            UncertaintyKind::SizeNoLambda => "size_no_lambda",
            UncertaintyKind::VoxelFraction => "voxel_fraction",
        })
    }
}

impl FromStr for UncertaintyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "unit" => Ok(UncertaintyKind::Unit),
            "size_scaled" | "scaled" => Ok(UncertaintyKind::SizeScaled),
            "size_no_lambda" | "nolambda" => Ok(UncertaintyKind::SizeNoLambda),
            "voxel_fraction" | "voxel" => Ok(UncertaintyKind::VoxelFraction),
            other => Err(Error::Config(format!("unknown uncertainty measure {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UncertaintySpec<T> {
    pub kind: UncertaintyKind,
    /// Largest tumor soft volume expected; used by the size kinds.
    pub v_t_max: T,
    /// Whole-volume size; used by [`UncertaintyKind::VoxelFraction`].
    pub voxel_volume: T,
    /// Floor for `u` and the stabiliser in the size ratio.
    pub epsilon: T,
}

impl<T: Scalar> UncertaintySpec<T> {
    pub fn new(kind: UncertaintyKind, v_t_max: T, voxel_volume: T, epsilon: T) -> Result<Self> {
        let spec = Self { kind, v_t_max, voxel_volume, epsilon };
        spec.validate()?;
        Ok(spec)
    }

    pub fn unit() -> Self {
        Self {
            kind: UncertaintyKind::Unit,
            v_t_max: T::zero(),
            voxel_volume: T::zero(),
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > T::zero()) {
            return Err(Error::Config("uncertainty epsilon must be > 0".into()));
        }
        let (name, value) = match self.kind {
            UncertaintyKind::Unit => return Ok(()),
            UncertaintyKind::SizeScaled | UncertaintyKind::SizeNoLambda => ("v_t_max", self.v_t_max),
            UncertaintyKind::VoxelFraction => ("voxel_volume", self.voxel_volume),
        };
        if !(value > T::zero() && value.is_finite()) {
            return Err(Error::Config(format!("{name} must be > 0 for {} uncertainty", self.kind)));
        }
        Ok(())
    }
}

/// `q` such that `|r_gt - r_hat| <= q` for a fraction `1 - delta` of
/// exchangeable cases. `+inf` when the validation set is too small.
pub fn fit_cqr<T: Scalar>(val_pairs: &[(T, T)], delta: T) -> Result<T> {
    if val_pairs.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let residuals: Vec<T> = val_pairs.iter().map(|&(gt, hat)| (gt - hat).abs()).collect();
    conformal_quantile(&residuals, T::one() - delta)
}

pub fn cqr_interval<T: Scalar>(r_hat: T, q_residual: T, delta: T) -> IntervalEstimate<T> {
    IntervalEstimate::clipped(r_hat, r_hat - q_residual, r_hat + q_residual, Method::Cqr, T::zero(), delta)
}

/// `u(x)` for the given spec, floored at `spec.epsilon`.
///
/// `q_score_for_lambda` sets `lambda = 1 / (2 q)` for the size-scaled kind;
/// it is ignored by the others.
pub fn uncertainty_measure<T: Scalar>(
    v: &InstanceVolume<T>,
    spec: &UncertaintySpec<T>,
    q_score_for_lambda: Option<T>,
) -> Result<T> {
    let lambda = match spec.kind {
        UncertaintyKind::SizeScaled => {
            let q = q_score_for_lambda.ok_or_else(|| {
                Error::InvalidInput("size-scaled uncertainty needs the fitted score quantile".into())
            })?;
            lambda_from_quantile(q).0
        }
        _ => T::one(),
    };
    measure_with_lambda(v, spec, lambda)
}

fn measure_with_lambda<T: Scalar>(v: &InstanceVolume<T>, spec: &UncertaintySpec<T>, lambda: T) -> Result<T> {
    spec.validate()?;
    let v_t = soft_volume(v, Channel::B);
    let raw = match spec.kind {
        UncertaintyKind::Unit => T::one(),
        UncertaintyKind::SizeScaled => lambda * (T::one() - v_t / (spec.v_t_max + spec.epsilon)),
        UncertaintyKind::SizeNoLambda => T::one() - v_t / (spec.v_t_max + spec.epsilon),
        UncertaintyKind::VoxelFraction => T::one() - v_t / (spec.voxel_volume / T::lit(8.0)),
    };
    Ok(if raw > spec.epsilon { raw } else { spec.epsilon })
}

/// `(lambda, fell_back)`; a zero or infinite quantile cannot set the scale,
/// so `lambda` falls back to 1.
fn lambda_from_quantile<T: Scalar>(q: T) -> (T, bool) {
    if q > T::zero() && q.is_finite() {
        (T::one() / (T::lit(2.0) * q), false)
    } else {
        (T::one(), true)
    }
}

/// Fitted ACQR state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcqrFit<T> {
    pub spec: UncertaintySpec<T>,
    pub q_score: T,
    pub lambda: T,
    /// Set when `lambda` could not be derived from the score quantile.
    pub lambda_fallback: bool,
    pub delta: T,
}

impl<T: Scalar> AcqrFit<T> {
    pub fn measure(&self, v: &InstanceVolume<T>) -> Result<T> {
        measure_with_lambda(v, &self.spec, self.lambda)
    }

    /// ACQR interval for `v`; with the unit measure this is the CQR interval
    /// and carries the CQR tag.
    pub fn interval(&self, v: &InstanceVolume<T>, r_hat: T) -> Result<IntervalEstimate<T>> {
        if self.spec.kind == UncertaintyKind::Unit {
            return Ok(cqr_interval(r_hat, self.q_score, self.delta));
        }
        let u = self.measure(v)?;
        Ok(acqr_interval(r_hat, u, self.q_score, self.delta))
    }
}

/// Fits the ACQR score quantile on `(r_gt, r_hat, volume)` triples.
///
/// Scores are `|r_gt - r_hat| / u` with `lambda = 1`. For the size-scaled
/// measure `lambda` is then set to `1 / (2 q)`, keeping `q`, so the widest
/// possible interval `2 * lambda * q` is exactly 1.
pub fn fit_acqr<T: Scalar>(
    val: &[(T, T, &InstanceVolume<T>)],
    delta: T,
    spec: &UncertaintySpec<T>,
) -> Result<AcqrFit<T>> {
    if val.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    spec.validate()?;
    let scores = val
        .iter()
        .map(|&(gt, hat, v)| Ok((gt - hat).abs() / measure_with_lambda(v, spec, T::one())?))
        .collect::<Result<Vec<T>>>()?;
    let q_raw = conformal_quantile(&scores, T::one() - delta)?;
    let (lambda, lambda_fallback) = match spec.kind {
        UncertaintyKind::SizeScaled => lambda_from_quantile(q_raw),
        _ => (T::one(), false),
    };
    if lambda_fallback {
        log::warn!("ACQR score quantile {q_raw} cannot set lambda; using lambda = 1");
    }
    Ok(AcqrFit { spec: *spec, q_score: q_raw, lambda, lambda_fallback, delta })
}

pub fn acqr_interval<T: Scalar>(r_hat: T, u: T, q_score: T, delta: T) -> IntervalEstimate<T> {
    let half = if q_score == T::zero() { T::zero() } else { u * q_score };
    IntervalEstimate::clipped(r_hat, r_hat - half, r_hat + half, Method::Acqr, T::zero(), delta)
}
