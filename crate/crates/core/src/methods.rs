//! One entry point over every interval method.

use crate::baselines::{bootstrap_interval, subsample_interval, ResampleConfig};
use crate::care::care_interval;
use crate::conformal::cqr_interval;
use crate::error::{Error, Result};
use crate::estimators::{markov_interval, point_ratio, ratio_moments, squared_error_estimate};
use crate::interval::IntervalEstimate;
use crate::profile::CalibrationProfile;
use crate::rng::{derive_seed, hash_id};
use crate::scalar::Scalar;
use crate::volume::InstanceVolume;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MethodSpec<T> {
    Cqr,
    /// ACQR with the profile's uncertainty measure.
    Acqr,
    /// ACQR with the unit measure; reproduces CQR.
    AcqrUnit,
    /// Composite interval with the profile's calibration source and split.
    Care,
    /// Markov interval alone; `alpha` defaults to the profile's
    /// `1 - confidence`.
    Markov { alpha: Option<T> },
    Bootstrap(ResampleConfig<T>),
    Subsample { frac: T, cfg: ResampleConfig<T> },
}

impl<T: Scalar> MethodSpec<T> {
    pub fn needs_profile(&self) -> bool {
        match self {
            MethodSpec::Cqr | MethodSpec::Acqr | MethodSpec::AcqrUnit | MethodSpec::Care => true,
            MethodSpec::Markov { alpha } => alpha.is_none(),
            MethodSpec::Bootstrap(_) | MethodSpec::Subsample { .. } => false,
        }
    }
}

fn need<T>(profile: Option<&CalibrationProfile<T>>) -> Result<&CalibrationProfile<T>> {
    profile.ok_or_else(|| Error::InvalidInput("method requires a fitted profile".into()))
}

/// Resampling streams are keyed by instance id so results do not depend on
/// processing order.
fn keyed<T: Scalar>(cfg: &ResampleConfig<T>, v: &InstanceVolume<T>) -> ResampleConfig<T> {
    ResampleConfig { seed: derive_seed(cfg.seed, hash_id(v.id())), ..*cfg }
}

pub fn estimate<T: Scalar>(
    v: &InstanceVolume<T>,
    method: &MethodSpec<T>,
    profile: Option<&CalibrationProfile<T>>,
) -> Result<IntervalEstimate<T>> {
    match method {
        MethodSpec::Cqr => {
            let p = need(profile)?;
            Ok(cqr_interval(point_ratio(v)?, p.q_residual, p.delta_conformal))
        }
        MethodSpec::Acqr => need(profile)?.acqr_fit().interval(v, point_ratio(v)?),
        MethodSpec::AcqrUnit => need(profile)?.acqr_unit_fit().interval(v, point_ratio(v)?),
        MethodSpec::Care => {
            let p = need(profile)?;
            care_interval(v, p, &p.split()?)
        }
        MethodSpec::Markov { alpha } => {
            let alpha = match alpha {
                Some(a) => *a,
                None => need(profile)?.delta_conformal,
            };
            let se = squared_error_estimate(&ratio_moments(v)?)?;
            markov_interval(point_ratio(v)?, se, alpha)
        }
        MethodSpec::Bootstrap(cfg) => bootstrap_interval(v, &keyed(cfg, v)),
        MethodSpec::Subsample { frac, cfg } => subsample_interval(v, *frac, &keyed(cfg, v)),
    }
}
