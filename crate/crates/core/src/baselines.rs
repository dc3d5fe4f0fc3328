//! Resampling baselines: pixel bootstrap and subsampling.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::point_ratio;
use crate::interval::{IntervalEstimate, Method};
use crate::quantile::nearest_rank_quantile;
use crate::rng::stream;
use crate::scalar::Scalar;
use crate::volume::InstanceVolume;

pub const DEFAULT_REPS: usize = 100;
pub const DEFAULT_LO_Q: f64 = 0.16;
pub const DEFAULT_HI_Q: f64 = 0.84;
pub const DEFAULT_FRAC: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Resample<T> {
    /// `N` pixels drawn with replacement.
    Bootstrap,
    /// `floor(frac * N)` distinct pixels.
    Subsample { frac: T },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleConfig<T> {
    pub reps: usize,
    pub lo_q: T,
    pub hi_q: T,
    pub seed: u64,
}

impl<T: Scalar> Default for ResampleConfig<T> {
    fn default() -> Self {
        Self { reps: DEFAULT_REPS, lo_q: T::lit(DEFAULT_LO_Q), hi_q: T::lit(DEFAULT_HI_Q), seed: 0 }
    }
}

fn subsample_size<T: Scalar>(n: usize, frac: T) -> Result<usize> {
    if !(frac > T::zero() && frac <= T::one()) {
        return Err(Error::InvalidInput(format!("subsample fraction {frac} outside (0, 1]")));
    }
    let m = (frac * T::from_count(n)).floor().to_usize().unwrap_or(0);
    if m < 1 {
        return Err(Error::InvalidInput(format!("fraction {frac} of {n} pixels is below one pixel")));
    }
    Ok(m)
}

/// Ratios of the valid resamples, in resample order. Resamples whose
/// denominator is zero are skipped; at least half must be valid.
pub fn resample_ratios<T: Scalar>(
    v: &InstanceVolume<T>,
    scheme: Resample<T>,
    reps: usize,
    seed: u64,
) -> Result<Vec<T>> {
    if reps < 2 {
        return Err(Error::InvalidInput(format!("need at least 2 resamples, got {reps}")));
    }
    let n = v.n_pixels();
    let size = match scheme {
        Resample::Bootstrap => n,
        Resample::Subsample { frac } => subsample_size(n, frac)?,
    };
    let (g_a, g_b) = (v.g_a(), v.g_b());
    let ratios: Vec<Option<T>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(seed, rep as u64);
            let (mut sa, mut sb) = (T::zero(), T::zero());
            match scheme {
                Resample::Bootstrap => {
                    for _ in 0..size {
                        let i = rng.random_range(0..n);
                        sa = sa + g_a[i];
                        sb = sb + g_b[i];
                    }
                }
                Resample::Subsample { .. } => {
                    for i in sample(&mut rng, n, size) {
                        sa = sa + g_a[i];
                        sb = sb + g_b[i];
                    }
                }
            }
            (sb > T::zero()).then(|| (sa / sb).min(T::one()))
        })
        .collect();
    let valid: Vec<T> = ratios.into_iter().flatten().collect();
    if valid.len() < reps.div_ceil(2) {
        return Err(Error::EmptyDenominator);
    }
    Ok(valid)
}

fn resample_interval<T: Scalar>(
    v: &InstanceVolume<T>,
    scheme: Resample<T>,
    cfg: &ResampleConfig<T>,
    method: Method,
) -> Result<IntervalEstimate<T>> {
    if !(cfg.lo_q >= T::zero() && cfg.lo_q <= cfg.hi_q && cfg.hi_q <= T::one()) {
        return Err(Error::InvalidInput(format!("bad quantile pair ({}, {})", cfg.lo_q, cfg.hi_q)));
    }
    let r_hat = point_ratio(v)?;
    let ratios = resample_ratios(v, scheme, cfg.reps, cfg.seed)?;
    let lo = nearest_rank_quantile(&ratios, cfg.lo_q)?;
    let hi = nearest_rank_quantile(&ratios, cfg.hi_q)?;
    Ok(IntervalEstimate::clipped(r_hat, lo, hi, method, T::zero(), T::zero()))
}

/// `[lo_q, hi_q]` quantiles of the ratio over bootstrap resamples.
pub fn bootstrap_interval<T: Scalar>(v: &InstanceVolume<T>, cfg: &ResampleConfig<T>) -> Result<IntervalEstimate<T>> {
    resample_interval(v, Resample::Bootstrap, cfg, Method::Bootstrap)
}

/// `[lo_q, hi_q]` quantiles of the ratio over subsamples of `floor(frac * N)`
/// pixels.
pub fn subsample_interval<T: Scalar>(
    v: &InstanceVolume<T>,
    frac: T,
    cfg: &ResampleConfig<T>,
) -> Result<IntervalEstimate<T>> {
    resample_interval(v, Resample::Subsample { frac }, cfg, Method::Subsample)
}
