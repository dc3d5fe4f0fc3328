//! Composite intervals: a Markov estimation bound plus a calibration bound
//! under an `(alpha, delta)` budget, the split search, and the fitting
//! entry point that produces a [`CalibrationProfile`].

use std::fmt;

use rayon::prelude::*;

use crate::calibration::{bounds_from_sums, validation_statistics, CalibrationSource};
use crate::conformal::{fit_acqr, fit_cqr, UncertaintyKind, UncertaintySpec, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::estimators::{labeled_ratio, markov_half_width, ratio_moments, squared_error_estimate};
use crate::interval::{IntervalEstimate, Method};
use crate::profile::{BudgetSplit, CalibrationProfile};
use crate::quantile::conformal_quantile;
use crate::scalar::{exact_sum, Scalar};
use crate::volume::{soft_volume, Channel, InstanceVolume};

pub const DEFAULT_GRID_STEP: f64 = 0.02;

/// Per-instance quantities the composite interval needs, computed once.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstanceSummary<T> {
    pub n_pixels: usize,
    pub sum_a: T,
    pub sum_b: T,
    pub r_hat: T,
    /// Squared-error estimate of `r_hat`.
    pub se: T,
}

impl<T: Scalar> InstanceSummary<T> {
    pub fn new(v: &InstanceVolume<T>) -> Result<Self> {
        let sum_b = exact_sum(v.g_b());
        if sum_b <= T::zero() {
            return Err(Error::EmptyDenominator);
        }
        let sum_a = exact_sum(v.g_a());
        let se = squared_error_estimate(&ratio_moments(v)?)?;
        let r_hat = crate::interval::clip(sum_a / sum_b, T::zero(), T::one(), T::zero()).0;
        Ok(Self { n_pixels: v.n_pixels(), sum_a, sum_b, r_hat, se })
    }

    /// Composite interval for calibration quantiles `(q_a, q_b)`.
    pub fn care(&self, q_a: T, q_b: T, source: CalibrationSource, split: &BudgetSplit<T>) -> Result<IntervalEstimate<T>> {
        let beta = markov_half_width(self.se, split.alpha)?;
        let cal = bounds_from_sums(self.n_pixels, self.sum_a, self.sum_b, q_a, q_b)?;
        let method = match source {
            CalibrationSource::Vbias => Method::CareVbias,
            CalibrationSource::Ece => Method::CareEce,
        };
        Ok(IntervalEstimate::clipped(
            self.r_hat,
            self.r_hat - cal.eps_l - beta,
            self.r_hat + cal.eps_u + beta,
            method,
            split.alpha,
            split.delta,
        )
        .flag_degenerate(cal.degenerate))
    }
}

fn check_profile<T: Scalar>(profile: &CalibrationProfile<T>, split: &BudgetSplit<T>) -> Result<()> {
    if (profile.delta - split.delta).abs() > T::lit(1e-12) {
        return Err(Error::ProfileMismatch(format!(
            "profile fitted at delta {} but split has delta {}",
            profile.delta, split.delta
        )));
    }
    Ok(())
}

/// `[r_hat - eps_l - beta, r_hat + eps_u + beta]` clipped to `[0, 1]`, where
/// `beta` is the Markov half-width at `split.alpha` and `eps` come from the
/// profile's calibration quantiles.
pub fn care_interval<T: Scalar>(
    v: &InstanceVolume<T>,
    profile: &CalibrationProfile<T>,
    split: &BudgetSplit<T>,
) -> Result<IntervalEstimate<T>> {
    check_profile(profile, split)?;
    InstanceSummary::new(v)?.care(profile.q_a, profile.q_b, profile.source, split)
}

/// One evaluated split of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCandidate<T> {
    pub split: BudgetSplit<T>,
    pub q_a: T,
    pub q_b: T,
    pub coverage: T,
    pub mean_width: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridOutcome<T> {
    pub best: GridCandidate<T>,
    /// False when no candidate reached the target coverage; `best` is then
    /// the candidate with the highest coverage.
    pub qualified: bool,
    pub candidates: Vec<GridCandidate<T>>,
}

/// Splits `alpha = k * step` for `k = 1 .. m - 1` with `m * step = 1 - C`.
pub fn grid_splits<T: Scalar>(confidence: T, grid_step: T) -> Result<Vec<BudgetSplit<T>>> {
    let budget = T::one() - confidence;
    if !(grid_step > T::zero() && budget > T::zero() && budget < T::one()) {
        return Err(Error::BadConfidenceBudget(format!(
            "grid step {grid_step} and confidence {confidence} do not define a grid"
        )));
    }
    let ratio = (budget / grid_step).to_f64().unwrap_or(f64::NAN);
    let m = ratio.round();
    if !((ratio - m).abs() < 1e-6 && m >= 2.0) {
        return Err(Error::BadConfidenceBudget(format!(
            "grid step {grid_step} must divide 1 - confidence = {budget} into at least two parts"
        )));
    }
    (1..m as usize)
        .map(|k| BudgetSplit::from_alpha(T::from_count(k) * grid_step, confidence))
        .collect()
}

/// Validation instances usable for coverage: summary, labeled ratio and
/// position in `val`.
fn labeled_summaries<T: Scalar>(val: &[InstanceVolume<T>]) -> Result<Vec<(InstanceSummary<T>, T, usize)>> {
    if val.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    let rows: Vec<Option<(InstanceSummary<T>, T, usize)>> = val
        .par_iter()
        .enumerate()
        .map(|(i, v)| {
            let r_gt = match labeled_ratio(v) {
                Ok(r) => r,
                Err(Error::EmptyDenominator) => return Ok(None),
                Err(e) => return Err(e),
            };
            match InstanceSummary::new(v) {
                Ok(s) => Ok(Some((s, r_gt, i))),
                Err(Error::EmptyDenominator | Error::TooFewPixels { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    let skipped = rows.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} validation instance(s) without a defined ratio skipped for coverage");
    }
    let rows: Vec<_> = rows.into_iter().flatten().collect();
    if rows.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    Ok(rows)
}

fn evaluate_split<T: Scalar>(
    rows: &[(InstanceSummary<T>, T, usize)],
    stats: &(Vec<T>, Vec<T>),
    split: BudgetSplit<T>,
    source: CalibrationSource,
) -> Result<GridCandidate<T>> {
    let level = T::one() - split.delta / T::lit(2.0);
    let q_a = conformal_quantile(&stats.0, level)?;
    let q_b = conformal_quantile(&stats.1, level)?;
    let mut covered = 0usize;
    let mut widths = Vec::with_capacity(rows.len());
    for (s, r_gt, _) in rows {
        let iv = s.care(q_a, q_b, source, &split)?;
        covered += iv.contains(*r_gt) as usize;
        widths.push(iv.width());
    }
    let n = T::from_count(rows.len());
    Ok(GridCandidate {
        split,
        q_a,
        q_b,
        coverage: T::from_count(covered) / n,
        mean_width: exact_sum(&widths) / n,
    })
}

fn search<T: Scalar>(
    rows: &[(InstanceSummary<T>, T, usize)],
    stats: &(Vec<T>, Vec<T>),
    splits: Vec<BudgetSplit<T>>,
    source: CalibrationSource,
) -> Result<GridOutcome<T>> {
    let confidence = splits[0].confidence;
    let candidates = splits
        .into_par_iter()
        .map(|s| evaluate_split(rows, stats, s, source))
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&GridCandidate<T>> = None;
    for c in candidates.iter().filter(|c| c.coverage >= confidence) {
        if best.is_none_or(|b| c.mean_width < b.mean_width) {
            best = Some(c);
        }
    }
    let qualified = best.is_some();
    let best = match best {
        Some(b) => *b,
        None => {
            let mut top = &candidates[0];
            for c in &candidates[1..] {
                if c.coverage > top.coverage {
                    top = c;
                }
            }
            log::warn!(
                "no split reached coverage {confidence} on validation; using the best at {}",
                top.coverage
            );
            *top
        }
    };
    Ok(GridOutcome { best, qualified, candidates })
}

/// Searches `alpha + delta = 1 - confidence` in steps of `grid_step`, refitting
/// the calibration quantiles for every split. Returns the narrowest split
/// whose validation coverage reaches `confidence`.
pub fn grid_search<T: Scalar>(
    val: &[InstanceVolume<T>],
    confidence: T,
    grid_step: T,
    source: CalibrationSource,
    n_bins: usize,
) -> Result<GridOutcome<T>> {
    let splits = grid_splits(confidence, grid_step)?;
    let stats = validation_statistics(val, source, n_bins)?;
    let rows = labeled_summaries(val)?;
    search(&rows, &stats, splits, source)
}

/// Options for [`fit_profile`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileOptions<T> {
    pub confidence: T,
    pub source: CalibrationSource,
    pub n_bins: usize,
    pub grid_step: T,
    /// Skips the grid search and uses this estimation budget.
    pub alpha: Option<T>,
    pub uncertainty: UncertaintyKind,
    /// Defaults to the largest predicted tumor volume on validation.
    pub v_t_max: Option<T>,
    pub voxel_volume: T,
    pub epsilon: T,
}

impl<T: Scalar> ProfileOptions<T> {
    pub fn new(confidence: T, source: CalibrationSource) -> Self {
        Self {
            confidence,
            source,
            n_bins: crate::calibration::DEFAULT_BINS,
            grid_step: T::lit(DEFAULT_GRID_STEP),
            alpha: None,
            uncertainty: UncertaintyKind::SizeScaled,
            v_t_max: None,
            voxel_volume: T::zero(),
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }
}

/// Fits the calibration quantiles (at the searched or given split), the CQR
/// residual quantile and the ACQR score quantile on `val`.
pub fn fit_profile<T: Scalar>(
    val: &[InstanceVolume<T>],
    opts: &ProfileOptions<T>,
) -> Result<(CalibrationProfile<T>, GridOutcome<T>)> {
    let stats = validation_statistics(val, opts.source, opts.n_bins)?;
    let rows = labeled_summaries(val)?;
    let splits = match opts.alpha {
        Some(a) => vec![BudgetSplit::from_alpha(a, opts.confidence)?],
        None => grid_splits(opts.confidence, opts.grid_step)?,
    };
    let outcome = search(&rows, &stats, splits, opts.source)?;

    let delta_conformal = T::one() - opts.confidence;
    let pairs: Vec<(T, T)> = rows.iter().map(|(s, gt, _)| (*gt, s.r_hat)).collect();
    let q_residual = fit_cqr(&pairs, delta_conformal)?;

    let v_t_max = match opts.v_t_max {
        Some(v) => v,
        None => val
            .iter()
            .map(|v| soft_volume(v, Channel::B))
            .fold(T::zero(), |a, b| a.max(b)),
    };
    let spec = UncertaintySpec::new(opts.uncertainty, v_t_max, opts.voxel_volume, opts.epsilon)?;
    let triples: Vec<(T, T, &InstanceVolume<T>)> =
        rows.iter().map(|(s, gt, i)| (*gt, s.r_hat, &val[*i])).collect();
    let acqr = fit_acqr(&triples, delta_conformal, &spec)?;

    let profile = CalibrationProfile {
        source: opts.source,
        n_bins: opts.n_bins,
        confidence: opts.confidence,
        alpha: outcome.best.split.alpha,
        delta: outcome.best.split.delta,
        q_a: outcome.best.q_a,
        q_b: outcome.best.q_b,
        delta_conformal,
        q_residual,
        uncertainty: spec,
        q_score: acqr.q_score,
        lambda: acqr.lambda,
        lambda_fallback: acqr.lambda_fallback,
        n_val: rows.len(),
        grid_step: opts.grid_step,
        grid_qualified: outcome.qualified,
    };
    Ok((profile, outcome))
}

/// Interval widths attributable to each source of uncertainty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition<T> {
    /// Markov interval alone.
    pub i_est: T,
    /// Calibration interval from the V-Bias quantiles alone.
    pub i_vbias: T,
    /// Calibration interval from the ECE quantiles alone.
    pub i_ece: T,
    /// Composite interval from the ECE profile.
    pub i_overall: T,
}

pub fn decompose_uncertainty<T: Scalar>(
    v: &InstanceVolume<T>,
    profile_vbias: &CalibrationProfile<T>,
    profile_ece: &CalibrationProfile<T>,
    split: &BudgetSplit<T>,
) -> Result<Decomposition<T>> {
    check_profile(profile_ece, split)?;
    let s = InstanceSummary::new(v)?;
    let beta = markov_half_width(s.se, split.alpha)?;
    let i_est = IntervalEstimate::clipped(s.r_hat, s.r_hat - beta, s.r_hat + beta, Method::MarkovOnly, split.alpha, T::zero())
        .width();
    let cal_width = |p: &CalibrationProfile<T>| -> Result<T> {
        let b = bounds_from_sums(s.n_pixels, s.sum_a, s.sum_b, p.q_a, p.q_b)?;
        Ok(b.upper - b.lower)
    };
    Ok(Decomposition {
        i_est,
        i_vbias: cal_width(profile_vbias)?,
        i_ece: cal_width(profile_ece)?,
        i_overall: s.care(profile_ece.q_a, profile_ece.q_b, profile_ece.source, split)?.width(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Alarm {
    ClearBelow,
    ClearAbove,
    Review,
}

impl Alarm {
    pub fn as_str(self) -> &'static str {
        match self {
            Alarm::ClearBelow => "CLEAR_BELOW",
            Alarm::ClearAbove => "CLEAR_ABOVE",
            Alarm::Review => "REVIEW",
        }
    }
}

impl fmt::Display for Alarm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `Review` when the interval touches the threshold, including at an edge.
pub fn threshold_alarm<T: Scalar>(interval: &IntervalEstimate<T>, threshold: T) -> Alarm {
    if interval.upper < threshold {
        Alarm::ClearBelow
    } else if interval.lower > threshold {
        Alarm::ClearAbove
    } else {
        Alarm::Review
    }
}
