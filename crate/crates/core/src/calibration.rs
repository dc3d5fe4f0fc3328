//! Volume bias, binned calibration error, and the calibration-based ratio
//! bounds built from their validation quantiles.
//!
//! Both per-instance statistics are computed from exact pixel sums that are
//! rounded once, so `|volume_bias| <= ece` holds bit-for-bit and neither
//! depends on pixel order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::clip;
use crate::quantile::conformal_quantile;
use crate::scalar::{ExactSum, Scalar};
use crate::volume::{Channel, InstanceVolume};

pub const DEFAULT_BINS: usize = 15;

/// Per-instance miscalibration statistic whose validation quantiles drive
/// the calibration interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CalibrationSource {
    /// Absolute volume bias `|mean(g - y)|`.
    Vbias,
    /// Equal-width binned expected calibration error.
    Ece,
}

impl fmt::Display for CalibrationSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CalibrationSource::Vbias => "vbias",
            CalibrationSource::Ece => "ece",
        })
    }
}

impl FromStr for CalibrationSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "vbias" | "v-bias" => Ok(CalibrationSource::Vbias),
            "ece" => Ok(CalibrationSource::Ece),
            other => Err(Error::Config(format!("unknown calibration source {other:?}"))),
        }
    }
}

/// Per-bin summary behind an ECE value.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedCalibrationStats<T> {
    pub n_bins: usize,
    /// `n_bins + 1` equal-width edges from 0 to 1.
    pub bin_edges: Vec<T>,
    pub bin_counts: Vec<usize>,
    /// Mean predicted probability per bin (zero for empty bins).
    pub bin_conf: Vec<T>,
    /// Mean label per bin (zero for empty bins).
    pub bin_acc: Vec<T>,
}

fn bin_edges<T: Scalar>(n_bins: usize) -> Vec<T> {
    let k = T::from_count(n_bins);
    (0..=n_bins).map(|i| T::from_count(i) / k).collect()
}

/// Bin of `g`, consistent with the edges: `edges[i] <= g < edges[i + 1]`
/// (last bin closed).
fn bin_index<T: Scalar>(g: T, edges: &[T]) -> usize {
    let n_bins = edges.len() - 1;
    let guess = (g * T::from_count(n_bins)).floor().to_usize().unwrap_or(0);
    let mut i = guess.min(n_bins - 1);
    if i > 0 && g < edges[i] {
        i -= 1;
    } else if i + 1 < n_bins && g >= edges[i + 1] {
        i += 1;
    }
    i
}

fn check_bins(n_bins: usize) -> Result<()> {
    if n_bins == 0 {
        return Err(Error::InvalidInput("n_bins must be >= 1".into()));
    }
    Ok(())
}

/// Mean of `g - y` over the channel's pixels.
pub fn volume_bias<T: Scalar>(v: &InstanceVolume<T>, channel: Channel) -> Result<T> {
    let y = v.label_mask(channel)?;
    let mut diff = ExactSum::new();
    for (&g, &label) in v.predictions(channel).iter().zip(y) {
        diff.add(g);
        if label {
            diff.add(-T::one());
        }
    }
    Ok(diff.value() / T::from_count(v.n_pixels()))
}

/// Equal-width binned ECE: `sum_b (count_b / n) * |conf_b - acc_b|`.
pub fn ece<T: Scalar>(
    v: &InstanceVolume<T>,
    channel: Channel,
    n_bins: usize,
) -> Result<(T, BinnedCalibrationStats<T>)> {
    check_bins(n_bins)?;
    let y = v.label_mask(channel)?;
    let edges = bin_edges::<T>(n_bins);
    let mut counts = vec![0usize; n_bins];
    let mut positives = vec![0usize; n_bins];
    let mut conf_sum = vec![ExactSum::new(); n_bins];
    let mut diff = vec![ExactSum::new(); n_bins];
    for (&g, &label) in v.predictions(channel).iter().zip(y) {
        let b = bin_index(g, &edges);
        counts[b] += 1;
        conf_sum[b].add(g);
        diff[b].add(g);
        if label {
            positives[b] += 1;
            diff[b].add(-T::one());
        }
    }
    let mut gap = ExactSum::new();
    for d in &diff {
        gap.add_abs(d);
    }
    let n = T::from_count(v.n_pixels());
    let per_bin = |num: T, c: usize| if c == 0 { T::zero() } else { num / T::from_count(c) };
    let stats = BinnedCalibrationStats {
        n_bins,
        bin_edges: edges,
        bin_counts: counts.clone(),
        bin_conf: conf_sum.iter().zip(&counts).map(|(s, &c)| per_bin(s.value(), c)).collect(),
        bin_acc: positives
            .iter()
            .zip(&counts)
            .map(|(&p, &c)| per_bin(T::from_count(p), c))
            .collect(),
    };
    Ok((gap.value() / n, stats))
}

/// The per-instance statistic a [`CalibrationSource`] summarises.
pub fn instance_statistic<T: Scalar>(
    v: &InstanceVolume<T>,
    channel: Channel,
    source: CalibrationSource,
    n_bins: usize,
) -> Result<T> {
    match source {
        CalibrationSource::Vbias => Ok(volume_bias(v, channel)?.abs()),
        CalibrationSource::Ece => Ok(ece(v, channel, n_bins)?.0),
    }
}

/// Per-channel statistics `(A, B)` for every validation instance.
pub fn validation_statistics<T: Scalar>(
    val: &[InstanceVolume<T>],
    source: CalibrationSource,
    n_bins: usize,
) -> Result<(Vec<T>, Vec<T>)> {
    if val.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    check_bins(n_bins)?;
    let pairs = val
        .par_iter()
        .map(|v| {
            Ok((
                instance_statistic(v, Channel::A, source, n_bins)?,
                instance_statistic(v, Channel::B, source, n_bins)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(pairs.into_iter().unzip())
}

/// Quantile level `1 - delta/2` used per channel.
pub(crate) fn channel_level<T: Scalar>(delta: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::BadConfidenceBudget(format!("delta {delta} outside (0, 1)")));
    }
    Ok(T::one() - delta / T::lit(2.0))
}

/// `(q_A, q_B)`: conformal quantiles at level `1 - delta/2` of the chosen
/// per-instance statistic. Either may be `+inf` when the validation set is
/// too small for the requested level.
pub fn fit_calibration_quantiles<T: Scalar>(
    val: &[InstanceVolume<T>],
    delta: T,
    source: CalibrationSource,
    n_bins: usize,
) -> Result<(T, T)> {
    let level = channel_level(delta)?;
    let (a, b) = validation_statistics(val, source, n_bins)?;
    Ok((conformal_quantile(&a, level)?, conformal_quantile(&b, level)?))
}

/// Calibration-based bounds around the point ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationBounds<T> {
    pub r_hat: T,
    pub lower: T,
    pub upper: T,
    /// `r_hat - lower`
    pub eps_l: T,
    /// `upper - r_hat`
    pub eps_u: T,
    pub degenerate: bool,
}

/// Bounds `[(V_A - q_a) / (V_B + q_b), (V_A + q_a) / (V_B - q_b)]` on the
/// ratio, where `V` are the mean predicted volumes. A non-positive upper
/// denominator or an infinite quantile clips to the full range.
pub fn calibration_interval<T: Scalar>(
    v: &InstanceVolume<T>,
    q_a: T,
    q_b: T,
) -> Result<CalibrationBounds<T>> {
    let s_b = crate::scalar::exact_sum(v.g_b());
    if s_b <= T::zero() {
        return Err(Error::EmptyDenominator);
    }
    let s_a = crate::scalar::exact_sum(v.g_a());
    bounds_from_sums(v.n_pixels(), s_a, s_b, q_a, q_b)
}

/// [`calibration_interval`] from the channel sums `s_a`, `s_b` over `n`
/// pixels; `s_b` must be positive.
pub(crate) fn bounds_from_sums<T: Scalar>(
    n: usize,
    s_a: T,
    s_b: T,
    q_a: T,
    q_b: T,
) -> Result<CalibrationBounds<T>> {
    if q_a.is_nan() || q_b.is_nan() || q_a < T::zero() || q_b < T::zero() {
        return Err(Error::InvalidInput(format!("quantiles must be >= 0, got ({q_a}, {q_b})")));
    }
    let (zero, one) = (T::zero(), T::one());
    let r_hat = clip(s_a / s_b, zero, one, zero).0;
    let mut degenerate = false;
    let (lower, upper) = if q_a.is_infinite() || q_b.is_infinite() {
        degenerate = true;
        (zero, one)
    } else {
        // Scaled by n so q = 0 reproduces sum(g_a) / sum(g_b) exactly.
        let n = T::from_count(n);
        let lower = (s_a - n * q_a) / (s_b + n * q_b);
        let den_u = s_b - n * q_b;
        let upper = if den_u > zero {
            (s_a + n * q_a) / den_u
        } else {
            degenerate = true;
            one
        };
        (lower, upper)
    };
    let (lower, lo_clip) = clip(lower, zero, one, zero);
    let (upper, hi_clip) = clip(upper, zero, one, one);
    let degenerate = degenerate || lo_clip || hi_clip;
    let eps_l = (r_hat - lower).max(zero);
    let eps_u = (upper - r_hat).max(zero);
    Ok(CalibrationBounds {
        r_hat,
        lower: r_hat - eps_l,
        upper: r_hat + eps_u,
        eps_l,
        eps_u,
        degenerate,
    })
}
