//! Coverage, width and error summaries over a test set, overall and by
//! predicted tumor size.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimators::labeled_ratio;
use crate::interval::{IntervalEstimate, Method};
use crate::methods::{estimate, MethodSpec};
use crate::profile::CalibrationProfile;
use crate::quantile::nearest_rank_quantile;
use crate::scalar::{exact_sum, Scalar};
use crate::volume::{soft_volume, Channel, InstanceVolume};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratum {
    S,
    M,
    L,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::S => "S",
            Stratum::M => "M",
            Stratum::L => "L",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StratumSummary<T> {
    pub label: Stratum,
    pub n: usize,
    pub coverage: T,
    pub mean_width: T,
    pub mse_r: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport<T> {
    pub method: Method,
    pub n: usize,
    pub coverage: T,
    pub mean_width: T,
    pub median_width: T,
    pub mse_r: T,
    /// Non-empty size strata in `S, M, L` order.
    pub strata: Vec<StratumSummary<T>>,
}

/// Fraction of pairs whose interval contains `r_gt` (closed).
pub fn coverage_rate<T: Scalar>(pairs: &[(IntervalEstimate<T>, T)]) -> Result<T> {
    if pairs.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let hits = pairs.iter().filter(|(iv, r)| iv.contains(*r)).count();
    Ok(T::from_count(hits) / T::from_count(pairs.len()))
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    exact_sum(xs) / T::from_count(xs.len())
}

fn median<T: Scalar>(xs: &[T]) -> T {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite widths"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0)
    }
}

fn mse<T: Scalar>(pairs: &[(IntervalEstimate<T>, T)]) -> T {
    let sq: Vec<T> = pairs.iter().map(|(iv, r)| (iv.r_hat - *r) * (iv.r_hat - *r)).collect();
    mean(&sq)
}

/// Size terciles: values up to the `ceil(n/3)`-th smallest are `S`, up to the
/// `ceil(2n/3)`-th are `M`, the rest `L`. Ties go to the lower stratum.
/// Fewer than three sizes are all `L`.
pub fn size_strata<T: Scalar>(sizes: &[T]) -> Result<Vec<Stratum>> {
    if sizes.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if sizes.len() < 3 {
        log::warn!("{} instance(s) are too few for size terciles; using one stratum", sizes.len());
        return Ok(vec![Stratum::L; sizes.len()]);
    }
    let t1 = nearest_rank_quantile(sizes, T::one() / T::lit(3.0))?;
    let t2 = nearest_rank_quantile(sizes, T::lit(2.0) / T::lit(3.0))?;
    Ok(sizes
        .iter()
        .map(|&s| if s <= t1 { Stratum::S } else if s <= t2 { Stratum::M } else { Stratum::L })
        .collect())
}

/// Per-stratum summaries, where `sizes[i]` is the predicted tumor volume of
/// the instance behind `pairs[i]`.
pub fn stratify_by_size<T: Scalar>(sizes: &[T], pairs: &[(IntervalEstimate<T>, T)]) -> Result<Vec<StratumSummary<T>>> {
    if sizes.len() != pairs.len() {
        return Err(Error::InvalidInput(format!("{} sizes for {} intervals", sizes.len(), pairs.len())));
    }
    let strata = size_strata(sizes)?;
    let mut out = Vec::new();
    for label in [Stratum::S, Stratum::M, Stratum::L] {
        let group: Vec<_> = pairs.iter().zip(&strata).filter(|(_, s)| **s == label).map(|(p, _)| *p).collect();
        if group.is_empty() {
            continue;
        }
        let widths: Vec<T> = group.iter().map(|(iv, _)| iv.width()).collect();
        out.push(StratumSummary {
            label,
            n: group.len(),
            coverage: coverage_rate(&group)?,
            mean_width: mean(&widths),
            mse_r: mse(&group),
        });
    }
    Ok(out)
}

pub fn build_report<T: Scalar>(method: Method, sizes: &[T], pairs: &[(IntervalEstimate<T>, T)]) -> Result<CoverageReport<T>> {
    let coverage = coverage_rate(pairs)?;
    let widths: Vec<T> = pairs.iter().map(|(iv, _)| iv.width()).collect();
    Ok(CoverageReport {
        method,
        n: pairs.len(),
        coverage,
        mean_width: mean(&widths),
        median_width: median(&widths),
        mse_r: mse(pairs),
        strata: stratify_by_size(sizes, pairs)?,
    })
}

/// Reports for each method over the labeled instances of `dataset` with a
/// defined ratio, ordered by method tag.
pub fn compare_methods<T: Scalar>(
    dataset: &[InstanceVolume<T>],
    methods: &[(MethodSpec<T>, Option<&CalibrationProfile<T>>)],
) -> Result<Vec<CoverageReport<T>>> {
    let usable: Vec<(&InstanceVolume<T>, T)> = dataset
        .iter()
        .filter_map(|v| labeled_ratio(v).ok().map(|r| (v, r)))
        .collect();
    if usable.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let sizes: Vec<T> = usable.iter().map(|(v, _)| soft_volume(v, Channel::B)).collect();
    let mut reports = methods
        .iter()
        .map(|(m, p)| {
            let pairs = usable
                .par_iter()
                .map(|(v, r)| Ok((estimate(v, m, *p)?, *r)))
                .collect::<Result<Vec<_>>>()?;
            build_report(pairs[0].0.method, &sizes, &pairs)
        })
        .collect::<Result<Vec<_>>>()?;
    reports.sort_by_key(|r| r.method);
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(r_hat: f64, lo: f64, hi: f64) -> IntervalEstimate<f64> {
        IntervalEstimate::clipped(r_hat, lo, hi, Method::Cqr, 0.0, 0.32)
    }

    #[test]
    fn coverage_examples() {
        let full: Vec<_> = [0.0, 0.3, 1.0].iter().map(|&r| (iv(0.5, 0.0, 1.0), r)).collect();
        assert_eq!(coverage_rate(&full).unwrap(), 1.0);
        let points: Vec<_> = [0.1, 0.3].iter().map(|&r| (iv(0.5, 0.5, 0.5), r)).collect();
        assert_eq!(coverage_rate(&points).unwrap(), 0.0);
        let mixed = vec![
            (iv(0.5, 0.4, 0.6), 0.45),
            (iv(0.5, 0.4, 0.6), 0.6),
            (iv(0.5, 0.4, 0.6), 0.4),
            (iv(0.5, 0.4, 0.6), 0.7),
        ];
        assert_eq!(coverage_rate(&mixed).unwrap(), 0.75);
        assert!(matches!(coverage_rate::<f64>(&[]), Err(Error::EmptyTestSet)));
    }

    #[test]
    fn strata_examples() {
        assert_eq!(size_strata(&[1.0, 2.0, 3.0]).unwrap(), vec![Stratum::S, Stratum::M, Stratum::L]);
        assert_eq!(size_strata(&[3.0, 1.0, 2.0]).unwrap(), vec![Stratum::L, Stratum::S, Stratum::M]);
        assert_eq!(size_strata(&[5.0; 7]).unwrap(), vec![Stratum::S; 7]);
        assert_eq!(size_strata(&[1.0, 2.0]).unwrap(), vec![Stratum::L; 2]);
    }

    #[test]
    fn report_sums_and_mse() {
        let sizes: Vec<f64> = (0..9).map(|i| i as f64).collect();
        let pairs: Vec<_> = (0..9).map(|i| (iv(0.5, 0.5 - 0.01 * i as f64, 0.5), 0.5)).collect();
        let r = build_report(Method::Cqr, &sizes, &pairs).unwrap();
        assert_eq!(r.strata.iter().map(|s| s.n).sum::<usize>(), 9);
        assert_eq!(r.mse_r, 0.0);
        assert_eq!(r.coverage, 1.0);
        assert!((r.median_width - 0.04).abs() < 1e-15);
        assert!(r.strata[0].mean_width < r.strata[2].mean_width);
    }
}
