//! Point ratio, squared-error estimate, the Markov interval and the
//! second-order debiased ratio.

use crate::error::{Error, Result};
use crate::interval::{clip, IntervalEstimate, Method};
use crate::scalar::{exact_sum, Scalar};
use crate::volume::InstanceVolume;

fn ratio_of_sums<T: Scalar>(v: &InstanceVolume<T>) -> Result<T> {
    let den = exact_sum(v.g_b());
    if den <= T::zero() {
        return Err(Error::EmptyDenominator);
    }
    Ok(exact_sum(v.g_a()) / den)
}

/// `sum(g_a) / sum(g_b)`, clipped to `[0, 1]`.
pub fn point_ratio<T: Scalar>(v: &InstanceVolume<T>) -> Result<T> {
    let r = ratio_of_sums(v)?;
    Ok(clip(r, T::zero(), T::one(), T::zero()).0)
}

/// `sum(y_a) / sum(y_b)` from the label masks.
pub fn labeled_ratio<T: Scalar>(v: &InstanceVolume<T>) -> Result<T> {
    let labels = v.require_labels()?;
    let den = labels.b.iter().filter(|&&y| y).count();
    if den == 0 {
        return Err(Error::EmptyDenominator);
    }
    let num = labels.a.iter().filter(|&&y| y).count();
    Ok(T::from_count(num) / T::from_count(den))
}

/// Sample moments of the pixel pairs `(x, y) = (g_b, g_a)`.
///
/// Variances and covariances are `n - 1` normalised.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioMoments<T> {
    pub mean_x: T,
    pub mean_y: T,
    pub var_x: T,
    pub var_y: T,
    pub cov_xy: T,
    /// `Cov(x^2, x)`
    pub cov_x2_x: T,
    /// `Cov(x^2, y)`
    pub cov_x2_y: T,
    /// `Cov(y^2, x)`
    pub cov_y2_x: T,
    pub n: usize,
}

/// Single-pass co-moment accumulator over `(x, y, x^2, y^2)`.
#[derive(Default)]
struct CoMoments<T> {
    k: usize,
    mean: [T; 4],
    c_xx: T,
    c_yy: T,
    c_xy: T,
    c_x2x: T,
    c_x2y: T,
    c_y2x: T,
}

impl<T: Scalar> CoMoments<T> {
    fn push(&mut self, x: T, y: T) {
        self.k += 1;
        let k = T::from_count(self.k);
        let obs = [x, y, x * x, y * y];
        let mut d_old = [T::zero(); 4];
        for i in 0..4 {
            d_old[i] = obs[i] - self.mean[i];
            self.mean[i] = self.mean[i] + d_old[i] / k;
        }
        let d_new = |i: usize| obs[i] - self.mean[i];
        self.c_xx = self.c_xx + d_old[0] * d_new(0);
        self.c_yy = self.c_yy + d_old[1] * d_new(1);
        self.c_xy = self.c_xy + d_old[0] * d_new(1);
        self.c_x2x = self.c_x2x + d_old[2] * d_new(0);
        self.c_x2y = self.c_x2y + d_old[2] * d_new(1);
        self.c_y2x = self.c_y2x + d_old[3] * d_new(0);
    }
}

pub fn ratio_moments<T: Scalar>(v: &InstanceVolume<T>) -> Result<RatioMoments<T>> {
    let n = v.n_pixels();
    if n < 2 {
        return Err(Error::TooFewPixels { required: 2, got: n });
    }
    let mut acc = CoMoments::default();
    for (&x, &y) in v.g_b().iter().zip(v.g_a()) {
        acc.push(x, y);
    }
    let dof = T::from_count(n - 1);
    Ok(RatioMoments {
        mean_x: acc.mean[0],
        mean_y: acc.mean[1],
        var_x: acc.c_xx / dof,
        var_y: acc.c_yy / dof,
        cov_xy: acc.c_xy / dof,
        cov_x2_x: acc.c_x2x / dof,
        cov_x2_y: acc.c_x2y / dof,
        cov_y2_x: acc.c_y2x / dof,
        n,
    })
}

/// Delta-method estimate of `E[(r_hat - r)^2]`:
///
/// `(1/n) * (var_y/mx^2 + var_x*my^2/mx^4 - 2*cov_xy*my/mx^3)`,
///
/// evaluated as `(var_y - 2*r*cov_xy + r^2*var_x) / (n*mx^2)` with
/// `r = my/mx` and floored at zero.
pub fn squared_error_estimate<T: Scalar>(m: &RatioMoments<T>) -> Result<T> {
    if !(m.mean_x > T::zero()) {
        return Err(Error::EmptyDenominator);
    }
    let r = m.mean_y / m.mean_x;
    let two = T::lit(2.0);
    let spread = m.var_y - two * r * m.cov_xy + r * r * m.var_x;
    let se = spread / (T::from_count(m.n) * m.mean_x * m.mean_x);
    Ok(if se > T::zero() { se } else { T::zero() })
}

fn check_alpha<T: Scalar>(alpha: T) -> Result<()> {
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::BadConfidenceBudget(format!("alpha {alpha} outside (0, 1)")));
    }
    Ok(())
}

/// Markov half-width `sqrt(se) / sqrt(alpha)`.
pub fn markov_half_width<T: Scalar>(se: T, alpha: T) -> Result<T> {
    check_alpha(alpha)?;
    if !(se >= T::zero()) {
        return Err(Error::InvalidInput(format!("squared error {se} must be >= 0")));
    }
    Ok(se.sqrt() / alpha.sqrt())
}

/// `[r_hat - beta, r_hat + beta]` clipped to `[0, 1]`, holding with
/// probability at least `1 - alpha` by Markov's inequality on the squared
/// error.
pub fn markov_interval<T: Scalar>(r_hat: T, se: T, alpha: T) -> Result<IntervalEstimate<T>> {
    let beta = markov_half_width(se, alpha)?;
    Ok(IntervalEstimate::clipped(
        r_hat,
        r_hat - beta,
        r_hat + beta,
        Method::MarkovOnly,
        alpha,
        T::zero(),
    ))
}

/// Second-order bias-corrected ratio. Not clipped; see
/// [`debiased_ratio_clipped`].
pub fn debiased_ratio<T: Scalar>(v: &InstanceVolume<T>) -> Result<T> {
    let n_px = v.n_pixels();
    if n_px < 3 {
        return Err(Error::TooFewPixels { required: 3, got: n_px });
    }
    let r = ratio_of_sums(v)?;
    let m = ratio_moments(v)?;
    if !(m.mean_x > T::zero()) {
        return Err(Error::EmptyDenominator);
    }
    if m.mean_y == T::zero() {
        // Every numerator moment vanishes with the numerator itself.
        return Ok(T::zero());
    }
    let n = T::from_count(n_px);
    let n1 = T::from_count(n_px - 1);
    let (mx, my) = (m.mean_x, m.mean_y);
    let (mx2, my2) = (mx * mx, my * my);
    let mx3 = mx2 * mx;
    let (two, three, four, half) = (T::lit(2.0), T::lit(3.0), T::lit(4.0), T::lit(0.5));

    // Plug-in first-order terms with their own small-sample corrections.
    let r_a = m.cov_xy / (mx * my);
    let a_term = (my * m.cov_x2_y + mx * m.cov_y2_x) / (mx2 * my2);
    let r_a_star =
        r_a + (a_term - four * r_a - r_a * (m.var_x / mx2 + m.var_y / my2 + two * r_a)) / n1;
    let r_b = m.var_x / mx2;
    let r_b_star = r_b + four / n1 * (half * m.cov_x2_x / mx3 - r_b - r_b * r_b);

    let second = (m.cov_x2_y - two * mx * m.cov_xy) / (mx2 * my)
        - (m.cov_x2_x - two * mx * m.var_x) / mx3
        - three * m.var_x * m.cov_xy / (mx3 * my)
        + three * m.var_x * m.var_x / (mx2 * mx2);

    Ok(r * (T::one() - (r_b_star - r_a_star) / n - second / (n * n)))
}

pub fn debiased_ratio_clipped<T: Scalar>(v: &InstanceVolume<T>) -> Result<T> {
    Ok(clip(debiased_ratio(v)?, T::zero(), T::one(), T::zero()).0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::Labels;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn vol(g_a: Vec<f64>, g_b: Vec<f64>) -> InstanceVolume<f64> {
        InstanceVolume::new("t", g_a, g_b, None).unwrap()
    }

    fn random_vol(seed: u64, n: usize) -> InstanceVolume<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g_b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let g_a = g_b.iter().map(|b| b * rng.random::<f64>()).collect();
        vol(g_a, g_b)
    }

    #[test]
    fn point_ratio_examples() {
        assert_eq!(point_ratio(&vol(vec![1., 0., 1., 0.], vec![1.; 4])).unwrap(), 0.5);
        let g = vec![0.3, 0.7, 0.11];
        assert_eq!(point_ratio(&vol(g.clone(), g)).unwrap(), 1.0);
        assert!(matches!(
            point_ratio(&vol(vec![0.0; 2], vec![0.0; 2])),
            Err(Error::EmptyDenominator)
        ));
        // g_a above g_b is clipped
        assert_eq!(point_ratio(&vol(vec![0.9], vec![0.3])).unwrap(), 1.0);
    }

    #[test]
    fn point_ratio_matches_summation_oracle() {
        for seed in 0..20 {
            let v = random_vol(seed, 257);
            let num: f64 = v.g_a().iter().sum();
            let den: f64 = v.g_b().iter().sum();
            assert!((point_ratio(&v).unwrap() - num / den).abs() < 1e-12);
        }
    }

    #[test]
    fn labeled_ratio_examples() {
        let lab = |a: Vec<bool>, b: Vec<bool>| {
            let n = a.len();
            InstanceVolume::new("t", vec![0.5; n], vec![0.5; n], Some(Labels { a, b })).unwrap()
        };
        assert_eq!(labeled_ratio(&lab(vec![true, false], vec![true, true])).unwrap(), 0.5);
        assert_eq!(labeled_ratio(&lab(vec![false, false], vec![true, true])).unwrap(), 0.0);
        assert!(matches!(
            labeled_ratio(&lab(vec![false, false], vec![false, false])),
            Err(Error::EmptyDenominator)
        ));
        assert!(matches!(labeled_ratio(&vol(vec![0.1], vec![0.2])), Err(Error::LabelsRequired)));

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let b: Vec<bool> = (0..100).map(|_| rng.random_bool(0.6)).collect();
            let a: Vec<bool> = b.iter().map(|&b| b && rng.random_bool(0.3)).collect();
            let (na, nb) = (a.iter().filter(|&&x| x).count(), b.iter().filter(|&&x| x).count());
            if nb == 0 {
                continue;
            }
            assert_eq!(labeled_ratio(&lab(a, b)).unwrap(), na as f64 / nb as f64);
        }
    }

    #[test]
    fn moments_degenerate_cases() {
        let m = ratio_moments(&vol(vec![0.2; 5], vec![0.6; 5])).unwrap();
        assert_eq!((m.var_x, m.var_y, m.cov_xy), (0.0, 0.0, 0.0));
        assert_eq!((m.cov_x2_x, m.cov_x2_y, m.cov_y2_x), (0.0, 0.0, 0.0));

        let g = vec![0.1, 0.9, 0.4, 0.35];
        let m = ratio_moments(&vol(g.clone(), g)).unwrap();
        assert_eq!(m.var_x, m.var_y);
        assert_eq!(m.var_x, m.cov_xy);

        assert!(matches!(
            ratio_moments(&vol(vec![0.1], vec![0.2])),
            Err(Error::TooFewPixels { .. })
        ));
    }

    fn two_pass_cov(u: &[f64], w: &[f64]) -> f64 {
        let n = u.len() as f64;
        let mu = u.iter().sum::<f64>() / n;
        let mw = w.iter().sum::<f64>() / n;
        u.iter().zip(w).map(|(a, b)| (a - mu) * (b - mw)).sum::<f64>() / (n - 1.0)
    }

    #[test]
    fn moments_match_two_pass_oracle() {
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-10 * b.abs().max(1e-300) || (a - b).abs() < 1e-15;
        for seed in 0..10 {
            let v = random_vol(100 + seed, 1000);
            let m = ratio_moments(&v).unwrap();
            let x = v.g_b();
            let y = v.g_a();
            let x2: Vec<f64> = x.iter().map(|a| a * a).collect();
            let y2: Vec<f64> = y.iter().map(|a| a * a).collect();
            assert!(close(m.mean_x, x.iter().sum::<f64>() / 1000.0));
            assert!(close(m.var_x, two_pass_cov(x, x)));
            assert!(close(m.var_y, two_pass_cov(y, y)));
            assert!(close(m.cov_xy, two_pass_cov(x, y)));
            assert!(close(m.cov_x2_x, two_pass_cov(&x2, x)));
            assert!(close(m.cov_x2_y, two_pass_cov(&x2, y)));
            assert!(close(m.cov_y2_x, two_pass_cov(&y2, x)));
        }
    }

    #[test]
    fn squared_error_vanishes_for_identical_channels() {
        for seed in 0..20 {
            let v = random_vol(seed, 300);
            let same = vol(v.g_b().to_vec(), v.g_b().to_vec());
            assert_eq!(squared_error_estimate(&ratio_moments(&same).unwrap()).unwrap(), 0.0);
        }
        let c = vol(vec![0.2; 4], vec![0.5; 4]);
        assert_eq!(squared_error_estimate(&ratio_moments(&c).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn squared_error_matches_expanded_form() {
        let v = random_vol(3, 500);
        let m = ratio_moments(&v).unwrap();
        let (mx, my, n) = (m.mean_x, m.mean_y, m.n as f64);
        let expanded = (m.var_y / mx.powi(2) + m.var_x * my * my / mx.powi(4)
            - 2.0 * m.cov_xy * my / mx.powi(3))
            / n;
        let se = squared_error_estimate(&m).unwrap();
        assert!((se - expanded).abs() < 1e-12 * expanded);
    }

    #[test]
    fn squared_error_requires_positive_denominator() {
        let m = ratio_moments(&vol(vec![0.0; 3], vec![0.0; 3])).unwrap();
        assert!(matches!(squared_error_estimate(&m), Err(Error::EmptyDenominator)));
    }

    #[test]
    fn markov_examples() {
        let s = 0.0036f64;
        let beta = markov_half_width(s, 0.25).unwrap();
        assert_eq!(beta, 2.0 * s.sqrt());

        let i = markov_interval(0.4, 0.0, 0.1).unwrap();
        assert_eq!((i.lower, i.upper), (0.4, 0.4));
        assert_eq!(i.method, Method::MarkovOnly);

        let beta = markov_half_width(0.0001f64, 0.04).unwrap();
        assert!((beta - 0.05).abs() < 1e-15);

        let i = markov_interval(0.98, 0.01, 0.25).unwrap();
        assert_eq!(i.upper, 1.0);
        assert!(i.degenerate);

        for a in [0.0, 1.0, -0.5, f64::NAN] {
            assert!(matches!(markov_interval(0.5, 0.01, a), Err(Error::BadConfidenceBudget(_))));
        }
    }

    #[test]
    fn debiased_equals_naive_for_constant_denominator() {
        let v = vol(vec![0.1, 0.5, 0.3, 0.2], vec![0.8; 4]);
        assert_eq!(debiased_ratio(&v).unwrap(), point_ratio(&v).unwrap());
        let z = vol(vec![0.0; 4], vec![0.1, 0.5, 0.3, 0.2]);
        assert_eq!(debiased_ratio(&z).unwrap(), 0.0);
        assert!(matches!(
            debiased_ratio(&vol(vec![0.1, 0.1], vec![0.2, 0.2])),
            Err(Error::TooFewPixels { .. })
        ));
    }

    #[test]
    fn debiased_correction_shrinks_like_one_over_n() {
        // slope of log|r_corr - r_hat| against log n, averaged over draws
        let sizes = [100usize, 1_000, 10_000, 100_000];
        let mut pts = Vec::new();
        for &n in &sizes {
            let mut mean_abs = 0.0;
            for seed in 0..8 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 31 + n as u64);
                let g_b: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let g_a: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 0.5).collect();
                let v = vol(g_a, g_b);
                mean_abs += (debiased_ratio(&v).unwrap() - point_ratio(&v).unwrap()).abs() / 8.0;
            }
            pts.push(((n as f64).ln(), mean_abs.ln()));
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / pts.iter().map(|p| (p.0 - mx).powi(2)).sum::<f64>();
        assert!((-1.2..=-0.8).contains(&slope), "slope {slope}");
    }

    proptest! {
        #[test]
        fn point_ratio_permutation_invariant(seed in any::<u64>(), n in 2usize..200) {
            let v = random_vol(seed, n);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.reverse();
            idx.rotate_left((seed % n as u64) as usize);
            let p = vol(idx.iter().map(|&i| v.g_a()[i]).collect(), idx.iter().map(|&i| v.g_b()[i]).collect());
            prop_assert_eq!(point_ratio(&v).unwrap(), point_ratio(&p).unwrap());
        }

        #[test]
        fn squared_error_scales_inversely_with_duplication(seed in any::<u64>(), n in 5usize..200, k in 2usize..6) {
            let v = random_vol(seed, n);
            let rep = |g: &[f64]| g.iter().flat_map(|&x| std::iter::repeat_n(x, k)).collect::<Vec<_>>();
            let d = vol(rep(v.g_a()), rep(v.g_b()));
            let se = squared_error_estimate(&ratio_moments(&v).unwrap()).unwrap();
            let se_d = squared_error_estimate(&ratio_moments(&d).unwrap()).unwrap();
            prop_assume!(se > 1e-12);
            let rel = (se_d * k as f64 - se).abs() / se;
            prop_assert!(rel <= 2.0 / n as f64, "rel {}", rel);
        }

        #[test]
        fn markov_width_monotone(se1 in 0.0f64..0.01, se2 in 0.0f64..0.01, a1 in 0.01f64..0.99, a2 in 0.01f64..0.99) {
            let (slo, shi) = if se1 <= se2 { (se1, se2) } else { (se2, se1) };
            let (alo, ahi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
            prop_assert!(markov_half_width(slo, a1).unwrap() <= markov_half_width(shi, a1).unwrap());
            prop_assert!(markov_half_width(se1, ahi).unwrap() <= markov_half_width(se1, alo).unwrap());
        }
    }
}
