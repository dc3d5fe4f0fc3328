use proptest::prelude::*;

use ratio_ci::calibration::calibration_interval;
use ratio_ci::care::InstanceSummary;
use ratio_ci::conformal::{acqr_interval, uncertainty_measure};
use ratio_ci::{
    coverage_rate, estimate, generate, markov_interval, soft_volume, BudgetSplit, CalibrationSource, Channel,
    Interval, InstanceVolume, Labels, Method, MethodSpec, ResampleConfig, SynthConfig, UncertaintyKind,
    UncertaintySpec, Volume,
};

fn volume_strategy(max_len: usize) -> impl Strategy<Value = Volume> {
    prop::collection::vec((0.0f64..=1.0, 0.05f64..=1.0, any::<bool>(), any::<bool>()), 2..max_len).prop_map(|px| {
        let g_b: Vec<f64> = px.iter().map(|p| p.1).collect();
        let g_a = px.iter().map(|p| p.0 * p.1).collect();
        let y_b: Vec<bool> = px.iter().map(|p| p.3).collect();
        let y_a = px.iter().map(|p| p.2 && p.3).collect();
        InstanceVolume::new("p", g_a, g_b, Some(Labels { a: y_a, b: y_b })).unwrap()
    })
}

fn interval(r: f64, lo: f64, hi: f64) -> Interval {
    Interval::clipped(r, lo, hi, Method::Cqr, 0.0, 0.32)
}

proptest! {
    #[test]
    fn soft_volume_is_additive(a in volume_strategy(40), b in volume_strategy(40)) {
        let joined = a.concat(&b, "ab");
        for ch in [Channel::A, Channel::B] {
            let sum = soft_volume(&a, ch) + soft_volume(&b, ch);
            prop_assert!((soft_volume(&joined, ch) - sum).abs() <= 1e-12 * sum.max(1.0));
        }
    }

    #[test]
    fn composite_contains_its_parts(v in volume_strategy(60), qa in 0.0f64..0.2, qb in 0.0f64..0.2, k in 1usize..16) {
        let split = BudgetSplit::from_alpha(0.02 * k as f64, 0.68).unwrap();
        let s = InstanceSummary::new(&v).unwrap();
        let care = s.care(qa, qb, CalibrationSource::Vbias, &split).unwrap();
        let markov = markov_interval(s.r_hat, s.se, split.alpha).unwrap();
        let cal = calibration_interval(&v, qa, qb).unwrap();
        prop_assert!(care.lower <= markov.lower + 1e-12 && markov.upper <= care.upper + 1e-12);
        prop_assert!(care.lower <= cal.lower + 1e-12 && cal.upper <= care.upper + 1e-12);
        prop_assert!(0.0 <= care.lower && care.lower <= care.r_hat && care.r_hat <= care.upper && care.upper <= 1.0);
    }

    #[test]
    fn scaled_width_nonincreasing_in_size(t1 in 0.0f64..100.0, t2 in 0.0f64..100.0, q in 0.0f64..1.0) {
        let spec = UncertaintySpec::new(UncertaintyKind::SizeScaled, 80.0, 0.0, 1e-6).unwrap();
        let width = |t: f64| {
            let v = InstanceVolume::new("s", vec![0.0; 100], vec![t / 100.0; 100], None).unwrap();
            acqr_interval(0.5, uncertainty_measure(&v, &spec, Some(0.25)).unwrap(), q, 0.32).width()
        };
        let (small, big) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(width(big) <= width(small) + 1e-15);
    }

    #[test]
    fn coverage_permutation_and_complement(
        rows in prop::collection::vec((0.0f64..1.0, 0.0f64..0.3, 0.0f64..1.0), 1..50),
        seed in any::<u64>(),
    ) {
        let pairs: Vec<(Interval, f64)> = rows.iter().map(|&(r, h, gt)| (interval(r, r - h, r + h), gt)).collect();
        let c = coverage_rate(&pairs).unwrap();
        let mut shuffled = pairs.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize);
        }
        prop_assert_eq!(coverage_rate(&shuffled).unwrap(), c);
        let missed = pairs.iter().filter(|(iv, r)| !iv.contains(*r)).count() as f64 / n as f64;
        prop_assert!((c - (1.0 - missed)).abs() < 1e-12);
        let wider: Vec<(Interval, f64)> = pairs.iter().map(|(iv, r)| (interval(iv.r_hat, iv.lower - 0.05, iv.upper + 0.05), *r)).collect();
        prop_assert!(coverage_rate(&wider).unwrap() >= c);
    }

    #[test]
    fn bootstrap_band_is_ordered(v in volume_strategy(80), seed in any::<u64>()) {
        let iv = estimate(&v, &MethodSpec::Bootstrap(ResampleConfig { reps: 20, seed, ..Default::default() }), None).unwrap();
        prop_assert!(0.0 <= iv.lower && iv.lower <= iv.upper && iv.upper <= 1.0);
    }
}

#[test]
fn mse_zero_iff_exact() {
    let sizes = [1.0, 2.0, 3.0];
    let exact: Vec<(Interval, f64)> = [0.2, 0.4, 0.6].iter().map(|&r| (interval(r, r, r), r)).collect();
    assert_eq!(ratio_ci::build_report(Method::Cqr, &sizes, &exact).unwrap().mse_r, 0.0);
    let mut off = exact.clone();
    off[1].1 = 0.41;
    assert!(ratio_ci::build_report(Method::Cqr, &sizes, &off).unwrap().mse_r > 0.0);
}

#[test]
fn generated_labels_stay_inside_region() {
    let cfg = SynthConfig { n_instances: 30, pixels_min: 50, pixels_max: 500, block_size: 7, noise_sd: 1.0, temperature: 3.0, seed: 8, ..Default::default() };
    for inst in generate::<f64>(&cfg).unwrap() {
        let l = inst.volume.labels().unwrap();
        assert!(l.a.iter().zip(&l.b).all(|(&a, &b)| !a || b));
    }
}
