use ratio_ci::care::{fit_profile, ProfileOptions};
use ratio_ci::{
    compare_methods, estimate, generate, generate_range, labeled_ratio, CalibrationSource, Method, MethodSpec,
    Profile, SynthConfig, Volume, Volume32,
};

fn dataset(n: usize, seed: u64) -> Vec<Volume> {
    let cfg = SynthConfig { n_instances: n, pixels_min: 500, pixels_max: 5_000, seed, ..Default::default() };
    generate::<f64>(&cfg).unwrap().into_iter().map(|i| i.volume).collect()
}

fn fit(val: &[Volume], source: CalibrationSource, alpha: Option<f64>) -> Profile {
    fit_profile(val, &ProfileOptions { alpha, ..ProfileOptions::new(0.68, source) }).unwrap().0
}

#[test]
fn conformal_methods_cover_on_exchangeable_splits() {
    let data = dataset(1_200, 21);
    let (val, test) = data.split_at(600);
    let p = fit(val, CalibrationSource::Vbias, None);
    let floor = 0.68 - 3.0 * (0.68f64 * 0.32 / 600.0).sqrt();
    let reports = compare_methods(test, &[(MethodSpec::Cqr, Some(&p)), (MethodSpec::Acqr, Some(&p))]).unwrap();
    assert_eq!(reports.iter().map(|r| r.method).collect::<Vec<_>>(), vec![Method::Cqr, Method::Acqr]);
    for r in &reports {
        assert!(r.coverage >= floor, "{} coverage {}", r.method, r.coverage);
        assert_eq!(r.strata.iter().map(|s| s.n).sum::<usize>(), r.n);
    }
}

#[test]
fn ece_intervals_dominate_vbias_at_the_same_split() {
    let data = dataset(400, 22);
    let (val, test) = data.split_at(200);
    for alpha in [0.04, 0.16, 0.28] {
        let pv = fit(val, CalibrationSource::Vbias, Some(alpha));
        let pe = fit(val, CalibrationSource::Ece, Some(alpha));
        assert!(pe.q_a >= pv.q_a && pe.q_b >= pv.q_b);
        let reports = compare_methods(test, &[(MethodSpec::Care, Some(&pv)), (MethodSpec::Care, Some(&pe))]).unwrap();
        assert_eq!(reports[0].method, Method::CareVbias);
        assert!(reports[1].mean_width >= reports[0].mean_width);
        assert!(reports[1].coverage >= reports[0].coverage);
    }
}

#[test]
fn identical_configs_give_identical_reports() {
    let data = dataset(120, 23);
    let (val, test) = data.split_at(60);
    let p = fit(val, CalibrationSource::Ece, None);
    let a = compare_methods(test, &[(MethodSpec::Care, Some(&p))]).unwrap();
    let b = compare_methods(test, &[(MethodSpec::Care, Some(&p))]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn parallel_and_serial_generation_agree() {
    let cfg = SynthConfig { n_instances: 40, pixels_min: 100, pixels_max: 1_000, seed: 24, ..Default::default() };
    let all = generate::<f64>(&cfg).unwrap();
    let serial: Vec<_> = (0..40).flat_map(|i| generate_range::<f64>(&cfg, i, i + 1).unwrap()).collect();
    assert_eq!(all, serial);
}

#[test]
fn single_precision_pipeline_runs() {
    let cfg = SynthConfig { n_instances: 200, pixels_min: 500, pixels_max: 2_000, seed: 25, ..Default::default() };
    let data: Vec<Volume32> = generate::<f32>(&cfg).unwrap().into_iter().map(|i| i.volume).collect();
    let (val, test) = data.split_at(100);
    let (p, _) = fit_profile(val, &ProfileOptions::new(0.68f32, CalibrationSource::Vbias)).unwrap();
    let mut covered = 0;
    for v in test {
        let iv = estimate(v, &MethodSpec::Care, Some(&p)).unwrap();
        assert!(0.0 <= iv.lower && iv.lower <= iv.r_hat && iv.r_hat <= iv.upper && iv.upper <= 1.0);
        covered += iv.contains(labeled_ratio(v).unwrap()) as usize;
    }
    assert!(covered as f32 / 100.0 >= 0.68);
}
