use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ratio_ci::io::manifest::{DatasetManifest, ManifestEntry};
use ratio_ci::io::table::{load_results, save_results, ResultRow};
use ratio_ci::io::{profile_from_kv, profile_to_kv, synth_config_from_kv, write_volume, KeyValues};
use ratio_ci::{
    build_report, decompose_uncertainty, estimate, fit_profile, generate, labeled_ratio, soft_volume,
    threshold_alarm, CalibrationSource, Channel, Error, Interval, Method, MethodSpec, Profile, ProfileOptions,
    ResampleConfig, UncertaintyKind, Volume,
};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_COMPUTE: u8 = 3;

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn compute(message: impl Into<String>) -> Self {
        Self { code: EXIT_COMPUTE, message: message.into() }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_)
        | Error::Format(_)
        | Error::CorruptVolume(_)
        | Error::InvalidVolume(_)
        | Error::Config(_)
        | Error::LabelsRequired => EXIT_DATA,
        Error::EmptyCalibrationSet
        | Error::EmptyTestSet
        | Error::EmptyDenominator
        | Error::TooFewPixels { .. }
        | Error::BadConfidenceBudget(_)
        | Error::ProfileMismatch(_)
        | Error::InvalidInput(_) => EXIT_COMPUTE,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self { code: exit_code(&e), message: e.to_string() }
    }
}

trait Context<T> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, Failure>;
}

impl<T> Context<T> for Result<T, Error> {
    fn context(self, what: impl std::fmt::Display) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: exit_code(&e), message: format!("{what}: {e}") })
    }
}

type CliResult = Result<(), Failure>;

#[derive(Parser, Debug)]
#[command(name = "ratio-ci", version, about = "Confidence intervals for segmentation ratio biomarkers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled dataset from a key=value config.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a calibration profile on a labeled validation dataset.
    Fit {
        #[arg(long)]
        val: PathBuf,
        #[arg(long, default_value_t = 0.68)]
        confidence: f64,
        #[arg(long, value_enum, default_value_t = SourceArg::Vbias)]
        source: SourceArg,
        #[arg(long, default_value_t = ratio_ci::DEFAULT_BINS)]
        bins: usize,
        #[arg(long, default_value_t = ratio_ci::care::DEFAULT_GRID_STEP)]
        grid_step: f64,
        /// Use this estimation budget instead of searching the grid.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, value_enum, default_value_t = UncertaintyArg::SizeScaled)]
        uncertainty: UncertaintyArg,
        /// Largest tumor volume; defaults to the validation maximum.
        #[arg(long)]
        v_t_max: Option<f64>,
        /// Whole-volume size for the voxel-fraction measure.
        #[arg(long, default_value_t = 0.0)]
        voxel_volume: f64,
        #[arg(long, default_value_t = ratio_ci::conformal::DEFAULT_EPSILON)]
        epsilon: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute one interval per instance with the chosen method.
    Estimate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        profile: Option<PathBuf>,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Estimation budget for the markov method.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = ratio_ci::baselines::DEFAULT_REPS)]
        reps: usize,
        #[arg(long, default_value_t = ratio_ci::baselines::DEFAULT_LO_Q)]
        lo_q: f64,
        #[arg(long, default_value_t = ratio_ci::baselines::DEFAULT_HI_Q)]
        hi_q: f64,
        #[arg(long, default_value_t = ratio_ci::baselines::DEFAULT_FRAC)]
        frac: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Coverage report for one or more results tables.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, num_args = 1.., value_delimiter = ',', required = true)]
        results: Vec<PathBuf>,
        /// Text report.
        #[arg(long)]
        out: PathBuf,
        /// Strata table; defaults to the report path with `.strata.csv` appended.
        #[arg(long)]
        strata: Option<PathBuf>,
    },
    /// Split interval widths into estimation and calibration parts.
    Decompose {
        #[arg(long = "in")]
        input: PathBuf,
        /// V-Bias and ECE profiles, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        profiles: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Flag intervals against a clinical threshold.
    Alarm {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, default_value_t = 0.25)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SourceArg {
    Vbias,
    Ece,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum UncertaintyArg {
    Unit,
    SizeScaled,
    SizeNoLambda,
    VoxelFraction,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
#[value(rename_all = "snake_case")]
enum MethodArg {
    Cqr,
    Acqr,
    AcqrUnit,
    Care,
    Markov,
    Bootstrap,
    Subsample,
}

fn check_probability(name: &str, x: f64) -> CliResult {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Failure::usage(format!("--{name} must lie in (0, 1), got {x}")))
    }
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_dataset(path: &Path) -> Result<(DatasetManifest, Vec<Volume>), Failure> {
    let manifest = DatasetManifest::load(path).context(path.display())?;
    let volumes = manifest.load_volumes(&manifest_dir(path)).context(path.display())?;
    Ok((manifest, volumes))
}

fn load_profile(path: &Path) -> Result<Profile, Failure> {
    let kv = KeyValues::load(path).context(path.display())?;
    profile_from_kv(&kv).context(path.display())
}

fn synth(config: &Path, out: &Path) -> CliResult {
    let cfg = synth_config_from_kv(&KeyValues::load(config).context(config.display())?).context(config.display())?;
    let instances = generate::<f64>(&cfg)?;
    fs::create_dir_all(out).map_err(Error::from)?;
    let entries = instances
        .par_iter()
        .map(|inst| {
            let v = &inst.volume;
            let file = PathBuf::from(format!("{}.cvol", v.id()));
            write_volume(&out.join(&file), v).context(v.id())?;
            Ok(ManifestEntry {
                id: v.id().to_string(),
                file,
                n_pixels: v.n_pixels(),
                has_labels: v.has_labels(),
                metadata: BTreeMap::from([
                    ("true_ratio".to_string(), inst.true_ratio()),
                    ("p_b".to_string(), inst.p_b),
                ]),
            })
        })
        .collect::<Result<Vec<_>, Failure>>()?;
    DatasetManifest::new(entries).save(&out.join("manifest.json"))?;
    log::info!("wrote {} instances to {}", instances.len(), out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn fit(
    val: &Path,
    confidence: f64,
    source: SourceArg,
    bins: usize,
    grid_step: f64,
    alpha: Option<f64>,
    uncertainty: UncertaintyArg,
    v_t_max: Option<f64>,
    voxel_volume: f64,
    epsilon: f64,
    out: &Path,
) -> CliResult {
    check_probability("confidence", confidence)?;
    if bins < 1 {
        return Err(Failure::usage("--bins must be >= 1"));
    }
    let (_, volumes) = load_dataset(val)?;
    let source = match source {
        SourceArg::Vbias => CalibrationSource::Vbias,
        SourceArg::Ece => CalibrationSource::Ece,
    };
    let uncertainty = match uncertainty {
        UncertaintyArg::Unit => UncertaintyKind::Unit,
        UncertaintyArg::SizeScaled => UncertaintyKind::SizeScaled,
        UncertaintyArg::SizeNoLambda => UncertaintyKind::SizeNoLambda,
        UncertaintyArg::VoxelFraction => UncertaintyKind::VoxelFraction,
    };
    let opts = ProfileOptions {
        n_bins: bins,
        grid_step,
        alpha,
        uncertainty,
        v_t_max,
        voxel_volume,
        epsilon,
        ..ProfileOptions::new(confidence, source)
    };
    let (profile, outcome) = fit_profile(&volumes, &opts)?;
    if !outcome.qualified {
        eprintln!("warning: no split reached coverage {confidence} on validation");
    }
    let mut text = profile_to_kv(&profile).to_string();
    writeln!(text, "# grid: alpha, delta, validation coverage, mean width").unwrap();
    for c in &outcome.candidates {
        writeln!(text, "# {} {} {} {}", c.split.alpha, c.split.delta, c.coverage, c.mean_width).unwrap();
    }
    fs::write(out, text).map_err(Error::from)?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn estimate_cmd(
    input: &Path,
    profile: Option<&Path>,
    method: MethodArg,
    alpha: Option<f64>,
    reps: usize,
    lo_q: f64,
    hi_q: f64,
    frac: f64,
    seed: u64,
    out: &Path,
) -> CliResult {
    let resample = ResampleConfig { reps, lo_q, hi_q, seed };
    let spec = match method {
        MethodArg::Cqr => MethodSpec::Cqr,
        MethodArg::Acqr => MethodSpec::Acqr,
        MethodArg::AcqrUnit => MethodSpec::AcqrUnit,
        MethodArg::Care => MethodSpec::Care,
        MethodArg::Markov => MethodSpec::Markov { alpha },
        MethodArg::Bootstrap => MethodSpec::Bootstrap(resample),
        MethodArg::Subsample => MethodSpec::Subsample { frac, cfg: resample },
    };
    if let Some(a) = alpha {
        check_probability("alpha", a)?;
    }
    let profile = match profile {
        Some(p) => Some(load_profile(p)?),
        None if spec.needs_profile() => return Err(Failure::usage("this method needs --profile")),
        None => None,
    };
    let (_, volumes) = load_dataset(input)?;
    let outcomes: Vec<Result<ResultRow<f64>, (String, Error)>> = volumes
        .par_iter()
        .map(|v| {
            estimate(v, &spec, profile.as_ref())
                .map(|interval| ResultRow { id: v.id().to_string(), interval })
                .map_err(|e| (v.id().to_string(), e))
        })
        .collect();
    let mut rows = Vec::with_capacity(outcomes.len());
    let mut last = None;
    for o in outcomes {
        match o {
            Ok(r) => rows.push(r),
            Err((id, e)) => {
                eprintln!("error: {id}: {e}");
                if exit_code(&e) != EXIT_COMPUTE {
                    return Err(Failure { code: exit_code(&e), message: format!("{id}: {e}") });
                }
                last = Some(e);
            }
        }
    }
    if rows.is_empty() {
        if let Some(e) = last {
            return Err(Failure::compute(format!("no instance produced an interval; last error: {e}")));
        }
    }
    save_results(out, &rows)?;
    Ok(())
}

fn eval_cmd(input: &Path, results: &[PathBuf], out: &Path, strata: Option<&Path>) -> CliResult {
    let (_, volumes) = load_dataset(input)?;
    let truth: HashMap<&str, (f64, f64)> = volumes
        .iter()
        .filter_map(|v| labeled_ratio(v).ok().map(|r| (v.id(), (r, soft_volume(v, Channel::B)))))
        .collect();
    if truth.is_empty() {
        return Err(Failure { code: EXIT_DATA, message: format!("{}: no labeled instances with a defined ratio", input.display()) });
    }
    let mut by_method: BTreeMap<Method, (Vec<f64>, Vec<(Interval, f64)>)> = BTreeMap::new();
    for path in results {
        for row in load_results::<f64>(path).context(path.display())? {
            let Some(&(r_gt, size)) = truth.get(row.id.as_str()) else {
                eprintln!("warning: {}: no labeled ratio in the dataset; skipped", row.id);
                continue;
            };
            let entry = by_method.entry(row.interval.method).or_default();
            entry.0.push(size);
            entry.1.push((row.interval, r_gt));
        }
    }
    let mut report = String::new();
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure { code: EXIT_DATA, message: e.to_string() };
    table
        .write_record(["method", "stratum", "n", "coverage", "mean_width", "mse_r"])
        .map_err(csv_err)?;
    for (method, (sizes, pairs)) in &by_method {
        let r = build_report(*method, sizes, pairs)?;
        writeln!(report, "method = {}", r.method).unwrap();
        writeln!(report, "n = {}", r.n).unwrap();
        writeln!(report, "coverage = {}", r.coverage).unwrap();
        writeln!(report, "mean_width = {}", r.mean_width).unwrap();
        writeln!(report, "median_width = {}", r.median_width).unwrap();
        writeln!(report, "mse_r = {}", r.mse_r).unwrap();
        table
            .write_record([r.method.to_string(), "ALL".into(), r.n.to_string(), r.coverage.to_string(), r.mean_width.to_string(), r.mse_r.to_string()])
            .map_err(csv_err)?;
        for s in &r.strata {
            writeln!(
                report,
                "stratum {} : n = {}, coverage = {}, mean_width = {}, mse_r = {}",
                s.label, s.n, s.coverage, s.mean_width, s.mse_r
            )
            .unwrap();
            table
                .write_record([r.method.to_string(), s.label.to_string(), s.n.to_string(), s.coverage.to_string(), s.mean_width.to_string(), s.mse_r.to_string()])
                .map_err(csv_err)?;
        }
        report.push('\n');
    }
    fs::write(out, report).map_err(Error::from)?;
    let strata_path = match strata {
        Some(p) => p.to_path_buf(),
        None => PathBuf::from(format!("{}.strata.csv", out.display())),
    };
    let bytes = table.into_inner().map_err(|e| Failure { code: EXIT_DATA, message: e.to_string() })?;
    fs::write(strata_path, bytes).map_err(Error::from)?;
    Ok(())
}

fn decompose_cmd(input: &Path, profiles: &[PathBuf], out: &Path) -> CliResult {
    if profiles.len() != 2 {
        return Err(Failure::usage("--profiles expects exactly two files: vbias,ece"));
    }
    let vbias = load_profile(&profiles[0])?;
    let ece = load_profile(&profiles[1])?;
    if vbias.source != CalibrationSource::Vbias || ece.source != CalibrationSource::Ece {
        return Err(Failure::usage("--profiles expects a vbias profile then an ece profile"));
    }
    let split = ece.split()?;
    let (_, mut volumes) = load_dataset(input)?;
    volumes.sort_by(|a, b| a.id().cmp(b.id()));
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure { code: EXIT_DATA, message: e.to_string() };
    table.write_record(["id", "i_est", "i_vbias", "i_ece", "i_overall"]).map_err(csv_err)?;
    let mut written = 0;
    for v in &volumes {
        match decompose_uncertainty(v, &vbias, &ece, &split) {
            Ok(d) => {
                table
                    .write_record([v.id().to_string(), d.i_est.to_string(), d.i_vbias.to_string(), d.i_ece.to_string(), d.i_overall.to_string()])
                    .map_err(csv_err)?;
                written += 1;
            }
            Err(e) if exit_code(&e) == EXIT_COMPUTE => eprintln!("error: {}: {e}", v.id()),
            Err(e) => return Err(e).context(v.id()),
        }
    }
    if written == 0 && !volumes.is_empty() {
        return Err(Failure::compute("no instance could be decomposed"));
    }
    let bytes = table.into_inner().map_err(|e| Failure { code: EXIT_DATA, message: e.to_string() })?;
    fs::write(out, bytes).map_err(Error::from)?;
    Ok(())
}

fn alarm_cmd(results: &Path, threshold: f64, out: &Path) -> CliResult {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Failure::usage(format!("--threshold must lie in [0, 1], got {threshold}")));
    }
    let rows = load_results::<f64>(results).context(results.display())?;
    let mut table = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Failure { code: EXIT_DATA, message: e.to_string() };
    table.write_record(["id", "lower", "upper", "threshold", "flag"]).map_err(csv_err)?;
    for r in &rows {
        let flag = threshold_alarm(&r.interval, threshold);
        table
            .write_record([r.id.clone(), r.interval.lower.to_string(), r.interval.upper.to_string(), threshold.to_string(), flag.to_string()])
            .map_err(csv_err)?;
    }
    let bytes = table.into_inner().map_err(|e| Failure { code: EXIT_DATA, message: e.to_string() })?;
    fs::write(out, bytes).map_err(Error::from)?;
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Synth { config, out } => synth(&config, &out),
        Command::Fit { val, confidence, source, bins, grid_step, alpha, uncertainty, v_t_max, voxel_volume, epsilon, out } => {
            fit(&val, confidence, source, bins, grid_step, alpha, uncertainty, v_t_max, voxel_volume, epsilon, &out)
        }
        Command::Estimate { input, profile, method, alpha, reps, lo_q, hi_q, frac, seed, out } => {
            estimate_cmd(&input, profile.as_deref(), method, alpha, reps, lo_q, hi_q, frac, seed, &out)
        }
        Command::Eval { input, results, out, strata } => eval_cmd(&input, &results, &out, strata.as_deref()),
        Command::Decompose { input, profiles, out } => decompose_cmd(&input, &profiles, &out),
        Command::Alarm { results, threshold, out } => alarm_cmd(&results, threshold, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
