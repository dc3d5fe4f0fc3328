//! Confidence intervals for ratio biomarkers computed from per-pixel
//! segmentation probabilities.
//!
//! The point estimate is the ratio of soft volumes of two nested regions.
//! Intervals come from split conformal prediction (CQR, ACQR), from a Markov
//! bound on the estimator's squared error, from validation quantiles of
//! calibration error, or from a composite of the last two under a split
//! miscoverage budget. Pixel resampling baselines, a seeded synthetic
//! generator and evaluation summaries are included.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

pub mod baselines;
pub mod calibration;
pub mod care;
pub mod conformal;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod interval;
pub mod io;
pub mod methods;
pub mod profile;
pub mod quantile;
pub mod rng;
pub mod scalar;
pub mod synth;
pub mod volume;

pub use baselines::{bootstrap_interval, subsample_interval, Resample, ResampleConfig};
pub use calibration::{
    calibration_interval, ece, fit_calibration_quantiles, volume_bias, BinnedCalibrationStats, CalibrationBounds,
    CalibrationSource, DEFAULT_BINS,
};
pub use care::{
    care_interval, decompose_uncertainty, fit_profile, grid_search, grid_splits, threshold_alarm, Alarm,
    Decomposition, GridCandidate, GridOutcome, InstanceSummary, ProfileOptions,
};
pub use conformal::{
    acqr_interval, cqr_interval, fit_acqr, fit_cqr, uncertainty_measure, AcqrFit, UncertaintyKind, UncertaintySpec,
};
pub use error::{Error, Result};
pub use estimators::{
    debiased_ratio, debiased_ratio_clipped, labeled_ratio, markov_interval, point_ratio, ratio_moments,
    squared_error_estimate, RatioMoments,
};
pub use eval::{build_report, compare_methods, coverage_rate, stratify_by_size, CoverageReport, Stratum, StratumSummary};
pub use interval::{IntervalEstimate, Method};
pub use methods::{estimate, MethodSpec};
pub use profile::{BudgetSplit, CalibrationProfile};
pub use quantile::{conformal_quantile, nearest_rank_quantile};
pub use scalar::{ExactSum, Scalar};
pub use synth::{generate, generate_range, SynthConfig, SynthInstance};
pub use volume::{soft_volume, Channel, InstanceVolume, Labels};

pub type Volume = InstanceVolume<f64>;
pub type Volume32 = InstanceVolume<f32>;
pub type Interval = IntervalEstimate<f64>;
pub type Interval32 = IntervalEstimate<f32>;
pub type Profile = CalibrationProfile<f64>;
pub type Profile32 = CalibrationProfile<f32>;
pub type Moments = RatioMoments<f64>;
pub type Split = BudgetSplit<f64>;
pub type Report = CoverageReport<f64>;
