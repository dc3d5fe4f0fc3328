//! Fitted validation state reused at test time.

use crate::calibration::CalibrationSource;
use crate::conformal::{AcqrFit, UncertaintySpec};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// A split of the miscoverage budget `1 - confidence` into an estimation
/// part `alpha` and a calibration part `delta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit<T> {
    pub alpha: T,
    pub delta: T,
    pub confidence: T,
}

const BUDGET_TOL: f64 = 1e-12;

impl<T: Scalar> BudgetSplit<T> {
    pub fn new(alpha: T, delta: T, confidence: T) -> Result<Self> {
        let (zero, one) = (T::zero(), T::one());
        if !(alpha > zero && delta > zero && alpha + delta < one) {
            return Err(Error::BadConfidenceBudget(format!(
                "need alpha > 0, delta > 0 and alpha + delta < 1, got ({alpha}, {delta})"
            )));
        }
        if !((alpha + delta - (one - confidence)).abs() < T::lit(BUDGET_TOL)) {
            return Err(Error::BadConfidenceBudget(format!(
                "alpha + delta = {} does not match 1 - confidence = {}",
                alpha + delta,
                one - confidence
            )));
        }
        Ok(Self { alpha, delta, confidence })
    }

    /// Split with `delta = (1 - confidence) - alpha`.
    pub fn from_alpha(alpha: T, confidence: T) -> Result<Self> {
        Self::new(alpha, T::one() - confidence - alpha, confidence)
    }
}

/// Everything fitted on the validation set: calibration quantiles at the
/// chosen split, plus the CQR and ACQR quantiles at `delta_conformal`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationProfile<T> {
    pub source: CalibrationSource,
    pub n_bins: usize,
    pub confidence: T,
    /// Estimation budget of the chosen split.
    pub alpha: T,
    /// Calibration budget the quantiles `q_a`, `q_b` were fitted at.
    pub delta: T,
    pub q_a: T,
    pub q_b: T,
    /// Miscoverage used by CQR and ACQR, `1 - confidence`.
    pub delta_conformal: T,
    pub q_residual: T,
    pub uncertainty: UncertaintySpec<T>,
    pub q_score: T,
    pub lambda: T,
    pub lambda_fallback: bool,
    pub n_val: usize,
    pub grid_step: T,
    /// False when no grid split reached the target coverage on validation.
    pub grid_qualified: bool,
}

impl<T: Scalar> CalibrationProfile<T> {
    pub fn split(&self) -> Result<BudgetSplit<T>> {
        BudgetSplit::new(self.alpha, self.delta, self.confidence)
    }

    pub fn v_t_max(&self) -> T {
        self.uncertainty.v_t_max
    }

    pub fn acqr_fit(&self) -> AcqrFit<T> {
        AcqrFit {
            spec: self.uncertainty,
            q_score: self.q_score,
            lambda: self.lambda,
            lambda_fallback: self.lambda_fallback,
            delta: self.delta_conformal,
        }
    }

    /// ACQR state with the unit measure. Its score quantile is the CQR
    /// residual quantile, since unit scores are the residuals themselves.
    pub fn acqr_unit_fit(&self) -> AcqrFit<T> {
        AcqrFit {
            spec: UncertaintySpec::unit(),
            q_score: self.q_residual,
            lambda: T::one(),
            lambda_fallback: false,
            delta: self.delta_conformal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("profile: {what}")));
        let nonneg = |q: T| q >= T::zero();
        if !(nonneg(self.q_a) && nonneg(self.q_b) && nonneg(self.q_residual) && nonneg(self.q_score)) {
            return bad("quantiles must be >= 0");
        }
        if self.n_val < 1 {
            return bad("n_val must be >= 1");
        }
        if self.n_bins < 1 {
            return bad("bins must be >= 1");
        }
        if !(self.delta_conformal > T::zero() && self.delta_conformal < T::one()) {
            return bad("delta_conformal must lie in (0, 1)");
        }
        if !(self.lambda > T::zero() && self.lambda.is_finite()) {
            return bad("lambda must be finite and > 0");
        }
        self.uncertainty.validate()?;
        self.split().map(|_| ())
    }
}
