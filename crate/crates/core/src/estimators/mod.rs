//! Point estimates, standard errors and Wald intervals for the coefficient
//! on the primary predictor.
//!
//! Every estimator is a pure function of `(dataset, config)`. The
//! supervised variants are the same code run on the labeled rows alone.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SemiSupervisedDataset;
use crate::error::EstimatorError;
use crate::linalg::{CrossProducts, DesignMatrix};
use crate::normal::two_sided_critical;
use crate::solver::{lasso_gram, LassoGram, SolverConfig};
use crate::tuning;

mod dfa;
mod dr;
mod plugin;
pub(crate) mod sr;

pub use dfa::ss_dfa;
pub use dr::ss_dr;
pub use plugin::{lasso_plugin, plug_in_theta};
pub use sr::{ss_sr, ss_sr_modified};

/// Relative threshold below which a Lasso coefficient counts as zero when
/// sizing supports.
pub const SUPPORT_THRESHOLD: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorId {
    /// Coefficient on Z from a supervised Lasso of Y on (Z, W). Point only.
    LassoPlugin,
    /// Ratio `sum v Y / sum v^2` with `v` the residual of a pooled Lasso of
    /// Z on W. Point only.
    PlugIn,
    Sr,
    SsSr,
    SsSrMod,
    Dfa,
    SsDfa,
    Dr,
    SsDr,
}

impl EstimatorId {
    pub const ALL: [EstimatorId; 9] = [
        EstimatorId::LassoPlugin,
        EstimatorId::PlugIn,
        EstimatorId::Sr,
        EstimatorId::SsSr,
        EstimatorId::SsSrMod,
        EstimatorId::Dfa,
        EstimatorId::SsDfa,
        EstimatorId::Dr,
        EstimatorId::SsDr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorId::LassoPlugin => "lasso_plugin",
            EstimatorId::PlugIn => "plug_in",
            EstimatorId::Sr => "sr",
            EstimatorId::SsSr => "ss_sr",
            EstimatorId::SsSrMod => "ss_sr_mod",
            EstimatorId::Dfa => "dfa",
            EstimatorId::SsDfa => "ss_dfa",
            EstimatorId::Dr => "dr",
            EstimatorId::SsDr => "ss_dr",
        }
    }

    /// Supervised ids ignore unlabeled rows.
    pub fn is_supervised(self) -> bool {
        matches!(
            self,
            EstimatorId::LassoPlugin | EstimatorId::Sr | EstimatorId::Dfa | EstimatorId::Dr
        )
    }

    /// Estimators that report no standard error or interval.
    pub fn is_point_only(self) -> bool {
        matches!(self, EstimatorId::LassoPlugin | EstimatorId::PlugIn)
    }
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EstimatorId::ALL
            .iter()
            .copied()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = EstimatorId::ALL.iter().map(|id| id.as_str()).collect();
                format!("unknown estimator '{s}' (valid: {})", valid.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    Fixed(f64),
    CrossValidated { folds: usize },
}

/// Penalty of the debiasing program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UPolicy {
    Fixed(f64),
    /// `grid` holds multipliers of the rate `rms(Y) * sqrt(log d / n_xi)`,
    /// where `n_xi` is the number of rows behind `xi`. The smallest
    /// multiplier whose program is feasible is used, times `safety_factor`.
    FeasibilityPath { grid: Vec<f64>, safety_factor: f64 },
}

impl UPolicy {
    /// Multipliers `2^(k/2)` for `k = -6..=8`, i.e. an eighth of the rate up
    /// to sixteen times it, with safety factor 1.5. The rate itself carries
    /// the unknown `|gamma*|_2` only through `rms(Y)`, which overstates it,
    /// so the grid reaches well below one.
    pub fn default_path() -> UPolicy {
        UPolicy::FeasibilityPath {
            grid: (-6..=8).map(|k| crate::math::powf(2.0, k as f64 / 2.0)).collect(),
            safety_factor: 1.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceMode {
    NoShift,
    CovariateShift,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub lambda_beta_policy: LambdaPolicy,
    pub lambda_u_policy: UPolicy,
    pub lambda_gamma_policy: LambdaPolicy,
    pub variance_mode: VarianceMode,
    pub alpha: f64,
    pub split_seed: u64,
    pub cap_exponent_q: f64,
    pub dr_folds: usize,
    pub solver: SolverConfig,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            lambda_beta_policy: LambdaPolicy::CrossValidated { folds: 5 },
            lambda_u_policy: UPolicy::default_path(),
            lambda_gamma_policy: LambdaPolicy::CrossValidated { folds: 5 },
            variance_mode: VarianceMode::NoShift,
            alpha: 0.05,
            split_seed: 0,
            cap_exponent_q: 0.2,
            dr_folds: 5,
            solver: SolverConfig::default(),
        }
    }
}

fn check_lambda_policy(name: &str, p: &LambdaPolicy) -> Result<(), EstimatorError> {
    match *p {
        LambdaPolicy::Fixed(v) if !(v >= 0.0 && v.is_finite()) => {
            Err(EstimatorError::Config(format!("{name}: fixed penalty must be finite and >= 0, got {v}")))
        }
        LambdaPolicy::CrossValidated { folds } if folds < 2 => {
            Err(EstimatorError::Config(format!("{name}: cross-validation needs at least 2 folds")))
        }
        _ => Ok(()),
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(EstimatorError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.dr_folds < 2 {
            return Err(EstimatorError::Config(format!("dr_folds must be >= 2, got {}", self.dr_folds)));
        }
        if !(self.cap_exponent_q > 0.0 && self.cap_exponent_q < 0.5) {
            return Err(EstimatorError::Config(format!(
                "cap exponent q must lie in (0, 0.5), got {}",
                self.cap_exponent_q
            )));
        }
        check_lambda_policy("lambda_beta", &self.lambda_beta_policy)?;
        check_lambda_policy("lambda_gamma", &self.lambda_gamma_policy)?;
        match &self.lambda_u_policy {
            UPolicy::Fixed(v) if !(*v >= 0.0 && v.is_finite()) => {
                return Err(EstimatorError::Config(format!("lambda_u must be finite and >= 0, got {v}")));
            }
            UPolicy::FeasibilityPath { grid, safety_factor } => {
                if grid.is_empty() || grid.iter().any(|g| !(*g >= 0.0 && g.is_finite())) {
                    return Err(EstimatorError::Config("lambda_u grid must be nonempty, finite and >= 0".into()));
                }
                if !(*safety_factor >= 1.0 && safety_factor.is_finite()) {
                    return Err(EstimatorError::Config(format!(
                        "lambda_u safety factor must be finite and >= 1, got {safety_factor}"
                    )));
                }
            }
            _ => {}
        }
        self.solver
            .validate()
            .map_err(|e| EstimatorError::Config(e.to_string()))
    }
}

/// Everything an estimator reports besides the interval itself.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Diagnostics {
    pub n_labeled: usize,
    pub n_unlabeled: usize,
    pub d: usize,
    pub beta_support_size: Option<usize>,
    /// Support size of the outcome Lasso (degrees of freedom in SS-DFA).
    pub gamma_support_size: Option<usize>,
    pub sigma_v1_sq: Option<f64>,
    pub sigma_v2_sq: Option<f64>,
    /// Row cap of the modified sparsity-robust program.
    pub cap: Option<f64>,
    /// `1 - q/n` of SS-DFA.
    pub df_factor: Option<f64>,
    pub solver_iterations: BTreeMap<String, usize>,
    pub chosen_lambdas: BTreeMap<String, f64>,
    pub split_seed: u64,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorId,
    pub theta_hat: f64,
    /// Absent for point-only estimators.
    pub std_error: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub alpha: f64,
    pub diagnostics: Diagnostics,
}

impl EstimateReport {
    pub(crate) fn wald(
        estimator: EstimatorId,
        theta_hat: f64,
        std_error: f64,
        alpha: f64,
        diagnostics: Diagnostics,
    ) -> Result<EstimateReport, EstimatorError> {
        if !theta_hat.is_finite() || !(std_error.is_finite() && std_error >= 0.0) {
            return Err(EstimatorError::DegenerateDenominator(format!(
                "{estimator}: estimate {theta_hat} with standard error {std_error}"
            )));
        }
        let half = two_sided_critical(alpha) * std_error;
        Ok(EstimateReport {
            estimator,
            theta_hat,
            std_error: Some(std_error),
            ci_lower: Some(theta_hat - half),
            ci_upper: Some(theta_hat + half),
            alpha,
            diagnostics,
        })
    }

    pub(crate) fn point(
        estimator: EstimatorId,
        theta_hat: f64,
        alpha: f64,
        diagnostics: Diagnostics,
    ) -> Result<EstimateReport, EstimatorError> {
        if !theta_hat.is_finite() {
            return Err(EstimatorError::DegenerateDenominator(format!("{estimator}: estimate {theta_hat}")));
        }
        Ok(EstimateReport {
            estimator,
            theta_hat,
            std_error: None,
            ci_lower: None,
            ci_upper: None,
            alpha,
            diagnostics,
        })
    }

    /// Whether the interval contains `value`; `None` for point estimates.
    pub fn covers(&self, value: f64) -> Option<bool> {
        match (self.ci_lower, self.ci_upper) {
            (Some(lo), Some(hi)) => Some(lo <= value && value <= hi),
            _ => None,
        }
    }

    pub fn ci_length(&self) -> Option<f64> {
        match (self.ci_lower, self.ci_upper) {
            (Some(lo), Some(hi)) => Some(hi - lo),
            _ => None,
        }
    }
}

/// Run estimator `id`. Supervised ids drop the unlabeled rows first.
pub fn estimate(
    id: EstimatorId,
    dataset: &SemiSupervisedDataset,
    config: &EstimatorConfig,
) -> Result<EstimateReport, EstimatorError> {
    let supervised;
    let data = if id.is_supervised() && dataset.m() > 0 {
        supervised = dataset.labeled_only();
        &supervised
    } else {
        dataset
    };
    let mut report = match id {
        EstimatorId::LassoPlugin => lasso_plugin(data, config),
        EstimatorId::PlugIn => plug_in_theta(data, config),
        EstimatorId::Sr | EstimatorId::SsSr => ss_sr(data, config),
        EstimatorId::SsSrMod => ss_sr_modified(data, config),
        EstimatorId::Dfa | EstimatorId::SsDfa => ss_dfa(data, config),
        EstimatorId::Dr | EstimatorId::SsDr => ss_dr(data, config),
    }?;
    report.estimator = id;
    if id.is_supervised() && dataset.m() > 0 {
        report
            .diagnostics
            .notes
            .push(format!("{} unlabeled rows ignored by supervised estimator", dataset.m()));
    }
    Ok(report)
}

pub(crate) fn base_diagnostics(dataset: &SemiSupervisedDataset, config: &EstimatorConfig) -> Diagnostics {
    Diagnostics {
        n_labeled: dataset.n(),
        n_unlabeled: dataset.m(),
        d: dataset.d(),
        split_seed: config.split_seed,
        ..Diagnostics::default()
    }
}

pub(crate) fn require_controls(dataset: &SemiSupervisedDataset, who: &str) -> Result<(), EstimatorError> {
    if dataset.d() == 0 {
        return Err(EstimatorError::Config(format!("{who} needs at least one control covariate")));
    }
    Ok(())
}

/// A Lasso fit with its penalty and iteration count.
pub(crate) struct LassoFit {
    pub coef: Vec<f64>,
    pub lambda: f64,
    pub iterations: usize,
}

impl LassoFit {
    pub fn support(&self) -> usize {
        support_size(&self.coef)
    }
}

pub(crate) fn support_size(v: &[f64]) -> usize {
    let scale = crate::math::max_abs(v);
    if scale == 0.0 {
        return 0;
    }
    v.iter().filter(|c| c.abs() > SUPPORT_THRESHOLD * scale).count()
}

/// Fit the Lasso of `y` on `x` over `rows`, choosing the penalty by
/// `policy`.
pub(crate) fn fit_lasso(
    label: &str,
    policy: &LambdaPolicy,
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    seed: u64,
    cfg: &SolverConfig,
) -> Result<LassoFit, EstimatorError> {
    let full = CrossProducts::compute(x, y, Some(rows));
    let lambda = match *policy {
        LambdaPolicy::Fixed(v) => v,
        LambdaPolicy::CrossValidated { folds } => {
            tuning::cv_lasso_with_full(x, y, rows, &full, folds, seed, cfg)
                .map_err(|e| match e {
                    EstimatorError::Tuning(msg) => EstimatorError::Tuning(format!("{label}: {msg}")),
                    other => other,
                })?
                .lambda
        }
    };
    fit_lasso_fixed(label, &LassoGram::from_cross_products(&full), lambda, cfg)
}

pub(crate) fn fit_lasso_fixed(
    label: &str,
    gram: &LassoGram,
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<LassoFit, EstimatorError> {
    let res = lasso_gram(gram, lambda, cfg, None)
        .and_then(|r| r.require_converged())
        .map_err(|e| EstimatorError::solver(format!("Lasso for {label}"), e))?;
    Ok(LassoFit {
        iterations: res.iterations,
        coef: res.coefficients,
        lambda,
    })
}

/// `z_i - w_i' beta` for the listed rows of `w`.
pub(crate) fn residuals(w: &DesignMatrix, z: &[f64], beta: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter()
        .map(|&i| z[i] - crate::math::dot(w.row(i), beta))
        .collect()
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    crate::math::mean(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_round_trip() {
        for id in EstimatorId::ALL {
            assert_eq!(id.as_str().parse::<EstimatorId>().unwrap(), id);
        }
        let err = "m9".parse::<EstimatorId>().unwrap_err();
        assert!(err.contains("ss_dfa"));
    }

    #[test]
    fn config_validation() {
        assert!(EstimatorConfig::default().validate().is_ok());
        let mut c = EstimatorConfig::default();
        c.alpha = 1.0;
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.dr_folds = 1;
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.cap_exponent_q = 0.5;
        assert!(c.validate().is_err());
        let mut c = EstimatorConfig::default();
        c.lambda_beta_policy = LambdaPolicy::Fixed(-1.0);
        assert!(c.validate().is_err());
    }

    #[test]
    fn wald_interval_width() {
        let r = EstimateReport::wald(EstimatorId::SsSr, 1.0, 0.1, 0.05, Diagnostics::default()).unwrap();
        let w = r.ci_length().unwrap();
        assert!((w - 2.0 * 1.959_963_984_540_054 * 0.1).abs() < 1e-12);
        assert_eq!(r.covers(1.1), Some(true));
        assert_eq!(r.covers(1.3), Some(false));
    }
}
