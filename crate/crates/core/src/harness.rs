//! Monte Carlo driver: repeated draws from a scenario, every requested
//! estimator on each draw, and the summary metrics of the simulation
//! tables and power curves.
//!
//! Replication `r` uses seed `base_seed ^ r` both for the data and for the
//! estimators' splits, so all estimators in a replication see the same
//! instance. The functions here run replications one after another; the
//! `semisup` crate runs them in parallel and feeds the records back into
//! [`summarize`] and [`power_curve`], which sort by replication index first.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::SemiSupervisedDataset;
use crate::error::{DataError, EstimatorError};
use crate::estimators::{estimate, EstimateReport, EstimatorConfig, EstimatorId};
use crate::math::sqrt;
use crate::simgen::{generate, ScenarioSpec};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("invalid experiment plan: {0}")]
    Plan(String),
    #[error("data generation failed in replication {rep}: {source}")]
    Data {
        rep: usize,
        #[source]
        source: DataError,
    },
    #[error("every replication failed for {estimator}; first error: {first_error}")]
    AllFailed { estimator: EstimatorId, first_error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    /// `scenario.seed` is ignored; replication seeds derive from `base_seed`.
    pub scenario: ScenarioSpec,
    pub estimators: Vec<EstimatorId>,
    pub reps: usize,
    pub base_seed: u64,
    pub alpha: f64,
    /// Shifts of the null value, power mode only.
    #[serde(default)]
    pub h_grid: Vec<f64>,
    pub config: EstimatorConfig,
}

impl ExperimentPlan {
    pub fn new(scenario: ScenarioSpec, estimators: Vec<EstimatorId>, reps: usize, base_seed: u64) -> ExperimentPlan {
        ExperimentPlan {
            scenario,
            estimators,
            reps,
            base_seed,
            alpha: 0.05,
            h_grid: Vec::new(),
            config: EstimatorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.reps == 0 {
            return Err(HarnessError::Plan("reps must be at least 1".into()));
        }
        if self.estimators.is_empty() {
            return Err(HarnessError::Plan("no estimators requested".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HarnessError::Plan(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.h_grid.iter().any(|h| !h.is_finite()) {
            return Err(HarnessError::Plan("h grid must be finite".into()));
        }
        self.scenario
            .validate()
            .map_err(|e| HarnessError::Plan(e.to_string()))?;
        self.config
            .validate()
            .map_err(|e| HarnessError::Plan(e.to_string()))
    }

    fn validate_power(&self) -> Result<(), HarnessError> {
        self.validate()?;
        if self.h_grid.is_empty() {
            return Err(HarnessError::Plan("power mode needs a nonempty h grid".into()));
        }
        if let Some(id) = self.estimators.iter().find(|id| id.is_point_only()) {
            return Err(HarnessError::Plan(format!("{id} reports no interval and cannot be tested")));
        }
        Ok(())
    }

    /// Estimator settings for replication `rep`: the plan's level and the
    /// replication seed.
    pub fn config_for(&self, rep: usize) -> EstimatorConfig {
        EstimatorConfig {
            alpha: self.alpha,
            split_seed: replication_seed(self.base_seed, rep),
            ..self.config.clone()
        }
    }
}

pub fn replication_seed(base_seed: u64, rep: usize) -> u64 {
    base_seed ^ rep as u64
}

/// The part of an [`EstimateReport`] a summary needs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepEstimate {
    pub theta_hat: f64,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
}

impl From<&EstimateReport> for RepEstimate {
    fn from(r: &EstimateReport) -> Self {
        RepEstimate {
            theta_hat: r.theta_hat,
            ci_lower: r.ci_lower,
            ci_upper: r.ci_upper,
        }
    }
}

impl RepEstimate {
    fn interval(&self) -> Option<(f64, f64)> {
        self.ci_lower.zip(self.ci_upper)
    }
}

/// All estimator outcomes of one replication, in plan order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    pub theta_true: f64,
    pub outcomes: Vec<(EstimatorId, Result<RepEstimate, String>)>,
}

/// Signature of an estimator runner; [`estimate`] in production, stubs in
/// tests.
pub type Runner<'a> = dyn Fn(EstimatorId, &SemiSupervisedDataset, &EstimatorConfig) -> Result<EstimateReport, EstimatorError>
    + Sync
    + 'a;

/// Generate replication `rep` and run every estimator of the plan on it.
pub fn run_replication(plan: &ExperimentPlan, rep: usize, runner: &Runner<'_>) -> Result<RepRecord, HarnessError> {
    let seed = replication_seed(plan.base_seed, rep);
    let spec = ScenarioSpec {
        seed,
        ..plan.scenario.clone()
    };
    let inst = generate(&spec).map_err(|source| HarnessError::Data { rep, source })?;
    let config = plan.config_for(rep);
    let outcomes = plan
        .estimators
        .iter()
        .map(|&id| {
            let out = runner(id, &inst.dataset, &config)
                .map(|r| RepEstimate::from(&r))
                .map_err(|e| e.to_string());
            (id, out)
        })
        .collect();
    Ok(RepRecord {
        rep,
        theta_true: inst.theta_true,
        outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub estimator: EstimatorId,
    pub bias: f64,
    pub rmse: f64,
    /// Mean interval length; absent for point-only estimators.
    pub length: Option<f64>,
    pub coverage: Option<f64>,
    /// Binomial standard error `sqrt(c (1 - c) / reps)` of the coverage.
    pub coverage_se: Option<f64>,
    pub reps_used: usize,
    pub rep_failures: usize,
    /// First failure message, if any replication failed.
    pub first_failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub plan: ExperimentPlan,
    pub paper_scale: bool,
    pub rows: Vec<SummaryRow>,
}

impl SummaryTable {
    pub fn row(&self, id: EstimatorId) -> Option<&SummaryRow> {
        self.rows.iter().find(|r| r.estimator == id)
    }
}

/// Successful estimates of `id` with their targets, and the failures.
fn collect(records: &[RepRecord], id: EstimatorId) -> (Vec<(f64, RepEstimate)>, Vec<String>) {
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for rec in records {
        for (eid, out) in &rec.outcomes {
            if *eid != id {
                continue;
            }
            match out {
                Ok(e) => ok.push((rec.theta_true, *e)),
                Err(msg) => failed.push(format!("replication {}: {msg}", rec.rep)),
            }
        }
    }
    (ok, failed)
}

fn sorted(records: &[RepRecord]) -> Vec<RepRecord> {
    let mut v = records.to_vec();
    v.sort_by_key(|r| r.rep);
    v
}

/// Bias, RMSE, mean length and coverage per estimator. Failed replications
/// are excluded from the averages and counted.
pub fn summarize(plan: &ExperimentPlan, records: &[RepRecord]) -> Result<SummaryTable, HarnessError> {
    let records = sorted(records);
    let mut rows = Vec::with_capacity(plan.estimators.len());
    for &id in &plan.estimators {
        let (ok, failed) = collect(&records, id);
        if ok.is_empty() {
            return Err(HarnessError::AllFailed {
                estimator: id,
                first_error: failed.first().cloned().unwrap_or_else(|| "no replications".into()),
            });
        }
        let k = ok.len() as f64;
        let bias = ok.iter().map(|(t, e)| e.theta_hat - t).sum::<f64>() / k;
        let rmse = sqrt(ok.iter().map(|(t, e)| (e.theta_hat - t) * (e.theta_hat - t)).sum::<f64>() / k);
        let intervals: Option<Vec<(f64, (f64, f64))>> = ok.iter().map(|(t, e)| e.interval().map(|iv| (*t, iv))).collect();
        let (length, coverage, coverage_se) = match intervals {
            Some(iv) => {
                let length = iv.iter().map(|(_, (lo, hi))| hi - lo).sum::<f64>() / k;
                let c = iv.iter().filter(|(t, (lo, hi))| lo <= t && t <= hi).count() as f64 / k;
                (Some(length), Some(c), Some(sqrt(c * (1.0 - c) / k)))
            }
            None => (None, None, None),
        };
        rows.push(SummaryRow {
            estimator: id,
            bias,
            rmse,
            length,
            coverage,
            coverage_se,
            reps_used: ok.len(),
            rep_failures: failed.len(),
            first_failure: failed.into_iter().next(),
        });
    }
    Ok(SummaryTable {
        plan: plan.clone(),
        paper_scale: plan.scenario.is_paper_scale(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub estimator: EstimatorId,
    pub h: f64,
    pub rejection_rate: f64,
    pub reps_used: usize,
}

/// Rejection rates of `H0: theta = theta_true + h`, sorted by estimator
/// and then `h`. The same replications serve every `h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerCurve {
    pub plan: ExperimentPlan,
    pub paper_scale: bool,
    pub points: Vec<PowerPoint>,
    pub rep_failures: Vec<(EstimatorId, usize)>,
}

impl PowerCurve {
    pub fn rate(&self, id: EstimatorId, h: f64) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.estimator == id && p.h == h)
            .map(|p| p.rejection_rate)
    }
}

/// Reject when the null value falls outside the interval.
pub fn power_curve(plan: &ExperimentPlan, records: &[RepRecord]) -> Result<PowerCurve, HarnessError> {
    let records = sorted(records);
    let mut ids = plan.estimators.clone();
    ids.sort();
    ids.dedup();
    let mut hs = plan.h_grid.clone();
    hs.sort_by(f64::total_cmp);
    let mut points = Vec::new();
    let mut rep_failures = Vec::new();
    for id in ids {
        let (ok, failed) = collect(&records, id);
        if ok.is_empty() {
            return Err(HarnessError::AllFailed {
                estimator: id,
                first_error: failed.first().cloned().unwrap_or_else(|| "no replications".into()),
            });
        }
        rep_failures.push((id, failed.len()));
        for &h in &hs {
            let rejected = ok
                .iter()
                .filter(|(t, e)| match e.interval() {
                    Some((lo, hi)) => !(lo <= t + h && t + h <= hi),
                    None => false,
                })
                .count();
            points.push(PowerPoint {
                estimator: id,
                h,
                rejection_rate: rejected as f64 / ok.len() as f64,
                reps_used: ok.len(),
            });
        }
    }
    Ok(PowerCurve {
        plan: plan.clone(),
        paper_scale: plan.scenario.is_paper_scale(),
        points,
        rep_failures,
    })
}

/// Run all replications in order with `runner`.
pub fn run_records(plan: &ExperimentPlan, runner: &Runner<'_>) -> Result<Vec<RepRecord>, HarnessError> {
    (0..plan.reps).map(|rep| run_replication(plan, rep, runner)).collect()
}

pub fn run_table(plan: &ExperimentPlan) -> Result<SummaryTable, HarnessError> {
    run_table_with(plan, &estimate)
}

pub fn run_table_with(plan: &ExperimentPlan, runner: &Runner<'_>) -> Result<SummaryTable, HarnessError> {
    plan.validate()?;
    summarize(plan, &run_records(plan, runner)?)
}

pub fn run_power(plan: &ExperimentPlan) -> Result<PowerCurve, HarnessError> {
    run_power_with(plan, &estimate)
}

pub fn run_power_with(plan: &ExperimentPlan, runner: &Runner<'_>) -> Result<PowerCurve, HarnessError> {
    plan.validate_power()?;
    power_curve(plan, &run_records(plan, runner)?)
}

/// Power-mode validation, for drivers that collect records themselves.
pub fn validate_power_plan(plan: &ExperimentPlan) -> Result<(), HarnessError> {
    plan.validate_power()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::Diagnostics;
    use crate::simgen::{true_theta, ModelId};

    fn exact(id: EstimatorId, ds: &SemiSupervisedDataset, cfg: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
        let _ = ds;
        let t = true_theta(ModelId::M1);
        Ok(EstimateReport {
            estimator: id,
            theta_hat: t,
            std_error: Some(0.1),
            ci_lower: Some(t - 0.2),
            ci_upper: Some(t + 0.2),
            alpha: cfg.alpha,
            diagnostics: Diagnostics::default(),
        })
    }

    fn plan(reps: usize) -> ExperimentPlan {
        ExperimentPlan::new(ScenarioSpec::new(ModelId::M1, 10, 5, 12, 0), alloc::vec![EstimatorId::SsSr], reps, 3)
    }

    #[test]
    fn exact_stub_gives_zero_error_full_coverage() {
        let t = run_table_with(&plan(1), &exact).unwrap();
        let row = &t.rows[0];
        assert_eq!((row.bias, row.rmse, row.coverage), (0.0, 0.0, Some(1.0)));
        assert!((row.length.unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn power_stub() {
        let mut p = plan(4);
        p.h_grid = alloc::vec![1000.0, 0.0];
        let c = run_power_with(&p, &exact).unwrap();
        assert_eq!(c.rate(EstimatorId::SsSr, 0.0), Some(0.0));
        assert_eq!(c.rate(EstimatorId::SsSr, 1000.0), Some(1.0));
        assert_eq!(c.points[0].h, 0.0);
    }

    #[test]
    fn failures_are_counted_then_fatal_when_total() {
        let flaky = |id: EstimatorId, ds: &SemiSupervisedDataset, cfg: &EstimatorConfig| {
            if cfg.split_seed.is_multiple_of(2) {
                Err(EstimatorError::Tuning("stub".into()))
            } else {
                exact(id, ds, cfg)
            }
        };
        let t = run_table_with(&plan(4), &flaky).unwrap();
        assert_eq!(t.rows[0].rep_failures, 2);
        assert_eq!(t.rows[0].reps_used, 2);
        let never = |_: EstimatorId, _: &SemiSupervisedDataset, _: &EstimatorConfig| -> Result<EstimateReport, EstimatorError> {
            Err(EstimatorError::Tuning("stub".into()))
        };
        assert!(matches!(run_table_with(&plan(2), &never), Err(HarnessError::AllFailed { .. })));
    }

    #[test]
    fn seed_law() {
        assert_eq!(replication_seed(7, 3), 4);
        assert_eq!(plan(1).config_for(5).split_seed, 6);
    }
}
