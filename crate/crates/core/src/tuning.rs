//! Penalty selection: K-fold cross-validation for the Lasso penalties and
//! the feasibility path for the debiasing direction.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dataset::{make_split, partition, SemiSupervisedDataset, SplitScheme};
use crate::error::EstimatorError;
use crate::estimators::{EstimatorConfig, LambdaPolicy, UPolicy};
use crate::linalg::{CrossProducts, DesignMatrix};
use crate::math::{dot, exp, ln, sqrt};
use crate::rng::{streams, CounterRng};
use crate::solver::{
    lasso_critical_lambda, lasso_path, linf_feasibility_threshold, LassoGram, SolverConfig,
};

/// Stationarity target of the fits inside cross-validation.
pub const CV_KKT_TOLERANCE: f64 = 1e-4;

/// Points on the cross-validation grid.
pub const CV_GRID_SIZE: usize = 50;
/// Smallest grid value as a fraction of the critical penalty.
pub const CV_GRID_FLOOR: f64 = 1e-4;

/// Log-spaced grid from `hi` down to `hi * floor`, `size` points.
pub fn log_grid(hi: f64, floor: f64, size: usize) -> Vec<f64> {
    if size == 1 {
        return alloc::vec![hi];
    }
    let step = ln(floor) / (size - 1) as f64;
    (0..size).map(|k| hi * exp(step * k as f64)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOutcome {
    pub lambda: f64,
    pub grid: Vec<f64>,
    /// Mean out-of-fold squared error per grid point; `None` where some
    /// fold's path was truncated before reaching that penalty.
    pub cv_error: Vec<Option<f64>>,
}

/// K-fold cross-validation of the Lasso of `y` on `x` restricted to `rows`,
/// over `grid` (descending). Folds are a seeded random partition of `rows`.
///
/// The selected penalty minimizes the mean out-of-fold squared error; ties
/// go to the larger penalty.
pub fn cv_lasso_on_grid(
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    grid: &[f64],
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvOutcome, EstimatorError> {
    let full = CrossProducts::compute(x, y, Some(rows));
    cv_on_grid(x, y, rows, &full, grid, folds, seed, cfg)
}

#[allow(clippy::too_many_arguments)]
fn cv_on_grid(
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    full: &CrossProducts,
    grid: &[f64],
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvOutcome, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::Tuning("empty penalty grid".into()));
    }
    if grid.len() == 1 {
        return Ok(CvOutcome {
            lambda: grid[0],
            grid: grid.to_vec(),
            cv_error: alloc::vec![None],
        });
    }
    if folds < 2 || rows.len() < 2 * folds {
        return Err(EstimatorError::Tuning(format!(
            "{}-fold cross-validation needs at least {} rows, got {}",
            folds,
            2 * folds,
            rows.len()
        )));
    }
    // Held-out error is insensitive to the last digits of each fit, so the
    // path runs at a looser stationarity target than final fits.
    let cfg = &SolverConfig {
        kkt_tolerance: cfg.kkt_tolerance.max(CV_KKT_TOLERANCE),
        ..*cfg
    };
    let mut rng = CounterRng::new(seed, streams::CV_FOLDS);
    let parts = partition(rows.len(), folds, &mut rng);
    let mut total = alloc::vec![0.0; grid.len()];
    let mut valid = alloc::vec![true; grid.len()];
    for part in &parts {
        let held: Vec<usize> = part.iter().map(|&k| rows[k]).collect();
        let held_cp = CrossProducts::compute(x, y, Some(&held));
        let train = LassoGram::from_cross_products(&full.minus(&held_cp));
        let n_train = full.count - held_cp.count;
        let max_active = n_train.saturating_sub(1).min(x.cols());
        let path = lasso_path(&train, grid, cfg, max_active);
        for (k, fit) in path.iter().enumerate() {
            match fit {
                Some(res) => {
                    let b = &res.coefficients;
                    let gb = held_cp.xtx.mul_vec(b);
                    total[k] += held_cp.yty - 2.0 * dot(b, &held_cp.xty) + dot(b, &gb);
                }
                None => valid[k] = false,
            }
        }
    }
    let count = rows.len() as f64;
    let cv_error: Vec<Option<f64>> = total
        .iter()
        .zip(&valid)
        .map(|(t, ok)| if *ok { Some(t / count) } else { None })
        .collect();
    let mut order: Vec<usize> = (0..grid.len()).collect();
    // Visit penalties from largest to smallest so that ties keep the larger.
    order.sort_by(|&a, &b| grid[b].total_cmp(&grid[a]));
    let mut best: Option<(usize, f64)> = None;
    for k in order {
        if let Some(e) = cv_error[k] {
            if best.is_none_or(|(_, be)| e < be) {
                best = Some((k, e));
            }
        }
    }
    let (k, _) = best.ok_or_else(|| {
        EstimatorError::Tuning("no penalty on the grid produced a converged fit in every fold".into())
    })?;
    Ok(CvOutcome {
        lambda: grid[k],
        grid: grid.to_vec(),
        cv_error,
    })
}

/// Cross-validated Lasso penalty on the standard grid: `CV_GRID_SIZE`
/// log-spaced points over `[CV_GRID_FLOOR, 1]` times the critical penalty
/// of the full row set.
pub fn cv_lasso(
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvOutcome, EstimatorError> {
    let full = CrossProducts::compute(x, y, Some(rows));
    cv_lasso_with_full(x, y, rows, &full, folds, seed, cfg)
}

/// [`cv_lasso`] with the cross products of `rows` already computed.
pub(crate) fn cv_lasso_with_full(
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    full: &CrossProducts,
    folds: usize,
    seed: u64,
    cfg: &SolverConfig,
) -> Result<CvOutcome, EstimatorError> {
    let lambda_max = lasso_critical_lambda(&LassoGram::from_cross_products(full));
    if lambda_max == 0.0 {
        // The response is orthogonal to every column: zero is optimal at
        // every penalty.
        return Ok(CvOutcome {
            lambda: 0.0,
            grid: alloc::vec![0.0],
            cv_error: alloc::vec![None],
        });
    }
    let grid = log_grid(lambda_max, CV_GRID_FLOOR, CV_GRID_SIZE);
    cv_on_grid(x, y, rows, full, &grid, folds, seed, cfg)
}

/// Resolve a Lasso penalty policy for the regression of `y` on `x` over
/// `rows`.
pub fn resolve_lasso_lambda(
    policy: &LambdaPolicy,
    x: &DesignMatrix,
    y: &[f64],
    rows: &[usize],
    seed: u64,
    cfg: &SolverConfig,
) -> Result<f64, EstimatorError> {
    match *policy {
        LambdaPolicy::Fixed(v) => Ok(v),
        LambdaPolicy::CrossValidated { folds } => Ok(cv_lasso(x, y, rows, folds, seed, cfg)?.lambda),
    }
}

/// Reference scale for the debiasing penalty: the root mean square of the
/// outcome times `sqrt(log d / n)`.
pub fn u_rate(y: &[f64], d: usize) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    let ms = y.iter().map(|v| v * v).sum::<f64>() / y.len() as f64;
    sqrt(ms) * sqrt(ln(d.max(2) as f64) / y.len() as f64)
}

/// Smallest `base * c` over the multipliers `c` in `grid` for which the
/// constraint `|xi - S u|_inf <= lambda` admits a point, times
/// `safety_factor`.
pub fn feasibility_path_lambda(
    sigma: &DesignMatrix,
    xi: &[f64],
    base: f64,
    grid: &[f64],
    safety_factor: f64,
    cfg: &SolverConfig,
) -> Result<f64, EstimatorError> {
    if grid.is_empty() {
        return Err(EstimatorError::Tuning("empty debiasing penalty grid".into()));
    }
    let threshold = linf_feasibility_threshold(sigma, xi, cfg)
        .map_err(|e| EstimatorError::solver("feasibility threshold of the debiasing program", e))?;
    let mut values: Vec<f64> = grid.iter().map(|c| base * c).collect();
    values.sort_by(f64::total_cmp);
    let margin = cfg.feasibility_tolerance;
    values
        .into_iter()
        .find(|&v| threshold == 0.0 || v > threshold + margin)
        .map(|v| v * safety_factor)
        .ok_or_else(|| {
            EstimatorError::Tuning(format!(
                "no debiasing penalty on the grid is feasible (largest {:.4e}, needs more than {:.4e}); extend the grid upward",
                base * grid.iter().fold(f64::MIN, |a, b| a.max(*b)),
                threshold
            ))
        })
}

/// Which penalty [`select_lambda`] tunes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaTarget {
    /// Lasso of Z on W over all rows.
    Beta,
    /// Lasso of Y on X = (Z, W) over the labeled rows.
    Gamma,
    /// Debiasing penalty of the sparsity-robust estimator, on its two-way
    /// split.
    U,
}

/// Stand-alone penalty selection with the policies of `config`.
pub fn select_lambda(
    dataset: &SemiSupervisedDataset,
    which: LambdaTarget,
    config: &EstimatorConfig,
) -> Result<f64, EstimatorError> {
    config.validate()?;
    let seed = config.split_seed;
    match which {
        LambdaTarget::Beta => {
            let w = dataset.w_pooled();
            let z = dataset.z_pooled();
            let rows: Vec<usize> = (0..w.rows()).collect();
            resolve_lasso_lambda(&config.lambda_beta_policy, &w, &z, &rows, seed, &config.solver)
        }
        LambdaTarget::Gamma => {
            let x = dataset.x_labeled();
            let rows: Vec<usize> = (0..x.rows()).collect();
            resolve_lasso_lambda(
                &config.lambda_gamma_policy,
                &x,
                dataset.y_labeled(),
                &rows,
                seed,
                &config.solver,
            )
        }
        LambdaTarget::U => {
            let plan = make_split(dataset, SplitScheme::TwoWay, seed)?;
            let ctx = crate::estimators::sr::SrContext::build(dataset, &plan.labeled[0], &plan.labeled[1])?;
            ctx.resolve_lambda_u(&config.lambda_u_policy, &config.solver)
        }
    }
}

impl UPolicy {
    pub(crate) fn resolve(
        &self,
        sigma: &DesignMatrix,
        xi: &[f64],
        y_for_rate: &[f64],
        cfg: &SolverConfig,
    ) -> Result<f64, EstimatorError> {
        match self {
            UPolicy::Fixed(v) => Ok(*v),
            UPolicy::FeasibilityPath { grid, safety_factor } => {
                let base = u_rate(y_for_rate, xi.len());
                feasibility_path_lambda(sigma, xi, base, grid, *safety_factor, cfg)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn noise_instance(n: usize, p: usize, seed: u64) -> (DesignMatrix, Vec<f64>) {
        let mut rng = CounterRng::new(seed, 0);
        let x = DesignMatrix::from_fn(n, p, |_, _| rng.standard_normal());
        let y = (0..n).map(|_| rng.standard_normal()).collect();
        (x, y)
    }

    #[test]
    fn grid_endpoints() {
        let g = log_grid(2.0, 1e-4, 50);
        assert_eq!(g.len(), 50);
        assert_eq!(g[0], 2.0);
        assert!((g[49] - 2e-4).abs() < 1e-15);
        assert!(g.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn single_point_grid_returns_it() {
        let (x, y) = noise_instance(20, 5, 1);
        let rows: Vec<usize> = (0..20).collect();
        let out = cv_lasso_on_grid(&x, &y, &rows, &[0.37], 5, 0, &SolverConfig::default()).unwrap();
        assert_eq!(out.lambda, 0.37);
    }

    #[test]
    fn rate_is_scale_equivariant() {
        let y = [1.0, -2.0, 0.5];
        let y10: Vec<f64> = y.iter().map(|v| 10.0 * v).collect();
        assert!((u_rate(&y10, 50) - 10.0 * u_rate(&y, 50)).abs() < 1e-12);
    }

    #[test]
    fn feasibility_path_takes_smallest_when_all_feasible() {
        let s = DesignMatrix::identity(3);
        let lam = feasibility_path_lambda(&s, &[0.0; 3], 1.0, &[4.0, 0.5, 2.0], 1.5, &SolverConfig::default()).unwrap();
        assert_eq!(lam, 0.75);
    }

    #[test]
    fn feasibility_path_skips_infeasible_values() {
        let s = DesignMatrix::from_rows(&[alloc::vec![1.0, 1.0], alloc::vec![1.0, 1.0]]).unwrap();
        // min |xi - S u|_inf = 1 here.
        let lam = feasibility_path_lambda(&s, &[1.0, -1.0], 1.0, &[0.5, 0.9, 1.2, 3.0], 1.0, &SolverConfig::default()).unwrap();
        assert_eq!(lam, 1.2);
        let err = feasibility_path_lambda(&s, &[1.0, -1.0], 1.0, &[0.5], 1.0, &SolverConfig::default());
        assert!(matches!(err, Err(EstimatorError::Tuning(_))));
    }
}
