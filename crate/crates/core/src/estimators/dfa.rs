use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{base_diagnostics, fit_lasso, require_controls, residuals, support_size};
use super::{EstimateReport, EstimatorConfig, EstimatorId, LambdaPolicy};
use crate::dataset::SemiSupervisedDataset;
use crate::error::{EstimatorError, SolverError};
use crate::math::{dot, sqrt};
use crate::solver::{dantzig_two_constraint, SolverResult};
use crate::tuning::cv_lasso;

const DANTZIG_RETRIES: usize = 5;
const DANTZIG_BUMP: f64 = 1.1;

/// Degrees-of-freedom adjusted estimator.
///
/// The outcome Lasso `gamma` of Y on `X = (Z, W)` is fitted on the labeled
/// rows. The auxiliary slope comes from a Dantzig selector that bounds the
/// score both on the labeled rows and on all rows, so unlabeled data tighten
/// it. With `q` the support size of `gamma`,
///
/// ```text
/// theta = gamma_0 + mean(v (Y - X gamma)) / ((1 - q/n) mean(v Z))
/// ```
///
/// and the pivot `sqrt(n) (1 - q/n) (theta - theta*) / sigma` is asymptotically
/// standard normal with `sigma^2 = sum (Y - X gamma)^2 / sum v^2`.
///
/// A cross-validated `lambda_beta` is half the Lasso CV choice on the
/// pooled rows (the Lasso penalty is on the doubled score scale). An
/// infeasible program is retried with the bound enlarged by 10%, at most
/// five times.
pub fn ss_dfa(dataset: &SemiSupervisedDataset, config: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    require_controls(dataset, "ss_dfa")?;
    let cfg = &config.solver;
    let n = dataset.n();
    let seed = config.split_seed;
    let x = dataset.x_labeled();
    let y = dataset.y_labeled();
    let labeled: Vec<usize> = (0..n).collect();

    let gamma = fit_lasso("Y on (Z, W)", &config.lambda_gamma_policy, &x, y, &labeled, seed, cfg)?;
    let q = support_size(&gamma.coef);
    if q >= n {
        return Err(EstimatorError::DegreesOfFreedom { support: q, n });
    }

    let w_all = dataset.w_pooled();
    let z_all = dataset.z_pooled();
    let mut lambda_beta = match config.lambda_beta_policy {
        LambdaPolicy::Fixed(v) => v,
        LambdaPolicy::CrossValidated { folds } => {
            let rows: Vec<usize> = (0..w_all.rows()).collect();
            cv_lasso(&w_all, &z_all, &rows, folds, seed, cfg)?.lambda / 2.0
        }
    };
    let mut attempt = 0;
    let beta = loop {
        let res = dantzig_two_constraint(dataset.w_labeled(), dataset.z_labeled(), &w_all, &z_all, lambda_beta, cfg);
        match res {
            Err(SolverError::Infeasible { .. }) if attempt < DANTZIG_RETRIES => {
                attempt += 1;
                lambda_beta *= DANTZIG_BUMP;
            }
            other => break other,
        }
    };
    let beta = beta
        .and_then(SolverResult::require_converged)
        .map_err(|e| EstimatorError::solver("Dantzig selector for Z on W", e))?;

    let v = residuals(dataset.w_labeled(), dataset.z_labeled(), &beta.coefficients, &labeled);
    let fitted = x.mul_vec(&gamma.coef);
    let r: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let nf = n as f64;
    let df = 1.0 - q as f64 / nf;
    let vz = dot(&v, dataset.z_labeled()) / nf;
    let vv = dot(&v, &v);
    if vz == 0.0 || vv == 0.0 {
        return Err(EstimatorError::DegenerateDenominator(format!(
            "ss_dfa: mean(v Z) = {vz:.3e}, sum v^2 = {vv:.3e}"
        )));
    }
    let theta = gamma.coef[0] + (dot(&v, &r) / nf) / (df * vz);
    let sigma = sqrt(dot(&r, &r) / vv);
    let se = sigma / (sqrt(nf) * df);

    let mut diag = base_diagnostics(dataset, config);
    diag.gamma_support_size = Some(q);
    diag.beta_support_size = Some(support_size(&beta.coefficients));
    diag.df_factor = Some(df);
    diag.sigma_v1_sq = Some(vv / nf);
    diag.chosen_lambdas.insert("gamma".to_string(), gamma.lambda);
    diag.chosen_lambdas.insert("beta".to_string(), lambda_beta);
    diag.solver_iterations.insert("gamma_lasso".to_string(), gamma.iterations);
    diag.solver_iterations.insert("beta_dantzig".to_string(), beta.iterations);
    if attempt > 0 {
        diag.notes.push(format!("Dantzig program infeasible; bound enlarged {attempt} time(s)"));
    }
    EstimateReport::wald(EstimatorId::SsDfa, theta, se, config.alpha, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DesignMatrix;
    use crate::rng::CounterRng;

    #[test]
    fn width_matches_pivot() {
        let mut rng = CounterRng::new(11, 0);
        let (n, m, d) = (120, 200, 8);
        let wl = DesignMatrix::from_fn(n, d, |_, _| rng.standard_normal());
        let wu = DesignMatrix::from_fn(m, d, |_, _| rng.standard_normal());
        let zl: Vec<f64> = (0..n).map(|i| wl.get(i, 0) + rng.standard_normal()).collect();
        let zu: Vec<f64> = (0..m).map(|i| wu.get(i, 0) + rng.standard_normal()).collect();
        let y: Vec<f64> = (0..n).map(|i| 0.5 * zl[i] - wl.get(i, 2) + 0.5 * rng.standard_normal()).collect();
        let ds = SemiSupervisedDataset::new(zl, wl, y, zu, wu).unwrap();
        let r = ss_dfa(&ds, &EstimatorConfig::default()).unwrap();
        let diag = &r.diagnostics;
        let q = diag.gamma_support_size.unwrap() as f64;
        let df = 1.0 - q / n as f64;
        assert_eq!(diag.df_factor, Some(df));
        let width = r.ci_length().unwrap();
        let expect = 2.0 * crate::normal::two_sided_critical(0.05) * r.std_error.unwrap();
        assert!((width - expect).abs() < 1e-12);
        assert!((r.theta_hat - 0.5).abs() < 4.0 * r.std_error.unwrap(), "{r:?}");
    }
}
