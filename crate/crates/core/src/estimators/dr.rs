use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{base_diagnostics, fit_lasso_fixed, require_controls, residuals};
use super::{EstimateReport, EstimatorConfig, EstimatorId};
use crate::dataset::{make_split, SemiSupervisedDataset, SplitScheme};
use crate::error::EstimatorError;
use crate::linalg::CrossProducts;
use crate::math::{dot, sqrt};
use crate::solver::LassoGram;
use crate::tuning::resolve_lasso_lambda;

/// Cross-fitted doubly robust estimator.
///
/// Labeled and unlabeled rows are each cut into `K` folds. For fold `k` the
/// outcome Lasso is fitted on the labeled rows outside the fold and the
/// auxiliary Lasso on the pooled rows outside the fold; the fold estimate is
///
/// ```text
/// gamma_0 + sum_{I_k} v (Y - X gamma) / sum_{I_k} v Z
/// ```
///
/// and the estimate is their average. Both penalties are chosen once on the
/// full data and reused in every fold. Per-fold Gram matrices are formed by
/// subtracting the held-out fold from the full cross products.
///
/// `beta_support_size` and `gamma_support_size` report the largest support
/// over folds; iteration counts are summed over folds.
pub fn ss_dr(dataset: &SemiSupervisedDataset, config: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    require_controls(dataset, "ss_dr")?;
    let cfg = &config.solver;
    let seed = config.split_seed;
    let k = config.dr_folds;
    let n = dataset.n();
    let plan = make_split(dataset, SplitScheme::KFold(k), seed)?;

    let x = dataset.x_labeled();
    let y = dataset.y_labeled();
    let z = dataset.z_labeled();
    let w_all = dataset.w_pooled();
    let z_all = dataset.z_pooled();
    let labeled: Vec<usize> = (0..n).collect();
    let pooled: Vec<usize> = (0..w_all.rows()).collect();

    let lambda_gamma = resolve_lasso_lambda(&config.lambda_gamma_policy, &x, y, &labeled, seed, cfg)?;
    let lambda_beta = resolve_lasso_lambda(&config.lambda_beta_policy, &w_all, &z_all, &pooled, seed, cfg)?;
    let full_x = CrossProducts::compute(&x, y, None);
    let full_w = CrossProducts::compute(&w_all, &z_all, None);

    let mut thetas = Vec::with_capacity(k);
    let (mut sum_vr2, mut sum_v2) = (0.0, 0.0);
    let (mut gamma_support, mut beta_support) = (0, 0);
    let (mut gamma_iters, mut beta_iters) = (0, 0);
    for fold in 0..k {
        let held_lab = &plan.labeled[fold];
        let held_pooled: Vec<usize> = held_lab
            .iter()
            .copied()
            .chain(plan.unlabeled.get(fold).into_iter().flatten().map(|&j| n + j))
            .collect();
        let gx = LassoGram::from_cross_products(&full_x.minus(&CrossProducts::compute(&x, y, Some(held_lab))));
        let gw = LassoGram::from_cross_products(
            &full_w.minus(&CrossProducts::compute(&w_all, &z_all, Some(&held_pooled))),
        );
        let label = format!("fold {}", fold + 1);
        let gamma = fit_lasso_fixed(&format!("Y on (Z, W), {label}"), &gx, lambda_gamma, cfg)?;
        let beta = fit_lasso_fixed(&format!("Z on W, {label}"), &gw, lambda_beta, cfg)?;
        gamma_support = gamma_support.max(gamma.support());
        beta_support = beta_support.max(beta.support());
        gamma_iters += gamma.iterations;
        beta_iters += beta.iterations;

        let v = residuals(dataset.w_labeled(), z, &beta.coef, held_lab);
        let r: Vec<f64> = held_lab.iter().map(|&i| y[i] - dot(x.row(i), &gamma.coef)).collect();
        let zk: Vec<f64> = held_lab.iter().map(|&i| z[i]).collect();
        let den = dot(&v, &zk);
        if den == 0.0 || !den.is_finite() {
            return Err(EstimatorError::DegenerateDenominator(format!(
                "ss_dr: sum v Z vanishes in {label}"
            )));
        }
        thetas.push(gamma.coef[0] + dot(&v, &r) / den);
        sum_vr2 += v.iter().zip(&r).map(|(a, b)| a * a * b * b).sum::<f64>();
        sum_v2 += dot(&v, &v);
    }
    let nf = n as f64;
    let theta = thetas.iter().sum::<f64>() / k as f64;
    let mean_v2 = sum_v2 / nf;
    if mean_v2 == 0.0 {
        return Err(EstimatorError::DegenerateDenominator("ss_dr: auxiliary residuals vanish".into()));
    }
    let sigma_sq = (sum_vr2 / nf) / (mean_v2 * mean_v2);
    let se = sqrt(sigma_sq / nf);

    let mut diag = base_diagnostics(dataset, config);
    diag.gamma_support_size = Some(gamma_support);
    diag.beta_support_size = Some(beta_support);
    diag.sigma_v1_sq = Some(mean_v2);
    diag.chosen_lambdas.insert("gamma".to_string(), lambda_gamma);
    diag.chosen_lambdas.insert("beta".to_string(), lambda_beta);
    diag.solver_iterations.insert("gamma_lasso".to_string(), gamma_iters);
    diag.solver_iterations.insert("beta_lasso".to_string(), beta_iters);
    EstimateReport::wald(EstimatorId::SsDr, theta, se, config.alpha, diag)
}
