use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{base_diagnostics, fit_lasso, residuals, EstimateReport, EstimatorConfig, EstimatorId};
use crate::dataset::SemiSupervisedDataset;
use crate::error::EstimatorError;
use crate::math::dot;

/// Coefficient on Z from the Lasso of Y on `X = (Z, W)` over the labeled
/// rows. No standard error.
pub fn lasso_plugin(
    dataset: &SemiSupervisedDataset,
    config: &EstimatorConfig,
) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    let x = dataset.x_labeled();
    let rows: Vec<usize> = (0..dataset.n()).collect();
    let fit = fit_lasso(
        "Y on (Z, W)",
        &config.lambda_gamma_policy,
        &x,
        dataset.y_labeled(),
        &rows,
        config.split_seed,
        &config.solver,
    )?;
    let mut diag = base_diagnostics(dataset, config);
    diag.gamma_support_size = Some(fit.support());
    diag.chosen_lambdas.insert("gamma".to_string(), fit.lambda);
    diag.solver_iterations.insert("gamma_lasso".to_string(), fit.iterations);
    EstimateReport::point(EstimatorId::LassoPlugin, fit.coef[0], config.alpha, diag)
}

/// `sum_I v_i Y_i / sum_I v_i^2`, where `v_i = Z_i - W_i' beta` and `beta`
/// is the Lasso of Z on W over all rows. With no controls `v = Z`. No
/// standard error.
pub fn plug_in_theta(
    dataset: &SemiSupervisedDataset,
    config: &EstimatorConfig,
) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    let mut diag = base_diagnostics(dataset, config);
    let n = dataset.n();
    let v: Vec<f64> = if dataset.d() == 0 {
        dataset.z_labeled().to_vec()
    } else {
        let w = dataset.w_pooled();
        let z = dataset.z_pooled();
        let rows: Vec<usize> = (0..w.rows()).collect();
        let fit = fit_lasso(
            "Z on W",
            &config.lambda_beta_policy,
            &w,
            &z,
            &rows,
            config.split_seed,
            &config.solver,
        )?;
        diag.beta_support_size = Some(fit.support());
        diag.chosen_lambdas.insert("beta".to_string(), fit.lambda);
        diag.solver_iterations.insert("beta_lasso".to_string(), fit.iterations);
        let labeled: Vec<usize> = (0..n).collect();
        residuals(&w, &z, &fit.coef, &labeled)
    };
    let vv = dot(&v, &v);
    if vv == 0.0 {
        return Err(EstimatorError::DegenerateDenominator(
            "plug-in: auxiliary residuals are identically zero".into(),
        ));
    }
    diag.sigma_v1_sq = Some(vv / n as f64);
    let theta = dot(&v, dataset.y_labeled()) / vv;
    if !theta.is_finite() {
        return Err(EstimatorError::DegenerateDenominator(format!("plug-in: estimate {theta}")));
    }
    EstimateReport::point(EstimatorId::PlugIn, theta, config.alpha, diag)
}
