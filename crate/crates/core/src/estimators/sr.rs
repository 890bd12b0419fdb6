//! Sparsity-robust estimators.
//!
//! Both variants regress Z on W by the Lasso, then correct the naive ratio
//! `mean(v Y) / mean(v^2)` with a debiasing direction `u` from
//!
//! ```text
//! min u' S u   subject to   |xi - S u|_inf <= lambda_u,
//! ```
//!
//! where `S` is the Gram matrix of W and `xi` the cross moment of W and Y.
//! Neither needs a sparse outcome model.

use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use super::{base_diagnostics, fit_lasso, mean, require_controls, residuals, EstimateReport, EstimatorConfig};
use super::{support_size, EstimatorId, UPolicy, VarianceMode};
use crate::dataset::{make_split, SemiSupervisedDataset, SplitScheme};
use crate::error::{EstimatorError, SolverError};
use crate::linalg::{CrossProducts, DesignMatrix};
use crate::math::{powf, sqrt};
use crate::solver::{min_quadratic_linf, min_quadratic_linf_capped, SolverConfig, SolverResult};

/// Number of times the modified estimator enlarges `lambda_u` after an
/// infeasible capped program.
const CAP_RETRIES: usize = 5;
const CAP_BUMP: f64 = 1.5;

/// Labeled indices `labeled` followed by every unlabeled row, as indices
/// into the pooled design.
fn with_unlabeled(labeled: &[usize], ds: &SemiSupervisedDataset) -> Vec<usize> {
    let n = ds.n();
    labeled.iter().copied().chain(n..n + ds.m()).collect()
}

/// Gram matrix `S` and cross moment `xi` of the debiasing program, along
/// with the pooled data they came from.
pub(crate) struct SrContext {
    w: DesignMatrix,
    z: Vec<f64>,
    sigma: DesignMatrix,
    xi: Vec<f64>,
    /// Outcomes behind `xi`; they set the scale of the penalty.
    y_xi: Vec<f64>,
}

impl SrContext {
    /// `S` over `gram_labeled` plus all unlabeled rows, `xi` over the
    /// labeled rows `xi_rows`.
    pub(crate) fn build(
        ds: &SemiSupervisedDataset,
        gram_labeled: &[usize],
        xi_rows: &[usize],
    ) -> Result<SrContext, EstimatorError> {
        require_controls(ds, "the sparsity-robust estimator")?;
        let w = ds.w_pooled();
        let z = ds.z_pooled();
        let gram_rows = with_unlabeled(gram_labeled, ds);
        let (sigma, _, _) = CrossProducts::compute(&w, &z, Some(&gram_rows)).normalized();
        let y_xi: Vec<f64> = xi_rows.iter().map(|&i| ds.y_labeled()[i]).collect();
        let cp = CrossProducts::compute(ds.w_labeled(), ds.y_labeled(), Some(xi_rows));
        let (_, xi, _) = cp.normalized();
        Ok(SrContext { w, z, sigma, xi, y_xi })
    }

    pub(crate) fn resolve_lambda_u(&self, policy: &UPolicy, cfg: &SolverConfig) -> Result<f64, EstimatorError> {
        policy.resolve(&self.sigma, &self.xi, &self.y_xi, cfg)
    }
}

fn need_rows(ds: &SemiSupervisedDataset, min: usize, who: &str) -> Result<(), EstimatorError> {
    if ds.n() < min {
        return Err(EstimatorError::Config(format!(
            "{who} needs at least {min} labeled rows, got {}",
            ds.n()
        )));
    }
    Ok(())
}

/// Sparsity-robust estimator on a random two-way split of the labeled rows.
///
/// The first part `I1` fits the auxiliary Lasso (together with the
/// unlabeled rows) and forms the ratio; the second part `I2` supplies `xi`.
/// With no unlabeled rows this is the supervised estimator.
pub fn ss_sr(dataset: &SemiSupervisedDataset, config: &EstimatorConfig) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    require_controls(dataset, "ss_sr")?;
    need_rows(dataset, 2, "ss_sr")?;
    let plan = make_split(dataset, SplitScheme::TwoWay, config.split_seed)?;
    sr_on_sets(dataset, config, &plan.labeled[0], &plan.labeled[1])
}

pub(crate) fn sr_on_sets(
    ds: &SemiSupervisedDataset,
    config: &EstimatorConfig,
    i1: &[usize],
    i2: &[usize],
) -> Result<EstimateReport, EstimatorError> {
    let cfg = &config.solver;
    let ctx = SrContext::build(ds, i1, i2)?;
    let jbar = with_unlabeled(i1, ds);
    let beta = fit_lasso("Z on W", &config.lambda_beta_policy, &ctx.w, &ctx.z, &jbar, config.split_seed, cfg)?;
    let lambda_u = ctx.resolve_lambda_u(&config.lambda_u_policy, cfg)?;
    let u = min_quadratic_linf(&ctx.sigma, &ctx.xi, lambda_u, cfg)
        .and_then(SolverResult::require_converged)
        .map_err(|e| EstimatorError::solver("debiasing program", e))?;

    let y = ds.y_labeled();
    let n1 = i1.len() as f64;
    let nbar = jbar.len() as f64;
    let v = residuals(&ctx.w, &ctx.z, &beta.coef, &jbar);
    let uw = direction_scores(&ctx.w, &u.coefficients, &jbar);
    // The labeled rows of J-bar come first, in the order of `i1`.
    let k1 = i1.len();
    let v1 = &v[..k1];
    let sigma_v1 = v1.iter().map(|a| a * a).sum::<f64>() / n1;
    if !(sigma_v1 > 0.0) {
        return Err(EstimatorError::DegenerateDenominator(
            "ss_sr: auxiliary residuals vanish on the first split".into(),
        ));
    }
    let num = i1.iter().zip(v1).map(|(&i, vi)| vi * y[i]).sum::<f64>() / n1
        - v.iter().zip(&uw).map(|(a, b)| a * b).sum::<f64>() / nbar;
    let theta = num / sigma_v1;

    let labeled_term = i1
        .iter()
        .zip(v1)
        .zip(&uw[..k1])
        .map(|((&i, vi), ui)| {
            let e = (y[i] - theta * vi) / n1 - ui / nbar;
            e * e
        })
        .sum::<f64>()
        / sigma_v1;
    let unlabeled_uw = &uw[k1..];
    let unlabeled_sq = unlabeled_uw.iter().map(|a| a * a).sum::<f64>() / (nbar * nbar);
    let sigma_v2 = if ds.m() > 0 {
        Some(v[k1..].iter().map(|a| a * a).sum::<f64>() / ds.m() as f64)
    } else {
        None
    };
    let weight = match (config.variance_mode, sigma_v2) {
        (VarianceMode::CovariateShift, Some(s2)) => s2 / (sigma_v1 * sigma_v1),
        _ => 1.0 / sigma_v1,
    };
    let variance = labeled_term + weight * unlabeled_sq;

    let mut diag = base_diagnostics(ds, config);
    diag.beta_support_size = Some(beta.support());
    diag.sigma_v1_sq = Some(sigma_v1);
    diag.sigma_v2_sq = sigma_v2;
    diag.chosen_lambdas.insert("beta".to_string(), beta.lambda);
    diag.chosen_lambdas.insert("u".to_string(), lambda_u);
    diag.solver_iterations.insert("beta_lasso".to_string(), beta.iterations);
    diag.solver_iterations.insert("u_program".to_string(), u.iterations);
    if support_size(&u.coefficients) == 0 {
        diag.notes.push("debiasing direction is zero".into());
    }
    EstimateReport::wald(EstimatorId::SsSr, theta, sqrt(variance), config.alpha, diag)
}

/// `w_i' u` for the listed pooled rows.
fn direction_scores(w: &DesignMatrix, u: &[f64], rows: &[usize]) -> Vec<f64> {
    rows.iter().map(|&i| crate::math::dot(w.row(i), u)).collect()
}

/// Modified sparsity-robust estimator on a three-way labeled split.
///
/// `I1` (with the unlabeled rows) fits the auxiliary Lasso, `I2` (with the
/// unlabeled rows) forms `S`, and `I3` forms `xi` and the outcome variance
/// `V`. The debiasing direction is additionally held to
/// `|w_i' u| <= sqrt(V) * |I2 + J|^q` on every row of `I2 + J`. Its
/// variance formula needs no separate covariate-shift mode.
pub fn ss_sr_modified(
    dataset: &SemiSupervisedDataset,
    config: &EstimatorConfig,
) -> Result<EstimateReport, EstimatorError> {
    config.validate()?;
    require_controls(dataset, "ss_sr_mod")?;
    need_rows(dataset, 3, "ss_sr_mod")?;
    let plan = make_split(dataset, SplitScheme::ThreeWay, config.split_seed)?;
    modified_on_sets(dataset, config, &plan.labeled[0], &plan.labeled[1], &plan.labeled[2], None)
}

/// `cap_override` replaces the data-driven cap.
pub(crate) fn modified_on_sets(
    ds: &SemiSupervisedDataset,
    config: &EstimatorConfig,
    i1: &[usize],
    i2: &[usize],
    i3: &[usize],
    cap_override: Option<f64>,
) -> Result<EstimateReport, EstimatorError> {
    let cfg = &config.solver;
    let ctx = SrContext::build(ds, i2, i3)?;
    let j1 = with_unlabeled(i1, ds);
    let j2 = with_unlabeled(i2, ds);
    let beta = fit_lasso("Z on W", &config.lambda_beta_policy, &ctx.w, &ctx.z, &j1, config.split_seed, cfg)?;
    let mut diag = base_diagnostics(ds, config);

    let y3 = &ctx.y_xi;
    let y3_mean = mean(y3);
    let var_y = y3.iter().map(|v| (v - y3_mean) * (v - y3_mean)).sum::<f64>() / y3.len() as f64;
    let cap = cap_override.unwrap_or_else(|| sqrt(var_y) * powf(j2.len() as f64, config.cap_exponent_q));
    diag.cap = Some(cap);

    let d = ds.d();
    let u: Vec<f64> = if var_y == 0.0 && cap_override.is_none() {
        diag.notes.push("outcome is constant on the third split; debiasing direction set to zero".into());
        alloc::vec![0.0; d]
    } else {
        let mut lambda_u = ctx.resolve_lambda_u(&config.lambda_u_policy, cfg)?;
        let cap_rows = ctx.w.select_rows(&j2);
        let mut attempt = 0;
        let res = loop {
            match min_quadratic_linf_capped(&ctx.sigma, &ctx.xi, lambda_u, &cap_rows, cap, cfg) {
                Err(SolverError::Infeasible { .. }) if attempt < CAP_RETRIES => {
                    attempt += 1;
                    lambda_u *= CAP_BUMP;
                }
                other => break other,
            }
        };
        let res = res
            .and_then(SolverResult::require_converged)
            .map_err(|e| EstimatorError::solver("capped debiasing program", e))?;
        if attempt > 0 {
            diag.notes.push(format!(
                "capped program infeasible; debiasing penalty enlarged {attempt} time(s)"
            ));
        }
        diag.chosen_lambdas.insert("u".to_string(), lambda_u);
        diag.solver_iterations.insert("u_program".to_string(), res.iterations);
        res.coefficients
    };

    let y = ds.y_labeled();
    let n1 = i1.len() as f64;
    let n2 = j2.len() as f64;
    let v1 = residuals(&ctx.w, &ctx.z, &beta.coef, i1);
    let v2 = residuals(&ctx.w, &ctx.z, &beta.coef, &j2);
    let uw2 = direction_scores(&ctx.w, &u, &j2);
    let sigma_v1 = v1.iter().map(|a| a * a).sum::<f64>() / n1;
    if !(sigma_v1 > 0.0) {
        return Err(EstimatorError::DegenerateDenominator(
            "ss_sr_mod: auxiliary residuals vanish on the first split".into(),
        ));
    }
    let num = i1.iter().zip(&v1).map(|(&i, vi)| vi * y[i]).sum::<f64>() / n1
        - v2.iter().zip(&uw2).map(|(a, b)| a * b).sum::<f64>() / n2;
    let theta = num / sigma_v1;

    let labeled_term = i1
        .iter()
        .zip(&v1)
        .map(|(&i, vi)| {
            let e = y[i] - theta * vi;
            e * e * vi * vi
        })
        .sum::<f64>()
        / (n1 * n1);
    let direction_term = uw2
        .iter()
        .zip(&v2)
        .map(|(a, b)| a * a * b * b)
        .sum::<f64>()
        / (n2 * n2);
    let variance = (labeled_term + direction_term) / (sigma_v1 * sigma_v1);

    diag.beta_support_size = Some(beta.support());
    diag.sigma_v1_sq = Some(sigma_v1);
    diag.chosen_lambdas.insert("beta".to_string(), beta.lambda);
    diag.solver_iterations.insert("beta_lasso".to_string(), beta.iterations);
    if config.variance_mode == VarianceMode::CovariateShift {
        diag.notes.push("variance formula of ss_sr_mod already allows covariate shift".into());
    }
    EstimateReport::wald(EstimatorId::SsSrMod, theta, sqrt(variance), config.alpha, diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LambdaPolicy;
    use crate::rng::CounterRng;

    fn instance(n: usize, m: usize, d: usize, seed: u64) -> SemiSupervisedDataset {
        let mut rng = CounterRng::new(seed, 0);
        let mut gen_w = |rows: usize| DesignMatrix::from_fn(rows, d, |_, _| rng.standard_normal());
        let wl = gen_w(n);
        let wu = gen_w(m);
        let mut rng = CounterRng::new(seed, 9);
        let mut z_of = |w: &DesignMatrix| -> Vec<f64> {
            (0..w.rows()).map(|i| 0.5 * w.get(i, 0) + rng.standard_normal()).collect()
        };
        let zl = z_of(&wl);
        let zu = z_of(&wu);
        let y = (0..n)
            .map(|i| 0.7 * zl[i] + wl.get(i, 1) + 0.3 * rng.standard_normal())
            .collect();
        SemiSupervisedDataset::new(zl, wl, y, zu, wu).unwrap()
    }

    fn fixed_config() -> EstimatorConfig {
        EstimatorConfig {
            lambda_beta_policy: LambdaPolicy::Fixed(0.05),
            lambda_u_policy: UPolicy::Fixed(0.05),
            ..EstimatorConfig::default()
        }
    }

    #[test]
    fn recovers_coefficient() {
        let ds = instance(400, 400, 10, 3);
        let r = ss_sr(&ds, &EstimatorConfig::default()).unwrap();
        assert!((r.theta_hat - 0.7).abs() < 4.0 * r.std_error.unwrap(), "{r:?}");
        let r = ss_sr_modified(&ds, &EstimatorConfig::default()).unwrap();
        assert!((r.theta_hat - 0.7).abs() < 4.0 * r.std_error.unwrap(), "{r:?}");
    }

    #[test]
    fn modified_collapses_to_two_way() {
        let ds = instance(60, 40, 6, 5);
        let cfg = fixed_config();
        let plan = make_split(&ds, SplitScheme::TwoWay, 0).unwrap();
        let (i1, i2) = (&plan.labeled[0], &plan.labeled[1]);
        let a = sr_on_sets(&ds, &cfg, i1, i2).unwrap();
        let b = modified_on_sets(&ds, &cfg, i1, i1, i2, Some(f64::INFINITY)).unwrap();
        assert!((a.theta_hat - b.theta_hat).abs() < 1e-10, "{} vs {}", a.theta_hat, b.theta_hat);
    }

    #[test]
    fn shift_mode_changes_only_the_unlabeled_weight() {
        let ds = instance(80, 200, 5, 8);
        let mut cfg = fixed_config();
        let a = ss_sr(&ds, &cfg).unwrap();
        cfg.variance_mode = VarianceMode::CovariateShift;
        let b = ss_sr(&ds, &cfg).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert!(b.diagnostics.sigma_v2_sq.is_some());
    }

    #[test]
    fn needs_controls() {
        let ds = SemiSupervisedDataset::new(
            alloc::vec![1.0, 2.0, 3.0],
            DesignMatrix::zeros(3, 0),
            alloc::vec![1.0, 0.0, 1.0],
            alloc::vec![],
            DesignMatrix::zeros(0, 0),
        )
        .unwrap();
        assert!(matches!(ss_sr(&ds, &EstimatorConfig::default()), Err(EstimatorError::Config(_))));
    }
}
