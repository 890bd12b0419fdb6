use alloc::format;
use alloc::vec::Vec;

use super::cd::{coordinate_descent, CdSettings};
use super::{check_finite, SolverConfig, SolverResult};
use crate::error::SolverError;
use crate::linalg::{CrossProducts, DesignMatrix};
use crate::math::{dot, max_abs, norm1};

/// Sufficient statistics of a least-squares problem: `X'X/n`, `X'y/n`,
/// `y'y/n`.
#[derive(Debug, Clone)]
pub struct LassoGram {
    pub gram: DesignMatrix,
    pub xty: Vec<f64>,
    pub yty: f64,
}

impl LassoGram {
    pub fn from_data(x: &DesignMatrix, y: &[f64]) -> Result<LassoGram, SolverError> {
        if x.rows() != y.len() {
            return Err(SolverError::Input(format!(
                "design has {} rows but response has {} entries",
                x.rows(),
                y.len()
            )));
        }
        if x.rows() == 0 || x.cols() == 0 {
            return Err(SolverError::Input("design must have at least one row and column".into()));
        }
        check_finite("X", x.values())?;
        check_finite("y", y)?;
        Ok(Self::from_cross_products(&CrossProducts::compute(x, y, None)))
    }

    pub fn from_cross_products(cp: &CrossProducts) -> LassoGram {
        let (gram, xty, yty) = cp.normalized();
        LassoGram { gram, xty, yty }
    }

    pub fn dim(&self) -> usize {
        self.xty.len()
    }
}

/// Smallest penalty at which the all-zero vector is optimal:
/// `max_j |(2/n) X_j' y|`.
pub fn lasso_critical_lambda(g: &LassoGram) -> f64 {
    2.0 * max_abs(&g.xty)
}

/// Lasso on precomputed sufficient statistics, minimizing
/// `(1/n)|y - Xb|^2 + lambda |b|_1`.
pub fn lasso_gram(
    g: &LassoGram,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
) -> Result<SolverResult, SolverError> {
    lasso_gram_inner(g, lambda, cfg, warm, true)
}

fn lasso_gram_inner(
    g: &LassoGram,
    lambda: f64,
    cfg: &SolverConfig,
    warm: Option<&[f64]>,
    final_polish: bool,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::Input(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    if let Some(w) = warm {
        if w.len() != g.dim() {
            return Err(SolverError::Input("warm start has the wrong length".into()));
        }
    }
    // Stationarity of the kernel is half the gradient-scale KKT residual.
    let settings = CdSettings {
        change_tol: cfg.kkt_tolerance,
        kkt_tol: 0.5 * cfg.kkt_tolerance,
        max_sweeps: cfg.max_iterations,
        final_polish,
    };
    let out = coordinate_descent(&g.gram, &g.xty, 0.5 * lambda, warm, &settings);
    let objective = g.yty - dot(&out.b, &g.xty) - dot(&out.b, &out.r) + lambda * norm1(&out.b);
    Ok(SolverResult {
        objective,
        kkt_residual: 2.0 * out.stationarity,
        feasibility_residual: 0.0,
        duality_gap: 0.0,
        iterations: out.sweeps,
        converged: out.converged,
        coefficients: out.b,
    })
}

/// Lasso fit of `y` on the columns of `x`.
pub fn lasso_fit(
    x: &DesignMatrix,
    y: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    let g = LassoGram::from_data(x, y)?;
    lasso_gram(&g, lambda, cfg, None)
}

const PATH_SATURATION: f64 = 1e-3;
const PATH_MIN_GAIN: f64 = 1e-5;

/// Warm-started path over `lambdas` (any order; typically decreasing).
///
/// The path stops early, leaving `None` for the remaining penalties, once
/// more than `max_active` coefficients are nonzero, a fit fails to
/// converge, or the fit has saturated (training residual below 0.1% of the
/// null residual, or a relative drop under `1e-5` from the previous
/// penalty). Beyond that point the fits approach interpolation and are
/// neither cheap nor useful for model selection.
///
/// Path fits skip the exact solve on the final support; they meet the
/// stationarity target of `cfg` but are not polished further.
pub fn lasso_path(
    g: &LassoGram,
    lambdas: &[f64],
    cfg: &SolverConfig,
    max_active: usize,
) -> Vec<Option<SolverResult>> {
    let mut out = Vec::with_capacity(lambdas.len());
    let mut warm: Option<Vec<f64>> = None;
    let mut stopped = false;
    let mut previous_rss: Option<f64> = None;
    for &lam in lambdas {
        if stopped {
            out.push(None);
            continue;
        }
        match lasso_gram_inner(g, lam, cfg, warm.as_deref(), false) {
            Ok(res) if res.converged => {
                let active = res.coefficients.iter().filter(|c| **c != 0.0).count();
                let b = &res.coefficients;
                let rss = g.yty - 2.0 * dot(b, &g.xty) + dot(b, &g.gram.mul_vec(b));
                let saturated = rss <= PATH_SATURATION * g.yty
                    || previous_rss.is_some_and(|p| p - rss < PATH_MIN_GAIN * p);
                if active > 0 {
                    previous_rss = Some(rss);
                }
                warm = Some(res.coefficients.clone());
                if active > max_active || saturated {
                    stopped = true;
                }
                out.push(Some(res));
            }
            _ => {
                stopped = true;
                out.push(None);
            }
        }
    }
    out
}
