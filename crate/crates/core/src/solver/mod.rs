//! Convex solvers behind the estimators:
//!
//! - [`lasso_fit`]: l1-penalized least squares by cyclic coordinate descent
//!   with covariance updates.
//! - [`dantzig_two_constraint`]: Dantzig selector with a labeled and a pooled
//!   l-infinity constraint, solved as a linear program by a dense dual
//!   simplex.
//! - [`min_quadratic_linf`] / [`min_quadratic_linf_capped`]: minimum of
//!   `u' S u` under `|xi - S u|_inf <= lambda`, optionally with per-row
//!   caps `|r_i' u| <= cap`.
//!
//! Every solver returns a [`SolverResult`] carrying its own certificate
//! (stationarity residual, recomputed feasibility residual, duality gap), so
//! callers never have to trust an iterate blindly.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::SolverError;

mod cd;
mod dantzig;
mod lasso;
pub mod lp;
mod qp;

pub use dantzig::dantzig_two_constraint;
pub use lasso::{lasso_critical_lambda, lasso_fit, lasso_gram, lasso_path, LassoGram};
pub use qp::{linf_feasibility_threshold, min_quadratic_linf, min_quadratic_linf_capped};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    pub feasibility_tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iterations: 100_000,
            kkt_tolerance: 1e-6,
            feasibility_tolerance: 1e-8,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        if self.max_iterations == 0 {
            return Err(SolverError::Input("max_iterations must be positive".into()));
        }
        if !(self.kkt_tolerance > 0.0 && self.kkt_tolerance.is_finite()) {
            return Err(SolverError::Input(format!(
                "kkt_tolerance must be positive, got {}",
                self.kkt_tolerance
            )));
        }
        if !(self.feasibility_tolerance > 0.0 && self.feasibility_tolerance.is_finite()) {
            return Err(SolverError::Input(format!(
                "feasibility_tolerance must be positive, got {}",
                self.feasibility_tolerance
            )));
        }
        Ok(())
    }
}

/// Solution plus the certificates that justify it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverResult {
    pub coefficients: Vec<f64>,
    pub objective: f64,
    /// Worst stationarity (or dual feasibility) violation.
    pub kkt_residual: f64,
    /// Worst constraint violation, recomputed from the problem data. Zero for
    /// unconstrained problems.
    pub feasibility_residual: f64,
    /// Primal minus dual objective; zero for the Lasso, where the KKT
    /// residual is the certificate.
    pub duality_gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl SolverResult {
    /// Turn a flagged non-converged result into an error.
    pub fn require_converged(self) -> Result<SolverResult, SolverError> {
        if self.converged {
            Ok(self)
        } else {
            Err(SolverError::NotConverged {
                iterations: self.iterations,
                residual: self.kkt_residual.max(self.feasibility_residual),
            })
        }
    }

    pub fn support_size(&self, relative_threshold: f64) -> usize {
        let scale = crate::math::max_abs(&self.coefficients);
        if scale == 0.0 {
            return 0;
        }
        self.coefficients
            .iter()
            .filter(|c| c.abs() > relative_threshold * scale)
            .count()
    }
}

pub(crate) fn check_finite(name: &str, v: &[f64]) -> Result<(), SolverError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(SolverError::Input(format!("{name}[{i}] is not finite"))),
        None => Ok(()),
    }
}
