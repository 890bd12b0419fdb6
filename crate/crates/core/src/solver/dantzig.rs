use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use super::lp::{self, LpStatus};
use super::{check_finite, SolverConfig, SolverResult};
use crate::error::SolverError;
use crate::linalg::{CrossProducts, DesignMatrix};
use crate::math::{norm1, sqrt};

struct Block {
    name: &'static str,
    gram: DesignMatrix,
    rhs: Vec<f64>,
    bound: f64,
}

impl Block {
    fn violation(&self, beta: &[f64]) -> f64 {
        let fitted = self.gram.mul_vec(beta);
        let mut worst = 0.0_f64;
        for (b, f) in self.rhs.iter().zip(&fitted) {
            worst = worst.max((b - f).abs() - self.bound);
        }
        worst
    }
}

fn leading_block_matches(w_lab: &DesignMatrix, w_all: &DesignMatrix) -> bool {
    (0..w_lab.rows()).all(|i| w_lab.row(i) == w_all.row(i))
}

/// Two-constraint Dantzig selector:
///
/// ```text
/// minimize |b|_1
/// subject to |W_lab'(z_lab - W_lab b)| / n |_inf <= sqrt(N/n) * lambda
///            |W_all'(z_all - W_all b)| / N |_inf <= lambda
/// ```
///
/// where `n` and `N` are the row counts of the labeled and pooled designs.
/// The labeled rows must be the leading rows of the pooled design. When the
/// two designs coincide the second constraint is identical to the first and
/// is dropped.
///
/// Solved as a linear program in `b = b+ - b-` by the dense dual simplex.
/// The returned `feasibility_residual` is recomputed from the raw data,
/// `kkt_residual` is the LP dual residual and `duality_gap` the LP gap.
pub fn dantzig_two_constraint(
    w_lab: &DesignMatrix,
    z_lab: &[f64],
    w_all: &DesignMatrix,
    z_all: &[f64],
    lambda_beta: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    cfg.validate()?;
    if w_lab.rows() != z_lab.len() || w_all.rows() != z_all.len() {
        return Err(SolverError::Input("design rows and response lengths differ".into()));
    }
    if w_lab.cols() != w_all.cols() {
        return Err(SolverError::Input(format!(
            "labeled design has {} columns, pooled design has {}",
            w_lab.cols(),
            w_all.cols()
        )));
    }
    if w_lab.rows() == 0 || w_lab.cols() == 0 {
        return Err(SolverError::Input("design must have at least one row and column".into()));
    }
    if w_all.rows() < w_lab.rows()
        || !leading_block_matches(w_lab, w_all)
        || z_all[..z_lab.len()] != *z_lab
    {
        return Err(SolverError::Input(
            "labeled rows must be the leading rows of the pooled data".into(),
        ));
    }
    if !(lambda_beta >= 0.0 && lambda_beta.is_finite()) {
        return Err(SolverError::Input(format!(
            "lambda_beta must be finite and >= 0, got {lambda_beta}"
        )));
    }
    check_finite("W_all", w_all.values())?;
    check_finite("z_all", z_all)?;

    let n = w_lab.rows();
    let big_n = w_all.rows();
    let d = w_lab.cols();
    let (g1, b1, _) = CrossProducts::compute(w_lab, z_lab, None).normalized();
    let mut blocks = Vec::with_capacity(2);
    blocks.push(Block {
        name: "labeled",
        gram: g1,
        rhs: b1,
        bound: sqrt(big_n as f64 / n as f64) * lambda_beta,
    });
    if big_n > n {
        let (g2, b2, _) = CrossProducts::compute(w_all, z_all, None).normalized();
        blocks.push(Block {
            name: "pooled",
            gram: g2,
            rhs: b2,
            bound: lambda_beta,
        });
    }

    // Rows:  A b+ - A b- <= t + r   and  -A b+ + A b- <= t - r.
    let rows = 2 * d * blocks.len();
    let mut g = DesignMatrix::zeros(rows, 2 * d);
    let mut h = Vec::with_capacity(rows);
    let mut owner: Vec<usize> = Vec::with_capacity(rows);
    let mut r = 0;
    for (k, blk) in blocks.iter().enumerate() {
        for sgn in [1.0, -1.0] {
            for i in 0..d {
                let row = g.row_mut(r);
                for j in 0..d {
                    let a = sgn * blk.gram.get(i, j);
                    row[j] = a;
                    row[d + j] = -a;
                }
                h.push(blk.bound + sgn * blk.rhs[i]);
                owner.push(k);
                r += 1;
            }
        }
    }
    let c = alloc::vec![1.0; 2 * d];
    // The LP works in split variables; keep half the tolerance in reserve
    // for the recombination b = b+ - b-.
    let sol = lp::solve(
        &c,
        &g,
        &h,
        0.5 * cfg.feasibility_tolerance,
        cfg.kkt_tolerance,
        cfg.max_iterations,
    );
    if let LpStatus::Infeasible { row, bound, shortfall } = sol.status {
        let constraint: String = if bound {
            format!("nonnegativity of split coefficient {row}")
        } else {
            let blk = &blocks[owner[row]];
            format!("{} constraint (bound {:.6e})", blk.name, blk.bound)
        };
        return Err(SolverError::Infeasible {
            constraint,
            residual: shortfall,
        });
    }

    let beta: Vec<f64> = (0..d).map(|j| sol.x[j] - sol.x[d + j]).collect();
    let feasibility = blocks
        .iter()
        .map(|b| b.violation(&beta))
        .fold(0.0_f64, f64::max);
    let converged = sol.status == LpStatus::Optimal && feasibility <= cfg.feasibility_tolerance;
    Ok(SolverResult {
        objective: norm1(&beta),
        kkt_residual: sol.dual_residual,
        feasibility_residual: feasibility,
        duality_gap: sol.gap,
        iterations: sol.iterations,
        converged,
        coefficients: beta,
    })
}
