//! Minimum of `u' S u` under an l-infinity residual constraint, optionally
//! with per-row caps.
//!
//! Uncapped problem. Its Lagrangian dual, after the substitution `u = v`,
//! is the l1-penalized quadratic `min 0.5 v'Sv - xi'v + lambda |v|_1`, whose
//! stationarity conditions are exactly primal feasibility plus
//! complementary slackness. The shared coordinate-descent kernel solves it
//! and the duality gap `2 (v'Sv - xi'v + lambda |v|_1)` certifies the
//! answer. When `S` is singular the dual can be unbounded, so feasibility
//! is first decided by a small linear program for
//! `min_u |xi - S u|_inf`.
//!
//! Capped problem. If the uncapped optimum already respects the caps it is
//! returned. Otherwise an operator-splitting (ADMM) iteration in the style
//! of OSQP brings the iterate close, and a polishing step solves the
//! equality-constrained problem on the guessed active set exactly.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::cd::{coordinate_descent, CdSettings};
use super::lp::{self, LpStatus};
use super::{check_finite, SolverConfig, SolverResult};
use crate::error::SolverError;
use crate::linalg::{Cholesky, DesignMatrix, Lu};
use crate::math::{dot, max_abs, norm1, sqrt};

fn validate(sigma: &DesignMatrix, xi: &[f64], lambda: f64, cfg: &SolverConfig) -> Result<(), SolverError> {
    cfg.validate()?;
    let d = xi.len();
    if sigma.rows() != d || sigma.cols() != d {
        return Err(SolverError::Input(format!(
            "matrix is {}x{} but xi has length {d}",
            sigma.rows(),
            sigma.cols()
        )));
    }
    if d == 0 {
        return Err(SolverError::Input("dimension must be at least 1".into()));
    }
    check_finite("Sigma", sigma.values())?;
    check_finite("xi", xi)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(SolverError::Input(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let asym = sigma.max_asymmetry();
    if asym > 1e-10 * (1.0 + sigma.max_abs()) {
        return Err(SolverError::Input(format!("matrix is not symmetric (max asymmetry {asym:.3e})")));
    }
    Ok(())
}

fn constraint_violation(sigma: &DesignMatrix, xi: &[f64], u: &[f64], lambda: f64) -> f64 {
    let su = sigma.mul_vec(u);
    let mut worst = 0.0_f64;
    for (x, s) in xi.iter().zip(&su) {
        worst = worst.max((x - s).abs() - lambda);
    }
    worst
}

fn quad(sigma: &DesignMatrix, u: &[f64]) -> f64 {
    dot(u, &sigma.mul_vec(u))
}

fn zero_result(d: usize) -> SolverResult {
    SolverResult {
        coefficients: vec![0.0; d],
        objective: 0.0,
        kkt_residual: 0.0,
        feasibility_residual: 0.0,
        duality_gap: 0.0,
        iterations: 0,
        converged: true,
    }
}

/// `min_u |xi - S u|_inf`: the smallest `lambda` for which the constraint
/// set is nonempty. Zero whenever `xi` lies in the range of `S`.
pub fn linf_feasibility_threshold(
    sigma: &DesignMatrix,
    xi: &[f64],
    cfg: &SolverConfig,
) -> Result<f64, SolverError> {
    validate(sigma, xi, 0.0, cfg)?;
    if Cholesky::factor(sigma).is_some() {
        return Ok(0.0);
    }
    let d = xi.len();
    // Variables (u+, u-, s); rows  -S u - s <= -xi  and  S u - s <= xi.
    let mut g = DesignMatrix::zeros(2 * d, 2 * d + 1);
    let mut h = Vec::with_capacity(2 * d);
    for (block, sgn) in [(0usize, -1.0), (1, 1.0)] {
        for i in 0..d {
            let row = g.row_mut(block * d + i);
            for j in 0..d {
                let a = sgn * sigma.get(i, j);
                row[j] = a;
                row[d + j] = -a;
            }
            row[2 * d] = -1.0;
            h.push(sgn * xi[i]);
        }
    }
    // With only `s` priced every reduced cost starts at zero and the dual
    // simplex stalls on the degeneracy. A tiny, uneven price on |u| breaks
    // the ties; since the residual of the returned `u` is what gets
    // reported, the perturbation can only overstate the threshold, and by
    // at most `eps |u*|_1`.
    let eps = 1e-9;
    let mut c: Vec<f64> = (0..2 * d + 1)
        .map(|j| eps * (1.0 + ((j.wrapping_mul(2_654_435_761) % 1000) as f64) / 1000.0))
        .collect();
    c[2 * d] = 1.0;
    let sol = lp::solve(&c, &g, &h, cfg.feasibility_tolerance, cfg.kkt_tolerance, cfg.max_iterations);
    match sol.status {
        LpStatus::Optimal => {
            let u: Vec<f64> = (0..d).map(|j| sol.x[j] - sol.x[d + j]).collect();
            // Report the residual actually achieved, not the LP's s.
            Ok(constraint_violation(sigma, xi, &u, 0.0).max(0.0))
        }
        _ => Err(SolverError::NotConverged {
            iterations: sol.iterations,
            residual: sol.primal_residual.max(sol.dual_residual),
        }),
    }
}

/// Minimize `u' S u` subject to `|xi - S u|_inf <= lambda`.
pub fn min_quadratic_linf(
    sigma: &DesignMatrix,
    xi: &[f64],
    lambda: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    validate(sigma, xi, lambda, cfg)?;
    let d = xi.len();
    if lambda >= max_abs(xi) {
        return Ok(zero_result(d));
    }
    if Cholesky::factor(sigma).is_none() {
        let threshold = linf_feasibility_threshold(sigma, xi, cfg)?;
        if lambda + cfg.feasibility_tolerance < threshold {
            return Err(SolverError::Infeasible {
                constraint: format!("l-infinity residual bound {lambda:.6e}"),
                residual: threshold - lambda,
            });
        }
    }
    let settings = CdSettings {
        change_tol: cfg.kkt_tolerance,
        kkt_tol: cfg.feasibility_tolerance.min(cfg.kkt_tolerance),
        max_sweeps: cfg.max_iterations,
        final_polish: true,
    };
    let out = coordinate_descent(sigma, xi, lambda, None, &settings);
    let u = out.b;
    let q = quad(sigma, &u);
    let gap = 2.0 * (q - dot(xi, &u) + lambda * norm1(&u));
    let feas = constraint_violation(sigma, xi, &u, lambda).max(0.0);
    let converged = out.converged
        && feas <= cfg.feasibility_tolerance
        && gap.abs() <= cfg.kkt_tolerance * (1.0 + q);
    Ok(SolverResult {
        objective: q,
        kkt_residual: out.stationarity,
        feasibility_residual: feas,
        duality_gap: gap.abs(),
        iterations: out.sweeps,
        converged,
        coefficients: u,
    })
}

/// Minimize `u' S u` subject to `|xi - S u|_inf <= lambda` and
/// `|r_i' u| <= cap` for every row `r_i` of `rows`. `cap = +inf` disables
/// the caps.
pub fn min_quadratic_linf_capped(
    sigma: &DesignMatrix,
    xi: &[f64],
    lambda: f64,
    rows: &DesignMatrix,
    cap: f64,
    cfg: &SolverConfig,
) -> Result<SolverResult, SolverError> {
    validate(sigma, xi, lambda, cfg)?;
    let d = xi.len();
    if rows.cols() != d {
        return Err(SolverError::Input(format!(
            "cap rows have {} columns, expected {d}",
            rows.cols()
        )));
    }
    if cap.is_nan() || cap <= 0.0 {
        return Err(SolverError::Input(format!("cap must be positive, got {cap}")));
    }
    check_finite("cap rows", rows.values())?;
    if lambda >= max_abs(xi) {
        return Ok(zero_result(d));
    }
    let uncapped = min_quadratic_linf(sigma, xi, lambda, cfg)?;
    if cap == f64::INFINITY || rows.rows() == 0 {
        return Ok(uncapped);
    }
    let worst_row = max_abs(&rows.mul_vec(&uncapped.coefficients));
    if uncapped.converged && worst_row <= cap {
        return Ok(uncapped);
    }
    CappedProblem::new(sigma, xi, lambda, rows, cap).solve(cfg)
}

/// `min 0.5 x'Px  s.t.  l <= Ax <= u` with `P = 2S`, `A = [S; R]`.
struct CappedProblem<'a> {
    sigma: &'a DesignMatrix,
    r: &'a DesignMatrix,
    lo: Vec<f64>,
    hi: Vec<f64>,
    d: usize,
}

const ADMM_SIGMA: f64 = 1e-6;
const ADMM_ALPHA: f64 = 1.6;
const CHECK_EVERY: usize = 25;
/// Relative tolerance of the dual-ray infeasibility certificate (OSQP uses
/// 1e-4 by default).
const ADMM_INFEASIBLE_TOL: f64 = 1e-5;

impl<'a> CappedProblem<'a> {
    fn new(sigma: &'a DesignMatrix, xi: &[f64], lambda: f64, r: &'a DesignMatrix, cap: f64) -> Self {
        let d = xi.len();
        let mut lo: Vec<f64> = xi.iter().map(|x| x - lambda).collect();
        let mut hi: Vec<f64> = xi.iter().map(|x| x + lambda).collect();
        lo.extend(core::iter::repeat_n(-cap, r.rows()));
        hi.extend(core::iter::repeat_n(cap, r.rows()));
        CappedProblem { sigma, r, lo, hi, d }
    }

    fn m(&self) -> usize {
        self.lo.len()
    }

    fn a_mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.sigma.mul_vec(x);
        out.extend(self.r.mul_vec(x));
        out
    }

    fn at_mul(&self, y: &[f64]) -> Vec<f64> {
        let mut out = self.sigma.tmul_vec(&y[..self.d]);
        let rt = self.r.tmul_vec(&y[self.d..]);
        for (o, v) in out.iter_mut().zip(rt) {
            *o += v;
        }
        out
    }

    fn p_mul(&self, x: &[f64]) -> Vec<f64> {
        self.sigma.mul_vec(x).into_iter().map(|v| 2.0 * v).collect()
    }

    fn primal_violation(&self, x: &[f64]) -> f64 {
        let ax = self.a_mul(x);
        let mut worst = 0.0_f64;
        for i in 0..ax.len() {
            worst = worst.max(self.lo[i] - ax[i]).max(ax[i] - self.hi[i]);
        }
        worst
    }

    /// `x'Px + hi'y+ - lo'y-`, the primal objective minus the dual value
    /// at `(x, y)` when `Px + A'y = 0`.
    fn gap(&self, x: &[f64], y: &[f64]) -> f64 {
        let mut g = dot(x, &self.p_mul(x));
        for i in 0..y.len() {
            if y[i] > 0.0 {
                g += self.hi[i] * y[i];
            } else {
                g += self.lo[i] * y[i];
            }
        }
        g
    }

    fn dual_residual(&self, x: &[f64], y: &[f64]) -> f64 {
        let px = self.p_mul(x);
        let aty = self.at_mul(y);
        px.iter().zip(&aty).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max)
    }

    fn kkt_factor(&self, s2: &DesignMatrix, rtr: &DesignMatrix, rho: &[f64; 2]) -> Option<Cholesky> {
        let d = self.d;
        let k = DesignMatrix::from_fn(d, d, |i, j| {
            let diag = if i == j { ADMM_SIGMA } else { 0.0 };
            2.0 * self.sigma.get(i, j) + diag + rho[0] * s2.get(i, j) + rho[1] * rtr.get(i, j)
        });
        Cholesky::factor(&k)
    }

    fn solve(&self, cfg: &SolverConfig) -> Result<SolverResult, SolverError> {
        let d = self.d;
        let m = self.m();
        let s2 = self.sigma.matmul(self.sigma);
        let rtr = self.r.transpose().matmul(self.r);
        let equality_block = self.lo[0] == self.hi[0];
        let block_rho = |base: f64| -> [f64; 2] {
            [if equality_block { base * 1e3 } else { base }, base]
        };
        let mut base_rho = 0.1;
        let mut rho = block_rho(base_rho);
        let mut chol = self
            .kkt_factor(&s2, &rtr, &rho)
            .ok_or_else(|| SolverError::Input("ADMM system is not positive definite".into()))?;

        let mut x = vec![0.0; d];
        let mut z = vec![0.0; m];
        let mut y = vec![0.0; m];
        let mut y_prev = y.clone();
        let max_iter = cfg.max_iterations.min(50_000);
        let mut eps = 1e-6;
        let mut best: Option<SolverResult> = None;

        let mut it = 0;
        while it < max_iter {
            it += 1;
            let rho_row = |i: usize| if i < d { rho[0] } else { rho[1] };
            let w: Vec<f64> = (0..m).map(|i| rho_row(i) * z[i] - y[i]).collect();
            let mut rhs = self.at_mul(&w);
            for (rv, xv) in rhs.iter_mut().zip(&x) {
                *rv += ADMM_SIGMA * xv;
            }
            let xt = chol.solve(&rhs);
            let zt = self.a_mul(&xt);
            for j in 0..d {
                x[j] = ADMM_ALPHA * xt[j] + (1.0 - ADMM_ALPHA) * x[j];
            }
            for i in 0..m {
                let relaxed = ADMM_ALPHA * zt[i] + (1.0 - ADMM_ALPHA) * z[i];
                let znew = (relaxed + y[i] / rho_row(i)).clamp(self.lo[i], self.hi[i]);
                y[i] += rho_row(i) * (relaxed - znew);
                z[i] = znew;
            }

            if it % CHECK_EVERY != 0 {
                continue;
            }
            let ax = self.a_mul(&x);
            let px = self.p_mul(&x);
            let aty = self.at_mul(&y);
            let r_prim = ax.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let r_dual = px.iter().zip(&aty).map(|(a, b)| (a + b).abs()).fold(0.0, f64::max);
            let prim_scale = max_abs(&ax).max(max_abs(&z));
            let dual_scale = max_abs(&px).max(max_abs(&aty));

            // Infeasibility certificate from the change in duals.
            let dy: Vec<f64> = y.iter().zip(&y_prev).map(|(a, b)| a - b).collect();
            let dy_norm = max_abs(&dy);
            if dy_norm > 0.0 {
                let atdy = max_abs(&self.at_mul(&dy));
                let support: f64 = (0..m)
                    .map(|i| if dy[i] > 0.0 { self.hi[i] * dy[i] } else { self.lo[i] * dy[i] })
                    .sum();
                if atdy <= ADMM_INFEASIBLE_TOL * dy_norm && support < -ADMM_INFEASIBLE_TOL * dy_norm {
                    return Err(SolverError::Infeasible {
                        constraint: "residual bound together with the row caps".into(),
                        residual: -support / dy_norm,
                    });
                }
            }
            y_prev.clone_from(&y);

            if r_prim <= eps * (1.0 + prim_scale) && r_dual <= eps * (1.0 + dual_scale) {
                if let Some(res) = self.polish(&x, &z, &y, it, cfg) {
                    if res.converged {
                        return Ok(res);
                    }
                    if best.as_ref().is_none_or(|b| res.feasibility_residual < b.feasibility_residual) {
                        best = Some(res);
                    }
                }
                if eps > 1e-12 {
                    eps *= 0.01;
                }
            }

            // Adapt rho when the residuals are badly unbalanced.
            let ratio = sqrt(
                (r_prim / (prim_scale + 1e-30)) / (r_dual / (dual_scale + 1e-30) + 1e-30),
            );
            if ratio.is_finite() && !(0.2..=5.0).contains(&ratio) {
                base_rho = (base_rho * ratio).clamp(1e-6, 1e6);
                rho = block_rho(base_rho);
                if let Some(c) = self.kkt_factor(&s2, &rtr, &rho) {
                    chol = c;
                }
            }
        }
        match best {
            Some(res) => Ok(res),
            None => {
                let feas = self.primal_violation(&x).max(0.0);
                let q = 0.5 * dot(&x, &self.p_mul(&x));
                Ok(SolverResult {
                    objective: q,
                    kkt_residual: self.dual_residual(&x, &y),
                    feasibility_residual: feas,
                    duality_gap: self.gap(&x, &y).abs(),
                    iterations: it,
                    converged: false,
                    coefficients: x,
                })
            }
        }
    }

    /// Solve the equality-constrained problem on the active set suggested
    /// by `(z, y)` and certify the result.
    fn polish(
        &self,
        x: &[f64],
        z: &[f64],
        y: &[f64],
        iterations: usize,
        cfg: &SolverConfig,
    ) -> Option<SolverResult> {
        let d = self.d;
        let mut active: Vec<(usize, f64)> = Vec::new();
        for i in 0..self.m() {
            if z[i] - self.lo[i] < -y[i] {
                active.push((i, self.lo[i]));
            } else if self.hi[i] - z[i] < y[i] {
                active.push((i, self.hi[i]));
            }
        }
        let k = active.len();
        let size = d + k;
        let delta = 1e-9;
        let row_of = |i: usize| -> Vec<f64> {
            if i < d {
                self.sigma.row(i).to_vec()
            } else {
                self.r.row(i - d).to_vec()
            }
        };
        let a_act: Vec<Vec<f64>> = active.iter().map(|&(i, _)| row_of(i)).collect();
        let build = |reg: f64| {
            let mut kkt = DesignMatrix::zeros(size, size);
            for i in 0..d {
                for j in 0..d {
                    kkt.set(i, j, 2.0 * self.sigma.get(i, j));
                }
                kkt.set(i, i, kkt.get(i, i) + reg);
            }
            for (a, row) in a_act.iter().enumerate() {
                for j in 0..d {
                    kkt.set(d + a, j, row[j]);
                    kkt.set(j, d + a, row[j]);
                }
                kkt.set(d + a, d + a, -reg);
            }
            kkt
        };
        let exact = build(0.0);
        let lu = Lu::factor(&build(delta))?;
        let mut rhs = vec![0.0; size];
        for (a, &(_, b)) in active.iter().enumerate() {
            rhs[d + a] = b;
        }
        let mut sol = lu.solve(&rhs);
        for _ in 0..10 {
            let ks = exact.mul_vec(&sol);
            let res: Vec<f64> = rhs.iter().zip(&ks).map(|(a, b)| a - b).collect();
            if max_abs(&res) <= 1e-14 * (1.0 + max_abs(&rhs)) {
                break;
            }
            let corr = lu.solve(&res);
            for (s, c) in sol.iter_mut().zip(corr) {
                *s += c;
            }
        }
        let xp: Vec<f64> = sol[..d].to_vec();
        let mut yp = vec![0.0; self.m()];
        for (a, &(i, _)) in active.iter().enumerate() {
            yp[i] = sol[d + a];
        }
        // Multipliers must carry the sign of the bound they hold.
        let mut sign_violation = 0.0_f64;
        for &(i, b) in &active {
            let v = yp[i];
            if b == self.hi[i] && b != self.lo[i] {
                sign_violation = sign_violation.max(-v);
            } else if b == self.lo[i] && b != self.hi[i] {
                sign_violation = sign_violation.max(v);
            }
        }
        let feas = self.primal_violation(&xp).max(0.0);
        let q = 0.5 * dot(&xp, &self.p_mul(&xp));
        let gap = self.gap(&xp, &yp).abs();
        let kkt = self.dual_residual(&xp, &yp).max(sign_violation);
        let converged = feas <= cfg.feasibility_tolerance
            && kkt <= cfg.kkt_tolerance
            && gap <= cfg.kkt_tolerance * (1.0 + q);
        let _ = x;
        Some(SolverResult {
            objective: q,
            kkt_residual: kkt,
            feasibility_residual: feas,
            duality_gap: gap,
            iterations,
            converged,
            coefficients: xp,
        })
    }
}
