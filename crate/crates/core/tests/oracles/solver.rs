//! Solver oracles: first-order conditions recomputed from the data,
//! brute-force vertex enumeration for the Dantzig program, a direct linear
//! solve for the unpenalized quadratic program, a fine grid search for a
//! two-dimensional capped program, and the closed form of the Lasso under an
//! orthonormal design.

use semisup_core::linalg::Lu;
use semisup_core::rng::CounterRng;
use semisup_core::solver::{
    dantzig_two_constraint, lasso_fit, min_quadratic_linf, min_quadratic_linf_capped, SolverConfig,
};
use semisup_core::{DesignMatrix, SolverError};

use super::Check;

pub fn gaussian(rng: &mut CounterRng, rows: usize, cols: usize) -> DesignMatrix {
    DesignMatrix::from_fn(rows, cols, |_, _| rng.standard_normal())
}

pub fn gram(x: &DesignMatrix) -> DesignMatrix {
    let n = x.rows() as f64;
    let xt = x.transpose();
    let g = xt.matmul(x);
    DesignMatrix::from_fn(g.rows(), g.cols(), |i, j| g.get(i, j) / n)
}

/// Largest violation of the Lasso optimality conditions for
/// `(1/n)|y - X b|^2 + lambda |b|_1`, from scratch.
pub fn lasso_kkt_violation(x: &DesignMatrix, y: &[f64], b: &[f64], lambda: f64) -> f64 {
    let n = x.rows() as f64;
    let fit = x.mul_vec(b);
    let r: Vec<f64> = y.iter().zip(&fit).map(|(a, f)| f - a).collect();
    let g: Vec<f64> = x.tmul_vec(&r).iter().map(|v| 2.0 * v / n).collect();
    g.iter()
        .zip(b)
        .map(|(gj, bj)| {
            if *bj != 0.0 {
                (gj + lambda * bj.signum()).abs()
            } else {
                (gj.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Dantzig constraint rows `(S, a, bound)` as used in the oracle.
fn dantzig_blocks(w_lab: &DesignMatrix, z_lab: &[f64], w_all: &DesignMatrix, z_all: &[f64], lambda: f64) -> Vec<(DesignMatrix, Vec<f64>, f64)> {
    let (n, big) = (w_lab.rows() as f64, w_all.rows() as f64);
    let a_lab: Vec<f64> = w_lab.tmul_vec(z_lab).iter().map(|v| v / n).collect();
    let a_all: Vec<f64> = w_all.tmul_vec(z_all).iter().map(|v| v / big).collect();
    vec![
        (gram(w_lab), a_lab, (big / n).sqrt() * lambda),
        (gram(w_all), a_all, lambda),
    ]
}

fn dantzig_feasible(blocks: &[(DesignMatrix, Vec<f64>, f64)], b: &[f64], tol: f64) -> bool {
    blocks.iter().all(|(s, a, t)| {
        let sb = s.mul_vec(b);
        a.iter().zip(&sb).all(|(ai, si)| (ai - si).abs() <= t + tol)
    })
}

/// Minimum of `|b|_1` over the feasible polytope by enumerating every
/// intersection of `d` hyperplanes drawn from the constraint boundaries and
/// the coordinate planes. `None` if nothing is feasible.
fn dantzig_vertex_oracle(blocks: &[(DesignMatrix, Vec<f64>, f64)], d: usize) -> Option<f64> {
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for (s, a, t) in blocks {
        for i in 0..d {
            // a_i - s_i b = +-t
            planes.push((s.row(i).to_vec(), a[i] - t));
            planes.push((s.row(i).to_vec(), a[i] + t));
        }
    }
    for j in 0..d {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let k = planes.len();
    let mut best: Option<f64> = None;
    let mut idx: Vec<usize> = (0..d).collect();
    loop {
        let m = DesignMatrix::from_fn(d, d, |i, j| planes[idx[i]].0[j]);
        let rhs: Vec<f64> = idx.iter().map(|&i| planes[i].1).collect();
        if let Some(lu) = Lu::factor(&m) {
            let b = lu.solve(&rhs);
            if dantzig_feasible(blocks, &b, 1e-9) {
                let obj: f64 = b.iter().map(|v| v.abs()).sum();
                best = Some(best.map_or(obj, |o: f64| o.min(obj)));
            }
        }
        // next combination
        let mut i = d;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if idx[i] < k - d + i {
                idx[i] += 1;
                for j in i + 1..d {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}

/// Lasso on a random Gaussian design at `frac` of the critical penalty;
/// the optimality conditions are recomputed from the raw data.
pub fn lasso_case(seed: u64, n: usize, p: usize, frac: f64) -> Check {
    let mut rng = CounterRng::new(seed, 0);
    let x = gaussian(&mut rng, n, p);
    let y: Vec<f64> = (0..n).map(|i| x.get(i, 0) + rng.standard_normal()).collect();
    let lmax = 2.0 * x.tmul_vec(&y).iter().fold(0.0f64, |a, v| a.max(v.abs())) / n as f64;
    let lambda = frac * lmax;
    let res = lasso_fit(&x, &y, lambda, &SolverConfig::default()).map_err(|e| e.to_string())?;
    ensure!(res.converged, "not converged (n {n}, p {p}, seed {seed})");
    let v = lasso_kkt_violation(&x, &y, &res.coefficients, lambda);
    ensure!(v <= 1e-6, "KKT violation {v:e} (n {n}, p {p}, seed {seed})");
    ensure!(res.kkt_residual <= 1e-6, "reported KKT residual {:e}", res.kkt_residual);
    Ok(())
}

/// Two-constraint Dantzig program against vertex enumeration, `d <= 3`.
pub fn dantzig_case(seed: u64, d: usize, n: usize, extra: usize, frac: f64) -> Check {
    let mut rng = CounterRng::new(seed, 1);
    let w_all = gaussian(&mut rng, n + extra, d);
    let z_all: Vec<f64> = (0..n + extra).map(|i| 0.8 * w_all.get(i, 0) + rng.standard_normal()).collect();
    let w_lab = w_all.select_rows(&(0..n).collect::<Vec<_>>());
    let z_lab = z_all[..n].to_vec();
    let scale = w_all.tmul_vec(&z_all).iter().fold(0.0f64, |a, v| a.max(v.abs())) / (n + extra) as f64;
    let lambda = frac * scale;
    let blocks = dantzig_blocks(&w_lab, &z_lab, &w_all, &z_all, lambda);
    let oracle = dantzig_vertex_oracle(&blocks, d);
    let cfg = SolverConfig::default();
    match dantzig_two_constraint(&w_lab, &z_lab, &w_all, &z_all, lambda, &cfg) {
        Ok(res) => {
            let Some(best) = oracle else {
                return Err(format!("solver found a point the oracle calls infeasible (seed {seed})"));
            };
            ensure!(res.converged, "not converged (seed {seed})");
            ensure!(dantzig_feasible(&blocks, &res.coefficients, 1e-7), "infeasible answer (seed {seed})");
            let obj: f64 = res.coefficients.iter().map(|v| v.abs()).sum();
            ensure!((obj - best).abs() <= 1e-6 * (1.0 + best), "solver {obj} oracle {best} (seed {seed})");
        }
        Err(SolverError::Infeasible { .. }) => {
            ensure!(oracle.is_none(), "solver says infeasible, oracle found {oracle:?} (seed {seed})")
        }
        Err(e) => return Err(format!("unexpected error {e} (seed {seed})")),
    }
    Ok(())
}

/// The l-infinity program at zero penalty against `S^{-1} xi`.
pub fn unpenalized_case(seed: u64, d: usize) -> Check {
    let mut rng = CounterRng::new(seed, 2);
    let x = gaussian(&mut rng, 3 * d + 5, d);
    let s = gram(&x);
    let xi: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let res = min_quadratic_linf(&s, &xi, 0.0, &SolverConfig::default()).map_err(|e| e.to_string())?;
    let direct = Lu::factor(&s).ok_or("singular test matrix")?.solve(&xi);
    let norm = direct.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = res.coefficients.iter().zip(&direct).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    ensure!(err <= 1e-6 * norm, "error {err:e} vs norm {norm:e} (d {d}, seed {seed})");
    Ok(())
}

/// Tightening the row caps can only raise the optimum, and infeasibility
/// propagates to tighter caps.
pub fn caps_nest_case(seed: u64, d: usize, frac: f64, shrink: f64) -> Check {
    let mut rng = CounterRng::new(seed, 3);
    let x = gaussian(&mut rng, 4 * d, d);
    let s = gram(&x);
    let xi: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
    let lmax = xi.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let lambda = frac * lmax;
    let cfg = SolverConfig::default();
    let free = min_quadratic_linf(&s, &xi, lambda, &cfg).map_err(|e| e.to_string())?;
    let reach = x.mul_vec(&free.coefficients).iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let loose = min_quadratic_linf_capped(&s, &xi, lambda, &x, shrink.sqrt() * reach, &cfg);
    let tight = min_quadratic_linf_capped(&s, &xi, lambda, &x, shrink * reach, &cfg);
    match (loose, tight) {
        (Ok(l), Ok(t)) => {
            ensure!(l.converged && t.converged, "not converged (seed {seed})");
            ensure!(free.objective <= l.objective * (1.0 + 1e-6) + 1e-9, "loose caps beat no caps (seed {seed})");
            ensure!(l.objective <= t.objective * (1.0 + 1e-6) + 1e-9, "tight caps beat loose caps (seed {seed})");
            let worst = x.mul_vec(&t.coefficients).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            ensure!(worst <= shrink * reach * (1.0 + 1e-6) + 1e-8, "cap violated: {worst} (seed {seed})");
        }
        (Ok(l), Err(SolverError::Infeasible { .. })) => {
            ensure!(free.objective <= l.objective * (1.0 + 1e-6) + 1e-9, "loose caps beat no caps (seed {seed})");
        }
        (Err(SolverError::Infeasible { .. }), t) => {
            ensure!(
                matches!(t, Err(SolverError::Infeasible { .. })),
                "tight caps feasible where loose caps are not (seed {seed})"
            );
        }
        (l, t) => return Err(format!("unexpected: {l:?} / {t:?} (seed {seed})")),
    }
    Ok(())
}

/// Deterministic drivers with the parameter ranges of the property tests.
pub fn lasso_cases(count: usize, seed: u64) -> Check {
    let mut rng = CounterRng::new(seed, 100);
    for _ in 0..count {
        let s = rng.next_u64();
        let n = 5 + rng.below(55) as usize;
        let p = 1 + rng.below(39) as usize;
        let frac = 0.01 + 0.99 * rng.uniform();
        lasso_case(s, n, p, frac)?;
    }
    Ok(())
}

pub fn dantzig_cases(count: usize, seed: u64) -> Check {
    let mut rng = CounterRng::new(seed, 101);
    for _ in 0..count {
        let s = rng.next_u64();
        let d = 1 + rng.below(3) as usize;
        let n = 4 + rng.below(8) as usize;
        let extra = rng.below(20) as usize;
        let frac = 0.02 + 0.78 * rng.uniform();
        dantzig_case(s, d, n, extra, frac)?;
    }
    Ok(())
}

pub fn unpenalized_cases(count: usize, seed: u64) -> Check {
    let mut rng = CounterRng::new(seed, 102);
    for _ in 0..count {
        let s = rng.next_u64();
        let d = 1 + rng.below(11) as usize;
        unpenalized_case(s, d)?;
    }
    Ok(())
}

pub fn caps_nest_cases(count: usize, seed: u64) -> Check {
    let mut rng = CounterRng::new(seed, 103);
    for _ in 0..count {
        let s = rng.next_u64();
        let d = 2 + rng.below(6) as usize;
        let frac = 0.05 + 0.55 * rng.uniform();
        let shrink = 0.3 + 0.65 * rng.uniform();
        caps_nest_case(s, d, frac, shrink)?;
    }
    Ok(())
}
