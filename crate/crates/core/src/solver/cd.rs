//! Cyclic coordinate descent for `min 0.5 b'Gb - target'b + t |b|_1`.
//!
//! Both the Lasso (in covariance form) and the dual of the l-infinity
//! constrained quadratic program reduce to this problem. Coordinates are
//! visited in ascending index order. Once the support and sign pattern
//! stop changing between full sweeps, the kernel tries an exact solve on
//! that support and keeps it only if it is sign-consistent and at least as
//! stationary as the iterate.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{Cholesky, DesignMatrix};
use crate::math::{max_abs, sign, soft_threshold};

pub(crate) struct CdOutput {
    pub b: Vec<f64>,
    /// `target - G b`.
    pub r: Vec<f64>,
    pub sweeps: usize,
    pub stationarity: f64,
    pub converged: bool,
}

pub(crate) struct CdSettings {
    pub change_tol: f64,
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Try an exact solve on the final support after convergence.
    pub final_polish: bool,
}

fn residual(gram: &DesignMatrix, target: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = target.to_vec();
    for (j, &bj) in b.iter().enumerate() {
        if bj != 0.0 {
            for (ri, g) in r.iter_mut().zip(gram.row(j)) {
                *ri -= bj * g;
            }
        }
    }
    r
}

pub(crate) fn stationarity(gram: &DesignMatrix, b: &[f64], r: &[f64], t: f64) -> f64 {
    let mut worst = 0.0_f64;
    for j in 0..b.len() {
        let v = if b[j] != 0.0 && gram.get(j, j) > 0.0 {
            (r[j] - t * sign(b[j])).abs()
        } else {
            (r[j].abs() - t).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

#[inline]
fn update(gram: &DesignMatrix, b: &mut [f64], r: &mut [f64], j: usize, t: f64) -> f64 {
    let gjj = gram.get(j, j);
    let new = if gjj > 0.0 {
        soft_threshold(r[j] + gjj * b[j], t) / gjj
    } else {
        0.0
    };
    let delta = new - b[j];
    if delta != 0.0 {
        for (ri, g) in r.iter_mut().zip(gram.row(j)) {
            *ri -= delta * g;
        }
        b[j] = new;
    }
    delta.abs()
}

fn support_signs(b: &[f64]) -> Vec<(usize, i8)> {
    b.iter()
        .enumerate()
        .filter(|(_, v)| **v != 0.0)
        .map(|(j, v)| (j, if *v > 0.0 { 1 } else { -1 }))
        .collect()
}

fn polish(
    gram: &DesignMatrix,
    target: &[f64],
    t: f64,
    pattern: &[(usize, i8)],
) -> Option<(Vec<f64>, Vec<f64>)> {
    if pattern.is_empty() {
        return None;
    }
    let idx: Vec<usize> = pattern.iter().map(|p| p.0).collect();
    let sub = gram.select_rows(&idx).select_cols(&idx);
    let chol = Cholesky::factor(&sub)?;
    let rhs: Vec<f64> = pattern
        .iter()
        .map(|&(j, s)| target[j] - t * f64::from(s))
        .collect();
    let sol = chol.solve(&rhs);
    let mut b = vec![0.0; target.len()];
    for (k, &(j, s)) in pattern.iter().enumerate() {
        if sol[k] * f64::from(s) <= 0.0 {
            return None;
        }
        b[j] = sol[k];
    }
    let r = residual(gram, target, &b);
    Some((b, r))
}

pub(crate) fn coordinate_descent(
    gram: &DesignMatrix,
    target: &[f64],
    t: f64,
    warm: Option<&[f64]>,
    settings: &CdSettings,
) -> CdOutput {
    let p = target.len();
    let mut b = match warm {
        Some(w) => w.to_vec(),
        None => vec![0.0; p],
    };
    // Coordinates with no curvature stay at zero.
    for j in 0..p {
        if gram.get(j, j) <= 0.0 {
            b[j] = 0.0;
        }
    }
    let mut r = residual(gram, target, &b);
    let mut sweeps = 0usize;
    let mut last_pattern: Option<Vec<(usize, i8)>> = None;
    let mut tried: Option<Vec<(usize, i8)>> = None;
    let mut pattern_since = 0usize;

    loop {
        let mut max_change = 0.0_f64;
        for j in 0..p {
            max_change = max_change.max(update(gram, &mut b, &mut r, j, t));
        }
        sweeps += 1;

        let scale = 1.0 + max_abs(&b);
        if max_change <= settings.change_tol * scale {
            r = residual(gram, target, &b);
            let st = stationarity(gram, &b, &r, t);
            if st <= settings.kkt_tol {
                return finish(gram, target, t, b, r, sweeps, settings);
            }
        }
        let pattern = support_signs(&b);
        if last_pattern.as_ref() != Some(&pattern) {
            pattern_since = sweeps;
        }
        // An exact solve on k coordinates costs about k^3/3, a sweep over
        // the support about k p, so the solve waits until the pattern has
        // held for roughly as many sweeps as it would cost. A pattern whose
        // solve was already rejected is not retried.
        let k = pattern.len();
        let wait = (k * k / (3 * p.max(1))).max(1);
        if last_pattern.as_ref() == Some(&pattern)
            && sweeps - pattern_since >= wait
            && tried.as_ref() != Some(&pattern)
        {
            tried = Some(pattern.clone());
            if let Some((pb, pr)) = polish(gram, target, t, &pattern) {
                let st = stationarity(gram, &pb, &pr, t);
                if st <= settings.kkt_tol {
                    return CdOutput {
                        b: pb,
                        r: pr,
                        sweeps,
                        stationarity: st,
                        converged: true,
                    };
                }
            }
        }
        last_pattern = Some(pattern);
        if sweeps >= settings.max_sweeps {
            break;
        }

        // Inner passes over the current support only.
        let active: Vec<usize> = (0..p).filter(|&j| b[j] != 0.0).collect();
        if active.is_empty() {
            continue;
        }
        loop {
            let mut max_change = 0.0_f64;
            for &j in &active {
                max_change = max_change.max(update(gram, &mut b, &mut r, j, t));
            }
            sweeps += 1;
            if max_change <= settings.change_tol * (1.0 + max_abs(&b)) * 0.1
                || sweeps >= settings.max_sweeps
            {
                break;
            }
        }
        if sweeps >= settings.max_sweeps {
            break;
        }
    }

    r = residual(gram, target, &b);
    let st = stationarity(gram, &b, &r, t);
    CdOutput {
        b,
        r,
        sweeps,
        stationarity: st,
        converged: st <= settings.kkt_tol,
    }
}

fn finish(
    gram: &DesignMatrix,
    target: &[f64],
    t: f64,
    b: Vec<f64>,
    r: Vec<f64>,
    sweeps: usize,
    settings: &CdSettings,
) -> CdOutput {
    let st = stationarity(gram, &b, &r, t);
    // A final exact solve on the support tightens the answer when it is
    // well posed; keep whichever point is more stationary.
    let pattern = support_signs(&b);
    let polished = if settings.final_polish {
        polish(gram, target, t, &pattern)
    } else {
        None
    };
    if let Some((pb, pr)) = polished {
        let pst = stationarity(gram, &pb, &pr, t);
        if pst <= st {
            return CdOutput {
                b: pb,
                r: pr,
                sweeps,
                stationarity: pst,
                converged: pst <= settings.kkt_tol,
            };
        }
    }
    CdOutput {
        b,
        r,
        sweeps,
        stationarity: st,
        converged: st <= settings.kkt_tol,
    }
}
