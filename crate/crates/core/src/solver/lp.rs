//! Dense dual simplex for `min c'x  s.t.  Gx <= h, x >= 0` with `c >= 0`.
//!
//! With nonnegative costs the all-slack basis is dual feasible, so the dual
//! simplex can start there without a phase one. The tableau is kept in
//! compact form (one column per nonbasic variable):
//!
//! ```text
//! basic_i = rhs_i - sum_j T[i][j] * nonbasic_j
//! objective = z + sum_j d[j] * nonbasic_j
//! ```
//!
//! At termination the primal point and the duals are recomputed from the
//! final basis by a small linear solve rather than read off the tableau, and
//! the three certificates (primal residual, dual residual, duality gap) are
//! evaluated against the original data. If they fail, the tableau is rebuilt
//! from the basis and the iteration resumes.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{DesignMatrix, Lu};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    Structural(usize),
    Slack(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Optimal,
    /// The row's basic variable cannot be made nonnegative: with every
    /// nonbasic at its bound the best it can reach is `-shortfall`. `row` is
    /// the constraint whose slack (or, if `bound` is set, the variable whose
    /// lower bound) is the obstruction.
    Infeasible {
        row: usize,
        bound: bool,
        shortfall: f64,
    },
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    /// Multipliers of the rows of `G` (nonnegative at optimality).
    pub y: Vec<f64>,
    pub objective: f64,
    /// `max(max_i (Gx - h)_i, max_j -x_j, 0)`.
    pub primal_residual: f64,
    /// `max(max_j -(c + G'y)_j, max_i -y_i, 0)`.
    pub dual_residual: f64,
    /// `|c'x + h'y|`.
    pub gap: f64,
    pub iterations: usize,
    pub status: LpStatus,
}

struct Tableau<'a> {
    c: &'a [f64],
    g: &'a DesignMatrix,
    h: &'a [f64],
    t: Vec<f64>,
    rhs: Vec<f64>,
    d: Vec<f64>,
    basic: Vec<Var>,
    nonbasic: Vec<Var>,
}

const PIVOT_TOL: f64 = 1e-9;
const DUAL_TOL: f64 = 1e-10;

impl<'a> Tableau<'a> {
    fn slack_basis(c: &'a [f64], g: &'a DesignMatrix, h: &'a [f64]) -> Self {
        Tableau {
            c,
            g,
            h,
            t: g.values().to_vec(),
            rhs: h.to_vec(),
            d: c.to_vec(),
            basic: (0..g.rows()).map(Var::Slack).collect(),
            nonbasic: (0..g.cols()).map(Var::Structural).collect(),
        }
    }

    fn m(&self) -> usize {
        self.g.rows()
    }

    fn n(&self) -> usize {
        self.g.cols()
    }

    fn leaving_row(&self, tol: f64) -> Option<usize> {
        let mut best = None;
        let mut worst = -tol;
        for (i, &r) in self.rhs.iter().enumerate() {
            if r < worst {
                worst = r;
                best = Some(i);
            }
        }
        best
    }

    /// Harris two-pass ratio test over the columns with `T[r][j] < 0`.
    fn entering_column(&self, r: usize) -> Option<usize> {
        let n = self.n();
        let row = &self.t[r * n..(r + 1) * n];
        let scale = row.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        let piv = PIVOT_TOL * scale.max(1.0);
        let mut bound = f64::INFINITY;
        for j in 0..n {
            if row[j] < -piv {
                bound = bound.min((self.d[j].max(0.0) + DUAL_TOL) / -row[j]);
            }
        }
        if !bound.is_finite() {
            return None;
        }
        let mut best = None;
        let mut best_mag = 0.0;
        for j in 0..n {
            if row[j] < -piv && self.d[j].max(0.0) / -row[j] <= bound && -row[j] > best_mag {
                best_mag = -row[j];
                best = Some(j);
            }
        }
        best
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let n = self.n();
        let p = self.t[r * n + q];
        for j in 0..n {
            if j == q {
                self.t[r * n + j] = 1.0 / p;
            } else {
                self.t[r * n + j] /= p;
            }
        }
        self.rhs[r] /= p;
        let (before, rest) = self.t.split_at_mut(r * n);
        let (prow, after) = rest.split_at_mut(n);
        let prow: &[f64] = prow;
        let update = |row: &mut [f64], rhs: &mut f64, rhs_r: f64| {
            let f = row[q];
            if f == 0.0 {
                return;
            }
            for j in 0..n {
                if j == q {
                    row[j] = -f * prow[j];
                } else {
                    row[j] -= f * prow[j];
                }
            }
            *rhs -= f * rhs_r;
        };
        let rhs_r = self.rhs[r];
        for (i, row) in before.chunks_mut(n).enumerate() {
            update(row, &mut self.rhs[i], rhs_r);
        }
        for (k, row) in after.chunks_mut(n).enumerate() {
            update(row, &mut self.rhs[r + 1 + k], rhs_r);
        }
        let dq = self.d[q];
        if dq != 0.0 {
            for j in 0..n {
                if j == q {
                    self.d[j] = -dq * prow[j];
                } else {
                    self.d[j] -= dq * prow[j];
                }
            }
        }
        core::mem::swap(&mut self.basic[r], &mut self.nonbasic[q]);
    }

    /// Basic structurals and the rows whose slacks are nonbasic. The two
    /// lists always have the same length.
    fn basis_blocks(&self) -> (Vec<usize>, Vec<usize>) {
        let mut s: Vec<usize> = self
            .basic
            .iter()
            .filter_map(|v| match v {
                Var::Structural(j) => Some(*j),
                Var::Slack(_) => None,
            })
            .collect();
        let mut t: Vec<usize> = self
            .nonbasic
            .iter()
            .filter_map(|v| match v {
                Var::Slack(i) => Some(*i),
                Var::Structural(_) => None,
            })
            .collect();
        s.sort_unstable();
        t.sort_unstable();
        (s, t)
    }

    fn basis_factor(&self, s: &[usize], t: &[usize]) -> Option<Lu> {
        if s.is_empty() {
            return None;
        }
        let k = s.len();
        let b = DesignMatrix::from_fn(k, k, |a, bb| self.g.get(t[a], s[bb]));
        Lu::factor(&b)
    }

    /// Primal and dual points implied by the current basis.
    fn extract(&self) -> (Vec<f64>, Vec<f64>) {
        let (s, t) = self.basis_blocks();
        let mut x = vec![0.0; self.n()];
        let mut y = vec![0.0; self.m()];
        if s.is_empty() {
            for (col, v) in self.nonbasic.iter().enumerate() {
                if let Var::Slack(i) = v {
                    y[*i] = self.d[col].max(0.0);
                }
            }
            return (x, y);
        }
        match self.basis_factor(&s, &t) {
            Some(lu) => {
                let ht: Vec<f64> = t.iter().map(|&i| self.h[i]).collect();
                let xs = lu.solve(&ht);
                for (k, &j) in s.iter().enumerate() {
                    x[j] = xs[k];
                }
                let cs: Vec<f64> = s.iter().map(|&j| -self.c[j]).collect();
                let yt = lu.solve_transpose(&cs);
                for (k, &i) in t.iter().enumerate() {
                    y[i] = yt[k];
                }
            }
            None => {
                for (row, v) in self.basic.iter().enumerate() {
                    if let Var::Structural(j) = v {
                        x[*j] = self.rhs[row];
                    }
                }
                for (col, v) in self.nonbasic.iter().enumerate() {
                    if let Var::Slack(i) = v {
                        y[*i] = self.d[col];
                    }
                }
            }
        }
        (x, y)
    }

    /// Recompute the whole tableau from the basis structure, discarding the
    /// round-off accumulated by the pivots.
    fn rebuild(&mut self) -> bool {
        let (s, t) = self.basis_blocks();
        let k = s.len();
        let n = self.n();
        let m = self.m();
        let lu = if k > 0 {
            match self.basis_factor(&s, &t) {
                Some(lu) => Some(lu),
                None => return false,
            }
        } else {
            None
        };
        let pos_s = |j: usize| s.iter().position(|&v| v == j);
        let pos_t = |i: usize| t.iter().position(|&v| v == i);

        // Columns of B^{-1} applied to every nonbasic column: a nonbasic
        // structural j contributes G[t][j]; a nonbasic slack of row t_a
        // contributes the unit vector e_a.
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(n);
        for v in &self.nonbasic {
            let raw: Vec<f64> = match *v {
                Var::Structural(j) => t.iter().map(|&i| self.g.get(i, j)).collect(),
                Var::Slack(i) => {
                    let mut e = vec![0.0; k];
                    if let Some(a) = pos_t(i) {
                        e[a] = 1.0;
                    }
                    e
                }
            };
            cols.push(match &lu {
                Some(lu) => lu.solve(&raw),
                None => raw,
            });
        }
        let ht: Vec<f64> = t.iter().map(|&i| self.h[i]).collect();
        let xs = match &lu {
            Some(lu) => lu.solve(&ht),
            None => Vec::new(),
        };

        let mut tab = vec![0.0; m * n];
        let mut rhs = vec![0.0; m];
        for (row, v) in self.basic.iter().enumerate() {
            match *v {
                Var::Structural(j) => {
                    let p = pos_s(j).unwrap_or(0);
                    rhs[row] = xs[p];
                    for col in 0..n {
                        tab[row * n + col] = cols[col][p];
                    }
                }
                Var::Slack(i) => {
                    let gs: Vec<f64> = s.iter().map(|&j| self.g.get(i, j)).collect();
                    rhs[row] = self.h[i] - gs.iter().zip(&xs).map(|(a, b)| a * b).sum::<f64>();
                    for (col, nb) in self.nonbasic.iter().enumerate() {
                        let direct = match *nb {
                            Var::Structural(j) => self.g.get(i, j),
                            Var::Slack(_) => 0.0,
                        };
                        let via: f64 = gs.iter().zip(&cols[col]).map(|(a, b)| a * b).sum();
                        tab[row * n + col] = direct - via;
                    }
                }
            }
        }
        let cs: Vec<f64> = s.iter().map(|&j| self.c[j]).collect();
        let mut d = vec![0.0; n];
        for (col, nb) in self.nonbasic.iter().enumerate() {
            let direct = match *nb {
                Var::Structural(j) => self.c[j],
                Var::Slack(_) => 0.0,
            };
            let via: f64 = cs.iter().zip(&cols[col]).map(|(a, b)| a * b).sum();
            d[col] = direct - via;
        }
        self.t = tab;
        self.rhs = rhs;
        self.d = d;
        true
    }
}

fn certify(
    c: &[f64],
    g: &DesignMatrix,
    h: &[f64],
    x: &[f64],
    y: &[f64],
) -> (f64, f64, f64, f64) {
    let gx = g.mul_vec(x);
    let mut primal = 0.0_f64;
    for (a, b) in gx.iter().zip(h) {
        primal = primal.max(a - b);
    }
    for v in x {
        primal = primal.max(-v);
    }
    let gty = g.tmul_vec(y);
    let mut dual = 0.0_f64;
    for (a, b) in c.iter().zip(&gty) {
        dual = dual.max(-(a + b));
    }
    for v in y {
        dual = dual.max(-v);
    }
    let cx: f64 = c.iter().zip(x).map(|(a, b)| a * b).sum();
    let hy: f64 = h.iter().zip(y).map(|(a, b)| a * b).sum();
    (cx, primal, dual, (cx + hy).abs())
}

/// Solve `min c'x s.t. Gx <= h, x >= 0`. Requires `c >= 0` and finite data;
/// the caller validates shapes.
///
/// `feas_tol` bounds the primal residual and `gap_tol` the dual residual and
/// the relative duality gap. `max_iterations` caps the number of pivots.
pub fn solve(
    c: &[f64],
    g: &DesignMatrix,
    h: &[f64],
    feas_tol: f64,
    gap_tol: f64,
    max_iterations: usize,
) -> LpSolution {
    debug_assert!(c.iter().all(|v| *v >= 0.0));
    let mut tab = Tableau::slack_basis(c, g, h);
    let mut iterations = 0usize;
    let mut rebuilds = 0usize;
    // Pivoting runs to a slightly tighter target than the certificate so
    // that the recomputed point clears it.
    let pivot_tol = 0.1 * feas_tol;
    loop {
        while let Some(r) = tab.leaving_row(pivot_tol) {
            if iterations >= max_iterations {
                let (x, y) = tab.extract();
                let (obj, p, dres, gap) = certify(c, g, h, &x, &y);
                return LpSolution {
                    x,
                    y,
                    objective: obj,
                    primal_residual: p,
                    dual_residual: dres,
                    gap,
                    iterations,
                    status: LpStatus::IterationLimit,
                };
            }
            match tab.entering_column(r) {
                Some(q) => {
                    tab.pivot(r, q);
                    iterations += 1;
                }
                None => {
                    let (row, bound) = match tab.basic[r] {
                        Var::Slack(i) => (i, false),
                        Var::Structural(j) => (j, true),
                    };
                    let (x, y) = tab.extract();
                    let (obj, p, dres, gap) = certify(c, g, h, &x, &y);
                    return LpSolution {
                        x,
                        y,
                        objective: obj,
                        primal_residual: p,
                        dual_residual: dres,
                        gap,
                        iterations,
                        status: LpStatus::Infeasible {
                            row,
                            bound,
                            shortfall: -tab.rhs[r],
                        },
                    };
                }
            }
        }
        let (x, y) = tab.extract();
        let (obj, p, dres, gap) = certify(c, g, h, &x, &y);
        let scale = 1.0 + obj.abs();
        if (p <= feas_tol && dres <= gap_tol && gap <= gap_tol * scale) || rebuilds >= 3 {
            let ok = p <= feas_tol && dres <= gap_tol && gap <= gap_tol * scale;
            return LpSolution {
                x,
                y,
                objective: obj,
                primal_residual: p,
                dual_residual: dres,
                gap,
                iterations,
                status: if ok {
                    LpStatus::Optimal
                } else {
                    LpStatus::IterationLimit
                },
            };
        }
        rebuilds += 1;
        if !tab.rebuild() {
            rebuilds = 3;
            continue;
        }
        // Round-off can leave tiny negative reduced costs; shifting them to
        // zero keeps the basis dual feasible.
        for v in tab.d.iter_mut() {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
}
