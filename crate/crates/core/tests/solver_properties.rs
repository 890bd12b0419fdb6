//! Solver property tests. The oracles live in `oracles::solver`; proptest
//! supplies the random instances here.

mod oracles;

use oracles::solver::{caps_nest_case, dantzig_case, gaussian, lasso_case, unpenalized_case};
use proptest::prelude::*;
use semisup_core::linalg::ols;
use semisup_core::rng::CounterRng;
use semisup_core::solver::{lasso_fit, min_quadratic_linf_capped, SolverConfig};
use semisup_core::DesignMatrix;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn lasso_meets_first_order_conditions(seed in any::<u64>(), n in 5usize..60, p in 1usize..40, frac in 0.01f64..1.0) {
        lasso_case(seed, n, p, frac).map_err(TestCaseError::fail)?;
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn dantzig_matches_vertex_enumeration(seed in any::<u64>(), d in 1usize..=3, n in 4usize..12, extra in 0usize..20, frac in 0.02f64..0.8) {
        dantzig_case(seed, d, n, extra, frac).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn unpenalized_program_is_a_linear_solve(seed in any::<u64>(), d in 1usize..12) {
        unpenalized_case(seed, d).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn caps_nest(seed in any::<u64>(), d in 2usize..8, frac in 0.05f64..0.6, shrink in 0.3f64..0.95) {
        caps_nest_case(seed, d, frac, shrink).map_err(TestCaseError::fail)?;
    }
}

#[test]
fn seeded_drivers_pass() {
    oracles::solver::lasso_cases(20, 1).unwrap();
    oracles::solver::dantzig_cases(10, 1).unwrap();
    oracles::solver::unpenalized_cases(10, 1).unwrap();
    oracles::solver::caps_nest_cases(10, 1).unwrap();
}

#[test]
fn orthonormal_design_soft_thresholds() {
    // Columns with X'X / n = I: the Lasso is coordinatewise soft
    // thresholding of X'y / n at lambda / 2.
    let (n, p) = (40, 6);
    let mut rng = CounterRng::new(5, 4);
    let raw = gaussian(&mut rng, n, p);
    let mut cols: Vec<Vec<f64>> = Vec::new();
    for j in 0..p {
        let mut c = raw.column(j);
        for q in &cols {
            let proj: f64 = c.iter().zip(q).map(|(a, b)| a * b).sum();
            c.iter_mut().zip(q).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        cols.push(c.iter().map(|v| v / norm).collect());
    }
    let x = DesignMatrix::from_fn(n, p, |i, j| cols[j][i] * (n as f64).sqrt());
    let y: Vec<f64> = (0..n).map(|i| 0.7 * x.get(i, 1) - 0.2 * x.get(i, 4) + rng.standard_normal()).collect();
    let xty: Vec<f64> = x.tmul_vec(&y).iter().map(|v| v / n as f64).collect();
    for lambda in [0.0, 0.05, 0.3, 1.0, 5.0] {
        let res = lasso_fit(&x, &y, lambda, &SolverConfig::default()).unwrap();
        for (b, c) in res.coefficients.iter().zip(&xty) {
            let expect = c.signum() * (c.abs() - lambda / 2.0).max(0.0);
            assert!((b - expect).abs() < 1e-7, "lambda {lambda}: {b} vs {expect}");
        }
    }
}

#[test]
fn capped_program_matches_grid_search_in_two_dimensions() {
    let s = DesignMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.8]]).unwrap();
    let xi = [0.9, 0.5];
    let rows = DesignMatrix::from_rows(&[vec![1.0, -1.0]]).unwrap();
    let cfg = SolverConfig::default();
    let quad = |u: &[f64]| u[0] * (s.get(0, 0) * u[0] + s.get(0, 1) * u[1]) + u[1] * (s.get(1, 0) * u[0] + s.get(1, 1) * u[1]);
    // Without caps the row reaches about 0.51 at lambda 0.1 and 0.53
    // at lambda 0.2; the caps below bind but leave the program feasible.
    for (lambda, cap) in [(0.1, 0.3), (0.1, 0.45), (0.2, 0.1), (0.2, 0.3), (0.2, 10.0)] {
        let res = min_quadratic_linf_capped(&s, &xi, lambda, &rows, cap, &cfg).unwrap();
        assert!(res.converged);
        // Brute force on a grid fine enough that the best grid point is
        // within about 1e-4 of the optimum.
        let (lo, hi, steps) = (-2.0, 2.0, 1600);
        let h = (hi - lo) / steps as f64;
        let mut best = f64::INFINITY;
        for a in 0..=steps {
            for b in 0..=steps {
                let u = [lo + a as f64 * h, lo + b as f64 * h];
                let su = s.mul_vec(&u);
                let ok_resid = (xi[0] - su[0]).abs() <= lambda + 1e-12 && (xi[1] - su[1]).abs() <= lambda + 1e-12;
                let ok_cap = rows.mul_vec(&u).iter().all(|v| v.abs() <= cap + 1e-12);
                if ok_resid && ok_cap {
                    best = best.min(quad(&u));
                }
            }
        }
        assert!(best.is_finite(), "grid found no feasible point for lambda {lambda}, cap {cap}");
        let got = quad(&res.coefficients);
        assert!(got <= best + 1e-6, "solver {got} worse than grid {best}");
        assert!(best - got <= 5e-3, "solver {got} far below grid {best}: constraints violated?");
        let su = s.mul_vec(&res.coefficients);
        assert!(xi.iter().zip(&su).all(|(a, b)| (a - b).abs() <= lambda + 1e-7));
        assert!(rows.mul_vec(&res.coefficients).iter().all(|v| v.abs() <= cap + 1e-7));
    }
}

#[test]
fn lasso_agrees_with_least_squares_at_zero_penalty() {
    let mut rng = CounterRng::new(8, 5);
    let x = gaussian(&mut rng, 50, 5);
    let y: Vec<f64> = (0..50).map(|_| rng.standard_normal()).collect();
    let res = lasso_fit(&x, &y, 0.0, &SolverConfig::default()).unwrap();
    let direct = ols(&x, &y).unwrap();
    for (a, b) in res.coefficients.iter().zip(&direct) {
        assert!((a - b).abs() < 1e-7);
    }
}
