//! Identities every estimator must satisfy, checked against straight-line
//! reimplementations built from the public solvers.

use semisup_core::dataset::{make_split, SplitScheme};
use semisup_core::estimators::{
    estimate, plug_in_theta, ss_dr, ss_sr, EstimatorConfig, EstimatorId, LambdaPolicy, UPolicy,
};
use semisup_core::linalg::ols;
use semisup_core::rng::CounterRng;
use semisup_core::solver::{lasso_fit, min_quadratic_linf, SolverConfig};
use semisup_core::{DesignMatrix, SemiSupervisedDataset};

use super::Check;

pub fn instance(n: usize, m: usize, d: usize, seed: u64) -> SemiSupervisedDataset {
    let mut rng = CounterRng::new(seed, 77);
    let mut rows = |k: usize| DesignMatrix::from_fn(k, d, |_, _| rng.standard_normal());
    let wl = rows(n);
    let wu = rows(m);
    let mut rng = CounterRng::new(seed, 78);
    let mut z_of = |w: &DesignMatrix| -> Vec<f64> {
        (0..w.rows())
            .map(|i| 0.6 * w.get(i, 0) - 0.4 * w.get(i, 1) + rng.standard_normal())
            .collect()
    };
    let zl = z_of(&wl);
    let zu = z_of(&wu);
    let y = (0..n)
        .map(|i| 0.5 * zl[i] + 0.8 * wl.get(i, 0) - 0.3 * wl.get(i, 2 % d) + 0.5 * rng.standard_normal())
        .collect();
    SemiSupervisedDataset::new(zl, wl, y, zu, wu).unwrap()
}

pub fn fixed(beta: f64, gamma: f64, u: f64) -> EstimatorConfig {
    EstimatorConfig {
        lambda_beta_policy: LambdaPolicy::Fixed(beta),
        lambda_gamma_policy: LambdaPolicy::Fixed(gamma),
        lambda_u_policy: UPolicy::Fixed(u),
        ..EstimatorConfig::default()
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / (1.0 + a.abs().max(b.abs()))
}

pub fn supervised_ids_equal_semi_supervised_code_on_labeled_rows() -> Check {
    let ds = instance(80, 120, 10, 1);
    let lab = ds.labeled_only();
    let cfg = EstimatorConfig::default();
    for (sup, semi) in [
        (EstimatorId::Sr, EstimatorId::SsSr),
        (EstimatorId::Dfa, EstimatorId::SsDfa),
        (EstimatorId::Dr, EstimatorId::SsDr),
    ] {
        let a = estimate(sup, &ds, &cfg).map_err(|e| e.to_string())?;
        let b = estimate(semi, &lab, &cfg).map_err(|e| e.to_string())?;
        ensure!(a.theta_hat == b.theta_hat, "{sup}");
        ensure!(a.std_error == b.std_error, "{sup}");
        ensure!(a.diagnostics.notes.iter().any(|n| n.contains("unlabeled rows ignored")), "{sup}: no note about ignored unlabeled rows");
    }
    Ok(())
}

pub fn sparsity_robust_matches_straight_line_oracle() -> Check {
    // With m = 0 the auxiliary Lasso and the Gram matrix both live on the
    // first split alone.
    let ds = instance(90, 0, 8, 2);
    let (lb, lu) = (0.05, 0.08);
    let cfg = fixed(lb, 0.0, lu);
    let r = ss_sr(&ds, &cfg).map_err(|e| e.to_string())?;

    let plan = make_split(&ds, SplitScheme::TwoWay, cfg.split_seed).map_err(|e| e.to_string())?;
    let (i1, i2) = (&plan.labeled[0], &plan.labeled[1]);
    let w1 = ds.w_labeled().select_rows(i1);
    let z1: Vec<f64> = i1.iter().map(|&i| ds.z_labeled()[i]).collect();
    let y1: Vec<f64> = i1.iter().map(|&i| ds.y_labeled()[i]).collect();
    let beta = lasso_fit(&w1, &z1, lb, &SolverConfig::default()).map_err(|e| e.to_string())?.coefficients;
    let n1 = i1.len() as f64;
    let sigma = DesignMatrix::from_fn(8, 8, |a, b| (0..i1.len()).map(|k| w1.get(k, a) * w1.get(k, b)).sum::<f64>() / n1);
    let xi: Vec<f64> = (0..8)
        .map(|a| i2.iter().map(|&i| ds.w_labeled().get(i, a) * ds.y_labeled()[i]).sum::<f64>() / i2.len() as f64)
        .collect();
    let u = min_quadratic_linf(&sigma, &xi, lu, &SolverConfig::default()).map_err(|e| e.to_string())?.coefficients;
    let v: Vec<f64> = (0..i1.len()).map(|k| z1[k] - (0..8).map(|j| w1.get(k, j) * beta[j]).sum::<f64>()).collect();
    let uw: Vec<f64> = (0..i1.len()).map(|k| (0..8).map(|j| w1.get(k, j) * u[j]).sum()).collect();
    let s1 = v.iter().map(|a| a * a).sum::<f64>() / n1;
    let theta = (v.iter().zip(&y1).map(|(a, b)| a * b).sum::<f64>() / n1
        - v.iter().zip(&uw).map(|(a, b)| a * b).sum::<f64>() / n1)
        / s1;
    let var = (0..i1.len())
        .map(|k| {
            let e = (y1[k] - theta * v[k]) / n1 - uw[k] / n1;
            e * e
        })
        .sum::<f64>()
        / s1;
    ensure!(rel(r.theta_hat, theta) < 1e-9, "{} vs {theta}", r.theta_hat);
    ensure!(rel(r.std_error.ok_or("missing standard error")?, var.sqrt()) < 1e-9, "standard error differs from the oracle");
    Ok(())
}

pub fn outcome_scale_equivariance() -> Check {
    let ds = instance(120, 150, 12, 3);
    let c = 10.0;
    let scaled = ds.with_outcome(ds.y_labeled().iter().map(|v| c * v).collect()).map_err(|e| e.to_string())?;
    let (lb, lg, lu) = (0.04, 0.06, 0.05);
    let base = fixed(lb, lg, lu);
    // Penalties on outcome-scale quantities scale with the outcome.
    let scaled_cfg = fixed(lb, c * lg, c * lu);
    for id in [EstimatorId::SsSr, EstimatorId::SsSrMod, EstimatorId::SsDfa, EstimatorId::SsDr, EstimatorId::PlugIn, EstimatorId::LassoPlugin] {
        let a = estimate(id, &ds, &base).map_err(|e| e.to_string())?;
        let b = estimate(id, &scaled, &scaled_cfg).map_err(|e| e.to_string())?;
        ensure!(rel(c * a.theta_hat, b.theta_hat) < 1e-9, "{id}: {} vs {}", c * a.theta_hat, b.theta_hat);
        if let (Some(sa), Some(sb)) = (a.std_error, b.std_error) {
            ensure!(rel(c * sa, sb) < 1e-9, "{id} se");
        }
    }
    Ok(())
}

pub fn control_permutation_invariance() -> Check {
    let ds = instance(100, 200, 9, 4);
    let order = [4, 0, 8, 2, 7, 1, 6, 3, 5];
    let perm = ds.with_columns(&order);
    let cfg = EstimatorConfig::default();
    for id in [EstimatorId::SsSr, EstimatorId::SsSrMod, EstimatorId::SsDfa, EstimatorId::SsDr, EstimatorId::PlugIn] {
        let a = estimate(id, &ds, &cfg).map_err(|e| e.to_string())?;
        let b = estimate(id, &perm, &cfg).map_err(|e| e.to_string())?;
        ensure!(rel(a.theta_hat, b.theta_hat) < 1e-6, "{id}: {} vs {}", a.theta_hat, b.theta_hat);
        ensure!(rel(a.std_error.unwrap_or(0.0), b.std_error.unwrap_or(0.0)) < 1e-6, "{id} se");
    }
    Ok(())
}

pub fn plug_in_equals_ols_partialling_out() -> Check {
    let ds = instance(200, 300, 2, 5);
    let r = plug_in_theta(&ds, &fixed(0.0, 0.0, 0.0)).map_err(|e| e.to_string())?;
    let beta = ols(&ds.w_pooled(), &ds.z_pooled()).ok_or("singular control design")?;
    let v: Vec<f64> = (0..ds.n())
        .map(|i| ds.z_labeled()[i] - ds.w_labeled().row(i).iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let theta = v.iter().zip(ds.y_labeled()).map(|(a, b)| a * b).sum::<f64>() / v.iter().map(|a| a * a).sum::<f64>();
    ensure!(rel(r.theta_hat, theta) < 1e-9, "{} vs {theta}", r.theta_hat);
    ensure!(r.std_error.is_none(), "plug-in reported a standard error");
    Ok(())
}

pub fn cross_fitting_matches_straight_line_oracle() -> Check {
    let ds = instance(100, 0, 7, 6);
    let (lb, lg) = (0.03, 0.05);
    let cfg = fixed(lb, lg, 0.0);
    let r = ss_dr(&ds, &cfg).map_err(|e| e.to_string())?;

    let k = cfg.dr_folds;
    let plan = make_split(&ds, SplitScheme::KFold(k), cfg.split_seed).map_err(|e| e.to_string())?;
    let x = ds.x_labeled();
    let solver = SolverConfig::default();
    let (mut thetas, mut num, mut den) = (Vec::new(), 0.0, 0.0);
    for fold in &plan.labeled {
        let train: Vec<usize> = (0..ds.n()).filter(|i| !fold.contains(i)).collect();
        let pick = |v: &[f64], idx: &[usize]| idx.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let gamma = lasso_fit(&x.select_rows(&train), &pick(ds.y_labeled(), &train), lg, &solver).map_err(|e| e.to_string())?.coefficients;
        let beta = lasso_fit(&ds.w_labeled().select_rows(&train), &pick(ds.z_labeled(), &train), lb, &solver)
            .map_err(|e| e.to_string())?
            .coefficients;
        let (mut a, mut b) = (0.0, 0.0);
        for &i in fold {
            let v = ds.z_labeled()[i] - ds.w_labeled().row(i).iter().zip(&beta).map(|(p, q)| p * q).sum::<f64>();
            let e = ds.y_labeled()[i] - x.row(i).iter().zip(&gamma).map(|(p, q)| p * q).sum::<f64>();
            a += v * e;
            b += v * ds.z_labeled()[i];
            num += v * v * e * e;
            den += v * v;
        }
        thetas.push(gamma[0] + a / b);
    }
    let n = ds.n() as f64;
    let theta = thetas.iter().sum::<f64>() / k as f64;
    let se = ((num / n) / (den / n).powi(2) / n).sqrt();
    ensure!(rel(r.theta_hat, theta) < 1e-7, "{} vs {theta}", r.theta_hat);
    ensure!(rel(r.std_error.ok_or("missing standard error")?, se) < 1e-7, "standard error differs from the oracle");
    Ok(())
}
