//! Simulation designs with a known target coefficient.
//!
//! Models 1-3 are linear with varying sparsity of the auxiliary slope
//! `beta` (Z on W) and the outcome slope `gamma` (Y on (Z, W)). Models 4-6
//! have nonlinear outcome means and Model 7 shifts the covariate
//! distribution of the unlabeled rows. Every model accepts smaller
//! `(n, m, d)` than the published designs; the coefficient patterns are then
//! truncated or rescaled and the instance is flagged as not paper scale.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::SemiSupervisedDataset;
use crate::error::DataError;
use crate::linalg::{Cholesky, DesignMatrix};
use crate::math::{round, sqrt};
use crate::rng::{streams, CounterRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::M1,
        ModelId::M2,
        ModelId::M3,
        ModelId::M4,
        ModelId::M5,
        ModelId::M6,
        ModelId::M7,
    ];

    /// `(n, m, d)` of the published design. Model 1 also appears with other
    /// `m`; this is its `m = 1000` panel.
    pub fn paper_dims(self) -> (usize, usize, usize) {
        match self {
            ModelId::M1 | ModelId::M2 | ModelId::M5 | ModelId::M6 => (300, 1000, 499),
            ModelId::M3 => (150, 1500, 499),
            ModelId::M4 => (150, 1500, 399),
            ModelId::M7 => (350, 1000, 399),
        }
    }

    /// Number of leading controls that enter Z, before truncation to `d`.
    fn declared_sparsity(self, d: usize) -> usize {
        match self {
            ModelId::M1 | ModelId::M2 | ModelId::M5 | ModelId::M6 => 25,
            ModelId::M3 => d,
            ModelId::M4 => 1,
            ModelId::M7 => 9,
        }
    }

    /// Smallest `d` for which the outcome equation is defined.
    fn min_controls(self) -> usize {
        match self {
            ModelId::M1 => 9,
            ModelId::M5 => 10,
            ModelId::M4 => 5,
            ModelId::M7 => 4,
            ModelId::M2 | ModelId::M3 | ModelId::M6 => 2,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = ModelId::ALL.iter().position(|m| m == self).unwrap_or(0) + 1;
        write!(f, "M{k}")
    }
}

impl FromStr for ModelId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let digits = s.trim_start_matches(['M', 'm']);
        digits
            .parse::<usize>()
            .ok()
            .and_then(|k| k.checked_sub(1))
            .and_then(|k| ModelId::ALL.get(k).copied())
            .ok_or_else(|| format!("unknown model '{s}' (valid: M1 to M7)"))
    }
}

/// The coefficient on Z in the best linear predictor of Y given (Z, W) on
/// the labeled population.
pub fn true_theta(model: ModelId) -> f64 {
    match model {
        ModelId::M3 => 0.8,
        ModelId::M4 => 2.0,
        _ => 0.4,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub model_id: ModelId,
    pub n: usize,
    pub m: usize,
    pub d: usize,
    pub seed: u64,
    /// Number of controls entering Z. Defaults to the published value,
    /// truncated to `d`. Not accepted for Model 4, whose design is fixed.
    #[serde(default)]
    pub sparsity: Option<usize>,
}

impl ScenarioSpec {
    pub fn new(model_id: ModelId, n: usize, m: usize, d: usize, seed: u64) -> ScenarioSpec {
        ScenarioSpec {
            model_id,
            n,
            m,
            d,
            seed,
            sparsity: None,
        }
    }

    /// The published design of `model` with the given seed.
    pub fn paper(model: ModelId, seed: u64) -> ScenarioSpec {
        let (n, m, d) = model.paper_dims();
        ScenarioSpec::new(model, n, m, d, seed)
    }

    pub fn with_sparsity(mut self, s: usize) -> ScenarioSpec {
        self.sparsity = Some(s);
        self
    }

    /// Controls entering Z after defaults and truncation.
    pub fn effective_sparsity(&self) -> usize {
        self.sparsity
            .unwrap_or_else(|| self.model_id.declared_sparsity(self.d))
            .min(self.d)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        let model = self.model_id;
        if self.n < 2 {
            return Err(DataError::Invalid(format!("{model}: need n >= 2, got {}", self.n)));
        }
        if self.d < model.min_controls() {
            return Err(DataError::Invalid(format!(
                "{model}: need d >= {}, got {}",
                model.min_controls(),
                self.d
            )));
        }
        match (model, self.sparsity) {
            (ModelId::M4, Some(_)) => Err(DataError::Invalid("M4 has a fixed design; sparsity cannot be set".into())),
            (_, Some(s)) if s == 0 || s > self.d => Err(DataError::Invalid(format!(
                "{model}: sparsity must lie in 1..={}, got {s}",
                self.d
            ))),
            _ => Ok(()),
        }
    }

    /// Whether `d` and the sparsity are those of the published design.
    pub fn is_paper_scale(&self) -> bool {
        let (_, _, d) = self.model_id.paper_dims();
        self.d == d && self.effective_sparsity() == self.model_id.declared_sparsity(d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub dataset: SemiSupervisedDataset,
    pub theta_true: f64,
    /// Nonzeros of the auxiliary slope.
    pub beta_true_support: usize,
    /// Nonzeros of the outcome slope, Z included.
    pub gamma_true_support: usize,
    pub paper_scale: bool,
}

/// Equicorrelated normal vector: `sqrt(1 - mu) G + sqrt(mu) g 1`.
fn equicorrelated(rng: &mut CounterRng, d: usize, mu: f64) -> Vec<f64> {
    let (a, b) = (sqrt(1.0 - mu), sqrt(mu));
    let g = rng.standard_normal();
    (0..d).map(|_| a * rng.standard_normal() + b * g).collect()
}

/// `(Z, W)` with `Cov = 0.3^|j - k|`, drawn as a stationary AR(1) chain.
fn ar_chain(rng: &mut CounterRng, len: usize) -> Vec<f64> {
    let innov = sqrt(1.0 - 0.09);
    let mut out = Vec::with_capacity(len);
    let mut prev = rng.standard_normal();
    out.push(prev);
    for _ in 1..len {
        prev = 0.3 * prev + innov * rng.standard_normal();
        out.push(prev);
    }
    out
}

/// Banded covariance of the shifted covariates in Model 7.
fn shifted_covariance(d: usize) -> DesignMatrix {
    DesignMatrix::from_fn(d, d, |i, l| {
        let gap = i.abs_diff(l);
        if gap == 0 {
            1.0
        } else if gap <= 5 {
            0.1
        } else {
            0.0
        }
    })
}

struct Row {
    z: f64,
    w: Vec<f64>,
    y: f64,
}

struct Design {
    model: ModelId,
    d: usize,
    s: usize,
    mu: f64,
    /// Model 6: last control of the linear block.
    linear_end: usize,
    shifted: Option<Cholesky>,
}

impl Design {
    fn new(spec: &ScenarioSpec) -> Design {
        let d = spec.d;
        let shifted = if spec.model_id == ModelId::M7 && spec.m > 0 {
            Cholesky::factor(&shifted_covariance(d))
        } else {
            None
        };
        Design {
            model: spec.model_id,
            d,
            s: spec.effective_sparsity(),
            mu: 1.0 / (d as f64 + 1.0),
            linear_end: (round(399.0 * d as f64 / 499.0) as usize).clamp(1, d - 1),
            shifted,
        }
    }

    fn row(&self, rng: &mut CounterRng, labeled: bool) -> Row {
        let d = self.d;
        let s = self.s;
        match self.model {
            ModelId::M4 => {
                let mut x = ar_chain(rng, d + 1);
                x[1] = x[1].abs();
                let z = x[0];
                let w = x.split_off(1);
                let y = if labeled {
                    let a = w[0] + w[1];
                    0.6 * a * a + 0.4 * w[3] * w[3] * w[3] - w[4] + 2.0 * z + rng.standard_normal()
                } else {
                    0.0
                };
                Row { z, w, y }
            }
            ModelId::M7 => {
                let (w, v_sd) = if labeled {
                    (equicorrelated(rng, d, self.mu), 0.8)
                } else {
                    let g: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
                    let chol = self.shifted.as_ref().expect("factor of a diagonally dominant band");
                    (chol.lower_mul(&g).into_iter().map(|x| x + 1.0).collect(), 1.2)
                };
                let z = -0.4 * w[..s].iter().sum::<f64>() + v_sd * rng.standard_normal();
                let y = if labeled {
                    0.4 * z + 0.4 * w[..4].iter().sum::<f64>() + 0.4 * rng.standard_normal()
                } else {
                    0.0
                };
                Row { z, w, y }
            }
            _ => {
                let w = equicorrelated(rng, d, self.mu);
                let z = -w[..s].iter().sum::<f64>() / sqrt(s as f64) + rng.standard_normal();
                let y = if labeled { self.outcome(&w, z, rng) } else { 0.0 };
                Row { z, w, y }
            }
        }
    }

    fn outcome(&self, w: &[f64], z: f64, rng: &mut CounterRng) -> f64 {
        let d = self.d;
        let dense = || w.iter().sum::<f64>() / sqrt(d as f64 + 1.0);
        match self.model {
            ModelId::M1 => 0.4 * z + w[..9].iter().sum::<f64>() / sqrt(10.0) + 0.4 * rng.standard_normal(),
            ModelId::M2 => 0.4 * z + dense() + 0.4 * rng.standard_normal(),
            ModelId::M3 => 0.8 * z + dense() + 0.4 * rng.standard_normal(),
            ModelId::M5 => {
                // Controls are 1-based in the model display: W_4 W_5 + ... + W_9 W_10.
                let inter: f64 = (3..9).map(|j| w[j] * w[j + 1]).sum();
                0.4 * z + 0.4 * w[..4].iter().sum::<f64>() + 0.4 * inter + 0.2 * rng.standard_normal()
            }
            ModelId::M6 => {
                let e = self.linear_end;
                let inter: f64 = (e - 1..d - 1).map(|j| w[j] * w[j + 1]).sum();
                0.4 * z + 0.06 * w[..e].iter().sum::<f64>() + 0.03 * inter + 0.2 * rng.standard_normal()
            }
            ModelId::M4 | ModelId::M7 => unreachable!("handled in row"),
        }
    }

    fn supports(&self) -> (usize, usize) {
        let d = self.d;
        match self.model {
            ModelId::M1 | ModelId::M5 => (self.s, 10),
            ModelId::M4 | ModelId::M7 => (self.s, 5),
            ModelId::M2 | ModelId::M3 | ModelId::M6 => (self.s, d + 1),
        }
    }
}

/// Draw one instance. Outcomes exist only for the labeled rows; all rows
/// come from one data stream of `spec.seed`, labeled rows first.
pub fn generate(spec: &ScenarioSpec) -> Result<GeneratedInstance, DataError> {
    spec.validate()?;
    let design = Design::new(spec);
    let mut rng = CounterRng::new(spec.seed, streams::DATA);
    let d = spec.d;
    let mut draw = |count: usize, labeled: bool| {
        let mut z = Vec::with_capacity(count);
        let mut y = Vec::with_capacity(if labeled { count } else { 0 });
        let mut w = Vec::with_capacity(count * d);
        for _ in 0..count {
            let row = design.row(&mut rng, labeled);
            z.push(row.z);
            w.extend_from_slice(&row.w);
            if labeled {
                y.push(row.y);
            }
        }
        (z, DesignMatrix::new(count, d, w), y)
    };
    let (z_l, w_l, y) = draw(spec.n, true);
    let (z_u, w_u, _) = draw(spec.m, false);
    let dataset = SemiSupervisedDataset::new(z_l, w_l?, y, z_u, w_u?)?;
    let (beta_true_support, gamma_true_support) = design.supports();
    Ok(GeneratedInstance {
        dataset,
        theta_true: true_theta(spec.model_id),
        beta_true_support,
        gamma_true_support,
        paper_scale: spec.is_paper_scale(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;

    #[test]
    fn model_ids_parse() {
        for m in ModelId::ALL {
            assert_eq!(m.to_string().parse::<ModelId>().unwrap(), m);
        }
        assert_eq!("3".parse::<ModelId>().unwrap(), ModelId::M3);
        assert!("M8".parse::<ModelId>().is_err());
        assert!("M0".parse::<ModelId>().is_err());
    }

    #[test]
    fn theta_values() {
        assert_eq!(true_theta(ModelId::M1), 0.4);
        assert_eq!(true_theta(ModelId::M3), 0.8);
        assert_eq!(true_theta(ModelId::M4), 2.0);
    }

    #[test]
    fn deterministic() {
        for model in ModelId::ALL {
            let spec = ScenarioSpec::new(model, 20, 15, 30, 5);
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap(), "{model}");
        }
    }

    #[test]
    fn shapes_and_flags() {
        let g = generate(&ScenarioSpec::new(ModelId::M1, 10, 0, 40, 1)).unwrap();
        assert_eq!(g.dataset.n(), 10);
        assert_eq!(g.dataset.m(), 0);
        assert_eq!(g.beta_true_support, 25);
        assert_eq!(g.gamma_true_support, 10);
        assert!(!g.paper_scale);
        assert!(ScenarioSpec::paper(ModelId::M3, 0).is_paper_scale());
        assert_eq!(ScenarioSpec::new(ModelId::M1, 10, 0, 12, 0).effective_sparsity(), 12);
    }

    #[test]
    fn invalid_specs() {
        assert!(generate(&ScenarioSpec::new(ModelId::M1, 10, 0, 5, 0)).is_err());
        assert!(generate(&ScenarioSpec::new(ModelId::M1, 1, 0, 30, 0)).is_err());
        assert!(generate(&ScenarioSpec::new(ModelId::M4, 10, 0, 30, 0).with_sparsity(3)).is_err());
        assert!(generate(&ScenarioSpec::new(ModelId::M2, 10, 0, 30, 0).with_sparsity(31)).is_err());
    }

    #[test]
    fn model_four_first_control_is_nonnegative() {
        let g = generate(&ScenarioSpec::new(ModelId::M4, 200, 50, 10, 2)).unwrap();
        assert!(g.dataset.w_pooled().column(0).iter().all(|v| *v >= 0.0));
    }
}
