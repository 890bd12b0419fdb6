//! Labeled and unlabeled rows, sample splits and centering.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::linalg::DesignMatrix;
use crate::rng::{streams, CounterRng};

/// Labeled rows `(Z, W, Y)` and unlabeled rows `(Z, W)`.
///
/// Fields are private so that every instance satisfies the invariants
/// checked by [`SemiSupervisedDataset::new`]: at least two labeled rows, a
/// shared control dimension and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiSupervisedDataset {
    z_labeled: Vec<f64>,
    w_labeled: DesignMatrix,
    y_labeled: Vec<f64>,
    z_unlabeled: Vec<f64>,
    w_unlabeled: DesignMatrix,
}

fn check_vec(name: &str, v: &[f64]) -> Result<(), DataError> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(row) => Err(DataError::Invalid(format!("{name}: non-finite value at row {row}"))),
        None => Ok(()),
    }
}

impl SemiSupervisedDataset {
    pub fn new(
        z_labeled: Vec<f64>,
        w_labeled: DesignMatrix,
        y_labeled: Vec<f64>,
        z_unlabeled: Vec<f64>,
        w_unlabeled: DesignMatrix,
    ) -> Result<Self, DataError> {
        let n = z_labeled.len();
        if n < 2 {
            return Err(DataError::Shape(format!("need at least 2 labeled rows, got {n}")));
        }
        if w_labeled.rows() != n || y_labeled.len() != n {
            return Err(DataError::Shape(format!(
                "labeled block: Z has {n} rows, W has {}, Y has {}",
                w_labeled.rows(),
                y_labeled.len()
            )));
        }
        if w_unlabeled.rows() != z_unlabeled.len() {
            return Err(DataError::Shape(format!(
                "unlabeled block: Z has {} rows, W has {}",
                z_unlabeled.len(),
                w_unlabeled.rows()
            )));
        }
        if w_unlabeled.cols() != w_labeled.cols() {
            return Err(DataError::Shape(format!(
                "labeled W has {} columns, unlabeled W has {}",
                w_labeled.cols(),
                w_unlabeled.cols()
            )));
        }
        check_vec("labeled Z", &z_labeled)?;
        check_vec("labeled Y", &y_labeled)?;
        check_vec("unlabeled Z", &z_unlabeled)?;
        Ok(SemiSupervisedDataset {
            z_labeled,
            w_labeled,
            y_labeled,
            z_unlabeled,
            w_unlabeled,
        })
    }

    /// Number of labeled rows.
    pub fn n(&self) -> usize {
        self.z_labeled.len()
    }

    /// Number of unlabeled rows.
    pub fn m(&self) -> usize {
        self.z_unlabeled.len()
    }

    /// Number of control covariates.
    pub fn d(&self) -> usize {
        self.w_labeled.cols()
    }

    pub fn z_labeled(&self) -> &[f64] {
        &self.z_labeled
    }

    pub fn w_labeled(&self) -> &DesignMatrix {
        &self.w_labeled
    }

    pub fn y_labeled(&self) -> &[f64] {
        &self.y_labeled
    }

    pub fn z_unlabeled(&self) -> &[f64] {
        &self.z_unlabeled
    }

    pub fn w_unlabeled(&self) -> &DesignMatrix {
        &self.w_unlabeled
    }

    /// Controls of all rows, labeled rows first.
    pub fn w_pooled(&self) -> DesignMatrix {
        self.w_labeled
            .vstack(&self.w_unlabeled)
            .expect("column counts are checked at construction")
    }

    /// Primary predictor over all rows, labeled rows first.
    pub fn z_pooled(&self) -> Vec<f64> {
        let mut z = self.z_labeled.clone();
        z.extend_from_slice(&self.z_unlabeled);
        z
    }

    /// Labeled design `X = (Z, W)`.
    pub fn x_labeled(&self) -> DesignMatrix {
        self.w_labeled
            .prepend_column(&self.z_labeled)
            .expect("row counts are checked at construction")
    }

    /// The same labeled rows with the unlabeled block dropped.
    pub fn labeled_only(&self) -> SemiSupervisedDataset {
        SemiSupervisedDataset {
            z_labeled: self.z_labeled.clone(),
            w_labeled: self.w_labeled.clone(),
            y_labeled: self.y_labeled.clone(),
            z_unlabeled: Vec::new(),
            w_unlabeled: DesignMatrix::zeros(0, self.d()),
        }
    }

    /// Replace the outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<SemiSupervisedDataset, DataError> {
        Self::new(
            self.z_labeled.clone(),
            self.w_labeled.clone(),
            y,
            self.z_unlabeled.clone(),
            self.w_unlabeled.clone(),
        )
    }

    /// Reorder the control columns: column `k` of the result is column
    /// `order[k]` of `self`.
    pub fn with_columns(&self, order: &[usize]) -> SemiSupervisedDataset {
        SemiSupervisedDataset {
            z_labeled: self.z_labeled.clone(),
            w_labeled: self.w_labeled.select_cols(order),
            y_labeled: self.y_labeled.clone(),
            z_unlabeled: self.z_unlabeled.clone(),
            w_unlabeled: self.w_unlabeled.select_cols(order),
        }
    }

    /// Add constants to every variable: `z_shift` to Z, `w_shift[j]` to
    /// column `j` of W and `y_shift` to Y.
    pub fn shifted(&self, z_shift: f64, w_shift: &[f64], y_shift: f64) -> SemiSupervisedDataset {
        let shift_w = |w: &DesignMatrix| {
            DesignMatrix::from_fn(w.rows(), w.cols(), |i, j| w.get(i, j) + w_shift[j])
        };
        SemiSupervisedDataset {
            z_labeled: self.z_labeled.iter().map(|z| z + z_shift).collect(),
            w_labeled: shift_w(&self.w_labeled),
            y_labeled: self.y_labeled.iter().map(|y| y + y_shift).collect(),
            z_unlabeled: self.z_unlabeled.iter().map(|z| z + z_shift).collect(),
            w_unlabeled: shift_w(&self.w_unlabeled),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitScheme {
    TwoWay,
    ThreeWay,
    KFold(usize),
}

impl SplitScheme {
    fn parts(self) -> usize {
        match self {
            SplitScheme::TwoWay => 2,
            SplitScheme::ThreeWay => 3,
            SplitScheme::KFold(k) => k,
        }
    }
}

/// Disjoint index sets over the labeled rows (and, for K-fold
/// cross-fitting, over the unlabeled rows). Indices within a part are
/// sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: SplitScheme,
    pub seed: u64,
    pub labeled: Vec<Vec<usize>>,
    pub unlabeled: Vec<Vec<usize>>,
}

/// Random permutation of `0..len` cut into `parts` pieces whose sizes
/// differ by at most one; the earlier pieces take the remainder.
pub(crate) fn partition(len: usize, parts: usize, rng: &mut CounterRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..len).collect();
    rng.shuffle(&mut idx);
    let base = len / parts;
    let extra = len % parts;
    let mut out = Vec::with_capacity(parts);
    let mut start = 0;
    for k in 0..parts {
        let size = base + usize::from(k < extra);
        let mut part = idx[start..start + size].to_vec();
        part.sort_unstable();
        out.push(part);
        start += size;
    }
    out
}

/// Deterministic split of a dataset with `n` labeled and `m` unlabeled rows.
pub fn make_split_sizes(n: usize, m: usize, scheme: SplitScheme, seed: u64) -> Result<SplitPlan, DataError> {
    let parts = scheme.parts();
    let needed = match scheme {
        SplitScheme::KFold(k) => {
            if k < 2 {
                return Err(DataError::Invalid(format!("K-fold split needs K >= 2, got {k}")));
            }
            2 * k
        }
        _ => parts,
    };
    if n < needed {
        return Err(DataError::Invalid(format!(
            "{n} labeled rows are too few for a {parts}-part split (need {needed})"
        )));
    }
    let mut rng = CounterRng::new(seed, streams::SPLIT);
    let labeled = partition(n, parts, &mut rng);
    let unlabeled = match scheme {
        SplitScheme::KFold(k) => partition(m, k, &mut rng),
        _ => Vec::new(),
    };
    Ok(SplitPlan {
        scheme,
        seed,
        labeled,
        unlabeled,
    })
}

pub fn make_split(dataset: &SemiSupervisedDataset, scheme: SplitScheme, seed: u64) -> Result<SplitPlan, DataError> {
    make_split_sizes(dataset.n(), dataset.m(), scheme, seed)
}

/// Means subtracted by [`center`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringInfo {
    pub z_mean: f64,
    pub w_means: Vec<f64>,
    pub y_mean: f64,
}

fn mean_two_pass(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let count = values.clone().count();
    if count == 0 {
        return 0.0;
    }
    let first = values.clone().sum::<f64>() / count as f64;
    // A second pass over the residuals removes most of the rounding error
    // of the first.
    first + values.map(|v| v - first).sum::<f64>() / count as f64
}

/// Subtract the pooled (labeled and unlabeled) means of Z and of every
/// column of W, and the labeled mean of Y.
pub fn center(dataset: &SemiSupervisedDataset) -> (SemiSupervisedDataset, CenteringInfo) {
    let d = dataset.d();
    let z_mean = mean_two_pass(dataset.z_labeled.iter().chain(&dataset.z_unlabeled).copied());
    let y_mean = mean_two_pass(dataset.y_labeled.iter().copied());
    let w_means: Vec<f64> = (0..d)
        .map(|j| {
            let lab = (0..dataset.n()).map(move |i| dataset.w_labeled.get(i, j));
            let unl = (0..dataset.m()).map(move |i| dataset.w_unlabeled.get(i, j));
            mean_two_pass(lab.chain(unl))
        })
        .collect();
    let neg_w: Vec<f64> = w_means.iter().map(|v| -v).collect();
    let centered = dataset.shifted(-z_mean, &neg_w, -y_mean);
    (
        centered,
        CenteringInfo {
            z_mean,
            w_means,
            y_mean,
        },
    )
}

/// Divide every column of W by its pooled root mean square about the pooled
/// mean. Columns with zero spread are left unchanged. Returns the scales.
///
/// Off by default; not part of the estimators' definition.
pub fn standardize(dataset: &SemiSupervisedDataset) -> (SemiSupervisedDataset, Vec<f64>) {
    let d = dataset.d();
    let total = (dataset.n() + dataset.m()) as f64;
    let mut scales = vec![1.0; d];
    for (j, s) in scales.iter_mut().enumerate() {
        let lab = (0..dataset.n()).map(|i| dataset.w_labeled.get(i, j));
        let unl = (0..dataset.m()).map(|i| dataset.w_unlabeled.get(i, j));
        let values: Vec<f64> = lab.chain(unl).collect();
        let mu = values.iter().sum::<f64>() / total;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / total;
        if var > 0.0 {
            *s = crate::math::sqrt(var);
        }
    }
    let scale = |w: &DesignMatrix| DesignMatrix::from_fn(w.rows(), w.cols(), |i, j| w.get(i, j) / scales[j]);
    let out = SemiSupervisedDataset {
        z_labeled: dataset.z_labeled.clone(),
        w_labeled: scale(&dataset.w_labeled),
        y_labeled: dataset.y_labeled.clone(),
        z_unlabeled: dataset.z_unlabeled.clone(),
        w_unlabeled: scale(&dataset.w_unlabeled),
    };
    (out, scales)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy(n: usize, m: usize, d: usize, seed: u64) -> SemiSupervisedDataset {
        let mut rng = CounterRng::new(seed, 9);
        let wl = DesignMatrix::from_fn(n, d, |_, _| 3.0 + rng.standard_normal());
        let wu = DesignMatrix::from_fn(m, d, |_, _| -1.0 + rng.standard_normal());
        let zl = (0..n).map(|_| 2.0 + rng.standard_normal()).collect();
        let zu = (0..m).map(|_| rng.standard_normal()).collect();
        let y = (0..n).map(|_| 5.0 + rng.standard_normal()).collect();
        SemiSupervisedDataset::new(zl, wl, y, zu, wu).unwrap()
    }

    #[test]
    fn rejects_bad_shapes() {
        let w = DesignMatrix::zeros(3, 2);
        assert!(SemiSupervisedDataset::new(vec![1.0], DesignMatrix::zeros(1, 2), vec![1.0], vec![], DesignMatrix::zeros(0, 2)).is_err());
        assert!(SemiSupervisedDataset::new(vec![1.0; 3], w.clone(), vec![1.0; 2], vec![], DesignMatrix::zeros(0, 2)).is_err());
        assert!(SemiSupervisedDataset::new(vec![1.0; 3], w.clone(), vec![1.0; 3], vec![], DesignMatrix::zeros(0, 3)).is_err());
        assert!(SemiSupervisedDataset::new(vec![1.0, f64::NAN, 0.0], w, vec![1.0; 3], vec![], DesignMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn split_sizes_and_partition() {
        let p = make_split_sizes(4, 0, SplitScheme::TwoWay, 11).unwrap();
        assert_eq!(p.labeled[0].len(), 2);
        assert_eq!(p.labeled[1].len(), 2);
        let mut all: Vec<usize> = p.labeled.concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);

        let p = make_split_sizes(5, 0, SplitScheme::ThreeWay, 3).unwrap();
        let sizes: Vec<usize> = p.labeled.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);

        let p = make_split_sizes(11, 7, SplitScheme::KFold(3), 5).unwrap();
        let sizes: Vec<usize> = p.unlabeled.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 2, 2]);
        let sizes: Vec<usize> = p.labeled.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![4, 4, 3]);
    }

    #[test]
    fn split_is_deterministic_and_seed_dependent() {
        let a = make_split_sizes(40, 10, SplitScheme::KFold(4), 99).unwrap();
        let b = make_split_sizes(40, 10, SplitScheme::KFold(4), 99).unwrap();
        let c = make_split_sizes(40, 10, SplitScheme::KFold(4), 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn split_needs_enough_rows() {
        assert!(make_split_sizes(1, 0, SplitScheme::TwoWay, 0).is_err());
        assert!(make_split_sizes(2, 0, SplitScheme::ThreeWay, 0).is_err());
        assert!(make_split_sizes(9, 0, SplitScheme::KFold(5), 0).is_err());
        assert!(make_split_sizes(10, 0, SplitScheme::KFold(1), 0).is_err());
    }

    #[test]
    fn centering_zeroes_means_and_is_idempotent() {
        let ds = toy(30, 50, 4, 1);
        let (c, info) = center(&ds);
        assert!((info.y_mean - 5.0).abs() < 0.5);
        let (_, again) = center(&c);
        assert!(again.z_mean.abs() < 1e-12);
        assert!(again.y_mean.abs() < 1e-12);
        assert!(again.w_means.iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn constant_column_becomes_zero() {
        let n = 6;
        let w = DesignMatrix::from_fn(n, 2, |i, j| if j == 0 { 7.5 } else { i as f64 });
        let ds = SemiSupervisedDataset::new(vec![1.0, 2.0, 0.0, 1.0, 3.0, 2.0], w, vec![0.5; n], vec![], DesignMatrix::zeros(0, 2)).unwrap();
        let (c, info) = center(&ds);
        assert_eq!(info.w_means[0], 7.5);
        assert!((0..n).all(|i| c.w_labeled().get(i, 0) == 0.0));
    }

    #[test]
    fn centered_data_is_a_fixed_point() {
        let (c, _) = center(&toy(12, 5, 3, 2));
        let (c2, info) = center(&c);
        assert!(info.z_mean.abs() < 1e-12);
        for (a, b) in c.z_labeled().iter().zip(c2.z_labeled()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn standardize_gives_unit_spread() {
        let (s, scales) = standardize(&toy(20, 20, 3, 4));
        assert_eq!(scales.len(), 3);
        let (c, _) = center(&s);
        let w = c.w_pooled();
        for j in 0..3 {
            let ms: f64 = (0..w.rows()).map(|i| w.get(i, j).powi(2)).sum::<f64>() / w.rows() as f64;
            assert!((ms - 1.0).abs() < 1e-12);
        }
    }
}
