//! Synthetic sparse least-squares instances.

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_matrix, norm2};
use crate::rng::rng_from_seed;

/// A `k`-sparse parameter vector `θ*`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    theta_star: Array1<f64>,
    support: Vec<usize>,
}

impl GroundTruth {
    /// Builds a ground truth from a dense vector; the support is its nonzero set.
    pub fn from_vector(theta_star: Array1<f64>) -> Self {
        let support = theta_star.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, _)| i).collect();
        Self { theta_star, support }
    }

    pub fn theta_star(&self) -> ArrayView1<'_, f64> {
        self.theta_star.view()
    }

    /// Sorted, distinct indices of the nonzero entries.
    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn sparsity(&self) -> usize {
        self.support.len()
    }

    pub fn dim(&self) -> usize {
        self.theta_star.len()
    }
}

/// Variance convention for the entries of `X`.
///
/// `Standard` draws N(0, 1). `Normalized` draws N(0, 1/n) so that `‖Xu‖ ≈ ‖u‖`
/// on sparse directions; it is equivalent to dividing every learning rate by
/// `n` and is what the `1/(5m)` and `1/3` step sizes assume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignScaling {
    #[default]
    Standard,
    Normalized,
}

/// Uncoded instance `y = Xθ* + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Array1<f64>,
    pub w: Array1<f64>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

pub fn gen_sparse_signal(d: usize, k: usize, seed: u64) -> Result<GroundTruth> {
    if k == 0 || k > d {
        return Err(Error::InvalidSparsity { k, d });
    }
    let mut rng = rng_from_seed(seed);
    let mut support = rand::seq::index::sample(&mut rng, d, k).into_vec();
    support.sort_unstable();
    let mut theta = Array1::zeros(d);
    for &i in &support {
        // Resample the (probability-zero) exact zero so the support stays exact.
        let mut v: f64 = rng.sample(StandardNormal);
        while v == 0.0 {
            v = rng.sample(StandardNormal);
        }
        theta[i] = v;
    }
    Ok(GroundTruth { theta_star: theta, support })
}

/// Gaussian design with `Standard` scaling.
pub fn gen_dataset(truth: &GroundTruth, n: usize, noise_std: f64, seed: u64) -> Result<Dataset> {
    gen_dataset_scaled(truth, n, noise_std, DesignScaling::Standard, seed)
}

pub fn gen_dataset_scaled(
    truth: &GroundTruth,
    n: usize,
    noise_std: f64,
    scaling: DesignScaling,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::param("n", "must be positive"));
    }
    if !(noise_std >= 0.0) || !noise_std.is_finite() {
        return Err(Error::param("noise_std", format!("must be a finite nonnegative number, got {noise_std}")));
    }
    let mut rng = rng_from_seed(seed);
    let mut x = gaussian_matrix(n, truth.dim(), &mut rng);
    if scaling == DesignScaling::Normalized {
        x /= (n as f64).sqrt();
    }
    let w = if noise_std == 0.0 {
        Array1::zeros(n)
    } else {
        Array1::from_shape_simple_fn(n, || noise_std * rng.sample::<f64, _>(StandardNormal))
    };
    let y = x.dot(&truth.theta_star) + &w;
    Ok(Dataset { x, y, w })
}

/// `‖θ − θ*‖₂ / ‖θ*‖₂`.
pub fn relative_error(theta: ArrayView1<f64>, truth: &GroundTruth) -> Result<f64> {
    if theta.len() != truth.dim() {
        return Err(Error::Shape(format!("theta has length {}, truth has {}", theta.len(), truth.dim())));
    }
    let denom = norm2(truth.theta_star.view());
    if denom == 0.0 {
        return Err(Error::DivisionByZero("‖θ*‖₂ = 0"));
    }
    let diff = &theta - &truth.theta_star;
    Ok(norm2(diff.view()) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn paper_scale_signal_has_twenty_nonzeros() {
        let t = gen_sparse_signal(4000, 20, 11).unwrap();
        assert_eq!(t.sparsity(), 20);
        assert_eq!(t.theta_star().iter().filter(|v| **v != 0.0).count(), 20);
        assert!(t.support().windows(2).all(|w| w[0] < w[1]));
        assert!(t.support().iter().all(|&i| i < 4000));
    }

    #[test]
    fn full_support_when_k_equals_d() {
        let t = gen_sparse_signal(5, 5, 0).unwrap();
        assert_eq!(t.support(), &[0, 1, 2, 3, 4]);
    }

    #[test]
    fn signal_is_deterministic() {
        assert_eq!(gen_sparse_signal(10, 3, 7).unwrap(), gen_sparse_signal(10, 3, 7).unwrap());
        assert_ne!(gen_sparse_signal(10, 3, 7).unwrap(), gen_sparse_signal(10, 3, 8).unwrap());
    }

    #[test]
    fn invalid_sparsity() {
        assert_eq!(gen_sparse_signal(4, 5, 0), Err(Error::InvalidSparsity { k: 5, d: 4 }));
        assert_eq!(gen_sparse_signal(4, 0, 0), Err(Error::InvalidSparsity { k: 0, d: 4 }));
    }

    #[test]
    fn noiseless_dataset_is_exactly_linear() {
        let t = gen_sparse_signal(40, 4, 1).unwrap();
        let ds = gen_dataset(&t, 30, 0.0, 2).unwrap();
        assert_eq!(ds.y, ds.x.dot(&t.theta_star()));
        assert!(ds.w.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn single_row_dataset() {
        let t = gen_sparse_signal(6, 2, 3).unwrap();
        let ds = gen_dataset(&t, 1, 0.0, 4).unwrap();
        assert_eq!(ds.n(), 1);
        assert_eq!(ds.y[0], ds.x.row(0).dot(&t.theta_star()));
    }

    #[test]
    fn noisy_dataset_stores_its_noise() {
        let t = gen_sparse_signal(20, 3, 1).unwrap();
        let ds = gen_dataset(&t, 50, 0.5, 9).unwrap();
        let resid = &ds.y - &ds.x.dot(&t.theta_star());
        for (r, w) in resid.iter().zip(ds.w.iter()) {
            assert!((r - w).abs() < 1e-12);
        }
        assert!(ds.w.iter().any(|v| *v != 0.0));
    }

    #[test]
    fn negative_noise_is_rejected() {
        let t = gen_sparse_signal(4, 1, 0).unwrap();
        assert!(matches!(gen_dataset(&t, 3, -1.0, 0), Err(Error::InvalidParameter { name: "noise_std", .. })));
    }

    #[test]
    fn design_entries_have_zero_mean() {
        let t = gen_sparse_signal(10, 2, 0).unwrap();
        let ds = gen_dataset(&t, 10_000, 0.0, 5).unwrap();
        let mean = ds.x.iter().sum::<f64>() / ds.x.len() as f64;
        assert!(mean.abs() < 0.03, "mean {mean}");
    }

    #[test]
    fn normalized_design_has_unit_column_energy() {
        let t = gen_sparse_signal(10, 2, 0).unwrap();
        let ds = gen_dataset_scaled(&t, 2000, 0.0, DesignScaling::Normalized, 5).unwrap();
        for col in ds.x.columns() {
            let e = col.dot(&col);
            assert!((e - 1.0).abs() < 0.15, "column energy {e}");
        }
    }

    #[test]
    fn relative_error_examples() {
        let t = GroundTruth::from_vector(array![3.0, 4.0]);
        assert_eq!(relative_error(array![0.0, 0.0].view(), &t).unwrap(), 1.0);
        assert_eq!(relative_error(array![3.0, 4.0].view(), &t).unwrap(), 0.0);
        assert_eq!(relative_error(array![6.0, 8.0].view(), &t).unwrap(), 1.0);
        let zero = GroundTruth::from_vector(array![0.0, 0.0]);
        assert!(matches!(relative_error(array![1.0, 0.0].view(), &zero), Err(Error::DivisionByZero(_))));
        assert!(matches!(relative_error(array![1.0].view(), &t), Err(Error::Shape(_))));
    }
}
