//! Small dense helpers shared across modules.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng as _;
use rand_distr::StandardNormal;

use crate::rng::Rng;

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn norm1(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn gaussian_vector(len: usize, rng: &mut Rng) -> Array1<f64> {
    Array1::from_shape_simple_fn(len, || rng.sample(StandardNormal))
}

/// Row-major `rows x cols` matrix of i.i.d. N(0, 1) entries, filled row by row.
pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Array2<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Array2::from_shape_vec((rows, cols), data).expect("shape matches length")
}

/// Largest singular value by power iteration on `XᵀX`.
///
/// Stops when successive estimates agree to `rel_tol`; starts from a fixed
/// all-ones-plus-ramp vector so the result is deterministic.
pub fn spectral_norm(x: ArrayView2<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    let d = x.ncols();
    if d == 0 || x.nrows() == 0 {
        return 0.0;
    }
    let mut v = Array1::from_shape_fn(d, |i| 1.0 + (i as f64) / (d as f64));
    let n = norm2(v.view());
    v /= n;
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let xv = x.dot(&v);
        let mut w = x.t().dot(&xv);
        let wn = norm2(w.view());
        if wn == 0.0 {
            return 0.0;
        }
        w /= wn;
        let next = norm2(x.dot(&w).view());
        let done = (next - sigma).abs() <= rel_tol * next;
        sigma = next;
        v = w;
        if done {
            break;
        }
    }
    sigma
}

/// Spectral norm of a symmetric matrix (largest |eigenvalue|) by power iteration.
pub fn symmetric_spectral_norm(m: ArrayView2<f64>, rel_tol: f64, max_iter: usize) -> f64 {
    // ‖M‖ = sqrt(‖MᵀM‖) and MᵀM = M² for symmetric M.
    spectral_norm(m, rel_tol, max_iter)
}
