//! Constraint sets `K = {θ : R(θ) ≤ R}` and their Euclidean projections.

use ndarray::{Array1, ArrayView1};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, norm1, norm2};
use crate::problem::GroundTruth;
use crate::rng::rng_from_seed;

/// Relative slack under which a point already counts as feasible.
///
/// Projected points sit on the boundary up to rounding; treating them as
/// feasible makes re-projection an exact fixed point.
pub const FEASIBILITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    #[serde(rename = "l1")]
    L1Ball,
    #[serde(rename = "l2")]
    L2Ball,
    #[serde(rename = "ksparse")]
    KSparse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSpec {
    pub kind: RegularizerKind,
    /// Ball radius `R`; unused for `KSparse`.
    pub radius: f64,
    /// Sparsity level; only meaningful for `KSparse`.
    pub k: usize,
}

impl RegularizerSpec {
    pub fn l1_ball(radius: f64) -> Self {
        Self { kind: RegularizerKind::L1Ball, radius, k: 0 }
    }

    pub fn l2_ball(radius: f64) -> Self {
        Self { kind: RegularizerKind::L2Ball, radius, k: 0 }
    }

    pub fn k_sparse(k: usize) -> Self {
        Self { kind: RegularizerKind::KSparse, radius: 0.0, k }
    }

    pub fn is_convex(&self) -> bool {
        !matches!(self.kind, RegularizerKind::KSparse)
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        match self.kind {
            RegularizerKind::L1Ball | RegularizerKind::L2Ball => {
                if !(self.radius >= 0.0) || !self.radius.is_finite() {
                    return Err(Error::param("radius", format!("must be finite and nonnegative, got {}", self.radius)));
                }
            }
            RegularizerKind::KSparse => {
                if self.k == 0 || self.k > d {
                    return Err(Error::InvalidSparsity { k: self.k, d });
                }
            }
        }
        Ok(())
    }

    /// `R(θ)`: the ℓ1 or ℓ2 norm, or the number of nonzeros.
    pub fn value(&self, theta: ArrayView1<f64>) -> f64 {
        match self.kind {
            RegularizerKind::L1Ball => norm1(theta),
            RegularizerKind::L2Ball => norm2(theta),
            RegularizerKind::KSparse => theta.iter().filter(|v| **v != 0.0).count() as f64,
        }
    }

    /// The constraint level the set is cut at.
    pub fn level(&self) -> f64 {
        match self.kind {
            RegularizerKind::KSparse => self.k as f64,
            _ => self.radius,
        }
    }

    pub fn is_feasible(&self, theta: ArrayView1<f64>, tol: f64) -> bool {
        self.value(theta) <= self.level() + tol
    }

    /// 1 for convex constraint sets, 2 for the nonconvex sparsity set.
    pub fn kappa(&self) -> f64 {
        if self.is_convex() {
            1.0
        } else {
            2.0
        }
    }

    pub fn project(&self, v: ArrayView1<f64>) -> Array1<f64> {
        let mut out = v.to_owned();
        self.project_in_place(&mut out);
        out
    }

    pub fn project_in_place(&self, v: &mut Array1<f64>) {
        match self.kind {
            RegularizerKind::L1Ball => project_l1_ball(v, self.radius),
            RegularizerKind::L2Ball => {
                let norm = norm2(v.view());
                if norm > self.radius * (1.0 + FEASIBILITY_TOL) {
                    if self.radius == 0.0 {
                        v.fill(0.0);
                    } else {
                        *v *= self.radius / norm;
                    }
                }
            }
            RegularizerKind::KSparse => hard_threshold(v, self.k),
        }
    }
}

/// Projection onto `{u : ‖u‖₁ ≤ radius}` by the sort-based simplex reduction.
fn project_l1_ball(v: &mut Array1<f64>, radius: f64) {
    let l1 = norm1(v.view());
    if l1 <= radius * (1.0 + FEASIBILITY_TOL) {
        return;
    }
    if radius == 0.0 {
        v.fill(0.0);
        return;
    }
    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    // Largest j with mags[j] > (cumsum_j - radius) / (j + 1).
    let mut cumsum = 0.0;
    let mut threshold = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - radius) / (j + 1) as f64;
        if u > t {
            threshold = t;
        } else {
            break;
        }
    }
    v.mapv_inplace(|x| x.signum() * (x.abs() - threshold).max(0.0));
}

/// Keeps the `k` largest magnitudes; equal magnitudes keep the lower index.
fn hard_threshold(v: &mut Array1<f64>, k: usize) {
    if k >= v.len() {
        return;
    }
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].abs().total_cmp(&v[a].abs()).then(a.cmp(&b)));
    for &i in &order[k..] {
        v[i] = 0.0;
    }
}

/// Tunes the constraint to the ground truth: `R = R(θ*)`, or `k = ‖θ*‖₀`.
pub fn radius_from_truth(kind: RegularizerKind, truth: &GroundTruth) -> RegularizerSpec {
    let theta = truth.theta_star();
    match kind {
        RegularizerKind::L1Ball => RegularizerSpec::l1_ball(norm1(theta)),
        RegularizerKind::L2Ball => RegularizerSpec::l2_ball(norm2(theta)),
        RegularizerKind::KSparse => RegularizerSpec::k_sparse(truth.sparsity()),
    }
}

/// Membership of a direction in the tangent cone of `K` at `θ*`.
///
/// For the balls this is the first-order descent condition. For `KSparse`
/// the cone is generated by the descent set itself: `h` qualifies when some
/// `t > 0` keeps `θ* + t·h` within the sparsity budget.
pub fn in_tangent_cone(spec: &RegularizerSpec, truth: &GroundTruth, h: ArrayView1<f64>, tol: f64) -> bool {
    let theta = truth.theta_star();
    match spec.kind {
        RegularizerKind::L1Ball => {
            let mut on = 0.0;
            let mut off = 0.0;
            for (&t, &hi) in theta.iter().zip(h.iter()) {
                if t != 0.0 {
                    on += t.signum() * hi;
                } else {
                    off += hi.abs();
                }
            }
            on + off <= tol
        }
        RegularizerKind::L2Ball => theta.dot(&h) <= tol,
        RegularizerKind::KSparse => {
            let union: usize = theta.iter().zip(h.iter()).filter(|(t, hi)| **t != 0.0 || **hi != 0.0).count();
            if union <= spec.k {
                return true;
            }
            // Entries θ*ᵢ + t·hᵢ that a single t can cancel.
            let mut ts: Vec<f64> = theta
                .iter()
                .zip(h.iter())
                .filter(|(t, hi)| **t != 0.0 && **hi != 0.0 && t.signum() != hi.signum())
                .map(|(t, hi)| -t / hi)
                .collect();
            ts.sort_unstable_by(f64::total_cmp);
            let mut best = 0;
            let mut i = 0;
            while i < ts.len() {
                let mut j = i;
                while j < ts.len() && (ts[j] - ts[i]).abs() <= 1e-9 * ts[i].abs().max(1.0) {
                    j += 1;
                }
                best = best.max(j - i);
                i = j;
            }
            union - best <= spec.k
        }
    }
}

/// Unit directions from the tangent cone of `K` at `θ*`.
///
/// The ℓ1 sampler mixes Gaussian rejection (directions already in the cone)
/// with off-support perturbations whose ℓ1 mass is paid for by shrinking the
/// on-support coordinates along `sign(θ*)`; random off-support sparsity masks
/// spread the samples across the cone's faces.
pub fn sample_descent_directions(
    spec: &RegularizerSpec,
    truth: &GroundTruth,
    count: usize,
    seed: u64,
) -> Result<Vec<Array1<f64>>> {
    if truth.sparsity() == 0 {
        return Err(Error::DegenerateCone("θ* = 0"));
    }
    let d = truth.dim();
    let theta = truth.theta_star();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::with_capacity(count);
    let support = truth.support();
    let off_support: Vec<usize> = (0..d).filter(|i| theta[*i] == 0.0).collect();
    while out.len() < count {
        let mut h = gaussian_vector(d, &mut rng);
        match spec.kind {
            RegularizerKind::L1Ball => {
                if !off_support.is_empty() && rng.random_bool(0.75) {
                    // Keep a random fraction of the off-support coordinates.
                    let keep: f64 = rng.random_range(0.02..=1.0);
                    for &i in &off_support {
                        if !rng.random_bool(keep) {
                            h[i] = 0.0;
                        }
                    }
                }
                let excess: f64 = support.iter().map(|&i| theta[i].signum() * h[i]).sum::<f64>()
                    + off_support.iter().map(|&i| h[i].abs()).sum::<f64>();
                if excess > 0.0 {
                    let slack = excess * rng.random_range(0.0..0.5);
                    let shift = (excess + slack) / support.len() as f64;
                    for &i in support {
                        h[i] -= shift * theta[i].signum();
                    }
                }
            }
            RegularizerKind::L2Ball => {
                let unit = &theta / norm2(theta);
                let c = unit.dot(&h);
                if c > 0.0 {
                    h.scaled_add(-2.0 * c, &unit);
                }
            }
            RegularizerKind::KSparse => {
                // Differences θ' − θ* for k-sparse θ' that share part of the support.
                let k = spec.k.max(1);
                let shared = rng.random_range(0..=k.min(support.len()));
                let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, support.len(), shared)
                    .into_iter()
                    .map(|j| support[j])
                    .collect();
                let extra = k - shared;
                if extra > 0 && !off_support.is_empty() {
                    chosen.extend(
                        rand::seq::index::sample(&mut rng, off_support.len(), extra.min(off_support.len()))
                            .into_iter()
                            .map(|j| off_support[j]),
                    );
                }
                let mut target = Array1::<f64>::zeros(d);
                for &i in &chosen {
                    target[i] = h[i];
                }
                h = target - theta;
            }
        }
        let norm = norm2(h.view());
        if norm == 0.0 || !norm.is_finite() {
            continue;
        }
        h /= norm;
        if in_tangent_cone(spec, truth, h.view(), 1e-10) {
            out.push(h);
        }
    }
    Ok(out)
}
