//! Conic geometry of the descent cone `C = C_R(θ*)`.
//!
//! Every supremum over a cone is estimated by maximizing over a finite set of
//! unit directions drawn from the cone, so each estimate is a certified lower
//! bound on the true quantity. Unconstrained spectral norms give the matching
//! upper bounds.
//!
//! For convex cones the sample set can be enriched with feasible
//! candidates obtained from the cone's Euclidean projection (projected power
//! iterations for `σ_R` and `ρ`, the exact maximizer for `ξ`). They are still
//! members of the cone, so the estimates stay lower bounds.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{gaussian_vector, norm2, spectral_norm};
use crate::problem::GroundTruth;
use crate::regularizers::{sample_descent_directions, RegularizerKind, RegularizerSpec};
use crate::rng::{derive_seed, rng_from_seed};

/// A closed convex cone with a Euclidean projection.
pub trait Cone: Send + Sync {
    fn dim(&self) -> usize;
    fn project(&self, g: ArrayView1<f64>) -> Array1<f64>;
}

/// The whole space.
#[derive(Debug, Clone)]
pub struct FullSpace(pub usize);

impl Cone for FullSpace {
    fn dim(&self) -> usize {
        self.0
    }

    fn project(&self, g: ArrayView1<f64>) -> Array1<f64> {
        g.to_owned()
    }
}

/// Span of a set of coordinate axes.
#[derive(Debug, Clone)]
pub struct CoordinateSpan {
    pub dim: usize,
    pub axes: Vec<usize>,
}

impl Cone for CoordinateSpan {
    fn dim(&self) -> usize {
        self.dim
    }

    fn project(&self, g: ArrayView1<f64>) -> Array1<f64> {
        let mut out = Array1::zeros(self.dim);
        for &i in &self.axes {
            out[i] = g[i];
        }
        out
    }
}

/// `{h : ⟨a, h⟩ ≤ 0}`, the tangent cone of an ℓ2 ball at `a`.
#[derive(Debug, Clone)]
pub struct HalfSpace {
    unit_normal: Array1<f64>,
}

impl HalfSpace {
    pub fn new(normal: ArrayView1<f64>) -> Result<Self> {
        let n = norm2(normal);
        if n == 0.0 {
            return Err(Error::DegenerateCone("zero normal"));
        }
        Ok(Self { unit_normal: &normal / n })
    }
}

impl Cone for HalfSpace {
    fn dim(&self) -> usize {
        self.unit_normal.len()
    }

    fn project(&self, g: ArrayView1<f64>) -> Array1<f64> {
        let c = self.unit_normal.dot(&g);
        let mut out = g.to_owned();
        if c > 0.0 {
            out.scaled_add(-c, &self.unit_normal);
        }
        out
    }
}

/// Tangent cone of the ℓ1 ball of radius `‖θ*‖₁` at `θ*`:
/// `{h : Σ_{i∈T} sign(θ*ᵢ) hᵢ + Σ_{i∉T} |hᵢ| ≤ 0}`.
#[derive(Debug, Clone)]
pub struct L1TangentCone {
    /// `sign(θ*ᵢ)` on the support, 0 off it.
    signs: Array1<f64>,
    support_size: usize,
}

impl L1TangentCone {
    pub fn new(truth: &GroundTruth) -> Result<Self> {
        if truth.sparsity() == 0 {
            return Err(Error::DegenerateCone("θ* = 0"));
        }
        let signs = truth.theta_star().mapv(|v| if v == 0.0 { 0.0 } else { v.signum() });
        Ok(Self { signs, support_size: truth.sparsity() })
    }

    /// Scale `λ ≥ 0` of the closest point of the polar cone `cone(∂‖θ*‖₁)`.
    ///
    /// Minimizes `‖g_T − λ s‖² + Σ_{i∉T} (|gᵢ| − λ)₊²`, a convex piecewise
    /// quadratic; on the piece where the `j` largest off-support magnitudes
    /// exceed `λ` the stationary point is `(⟨s, g_T⟩ + Σ_top-j |gᵢ|) / (k + j)`.
    pub fn polar_scale(&self, g: ArrayView1<f64>) -> f64 {
        let mut on = 0.0;
        let mut off: Vec<f64> = Vec::with_capacity(g.len());
        for (&s, &gi) in self.signs.iter().zip(g.iter()) {
            if s != 0.0 {
                on += s * gi;
            } else {
                off.push(gi.abs());
            }
        }
        off.sort_unstable_by(|a, b| b.total_cmp(a));
        let k = self.support_size as f64;
        let mut partial = 0.0;
        for j in 0..=off.len() {
            let lambda = (on + partial) / (k + j as f64);
            let upper = if j == 0 { f64::INFINITY } else { off[j - 1] };
            let lower = off.get(j).copied().unwrap_or(0.0);
            if lambda <= upper && lambda >= lower {
                return lambda.max(0.0);
            }
            if j < off.len() {
                partial += off[j];
            }
        }
        0.0
    }
}

impl Cone for L1TangentCone {
    fn dim(&self) -> usize {
        self.signs.len()
    }

    fn project(&self, g: ArrayView1<f64>) -> Array1<f64> {
        let lambda = self.polar_scale(g);
        Array1::from_shape_fn(g.len(), |i| {
            let s = self.signs[i];
            if s != 0.0 {
                g[i] - lambda * s
            } else {
                g[i].signum() * (g[i].abs() - lambda).max(0.0)
            }
        })
    }
}

/// The tangent cone at `θ*` when it is convex and has a projection.
pub fn tangent_cone(spec: &RegularizerSpec, truth: &GroundTruth) -> Result<Option<Box<dyn Cone>>> {
    Ok(match spec.kind {
        RegularizerKind::L1Ball => Some(Box::new(L1TangentCone::new(truth)?)),
        RegularizerKind::L2Ball => Some(Box::new(HalfSpace::new(truth.theta_star())?)),
        RegularizerKind::KSparse => None,
    })
}

fn stack(samples: &[Array1<f64>]) -> Result<Array2<f64>> {
    let dim = samples.first().ok_or(Error::EmptySet("cone samples"))?.len();
    let mut out = Array2::zeros((samples.len(), dim));
    for (mut row, s) in out.rows_mut().into_iter().zip(samples) {
        if s.len() != dim {
            return Err(Error::Shape("cone samples have different lengths".into()));
        }
        row.assign(s);
    }
    Ok(out)
}

fn mean_and_std_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Monte-Carlo `E_g[max_z ⟨g, z⟩]` over a finite set, with its standard error.
pub fn estimate_gaussian_width(samples: &[Array1<f64>], draws: usize, seed: u64) -> Result<(f64, f64)> {
    let z = stack(samples)?;
    if draws == 0 {
        return Err(Error::param("draws", "need at least one Gaussian draw"));
    }
    let mut rng = rng_from_seed(seed);
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let g = gaussian_vector(z.ncols(), &mut rng);
            z.dot(&g).iter().copied().fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    Ok(mean_and_std_error(&values))
}

/// Width of `X·C ∩ S^{n−1}`: cone directions are mapped through `X` and
/// normalized. When the cone has a projection, each Gaussian draw `g` also
/// tries the feasible candidate `P_C(Xᵀg)`.
pub fn image_width(
    x: ArrayView2<f64>,
    directions: &[Array1<f64>],
    cone: Option<&dyn Cone>,
    draws: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let mapped = map_to_sphere(x, directions);
    if mapped.is_empty() && cone.is_none() {
        return Err(Error::EmptySet("no cone direction survives the map through X"));
    }
    if draws == 0 {
        return Err(Error::param("draws", "need at least one Gaussian draw"));
    }
    let z = if mapped.is_empty() { None } else { Some(stack(&mapped)?) };
    let mut rng = rng_from_seed(seed);
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let g = gaussian_vector(x.nrows(), &mut rng);
            let mut best = z.as_ref().map_or(f64::NEG_INFINITY, |z| z.dot(&g).iter().copied().fold(f64::NEG_INFINITY, f64::max));
            if let Some(cone) = cone {
                let u = cone.project(x.t().dot(&g).view());
                let xu = x.dot(&u);
                let norm = norm2(xu.view());
                if norm > 0.0 {
                    best = best.max(g.dot(&xu) / norm);
                }
            }
            best
        })
        .collect();
    Ok(mean_and_std_error(&values))
}

/// `u ↦ Xu / ‖Xu‖`, dropping directions in the null space of `X`.
pub fn map_to_sphere(x: ArrayView2<f64>, directions: &[Array1<f64>]) -> Vec<Array1<f64>> {
    let mut dropped = 0;
    let out: Vec<Array1<f64>> = directions
        .iter()
        .filter_map(|u| {
            let xu = x.dot(u);
            let n = norm2(xu.view());
            if n > 0.0 {
                Some(xu / n)
            } else {
                dropped += 1;
                None
            }
        })
        .collect();
    if dropped > 0 {
        log::warn!("dropped {dropped} cone directions with Xu = 0");
    }
    out
}

/// `m₀ = (ω + η)²`.
pub fn minimal_computational_load(omega: f64, eta: f64) -> Result<f64> {
    if !(omega >= 0.0) || !(eta >= 0.0) {
        return Err(Error::param("omega/eta", format!("must be nonnegative, got ω = {omega}, η = {eta}")));
    }
    Ok((omega + eta) * (omega + eta))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    /// `max_u ‖Xu‖` over the samples (lower bound on `σ_R(X)`).
    pub sigma_r: f64,
    /// Unconstrained spectral norm (upper bound on `σ_R(X)`).
    pub spectral_norm: f64,
}

pub fn cone_restricted_spectral_norm(x: ArrayView2<f64>, samples: &[Array1<f64>]) -> Result<SpectralEstimate> {
    let u = stack(samples)?;
    let xu = u.dot(&x.t());
    let sigma_r = xu.rows().into_iter().map(|r| norm2(r)).fold(0.0, f64::max);
    let spectral = spectral_norm(x, 1e-10, 10_000);
    Ok(SpectralEstimate { sigma_r, spectral_norm: spectral })
}

/// `(I − μ̃XᵀX)` applied to each row of `v`.
fn apply_rate_operator(x: ArrayView2<f64>, mu_tilde: f64, v: &Array2<f64>) -> Array2<f64> {
    let xv = v.dot(&x.t());
    v - &(xv.dot(&x) * mu_tilde)
}

/// `max_{u,v} uᵀ(I − μ̃XᵀX)v` over all sample pairs.
pub fn convergence_rate_rho(x: ArrayView2<f64>, mu_tilde: f64, samples: &[Array1<f64>]) -> Result<f64> {
    let v = stack(samples)?;
    let mv = apply_rate_operator(x, mu_tilde, &v);
    let pairs = v.dot(&mv.t());
    Ok(pairs.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// `max_v vᵀXᵀw / ‖w‖` over samples `v` drawn from `−C`.
pub fn noise_amplification_xi(x: ArrayView2<f64>, w: ArrayView1<f64>, samples: &[Array1<f64>]) -> Result<f64> {
    let wn = norm2(w);
    if wn == 0.0 {
        return Err(Error::param("w", "noise vector is zero"));
    }
    let v = stack(samples)?;
    let corr = x.t().dot(&w) / wn;
    Ok(v.dot(&corr).iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

fn normalized(v: Array1<f64>) -> Option<Array1<f64>> {
    let n = norm2(v.view());
    (n > 0.0 && n.is_finite()).then(|| v / n)
}

fn top_indices(scores: &[f64], count: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(count);
    idx
}

/// Feasible candidates for `σ_R`: projected power iterations `u ← P_C(XᵀXu)`
/// started from the `starts` samples with the largest `‖Xu‖`.
pub fn refine_sigma_candidates(
    x: ArrayView2<f64>,
    cone: &dyn Cone,
    samples: &[Array1<f64>],
    starts: usize,
    iters: usize,
) -> Vec<Array1<f64>> {
    let scores: Vec<f64> = samples.iter().map(|u| norm2(x.dot(u).view())).collect();
    let mut out = Vec::new();
    for i in top_indices(&scores, starts) {
        let mut u = samples[i].clone();
        for _ in 0..iters {
            match normalized(cone.project(x.t().dot(&x.dot(&u)).view())) {
                Some(next) => u = next,
                None => break,
            }
        }
        out.push(u);
    }
    out
}

/// Feasible candidates for `ρ`: alternating maximization
/// `u ← P_C(Mv)/‖·‖`, `v ← P_C(Mu)/‖·‖` with `M = I − μ̃XᵀX`.
pub fn refine_rho_candidates(
    x: ArrayView2<f64>,
    mu_tilde: f64,
    cone: &dyn Cone,
    samples: &[Array1<f64>],
    starts: usize,
    iters: usize,
) -> Vec<Array1<f64>> {
    let apply = |v: &Array1<f64>| -> Array1<f64> { v - &(x.t().dot(&x.dot(v)) * mu_tilde) };
    let scores: Vec<f64> = samples.iter().map(|v| norm2(cone.project(apply(v).view()).view())).collect();
    let mut out = Vec::new();
    for i in top_indices(&scores, starts) {
        let mut v = samples[i].clone();
        let mut u = v.clone();
        for _ in 0..iters {
            match normalized(cone.project(apply(&v).view())) {
                Some(next) => u = next,
                None => break,
            }
            match normalized(cone.project(apply(&u).view())) {
                Some(next) => v = next,
                None => break,
            }
        }
        out.push(u);
        out.push(v);
    }
    out
}

/// The maximizer of `vᵀXᵀw` over `−C ∩ S^{d−1}` for a convex cone:
/// `P_{−C}(Xᵀw)` normalized, where `P_{−C}(z) = −P_C(−z)`.
pub fn xi_candidate(x: ArrayView2<f64>, w: ArrayView1<f64>, cone: &dyn Cone) -> Option<Array1<f64>> {
    let neg = -x.t().dot(&w);
    normalized(-cone.project(neg.view()))
}

/// Monte-Carlo statistical dimension `E‖P_C(g)‖²` with its standard error.
pub fn statistical_dimension(cone: &dyn Cone, draws: usize, seed: u64) -> (f64, f64) {
    let mut rng = rng_from_seed(seed);
    let values: Vec<f64> = (0..draws)
        .map(|_| {
            let p = cone.project(gaussian_vector(cone.dim(), &mut rng).view());
            p.dot(&p)
        })
        .collect();
    mean_and_std_error(&values)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryOptions {
    /// Descent directions sampled from the cone.
    pub directions: usize,
    /// Gaussian draws for the width estimate.
    pub width_draws: usize,
    /// Starting points for projected refinement (0 disables it).
    pub refine_starts: usize,
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for GeometryOptions {
    fn default() -> Self {
        Self { directions: 2000, width_draws: 1000, refine_starts: 8, refine_iters: 100, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryEstimates {
    pub omega: f64,
    pub omega_std_error: f64,
    pub eta: f64,
    pub m0: f64,
    pub m0_std_error: f64,
    pub sigma_r: f64,
    pub spectral_norm: f64,
    pub mu_tilde: f64,
    pub rho: f64,
    /// `None` for noiseless instances.
    pub xi: Option<f64>,
    pub kappa: f64,
    pub mc_samples: usize,
    pub width_draws: usize,
}

/// All cone quantities for one instance.
#[allow(clippy::too_many_arguments)]
pub fn estimate_geometry(
    x: ArrayView2<f64>,
    w: ArrayView1<f64>,
    truth: &GroundTruth,
    spec: &RegularizerSpec,
    mu_tilde: f64,
    eta: f64,
    opts: &GeometryOptions,
) -> Result<GeometryEstimates> {
    if x.ncols() != truth.dim() || w.len() != x.nrows() {
        return Err(Error::Shape("X, w and θ* disagree on dimensions".into()));
    }
    let mut directions =
        sample_descent_directions(spec, truth, opts.directions, derive_seed(opts.seed, "directions", &[]))?;
    let cone = tangent_cone(spec, truth)?;
    let (omega, omega_se) =
        image_width(x, &directions, cone.as_deref(), opts.width_draws, derive_seed(opts.seed, "width", &[]))?;
    let omega = omega.max(0.0);
    let m0 = minimal_computational_load(omega, eta)?;

    if let Some(cone) = cone.as_deref() {
        if opts.refine_starts > 0 {
            let extra_sigma = refine_sigma_candidates(x, cone, &directions, opts.refine_starts, opts.refine_iters);
            let extra_rho =
                refine_rho_candidates(x, mu_tilde, cone, &directions, opts.refine_starts, opts.refine_iters);
            directions.extend(extra_sigma);
            directions.extend(extra_rho);
        }
    }
    let spectral = cone_restricted_spectral_norm(x, &directions)?;
    let rho = convergence_rate_rho(x, mu_tilde, &directions)?;
    let xi = if norm2(w) > 0.0 {
        let mut negated: Vec<Array1<f64>> = directions.iter().map(|h| -h).collect();
        if let Some(c) = cone.as_deref().and_then(|c| xi_candidate(x, w, c)) {
            negated.push(c);
        }
        Some(noise_amplification_xi(x, w, &negated)?)
    } else {
        None
    };
    Ok(GeometryEstimates {
        omega,
        omega_std_error: omega_se,
        eta,
        m0,
        m0_std_error: 2.0 * (omega + eta) * omega_se,
        sigma_r: spectral.sigma_r,
        spectral_norm: spectral.spectral_norm,
        mu_tilde,
        rho,
        xi,
        kappa: spec.kappa(),
        mc_samples: directions.len(),
        width_draws: opts.width_draws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::gen_sparse_signal;
    use crate::rng::rng_from_seed;
    use ndarray::array;
    use std::f64::consts::PI;

    fn circle(points: usize) -> Vec<Array1<f64>> {
        (0..points).map(|i| {
            let t = 2.0 * PI * i as f64 / points as f64;
            array![t.cos(), t.sin()]
        }).collect()
    }

    #[test]
    fn singleton_width_is_zero() {
        let (w, se) = estimate_gaussian_width(&[array![0.6, 0.8]], 10_000, 1).unwrap();
        assert!(w.abs() < 4.0 * se, "{w} ± {se}");
        assert!(se < 0.02);
    }

    #[test]
    fn circle_width_is_mean_gaussian_norm() {
        let (w, se) = estimate_gaussian_width(&circle(3600), 10_000, 2).unwrap();
        let exact = (PI / 2.0).sqrt();
        assert!((w - exact).abs() < 0.02 + 3.0 * se, "{w} vs {exact}");
    }

    #[test]
    fn empty_sets_are_rejected() {
        assert!(matches!(estimate_gaussian_width(&[], 10, 0), Err(Error::EmptySet(_))));
        let x = Array2::<f64>::eye(2);
        assert!(cone_restricted_spectral_norm(x.view(), &[]).is_err());
        assert!(convergence_rate_rho(x.view(), 1.0, &[]).is_err());
        assert!(noise_amplification_xi(x.view(), array![1.0, 0.0].view(), &[]).is_err());
    }

    #[test]
    fn m0_is_squared_sum() {
        assert_eq!(minimal_computational_load(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(minimal_computational_load(3.0, 1.0).unwrap(), 16.0);
        assert!(minimal_computational_load(-1.0, 1.0).is_err());
    }

    #[test]
    fn identity_design_quantities() {
        let x = Array2::<f64>::eye(3);
        let samples = vec![array![1.0, 0.0, 0.0], array![0.0, 0.6, 0.8]];
        assert!((cone_restricted_spectral_norm(x.view(), &samples).unwrap().sigma_r - 1.0).abs() < 1e-12);
        assert!(convergence_rate_rho(x.view(), 1.0, &samples).unwrap().abs() < 1e-12);
        let sphere = circle(720);
        let x2 = Array2::<f64>::eye(2);
        assert!((convergence_rate_rho(x2.view(), 0.5, &sphere).unwrap() - 0.5).abs() < 1e-12);
        let w = array![0.3, -0.4];
        assert!((noise_amplification_xi(x2.view(), w.view(), &sphere).unwrap() - 1.0).abs() < 1e-4);
    }

    #[test]
    fn diagonal_design_on_a_ray() {
        let x = array![[2.0, 0.0], [0.0, 1.0]];
        let est = cone_restricted_spectral_norm(x.view(), &[array![1.0, 0.0]]).unwrap();
        assert!((est.sigma_r - 2.0).abs() < 1e-12);
        assert!((est.spectral_norm - 2.0).abs() < 1e-8);
    }

    #[test]
    fn xi_vanishes_for_orthogonal_noise() {
        // Cone spans e1; the noise only excites e2.
        let x = Array2::<f64>::eye(2);
        let xi = noise_amplification_xi(x.view(), array![0.0, 1.0].view(), &[array![1.0, 0.0], array![-1.0, 0.0]]).unwrap();
        assert_eq!(xi, 0.0);
    }

    #[test]
    fn l1_cone_projection_is_feasible_and_optimal() {
        let truth = gen_sparse_signal(12, 3, 4).unwrap();
        let cone = L1TangentCone::new(&truth).unwrap();
        let spec = crate::regularizers::radius_from_truth(RegularizerKind::L1Ball, &truth);
        let mut rng = rng_from_seed(3);
        for _ in 0..200 {
            let g = gaussian_vector(12, &mut rng);
            let p = cone.project(g.view());
            assert!(crate::regularizers::in_tangent_cone(&spec, &truth, p.view(), 1e-10));
            // Moreau: residual is orthogonal to the projection.
            let r = &g - &p;
            assert!(r.dot(&p).abs() < 1e-9);
            // No sampled cone point is closer.
            let dist = norm2(r.view());
            for h in sample_descent_directions(&spec, &truth, 30, 7).unwrap() {
                for t in [0.1, 0.5, 1.0, 2.0] {
                    assert!(norm2((&g - &(&h * t)).view()) >= dist - 1e-12);
                }
            }
        }
    }

    #[test]
    fn halfspace_projection() {
        let h = HalfSpace::new(array![1.0, 0.0].view()).unwrap();
        assert_eq!(h.project(array![2.0, 3.0].view()), array![0.0, 3.0]);
        assert_eq!(h.project(array![-2.0, 3.0].view()), array![-2.0, 3.0]);
    }
}
