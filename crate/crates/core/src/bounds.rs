//! Convergence-bound calculator and set-restricted eigenvalue envelopes.
//!
//! For an `m × n` Gaussian encoder, `β_{s,m}` and `α_{s,m}` bound
//! `‖A_{Sᶜ}u‖` from above and below uniformly over straggler sets `|S| = s`.
//! [`theorem1_step_bound`] turns them, together with the geometry of the
//! problem, into a per-iteration contraction factor and a noise coefficient.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::estimate_gaussian_width;
use crate::linalg::{gaussian_matrix, norm2};
use crate::rng::derived_rng;

/// `s · ln(e m / s)`, continuously extended by 0 at `s = 0`.
fn s_log(s: usize, m: usize) -> f64 {
    if s == 0 {
        0.0
    } else {
        let s = s as f64;
        s * (1.0 + (m as f64 / s).ln())
    }
}

/// `β_{s,m} = min(√(3(m−s) ln(em/(m−s))), √m)`.
pub fn beta_sm(s: usize, m: usize) -> Result<f64> {
    if s >= m {
        return Err(Error::param("s", format!("need s < m, got s = {s}, m = {m}")));
    }
    let kept = (m - s) as f64;
    let first = (3.0 * kept * (1.0 + (m as f64 / kept).ln())).sqrt();
    Ok(first.min((m as f64).sqrt()))
}

/// `α_{s,m}`, clamped at zero when the radicand is negative.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Alpha {
    pub value: f64,
    /// The radicand `m − 2 − 5 s ln(em/s)` was negative; the lower bound is then trivial.
    pub vacuous: bool,
}

pub fn alpha_sm(s: usize, m: usize) -> Alpha {
    let radicand = m as f64 - 2.0 - 5.0 * s_log(s, m);
    if radicand < 0.0 {
        Alpha { value: 0.0, vacuous: true }
    } else {
        Alpha { value: radicand.sqrt(), vacuous: false }
    }
}

pub const DEFAULT_LOG_CONSTANT: f64 = 9.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub kappa: f64,
    pub rho: f64,
    pub mu_tilde: f64,
    pub sigma_r: f64,
    pub m0: f64,
    pub m: usize,
    pub s: usize,
    pub xi: f64,
    pub noise_norm: f64,
    /// Coefficient in front of `s_τ ln(em/s_τ)`.
    pub log_constant: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        if self.s >= self.m {
            return Err(Error::param("s", format!("need s < m, got s = {}, m = {}", self.s, self.m)));
        }
        if self.kappa != 1.0 && self.kappa != 2.0 {
            return Err(Error::param("kappa", format!("must be 1 or 2, got {}", self.kappa)));
        }
        for (name, v) in [
            ("rho", self.rho),
            ("mu_tilde", self.mu_tilde),
            ("sigma_r", self.sigma_r),
            ("m0", self.m0),
            ("xi", self.xi),
            ("noise_norm", self.noise_norm),
            ("log_constant", self.log_constant),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, format!("must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepBound {
    pub contraction: f64,
    pub neighborhood_coeff: f64,
}

impl StepBound {
    /// Upper bound on `‖θ_{τ+1} − θ*‖` given `‖θ_τ − θ*‖` and `‖w‖`.
    pub fn next_error(&self, error: f64, noise_norm: f64) -> f64 {
        self.contraction * error + self.neighborhood_coeff * noise_norm
    }
}

/// Per-iteration bound `‖θ_{τ+1} − θ*‖ ≤ contraction·‖θ_τ − θ*‖ + coeff·‖w‖`.
pub fn theorem1_step_bound(inputs: &BoundInputs, s_tau: usize) -> Result<StepBound> {
    inputs.validate()?;
    if s_tau > inputs.s || s_tau >= inputs.m {
        return Err(Error::param(
            "s_tau",
            format!("need s_tau <= s < m, got s_tau = {s_tau}, s = {}, m = {}", inputs.s, inputs.m),
        ));
    }
    let m = inputs.m as f64;
    let load_ratio = (inputs.m0 / (inputs.m - s_tau) as f64).sqrt();
    let coding = (2.0 + inputs.log_constant * s_log(s_tau, inputs.m)) / m + 4.0 * load_ratio;
    let contraction =
        inputs.kappa * inputs.rho + inputs.mu_tilde * inputs.kappa * inputs.sigma_r * inputs.sigma_r * coding;
    let neighborhood_coeff = inputs.kappa
        * (inputs.mu_tilde * inputs.xi + inputs.mu_tilde / std::f64::consts::SQRT_2 * inputs.sigma_r * load_ratio);
    Ok(StepBound { contraction, neighborhood_coeff })
}

/// Smallest load with `m − s ≥ 260 (m₀ + s) / ε²`.
pub fn min_load_for_rate(m0: f64, s: usize, epsilon: f64) -> Result<usize> {
    if !(epsilon > 0.0) {
        return Err(Error::param("epsilon", format!("must be positive, got {epsilon}")));
    }
    if !(m0 >= 0.0) {
        return Err(Error::param("m0", format!("must be nonnegative, got {m0}")));
    }
    let extra = 260.0 * (m0 + s as f64) / (epsilon * epsilon);
    // Guard against 10.000000000000002-style rounding pushing ceil up by one.
    let rounded = extra.round();
    let extra = if (extra - rounded).abs() <= 1e-9 * rounded.max(1.0) { rounded } else { extra.ceil() };
    Ok(s + extra as usize)
}

/// A finite set `T ⊂ ℝⁿ` with its radius `σ(T)` and a Monte-Carlo width.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorSet {
    pub vectors: Vec<Array1<f64>>,
    pub sigma_t: f64,
    pub omega_t: f64,
    pub omega_std_error: f64,
}

impl VectorSet {
    pub fn new(vectors: Vec<Array1<f64>>, width_draws: usize, seed: u64) -> Result<Self> {
        if vectors.is_empty() {
            return Err(Error::EmptySet("vector set T"));
        }
        let dim = vectors[0].len();
        if vectors.iter().any(|v| v.len() != dim) {
            return Err(Error::Shape("vectors in T have different lengths".into()));
        }
        let sigma_t = vectors.iter().map(|v| norm2(v.view())).fold(0.0, f64::max);
        let (omega_t, omega_std_error) = estimate_gaussian_width(&vectors, width_draws, seed)?;
        Ok(Self { vectors, sigma_t, omega_t, omega_std_error })
    }

    pub fn dim(&self) -> usize {
        self.vectors[0].len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LemmaDirection {
    /// `sup_S ‖A_{Sᶜ}u‖ ≤ β‖u‖ + ω(T) + η`.
    Upper,
    /// `inf_S ‖A_{Sᶜ}u‖ ≥ α‖u‖ − ω(T) − η`.
    Lower,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    /// Exhaustive below the subset limit, sampled above it.
    Auto,
    /// Enumerate every `S` with `|S| = s`.
    Exhaustive,
    /// Random subsets plus the greedy extreme subset for each `u`.
    Sampled { subsets: usize },
}

pub const EXHAUSTIVE_LIMIT: usize = 100_000;
pub const DEFAULT_SAMPLED_SUBSETS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationReport {
    pub direction: LemmaDirection,
    pub m: usize,
    pub s: usize,
    pub eta: f64,
    pub trials: usize,
    pub violations: usize,
    pub violation_rate: f64,
    /// `2e^{−η²/8σ²(T)}` (upper) or `4e^{−η²/8σ²(T)}` (lower).
    pub failure_probability_bound: f64,
    /// `β_{s,m}` for the upper bound, `α_{s,m}` for the lower one.
    pub envelope: f64,
    pub vacuous: bool,
    pub sigma_t: f64,
    pub omega_t: f64,
    pub exhaustive: bool,
    pub subsets_checked: usize,
}

fn binomial(m: usize, s: usize) -> f64 {
    let s = s.min(m - s);
    (0..s).fold(1.0, |acc, i| acc * (m - i) as f64 / (i + 1) as f64)
}

/// Calls `f` with every `s`-subset of `0..m` in lexicographic order.
pub(crate) fn for_each_subset(m: usize, s: usize, mut f: impl FnMut(&[usize])) {
    if s > m {
        return;
    }
    let mut idx: Vec<usize> = (0..s).collect();
    loop {
        f(&idx);
        // Rightmost position that can still advance.
        let mut i = s;
        while i > 0 && idx[i - 1] == m - s + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        idx[i - 1] += 1;
        for j in i..s {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Worst-case `‖A_{Sᶜ}u‖²` for the given direction from the squared entries of `Au`.
fn extreme_by_greedy(squares: &[f64], s: usize, direction: LemmaDirection) -> f64 {
    let total: f64 = squares.iter().sum();
    let mut sorted = squares.to_vec();
    sorted.sort_unstable_by(f64::total_cmp);
    let removed: f64 = match direction {
        // Largest survivor norm: drop the s smallest entries.
        LemmaDirection::Upper => sorted[..s].iter().sum(),
        // Smallest survivor norm: drop the s largest entries.
        LemmaDirection::Lower => sorted[sorted.len() - s..].iter().sum(),
    };
    (total - removed).max(0.0)
}

/// Empirical violation rate of one side of the set-restricted eigenvalue bound.
///
/// Each trial draws a fresh `m × n` Gaussian `A` and searches straggler sets
/// `S` and vectors `u ∈ T` for a violation.
#[allow(clippy::too_many_arguments)]
pub fn verify_lemma1(
    direction: LemmaDirection,
    set: &VectorSet,
    m: usize,
    s: usize,
    eta: f64,
    trials: usize,
    mode: SearchMode,
    seed: u64,
) -> Result<ViolationReport> {
    if s >= m {
        return Err(Error::param("s", format!("need s < m, got s = {s}, m = {m}")));
    }
    if !(eta >= 0.0) {
        return Err(Error::param("eta", format!("must be nonnegative, got {eta}")));
    }
    let count = binomial(m, s);
    let exhaustive = match mode {
        SearchMode::Exhaustive if count > EXHAUSTIVE_LIMIT as f64 => {
            return Err(Error::SearchTooLarge { m, s, count, limit: EXHAUSTIVE_LIMIT })
        }
        SearchMode::Exhaustive => true,
        SearchMode::Auto => count <= EXHAUSTIVE_LIMIT as f64,
        SearchMode::Sampled { .. } => false,
    };
    let sampled_subsets = match mode {
        SearchMode::Sampled { subsets } => subsets,
        _ => DEFAULT_SAMPLED_SUBSETS,
    };
    let (envelope, vacuous) = match direction {
        LemmaDirection::Upper => (beta_sm(s, m)?, false),
        LemmaDirection::Lower => {
            let a = alpha_sm(s, m);
            (a.value, a.vacuous)
        }
    };
    let slack = set.omega_t + eta;
    let n = set.dim();
    let mut violations = 0;
    let mut subsets_checked = 0;
    for trial in 0..trials {
        let mut rng = derived_rng(seed, "lemma1-encoder", &[trial as u64]);
        let a = gaussian_matrix(m, n, &mut rng);
        let random_subsets: Vec<Vec<usize>> = if exhaustive {
            Vec::new()
        } else {
            let mut srng = derived_rng(seed, "lemma1-subsets", &[trial as u64]);
            (0..sampled_subsets).map(|_| rand::seq::index::sample(&mut srng, m, s).into_vec()).collect()
        };
        let violated = set.vectors.iter().any(|u| {
            let au = a.dot(u);
            let squares: Vec<f64> = au.iter().map(|v| v * v).collect();
            let total: f64 = squares.iter().sum();
            let mut best = extreme_by_greedy(&squares, s, direction);
            let mut consider = |subset: &[usize]| {
                let kept = (total - subset.iter().map(|&i| squares[i]).sum::<f64>()).max(0.0);
                best = match direction {
                    LemmaDirection::Upper => best.max(kept),
                    LemmaDirection::Lower => best.min(kept),
                };
            };
            if exhaustive {
                for_each_subset(m, s, &mut consider);
            } else {
                random_subsets.iter().for_each(|sub| consider(sub));
            }
            let norm_u = norm2(u.view());
            let extreme = best.sqrt();
            match direction {
                LemmaDirection::Upper => extreme > envelope * norm_u + slack,
                LemmaDirection::Lower => extreme < envelope * norm_u - slack,
            }
        });
        subsets_checked = if exhaustive { count as usize } else { sampled_subsets + 1 };
        if violated {
            violations += 1;
        }
    }
    let exponent = if set.sigma_t > 0.0 { -eta * eta / (8.0 * set.sigma_t * set.sigma_t) } else { f64::NEG_INFINITY };
    let factor = match direction {
        LemmaDirection::Upper => 2.0,
        LemmaDirection::Lower => 4.0,
    };
    Ok(ViolationReport {
        direction,
        m,
        s,
        eta,
        trials,
        violations,
        violation_rate: if trials == 0 { 0.0 } else { violations as f64 / trials as f64 },
        failure_probability_bound: (factor * exponent.exp()).min(1.0),
        envelope,
        vacuous,
        sigma_t: set.sigma_t,
        omega_t: set.omega_t,
        exhaustive,
        subsets_checked,
    })
}
