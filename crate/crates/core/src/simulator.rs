//! Master/worker simulation of uncoded and encoded projected gradient descent.
//!
//! Each worker owns a contiguous block of (encoded) rows and returns the
//! partial gradient `Σ_{i ∈ W_ℓ \ S_τ} (⟨aᵢ, θ⟩ − bᵢ) aᵢ`. The master sums the
//! surviving partial gradients in ascending worker order, takes a step and
//! projects back onto the constraint set. Uncoded and encoded runs share the
//! same kernel, so an identity encoder without stragglers reproduces the
//! uncoded trace bit-for-bit.

use std::ops::Range;

use ndarray::{s, Array1, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::bounds::beta_sm;
use crate::encoding::{partition_rows, EncodedDataset};
use crate::error::{Error, Result};
use crate::problem::{relative_error, Dataset, GroundTruth};
use crate::regularizers::RegularizerSpec;
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StragglerMode {
    None,
    /// Exactly `s` rows, uniformly at random, fresh every iteration.
    RowLevel,
    /// Whole workers straggle; a maximal random set of workers whose rows total at most `s`.
    WorkerLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StragglerModel {
    pub mode: StragglerMode,
    pub s: usize,
    pub seed: u64,
}

impl StragglerModel {
    pub fn none() -> Self {
        Self { mode: StragglerMode::None, s: 0, seed: 0 }
    }

    pub fn row_level(s: usize, seed: u64) -> Self {
        Self { mode: StragglerMode::RowLevel, s, seed }
    }

    pub fn worker_level(s: usize, seed: u64) -> Self {
        Self { mode: StragglerMode::WorkerLevel, s, seed }
    }
}

/// Draws the straggling row set `S_τ` (sorted ascending).
///
/// Depends only on `(model.seed, iter)`, never on earlier draws.
pub fn sample_straggler_set(model: &StragglerModel, iter: usize, partitions: &[Range<usize>]) -> Result<Vec<usize>> {
    let m = partitions.last().map_or(0, |r| r.end);
    if model.s > m {
        return Err(Error::param("s", format!("straggler toleration {} exceeds the {} encoded rows", model.s, m)));
    }
    let mut rng = derived_rng(model.seed, "stragglers", &[iter as u64]);
    let mut set = match model.mode {
        StragglerMode::None => Vec::new(),
        StragglerMode::RowLevel => rand::seq::index::sample(&mut rng, m, model.s).into_vec(),
        StragglerMode::WorkerLevel => {
            let mut order: Vec<usize> = (0..partitions.len()).collect();
            order.shuffle(&mut rng);
            let mut budget = model.s;
            let mut rows = Vec::new();
            for l in order {
                let block = &partitions[l];
                if block.len() <= budget {
                    budget -= block.len();
                    rows.extend(block.clone());
                }
            }
            rows
        }
    };
    set.sort_unstable();
    Ok(set)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepMode {
    /// `μ_τ = μ̃`.
    Fixed,
    /// `μ_τ = μ̃ / β²_{s_τ, m}` using the realized straggler count.
    TheoremScaled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRule {
    pub mode: StepMode,
    pub mu_tilde: f64,
}

impl StepRule {
    pub fn fixed(mu: f64) -> Self {
        Self { mode: StepMode::Fixed, mu_tilde: mu }
    }

    pub fn theorem_scaled(mu_tilde: f64) -> Self {
        Self { mode: StepMode::TheoremScaled, mu_tilde }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu_tilde > 0.0) || !self.mu_tilde.is_finite() {
            return Err(Error::param("mu_tilde", format!("must be positive and finite, got {}", self.mu_tilde)));
        }
        Ok(())
    }

    pub fn step_size(&self, s_tau: usize, m: usize) -> Result<f64> {
        match self.mode {
            StepMode::Fixed => Ok(self.mu_tilde),
            StepMode::TheoremScaled => {
                let beta = beta_sm(s_tau, m)?;
                Ok(self.mu_tilde / (beta * beta))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    pub iters: usize,
    /// Keep `θ_τ` whenever `τ % stride == 0`, plus the final iterate. `None` keeps only the final one.
    pub stride: Option<usize>,
    /// Relative error that counts as converged for `Trace::converged_at`.
    pub threshold: f64,
    pub divergence_limit: f64,
    pub fingerprint: String,
}

impl RunOptions {
    pub fn new(iters: usize) -> Self {
        Self { iters, stride: None, threshold: 1e-3, divergence_limit: 1e12, fingerprint: String::new() }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = Some(stride.max(1));
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn with_fingerprint(mut self, fingerprint: impl Into<String>) -> Self {
        self.fingerprint = fingerprint.into();
        self
    }

    fn keeps(&self, iter: usize) -> bool {
        iter == self.iters || self.stride.is_some_and(|s| iter % s == 0)
    }
}

/// State after `iter` updates. `s_tau` and `mu_used` describe the update that
/// produced it (both zero for the initial point).
#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub theta: Option<Array1<f64>>,
    pub rel_error: f64,
    pub s_tau: usize,
    pub mu_used: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
    /// First iteration whose relative error is below the run threshold.
    pub converged_at: Option<usize>,
    pub fingerprint: String,
}

impl Trace {
    pub fn rel_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.rel_error).collect()
    }

    pub fn final_error(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.rel_error)
    }

    pub fn final_theta(&self) -> Option<&Array1<f64>> {
        self.records.last().and_then(|r| r.theta.as_ref())
    }
}

/// Master-side sum of the workers' partial gradients.
fn aggregate_gradient(
    a: ArrayView2<f64>,
    b: ArrayView1<f64>,
    partitions: &[Range<usize>],
    theta: &Array1<f64>,
    stragglers: &[usize],
    grad: &mut Array1<f64>,
) {
    grad.fill(0.0);
    let mut next_straggler = stragglers.iter().peekable();
    for block in partitions {
        let rows = a.slice(s![block.clone(), ..]);
        let mut resid = rows.dot(theta);
        resid -= &b.slice(s![block.clone()]);
        while let Some(&&i) = next_straggler.peek() {
            if i >= block.end {
                break;
            }
            resid[i - block.start] = 0.0;
            next_straggler.next();
        }
        let partial = rows.t().dot(&resid);
        *grad += &partial;
    }
}

struct Problem<'a> {
    a: ArrayView2<'a, f64>,
    b: ArrayView1<'a, f64>,
    partitions: &'a [Range<usize>],
}

fn run_pgd<F>(
    problem: Problem<'_>,
    truth: &GroundTruth,
    spec: &RegularizerSpec,
    opts: &RunOptions,
    mut step: F,
) -> Result<Trace>
where
    F: FnMut(usize) -> Result<(Vec<usize>, f64)>,
{
    let d = problem.a.ncols();
    if d != truth.dim() {
        return Err(Error::Shape(format!("data has {d} columns, truth has dimension {}", truth.dim())));
    }
    let mut theta = Array1::<f64>::zeros(d);
    let mut grad = Array1::<f64>::zeros(d);
    let mut records = Vec::with_capacity(opts.iters + 1);
    let rel0 = relative_error(theta.view(), truth)?;
    records.push(IterationRecord {
        iter: 0,
        theta: opts.keeps(0).then(|| theta.clone()),
        rel_error: rel0,
        s_tau: 0,
        mu_used: 0.0,
    });
    let mut converged_at = (rel0 < opts.threshold).then_some(0);
    for tau in 0..opts.iters {
        let (stragglers, mu) = step(tau)?;
        aggregate_gradient(problem.a, problem.b, problem.partitions, &theta, &stragglers, &mut grad);
        theta.scaled_add(-mu, &grad);
        spec.project_in_place(&mut theta);
        let rel = relative_error(theta.view(), truth)?;
        let iter = tau + 1;
        if !rel.is_finite() || rel > opts.divergence_limit {
            return Err(Error::Divergence { iter, rel_error: rel });
        }
        if converged_at.is_none() && rel < opts.threshold {
            converged_at = Some(iter);
        }
        records.push(IterationRecord {
            iter,
            theta: opts.keeps(iter).then(|| theta.clone()),
            rel_error: rel,
            s_tau: stragglers.len(),
            mu_used: mu,
        });
    }
    Ok(Trace { records, converged_at, fingerprint: opts.fingerprint.clone() })
}

/// Uncoded distributed PGD: `θ ← P(θ − μ̃ Xᵀ(Xθ − y))` with the rows of `X`
/// split across `workers`. Starts from `θ₀ = 0`.
pub fn run_uncoded_pgd(
    dataset: &Dataset,
    truth: &GroundTruth,
    spec: &RegularizerSpec,
    rule: &StepRule,
    opts: &RunOptions,
    workers: usize,
) -> Result<Trace> {
    rule.validate()?;
    let partitions = partition_rows(dataset.n(), workers)?;
    let problem = Problem { a: dataset.x.view(), b: dataset.y.view(), partitions: &partitions };
    run_pgd(problem, truth, spec, opts, |_| Ok((Vec::new(), rule.mu_tilde)))
}

/// Encoded distributed PGD with a fresh straggler set every iteration.
///
/// Rows in `S_τ` contribute nothing; the step is
/// `θ ← P(θ − μ_τ Xᵀ A_{S_τᶜ}ᵀ A_{S_τᶜ}(Xθ − y))`.
pub fn run_encoded_pgd(
    encoded: &EncodedDataset,
    truth: &GroundTruth,
    spec: &RegularizerSpec,
    rule: &StepRule,
    model: &StragglerModel,
    opts: &RunOptions,
) -> Result<Trace> {
    rule.validate()?;
    let m = encoded.m();
    if encoded.ay.len() != m || encoded.partitions.last().map(|r| r.end) != Some(m) {
        return Err(Error::Shape("encoded blocks and partitions disagree on the row count".into()));
    }
    if model.s > m {
        return Err(Error::param("s", format!("straggler toleration {} exceeds the {m} encoded rows", model.s)));
    }
    let problem = Problem { a: encoded.ax.view(), b: encoded.ay.view(), partitions: &encoded.partitions };
    run_pgd(problem, truth, spec, opts, |tau| {
        let set = sample_straggler_set(model, tau, &encoded.partitions)?;
        if set.len() >= m {
            return Err(Error::DegenerateIteration { iter: tau, rows: m });
        }
        let mu = rule.step_size(set.len(), m)?;
        Ok((set, mu))
    })
}
