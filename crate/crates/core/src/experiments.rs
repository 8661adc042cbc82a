//! Convergence sweeps and the `(m, s)` phase-transition grid.
//!
//! Every trial draws its randomness from seeds derived from
//! `(base_seed, m, s, trial)`, so results do not depend on execution order or
//! on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{EncodedDataset, EncoderKind, EncoderSpec};
use crate::error::{Error, Result};
use crate::problem::{gen_dataset_scaled, gen_sparse_signal, Dataset, DesignScaling, GroundTruth};
use crate::regularizers::{radius_from_truth, RegularizerKind, RegularizerSpec};
use crate::rng::derive_seed;
use crate::simulator::{run_encoded_pgd, RunOptions, StepMode, StepRule, StragglerMode, StragglerModel, Trace};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default)]
    pub scaling: DesignScaling,
}

/// Learning rate as a function of the load `m` and the data size `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "rule", content = "value")]
pub enum StepSize {
    /// `μ = c`.
    Constant(f64),
    /// `μ = c / m`.
    PerLoad(f64),
    /// `μ = c · n / m`.
    PerLoadRatio(f64),
}

impl StepSize {
    pub fn resolve(&self, m: usize, n: usize) -> f64 {
        match *self {
            StepSize::Constant(c) => c,
            StepSize::PerLoad(c) => c / m as f64,
            StepSize::PerLoadRatio(c) => c * n as f64 / m as f64,
        }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            StepSize::Constant(c) | StepSize::PerLoad(c) | StepSize::PerLoadRatio(c) => c,
        }
    }

    /// The usual calibration for each encoder on normalized designs.
    pub fn default_for(kind: EncoderKind) -> Self {
        match kind {
            EncoderKind::Gaussian => StepSize::PerLoad(0.2),
            EncoderKind::RandomizedDct => StepSize::PerLoadRatio(0.2),
            EncoderKind::Identity => StepSize::Constant(0.2),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub encoder: EncoderKind,
    pub regularizer: RegularizerKind,
    /// Explicit ball radius; `None` uses the regularizer value of each trial's `θ*`.
    pub radius: Option<f64>,
    pub step: StepSize,
    pub step_mode: StepMode,
    pub straggler_mode: StragglerMode,
    /// Number of workers `L`.
    pub workers: usize,
    pub iters: usize,
    /// Keep `θ_τ` every `stride` iterations (the final iterate is always kept).
    pub stride: usize,
    pub threshold: f64,
    pub trials: usize,
    pub base_seed: u64,
    pub m_values: Vec<usize>,
    pub s_values: Vec<usize>,
}

impl ExperimentConfig {
    /// Defaults for everything but the instance size and the grid.
    pub fn new(problem: ProblemConfig, encoder: EncoderKind, m_values: Vec<usize>, s_values: Vec<usize>) -> Self {
        Self {
            problem,
            encoder,
            regularizer: RegularizerKind::L1Ball,
            radius: None,
            step: StepSize::default_for(encoder),
            step_mode: StepMode::Fixed,
            straggler_mode: StragglerMode::RowLevel,
            workers: 1,
            iters: 500,
            stride: 500,
            threshold: 1e-3,
            trials: 20,
            base_seed: 0,
            m_values,
            s_values,
        }
    }

    /// Checks everything that does not depend on how the grid is traversed.
    pub fn validate(&self) -> Result<()> {
        let p = &self.problem;
        if p.n == 0 || p.d == 0 {
            return Err(Error::Config(format!("problem.n and problem.d must be positive (n = {}, d = {})", p.n, p.d)));
        }
        if p.k == 0 || p.k > p.d {
            return Err(Error::Config(format!("problem.k = {} must lie in 1..=problem.d = {}", p.k, p.d)));
        }
        if !(p.noise_std >= 0.0) || !p.noise_std.is_finite() {
            return Err(Error::Config(format!("problem.noise_std must be nonnegative, got {}", p.noise_std)));
        }
        if self.trials == 0 {
            return Err(Error::Config("experiment.trials must be at least 1".into()));
        }
        if self.iters == 0 {
            return Err(Error::Config("optimizer.iters must be at least 1".into()));
        }
        if self.stride == 0 {
            return Err(Error::Config("optimizer.stride must be at least 1".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("experiment.threshold must be positive, got {}", self.threshold)));
        }
        let c = self.step.coefficient();
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::Config(format!("optimizer.step value must be positive, got {c}")));
        }
        if let Some(r) = self.radius {
            if !(r > 0.0) || !r.is_finite() {
                return Err(Error::Config(format!("regularizer.radius must be positive, got {r}")));
            }
        }
        if self.m_values.is_empty() || self.s_values.is_empty() {
            return Err(Error::Config("experiment.m_values and experiment.s_values must be nonempty".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("encoder.workers must be at least 1".into()));
        }
        let min_m = *self.m_values.iter().min().unwrap_or(&0);
        if self.workers > min_m {
            return Err(Error::Config(format!(
                "encoder.workers = {} exceeds the smallest load experiment.m_values = {min_m}",
                self.workers
            )));
        }
        if self.encoder == EncoderKind::Identity && self.m_values.iter().any(|&m| m != p.n) {
            return Err(Error::Config(format!("identity encoder needs every m equal to problem.n = {}", p.n)));
        }
        if self.encoder == EncoderKind::RandomizedDct && self.m_values.iter().any(|&m| m > p.n) {
            return Err(Error::Config(format!("dct encoder needs every m <= problem.n = {}", p.n)));
        }
        Ok(())
    }

    /// The constraint used for a trial with ground truth `truth`.
    pub fn regularizer_for(&self, truth: &GroundTruth) -> RegularizerSpec {
        match (self.regularizer, self.radius) {
            (RegularizerKind::L1Ball, Some(r)) => RegularizerSpec::l1_ball(r),
            (RegularizerKind::L2Ball, Some(r)) => RegularizerSpec::l2_ball(r),
            (kind, _) => radius_from_truth(kind, truth),
        }
    }

    fn step_rule(&self, m: usize) -> StepRule {
        let mu = self.step.resolve(m, self.problem.n);
        match self.step_mode {
            StepMode::Fixed => StepRule::fixed(mu),
            StepMode::TheoremScaled => StepRule::theorem_scaled(mu),
        }
    }

    fn instance(&self, truth_seed: u64, data_seed: u64) -> Result<(GroundTruth, Dataset)> {
        let p = &self.problem;
        let truth = gen_sparse_signal(p.d, p.k, truth_seed)?;
        let data = gen_dataset_scaled(&truth, p.n, p.noise_std, p.scaling, data_seed)?;
        Ok((truth, data))
    }

    /// The `(θ*, X, y)` shared by all trials of a convergence sweep.
    pub fn shared_instance(&self) -> Result<(GroundTruth, Dataset)> {
        self.instance(derive_seed(self.base_seed, "truth", &[]), derive_seed(self.base_seed, "data", &[]))
    }

    fn run_trial(&self, truth: &GroundTruth, data: &Dataset, m: usize, s: usize, trial: usize) -> Result<Trace> {
        let idx = [m as u64, s as u64, trial as u64];
        let encoder = EncoderSpec::new(self.encoder, m, self.problem.n, derive_seed(self.base_seed, "encoder", &idx));
        let encoded = EncodedDataset::new(data, encoder, self.workers.min(m))?;
        let model = StragglerModel { mode: self.straggler_mode, s, seed: derive_seed(self.base_seed, "stragglers", &idx) };
        let opts = RunOptions::new(self.iters).with_stride(self.stride).with_threshold(self.threshold);
        run_encoded_pgd(&encoded, truth, &self.regularizer_for(truth), &self.step_rule(m), &model, &opts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    M,
    S,
}

/// One curve of a convergence sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCurve {
    pub m: usize,
    pub s: usize,
    /// Trial-wise median relative error at each iteration `0..=T`.
    pub median_rel_error: Vec<f64>,
    /// First iteration below the threshold per trial, `T` when never reached.
    pub iters_to_threshold: Vec<usize>,
    pub median_iters: f64,
    /// Traces of the trials that ran to completion, in trial order.
    pub traces: Vec<(usize, Trace)>,
    /// Trials stopped by the divergence guard.
    pub diverged: Vec<usize>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn iters_to_threshold(trace: &Trace, cap: usize) -> usize {
    trace.converged_at.unwrap_or(cap)
}

fn runtime_or_failure(result: Result<Trace>) -> Result<Option<Trace>> {
    match result {
        Ok(t) => Ok(Some(t)),
        Err(Error::Divergence { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Sweeps one axis with the other held at its single configured value.
///
/// All trials share one `(X, θ*)`; each trial has its own encoder and
/// straggler draws. A diverged trial contributes an infinite error after
/// iteration 0 and never reaches the threshold.
pub fn run_convergence_sweep(config: &ExperimentConfig, axis: SweepAxis) -> Result<Vec<SweepCurve>> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = match axis {
        SweepAxis::M => {
            let &[s] = config.s_values.as_slice() else {
                return Err(Error::Config("an m sweep needs exactly one value in experiment.s_values".into()));
            };
            config.m_values.iter().map(|&m| (m, s)).collect()
        }
        SweepAxis::S => {
            let &[m] = config.m_values.as_slice() else {
                return Err(Error::Config("an s sweep needs exactly one value in experiment.m_values".into()));
            };
            config.s_values.iter().map(|&s| (m, s)).collect()
        }
    };
    if let Some(&(m, s)) = cells.iter().find(|(m, s)| m <= s) {
        return Err(Error::Config(format!("experiment.m_values entry {m} must exceed experiment.s_values entry {s}")));
    }
    let (truth, data) = config.shared_instance()?;
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..config.trials).map(move |t| (c, t))).collect();
    let results: Vec<Option<Trace>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (m, s) = cells[c];
            runtime_or_failure(config.run_trial(&truth, &data, m, s, t))
        })
        .collect::<Result<_>>()?;

    let len = config.iters + 1;
    let mut curves = Vec::with_capacity(cells.len());
    for (c, &(m, s)) in cells.iter().enumerate() {
        let outcomes = &results[c * config.trials..(c + 1) * config.trials];
        let mut traces = Vec::new();
        let mut diverged = Vec::new();
        let mut iters = Vec::with_capacity(config.trials);
        for (t, outcome) in outcomes.iter().enumerate() {
            match outcome {
                Some(trace) => {
                    iters.push(iters_to_threshold(trace, config.iters));
                    traces.push((t, trace.clone()));
                }
                None => {
                    iters.push(config.iters);
                    diverged.push(t);
                }
            }
        }
        let median_rel_error = (0..len)
            .map(|i| {
                let mut column: Vec<f64> = outcomes
                    .iter()
                    .map(|o| match o {
                        Some(trace) => trace.records[i].rel_error,
                        None if i == 0 => 1.0,
                        None => f64::INFINITY,
                    })
                    .collect();
                median(&mut column)
            })
            .collect();
        let mut as_f64: Vec<f64> = iters.iter().map(|&i| i as f64).collect();
        curves.push(SweepCurve {
            m,
            s,
            median_rel_error,
            median_iters: median(&mut as_f64),
            iters_to_threshold: iters,
            traces,
            diverged,
        });
    }
    Ok(curves)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub m: usize,
    pub s: usize,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// Median first iteration below the threshold, with `T` for trials that never reach it.
    pub median_iters: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    /// Sorted by `s`, then `m`.
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn row(&self, m: usize, s: usize) -> Option<&GridRow> {
        self.rows.iter().find(|r| r.m == m && r.s == s)
    }
}

/// Success probabilities over the `m_values × s_values` grid.
///
/// Cells with `m ≤ s` cannot run and are left out. Every trial draws a fresh
/// `θ*`, `X` and `A`; success means the final iterate after `T` steps has
/// relative error below the threshold. Diverged trials count as failures.
pub fn run_phase_transition(config: &ExperimentConfig) -> Result<GridResult> {
    config.validate()?;
    let mut s_values = config.s_values.clone();
    s_values.sort_unstable();
    s_values.dedup();
    let mut m_values = config.m_values.clone();
    m_values.sort_unstable();
    m_values.dedup();
    let cells: Vec<(usize, usize)> =
        s_values.iter().flat_map(|&s| m_values.iter().filter(move |&&m| m > s).map(move |&m| (m, s))).collect();
    if cells.is_empty() {
        return Err(Error::Config("no grid cell satisfies m > s".into()));
    }
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..config.trials).map(move |t| (c, t))).collect();
    let outcomes: Vec<Option<Trace>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            let (m, s) = cells[c];
            let idx = [m as u64, s as u64, t as u64];
            let (truth, data) = config.instance(
                derive_seed(config.base_seed, "truth", &idx),
                derive_seed(config.base_seed, "data", &idx),
            )?;
            runtime_or_failure(config.run_trial(&truth, &data, m, s, t))
        })
        .collect::<Result<_>>()?;

    let rows = cells
        .iter()
        .enumerate()
        .map(|(c, &(m, s))| {
            let cell = &outcomes[c * config.trials..(c + 1) * config.trials];
            let successes = cell.iter().flatten().filter(|t| t.final_error() < config.threshold).count();
            let mut iters: Vec<f64> = cell
                .iter()
                .map(|o| o.as_ref().map_or(config.iters, |t| iters_to_threshold(t, config.iters)) as f64)
                .collect();
            GridRow {
                m,
                s,
                trials: config.trials,
                successes,
                success_rate: successes as f64 / config.trials as f64,
                median_iters: median(&mut iters),
            }
        })
        .collect();
    Ok(GridResult { rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFit {
    pub level: f64,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `(s, m*(s))` for every row of the grid.
    pub points: Vec<(usize, f64)>,
}

/// Least-squares line through the per-row crossing points `m*(s)`.
///
/// `m*(s)` interpolates linearly between the last cell below `level` and the
/// first cell at or above it. Rows that start at or above the level, or never
/// reach it, are reported together in one error.
pub fn fit_phase_boundary(grid: &GridResult, level: f64) -> Result<BoundaryFit> {
    if !(level > 0.0 && level <= 1.0) {
        return Err(Error::param("level", format!("must lie in (0, 1], got {level}")));
    }
    let mut s_values: Vec<usize> = grid.rows.iter().map(|r| r.s).collect();
    s_values.sort_unstable();
    s_values.dedup();
    if s_values.is_empty() {
        return Err(Error::EmptySet("grid has no rows"));
    }
    let mut points = Vec::new();
    let mut unbracketed = Vec::new();
    for &s in &s_values {
        let mut row: Vec<&GridRow> = grid.rows.iter().filter(|r| r.s == s).collect();
        row.sort_by_key(|r| r.m);
        match row.iter().position(|r| r.success_rate >= level) {
            Some(i) if i > 0 => {
                let (lo, hi) = (row[i - 1], row[i]);
                let t = (level - lo.success_rate) / (hi.success_rate - lo.success_rate);
                points.push((s, lo.m as f64 + t * (hi.m as f64 - lo.m as f64)));
            }
            _ => unbracketed.push(s),
        }
    }
    if !unbracketed.is_empty() {
        return Err(Error::BoundaryNotBracketed { rows: unbracketed });
    }
    if points.len() < 2 {
        return Err(Error::param("grid", "a line fit needs at least two s-rows"));
    }
    let n = points.len() as f64;
    let mean_s = points.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mean_m = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mean_s).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mean_s) * (p.1 - mean_m)).sum();
    let slope = sxy / sxx;
    let intercept = mean_m - slope * mean_s;
    let ss_res: f64 = points.iter().map(|p| (p.1 - slope * p.0 as f64 - intercept).powi(2)).sum();
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_m).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else if ss_res == 0.0 { 1.0 } else { 0.0 };
    Ok(BoundaryFit { level, slope, intercept, r_squared, points })
}

/// Coefficient of determination of a straight-line fit to `log10(error)`
/// against iteration, over the prefix that stays above `floor`.
///
/// `None` when fewer than three points lie above the floor.
pub fn log_linear_r_squared(errors: &[f64], floor: f64) -> Option<f64> {
    let end = errors.iter().position(|&e| !(e > floor) || !e.is_finite()).unwrap_or(errors.len());
    if end < 3 {
        return None;
    }
    let ys: Vec<f64> = errors[..end].iter().map(|e| e.log10()).collect();
    let n = end as f64;
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        let dy = y - mean_y;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    Some(if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(encoder: EncoderKind, m_values: Vec<usize>, s_values: Vec<usize>) -> ExperimentConfig {
        let problem = ProblemConfig { n: 60, d: 80, k: 3, noise_std: 0.0, scaling: DesignScaling::Normalized };
        let mut c = ExperimentConfig::new(problem, encoder, m_values, s_values);
        c.iters = 120;
        c.trials = 4;
        c.base_seed = 17;
        c
    }

    fn synthetic_grid(boundary: impl Fn(usize) -> f64) -> GridResult {
        let mut rows = Vec::new();
        for s in [0, 10, 20, 30] {
            for m in (20..=200).step_by(20) {
                let rate = (0.5 + (m as f64 - boundary(s)) / 40.0).clamp(0.0, 1.0);
                rows.push(GridRow { m, s, trials: 20, successes: 0, success_rate: rate, median_iters: 0.0 });
            }
        }
        GridResult { rows }
    }

    #[test]
    fn exact_linear_boundary() {
        let fit = fit_phase_boundary(&synthetic_grid(|s| 2.0 * s as f64 + 40.0), 0.5).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 40.0).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rows_are_not_bracketed() {
        let mut grid = synthetic_grid(|s| 2.0 * s as f64 + 40.0);
        for r in grid.rows.iter_mut().filter(|r| r.s == 10 || r.s == 30) {
            r.success_rate = 1.0;
        }
        assert_eq!(fit_phase_boundary(&grid, 0.5), Err(Error::BoundaryNotBracketed { rows: vec![10, 30] }));
    }

    #[test]
    fn step_size_rules() {
        assert_eq!(StepSize::Constant(0.3).resolve(10, 100), 0.3);
        assert_eq!(StepSize::PerLoad(0.2).resolve(10, 100), 0.02);
        assert_eq!(StepSize::PerLoadRatio(0.2).resolve(10, 100), 2.0);
    }

    #[test]
    fn config_validation() {
        let mut c = small(EncoderKind::Gaussian, vec![40], vec![10]);
        assert!(c.validate().is_ok());
        c.problem.k = 100;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = small(EncoderKind::Gaussian, vec![40], vec![10]);
        c.workers = 50;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = small(EncoderKind::Gaussian, vec![10, 40], vec![10]);
        assert!(matches!(run_convergence_sweep(&c, SweepAxis::M), Err(Error::Config(_))));
    }

    #[test]
    fn single_point_sweep_matches_direct_runs() {
        let c = small(EncoderKind::Gaussian, vec![50], vec![5]);
        let curves = run_convergence_sweep(&c, SweepAxis::M).unwrap();
        assert_eq!(curves.len(), 1);
        let (truth, data) = c.shared_instance().unwrap();
        let direct: Vec<Trace> = (0..c.trials).map(|t| c.run_trial(&truth, &data, 50, 5, t).unwrap()).collect();
        for i in 0..=c.iters {
            let mut col: Vec<f64> = direct.iter().map(|t| t.records[i].rel_error).collect();
            assert_eq!(curves[0].median_rel_error[i], median(&mut col));
        }
    }

    #[test]
    fn grid_is_reproducible_and_order_free() {
        let c = small(EncoderKind::Gaussian, vec![10, 60], vec![0, 20]);
        let a = run_phase_transition(&c).unwrap();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(|| run_phase_transition(&c).unwrap());
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 3);
        assert!(a.row(10, 20).is_none());
        for r in &a.rows {
            assert!(r.successes <= r.trials);
            assert_eq!(r.success_rate, r.successes as f64 / r.trials as f64);
        }
    }

    #[test]
    fn log_linearity_of_geometric_decay() {
        let errors: Vec<f64> = (0..50).map(|i| 0.8f64.powi(i)).collect();
        assert!((log_linear_r_squared(&errors, 1e-12).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(log_linear_r_squared(&[1.0, 1e-14], 1e-12), None);
    }
}
