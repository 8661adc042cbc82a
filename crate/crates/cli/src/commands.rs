//! Subcommand definitions and their implementations.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use codedopt::geometry::map_to_sphere;
use codedopt::linalg::norm2;
use codedopt::rng::derive_seed;
use codedopt::{
    alpha_sm, beta_sm, estimate_geometry, fit_phase_boundary, run_convergence_sweep, run_phase_transition,
    sample_descent_directions, theorem1_step_bound, verify_lemma1, Alpha, BoundInputs, BoundaryFit, Error,
    GeometryEstimates, GeometryOptions, LemmaDirection, SearchMode, StepBound, StepSize, SweepAxis, VectorSet,
    ViolationReport,
};
use serde::Serialize;

use crate::config::{ConfigFile, PairRule};
use crate::emit::{dataset_bundle, file_name, grid_csv, to_json, trace_csv, write_bytes};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "codedopt", version, about = "Straggler-tolerant encoded projected gradient descent simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the shared problem instance as a binary bundle plus metadata.
    GenData(Common),
    /// Convergence curves over the swept load or straggler axis.
    Converge(Common),
    /// Success-rate grid over (m, s) and the fitted phase boundary.
    Phase(Common),
    /// Geometry estimates and the per-iteration convergence bound.
    Bounds(BoundsArgs),
    /// Monte-Carlo check of the set-restricted eigenvalue bounds.
    VerifyLemma(LemmaArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Base seed (overrides `experiment.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Normalized step μ̃; defaults to the coefficient of `optimizer.step`.
    #[arg(long)]
    pub mu_tilde: Option<f64>,
    #[arg(long, default_value_t = codedopt::bounds::DEFAULT_LOG_CONSTANT)]
    pub log_constant: f64,
}

#[derive(Debug, Args)]
pub struct LemmaArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub s: Option<usize>,
    #[arg(long)]
    pub eta: Option<f64>,
    /// Independent encoding matrices to draw.
    #[arg(long, default_value_t = 500)]
    pub draws: usize,
    /// Cone directions forming the test set.
    #[arg(long, default_value_t = 50)]
    pub directions: usize,
}

fn load(common: &Common) -> Result<ConfigFile, CliError> {
    let mut config = ConfigFile::load(&common.config)?;
    if let Some(seed) = common.seed {
        config.experiment.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output.dir = out.clone();
    }
    Ok(config)
}

/// Runs one subcommand and returns the files it wrote.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    match cli.command {
        Command::GenData(c) => gen_data(&load(&c)?),
        Command::Converge(c) => converge(&load(&c)?),
        Command::Phase(c) => phase(&load(&c)?),
        Command::Bounds(a) => bounds(&load(&a.common)?, &a),
        Command::VerifyLemma(a) => verify_lemma(&load(&a.common)?, &a),
    }
}

#[derive(Serialize)]
struct DatasetMeta<'a> {
    fingerprint: &'a str,
    n: usize,
    d: usize,
    k: usize,
    seed: u64,
    noise_std: f64,
    scaling: codedopt::DesignScaling,
    support: &'a [usize],
    dtype: &'static str,
    layout: [&'static str; 4],
    data_file: &'a str,
}

pub fn gen_data(config: &ConfigFile) -> Result<Vec<PathBuf>, CliError> {
    config.validate(PairRule::Any)?;
    let fp = config.fingerprint();
    let (truth, data) = config.experiment_config().shared_instance()?;
    let bin_name = file_name("gen-data", &fp, None, "bin");
    let p = &config.problem;
    let meta = DatasetMeta {
        fingerprint: &fp,
        n: p.n,
        d: p.d,
        k: p.k,
        seed: config.experiment.seed,
        noise_std: p.noise_std,
        scaling: p.scaling,
        support: truth.support(),
        dtype: "f64 little-endian",
        layout: ["x: n*d row-major", "y: n", "w: n", "theta_star: d"],
        data_file: &bin_name,
    };
    let dir = &config.output.dir;
    Ok(vec![
        write_bytes(dir, &bin_name, &dataset_bundle(&data, &truth))?,
        write_bytes(dir, &file_name("gen-data", &fp, None, "json"), to_json(&meta).as_bytes())?,
    ])
}

#[derive(Serialize)]
struct CurveSummary {
    m: usize,
    s: usize,
    trace_file: String,
    median_iters: f64,
    iters_to_threshold: Vec<usize>,
    diverged: Vec<usize>,
    /// Median relative error per iteration; `null` where it is infinite.
    median_rel_error: Vec<f64>,
}

#[derive(Serialize)]
struct ConvergeSummary {
    fingerprint: String,
    axis: SweepAxis,
    iters: usize,
    threshold: f64,
    trials: usize,
    curves: Vec<CurveSummary>,
}

pub fn converge(config: &ConfigFile) -> Result<Vec<PathBuf>, CliError> {
    config.validate(PairRule::All)?;
    let fp = config.fingerprint();
    let exp = config.experiment_config();
    let axis = config.experiment.axis.unwrap_or(SweepAxis::M);
    let curves = run_convergence_sweep(&exp, axis)?;
    let dir = &config.output.dir;
    let mut written = Vec::new();
    let mut summaries = Vec::new();
    for c in &curves {
        let name = file_name("converge", &fp, Some(&format!("m{}_s{}", c.m, c.s)), "csv");
        written.push(write_bytes(dir, &name, trace_csv(&fp, &c.traces).as_bytes())?);
        if !c.diverged.is_empty() {
            log::warn!("m = {}, s = {}: trials {:?} diverged", c.m, c.s, c.diverged);
        }
        summaries.push(CurveSummary {
            m: c.m,
            s: c.s,
            trace_file: name,
            median_iters: c.median_iters,
            iters_to_threshold: c.iters_to_threshold.clone(),
            diverged: c.diverged.clone(),
            median_rel_error: c.median_rel_error.clone(),
        });
    }
    let summary = ConvergeSummary {
        fingerprint: fp.clone(),
        axis,
        iters: exp.iters,
        threshold: exp.threshold,
        trials: exp.trials,
        curves: summaries,
    };
    written.push(write_bytes(dir, &file_name("converge", &fp, None, "json"), to_json(&summary).as_bytes())?);
    if let Some(c) = curves.iter().find(|c| c.diverged.len() == exp.trials) {
        log::error!("every trial diverged at m = {}, s = {}", c.m, c.s);
        return Err(CliError::Core(Error::Divergence { iter: 0, rel_error: f64::INFINITY }));
    }
    Ok(written)
}

#[derive(Serialize)]
struct BoundaryFile<'a> {
    fingerprint: &'a str,
    #[serde(flatten)]
    fit: &'a BoundaryFit,
}

pub fn phase(config: &ConfigFile) -> Result<Vec<PathBuf>, CliError> {
    config.validate(PairRule::Any)?;
    let fp = config.fingerprint();
    let grid = run_phase_transition(&config.experiment_config())?;
    let dir = &config.output.dir;
    let mut written = vec![write_bytes(dir, &file_name("phase", &fp, None, "csv"), grid_csv(&fp, &grid).as_bytes())?];
    let fit = fit_phase_boundary(&grid, config.experiment.level)?;
    let boundary = BoundaryFile { fingerprint: &fp, fit: &fit };
    written.push(write_bytes(dir, &file_name("phase", &fp, Some("boundary"), "json"), to_json(&boundary).as_bytes())?);
    Ok(written)
}

fn step_coefficient(step: StepSize) -> f64 {
    match step {
        StepSize::Constant(c) | StepSize::PerLoad(c) | StepSize::PerLoadRatio(c) => c,
    }
}

/// `(m, s)` from flags or the first configured values, checked for `s < m`.
fn single_pair(config: &ConfigFile, m: Option<usize>, s: Option<usize>) -> Result<(usize, usize), CliError> {
    let m = m.unwrap_or(config.encoder.m[0]);
    let s = s.unwrap_or(config.stragglers.s[0]);
    if s >= m {
        return Err(CliError::Config(format!("stragglers.s / --s ({s}) must be smaller than encoder.m / --m ({m})")));
    }
    Ok((m, s))
}

#[derive(Serialize)]
struct BoundsReport {
    fingerprint: String,
    m: usize,
    s: usize,
    eta: f64,
    mu_tilde: f64,
    log_constant: f64,
    beta: f64,
    alpha: Alpha,
    geometry: GeometryEstimates,
    inputs: BoundInputs,
    /// Bound for an iteration with no stragglers.
    step_bound_no_stragglers: StepBound,
    /// Bound for an iteration with `s` stragglers.
    step_bound_worst: StepBound,
}

pub fn bounds(config: &ConfigFile, args: &BoundsArgs) -> Result<Vec<PathBuf>, CliError> {
    config.validate(PairRule::Any)?;
    let (m, s) = single_pair(config, args.m, args.s)?;
    let eta = args.eta.unwrap_or(config.experiment.eta);
    let exp = config.experiment_config();
    let mu_tilde = args.mu_tilde.unwrap_or(step_coefficient(exp.step));
    if !(mu_tilde > 0.0) || !(eta >= 0.0) || !(args.log_constant >= 0.0) {
        return Err(CliError::Config("--mu-tilde must be positive; --eta and --log-constant nonnegative".into()));
    }
    let fp = config.fingerprint();
    let (truth, data) = exp.shared_instance()?;
    let spec = exp.regularizer_for(&truth);
    let opts = GeometryOptions {
        directions: config.experiment.directions,
        width_draws: config.experiment.width_draws,
        seed: derive_seed(config.experiment.seed, "geometry", &[]),
        ..GeometryOptions::default()
    };
    let geometry = estimate_geometry(data.x.view(), data.w.view(), &truth, &spec, mu_tilde, eta, &opts)?;
    let inputs = BoundInputs {
        kappa: geometry.kappa,
        rho: geometry.rho.max(0.0),
        mu_tilde,
        sigma_r: geometry.sigma_r,
        m0: geometry.m0,
        m,
        s,
        xi: geometry.xi.unwrap_or(0.0).max(0.0),
        noise_norm: norm2(data.w.view()),
        log_constant: args.log_constant,
    };
    let report = BoundsReport {
        fingerprint: fp.clone(),
        m,
        s,
        eta,
        mu_tilde,
        log_constant: args.log_constant,
        beta: beta_sm(s, m)?,
        alpha: alpha_sm(s, m),
        step_bound_no_stragglers: theorem1_step_bound(&inputs, 0)?,
        step_bound_worst: theorem1_step_bound(&inputs, s)?,
        geometry,
        inputs,
    };
    let text = to_json(&report);
    print!("{text}");
    Ok(vec![write_bytes(&config.output.dir, &file_name("bounds", &fp, None, "json"), text.as_bytes())?])
}

#[derive(Serialize)]
struct LemmaReport {
    fingerprint: String,
    directions: usize,
    upper: ViolationReport,
    lower: ViolationReport,
}

pub fn verify_lemma(config: &ConfigFile, args: &LemmaArgs) -> Result<Vec<PathBuf>, CliError> {
    config.validate(PairRule::Any)?;
    let (m, s) = single_pair(config, args.m, args.s)?;
    let eta = args.eta.unwrap_or(config.experiment.eta);
    if args.draws == 0 || args.directions == 0 || !(eta >= 0.0) {
        return Err(CliError::Config("--draws and --directions must be positive and --eta nonnegative".into()));
    }
    let fp = config.fingerprint();
    let exp = config.experiment_config();
    let seed = config.experiment.seed;
    let (truth, data) = exp.shared_instance()?;
    let spec = exp.regularizer_for(&truth);
    let cone = sample_descent_directions(&spec, &truth, args.directions, derive_seed(seed, "lemma-directions", &[]))?;
    let set = VectorSet::new(
        map_to_sphere(data.x.view(), &cone),
        config.experiment.width_draws,
        derive_seed(seed, "lemma-width", &[]),
    )?;
    let check = |direction| {
        verify_lemma1(direction, &set, m, s, eta, args.draws, SearchMode::Auto, derive_seed(seed, "lemma", &[]))
    };
    let report = LemmaReport {
        fingerprint: fp.clone(),
        directions: set.vectors.len(),
        upper: check(LemmaDirection::Upper)?,
        lower: check(LemmaDirection::Lower)?,
    };
    let text = to_json(&report);
    print!("{text}");
    Ok(vec![write_bytes(&config.output.dir, &file_name("verify-lemma", &fp, None, "json"), text.as_bytes())?])
}
