//! Straggler-tolerant encoded distributed optimization.
//!
//! A master/worker simulator for projected gradient descent on randomly
//! encoded least-squares data, together with calculators for the conic
//! quantities and convergence bounds that govern how much redundancy
//! (computational load `m`) is needed to tolerate `s` straggling rows.
//!
//! The crate is organised bottom-up:
//!
//! * [`problem`] generates sparse ground truths and Gaussian designs.
//! * [`regularizers`] holds the constraint sets and their projections.
//! * [`encoding`] builds Gaussian / randomized-DCT / identity encoders and
//!   partitions encoded rows across workers.
//! * [`simulator`] runs uncoded and encoded PGD with per-iteration stragglers.
//! * [`geometry`] estimates Gaussian widths and cone-restricted norms.
//! * [`bounds`] evaluates the step-wise convergence bound and the set-restricted
//!   eigenvalue envelopes, with a Monte-Carlo verifier.
//! * [`experiments`] orchestrates convergence sweeps and phase-transition grids.

pub mod bounds;
pub mod encoding;
pub mod error;
pub mod experiments;
pub mod geometry;
pub mod linalg;
pub mod problem;
pub mod regularizers;
pub mod rng;
pub mod simulator;

pub use bounds::{alpha_sm, beta_sm, min_load_for_rate, theorem1_step_bound, verify_lemma1};
pub use bounds::{Alpha, BoundInputs, LemmaDirection, SearchMode, StepBound, VectorSet, ViolationReport};
pub use encoding::{build_encoder, encode, partition_rows, EncodedDataset, EncoderKind, EncoderSpec, EncodingMatrix};
pub use error::{Error, Result};
pub use experiments::{
    fit_phase_boundary, run_convergence_sweep, run_phase_transition, BoundaryFit, ExperimentConfig, GridResult,
    GridRow, ProblemConfig, StepSize, SweepAxis, SweepCurve,
};
pub use geometry::{estimate_geometry, Cone, GeometryEstimates, GeometryOptions};
pub use problem::{gen_dataset, gen_sparse_signal, relative_error, Dataset, DesignScaling, GroundTruth};
pub use regularizers::{radius_from_truth, sample_descent_directions, RegularizerKind, RegularizerSpec};
pub use simulator::{
    run_encoded_pgd, run_uncoded_pgd, sample_straggler_set, IterationRecord, RunOptions, StepMode, StepRule,
    StragglerMode, StragglerModel, Trace,
};
