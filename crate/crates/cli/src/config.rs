//! JSON configuration file, defaults and cross-field validation.

use std::path::{Path, PathBuf};

use codedopt::{
    DesignScaling, EncoderKind, ExperimentConfig, ProblemConfig, RegularizerKind, StepMode, StepSize, StragglerMode,
    SweepAxis,
};
use serde::{Deserialize, Deserializer, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub problem: ProblemSection,
    pub encoder: EncoderSection,
    #[serde(default)]
    pub regularizer: RegularizerSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub stragglers: StragglerSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSection {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    #[serde(default)]
    pub noise_std: f64,
    #[serde(default = "normalized")]
    pub scaling: DesignScaling,
}

fn normalized() -> DesignScaling {
    DesignScaling::Normalized
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderSection {
    pub kind: EncoderKind,
    /// One load or a list of loads.
    #[serde(deserialize_with = "one_or_many")]
    pub m: Vec<usize>,
    #[serde(default = "one")]
    pub workers: usize,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularizerSection {
    #[serde(default = "l1")]
    pub kind: RegularizerKind,
    /// A positive number, or `"auto"` for the regularizer value of `θ*`.
    #[serde(default)]
    pub radius: Radius,
}

fn l1() -> RegularizerKind {
    RegularizerKind::L1Ball
}

impl Default for RegularizerSection {
    fn default() -> Self {
        Self { kind: RegularizerKind::L1Ball, radius: Radius::Auto }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Radius {
    #[default]
    Auto,
    Value(f64),
}

impl Serialize for Radius {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Radius::Auto => serializer.serialize_str("auto"),
            Radius::Value(v) => serializer.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Radius {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Value(f64),
            Keyword(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Value(v) => Ok(Radius::Value(v)),
            Raw::Keyword(k) if k == "auto" => Ok(Radius::Auto),
            Raw::Keyword(k) => Err(serde::de::Error::custom(format!("radius must be a number or \"auto\", got \"{k}\""))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    #[serde(default = "default_iters")]
    pub iters: usize,
    /// Defaults to the encoder's usual calibration.
    #[serde(default)]
    pub step: Option<StepSize>,
    #[serde(default = "fixed")]
    pub step_mode: StepMode,
    /// θ snapshot stride; defaults to `iters`.
    #[serde(default)]
    pub stride: Option<usize>,
}

fn default_iters() -> usize {
    500
}

fn fixed() -> StepMode {
    StepMode::Fixed
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { iters: default_iters(), step: None, step_mode: StepMode::Fixed, stride: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StragglerSection {
    #[serde(default = "row_level")]
    pub mode: StragglerMode,
    #[serde(default = "zero", deserialize_with = "one_or_many")]
    pub s: Vec<usize>,
}

fn row_level() -> StragglerMode {
    StragglerMode::RowLevel
}

fn zero() -> Vec<usize> {
    vec![0]
}

impl Default for StragglerSection {
    fn default() -> Self {
        Self { mode: StragglerMode::RowLevel, s: zero() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Swept axis for `converge`; inferred from which list has several values.
    #[serde(default)]
    pub axis: Option<SweepAxis>,
    /// Success level defining the phase boundary.
    #[serde(default = "default_level")]
    pub level: f64,
    /// Cone directions sampled for the geometry estimates.
    #[serde(default = "default_directions")]
    pub directions: usize,
    #[serde(default = "default_width_draws")]
    pub width_draws: usize,
}

fn default_trials() -> usize {
    20
}

fn default_threshold() -> f64 {
    1e-3
}

fn default_eta() -> f64 {
    2.0
}

fn default_level() -> f64 {
    0.5
}

fn default_directions() -> usize {
    2000
}

fn default_width_draws() -> usize {
    1000
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            threshold: default_threshold(),
            eta: default_eta(),
            axis: None,
            level: default_level(),
            directions: default_directions(),
            width_draws: default_width_draws(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: default_dir() }
    }
}

fn one_or_many<'de, D: Deserializer<'de>>(deserializer: D) -> Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match Raw::deserialize(deserializer)? {
        Raw::One(v) => vec![v],
        Raw::Many(v) => v,
    })
}

/// How the `(m, s)` pairs of a subcommand are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairRule {
    /// Every `(m, s)` combination must satisfy `m > s`.
    All,
    /// Combinations with `m ≤ s` are skipped; at least one must remain.
    Any,
}

impl ConfigFile {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let mut config: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.fill_defaults();
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn fill_defaults(&mut self) {
        self.optimizer.step.get_or_insert(StepSize::default_for(self.encoder.kind));
        self.optimizer.stride.get_or_insert(self.optimizer.iters);
        if self.experiment.axis.is_none() {
            self.experiment.axis = Some(if self.encoder.m.len() == 1 && self.stragglers.s.len() > 1 {
                SweepAxis::S
            } else {
                SweepAxis::M
            });
        }
    }

    /// Cross-field checks; every message names the offending keys.
    pub fn validate(&self, pairs: PairRule) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        let p = &self.problem;
        if p.n == 0 || p.d == 0 {
            return bad(format!("problem.n ({}) and problem.d ({}) must be positive", p.n, p.d));
        }
        if p.k == 0 || p.k > p.d {
            return bad(format!("problem.k ({}) must lie between 1 and problem.d ({})", p.k, p.d));
        }
        if !(p.noise_std >= 0.0) || !p.noise_std.is_finite() {
            return bad(format!("problem.noise_std ({}) must be finite and nonnegative", p.noise_std));
        }
        let m = &self.encoder.m;
        let s = &self.stragglers.s;
        if m.is_empty() || m.contains(&0) {
            return bad("encoder.m must list at least one positive load".into());
        }
        if s.is_empty() {
            return bad("stragglers.s must list at least one value".into());
        }
        match pairs {
            PairRule::All => {
                for &mi in m {
                    for &si in s {
                        if si >= mi {
                            return bad(format!("stragglers.s ({si}) must be smaller than encoder.m ({mi})"));
                        }
                    }
                }
            }
            PairRule::Any => {
                if !m.iter().any(|&mi| s.iter().any(|&si| si < mi)) {
                    return bad("no pair of encoder.m and stragglers.s values satisfies stragglers.s < encoder.m".into());
                }
            }
        }
        let min_m = *m.iter().min().expect("nonempty");
        if self.encoder.workers == 0 || self.encoder.workers > min_m {
            return bad(format!(
                "encoder.workers ({}) must lie between 1 and the smallest encoder.m ({min_m})",
                self.encoder.workers
            ));
        }
        match self.encoder.kind {
            EncoderKind::Identity if m.iter().any(|&mi| mi != p.n) => {
                return bad(format!("encoder.m must equal problem.n ({}) for the identity encoder", p.n));
            }
            EncoderKind::RandomizedDct if m.iter().any(|&mi| mi > p.n) => {
                return bad(format!("encoder.m must not exceed problem.n ({}) for the dct encoder", p.n));
            }
            _ => {}
        }
        if let Radius::Value(r) = self.regularizer.radius {
            if !(r > 0.0) || !r.is_finite() {
                return bad(format!("regularizer.radius ({r}) must be positive"));
            }
            if self.regularizer.kind == RegularizerKind::KSparse {
                return bad("regularizer.radius must be \"auto\" for ksparse".into());
            }
        }
        let o = &self.optimizer;
        if o.iters == 0 {
            return bad("optimizer.iters must be at least 1".into());
        }
        if o.stride == Some(0) {
            return bad("optimizer.stride must be at least 1".into());
        }
        if let Some(step) = o.step {
            let c = match step {
                StepSize::Constant(c) | StepSize::PerLoad(c) | StepSize::PerLoadRatio(c) => c,
            };
            if !(c > 0.0) || !c.is_finite() {
                return bad(format!("optimizer.step value ({c}) must be positive"));
            }
        }
        let e = &self.experiment;
        if e.trials == 0 {
            return bad("experiment.trials must be at least 1".into());
        }
        if !(e.threshold > 0.0) {
            return bad(format!("experiment.threshold ({}) must be positive", e.threshold));
        }
        if !(e.eta >= 0.0) || !e.eta.is_finite() {
            return bad(format!("experiment.eta ({}) must be finite and nonnegative", e.eta));
        }
        if !(e.level > 0.0 && e.level <= 1.0) {
            return bad(format!("experiment.level ({}) must lie in (0, 1]", e.level));
        }
        if e.directions == 0 || e.width_draws == 0 {
            return bad("experiment.directions and experiment.width_draws must be positive".into());
        }
        Ok(())
    }

    pub fn experiment_config(&self) -> ExperimentConfig {
        let p = &self.problem;
        let problem = ProblemConfig { n: p.n, d: p.d, k: p.k, noise_std: p.noise_std, scaling: p.scaling };
        let mut c = ExperimentConfig::new(problem, self.encoder.kind, self.encoder.m.clone(), self.stragglers.s.clone());
        c.regularizer = self.regularizer.kind;
        c.radius = match self.regularizer.radius {
            Radius::Auto => None,
            Radius::Value(r) => Some(r),
        };
        c.step = self.optimizer.step.unwrap_or(StepSize::default_for(self.encoder.kind));
        c.step_mode = self.optimizer.step_mode;
        c.straggler_mode = self.stragglers.mode;
        c.workers = self.encoder.workers;
        c.iters = self.optimizer.iters;
        c.stride = self.optimizer.stride.unwrap_or(self.optimizer.iters);
        c.threshold = self.experiment.threshold;
        c.trials = self.experiment.trials;
        c.base_seed = self.experiment.seed;
        c
    }

    /// First 12 hex digits of the SHA-256 of the canonical JSON, excluding the output section.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        let canonical = serde_json::to_string(&value).expect("value serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().take(6).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"problem": {"n": 30, "d": 40, "k": 3}, "encoder": {"kind": "gaussian", "m": 20}}"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = ConfigFile::from_json(MINIMAL).unwrap();
        assert_eq!(c.optimizer.iters, 500);
        assert_eq!(c.optimizer.stride, Some(500));
        assert_eq!(c.experiment.threshold, 1e-3);
        assert_eq!(c.experiment.trials, 20);
        assert_eq!(c.experiment.eta, 2.0);
        assert_eq!(c.optimizer.step, Some(StepSize::PerLoad(0.2)));
        assert_eq!(c.problem.scaling, DesignScaling::Normalized);
        assert_eq!(c.stragglers.s, vec![0]);
        c.validate(PairRule::All).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = MINIMAL.replace("\"k\": 3", "\"k\": 3, \"sparsity\": 3");
        let err = ConfigFile::from_json(&text).unwrap_err().to_string();
        assert!(err.contains("sparsity"), "{err}");
    }

    #[test]
    fn round_trip_is_identical() {
        let c = ConfigFile::from_json(MINIMAL).unwrap();
        let again = ConfigFile::from_json(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, again);
        assert_eq!(c.fingerprint(), again.fingerprint());
    }

    #[test]
    fn fingerprint_ignores_output_dir() {
        let a = ConfigFile::from_json(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output.dir = PathBuf::from("elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.experiment.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(a.fingerprint().len(), 12);
    }

    #[test]
    fn radius_accepts_auto_or_number() {
        let text = MINIMAL.replace("}}", "}, \"regularizer\": {\"kind\": \"l2\", \"radius\": 1.5}}");
        let c = ConfigFile::from_json(&text).unwrap();
        assert_eq!(c.regularizer.radius, Radius::Value(1.5));
        let text = MINIMAL.replace("}}", "}, \"regularizer\": {\"radius\": \"big\"}}");
        assert!(ConfigFile::from_json(&text).is_err());
    }

    #[test]
    fn cross_field_errors_name_keys() {
        let text = MINIMAL.replace("\"m\": 20", "\"m\": 20, \"workers\": 30");
        let err = ConfigFile::from_json(&text).unwrap().validate(PairRule::All).unwrap_err().to_string();
        assert!(err.contains("encoder.workers") && err.contains("encoder.m"), "{err}");
        let text = MINIMAL.replace("\"k\": 3", "\"k\": 41");
        let err = ConfigFile::from_json(&text).unwrap().validate(PairRule::All).unwrap_err().to_string();
        assert!(err.contains("problem.k") && err.contains("problem.d"), "{err}");
    }

    #[test]
    fn pair_rules() {
        let text = MINIMAL.replace("\"m\": 20}", "\"m\": [10, 40]}, \"stragglers\": {\"s\": [0, 20]}");
        let c = ConfigFile::from_json(&text).unwrap();
        assert!(c.validate(PairRule::All).is_err());
        assert!(c.validate(PairRule::Any).is_ok());
    }
}
