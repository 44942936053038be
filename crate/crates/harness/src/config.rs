//! Experiment configuration files.
//!
//! A config is a TOML document with the tables `[model]`, `[data]`,
//! optional `[preprocess]` and `[init]`, and `[run]`. Parsing is strict:
//! unknown keys are rejected, and [`ExperimentConfig::validate`] reports the
//! first inconsistent field by its dotted path.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spider_em::algorithms::{AlgorithmKind, Cadence, StepSchedule};
use spider_em::data::FileFormat;
use spider_em::SamplingMode;

use crate::error::{config_error, HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    /// Where the trace files go; the `--out` flag takes precedence.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub model: ModelSpec,
    pub data: DataSpec,
    #[serde(default)]
    pub preprocess: PreprocessSpec,
    #[serde(default)]
    pub init: InitSpec,
    pub run: RunSpec,
}

fn default_name() -> String {
    "experiment".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Two scalar components with known weights and variance.
    Scalar2 {
        #[serde(default = "default_scalar_weights")]
        weights: [f64; 2],
        #[serde(default = "one")]
        variance: f64,
    },
    /// `components` Gaussians with a shared full covariance.
    Gmm {
        components: usize,
        /// Checked against the data when given.
        #[serde(default)]
        dim: Option<usize>,
    },
}

fn default_scalar_weights() -> [f64; 2] {
    [0.2, 0.8]
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSpec {
    Scalar {
        n: usize,
        #[serde(default = "default_scalar_weights")]
        weights: [f64; 2],
        #[serde(default = "default_scalar_means")]
        means: [f64; 2],
        #[serde(default = "one")]
        variance: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Equal-weight mixture with identity covariance.
    Mixture {
        n: usize,
        components: usize,
        dim: usize,
        separation: f64,
        #[serde(default)]
        seed: u64,
    },
    File {
        path: PathBuf,
        #[serde(default = "default_format")]
        format: String,
    },
}

fn default_scalar_means() -> [f64; 2] {
    [0.5, -0.5]
}

fn default_format() -> String {
    "csv".into()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSpec {
    #[serde(default)]
    pub drop_constant: bool,
    /// Keep this many principal components.
    #[serde(default)]
    pub pca: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSpec {
    /// `kmeans` or `random-responsibilities` for `gmm`; ignored for `scalar2`.
    #[serde(default = "default_strategy")]
    pub strategy: String,
    #[serde(default)]
    pub seed: u64,
    /// Initial means of the `scalar2` model.
    #[serde(default = "default_init_means")]
    pub means: [f64; 2],
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            strategy: default_strategy(),
            seed: 0,
            means: default_init_means(),
        }
    }
}

fn default_strategy() -> String {
    "kmeans".into()
}

fn default_init_means() -> [f64; 2] {
    [1.0, -1.0]
}

/// A step size: a bare number is a constant; otherwise
/// `{ inverse_sqrt = c }` or `{ table = [...] }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum StepSpec {
    Constant(f64),
    InverseSqrt { inverse_sqrt: f64 },
    Table { table: Vec<f64> },
}

impl StepSpec {
    pub fn schedule(&self) -> StepSchedule {
        match self {
            StepSpec::Constant(g) => StepSchedule::Constant(*g),
            StepSpec::InverseSqrt { inverse_sqrt } => StepSchedule::InverseSqrt(*inverse_sqrt),
            StepSpec::Table { table } => StepSchedule::Table(table.clone()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub algorithms: Vec<String>,
    #[serde(default)]
    pub batch_size: Option<usize>,
    /// Budget in epochs; loop lengths not given explicitly are derived from it.
    #[serde(default)]
    pub epochs: Option<u64>,
    #[serde(default)]
    pub k_max: Option<u64>,
    #[serde(default)]
    pub k_in: Option<u64>,
    #[serde(default)]
    pub k_out: Option<u64>,
    #[serde(default)]
    pub step: Option<StepSpec>,
    /// Damped outer step of the nested-loop algorithms.
    #[serde(default)]
    pub outer_step: Option<StepSpec>,
    /// Per-algorithm step overrides, keyed by algorithm name.
    #[serde(default)]
    pub steps: BTreeMap<String, StepSpec>,
    #[serde(default = "default_sampling")]
    pub sampling: String,
    #[serde(default)]
    pub seeds: Option<Vec<u64>>,
    /// Shorthand for `seeds = [0, 1, …, seed_count − 1]`.
    #[serde(default)]
    pub seed_count: Option<u64>,
    /// Online-EM epochs before FIEM, sEM-vr and the SPIDER variants.
    #[serde(default)]
    pub warm_start_epochs: u64,
    #[serde(default)]
    pub warm_step: Option<StepSpec>,
    /// Stop a run once a measured `‖h‖²` reaches this value.
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default = "default_cadence")]
    pub cadence: String,
    /// Fraction of diverged runs above which `run` exits with code 2.
    #[serde(default)]
    pub max_divergence_rate: f64,
    #[serde(default)]
    pub store_cap_bytes: Option<usize>,
}

fn default_sampling() -> String {
    "with-replacement".into()
}

fn default_cadence() -> String {
    "epoch".into()
}

pub fn parse_cadence(s: &str) -> Option<Cadence> {
    match s {
        "epoch" => Some(Cadence::EveryEpoch),
        "iterate" => Some(Cadence::EveryIterate),
        "never" => Some(Cadence::Never),
        _ => None,
    }
}

/// Whether `kind` runs after the Online-EM warm start.
pub fn takes_warm_start(kind: AlgorithmKind) -> bool {
    kind == AlgorithmKind::Fiem || kind.is_nested()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| HarnessError::Config {
            field: "<file>".into(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_error("<file>", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Canonical text: the parsed config serialised back, so formatting and
    /// comments in the source file do not affect the hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    pub fn algorithms(&self) -> Vec<AlgorithmKind> {
        self.run
            .algorithms
            .iter()
            .map(|a| a.parse().expect("validated"))
            .collect()
    }

    pub fn sampling(&self) -> SamplingMode {
        self.run.sampling.parse().expect("validated")
    }

    pub fn cadence(&self) -> Cadence {
        parse_cadence(&self.run.cadence).expect("validated")
    }

    pub fn seeds(&self) -> Vec<u64> {
        match (&self.run.seeds, self.run.seed_count) {
            (Some(s), _) => s.clone(),
            (None, Some(c)) => (0..c).collect(),
            (None, None) => vec![0],
        }
    }

    /// Step schedule for `kind`: the per-algorithm override, then `run.step`.
    pub fn step_for(&self, kind: AlgorithmKind) -> Option<StepSchedule> {
        self.run
            .steps
            .get(kind.as_str())
            .or(self.run.step.as_ref())
            .map(StepSpec::schedule)
    }

    pub fn validate(&self) -> Result<()> {
        match &self.model {
            ModelSpec::Scalar2 { weights, variance } => {
                if weights.iter().any(|w| !(*w > 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(config_error("model.weights", "must be positive and sum to 1"));
                }
                if !(*variance > 0.0) {
                    return Err(config_error("model.variance", "must be positive"));
                }
                if !matches!(self.data, DataSpec::Scalar { .. } | DataSpec::File { .. }) {
                    return Err(config_error("data.source", "scalar2 needs scalar or file data"));
                }
                if self.preprocess.pca.is_some() {
                    return Err(config_error("preprocess.pca", "not available for scalar2"));
                }
            }
            ModelSpec::Gmm { components, dim } => {
                if *components == 0 {
                    return Err(config_error("model.components", "must be at least 1"));
                }
                if dim == &Some(0) {
                    return Err(config_error("model.dim", "must be at least 1"));
                }
                if !["kmeans", "random-responsibilities"].contains(&self.init.strategy.as_str()) {
                    return Err(config_error(
                        "init.strategy",
                        format!("unknown '{}' (kmeans | random-responsibilities)", self.init.strategy),
                    ));
                }
                if let (DataSpec::Mixture { dim: d, .. }, Some(p), None) = (&self.data, dim, self.preprocess.pca) {
                    if d != p {
                        return Err(config_error("model.dim", format!("{p} does not match data.dim = {d}")));
                    }
                }
                if let (Some(p), Some(pc)) = (dim, self.preprocess.pca) {
                    if *p != pc {
                        return Err(config_error("model.dim", format!("{p} does not match preprocess.pca = {pc}")));
                    }
                }
            }
        }
        match &self.data {
            DataSpec::Scalar { n, weights, variance, .. } => {
                if *n == 0 {
                    return Err(config_error("data.n", "must be positive"));
                }
                if weights.iter().any(|w| !(*w > 0.0)) || (weights[0] + weights[1] - 1.0).abs() > 1e-12 {
                    return Err(config_error("data.weights", "must be positive and sum to 1"));
                }
                if !(*variance > 0.0) {
                    return Err(config_error("data.variance", "must be positive"));
                }
            }
            DataSpec::Mixture {
                n,
                components,
                dim,
                separation,
                ..
            } => {
                if *n == 0 {
                    return Err(config_error("data.n", "must be positive"));
                }
                if *components == 0 || *dim == 0 {
                    return Err(config_error("data.components", "components and dim must be positive"));
                }
                if !separation.is_finite() || *separation < 0.0 {
                    return Err(config_error("data.separation", "must be finite and non-negative"));
                }
            }
            DataSpec::File { format, .. } => {
                if format.parse::<FileFormat>().is_err() {
                    return Err(config_error("data.format", format!("unknown '{format}' (csv | csv-header | packed)")));
                }
            }
        }
        if self.preprocess.pca == Some(0) {
            return Err(config_error("preprocess.pca", "must be at least 1"));
        }
        self.validate_run()
    }

    fn validate_run(&self) -> Result<()> {
        let run = &self.run;
        if run.algorithms.is_empty() {
            return Err(config_error("run.algorithms", "list at least one algorithm"));
        }
        let mut kinds = Vec::new();
        for a in &run.algorithms {
            let kind: AlgorithmKind = a
                .parse()
                .map_err(|_| config_error("run.algorithms", format!("unknown algorithm '{a}'")))?;
            if kinds.contains(&kind) {
                return Err(config_error("run.algorithms", format!("'{a}' listed twice")));
            }
            kinds.push(kind);
        }
        let any_nested = kinds.iter().any(|k| k.is_nested());
        let any_flat = kinds.iter().any(|k| !k.is_nested());
        let any_minibatch = kinds.iter().any(|k| k.uses_minibatches());
        if (run.k_in.is_some() || run.k_out.is_some()) && !any_nested {
            return Err(config_error(
                "run.k_in",
                "k_in and k_out apply only to nested-loop algorithms (sem-vr, spider-em, spider-em-cv, spider-em-pl)",
            ));
        }
        if run.k_max.is_some() && !any_flat {
            return Err(config_error("run.k_max", "k_max applies only to em, online-em, iem and fiem"));
        }
        if run.k_in.is_some_and(|k| k < 2) {
            return Err(config_error("run.k_in", "must be at least 2"));
        }
        match run.batch_size {
            Some(0) => return Err(config_error("run.batch_size", "must be positive")),
            None if any_minibatch => {
                return Err(config_error("run.batch_size", "required by the minibatch algorithms"));
            }
            _ => {}
        }
        if run.epochs == Some(0) {
            return Err(config_error("run.epochs", "must be positive"));
        }
        if run.epochs.is_none() {
            if any_flat && run.k_max.is_none() {
                return Err(config_error("run.k_max", "give k_max or epochs"));
            }
            if any_nested && run.k_out.is_none() {
                return Err(config_error("run.k_out", "give k_out or epochs"));
            }
        }
        if let Some(e) = run.epochs {
            if kinds.iter().any(|k| takes_warm_start(*k)) && run.warm_start_epochs >= e {
                return Err(config_error("run.warm_start_epochs", format!("must be below run.epochs = {e}")));
            }
        }
        let check_step = |field: &str, spec: &StepSpec| -> Result<()> {
            spec.schedule()
                .validate()
                .map_err(|_| config_error(field, "step sizes must be finite and non-negative"))
        };
        if let Some(s) = &run.step {
            check_step("run.step", s)?;
        }
        if let Some(s) = &run.outer_step {
            check_step("run.outer_step", s)?;
        }
        if let Some(s) = &run.warm_step {
            check_step("run.warm_step", s)?;
        }
        for (name, spec) in &run.steps {
            let kind: AlgorithmKind = name
                .parse()
                .map_err(|_| config_error("run.steps", format!("unknown algorithm '{name}'")))?;
            check_step(&format!("run.steps.{name}"), spec)?;
            if !kinds.contains(&kind) {
                return Err(config_error("run.steps", format!("'{name}' is not in run.algorithms")));
            }
        }
        for kind in &kinds {
            if *kind != AlgorithmKind::Em && self.step_for(*kind).is_none() {
                return Err(config_error("run.step", format!("{kind} needs a step size")));
            }
        }
        if run.sampling.parse::<SamplingMode>().is_err() {
            return Err(config_error(
                "run.sampling",
                format!("unknown '{}' (with-replacement | without-replacement)", run.sampling),
            ));
        }
        if parse_cadence(&run.cadence).is_none() {
            return Err(config_error("run.cadence", format!("unknown '{}' (epoch | iterate | never)", run.cadence)));
        }
        match (&run.seeds, run.seed_count) {
            (Some(_), Some(_)) => return Err(config_error("run.seeds", "give seeds or seed_count, not both")),
            (Some(s), None) if s.is_empty() => return Err(config_error("run.seeds", "must not be empty")),
            (None, Some(0)) => return Err(config_error("run.seed_count", "must be positive")),
            _ => {}
        }
        if let Some(eps) = run.epsilon {
            if !(eps > 0.0) {
                return Err(config_error("run.epsilon", "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&run.max_divergence_rate) {
            return Err(config_error("run.max_divergence_rate", "must lie in [0, 1]"));
        }
        Ok(())
    }
}
