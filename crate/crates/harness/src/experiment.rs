//! Running an algorithm × seed grid and writing its trace files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use spider_em::algorithms::{
    epoch_accounting, hybrid_warm_start, Algorithm, AlgorithmKind, Hook, LoopLengths, NestedConfig, RandomSources,
    RunOptions, RunStatus, RunTrace, WarmStart,
};
use spider_em::data::{
    gen_multivariate_mixture, gen_scalar_mixture, load_dataset, pca_apply, pca_fit, remove_constant_features,
    FileFormat, RawDataset, ScalarMixtureSpec,
};
use spider_em::gmm::{initial_statistic, GaussianMixture, InitStrategy, ScalarTwoGmm, ScalarTwoParam};
use spider_em::{Dataset, MinibatchSampler, Model, OracleCounts, StatVector};

use crate::config::{takes_warm_start, DataSpec, ExperimentConfig, ModelSpec};
use crate::error::{config_error, HarnessError, Result};
use crate::trace_csv::write_trace;

/// XOR-ed into a run seed to derive FIEM's second minibatch stream.
pub const SECOND_STREAM_KEY: u64 = 0x9E37_79B9_7F4A_7C15;
/// XOR-ed into a run seed to derive the SPIDER-EM-PL loop-length stream.
pub const LOOP_LENGTH_KEY: u64 = 0xD1B5_4A32_D192_ED03;

pub const SEED_OFFSET_VAR: &str = "EM_SEED_OFFSET";

/// Reads `EM_SEED_OFFSET`; unset means 0.
pub fn seed_offset_from_env() -> Result<u64> {
    match std::env::var(SEED_OFFSET_VAR) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| config_error(SEED_OFFSET_VAR, format!("'{v}' is not a non-negative integer"))),
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Settings {
    /// Added to every seed in the config.
    pub seed_offset: u64,
    /// Concurrent runs; each run is single-threaded.
    pub jobs: usize,
}

impl Default for Settings {
    fn default() -> Self {
        Settings { seed_offset: 0, jobs: 1 }
    }
}

#[derive(Clone, Debug)]
pub enum LoadedModel {
    Scalar(ScalarTwoGmm),
    Gmm(GaussianMixture),
}

/// Data, model and initial statistic shared by every run of a config.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub data: Dataset,
    pub provenance: String,
    pub model: LoadedModel,
    pub s_init: StatVector,
}

pub fn load_raw(spec: &DataSpec, seed_offset: u64) -> Result<RawDataset> {
    Ok(match spec {
        DataSpec::Scalar {
            n,
            weights,
            means,
            variance,
            seed,
        } => {
            let mix = ScalarMixtureSpec {
                weights: *weights,
                means: *means,
                variance: *variance,
            };
            gen_scalar_mixture(*n, &mix, seed.wrapping_add(seed_offset))?
        }
        DataSpec::Mixture {
            n,
            components,
            dim,
            separation,
            seed,
        } => gen_multivariate_mixture(*n, *components, *dim, *separation, seed.wrapping_add(seed_offset))?,
        DataSpec::File { path, format } => {
            let format: FileFormat = format.parse()?;
            load_dataset(path, format)?
        }
    })
}

pub fn prepare(cfg: &ExperimentConfig, seed_offset: u64) -> Result<Prepared> {
    let mut raw = load_raw(&cfg.data, seed_offset)?;
    if cfg.preprocess.drop_constant {
        raw = remove_constant_features(&raw)?.0;
    }
    if let Some(d_pc) = cfg.preprocess.pca {
        if d_pc > raw.dim() {
            return Err(config_error(
                "preprocess.pca",
                format!("{d_pc} components requested from {} features", raw.dim()),
            ));
        }
        let t = pca_fit(&raw, d_pc)?;
        raw = pca_apply(&t, &raw)?;
    }
    let provenance = raw.provenance.clone();
    let data = raw.into_dataset()?;
    let (model, s_init) = match &cfg.model {
        ModelSpec::Scalar2 { weights, variance } => {
            if data.dim() != 1 {
                return Err(config_error("model.kind", format!("scalar2 needs 1-d data, got {}", data.dim())));
            }
            let model = ScalarTwoGmm::new(*weights, *variance)?;
            let s = model.initial_statistic(&data, &ScalarTwoParam { means: cfg.init.means });
            (LoadedModel::Scalar(model), s)
        }
        ModelSpec::Gmm { components, dim } => {
            if let Some(p) = dim {
                if *p != data.dim() {
                    return Err(config_error("model.dim", format!("{p} does not match the data ({})", data.dim())));
                }
            }
            if data.n() < *components {
                return Err(config_error("model.components", format!("{components} components for {} rows", data.n())));
            }
            let model = GaussianMixture::new(*components, data.dim())?;
            let strategy = match cfg.init.strategy.as_str() {
                "kmeans" => InitStrategy::KMeans,
                _ => InitStrategy::RandomResponsibilities,
            };
            let s = initial_statistic(&model, &data, strategy, cfg.init.seed.wrapping_add(seed_offset))?;
            (LoadedModel::Gmm(model), s)
        }
    };
    Ok(Prepared {
        data,
        provenance,
        model,
        s_init,
    })
}

/// Loop lengths of `kind` on a dataset of `n` rows, and its warm start.
///
/// Lengths given explicitly in the config win. Otherwise an epoch budget `E`
/// (of which `w` warm-start epochs) gives `k_max = E` for EM,
/// `⌈E·n/b⌉` for Online EM and iEM, `⌈(E − w)·n/b⌉` for FIEM, and for the
/// nested-loop algorithms `k_in = ⌈n/b⌉ + 1` (one epoch of minibatches) with
/// `k_out = ⌊(E − w)/2⌋`, each outer loop costing two epochs.
pub fn plan(cfg: &ExperimentConfig, kind: AlgorithmKind, n: usize) -> Result<(Algorithm, WarmStart)> {
    let run = &cfg.run;
    let b = run.batch_size.unwrap_or(1) as u64;
    let n = n as u64;
    let warm_epochs = if takes_warm_start(kind) { run.warm_start_epochs } else { 0 };
    let budget = run.epochs.map(|e| e - warm_epochs);
    let schedule = cfg.step_for(kind);
    let flat_k = |per_epoch: u64| -> Result<u64> {
        match (run.k_max, budget) {
            (Some(k), _) => Ok(k),
            (None, Some(e)) => Ok((e * per_epoch).div_ceil(b)),
            (None, None) => Err(config_error("run.k_max", "give k_max or epochs")),
        }
    };
    let nested = || -> Result<NestedConfig> {
        let k_in = run.k_in.unwrap_or(n.div_ceil(b) + 1);
        let k_out = match (run.k_out, budget) {
            (Some(k), _) => k,
            (None, Some(e)) => (e / 2).max(1),
            (None, None) => return Err(config_error("run.k_out", "give k_out or epochs")),
        };
        let mut c = NestedConfig::new(k_out, k_in, schedule.clone().expect("validated"));
        c.outer = run.outer_step.as_ref().map(|s| s.schedule());
        Ok(c)
    };
    let alg = match kind {
        AlgorithmKind::Em => Algorithm::Em {
            k_max: match (run.k_max, run.epochs) {
                (Some(k), _) => k,
                (None, Some(e)) => e,
                (None, None) => return Err(config_error("run.k_max", "give k_max or epochs")),
            },
        },
        AlgorithmKind::OnlineEm => Algorithm::OnlineEm {
            k_max: flat_k(n)?,
            schedule: schedule.clone().expect("validated"),
        },
        AlgorithmKind::Iem => Algorithm::Iem {
            k_max: flat_k(n)?,
            schedule: schedule.clone().expect("validated"),
        },
        AlgorithmKind::Fiem => Algorithm::Fiem {
            k_max: flat_k(n)?,
            schedule: schedule.clone().expect("validated"),
        },
        AlgorithmKind::SemVr => Algorithm::SemVr(nested()?),
        AlgorithmKind::SpiderEm => Algorithm::SpiderEm(nested()?),
        AlgorithmKind::SpiderEmCv => Algorithm::SpiderEmCv(nested()?),
        AlgorithmKind::SpiderEmPl => Algorithm::SpiderEmPl(nested()?),
    };
    let warm = WarmStart {
        epochs: warm_epochs,
        schedule: run
            .warm_step
            .as_ref()
            .map(|s| s.schedule())
            .or_else(|| cfg.step_for(AlgorithmKind::OnlineEm))
            .or_else(|| schedule.clone())
            .unwrap_or(spider_em::algorithms::StepSchedule::Constant(1.0)),
    };
    alg.validate()
        .map_err(|e| config_error("run", format!("{kind}: {e}")))?;
    Ok((alg, warm))
}

/// The random streams of one run. Every algorithm draws its minibatches from
/// the stream seeded by `seed`, so runs sharing a seed see the same batches;
/// FIEM's second stream and the PL loop lengths use derived seeds.
pub fn sources_for(cfg: &ExperimentConfig, kind: AlgorithmKind, seed: u64) -> Result<RandomSources> {
    let b = cfg.run.batch_size.unwrap_or(1);
    let mode = cfg.sampling();
    let mut sources = RandomSources::new(MinibatchSampler::new(seed, mode, b)?);
    if kind == AlgorithmKind::Fiem {
        sources = sources.with_second(MinibatchSampler::new(seed ^ SECOND_STREAM_KEY, mode, b)?);
    }
    if kind == AlgorithmKind::SpiderEmPl {
        sources = sources.with_loop_lengths(LoopLengths::Uniform(ChaCha8Rng::seed_from_u64(seed ^ LOOP_LENGTH_KEY)));
    }
    Ok(sources)
}

/// Runs `kind` with run seed `seed` (offset already applied).
pub fn run_single<'h>(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    kind: AlgorithmKind,
    seed: u64,
    hook: Option<Hook<'h>>,
) -> Result<RunTrace> {
    let (alg, warm) = plan(cfg, kind, prep.data.n())?;
    let mut sources = sources_for(cfg, kind, seed)?;
    let mut opts = RunOptions::default().with_cadence(cfg.cadence());
    opts.target_h_sq = cfg.run.epsilon;
    opts.hook = hook;
    if let Some(cap) = cfg.run.store_cap_bytes {
        opts.store_cap_bytes = cap;
    }
    let trace = match &prep.model {
        LoadedModel::Scalar(m) => hybrid_warm_start(m, &prep.data, &prep.s_init, &warm, &alg, &mut sources, opts)?,
        LoadedModel::Gmm(m) => hybrid_warm_start(m, &prep.data, &prep.s_init, &warm, &alg, &mut sources, opts)?,
    };
    Ok(trace)
}

pub fn stat_dim(model: &LoadedModel) -> usize {
    match model {
        LoadedModel::Scalar(m) => m.stat_dim(),
        LoadedModel::Gmm(m) => m.stat_dim(),
    }
}

/// Counters a completed run must end with, from the per-epoch costs of each
/// phase. `None` when the run does not consist of whole epochs.
pub fn expected_counts(trace: &RunTrace, kind: AlgorithmKind, b: u64) -> Option<OracleCounts> {
    if trace.status != RunStatus::Completed || kind == AlgorithmKind::SpiderEmPl {
        return None;
    }
    let n = trace.n;
    // Phase boundaries fall on epoch boundaries only when b divides n.
    if (kind != AlgorithmKind::Em && !n.is_multiple_of(b)) || !trace.examples.is_multiple_of(n) {
        return None;
    }
    let mut total = OracleCounts::default();
    for (i, phase) in trace.phases.iter().enumerate() {
        let end = trace.phases.get(i + 1).map_or(trace.epochs(), |p| p.start_epoch);
        let phase_kind: AlgorithmKind = phase.name.parse().ok()?;
        let k_in = trace.layout.map(|l| l.k_in).filter(|_| phase_kind.is_nested());
        let acc = epoch_accounting(phase_kind, n, b, k_in).ok()?;
        total = total + acc.total(end - phase.start_epoch);
    }
    Some(total)
}

/// One finished run of the grid.
#[derive(Debug)]
pub struct RunRecord {
    pub kind: AlgorithmKind,
    pub seed: u64,
    pub trace: RunTrace,
    pub path: PathBuf,
    /// `Some(true)` when the terminal counters match the epoch accounting.
    pub accounting_ok: Option<bool>,
}

#[derive(Debug)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub records: Vec<RunRecord>,
}

impl ExperimentOutput {
    pub fn divergence_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        let diverged = self.records.iter().filter(|r| r.trace.diverged()).count();
        diverged as f64 / self.records.len() as f64
    }

    pub fn traces_of(&self, kind: AlgorithmKind) -> Vec<&Path> {
        self.records
            .iter()
            .filter(|r| r.kind == kind)
            .map(|r| r.path.as_path())
            .collect()
    }
}

pub fn trace_file_name(kind: AlgorithmKind, seed: u64) -> String {
    format!("trace_{}_{seed}.csv", kind.as_str())
}

/// Builds per-run hooks, e.g. to inspect every iterate.
pub type HookFactory<'f> = dyn Fn(AlgorithmKind, u64) -> Option<Hook<'static>> + Sync + 'f;

pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path, settings: Settings) -> Result<ExperimentOutput> {
    run_experiment_with(cfg, out_dir, settings, None)
}

/// Runs every (algorithm, seed) pair of `cfg`, writing `manifest.txt`,
/// `config.toml`, one `trace_<algo>_<seed>.csv` per run and `summary.csv`.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    settings: Settings,
    hooks: Option<&HookFactory<'_>>,
) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let prep = prepare(cfg, settings.seed_offset)?;
    for kind in cfg.algorithms() {
        plan(cfg, kind, prep.data.n())?;
    }
    fs::create_dir_all(out_dir)?;
    let tasks: Vec<(AlgorithmKind, u64)> = cfg
        .algorithms()
        .into_iter()
        .flat_map(|k| cfg.seeds().into_iter().map(move |s| (k, s)))
        .collect();
    let b = cfg.run.batch_size.unwrap_or(1) as u64;
    let work = |&(kind, seed): &(AlgorithmKind, u64)| -> Result<RunRecord> {
        let run_seed = seed.wrapping_add(settings.seed_offset);
        let hook = hooks.and_then(|f| f(kind, run_seed));
        let trace = run_single(cfg, &prep, kind, run_seed, hook)?;
        let path = out_dir.join(trace_file_name(kind, seed));
        write_trace(&path, &trace)?;
        let accounting_ok = expected_counts(&trace, kind, b).map(|c| c == trace.counts);
        Ok(RunRecord {
            kind,
            seed,
            trace,
            path,
            accounting_ok,
        })
    };
    let records = in_pool(settings.jobs, || tasks.par_iter().map(work).collect::<Result<Vec<_>>>())??;
    write_summary(&out_dir.join("summary.csv"), &records)?;
    fs::write(out_dir.join("config.toml"), cfg.canonical())?;
    fs::write(out_dir.join("manifest.txt"), manifest(cfg, &prep, settings, &records))?;
    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        records,
    })
}

/// Runs `f` on a pool of `jobs` threads.
pub fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Input(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn manifest(cfg: &ExperimentConfig, prep: &Prepared, settings: Settings, records: &[RunRecord]) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "name = {}", cfg.name);
    let _ = writeln!(m, "config_sha256 = {}", cfg.hash());
    let _ = writeln!(m, "library = spider-em {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "seed_offset = {}", settings.seed_offset);
    let _ = writeln!(m, "data = {}", prep.provenance);
    let _ = writeln!(m, "n = {}", prep.data.n());
    let _ = writeln!(m, "dim = {}", prep.data.dim());
    let _ = writeln!(m, "stat_dim = {}", stat_dim(&prep.model));
    let _ = writeln!(m, "runs = {}", records.len());
    for r in records {
        let phases: Vec<String> = r
            .trace
            .phases
            .iter()
            .map(|p| format!("{}@epoch{}/tau{}", p.name, p.start_epoch, p.start_tau))
            .collect();
        let _ = writeln!(
            m,
            "run {} seed {} status {} phases {}",
            r.kind,
            r.seed,
            r.trace.status.as_str(),
            phases.join(",")
        );
    }
    m
}

fn write_summary(path: &Path, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "algorithm",
        "seed",
        "status",
        "epochs",
        "tau",
        "ce_count",
        "mstep_count",
        "final_W",
        "final_h_sq_norm",
        "accounting",
        "reason",
    ])?;
    for r in records {
        let t = &r.trace;
        let reason = match &t.status {
            RunStatus::Diverged { reason, .. } => reason.clone(),
            _ => String::new(),
        };
        w.write_record([
            r.kind.as_str().to_string(),
            r.seed.to_string(),
            t.status.as_str().to_string(),
            t.epochs().to_string(),
            t.tau.to_string(),
            t.counts.ce.to_string(),
            t.counts.m_steps.to_string(),
            crate::trace_csv::fmt_opt(t.last_objective()),
            crate::trace_csv::fmt_opt(t.last_h_sq()),
            match r.accounting_ok {
                Some(true) => "ok",
                Some(false) => "mismatch",
                None => "n/a",
            }
            .to_string(),
            reason,
        ])?;
    }
    w.flush()?;
    Ok(())
}
