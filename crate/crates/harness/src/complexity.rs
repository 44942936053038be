//! First-hitting-time complexity on the scalar two-component mixture.

use std::path::Path;

use rayon::prelude::*;
use spider_em::algorithms::{
    run, Algorithm, AlgorithmKind, Cadence, LoopLengths, NestedConfig, RandomSources, RunOptions, RunStatus,
    StepSchedule,
};
use spider_em::data::{gen_scalar_mixture, ScalarMixtureSpec};
use spider_em::gmm::{ScalarTwoGmm, ScalarTwoParam};
use spider_em::{MinibatchSampler, SamplingMode};

use crate::error::{config_error, Result};
use crate::experiment::{in_pool, LOOP_LENGTH_KEY, SECOND_STREAM_KEY};
use crate::trace_csv::fmt_f64;

/// Trial `r` uses data seed `DATA_SEED_BASE + r` and minibatch seed `r`.
pub const DATA_SEED_BASE: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BatchRule {
    /// `b = ⌈√n / 20⌉`.
    SqrtOver20,
    Fixed(usize),
}

impl BatchRule {
    pub fn batch_size(self, n: usize) -> usize {
        match self {
            BatchRule::SqrtOver20 => ((n as f64).sqrt() / 20.0).ceil().max(1.0) as usize,
            BatchRule::Fixed(b) => b,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityConfig {
    pub algorithm: AlgorithmKind,
    pub mixture: ScalarMixtureSpec,
    /// Starting means; the starting statistic is `s̄(θ_init)`.
    pub init_means: [f64; 2],
    pub batch: BatchRule,
    /// Inner-loop length; `None` gives `⌈n/b⌉`.
    pub k_in: Option<u64>,
    pub step: StepSchedule,
    pub sampling: SamplingMode,
    /// Trials stop after this many epochs without hitting.
    pub cap_epochs: u64,
    /// When `‖h‖²` is checked.
    pub cadence: Cadence,
    pub seed_offset: u64,
    pub jobs: usize,
}

impl Default for ComplexityConfig {
    fn default() -> Self {
        ComplexityConfig {
            algorithm: AlgorithmKind::SpiderEm,
            mixture: ScalarMixtureSpec::default(),
            init_means: [1.0, -1.0],
            batch: BatchRule::SqrtOver20,
            k_in: None,
            step: StepSchedule::Constant(0.01),
            sampling: SamplingMode::WithReplacement,
            cap_epochs: 500,
            cadence: Cadence::EveryIterate,
            seed_offset: 0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrialResult {
    pub trial: u64,
    pub hit: bool,
    /// Updates until the first hit (or until the cap).
    pub tau: u64,
    /// Outer loops completed at that point, for nested-loop algorithms.
    pub t: u64,
    /// `K_Opt`: M-step parameter updates, equal to `tau`.
    pub k_opt: u64,
    /// `K_CE − n`: conditional expectations, initial pass excluded.
    pub k_ce: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityRecord {
    pub n: usize,
    pub b: usize,
    pub k_in: Option<u64>,
    pub trials: usize,
    pub hits: usize,
    pub hit_rate: f64,
    /// Medians over hitting trials only.
    pub median_k_opt: Option<f64>,
    pub median_k_ce: Option<f64>,
    pub raw: Vec<TrialResult>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexityEstimate {
    pub algorithm: AlgorithmKind,
    pub epsilon: f64,
    pub records: Vec<ComplexityRecord>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 || points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let k = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / k;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

impl ComplexityEstimate {
    /// Slope of `ln median(K_CE − n)` against `ln n`.
    pub fn k_ce_slope(&self) -> Option<f64> {
        let pts: Option<Vec<(f64, f64)>> = self
            .records
            .iter()
            .map(|r| r.median_k_ce.map(|c| (r.n as f64, c)))
            .collect();
        log_log_slope(&pts?)
    }

    /// Largest over smallest median `K_Opt` across the grid.
    pub fn k_opt_spread(&self) -> Option<f64> {
        let meds: Option<Vec<f64>> = self.records.iter().map(|r| r.median_k_opt).collect();
        let meds = meds?;
        let hi = meds.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = meds.iter().copied().fold(f64::INFINITY, f64::min);
        (lo > 0.0).then(|| hi / lo)
    }

    pub fn write_csv(&self, summary: &Path, trials: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(summary)?;
        w.write_record([
            "algorithm",
            "epsilon",
            "n",
            "b",
            "k_in",
            "trials",
            "hits",
            "hit_rate",
            "median_k_opt",
            "median_k_ce",
        ])?;
        for r in &self.records {
            w.write_record([
                self.algorithm.as_str().to_string(),
                fmt_f64(self.epsilon),
                r.n.to_string(),
                r.b.to_string(),
                r.k_in.map(|k| k.to_string()).unwrap_or_default(),
                r.trials.to_string(),
                r.hits.to_string(),
                fmt_f64(r.hit_rate),
                r.median_k_opt.map(fmt_f64).unwrap_or_default(),
                r.median_k_ce.map(fmt_f64).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(trials)?;
        w.write_record(["n", "trial", "hit", "tau", "t", "k_opt", "k_ce"])?;
        for r in &self.records {
            for t in &r.raw {
                w.write_record([
                    r.n.to_string(),
                    t.trial.to_string(),
                    t.hit.to_string(),
                    t.tau.to_string(),
                    t.t.to_string(),
                    t.k_opt.to_string(),
                    t.k_ce.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// The algorithm capped at `cap_epochs` epochs of selected examples.
fn capped_algorithm(cfg: &ComplexityConfig, n: u64, b: u64, k_in: u64) -> Algorithm {
    let cap_examples = cfg.cap_epochs * n;
    let flat = cap_examples.div_ceil(b);
    let nested = || {
        // Each outer loop selects (k_in − 1)·b examples plus a refresh of n.
        let per_outer = (k_in - 1) * b + n;
        NestedConfig::new(cap_examples.div_ceil(per_outer), k_in, cfg.step.clone())
    };
    match cfg.algorithm {
        AlgorithmKind::Em => Algorithm::Em { k_max: cfg.cap_epochs },
        AlgorithmKind::OnlineEm => Algorithm::OnlineEm {
            k_max: flat,
            schedule: cfg.step.clone(),
        },
        AlgorithmKind::Iem => Algorithm::Iem {
            k_max: flat,
            schedule: cfg.step.clone(),
        },
        AlgorithmKind::Fiem => Algorithm::Fiem {
            k_max: flat,
            schedule: cfg.step.clone(),
        },
        AlgorithmKind::SemVr => Algorithm::SemVr(nested()),
        AlgorithmKind::SpiderEm => Algorithm::SpiderEm(nested()),
        AlgorithmKind::SpiderEmCv => Algorithm::SpiderEmCv(nested()),
        AlgorithmKind::SpiderEmPl => Algorithm::SpiderEmPl(nested()),
    }
}

fn run_trial(cfg: &ComplexityConfig, n: usize, epsilon: f64, trial: u64) -> Result<TrialResult> {
    let b = cfg.batch.batch_size(n);
    let k_in = cfg.k_in.unwrap_or(n.div_ceil(b) as u64).max(2);
    let raw = gen_scalar_mixture(n, &cfg.mixture, DATA_SEED_BASE + trial + cfg.seed_offset)?;
    let data = raw.into_dataset()?;
    let model = ScalarTwoGmm::new(cfg.mixture.weights, cfg.mixture.variance)?;
    let s_init = model.initial_statistic(&data, &ScalarTwoParam { means: cfg.init_means });
    let alg = capped_algorithm(cfg, n as u64, b as u64, k_in);
    let seed = trial + cfg.seed_offset;
    let mut sources = RandomSources::new(MinibatchSampler::new(seed, cfg.sampling, b)?);
    if cfg.algorithm == AlgorithmKind::Fiem {
        sources = sources.with_second(MinibatchSampler::new(seed ^ SECOND_STREAM_KEY, cfg.sampling, b)?);
    }
    if cfg.algorithm == AlgorithmKind::SpiderEmPl {
        use rand::SeedableRng;
        let rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ LOOP_LENGTH_KEY);
        sources = sources.with_loop_lengths(LoopLengths::Uniform(rng));
    }
    let opts = RunOptions {
        cadence: cfg.cadence,
        objective: false,
        ..Default::default()
    }
    .with_target(epsilon);
    let trace = run(&model, &data, &s_init, &alg, &mut sources, opts)?;
    let tau = trace.tau;
    let (n, b) = (n as u64, b as u64);
    let (t, k_ce) = match cfg.algorithm {
        AlgorithmKind::SemVr | AlgorithmKind::SpiderEm | AlgorithmKind::SpiderEmCv => {
            let t = tau / k_in;
            (t, n * t + 2 * b * tau)
        }
        _ => (0, trace.counts.ce - n),
    };
    Ok(TrialResult {
        trial,
        hit: trace.status == RunStatus::HitTarget,
        tau,
        t,
        k_opt: tau,
        k_ce,
    })
}

/// Runs `trials` independent trials at each `n`, each until `‖h‖² ≤ ε` or
/// the epoch cap.
///
/// `K_CE − n` is `n·t + 2b·τ` for sEM-vr, SPIDER-EM and SPIDER-EM-cv, `t`
/// being the number of completed outer loops; for the other algorithms it
/// is the conditional-expectation counter at the hit, less the initial pass.
pub fn estimate_complexity(
    cfg: &ComplexityConfig,
    epsilon: f64,
    n_grid: &[usize],
    trials: usize,
) -> Result<ComplexityEstimate> {
    if !(epsilon > 0.0) {
        return Err(config_error("epsilon", "must be positive"));
    }
    if trials == 0 {
        return Err(config_error("trials", "must be at least 1"));
    }
    if n_grid.is_empty() || n_grid.contains(&0) {
        return Err(config_error("n", "give at least one positive sample size"));
    }
    if cfg.cap_epochs == 0 {
        return Err(config_error("cap_epochs", "must be positive"));
    }
    cfg.mixture.validate()?;
    let tasks: Vec<(usize, u64)> = n_grid
        .iter()
        .flat_map(|&n| (0..trials as u64).map(move |t| (n, t)))
        .collect();
    let results = in_pool(cfg.jobs, || {
        tasks
            .par_iter()
            .map(|&(n, t)| run_trial(cfg, n, epsilon, t))
            .collect::<Result<Vec<_>>>()
    })??;
    let records = n_grid
        .iter()
        .enumerate()
        .map(|(gi, &n)| {
            let raw: Vec<TrialResult> = results[gi * trials..(gi + 1) * trials].to_vec();
            let hits: Vec<&TrialResult> = raw.iter().filter(|t| t.hit).collect();
            let b = cfg.batch.batch_size(n);
            ComplexityRecord {
                n,
                b,
                k_in: cfg
                    .algorithm
                    .is_nested()
                    .then(|| cfg.k_in.unwrap_or(n.div_ceil(b) as u64).max(2)),
                trials,
                hits: hits.len(),
                hit_rate: hits.len() as f64 / trials as f64,
                median_k_opt: median(&hits.iter().map(|t| t.k_opt as f64).collect::<Vec<_>>()),
                median_k_ce: median(&hits.iter().map(|t| t.k_ce as f64).collect::<Vec<_>>()),
                raw,
            }
        })
        .collect();
    Ok(ComplexityEstimate {
        algorithm: cfg.algorithm,
        epsilon,
        records,
    })
}
