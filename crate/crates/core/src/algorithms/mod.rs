//! Expectation-space EM variants and their shared machinery.
//!
//! Every runner starts from a statistic `Ŝ_init` and returns a [`RunTrace`].
//! Configuration errors (bad loop lengths, oversized stores, inadmissible
//! starts) are reported as `Err`; failures during the iterations end the run
//! with [`RunStatus::Diverged`].

mod accounting;
mod runners;
mod schedule;
mod store;
mod trace;

use rand::Rng;

pub use accounting::{closed_form_counts, epoch_accounting, pl_counts, EpochAccounting, EpochCost};
pub use runners::{LoopLengths, NestedConfig};
pub use schedule::StepSchedule;
pub use store::PerSampleStatStore;
pub use trace::{
    Cadence, Checkpoint, Flow, Hook, IterateView, LoopLayout, PhaseMark, RunOptions, RunStatus, RunTrace, Snapshot,
    DEFAULT_STORE_CAP_BYTES,
};

use trace::{RunContext, Step};

use crate::dataset::Dataset;
use crate::error::{argument, Error, Result};
use crate::model::{check_shape, Model};
use crate::sampler::MinibatchSampler;
use crate::stat::StatVector;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AlgorithmKind {
    Em,
    OnlineEm,
    Iem,
    Fiem,
    SemVr,
    SpiderEm,
    SpiderEmCv,
    SpiderEmPl,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 8] = [
        AlgorithmKind::Em,
        AlgorithmKind::OnlineEm,
        AlgorithmKind::Iem,
        AlgorithmKind::Fiem,
        AlgorithmKind::SemVr,
        AlgorithmKind::SpiderEm,
        AlgorithmKind::SpiderEmCv,
        AlgorithmKind::SpiderEmPl,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmKind::Em => "em",
            AlgorithmKind::OnlineEm => "online-em",
            AlgorithmKind::Iem => "iem",
            AlgorithmKind::Fiem => "fiem",
            AlgorithmKind::SemVr => "sem-vr",
            AlgorithmKind::SpiderEm => "spider-em",
            AlgorithmKind::SpiderEmCv => "spider-em-cv",
            AlgorithmKind::SpiderEmPl => "spider-em-pl",
        }
    }

    pub fn is_nested(self) -> bool {
        matches!(
            self,
            AlgorithmKind::SemVr | AlgorithmKind::SpiderEm | AlgorithmKind::SpiderEmCv | AlgorithmKind::SpiderEmPl
        )
    }

    pub fn uses_minibatches(self) -> bool {
        self != AlgorithmKind::Em
    }
}

impl std::fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AlgorithmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        AlgorithmKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| argument(format!("unknown algorithm '{s}'")))
    }
}

/// An algorithm together with its loop lengths and step sizes.
#[derive(Clone, Debug, PartialEq)]
pub enum Algorithm {
    Em { k_max: u64 },
    OnlineEm { k_max: u64, schedule: StepSchedule },
    Iem { k_max: u64, schedule: StepSchedule },
    Fiem { k_max: u64, schedule: StepSchedule },
    SemVr(NestedConfig),
    SpiderEm(NestedConfig),
    SpiderEmCv(NestedConfig),
    SpiderEmPl(NestedConfig),
}

impl Algorithm {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            Algorithm::Em { .. } => AlgorithmKind::Em,
            Algorithm::OnlineEm { .. } => AlgorithmKind::OnlineEm,
            Algorithm::Iem { .. } => AlgorithmKind::Iem,
            Algorithm::Fiem { .. } => AlgorithmKind::Fiem,
            Algorithm::SemVr(_) => AlgorithmKind::SemVr,
            Algorithm::SpiderEm(_) => AlgorithmKind::SpiderEm,
            Algorithm::SpiderEmCv(_) => AlgorithmKind::SpiderEmCv,
            Algorithm::SpiderEmPl(_) => AlgorithmKind::SpiderEmPl,
        }
    }

    pub fn nested(&self) -> Option<&NestedConfig> {
        match self {
            Algorithm::SemVr(c) | Algorithm::SpiderEm(c) | Algorithm::SpiderEmCv(c) | Algorithm::SpiderEmPl(c) => Some(c),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Algorithm::Em { .. } => Ok(()),
            Algorithm::OnlineEm { schedule, .. } | Algorithm::Iem { schedule, .. } | Algorithm::Fiem { schedule, .. } => {
                schedule.validate()
            }
            Algorithm::SemVr(c) | Algorithm::SpiderEm(c) | Algorithm::SpiderEmCv(c) | Algorithm::SpiderEmPl(c) => {
                if c.k_in < 2 {
                    return Err(argument(format!("k_in must be at least 2, got {}", c.k_in)));
                }
                if matches!(self, Algorithm::SemVr(_)) {
                    c.schedule.validate()?;
                } else {
                    c.schedule.validate_positive()?;
                }
                if let Some(outer) = &c.outer {
                    outer.validate()?;
                }
                Ok(())
            }
        }
    }

    fn layout(&self) -> Option<LoopLayout> {
        match self {
            Algorithm::SemVr(c) | Algorithm::SpiderEm(c) | Algorithm::SpiderEmCv(c) => Some(LoopLayout {
                k_out: c.k_out,
                k_in: c.k_in,
            }),
            _ => None,
        }
    }
}

/// Random streams consumed by a run.
#[derive(Clone, Debug)]
pub struct RandomSources {
    /// The main minibatch stream.
    pub batches: MinibatchSampler,
    /// FIEM's second, independent stream `B'`.
    pub second: Option<MinibatchSampler>,
    /// Inner-loop lengths for SPIDER-EM-PL.
    pub loop_lengths: Option<LoopLengths>,
}

impl RandomSources {
    pub fn new(batches: MinibatchSampler) -> Self {
        RandomSources {
            batches,
            second: None,
            loop_lengths: None,
        }
    }

    pub fn with_second(mut self, second: MinibatchSampler) -> Self {
        self.second = Some(second);
        self
    }

    pub fn with_loop_lengths(mut self, lengths: LoopLengths) -> Self {
        self.loop_lengths = Some(lengths);
        self
    }
}

fn check_start<M: Model>(model: &M, data: &Dataset, s_init: &StatVector) -> Result<()> {
    check_shape(model, s_init)?;
    model.domain_check(data, s_init)?;
    Ok(())
}

fn check_sources(alg: &Algorithm, sources: &RandomSources, n: usize) -> Result<()> {
    let b = sources.batches.batch_size();
    if alg.kind().uses_minibatches()
        && sources.batches.mode() == crate::sampler::SamplingMode::WithoutReplacement
        && b > n
    {
        return Err(argument(format!("batch size {b} exceeds n = {n} without replacement")));
    }
    match alg {
        Algorithm::Fiem { .. } => match &sources.second {
            None => Err(argument("FIEM needs a second minibatch stream")),
            Some(s) if s.batch_size() != b => Err(argument("FIEM streams must share the batch size")),
            Some(_) => Ok(()),
        },
        Algorithm::SpiderEmPl(c) => match &sources.loop_lengths {
            None => Err(argument("SPIDER-EM-PL needs a loop-length source")),
            Some(LoopLengths::Fixed(xi)) if *xi == 0 || *xi >= c.k_in => {
                Err(argument(format!("fixed inner length {xi} outside 1..k_in")))
            }
            Some(_) => Ok(()),
        },
        _ => Ok(()),
    }
}

fn drive<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s: &StatVector,
    alg: &Algorithm,
    sources: &mut RandomSources,
) -> Step<StatVector> {
    ctx.set_layout(alg.layout());
    let sampler = &mut sources.batches;
    match alg {
        Algorithm::Em { k_max } => runners::em(ctx, s, *k_max),
        Algorithm::OnlineEm { k_max, schedule } => runners::online_em(ctx, s, sampler, schedule, *k_max),
        Algorithm::Iem { k_max, schedule } => runners::iem(ctx, s, sampler, schedule, *k_max),
        Algorithm::Fiem { k_max, schedule } => {
            let second = sources.second.as_mut().expect("checked before the run");
            runners::fiem(ctx, s, sampler, second, schedule, *k_max)
        }
        Algorithm::SemVr(c) => runners::sem_vr(ctx, s, sampler, c),
        Algorithm::SpiderEm(c) => runners::spider_em(ctx, s, sampler, c),
        Algorithm::SpiderEmCv(c) => runners::spider_em_cv(ctx, s, sampler, c),
        Algorithm::SpiderEmPl(c) => {
            let lengths = sources.loop_lengths.as_mut().expect("checked before the run");
            runners::spider_em_pl(ctx, s, sampler, c, lengths)
        }
    }
}

/// Runs `alg` from `s_init`.
pub fn run<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    alg: &Algorithm,
    sources: &mut RandomSources,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    hybrid_warm_start(model, data, s_init, &WarmStart::none(), alg, sources, opts)
}

/// Online-EM warm-up before a wrapped algorithm.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmStart {
    pub epochs: u64,
    pub schedule: StepSchedule,
}

impl WarmStart {
    pub fn none() -> Self {
        WarmStart {
            epochs: 0,
            schedule: StepSchedule::Constant(1.0),
        }
    }

    /// Online-EM iterations covering `epochs` passes: `⌈epochs·n/b⌉`.
    pub fn iterations(&self, n: usize, b: usize) -> u64 {
        (self.epochs * n as u64).div_ceil(b as u64)
    }
}

/// Runs Online EM for `warm.epochs` epochs on the main minibatch stream, then
/// hands its last iterate to `alg`. Counters and clocks run on across the
/// phase boundary; with `warm.epochs == 0` this is exactly [`run`].
pub fn hybrid_warm_start<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    warm: &WarmStart,
    alg: &Algorithm,
    sources: &mut RandomSources,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    check_start(model, data, s_init)?;
    alg.validate()?;
    check_sources(alg, sources, data.n())?;
    if warm.epochs > 0 {
        warm.schedule.validate()?;
    }
    if matches!(alg, Algorithm::Iem { .. } | Algorithm::Fiem { .. }) {
        let need = PerSampleStatStore::bytes_needed(data.n(), model.stat_dim());
        if need > opts.store_cap_bytes {
            return Err(argument(format!(
                "per-sample store needs {need} bytes, above the cap of {}",
                opts.store_cap_bytes
            )));
        }
    }
    let mut ctx = RunContext::new(model, data, opts, s_init);
    let outcome = (|| {
        let mut s = s_init.clone();
        if warm.epochs > 0 {
            ctx.begin_phase("online-em");
            let k_warm = warm.iterations(data.n(), sources.batches.batch_size());
            s = runners::online_em(&mut ctx, &s, &mut sources.batches, &warm.schedule, k_warm)?;
        }
        ctx.begin_phase(alg.kind().as_str());
        drive(&mut ctx, &s, alg, sources)
    })();
    Ok(ctx.finish(outcome))
}

pub fn run_em<M: Model>(model: &M, data: &Dataset, s_init: &StatVector, k_max: u64, opts: RunOptions<'_>) -> Result<RunTrace> {
    let placeholder = MinibatchSampler::new(0, Default::default(), 1)?;
    run(model, data, s_init, &Algorithm::Em { k_max }, &mut RandomSources::new(placeholder), opts)
}

pub fn run_online_em<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    schedule: StepSchedule,
    k_max: u64,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    let alg = Algorithm::OnlineEm { k_max, schedule };
    run(model, data, s_init, &alg, &mut RandomSources::new(sampler), opts)
}

pub fn run_iem<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    schedule: StepSchedule,
    k_max: u64,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    let alg = Algorithm::Iem { k_max, schedule };
    run(model, data, s_init, &alg, &mut RandomSources::new(sampler), opts)
}

#[allow(clippy::too_many_arguments)]
pub fn run_fiem<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    second: MinibatchSampler,
    schedule: StepSchedule,
    k_max: u64,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    let alg = Algorithm::Fiem { k_max, schedule };
    run(model, data, s_init, &alg, &mut RandomSources::new(sampler).with_second(second), opts)
}

pub fn run_sem_vr<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    cfg: NestedConfig,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    run(model, data, s_init, &Algorithm::SemVr(cfg), &mut RandomSources::new(sampler), opts)
}

pub fn run_spider_em<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    cfg: NestedConfig,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    run(model, data, s_init, &Algorithm::SpiderEm(cfg), &mut RandomSources::new(sampler), opts)
}

pub fn run_spider_em_cv<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    cfg: NestedConfig,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    run(model, data, s_init, &Algorithm::SpiderEmCv(cfg), &mut RandomSources::new(sampler), opts)
}

pub fn run_spider_em_pl<M: Model>(
    model: &M,
    data: &Dataset,
    s_init: &StatVector,
    sampler: MinibatchSampler,
    cfg: NestedConfig,
    lengths: LoopLengths,
    opts: RunOptions<'_>,
) -> Result<RunTrace> {
    let mut sources = RandomSources::new(sampler).with_loop_lengths(lengths);
    run(model, data, s_init, &Algorithm::SpiderEmPl(cfg), &mut sources, opts)
}

/// The iterate selected by randomized termination.
#[derive(Clone, Debug, PartialEq)]
pub struct Terminal {
    pub t: u64,
    /// Draw `ξ ∈ {0, …, k_in−1}`; the returned state is `Ŝ_{t,ξ−1}`.
    pub xi: u64,
    pub state: StatVector,
}

/// Draws `(τ, ξ)` uniformly on `{1..k_out} × {0..k_in−1}` and returns
/// `Ŝ_{τ,ξ−1}` from the trace's snapshots.
pub fn randomized_terminate<R: Rng + ?Sized>(trace: &RunTrace, rng: &mut R) -> Result<Terminal> {
    let layout = trace
        .layout
        .ok_or_else(|| Error::Unsupported("trace has no nested-loop layout".into()))?;
    if layout.k_out == 0 || layout.k_in == 0 {
        return Err(argument("empty loop layout"));
    }
    let t = rng.random_range(1..=layout.k_out);
    let xi = rng.random_range(0..layout.k_in);
    let state = snapshot_at(trace, t, xi as i64 - 1)?.clone();
    Ok(Terminal { t, xi, state })
}

/// `Ŝ_{t,k}` from the last phase's snapshots.
pub fn snapshot_at(trace: &RunTrace, t: u64, k: i64) -> Result<&StatVector> {
    let phase = trace.snapshots.last().map(|s| s.phase);
    trace
        .snapshots
        .iter()
        .rev()
        .take_while(|s| Some(s.phase) == phase)
        .find(|s| s.t == t && s.k == k)
        .map(|s| &s.state)
        .ok_or_else(|| Error::Unsupported(format!("no snapshot of iterate ({t}, {k})")))
}

/// Step size of the SPIDER-EM convergence theorem.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoreticalStep {
    pub gamma: f64,
    pub mu_star: f64,
    pub alpha_star: f64,
}

/// `μ⋆ = v_max·√(k_in/b) + L_∇W/(2L)`, `α⋆ = v_min/(2μ⋆)`, `γ = α⋆/L`.
pub fn theoretical_step_size(l: f64, v_min: f64, v_max: f64, l_grad_w: f64, k_in: u64, b: u64) -> Result<TheoreticalStep> {
    let positive = [l, v_min, v_max, l_grad_w].iter().all(|v| v.is_finite() && *v > 0.0);
    if !positive || k_in == 0 || b == 0 {
        return Err(argument("step-size constants must all be positive"));
    }
    let mu_star = v_max * (k_in as f64 / b as f64).sqrt() + l_grad_w / (2.0 * l);
    let alpha_star = v_min / (2.0 * mu_star);
    Ok(TheoreticalStep {
        gamma: alpha_star / l,
        mu_star,
        alpha_star,
    })
}
