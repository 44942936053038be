use std::time::Instant;

use crate::dataset::Dataset;
use crate::error::Error;
use crate::model::Model;
use crate::ops::{Oracle, OracleCounts};
use crate::stat::StatVector;

/// When the (expensive) monitoring metrics are evaluated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Cadence {
    Never,
    /// Whenever the examples-selected counter crosses a multiple of `n`.
    #[default]
    EveryEpoch,
    EveryIterate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flow {
    Continue,
    Stop,
}

/// What a callback sees after each state update.
#[derive(Debug)]
pub struct IterateView<'a> {
    pub phase: usize,
    pub t: u64,
    pub k: i64,
    pub tau: u64,
    pub epoch: u64,
    pub epoch_boundary: bool,
    pub state: &'a StatVector,
    pub counts: OracleCounts,
    /// Present only when metrics were evaluated at this update.
    pub objective: Option<f64>,
    pub h_sq_norm: Option<f64>,
}

pub type Hook<'h> = Box<dyn FnMut(&IterateView<'_>) -> Flow + Send + 'h>;

/// Per-run monitoring and resource options.
pub struct RunOptions<'h> {
    pub cadence: Cadence,
    /// Evaluate `W` at checkpoints.
    pub objective: bool,
    /// Evaluate `‖h‖²` at checkpoints.
    pub mean_field: bool,
    /// Keep a copy of every iterate.
    pub snapshots: bool,
    /// Stop as soon as a measured `‖h‖²` is at or below this value.
    pub target_h_sq: Option<f64>,
    pub hook: Option<Hook<'h>>,
    /// Upper bound on the per-sample store of iEM and FIEM.
    pub store_cap_bytes: usize,
}

pub const DEFAULT_STORE_CAP_BYTES: usize = 2 << 30;

impl Default for RunOptions<'_> {
    fn default() -> Self {
        RunOptions {
            cadence: Cadence::EveryEpoch,
            objective: true,
            mean_field: true,
            snapshots: false,
            target_h_sq: None,
            hook: None,
            store_cap_bytes: DEFAULT_STORE_CAP_BYTES,
        }
    }
}

impl<'h> RunOptions<'h> {
    pub fn with_cadence(mut self, cadence: Cadence) -> Self {
        self.cadence = cadence;
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.snapshots = true;
        self
    }

    pub fn with_target(mut self, eps: f64) -> Self {
        self.target_h_sq = Some(eps);
        self
    }

    pub fn with_hook(mut self, hook: impl FnMut(&IterateView<'_>) -> Flow + Send + 'h) -> Self {
        self.hook = Some(Box::new(hook));
        self
    }

    /// No metrics, no snapshots.
    pub fn quiet() -> Self {
        RunOptions {
            cadence: Cadence::Never,
            objective: false,
            mean_field: false,
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub phase: usize,
    pub epoch: u64,
    pub t: u64,
    pub k: i64,
    pub tau: u64,
    pub objective: Option<f64>,
    pub h_sq_norm: Option<f64>,
    pub counts: OracleCounts,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub phase: usize,
    pub t: u64,
    /// `-1` marks the anchor `Ŝ_{t,−1}` of a nested-loop algorithm.
    pub k: i64,
    pub state: StatVector,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RunStatus {
    Completed,
    HitTarget,
    Stopped,
    Diverged { tau: u64, reason: String },
}

impl RunStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            RunStatus::Completed => "completed",
            RunStatus::HitTarget => "hit-target",
            RunStatus::Stopped => "stopped",
            RunStatus::Diverged { .. } => "diverged",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMark {
    pub name: &'static str,
    pub start_tau: u64,
    pub start_epoch: u64,
    pub start_counts: OracleCounts,
}

/// Outer and inner loop lengths of a nested-loop run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LoopLayout {
    pub k_out: u64,
    pub k_in: u64,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub checkpoints: Vec<Checkpoint>,
    pub snapshots: Vec<Snapshot>,
    pub status: RunStatus,
    pub final_state: StatVector,
    /// Algorithmic oracle calls.
    pub counts: OracleCounts,
    /// Oracle calls spent on monitoring, kept out of `counts`.
    pub monitor_counts: OracleCounts,
    pub phases: Vec<PhaseMark>,
    pub layout: Option<LoopLayout>,
    /// Number of state updates performed.
    pub tau: u64,
    /// Examples selected, in units of one example.
    pub examples: u64,
    pub n: u64,
}

impl RunTrace {
    pub fn epochs(&self) -> u64 {
        self.examples / self.n
    }

    pub fn diverged(&self) -> bool {
        matches!(self.status, RunStatus::Diverged { .. })
    }

    /// Last measured `‖h‖²`.
    pub fn last_h_sq(&self) -> Option<f64> {
        self.checkpoints.iter().rev().find_map(|c| c.h_sq_norm)
    }

    pub fn last_objective(&self) -> Option<f64> {
        self.checkpoints.iter().rev().find_map(|c| c.objective)
    }
}

/// Why an algorithm loop stopped early.
#[derive(Debug)]
pub(crate) enum Halt {
    Target,
    Stopped,
    Diverged(String),
}

impl From<Error> for Halt {
    fn from(e: Error) -> Self {
        Halt::Diverged(e.to_string())
    }
}

pub(crate) type Step<T = ()> = std::result::Result<T, Halt>;

/// Shared bookkeeping for a single run: oracle counters, the epoch and `τ`
/// clocks, checkpoints, snapshots and the user hook.
pub(crate) struct RunContext<'a, 'h, M: Model> {
    pub oracle: Oracle<'a, M>,
    monitor: Oracle<'a, M>,
    opts: RunOptions<'h>,
    checkpoints: Vec<Checkpoint>,
    snapshots: Vec<Snapshot>,
    phases: Vec<PhaseMark>,
    layout: Option<LoopLayout>,
    last_state: StatVector,
    tau: u64,
    examples: u64,
    n: u64,
    started: bool,
    clock: Instant,
}

impl<'a, 'h, M: Model> RunContext<'a, 'h, M> {
    pub fn new(model: &'a M, data: &'a Dataset, opts: RunOptions<'h>, s_init: &StatVector) -> Self {
        RunContext {
            oracle: Oracle::new(model, data),
            monitor: Oracle::new(model, data),
            opts,
            checkpoints: Vec::new(),
            snapshots: Vec::new(),
            phases: Vec::new(),
            layout: None,
            last_state: s_init.clone(),
            tau: 0,
            examples: 0,
            n: data.n() as u64,
            started: false,
            clock: Instant::now(),
        }
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn store_cap_bytes(&self) -> usize {
        self.opts.store_cap_bytes
    }

    pub fn begin_phase(&mut self, name: &'static str) {
        self.phases.push(PhaseMark {
            name,
            start_tau: self.tau,
            start_epoch: self.examples / self.n,
            start_counts: self.oracle.counts(),
        });
    }

    pub fn set_layout(&mut self, layout: Option<LoopLayout>) {
        self.layout = layout;
    }

    fn phase(&self) -> usize {
        self.phases.len().saturating_sub(1)
    }

    /// The state an algorithm starts its iterations from. On the first call
    /// of a run this records the epoch-0 checkpoint.
    pub fn start(&mut self, t: u64, k: i64, s: &StatVector) -> Step {
        let first = !self.started;
        self.started = true;
        self.emit(t, k, s, false, 0, first)
    }

    /// A state update costing `examples` selected examples.
    pub fn advance(&mut self, t: u64, k: i64, s: &StatVector, examples: u64) -> Step {
        self.emit(t, k, s, true, examples, false)
    }

    /// A refresh pass that relabels the state without updating it.
    pub fn refresh(&mut self, t: u64, k: i64, s: &StatVector, examples: u64) -> Step {
        self.emit(t, k, s, false, examples, false)
    }

    /// Records the anchor `Ŝ_{t,−1}`.
    pub fn anchor(&mut self, t: u64, s: &StatVector) {
        if self.opts.snapshots {
            self.snapshots.push(Snapshot {
                phase: self.phase(),
                t,
                k: -1,
                state: s.clone(),
            });
        }
    }

    fn emit(&mut self, t: u64, k: i64, s: &StatVector, advance: bool, examples: u64, initial: bool) -> Step {
        if advance {
            self.tau += 1;
        }
        let before = self.examples / self.n;
        self.examples += examples;
        let epoch = self.examples / self.n;
        let boundary = epoch > before;
        self.last_state.copy_from_slice(s);
        if let Some(index) = s.first_non_finite() {
            return Err(Halt::Diverged(format!("non-finite statistic entry {index}")));
        }
        if self.opts.snapshots {
            self.snapshots.push(Snapshot {
                phase: self.phase(),
                t,
                k,
                state: s.clone(),
            });
        }
        let measure = initial
            || match self.opts.cadence {
                Cadence::Never => false,
                Cadence::EveryEpoch => boundary,
                Cadence::EveryIterate => true,
            };
        let (mut objective, mut h_sq_norm) = (None, None);
        if measure {
            if self.opts.objective {
                let w = self.monitor.objective(s)?;
                if !w.is_finite() {
                    return Err(Halt::Diverged("non-finite objective".into()));
                }
                objective = Some(w);
            }
            if self.opts.mean_field {
                h_sq_norm = Some(self.monitor.mean_field(s)?.norm_sq());
            }
            self.checkpoints.push(Checkpoint {
                phase: self.phase(),
                epoch,
                t,
                k,
                tau: self.tau,
                objective,
                h_sq_norm,
                counts: self.oracle.counts(),
                wall_ms: self.clock.elapsed().as_secs_f64() * 1e3,
            });
        }
        if let Some(hook) = self.opts.hook.as_mut() {
            let view = IterateView {
                phase: self.phases.len().saturating_sub(1),
                t,
                k,
                tau: self.tau,
                epoch,
                epoch_boundary: boundary,
                state: s,
                counts: self.oracle.counts(),
                objective,
                h_sq_norm,
            };
            if hook(&view) == Flow::Stop {
                return Err(Halt::Stopped);
            }
        }
        if let (Some(eps), Some(h)) = (self.opts.target_h_sq, h_sq_norm) {
            if self.tau >= 1 && h <= eps {
                return Err(Halt::Target);
            }
        }
        Ok(())
    }

    pub fn finish(self, outcome: Step<StatVector>) -> RunTrace {
        let (status, final_state) = match outcome {
            Ok(s) => (RunStatus::Completed, s),
            Err(Halt::Target) => (RunStatus::HitTarget, self.last_state),
            Err(Halt::Stopped) => (RunStatus::Stopped, self.last_state),
            Err(Halt::Diverged(reason)) => (RunStatus::Diverged { tau: self.tau, reason }, self.last_state),
        };
        RunTrace {
            checkpoints: self.checkpoints,
            snapshots: self.snapshots,
            status,
            final_state,
            counts: self.oracle.counts(),
            monitor_counts: self.monitor.counts(),
            phases: self.phases,
            layout: self.layout,
            tau: self.tau,
            examples: self.examples,
            n: self.n,
        }
    }
}
