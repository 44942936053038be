//! The algorithm loops. Each runs against a [`RunContext`], which owns the
//! oracle counters and the monitoring clock.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::schedule::StepSchedule;
use super::store::PerSampleStatStore;
use super::trace::{RunContext, Step};
use crate::model::Model;
use crate::sampler::MinibatchSampler;
use crate::stat::StatVector;

/// `s + γ (u − s + v)`.
fn controlled_step(s: &StatVector, gamma: f64, u: &StatVector, v: &StatVector) -> StatVector {
    StatVector::from_vec(
        s.iter()
            .zip(u.iter())
            .zip(v.iter())
            .map(|((s, u), v)| s + gamma * (u - s + v))
            .collect(),
    )
}

fn draw<M: Model>(ctx: &RunContext<'_, '_, M>, sampler: &mut MinibatchSampler, batch: &mut Vec<usize>) -> Step {
    sampler.sample_into(ctx.n(), batch)?;
    Ok(())
}

/// Loop lengths and step sizes of the nested-loop algorithms.
#[derive(Clone, Debug, PartialEq)]
pub struct NestedConfig {
    pub k_out: u64,
    pub k_in: u64,
    /// Inner step sizes; iteration `(t, k+1)` uses index `(t−1)·k_in + k + 1`.
    pub schedule: StepSchedule,
    /// Outer damped step `γ_{t,k_in}`; defaults to `schedule` at index `t·k_in`.
    pub outer: Option<StepSchedule>,
}

impl NestedConfig {
    pub fn new(k_out: u64, k_in: u64, schedule: StepSchedule) -> Self {
        NestedConfig {
            k_out,
            k_in,
            schedule,
            outer: None,
        }
    }

    pub(crate) fn inner_gamma(&self, t: u64, k: u64) -> f64 {
        self.schedule.gamma((t - 1) * self.k_in + k + 1)
    }

    pub(crate) fn outer_gamma(&self, t: u64) -> f64 {
        self.outer.as_ref().unwrap_or(&self.schedule).gamma(t * self.k_in)
    }
}

/// Source of the SPIDER-EM-PL inner-loop lengths `ξ_t`.
#[derive(Clone, Debug)]
pub enum LoopLengths {
    /// `ξ_t` uniform on `{1, …, k_in − 1}`.
    Uniform(ChaCha8Rng),
    Fixed(u64),
}

impl LoopLengths {
    fn next(&mut self, k_in: u64) -> u64 {
        match self {
            LoopLengths::Uniform(rng) => rng.random_range(1..k_in),
            LoopLengths::Fixed(xi) => *xi,
        }
    }
}

pub(crate) fn em<M: Model>(ctx: &mut RunContext<'_, '_, M>, s_init: &StatVector, k_max: u64) -> Step<StatVector> {
    let n = ctx.n() as u64;
    let theta = ctx.oracle.m_step(s_init)?;
    let mut s = ctx.oracle.full_stats(&theta);
    ctx.start(1, 0, &s)?;
    for k in 1..=k_max {
        let theta = ctx.oracle.m_step(&s)?;
        s = ctx.oracle.full_stats(&theta);
        ctx.advance(1, k as i64, &s, n)?;
    }
    Ok(s)
}

pub(crate) fn online_em<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    schedule: &StepSchedule,
    k_max: u64,
) -> Step<StatVector> {
    let b = sampler.batch_size() as u64;
    let theta = ctx.oracle.m_step(s_init)?;
    let mut s = ctx.oracle.full_stats(&theta);
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for k in 1..=k_max {
        draw(ctx, sampler, &mut batch)?;
        let theta = ctx.oracle.m_step(&s)?;
        let u = ctx.oracle.batch_stats(&theta, &batch);
        s = s.relax_towards(schedule.gamma(k), &u);
        ctx.advance(1, k as i64, &s, b)?;
    }
    Ok(s)
}

pub(crate) fn iem<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    schedule: &StepSchedule,
    k_max: u64,
) -> Step<StatVector> {
    let b = sampler.batch_size() as u64;
    let theta = ctx.oracle.m_step(s_init)?;
    let cap = ctx.store_cap_bytes();
    let mut store = PerSampleStatStore::build(&mut ctx.oracle, &theta, cap)?;
    let mut s = store.running_mean().clone();
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for k in 1..=k_max {
        draw(ctx, sampler, &mut batch)?;
        let theta = ctx.oracle.m_step(&s)?;
        for &i in &batch {
            store.refresh(&mut ctx.oracle, i, &theta);
        }
        s = s.relax_towards(schedule.gamma(k), store.running_mean());
        ctx.advance(1, k as i64, &s, b)?;
    }
    Ok(s)
}

pub(crate) fn fiem<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    second: &mut MinibatchSampler,
    schedule: &StepSchedule,
    k_max: u64,
) -> Step<StatVector> {
    let b = sampler.batch_size() as u64;
    let theta = ctx.oracle.m_step(s_init)?;
    let cap = ctx.store_cap_bytes();
    let mut store = PerSampleStatStore::build(&mut ctx.oracle, &theta, cap)?;
    let mut s = store.running_mean().clone();
    ctx.start(1, 0, &s)?;
    let (mut batch, mut batch2) = (Vec::new(), Vec::new());
    for k in 1..=k_max {
        draw(ctx, sampler, &mut batch)?;
        draw(ctx, second, &mut batch2)?;
        let theta = ctx.oracle.m_step(&s)?;
        for &i in &batch {
            store.refresh(&mut ctx.oracle, i, &theta);
        }
        let u = ctx.oracle.batch_stats(&theta, &batch2);
        let v = store.running_mean().sub(&store.batch_mean(&batch2));
        s = controlled_step(&s, schedule.gamma(k), &u, &v);
        ctx.advance(1, k as i64, &s, b)?;
    }
    Ok(s)
}

pub(crate) fn sem_vr<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    cfg: &NestedConfig,
) -> Step<StatVector> {
    let (n, b) = (ctx.n() as u64, sampler.batch_size() as u64);
    let mut theta_anchor = ctx.oracle.m_step(s_init)?;
    let mut full = ctx.oracle.full_stats(&theta_anchor);
    let mut s = s_init.clone();
    ctx.anchor(1, s_init);
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for t in 1..=cfg.k_out {
        for k in 0..cfg.k_in - 1 {
            draw(ctx, sampler, &mut batch)?;
            let theta = ctx.oracle.m_step(&s)?;
            let u = ctx.oracle.batch_stats(&theta, &batch);
            let at_anchor = ctx.oracle.batch_stats(&theta_anchor, &batch);
            let v = full.sub(&at_anchor);
            s = controlled_step(&s, cfg.inner_gamma(t, k), &u, &v);
            ctx.advance(t, k as i64 + 1, &s, b)?;
        }
        theta_anchor = ctx.oracle.m_step(&s)?;
        full = ctx.oracle.full_stats(&theta_anchor);
        ctx.anchor(t + 1, &s);
        s = s.relax_towards(cfg.outer_gamma(t), &full);
        ctx.advance(t + 1, 0, &s, n)?;
    }
    Ok(s)
}

/// One SPIDER inner step: `𝖲 ← 𝖲 + s̄_B∘T(Ŝ_{t,k}) − s̄_B∘T(Ŝ_{t,k−1})`,
/// then `Ŝ ← Ŝ + γ(𝖲 − Ŝ)`. `theta_prev` holds `T(Ŝ_{t,k−1})` on entry and
/// `T(Ŝ_{t,k})` on exit.
fn spider_inner<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s: &mut StatVector,
    path: &mut StatVector,
    theta_prev: &mut M::Param,
    batch: &[usize],
    gamma: f64,
) -> Step {
    let theta = ctx.oracle.m_step(s)?;
    let u = ctx.oracle.batch_stats(&theta, batch);
    let v = ctx.oracle.batch_stats(theta_prev, batch);
    for ((p, u), v) in path.iter_mut().zip(u.iter()).zip(v.iter()) {
        *p += u - v;
    }
    *s = s.relax_towards(gamma, path);
    *theta_prev = theta;
    Ok(())
}

pub(crate) fn spider_em<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    cfg: &NestedConfig,
) -> Step<StatVector> {
    let (n, b) = (ctx.n() as u64, sampler.batch_size() as u64);
    let mut theta_prev = ctx.oracle.m_step(s_init)?;
    let mut path = ctx.oracle.full_stats(&theta_prev);
    let mut s = s_init.clone();
    ctx.anchor(1, s_init);
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for t in 1..=cfg.k_out {
        for k in 0..cfg.k_in - 1 {
            draw(ctx, sampler, &mut batch)?;
            spider_inner(ctx, &mut s, &mut path, &mut theta_prev, &batch, cfg.inner_gamma(t, k))?;
            ctx.advance(t, k as i64 + 1, &s, b)?;
        }
        theta_prev = ctx.oracle.m_step(&s)?;
        path = ctx.oracle.full_stats(&theta_prev);
        ctx.anchor(t + 1, &s);
        s = s.relax_towards(cfg.outer_gamma(t), &path);
        ctx.advance(t + 1, 0, &s, n)?;
    }
    Ok(s)
}

pub(crate) fn spider_em_cv<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    cfg: &NestedConfig,
) -> Step<StatVector> {
    let (n, b) = (ctx.n() as u64, sampler.batch_size() as u64);
    let q = s_init.len();
    let mut theta_prev = ctx.oracle.m_step(s_init)?;
    // S̃_{t,0} = s̄∘T(Ŝ_{t,−1}); later S̃_{t,k+1} = s̄_B∘T(Ŝ_{t,k}).
    let mut latest = ctx.oracle.full_stats(&theta_prev);
    let mut s = s_init.clone();
    ctx.anchor(1, s_init);
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for t in 1..=cfg.k_out {
        let mut control = StatVector::zeros(q);
        for k in 0..cfg.k_in - 1 {
            draw(ctx, sampler, &mut batch)?;
            let theta = ctx.oracle.m_step(&s)?;
            let at_prev = ctx.oracle.batch_stats(&theta_prev, &batch);
            for ((c, l), p) in control.iter_mut().zip(latest.iter()).zip(at_prev.iter()) {
                *c += l - p;
            }
            latest = ctx.oracle.batch_stats(&theta, &batch);
            s = controlled_step(&s, cfg.inner_gamma(t, k), &latest, &control);
            theta_prev = theta;
            ctx.advance(t, k as i64 + 1, &s, b)?;
        }
        theta_prev = ctx.oracle.m_step(&s)?;
        latest = ctx.oracle.full_stats(&theta_prev);
        ctx.anchor(t + 1, &s);
        s = s.relax_towards(cfg.outer_gamma(t), &latest);
        ctx.advance(t + 1, 0, &s, n)?;
    }
    Ok(s)
}

pub(crate) fn spider_em_pl<M: Model>(
    ctx: &mut RunContext<'_, '_, M>,
    s_init: &StatVector,
    sampler: &mut MinibatchSampler,
    cfg: &NestedConfig,
    lengths: &mut LoopLengths,
) -> Step<StatVector> {
    let (n, b) = (ctx.n() as u64, sampler.batch_size() as u64);
    let mut theta_prev = ctx.oracle.m_step(s_init)?;
    let mut path = ctx.oracle.full_stats(&theta_prev);
    let mut s = s_init.clone();
    ctx.anchor(1, s_init);
    ctx.start(1, 0, &s)?;
    let mut batch = Vec::new();
    for t in 1..=cfg.k_out {
        let xi = lengths.next(cfg.k_in);
        for k in 0..xi {
            draw(ctx, sampler, &mut batch)?;
            spider_inner(ctx, &mut s, &mut path, &mut theta_prev, &batch, cfg.inner_gamma(t, k))?;
            ctx.advance(t, k as i64 + 1, &s, b)?;
        }
        // Restart from Ŝ_{t,ξ_t} with a fresh full statistic.
        theta_prev = ctx.oracle.m_step(&s)?;
        path = ctx.oracle.full_stats(&theta_prev);
        ctx.anchor(t + 1, &s);
        ctx.refresh(t + 1, 0, &s, n)?;
    }
    Ok(s)
}
