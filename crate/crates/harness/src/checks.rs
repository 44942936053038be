//! Invariant suites behind the `check` subcommand.

use spider_em::algorithms::{run_spider_em, run_spider_em_cv, NestedConfig, RunOptions, StepSchedule};
use spider_em::data::gen_multivariate_mixture;
use spider_em::gmm::{initial_statistic, seed_statistic, GaussianMixture, InitStrategy};
use spider_em::ops::{fd_gradient_objective, fd_jacobian_phi_t, full_stats, mean_field, minibatch_stats, FD_STEP};
use spider_em::{Dataset, MinibatchSampler, Model, SamplingMode, StatVector};

use crate::error::{HarnessError, Result};

pub const SUITES: [&str; 3] = ["sampler", "equivalence", "gradient"];

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: &'static str,
    pub max_deviation: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.max_deviation <= self.tolerance
    }
}

pub fn run_suite(name: &str) -> Result<Vec<SuiteReport>> {
    match name {
        "sampler" => sampler_enumeration(),
        "equivalence" => spider_equivalence().map(|r| vec![r]),
        "gradient" => gradient_identity(),
        "all" => {
            let mut out = Vec::new();
            for s in SUITES {
                out.extend(run_suite(s)?);
            }
            Ok(out)
        }
        other => Err(HarnessError::Input(format!(
            "unknown suite '{other}' (sampler | equivalence | gradient | all)"
        ))),
    }
}

fn fixture(n: usize, g: usize, p: usize, separation: f64, seed: u64) -> Result<(GaussianMixture, Dataset)> {
    let data = gen_multivariate_mixture(n, g, p, separation, seed)?.into_dataset()?;
    Ok((GaussianMixture::new(g, p)?, data))
}

fn all_tuples(n: usize, b: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..b {
        out = out
            .into_iter()
            .flat_map(|t| {
                (0..n).map(move |i| {
                    let mut t = t.clone();
                    t.push(i);
                    t
                })
            })
            .collect();
    }
    out
}

/// Exact mean (both sampling modes) and variance (with replacement) of
/// the minibatch statistic, by enumerating every batch at `n = 5`, `b = 2`.
pub fn sampler_enumeration() -> Result<Vec<SuiteReport>> {
    let (n, b) = (5, 2);
    let (model, data) = fixture(n, 2, 2, 2.0, 3)?;
    let s = seed_statistic(&model, &data, InitStrategy::RandomResponsibilities, 4);
    let theta = model.m_step(&data, &s)?;
    let full = full_stats(&model, &data, &theta);
    let q = full.len();
    let per_sample: Vec<StatVector> = (0..n).map(|i| model.sbar_i(&data, i, &theta)).collect();
    let mut reports = Vec::new();

    let with: Vec<Vec<usize>> = all_tuples(n, b);
    let without: Vec<Vec<usize>> = with
        .iter()
        .filter(|t| t.windows(2).all(|w| w[0] < w[1]))
        .cloned()
        .collect();
    for (mode, batches) in [
        (SamplingMode::WithReplacement, &with),
        (SamplingMode::WithoutReplacement, &without),
    ] {
        let stats: Vec<StatVector> = batches
            .iter()
            .map(|bt| minibatch_stats(&model, &data, bt, &theta))
            .collect::<spider_em::Result<_>>()?;
        let m = batches.len() as f64;
        let mean: Vec<f64> = (0..q).map(|j| stats.iter().map(|v| v[j]).sum::<f64>() / m).collect();
        let dev = mean.iter().zip(full.iter()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        reports.push(SuiteReport {
            suite: "sampler",
            max_deviation: dev,
            tolerance: 1e-12,
            detail: format!("{}: mean over {} batches", mode.as_str(), batches.len()),
        });
        if mode == SamplingMode::WithReplacement {
            let mut dev = 0.0f64;
            for j in 0..q {
                let var_batch = stats.iter().map(|v| (v[j] - full[j]).powi(2)).sum::<f64>() / m;
                let var_pop = per_sample.iter().map(|v| (v[j] - full[j]).powi(2)).sum::<f64>() / n as f64;
                dev = dev.max((var_batch - var_pop / b as f64).abs());
            }
            reports.push(SuiteReport {
                suite: "sampler",
                max_deviation: dev,
                tolerance: 1e-12,
                detail: "with-replacement: variance equals population variance / b".into(),
            });
        }
    }
    Ok(reports)
}

/// SPIDER-EM against its control-variate form on shared minibatches, at
/// every iterate.
pub fn spider_equivalence() -> Result<SuiteReport> {
    let (model, data) = fixture(500, 12, 5, 4.0, 21)?;
    let s0 = initial_statistic(&model, &data, InitStrategy::KMeans, 22)?;
    let cfg = NestedConfig::new(3, 20, StepSchedule::Constant(5e-3));
    let sampler = || MinibatchSampler::new(23, SamplingMode::WithReplacement, 25);
    let opts = || RunOptions::quiet().with_snapshots();
    let a = run_spider_em(&model, &data, &s0, sampler()?, cfg.clone(), opts())?;
    let b = run_spider_em_cv(&model, &data, &s0, sampler()?, cfg, opts())?;
    if a.snapshots.len() != b.snapshots.len() {
        return Err(HarnessError::Input("the two runs recorded different iterates".into()));
    }
    let dev = a
        .snapshots
        .iter()
        .zip(&b.snapshots)
        .map(|(x, y)| x.state.max_abs_diff(&y.state))
        .fold(0.0, f64::max);
    Ok(SuiteReport {
        suite: "equivalence",
        max_deviation: dev,
        tolerance: 1e-10,
        detail: format!("{} iterates, max |Ŝ difference|", a.snapshots.len()),
    })
}

/// Random admissible points: convex combinations of a k-means statistic and
/// a random-responsibility statistic. The admissible set is convex.
pub fn random_points(model: &GaussianMixture, data: &Dataset, count: usize, seed: u64) -> Vec<StatVector> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let anchor = seed_statistic(model, data, InitStrategy::KMeans, seed);
    (0..count)
        .map(|i| {
            let other = seed_statistic(model, data, InitStrategy::RandomResponsibilities, seed + 1 + i as u64);
            let lambda: f64 = rng.random_range(0.2..0.9);
            other.relax_towards(lambda, &anchor)
        })
        .collect()
}

/// `∇W(s) = −B(s) h(s)` by finite differences, and symmetry of the
/// Jacobian of `φ∘T`, at 10 random admissible points of each of two
/// mixtures.
pub fn gradient_identity() -> Result<Vec<SuiteReport>> {
    let mut rel = 0.0f64;
    let mut asym = 0.0f64;
    let mut points = 0;
    for (n, g, p, sep, seed) in [(400, 3, 2, 3.0, 31), (300, 4, 3, 2.0, 41)] {
        let (model, data) = fixture(n, g, p, sep, seed)?;
        for s in random_points(&model, &data, 10, seed + 1) {
            let grad = fd_gradient_objective(&model, &data, &s, FD_STEP)?;
            let jac = fd_jacobian_phi_t(&model, &data, &s, FD_STEP)?;
            let h = mean_field(&model, &data, &s)?;
            let bh = jac.apply(&h);
            let num: f64 = grad.iter().zip(&bh).map(|(g, v)| (g + v).powi(2)).sum::<f64>().sqrt();
            let den: f64 = bh.iter().map(|v| v * v).sum::<f64>().sqrt();
            rel = rel.max(num / den);
            asym = asym.max(jac.asymmetry);
            points += 1;
        }
    }
    Ok(vec![
        SuiteReport {
            suite: "gradient",
            max_deviation: rel,
            tolerance: 1e-3,
            detail: format!("relative error of grad W + B h over {points} points"),
        },
        SuiteReport {
            suite: "gradient",
            max_deviation: asym,
            tolerance: 1e-4,
            detail: "relative asymmetry of the Jacobian of phi o T".into(),
        },
    ])
}
