//! Seeded initial statistics for the multivariate mixture.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};

use super::GaussianMixture;
use crate::dataset::Dataset;
use crate::error::Result;
use crate::model::Model;
use crate::ops::full_stats;
use crate::stat::{PairwiseSum, StatVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitStrategy {
    /// Each observation gets a Dirichlet(1,…,1) soft assignment.
    RandomResponsibilities,
    /// k-means (D² seeding, then Lloyd iterations), best of several
    /// restarts by within-cluster sum of squares, then hard assignment.
    KMeans,
}

/// `(1/n) Σ_i A_{y_i} ρ_i` for per-observation assignment vectors `ρ_i`.
fn statistic_from_assignments(model: &GaussianMixture, data: &Dataset, rho: impl Fn(usize, &mut [f64])) -> StatVector {
    let (g, p) = (model.components(), model.dim());
    let mut acc = PairwiseSum::new(g + g * p);
    let mut term = vec![0.0; g + g * p];
    let mut r = vec![0.0; g];
    for i in 0..data.n() {
        rho(i, &mut r);
        let y = data.row(i);
        term[..g].copy_from_slice(&r);
        for l in 0..g {
            for j in 0..p {
                term[g + l * p + j] = r[l] * y[j];
            }
        }
        acc.add(&term);
    }
    let n = data.n() as f64;
    StatVector::from_vec(acc.finish().into_iter().map(|v| v / n).collect())
}

/// A point of the admissible set built from seeded assignments.
pub fn seed_statistic(model: &GaussianMixture, data: &Dataset, strategy: InitStrategy, seed: u64) -> StatVector {
    let g = model.components();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match strategy {
        InitStrategy::RandomResponsibilities => {
            let draws: Vec<f64> = (0..data.n() * g).map(|_| Exp1.sample(&mut rng)).collect();
            statistic_from_assignments(model, data, |i, r| {
                let row = &draws[i * g..(i + 1) * g];
                let total: f64 = row.iter().sum();
                for (dst, v) in r.iter_mut().zip(row) {
                    *dst = v / total;
                }
            })
        }
        InitStrategy::KMeans => {
            let centres = kmeans(data, g, &mut rng);
            statistic_from_assignments(model, data, |i, r| {
                let y = data.row(i);
                let nearest = (0..g)
                    .min_by(|&a, &b| sq_dist(y, &centres[a]).total_cmp(&sq_dist(y, &centres[b])))
                    .expect("at least one component");
                r.iter_mut().for_each(|v| *v = 0.0);
                r[nearest] = 1.0;
            })
        }
    }
}

/// `Ŝ_init = s̄(θ_init)` with `θ_init = T(seed statistic)`.
pub fn initial_statistic(model: &GaussianMixture, data: &Dataset, strategy: InitStrategy, seed: u64) -> Result<StatVector> {
    let s0 = seed_statistic(model, data, strategy, seed);
    let theta = model.m_step(data, &s0)?;
    Ok(full_stats(model, data, &theta))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn kmeans_pp_centres(data: &Dataset, g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = data.n();
    let mut centres = vec![data.row(rng.random_range(0..n)).to_vec()];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), &centres[0])).collect();
    while centres.len() < g {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in d2.iter().enumerate() {
                if u < *d {
                    chosen = i;
                    break;
                }
                u -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = data.row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(data.row(i), &c));
        }
        centres.push(c);
    }
    centres
}

const KMEANS_RESTARTS: usize = 5;
const LLOYD_ITERATIONS: usize = 50;

fn nearest(y: &[f64], centres: &[Vec<f64>]) -> (usize, f64) {
    centres
        .iter()
        .enumerate()
        .map(|(l, c)| (l, sq_dist(y, c)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one centre")
}

/// Lloyd iterations from the given centres; returns the final inertia.
fn lloyd(data: &Dataset, centres: &mut [Vec<f64>]) -> f64 {
    let (n, p, g) = (data.n(), data.dim(), centres.len());
    let mut assign = vec![usize::MAX; n];
    for _ in 0..LLOYD_ITERATIONS {
        let mut changed = false;
        for (i, a) in assign.iter_mut().enumerate() {
            let (l, _) = nearest(data.row(i), centres);
            changed |= *a != l;
            *a = l;
        }
        if !changed {
            break;
        }
        let mut sums = vec![0.0; g * p];
        let mut counts = vec![0usize; g];
        for (i, &l) in assign.iter().enumerate() {
            counts[l] += 1;
            for (s, y) in sums[l * p..(l + 1) * p].iter_mut().zip(data.row(i)) {
                *s += y;
            }
        }
        for (l, c) in centres.iter_mut().enumerate() {
            // An emptied cluster keeps its old centre.
            if counts[l] > 0 {
                for (cj, s) in c.iter_mut().zip(&sums[l * p..(l + 1) * p]) {
                    *cj = s / counts[l] as f64;
                }
            }
        }
    }
    (0..n).map(|i| nearest(data.row(i), centres).1).sum()
}

fn kmeans(data: &Dataset, g: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut best: Option<(f64, Vec<Vec<f64>>)> = None;
    for _ in 0..KMEANS_RESTARTS {
        let mut centres = kmeans_pp_centres(data, g, rng);
        let inertia = lloyd(data, &mut centres);
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, centres));
        }
    }
    best.expect("at least one restart").1
}
