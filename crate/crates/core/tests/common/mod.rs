#![allow(dead_code)]

use spider_em::data::{gen_multivariate_mixture, gen_scalar_mixture, ScalarMixtureSpec};
use spider_em::gmm::{initial_statistic, GaussianMixture, InitStrategy, ScalarTwoGmm, ScalarTwoParam};
use spider_em::{Dataset, StatVector};

pub fn mixture(n: usize, g: usize, p: usize, separation: f64, seed: u64) -> (GaussianMixture, Dataset) {
    let data = gen_multivariate_mixture(n, g, p, separation, seed)
        .unwrap()
        .into_dataset()
        .unwrap();
    (GaussianMixture::new(g, p).unwrap(), data)
}

pub fn mixture_start(model: &GaussianMixture, data: &Dataset, seed: u64) -> StatVector {
    initial_statistic(model, data, InitStrategy::KMeans, seed).unwrap()
}

pub fn scalar(n: usize, seed: u64) -> (ScalarTwoGmm, Dataset, StatVector) {
    let data = gen_scalar_mixture(n, &ScalarMixtureSpec::default(), seed)
        .unwrap()
        .into_dataset()
        .unwrap();
    let model = ScalarTwoGmm::default();
    let s0 = model.initial_statistic(&data, &ScalarTwoParam { means: [1.0, -1.0] });
    (model, data, s0)
}

/// Plain (non-pairwise) mean of a list of vectors.
pub fn mean_of(rows: &[Vec<f64>]) -> Vec<f64> {
    let q = rows[0].len();
    let m = rows.len() as f64;
    (0..q).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / m).collect()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
