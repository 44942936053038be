use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::RawDataset;
use crate::error::{argument, Result};

/// A two-component scalar Gaussian mixture.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScalarMixtureSpec {
    pub weights: [f64; 2],
    pub means: [f64; 2],
    pub variance: f64,
}

impl Default for ScalarMixtureSpec {
    fn default() -> Self {
        ScalarMixtureSpec {
            weights: [0.2, 0.8],
            means: [0.5, -0.5],
            variance: 1.0,
        }
    }
}

impl ScalarMixtureSpec {
    pub fn validate(&self) -> Result<()> {
        let [w1, w2] = self.weights;
        if !(w1 >= 0.0 && w2 >= 0.0) || ((w1 + w2) - 1.0).abs() > 1e-12 {
            return Err(argument(format!("mixture weights {:?} are not a probability vector", self.weights)));
        }
        if !(self.variance > 0.0 && self.variance.is_finite()) {
            return Err(argument("variance must be positive"));
        }
        if !self.means.iter().all(|m| m.is_finite()) {
            return Err(argument("means must be finite"));
        }
        Ok(())
    }
}

pub fn gen_scalar_mixture(n: usize, spec: &ScalarMixtureSpec, seed: u64) -> Result<RawDataset> {
    spec.validate()?;
    if n == 0 {
        return Err(argument("n must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sd = spec.variance.sqrt();
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n);
    for _ in 0..n {
        let l = usize::from(rng.random::<f64>() >= spec.weights[0]);
        let z: f64 = StandardNormal.sample(&mut rng);
        labels.push(l);
        values.push(spec.means[l] + sd * z);
    }
    let provenance = format!(
        "scalar-mixture n={n} weights={:?} means={:?} variance={} seed={seed}",
        spec.weights, spec.means, spec.variance
    );
    let mut raw = RawDataset::new(values, 1, provenance)?;
    raw.labels = Some(labels);
    Ok(raw)
}

/// Component means at distance `separation` from the origin: scaled unit
/// vectors `e_ℓ` when `g ≤ p`, otherwise seeded random directions.
fn component_means(g: usize, p: usize, separation: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut means = vec![0.0; g * p];
    for l in 0..g {
        let m = &mut means[l * p..(l + 1) * p];
        if g <= p {
            m[l] = separation;
        } else {
            loop {
                m.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 1e-8 {
                    m.iter_mut().for_each(|v| *v *= separation / norm);
                    break;
                }
            }
        }
    }
    means
}

/// `g` equally weighted Gaussians with identity covariance in `R^p`.
pub fn gen_multivariate_mixture(n: usize, g: usize, p: usize, separation: f64, seed: u64) -> Result<RawDataset> {
    if n == 0 || g == 0 || p == 0 {
        return Err(argument("n, g and p must be positive"));
    }
    if !(separation >= 0.0 && separation.is_finite()) {
        return Err(argument("separation must be a finite non-negative number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = component_means(g, p, separation, &mut rng);
    let mut labels = Vec::with_capacity(n);
    let mut values = Vec::with_capacity(n * p);
    for _ in 0..n {
        let l = rng.random_range(0..g);
        labels.push(l);
        for j in 0..p {
            let z: f64 = StandardNormal.sample(&mut rng);
            values.push(means[l * p + j] + z);
        }
    }
    let provenance = format!("multivariate-mixture n={n} g={g} p={p} separation={separation} seed={seed}");
    let mut raw = RawDataset::new(values, p, provenance)?;
    raw.labels = Some(labels);
    Ok(raw)
}
