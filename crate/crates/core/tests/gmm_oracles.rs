mod common;

use std::f64::consts::PI;

use approx::assert_relative_eq;
use common::{max_diff, mixture};
use proptest::prelude::*;
use spider_em::gmm::{gmm_posterior, seed_statistic, GaussianMixture, GmmParameter, InitStrategy, ScalarTwoGmm, ScalarTwoParam};
use spider_em::ops::{full_stats, objective};
use spider_em::{Dataset, DomainViolation, Error, Model, StatVector};

/// 2-d density written out with the explicit 2×2 inverse and determinant.
fn normal_2d(y: &[f64], mu: &[f64], cov: [[f64; 2]; 2]) -> f64 {
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let inv = [[cov[1][1] / det, -cov[0][1] / det], [-cov[1][0] / det, cov[0][0] / det]];
    let d = [y[0] - mu[0], y[1] - mu[1]];
    let quad = d[0] * (inv[0][0] * d[0] + inv[0][1] * d[1]) + d[1] * (inv[1][0] * d[0] + inv[1][1] * d[1]);
    (-0.5 * quad).exp() / (2.0 * PI * det.sqrt())
}

fn theta_2d() -> (GmmParameter, Vec<f64>, Vec<f64>, [[f64; 2]; 2]) {
    let weights = vec![0.5, 0.3, 0.2];
    let means = vec![0.0, 0.0, 2.0, 1.0, -1.0, 2.5];
    let cov = [[2.0, 0.5], [0.5, 1.0]];
    let theta = GmmParameter::new(weights.clone(), means.clone(), &[2.0, 0.5, 0.5, 1.0]).unwrap();
    (theta, weights, means, cov)
}

#[test]
fn posterior_matches_direct_densities() {
    let (theta, w, mu, cov) = theta_2d();
    for y in [[0.3, -0.2], [2.0, 2.0], [-3.0, 4.0], [10.0, -7.0]] {
        let joint: Vec<f64> = (0..3).map(|l| w[l] * normal_2d(&y, &mu[2 * l..2 * l + 2], cov)).collect();
        let total: f64 = joint.iter().sum();
        let post = gmm_posterior(&theta, &y);
        for l in 0..3 {
            assert_relative_eq!(post[l], joint[l] / total, max_relative = 1e-12, epsilon = 1e-300);
        }
    }
}

#[test]
fn nll_matches_direct_mixture_density() {
    let (theta, w, mu, cov) = theta_2d();
    let (model, data) = mixture(200, 3, 2, 2.0, 3);
    let direct = -(0..data.n())
        .map(|i| {
            let y = data.row(i);
            (0..3).map(|l| w[l] * normal_2d(y, &mu[2 * l..2 * l + 2], cov)).sum::<f64>().ln()
        })
        .sum::<f64>()
        / data.n() as f64;
    assert_relative_eq!(model.penalized_nll(&data, &theta), direct, max_relative = 1e-12);
    let no_const = model.clone().without_constant().penalized_nll(&data, &theta);
    assert_relative_eq!(no_const, direct - (2.0 * PI).ln(), max_relative = 1e-12);
}

/// One textbook EM update with a pooled covariance, from responsibilities
/// computed with the direct density.
fn textbook_em(data: &Dataset, w: &[f64], mu: &[f64], cov: [[f64; 2]; 2]) -> (Vec<f64>, Vec<f64>, [[f64; 2]; 2]) {
    let n = data.n();
    let g = w.len();
    let resp: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let y = data.row(i);
            let j: Vec<f64> = (0..g).map(|l| w[l] * normal_2d(y, &mu[2 * l..2 * l + 2], cov)).collect();
            let t: f64 = j.iter().sum();
            j.into_iter().map(|v| v / t).collect()
        })
        .collect();
    let nk: Vec<f64> = (0..g).map(|l| resp.iter().map(|r| r[l]).sum()).collect();
    let weights: Vec<f64> = nk.iter().map(|v| v / n as f64).collect();
    let mut means = vec![0.0; 2 * g];
    for l in 0..g {
        for c in 0..2 {
            means[2 * l + c] = (0..n).map(|i| resp[i][l] * data.row(i)[c]).sum::<f64>() / nk[l];
        }
    }
    let mut new_cov = [[0.0; 2]; 2];
    for i in 0..n {
        let y = data.row(i);
        for l in 0..g {
            let d = [y[0] - means[2 * l], y[1] - means[2 * l + 1]];
            for a in 0..2 {
                for b in 0..2 {
                    new_cov[a][b] += resp[i][l] * d[a] * d[b] / n as f64;
                }
            }
        }
    }
    (weights, means, new_cov)
}

#[test]
fn m_step_of_sbar_is_one_textbook_em_update() {
    let (theta, w, mu, cov) = theta_2d();
    let (model, data) = mixture(300, 3, 2, 2.5, 9);
    let next = model.m_step(&data, &full_stats(&model, &data, &theta)).unwrap();
    let (w2, mu2, cov2) = textbook_em(&data, &w, &mu, cov);
    assert!(max_diff(next.weights(), &w2) < 1e-12);
    assert!(max_diff(next.means(), &mu2) < 1e-10);
    let c = next.covariance();
    for a in 0..2 {
        for b in 0..2 {
            assert_relative_eq!(c[(a, b)], cov2[a][b], max_relative = 1e-10);
        }
    }
}

/// `L(s; θ) = ψ(θ) − ⟨s, φ(θ)⟩` up to a constant in θ.
fn surrogate(model: &GaussianMixture, data: &Dataset, s: &StatVector, theta: &GmmParameter) -> f64 {
    let phi = model.phi(theta).unwrap();
    model.psi(data, theta) - s.iter().zip(&phi).map(|(a, b)| a * b).sum::<f64>()
}

/// Parameter vector: weights, means, then the upper triangle of the
/// covariance.
fn flatten(theta: &GmmParameter) -> Vec<f64> {
    let p = theta.dim();
    let cov = theta.covariance();
    let mut v = theta.weights().to_vec();
    v.extend_from_slice(theta.means());
    for a in 0..p {
        for b in a..p {
            v.push(cov[(a, b)]);
        }
    }
    v
}

fn unflatten(v: &[f64], g: usize, p: usize) -> Option<GmmParameter> {
    let (w, rest) = v.split_at(g);
    let (m, tri) = rest.split_at(g * p);
    let mut cov = vec![0.0; p * p];
    let mut it = tri.iter();
    for a in 0..p {
        for b in a..p {
            let x = *it.next().unwrap();
            cov[a * p + b] = x;
            cov[b * p + a] = x;
        }
    }
    GmmParameter::new(w.to_vec(), m.to_vec(), &cov).ok()
}

#[test]
fn m_step_minimises_the_surrogate() {
    use rand::{Rng, SeedableRng};
    let (g, p) = (3, 2);
    let (model, data) = mixture(250, g, p, 2.0, 12);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
    for seed in 0..20 {
        let s = seed_statistic(&model, &data, InitStrategy::RandomResponsibilities, seed);
        let best = model.m_step(&data, &s).unwrap();
        let at_best = surrogate(&model, &data, &s, &best);
        let x = flatten(&best);

        let mut tried = 0;
        while tried < 100 {
            let mut y = x.clone();
            let shift: f64 = rng.random_range(-0.05..0.05);
            y[0] += shift;
            y[1] -= shift;
            for v in y[g..].iter_mut() {
                *v += rng.random_range(-0.05..0.05);
            }
            if let Some(other) = unflatten(&y, g, p) {
                assert!(surrogate(&model, &data, &s, &other) > at_best, "seed {seed}");
                tried += 1;
            }
        }

        // Gradient along the simplex, the means and the covariance entries.
        let h = 1e-5;
        let f = |y: &[f64]| surrogate(&model, &data, &s, &unflatten(y, g, p).unwrap());
        let mut directions: Vec<Vec<f64>> = (1..g)
            .map(|l| {
                let mut d = vec![0.0; x.len()];
                d[0] = 1.0;
                d[l] = -1.0;
                d
            })
            .collect();
        directions.extend((g..x.len()).map(|j| {
            let mut d = vec![0.0; x.len()];
            d[j] = 1.0;
            d
        }));
        let grad_sq: f64 = directions
            .iter()
            .map(|d| {
                let up: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + h * b).collect();
                let down: Vec<f64> = x.iter().zip(d).map(|(a, b)| a - h * b).collect();
                ((f(&up) - f(&down)) / (2.0 * h)).powi(2)
            })
            .sum();
        assert!(grad_sq.sqrt() <= 1e-6, "seed {seed}: |grad| {}", grad_sq.sqrt());
    }
}

#[test]
fn objective_is_nll_at_the_m_step() {
    let (model, data) = mixture(150, 2, 3, 3.0, 4);
    let s = seed_statistic(&model, &data, InitStrategy::KMeans, 5);
    let theta = model.m_step(&data, &s).unwrap();
    assert_eq!(objective(&model, &data, &s).unwrap(), model.penalized_nll(&data, &theta));
}

#[test]
fn scalar_model_against_hand_formulas() {
    let model = ScalarTwoGmm::new([0.3, 0.7], 2.0).unwrap();
    let ys = [-1.5, 0.2, 3.0, 0.9];
    let data = Dataset::from_scalars(ys.to_vec()).unwrap();
    let theta = ScalarTwoParam { means: [1.0, -0.5] };
    let dens = |y: f64, m: f64| (-(y - m) * (y - m) / 4.0).exp() / (4.0 * PI).sqrt();
    let mut nll = 0.0;
    let mut s = [0.0; 4];
    for &y in &ys {
        let (a, b) = (0.3 * dens(y, 1.0), 0.7 * dens(y, -0.5));
        let post = model.posterior(&theta, y);
        assert_relative_eq!(post[0], a / (a + b), max_relative = 1e-13);
        nll -= (a + b).ln() / 4.0;
        s[0] += a / (a + b) / 4.0;
        s[1] += b / (a + b) / 4.0;
        s[2] += a / (a + b) * y / 4.0;
        s[3] += b / (a + b) * y / 4.0;
    }
    assert_relative_eq!(model.penalized_nll(&data, &theta), nll, max_relative = 1e-13);
    let sbar = full_stats(&model, &data, &theta);
    assert!(max_diff(&sbar, &s) < 1e-15);
    let next = model.m_step(&data, &sbar).unwrap();
    assert_relative_eq!(next.means[0], s[2] / s[0], max_relative = 1e-14);
    assert_relative_eq!(next.means[1], s[3] / s[1], max_relative = 1e-14);
    let phi = model.phi(&theta).unwrap();
    assert_relative_eq!(phi[2], 0.5);
    assert_relative_eq!(phi[3], -0.25);
}

#[test]
fn domain_violations_are_reported() {
    let (model, data) = mixture(40, 2, 2, 3.0, 1);
    let good = seed_statistic(&model, &data, InitStrategy::KMeans, 2);
    assert!(model.domain_check(&data, &good).is_ok());

    let mut empty = good.clone();
    empty[1] = 0.0;
    assert!(matches!(
        model.domain_check(&data, &empty),
        Err(DomainViolation::EmptyComponent { component: 1, .. })
    ));
    assert!(matches!(model.m_step(&data, &empty), Err(Error::Domain(_))));

    let mut nan = good.clone();
    nan[3] = f64::NAN;
    assert!(matches!(model.domain_check(&data, &nan), Err(DomainViolation::NonFinite { index: 3 })));

    let short = StatVector::from_vec(good[..4].to_vec());
    assert!(matches!(
        model.domain_check(&data, &short),
        Err(DomainViolation::DimensionMismatch { expected: 6, found: 4 })
    ));

    // Two points, one per component: the pooled covariance is zero.
    let two = Dataset::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
    let s = StatVector::from_vec(vec![0.5, 0.5, 0.0, 0.5, 1.0, 1.5]);
    assert_eq!(model.domain_check(&two, &s), Err(DomainViolation::DegenerateCovariance));
}

#[test]
fn far_observations_keep_finite_statistics() {
    let model = GaussianMixture::new(2, 2).unwrap();
    let theta = GmmParameter::new(vec![0.5, 0.5], vec![0.0, 0.0, 1.0, 1.0], &[1e-3, 0.0, 0.0, 1e-3]).unwrap();
    let data = Dataset::from_rows(&[vec![1e4, -1e4], vec![-3e3, 5e3], vec![0.5, 0.5]]).unwrap();
    for i in 0..3 {
        let s = model.sbar_i(&data, i, &theta);
        assert!(s.is_finite(), "{s:?}");
        assert_relative_eq!(s[0] + s[1], 1.0, max_relative = 1e-15);
    }
    assert!(model.penalized_nll(&data, &theta).is_finite());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_is_a_probability_vector(y0 in -1e3f64..1e3, y1 in -1e3f64..1e3) {
        let (theta, ..) = theta_2d();
        let post = gmm_posterior(&theta, &[y0, y1]);
        prop_assert!(post.iter().all(|p| (0.0..=1.0).contains(p)));
        prop_assert!((post.iter().sum::<f64>() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn per_sample_statistic_sums_to_the_observation(seed in 0u64..1000, i in 0usize..60) {
        let (model, data) = mixture(60, 3, 2, 2.0, seed);
        let s = seed_statistic(&model, &data, InitStrategy::RandomResponsibilities, seed);
        let theta = model.m_step(&data, &s).unwrap();
        let si = model.sbar_i(&data, i, &theta);
        prop_assert!((si[..3].iter().sum::<f64>() - 1.0).abs() < 1e-14);
        for c in 0..2 {
            let total: f64 = (0..3).map(|l| si[3 + 2 * l + c]).sum();
            prop_assert!((total - data.row(i)[c]).abs() <= 1e-13 * (1.0 + data.row(i)[c].abs()));
        }
    }
}
