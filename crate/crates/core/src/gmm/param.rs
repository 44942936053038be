//! Parameters of the pooled-covariance Gaussian mixture.

use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{argument, DomainViolation, Error, Result};

/// Tolerance on `Σ α_ℓ = 1`.
const SIMPLEX_TOL: f64 = 1e-12;

/// θ = (α, μ_1..μ_g, Σ) with a covariance shared by all components.
///
/// The covariance is held through its lower Cholesky factor `L` (`Σ = L Lᵀ`);
/// the precision `Γ = Σ⁻¹`, its log-determinant, and the whitened means
/// `L⁻¹ μ_ℓ` are derived once at construction.
#[derive(Clone, Debug)]
pub struct GmmParameter {
    g: usize,
    p: usize,
    weights: Vec<f64>,
    log_weights: Vec<f64>,
    means: Vec<f64>,
    chol: Vec<f64>,
    whitened_means: Vec<f64>,
    log_det_precision: f64,
}

impl GmmParameter {
    /// Builds θ from weights, `g × p` row-major means and a `p × p` row-major covariance.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, covariance: &[f64]) -> Result<Self> {
        let g = weights.len();
        if g == 0 {
            return Err(argument("a mixture needs at least one component"));
        }
        if !means.len().is_multiple_of(g) || means.is_empty() {
            return Err(argument("means must be a g × p array"));
        }
        let p = means.len() / g;
        if covariance.len() != p * p {
            return Err(argument(format!("covariance must be {p} × {p}")));
        }
        let chol = cholesky_lower(covariance, p).ok_or(Error::Domain(DomainViolation::DegenerateCovariance))?;
        GmmParameter::from_cholesky(weights, means, chol)
    }

    /// Builds θ from the row-major lower Cholesky factor of the covariance.
    pub fn from_cholesky(weights: Vec<f64>, means: Vec<f64>, chol: Vec<f64>) -> Result<Self> {
        let g = weights.len();
        if g == 0 || means.is_empty() || !means.len().is_multiple_of(g) {
            return Err(argument("means must be a g × p array"));
        }
        let p = means.len() / g;
        if chol.len() != p * p {
            return Err(argument(format!("Cholesky factor must be {p} × {p}")));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(argument("weights must be finite and non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(argument(format!("weights sum to {total}, not 1")));
        }
        if means.iter().chain(&chol).any(|v| !v.is_finite()) {
            return Err(argument("means and covariance must be finite"));
        }
        for a in 0..p {
            if !(chol[a * p + a] > 0.0) {
                return Err(Error::Domain(DomainViolation::DegenerateCovariance));
            }
            for b in a + 1..p {
                if chol[a * p + b] != 0.0 {
                    return Err(argument("Cholesky factor must be lower triangular"));
                }
            }
        }
        let log_det_precision = -2.0 * (0..p).map(|a| chol[a * p + a].ln()).sum::<f64>();
        let mut whitened_means = vec![0.0; g * p];
        for l in 0..g {
            forward_substitute(&chol, p, &means[l * p..(l + 1) * p], &mut whitened_means[l * p..(l + 1) * p]);
        }
        let log_weights = weights.iter().map(|w| w.ln()).collect();
        Ok(GmmParameter {
            g,
            p,
            weights,
            log_weights,
            means,
            chol,
            whitened_means,
            log_det_precision,
        })
    }

    pub fn components(&self) -> usize {
        self.g
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn mean(&self, l: usize) -> &[f64] {
        &self.means[l * self.p..(l + 1) * self.p]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    /// Row-major lower Cholesky factor of Σ.
    pub fn cov_cholesky(&self) -> &[f64] {
        &self.chol
    }

    pub(crate) fn whitened_mean(&self, l: usize) -> &[f64] {
        &self.whitened_means[l * self.p..(l + 1) * self.p]
    }

    /// `ln det Γ`.
    pub fn log_det_precision(&self) -> f64 {
        self.log_det_precision
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        let l = DMatrix::from_row_slice(self.p, self.p, &self.chol);
        &l * l.transpose()
    }

    /// `Γ = Σ⁻¹`, symmetric.
    pub fn precision(&self) -> DMatrix<f64> {
        let p = self.p;
        let mut gamma = DMatrix::zeros(p, p);
        let mut e = vec![0.0; p];
        let mut w = vec![0.0; p];
        let mut col = vec![0.0; p];
        for j in 0..p {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            forward_substitute(&self.chol, p, &e, &mut w);
            back_substitute_transposed(&self.chol, p, &w, &mut col);
            for i in 0..p {
                gamma[(i, j)] = col[i];
            }
        }
        (&gamma + gamma.transpose()) * 0.5
    }

    /// Writes `L⁻¹ y` into `out`.
    #[inline]
    pub(crate) fn whiten(&self, y: &[f64], out: &mut [f64]) {
        forward_substitute(&self.chol, self.p, y, out);
    }

    /// `Γ v`, via two triangular solves.
    pub(crate) fn precision_times(&self, v: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.p];
        let mut out = vec![0.0; self.p];
        forward_substitute(&self.chol, self.p, v, &mut w);
        back_substitute_transposed(&self.chol, self.p, &w, &mut out);
        out
    }

    /// Flat key-value text form: weights, means row-major, covariance
    /// Cholesky factor row-major.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let join = |vals: &[f64]| vals.iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ");
        writeln!(out, "# gmm-parameter v1").unwrap();
        writeln!(out, "components = {}", self.g).unwrap();
        writeln!(out, "dim = {}", self.p).unwrap();
        writeln!(out, "weights = {}", join(&self.weights)).unwrap();
        for l in 0..self.g {
            writeln!(out, "mean.{l} = {}", join(self.mean(l))).unwrap();
        }
        writeln!(out, "cov_cholesky = {}", join(&self.chol)).unwrap();
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut g = None;
        let mut p = None;
        let mut weights = None;
        let mut means: Vec<Option<Vec<f64>>> = Vec::new();
        let mut chol = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: lineno + 1,
                col: 1,
                msg: "expected 'key = value'".into(),
            })?;
            let key = key.trim();
            let numbers = || -> Result<Vec<f64>> {
                value
                    .split_whitespace()
                    .enumerate()
                    .map(|(c, tok)| {
                        tok.parse::<f64>().map_err(|e| Error::Parse {
                            row: lineno + 1,
                            col: c + 1,
                            msg: format!("'{tok}': {e}"),
                        })
                    })
                    .collect()
            };
            let count = || -> Result<usize> {
                value.trim().parse().map_err(|e| Error::Parse {
                    row: lineno + 1,
                    col: 1,
                    msg: format!("{e}"),
                })
            };
            match key {
                "components" => g = Some(count()?),
                "dim" => p = Some(count()?),
                "weights" => weights = Some(numbers()?),
                "cov_cholesky" => chol = Some(numbers()?),
                k if k.starts_with("mean.") => {
                    let l: usize = k[5..].parse().map_err(|_| Error::Parse {
                        row: lineno + 1,
                        col: 1,
                        msg: format!("bad component index in '{k}'"),
                    })?;
                    if means.len() <= l {
                        means.resize(l + 1, None);
                    }
                    means[l] = Some(numbers()?);
                }
                other => {
                    return Err(Error::Parse {
                        row: lineno + 1,
                        col: 1,
                        msg: format!("unknown key '{other}'"),
                    })
                }
            }
        }
        let missing = |what: &str| Error::Format(format!("missing '{what}'"));
        let g = g.ok_or_else(|| missing("components"))?;
        let p = p.ok_or_else(|| missing("dim"))?;
        let weights = weights.ok_or_else(|| missing("weights"))?;
        let chol = chol.ok_or_else(|| missing("cov_cholesky"))?;
        if weights.len() != g || means.len() != g {
            return Err(Error::Format(format!("expected {g} weights and {g} means")));
        }
        let mut flat = Vec::with_capacity(g * p);
        for (l, m) in means.into_iter().enumerate() {
            let m = m.ok_or_else(|| Error::Format(format!("missing 'mean.{l}'")))?;
            if m.len() != p {
                return Err(Error::Format(format!("mean.{l} has {} entries, expected {p}", m.len())));
            }
            flat.extend(m);
        }
        GmmParameter::from_cholesky(weights, flat, chol)
    }
}

/// Lower Cholesky factor of a row-major symmetric matrix, or `None` when it
/// is not positive definite.
pub(crate) fn cholesky_lower(a: &[f64], p: usize) -> Option<Vec<f64>> {
    let m = DMatrix::from_row_slice(p, p, a);
    let m = (&m + m.transpose()) * 0.5;
    let chol = nalgebra::Cholesky::new(m)?;
    let l = chol.l();
    let mut out = vec![0.0; p * p];
    for i in 0..p {
        for j in 0..=i {
            out[i * p + j] = l[(i, j)];
        }
    }
    if out.iter().all(|v| v.is_finite()) && (0..p).all(|i| out[i * p + i] > 0.0) {
        Some(out)
    } else {
        None
    }
}

/// Solves `L x = b` for row-major lower-triangular `L`.
#[inline]
pub(crate) fn forward_substitute(l: &[f64], p: usize, b: &[f64], x: &mut [f64]) {
    for i in 0..p {
        let row = &l[i * p..i * p + i];
        let mut acc = b[i];
        for (lij, xj) in row.iter().zip(&x[..i]) {
            acc -= lij * xj;
        }
        x[i] = acc / l[i * p + i];
    }
}

/// Solves `Lᵀ x = b` for row-major lower-triangular `L`.
pub(crate) fn back_substitute_transposed(l: &[f64], p: usize, b: &[f64], x: &mut [f64]) {
    for i in (0..p).rev() {
        let mut acc = b[i];
        for j in i + 1..p {
            acc -= l[j * p + i] * x[j];
        }
        x[i] = acc / l[i * p + i];
    }
}
