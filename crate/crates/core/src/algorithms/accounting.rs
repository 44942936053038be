//! Closed-form oracle costs.

use super::{Algorithm, AlgorithmKind};
use crate::error::{argument, Result};
use crate::ops::OracleCounts;

/// Terminal counters of a completed run without warm start.
///
/// The initial pass (`n` conditional expectations and one M-step) is
/// included. Returns `None` for SPIDER-EM-PL, whose cost depends on the drawn
/// loop lengths; see [`pl_counts`].
pub fn closed_form_counts(alg: &Algorithm, n: u64, b: u64) -> Option<OracleCounts> {
    let init = OracleCounts { ce: n, m_steps: 1 };
    let per_iter = |k_max: u64, ce: u64| OracleCounts {
        ce: ce * k_max,
        m_steps: k_max,
    };
    let extra = match alg {
        Algorithm::Em { k_max } => per_iter(*k_max, n),
        Algorithm::OnlineEm { k_max, .. } | Algorithm::Iem { k_max, .. } => per_iter(*k_max, b),
        Algorithm::Fiem { k_max, .. } => per_iter(*k_max, 2 * b),
        Algorithm::SemVr(c) | Algorithm::SpiderEm(c) | Algorithm::SpiderEmCv(c) => OracleCounts {
            ce: c.k_out * (n + 2 * b * (c.k_in - 1)),
            m_steps: c.k_out * c.k_in,
        },
        Algorithm::SpiderEmPl(_) => return None,
    };
    Some(init + extra)
}

/// SPIDER-EM-PL counters for the realised inner lengths `ξ_1, …, ξ_{k_out}`.
pub fn pl_counts(n: u64, b: u64, xis: &[u64]) -> OracleCounts {
    xis.iter().fold(OracleCounts { ce: n, m_steps: 1 }, |acc, xi| {
        acc + OracleCounts {
            ce: n + 2 * b * xi,
            m_steps: xi + 1,
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochCost {
    pub ce: u64,
    pub m_steps: u64,
}

/// Per-epoch oracle costs, an epoch being the selection of `n` examples.
///
/// Nested-loop algorithms alternate between an inner-loop epoch and a
/// refresh epoch; `pattern` lists the epochs of one period in run order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EpochAccounting {
    /// Cost of the initial pass, which selects no examples.
    pub init: EpochCost,
    pub pattern: Vec<EpochCost>,
}

impl EpochAccounting {
    /// Counters after `epochs` whole epochs, initial pass included.
    pub fn total(&self, epochs: u64) -> OracleCounts {
        let mut out = OracleCounts {
            ce: self.init.ce,
            m_steps: self.init.m_steps,
        };
        for e in 0..epochs {
            let c = self.pattern[(e % self.pattern.len() as u64) as usize];
            out.ce += c.ce;
            out.m_steps += c.m_steps;
        }
        out
    }
}

/// Per-epoch costs. Minibatch algorithms need `b | n`; nested-loop
/// algorithms additionally need an inner loop of exactly one epoch,
/// `(k_in − 1)·b = n`.
pub fn epoch_accounting(kind: AlgorithmKind, n: u64, b: u64, k_in: Option<u64>) -> Result<EpochAccounting> {
    if n == 0 || b == 0 {
        return Err(argument("n and b must be positive"));
    }
    let init = EpochCost { ce: n, m_steps: 1 };
    if kind == AlgorithmKind::Em {
        return Ok(EpochAccounting {
            init,
            pattern: vec![EpochCost { ce: n, m_steps: 1 }],
        });
    }
    if !n.is_multiple_of(b) {
        return Err(argument(format!("an epoch is not a whole number of minibatches (n = {n}, b = {b})")));
    }
    let per_epoch = n / b;
    let pattern = match kind {
        AlgorithmKind::Em => unreachable!(),
        AlgorithmKind::OnlineEm | AlgorithmKind::Iem => vec![EpochCost { ce: n, m_steps: per_epoch }],
        AlgorithmKind::Fiem => vec![EpochCost {
            ce: 2 * n,
            m_steps: per_epoch,
        }],
        AlgorithmKind::SemVr | AlgorithmKind::SpiderEm | AlgorithmKind::SpiderEmCv => {
            let k_in = k_in.ok_or_else(|| argument(format!("{kind} needs k_in")))?;
            if k_in < 2 || (k_in - 1) * b != n {
                return Err(argument(format!(
                    "epoch accounting needs (k_in - 1)·b = n, got k_in = {k_in}, b = {b}, n = {n}"
                )));
            }
            vec![
                EpochCost {
                    ce: 2 * n,
                    m_steps: per_epoch,
                },
                EpochCost { ce: n, m_steps: 1 },
            ]
        }
        AlgorithmKind::SpiderEmPl => {
            return Err(argument("SPIDER-EM-PL epochs have random length"));
        }
    };
    Ok(EpochAccounting { init, pattern })
}
