use crate::error::{argument, Result};

/// Step-size sequence `γ_k`, indexed from `k = 1`.
#[derive(Clone, Debug, PartialEq)]
pub enum StepSchedule {
    /// `γ_k = γ`.
    Constant(f64),
    /// `γ_k = c / √k`.
    InverseSqrt(f64),
    /// Explicit values; indices past the end reuse the last entry.
    Table(Vec<f64>),
}

impl StepSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = |g: f64| g.is_finite() && g >= 0.0;
        match self {
            StepSchedule::Constant(g) if ok(*g) => Ok(()),
            StepSchedule::InverseSqrt(c) if ok(*c) && *c > 0.0 => Ok(()),
            StepSchedule::Table(v) if !v.is_empty() && v.iter().all(|g| ok(*g)) => Ok(()),
            other => Err(argument(format!("invalid step schedule {other:?}"))),
        }
    }

    /// Stricter check for algorithms whose analysis needs `γ > 0` throughout.
    pub fn validate_positive(&self) -> Result<()> {
        self.validate()?;
        let positive = match self {
            StepSchedule::Constant(g) => *g > 0.0,
            StepSchedule::InverseSqrt(_) => true,
            StepSchedule::Table(v) => v.iter().all(|g| *g > 0.0),
        };
        if positive {
            Ok(())
        } else {
            Err(argument("step sizes must be strictly positive"))
        }
    }

    pub fn gamma(&self, k: u64) -> f64 {
        debug_assert!(k >= 1, "step sizes are indexed from 1");
        match self {
            StepSchedule::Constant(g) => *g,
            StepSchedule::InverseSqrt(c) => c / (k.max(1) as f64).sqrt(),
            StepSchedule::Table(v) => {
                let idx = (k.max(1) - 1) as usize;
                v[idx.min(v.len() - 1)]
            }
        }
    }
}
