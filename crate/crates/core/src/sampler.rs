//! Seeded minibatch index streams.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{argument, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SamplingMode {
    /// Independent uniform draws on `{0, …, n−1}`.
    #[default]
    WithReplacement,
    /// A uniformly random `b`-subset, returned in random order.
    WithoutReplacement,
}

impl SamplingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SamplingMode::WithReplacement => "with-replacement",
            SamplingMode::WithoutReplacement => "without-replacement",
        }
    }
}

impl std::str::FromStr for SamplingMode {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "with-replacement" | "with" => Ok(SamplingMode::WithReplacement),
            "without-replacement" | "without" => Ok(SamplingMode::WithoutReplacement),
            other => Err(argument(format!("unknown sampling mode '{other}'"))),
        }
    }
}

/// Draws minibatches of a fixed size from a ChaCha8 stream.
///
/// Two samplers built from the same seed produce the same index sequence for
/// the same sequence of calls.
#[derive(Clone, Debug)]
pub struct MinibatchSampler {
    rng: ChaCha8Rng,
    mode: SamplingMode,
    batch_size: usize,
}

impl MinibatchSampler {
    pub fn new(seed: u64, mode: SamplingMode, batch_size: usize) -> Result<Self> {
        if batch_size == 0 {
            return Err(argument("minibatch size must be positive"));
        }
        Ok(MinibatchSampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            mode,
            batch_size,
        })
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn sample(&mut self, n: usize) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(self.batch_size);
        self.sample_into(n, &mut out)?;
        Ok(out)
    }

    /// Replaces the contents of `out` with the next minibatch.
    pub fn sample_into(&mut self, n: usize, out: &mut Vec<usize>) -> Result<()> {
        if n == 0 {
            return Err(argument("cannot sample from an empty dataset"));
        }
        out.clear();
        match self.mode {
            SamplingMode::WithReplacement => {
                out.extend((0..self.batch_size).map(|_| self.rng.random_range(0..n)));
            }
            SamplingMode::WithoutReplacement => {
                if self.batch_size > n {
                    return Err(argument(format!(
                        "batch size {} exceeds n = {n} when sampling without replacement",
                        self.batch_size
                    )));
                }
                out.extend(index::sample(&mut self.rng, n, self.batch_size).iter());
            }
        }
        Ok(())
    }
}
