use crate::error::{argument, Result};
use crate::model::Model;
use crate::ops::Oracle;
use crate::stat::{PairwiseSum, StatVector};

/// The `n` per-sample statistics kept by iEM and FIEM, with their running
/// average `S̃`.
#[derive(Clone, Debug)]
pub struct PerSampleStatStore {
    q: usize,
    values: Vec<f64>,
    running: StatVector,
    scratch: Vec<f64>,
}

impl PerSampleStatStore {
    pub fn bytes_needed(n: usize, q: usize) -> usize {
        n.saturating_mul(q).saturating_mul(std::mem::size_of::<f64>())
    }

    /// Fills the store with `s̄_i(θ)` for every `i` (`n` oracle calls).
    pub(crate) fn build<M: Model>(oracle: &mut Oracle<'_, M>, theta: &M::Param, cap_bytes: usize) -> Result<Self> {
        let (n, q) = (oracle.n(), oracle.model().stat_dim());
        let need = Self::bytes_needed(n, q);
        if need > cap_bytes {
            return Err(argument(format!(
                "per-sample store needs {need} bytes, above the cap of {cap_bytes}"
            )));
        }
        let mut values = vec![0.0; n * q];
        for (i, row) in values.chunks_exact_mut(q).enumerate() {
            oracle.sbar_i_into(i, theta, row);
        }
        let mut store = PerSampleStatStore {
            q,
            values,
            running: StatVector::zeros(q),
            scratch: vec![0.0; q],
        };
        store.running = store.exact_mean();
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.q
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.values[i * self.q..(i + 1) * self.q]
    }

    /// The incrementally maintained `S̃`.
    pub fn running_mean(&self) -> &StatVector {
        &self.running
    }

    /// The mean of the stored vectors, recomputed from scratch.
    pub fn exact_mean(&self) -> StatVector {
        let mut acc = PairwiseSum::new(self.q);
        for row in self.values.chunks_exact(self.q) {
            acc.add(row);
        }
        let n = self.len() as f64;
        StatVector::from_vec(acc.finish().into_iter().map(|v| v / n).collect())
    }

    /// Replaces `𝖲_i` by `s̄_i(θ)` and updates `S̃` by `(new − old)/n`.
    ///
    /// A repeated index within one minibatch finds its slot already
    /// refreshed, so its second visit changes nothing.
    pub(crate) fn refresh<M: Model>(&mut self, oracle: &mut Oracle<'_, M>, i: usize, theta: &M::Param) {
        let q = self.q;
        oracle.sbar_i_into(i, theta, &mut self.scratch);
        let n = self.len() as f64;
        let slot = &mut self.values[i * q..(i + 1) * q];
        for ((r, old), new) in self.running.iter_mut().zip(slot.iter_mut()).zip(&self.scratch) {
            *r += (new - *old) / n;
            *old = *new;
        }
    }

    /// `b⁻¹ Σ_{i∈B} 𝖲_i`, with multiplicity.
    pub fn batch_mean(&self, indices: &[usize]) -> StatVector {
        let mut acc = PairwiseSum::new(self.q);
        for &i in indices {
            acc.add(self.get(i));
        }
        let b = indices.len() as f64;
        StatVector::from_vec(acc.finish().into_iter().map(|v| v / b).collect())
    }
}
