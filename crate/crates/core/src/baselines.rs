//! Soft-attention look-up table (SALU): an unbounded key/value store read
//! by softmax attention. Used in place of the neural memory as a baseline;
//! the plain LSTM baseline simply drops the memory path.

use crate::autodiff::{Real, Tensor, TensorError};
use crate::memory::mean_of;

type Result<T> = std::result::Result<T, TensorError>;

/// Stored slots for a batch of episodes: keys `[B, n, d_k]`, values
/// `[B, n, d_v]`. Grows by H slots per write, never overwrites.
#[derive(Clone, Debug)]
pub struct SlotTable<T: Real> {
    keys: Option<Tensor<T>>,
    values: Option<Tensor<T>>,
    batch: usize,
    d_k: usize,
    d_v: usize,
}

impl<T: Real> SlotTable<T> {
    pub fn new(batch: usize, d_k: usize, d_v: usize) -> Self {
        Self {
            keys: None,
            values: None,
            batch,
            d_k,
            d_v,
        }
    }

    pub fn len(&self) -> usize {
        self.keys.as_ref().map_or(0, |k| k.shape()[1])
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Scalars held per episode: `n (d_k + d_v)`.
    pub fn num_scalars(&self) -> usize {
        self.len() * (self.d_k + self.d_v)
    }

    pub fn keys(&self) -> Option<&Tensor<T>> {
        self.keys.as_ref()
    }

    pub fn values(&self) -> Option<&Tensor<T>> {
        self.values.as_ref()
    }

    /// Value stored at `slot` for batch element `b`.
    pub fn value_at(&self, b: usize, slot: usize) -> Option<Vec<T>> {
        let v = self.values.as_ref()?;
        if slot >= self.len() || b >= self.batch {
            return None;
        }
        let n = self.len();
        let start = (b * n + slot) * self.d_v;
        Some(v.data()[start..start + self.d_v].to_vec())
    }
}

fn stack<T: Real>(rows: &[Tensor<T>]) -> Result<Tensor<T>> {
    // [B, d] x H -> [B, H, d]
    let parts = rows
        .iter()
        .map(|r| {
            let s = r.shape();
            r.reshape(&[s[0], 1, s[1]])
        })
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Tensor<T>> = parts.iter().collect();
    Tensor::concat(&refs, 1)
}

/// Appends every head's `(key, value)` pair.
pub fn salu_write<T: Real>(
    table: &SlotTable<T>,
    write_keys: &[Tensor<T>],
    targets: &[Tensor<T>],
) -> Result<SlotTable<T>> {
    if write_keys.len() != targets.len() {
        return Err(TensorError::InvalidArgument {
            op: "salu_write",
            msg: format!("{} keys for {} values", write_keys.len(), targets.len()),
        });
    }
    if write_keys.is_empty() {
        return Ok(table.clone());
    }
    let k = stack(write_keys)?;
    let v = stack(targets)?;
    let join = |old: &Option<Tensor<T>>, new: Tensor<T>| match old {
        Some(o) => Tensor::concat(&[o, &new], 1),
        None => Ok(new),
    };
    Ok(SlotTable {
        keys: Some(join(&table.keys, k)?),
        values: Some(join(&table.values, v)?),
        ..table.clone()
    })
}

/// Per head, softmax over `<k_r, key_j>` weights the stored values; the
/// heads are averaged. An empty table reads as zeros.
pub fn salu_read<T: Real>(table: &SlotTable<T>, read_keys: &[Tensor<T>]) -> Result<Tensor<T>> {
    let (Some(keys), Some(values)) = (&table.keys, &table.values) else {
        return Ok(Tensor::zeros(&[table.batch, table.d_v]));
    };
    let heads = read_keys
        .iter()
        .map(|kr| {
            let w = keys.bmatvec(kr)?.log_softmax()?.exp()?;
            values.bmatvec_t(&w)
        })
        .collect::<Result<Vec<_>>>()?;
    mean_of(heads.iter())
}
