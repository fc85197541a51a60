//! Learned local write. Each layer gets a target activation predicted from
//! the stored value by a backward feedback prediction function (BFPF), and
//! is updated with a perceptron-style rule using only its own input and
//! output activations:
//!
//! `M^l <- M^l - beta^l (z^l - z'^l) z^{l-1}^T`
//!
//! All layers use activations from the same forward pass with the old
//! weights, so the per-layer updates are independent of one another.

use std::collections::BTreeMap;

use rand::Rng;

use super::{forward, mean_of, memory_loss, squared_error, MemoryLayout, MemoryParams, Result, WriteOutcome};
use crate::autodiff::{ParamStore, Real, Tensor, TensorError};
use crate::init::uniform_fan_in;

pub const BFPF_RHO: &str = "bfpf.rho";

fn map_names(l: usize) -> (String, String) {
    (format!("bfpf.{l}.w"), format!("bfpf.{l}.b"))
}

/// Adds BFPF parameters for `layout` to `store`: one `d_v -> D_l` tanh map
/// per hidden layer and one rate logit per layer (starting at 0, i.e. a
/// per-layer factor of 0.5).
pub fn init_bfpf<T: Real, R: Rng>(store: &mut ParamStore<T>, layout: &MemoryLayout, rng: &mut R) -> Result<()> {
    let d_v = layout.d_v();
    for l in 1..layout.n_layers() {
        let (w, b) = map_names(l);
        let width = layout.widths[l];
        store.insert(w, uniform_fan_in(rng, &[d_v, width], d_v))?;
        store.insert(b, uniform_fan_in(rng, &[width], d_v))?;
    }
    store.insert(BFPF_RHO, Tensor::zeros(&[layout.n_layers()]))?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct BfpfParams<T: Real> {
    /// `(W, b)` for hidden layers `1..L`.
    pub maps: Vec<(Tensor<T>, Tensor<T>)>,
    /// Per-layer rate logits, `[L]`.
    pub rho: Tensor<T>,
}

impl<T: Real> BfpfParams<T> {
    pub fn bind(layout: &MemoryLayout, t: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let get = |n: &str| {
            t.get(n)
                .cloned()
                .ok_or_else(|| TensorError::UnknownParam(n.to_string()))
        };
        let maps = (1..layout.n_layers())
            .map(|l| {
                let (w, b) = map_names(l);
                Ok((get(&w)?, get(&b)?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            maps,
            rho: get(BFPF_RHO)?,
        })
    }

    /// `beta^l = beta * sigmoid(rho_l)` for every layer, each `[B]`.
    pub fn layer_rates(&self, beta: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        let gate = self.rho.sigmoid()?;
        let n = beta.shape()[0];
        (0..self.rho.numel())
            .map(|l| beta.mul(&gate.slice(0, l, 1)?.fill(&[n])?))
            .collect()
    }
}

/// Predicted activations `z'^l` for layers `1..=L`. Hidden layers use
/// `tanh(v W_l + b_l)`; the output layer's prediction is the value itself.
pub fn bfpf_predict<T: Real>(bfpf: &BfpfParams<T>, value: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let mut out = bfpf
        .maps
        .iter()
        .map(|(w, b)| crate::controller::linear(value, w, b)?.tanh())
        .collect::<Result<Vec<_>>>()?;
    out.push(value.clone());
    Ok(out)
}

/// Scaled per-layer updates `beta^l * mean_i (z^l_i - z'^l_i) z^{l-1}_i^T`.
///
/// `layer_targets[i][l-1]` is head `i`'s target for layer `l`; `rates[l-1]`
/// is `[B]`.
pub fn local_layer_updates<T: Real>(
    params: &MemoryParams<T>,
    write_keys: &[Tensor<T>],
    layer_targets: &[Vec<Tensor<T>>],
    rates: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    let acts = head_activations(params, write_keys, layer_targets, rates)?;
    updates_from(&acts, layer_targets, rates)
}

fn head_activations<T: Real>(
    params: &MemoryParams<T>,
    write_keys: &[Tensor<T>],
    layer_targets: &[Vec<Tensor<T>>],
    rates: &[Tensor<T>],
) -> Result<Vec<Vec<Tensor<T>>>> {
    let n_layers = params.layers.len();
    if write_keys.is_empty() || layer_targets.len() != write_keys.len() || rates.len() != n_layers {
        return Err(TensorError::InvalidArgument {
            op: "write_local",
            msg: format!(
                "{} keys, {} target sets, {} rates for {} layers",
                write_keys.len(),
                layer_targets.len(),
                rates.len(),
                n_layers
            ),
        });
    }
    write_keys.iter().map(|k| forward(params, k)).collect()
}

fn updates_from<T: Real>(
    acts: &[Vec<Tensor<T>>],
    layer_targets: &[Vec<Tensor<T>>],
    rates: &[Tensor<T>],
) -> Result<Vec<Tensor<T>>> {
    (1..=rates.len())
        .map(|l| {
            let per_head = acts
                .iter()
                .zip(layer_targets)
                .map(|(z, zt)| z[l].sub(&zt[l - 1])?.scale_rows(&rates[l - 1])?.bouter(&z[l - 1]))
                .collect::<Result<Vec<_>>>()?;
            let delta = mean_of(per_head.iter())?;
            delta.ensure_finite("local memory update")?;
            Ok(delta)
        })
        .collect()
}

/// Applies explicit per-layer targets. The output-layer targets double as
/// the stored values for the before/after losses.
pub fn write_local_with_targets<T: Real>(
    params: &MemoryParams<T>,
    write_keys: &[Tensor<T>],
    layer_targets: &[Vec<Tensor<T>>],
    rates: &[Tensor<T>],
) -> Result<WriteOutcome<T>> {
    let acts = head_activations(params, write_keys, layer_targets, rates)?;
    let values: Vec<Tensor<T>> = layer_targets.iter().map(|t| t.last().unwrap().clone()).collect();
    // The forward pass for the update already gives the pre-write recall.
    let residuals = acts
        .iter()
        .zip(&values)
        .map(|(z, v)| squared_error(z.last().unwrap(), v))
        .collect::<Result<Vec<_>>>()?;
    let loss_before = mean_of(residuals.iter())?;
    // Same result as subtracting `updates_from`, without the full-size deltas.
    let layers = params
        .layers
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let l = i + 1;
            let pairs = acts
                .iter()
                .zip(layer_targets)
                .map(|(z, zt)| Ok((z[l].sub(&zt[l - 1])?.scale_rows(&rates[l - 1])?, z[l - 1].clone())))
                .collect::<Result<Vec<_>>>()?;
            let updated = m.sub_mean_outer(&pairs)?;
            updated.ensure_finite("local memory update")?;
            Ok(updated)
        })
        .collect::<Result<Vec<_>>>()?;
    let new = MemoryParams {
        layers,
        activations: params.activations.clone(),
    };
    let loss_after = memory_loss(&new, write_keys, &values)?;
    Ok(WriteOutcome {
        loss_before,
        loss_after,
        params: new,
    })
}

/// Local write with BFPF-predicted targets and rates `beta * sigmoid(rho_l)`.
pub fn write_local<T: Real>(
    params: &MemoryParams<T>,
    bfpf: &BfpfParams<T>,
    write_keys: &[Tensor<T>],
    targets: &[Tensor<T>],
    beta: &Tensor<T>,
) -> Result<WriteOutcome<T>> {
    let layer_targets = targets
        .iter()
        .map(|v| bfpf_predict(bfpf, v))
        .collect::<Result<Vec<_>>>()?;
    let rates = bfpf.layer_rates(beta)?;
    write_local_with_targets(params, write_keys, &layer_targets, &rates)
}
