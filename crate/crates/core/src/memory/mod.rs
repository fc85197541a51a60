//! The neural memory: a bias-free feed-forward network `f_phi` whose weights
//! are episode state. Reading pushes keys through the network; writing
//! changes the weights in one shot.
//!
//! Weights are batched as `[B, out, in]`, one matrix stack per episode in
//! the batch. Keys and values are `[B, d]`.

mod local;
pub mod sdm;

use rand::Rng;

use crate::autodiff::{Real, Tape, Tensor, TensorError};
use crate::init::uniform;

pub use local::{
    bfpf_predict, init_bfpf, local_layer_updates, write_local, write_local_with_targets, BfpfParams, BFPF_RHO,
};

type Result<T> = std::result::Result<T, TensorError>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Tanh,
    Identity,
    /// Binary activation of sparse distributed memory: 1 where the Hamming
    /// distance `(n - m) / 2` between a ±1 address row of length `n` and a
    /// ±1 key is at most `delta`, else 0. Not differentiable; no gradient
    /// flows through it.
    Threshold {
        delta: f64,
    },
}

impl Activation {
    fn apply<T: Real>(self, pre: &Tensor<T>, fan_in: usize) -> Result<Tensor<T>> {
        match self {
            Activation::Tanh => pre.tanh(),
            Activation::Identity => Ok(pre.clone()),
            Activation::Threshold { delta } => {
                let n = fan_in as f64;
                let d = pre
                    .data()
                    .iter()
                    .map(|&m| {
                        if 0.5 * (n - m.as_f64()) <= delta {
                            T::one()
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                Tensor::new(d, pre.shape())
            }
        }
    }
}

/// Layer widths `[d_k, D_1, ..., D_{L-1}, d_v]` and the activation used
/// after each layer.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryLayout {
    pub widths: Vec<usize>,
    pub activations: Vec<Activation>,
}

impl MemoryLayout {
    /// `layers` weight matrices with tanh everywhere: `d_k -> hidden -> ... -> d_v`.
    pub fn tanh(d_k: usize, hidden: usize, layers: usize, d_v: usize) -> Self {
        assert!(layers >= 1, "memory needs at least one layer");
        let mut widths = vec![d_k];
        widths.extend(std::iter::repeat_n(hidden, layers - 1));
        widths.push(d_v);
        Self {
            widths,
            activations: vec![Activation::Tanh; layers],
        }
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn d_k(&self) -> usize {
        self.widths[0]
    }

    pub fn d_v(&self) -> usize {
        *self.widths.last().unwrap()
    }

    /// Scalars held by one episode's memory weights.
    pub fn num_scalars(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }
}

/// Memory weights for a batch of episodes.
#[derive(Clone, Debug)]
pub struct MemoryParams<T: Real> {
    pub layers: Vec<Tensor<T>>,
    pub activations: Vec<Activation>,
}

impl<T: Real> MemoryParams<T> {
    pub fn batch(&self) -> usize {
        self.layers[0].shape()[0]
    }

    pub fn num_scalars(&self) -> usize {
        self.layers.iter().map(Tensor::numel).sum::<usize>() / self.batch()
    }

    fn tape(&self) -> Option<&Tape<T>> {
        self.layers.iter().find_map(Tensor::tape)
    }

    pub fn detach(&self) -> Self {
        Self {
            layers: self.layers.iter().map(Tensor::detach).collect(),
            activations: self.activations.clone(),
        }
    }
}

/// The fixed random starting weights `phi_0`. Sampled once per model and
/// reused at every episode start; never trained. Entries are uniform in
/// `±sqrt(3 / fan_in)`, unit variance for each pre-activation.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryInit<T> {
    pub layout: MemoryLayout,
    /// Row-major `[out, in]` matrices.
    pub weights: Vec<Vec<T>>,
}

impl<T: Real> MemoryInit<T> {
    pub fn sample<R: Rng>(layout: MemoryLayout, rng: &mut R) -> Self {
        let weights = layout
            .widths
            .windows(2)
            .map(|w| uniform::<T, R>(rng, &[w[1], w[0]], (3.0 / w[0] as f64).sqrt()).to_vec())
            .collect();
        Self { layout, weights }
    }

    pub fn from_matrices(layout: MemoryLayout, weights: Vec<Vec<T>>) -> Self {
        Self { layout, weights }
    }

    /// Tabula-rasa memory for `batch` episodes: copies of `phi_0` as
    /// constants.
    pub fn reset(&self, batch: usize) -> MemoryParams<T> {
        let layers = self
            .layout
            .widths
            .windows(2)
            .zip(&self.weights)
            .map(|(w, m)| {
                let single = Tensor::new(m.clone(), &[w[1], w[0]]).expect("init shape");
                single.expand(0, batch).expect("expand")
            })
            .collect();
        MemoryParams {
            layers,
            activations: self.layout.activations.clone(),
        }
    }
}

/// Forward activations `[z^0 = key, z^1, ..., z^L]`.
pub fn forward<T: Real>(params: &MemoryParams<T>, key: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
    let mut acts = Vec::with_capacity(params.layers.len() + 1);
    acts.push(key.clone());
    for (m, act) in params.layers.iter().zip(&params.activations) {
        let pre = m.bmatvec(acts.last().unwrap())?;
        acts.push(act.apply(&pre, m.shape()[2])?);
    }
    Ok(acts)
}

/// Per head, the activations of every layer.
pub type HeadActivations<T> = Vec<Vec<Tensor<T>>>;

/// Read-out: the mean over heads of `f_phi(k_i)`, plus every head's
/// activations.
pub fn read<T: Real>(params: &MemoryParams<T>, keys: &[Tensor<T>]) -> Result<(Tensor<T>, HeadActivations<T>)> {
    if keys.is_empty() {
        return Err(TensorError::InvalidArgument {
            op: "memory::read",
            msg: "no read keys".into(),
        });
    }
    let acts = keys.iter().map(|k| forward(params, k)).collect::<Result<Vec<_>>>()?;
    let readout = mean_of(acts.iter().map(|a| a.last().unwrap()))?;
    Ok((readout, acts))
}

pub(crate) fn mean_of<'a, T: Real>(xs: impl Iterator<Item = &'a Tensor<T>>) -> Result<Tensor<T>> {
    let xs: Vec<&Tensor<T>> = xs.collect();
    let mut acc = xs[0].clone();
    for x in &xs[1..] {
        acc = acc.add(x)?;
    }
    if xs.len() == 1 {
        Ok(acc)
    } else {
        acc.scale(T::lit(1.0 / xs.len() as f64))
    }
}

/// Mean over value components of `(pred - target)^2`, per row: `[B]`.
pub fn squared_error<T: Real>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<Tensor<T>> {
    let diff = pred.sub(target)?;
    let d_v = diff.shape()[1];
    diff.row_dot(&diff)?.scale(T::lit(1.0 / d_v as f64))
}

/// Per-episode write loss: the mean-squared recall error
/// `(1/H) sum_i ||f_phi(k_i) - v_i||^2 / d_v`, shape `[B]`.
pub fn memory_loss<T: Real>(
    params: &MemoryParams<T>,
    write_keys: &[Tensor<T>],
    targets: &[Tensor<T>],
) -> Result<Tensor<T>> {
    check_heads(write_keys, targets)?;
    let per_head = write_keys
        .iter()
        .zip(targets)
        .map(|(k, v)| {
            let pred = forward(params, k)?.pop().unwrap();
            squared_error(&pred, v)
        })
        .collect::<Result<Vec<_>>>()?;
    mean_of(per_head.iter())
}

fn check_heads<T: Real>(keys: &[Tensor<T>], values: &[Tensor<T>]) -> Result<()> {
    if keys.is_empty() || keys.len() != values.len() {
        return Err(TensorError::InvalidArgument {
            op: "memory write",
            msg: format!("{} keys for {} values", keys.len(), values.len()),
        });
    }
    Ok(())
}

/// Result of one memory write. Losses are per episode, `[B]`.
#[derive(Clone, Debug)]
pub struct WriteOutcome<T: Real> {
    pub loss_before: Tensor<T>,
    pub loss_after: Tensor<T>,
    pub params: MemoryParams<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GradientWrite {
    /// Record the inner gradient on the tape so the outer loss can be
    /// differentiated through it. Without it the inner gradient is a
    /// constant (first-order approximation).
    pub track_higher_order: bool,
    pub inner_steps: usize,
}

impl Default for GradientWrite {
    fn default() -> Self {
        Self {
            track_higher_order: true,
            inner_steps: 1,
        }
    }
}

/// `phi_t = phi_{t-1} - beta * grad_phi L_up`, with `beta: [B]`.
pub fn write_gradient<T: Real>(
    params: &MemoryParams<T>,
    write_keys: &[Tensor<T>],
    targets: &[Tensor<T>],
    beta: &Tensor<T>,
    opts: GradientWrite,
) -> Result<WriteOutcome<T>> {
    check_heads(write_keys, targets)?;
    let outer_tape = params
        .tape()
        .or_else(|| write_keys.iter().chain(targets).find_map(Tensor::tape))
        .or_else(|| beta.tape())
        .cloned();
    let mut current = params.clone();
    let mut loss_before = None;
    for _ in 0..opts.inner_steps.max(1) {
        let (loss, grads) = match (&outer_tape, opts.track_higher_order) {
            (Some(tape), true) => {
                let aliases = current
                    .layers
                    .iter()
                    .map(|m| {
                        if m.is_attached() {
                            m.alias()
                        } else {
                            Ok(tape.var(m.clone()))
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let inner = MemoryParams {
                    layers: aliases.clone(),
                    activations: current.activations.clone(),
                };
                let loss = memory_loss(&inner, write_keys, targets)?;
                let wrt: Vec<&Tensor<T>> = aliases.iter().collect();
                let grads = tape.grad(&loss.sum()?, &wrt, true)?;
                current = inner;
                (loss, grads)
            }
            _ => {
                let scratch = Tape::new();
                let leaves: Vec<Tensor<T>> = current.layers.iter().map(|m| scratch.var(m.detach())).collect();
                let inner = MemoryParams {
                    layers: leaves.clone(),
                    activations: current.activations.clone(),
                };
                let keys: Vec<_> = write_keys.iter().map(Tensor::detach).collect();
                let vals: Vec<_> = targets.iter().map(Tensor::detach).collect();
                let loss = memory_loss(&inner, &keys, &vals)?;
                let wrt: Vec<&Tensor<T>> = leaves.iter().collect();
                let grads = scratch
                    .grad(&loss.sum()?, &wrt, false)?
                    .into_iter()
                    .map(|g| g.map(|g| g.detach()))
                    .collect();
                (loss.detach(), grads)
            }
        };
        if loss_before.is_none() {
            loss_before = Some(loss);
        }
        let mut layers = Vec::with_capacity(current.layers.len());
        for (m, g) in current.layers.iter().zip(grads) {
            let updated = match g {
                Some(g) => {
                    g.ensure_finite("memory gradient")?;
                    m.sub(&g.scale_rows(beta)?)?
                }
                None => m.clone(),
            };
            layers.push(updated);
        }
        current = MemoryParams {
            layers,
            activations: current.activations,
        };
    }
    let loss_after = memory_loss(&current, write_keys, targets)?;
    Ok(WriteOutcome {
        loss_before: loss_before.expect("at least one inner step"),
        loss_after,
        params: current,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::{stream_rng, Stream};

    fn single(layout: MemoryLayout, mats: Vec<Vec<f64>>) -> MemoryParams<f64> {
        MemoryInit::from_matrices(layout, mats).reset(1)
    }

    fn row(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(v, &[1, v.len()]).unwrap()
    }

    fn random_memory(seed: u64, d: usize) -> MemoryParams<f64> {
        MemoryInit::sample(
            MemoryLayout::tanh(d, d, 3, d),
            &mut stream_rng(seed, Stream::MemoryInit),
        )
        .reset(1)
    }

    #[test]
    fn zero_weights_read_zero() {
        let mem = MemoryInit::<f64>::from_matrices(
            MemoryLayout::tanh(2, 3, 3, 2),
            vec![vec![0.0; 6], vec![0.0; 9], vec![0.0; 6]],
        )
        .reset(1);
        let (r, _) = read(&mem, &[row(&[0.3, -0.9])]).unwrap();
        assert_eq!(r.data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_layer_read() {
        let mem = single(MemoryLayout::tanh(1, 1, 1, 1), vec![vec![1.0]]);
        let (r, _) = read(&mem, &[row(&[0.5])]).unwrap();
        assert!((r.item() - 0.5f64.tanh()).abs() < 1e-15);
        assert!((r.item() - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn one_head_read_equals_head_output() {
        let mem = random_memory(1, 4);
        let k = row(&[0.1, 0.2, -0.3, 0.4]);
        let (r, acts) = read(&mem, &[k]).unwrap();
        assert_eq!(r.data(), acts[0][3].data());
    }

    #[test]
    fn memory_loss_examples() {
        let ident = MemoryLayout {
            widths: vec![1, 1],
            activations: vec![Activation::Identity],
        };
        let mem = single(ident.clone(), vec![vec![0.0]]);
        let l = memory_loss(&mem, &[row(&[1.0])], &[row(&[2.0])]).unwrap();
        assert_eq!(l.item(), 4.0);

        // Two heads: predictions 0.5*1 and 0.5*(-2) against 2 and 0.
        let mem = single(ident, vec![vec![0.5]]);
        let l = memory_loss(&mem, &[row(&[1.0]), row(&[-2.0])], &[row(&[2.0]), row(&[0.0])]).unwrap();
        assert_eq!(l.item(), ((0.5f64 - 2.0).powi(2) + 1.0) / 2.0);

        // Targets equal to predictions.
        let mem = random_memory(2, 3);
        let k = row(&[0.3, 0.1, -0.5]);
        let v = forward(&mem, &k).unwrap().pop().unwrap();
        assert_eq!(memory_loss(&mem, &[k], &[v]).unwrap().item(), 0.0);
    }

    #[test]
    fn zero_beta_is_noop() {
        let mem = random_memory(3, 4);
        let k = row(&[0.1, 0.2, -0.3, 0.4]);
        let v = row(&[0.5, -0.5, 0.2, 0.0]);
        for track in [true, false] {
            let out = write_gradient(
                &mem,
                std::slice::from_ref(&k),
                std::slice::from_ref(&v),
                &Tensor::from_vec(vec![0.0]),
                GradientWrite {
                    track_higher_order: track,
                    inner_steps: 1,
                },
            )
            .unwrap();
            for (a, b) in out.params.layers.iter().zip(&mem.layers) {
                assert_eq!(a.data(), b.data());
            }
            assert_eq!(out.loss_before.item(), out.loss_after.item());
        }
    }

    #[test]
    fn linear_gradient_write_by_hand() {
        // grad_M = 2 (M k - v) k^T = [[-4]], so M' = 0 - 0.5 * (-4) = 2.
        let ident = MemoryLayout {
            widths: vec![1, 1],
            activations: vec![Activation::Identity],
        };
        let mem = single(ident, vec![vec![0.0]]);
        let out = write_gradient(
            &mem,
            &[row(&[1.0])],
            &[row(&[2.0])],
            &Tensor::from_vec(vec![0.5]),
            GradientWrite::default(),
        )
        .unwrap();
        assert_eq!(out.params.layers[0].data(), &[2.0]);
        assert_eq!(out.loss_before.item(), 4.0);
        assert_eq!(out.loss_after.item(), 0.0);
    }

    #[test]
    fn small_step_descends() {
        let mut rng = stream_rng(9, Stream::Trace);
        let mut fails = 0;
        for seed in 0..200 {
            let mem = random_memory(seed, 5);
            let k = crate::init::uniform::<f64, _>(&mut rng, &[1, 5], 1.0);
            let v = crate::init::uniform::<f64, _>(&mut rng, &[1, 5], 1.0);
            let out = write_gradient(
                &mem,
                &[k],
                &[v],
                &Tensor::from_vec(vec![1e-2]),
                GradientWrite::default(),
            )
            .unwrap();
            if out.loss_after.item() > out.loss_before.item() {
                fails += 1;
            }
        }
        assert!(fails <= 2, "{fails} ascents");
    }

    #[test]
    fn multiple_inner_steps_keep_descending() {
        let mem = random_memory(4, 4);
        let k = row(&[0.1, 0.7, -0.3, 0.4]);
        let v = row(&[0.5, -0.5, 0.2, 0.3]);
        let beta = Tensor::from_vec(vec![0.5]);
        let one = write_gradient(
            &mem,
            std::slice::from_ref(&k),
            std::slice::from_ref(&v),
            &beta,
            GradientWrite::default(),
        )
        .unwrap();
        let three = write_gradient(
            &mem,
            &[k],
            &[v],
            &beta,
            GradientWrite {
                track_higher_order: true,
                inner_steps: 3,
            },
        )
        .unwrap();
        assert_eq!(one.loss_before.item(), three.loss_before.item());
        assert!(three.loss_after.item() < one.loss_after.item());
    }

    #[test]
    fn reset_is_fixed_per_seed() {
        let layout = MemoryLayout::tanh(3, 4, 3, 2);
        let a = MemoryInit::<f64>::sample(layout.clone(), &mut stream_rng(1, Stream::MemoryInit));
        let b = MemoryInit::<f64>::sample(layout.clone(), &mut stream_rng(1, Stream::MemoryInit));
        let c = MemoryInit::<f64>::sample(layout, &mut stream_rng(2, Stream::MemoryInit));
        assert_eq!(a, b);
        assert_ne!(a, c);
        let r1 = a.reset(2);
        let r2 = a.reset(2);
        for (x, y) in r1.layers.iter().zip(&r2.layers) {
            assert_eq!(x.data(), y.data());
            assert!(!x.is_attached());
        }
        assert_eq!(r1.num_scalars(), 3 * 4 + 4 * 4 + 4 * 2);
    }

    #[test]
    fn dim_mismatch_is_error() {
        let mem = random_memory(1, 4);
        assert!(read(&mem, &[row(&[0.1, 0.2])]).is_err());
        assert!(memory_loss(&mem, &[row(&[0.1; 4])], &[]).is_err());
    }
}
