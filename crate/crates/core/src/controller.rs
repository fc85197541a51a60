//! LSTM controller: consumes the external input and the previous memory
//! read-out, emits interaction vectors and the rate, and produces the task
//! output from its hidden state and the current read-out.
//!
//! All tensors carry a leading batch axis `B`.

use std::collections::BTreeMap;

use rand::Rng;

use crate::autodiff::{ParamStore, Real, Tensor, TensorError};
use crate::init::{uniform, uniform_fan_in};

type Result<T> = std::result::Result<T, TensorError>;

/// Controller sizes. `n_in` is the width of the raw input features (a
/// one-hot token or a task vector); `d_i` the learned embedding width.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ControllerDims {
    pub n_in: usize,
    pub d_i: usize,
    pub d_h: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub d_o: usize,
    pub n_out: usize,
    pub heads: usize,
}

impl ControllerDims {
    /// Width of the concatenated interaction vector: H read keys, H write
    /// keys, H values and the rate vector.
    pub fn interaction_width(&self) -> usize {
        2 * self.heads * self.d_k + self.heads * self.d_v + self.d_k
    }

    fn lstm_in(&self) -> usize {
        self.d_i + self.d_v + self.d_h
    }
}

/// Which optional parameter groups a controller carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HeadSet {
    pub interactions: bool,
    pub rate: bool,
}

impl HeadSet {
    pub const ALL: HeadSet = HeadSet {
        interactions: true,
        rate: true,
    };
}

pub const EMBED: &str = "ctrl.embed";
pub const LSTM_W: &str = "ctrl.lstm.w";
pub const LSTM_B: &str = "ctrl.lstm.b";
pub const INTERACT_W: &str = "ctrl.interact.w";
pub const INTERACT_B: &str = "ctrl.interact.b";
pub const BETA_W: &str = "ctrl.beta.w";
pub const BETA_B: &str = "ctrl.beta.b";
pub const OUT_W: &str = "ctrl.out.w";
pub const OUT_B: &str = "ctrl.out.b";
pub const CLS_W: &str = "ctrl.cls.w";
pub const CLS_B: &str = "ctrl.cls.b";

/// Adds freshly initialised controller parameters to `store`.
///
/// Weights are uniform in `±1/sqrt(fan_in)` and token embeddings in
/// `±1`; the LSTM forget-gate bias starts at 1.
pub fn init_params<T: Real, R: Rng>(
    store: &mut ParamStore<T>,
    dims: &ControllerDims,
    heads: HeadSet,
    rng: &mut R,
) -> Result<()> {
    let d = dims;
    store.insert(EMBED, uniform(rng, &[d.n_in, d.d_i], 1.0))?;
    store.insert(LSTM_W, uniform_fan_in(rng, &[d.lstm_in(), 4 * d.d_h], d.lstm_in()))?;
    let mut b = uniform_fan_in::<T, R>(rng, &[4 * d.d_h], d.lstm_in()).to_vec();
    for v in &mut b[d.d_h..2 * d.d_h] {
        *v = T::one();
    }
    store.insert(LSTM_B, Tensor::from_vec(b))?;
    if heads.interactions {
        let w = d.interaction_width();
        store.insert(INTERACT_W, uniform_fan_in(rng, &[d.d_h, w], d.d_h))?;
        store.insert(INTERACT_B, uniform_fan_in(rng, &[w], d.d_h))?;
    }
    if heads.rate {
        store.insert(BETA_W, uniform_fan_in(rng, &[d.d_k, 1], d.d_k))?;
        store.insert(BETA_B, uniform_fan_in(rng, &[1], d.d_k))?;
    }
    store.insert(OUT_W, uniform_fan_in(rng, &[d.d_h + d.d_v, d.d_o], d.d_h + d.d_v))?;
    store.insert(OUT_B, uniform_fan_in(rng, &[d.d_o], d.d_h + d.d_v))?;
    store.insert(CLS_W, uniform_fan_in(rng, &[d.d_o, d.n_out], d.d_o))?;
    store.insert(CLS_B, uniform_fan_in(rng, &[d.n_out], d.d_o))?;
    Ok(())
}

/// Controller weights bound to tensors (tape leaves or constants).
#[derive(Clone, Debug)]
pub struct ControllerParams<T: Real> {
    pub dims: ControllerDims,
    pub embed: Tensor<T>,
    pub lstm_w: Tensor<T>,
    pub lstm_b: Tensor<T>,
    pub interact: Option<(Tensor<T>, Tensor<T>)>,
    pub beta: Option<(Tensor<T>, Tensor<T>)>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
    pub cls_w: Tensor<T>,
    pub cls_b: Tensor<T>,
}

impl<T: Real> ControllerParams<T> {
    pub fn bind(dims: ControllerDims, t: &BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let get = |n: &str| {
            t.get(n)
                .cloned()
                .ok_or_else(|| TensorError::UnknownParam(n.to_string()))
        };
        let pair = |w: &str, b: &str| match (t.get(w), t.get(b)) {
            (Some(w), Some(b)) => Some((w.clone(), b.clone())),
            _ => None,
        };
        Ok(Self {
            dims,
            embed: get(EMBED)?,
            lstm_w: get(LSTM_W)?,
            lstm_b: get(LSTM_B)?,
            interact: pair(INTERACT_W, INTERACT_B),
            beta: pair(BETA_W, BETA_B),
            out_w: get(OUT_W)?,
            out_b: get(OUT_B)?,
            cls_w: get(CLS_W)?,
            cls_b: get(CLS_B)?,
        })
    }
}

/// LSTM hidden and cell state plus the read-out fed back at the next step.
#[derive(Clone, Debug)]
pub struct ControllerState<T: Real> {
    pub h: Tensor<T>,
    pub c: Tensor<T>,
    pub v_read_prev: Tensor<T>,
}

impl<T: Real> ControllerState<T> {
    pub fn zeros(dims: &ControllerDims, batch: usize) -> Self {
        Self {
            h: Tensor::zeros(&[batch, dims.d_h]),
            c: Tensor::zeros(&[batch, dims.d_h]),
            v_read_prev: Tensor::zeros(&[batch, dims.d_v]),
        }
    }
}

/// Per-step interaction vectors. Keys and values are `[B, d_k]` / `[B, d_v]`,
/// one tensor per head; `beta` is `[B]`.
#[derive(Clone, Debug)]
pub struct InteractionSet<T: Real> {
    pub read_keys: Vec<Tensor<T>>,
    pub write_keys: Vec<Tensor<T>>,
    pub target_values: Vec<Tensor<T>>,
    pub beta_raw: Tensor<T>,
    pub beta: Option<Tensor<T>>,
}

/// `x W + b` for `x: [B, n]`.
pub fn linear<T: Real>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let batch = x.shape()[0];
    x.matmul(w)?.add(&b.expand(0, batch)?)
}

/// One LSTM step on `concat(embed(x), v_read_prev, h)`. Gate order in the
/// fused weight is input, forget, cell, output.
pub fn lstm_step<T: Real>(
    p: &ControllerParams<T>,
    state: &ControllerState<T>,
    x: &Tensor<T>,
) -> Result<ControllerState<T>> {
    let d_h = p.dims.d_h;
    let e = x.matmul(&p.embed)?;
    let inp = Tensor::concat(&[&e, &state.v_read_prev, &state.h], 1)?;
    let gates = linear(&inp, &p.lstm_w, &p.lstm_b)?;
    let i = gates.slice(1, 0, d_h)?.sigmoid()?;
    let f = gates.slice(1, d_h, d_h)?.sigmoid()?;
    let g = gates.slice(1, 2 * d_h, d_h)?.tanh()?;
    let o = gates.slice(1, 3 * d_h, d_h)?.sigmoid()?;
    let c = f.mul(&state.c)?.add(&i.mul(&g)?)?;
    let h = o.mul(&c.tanh()?)?;
    Ok(ControllerState {
        h,
        c,
        v_read_prev: state.v_read_prev.clone(),
    })
}

/// `tanh(W_v h + b_v)` sliced as all read keys, all write keys, all values,
/// then the rate vector; `beta = sigmoid(W_beta beta' + b_beta)`.
pub fn emit_interactions<T: Real>(p: &ControllerParams<T>, h: &Tensor<T>) -> Result<InteractionSet<T>> {
    let d = &p.dims;
    let (w, b) = p
        .interact
        .as_ref()
        .ok_or_else(|| TensorError::UnknownParam(INTERACT_W.into()))?;
    let all = linear(h, w, b)?.tanh()?;
    let mut off = 0;
    let mut take = |n: usize| -> Result<Tensor<T>> {
        let s = all.slice(1, off, n)?;
        off += n;
        Ok(s)
    };
    let read_keys = (0..d.heads).map(|_| take(d.d_k)).collect::<Result<Vec<_>>>()?;
    let write_keys = (0..d.heads).map(|_| take(d.d_k)).collect::<Result<Vec<_>>>()?;
    let target_values = (0..d.heads).map(|_| take(d.d_v)).collect::<Result<Vec<_>>>()?;
    let beta_raw = take(d.d_k)?;
    let beta = match &p.beta {
        Some((bw, bb)) => {
            let batch = h.shape()[0];
            Some(linear(&beta_raw, bw, bb)?.sigmoid()?.reshape(&[batch])?)
        }
        None => None,
    };
    Ok(InteractionSet {
        read_keys,
        write_keys,
        target_values,
        beta_raw,
        beta,
    })
}

/// `y = W_y [h; v_read] + b_y`, no nonlinearity.
pub fn output_head<T: Real>(p: &ControllerParams<T>, h: &Tensor<T>, v_read: &Tensor<T>) -> Result<Tensor<T>> {
    let hv = Tensor::concat(&[h, v_read], 1)?;
    linear(&hv, &p.out_w, &p.out_b)
}

/// Task layer on top of the output vector: logits over the task's classes.
pub fn task_logits<T: Real>(p: &ControllerParams<T>, y: &Tensor<T>) -> Result<Tensor<T>> {
    linear(y, &p.cls_w, &p.cls_b)
}
