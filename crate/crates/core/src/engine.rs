//! Episode orchestration: one model step, the task and meta objectives,
//! training updates and evaluation.
//!
//! Per step the controller runs its LSTM, emits interaction vectors, writes
//! to memory, reads back with the post-write memory (configurable) and
//! produces an output. Memory starts every episode from the same fixed
//! random weights, which are never trained.

use std::fmt;
use std::str::FromStr;

use crate::autodiff::{clip_grad_norm, AdamConfig, Gradients, ParamStore, Real, Tape, Tensor};
use crate::baselines::{salu_read, salu_write, SlotTable};
use crate::controller::{
    emit_interactions, init_params, lstm_step, output_head, task_logits, ControllerDims, ControllerParams,
    ControllerState, HeadSet, InteractionSet,
};
use crate::init::{stream_rng, Stream};
use crate::memory::{
    init_bfpf, memory_loss, read, write_gradient, write_local, BfpfParams, GradientWrite, MemoryInit, MemoryLayout,
    MemoryParams,
};
use crate::tasks::{Inputs, OutputKind, Targets, TaskEpisode, TaskSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Neural memory written by one gradient step.
    MnmG,
    /// Neural memory written by the learned local rule.
    MnmP,
    /// Controller only.
    Lstm,
    /// Controller with a soft-attention look-up table.
    LstmSalu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Lstm, Variant::LstmSalu, Variant::MnmG, Variant::MnmP];

    pub fn name(self) -> &'static str {
        match self {
            Variant::MnmG => "mnm-g",
            Variant::MnmP => "mnm-p",
            Variant::Lstm => "lstm",
            Variant::LstmSalu => "lstm-salu",
        }
    }

    pub fn has_neural_memory(self) -> bool {
        matches!(self, Variant::MnmG | Variant::MnmP)
    }

    fn heads(self) -> HeadSet {
        match self {
            Variant::Lstm => HeadSet {
                interactions: false,
                rate: false,
            },
            Variant::LstmSalu => HeadSet {
                interactions: true,
                rate: false,
            },
            _ => HeadSet::ALL,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL.into_iter().find(|v| v.name() == s).ok_or_else(|| {
            Error::Config(format!(
                "unknown variant `{s}` (expected mnm-g, mnm-p, lstm, lstm-salu)"
            ))
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum StepOrder {
    #[default]
    WriteThenRead,
    ReadThenWrite,
}

impl FromStr for StepOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "write-read" => Ok(StepOrder::WriteThenRead),
            "read-write" => Ok(StepOrder::ReadThenWrite),
            _ => Err(Error::Config(format!(
                "unknown order `{s}` (expected write-read or read-write)"
            ))),
        }
    }
}

impl fmt::Display for StepOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepOrder::WriteThenRead => "write-read",
            StepOrder::ReadThenWrite => "read-write",
        })
    }
}

/// Recall-delay weights; `weights[tau]` scales the error on the pair
/// written `tau` steps earlier. `weights[0] = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct MetaLossConfig {
    weights: Vec<f64>,
}

impl Default for MetaLossConfig {
    fn default() -> Self {
        Self { weights: vec![1.0] }
    }
}

impl MetaLossConfig {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.first() == Some(&1.0) {
            Ok(Self { weights })
        } else {
            Err(Error::Config("recall-delay weights must start with 1".into()))
        }
    }

    pub fn max_delay(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub task: TaskSpec,
    pub d_i: usize,
    pub d_h: usize,
    pub d_o: usize,
    pub d_k: usize,
    pub d_v: usize,
    /// Hidden width of the memory network.
    pub mem_hidden: usize,
    pub mem_layers: usize,
    pub heads: usize,
    pub order: StepOrder,
    pub meta: MetaLossConfig,
    pub meta_weight: f64,
    /// Differentiate through the gradient write (second order). Off gives
    /// the first-order approximation.
    pub second_order: bool,
    pub inner_steps: usize,
}

impl ModelConfig {
    pub fn new(variant: Variant, task: TaskSpec, width: usize) -> Self {
        Self {
            variant,
            task,
            d_i: width,
            d_h: width,
            d_o: width,
            d_k: width,
            d_v: width,
            mem_hidden: width,
            mem_layers: 3,
            heads: 1,
            order: StepOrder::WriteThenRead,
            meta: MetaLossConfig::default(),
            meta_weight: 1.0,
            second_order: true,
            inner_steps: 1,
        }
    }

    pub fn controller_dims(&self) -> ControllerDims {
        ControllerDims {
            n_in: self.task.input_dim(),
            d_i: self.d_i,
            d_h: self.d_h,
            d_k: self.d_k,
            d_v: self.d_v,
            d_o: self.d_o,
            n_out: self.task.n_outputs(),
            heads: self.heads,
        }
    }

    pub fn memory_layout(&self) -> MemoryLayout {
        MemoryLayout::tanh(self.d_k, self.mem_hidden, self.mem_layers, self.d_v)
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("d_i", self.d_i),
            ("d_h", self.d_h),
            ("d_o", self.d_o),
            ("d_k", self.d_k),
            ("d_v", self.d_v),
            ("mem_hidden", self.mem_hidden),
            ("mem_layers", self.mem_layers),
            ("heads", self.heads),
            ("inner_steps", self.inner_steps),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !self.meta_weight.is_finite() || self.meta_weight < 0.0 {
            return Err(Error::Config("meta_weight must be finite and non-negative".into()));
        }
        self.task.validate()
    }
}

/// Trainable parameters plus the fixed memory initialisation.
#[derive(Clone, Debug)]
pub struct Model<T: Real> {
    pub cfg: ModelConfig,
    pub params: ParamStore<T>,
    pub memory_init: Option<MemoryInit<T>>,
}

impl<T: Real> Model<T> {
    pub fn new(cfg: ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = stream_rng(seed, Stream::Params);
        let mut params = ParamStore::new();
        init_params(&mut params, &cfg.controller_dims(), cfg.variant.heads(), &mut rng)?;
        if cfg.variant == Variant::MnmP {
            init_bfpf(&mut params, &cfg.memory_layout(), &mut rng)?;
        }
        let memory_init = cfg
            .variant
            .has_neural_memory()
            .then(|| MemoryInit::sample(cfg.memory_layout(), &mut stream_rng(seed, Stream::MemoryInit)));
        Ok(Self {
            cfg,
            params,
            memory_init,
        })
    }

    /// Binds parameters as leaves of `tape`, or as constants without one.
    pub fn bind(&self, tape: Option<&Tape<T>>) -> Result<Network<'_, T>> {
        let tensors = match tape {
            Some(t) => self.params.leaves(t),
            None => self.params.constants(),
        };
        let ctrl = ControllerParams::bind(self.cfg.controller_dims(), &tensors)?;
        let bfpf = match self.cfg.variant {
            Variant::MnmP => Some(BfpfParams::bind(&self.cfg.memory_layout(), &tensors)?),
            _ => None,
        };
        Ok(Network {
            cfg: &self.cfg,
            ctrl,
            bfpf,
            memory_init: self.memory_init.as_ref(),
            leaves: tensors,
            beta_override: None,
        })
    }

    pub fn run_episode(&self, episodes: &[TaskEpisode], tape: Option<&Tape<T>>) -> Result<EpisodeTrace<T>> {
        self.bind(tape)?.run_episode(episodes)
    }
}

/// Memory after a write, with the write loss before and after it.
type WriteOutcome<T> = (MemoryState<T>, Option<Tensor<T>>, Option<Tensor<T>>);

/// A model's parameters bound to tensors for one forward computation.
pub struct Network<'a, T: Real> {
    pub cfg: &'a ModelConfig,
    pub ctrl: ControllerParams<T>,
    pub bfpf: Option<BfpfParams<T>>,
    pub memory_init: Option<&'a MemoryInit<T>>,
    /// Every bound parameter by name.
    pub leaves: std::collections::BTreeMap<String, Tensor<T>>,
    /// Replaces the emitted write rate with a constant.
    pub beta_override: Option<f64>,
}

#[derive(Clone, Debug)]
pub enum MemoryState<T: Real> {
    Absent,
    Neural(MemoryParams<T>),
    Table(SlotTable<T>),
}

impl<T: Real> MemoryState<T> {
    /// Scalars held as memory per episode.
    pub fn num_scalars(&self) -> usize {
        match self {
            MemoryState::Absent => 0,
            MemoryState::Neural(m) => m.num_scalars(),
            MemoryState::Table(t) => t.num_scalars(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct StepState<T: Real> {
    pub controller: ControllerState<T>,
    pub memory: MemoryState<T>,
}

/// What happened at one step. Losses are per episode, `[B]`.
#[derive(Clone, Debug)]
pub struct StepRecord<T: Real> {
    pub interactions: Option<InteractionSet<T>>,
    /// Write rate actually used, `[B]`.
    pub beta: Option<Tensor<T>>,
    pub loss_before: Option<Tensor<T>>,
    pub loss_after: Option<Tensor<T>>,
    /// Neural memory after this step's write.
    pub memory: Option<MemoryParams<T>>,
    pub readout: Tensor<T>,
    pub output: Tensor<T>,
    pub logits: Tensor<T>,
}

#[derive(Clone, Debug)]
pub struct EpisodeTrace<T: Real> {
    pub steps: Vec<StepRecord<T>>,
    /// Batch mean of the per-episode task loss.
    pub task_loss: Tensor<T>,
    /// Batch mean of the per-episode meta loss.
    pub meta_loss: Tensor<T>,
    /// Greedy predictions at supervised positions, one per episode.
    pub predictions: Vec<Targets>,
}

impl<T: Real> EpisodeTrace<T> {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}

impl<'a, T: Real> Network<'a, T> {
    pub fn initial_state(&self, batch: usize) -> StepState<T> {
        let d = &self.ctrl.dims;
        let memory = match (self.cfg.variant, self.memory_init) {
            (Variant::MnmG | Variant::MnmP, Some(init)) => MemoryState::Neural(init.reset(batch)),
            (Variant::LstmSalu, _) => MemoryState::Table(SlotTable::new(batch, d.d_k, d.d_v)),
            _ => MemoryState::Absent,
        };
        StepState {
            controller: ControllerState::zeros(d, batch),
            memory,
        }
    }

    fn write(
        &self,
        memory: &MemoryState<T>,
        inter: &InteractionSet<T>,
        beta: Option<&Tensor<T>>,
    ) -> Result<WriteOutcome<T>> {
        Ok(match memory {
            MemoryState::Neural(m) => {
                let beta = beta.expect("neural memory has a rate head");
                let out = match self.cfg.variant {
                    Variant::MnmP => write_local(
                        m,
                        self.bfpf.as_ref().expect("bound for local writes"),
                        &inter.write_keys,
                        &inter.target_values,
                        beta,
                    )?,
                    _ => write_gradient(
                        m,
                        &inter.write_keys,
                        &inter.target_values,
                        beta,
                        GradientWrite {
                            track_higher_order: self.cfg.second_order,
                            inner_steps: self.cfg.inner_steps,
                        },
                    )?,
                };
                (
                    MemoryState::Neural(out.params),
                    Some(out.loss_before),
                    Some(out.loss_after),
                )
            }
            MemoryState::Table(t) => (
                MemoryState::Table(salu_write(t, &inter.write_keys, &inter.target_values)?),
                None,
                None,
            ),
            MemoryState::Absent => (MemoryState::Absent, None, None),
        })
    }

    fn read(&self, memory: &MemoryState<T>, inter: &InteractionSet<T>, batch: usize) -> Result<Tensor<T>> {
        Ok(match memory {
            MemoryState::Neural(m) => read(m, &inter.read_keys)?.0,
            MemoryState::Table(t) => salu_read(t, &inter.read_keys)?,
            MemoryState::Absent => Tensor::zeros(&[batch, self.ctrl.dims.d_v]),
        })
    }

    /// One step: LSTM, interactions, write and read in the configured order,
    /// output. Returns the output vector, the next state and the record.
    pub fn model_step(&self, state: &StepState<T>, x: &Tensor<T>) -> Result<(Tensor<T>, StepState<T>, StepRecord<T>)> {
        let batch = x.shape()[0];
        let ctrl = lstm_step(&self.ctrl, &state.controller, x)?;
        let inter = match self.cfg.variant {
            Variant::Lstm => None,
            _ => Some(emit_interactions(&self.ctrl, &ctrl.h)?),
        };
        let beta = match (&inter, self.beta_override) {
            (Some(_), Some(b)) if self.cfg.variant.has_neural_memory() => Some(Tensor::full(&[batch], T::lit(b))),
            (Some(i), _) => i.beta.clone(),
            (None, _) => None,
        };
        let (memory, readout, loss_before, loss_after) = match &inter {
            None => (
                MemoryState::Absent,
                Tensor::zeros(&[batch, self.ctrl.dims.d_v]),
                None,
                None,
            ),
            Some(i) => match self.cfg.order {
                StepOrder::WriteThenRead => {
                    let (m, lb, la) = self.write(&state.memory, i, beta.as_ref())?;
                    let r = self.read(&m, i, batch)?;
                    (m, r, lb, la)
                }
                StepOrder::ReadThenWrite => {
                    let r = self.read(&state.memory, i, batch)?;
                    let (m, lb, la) = self.write(&state.memory, i, beta.as_ref())?;
                    (m, r, lb, la)
                }
            },
        };
        let output = output_head(&self.ctrl, &ctrl.h, &readout)?;
        let logits = task_logits(&self.ctrl, &output)?;
        let record = StepRecord {
            interactions: inter,
            beta,
            loss_before,
            loss_after,
            memory: match &memory {
                MemoryState::Neural(m) => Some(m.clone()),
                _ => None,
            },
            readout: readout.clone(),
            output: output.clone(),
            logits,
        };
        let next = StepState {
            controller: ControllerState {
                v_read_prev: readout,
                ..ctrl
            },
            memory,
        };
        Ok((output, next, record))
    }

    /// Runs a batch of equal-length episodes from a freshly reset memory.
    pub fn run_episode(&self, episodes: &[TaskEpisode]) -> Result<EpisodeTrace<T>> {
        let task = &self.cfg.task;
        let batch = episodes.len();
        if batch == 0 {
            return Err(Error::Task("empty batch".into()));
        }
        let len = episodes[0].len();
        for ep in episodes {
            ep.validate(task.input_dim().max(task.n_outputs()))?;
            if ep.len() != len {
                return Err(Error::Task(format!("episode lengths differ: {} vs {len}", ep.len())));
            }
        }
        let weights = position_weights(episodes);
        let mut state = self.initial_state(batch);
        let mut steps = Vec::with_capacity(len);
        let mut task_loss: Option<Tensor<T>> = None;
        let mut cursors = vec![0usize; batch];
        let mut predictions: Vec<Targets> = episodes
            .iter()
            .map(|ep| match ep.targets {
                Targets::Tokens(_) => Targets::Tokens(Vec::new()),
                Targets::Bits(_) => Targets::Bits(Vec::new()),
            })
            .collect();
        for t in 0..len {
            let x = step_features(episodes, t, self.ctrl.dims.n_in)?;
            let (_, next, record) = self.model_step(&state, &x)?;
            state = next;
            if episodes.iter().any(|ep| ep.target_mask[t]) {
                let term = self.position_loss(&record.logits, episodes, t, &cursors, &weights)?;
                task_loss = Some(match task_loss {
                    Some(acc) => acc.add(&term)?,
                    None => term,
                });
                decode_into(
                    &record.logits,
                    episodes,
                    t,
                    &mut predictions,
                    self.cfg.task.output_kind(),
                );
                for (b, ep) in episodes.iter().enumerate() {
                    if ep.target_mask[t] {
                        cursors[b] += 1;
                    }
                }
            }
            steps.push(record);
        }
        let task_loss = task_loss.unwrap_or_else(|| Tensor::scalar(T::zero()));
        let meta = meta_loss(&steps, &self.cfg.meta, batch)?.mean()?;
        Ok(EpisodeTrace {
            steps,
            task_loss,
            meta_loss: meta,
            predictions,
        })
    }

    /// Batch-mean contribution of position `t` to the per-episode mean loss.
    fn position_loss(
        &self,
        logits: &Tensor<T>,
        episodes: &[TaskEpisode],
        t: usize,
        cursors: &[usize],
        weights: &[f64],
    ) -> Result<Tensor<T>> {
        let batch = episodes.len();
        let n_out = logits.shape()[1];
        let inv_b = 1.0 / batch as f64;
        let mut w = vec![T::zero(); batch * n_out];
        match self.cfg.task.output_kind() {
            OutputKind::Classes => {
                for (b, ep) in episodes.iter().enumerate() {
                    if let (true, Targets::Tokens(tg)) = (ep.target_mask[t], &ep.targets) {
                        w[b * n_out + tg[cursors[b]]] = T::lit(-weights[b] * inv_b);
                    }
                }
                let w = Tensor::new(w, &[batch, n_out])?;
                Ok(logits.log_softmax()?.mul(&w)?.sum()?)
            }
            OutputKind::Bits => {
                let mut target = vec![T::zero(); batch * n_out];
                for (b, ep) in episodes.iter().enumerate() {
                    if let (true, Targets::Bits(tg)) = (ep.target_mask[t], &ep.targets) {
                        for j in 0..n_out {
                            w[b * n_out + j] = T::lit(weights[b] * inv_b);
                            target[b * n_out + j] = T::lit(tg[cursors[b]][j] as f64);
                        }
                    }
                }
                let w = Tensor::new(w, &[batch, n_out])?;
                let target = Tensor::new(target, &[batch, n_out])?;
                // softplus(x) - t x is the binary cross-entropy on logits.
                let bce = logits.softplus()?.sub(&logits.mul(&target)?)?;
                Ok(bce.mul(&w)?.sum()?)
            }
        }
    }
}

/// Per-episode `1 / #supervised` (0 when nothing is supervised).
fn position_weights(episodes: &[TaskEpisode]) -> Vec<f64> {
    episodes
        .iter()
        .map(|ep| {
            let n = ep.target_mask.iter().filter(|&&m| m).count();
            if n == 0 {
                0.0
            } else {
                1.0 / n as f64
            }
        })
        .collect()
}

/// Input features at position `t`: one-hot tokens or raw vectors, `[B, n_in]`.
pub fn step_features<T: Real>(episodes: &[TaskEpisode], t: usize, n_in: usize) -> Result<Tensor<T>> {
    let mut x = vec![T::zero(); episodes.len() * n_in];
    for (b, ep) in episodes.iter().enumerate() {
        match &ep.inputs {
            Inputs::Tokens(tok) => x[b * n_in + tok[t]] = T::one(),
            Inputs::Vectors(v) => {
                if v[t].len() != n_in {
                    return Err(Error::Task(format!(
                        "input width {} but model expects {n_in}",
                        v[t].len()
                    )));
                }
                for (j, &c) in v[t].iter().enumerate() {
                    x[b * n_in + j] = T::lit(c);
                }
            }
        }
    }
    Ok(Tensor::new(x, &[episodes.len(), n_in])?)
}

fn decode_into<T: Real>(logits: &Tensor<T>, episodes: &[TaskEpisode], t: usize, out: &mut [Targets], kind: OutputKind) {
    let n_out = logits.shape()[1];
    for (b, ep) in episodes.iter().enumerate() {
        if !ep.target_mask[t] {
            continue;
        }
        let row = &logits.data()[b * n_out..(b + 1) * n_out];
        match (&mut out[b], kind) {
            (Targets::Tokens(p), OutputKind::Classes) => p.push(argmax(row)),
            (Targets::Bits(p), OutputKind::Bits) => p.push(row.iter().map(|&v| u8::from(v > T::zero())).collect()),
            _ => {}
        }
    }
}

fn argmax<T: Real>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-episode meta loss, `[B]`: the recall error of the post-write memory at
/// every step on the pairs written `tau` steps earlier, weighted by the
/// delay weights and divided by the episode length. Steps without a neural
/// memory contribute nothing.
pub fn meta_loss<T: Real>(steps: &[StepRecord<T>], cfg: &MetaLossConfig, batch: usize) -> Result<Tensor<T>> {
    let mut acc: Option<Tensor<T>> = None;
    for (t, rec) in steps.iter().enumerate() {
        for (tau, &lambda) in cfg.weights().iter().enumerate() {
            if tau > t || lambda == 0.0 {
                continue;
            }
            let term = if tau == 0 {
                match &rec.loss_after {
                    Some(l) => l.clone(),
                    None => continue,
                }
            } else {
                let (Some(mem), Some(past)) = (&rec.memory, &steps[t - tau].interactions) else {
                    continue;
                };
                memory_loss(mem, &past.write_keys, &past.target_values)?
            };
            let term = if lambda == 1.0 {
                term
            } else {
                term.scale(T::lit(lambda))?
            };
            acc = Some(match acc {
                Some(a) => a.add(&term)?,
                None => term,
            });
        }
    }
    Ok(match acc {
        Some(a) => a.scale(T::lit(1.0 / steps.len() as f64))?,
        None => Tensor::zeros(&[batch]),
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainOptions {
    pub adam: AdamConfig,
    /// Global gradient-norm clip; non-positive disables clipping.
    pub clip: f64,
    /// Number of threads the batch is split across.
    pub jobs: usize,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            clip: 10.0,
            jobs: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateReport {
    pub task_loss: f64,
    pub meta_loss: f64,
    pub grad_norm: f64,
}

/// Loss and gradients of one chunk, scaled by its share of the batch.
pub fn chunk_gradients<T: Real>(
    model: &Model<T>,
    chunk: &[TaskEpisode],
    share: f64,
) -> Result<(Gradients<T>, f64, f64)> {
    let tape = Tape::new();
    let net = model.bind(Some(&tape))?;
    let trace = net.run_episode(chunk)?;
    let task = trace.task_loss.item().as_f64();
    let meta = trace.meta_loss.item().as_f64();
    if !task.is_finite() || !meta.is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: model.params.step(),
            task_loss: task,
            meta_loss: meta,
        });
    }
    let total = if model.cfg.meta_weight == 0.0 {
        trace.task_loss.clone()
    } else {
        trace
            .task_loss
            .add(&trace.meta_loss.scale(T::lit(model.cfg.meta_weight))?)?
    };
    let total = total.scale(T::lit(share))?;
    let mut grads = Gradients::new();
    if total.is_attached() {
        tape.backward(&total, false)?;
    }
    for (name, leaf) in &net.leaves {
        let g = tape
            .leaf_grad(leaf)
            .map(|g| g.to_vec())
            .unwrap_or_else(|| vec![T::zero(); leaf.numel()]);
        grads.insert(name.clone(), g);
    }
    Ok((grads, task * share, meta * share))
}

/// Gradients of the batch-mean total loss, split across `jobs` threads.
pub fn batch_gradients<T: Real>(
    model: &Model<T>,
    episodes: &[TaskEpisode],
    jobs: usize,
) -> Result<(Gradients<T>, f64, f64)> {
    if episodes.is_empty() {
        return Err(Error::Task("empty batch".into()));
    }
    let jobs = jobs.clamp(1, episodes.len());
    let per = episodes.len().div_ceil(jobs);
    let n = episodes.len() as f64;
    let results: Vec<Result<(Gradients<T>, f64, f64)>> = if jobs == 1 {
        vec![chunk_gradients(model, episodes, 1.0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = episodes
                .chunks(per)
                .map(|c| s.spawn(move || chunk_gradients(model, c, c.len() as f64 / n)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("worker thread panicked"))
                .collect()
        })
    };
    let mut total = Gradients::zeros_like(&model.params);
    let (mut task, mut meta) = (0.0, 0.0);
    for r in results {
        let (g, t, m) = r?;
        total.accumulate(&g);
        task += t;
        meta += m;
    }
    Ok((total, task, meta))
}

/// One optimisation step on a batch: gradients of the mean task plus meta
/// loss, clipped, then Adam.
pub fn train_update<T: Real>(
    model: &mut Model<T>,
    episodes: &[TaskEpisode],
    opts: &TrainOptions,
) -> Result<UpdateReport> {
    let (mut grads, task_loss, meta_loss) = batch_gradients(model, episodes, opts.jobs)?;
    if !grads.all_finite() {
        return Err(Error::NonFiniteLoss {
            iteration: model.params.step(),
            task_loss,
            meta_loss,
        });
    }
    let grad_norm = if opts.clip > 0.0 {
        clip_grad_norm(&mut grads, T::lit(opts.clip)).as_f64()
    } else {
        crate::autodiff::global_norm(&grads).as_f64()
    };
    model.params.adam_step(&grads, &opts.adam)?;
    Ok(UpdateReport {
        task_loss,
        meta_loss,
        grad_norm,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub token_accuracy: f64,
    pub sequence_accuracy: f64,
    pub task_loss: f64,
    pub meta_loss: f64,
    pub episodes: usize,
}

/// Token and sequence accuracy of `predictions` against the episodes'
/// targets. A bit-vector target counts as one token, correct only if every
/// bit matches.
pub fn score(episodes: &[TaskEpisode], predictions: &[Targets]) -> (f64, f64) {
    let (mut tok, mut tok_total, mut seq) = (0usize, 0usize, 0usize);
    for (ep, pred) in episodes.iter().zip(predictions) {
        let hits: Vec<bool> = match (&ep.targets, pred) {
            (Targets::Tokens(t), Targets::Tokens(p)) => t.iter().zip(p).map(|(a, b)| a == b).collect(),
            (Targets::Bits(t), Targets::Bits(p)) => t.iter().zip(p).map(|(a, b)| a == b).collect(),
            _ => vec![false; ep.targets.len()],
        };
        let correct = hits.iter().filter(|&&h| h).count();
        tok += correct;
        tok_total += ep.targets.len();
        if correct == ep.targets.len() {
            seq += 1;
        }
    }
    let tok_acc = if tok_total == 0 {
        1.0
    } else {
        tok as f64 / tok_total as f64
    };
    let seq_acc = if episodes.is_empty() {
        0.0
    } else {
        seq as f64 / episodes.len() as f64
    };
    (tok_acc, seq_acc)
}

/// Greedy evaluation without touching parameters.
pub fn evaluate<T: Real>(model: &Model<T>, episodes: &[TaskEpisode], batch: usize) -> Result<Metrics> {
    let mut predictions = Vec::with_capacity(episodes.len());
    let (mut task, mut meta) = (0.0, 0.0);
    for chunk in episodes.chunks(batch.max(1)) {
        let trace = model.run_episode(chunk, None)?;
        task += trace.task_loss.item().as_f64() * chunk.len() as f64;
        meta += trace.meta_loss.item().as_f64() * chunk.len() as f64;
        predictions.extend(trace.predictions);
    }
    let (token_accuracy, sequence_accuracy) = score(episodes, &predictions);
    let n = episodes.len().max(1) as f64;
    Ok(Metrics {
        token_accuracy,
        sequence_accuracy,
        task_loss: task / n,
        meta_loss: meta / n,
        episodes: episodes.len(),
    })
}
