//! Run configuration as line-oriented `key = value` text.
//!
//! Blank lines and `#` comments are ignored; unknown keys are rejected.
//! Defaults are the algorithmic-task hyperparameters: width 100, three
//! memory layers, one head, batch 32, Adam with learning rate 0.001.

use std::fmt::Write as _;
use std::path::PathBuf;

use crate::autodiff::AdamConfig;
use crate::engine::{MetaLossConfig, ModelConfig, StepOrder, TrainOptions, Variant};
use crate::tasks::TaskSpec;
use crate::{Error, Result};

pub const SEED_ENV: &str = "MNM_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskKind {
    Dictionary,
    DoubleCopy,
    PrioritySort,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub variant: Variant,
    pub task: TaskKind,
    pub k: usize,
    pub l: usize,
    pub len: usize,
    pub alphabet: usize,
    pub n: usize,
    pub m: usize,
    pub d_i: usize,
    pub d_h: usize,
    pub d_o: usize,
    pub d_k: usize,
    pub d_v: usize,
    pub mem_hidden: usize,
    pub mem_layers: usize,
    pub heads: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub clip: f64,
    pub batch: usize,
    pub iterations: u64,
    pub eval_interval: u64,
    pub eval_episodes: usize,
    pub checkpoint_interval: u64,
    /// `None` falls back to `MNM_SEED`, then 0.
    pub seed: Option<u64>,
    pub precision: Precision,
    pub order: StepOrder,
    pub meta_weight: f64,
    pub recall_weights: Vec<f64>,
    pub second_order: bool,
    pub inner_steps: usize,
    pub jobs: usize,
    /// Stop once evaluation sequence accuracy reaches this value.
    pub target_accuracy: Option<f64>,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variant: Variant::MnmP,
            task: TaskKind::Dictionary,
            k: 4,
            l: 1,
            len: 50,
            alphabet: 10,
            n: 20,
            m: 16,
            d_i: 100,
            d_h: 100,
            d_o: 100,
            d_k: 100,
            d_v: 100,
            mem_hidden: 100,
            mem_layers: 3,
            heads: 1,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip: 10.0,
            batch: 32,
            iterations: 1000,
            eval_interval: 100,
            eval_episodes: 320,
            checkpoint_interval: 0,
            seed: None,
            precision: Precision::F32,
            order: StepOrder::WriteThenRead,
            meta_weight: 1.0,
            recall_weights: vec![1.0],
            second_order: true,
            inner_steps: 1,
            jobs: 1,
            target_accuracy: None,
            out_dir: PathBuf::from("runs/default"),
            resume: None,
        }
    }
}

/// Every accepted key, in the order [`RunConfig::to_text`] writes them.
pub const KEYS: &[&str] = &[
    "variant",
    "task",
    "k",
    "l",
    "len",
    "alphabet",
    "n",
    "m",
    "d_i",
    "d_h",
    "d_o",
    "d_k",
    "d_v",
    "mem_hidden",
    "mem_layers",
    "heads",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "clip",
    "batch",
    "iterations",
    "eval_interval",
    "eval_episodes",
    "checkpoint_interval",
    "seed",
    "precision",
    "order",
    "meta_weight",
    "recall_weights",
    "second_order",
    "inner_steps",
    "jobs",
    "target_accuracy",
    "out_dir",
    "resume",
];

/// Keys that do not affect the model or its training trajectory, so a
/// checkpoint may be resumed under different values.
const SCHEDULE_KEYS: &[&str] = &[
    "iterations",
    "eval_interval",
    "checkpoint_interval",
    "jobs",
    "target_accuracy",
    "out_dir",
    "resume",
];

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
}

fn opt<T: std::str::FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v == "none" {
        Ok(None)
    } else {
        num(key, v).map(Some)
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", lineno + 1)))?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "variant" => self.variant = v.parse()?,
            "task" => {
                self.task = match v {
                    "dictionary" => TaskKind::Dictionary,
                    "double_copy" => TaskKind::DoubleCopy,
                    "priority_sort" => TaskKind::PrioritySort,
                    _ => return Err(Error::Config(format!("unknown task `{v}`"))),
                }
            }
            "k" => self.k = num(key, v)?,
            "l" => self.l = num(key, v)?,
            "len" => self.len = num(key, v)?,
            "alphabet" => self.alphabet = num(key, v)?,
            "n" => self.n = num(key, v)?,
            "m" => self.m = num(key, v)?,
            "d_i" => self.d_i = num(key, v)?,
            "d_h" => self.d_h = num(key, v)?,
            "d_o" => self.d_o = num(key, v)?,
            "d_k" => self.d_k = num(key, v)?,
            "d_v" => self.d_v = num(key, v)?,
            "mem_hidden" => self.mem_hidden = num(key, v)?,
            "mem_layers" => self.mem_layers = num(key, v)?,
            "heads" => self.heads = num(key, v)?,
            "lr" => self.lr = num(key, v)?,
            "beta1" => self.beta1 = num(key, v)?,
            "beta2" => self.beta2 = num(key, v)?,
            "eps" => self.eps = num(key, v)?,
            "clip" => self.clip = num(key, v)?,
            "batch" => self.batch = num(key, v)?,
            "iterations" => self.iterations = num(key, v)?,
            "eval_interval" => self.eval_interval = num(key, v)?,
            "eval_episodes" => self.eval_episodes = num(key, v)?,
            "checkpoint_interval" => self.checkpoint_interval = num(key, v)?,
            "seed" => self.seed = opt(key, v)?,
            "precision" => {
                self.precision = match v {
                    "f32" => Precision::F32,
                    "f64" => Precision::F64,
                    _ => return Err(Error::Config(format!("unknown precision `{v}`"))),
                }
            }
            "order" => self.order = v.parse()?,
            "meta_weight" => self.meta_weight = num(key, v)?,
            "recall_weights" => {
                self.recall_weights = v.split(',').map(|w| num(key, w.trim())).collect::<Result<_>>()?
            }
            "second_order" => self.second_order = num(key, v)?,
            "inner_steps" => self.inner_steps = num(key, v)?,
            "jobs" => self.jobs = num(key, v)?,
            "target_accuracy" => self.target_accuracy = opt(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "resume" => self.resume = if v == "none" { None } else { Some(PathBuf::from(v)) },
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let show_opt = |o: Option<String>| o.unwrap_or_else(|| "none".into());
        Some(match key {
            "variant" => self.variant.to_string(),
            "task" => match self.task {
                TaskKind::Dictionary => "dictionary",
                TaskKind::DoubleCopy => "double_copy",
                TaskKind::PrioritySort => "priority_sort",
            }
            .into(),
            "k" => self.k.to_string(),
            "l" => self.l.to_string(),
            "len" => self.len.to_string(),
            "alphabet" => self.alphabet.to_string(),
            "n" => self.n.to_string(),
            "m" => self.m.to_string(),
            "d_i" => self.d_i.to_string(),
            "d_h" => self.d_h.to_string(),
            "d_o" => self.d_o.to_string(),
            "d_k" => self.d_k.to_string(),
            "d_v" => self.d_v.to_string(),
            "mem_hidden" => self.mem_hidden.to_string(),
            "mem_layers" => self.mem_layers.to_string(),
            "heads" => self.heads.to_string(),
            "lr" => self.lr.to_string(),
            "beta1" => self.beta1.to_string(),
            "beta2" => self.beta2.to_string(),
            "eps" => self.eps.to_string(),
            "clip" => self.clip.to_string(),
            "batch" => self.batch.to_string(),
            "iterations" => self.iterations.to_string(),
            "eval_interval" => self.eval_interval.to_string(),
            "eval_episodes" => self.eval_episodes.to_string(),
            "checkpoint_interval" => self.checkpoint_interval.to_string(),
            "seed" => show_opt(self.seed.map(|s| s.to_string())),
            "precision" => match self.precision {
                Precision::F32 => "f32",
                Precision::F64 => "f64",
            }
            .into(),
            "order" => self.order.to_string(),
            "meta_weight" => self.meta_weight.to_string(),
            "recall_weights" => self
                .recall_weights
                .iter()
                .map(|w| w.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "second_order" => self.second_order.to_string(),
            "inner_steps" => self.inner_steps.to_string(),
            "jobs" => self.jobs.to_string(),
            "target_accuracy" => show_opt(self.target_accuracy.map(|a| a.to_string())),
            "out_dir" => self.out_dir.display().to_string(),
            "resume" => show_opt(self.resume.as_ref().map(|p| p.display().to_string())),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key).expect("known key"));
        }
        s
    }

    /// Whether a checkpoint written under `other` can continue under `self`.
    pub fn compatible_with(&self, other: &RunConfig) -> std::result::Result<(), String> {
        for key in KEYS.iter().filter(|k| !SCHEDULE_KEYS.contains(k)) {
            let (a, b) = (self.get(key), other.get(key));
            if a != b {
                return Err(format!("`{key}` differs ({} vs {})", a.unwrap(), b.unwrap()));
            }
        }
        Ok(())
    }

    pub fn resolved_seed(&self) -> Result<u64> {
        if let Some(s) = self.seed {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
            Err(_) => Ok(0),
        }
    }

    pub fn task_spec(&self) -> TaskSpec {
        match self.task {
            TaskKind::Dictionary => TaskSpec::DictionaryInference { k: self.k, l: self.l },
            TaskKind::DoubleCopy => TaskSpec::DoubleCopy {
                len: self.len,
                alphabet: self.alphabet,
            },
            TaskKind::PrioritySort => TaskSpec::PrioritySort { n: self.n, m: self.m },
        }
    }

    pub fn model_config(&self) -> Result<ModelConfig> {
        Ok(ModelConfig {
            variant: self.variant,
            task: self.task_spec(),
            d_i: self.d_i,
            d_h: self.d_h,
            d_o: self.d_o,
            d_k: self.d_k,
            d_v: self.d_v,
            mem_hidden: self.mem_hidden,
            mem_layers: self.mem_layers,
            heads: self.heads,
            order: self.order,
            meta: MetaLossConfig::new(self.recall_weights.clone())?,
            meta_weight: self.meta_weight,
            second_order: self.second_order,
            inner_steps: self.inner_steps,
        })
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                eps: self.eps,
            },
            clip: self.clip,
            jobs: self.jobs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config()?.validate()?;
        if self.batch == 0 || self.eval_interval == 0 || self.eval_episodes == 0 || self.jobs == 0 {
            return Err(Error::Config(
                "batch, eval_interval, eval_episodes and jobs must be positive".into(),
            ));
        }
        if !(self.lr >= 0.0 && (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2) && self.eps > 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }
}
