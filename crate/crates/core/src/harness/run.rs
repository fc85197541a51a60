//! Training runs: the loop, metric files, checkpoints and resume.
//!
//! `metrics.csv` holds one row per evaluation and depends only on the
//! configuration and seed. Wallclock is kept apart in `timing.csv` so the
//! metric file stays bit-identical across reruns.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand_chacha::ChaCha8Rng;

use super::checkpoint::Checkpoint;
use super::config::{Precision, RunConfig};
use crate::autodiff::Real;
use crate::engine::{evaluate, train_update, Metrics, Model};
use crate::init::{stream_rng, Stream};
use crate::tasks::TaskEpisode;
use crate::{Error, Result};

pub const METRICS_FILE: &str = "metrics.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const DIAGNOSTIC_FILE: &str = "diagnostic.txt";
pub const CONFIG_FILE: &str = "config.txt";

pub const METRICS_HEADER: &str = "iteration,task_loss,meta_loss,token_accuracy,sequence_accuracy";
pub const TIMING_HEADER: &str = "iteration,wallclock_secs";

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub iterations: u64,
    pub last: Metrics,
    pub reached_target: bool,
    pub checkpoint: PathBuf,
}

/// One CSV file opened for appending; the header is written when the file
/// is new or empty.
pub struct CsvLog {
    out: BufWriter<File>,
}

impl CsvLog {
    pub fn open(path: &Path, header: &str, append: bool) -> Result<Self> {
        let file = if append {
            OpenOptions::new().create(true).append(true).open(path)?
        } else {
            File::create(path)?
        };
        let empty = file.metadata()?.len() == 0;
        let mut out = BufWriter::new(file);
        if empty {
            writeln!(out, "{header}")?;
        }
        Ok(Self { out })
    }

    pub fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.out, "{}", fields.join(","))?;
        self.out.flush()?;
        Ok(())
    }
}

pub fn metrics_row(iteration: u64, m: &Metrics) -> Vec<String> {
    vec![
        iteration.to_string(),
        m.task_loss.to_string(),
        m.meta_loss.to_string(),
        m.token_accuracy.to_string(),
        m.sequence_accuracy.to_string(),
    ]
}

/// The held-out evaluation episodes for a configuration.
pub fn eval_set(cfg: &RunConfig) -> Result<Vec<TaskEpisode>> {
    let mut rng = stream_rng(cfg.resolved_seed()?, Stream::EvalData);
    cfg.task_spec().batch(cfg.eval_episodes, &mut rng)
}

/// Trains per `cfg`, writing metrics, timing and checkpoints to
/// `cfg.out_dir`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => run::<f32>(cfg),
        Precision::F64 => run::<f64>(cfg),
    }
}

/// Restores a model from a checkpoint written under a compatible config.
pub fn load_model<T: Real>(cfg: &RunConfig, ck: &Checkpoint) -> Result<Model<T>> {
    let saved = RunConfig::parse(&ck.config)?;
    cfg.compatible_with(&saved)
        .map_err(|e| Error::Config(format!("checkpoint does not match configuration: {e}")))?;
    let mut model = Model::new(cfg.model_config()?, cfg.resolved_seed()?)?;
    let params = ck.param_store::<T>();
    let expected: Vec<&str> = model.params.names().collect();
    let found: Vec<&str> = params.names().collect();
    if expected != found {
        return Err(Error::Checkpoint(format!("parameter set differs: {found:?}")));
    }
    model.params = params;
    Ok(model)
}

fn run<T: Real>(cfg: &RunConfig) -> Result<RunSummary> {
    let seed = cfg.resolved_seed()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    std::fs::write(cfg.out_dir.join(CONFIG_FILE), cfg.to_text())?;
    let task = cfg.task_spec();
    let opts = cfg.train_options();

    let (mut model, mut rng, start): (Model<T>, ChaCha8Rng, u64) = match &cfg.resume {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            (load_model(cfg, &ck)?, ck.rng.restore(), ck.iteration)
        }
        None => (
            Model::new(cfg.model_config()?, seed)?,
            stream_rng(seed, Stream::TrainData),
            0,
        ),
    };
    let eval_eps = eval_set(cfg)?;
    let resumed = cfg.resume.is_some();
    let mut metrics = CsvLog::open(&cfg.out_dir.join(METRICS_FILE), METRICS_HEADER, resumed)?;
    let mut timing = CsvLog::open(&cfg.out_dir.join(TIMING_FILE), TIMING_HEADER, resumed)?;
    let clock = Instant::now();
    let save = |model: &Model<T>, rng: &ChaCha8Rng, it: u64, path: &Path| {
        Checkpoint::capture(cfg.to_text(), it, rng, &model.params).save(path)
    };

    let mut last = Metrics::default();
    let mut reached = false;
    let mut record = |it: u64, model: &Model<T>| -> Result<Metrics> {
        let m = evaluate(model, &eval_eps, cfg.batch)?;
        metrics.row(&metrics_row(it, &m))?;
        timing.row(&[it.to_string(), format!("{:.6}", clock.elapsed().as_secs_f64())])?;
        Ok(m)
    };
    let hit = |m: &Metrics| cfg.target_accuracy.is_some_and(|a| m.sequence_accuracy >= a);

    if start == 0 {
        last = record(0, &model)?;
        reached = hit(&last);
    }
    let mut it = start;
    while it < cfg.iterations && !reached {
        it += 1;
        let batch = task.batch(cfg.batch, &mut rng)?;
        if let Err(e) = train_update(&mut model, &batch, &opts) {
            if let Error::NonFiniteLoss {
                task_loss, meta_loss, ..
            } = &e
            {
                std::fs::write(
                    cfg.out_dir.join(DIAGNOSTIC_FILE),
                    format!("iteration = {it}\ntask_loss = {task_loss}\nmeta_loss = {meta_loss}\nerror = {e}\n"),
                )?;
            }
            return Err(e);
        }
        if it % cfg.eval_interval == 0 || it == cfg.iterations {
            last = record(it, &model)?;
            reached = hit(&last);
        }
        if cfg.checkpoint_interval > 0 && it % cfg.checkpoint_interval == 0 {
            save(&model, &rng, it, &cfg.out_dir.join(format!("checkpoint-{it}.bin")))?;
        }
    }
    let checkpoint = cfg.out_dir.join(CHECKPOINT_FILE);
    save(&model, &rng, it, &checkpoint)?;
    Ok(RunSummary {
        iterations: it,
        last,
        reached_target: reached,
        checkpoint,
    })
}

/// Evaluates a saved model on the configuration's held-out episodes.
pub fn evaluate_checkpoint(cfg: &RunConfig, path: &Path) -> Result<Metrics> {
    let ck = Checkpoint::load(path)?;
    let eps = eval_set(cfg)?;
    match cfg.precision {
        Precision::F32 => evaluate(&load_model::<f32>(cfg, &ck)?, &eps, cfg.batch),
        Precision::F64 => evaluate(&load_model::<f64>(cfg, &ck)?, &eps, cfg.batch),
    }
}
