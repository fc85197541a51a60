//! Memory scaling benchmark.
//!
//! Times the memory path of an episode (write then read at every step) for
//! increasing episode lengths, with fixed random interaction vectors, over
//! a training-sized batch (batch 1 mostly times per-op overhead). The
//! controller is left out: its cost per step is the same for every
//! variant, and the question is how the memory's cost grows with length.

use std::time::Instant;

use rand::Rng;

use crate::autodiff::{ParamStore, Tensor};
use crate::baselines::{salu_read, salu_write, SlotTable};
use crate::engine::Variant;
use crate::init::{stream_rng, Stream};
use crate::memory::{
    init_bfpf, read, write_gradient, write_local, BfpfParams, GradientWrite, MemoryInit, MemoryLayout, MemoryParams,
};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchConfig {
    pub d_k: usize,
    pub d_v: usize,
    pub mem_hidden: usize,
    pub mem_layers: usize,
    pub heads: usize,
    /// Episodes per batch; 32 matches training.
    pub batch: usize,
    /// Timed repetitions per point; the fastest is kept.
    pub reps: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            d_k: 100,
            d_v: 100,
            mem_hidden: 100,
            mem_layers: 3,
            heads: 1,
            batch: 32,
            reps: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub variant: Variant,
    pub length: usize,
    pub secs_per_episode: f64,
    /// Memory-state scalars at the end of the episode.
    pub memory_scalars: usize,
}

struct StepInputs {
    read_keys: Vec<Tensor<f32>>,
    write_keys: Vec<Tensor<f32>>,
    values: Vec<Tensor<f32>>,
}

fn random_rows<R: Rng>(rng: &mut R, b: usize, n: usize) -> Tensor<f32> {
    let v = (0..b * n).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    Tensor::new(v, &[b, n]).expect("row shape")
}

enum Memory {
    Neural(MemoryParams<f32>),
    Table(SlotTable<f32>),
    Absent,
}

struct Bench {
    cfg: BenchConfig,
    init: MemoryInit<f32>,
    bfpf: BfpfParams<f32>,
    beta: Tensor<f32>,
}

impl Bench {
    fn new(cfg: BenchConfig) -> Result<Self> {
        let layout = MemoryLayout::tanh(cfg.d_k, cfg.mem_hidden, cfg.mem_layers, cfg.d_v);
        let mut store = ParamStore::new();
        init_bfpf(&mut store, &layout, &mut stream_rng(cfg.seed, Stream::Params))?;
        let bfpf = BfpfParams::bind(&layout, &store.constants())?;
        let init = MemoryInit::sample(layout, &mut stream_rng(cfg.seed, Stream::MemoryInit));
        Ok(Self {
            cfg,
            init,
            bfpf,
            beta: Tensor::from_vec(vec![0.5; cfg.batch.max(1)]),
        })
    }

    fn inputs(&self, length: usize) -> Vec<StepInputs> {
        let mut rng = stream_rng(self.cfg.seed, Stream::Trace);
        let (h, b) = (self.cfg.heads, self.cfg.batch.max(1));
        (0..length)
            .map(|_| StepInputs {
                read_keys: (0..h).map(|_| random_rows(&mut rng, b, self.cfg.d_k)).collect(),
                write_keys: (0..h).map(|_| random_rows(&mut rng, b, self.cfg.d_k)).collect(),
                values: (0..h).map(|_| random_rows(&mut rng, b, self.cfg.d_v)).collect(),
            })
            .collect()
    }

    fn fresh(&self, variant: Variant) -> Memory {
        match variant {
            Variant::MnmG | Variant::MnmP => Memory::Neural(self.init.reset(self.cfg.batch.max(1))),
            Variant::LstmSalu => Memory::Table(SlotTable::new(self.cfg.batch.max(1), self.cfg.d_k, self.cfg.d_v)),
            Variant::Lstm => Memory::Absent,
        }
    }

    fn write(&self, variant: Variant, mem: Memory, s: &StepInputs) -> Result<Memory> {
        Ok(match mem {
            Memory::Neural(m) => Memory::Neural(match variant {
                Variant::MnmP => write_local(&m, &self.bfpf, &s.write_keys, &s.values, &self.beta)?.params,
                _ => write_gradient(&m, &s.write_keys, &s.values, &self.beta, GradientWrite::default())?.params,
            }),
            Memory::Table(t) => Memory::Table(salu_write(&t, &s.write_keys, &s.values)?),
            Memory::Absent => Memory::Absent,
        })
    }

    fn read(&self, mem: &Memory, s: &StepInputs) -> Result<()> {
        match mem {
            Memory::Neural(m) => {
                read(m, &s.read_keys)?;
            }
            Memory::Table(t) => {
                salu_read(t, &s.read_keys)?;
            }
            Memory::Absent => {}
        }
        Ok(())
    }

    fn episode(&self, variant: Variant, steps: &[StepInputs]) -> Result<(f64, usize)> {
        let start = Instant::now();
        let mut mem = self.fresh(variant);
        for s in steps {
            mem = self.write(variant, mem, s)?;
            self.read(&mem, s)?;
        }
        let secs = start.elapsed().as_secs_f64();
        let scalars = match &mem {
            Memory::Neural(m) => m.num_scalars(),
            Memory::Table(t) => t.num_scalars(),
            Memory::Absent => 0,
        };
        Ok((secs, scalars))
    }
}

/// Per-episode memory-path time and final memory size for every
/// `(variant, length)` pair.
pub fn bench_scaling(variants: &[Variant], lengths: &[usize], cfg: BenchConfig) -> Result<Vec<BenchRow>> {
    let bench = Bench::new(cfg)?;
    let mut rows = Vec::new();
    for &variant in variants {
        for &length in lengths {
            let steps = bench.inputs(length);
            // Warm-up run, not timed.
            bench.episode(variant, &steps)?;
            let mut best = f64::INFINITY;
            let mut scalars = 0;
            for _ in 0..cfg.reps.max(1) {
                let (secs, n) = bench.episode(variant, &steps)?;
                best = best.min(secs);
                scalars = n;
            }
            rows.push(BenchRow {
                variant,
                length,
                secs_per_episode: best,
                memory_scalars: scalars,
            });
        }
    }
    Ok(rows)
}

/// Mean wallclock of one write on a fresh memory, fastest of `reps` rounds
/// of `writes` writes each.
pub fn write_time(variant: Variant, cfg: BenchConfig, writes: usize) -> Result<f64> {
    let bench = Bench::new(cfg)?;
    let steps = bench.inputs(writes.max(1));
    let mut best = f64::INFINITY;
    for _ in 0..=cfg.reps.max(1) {
        let mut mem = bench.fresh(variant);
        let start = Instant::now();
        for s in &steps {
            mem = bench.write(variant, mem, s)?;
        }
        best = best.min(start.elapsed().as_secs_f64() / steps.len() as f64);
    }
    Ok(best)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|&(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = logs.iter().map(|&(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Slope of episode time against length for one variant's rows.
pub fn growth_exponent(rows: &[BenchRow], variant: Variant) -> f64 {
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.variant == variant)
        .map(|r| (r.length as f64, r.secs_per_episode))
        .collect();
    loglog_slope(&pts)
}

pub fn rows_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("variant,length,secs_per_episode,memory_scalars\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{:.9},{}\n",
            r.variant, r.length, r.secs_per_episode, r.memory_scalars
        ));
    }
    s
}
