//! Shared oracles for the integration tests.
#![allow(dead_code)]

use mnm::autodiff::{Tape, Tensor};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub mod ops;
pub mod writes;

pub const FD_STEP: f64 = 1e-5;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    let v = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(v, shape).unwrap()
}

/// `||a - b|| / max(||a||, ||b||)`, 0 when both vanish.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = a
        .iter()
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
        .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

type ScalarFn<'a> = dyn Fn(&[Tensor<f64>]) -> Tensor<f64> + 'a;

/// Reduces a tensor-valued function to a scalar with fixed random weights.
fn weighted(f: &ScalarFn<'_>, inputs: &[Tensor<f64>], seed: u64) -> Tensor<f64> {
    let y = f(inputs);
    if y.numel() == 1 && y.shape().is_empty() {
        return y;
    }
    let w = random(&mut rng(seed), y.shape(), 1.0);
    y.mul(&w).unwrap().sum().unwrap()
}

/// Central differences of a scalar function of plain (detached) tensors.
pub fn numeric_grad(f: &dyn Fn(&[Tensor<f64>]) -> f64, inputs: &[Tensor<f64>]) -> Vec<Vec<f64>> {
    inputs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            (0..x.numel())
                .map(|j| {
                    let eval = |delta: f64| {
                        let mut args: Vec<Tensor<f64>> = inputs.to_vec();
                        let mut v = x.to_vec();
                        v[j] += delta;
                        args[i] = Tensor::new(v, x.shape()).unwrap();
                        f(&args)
                    };
                    (eval(FD_STEP) - eval(-FD_STEP)) / (2.0 * FD_STEP)
                })
                .collect()
        })
        .collect()
}

/// Reverse-mode gradient of the weighted output.
pub fn analytic_grad(f: &ScalarFn<'_>, inputs: &[Tensor<f64>], seed: u64) -> Vec<Vec<f64>> {
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|x| tape.var(x.clone())).collect();
    let loss = weighted(f, &leaves, seed);
    let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
    tape.grad(&loss, &refs, false)
        .unwrap()
        .into_iter()
        .zip(inputs)
        .map(|(g, x)| g.map_or(vec![0.0; x.numel()], |g| g.to_vec()))
        .collect()
}

/// Largest relative error between reverse-mode and central-difference
/// gradients over all inputs.
pub fn first_order_error(f: &ScalarFn<'_>, inputs: &[Tensor<f64>]) -> f64 {
    let seed = 99;
    let a = analytic_grad(f, inputs, seed);
    let n = numeric_grad(&|x| weighted(f, x, seed).item(), inputs);
    a.iter().zip(&n).map(|(a, n)| rel_err(a, n)).fold(0.0, f64::max)
}

/// `u . grad f`, a scalar whose gradient is a Hessian-vector product.
fn directional(f: &ScalarFn<'_>, leaves: &[Tensor<f64>], tape: &Tape<f64>, create_graph: bool) -> Tensor<f64> {
    let loss = weighted(f, leaves, 99);
    let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
    let grads = tape.grad(&loss, &refs, create_graph).unwrap();
    let mut acc: Option<Tensor<f64>> = None;
    for (k, (g, x)) in grads.into_iter().zip(leaves).enumerate() {
        let Some(g) = g else { continue };
        let u = random(&mut rng(1000 + k as u64), x.shape(), 1.0);
        let term = g.mul(&u).unwrap().sum().unwrap();
        acc = Some(match acc {
            Some(a) => a.add(&term).unwrap(),
            None => term,
        });
    }
    acc.unwrap_or_else(|| Tensor::scalar(0.0))
}

/// Relative error of the second-order (gradient of a gradient) result
/// against central differences of the first-order gradient.
pub fn second_order_error(f: &ScalarFn<'_>, inputs: &[Tensor<f64>]) -> f64 {
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|x| tape.var(x.clone())).collect();
    let s = directional(f, &leaves, &tape, true);
    let analytic: Vec<Vec<f64>> = if s.is_attached() {
        let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
        tape.grad(&s, &refs, false)
            .unwrap()
            .into_iter()
            .zip(inputs)
            .map(|(g, x)| g.map_or(vec![0.0; x.numel()], |g| g.to_vec()))
            .collect()
    } else {
        inputs.iter().map(|x| vec![0.0; x.numel()]).collect()
    };
    let numeric = numeric_grad(
        &|x| {
            let t = Tape::new();
            let l: Vec<Tensor<f64>> = x.iter().map(|v| t.var(v.clone())).collect();
            directional(f, &l, &t, false).item()
        },
        inputs,
    );
    analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| rel_err(a, n))
        .fold(0.0, f64::max)
}

/// Outcome of repeated gradient writes of one random pair into fresh
/// tabula-rasa memories, over many seeds.
#[derive(Debug)]
pub struct RecallStats {
    pub median_first_drop: f64,
    pub median_tenth_drop: f64,
    pub monotone_fraction: f64,
    /// Seeds meeting both drop levels and monotone at once.
    pub joint_fraction: f64,
}

/// Write loss after `0..=writes` gradient writes at rate `beta` of one
/// random `(k, v)` pair into a fresh `d`-wide, three-layer memory.
pub fn recall_curve(seed: u64, d: usize, beta: f64, writes: usize) -> Vec<f64> {
    use mnm::init::{stream_rng, Stream};
    use mnm::memory::{memory_loss, write_gradient, GradientWrite, MemoryInit, MemoryLayout};

    let layout = MemoryLayout::tanh(d, d, 3, d);
    let mut mem = MemoryInit::<f64>::sample(layout, &mut stream_rng(seed, Stream::MemoryInit)).reset(1);
    let mut r = stream_rng(seed, Stream::Trace);
    let mut row = || Tensor::new((0..d).map(|_| r.gen_range(-1.0..1.0)).collect(), &[1, d]).unwrap();
    let (k, v) = (vec![row()], vec![row()]);
    let rate = Tensor::from_vec(vec![beta]);
    let opts = GradientWrite {
        track_higher_order: false,
        inner_steps: 1,
    };
    let mut losses = vec![memory_loss(&mem, &k, &v).unwrap().item()];
    for _ in 0..writes {
        mem = write_gradient(&mem, &k, &v, &rate, opts).unwrap().params;
        losses.push(memory_loss(&mem, &k, &v).unwrap().item());
    }
    losses
}

pub fn recall_stats(seeds: u64, first: f64, tenth: f64) -> RecallStats {
    let median = |mut xs: Vec<f64>| {
        xs.sort_by(f64::total_cmp);
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    };
    let (mut d1, mut d10) = (Vec::new(), Vec::new());
    let (mut mono, mut joint) = (0usize, 0usize);
    for seed in 0..seeds {
        let l = recall_curve(seed, 8, 0.5, 10);
        let (a, b) = (1.0 - l[1] / l[0], 1.0 - l[10] / l[0]);
        let m = l.windows(2).all(|w| w[1] <= w[0]);
        mono += m as usize;
        joint += (m && a >= first && b >= tenth) as usize;
        d1.push(a);
        d10.push(b);
    }
    RecallStats {
        median_first_drop: median(d1),
        median_tenth_drop: median(d10),
        monotone_fraction: mono as f64 / seeds as f64,
        joint_fraction: joint as f64 / seeds as f64,
    }
}
