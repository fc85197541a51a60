//! Memory-write fixtures shared by the through-write gradient checks.

use super::{random, rng};
use mnm::autodiff::Tensor;
use mnm::memory::{read, write_gradient, GradientWrite, MemoryLayout, MemoryParams};

pub fn mem_from(layout: &MemoryLayout, layers: &[Tensor<f64>]) -> MemoryParams<f64> {
    MemoryParams {
        layers: layers.to_vec(),
        activations: layout.activations.clone(),
    }
}

/// Recall error after one gradient write, as a function of the initial
/// memory, write key, value, rate and read key.
pub fn recall_after_write(layout: &MemoryLayout, x: &[Tensor<f64>], opts: GradientWrite) -> Tensor<f64> {
    let n = layout.n_layers();
    let mem = mem_from(layout, &x[..n]);
    let (kw, vw, beta, kr, target) = (&x[n], &x[n + 1], &x[n + 2], &x[n + 3], &x[n + 4]);
    let out = write_gradient(&mem, std::slice::from_ref(kw), std::slice::from_ref(vw), beta, opts).unwrap();
    let (r, _) = read(&out.params, std::slice::from_ref(kr)).unwrap();
    let d = r.sub(target).unwrap();
    d.row_dot(&d)
        .unwrap()
        .sum()
        .unwrap()
        .add(&out.loss_after.sum().unwrap())
        .unwrap()
}

pub fn write_inputs(layout: &MemoryLayout, batch: usize, seed: u64) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    let mut x: Vec<Tensor<f64>> = layout
        .widths
        .windows(2)
        .map(|w| random(&mut r, &[batch, w[1], w[0]], 0.8))
        .collect();
    x.push(random(&mut r, &[batch, layout.d_k()], 1.0));
    x.push(random(&mut r, &[batch, layout.d_v()], 1.0));
    x.push(Tensor::new((0..batch).map(|i| 0.3 + 0.2 * i as f64).collect(), &[batch]).unwrap());
    x.push(random(&mut r, &[batch, layout.d_k()], 1.0));
    x.push(random(&mut r, &[batch, layout.d_v()], 1.0));
    x
}
