//! Gradients through memory writes and whole episodes against central
//! finite differences of the tape-free computation.

mod common;

use common::writes::{mem_from, recall_after_write, write_inputs};
use common::{numeric_grad, random, rel_err, rng};
use mnm::autodiff::{Tape, Tensor};
use mnm::engine::{chunk_gradients, Model, ModelConfig, Variant};
use mnm::memory::{memory_loss, read, write_local, BfpfParams, GradientWrite, MemoryLayout};
use mnm::tasks::{encode_double_copy, Inputs, Targets, TaskEpisode, TaskSpec};

const THROUGH_WRITE_TOL: f64 = 1e-3;

#[test]
fn second_order_through_gradient_write() {
    for (seed, layout, steps) in [
        (0, MemoryLayout::tanh(4, 5, 3, 3), 1),
        (1, MemoryLayout::tanh(8, 8, 2, 8), 1),
        (2, MemoryLayout::tanh(3, 4, 3, 2), 2),
    ] {
        let opts = GradientWrite {
            track_higher_order: true,
            inner_steps: steps,
        };
        let x = write_inputs(&layout, 2, seed);
        let tape = Tape::new();
        let leaves: Vec<Tensor<f64>> = x.iter().map(|t| tape.var(t.clone())).collect();
        let loss = recall_after_write(&layout, &leaves, opts);
        let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
        let analytic = tape.grad(&loss, &refs, false).unwrap();
        assert!(tape.higher_order_nodes() > 0);
        let numeric = numeric_grad(&|v| recall_after_write(&layout, v, opts).item(), &x);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let a = a.as_ref().map(|g| g.to_vec()).unwrap_or(vec![0.0; n.len()]);
            let err = rel_err(&a, n);
            assert!(err < THROUGH_WRITE_TOL, "seed {seed} input {i}: {err:e}");
        }
    }
}

#[test]
fn first_order_write_treats_inner_gradient_as_constant() {
    let layout = MemoryLayout::tanh(3, 4, 2, 2);
    let x = write_inputs(&layout, 1, 5);
    let opts = GradientWrite {
        track_higher_order: false,
        inner_steps: 1,
    };
    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = x.iter().map(|t| tape.var(t.clone())).collect();
    let loss = recall_after_write(&layout, &leaves, opts);
    assert_eq!(tape.higher_order_nodes(), 0);
    let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
    let g = tape.grad(&loss, &refs, false).unwrap();
    // The rate still receives a gradient through `phi - beta * grad`.
    assert!(g[layout.n_layers() + 2].as_ref().unwrap().data()[0].abs() > 0.0);
}

fn local_loss(layout: &MemoryLayout, x: &[Tensor<f64>]) -> Tensor<f64> {
    let n = layout.n_layers();
    let mem = mem_from(layout, &x[..n]);
    let mut maps = Vec::new();
    for l in 0..n - 1 {
        maps.push((x[n + 2 * l].clone(), x[n + 2 * l + 1].clone()));
    }
    let base = n + 2 * (n - 1);
    let bfpf = BfpfParams {
        maps,
        rho: x[base].clone(),
    };
    let (kw, vw, beta, kr) = (&x[base + 1], &x[base + 2], &x[base + 3], &x[base + 4]);
    let out = write_local(&mem, &bfpf, std::slice::from_ref(kw), std::slice::from_ref(vw), beta).unwrap();
    let r = read(&out.params, std::slice::from_ref(kr)).unwrap().0;
    r.tanh()
        .unwrap()
        .sum()
        .unwrap()
        .add(
            &memory_loss(&out.params, std::slice::from_ref(kw), std::slice::from_ref(vw))
                .unwrap()
                .sum()
                .unwrap(),
        )
        .unwrap()
}

#[test]
fn local_write_gradients() {
    let layout = MemoryLayout::tanh(3, 4, 3, 2);
    let mut r = rng(8);
    let b = 2;
    let mut x: Vec<Tensor<f64>> = layout
        .widths
        .windows(2)
        .map(|w| random(&mut r, &[b, w[1], w[0]], 0.8))
        .collect();
    for l in 1..layout.n_layers() {
        x.push(random(&mut r, &[layout.d_v(), layout.widths[l]], 0.8));
        x.push(random(&mut r, &[layout.widths[l]], 0.5));
    }
    x.push(random(&mut r, &[layout.n_layers()], 1.0));
    x.push(random(&mut r, &[b, 3], 1.0));
    x.push(random(&mut r, &[b, 2], 1.0));
    x.push(Tensor::from_vec(vec![0.4, 0.9]));
    x.push(random(&mut r, &[b, 3], 1.0));

    let tape = Tape::new();
    let leaves: Vec<Tensor<f64>> = x.iter().map(|t| tape.var(t.clone())).collect();
    let loss = local_loss(&layout, &leaves);
    let refs: Vec<&Tensor<f64>> = leaves.iter().collect();
    let analytic = tape.grad(&loss, &refs, false).unwrap();
    assert_eq!(tape.higher_order_nodes(), 0);
    let numeric = numeric_grad(&|v| local_loss(&layout, v).item(), &x);
    for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
        let a = a.as_ref().map(|g| g.to_vec()).unwrap_or(vec![0.0; n.len()]);
        assert!(rel_err(&a, n) < 1e-5, "input {i}: {:e}", rel_err(&a, n));
    }
}

fn tiny(variant: Variant) -> ModelConfig {
    let mut cfg = ModelConfig::new(variant, TaskSpec::DoubleCopy { len: 1, alphabet: 3 }, 4);
    cfg.mem_layers = 2;
    cfg.mem_hidden = 3;
    cfg
}

fn episode_loss(model: &Model<f64>, eps: &[TaskEpisode]) -> f64 {
    let t = model.run_episode(eps, None).unwrap();
    t.task_loss.item() + model.cfg.meta_weight * t.meta_loss.item()
}

fn check_episode_gradient(variant: Variant, eps: &[TaskEpisode]) {
    let model = Model::<f64>::new(tiny(variant), 3).unwrap();
    let (grads, _, _) = chunk_gradients(&model, eps, 1.0).unwrap();
    for (name, p) in model.params.iter() {
        let analytic = grads.get(name).unwrap();
        let numeric: Vec<f64> = (0..p.value.len())
            .map(|j| {
                let at = |d: f64| {
                    let mut m = model.clone();
                    m.params.get_mut(name).unwrap().value[j] += d;
                    episode_loss(&m, eps)
                };
                (at(common::FD_STEP) - at(-common::FD_STEP)) / (2.0 * common::FD_STEP)
            })
            .collect();
        let err = rel_err(analytic, &numeric);
        assert!(err < THROUGH_WRITE_TOL, "{variant} {name}: {err:e}");
    }
}

#[test]
fn one_step_episode_gradient() {
    let ep = TaskEpisode {
        inputs: Inputs::Tokens(vec![1]),
        targets: Targets::Tokens(vec![2]),
        target_mask: vec![true],
    };
    for v in Variant::ALL {
        check_episode_gradient(v, std::slice::from_ref(&ep));
    }
}

#[test]
fn multi_step_batch_gradient() {
    let eps = [encode_double_copy(&[2], 3), encode_double_copy(&[0], 3)];
    for v in Variant::ALL {
        check_episode_gradient(v, &eps);
    }
}
