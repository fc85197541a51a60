//! Operation fixtures shared by the gradient checks.

use super::{random, rng};
use mnm::autodiff::{ElementwiseOp, Tensor};

pub type Case = (
    &'static str,
    Vec<Vec<usize>>,
    Box<dyn Fn(&[Tensor<f64>]) -> Tensor<f64>>,
);

fn positive(x: &Tensor<f64>) -> Tensor<f64> {
    // Keeps inputs away from zero where needed.
    x.mul(x).unwrap().add(&Tensor::full(x.shape(), 0.5)).unwrap()
}

pub fn cases() -> Vec<Case> {
    vec![
        (
            "add",
            vec![vec![2, 3], vec![2, 3]],
            Box::new(|x| x[0].add(&x[1]).unwrap()),
        ),
        (
            "sub",
            vec![vec![2, 3], vec![2, 3]],
            Box::new(|x| x[0].sub(&x[1]).unwrap()),
        ),
        (
            "mul",
            vec![vec![2, 3], vec![2, 3]],
            Box::new(|x| x[0].mul(&x[1]).unwrap()),
        ),
        (
            "neg",
            vec![vec![4]],
            Box::new(|x| x[0].neg().unwrap().mul(&x[0]).unwrap()),
        ),
        (
            "scale",
            vec![vec![2, 2]],
            Box::new(|x| x[0].scale(-1.7).unwrap().tanh().unwrap()),
        ),
        (
            "alias",
            vec![vec![3]],
            Box::new(|x| x[0].alias().unwrap().mul(&x[0]).unwrap()),
        ),
        ("tanh", vec![vec![2, 3]], Box::new(|x| x[0].tanh().unwrap())),
        ("sigmoid", vec![vec![2, 3]], Box::new(|x| x[0].sigmoid().unwrap())),
        ("exp", vec![vec![2, 3]], Box::new(|x| x[0].exp().unwrap())),
        (
            "softplus",
            vec![vec![2, 3]],
            Box::new(|x| x[0].scale(3.0).unwrap().softplus().unwrap()),
        ),
        (
            "matmul",
            vec![vec![3, 4], vec![4, 2]],
            Box::new(|x| x[0].matmul(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "transpose",
            vec![vec![3, 4]],
            Box::new(|x| x[0].transpose().unwrap().mul(&x[0].transpose().unwrap()).unwrap()),
        ),
        (
            "bmatvec",
            vec![vec![2, 3, 4], vec![2, 4]],
            Box::new(|x| x[0].bmatvec(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "bmatvec_t",
            vec![vec![2, 3, 4], vec![2, 3]],
            Box::new(|x| x[0].bmatvec_t(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "bouter",
            vec![vec![2, 3], vec![2, 4]],
            Box::new(|x| x[0].bouter(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "sub_mean_outer",
            vec![vec![2, 3, 4], vec![2, 3], vec![2, 4]],
            Box::new(|x| {
                let pair = (x[1].clone(), x[2].clone());
                x[0].sub_mean_outer(&[pair]).unwrap().tanh().unwrap()
            }),
        ),
        (
            "sub_mean_outer_heads",
            vec![vec![2, 3, 4], vec![2, 3], vec![2, 4], vec![2, 3], vec![2, 4]],
            Box::new(|x| {
                let pairs = [(x[1].clone(), x[2].clone()), (x[3].clone(), x[4].clone())];
                x[0].sub_mean_outer(&pairs).unwrap().tanh().unwrap()
            }),
        ),
        (
            "scale_rows",
            vec![vec![2, 3, 4], vec![2]],
            Box::new(|x| x[0].scale_rows(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "scale_rows_2d",
            vec![vec![3, 2], vec![3]],
            Box::new(|x| x[0].scale_rows(&x[1]).unwrap().mul(&x[0]).unwrap()),
        ),
        (
            "row_dot",
            vec![vec![2, 3], vec![2, 3]],
            Box::new(|x| x[0].row_dot(&x[1]).unwrap().tanh().unwrap()),
        ),
        (
            "sum",
            vec![vec![2, 3]],
            Box::new(|x| x[0].tanh().unwrap().sum().unwrap().tanh().unwrap()),
        ),
        (
            "mean",
            vec![vec![2, 3]],
            Box::new(|x| x[0].mul(&x[0]).unwrap().mean().unwrap()),
        ),
        (
            "fill",
            vec![vec![1]],
            Box::new(|x| x[0].fill(&[2, 2]).unwrap().tanh().unwrap()),
        ),
        (
            "sum_axis",
            vec![vec![2, 3, 4]],
            Box::new(|x| x[0].sum_axis(1).unwrap().tanh().unwrap()),
        ),
        (
            "expand",
            vec![vec![2, 4]],
            Box::new(|x| x[0].expand(1, 3).unwrap().tanh().unwrap()),
        ),
        (
            "concat",
            vec![vec![2, 3], vec![2, 2]],
            Box::new(|x| Tensor::concat(&[&x[0], &x[1]], 1).unwrap().tanh().unwrap()),
        ),
        (
            "slice",
            vec![vec![2, 4]],
            Box::new(|x| x[0].slice(1, 1, 2).unwrap().tanh().unwrap()),
        ),
        (
            "pad",
            vec![vec![2, 3]],
            Box::new(|x| x[0].pad(1, 1, 5).unwrap().tanh().unwrap()),
        ),
        (
            "reshape",
            vec![vec![2, 6]],
            Box::new(|x| x[0].reshape(&[3, 4]).unwrap().tanh().unwrap()),
        ),
        (
            "log_softmax",
            vec![vec![3, 5]],
            Box::new(|x| x[0].log_softmax().unwrap()),
        ),
        (
            "mse",
            vec![vec![2, 3], vec![2, 3]],
            Box::new(|x| x[0].tanh().unwrap().mse(&x[1]).unwrap()),
        ),
        (
            "elementwise",
            vec![vec![2, 2], vec![2, 2]],
            Box::new(|x| {
                let p = Tensor::apply_elementwise(ElementwiseOp::Mul, &[&x[0], &x[1]]).unwrap();
                Tensor::apply_elementwise(ElementwiseOp::Tanh, &[&p]).unwrap()
            }),
        ),
        (
            "positive_square",
            vec![vec![3]],
            Box::new(|x| positive(&x[0]).exp().unwrap()),
        ),
    ]
}

pub fn inputs(shapes: &[Vec<usize>], seed: u64) -> Vec<Tensor<f64>> {
    let mut r = rng(seed);
    shapes.iter().map(|s| random(&mut r, s, 1.0)).collect()
}
