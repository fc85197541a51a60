//! Differentiates through a gradient step: the derivative of a loss
//! evaluated after one inner update, which needs the inner gradient's own
//! graph.

use mnm::autodiff::{Tape, Tensor};

fn main() -> mnm::Result<()> {
    let tape = Tape::<f64>::new();
    let w = tape.var(Tensor::new(vec![0.3, -0.7, 1.1], &[1, 3])?);
    let x = Tensor::new(vec![1.0, 2.0, -1.0], &[1, 3])?;
    let lr = 0.1;

    // Inner loss (w . x - 1)^2 and one step on it, keeping the graph.
    let inner = w.row_dot(&x)?.sub(&Tensor::from_vec(vec![1.0]))?;
    let inner = inner.mul(&inner)?.sum()?;
    let g = tape.grad(&inner, &[&w], true)?[0].clone().expect("gradient");
    let w2 = w.sub(&g.scale(lr)?)?;

    // Outer loss on the updated weights, differentiated back to w.
    let outer = w2.mul(&w2)?.sum()?;
    let dw = tape.grad(&outer, &[&w], false)?[0].clone().expect("gradient");
    println!("outer loss {:.6}", outer.item());
    println!("d outer / d w = {:?}", dw.to_vec());
    println!("higher-order nodes on the tape: {}", tape.higher_order_nodes());
    Ok(())
}
