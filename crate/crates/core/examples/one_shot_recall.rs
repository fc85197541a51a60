//! Writes one key/value pair repeatedly into a fresh memory with both write
//! rules and prints the recall error after each write.

use mnm::autodiff::{ParamStore, Tensor};
use mnm::init::{stream_rng, Stream};
use mnm::memory::{
    init_bfpf, memory_loss, write_gradient, write_local, BfpfParams, GradientWrite, MemoryInit, MemoryLayout,
};
use rand::Rng;

fn main() -> mnm::Result<()> {
    let d = 8;
    let layout = MemoryLayout::tanh(d, d, 3, d);
    let fresh = MemoryInit::<f64>::sample(layout.clone(), &mut stream_rng(0, Stream::MemoryInit));
    let mut store = ParamStore::new();
    init_bfpf(&mut store, &layout, &mut stream_rng(0, Stream::Params))?;
    let bfpf = BfpfParams::bind(&layout, &store.constants())?;

    let mut rng = stream_rng(0, Stream::Trace);
    let mut row = || Tensor::new((0..d).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[1, d]);
    let (k, v) = (vec![row()?], vec![row()?]);
    let beta = Tensor::from_vec(vec![0.5]);

    let (mut g, mut p) = (fresh.reset(1), fresh.reset(1));
    println!("write  gradient  local");
    for i in 0..=10 {
        println!(
            "{i:>5}  {:.5}   {:.5}",
            memory_loss(&g, &k, &v)?.item(),
            memory_loss(&p, &k, &v)?.item()
        );
        g = write_gradient(&g, &k, &v, &beta, GradientWrite::default())?.params;
        p = write_local(&p, &bfpf, &k, &v, &beta)?.params;
    }
    Ok(())
}
