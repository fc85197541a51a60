//! Double copy with a hand-written training loop over the engine API.
//!
//! `cargo run --release --example double_copy -- 1500`

use mnm::engine::{evaluate, train_update, Model, ModelConfig, TrainOptions, Variant};
use mnm::init::{stream_rng, Stream};
use mnm::tasks::{Inputs, TaskSpec};

fn main() -> mnm::Result<()> {
    let iterations: usize = std::env::args()
        .nth(1)
        .map_or(1500, |s| s.parse().expect("iteration count"));
    let task = TaskSpec::DoubleCopy { len: 10, alphabet: 10 };
    let seed = 0;

    let example = task.generate(&mut stream_rng(seed, Stream::Trace))?;
    if let Inputs::Tokens(t) = &example.inputs {
        println!("input  {t:?}");
    }
    println!("target {:?}", example.targets);

    let mut model = Model::<f32>::new(ModelConfig::new(Variant::MnmP, task, 32), seed)?;
    let mut train_rng = stream_rng(seed, Stream::TrainData);
    let eval = task.batch(128, &mut stream_rng(seed, Stream::EvalData))?;
    let opts = TrainOptions::default();
    for it in 0..=iterations {
        if it % 250 == 0 {
            let m = evaluate(&model, &eval, 32)?;
            println!(
                "{it:>6}  loss {:.3}  token {:.3}  sequence {:.3}",
                m.task_loss, m.token_accuracy, m.sequence_accuracy
            );
        }
        train_update(&mut model, &task.batch(32, &mut train_rng)?, &opts)?;
    }
    Ok(())
}
