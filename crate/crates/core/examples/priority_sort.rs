//! Builds a priority-sort episode, checks its targets against a plain sort
//! and runs a few training steps on the bit-vector task.

use mnm::engine::{train_update, Model, ModelConfig, TrainOptions, Variant};
use mnm::init::{stream_rng, Stream};
use mnm::tasks::{encode_priority_sort, gen_sort_items, Targets, TaskSpec};

fn main() -> mnm::Result<()> {
    let mut rng = stream_rng(3, Stream::Trace);
    let items = gen_sort_items(6, &mut rng);
    for it in &items {
        println!("priority {:+.3}  bits {:?}", it.priority, it.bits);
    }
    let ep = encode_priority_sort(&items, 4)?;
    let mut sorted = items.clone();
    sorted.sort_by(|a, b| b.priority.total_cmp(&a.priority));
    let Targets::Bits(out) = &ep.targets else {
        unreachable!()
    };
    for (o, s) in out.iter().zip(&sorted) {
        assert_eq!(o.as_slice(), s.bits.as_slice());
    }
    println!("targets are the 4 highest-priority items in order");

    let task = TaskSpec::PrioritySort { n: 6, m: 4 };
    let mut model = Model::<f32>::new(ModelConfig::new(Variant::MnmG, task, 24), 0)?;
    let mut train_rng = stream_rng(0, Stream::TrainData);
    for it in 0..50 {
        let r = train_update(&mut model, &task.batch(16, &mut train_rng)?, &TrainOptions::default())?;
        if it % 10 == 0 {
            println!("{it:>3}  bit loss {:.4}  meta loss {:.5}", r.task_loss, r.meta_loss);
        }
    }
    Ok(())
}
