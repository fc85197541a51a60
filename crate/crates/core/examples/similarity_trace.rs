//! Cosine-similarity matrices between interaction vectors over one
//! dictionary episode of an untrained model.

use mnm::engine::{Model, ModelConfig, Variant};
use mnm::harness::trace::{similarity_trace, SimilarityPair};
use mnm::init::{stream_rng, Stream};
use mnm::tasks::TaskSpec;

fn main() -> mnm::Result<()> {
    let task = TaskSpec::DictionaryInference { k: 2, l: 1 };
    let model = Model::<f64>::new(ModelConfig::new(Variant::MnmP, task, 16), 0)?;
    let episode = task.generate(&mut stream_rng(0, Stream::Trace))?;
    let trace = model.run_episode(std::slice::from_ref(&episode), None)?;
    for pair in SimilarityPair::ALL {
        println!("{}", pair.name());
        for row in similarity_trace(&trace, pair, 0)? {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:+.2}")).collect();
            println!("  {}", cells.join(" "));
        }
    }
    Ok(())
}
