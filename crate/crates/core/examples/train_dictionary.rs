//! Trains one variant on dictionary inference through the run harness and
//! prints the metric file.
//!
//! `cargo run --release --example train_dictionary -- mnm-p 2000`

use mnm::engine::Variant;
use mnm::harness::config::RunConfig;
use mnm::harness::run::{run_experiment, METRICS_FILE};

fn main() -> mnm::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: Variant = args.next().as_deref().unwrap_or("mnm-p").parse()?;
    let iterations: u64 = args.next().map_or(Ok(2000), |s| s.parse()).expect("iteration count");

    let mut cfg = RunConfig::parse(
        "task = dictionary\nk = 4\nl = 1\n\
         d_i = 32\nd_h = 32\nd_o = 32\nd_k = 32\nd_v = 32\nmem_hidden = 32\n\
         batch = 32\neval_interval = 250\nseed = 0\ntarget_accuracy = 0.95\n",
    )?;
    cfg.variant = variant;
    cfg.iterations = iterations;
    cfg.out_dir = std::env::temp_dir().join(format!("mnm-dictionary-{variant}"));

    let summary = run_experiment(&cfg)?;
    print!("{}", std::fs::read_to_string(cfg.out_dir.join(METRICS_FILE))?);
    println!(
        "{variant}: {} iterations, sequence accuracy {:.3}, outputs in {}",
        summary.iterations,
        summary.last.sequence_accuracy,
        cfg.out_dir.display()
    );
    Ok(())
}
