//! Interrupts a run at a checkpoint, resumes it, and compares the result
//! with the uninterrupted run.

use std::fs;

use mnm::harness::config::RunConfig;
use mnm::harness::run::{run_experiment, METRICS_FILE};

fn config(out: &std::path::Path) -> mnm::Result<RunConfig> {
    let mut cfg = RunConfig::parse(
        "variant = mnm-g\ntask = dictionary\nk = 2\nl = 1\n\
         d_i = 8\nd_h = 8\nd_o = 8\nd_k = 8\nd_v = 8\nmem_hidden = 8\n\
         batch = 8\niterations = 40\neval_interval = 10\neval_episodes = 32\n\
         checkpoint_interval = 20\nseed = 5\n",
    )?;
    cfg.out_dir = out.to_path_buf();
    Ok(cfg)
}

fn main() -> mnm::Result<()> {
    let root = std::env::temp_dir().join("mnm-checkpoint-resume");
    let (full, part) = (root.join("full"), root.join("part"));
    let _ = fs::remove_dir_all(&root);

    let a = run_experiment(&config(&full)?)?;

    // A run stopped at iteration 20: its metric rows so far and the
    // checkpoint written then.
    fs::create_dir_all(&part)?;
    let metrics = fs::read_to_string(full.join(METRICS_FILE))?;
    let head: String = metrics
        .lines()
        .filter(|l| l.split(',').next().unwrap().parse::<u64>().map_or(true, |it| it <= 20))
        .map(|l| format!("{l}\n"))
        .collect();
    fs::write(part.join(METRICS_FILE), head)?;
    let mut cfg = config(&part)?;
    cfg.resume = Some(full.join("checkpoint-20.bin"));
    let b = run_experiment(&cfg)?;

    print!("{metrics}");
    println!("final metrics equal: {}", a.last == b.last);
    println!(
        "metric files equal: {}",
        metrics == fs::read_to_string(part.join(METRICS_FILE))?
    );
    Ok(())
}
