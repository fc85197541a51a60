//! Memory-path time per episode against episode length, with the fitted
//! log-log growth exponent per variant.

use mnm::engine::Variant;
use mnm::harness::bench::{bench_scaling, growth_exponent, rows_csv, write_time, BenchConfig};

fn main() -> mnm::Result<()> {
    let cfg = BenchConfig::default();
    let variants = [Variant::LstmSalu, Variant::MnmG, Variant::MnmP];
    let rows = bench_scaling(&variants, &[25, 50, 100, 200], cfg)?;
    print!("{}", rows_csv(&rows));
    for v in variants {
        println!("{v}: exponent {:.2}", growth_exponent(&rows, v));
    }
    for v in [Variant::MnmG, Variant::MnmP] {
        println!("{v}: {:.1} us per write", write_time(v, cfg, 20)? * 1e6);
    }
    Ok(())
}
