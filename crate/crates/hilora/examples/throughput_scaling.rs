//! Serving throughput as the adapter pool grows, on a fixed eval set of
//! seen and unseen inputs.
//!
//! ```bash
//! cargo run --release --example throughput_scaling
//! ```

use hilora::experiment::{bench_throughput, ExperimentConfig, Method, PoolSource};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 33;
    cfg.method = Method::Hilora;
    cfg.pool = PoolSource::Synth {
        num_loras: 40,
        ranks: vec![4, 8],
        entry_scale: 0.05,
    };
    cfg.eval.seen_inputs_per_task = 25;
    cfg.eval.unseen_tasks = 5;
    cfg.eval.unseen_inputs_per_task = 25;

    let sizes = [5usize, 10, 20, 40];
    let rows = bench_throughput(&cfg, &sizes, 5, 1).expect("bench runs");
    println!("{:>10} {:>18}", "pool size", "inputs/sec (med)");
    for r in &rows {
        println!("{:>10} {:>18.1}", r.pool_size, r.median_per_sec);
    }
    let non_increasing = rows
        .windows(2)
        .all(|w| w[1].median_per_sec <= w[0].median_per_sec);
    println!("\nthroughput non-increasing in pool size: {non_increasing}");
    println!("(scoring cost grows with the pool; decisions stay seeded and identical across reps)");
}
