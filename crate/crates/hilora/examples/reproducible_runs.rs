//! Determinism end to end: the same config and seed reproduce every routing
//! decision byte for byte; only wall-clock timings differ.
//!
//! ```bash
//! cargo run --release --example reproducible_runs
//! ```

use hilora::experiment::{decision_line, run_experiment, ExperimentConfig, PoolSource};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 4242;
    cfg.pool = PoolSource::Synth {
        num_loras: 4,
        ranks: vec![4, 8],
        entry_scale: 0.05,
    };
    cfg.eval.seen_inputs_per_task = 25;
    cfg.eval.unseen_tasks = 2;
    cfg.eval.unseen_inputs_per_task = 10;

    let (first, _) = run_experiment(&cfg).expect("first run");
    let (second, _) = run_experiment(&cfg).expect("second run");

    let identical = first
        .iter()
        .zip(&second)
        .all(|(a, b)| decision_line(a) == decision_line(b));
    println!("{} records per run", first.len());
    println!("decision lines byte-identical across runs: {identical}");
    println!("\nfirst three decision lines:");
    for r in first.iter().take(3) {
        println!("{}", decision_line(r));
    }

    let timing_repeats = first
        .iter()
        .zip(&second)
        .filter(|(a, b)| a.wall_time_ns == b.wall_time_ns)
        .count();
    println!(
        "\n(wall times matching by chance: {timing_repeats}/{})",
        first.len()
    );
}
