//! Gamma ablation on the interference pool: two adapters with opposing
//! up-projection clusters, the second with amplified down-projections.
//! Full activation forces the interferer in; tiny budgets starve the true
//! adapter. The sweet spot sits strictly inside (0, 1).
//!
//! ```bash
//! cargo run --release --example gamma_ablation
//! ```

use hilora::experiment::{
    gamma_sweep, run_experiment, ExperimentConfig, Method, PoolSource, WorldKind,
};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 11;
    cfg.pool = PoolSource::Interference {
        rank: 8,
        entry_scale: 0.5 / (8.0f64 * 16.0).sqrt(),
        cluster_weight: 0.8,
        noise_weight: 0.6,
        interferer_proj_scale: 1.8,
    };
    cfg.embedder.world = WorldKind::Overlap { score_gap: 1.4 };
    cfg.embedder.cov_scale = 0.005;
    cfg.fit.ridge_fraction = Some(0.3);
    cfg.eval.seen_inputs_per_task = 300;
    cfg.eval.seen_task_limit = Some(1);

    let gammas = [0.2, 0.4, 0.6, 0.8, 1.0];
    let (rows, _) = gamma_sweep(&cfg, &gammas).expect("sweep runs");
    println!("{:>6} {:>12} {:>10}", "gamma", "mean MSE", "mean o");
    let mut best = &rows[0];
    for r in &rows {
        println!(
            "{:>6} {:>12.6} {:>10.2}",
            r.gamma, r.mean_mse, r.mean_sum_allocated
        );
        if r.mean_mse < best.mean_mse {
            best = r;
        }
    }
    println!(
        "\nminimum at gamma = {} (interior: {})",
        best.gamma,
        best.gamma > 0.2 && best.gamma < 1.0
    );

    // The gamma = 1 arm coincides exactly with sequence-level-only routing.
    let mut gs = cfg.clone();
    gs.method = Method::GsOnly;
    let (_, gs_summary) = run_experiment(&gs).expect("gs_only runs");
    let g1 = rows
        .iter()
        .find(|r| r.gamma == 1.0)
        .expect("grid includes 1.0");
    println!(
        "gamma=1.0 arm MSE {} == gs_only MSE {}: {}",
        g1.mean_mse,
        gs_summary.mean_mse,
        g1.mean_mse.to_bits() == gs_summary.mean_mse.to_bits()
    );
}
