//! Every stage of one routing decision: scores, candidate set, budget,
//! allocation, token-level ROC picks, and the final forward pass.
//!
//! ```bash
//! cargo run --release --example routing_walkthrough
//! ```

use hilora::experiment::{
    eval_inputs, input_features, prepare, ExperimentConfig, Method, PoolSource,
};
use hilora::numerics::RngStream;
use hilora::router::{forward_with_trace, make_plan};
use hilora::task::{pool_scores, EmbeddingProvider};

fn main() {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = 2024;
    cfg.method = Method::Hilora;
    cfg.pool = PoolSource::Synth {
        num_loras: 5,
        ranks: vec![4, 8],
        entry_scale: 0.05,
    };
    cfg.eval.seen_inputs_per_task = 1;
    cfg.eval.unseen_tasks = 1;
    cfg.eval.unseen_inputs_per_task = 1;

    let prepared = prepare(&cfg).expect("config is valid");
    let inputs = eval_inputs(&cfg, &prepared).expect("eval set");

    for input in inputs
        .iter()
        .filter(|i| i.input_id.ends_with("#e0"))
        .take(6)
    {
        println!(
            "=== input {} (true task {}) ===",
            input.input_id, input.true_task
        );
        let z = prepared
            .embedder
            .embed(&cfg.fit.instruction, &input.input_id)
            .expect("known task");
        let scores = pool_scores(&prepared.pool, &z).expect("fitted pool");
        for (id, s) in &scores {
            println!("  score {id}: {s:+.3}");
        }
        let ranks: Vec<usize> = prepared.pool.loras.iter().map(|l| l.rank).collect();
        let mut rng = RngStream::new(cfg.seed, 0).derive(5).derive(0);
        let plan = make_plan(&scores, &ranks, &cfg.router.to_config(), &mut rng).expect("plan");
        println!(
            "  candidates {:?}  budget {}  allocation {:?}  scale {:.3}",
            plan.candidates, plan.budget, plan.allocation, plan.scale
        );

        let x = input_features(&cfg, &input.input_id);
        let (y, trace) =
            forward_with_trace(&prepared.backbone, &prepared.pool, &plan, &x).expect("forward");
        for (li, sel) in trace.iter().enumerate() {
            let picks: Vec<String> = sel
                .per_candidate
                .iter()
                .map(|c| format!("{}{:?}", c.lora_id, c.indices))
                .collect();
            println!("  layer {li} ROC picks: {}", picks.join(" "));
        }
        println!("  output norm {:.4}", y.norm());
    }
}
