//! Fit Gaussian task models from synthetic instructed embeddings and watch
//! how seen and unseen inputs score.
//!
//! ```bash
//! cargo run --release --example task_models
//! ```

use hilora::experiment::separated_world;
use hilora::numerics::RngStream;
use hilora::pool::{synthesize_pool, PoolSpec};
use hilora::task::{
    fit_pool_gaussians, pool_scores, EmbeddingProvider, SyntheticEmbedder, DEFAULT_INSTRUCTION,
};

fn main() {
    let spec = PoolSpec {
        num_loras: 4,
        model_dim: 16,
        num_layers: 1,
        ranks: vec![4],
        entry_scale: 1.0,
        id_prefix: "lora".into(),
    };
    let master = RngStream::new(7, 0);
    let pool = synthesize_pool(&spec, &mut master.derive(1)).expect("valid spec");
    let ids: Vec<String> = pool.loras.iter().map(|l| l.id.clone()).collect();

    // Ground-truth task Gaussians, well separated, plus one held-out task.
    let world = separated_world(&ids, 16, 0.1, 12.0, 1, 10.0, &mut master.derive(2));
    println!(
        "min pairwise Bhattacharyya across tasks: {:.2}",
        world.min_pairwise_bhattacharyya()
    );

    let embedder = SyntheticEmbedder::new(world.all_tasks(), 1.0, 7);
    let fitted = fit_pool_gaussians(
        &pool,
        &embedder,
        20,
        DEFAULT_INSTRUCTION,
        Some(0.2),
        &mut master.derive(3),
    )
    .expect("fit succeeds");
    for g in fitted.gaussians.as_ref().expect("fitted") {
        println!(
            "fitted {}: dim {}, lambda {:.3e}",
            g.lora_id,
            g.dim(),
            g.reg_lambda()
        );
    }

    for input in ["lora-0#demo", "lora-2#demo", "unseen-0#demo"] {
        let z = embedder
            .embed(DEFAULT_INSTRUCTION, input)
            .expect("known task tag");
        let scores = pool_scores(&fitted, &z).expect("scored");
        let line: Vec<String> = scores
            .iter()
            .map(|(id, s)| format!("{id}: {s:+.2}"))
            .collect();
        println!("{input:>14} -> {}", line.join("  "));
    }
    println!("(positive scores mark confident in-domain matches)");
}
