//! Monte-Carlo verification that empirical top-k exclusion rates respect
//! the closed-form bounds, for seen-task and out-of-distribution inputs.
//!
//! ```bash
//! cargo run --release --example monte_carlo_verification
//! ```

use hilora::numerics::RngStream;
use hilora::theory::{
    multi_k_exclusion_rates, ood_alpha_sweep, random_sources, topk_id_bound, ExclusionTruth,
};

fn main() {
    let trials = 100_000;
    println!("in-distribution: true source vs top-k scores ({trials} trials each)");
    println!(
        "{:>4} {:>4} {:>10} {:>10} {:>8}",
        "dim", "k", "rate", "bound", "ok"
    );
    for scenario in 0..4u64 {
        let dim = 2 + (scenario as usize % 3);
        let master = RngStream::new(77 + scenario, 0);
        let sources = random_sources(dim, 4 + scenario as usize, 1.5, &mut master.derive(1));
        let rates = multi_k_exclusion_rates(
            &sources,
            &ExclusionTruth::SourceIndex(0),
            &[1, 2, 3],
            trials,
            &master.derive(2),
        )
        .expect("mc runs");
        for res in rates {
            let bound = topk_id_bound(0, &sources, res.k).expect("bound");
            let ok = res.interval.rate <= bound.reported() + 3.0 * res.interval.half_width();
            println!(
                "{dim:>4} {:>4} {:>10.5} {:>10.5} {:>8}",
                res.k,
                res.interval.rate,
                bound.reported(),
                ok
            );
        }
    }

    println!("\nout-of-distribution: KL-closest source vs top-k scores");
    let master = RngStream::new(123, 0);
    let sources = random_sources(3, 5, 2.0, &mut master.derive(1));
    let q = random_sources(3, 1, 3.0, &mut master.derive(2)).remove(0);
    let alphas: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    for k in [1usize, 2] {
        let sweep = ood_alpha_sweep(&q, &sources, k, &alphas).expect("sweep");
        let istar = sweep.closest_source;
        let res = multi_k_exclusion_rates(
            &sources,
            &ExclusionTruth::OodQ(q.clone()),
            &[k],
            trials,
            &master.derive(10 + k as u64),
        )
        .expect("mc runs")
        .remove(0);
        match sweep.min_finite {
            Some((alpha, bound)) => {
                let ok = res.interval.rate <= bound.min(1.0) + 3.0 * res.interval.half_width();
                println!(
                    "  k = {k}: i* = {istar}, rate {:.5} <= bound {:.5} (alpha {alpha:.1})? {ok}",
                    res.interval.rate,
                    bound.min(1.0),
                );
            }
            None => println!(
                "  k = {k}: every alpha vacuous; rate {:.5}",
                res.interval.rate
            ),
        }
    }
}
