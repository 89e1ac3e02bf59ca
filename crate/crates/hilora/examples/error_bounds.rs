//! Closed-form routing error bounds: pairwise Bhattacharyya exponents,
//! top-k exclusion bounds, Chernoff coefficients, and the alpha sweep for
//! an out-of-distribution target.
//!
//! ```bash
//! cargo run --release --example error_bounds
//! ```

use hilora::numerics::RngStream;
use hilora::theory::{
    bhattacharyya_exponent, chernoff_coefficient, gaussian_kl, ood_alpha_sweep,
    pairwise_bayes_bound, random_sources, topk_id_bound,
};

fn main() {
    let master = RngStream::new(5, 0);
    let sources = random_sources(3, 5, 2.5, &mut master.derive(1));

    println!("pairwise Bhattacharyya exponents / Bayes bounds:");
    for i in 0..sources.len() {
        for j in (i + 1)..sources.len() {
            let b = bhattacharyya_exponent(&sources[i], &sources[j]).expect("SPD");
            let bound = pairwise_bayes_bound(&sources[i], &sources[j]).expect("SPD");
            println!("  ({i},{j}): B = {b:7.3}  exp(-B) = {bound:.4}");
        }
    }

    println!("\nin-distribution top-k bounds for target 0:");
    for k in [1, 2, 3] {
        let bound = topk_id_bound(0, &sources, k).expect("valid target");
        println!(
            "  k = {k}: raw {:-9.4}  reported {:.4}",
            bound.raw,
            bound.reported()
        );
    }

    // The Chernoff coefficient at alpha = 1/2 coincides with exp(-B).
    let rho = chernoff_coefficient(&sources[0], &sources[1], 0.5).expect("SPD");
    let exp_b = pairwise_bayes_bound(&sources[0], &sources[1]).expect("SPD");
    println!("\nrho_1/2 vs exp(-B) on pair (0,1): {rho:.6} vs {exp_b:.6}");

    // Out-of-distribution target: the alpha sweep finds the tightest finite
    // bound for excluding the KL-closest source.
    let q = random_sources(3, 1, 3.5, &mut master.derive(2)).remove(0);
    let kls: Vec<String> = sources
        .iter()
        .map(|s| format!("{:.2}", gaussian_kl(&q, s).expect("SPD")))
        .collect();
    println!("\nOOD target q: KL(q || source_i) = [{}]", kls.join(", "));
    let alphas: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let sweep = ood_alpha_sweep(&q, &sources, 2, &alphas).expect("sweep");
    println!(
        "closest source i* = {}; alpha sweep at k = 2:",
        sweep.closest_source
    );
    for (alpha, bound) in &sweep.rows {
        let shown = if bound.vacuous {
            "vacuous".to_string()
        } else {
            format!("{:.4}", bound.raw)
        };
        println!("  alpha {alpha:.1}: {shown}");
    }
    match sweep.min_finite {
        Some((alpha, raw)) => println!("tightest finite bound: {raw:.4} at alpha = {alpha:.1}"),
        None => println!("no alpha yields a finite bound for this scenario"),
    }
}
