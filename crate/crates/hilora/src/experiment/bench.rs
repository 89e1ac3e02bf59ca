//! Throughput benchmark over growing pool sizes with a fixed eval set.

use std::time::Instant;

use serde::Serialize;

use super::{
    cfg_err, eval_inputs, input_features, prepare, serve_input, EvalInput, ExperimentConfig,
    ExperimentError, PreparedExperiment, SyntheticWorld,
};
use crate::pool::merged_module;

/// Throughput measurements for one pool size.
#[derive(Debug, Clone, Serialize)]
pub struct BenchRow {
    pub pool_size: usize,
    /// Inputs per second for each timed repetition.
    pub reps_per_sec: Vec<f64>,
    pub median_per_sec: f64,
}

/// Measure serving throughput at each pool size, on the same inputs.
///
/// The largest pool is built once; smaller sizes use its prefix so the seen
/// eval tasks (the first few adapters) exist at every size. Each size runs
/// one warm-up plus `reps >= 5` timed repetitions; the median is reported
/// and monotonicity over sizes is the caller's to check, not enforced here.
pub fn bench_throughput(
    config: &ExperimentConfig,
    sizes: &[usize],
    reps: usize,
    threads: usize,
) -> Result<Vec<BenchRow>, ExperimentError> {
    if sizes.is_empty() {
        return Err(cfg_err("bench.sizes", "must be nonempty"));
    }
    if sizes.contains(&0) {
        return Err(cfg_err("bench.sizes", "sizes must be >= 1"));
    }
    if reps < 5 {
        return Err(cfg_err("bench.reps", "need at least 5 timed repetitions"));
    }
    if threads == 0 {
        return Err(cfg_err("bench.threads", "must be >= 1"));
    }
    let max_size = *sizes.iter().max().expect("nonempty");
    let min_size = *sizes.iter().min().expect("nonempty");

    // One world and pool at the largest size; prefixes share it.
    let mut full_cfg = config.clone();
    if let super::PoolSource::Synth { num_loras, .. } = &mut full_cfg.pool {
        *num_loras = max_size;
    } else {
        return Err(cfg_err(
            "pool",
            "throughput bench requires a synthesized pool",
        ));
    }
    full_cfg.eval.seen_task_limit = Some(full_cfg.eval.seen_task_limit.unwrap_or(5).min(min_size));
    full_cfg.validate()?;
    let full = prepare(&full_cfg)?;
    let total_eval = full_cfg.eval.seen_task_limit.unwrap_or(min_size)
        * full_cfg.eval.seen_inputs_per_task
        + full_cfg.eval.unseen_tasks * full_cfg.eval.unseen_inputs_per_task;
    if total_eval == 0 {
        return Err(cfg_err("eval", "evaluation set is empty"));
    }

    // Build every size's serving context up front.
    struct SizeContext {
        size: usize,
        prepared: PreparedExperiment,
        merged: crate::pool::MergedModule,
        inputs: Vec<EvalInput>,
        features: Vec<crate::numerics::Vector>,
    }
    let mut contexts = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let pool = full.pool.truncated(size)?;
        let world = SyntheticWorld {
            seen: full.world.seen[..size].to_vec(),
            unseen: full.world.unseen.clone(),
        };
        let prepared = PreparedExperiment {
            pool,
            world,
            embedder: full.embedder.clone(),
            backbone: full.backbone.clone(),
        };
        let merged = merged_module(&prepared.pool)?;
        let inputs = eval_inputs(&full_cfg, &prepared)?;
        let features: Vec<crate::numerics::Vector> = inputs
            .iter()
            .map(|i| input_features(&full_cfg, &i.input_id))
            .collect();
        contexts.push(SizeContext {
            size,
            prepared,
            merged,
            inputs,
            features,
        });
    }

    // The serving path never reads the reference except for the oracle arm,
    // which reuses the feature vector as a placeholder there.
    let run_once = |ctx: &SizeContext| -> Result<(), ExperimentError> {
        serve_all(
            &full_cfg,
            &ctx.prepared,
            &ctx.merged,
            &ctx.inputs,
            &ctx.features,
            threads,
        )
    };

    // One warm-up pass per size, then repetitions interleaved across sizes:
    // a transient load burst lands on every size within the same repetition
    // instead of corrupting one size's whole sample.
    let mut per_size: Vec<Vec<f64>> = vec![Vec::with_capacity(reps); sizes.len()];
    for ctx in &contexts {
        run_once(ctx)?;
    }
    for _ in 0..reps {
        for (si, ctx) in contexts.iter().enumerate() {
            let start = Instant::now();
            run_once(ctx)?;
            let elapsed = start.elapsed().as_secs_f64();
            per_size[si].push(ctx.inputs.len() as f64 / elapsed.max(1e-12));
        }
    }

    Ok(contexts
        .iter()
        .zip(per_size)
        .map(|(ctx, reps_per_sec)| BenchRow {
            pool_size: ctx.size,
            median_per_sec: median(&reps_per_sec),
            reps_per_sec,
        })
        .collect())
}

fn serve_all(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    merged: &crate::pool::MergedModule,
    inputs: &[EvalInput],
    features: &[crate::numerics::Vector],
    threads: usize,
) -> Result<(), ExperimentError> {
    let serve_range = |range: std::ops::Range<usize>| -> Result<(), ExperimentError> {
        for gi in range {
            let outcome = serve_input(
                config,
                prepared,
                merged,
                &inputs[gi],
                &features[gi],
                &features[gi],
                gi as u64,
            )?;
            std::hint::black_box(&outcome.output);
        }
        Ok(())
    };
    if threads <= 1 {
        return serve_range(0..inputs.len());
    }
    let chunk = inputs.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for t in 0..threads {
            let lo = t * chunk;
            let hi = ((t + 1) * chunk).min(inputs.len());
            if lo >= hi {
                break;
            }
            handles.push(scope.spawn(move || serve_range(lo..hi)));
        }
        for h in handles {
            h.join().expect("bench worker panicked")?;
        }
        Ok(())
    })
}

fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite throughput"));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// CSV table of the benchmark rows.
pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("pool_size,median_inputs_per_sec,reps\n");
    for r in rows {
        let reps = r
            .reps_per_sec
            .iter()
            .map(|v| format!("{v:.2}"))
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{:.2},{}\n",
            r.pool_size, r.median_per_sec, reps
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::{Method, PoolSource};

    fn bench_config() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = 21;
        cfg.method = Method::Hilora;
        cfg.pool = PoolSource::Synth {
            num_loras: 10,
            ranks: vec![4, 8],
            entry_scale: 0.05,
        };
        cfg.eval.seen_inputs_per_task = 8;
        cfg.eval.unseen_tasks = 2;
        cfg.eval.unseen_inputs_per_task = 8;
        cfg
    }

    #[test]
    fn bench_produces_rows_per_size() {
        let rows = bench_throughput(&bench_config(), &[2, 6], 5, 1).unwrap();
        assert_eq!(rows.len(), 2);
        for r in &rows {
            assert_eq!(r.reps_per_sec.len(), 5);
            assert!(r.median_per_sec > 0.0);
        }
    }

    #[test]
    fn bench_rejects_empty_and_undersized() {
        assert!(bench_throughput(&bench_config(), &[], 5, 1).is_err());
        assert!(bench_throughput(&bench_config(), &[2], 2, 1).is_err());
        let mut cfg = bench_config();
        cfg.eval.seen_inputs_per_task = 0;
        cfg.eval.unseen_tasks = 0;
        cfg.eval.unseen_inputs_per_task = 0;
        assert!(bench_throughput(&cfg, &[2], 5, 1).is_err());
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
