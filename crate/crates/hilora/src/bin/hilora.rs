//! Command-line front end: pool management, routing inspection, experiment
//! runs, throughput benchmarks, gamma sweeps, bound computation, and
//! analysis exports. All logic lives in the library; this binary parses
//! flags and prints results.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hilora::experiment::{
    bench_csv, bench_throughput, decision_line, export_roc_pca, gamma_sweep, input_features,
    prepare, run_experiment, separated_world, sweep_csv, write_records_jsonl, write_summary_json,
    BackboneKind, ExperimentConfig, Method, PoolSource, RocVectorKind, WorldKind,
};
use hilora::numerics::{RngStream, Vector};
use hilora::pool::{load_manifest, save_manifest, synthesize_pool, PoolSpec};
use hilora::router::{forward_with_trace, make_plan, ProjectionRanking};
use hilora::task::{
    fit_pool_gaussians, pool_scores, EmbeddingProvider, SyntheticEmbedder, DEFAULT_INSTRUCTION,
};
use hilora::theory::{
    bhattacharyya_exponent, gaussian_kl, multi_k_exclusion_rates, ood_alpha_sweep,
    pairwise_bayes_bound, random_sources, topk_id_bound, ExclusionTruth,
};

#[derive(Parser)]
#[command(
    name = "hilora",
    version,
    about = "Hierarchical routing over LoRA adapter pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize, fit, or inspect pool manifests.
    Pool {
        #[command(subcommand)]
        cmd: PoolCmd,
    },
    /// Route one input and print (or save) the full routing decision.
    Route {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Run seed.
        #[arg(long)]
        seed: u64,
        /// Synthetic input id, e.g. "lora-0#e0" or "unseen-1#e3".
        #[arg(long)]
        input: Option<String>,
        /// Raw embedding as comma-separated reals (bypasses the embedder).
        #[arg(long)]
        embedding: Option<String>,
        /// Feature vector for the forward pass, comma-separated reals.
        #[arg(long)]
        x: Option<String>,
        /// Write plan + per-layer ROC selections + output as JSON here.
        #[arg(long)]
        emit_plans: Option<PathBuf>,
    },
    /// Run a full experiment from a config (JSON) with CLI overrides.
    Run {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Run seed (mandatory; overrides the config).
        #[arg(long)]
        seed: u64,
        /// Print decision lines (timings zeroed) to stdout as well.
        #[arg(long)]
        print_decisions: bool,
    },
    /// Throughput vs pool size on a fixed eval set.
    Bench {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Run seed (mandatory).
        #[arg(long)]
        seed: u64,
        /// Pool sizes, comma-separated.
        #[arg(long, default_value = "5,10,20,40")]
        sizes: String,
        /// Timed repetitions per size (>= 5), after one warm-up.
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Worker threads for the serving loop; keep 1 for comparable
        /// single-stream numbers.
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mean MSE and granted budget across a gamma grid.
    SweepGamma {
        #[command(flatten)]
        overrides: ConfigOverrides,
        /// Run seed (mandatory).
        #[arg(long)]
        seed: u64,
        /// Gamma values, comma-separated.
        #[arg(long)]
        gammas: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Closed-form routing error bounds and their Monte-Carlo verification.
    Theory {
        #[command(subcommand)]
        cmd: TheoryCmd,
    },
    /// Analysis exports.
    Export {
        #[command(subcommand)]
        cmd: ExportCmd,
    },
}

#[derive(Subcommand)]
enum PoolCmd {
    /// Generate a pool with i.i.d. normal weights.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        num_loras: usize,
        #[arg(long, default_value_t = 16)]
        model_dim: usize,
        #[arg(long, default_value_t = 3)]
        num_layers: usize,
        /// Per-adapter ranks, cycled (e.g. 4,8).
        #[arg(long, default_value = "4,8")]
        ranks: String,
        #[arg(long, default_value_t = 1.0)]
        entry_scale: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Fit one Gaussian task model per adapter from synthetic embeddings.
    Fit {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 16)]
        embed_dim: usize,
        #[arg(long, default_value_t = 0.1)]
        cov_scale: f64,
        #[arg(long, default_value_t = 1.0)]
        noise_scale: f64,
        #[arg(long, default_value_t = 12.0)]
        min_bhattacharyya: f64,
        /// Samples per adapter.
        #[arg(long, default_value_t = 20)]
        m: usize,
        #[arg(long, default_value = DEFAULT_INSTRUCTION)]
        instruction: String,
        /// Covariance ridge as a fraction of mean sample variance.
        #[arg(long, default_value_t = 0.2)]
        ridge: f64,
        #[arg(long)]
        seed: u64,
    },
    /// Print a summary of a manifest.
    Inspect {
        #[arg(long)]
        manifest: PathBuf,
    },
}

#[derive(Subcommand)]
enum TheoryCmd {
    /// Pairwise Bhattacharyya matrix, top-k bounds, and the alpha sweep for
    /// a randomly generated scenario.
    Bounds {
        /// Dimension of the scenario Gaussians.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        /// Number of source Gaussians.
        #[arg(long, default_value_t = 5)]
        sources: usize,
        /// Scale of the random source means.
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        /// Top-k values to report, comma-separated.
        #[arg(long, default_value = "1,2,3")]
        k: String,
        /// Also build an out-of-distribution target and report its bounds.
        #[arg(long)]
        ood: bool,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Bounds plus Monte-Carlo exclusion rates with Wilson intervals.
    Verify {
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 5)]
        sources: usize,
        #[arg(long, default_value_t = 2.0)]
        separation: f64,
        #[arg(long, default_value = "1,2,3")]
        k: String,
        #[arg(long)]
        ood: bool,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum ExportCmd {
    /// 2-D PCA scatter of ROC vectors for one layer, as CSV.
    Pca {
        #[arg(long)]
        manifest: PathBuf,
        /// Which dyad half to project: "a" or "b".
        #[arg(long, default_value = "b")]
        which: String,
        #[arg(long, default_value_t = 0)]
        layer: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// CLI overrides for every experiment config field. A `--config` JSON file
/// provides the base; flags win.
#[derive(Args)]
struct ConfigOverrides {
    /// Base experiment config (JSON). Defaults are used when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    k_min: Option<usize>,
    /// Token-level ranking: "raw" or "abs".
    #[arg(long)]
    ranking: Option<String>,
    #[arg(long)]
    roc_topk: Option<usize>,
    #[arg(long)]
    model_dim: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    /// Synthesized pool size (switches the pool source to synth).
    #[arg(long)]
    num_loras: Option<usize>,
    /// Synthesized pool ranks, comma-separated.
    #[arg(long)]
    ranks: Option<String>,
    #[arg(long)]
    entry_scale: Option<f64>,
    /// Use a pool manifest instead of synthesizing.
    #[arg(long)]
    manifest: Option<String>,
    #[arg(long)]
    embed_dim: Option<usize>,
    #[arg(long)]
    cov_scale: Option<f64>,
    #[arg(long)]
    noise_scale: Option<f64>,
    /// Separated-world pairwise Bhattacharyya floor.
    #[arg(long)]
    min_bhattacharyya: Option<f64>,
    /// Switch to the two-task overlap world with this expected score gap.
    #[arg(long)]
    score_gap: Option<f64>,
    #[arg(long)]
    seen_inputs: Option<usize>,
    #[arg(long)]
    seen_task_limit: Option<usize>,
    #[arg(long)]
    unseen_tasks: Option<usize>,
    #[arg(long)]
    unseen_inputs: Option<usize>,
    #[arg(long)]
    unseen_kl: Option<f64>,
    /// Backbone kind: "orthogonal" or "gaussian".
    #[arg(long)]
    backbone: Option<String>,
    /// Gaussian-fit samples per adapter.
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    instruction: Option<String>,
    /// Covariance ridge fraction for fitting.
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// JSON-lines records output path.
    #[arg(long)]
    records: Option<String>,
    /// Summary JSON output path.
    #[arg(long)]
    summary: Option<String>,
}

impl ConfigOverrides {
    fn build(&self, seed: u64) -> Result<ExperimentConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
                ExperimentConfig::from_json(&text).map_err(|e| e.to_string())?
            }
            None => ExperimentConfig::default(),
        };
        cfg.seed = seed;
        if let Some(m) = &self.method {
            cfg.method = m.parse::<Method>()?;
        }
        if let Some(g) = self.gamma {
            cfg.router.gamma = g;
        }
        if let Some(k) = self.k_min {
            cfg.router.k_min = k;
        }
        if let Some(r) = &self.ranking {
            cfg.router.projection_ranking = parse_ranking(r)?;
        }
        if let Some(k) = self.roc_topk {
            cfg.router.roc_topk = k;
        }
        if let Some(d) = self.model_dim {
            cfg.model_dim = d;
        }
        if let Some(l) = self.num_layers {
            cfg.num_layers = l;
        }
        if let Some(path) = &self.manifest {
            cfg.pool = PoolSource::Manifest { path: path.clone() };
        }
        if self.num_loras.is_some() || self.ranks.is_some() || self.entry_scale.is_some() {
            let (mut n, mut r, mut s) = match &cfg.pool {
                PoolSource::Synth {
                    num_loras,
                    ranks,
                    entry_scale,
                } => (*num_loras, ranks.clone(), *entry_scale),
                _ => (5, vec![4, 8], 0.05),
            };
            if let Some(v) = self.num_loras {
                n = v;
            }
            if let Some(list) = &self.ranks {
                r = parse_list::<usize>(list)?;
            }
            if let Some(v) = self.entry_scale {
                s = v;
            }
            cfg.pool = PoolSource::Synth {
                num_loras: n,
                ranks: r,
                entry_scale: s,
            };
        }
        if let Some(d) = self.embed_dim {
            cfg.embedder.embed_dim = d;
        }
        if let Some(v) = self.cov_scale {
            cfg.embedder.cov_scale = v;
        }
        if let Some(v) = self.noise_scale {
            cfg.embedder.noise_scale = v;
        }
        if let Some(b) = self.min_bhattacharyya {
            cfg.embedder.world = WorldKind::Separated {
                min_bhattacharyya: b,
            };
        }
        if let Some(g) = self.score_gap {
            cfg.embedder.world = WorldKind::Overlap { score_gap: g };
        }
        if let Some(v) = self.seen_inputs {
            cfg.eval.seen_inputs_per_task = v;
        }
        if let Some(v) = self.seen_task_limit {
            cfg.eval.seen_task_limit = Some(v);
        }
        if let Some(v) = self.unseen_tasks {
            cfg.eval.unseen_tasks = v;
        }
        if let Some(v) = self.unseen_inputs {
            cfg.eval.unseen_inputs_per_task = v;
        }
        if let Some(v) = self.unseen_kl {
            cfg.eval.unseen_target_kl = v;
        }
        if let Some(b) = &self.backbone {
            cfg.backbone.kind = match b.as_str() {
                "orthogonal" => BackboneKind::Orthogonal,
                "gaussian" => BackboneKind::Gaussian,
                other => return Err(format!("unknown backbone '{other}'")),
            };
        }
        if let Some(m) = self.m {
            cfg.fit.m = m;
        }
        if let Some(i) = &self.instruction {
            cfg.fit.instruction = i.clone();
        }
        if let Some(r) = self.ridge {
            cfg.fit.ridge_fraction = Some(r);
        }
        if let Some(b) = self.batch_size {
            cfg.batch_size = b;
        }
        if let Some(p) = &self.records {
            cfg.output.records = Some(p.clone());
        }
        if let Some(p) = &self.summary {
            cfg.output.summary = Some(p.clone());
        }
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

fn parse_ranking(s: &str) -> Result<ProjectionRanking, String> {
    match s {
        "raw" => Ok(ProjectionRanking::Raw),
        "abs" => Ok(ProjectionRanking::Abs),
        other => Err(format!("unknown ranking '{other}' (expected raw|abs)")),
    }
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| p.trim())
        .filter(|p| !p.is_empty())
        .map(|p| {
            p.parse::<T>()
                .map_err(|e| format!("cannot parse '{p}': {e}"))
        })
        .collect()
}

fn parse_vector(s: &str) -> Result<Vector, String> {
    Ok(Vector::from_vec(parse_list::<f64>(s)?))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Pool { cmd } => pool_cmd(cmd),
        Command::Route {
            overrides,
            seed,
            input,
            embedding,
            x,
            emit_plans,
        } => route_cmd(&overrides, seed, input, embedding, x, emit_plans),
        Command::Run {
            overrides,
            seed,
            print_decisions,
        } => {
            let cfg = overrides.build(seed)?;
            let (records, summary) = run_experiment(&cfg).map_err(|e| e.to_string())?;
            if let Some(path) = &cfg.output.records {
                write_records_jsonl(&records, path).map_err(|e| e.to_string())?;
            }
            if let Some(path) = &cfg.output.summary {
                write_summary_json(&summary, path).map_err(|e| e.to_string())?;
            }
            if print_decisions {
                for r in &records {
                    println!("{}", decision_line(r));
                }
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&summary).expect("summary")
            );
            Ok(())
        }
        Command::Bench {
            overrides,
            seed,
            sizes,
            reps,
            threads,
            out,
        } => {
            let cfg = overrides.build(seed)?;
            let sizes = parse_list::<usize>(&sizes)?;
            let rows = bench_throughput(&cfg, &sizes, reps, threads).map_err(|e| e.to_string())?;
            let csv = bench_csv(&rows);
            match out {
                Some(path) => std::fs::write(path, csv).map_err(|e| e.to_string())?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::SweepGamma {
            overrides,
            seed,
            gammas,
            out,
        } => {
            let cfg = overrides.build(seed)?;
            let gammas = parse_list::<f64>(&gammas)?;
            let (rows, warnings) = gamma_sweep(&cfg, &gammas).map_err(|e| e.to_string())?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let csv = sweep_csv(&rows);
            match out {
                Some(path) => std::fs::write(path, csv).map_err(|e| e.to_string())?,
                None => print!("{csv}"),
            }
            Ok(())
        }
        Command::Theory { cmd } => theory_cmd(cmd),
        Command::Export { cmd } => export_cmd(cmd),
    }
}

fn pool_cmd(cmd: PoolCmd) -> Result<(), String> {
    match cmd {
        PoolCmd::Synth {
            out,
            num_loras,
            model_dim,
            num_layers,
            ranks,
            entry_scale,
            seed,
        } => {
            let spec = PoolSpec {
                num_loras,
                model_dim,
                num_layers,
                ranks: parse_list::<usize>(&ranks)?,
                entry_scale,
                id_prefix: "lora".into(),
            };
            let pool =
                synthesize_pool(&spec, &mut RngStream::new(seed, 0)).map_err(|e| e.to_string())?;
            save_manifest(&pool, &out).map_err(|e| e.to_string())?;
            println!(
                "wrote {} ({} adapters, dim {}, {} layers)",
                out.display(),
                pool.len(),
                pool.model_dim,
                pool.num_layers
            );
            Ok(())
        }
        PoolCmd::Fit {
            manifest,
            out,
            embed_dim,
            cov_scale,
            noise_scale,
            min_bhattacharyya,
            m,
            instruction,
            ridge,
            seed,
        } => {
            let pool = load_manifest(&manifest).map_err(|e| e.to_string())?;
            let ids: Vec<String> = pool.loras.iter().map(|l| l.id.clone()).collect();
            let master = RngStream::new(seed, 0);
            let world = separated_world(
                &ids,
                embed_dim,
                cov_scale,
                min_bhattacharyya,
                0,
                10.0,
                &mut master.derive(2),
            );
            let embedder = SyntheticEmbedder::new(world.all_tasks(), noise_scale, seed);
            let fitted = fit_pool_gaussians(
                &pool,
                &embedder,
                m,
                &instruction,
                Some(ridge),
                &mut master.derive(3),
            )
            .map_err(|e| e.to_string())?;
            save_manifest(&fitted, &out).map_err(|e| e.to_string())?;
            println!(
                "wrote {} with {} fitted gaussians",
                out.display(),
                fitted.len()
            );
            Ok(())
        }
        PoolCmd::Inspect { manifest } => {
            let pool = load_manifest(&manifest).map_err(|e| e.to_string())?;
            println!("model_dim: {}", pool.model_dim);
            println!("num_layers: {}", pool.num_layers);
            println!("adapters: {}", pool.len());
            println!("total_rank: {}", pool.total_rank());
            for l in &pool.loras {
                let g = pool
                    .gaussian_for(&l.id)
                    .map(|g| format!("gaussian dim {} lambda {:.3e}", g.dim(), g.reg_lambda()))
                    .unwrap_or_else(|| "no gaussian".to_string());
                println!("  {} rank {} [{g}]", l.id, l.rank);
            }
            Ok(())
        }
    }
}

fn route_cmd(
    overrides: &ConfigOverrides,
    seed: u64,
    input: Option<String>,
    embedding: Option<String>,
    x: Option<String>,
    emit_plans: Option<PathBuf>,
) -> Result<(), String> {
    let cfg = overrides.build(seed)?;
    let prepared = prepare(&cfg).map_err(|e| e.to_string())?;

    let input_id = input.unwrap_or_else(|| format!("{}#e0", prepared.pool.loras[0].id));
    let z = match embedding {
        Some(list) => parse_vector(&list)?,
        None => prepared
            .embedder
            .embed(&cfg.fit.instruction, &input_id)
            .map_err(|e| e.to_string())?,
    };
    let scores = pool_scores(&prepared.pool, &z).map_err(|e| e.to_string())?;
    let ranks: Vec<usize> = prepared.pool.loras.iter().map(|l| l.rank).collect();
    let mut plan_rng = RngStream::new(cfg.seed, 0).derive(5).derive(0);
    let plan = make_plan(&scores, &ranks, &cfg.router.to_config(), &mut plan_rng)
        .map_err(|e| e.to_string())?;

    let x = match x {
        Some(list) => parse_vector(&list)?,
        None => input_features(&cfg, &input_id),
    };
    if x.dim() != prepared.pool.model_dim {
        return Err(format!(
            "--x has {} entries, model dim is {}",
            x.dim(),
            prepared.pool.model_dim
        ));
    }
    let (output, trace) = forward_with_trace(&prepared.backbone, &prepared.pool, &plan, &x)
        .map_err(|e| e.to_string())?;

    let doc = serde_json::json!({
        "input": input_id,
        "scores": scores
            .iter()
            .map(|(id, s)| serde_json::json!({"id": id, "score": s}))
            .collect::<Vec<_>>(),
        "plan": plan,
        "per_layer_selections": trace,
        "output": output.data(),
    });
    let text = serde_json::to_string_pretty(&doc).expect("plan document");
    match emit_plans {
        Some(path) => {
            std::fs::write(&path, &text).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn theory_cmd(cmd: TheoryCmd) -> Result<(), String> {
    match cmd {
        TheoryCmd::Bounds {
            dim,
            sources,
            separation,
            k,
            ood,
            seed,
            out,
        } => {
            let ks = parse_list::<usize>(&k)?;
            let doc = theory_report(dim, sources, separation, &ks, ood, None, seed)?;
            emit_json(&doc, out)
        }
        TheoryCmd::Verify {
            dim,
            sources,
            separation,
            k,
            ood,
            trials,
            seed,
            out,
        } => {
            let ks = parse_list::<usize>(&k)?;
            let doc = theory_report(dim, sources, separation, &ks, ood, Some(trials), seed)?;
            emit_json(&doc, out)
        }
    }
}

fn theory_report(
    dim: usize,
    n_sources: usize,
    separation: f64,
    ks: &[usize],
    ood: bool,
    trials: Option<u64>,
    seed: u64,
) -> Result<serde_json::Value, String> {
    if n_sources < 2 {
        return Err("need at least 2 sources".into());
    }
    let master = RngStream::new(seed, 0);
    let models = random_sources(dim, n_sources, separation, &mut master.derive(1));

    let mut b_matrix = vec![vec![0.0; n_sources]; n_sources];
    let mut bayes = vec![vec![1.0; n_sources]; n_sources];
    for i in 0..n_sources {
        for j in 0..n_sources {
            if i != j {
                b_matrix[i][j] =
                    bhattacharyya_exponent(&models[i], &models[j]).map_err(|e| e.to_string())?;
                bayes[i][j] =
                    pairwise_bayes_bound(&models[i], &models[j]).map_err(|e| e.to_string())?;
            }
        }
    }

    let mut targets = Vec::new();
    for target in 0..n_sources {
        let mut per_k = Vec::new();
        for &k in ks {
            let bound = topk_id_bound(target, &models, k).map_err(|e| e.to_string())?;
            let mc = trials
                .map(|n| {
                    multi_k_exclusion_rates(
                        &models,
                        &ExclusionTruth::SourceIndex(target),
                        &[k],
                        n,
                        &master.derive(100 + target as u64),
                    )
                    .map(|mut v| v.remove(0))
                })
                .transpose()
                .map_err(|e| e.to_string())?;
            per_k.push(serde_json::json!({
                "k": k,
                "bound_raw": bound.raw,
                "bound": bound.reported(),
                "mc": mc,
            }));
        }
        targets.push(serde_json::json!({"target": target, "bounds": per_k}));
    }

    let ood_doc = if ood {
        let q = random_sources(dim, 1, separation * 1.5, &mut master.derive(2))
            .into_iter()
            .next()
            .expect("one target");
        let alphas: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
        let mut per_k = Vec::new();
        for &k in ks {
            let sweep = ood_alpha_sweep(&q, &models, k, &alphas).map_err(|e| e.to_string())?;
            let mc = trials
                .map(|n| {
                    multi_k_exclusion_rates(
                        &models,
                        &ExclusionTruth::OodQ(q.clone()),
                        &[k],
                        n,
                        &master.derive(200 + k as u64),
                    )
                    .map(|mut v| v.remove(0))
                })
                .transpose()
                .map_err(|e| e.to_string())?;
            per_k.push(serde_json::json!({
                "k": k,
                "closest_source": sweep.closest_source,
                "alpha_table": sweep
                    .rows
                    .iter()
                    .map(|(a, b)| serde_json::json!({
                        "alpha": a,
                        "bound_raw": if b.raw.is_finite() { serde_json::json!(b.raw) } else { serde_json::json!("inf") },
                        "bound": b.reported(),
                        "vacuous": b.vacuous,
                    }))
                    .collect::<Vec<_>>(),
                "min_finite": sweep
                    .min_finite
                    .map(|(a, v)| serde_json::json!({"alpha": a, "bound_raw": v})),
                "mc": mc,
            }));
        }
        let kls: Vec<f64> = models
            .iter()
            .map(|s| gaussian_kl(&q, s).map_err(|e| e.to_string()))
            .collect::<Result<_, _>>()?;
        Some(serde_json::json!({"kl_to_sources": kls, "per_k": per_k}))
    } else {
        None
    };

    Ok(serde_json::json!({
        "dim": dim,
        "sources": n_sources,
        "seed": seed,
        "bhattacharyya": b_matrix,
        "pairwise_bayes_bounds": bayes,
        "id_targets": targets,
        "ood": ood_doc,
    }))
}

fn emit_json(doc: &serde_json::Value, out: Option<PathBuf>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(doc).expect("json document");
    match out {
        Some(path) => {
            std::fs::write(&path, &text).map_err(|e| e.to_string())?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn export_cmd(cmd: ExportCmd) -> Result<(), String> {
    match cmd {
        ExportCmd::Pca {
            manifest,
            which,
            layer,
            out,
        } => {
            let pool = load_manifest(&manifest).map_err(|e| e.to_string())?;
            let kind: RocVectorKind = which.parse()?;
            let (csv, explained) = export_roc_pca(&pool, kind, layer).map_err(|e| e.to_string())?;
            match out {
                Some(path) => {
                    std::fs::write(&path, &csv).map_err(|e| e.to_string())?;
                    println!(
                        "wrote {} (explained variance {:.4} / {:.4})",
                        path.display(),
                        explained.0,
                        explained.1
                    );
                }
                None => print!("{csv}"),
            }
            Ok(())
        }
    }
}
