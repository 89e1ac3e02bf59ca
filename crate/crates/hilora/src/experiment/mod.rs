//! Config-driven evaluation harness: seeded end-to-end runs, throughput
//! benchmarking, ablation sweeps, and analysis exports.
//!
//! Every run is reproducible: the master seed derives one stream per stage
//! (pool synthesis, world construction, Gaussian fitting, backbone, and one
//! per eval input), so two runs with the same config and seed emit
//! byte-identical decision fields. Timings are the only nondeterministic
//! output.

mod bench;
mod export;
mod sweep;
mod world;

pub use bench::{bench_csv, bench_throughput, BenchRow};
pub use export::{export_roc_pca, RocVectorKind};
pub use sweep::{gamma_sweep, sweep_csv, SweepRow};
pub use world::{interference_pool, overlap_world, separated_world, SyntheticWorld};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{hash_bytes, RngStream, Vector};
use crate::pool::{
    load_manifest, merged_module, synthesize_pool, PoolError, PoolManifest, PoolSpec,
};
use crate::router::baseline::{
    forward_ensemble, forward_merged, forward_oracle, forward_roc_only, gs_only_plan,
    retriever_plan, DEFAULT_ROC_TOPK,
};
use crate::router::ToyBackbone;
use crate::router::{forward, make_plan, ProjectionRanking, RouterConfig, RouterError};
use crate::task::{
    fit_pool_gaussians, pool_scores, EmbeddingProvider, SyntheticEmbedder, TaskModelError,
    DEFAULT_INSTRUCTION,
};
use crate::theory::TheoryError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("config error at {path}: {reason}")]
    Config { path: String, reason: String },
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Task(#[from] TaskModelError),
    #[error(transparent)]
    Router(#[from] RouterError),
    #[error(transparent)]
    Theory(#[from] TheoryError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn cfg_err(path: &str, reason: impl Into<String>) -> ExperimentError {
    ExperimentError::Config {
        path: path.to_string(),
        reason: reason.into(),
    }
}

/// Routing / composition method under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Hilora,
    GsOnly,
    RocOnly,
    Retriever,
    Ensemble,
    Merged,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Hilora,
        Method::GsOnly,
        Method::RocOnly,
        Method::Retriever,
        Method::Ensemble,
        Method::Merged,
        Method::Oracle,
    ];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Method::Hilora => "hilora",
            Method::GsOnly => "gs_only",
            Method::RocOnly => "roc_only",
            Method::Retriever => "retriever",
            Method::Ensemble => "ensemble",
            Method::Merged => "merged",
            Method::Oracle => "oracle",
        };
        f.write_str(s)
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hilora" => Ok(Method::Hilora),
            "gs_only" => Ok(Method::GsOnly),
            "roc_only" => Ok(Method::RocOnly),
            "retriever" => Ok(Method::Retriever),
            "ensemble" => Ok(Method::Ensemble),
            "merged" => Ok(Method::Merged),
            "oracle" => Ok(Method::Oracle),
            other => Err(format!(
                "unknown method '{other}' (expected hilora, gs_only, roc_only, retriever, \
                 ensemble, merged, or oracle)"
            )),
        }
    }
}

/// Where the pool comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolSource {
    Synth {
        num_loras: usize,
        ranks: Vec<usize>,
        /// Standard deviation of weight entries. The synthetic default
        /// shrinks entries so adapter deltas perturb the backbone rather
        /// than dominating it.
        entry_scale: f64,
    },
    Manifest {
        path: String,
    },
    /// Two adapters with opposing up-projection clusters; the second with
    /// amplified down-projections. Drives the gamma ablation.
    Interference {
        rank: usize,
        entry_scale: f64,
        cluster_weight: f64,
        noise_weight: f64,
        interferer_proj_scale: f64,
    },
}

/// Geometry of the synthetic task world.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldKind {
    /// Well-separated tasks: every pairwise Bhattacharyya exponent reaches
    /// the given floor.
    Separated { min_bhattacharyya: f64 },
    /// Two overlapping tasks with the given expected score gap for inputs
    /// of the first; both score positive. Requires a two-adapter pool.
    Overlap { score_gap: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub embed_dim: usize,
    /// Base standard deviation of task Gaussians. Small values push seen
    /// scores positive, mirroring confident in-domain likelihoods.
    pub cov_scale: f64,
    /// Input draws use `noise_scale^2 * sigma_task`; 1.0 samples the task
    /// distribution itself.
    pub noise_scale: f64,
    pub world: WorldKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RouterSpec {
    pub gamma: f64,
    pub k_min: usize,
    pub projection_ranking: ProjectionRanking,
    /// Global ROC count for the token-only baseline.
    pub roc_topk: usize,
}

impl RouterSpec {
    pub fn to_config(&self) -> RouterConfig {
        RouterConfig {
            gamma: self.gamma,
            k_min: self.k_min,
            projection_ranking: self.projection_ranking,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSpec {
    pub seen_inputs_per_task: usize,
    /// Evaluate only the first N seen tasks when set.
    #[serde(default)]
    pub seen_task_limit: Option<usize>,
    pub unseen_tasks: usize,
    pub unseen_inputs_per_task: usize,
    /// Ground-truth KL floor from every source for held-out tasks.
    pub unseen_target_kl: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackboneKind {
    Orthogonal,
    Gaussian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackboneSpec {
    pub kind: BackboneKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitSpec {
    /// Domain samples per adapter for Gaussian fitting.
    pub m: usize,
    pub instruction: String,
    /// Covariance ridge as a fraction of mean sample variance. `None` keeps
    /// the bare numerical default, which is too weak when `m` barely
    /// exceeds the embedding dimension.
    #[serde(default = "default_ridge")]
    pub ridge_fraction: Option<f64>,
}

fn default_ridge() -> Option<f64> {
    Some(0.05)
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct OutputSpec {
    #[serde(default)]
    pub records: Option<String>,
    #[serde(default)]
    pub summary: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub model_dim: usize,
    pub num_layers: usize,
    pub pool: PoolSource,
    pub embedder: EmbedderSpec,
    pub router: RouterSpec,
    pub method: Method,
    pub eval: EvalSpec,
    pub backbone: BackboneSpec,
    pub fit: FitSpec,
    pub batch_size: usize,
    #[serde(default)]
    pub output: OutputSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            model_dim: 16,
            num_layers: 3,
            pool: PoolSource::Synth {
                num_loras: 5,
                ranks: vec![4, 8],
                entry_scale: 0.05,
            },
            embedder: EmbedderSpec {
                embed_dim: 16,
                cov_scale: 0.1,
                noise_scale: 1.0,
                world: WorldKind::Separated {
                    min_bhattacharyya: 12.0,
                },
            },
            router: RouterSpec {
                gamma: 0.4,
                k_min: 3,
                projection_ranking: ProjectionRanking::Raw,
                roc_topk: DEFAULT_ROC_TOPK,
            },
            method: Method::Hilora,
            eval: EvalSpec {
                seen_inputs_per_task: 200,
                seen_task_limit: None,
                unseen_tasks: 0,
                unseen_inputs_per_task: 0,
                unseen_target_kl: 10.0,
            },
            backbone: BackboneSpec {
                kind: BackboneKind::Orthogonal,
            },
            fit: FitSpec {
                m: 20,
                instruction: DEFAULT_INSTRUCTION.to_string(),
                ridge_fraction: default_ridge(),
            },
            batch_size: 32,
            output: OutputSpec::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ExperimentError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            cfg_err(
                &format!("line {} column {}", e.line(), e.column()),
                e.to_string(),
            )
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.model_dim < 2 {
            return Err(cfg_err("model_dim", "must be >= 2"));
        }
        if self.num_layers == 0 {
            return Err(cfg_err("num_layers", "must be >= 1"));
        }
        if !(self.router.gamma > 0.0 && self.router.gamma <= 1.0) {
            return Err(cfg_err(
                "router.gamma",
                format!("{} outside (0, 1]", self.router.gamma),
            ));
        }
        if self.router.k_min == 0 {
            return Err(cfg_err("router.k_min", "must be >= 1"));
        }
        if self.router.roc_topk == 0 {
            return Err(cfg_err("router.roc_topk", "must be >= 1"));
        }
        if self.embedder.embed_dim < 2 {
            return Err(cfg_err("embedder.embed_dim", "must be >= 2"));
        }
        if self.embedder.cov_scale <= 0.0 {
            return Err(cfg_err("embedder.cov_scale", "must be positive"));
        }
        if self.embedder.noise_scale < 0.0 {
            return Err(cfg_err("embedder.noise_scale", "must be nonnegative"));
        }
        if self.fit.m < 2 {
            return Err(cfg_err("fit.m", "must be >= 2 to fit a covariance"));
        }
        if self.batch_size == 0 {
            return Err(cfg_err("batch_size", "must be >= 1"));
        }
        match &self.pool {
            PoolSource::Synth {
                num_loras,
                ranks,
                entry_scale,
            } => {
                if *num_loras == 0 {
                    return Err(cfg_err("pool.synth.num_loras", "must be >= 1"));
                }
                if ranks.is_empty() {
                    return Err(cfg_err("pool.synth.ranks", "must be nonempty"));
                }
                if ranks.iter().any(|&r| r == 0 || r >= self.model_dim) {
                    return Err(cfg_err(
                        "pool.synth.ranks",
                        "each rank must satisfy 1 <= r < model_dim",
                    ));
                }
                if *entry_scale <= 0.0 {
                    return Err(cfg_err("pool.synth.entry_scale", "must be positive"));
                }
            }
            PoolSource::Interference {
                rank, entry_scale, ..
            } => {
                if *rank == 0 || *rank >= self.model_dim {
                    return Err(cfg_err(
                        "pool.interference.rank",
                        "must satisfy 1 <= r < model_dim",
                    ));
                }
                if *entry_scale <= 0.0 {
                    return Err(cfg_err("pool.interference.entry_scale", "must be positive"));
                }
            }
            PoolSource::Manifest { path } => {
                if path.is_empty() {
                    return Err(cfg_err("pool.manifest.path", "must be nonempty"));
                }
            }
        }
        if let WorldKind::Overlap { .. } = self.embedder.world {
            let two = matches!(&self.pool, PoolSource::Interference { .. })
                || matches!(&self.pool, PoolSource::Synth { num_loras: 2, .. });
            if !two {
                return Err(cfg_err(
                    "embedder.world",
                    "overlap world requires a two-adapter pool",
                ));
            }
        }
        let total_eval = self.eval.seen_inputs_per_task
            + self.eval.unseen_tasks * self.eval.unseen_inputs_per_task;
        if total_eval == 0 {
            return Err(cfg_err("eval", "evaluation set is empty"));
        }
        Ok(())
    }
}

/// One evaluated input. `wall_time_ns` is the only field that varies across
/// reruns of the same seed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalRecord {
    pub input_id: String,
    pub true_task: String,
    pub seen: bool,
    pub reference_lora: String,
    pub method: Method,
    pub selected_loras: Vec<String>,
    pub candidate_count: usize,
    pub sum_allocated: u64,
    pub mse: f64,
    pub wall_time_ns: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub method: Method,
    pub records: usize,
    pub mean_mse: f64,
    pub mean_mse_per_task: BTreeMap<String, f64>,
    pub mean_candidates_seen: Option<f64>,
    pub mean_candidates_unseen: Option<f64>,
    pub mean_sum_allocated: f64,
    /// Fraction of seen inputs whose true adapter missed the candidate set;
    /// absent for methods without a sequence-level selection.
    pub true_lora_exclusion_rate: Option<f64>,
}

/// Everything a run builds before evaluating inputs.
pub struct PreparedExperiment {
    pub pool: PoolManifest,
    pub world: SyntheticWorld,
    pub embedder: SyntheticEmbedder,
    pub backbone: ToyBackbone,
}

const SALT_POOL: u64 = 1;
const SALT_WORLD: u64 = 2;
const SALT_FIT: u64 = 3;
const SALT_BACKBONE: u64 = 4;
const SALT_INPUT: u64 = 5;
const SALT_FEATURES: u64 = 6;

/// Build pool, world, embedder, fitted Gaussians, and backbone from the
/// config, all derived from the master seed.
pub fn prepare(config: &ExperimentConfig) -> Result<PreparedExperiment, ExperimentError> {
    config.validate()?;
    let master = RngStream::new(config.seed, 0);

    let pool = match &config.pool {
        PoolSource::Synth {
            num_loras,
            ranks,
            entry_scale,
        } => {
            let spec = PoolSpec {
                num_loras: *num_loras,
                model_dim: config.model_dim,
                num_layers: config.num_layers,
                ranks: ranks.clone(),
                entry_scale: *entry_scale,
                id_prefix: "lora".into(),
            };
            synthesize_pool(&spec, &mut master.derive(SALT_POOL))?
        }
        PoolSource::Manifest { path } => load_manifest(path)?,
        PoolSource::Interference {
            rank,
            entry_scale,
            cluster_weight,
            noise_weight,
            interferer_proj_scale,
        } => interference_pool(
            config.model_dim,
            *rank,
            config.num_layers,
            *entry_scale,
            *cluster_weight,
            *noise_weight,
            *interferer_proj_scale,
            &mut master.derive(SALT_POOL),
        )?,
    };

    let ids: Vec<String> = pool.loras.iter().map(|l| l.id.clone()).collect();
    let mut world_rng = master.derive(SALT_WORLD);
    let world = match &config.embedder.world {
        WorldKind::Separated { min_bhattacharyya } => separated_world(
            &ids,
            config.embedder.embed_dim,
            config.embedder.cov_scale,
            *min_bhattacharyya,
            config.eval.unseen_tasks,
            config.eval.unseen_target_kl,
            &mut world_rng,
        ),
        WorldKind::Overlap { score_gap } => {
            if ids.len() != 2 {
                return Err(cfg_err(
                    "embedder.world",
                    "overlap world requires exactly 2 adapters",
                ));
            }
            overlap_world(
                &[ids[0].clone(), ids[1].clone()],
                config.embedder.embed_dim,
                config.embedder.cov_scale,
                *score_gap,
                &mut world_rng,
            )
        }
    };

    let embedder =
        SyntheticEmbedder::new(world.all_tasks(), config.embedder.noise_scale, config.seed);

    let pool = if pool.gaussians.is_some() {
        pool
    } else {
        fit_pool_gaussians(
            &pool,
            &embedder,
            config.fit.m,
            &config.fit.instruction,
            config.fit.ridge_fraction,
            &mut master.derive(SALT_FIT),
        )?
    };

    let backbone = match config.backbone.kind {
        BackboneKind::Orthogonal => ToyBackbone::random_orthogonal(
            config.model_dim,
            config.num_layers,
            &mut master.derive(SALT_BACKBONE),
        ),
        BackboneKind::Gaussian => ToyBackbone::random_gaussian(
            config.model_dim,
            config.num_layers,
            &mut master.derive(SALT_BACKBONE),
        ),
    };

    Ok(PreparedExperiment {
        pool,
        world,
        embedder,
        backbone,
    })
}

/// One eval input: its id, true task, seen flag, and reference adapter.
#[derive(Debug, Clone)]
pub struct EvalInput {
    pub input_id: String,
    pub true_task: String,
    pub seen: bool,
    pub reference_lora: String,
}

/// Enumerate the eval set in deterministic order: seen tasks first (each
/// with `seen_inputs_per_task` inputs), then unseen tasks.
pub fn eval_inputs(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
) -> Result<Vec<EvalInput>, ExperimentError> {
    let mut out = Vec::new();
    let limit = config
        .eval
        .seen_task_limit
        .unwrap_or(prepared.world.seen.len());
    for task in prepared.world.seen.iter().take(limit) {
        for k in 0..config.eval.seen_inputs_per_task {
            out.push(EvalInput {
                input_id: format!("{}#e{k}", task.lora_id),
                true_task: task.lora_id.clone(),
                seen: true,
                reference_lora: task.lora_id.clone(),
            });
        }
    }
    for (j, task) in prepared.world.unseen.iter().enumerate() {
        let istar = prepared.world.closest_seen(j)?;
        let reference = prepared.world.seen[istar].lora_id.clone();
        for k in 0..config.eval.unseen_inputs_per_task {
            out.push(EvalInput {
                input_id: format!("{}#e{k}", task.lora_id),
                true_task: task.lora_id.clone(),
                seen: false,
                reference_lora: reference.clone(),
            });
        }
    }
    Ok(out)
}

/// Feature vector fed through the backbone for an input, independent of its
/// embedding.
pub fn input_features(config: &ExperimentConfig, input_id: &str) -> Vector {
    let mut rng = RngStream::new(config.seed, 0)
        .derive(SALT_FEATURES)
        .derive(hash_bytes(input_id.as_bytes()));
    Vector::from_vec(rng.standard_normal_vec(config.model_dim))
}

/// Output of serving one input: the forward result plus the sequence-level
/// decision fields.
pub struct ServeOutcome {
    pub output: Vector,
    pub selected_loras: Vec<String>,
    pub candidate_count: usize,
    pub sum_allocated: u64,
}

/// The serving path an inference system would run: embed, plan, forward.
/// `reference` short-circuits the oracle arm (its output is the reference
/// itself).
pub fn serve_input(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    merged: &crate::pool::MergedModule,
    input: &EvalInput,
    x: &Vector,
    reference: &Vector,
    global_index: u64,
) -> Result<ServeOutcome, ExperimentError> {
    let mut plan_rng = RngStream::new(config.seed, 0)
        .derive(SALT_INPUT)
        .derive(global_index);
    let (output, selected_loras, candidate_count, sum_allocated) = match config.method {
        Method::Oracle => (reference.clone(), vec![input.reference_lora.clone()], 1, {
            prepared
                .pool
                .module(&input.reference_lora)
                .map(|m| m.rank as u64)
                .unwrap_or(0)
        }),
        Method::Hilora | Method::GsOnly => {
            let z = prepared
                .embedder
                .embed(&config.fit.instruction, &input.input_id)?;
            let scores = pool_scores(&prepared.pool, &z)?;
            let ranks: Vec<usize> = prepared.pool.loras.iter().map(|l| l.rank).collect();
            let plan = if config.method == Method::GsOnly {
                gs_only_plan(&scores, &ranks, &config.router.to_config(), &mut plan_rng)?
            } else {
                make_plan(&scores, &ranks, &config.router.to_config(), &mut plan_rng)?
            };
            let y = forward(&prepared.backbone, &prepared.pool, &plan, x)?;
            (
                y,
                plan.candidates.clone(),
                plan.candidates.len(),
                plan.budget,
            )
        }
        Method::Retriever => {
            let z = prepared
                .embedder
                .embed(&config.fit.instruction, &input.input_id)?;
            let plan = retriever_plan(&prepared.pool, &z, config.router.k_min)?;
            let y = forward(&prepared.backbone, &prepared.pool, &plan, x)?;
            (
                y,
                plan.candidates.clone(),
                plan.candidates.len(),
                plan.budget,
            )
        }
        Method::Ensemble => {
            let y = forward_ensemble(&prepared.backbone, &prepared.pool, x);
            let ids: Vec<String> = prepared.pool.loras.iter().map(|l| l.id.clone()).collect();
            let total = prepared.pool.total_rank() as u64;
            (y, ids, prepared.pool.len(), total)
        }
        Method::Merged => {
            let y = forward_merged(&prepared.backbone, merged, x);
            let ids: Vec<String> = prepared.pool.loras.iter().map(|l| l.id.clone()).collect();
            let total = prepared.pool.total_rank() as u64;
            (y, ids, prepared.pool.len(), total)
        }
        Method::RocOnly => {
            let y = forward_roc_only(
                &prepared.backbone,
                &prepared.pool,
                x,
                config.router.roc_topk,
                config.router.projection_ranking,
            )?;
            let ids: Vec<String> = prepared.pool.loras.iter().map(|l| l.id.clone()).collect();
            (y, ids, prepared.pool.len(), config.router.roc_topk as u64)
        }
    };
    Ok(ServeOutcome {
        output,
        selected_loras,
        candidate_count,
        sum_allocated,
    })
}

/// Evaluate one input under the configured method.
fn evaluate_input(
    config: &ExperimentConfig,
    prepared: &PreparedExperiment,
    merged: &crate::pool::MergedModule,
    input: &EvalInput,
    global_index: u64,
) -> Result<EvalRecord, ExperimentError> {
    let x = input_features(config, &input.input_id);
    let reference = forward_oracle(
        &prepared.backbone,
        &prepared.pool,
        &input.reference_lora,
        &x,
    )?;

    let started = Instant::now();
    let outcome = serve_input(
        config,
        prepared,
        merged,
        input,
        &x,
        &reference,
        global_index,
    )?;
    let wall_time_ns = started.elapsed().as_nanos().min(u64::MAX as u128) as u64;

    let diff = outcome.output.sub(&reference);
    let mse = diff.dot(&diff) / diff.dim() as f64;

    Ok(EvalRecord {
        input_id: input.input_id.clone(),
        true_task: input.true_task.clone(),
        seen: input.seen,
        reference_lora: input.reference_lora.clone(),
        method: config.method,
        selected_loras: outcome.selected_loras,
        candidate_count: outcome.candidate_count,
        sum_allocated: outcome.sum_allocated,
        mse,
        wall_time_ns,
    })
}

/// Run the configured experiment over the full eval set.
pub fn run_experiment(
    config: &ExperimentConfig,
) -> Result<(Vec<EvalRecord>, Summary), ExperimentError> {
    let prepared = prepare(config)?;
    let inputs = eval_inputs(config, &prepared)?;
    let merged = merged_module(&prepared.pool)?;

    let mut records = Vec::with_capacity(inputs.len());
    // Batches bound the work between bookkeeping points; decisions do not
    // depend on the batch size.
    for (start, chunk) in inputs.chunks(config.batch_size).enumerate() {
        for (offset, input) in chunk.iter().enumerate() {
            let gi = (start * config.batch_size + offset) as u64;
            records.push(evaluate_input(config, &prepared, &merged, input, gi)?);
        }
    }
    let summary = summarize(config.method, &records);
    Ok((records, summary))
}

/// Aggregate records into the run summary.
pub fn summarize(method: Method, records: &[EvalRecord]) -> Summary {
    let n = records.len().max(1) as f64;
    let mean_mse = records.iter().map(|r| r.mse).sum::<f64>() / n;

    let mut per_task: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for r in records {
        let e = per_task.entry(r.true_task.clone()).or_insert((0.0, 0));
        e.0 += r.mse;
        e.1 += 1;
    }
    let mean_mse_per_task = per_task
        .into_iter()
        .map(|(k, (s, c))| (k, s / c as f64))
        .collect();

    let seen: Vec<&EvalRecord> = records.iter().filter(|r| r.seen).collect();
    let unseen: Vec<&EvalRecord> = records.iter().filter(|r| !r.seen).collect();
    let mean_c = |rs: &[&EvalRecord]| {
        if rs.is_empty() {
            None
        } else {
            Some(rs.iter().map(|r| r.candidate_count as f64).sum::<f64>() / rs.len() as f64)
        }
    };

    let sequence_level = matches!(
        method,
        Method::Hilora | Method::GsOnly | Method::Retriever | Method::Oracle
    );
    let exclusion = if sequence_level && !seen.is_empty() {
        let misses = seen
            .iter()
            .filter(|r| !r.selected_loras.iter().any(|id| id == &r.true_task))
            .count();
        Some(misses as f64 / seen.len() as f64)
    } else {
        None
    };

    Summary {
        method,
        records: records.len(),
        mean_mse,
        mean_mse_per_task,
        mean_candidates_seen: mean_c(&seen),
        mean_candidates_unseen: mean_c(&unseen),
        mean_sum_allocated: records.iter().map(|r| r.sum_allocated as f64).sum::<f64>() / n,
        true_lora_exclusion_rate: exclusion,
    }
}

/// Write records as JSON lines.
pub fn write_records_jsonl(
    records: &[EvalRecord],
    path: impl AsRef<std::path::Path>,
) -> Result<(), ExperimentError> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Serialize a record with the timing field zeroed, for decision-level
/// comparisons.
pub fn decision_line(record: &EvalRecord) -> String {
    let mut r = record.clone();
    r.wall_time_ns = 0;
    serde_json::to_string(&r).expect("record serializes")
}

pub fn write_summary_json(
    summary: &Summary,
    path: impl AsRef<std::path::Path>,
) -> Result<(), ExperimentError> {
    std::fs::write(
        path,
        serde_json::to_string_pretty(summary).expect("summary serializes"),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(method: Method, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.seed = seed;
        cfg.method = method;
        cfg.pool = PoolSource::Synth {
            num_loras: 3,
            ranks: vec![4],
            entry_scale: 0.05,
        };
        cfg.eval.seen_inputs_per_task = 12;
        cfg.eval.unseen_tasks = 1;
        cfg.eval.unseen_inputs_per_task = 6;
        cfg
    }

    #[test]
    fn oracle_mse_is_identically_zero_on_seen() {
        let (records, summary) = run_experiment(&small_config(Method::Oracle, 7)).unwrap();
        for r in records.iter().filter(|r| r.seen) {
            assert_eq!(r.mse, 0.0);
        }
        assert_eq!(summary.records, 3 * 12 + 6);
    }

    #[test]
    fn hilora_full_gamma_single_lora_degenerates_to_oracle() {
        let mut cfg = small_config(Method::Hilora, 8);
        cfg.pool = PoolSource::Synth {
            num_loras: 1,
            ranks: vec![4],
            entry_scale: 0.05,
        };
        cfg.router.gamma = 1.0;
        cfg.eval.unseen_tasks = 0;
        cfg.eval.unseen_inputs_per_task = 0;
        let (records, summary) = run_experiment(&cfg).unwrap();
        for r in &records {
            assert_eq!(
                r.mse, 0.0,
                "full single-adapter activation must equal the oracle"
            );
        }
        assert_eq!(summary.mean_mse, 0.0);
    }

    #[test]
    fn summary_mse_is_mean_of_records() {
        let (records, summary) = run_experiment(&small_config(Method::Hilora, 9)).unwrap();
        let mean = records.iter().map(|r| r.mse).sum::<f64>() / records.len() as f64;
        assert!((summary.mean_mse - mean).abs() < 1e-12);
    }

    #[test]
    fn decision_lines_reproduce_across_runs() {
        let cfg = small_config(Method::Hilora, 10);
        let (r1, _) = run_experiment(&cfg).unwrap();
        let (r2, _) = run_experiment(&cfg).unwrap();
        assert_eq!(r1.len(), r2.len());
        for (a, b) in r1.iter().zip(&r2) {
            assert_eq!(decision_line(a), decision_line(b));
        }
    }

    #[test]
    fn config_errors_carry_field_paths() {
        let mut cfg = small_config(Method::Hilora, 1);
        cfg.router.gamma = 1.5;
        match cfg.validate() {
            Err(ExperimentError::Config { path, .. }) => assert_eq!(path, "router.gamma"),
            other => panic!("expected config error, got {other:?}"),
        }
        let mut cfg = small_config(Method::Hilora, 1);
        cfg.eval.seen_inputs_per_task = 0;
        cfg.eval.unseen_tasks = 0;
        cfg.eval.unseen_inputs_per_task = 0;
        assert!(
            matches!(cfg.validate(), Err(ExperimentError::Config { path, .. }) if path == "eval")
        );
    }

    #[test]
    fn seen_inputs_route_to_true_adapter() {
        let (_, summary) = run_experiment(&small_config(Method::Hilora, 11)).unwrap();
        assert!(summary.true_lora_exclusion_rate.unwrap() < 0.05);
        assert!(summary.mean_candidates_seen.unwrap() < 2.0);
    }
}
