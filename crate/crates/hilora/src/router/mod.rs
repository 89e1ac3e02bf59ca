//! Two-stage hierarchical routing: sequence-level adapter selection with
//! ROC allocation, then token-level ROC selection with variance-normalized
//! aggregation. Includes the toy linear backbone and comparative baselines.

pub mod baseline;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{multinomial_sample, softmax, top_k_indices, Matrix, RngStream, Vector};
use crate::pool::PoolManifest;

#[derive(Debug, Error)]
pub enum RouterError {
    #[error("no scores provided")]
    EmptyScores,
    #[error("no candidates to plan over")]
    NoCandidates,
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("unknown lora id '{id}' in plan")]
    UnknownLora { id: String },
    #[error(transparent)]
    Numerics(#[from] crate::numerics::NumericsError),
}

/// How token-level ROC relevance is ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionRanking {
    /// Rank by the raw projection value `a_j^T x`; larger means more
    /// relevant. The default.
    #[default]
    Raw,
    /// Rank by `|a_j^T x|`, treating strong negative responses as relevant
    /// too.
    Abs,
}

/// Routing hyperparameters.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RouterConfig {
    /// Fraction of the candidates' total rank granted as ROC budget,
    /// in (0, 1].
    pub gamma: f64,
    /// Minimum candidate count when no adapter scores positive.
    pub k_min: usize,
    pub projection_ranking: ProjectionRanking,
}

impl Default for RouterConfig {
    fn default() -> Self {
        Self {
            gamma: 0.4,
            k_min: 3,
            projection_ranking: ProjectionRanking::Raw,
        }
    }
}

impl RouterConfig {
    pub fn validate(&self) -> Result<(), RouterError> {
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(RouterError::DimensionMismatch {
                context: format!("gamma {} outside (0, 1]", self.gamma),
            });
        }
        if self.k_min == 0 {
            return Err(RouterError::DimensionMismatch {
                context: "k_min must be >= 1".into(),
            });
        }
        Ok(())
    }
}

/// Sequence-level routing decision, fixed for a whole input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoutingPlan {
    /// Selected adapter ids, ordered by descending score (ties by pool
    /// position).
    pub candidates: Vec<String>,
    /// Scores aligned with `candidates`.
    pub scores: Vec<f64>,
    /// Softmax probabilities over the candidates.
    pub probs: Vec<f64>,
    /// Ranks aligned with `candidates`.
    pub ranks: Vec<usize>,
    /// Total number of ROCs granted.
    pub budget: u64,
    /// Per-candidate ROC counts; sums to `budget`, each `<=` the rank.
    pub allocation: Vec<u64>,
    /// Mean rank over the candidates.
    pub mean_rank: f64,
    /// Variance-normalization factor `sqrt(mean_rank / budget)`.
    pub scale: f64,
    /// Passes the capacity-repair loop needed (at most the candidate count).
    pub repair_iterations: usize,
    pub projection_ranking: ProjectionRanking,
}

/// Token-level selection record for one layer: which ROCs fired per
/// candidate and their projection values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocSelection {
    pub per_candidate: Vec<RocChoice>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RocChoice {
    pub lora_id: String,
    /// Selected ROC indices, ranked by descending relevance.
    pub indices: Vec<usize>,
    /// Projection values `a_j^T x` aligned with `indices`.
    pub projections: Vec<f64>,
}

/// Candidate adapters for an input, as indices into the pool-ordered score
/// slice, ordered by descending score (ties toward the lower pool position).
///
/// When any score is positive, exactly the positive scorers are kept.
/// Otherwise the top `c` are kept, where
/// `c = min(pool_size, max(ceil(|max score|), k_min))`: the weaker the best
/// alignment, the broader the coverage.
pub fn select_candidates(
    scores: &[(String, f64)],
    k_min: usize,
) -> Result<Vec<usize>, RouterError> {
    if scores.is_empty() {
        return Err(RouterError::EmptyScores);
    }
    assert!(k_min >= 1, "k_min must be >= 1");
    let max = scores
        .iter()
        .map(|(_, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .1
            .partial_cmp(&scores[a].1)
            .expect("non-finite score")
            .then(a.cmp(&b))
    });

    if max > 0.0 {
        Ok(order.into_iter().filter(|&i| scores[i].1 > 0.0).collect())
    } else {
        let c = (max.abs().ceil() as usize).max(k_min).min(scores.len());
        order.truncate(c);
        Ok(order)
    }
}

/// Build the sequence-level plan: candidate set, softmax probabilities,
/// rounded budget, capacity-constrained multinomial allocation, and the
/// variance-normalization scale.
pub fn make_plan(
    scores: &[(String, f64)],
    ranks: &[usize],
    config: &RouterConfig,
    rng: &mut RngStream,
) -> Result<RoutingPlan, RouterError> {
    config.validate()?;
    if scores.is_empty() {
        return Err(RouterError::NoCandidates);
    }
    if ranks.len() != scores.len() {
        return Err(RouterError::DimensionMismatch {
            context: format!("{} scores but {} ranks", scores.len(), ranks.len()),
        });
    }
    let chosen = select_candidates(scores, config.k_min)?;
    if chosen.is_empty() {
        return Err(RouterError::NoCandidates);
    }

    let cand_scores: Vec<f64> = chosen.iter().map(|&i| scores[i].1).collect();
    let cand_ranks: Vec<usize> = chosen.iter().map(|&i| ranks[i]).collect();
    let probs = softmax(&cand_scores)?;

    let capacity: u64 = cand_ranks.iter().map(|&r| r as u64).sum();
    let raw_budget = (config.gamma * capacity as f64).round_ties_even() as u64;
    let budget = raw_budget.max(1).min(capacity);

    let caps: Vec<u64> = cand_ranks.iter().map(|&r| r as u64).collect();
    let mut allocation = multinomial_sample(budget, &probs, rng)?;
    let mut repair_iterations = 0usize;
    loop {
        repair_iterations += 1;
        let mut overflow = 0u64;
        for (o, &cap) in allocation.iter_mut().zip(&caps) {
            if *o > cap {
                overflow += *o - cap;
                *o = cap;
            }
        }
        if overflow == 0 {
            break;
        }
        // Redistribute the clipped残 budget proportionally over candidates
        // that still have headroom; terminates because budget <= capacity.
        let free_mass: f64 = allocation
            .iter()
            .zip(&caps)
            .zip(&probs)
            .filter(|((o, cap), _)| *o < *cap)
            .map(|(_, p)| *p)
            .sum();
        debug_assert!(free_mass > 0.0, "budget exceeds capacity");
        let cond: Vec<f64> = allocation
            .iter()
            .zip(&caps)
            .zip(&probs)
            .map(|((o, cap), p)| if *o < *cap { *p / free_mass } else { 0.0 })
            .collect();
        let extra = multinomial_sample(overflow, &cond, rng)?;
        for (o, e) in allocation.iter_mut().zip(extra) {
            *o += e;
        }
    }
    debug_assert_eq!(allocation.iter().sum::<u64>(), budget);

    let mean_rank = cand_ranks.iter().sum::<usize>() as f64 / cand_ranks.len() as f64;
    let scale = (mean_rank / budget as f64).sqrt();

    Ok(RoutingPlan {
        candidates: chosen.iter().map(|&i| scores[i].0.clone()).collect(),
        scores: cand_scores,
        probs,
        ranks: cand_ranks,
        budget,
        allocation,
        mean_rank,
        scale,
        repair_iterations,
        projection_ranking: config.projection_ranking,
    })
}

/// Token-level routing at one layer: within each candidate, fire the
/// `o_i` ROCs with the strongest projections and aggregate their dyad
/// contributions, scaled by the plan's variance-normalization factor.
pub fn route_tokens(
    plan: &RoutingPlan,
    pool: &PoolManifest,
    layer_index: usize,
    x: &Vector,
) -> Result<(RocSelection, Vector), RouterError> {
    if x.dim() != pool.model_dim {
        return Err(RouterError::DimensionMismatch {
            context: format!("x dim {} vs model dim {}", x.dim(), pool.model_dim),
        });
    }
    if layer_index >= pool.num_layers {
        return Err(RouterError::DimensionMismatch {
            context: format!("layer {layer_index} out of {}", pool.num_layers),
        });
    }

    let d = pool.model_dim;
    let mut delta = Vector::zeros(d);
    let mut per_candidate = Vec::with_capacity(plan.candidates.len());
    for (ci, id) in plan.candidates.iter().enumerate() {
        let o = plan.allocation[ci] as usize;
        let module = pool
            .module(id)
            .ok_or_else(|| RouterError::UnknownLora { id: id.clone() })?;
        let layer = &module.layers[layer_index];
        let p = layer.projections(x);
        let keys: Vec<f64> = match plan.projection_ranking {
            ProjectionRanking::Raw => p.data().to_vec(),
            ProjectionRanking::Abs => p.data().iter().map(|v| v.abs()).collect(),
        };
        let ranked = top_k_indices(&keys, o.min(keys.len()))?;
        // Accumulate in ascending ROC order so a full selection reproduces
        // the dense B(Ax) product bit-exactly.
        let mut ascending = ranked.clone();
        ascending.sort_unstable();
        for &j in &ascending {
            let pj = p.get(j);
            for k in 0..d {
                delta.data_mut()[k] += module.layers[layer_index].up().get(k, j) * pj;
            }
        }
        per_candidate.push(RocChoice {
            lora_id: id.clone(),
            projections: ranked.iter().map(|&j| p.get(j)).collect(),
            indices: ranked,
        });
    }
    Ok((RocSelection { per_candidate }, delta.scale(plan.scale)))
}

/// Elementwise nonlinearity applied after each adapted layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    /// Pure linear stack; keeps dense-materialization oracles exact.
    #[default]
    None,
    Tanh,
}

/// Minimal linear backbone: a stack of d x d maps, each adapted by the pool.
#[derive(Debug, Clone)]
pub struct ToyBackbone {
    pub layers: Vec<Matrix>,
    pub nonlinearity: Nonlinearity,
}

impl ToyBackbone {
    pub fn new(layers: Vec<Matrix>, nonlinearity: Nonlinearity) -> Self {
        assert!(!layers.is_empty());
        let d = layers[0].rows();
        for l in &layers {
            assert!(
                l.rows() == d && l.cols() == d,
                "backbone layers must be square and equal"
            );
        }
        Self {
            layers,
            nonlinearity,
        }
    }

    /// Norm-preserving random backbone: each layer is a composition of
    /// Givens rotations. Keeps multi-layer trajectories stable so routing
    /// errors add instead of compounding.
    pub fn random_orthogonal(dim: usize, num_layers: usize, rng: &mut RngStream) -> Self {
        let layers = (0..num_layers).map(|_| random_rotation(dim, rng)).collect();
        Self::new(layers, Nonlinearity::None)
    }

    /// Gaussian backbone with entries `N(0, 1/dim)`.
    pub fn random_gaussian(dim: usize, num_layers: usize, rng: &mut RngStream) -> Self {
        let s = 1.0 / (dim as f64).sqrt();
        let layers = (0..num_layers)
            .map(|_| {
                Matrix::from_vec(
                    dim,
                    dim,
                    rng.standard_normal_vec(dim * dim)
                        .iter()
                        .map(|v| v * s)
                        .collect(),
                )
            })
            .collect();
        Self::new(layers, Nonlinearity::None)
    }

    pub fn dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    fn activate(&self, mut v: Vector) -> Vector {
        if self.nonlinearity == Nonlinearity::Tanh {
            for x in v.data_mut() {
                *x = x.tanh();
            }
        }
        v
    }
}

/// Random rotation matrix as a product of Givens rotations over every
/// coordinate plane.
pub fn random_rotation(dim: usize, rng: &mut RngStream) -> Matrix {
    let mut q = Matrix::identity(dim);
    for p in 0..dim {
        for r in (p + 1)..dim {
            let theta = rng.standard_normal();
            let (s, c) = theta.sin_cos();
            // Apply the plane rotation to q in place: rows p and r mix.
            for col in 0..dim {
                let qp = q.get(p, col);
                let qr = q.get(r, col);
                q.set(p, col, c * qp - s * qr);
                q.set(r, col, s * qp + c * qr);
            }
        }
    }
    q
}

/// Full forward pass: per layer `h <- W0 h + routed_delta(h)`, with the
/// sequence-level plan held fixed and the token-level selection recomputed
/// at every layer.
pub fn forward(
    backbone: &ToyBackbone,
    pool: &PoolManifest,
    plan: &RoutingPlan,
    x: &Vector,
) -> Result<Vector, RouterError> {
    Ok(forward_with_trace(backbone, pool, plan, x)?.0)
}

/// Like [`forward`] but also returns the per-layer ROC selections.
pub fn forward_with_trace(
    backbone: &ToyBackbone,
    pool: &PoolManifest,
    plan: &RoutingPlan,
    x: &Vector,
) -> Result<(Vector, Vec<RocSelection>), RouterError> {
    if x.dim() != backbone.dim() || backbone.dim() != pool.model_dim {
        return Err(RouterError::DimensionMismatch {
            context: format!(
                "x dim {}, backbone dim {}, pool dim {}",
                x.dim(),
                backbone.dim(),
                pool.model_dim
            ),
        });
    }
    let mut h = x.clone();
    let mut trace = Vec::with_capacity(backbone.num_layers());
    for (li, w0) in backbone.layers.iter().enumerate() {
        let base = w0.matvec(&h);
        let (sel, delta) = route_tokens(plan, pool, li, &h)?;
        trace.push(sel);
        h = backbone.activate(base.add(&delta));
    }
    Ok((h, trace))
}

/// Plan that activates one adapter fully: the oracle / plain-LoRA path.
pub fn full_activation_plan(id: &str, rank: usize) -> RoutingPlan {
    RoutingPlan {
        candidates: vec![id.to_string()],
        scores: vec![0.0],
        probs: vec![1.0],
        ranks: vec![rank],
        budget: rank as u64,
        allocation: vec![rank as u64],
        mean_rank: rank as f64,
        scale: 1.0,
        repair_iterations: 0,
        projection_ranking: ProjectionRanking::Raw,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pool::{synthesize_pool, LoraLayer, LoraModule, PoolSpec};

    fn scored(pairs: &[(&str, f64)]) -> Vec<(String, f64)> {
        pairs.iter().map(|(id, s)| (id.to_string(), *s)).collect()
    }

    #[test]
    fn positive_branch_keeps_positive_scorers_only() {
        let scores = scored(&[("a", 0.5), ("b", -1.0), ("c", -2.0)]);
        let got = select_candidates(&scores, 3).unwrap();
        assert_eq!(got, vec![0]);
    }

    #[test]
    fn negative_branch_keeps_top_k_min() {
        let mut pairs: Vec<(String, f64)> = (0..10)
            .map(|i| (format!("l{i}"), -2.0 - i as f64))
            .collect();
        pairs[0].1 = -1.2; // max score
        let got = select_candidates(&pairs, 3).unwrap();
        // c = max(ceil(1.2), 3) = 3, ordered by descending score.
        assert_eq!(got, vec![0, 1, 2]);
    }

    #[test]
    fn strongly_negative_max_broadens_coverage() {
        let mut pairs: Vec<(String, f64)> = (0..10)
            .map(|i| (format!("l{i}"), -6.0 - i as f64))
            .collect();
        pairs[0].1 = -5.7;
        let got = select_candidates(&pairs, 3).unwrap();
        // c = max(ceil(5.7), 3) = 6.
        assert_eq!(got.len(), 6);
        assert_eq!(got, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn candidate_count_clamps_to_pool() {
        let pairs = scored(&[("a", -20.0), ("b", -21.0)]);
        let got = select_candidates(&pairs, 3).unwrap();
        assert_eq!(got.len(), 2);
    }

    #[test]
    fn boundary_ties_break_by_pool_position() {
        let pairs = scored(&[
            ("a", -4.0),
            ("b", -3.0),
            ("c", -4.0),
            ("d", -4.0),
            ("e", -5.0),
        ]);
        // max = -3 -> c = max(3, 3) = 3: b first, then the tied -4s by index.
        let got = select_candidates(&pairs, 3).unwrap();
        assert_eq!(got, vec![1, 0, 2]);
    }

    #[test]
    fn empty_scores_rejected() {
        assert!(matches!(
            select_candidates(&[], 3),
            Err(RouterError::EmptyScores)
        ));
    }

    #[test]
    fn single_candidate_full_gamma_degenerates() {
        let scores = scored(&[("only", 1.0)]);
        let cfg = RouterConfig {
            gamma: 1.0,
            ..Default::default()
        };
        let plan = make_plan(&scores, &[8], &cfg, &mut RngStream::new(1, 0)).unwrap();
        assert_eq!(plan.budget, 8);
        assert_eq!(plan.allocation, vec![8]);
        assert!((plan.scale - 1.0).abs() < 1e-15);
    }

    #[test]
    fn two_candidates_default_gamma_budget() {
        let scores = scored(&[("a", 0.5), ("b", 0.4)]);
        let cfg = RouterConfig {
            gamma: 0.4,
            ..Default::default()
        };
        let plan = make_plan(&scores, &[8, 8], &cfg, &mut RngStream::new(2, 0)).unwrap();
        // round_ties_even(6.4) = 6; scale = sqrt(8/6).
        assert_eq!(plan.budget, 6);
        assert!((plan.scale - (8.0f64 / 6.0).sqrt()).abs() < 1e-15);
        assert_eq!(plan.allocation.iter().sum::<u64>(), 6);
    }

    #[test]
    fn unclipped_allocation_matches_binomial_moments() {
        // Large equal ranks so capacity never binds: allocation ~
        // Binomial(budget, 1/2) per candidate.
        let scores = scored(&[("a", 1.0), ("b", 1.0)]);
        let cfg = RouterConfig {
            gamma: 0.5,
            ..Default::default()
        };
        let plan = make_plan(&scores, &[20_000, 20_000], &cfg, &mut RngStream::new(3, 0)).unwrap();
        assert_eq!(plan.budget, 20_000);
        let sigma = (20_000.0f64 * 0.25).sqrt();
        assert!((plan.allocation[0] as f64 - 10_000.0).abs() < 4.0 * sigma);
        assert_eq!(plan.repair_iterations, 1);
    }

    #[test]
    fn plan_invariants_over_random_draws() {
        let mut rng = RngStream::new(4, 0);
        let mut planner_rng = RngStream::new(4, 1);
        for trial in 0..2000 {
            let n = 1 + rng.usize_below(8);
            let scores: Vec<(String, f64)> = (0..n)
                .map(|i| (format!("l{i}"), 4.0 * rng.standard_normal()))
                .collect();
            let ranks: Vec<usize> = (0..n).map(|_| 1 + rng.usize_below(12)).collect();
            let gamma = 0.05 + 0.95 * rng.uniform();
            let cfg = RouterConfig {
                gamma,
                ..Default::default()
            };
            let plan = make_plan(&scores, &ranks, &cfg, &mut planner_rng).unwrap();
            assert_eq!(
                plan.allocation.iter().sum::<u64>(),
                plan.budget,
                "trial {trial}: allocation must sum to budget"
            );
            assert!(plan.budget >= 1);
            for (o, r) in plan.allocation.iter().zip(&plan.ranks) {
                assert!(*o <= *r as u64);
            }
            assert!(plan.repair_iterations <= plan.candidates.len());
            let p_sum: f64 = plan.probs.iter().sum();
            assert!((p_sum - 1.0).abs() < 1e-9);
            assert!(plan.scale > 0.0);
        }
    }

    #[test]
    fn token_routing_selects_top_by_raw_value() {
        // One candidate with projections (3, -1, 2) and o = 2.
        let a = Matrix::from_vec(
            3,
            4,
            vec![
                3.0, 0.0, 0.0, 0.0, //
                -1.0, 0.0, 0.0, 0.0, //
                2.0, 0.0, 0.0, 0.0,
            ],
        );
        let b = Matrix::from_vec(
            4,
            3,
            vec![
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0,
            ],
        );
        let module = LoraModule::new("m", vec![LoraLayer::new(a, b).unwrap()]).unwrap();
        let pool = crate::pool::PoolManifest::new(vec![module]).unwrap();
        let mut plan = full_activation_plan("m", 3);
        plan.allocation = vec![2];
        plan.budget = 2;
        let x = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let (sel, _) = route_tokens(&plan, &pool, 0, &x).unwrap();
        assert_eq!(sel.per_candidate[0].indices, vec![0, 2]);
        assert_eq!(sel.per_candidate[0].projections, vec![3.0, 2.0]);
    }

    #[test]
    fn identity_backbone_full_lora_is_x_plus_delta() {
        let spec = PoolSpec {
            num_loras: 1,
            model_dim: 8,
            num_layers: 1,
            ranks: vec![3],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(12, 0)).unwrap();
        let backbone = ToyBackbone::new(vec![Matrix::identity(8)], Nonlinearity::None);
        let plan = full_activation_plan("lora-0", 3);
        let x = Vector::from_vec(RngStream::new(12, 1).standard_normal_vec(8));
        let y = forward(&backbone, &pool, &plan, &x).unwrap();
        let expect = x.add(&pool.loras[0].layers[0].full_delta(&x));
        assert_eq!(y.data(), expect.data());
    }

    #[test]
    fn abs_ranking_keeps_strong_negative_projections() {
        // Projections (-5, 1, 2): raw keeps {2, 1}, abs keeps {0, 2}.
        let a = Matrix::from_vec(
            3,
            4,
            vec![
                -5.0, 0.0, 0.0, 0.0, //
                1.0, 0.0, 0.0, 0.0, //
                2.0, 0.0, 0.0, 0.0,
            ],
        );
        let b = Matrix::from_vec(
            4,
            3,
            vec![
                1.0, 0.0, 0.0, //
                0.0, 1.0, 0.0, //
                0.0, 0.0, 1.0, //
                0.0, 0.0, 0.0,
            ],
        );
        let module = LoraModule::new("m", vec![LoraLayer::new(a, b).unwrap()]).unwrap();
        let pool = crate::pool::PoolManifest::new(vec![module]).unwrap();
        let x = Vector::from_vec(vec![1.0, 0.0, 0.0, 0.0]);
        let mut plan = full_activation_plan("m", 3);
        plan.allocation = vec![2];
        plan.budget = 2;
        let (raw_sel, _) = route_tokens(&plan, &pool, 0, &x).unwrap();
        assert_eq!(raw_sel.per_candidate[0].indices, vec![2, 1]);
        plan.projection_ranking = ProjectionRanking::Abs;
        let (abs_sel, _) = route_tokens(&plan, &pool, 0, &x).unwrap();
        assert_eq!(abs_sel.per_candidate[0].indices, vec![0, 2]);
    }

    #[test]
    fn full_activation_is_bit_identical_to_dense_application() {
        let spec = PoolSpec {
            num_loras: 1,
            model_dim: 16,
            num_layers: 3,
            ranks: vec![8],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(5, 0)).unwrap();
        let backbone = ToyBackbone::random_orthogonal(16, 3, &mut RngStream::new(5, 1));
        let plan = full_activation_plan("lora-0", 8);
        let mut rng = RngStream::new(5, 2);
        for _ in 0..50 {
            let x = Vector::from_vec(rng.standard_normal_vec(16));
            let routed = forward(&backbone, &pool, &plan, &x).unwrap();
            // Direct application: h <- W0 h + B (A h) per layer.
            let mut h = x.clone();
            for (li, w0) in backbone.layers.iter().enumerate() {
                let base = w0.matvec(&h);
                let delta = pool.loras[0].layers[li].full_delta(&h);
                h = base.add(&delta);
            }
            assert_eq!(routed.data(), h.data(), "bitwise equality required");
        }
    }

    #[test]
    fn partial_routing_matches_dyad_enumeration_oracle() {
        let spec = PoolSpec {
            num_loras: 3,
            model_dim: 12,
            num_layers: 1,
            ranks: vec![6],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(6, 0)).unwrap();
        let scores = scored(&[("lora-0", 0.5), ("lora-1", 0.3), ("lora-2", 0.1)]);
        let cfg = RouterConfig {
            gamma: 0.5,
            ..Default::default()
        };
        let mut rng = RngStream::new(6, 1);
        let mut xrng = RngStream::new(6, 2);
        for _ in 0..30 {
            let plan = make_plan(&scores, &[6, 6, 6], &cfg, &mut rng).unwrap();
            let x = Vector::from_vec(xrng.standard_normal_vec(12));
            let (sel, delta) = route_tokens(&plan, &pool, 0, &x).unwrap();
            // Oracle: enumerate selected dyads and sum b_ij (a_ij^T x).
            let mut oracle = Vector::zeros(12);
            for choice in &sel.per_candidate {
                let module = pool.module(&choice.lora_id).unwrap();
                for &j in &choice.indices {
                    oracle = oracle.add(&module.layers[0].roc_delta(j, &x).unwrap());
                }
            }
            let oracle = oracle.scale(plan.scale);
            assert!(delta.sub(&oracle).norm() < 1e-10);
        }
    }

    #[test]
    fn selected_sets_invariant_under_positive_input_scaling() {
        let spec = PoolSpec {
            num_loras: 2,
            model_dim: 10,
            num_layers: 1,
            ranks: vec![5],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(7, 0)).unwrap();
        let scores = scored(&[("lora-0", 0.2), ("lora-1", 0.1)]);
        let cfg = RouterConfig {
            gamma: 0.6,
            ..Default::default()
        };
        let plan = make_plan(&scores, &[5, 5], &cfg, &mut RngStream::new(7, 1)).unwrap();
        let mut rng = RngStream::new(7, 2);
        for _ in 0..20 {
            let x = Vector::from_vec(rng.standard_normal_vec(10));
            let (sel1, d1) = route_tokens(&plan, &pool, 0, &x).unwrap();
            let c = 3.75;
            let (sel2, d2) = route_tokens(&plan, &pool, 0, &x.scale(c)).unwrap();
            for (a, b) in sel1.per_candidate.iter().zip(&sel2.per_candidate) {
                assert_eq!(a.indices, b.indices);
            }
            // Degree-1 positive homogeneity once the sets agree.
            assert!(d2.sub(&d1.scale(c)).norm() < 1e-9 * d2.norm().max(1.0));
        }
    }

    #[test]
    fn variance_normalization_matches_rank_pair() {
        // Entry variance of B A (d x r1) vs sqrt(r1/r2) B' A' at d = 64.
        let d = 64;
        let mut rng = RngStream::new(8, 0);
        for &(r1, r2) in &[(4usize, 8usize), (8, 32)] {
            let mut var1 = 0.0;
            let mut var2 = 0.0;
            let mut count1 = 0.0;
            let mut count2 = 0.0;
            for _ in 0..200 {
                let a1 = Matrix::from_vec(r1, d, rng.standard_normal_vec(r1 * d));
                let b1 = Matrix::from_vec(d, r1, rng.standard_normal_vec(d * r1));
                let p1 = b1.matmul(&a1);
                for v in p1.data() {
                    var1 += v * v;
                    count1 += 1.0;
                }
                let a2 = Matrix::from_vec(r2, d, rng.standard_normal_vec(r2 * d));
                let b2 = Matrix::from_vec(d, r2, rng.standard_normal_vec(d * r2));
                let s = (r1 as f64 / r2 as f64).sqrt();
                let p2 = b2.matmul(&a2).scale(s);
                for v in p2.data() {
                    var2 += v * v;
                    count2 += 1.0;
                }
            }
            let ratio = (var1 / count1) / (var2 / count2);
            assert!(
                (0.9..=1.1).contains(&ratio),
                "variance ratio {ratio} out of band for ranks ({r1}, {r2})"
            );
        }
    }

    #[test]
    fn forward_with_zero_weight_pool_is_plain_backbone() {
        let spec = PoolSpec {
            num_loras: 1,
            model_dim: 8,
            num_layers: 2,
            ranks: vec![3],
            entry_scale: 1.0,
            ..Default::default()
        };
        let mut pool = synthesize_pool(&spec, &mut RngStream::new(9, 0)).unwrap();
        // Zero out the up-projections: every delta vanishes.
        for lora in &mut pool.loras {
            for layer in lora.layers.iter_mut() {
                *layer = LoraLayer::new(layer.down().clone(), layer.up().scale(0.0)).unwrap();
            }
        }
        let backbone = ToyBackbone::random_orthogonal(8, 2, &mut RngStream::new(9, 1));
        let plan = full_activation_plan("lora-0", 3);
        let x = Vector::from_vec(RngStream::new(9, 2).standard_normal_vec(8));
        let routed = forward(&backbone, &pool, &plan, &x).unwrap();
        let mut h = x;
        for w0 in &backbone.layers {
            h = w0.matvec(&h);
        }
        assert_eq!(routed.data(), h.data());
    }

    #[test]
    fn forward_matches_dense_materialization_oracle() {
        let spec = PoolSpec {
            num_loras: 2,
            model_dim: 10,
            num_layers: 3,
            ranks: vec![4],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(10, 0)).unwrap();
        let backbone = ToyBackbone::random_gaussian(10, 3, &mut RngStream::new(10, 1));
        let scores = scored(&[("lora-0", 0.4), ("lora-1", 0.2)]);
        let cfg = RouterConfig {
            gamma: 0.5,
            ..Default::default()
        };
        let plan = make_plan(&scores, &[4, 4], &cfg, &mut RngStream::new(10, 2)).unwrap();
        let x = Vector::from_vec(RngStream::new(10, 3).standard_normal_vec(10));

        let (got, trace) = forward_with_trace(&backbone, &pool, &plan, &x).unwrap();

        // Oracle: per layer, materialize the selected dyads as a dense
        // delta-W and apply `(W0 + scale * dW) h`.
        let mut h = x.clone();
        for (li, w0) in backbone.layers.iter().enumerate() {
            let mut dw = Matrix::zeros(10, 10);
            for choice in &trace[li].per_candidate {
                let module = pool.module(&choice.lora_id).unwrap();
                let layer = &module.layers[li];
                for &j in &choice.indices {
                    for row in 0..10 {
                        for col in 0..10 {
                            dw.set(
                                row,
                                col,
                                dw.get(row, col)
                                    + layer.up().get(row, j) * layer.down().get(j, col),
                            );
                        }
                    }
                }
            }
            let full = w0.add(&dw.scale(plan.scale));
            h = full.matvec(&h);
        }
        assert!(got.sub(&h).norm() < 1e-9);
    }

    #[test]
    fn rotation_matrices_are_orthogonal() {
        let q = random_rotation(9, &mut RngStream::new(11, 0));
        let qtq = q.transpose().matmul(&q);
        assert!(qtq.max_abs_diff(&Matrix::identity(9)) < 1e-12);
    }
}
