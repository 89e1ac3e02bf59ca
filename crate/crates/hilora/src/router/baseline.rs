//! Comparative routing baselines over the same pool and backbone.

use super::{
    forward, full_activation_plan, make_plan, ProjectionRanking, RouterConfig, RouterError,
    RoutingPlan, ToyBackbone,
};
use crate::numerics::{top_k_indices, RngStream, Vector};
use crate::pool::{MergedModule, PoolManifest};

/// Default global ROC count for the token-only router, matching the
/// convention of eight ROCs per adapter and three adapters.
pub const DEFAULT_ROC_TOPK: usize = 24;

/// Mean of every adapter's full delta at one layer.
pub fn ensemble_delta(pool: &PoolManifest, layer: usize, x: &Vector) -> Vector {
    let mut acc = Vector::zeros(pool.model_dim);
    for lora in &pool.loras {
        acc = acc.add(&lora.layers[layer].full_delta(x));
    }
    acc.scale(1.0 / pool.len() as f64)
}

/// Forward pass averaging the outputs of all adapters.
pub fn forward_ensemble(backbone: &ToyBackbone, pool: &PoolManifest, x: &Vector) -> Vector {
    let mut h = x.clone();
    for (li, w0) in backbone.layers.iter().enumerate() {
        let base = w0.matvec(&h);
        let delta = ensemble_delta(pool, li, &h);
        h = base.add(&delta);
        if backbone.nonlinearity == super::Nonlinearity::Tanh {
            for v in h.data_mut() {
                *v = v.tanh();
            }
        }
    }
    h
}

/// Forward pass through the single merged module.
pub fn forward_merged(backbone: &ToyBackbone, merged: &MergedModule, x: &Vector) -> Vector {
    let mut h = x.clone();
    for (li, w0) in backbone.layers.iter().enumerate() {
        let base = w0.matvec(&h);
        let delta = merged.apply(li, &h);
        h = base.add(&delta);
        if backbone.nonlinearity == super::Nonlinearity::Tanh {
            for v in h.data_mut() {
                *v = v.tanh();
            }
        }
    }
    h
}

/// Sequence-level retrieval: top-k adapters by cosine similarity between the
/// input embedding and each fitted Gaussian mean, activated at full rank
/// with uniform weights.
pub fn retriever_plan(
    pool: &PoolManifest,
    z: &Vector,
    k: usize,
) -> Result<RoutingPlan, RouterError> {
    let gaussians = pool.gaussians.as_ref().ok_or(RouterError::NoCandidates)?;
    let mut sims = Vec::with_capacity(pool.len());
    for lora in &pool.loras {
        let g = gaussians
            .iter()
            .find(|g| g.lora_id == lora.id)
            .ok_or_else(|| RouterError::UnknownLora {
                id: lora.id.clone(),
            })?;
        sims.push(cosine(z, g.mu()));
    }
    let k = k.min(pool.len()).max(1);
    let chosen = top_k_indices(&sims, k)?;

    let ranks: Vec<usize> = chosen.iter().map(|&i| pool.loras[i].rank).collect();
    let budget: u64 = ranks.iter().map(|&r| r as u64).sum();
    let mean_rank = ranks.iter().sum::<usize>() as f64 / ranks.len() as f64;
    Ok(RoutingPlan {
        candidates: chosen.iter().map(|&i| pool.loras[i].id.clone()).collect(),
        scores: chosen.iter().map(|&i| sims[i]).collect(),
        probs: vec![1.0 / k as f64; k],
        allocation: ranks.iter().map(|&r| r as u64).collect(),
        ranks,
        budget,
        mean_rank,
        scale: (mean_rank / budget as f64).sqrt(),
        repair_iterations: 0,
        projection_ranking: ProjectionRanking::Raw,
    })
}

/// Sequence-level-only variant: the normal plan with `gamma = 1`, which the
/// capacity constraint resolves to full activation of every candidate.
pub fn gs_only_plan(
    scores: &[(String, f64)],
    ranks: &[usize],
    config: &RouterConfig,
    rng: &mut RngStream,
) -> Result<RoutingPlan, RouterError> {
    let cfg = RouterConfig {
        gamma: 1.0,
        ..*config
    };
    make_plan(scores, ranks, &cfg, rng)
}

/// Token-level-only routing: rank every ROC in the pool by its projection
/// on the token and fire the global top-k, with the usual
/// `sqrt(mean_rank / k)` variance normalization.
pub fn roc_only_delta(
    pool: &PoolManifest,
    layer: usize,
    x: &Vector,
    k: usize,
    ranking: ProjectionRanking,
) -> Result<Vector, RouterError> {
    // Flatten (lora, roc) pairs in pool order.
    let mut keys = Vec::new();
    let mut owners = Vec::new();
    for (li, lora) in pool.loras.iter().enumerate() {
        let p = lora.layers[layer].projections(x);
        for j in 0..lora.rank {
            let v = p.get(j);
            keys.push(match ranking {
                ProjectionRanking::Raw => v,
                ProjectionRanking::Abs => v.abs(),
            });
            owners.push((li, j));
        }
    }
    let k = k.min(keys.len());
    let chosen = top_k_indices(&keys, k)?;
    let mut by_owner: Vec<(usize, usize)> = chosen.iter().map(|&c| owners[c]).collect();
    by_owner.sort_unstable();

    let mut delta = Vector::zeros(pool.model_dim);
    for (li, j) in by_owner {
        let layer_ref = &pool.loras[li].layers[layer];
        let row = layer_ref.down().row(j);
        let mut pj = 0.0;
        for (a, b) in row.iter().zip(x.data()) {
            pj += a * b;
        }
        for kk in 0..pool.model_dim {
            delta.data_mut()[kk] += layer_ref.up().get(kk, j) * pj;
        }
    }
    let mean_rank = pool.total_rank() as f64 / pool.len() as f64;
    Ok(delta.scale((mean_rank / k as f64).sqrt()))
}

/// Forward pass with per-layer global top-k ROC routing.
pub fn forward_roc_only(
    backbone: &ToyBackbone,
    pool: &PoolManifest,
    x: &Vector,
    k: usize,
    ranking: ProjectionRanking,
) -> Result<Vector, RouterError> {
    let mut h = x.clone();
    for (li, w0) in backbone.layers.iter().enumerate() {
        let base = w0.matvec(&h);
        let delta = roc_only_delta(pool, li, &h, k, ranking)?;
        h = base.add(&delta);
        if backbone.nonlinearity == super::Nonlinearity::Tanh {
            for v in h.data_mut() {
                *v = v.tanh();
            }
        }
    }
    Ok(h)
}

/// Oracle forward: the task's own adapter applied at full rank.
pub fn forward_oracle(
    backbone: &ToyBackbone,
    pool: &PoolManifest,
    lora_id: &str,
    x: &Vector,
) -> Result<Vector, RouterError> {
    let module = pool
        .module(lora_id)
        .ok_or_else(|| RouterError::UnknownLora { id: lora_id.into() })?;
    let plan = full_activation_plan(lora_id, module.rank);
    forward(backbone, pool, &plan, x)
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    a.dot(b) / (na * nb)
}
