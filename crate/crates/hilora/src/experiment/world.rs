//! Construction of synthetic task worlds with controlled geometry.
//!
//! A world is a set of ground-truth Gaussians over embedding space: one per
//! pool adapter ("seen" tasks) plus optional held-out ones ("unseen" tasks)
//! placed at a controlled KL distance from every source. Because the ground
//! truth is known exactly, the closest-source oracle for OOD experiments is
//! exact.

use crate::numerics::{Matrix, RngStream, Vector};
use crate::pool::{LoraLayer, LoraModule, PoolError, PoolManifest};
use crate::task::GaussianTaskModel;
use crate::theory::{bhattacharyya_exponent, gaussian_kl};

/// Ground-truth task distributions behind a synthetic embedder.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    /// One Gaussian per pool adapter, named by its adapter id.
    pub seen: Vec<GaussianTaskModel>,
    /// Held-out task Gaussians, named `unseen-<j>`.
    pub unseen: Vec<GaussianTaskModel>,
}

impl SyntheticWorld {
    /// All tasks, seen then unseen, for feeding an embedder.
    pub fn all_tasks(&self) -> Vec<GaussianTaskModel> {
        self.seen
            .iter()
            .chain(self.unseen.iter())
            .cloned()
            .collect()
    }

    /// Exact closest pool adapter for an unseen task, by ground-truth KL.
    pub fn closest_seen(&self, unseen_index: usize) -> Result<usize, crate::theory::TheoryError> {
        crate::theory::closest_source(&self.unseen[unseen_index], &self.seen)
    }

    /// Minimum pairwise Bhattacharyya exponent across the seen tasks.
    pub fn min_pairwise_bhattacharyya(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.seen.len() {
            for j in (i + 1)..self.seen.len() {
                let b =
                    bhattacharyya_exponent(&self.seen[i], &self.seen[j]).unwrap_or(f64::INFINITY);
                min = min.min(b);
            }
        }
        min
    }
}

fn structured_covariance(dim: usize, cov_scale: f64, rng: &mut RngStream) -> Matrix {
    // Mildly anisotropic SPD: scale^2 (I + 0.3 W W^T / dim).
    let w = Matrix::from_vec(dim, dim, rng.standard_normal_vec(dim * dim));
    let mut sigma = w.matmul(&w.transpose()).scale(0.3 / dim as f64);
    for i in 0..dim {
        sigma.set(i, i, sigma.get(i, i) + 1.0);
    }
    sigma.scale(cov_scale * cov_scale)
}

fn unit_direction(dim: usize, rng: &mut RngStream) -> Vector {
    loop {
        let v = Vector::from_vec(rng.standard_normal_vec(dim));
        let n = v.norm();
        if n > 1e-9 {
            return v.scale(1.0 / n);
        }
    }
}

/// Greedy max-min placement of unit directions, so no two task means sit
/// unusually close by chance.
fn spread_directions(count: usize, dim: usize, rng: &mut RngStream) -> Vec<Vector> {
    let mut dirs: Vec<Vector> = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(f64, Vector)> = None;
        for _ in 0..32 {
            let cand = unit_direction(dim, rng);
            let closest = dirs
                .iter()
                .map(|d| d.sub(&cand).norm())
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().is_none_or(|(b, _)| closest > *b) {
                best = Some((closest, cand));
            }
        }
        dirs.push(best.expect("candidates drawn").1);
    }
    dirs
}

/// Build a world of `ids.len()` seen tasks whose pairwise Bhattacharyya
/// exponents all reach `min_bhattacharyya`, plus `num_unseen` held-out
/// tasks at ground-truth KL at least `unseen_target_kl` from every source.
pub fn separated_world(
    ids: &[String],
    embed_dim: usize,
    cov_scale: f64,
    min_bhattacharyya: f64,
    num_unseen: usize,
    unseen_target_kl: f64,
    rng: &mut RngStream,
) -> SyntheticWorld {
    assert!(embed_dim >= 2);
    assert!(!ids.is_empty());
    let dirs = spread_directions(ids.len(), embed_dim, rng);
    let sigmas: Vec<Matrix> = (0..ids.len())
        .map(|_| structured_covariance(embed_dim, cov_scale, rng))
        .collect();

    // The Bhattacharyya exponent splits into f^2 * (mean part) + (det part)
    // when every mean is scaled by f, so the separation factor solves in
    // closed form per pair.
    let base_sep = cov_scale; // unit-ish starting separation
    let make_seen = |factor: f64| -> Vec<GaussianTaskModel> {
        ids.iter()
            .zip(&dirs)
            .zip(&sigmas)
            .map(|((id, dir), sigma)| {
                GaussianTaskModel::from_moments(
                    id.clone(),
                    dir.scale(base_sep * factor),
                    sigma.clone(),
                    0.0,
                )
                .expect("structured covariance is SPD")
            })
            .collect()
    };

    let probe = make_seen(1.0);
    let mut needed = 1.0_f64;
    for i in 0..probe.len() {
        for j in (i + 1)..probe.len() {
            let b_at_1 = bhattacharyya_exponent(&probe[i], &probe[j]).expect("SPD");
            let zero_mean_i = GaussianTaskModel::from_moments(
                "zi",
                Vector::zeros(embed_dim),
                probe[i].sigma().clone(),
                0.0,
            )
            .unwrap();
            let zero_mean_j = GaussianTaskModel::from_moments(
                "zj",
                Vector::zeros(embed_dim),
                probe[j].sigma().clone(),
                0.0,
            )
            .unwrap();
            let det_part = bhattacharyya_exponent(&zero_mean_i, &zero_mean_j).expect("SPD");
            let mean_part = (b_at_1 - det_part).max(1e-12);
            if det_part < min_bhattacharyya {
                let f = ((min_bhattacharyya - det_part) / mean_part).sqrt();
                needed = needed.max(f);
            }
        }
    }
    let seen = make_seen(needed * 1.001);
    debug_assert!({
        let world = SyntheticWorld {
            seen: seen.clone(),
            unseen: vec![],
        };
        world.min_pairwise_bhattacharyya() >= min_bhattacharyya * 0.999
    });

    let unseen = (0..num_unseen)
        .map(|j| {
            place_at_target_kl(
                &format!("unseen-{j}"),
                &seen,
                embed_dim,
                cov_scale,
                unseen_target_kl,
                rng,
            )
        })
        .collect();

    SyntheticWorld { seen, unseen }
}

/// Place a held-out Gaussian along a random outward ray so its ground-truth
/// KL to the nearest source lands at (or just above) the target.
fn place_at_target_kl(
    id: &str,
    sources: &[GaussianTaskModel],
    embed_dim: usize,
    cov_scale: f64,
    target_kl: f64,
    rng: &mut RngStream,
) -> GaussianTaskModel {
    let sigma = structured_covariance(embed_dim, cov_scale, rng);
    let dir = unit_direction(embed_dim, rng);
    let mut centroid = Vector::zeros(embed_dim);
    for s in sources {
        centroid.axpy(1.0 / sources.len() as f64, s.mu());
    }
    let at = |rho: f64| {
        GaussianTaskModel::from_moments(id, centroid.add(&dir.scale(rho)), sigma.clone(), 0.0)
            .expect("SPD")
    };
    let min_kl = |g: &GaussianTaskModel| {
        sources
            .iter()
            .map(|s| gaussian_kl(g, s).expect("SPD"))
            .fold(f64::INFINITY, f64::min)
    };
    // Bracket then bisect on the ray scale; KL grows without bound outward.
    let mut hi = cov_scale;
    while min_kl(&at(hi)) < target_kl {
        hi *= 2.0;
        if hi > 1e6 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if min_kl(&at(mid)) < target_kl {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

/// Two-task world with overlapping Gaussians: inputs from the first task
/// score both tasks positive, with an expected score gap of `score_gap` in
/// favor of the first. Drives the interference experiments.
pub fn overlap_world(
    ids: &[String; 2],
    embed_dim: usize,
    cov_scale: f64,
    score_gap: f64,
    rng: &mut RngStream,
) -> SyntheticWorld {
    let dim = embed_dim;
    let sigma = Matrix::identity(dim).scale(cov_scale * cov_scale);
    let mu0 = unit_direction(dim, rng).scale(0.5);
    // Expected score gap for z ~ task 0 with shared isotropic covariance is
    // |dmu|^2 / (2 d sigma^2).
    let delta_norm = cov_scale * (2.0 * dim as f64 * score_gap).sqrt();
    let dir = unit_direction(dim, rng);
    let mu1 = mu0.add(&dir.scale(delta_norm));
    let seen = vec![
        GaussianTaskModel::from_moments(ids[0].clone(), mu0, sigma.clone(), 0.0).unwrap(),
        GaussianTaskModel::from_moments(ids[1].clone(), mu1, sigma, 0.0).unwrap(),
    ];
    SyntheticWorld {
        seen,
        unseen: vec![],
    }
}

/// Interference pool: two adapters whose up-projection vectors cluster
/// around opposing directions, the second with amplified down-projections
/// so its ROCs inject strong off-task contributions when activated.
#[allow(clippy::too_many_arguments)]
pub fn interference_pool(
    model_dim: usize,
    rank: usize,
    num_layers: usize,
    entry_scale: f64,
    cluster_weight: f64,
    noise_weight: f64,
    interferer_proj_scale: f64,
    rng: &mut RngStream,
) -> Result<PoolManifest, PoolError> {
    let d = model_dim;
    let axis = unit_direction(d, rng);
    let mut make = |sign: f64, proj_scale: f64, id: &str| -> Result<LoraModule, PoolError> {
        let mut layers = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let a = Matrix::from_vec(
                rank,
                d,
                rng.standard_normal_vec(rank * d)
                    .iter()
                    .map(|v| v * entry_scale * proj_scale)
                    .collect(),
            );
            let mut b = Matrix::zeros(d, rank);
            for j in 0..rank {
                for k in 0..d {
                    let clustered = sign * axis.get(k) * (d as f64).sqrt() * cluster_weight;
                    let noise = noise_weight * rng.standard_normal();
                    b.set(k, j, entry_scale * (clustered + noise));
                }
            }
            layers.push(LoraLayer::new(a, b)?);
        }
        LoraModule::new(id, layers)
    };
    let first = make(1.0, 1.0, "lora-0")?;
    let second = make(-1.0, interferer_proj_scale, "lora-1")?;
    PoolManifest::new(vec![first, second])
}
