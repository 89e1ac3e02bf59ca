//! LoRA adapters as collections of per-layer rank-one components, and the
//! serialized pool registry.

mod manifest;

pub use manifest::{load_manifest, save_manifest};

use crate::numerics::{Matrix, RngStream, Vector};
use crate::task::GaussianTaskModel;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("ROC index {index} out of range for rank {rank}")]
    IndexOutOfRange { index: usize, rank: usize },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("pool is empty")]
    EmptyPool,
    #[error("manifest parse error: {context}")]
    ParseError { context: String },
    #[error("shape mismatch in manifest: {context}")]
    ShapeMismatch { context: String },
    #[error("invalid pool spec: {reason}")]
    InvalidSpec { reason: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One adapted layer: down-projection `a` (r x d) paired with up-projection
/// `b` (d x r). Row `j` of `a` and column `j` of `b` form ROC `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraLayer {
    a: Matrix,
    b: Matrix,
}

impl LoraLayer {
    pub fn new(a: Matrix, b: Matrix) -> Result<Self, PoolError> {
        if a.rows() != b.cols() || a.cols() != b.rows() {
            return Err(PoolError::DimensionMismatch {
                context: format!(
                    "a is {}x{} but b is {}x{}",
                    a.rows(),
                    a.cols(),
                    b.rows(),
                    b.cols()
                ),
            });
        }
        if a.rows() == 0 {
            return Err(PoolError::ShapeMismatch {
                context: "rank must be >= 1".into(),
            });
        }
        if a.rows() >= a.cols() {
            return Err(PoolError::ShapeMismatch {
                context: format!("rank {} must be < model dim {}", a.rows(), a.cols()),
            });
        }
        Ok(Self { a, b })
    }

    pub fn rank(&self) -> usize {
        self.a.rows()
    }

    pub fn model_dim(&self) -> usize {
        self.a.cols()
    }

    pub fn down(&self) -> &Matrix {
        &self.a
    }

    pub fn up(&self) -> &Matrix {
        &self.b
    }

    /// Projection values `a_j^T x` for all ROCs at once.
    pub fn projections(&self, x: &Vector) -> Vector {
        self.a.matvec(x)
    }

    /// Contribution of ROC `j` alone: `b_j * (a_j^T x)`.
    pub fn roc_delta(&self, j: usize, x: &Vector) -> Result<Vector, PoolError> {
        if j >= self.rank() {
            return Err(PoolError::IndexOutOfRange {
                index: j,
                rank: self.rank(),
            });
        }
        if x.dim() != self.model_dim() {
            return Err(PoolError::DimensionMismatch {
                context: format!("x dim {} vs model dim {}", x.dim(), self.model_dim()),
            });
        }
        let mut p = 0.0;
        for (ai, xi) in self.a.row(j).iter().zip(x.data()) {
            p += ai * xi;
        }
        let d = self.model_dim();
        let mut out = Vector::zeros(d);
        for k in 0..d {
            out.data_mut()[k] = self.b.get(k, j) * p;
        }
        Ok(out)
    }

    /// Full delta `B (A x)`, accumulated ROC by ROC in ascending index order.
    ///
    /// This is the reference application path; the router reproduces it
    /// bit-exactly when every ROC is activated.
    pub fn full_delta(&self, x: &Vector) -> Vector {
        let p = self.projections(x);
        let d = self.model_dim();
        let mut out = Vector::zeros(d);
        for j in 0..self.rank() {
            let pj = p.get(j);
            for k in 0..d {
                out.data_mut()[k] += self.b.get(k, j) * pj;
            }
        }
        out
    }

    /// Delta restricted to the ROCs in `indices` (must be in ascending order
    /// for reproducible accumulation).
    pub fn partial_delta(&self, indices: &[usize], x: &Vector) -> Vector {
        let p = self.projections(x);
        let d = self.model_dim();
        let mut out = Vector::zeros(d);
        for &j in indices {
            let pj = p.get(j);
            for k in 0..d {
                out.data_mut()[k] += self.b.get(k, j) * pj;
            }
        }
        out
    }
}

/// One adapter in the pool: an id, a rank, and one [`LoraLayer`] per adapted
/// backbone layer.
#[derive(Debug, Clone, PartialEq)]
pub struct LoraModule {
    pub id: String,
    pub rank: usize,
    pub layers: Vec<LoraLayer>,
}

impl LoraModule {
    pub fn new(id: impl Into<String>, layers: Vec<LoraLayer>) -> Result<Self, PoolError> {
        if layers.is_empty() {
            return Err(PoolError::InvalidSpec {
                reason: "module needs at least one layer".into(),
            });
        }
        let rank = layers[0].rank();
        let dim = layers[0].model_dim();
        for (i, l) in layers.iter().enumerate() {
            if l.rank() != rank || l.model_dim() != dim {
                return Err(PoolError::ShapeMismatch {
                    context: format!("layer {i} disagrees on rank or model dim"),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            rank,
            layers,
        })
    }

    pub fn model_dim(&self) -> usize {
        self.layers[0].model_dim()
    }
}

/// Registry of adapters sharing a model dimension and layer count, plus the
/// fitted Gaussian task models once available.
#[derive(Debug, Clone)]
pub struct PoolManifest {
    pub model_dim: usize,
    pub num_layers: usize,
    pub loras: Vec<LoraModule>,
    pub gaussians: Option<Vec<GaussianTaskModel>>,
}

impl PoolManifest {
    pub fn new(loras: Vec<LoraModule>) -> Result<Self, PoolError> {
        if loras.is_empty() {
            return Err(PoolError::EmptyPool);
        }
        let model_dim = loras[0].model_dim();
        let num_layers = loras[0].layers.len();
        let mut seen = std::collections::HashSet::new();
        for l in &loras {
            if l.model_dim() != model_dim || l.layers.len() != num_layers {
                return Err(PoolError::ShapeMismatch {
                    context: format!("module '{}' disagrees on model dim or layer count", l.id),
                });
            }
            if !seen.insert(l.id.clone()) {
                return Err(PoolError::InvalidSpec {
                    reason: format!("duplicate id '{}'", l.id),
                });
            }
        }
        Ok(Self {
            model_dim,
            num_layers,
            loras,
            gaussians: None,
        })
    }

    pub fn len(&self) -> usize {
        self.loras.len()
    }

    pub fn is_empty(&self) -> bool {
        self.loras.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.loras.iter().position(|l| l.id == id)
    }

    pub fn module(&self, id: &str) -> Option<&LoraModule> {
        self.loras.iter().find(|l| l.id == id)
    }

    pub fn total_rank(&self) -> usize {
        self.loras.iter().map(|l| l.rank).sum()
    }

    pub fn gaussian_for(&self, id: &str) -> Option<&GaussianTaskModel> {
        self.gaussians.as_ref()?.iter().find(|g| g.lora_id == id)
    }

    /// Restrict the pool to its first `n` adapters (keeps matching
    /// Gaussians). Used by the throughput sweep.
    pub fn truncated(&self, n: usize) -> Result<PoolManifest, PoolError> {
        if n == 0 || n > self.loras.len() {
            return Err(PoolError::InvalidSpec {
                reason: format!("cannot truncate pool of {} to {n}", self.loras.len()),
            });
        }
        let loras: Vec<LoraModule> = self.loras[..n].to_vec();
        let ids: std::collections::HashSet<&str> = loras.iter().map(|l| l.id.as_str()).collect();
        let gaussians = self.gaussians.as_ref().map(|gs| {
            gs.iter()
                .filter(|g| ids.contains(g.lora_id.as_str()))
                .cloned()
                .collect()
        });
        let mut out = PoolManifest::new(loras)?;
        out.gaussians = gaussians;
        Ok(out)
    }
}

/// Sum of all adapters collapsed into one dense update per layer.
///
/// The per-layer deltas no longer factor through a rank-one structure, so
/// this is its own type rather than a [`LoraModule`]; `rank` records the
/// summed ranks as metadata.
#[derive(Debug, Clone)]
pub struct MergedModule {
    pub id: String,
    pub rank: usize,
    /// Dense `sum_i B_i A_i`, one d x d matrix per layer.
    pub delta: Vec<Matrix>,
}

impl MergedModule {
    pub fn apply(&self, layer: usize, x: &Vector) -> Vector {
        self.delta[layer].matvec(x)
    }
}

/// Merge every adapter in the pool into a single dense module.
pub fn merged_module(pool: &PoolManifest) -> Result<MergedModule, PoolError> {
    if pool.is_empty() {
        return Err(PoolError::EmptyPool);
    }
    let d = pool.model_dim;
    let mut delta = vec![Matrix::zeros(d, d); pool.num_layers];
    for lora in &pool.loras {
        for (li, layer) in lora.layers.iter().enumerate() {
            let dense = layer.up().matmul(layer.down());
            delta[li] = delta[li].add(&dense);
        }
    }
    Ok(MergedModule {
        id: "merged".into(),
        rank: pool.total_rank(),
        delta,
    })
}

/// Generator configuration for synthetic pools.
#[derive(Debug, Clone)]
pub struct PoolSpec {
    pub num_loras: usize,
    pub model_dim: usize,
    pub num_layers: usize,
    /// Per-adapter ranks, cycled if shorter than `num_loras`.
    pub ranks: Vec<usize>,
    /// Standard deviation of the i.i.d. normal entries. The unit default
    /// matches the standard-normal setting of the variance-normalization
    /// analysis; experiments shrink it so deltas perturb the backbone
    /// instead of dominating it.
    pub entry_scale: f64,
    /// Id prefix; adapters are named `<prefix>-0`, `<prefix>-1`, ...
    pub id_prefix: String,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            num_loras: 5,
            model_dim: 16,
            num_layers: 3,
            ranks: vec![4, 8],
            entry_scale: 1.0,
            id_prefix: "lora".into(),
        }
    }
}

/// Synthesize a pool with i.i.d. normal entries, deterministically from the
/// stream.
pub fn synthesize_pool(spec: &PoolSpec, rng: &mut RngStream) -> Result<PoolManifest, PoolError> {
    if spec.num_loras == 0 {
        return Err(PoolError::InvalidSpec {
            reason: "num_loras must be >= 1".into(),
        });
    }
    if spec.num_layers == 0 {
        return Err(PoolError::InvalidSpec {
            reason: "num_layers must be >= 1".into(),
        });
    }
    if spec.ranks.is_empty() {
        return Err(PoolError::InvalidSpec {
            reason: "ranks must be nonempty".into(),
        });
    }
    if !(spec.entry_scale.is_finite() && spec.entry_scale > 0.0) {
        return Err(PoolError::InvalidSpec {
            reason: "entry_scale must be positive".into(),
        });
    }
    for &r in &spec.ranks {
        if r == 0 || r >= spec.model_dim {
            return Err(PoolError::InvalidSpec {
                reason: format!("ranks must satisfy 1 <= r < model_dim, got {r}"),
            });
        }
    }
    let d = spec.model_dim;
    let mut loras = Vec::with_capacity(spec.num_loras);
    for i in 0..spec.num_loras {
        let r = spec.ranks[i % spec.ranks.len()];
        let mut layers = Vec::with_capacity(spec.num_layers);
        for _ in 0..spec.num_layers {
            let a = Matrix::from_vec(
                r,
                d,
                rng.standard_normal_vec(r * d)
                    .iter()
                    .map(|v| v * spec.entry_scale)
                    .collect(),
            );
            let b = Matrix::from_vec(
                d,
                r,
                rng.standard_normal_vec(d * r)
                    .iter()
                    .map(|v| v * spec.entry_scale)
                    .collect(),
            );
            layers.push(LoraLayer::new(a, b)?);
        }
        loras.push(LoraModule::new(format!("{}-{i}", spec.id_prefix), layers)?);
    }
    PoolManifest::new(loras)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_layer(rank: usize, dim: usize, rng: &mut RngStream) -> LoraLayer {
        let a = Matrix::from_vec(rank, dim, rng.standard_normal_vec(rank * dim));
        let b = Matrix::from_vec(dim, rank, rng.standard_normal_vec(dim * rank));
        LoraLayer::new(a, b).unwrap()
    }

    #[test]
    fn roc_delta_orthogonal_projection_is_zero() {
        // a_0 = e_0; x orthogonal to it.
        let a = Matrix::from_vec(1, 3, vec![1.0, 0.0, 0.0]);
        let b = Matrix::from_vec(3, 1, vec![0.5, -1.0, 2.0]);
        let layer = LoraLayer::new(a, b).unwrap();
        let x = Vector::from_vec(vec![0.0, 4.0, -7.0]);
        let out = layer.roc_delta(0, &x).unwrap();
        assert_eq!(out.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn roc_delta_unit_basis_construction() {
        // a_0 = e_1, b_0 = e_2, x = (3, 0, 0, 0) in the first slot of a.
        let a = Matrix::from_vec(1, 4, vec![1.0, 0.0, 0.0, 0.0]);
        let b = Matrix::from_vec(4, 1, vec![0.0, 1.0, 0.0, 0.0]);
        let layer = LoraLayer::new(a, b).unwrap();
        let x = Vector::from_vec(vec![3.0, 0.0, 0.0, 0.0]);
        let out = layer.roc_delta(0, &x).unwrap();
        assert_eq!(out.data(), &[0.0, 3.0, 0.0, 0.0]);
    }

    #[test]
    fn roc_delta_rejects_bad_index_and_dim() {
        let mut rng = RngStream::new(1, 0);
        let layer = random_layer(2, 5, &mut rng);
        let x = Vector::zeros(5);
        assert!(matches!(
            layer.roc_delta(2, &x),
            Err(PoolError::IndexOutOfRange { .. })
        ));
        let bad = Vector::zeros(4);
        assert!(matches!(
            layer.roc_delta(0, &bad),
            Err(PoolError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn roc_deltas_sum_to_dense_product() {
        let mut rng = RngStream::new(2, 0);
        let layer = random_layer(6, 12, &mut rng);
        for _ in 0..100 {
            let x = Vector::from_vec(rng.standard_normal_vec(12));
            let mut acc = Vector::zeros(12);
            for j in 0..layer.rank() {
                acc = acc.add(&layer.roc_delta(j, &x).unwrap());
            }
            // Dense matrix-product oracle.
            let dense = layer.up().matmul(layer.down()).matvec(&x);
            let err = acc.sub(&dense).norm();
            assert!(err < 1e-10, "err = {err}");
        }
    }

    #[test]
    fn merged_single_lora_equals_its_delta() {
        let mut rng = RngStream::new(3, 0);
        let layer = random_layer(3, 8, &mut rng);
        let pool =
            PoolManifest::new(vec![LoraModule::new("only", vec![layer.clone()]).unwrap()]).unwrap();
        let merged = merged_module(&pool).unwrap();
        let x = Vector::from_vec(rng.standard_normal_vec(8));
        let got = merged.apply(0, &x);
        let expect = layer.full_delta(&x);
        assert!(got.sub(&expect).norm() < 1e-12);
    }

    #[test]
    fn merged_negated_pair_cancels() {
        let mut rng = RngStream::new(4, 0);
        let layer = random_layer(3, 8, &mut rng);
        let neg = LoraLayer::new(layer.down().clone(), layer.up().scale(-1.0)).unwrap();
        let pool = PoolManifest::new(vec![
            LoraModule::new("plus", vec![layer]).unwrap(),
            LoraModule::new("minus", vec![neg]).unwrap(),
        ])
        .unwrap();
        let merged = merged_module(&pool).unwrap();
        let x = Vector::from_vec(rng.standard_normal_vec(8));
        assert!(merged.apply(0, &x).norm() < 1e-12);
    }

    #[test]
    fn merged_matches_elementwise_sum_oracle() {
        let mut rng = RngStream::new(5, 0);
        let loras: Vec<LoraModule> = (0..3)
            .map(|i| {
                LoraModule::new(
                    format!("l{i}"),
                    vec![random_layer(4, 10, &mut rng), random_layer(4, 10, &mut rng)],
                )
                .unwrap()
            })
            .collect();
        let pool = PoolManifest::new(loras.clone()).unwrap();
        let merged = merged_module(&pool).unwrap();
        assert_eq!(merged.rank, 12);
        for li in 0..2 {
            let mut oracle = Matrix::zeros(10, 10);
            for l in &loras {
                oracle = oracle.add(&l.layers[li].up().matmul(l.layers[li].down()));
            }
            assert!(merged.delta[li].max_abs_diff(&oracle) < 1e-10);
        }
    }

    #[test]
    fn synthesize_smoke_and_determinism() {
        let spec = PoolSpec {
            num_loras: 1,
            model_dim: 8,
            num_layers: 2,
            ranks: vec![4],
            ..Default::default()
        };
        let p1 = synthesize_pool(&spec, &mut RngStream::new(10, 0)).unwrap();
        assert_eq!(p1.len(), 1);
        assert_eq!(p1.loras[0].rank, 4);
        assert_eq!(p1.loras[0].layers.len(), 2);
        let p2 = synthesize_pool(&spec, &mut RngStream::new(10, 0)).unwrap();
        for (a, b) in p1.loras.iter().zip(&p2.loras) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn synthesized_entries_have_normal_moments() {
        let spec = PoolSpec {
            num_loras: 5,
            model_dim: 20,
            num_layers: 5,
            ranks: vec![10],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(11, 0)).unwrap();
        let mut entries = Vec::new();
        for l in &pool.loras {
            for layer in &l.layers {
                entries.extend_from_slice(layer.down().data());
                entries.extend_from_slice(layer.up().data());
            }
        }
        let n = entries.len() as f64;
        assert!(n >= 10_000.0);
        let mean = entries.iter().sum::<f64>() / n;
        let var = entries.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        // Mean within 4 sigma of 0; variance within 5% of 1.
        assert!(mean.abs() < 4.0 / n.sqrt(), "mean = {mean}");
        assert!((var - 1.0).abs() < 0.05, "var = {var}");
    }

    #[test]
    fn synthesize_rejects_bad_spec() {
        let mut rng = RngStream::new(1, 0);
        let bad = PoolSpec {
            ranks: vec![16],
            model_dim: 16,
            ..Default::default()
        };
        assert!(matches!(
            synthesize_pool(&bad, &mut rng),
            Err(PoolError::InvalidSpec { .. })
        ));
        let bad = PoolSpec {
            num_loras: 0,
            ..Default::default()
        };
        assert!(matches!(
            synthesize_pool(&bad, &mut rng),
            Err(PoolError::InvalidSpec { .. })
        ));
    }

    #[test]
    fn layer_invariants_enforced() {
        // rank 0
        let a = Matrix::zeros(0, 4);
        let b = Matrix::zeros(4, 0);
        assert!(LoraLayer::new(a, b).is_err());
        // rank >= dim
        let a = Matrix::zeros(4, 4);
        let b = Matrix::zeros(4, 4);
        assert!(LoraLayer::new(a, b).is_err());
    }
}
