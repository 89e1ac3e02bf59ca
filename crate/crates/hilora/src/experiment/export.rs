//! Analysis exports: 2-D PCA scatter of the pool's ROC vectors.

use super::{cfg_err, ExperimentError};
use crate::numerics::{pca_2d, Vector};
use crate::pool::PoolManifest;

/// Which half of each ROC dyad to project.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RocVectorKind {
    /// Rows of the down-projections; scaling-factor directions.
    AVectors,
    /// Columns of the up-projections; the semantically clustered side.
    BVectors,
}

impl std::str::FromStr for RocVectorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "a" | "a-vectors" => Ok(RocVectorKind::AVectors),
            "b" | "b-vectors" => Ok(RocVectorKind::BVectors),
            other => Err(format!(
                "unknown vector kind '{other}' (expected 'a' or 'b')"
            )),
        }
    }
}

/// Project every ROC vector of one layer onto its top-2 principal
/// components and emit CSV: one row per ROC, with the explained-variance
/// fractions in a leading comment.
pub fn export_roc_pca(
    pool: &PoolManifest,
    kind: RocVectorKind,
    layer: usize,
) -> Result<(String, (f64, f64)), ExperimentError> {
    if layer >= pool.num_layers {
        return Err(cfg_err(
            "export.layer",
            format!("invalid layer {layer}, pool has {}", pool.num_layers),
        ));
    }
    let mut owners: Vec<(&str, usize)> = Vec::new();
    let mut points: Vec<Vector> = Vec::new();
    for lora in &pool.loras {
        let l = &lora.layers[layer];
        for j in 0..lora.rank {
            let v = match kind {
                RocVectorKind::AVectors => Vector::from_vec(l.down().row(j).to_vec()),
                RocVectorKind::BVectors => {
                    Vector::from_vec((0..l.model_dim()).map(|k| l.up().get(k, j)).collect())
                }
            };
            owners.push((lora.id.as_str(), j));
            points.push(v);
        }
    }

    let (projections, explained) = if points.len() < 2 {
        // A single ROC centers to the origin; there is no variance to
        // explain.
        (vec![(0.0, 0.0); points.len()], (0.0, 0.0))
    } else {
        let pca = pca_2d(&points).map_err(|e| cfg_err("export", e.to_string()))?;
        (pca.projections, pca.explained)
    };

    let mut csv = format!(
        "# explained_variance_pc1={} explained_variance_pc2={}\nlora_id,roc_index,pc1,pc2\n",
        explained.0, explained.1
    );
    for ((id, j), (p1, p2)) in owners.iter().zip(&projections) {
        csv.push_str(&format!("{id},{j},{p1},{p2}\n"));
    }
    Ok((csv, explained))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Matrix, RngStream};
    use crate::pool::{synthesize_pool, LoraLayer, LoraModule, PoolSpec};

    #[test]
    fn single_roc_pool_exports_origin() {
        let a = Matrix::from_vec(1, 4, vec![1.0, 2.0, 3.0, 4.0]);
        let b = Matrix::from_vec(4, 1, vec![1.0, 0.0, 0.0, 0.0]);
        let pool = crate::pool::PoolManifest::new(vec![LoraModule::new(
            "solo",
            vec![LoraLayer::new(a, b).unwrap()],
        )
        .unwrap()])
        .unwrap();
        let (csv, explained) = export_roc_pca(&pool, RocVectorKind::BVectors, 0).unwrap();
        assert!(csv.contains("solo,0,0,0"));
        assert_eq!(explained, (0.0, 0.0));
    }

    #[test]
    fn invalid_layer_rejected() {
        let spec = PoolSpec {
            num_loras: 1,
            model_dim: 8,
            num_layers: 1,
            ranks: vec![2],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(1, 0)).unwrap();
        assert!(export_roc_pca(&pool, RocVectorKind::AVectors, 1).is_err());
    }

    #[test]
    fn standard_normal_a_vectors_are_unclustered() {
        // i.i.d. normal directions: the leading component cannot dominate.
        let spec = PoolSpec {
            num_loras: 8,
            model_dim: 16,
            num_layers: 1,
            ranks: vec![8],
            ..Default::default()
        };
        let pool = synthesize_pool(&spec, &mut RngStream::new(2, 0)).unwrap();
        let (_, explained) = export_roc_pca(&pool, RocVectorKind::AVectors, 0).unwrap();
        assert!(
            explained.0 < 0.5,
            "pc1 fraction {} for isotropic cloud",
            explained.0
        );
    }

    #[test]
    fn clustered_b_vectors_sit_closer_within_lora() {
        // Construct two adapters with b columns clustered around opposing
        // directions; within-adapter PCA distance must undercut the
        // cross-adapter mean distance.
        let mut rng = RngStream::new(3, 0);
        let d = 16;
        let r = 8;
        let pool =
            crate::experiment::interference_pool(d, r, 1, 1.0, 0.8, 0.4, 1.0, &mut rng).unwrap();
        let (csv, _) = export_roc_pca(&pool, RocVectorKind::BVectors, 0).unwrap();
        let mut rows: Vec<(String, f64, f64)> = Vec::new();
        for line in csv.lines().skip(2) {
            let parts: Vec<&str> = line.split(',').collect();
            rows.push((
                parts[0].to_string(),
                parts[2].parse().unwrap(),
                parts[3].parse().unwrap(),
            ));
        }
        let dist = |a: &(String, f64, f64), b: &(String, f64, f64)| {
            ((a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt()
        };
        let mut within = Vec::new();
        let mut cross = Vec::new();
        for i in 0..rows.len() {
            for j in (i + 1)..rows.len() {
                if rows[i].0 == rows[j].0 {
                    within.push(dist(&rows[i], &rows[j]));
                } else {
                    cross.push(dist(&rows[i], &rows[j]));
                }
            }
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!(
            mean(&within) < mean(&cross),
            "within {} vs cross {}",
            mean(&within),
            mean(&cross)
        );
    }
}
