//! JSON pool manifests with base64 weight payloads.
//!
//! The structure is human-inspectable JSON; the numeric payloads are
//! base64-encoded little-endian 64-bit reals so a save/load round trip
//! reproduces every weight bit-exactly.

use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{LoraLayer, LoraModule, PoolError, PoolManifest};
use crate::numerics::{Matrix, Vector};
use crate::task::GaussianTaskModel;

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    model_dim: usize,
    num_layers: usize,
    loras: Vec<LoraDoc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gaussians: Option<Vec<GaussianDoc>>,
}

#[derive(Serialize, Deserialize)]
struct LoraDoc {
    id: String,
    rank: usize,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    a: String,
    b: String,
}

#[derive(Serialize, Deserialize)]
struct GaussianDoc {
    lora_id: String,
    mu: String,
    sigma: String,
    reg_lambda: f64,
}

fn encode_reals(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_reals(payload: &str, context: &str) -> Result<Vec<f64>, PoolError> {
    let bytes = B64.decode(payload).map_err(|e| PoolError::ParseError {
        context: format!("{context}: invalid base64 ({e})"),
    })?;
    if bytes.len() % 8 != 0 {
        return Err(PoolError::ParseError {
            context: format!(
                "{context}: payload of {} bytes is not a whole number of reals",
                bytes.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(bytes.len() / 8);
    for chunk in bytes.chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().expect("chunks_exact(8)"));
        if !v.is_finite() {
            return Err(PoolError::ParseError {
                context: format!("{context}: non-finite entry"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Serialize a pool (weights bit-exact) to `path`.
pub fn save_manifest(pool: &PoolManifest, path: impl AsRef<Path>) -> Result<(), PoolError> {
    let doc = ManifestDoc {
        model_dim: pool.model_dim,
        num_layers: pool.num_layers,
        loras: pool
            .loras
            .iter()
            .map(|l| LoraDoc {
                id: l.id.clone(),
                rank: l.rank,
                layers: l
                    .layers
                    .iter()
                    .map(|layer| LayerDoc {
                        a: encode_reals(layer.down().data()),
                        b: encode_reals(layer.up().data()),
                    })
                    .collect(),
            })
            .collect(),
        gaussians: pool.gaussians.as_ref().map(|gs| {
            gs.iter()
                .map(|g| GaussianDoc {
                    lora_id: g.lora_id.clone(),
                    mu: encode_reals(g.mu().data()),
                    sigma: encode_reals(g.sigma().data()),
                    reg_lambda: g.reg_lambda(),
                })
                .collect()
        }),
    };
    let json = serde_json::to_string_pretty(&doc).map_err(|e| PoolError::ParseError {
        context: format!("serialization failed: {e}"),
    })?;
    std::fs::write(path, json)?;
    Ok(())
}

/// Load a pool manifest, validating declared shapes against payload lengths.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<PoolManifest, PoolError> {
    let text = std::fs::read_to_string(path)?;
    load_manifest_str(&text)
}

pub(crate) fn load_manifest_str(text: &str) -> Result<PoolManifest, PoolError> {
    let doc: ManifestDoc = serde_json::from_str(text).map_err(|e| PoolError::ParseError {
        context: format!("line {} column {}: {e}", e.line(), e.column()),
    })?;
    let d = doc.model_dim;
    if d == 0 {
        return Err(PoolError::ShapeMismatch {
            context: "model_dim must be >= 1".into(),
        });
    }

    let mut loras = Vec::with_capacity(doc.loras.len());
    for l in &doc.loras {
        if l.rank == 0 {
            return Err(PoolError::ShapeMismatch {
                context: format!("lora '{}': rank must be >= 1", l.id),
            });
        }
        if l.layers.len() != doc.num_layers {
            return Err(PoolError::ShapeMismatch {
                context: format!(
                    "lora '{}': {} layers declared, manifest says {}",
                    l.id,
                    l.layers.len(),
                    doc.num_layers
                ),
            });
        }
        let mut layers = Vec::with_capacity(l.layers.len());
        for (li, layer) in l.layers.iter().enumerate() {
            let a = decode_reals(&layer.a, &format!("lora '{}' layer {li} field 'a'", l.id))?;
            let b = decode_reals(&layer.b, &format!("lora '{}' layer {li} field 'b'", l.id))?;
            if a.len() != l.rank * d {
                return Err(PoolError::ShapeMismatch {
                    context: format!(
                        "lora '{}' layer {li}: 'a' payload has {} reals, expected rank*dim = {}",
                        l.id,
                        a.len(),
                        l.rank * d
                    ),
                });
            }
            if b.len() != d * l.rank {
                return Err(PoolError::ShapeMismatch {
                    context: format!(
                        "lora '{}' layer {li}: 'b' payload has {} reals, expected dim*rank = {}",
                        l.id,
                        b.len(),
                        d * l.rank
                    ),
                });
            }
            layers.push(LoraLayer::new(
                Matrix::from_vec(l.rank, d, a),
                Matrix::from_vec(d, l.rank, b),
            )?);
        }
        loras.push(LoraModule::new(l.id.clone(), layers)?);
    }

    let mut pool = PoolManifest::new(loras)?;
    if pool.num_layers != doc.num_layers {
        return Err(PoolError::ShapeMismatch {
            context: format!("num_layers {} disagrees with layer lists", doc.num_layers),
        });
    }

    if let Some(gs) = &doc.gaussians {
        let mut gaussians = Vec::with_capacity(gs.len());
        for g in gs {
            if pool.index_of(&g.lora_id).is_none() {
                return Err(PoolError::ParseError {
                    context: format!("gaussian references unknown lora '{}'", g.lora_id),
                });
            }
            let mu = decode_reals(&g.mu, &format!("gaussian '{}' field 'mu'", g.lora_id))?;
            let sigma = decode_reals(&g.sigma, &format!("gaussian '{}' field 'sigma'", g.lora_id))?;
            let dim = mu.len();
            if sigma.len() != dim * dim {
                return Err(PoolError::ShapeMismatch {
                    context: format!(
                        "gaussian '{}': sigma has {} reals, expected {}",
                        g.lora_id,
                        sigma.len(),
                        dim * dim
                    ),
                });
            }
            let model = GaussianTaskModel::from_moments(
                g.lora_id.clone(),
                Vector::from_vec(mu),
                Matrix::from_vec(dim, dim, sigma),
                g.reg_lambda,
            )
            .map_err(|e| PoolError::ParseError {
                context: format!("gaussian '{}': {e}", g.lora_id),
            })?;
            gaussians.push(model);
        }
        pool.gaussians = Some(gaussians);
    }
    Ok(pool)
}
