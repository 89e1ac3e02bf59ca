//! 2-D PCA projection of ROC vectors: up-projection columns form
//! per-adapter clusters while down-projection rows stay isotropic.
//!
//! ```bash
//! cargo run --release --example roc_pca_scatter
//! ```

use hilora::experiment::{export_roc_pca, interference_pool, RocVectorKind};
use hilora::numerics::RngStream;
use hilora::pool::{synthesize_pool, PoolSpec};

fn main() {
    // Clustered up-projections: two adapters built around opposing axes.
    let mut rng = RngStream::new(9, 0);
    let clustered = interference_pool(16, 8, 1, 1.0, 0.8, 0.4, 1.0, &mut rng).expect("valid");
    let (csv, explained) = export_roc_pca(&clustered, RocVectorKind::BVectors, 0).expect("export");
    println!(
        "clustered b-vectors: explained variance ({:.3}, {:.3})",
        explained.0, explained.1
    );
    print!("{csv}");

    // i.i.d. normal down-projections: no direction dominates.
    let spec = PoolSpec {
        num_loras: 8,
        model_dim: 16,
        num_layers: 1,
        ranks: vec![8],
        entry_scale: 1.0,
        id_prefix: "lora".into(),
    };
    let plain = synthesize_pool(&spec, &mut RngStream::new(10, 0)).expect("valid");
    let (_, explained_a) = export_roc_pca(&plain, RocVectorKind::AVectors, 0).expect("export");
    println!(
        "\nstandard-normal a-vectors: explained variance ({:.3}, {:.3}), isotropic",
        explained_a.0, explained_a.1
    );
}
