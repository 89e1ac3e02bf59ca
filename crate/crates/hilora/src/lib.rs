//! Training-free hierarchical routing over pools of LoRA adapters.
//!
//! A LoRA update `B * A` decomposes into rank-one components (ROCs): the
//! dyads formed by pairing each row of the down-projection `A` with the
//! matching column of the up-projection `B`. This crate routes inputs over a
//! pool of such adapters in two stages, with no gating parameters and no
//! training:
//!
//! 1. **Sequence level**: each adapter carries a Gaussian model of its task
//!    embeddings. Inputs are scored by normalized Gaussian log-likelihood,
//!    the candidate set adapts to the score profile, and a total ROC budget
//!    is split across candidates by capacity-constrained multinomial
//!    sampling.
//! 2. **Token level**: within each selected adapter, only the ROCs with the
//!    strongest down-projection responses fire, and the aggregated delta is
//!    rescaled by `sqrt(mean_rank / budget)` so output variance does not
//!    drift with the activation count.
//!
//! The crate also ships closed-form error bounds for the routing decision
//! (pairwise Bhattacharyya bounds for in-distribution inputs, Chernoff
//! alpha-moment bounds for out-of-distribution inputs) together with a
//! Monte-Carlo harness that verifies them, a toy linear backbone for
//! end-to-end forward passes, comparative baselines, and a seeded experiment
//! harness.
//!
//! Start with the runnable examples:
//!
//! ```bash
//! cargo run --release --example routing_walkthrough
//! cargo run --release --example error_bounds
//! ```
//!
//! or the `hilora` binary (`pool`, `route`, `run`, `bench`, `sweep-gamma`,
//! `theory`, `export` subcommands).

pub mod experiment;
pub mod numerics;
pub mod pool;
pub mod router;
pub mod task;
pub mod theory;

pub use numerics::{Matrix, RngStream, Vector};
pub use pool::{LoraLayer, LoraModule, MergedModule, PoolManifest};
pub use router::{RouterConfig, RoutingPlan, ToyBackbone};
pub use task::{EmbeddingProvider, GaussianTaskModel, SyntheticEmbedder, DEFAULT_INSTRUCTION};
