//! Deterministic simulator for Mixture-of-Experts routing when a block of
//! tokens is decoded in parallel.
//!
//! A block of `N` tokens routed independently activates the union of their
//! top-K selections, and every activated expert's weights must be fetched.
//! This crate models that union, selects shared expert coresets for the
//! whole block ([`sharing`]), compares against per-token skipping baselines
//! ([`baselines`]), and scores the results with an analytic latency model
//! ([`analysis`]) and fidelity metrics ([`metrics`]). Exhaustive references
//! for small instances live in [`oracle`].
//!
//! ```
//! use expert_sharing::{des_vote_coreset, vanilla_route, unique_experts, PoolConfig, RouterBlock};
//!
//! let cfg = PoolConfig::new(4, 2);
//! let block = RouterBlock::from_rows(&[
//!     vec![2.0, 1.0, 0.0, 0.0],
//!     vec![0.0, 0.0, 1.0, 2.0],
//! ])?;
//! assert_eq!(unique_experts(&vanilla_route(&block, &cfg)?).len(), 4);
//! let (coreset, _votes) = des_vote_coreset(&block, &cfg, 0.5)?;
//! assert_eq!(coreset.members(), &[0, 3]);
//! # Ok::<(), expert_sharing::Error>(())
//! ```

pub mod analysis;
pub mod baselines;
pub mod cli;
pub mod error;
pub mod gating;
pub mod metrics;
pub mod oracle;
pub mod report;
pub mod rng;
pub mod sharing;
pub mod trace;
pub mod types;

pub use analysis::{
    coreset_latency_bound, expected_unique_experts, memory_footprint, moe_latency, LatencyParams,
    TrafficReport,
};
pub use baselines::{
    baseline_route, mcmoe_route, naee_route, topk_reduce_route, BaselineParams, ImportanceScore,
};
pub use error::{Error, Result, TraceError};
pub use gating::{activate, moe_forward, unique_experts, vanilla_route, ExpertBank, GateMatrix};
pub use metrics::{
    cosine, hit_rate_cosine, reconstruction_loss, topk_recall, HitRateVector, ReconstructionLoss,
};
pub use rng::Rng;
pub use sharing::{
    constrained_route, coreset_budget, des_run, des_seq_coreset, des_vote_coreset,
    fused_vote_pipeline, DesParams, Strategy, VoteSource, VoteVector,
};
pub use trace::{gen_trace, read_trace, write_trace, SynthModel, SynthParams, TraceFile};
pub use types::{
    validate_config, Coreset, GateActivation, PoolConfig, RouterBlock, RoutingAssignment,
    TokenRoute,
};
