//! Dynamic expert sharing: pick one coreset of experts for a whole parallel
//! block, then route every token inside it.
//!
//! Two coreset selectors are provided:
//!
//! * [`des_seq_coreset`] takes the union of every token's local top-`k`.
//! * [`des_vote_coreset`] lets tokens vote with their top-K-masked gate
//!   weights and keeps the `floor(beta * M)` experts with the largest total
//!   vote.
//!
//! [`constrained_route`] then re-runs top-K per token restricted to the
//! coreset and re-normalizes the gates over the new selection.
//! [`fused_vote_pipeline`] is a single-traversal variant of the voting
//! selector with the same output.

mod fused;

pub use fused::fused_vote_pipeline;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{activate, activate_row, normalize_selection, rank_top_k, rank_top_k_within};
use crate::types::{Coreset, PoolConfig, RouterBlock, RoutingAssignment, TokenRoute};

/// Slack added before flooring `beta * M`, so that grid values such as
/// `0.29 * 100 = 28.999999999999996` land on the intended integer.
const BUDGET_EPS: f64 = 1e-9;

/// Coreset size for a budget factor: `floor(beta * M)`.
pub fn coreset_budget(beta: f64, experts: usize) -> usize {
    (beta * experts as f64 + BUDGET_EPS).floor() as usize
}

/// Per-expert vote totals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteVector {
    votes: Vec<f64>,
}

impl VoteVector {
    pub fn new(votes: Vec<f64>) -> Self {
        VoteVector { votes }
    }

    pub fn votes(&self) -> &[f64] {
        &self.votes
    }

    pub fn len(&self) -> usize {
        self.votes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.votes.is_empty()
    }

    /// `sum_{i in coreset} V_i`, accumulated in ascending index order.
    pub fn retained_mass(&self, coreset: &Coreset) -> f64 {
        coreset.members().iter().map(|&i| self.votes[i]).sum()
    }

    pub fn total(&self) -> f64 {
        self.votes.iter().sum()
    }
}

/// What tokens vote with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VoteSource {
    /// Post-activation gate weights.
    #[default]
    Activated,
    /// Raw router logits, masked to each token's top-K. Votes can be
    /// negative in this mode. Kept for ablations.
    RawLogits,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Union of per-token top-`k`.
    Seq { k: usize },
    /// Top `floor(beta * M)` experts by masked vote.
    Vote { beta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesParams {
    pub strategy: Strategy,
    #[serde(default)]
    pub vote_source: VoteSource,
}

impl DesParams {
    pub fn seq(k: usize) -> Self {
        DesParams {
            strategy: Strategy::Seq { k },
            vote_source: VoteSource::Activated,
        }
    }

    pub fn vote(beta: f64) -> Self {
        DesParams {
            strategy: Strategy::Vote { beta },
            vote_source: VoteSource::Activated,
        }
    }

    pub fn validate(&self, cfg: &PoolConfig) -> Result<()> {
        match self.strategy {
            Strategy::Seq { k } => check_seq_k(k, cfg),
            Strategy::Vote { beta } => check_beta(beta, cfg).map(|_| ()),
        }
    }
}

fn check_seq_k(k: usize, cfg: &PoolConfig) -> Result<()> {
    if k == 0 || k > cfg.top_k {
        return Err(Error::config(
            "1 <= k <= top_k",
            format!("k={k}, K={}", cfg.top_k),
        ));
    }
    Ok(())
}

fn check_beta(beta: f64, cfg: &PoolConfig) -> Result<usize> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(Error::config("0 < beta <= 1", format!("beta={beta}")));
    }
    let m_core = coreset_budget(beta, cfg.experts_total);
    if m_core == 0 {
        return Err(Error::config(
            "floor(beta * M) >= 1",
            format!("beta={beta}, M={}", cfg.experts_total),
        ));
    }
    Ok(m_core)
}

/// Union over tokens of each token's top-`k` activated experts.
pub fn des_seq_coreset(block: &RouterBlock, cfg: &PoolConfig, k: usize) -> Result<Coreset> {
    check_seq_k(k, cfg)?;
    let gates = activate(block, cfg)?;
    let mut mask = vec![false; cfg.experts_total];
    for n in 0..gates.block_size() {
        for i in rank_top_k(gates.keys(n), k) {
            mask[i] = true;
        }
    }
    Ok(Coreset::from_mask(&mask))
}

/// Per-expert votes: each token contributes its weights on its own top-K
/// experts and zero elsewhere. Tokens are accumulated in order.
pub fn vote_vector(
    block: &RouterBlock,
    cfg: &PoolConfig,
    source: VoteSource,
) -> Result<VoteVector> {
    let gates = activate(block, cfg)?;
    let mut votes = vec![0.0; cfg.experts_total];
    for n in 0..gates.block_size() {
        let probs = gates.row(n);
        let weights = match source {
            VoteSource::Activated => probs,
            VoteSource::RawLogits => block.row(n),
        };
        for i in rank_top_k(gates.keys(n), cfg.top_k) {
            votes[i] += weights[i];
        }
    }
    Ok(VoteVector { votes })
}

/// Saliency-aware voting with budget factor `beta`.
pub fn des_vote_coreset(
    block: &RouterBlock,
    cfg: &PoolConfig,
    beta: f64,
) -> Result<(Coreset, VoteVector)> {
    let m_core = check_beta(beta, cfg)?;
    des_vote_coreset_sized(block, cfg, m_core, VoteSource::Activated)
}

/// Voting with an explicit coreset size instead of a budget factor.
pub fn des_vote_coreset_sized(
    block: &RouterBlock,
    cfg: &PoolConfig,
    m_core: usize,
    source: VoteSource,
) -> Result<(Coreset, VoteVector)> {
    if m_core == 0 || m_core > cfg.experts_total {
        return Err(Error::config(
            "1 <= m_core <= experts_total",
            format!("m_core={m_core}, M={}", cfg.experts_total),
        ));
    }
    let votes = vote_vector(block, cfg, source)?;
    let coreset = Coreset::from_indices(rank_top_k(&votes.votes, m_core), cfg.experts_total)?;
    Ok((coreset, votes))
}

/// Top-K routing restricted to `coreset`. Tokens select
/// `min(K, |coreset|)` experts; gates are re-normalized over the selection.
pub fn constrained_route(
    block: &RouterBlock,
    cfg: &PoolConfig,
    coreset: &Coreset,
) -> Result<RoutingAssignment> {
    block.check_against(cfg)?;
    if coreset.is_empty() {
        return Err(Error::EmptyCoreset);
    }
    if let Some(&bad) = coreset
        .members()
        .last()
        .filter(|&&i| i >= cfg.experts_total)
    {
        return Err(Error::ExpertOutOfRange {
            index: bad,
            experts: cfg.experts_total,
        });
    }
    let allowed = coreset.mask(cfg.experts_total);
    let tokens = (0..block.block_size())
        .map(|n| {
            let logits = block.row(n);
            let probs = activate_row(logits, cfg.gate_activation);
            let selected = rank_top_k_within(logits, &allowed, cfg.top_k);
            let gates = normalize_selection(&probs, Some(logits), &selected, cfg.gate_activation);
            TokenRoute { selected, gates }
        })
        .collect();
    Ok(RoutingAssignment { tokens })
}

/// Coreset selection followed by constrained routing.
pub fn des_run(
    block: &RouterBlock,
    cfg: &PoolConfig,
    params: &DesParams,
) -> Result<(Coreset, RoutingAssignment)> {
    params.validate(cfg)?;
    let coreset = match params.strategy {
        Strategy::Seq { k } => des_seq_coreset(block, cfg, k)?,
        Strategy::Vote { beta } => {
            let m_core = coreset_budget(beta, cfg.experts_total);
            des_vote_coreset_sized(block, cfg, m_core, params.vote_source)?.0
        }
    };
    let assign = constrained_route(block, cfg, &coreset)?;
    Ok((coreset, assign))
}
