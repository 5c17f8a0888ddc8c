//! Token-centric expert-skipping baselines adapted to parallel blocks.
//!
//! All three only ever drop experts from a token's vanilla top-K; none of
//! them can add an expert, so their unique-expert load is bounded by the
//! vanilla union.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{activate, normalize_selection, rank_top_k, topk_route, GateMatrix};
use crate::types::{PoolConfig, RouterBlock, RoutingAssignment, TokenRoute};

/// How MC-MoE-style skipping scores token importance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceScore {
    /// Largest post-activation gate weight of the token.
    #[default]
    MaxGate,
    /// Negative Shannon entropy of the token's normalized gate row.
    NegEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum BaselineParams {
    TopkReduce {
        k_reduced: usize,
    },
    Naee {
        beta: f64,
    },
    McMoe {
        beta: f64,
        important_fraction: f64,
        #[serde(default)]
        score: ImportanceScore,
    },
}

impl BaselineParams {
    pub fn validate(&self, cfg: &PoolConfig) -> Result<()> {
        match *self {
            BaselineParams::TopkReduce { k_reduced } => check_k_reduced(k_reduced, cfg),
            BaselineParams::Naee { beta } => check_naee_beta(beta),
            BaselineParams::McMoe {
                beta,
                important_fraction,
                ..
            } => {
                check_naee_beta(beta)?;
                check_fraction(important_fraction)
            }
        }
    }
}

fn check_k_reduced(k_reduced: usize, cfg: &PoolConfig) -> Result<()> {
    if k_reduced == 0 || k_reduced > cfg.top_k {
        return Err(Error::config(
            "1 <= k_reduced <= top_k",
            format!("k_reduced={k_reduced}, K={}", cfg.top_k),
        ));
    }
    Ok(())
}

fn check_naee_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::config("0 < beta < 1", format!("beta={beta}")));
    }
    Ok(())
}

// Zero is accepted: it is the limit in which no token is protected.
fn check_fraction(f: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&f) {
        return Err(Error::config(
            "0 <= important_fraction <= 1",
            format!("important_fraction={f}"),
        ));
    }
    Ok(())
}

/// Vanilla routing with a smaller per-token K.
pub fn topk_reduce_route(
    block: &RouterBlock,
    cfg: &PoolConfig,
    k_reduced: usize,
) -> Result<RoutingAssignment> {
    check_k_reduced(k_reduced, cfg)?;
    topk_route(&activate(block, cfg)?, k_reduced)
}

/// Number of leading ranks NAEE keeps for one token.
///
/// `ranked` holds the token's top-K weights in descending order. Rank `i`
/// (1-based, `i >= 2`) and everything below it is dropped as soon as the
/// tail mass `sum_{u >= i} ranked[u]` is below `beta` times the full mass.
/// The first rank is always kept.
pub fn naee_keep_count(ranked: &[f64], beta: f64) -> usize {
    let k = ranked.len();
    if k <= 1 {
        return k;
    }
    let total: f64 = ranked.iter().sum();
    let threshold = beta * total;
    // tails[j] = sum of ranked[j..], built from the bottom up.
    let mut tails = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tails[j] = tails[j + 1] + ranked[j];
    }
    (1..k).find(|&j| tails[j] < threshold).unwrap_or(k)
}

fn naee_token(gates: &GateMatrix, n: usize, k: usize, beta: f64) -> TokenRoute {
    let probs = gates.row(n);
    let mut selected = rank_top_k(gates.keys(n), k);
    let ranked: Vec<f64> = selected.iter().map(|&i| probs[i]).collect();
    selected.truncate(naee_keep_count(&ranked, beta));
    let g = normalize_selection(probs, None, &selected, gates.activation());
    TokenRoute { selected, gates: g }
}

/// Cumulative-tail skipping applied to every token.
pub fn naee_route(block: &RouterBlock, cfg: &PoolConfig, beta: f64) -> Result<RoutingAssignment> {
    check_naee_beta(beta)?;
    let gates = activate(block, cfg)?;
    let tokens = (0..gates.block_size())
        .map(|n| naee_token(&gates, n, cfg.top_k, beta))
        .collect();
    Ok(RoutingAssignment { tokens })
}

/// Importance of every token under `score`.
pub fn token_importance(gates: &GateMatrix, score: ImportanceScore) -> Vec<f64> {
    (0..gates.block_size())
        .map(|n| {
            let row = gates.row(n);
            match score {
                ImportanceScore::MaxGate => row.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                ImportanceScore::NegEntropy => {
                    let total: f64 = row.iter().sum();
                    row.iter()
                        .map(|&p| p / total)
                        .filter(|&p| p > 0.0)
                        .map(|p| p * p.ln())
                        .sum()
                }
            }
        })
        .collect()
}

/// Token-importance skipping with the default (max gate) score.
pub fn mcmoe_route(
    block: &RouterBlock,
    cfg: &PoolConfig,
    beta: f64,
    important_fraction: f64,
) -> Result<RoutingAssignment> {
    mcmoe_route_with(
        block,
        cfg,
        beta,
        important_fraction,
        ImportanceScore::MaxGate,
    )
}

/// The `ceil(important_fraction * N)` most important tokens keep their full
/// top-K; the rest get NAEE skipping with `beta`.
pub fn mcmoe_route_with(
    block: &RouterBlock,
    cfg: &PoolConfig,
    beta: f64,
    important_fraction: f64,
    score: ImportanceScore,
) -> Result<RoutingAssignment> {
    check_naee_beta(beta)?;
    check_fraction(important_fraction)?;
    let gates = activate(block, cfg)?;
    let n = gates.block_size();
    let keep = ((important_fraction * n as f64).ceil() as usize).min(n);
    let importance = token_importance(&gates, score);
    let mut protected = vec![false; n];
    for t in rank_top_k(&importance, keep) {
        protected[t] = true;
    }
    let vanilla = topk_route(&gates, cfg.top_k)?;
    let tokens = vanilla
        .tokens
        .into_iter()
        .enumerate()
        .map(|(t, route)| {
            if protected[t] {
                route
            } else {
                naee_token(&gates, t, cfg.top_k, beta)
            }
        })
        .collect();
    Ok(RoutingAssignment { tokens })
}

pub fn baseline_route(
    block: &RouterBlock,
    cfg: &PoolConfig,
    params: &BaselineParams,
) -> Result<RoutingAssignment> {
    match *params {
        BaselineParams::TopkReduce { k_reduced } => topk_reduce_route(block, cfg, k_reduced),
        BaselineParams::Naee { beta } => naee_route(block, cfg, beta),
        BaselineParams::McMoe {
            beta,
            important_fraction,
            score,
        } => mcmoe_route_with(block, cfg, beta, important_fraction, score),
    }
}
