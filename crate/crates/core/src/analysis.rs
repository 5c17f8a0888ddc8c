//! Analytic cost model.
//!
//! Processing `c > 0` tokens through one expert costs `a * c + b`, where `b`
//! is the one-off weight fetch and `a` the per-token compute. A block's MoE
//! latency is therefore `b * |union of selections| + a * (total selections)`.
//! Routing and gather overheads are not modeled.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Coreset, PoolConfig, RoutingAssignment};

/// Coefficients of the affine per-expert cost, in arbitrary time units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatencyParams {
    /// Marginal compute per token per expert.
    pub a: f64,
    /// Weight fetch per activated expert.
    pub b: f64,
}

impl LatencyParams {
    pub fn new(a: f64, b: f64) -> Result<Self> {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(Error::config("a >= 0", format!("a={a}")));
        }
        if !(b >= 0.0 && b.is_finite()) {
            return Err(Error::config("b >= 0", format!("b={b}")));
        }
        Ok(LatencyParams { a, b })
    }
}

impl Default for LatencyParams {
    fn default() -> Self {
        LatencyParams { a: 0.1, b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficReport {
    pub unique_experts: usize,
    pub total_selections: usize,
    pub latency: f64,
    pub memory_bytes: u64,
    pub per_expert_counts: Vec<usize>,
}

impl TrafficReport {
    /// Compute proxy over bytes moved: `2 * a * selections / memory_bytes`.
    /// Reporting only; the unit of `a` is abstract.
    pub fn operational_intensity(&self, params: &LatencyParams) -> f64 {
        if self.memory_bytes == 0 {
            return 0.0;
        }
        2.0 * params.a * self.total_selections as f64 / self.memory_bytes as f64
    }
}

/// Evaluates the latency model on `assign` by two independent routes and
/// returns the report. The per-expert route sums `f(cnt_i)` over the pool;
/// the union route uses the set union of selections and the per-token
/// selection counts. The integer decompositions must match exactly and the
/// two latencies to within 1e-12 relative; anything else is an
/// [`Error::Internal`].
pub fn moe_latency(
    assign: &RoutingAssignment,
    cfg: &PoolConfig,
    params: &LatencyParams,
) -> Result<TrafficReport> {
    let counts = assign.expert_counts(cfg.experts_total)?;

    // Per-expert form.
    let mut active = 0usize;
    let mut load = 0usize;
    let mut per_expert_latency = 0.0;
    for &c in &counts {
        if c > 0 {
            active += 1;
            load += c;
            per_expert_latency += params.b + params.a * c as f64;
        }
    }

    // Union form.
    let mut seen = vec![false; cfg.experts_total];
    let mut union = 0usize;
    for token in &assign.tokens {
        for &i in &token.selected {
            if !std::mem::replace(&mut seen[i], true) {
                union += 1;
            }
        }
    }
    let selections: usize = assign.tokens.iter().map(|t| t.selected.len()).sum();
    let latency = params.b * union as f64 + params.a * selections as f64;

    if active != union || load != selections {
        return Err(Error::Internal(format!(
            "latency forms disagree: per-expert ({active} active, {load} load) vs union ({union}, {selections})"
        )));
    }
    let scale = latency.abs().max(1.0);
    if (per_expert_latency - latency).abs() > 1e-12 * scale {
        return Err(Error::Internal(format!(
            "latency forms disagree: {per_expert_latency} vs {latency}"
        )));
    }

    Ok(TrafficReport {
        unique_experts: union,
        total_selections: selections,
        latency,
        memory_bytes: memory_footprint(union, cfg.bytes_per_expert),
        per_expert_counts: counts,
    })
}

/// Upper bound on the latency of any routing confined to `coreset` with at
/// most `k` experts per token: `b * |C| + a * N * k`.
pub fn coreset_latency_bound(coreset: &Coreset, n: usize, k: usize, params: &LatencyParams) -> f64 {
    params.b * coreset.len() as f64 + params.a * (n * k) as f64
}

/// Expected size of the union of `n` independent uniform `k`-subsets of a
/// pool of `m` experts: `m * (1 - (1 - k/m)^n)`.
pub fn expected_unique_experts(m: usize, k: usize, n: usize) -> f64 {
    let m_f = m as f64;
    let miss = 1.0 - k as f64 / m_f;
    m_f * (1.0 - miss.powf(n as f64))
}

/// Bytes of expert weights that must be resident for `unique` experts.
pub fn memory_footprint(unique: usize, bytes_per_expert: u64) -> u64 {
    unique as u64 * bytes_per_expert
}
