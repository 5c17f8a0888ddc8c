//! Domain types shared by every module.
//!
//! Expert indices are 0-based throughout. All arithmetic on the reference
//! path is `f64`.

use std::fmt;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Router activation applied to logits before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GateActivation {
    #[default]
    Softmax,
    Sigmoid,
}

impl fmt::Display for GateActivation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GateActivation::Softmax => f.write_str("softmax"),
            GateActivation::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

impl std::str::FromStr for GateActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(GateActivation::Softmax),
            "sigmoid" => Ok(GateActivation::Sigmoid),
            other => Err(Error::Usage(format!(
                "unknown gate activation {other:?} (expected softmax or sigmoid)"
            ))),
        }
    }
}

/// Static description of one MoE layer's expert pool.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolConfig {
    pub experts_total: usize,
    pub top_k: usize,
    #[serde(default)]
    pub gate_activation: GateActivation,
    /// Weight bytes of one expert, used for the memory-footprint report.
    pub bytes_per_expert: u64,
    /// Hidden size of the synthetic expert bank.
    pub hidden_dim: usize,
}

impl PoolConfig {
    pub fn new(experts_total: usize, top_k: usize) -> Self {
        PoolConfig {
            experts_total,
            top_k,
            gate_activation: GateActivation::Softmax,
            bytes_per_expert: 1,
            hidden_dim: 16,
        }
    }

    pub fn with_activation(mut self, activation: GateActivation) -> Self {
        self.gate_activation = activation;
        self
    }

    pub fn with_bytes_per_expert(mut self, bytes: u64) -> Self {
        self.bytes_per_expert = bytes;
        self
    }

    pub fn with_hidden_dim(mut self, dim: usize) -> Self {
        self.hidden_dim = dim;
        self
    }

    /// Checks every invariant and returns the config unchanged. The error
    /// names the first violated invariant.
    pub fn validate(self) -> Result<Self> {
        if self.experts_total == 0 {
            return Err(Error::config("experts_total >= 1", "experts_total is 0"));
        }
        if self.top_k == 0 {
            return Err(Error::config("top_k >= 1", "top_k is 0"));
        }
        if self.top_k > self.experts_total {
            return Err(Error::config(
                "top_k <= experts_total",
                format!("K={} > M={}", self.top_k, self.experts_total),
            ));
        }
        if self.bytes_per_expert == 0 {
            return Err(Error::config(
                "bytes_per_expert > 0",
                "bytes_per_expert is 0",
            ));
        }
        if self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim >= 1", "hidden_dim is 0"));
        }
        Ok(self)
    }
}

/// Free-function form of [`PoolConfig::validate`].
pub fn validate_config(cfg: PoolConfig) -> Result<PoolConfig> {
    cfg.validate()
}

/// Router logits of one decoding block for one MoE layer: one row per
/// parallel token, one column per expert.
#[derive(Debug, Clone, PartialEq)]
pub struct RouterBlock {
    logits: Array2<f64>,
}

impl RouterBlock {
    /// Builds a block from a row-major `N x M` matrix. Rejects empty blocks
    /// and non-finite entries.
    pub fn new(logits: Array2<f64>) -> Result<Self> {
        let (rows, cols) = logits.dim();
        if rows == 0 {
            return Err(Error::config("block_size >= 1", "block has no tokens"));
        }
        if cols == 0 {
            return Err(Error::config("experts_total >= 1", "block has no experts"));
        }
        for ((token, expert), v) in logits.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::NonFiniteLogit { token, expert });
            }
        }
        let logits = if logits.is_standard_layout() {
            logits
        } else {
            logits.as_standard_layout().to_owned()
        };
        Ok(RouterBlock { logits })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(n * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::DimensionMismatch {
                    what: if i == 0 {
                        "row width"
                    } else {
                        "row width (ragged rows)"
                    },
                    expected: m,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        let logits =
            Array2::from_shape_vec((n, m), flat).map_err(|e| Error::Internal(e.to_string()))?;
        RouterBlock::new(logits)
    }

    pub fn block_size(&self) -> usize {
        self.logits.nrows()
    }

    pub fn experts(&self) -> usize {
        self.logits.ncols()
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn row(&self, token: usize) -> &[f64] {
        // Standard layout is enforced in `new`.
        self.logits
            .row(token)
            .to_slice()
            .expect("router block rows are contiguous")
    }

    pub fn rows(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.logits.rows().into_iter()
    }

    /// Errors unless the block's width equals the pool's expert count.
    pub fn check_against(&self, cfg: &PoolConfig) -> Result<()> {
        if self.experts() != cfg.experts_total {
            return Err(Error::DimensionMismatch {
                what: "router block width",
                expected: cfg.experts_total,
                found: self.experts(),
            });
        }
        Ok(())
    }
}

/// Strictly increasing set of expert indices serving a whole block.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct Coreset {
    members: Vec<usize>,
}

impl Coreset {
    /// Sorts and deduplicates `indices`; errors on any index `>= experts`.
    pub fn from_indices(indices: impl IntoIterator<Item = usize>, experts: usize) -> Result<Self> {
        let mut members: Vec<usize> = indices.into_iter().collect();
        if let Some(&bad) = members.iter().find(|&&i| i >= experts) {
            return Err(Error::ExpertOutOfRange {
                index: bad,
                experts,
            });
        }
        members.sort_unstable();
        members.dedup();
        Ok(Coreset { members })
    }

    /// Builds from a membership mask.
    pub fn from_mask(mask: &[bool]) -> Self {
        Coreset {
            members: mask
                .iter()
                .enumerate()
                .filter_map(|(i, &m)| m.then_some(i))
                .collect(),
        }
    }

    pub fn full(experts: usize) -> Self {
        Coreset {
            members: (0..experts).collect(),
        }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, expert: usize) -> bool {
        self.members.binary_search(&expert).is_ok()
    }

    pub fn is_subset_of(&self, other: &Coreset) -> bool {
        self.members.iter().all(|&i| other.contains(i))
    }

    pub fn mask(&self, experts: usize) -> Vec<bool> {
        let mut mask = vec![false; experts];
        for &i in &self.members {
            if i < experts {
                mask[i] = true;
            }
        }
        mask
    }
}

/// One token's routing decision. `selected` is in rank order (descending
/// gate weight, ties to the lower index); `gates[j]` belongs to
/// `selected[j]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TokenRoute {
    pub selected: Vec<usize>,
    pub gates: Vec<f64>,
}

impl TokenRoute {
    pub fn len(&self) -> usize {
        self.selected.len()
    }

    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }

    pub fn gate_sum(&self) -> f64 {
        self.gates.iter().sum()
    }

    /// `(expert, gate)` pairs sorted by ascending expert index.
    pub fn by_expert(&self) -> Vec<(usize, f64)> {
        let mut pairs: Vec<(usize, f64)> = self
            .selected
            .iter()
            .copied()
            .zip(self.gates.iter().copied())
            .collect();
        pairs.sort_unstable_by_key(|&(i, _)| i);
        pairs
    }
}

/// Per-token routing for a whole block.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RoutingAssignment {
    pub tokens: Vec<TokenRoute>,
}

impl RoutingAssignment {
    pub fn block_size(&self) -> usize {
        self.tokens.len()
    }

    /// Total number of (token, expert) pairs, i.e. the sum of per-expert
    /// token counts.
    pub fn total_selections(&self) -> usize {
        self.tokens.iter().map(TokenRoute::len).sum()
    }

    /// Number of tokens routed to each expert.
    pub fn expert_counts(&self, experts: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0usize; experts];
        for token in &self.tokens {
            for &i in &token.selected {
                *counts
                    .get_mut(i)
                    .ok_or(Error::ExpertOutOfRange { index: i, experts })? += 1;
            }
        }
        Ok(counts)
    }
}
