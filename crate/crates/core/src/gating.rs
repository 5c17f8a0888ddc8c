//! Vanilla MoE routing: router activation, per-token top-K, gate
//! re-normalization and the weighted expert combination.
//!
//! Ranking everywhere is by descending router score with ties going to the
//! lower expert index, so every selection in the crate is a pure function of
//! its inputs.

use std::cmp::Ordering;

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::types::{
    Coreset, GateActivation, PoolConfig, RouterBlock, RoutingAssignment, TokenRoute,
};

/// Post-activation router weights, one row per token.
///
/// Alongside the weights the matrix keeps the ranking keys used for top-K.
/// When built by [`activate`] the keys are the logits themselves: both
/// activations are strictly increasing, so this is the weight order, without
/// the spurious ties that appear once small weights underflow to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct GateMatrix {
    probs: Array2<f64>,
    keys: Array2<f64>,
    activation: GateActivation,
}

impl GateMatrix {
    /// Wraps weights that were computed elsewhere; they are also used as the
    /// ranking keys.
    pub fn from_probs(probs: Array2<f64>, activation: GateActivation) -> Self {
        let probs = probs.as_standard_layout().to_owned();
        GateMatrix {
            keys: probs.clone(),
            probs,
            activation,
        }
    }

    pub fn keys(&self, token: usize) -> &[f64] {
        self.keys
            .row(token)
            .to_slice()
            .expect("key rows are contiguous")
    }

    pub fn probs(&self) -> &Array2<f64> {
        &self.probs
    }

    pub fn row(&self, token: usize) -> &[f64] {
        self.probs
            .row(token)
            .to_slice()
            .expect("gate rows are contiguous")
    }

    pub fn activation(&self) -> GateActivation {
        self.activation
    }

    pub fn block_size(&self) -> usize {
        self.probs.nrows()
    }

    pub fn experts(&self) -> usize {
        self.probs.ncols()
    }
}

/// Ordering used by every top-K in the crate: larger value first, then
/// lower index.
#[inline]
pub fn rank_order(values: &[f64], a: usize, b: usize) -> Ordering {
    values[b].total_cmp(&values[a]).then(a.cmp(&b))
}

/// Indices of the `k` largest entries of `values`, in rank order.
pub fn rank_top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(values, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(values, a, b));
    idx
}

/// Like [`rank_top_k`] but only over indices with `allowed[i]`.
pub fn rank_top_k_within(values: &[f64], allowed: &[bool], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| allowed[i]).collect();
    let k = k.min(idx.len());
    if k == 0 {
        return Vec::new();
    }
    if k < idx.len() {
        idx.select_nth_unstable_by(k - 1, |&a, &b| rank_order(values, a, b));
        idx.truncate(k);
    }
    idx.sort_unstable_by(|&a, &b| rank_order(values, a, b));
    idx
}

/// Applies the router activation to one row of logits.
pub fn activate_row(logits: &[f64], activation: GateActivation) -> Vec<f64> {
    match activation {
        GateActivation::Softmax => {
            let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut out: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
            let sum: f64 = out.iter().sum();
            for p in &mut out {
                *p /= sum;
            }
            out
        }
        GateActivation::Sigmoid => logits.iter().map(|&l| sigmoid(l)).collect(),
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Row-wise softmax or element-wise sigmoid of the block's logits.
pub fn activate(block: &RouterBlock, cfg: &PoolConfig) -> Result<GateMatrix> {
    block.check_against(cfg)?;
    let (n, m) = block.logits().dim();
    let mut probs = Array2::<f64>::zeros((n, m));
    for (token, mut out) in probs.rows_mut().into_iter().enumerate() {
        let row = block.row(token);
        if let Some(expert) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLogit { token, expert });
        }
        for (o, p) in out.iter_mut().zip(activate_row(row, cfg.gate_activation)) {
            *o = p;
        }
    }
    Ok(GateMatrix {
        probs,
        keys: block.logits().clone(),
        activation: cfg.gate_activation,
    })
}

/// Gate weights for `selected`, normalized by the selection's total weight.
///
/// When every selected weight underflowed to zero (possible for softmax
/// when the selection excludes the dominant experts) the weights are
/// recomputed as a softmax over the selected logits, which is the same
/// quantity evaluated without the shared denominator.
pub(crate) fn normalize_selection(
    probs: &[f64],
    logits: Option<&[f64]>,
    selected: &[usize],
    activation: GateActivation,
) -> Vec<f64> {
    let total: f64 = selected.iter().map(|&i| probs[i]).sum();
    if total > 0.0 {
        return selected.iter().map(|&i| probs[i] / total).collect();
    }
    match (activation, logits) {
        (GateActivation::Softmax, Some(logits)) => {
            let sub: Vec<f64> = selected.iter().map(|&i| logits[i]).collect();
            activate_row(&sub, GateActivation::Softmax)
        }
        _ => vec![1.0 / selected.len() as f64; selected.len()],
    }
}

/// Per-token top-K with gates re-normalized over the selection.
pub fn topk_route(gates: &GateMatrix, k: usize) -> Result<RoutingAssignment> {
    let m = gates.experts();
    if k == 0 || k > m {
        return Err(Error::config(
            "1 <= top_k <= experts_total",
            format!("K={k}, M={m}"),
        ));
    }
    let tokens = (0..gates.block_size())
        .map(|n| {
            let probs = gates.row(n);
            let selected = rank_top_k(gates.keys(n), k);
            let gates = normalize_selection(probs, None, &selected, gates.activation);
            TokenRoute { selected, gates }
        })
        .collect();
    Ok(RoutingAssignment { tokens })
}

/// Activation followed by top-K with the pool's own K.
pub fn vanilla_route(block: &RouterBlock, cfg: &PoolConfig) -> Result<RoutingAssignment> {
    topk_route(&activate(block, cfg)?, cfg.top_k)
}

/// Sorted union of every token's selection.
pub fn unique_experts(assign: &RoutingAssignment) -> Coreset {
    let mut all: Vec<usize> = assign
        .tokens
        .iter()
        .flat_map(|t| t.selected.iter().copied())
        .collect();
    all.sort_unstable();
    all.dedup();
    let experts = all.last().map_or(0, |&i| i + 1);
    Coreset::from_indices(all, experts).expect("indices bounded by construction")
}

/// Synthetic expert bank: expert `i` is a fixed random linear map
/// `x -> W_i x` with `W_i` entries drawn i.i.d. from `N(0, 1/D)`, and the
/// per-token inputs are standard normal.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpertBank {
    weights: Vec<Array2<f64>>,
    inputs: Array2<f64>,
}

impl ExpertBank {
    /// Draws the bank for `cfg` serving `tokens` inputs. Expert matrices are
    /// drawn first (expert-major, row-major), then the inputs.
    pub fn new(cfg: &PoolConfig, tokens: usize, seed: u64) -> Self {
        let d = cfg.hidden_dim;
        let scale = 1.0 / (d as f64).sqrt();
        let mut rng = Rng::new(seed);
        let weights = (0..cfg.experts_total)
            .map(|_| Array2::from_shape_fn((d, d), |_| rng.normal() * scale))
            .collect();
        let inputs = Array2::from_shape_fn((tokens, d), |_| rng.normal());
        ExpertBank { weights, inputs }
    }

    /// Bank from explicit matrices. Every weight must be `D x D` and the
    /// inputs `N x D`.
    pub fn from_parts(weights: Vec<Array2<f64>>, inputs: Array2<f64>) -> Result<Self> {
        let d = inputs.ncols();
        for w in &weights {
            if w.dim() != (d, d) {
                return Err(Error::DimensionMismatch {
                    what: "expert weight side",
                    expected: d,
                    found: w.nrows().max(w.ncols()),
                });
            }
        }
        Ok(ExpertBank { weights, inputs })
    }

    pub fn experts(&self) -> usize {
        self.weights.len()
    }

    pub fn tokens(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn input(&self, token: usize) -> ArrayView1<'_, f64> {
        self.inputs.row(token)
    }

    pub fn weight(&self, expert: usize) -> &Array2<f64> {
        &self.weights[expert]
    }

    /// `E_i(x_n)`.
    pub fn expert_output(&self, expert: usize, token: usize) -> Array1<f64> {
        self.weights[expert].dot(&self.inputs.row(token))
    }

    /// Weighted expert sum for one token, accumulated in ascending expert
    /// order.
    pub fn combine(&self, token: usize, route: &TokenRoute) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.hidden_dim());
        for (expert, gate) in route.by_expert() {
            out.scaled_add(gate, &self.expert_output(expert, token));
        }
        out
    }
}

/// MoE layer output for every token of the assignment.
pub fn moe_forward(assign: &RoutingAssignment, bank: &ExpertBank) -> Result<Array2<f64>> {
    if assign.block_size() != bank.tokens() {
        return Err(Error::DimensionMismatch {
            what: "tokens in bank",
            expected: assign.block_size(),
            found: bank.tokens(),
        });
    }
    let mut out = Array2::<f64>::zeros((bank.tokens(), bank.hidden_dim()));
    for (n, route) in assign.tokens.iter().enumerate() {
        if route.selected.len() != route.gates.len() {
            return Err(Error::DimensionMismatch {
                what: "gates per token",
                expected: route.selected.len(),
                found: route.gates.len(),
            });
        }
        if let Some(&bad) = route.selected.iter().find(|&&i| i >= bank.experts()) {
            return Err(Error::ExpertOutOfRange {
                index: bad,
                experts: bank.experts(),
            });
        }
        out.row_mut(n).assign(&bank.combine(n, route));
    }
    Ok(out)
}
