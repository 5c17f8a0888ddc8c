//! Fidelity metrics of a shared coreset against vanilla routing.
//!
//! Reconstruction loss is the relative squared residual
//! `||y_vanilla - y||^2 / ||y_vanilla||^2` per token on the synthetic expert
//! bank, averaged over tokens with a non-vanishing vanilla output.

use ndarray::{Array1, Array2, Array3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gating::{vanilla_route, ExpertBank};
use crate::sharing::constrained_route;
use crate::types::{Coreset, PoolConfig, RouterBlock, RoutingAssignment, TokenRoute};

/// Squared norms at or below this are treated as a vanishing output.
pub const VANISHING_NORM_SQ: f64 = 1e-300;

/// Mean over tokens of `|S_n ∩ C| / |S_n|`.
pub fn topk_recall(vanilla: &RoutingAssignment, coreset: &Coreset) -> f64 {
    let n = vanilla.block_size();
    if n == 0 {
        return 1.0;
    }
    let sum: f64 = vanilla
        .tokens
        .iter()
        .map(|t| {
            if t.is_empty() {
                1.0
            } else {
                t.selected.iter().filter(|&&i| coreset.contains(i)).count() as f64 / t.len() as f64
            }
        })
        .sum();
    sum / n as f64
}

/// Mean over tokens of the fraction of the vanilla selection that `assign`
/// kept. Equals [`topk_recall`] for routing constrained to a coreset.
pub fn selection_recall(vanilla: &RoutingAssignment, assign: &RoutingAssignment) -> Result<f64> {
    if vanilla.block_size() != assign.block_size() {
        return Err(Error::DimensionMismatch {
            what: "tokens in assignment",
            expected: vanilla.block_size(),
            found: assign.block_size(),
        });
    }
    let n = vanilla.block_size();
    if n == 0 {
        return Ok(1.0);
    }
    let sum: f64 = vanilla
        .tokens
        .iter()
        .zip(&assign.tokens)
        .map(|(v, a)| {
            if v.is_empty() {
                1.0
            } else {
                v.selected.iter().filter(|i| a.selected.contains(i)).count() as f64 / v.len() as f64
            }
        })
        .sum();
    Ok(sum / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionLoss {
    pub mean: f64,
    /// Tokens that contributed to the mean.
    pub evaluated: usize,
    /// Tokens skipped because their vanilla output vanished.
    pub excluded: usize,
}

/// Cached per-(token, expert) outputs for one block, so that many candidate
/// coresets can be scored cheaply.
#[derive(Debug, Clone)]
pub struct ReconstructionContext<'a> {
    block: &'a RouterBlock,
    cfg: &'a PoolConfig,
    vanilla: RoutingAssignment,
    outputs: Array3<f64>,
    reference: Array2<f64>,
}

impl<'a> ReconstructionContext<'a> {
    pub fn new(block: &'a RouterBlock, cfg: &'a PoolConfig, bank: &ExpertBank) -> Result<Self> {
        block.check_against(cfg)?;
        if bank.experts() != cfg.experts_total {
            return Err(Error::DimensionMismatch {
                what: "experts in bank",
                expected: cfg.experts_total,
                found: bank.experts(),
            });
        }
        if bank.tokens() != block.block_size() {
            return Err(Error::DimensionMismatch {
                what: "tokens in bank",
                expected: block.block_size(),
                found: bank.tokens(),
            });
        }
        let (n, m, d) = (block.block_size(), cfg.experts_total, bank.hidden_dim());
        let mut outputs = Array3::<f64>::zeros((n, m, d));
        for t in 0..n {
            for i in 0..m {
                outputs
                    .slice_mut(ndarray::s![t, i, ..])
                    .assign(&bank.expert_output(i, t));
            }
        }
        let vanilla = vanilla_route(block, cfg)?;
        let mut ctx = ReconstructionContext {
            block,
            cfg,
            vanilla,
            outputs,
            reference: Array2::zeros((n, d)),
        };
        let reference = ctx.forward(&ctx.vanilla);
        ctx.reference = reference;
        Ok(ctx)
    }

    pub fn vanilla(&self) -> &RoutingAssignment {
        &self.vanilla
    }

    fn combine(&self, token: usize, route: &TokenRoute) -> Array1<f64> {
        let mut out = Array1::<f64>::zeros(self.outputs.dim().2);
        for (i, g) in route.by_expert() {
            out.scaled_add(g, &self.outputs.slice(ndarray::s![token, i, ..]));
        }
        out
    }

    fn forward(&self, assign: &RoutingAssignment) -> Array2<f64> {
        let mut out = Array2::zeros(self.reference.raw_dim());
        for (t, route) in assign.tokens.iter().enumerate() {
            out.row_mut(t).assign(&self.combine(t, route));
        }
        out
    }

    fn relative_residual(&self, token: usize, y: &Array1<f64>) -> Option<f64> {
        let r = self.reference.row(token);
        let norm_sq = r.dot(&r);
        if norm_sq <= VANISHING_NORM_SQ {
            return None;
        }
        let diff = &r - y;
        Some(diff.dot(&diff) / norm_sq)
    }

    /// Loss of an arbitrary assignment of this block against vanilla.
    pub fn loss_of_assignment(&self, assign: &RoutingAssignment) -> Result<ReconstructionLoss> {
        if assign.block_size() != self.block.block_size() {
            return Err(Error::DimensionMismatch {
                what: "tokens in assignment",
                expected: self.block.block_size(),
                found: assign.block_size(),
            });
        }
        let mut total = 0.0;
        let mut evaluated = 0;
        let mut excluded = 0;
        for (t, route) in assign.tokens.iter().enumerate() {
            match self.relative_residual(t, &self.combine(t, route)) {
                Some(l) => {
                    total += l;
                    evaluated += 1;
                }
                None => excluded += 1,
            }
        }
        if evaluated == 0 {
            return Err(Error::UndefinedLoss);
        }
        Ok(ReconstructionLoss {
            mean: total / evaluated as f64,
            evaluated,
            excluded,
        })
    }

    /// Loss of constrained routing inside `coreset`.
    pub fn loss(&self, coreset: &Coreset) -> Result<ReconstructionLoss> {
        let assign = constrained_route(self.block, self.cfg, coreset)?;
        self.loss_of_assignment(&assign)
    }

    /// `(n, i)` = relative residual of token `n` when expert `i` is removed
    /// from its vanilla selection and the remaining gates re-normalized;
    /// zero when `i` was not selected.
    pub fn importance_map(&self) -> Array2<f64> {
        let (n, m) = (self.block.block_size(), self.cfg.experts_total);
        let mut map = Array2::zeros((n, m));
        for (t, route) in self.vanilla.tokens.iter().enumerate() {
            for (j, &i) in route.selected.iter().enumerate() {
                let mut ablated = route.clone();
                ablated.selected.remove(j);
                ablated.gates.remove(j);
                let rest: f64 = ablated.gates.iter().sum();
                if rest > 0.0 {
                    for g in &mut ablated.gates {
                        *g /= rest;
                    }
                }
                map[[t, i]] = self
                    .relative_residual(t, &self.combine(t, &ablated))
                    .unwrap_or(0.0);
            }
        }
        map
    }
}

/// Mean relative residual of constrained routing inside `coreset`.
pub fn reconstruction_loss(
    block: &RouterBlock,
    cfg: &PoolConfig,
    coreset: &Coreset,
    bank: &ExpertBank,
) -> Result<ReconstructionLoss> {
    ReconstructionContext::new(block, cfg, bank)?.loss(coreset)
}

/// Expert-ablation sensitivity map, one row per token.
pub fn expert_importance_map(
    block: &RouterBlock,
    cfg: &PoolConfig,
    bank: &ExpertBank,
) -> Result<Array2<f64>> {
    Ok(ReconstructionContext::new(block, cfg, bank)?.importance_map())
}

/// Per-expert activation frequency, normalized by `N * K` over every block
/// accumulated so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HitRateVector {
    hits: Vec<u64>,
    slots: u64,
}

impl HitRateVector {
    pub fn new(experts: usize) -> Self {
        HitRateVector {
            hits: vec![0; experts],
            slots: 0,
        }
    }

    /// Adds one block routed with per-token budget `k`.
    pub fn accumulate(&mut self, assign: &RoutingAssignment, k: usize) -> Result<()> {
        let experts = self.hits.len();
        for t in &assign.tokens {
            for &i in &t.selected {
                *self
                    .hits
                    .get_mut(i)
                    .ok_or(Error::ExpertOutOfRange { index: i, experts })? += 1;
            }
        }
        self.slots += (assign.block_size() * k) as u64;
        Ok(())
    }

    pub fn from_assignment(assign: &RoutingAssignment, experts: usize, k: usize) -> Result<Self> {
        let mut v = HitRateVector::new(experts);
        v.accumulate(assign, k)?;
        Ok(v)
    }

    pub fn rates(&self) -> Vec<f64> {
        if self.slots == 0 {
            return vec![0.0; self.hits.len()];
        }
        self.hits
            .iter()
            .map(|&h| h as f64 / self.slots as f64)
            .collect()
    }
}

/// Cosine similarity of two hit-rate vectors (or any two equal-length
/// vectors).
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "vector length",
            expected: a.len(),
            found: b.len(),
        });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 && nb == 0.0 {
        return Err(Error::ZeroVectors);
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn hit_rate_cosine(a: &HitRateVector, b: &HitRateVector) -> Result<f64> {
    cosine(&a.rates(), &b.rates())
}

/// Rates sorted in descending order.
pub fn activation_frequency_curve(hits: &HitRateVector) -> Vec<f64> {
    let mut r = hits.rates();
    r.sort_unstable_by(|a, b| b.total_cmp(a));
    r
}
