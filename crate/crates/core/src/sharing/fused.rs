//! Single-traversal voting.
//!
//! Pass one walks each token row once: running max, exponentials into a
//! scratch row, normalization, a bounded insertion buffer for the top-K, and
//! accumulation into the vote vector. Pass two ranks the votes against a
//! threshold element instead of sorting, producing the coreset mask.
//!
//! Per-token arithmetic and the token accumulation order match
//! [`super::vote_vector`], so votes agree bit-for-bit with the composed path.

use std::cmp::Ordering;

use crate::error::Result;
use crate::gating::{rank_order, sigmoid};
use crate::types::{Coreset, GateActivation, PoolConfig, RouterBlock};

use super::{check_beta, VoteVector};

/// Fused DES-Vote: same contract as [`super::des_vote_coreset`].
pub fn fused_vote_pipeline(
    block: &RouterBlock,
    cfg: &PoolConfig,
    beta: f64,
) -> Result<(Coreset, VoteVector)> {
    let m_core = check_beta(beta, cfg)?;
    block.check_against(cfg)?;
    let m = cfg.experts_total;
    let k = cfg.top_k;

    let mut votes = vec![0.0f64; m];
    let mut scratch = vec![0.0f64; m];
    // (logit, expert) pairs, kept in rank order.
    let mut top: Vec<(f64, usize)> = Vec::with_capacity(k + 1);

    for n in 0..block.block_size() {
        let row = block.row(n);
        top.clear();
        match cfg.gate_activation {
            GateActivation::Softmax => {
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for (s, &l) in scratch.iter_mut().zip(row) {
                    *s = (l - max).exp();
                }
                let sum: f64 = scratch.iter().sum();
                for (i, s) in scratch.iter_mut().enumerate() {
                    *s /= sum;
                    insert_top(&mut top, k, row[i], i);
                }
            }
            GateActivation::Sigmoid => {
                for (i, (s, &l)) in scratch.iter_mut().zip(row).enumerate() {
                    *s = sigmoid(l);
                    insert_top(&mut top, k, l, i);
                }
            }
        }
        for &(_, i) in &top {
            votes[i] += scratch[i];
        }
    }

    let coreset = threshold_select(&votes, m_core);
    Ok((coreset, VoteVector::new(votes)))
}

#[inline]
fn beats(a: (f64, usize), b: (f64, usize)) -> bool {
    match a.0.total_cmp(&b.0) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => a.1 < b.1,
    }
}

fn insert_top(top: &mut Vec<(f64, usize)>, k: usize, value: f64, index: usize) {
    let cand = (value, index);
    if top.len() == k {
        if !beats(cand, top[k - 1]) {
            return;
        }
        top.pop();
    }
    let pos = top
        .iter()
        .position(|&e| beats(cand, e))
        .unwrap_or(top.len());
    top.insert(pos, cand);
}

/// Experts ranked at or above the `m_core`-th vote under the crate-wide
/// ordering.
fn threshold_select(votes: &[f64], m_core: usize) -> Coreset {
    let mut idx: Vec<usize> = (0..votes.len()).collect();
    let (_, &mut pivot, _) =
        idx.select_nth_unstable_by(m_core - 1, |&a, &b| rank_order(votes, a, b));
    let mask: Vec<bool> = (0..votes.len())
        .map(|i| rank_order(votes, i, pivot) != Ordering::Greater)
        .collect();
    Coreset::from_mask(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::des_vote_coreset;

    #[test]
    fn insertion_buffer_keeps_rank_order() {
        let mut top = Vec::new();
        for (i, v) in [0.3, 0.9, 0.3, 0.5, 0.9].into_iter().enumerate() {
            insert_top(&mut top, 3, v, i);
        }
        assert_eq!(top.iter().map(|e| e.1).collect::<Vec<_>>(), vec![1, 4, 3]);
    }

    #[test]
    fn threshold_select_breaks_ties_low() {
        let c = threshold_select(&[0.5, 0.2, 0.5, 0.5, 0.0], 2);
        assert_eq!(c.members(), &[0, 2]);
        let c = threshold_select(&[0.0; 5], 5);
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn fused_matches_hand_instance() {
        let block =
            RouterBlock::from_rows(&[vec![3.0, 2.0, 1.0, 0.0], vec![0.0, 1.0, 2.0, 3.0]]).unwrap();
        let cfg = PoolConfig::new(4, 2);
        let (c, v) = fused_vote_pipeline(&block, &cfg, 0.5).unwrap();
        let (rc, rv) = des_vote_coreset(&block, &cfg, 0.5).unwrap();
        assert_eq!(c, rc);
        assert_eq!(c.members(), &[0, 3]);
        let e: Vec<f64> = [3.0f64, 2.0, 1.0, 0.0].iter().map(|x| x.exp()).collect();
        let z: f64 = e.iter().sum();
        let hand = [e[0] / z, e[1] / z, e[1] / z, e[0] / z];
        for ((a, b), h) in v.votes().iter().zip(rv.votes()).zip(hand) {
            assert!((a - h).abs() < 1e-9);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn fused_sigmoid_matches_composed() {
        let block = RouterBlock::from_rows(&[
            vec![0.3, -2.0, 1.5, 0.1, 0.7],
            vec![1.0, 1.0, -1.0, 2.0, 0.0],
        ])
        .unwrap();
        let cfg = PoolConfig::new(5, 2).with_activation(GateActivation::Sigmoid);
        let fused = fused_vote_pipeline(&block, &cfg, 0.6).unwrap();
        let composed = des_vote_coreset(&block, &cfg, 0.6).unwrap();
        assert_eq!(fused, composed);
    }
}
