//! Exhaustive and sampling references for small instances.
//!
//! Nothing here is approximate: if an instance exceeds an enumeration guard
//! the call fails instead of truncating the search.

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::gating::ExpertBank;
use crate::metrics::ReconstructionContext;
use crate::rng::Rng;
use crate::sharing::VoteVector;
use crate::types::{Coreset, PoolConfig, RouterBlock};

pub const ADDITIVE_MAX_EXPERTS: usize = 20;
pub const RECONSTRUCTION_MAX_EXPERTS: usize = 12;
pub const RECONSTRUCTION_MAX_TOKENS: usize = 8;

fn guard(name: &'static str, value: usize, limit: usize) -> Result<()> {
    if value > limit {
        return Err(Error::OracleGuard { name, value, limit });
    }
    Ok(())
}

fn check_size(m_core: usize, experts: usize) -> Result<()> {
    if m_core == 0 || m_core > experts {
        return Err(Error::config(
            "1 <= m_core <= experts_total",
            format!("m_core={m_core}, M={experts}"),
        ));
    }
    Ok(())
}

/// Size-`m_core` subset maximizing the summed votes, by enumerating every
/// subset in lexicographic order. The first maximizer wins ties.
pub fn exhaustive_additive_coreset(votes: &VoteVector, m_core: usize) -> Result<(Coreset, f64)> {
    let m = votes.len();
    guard("experts_total", m, ADDITIVE_MAX_EXPERTS)?;
    check_size(m_core, m)?;
    let v = votes.votes();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in (0..m).combinations(m_core) {
        let mass: f64 = subset.iter().map(|&i| v[i]).sum();
        if best.as_ref().is_none_or(|(_, b)| mass > *b) {
            best = Some((subset, mass));
        }
    }
    let (members, mass) = best.expect("at least one subset");
    Ok((Coreset::from_indices(members, m)?, mass))
}

/// Size-`m_core` coreset minimizing the reconstruction loss of constrained
/// routing, by enumeration. Returns the coreset and its mean loss.
pub fn exhaustive_reconstruction_coreset(
    block: &RouterBlock,
    cfg: &PoolConfig,
    bank: &ExpertBank,
    m_core: usize,
) -> Result<(Coreset, f64)> {
    guard(
        "experts_total",
        cfg.experts_total,
        RECONSTRUCTION_MAX_EXPERTS,
    )?;
    guard("block_size", block.block_size(), RECONSTRUCTION_MAX_TOKENS)?;
    check_size(m_core, cfg.experts_total)?;
    let ctx = ReconstructionContext::new(block, cfg, bank)?;
    let mut best: Option<(Vec<usize>, f64)> = None;
    for subset in (0..cfg.experts_total).combinations(m_core) {
        let coreset = Coreset::from_indices(subset.iter().copied(), cfg.experts_total)?;
        let loss = ctx.loss(&coreset)?.mean;
        if best.as_ref().is_none_or(|(_, b)| loss < *b) {
            best = Some((subset, loss));
        }
    }
    let (members, loss) = best.expect("at least one subset");
    Ok((Coreset::from_indices(members, cfg.experts_total)?, loss))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub stderr: f64,
    pub trials: usize,
}

/// Mean size of the union of `n` independent uniform `k`-subsets of `0..m`.
pub fn mc_unique_experts(
    m: usize,
    k: usize,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<MonteCarloEstimate> {
    if trials == 0 {
        return Err(Error::config("trials >= 1", "trials is 0"));
    }
    if k == 0 || k > m {
        return Err(Error::config("1 <= k <= m", format!("k={k}, m={m}")));
    }
    let mut rng = Rng::new(seed);
    let mut scratch: Vec<usize> = (0..m).collect();
    let mut stamp = vec![0usize; m];
    let (mut sum, mut sum_sq) = (0.0f64, 0.0f64);
    for trial in 1..=trials {
        let mut union = 0usize;
        for _ in 0..n {
            for &i in rng.k_subset(&mut scratch, k) {
                if stamp[i] != trial {
                    stamp[i] = trial;
                    union += 1;
                }
            }
        }
        let u = union as f64;
        sum += u;
        sum_sq += u * u;
    }
    let t = trials as f64;
    let mean = sum / t;
    let stderr = if trials > 1 {
        let var = ((sum_sq - t * mean * mean) / (t - 1.0)).max(0.0);
        (var / t).sqrt()
    } else {
        0.0
    };
    Ok(MonteCarloEstimate {
        mean,
        stderr,
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn additive_hand_instance() {
        let v = VoteVector::new(vec![0.64, 0.24, 0.24, 0.64]);
        let (c, mass) = exhaustive_additive_coreset(&v, 2).unwrap();
        assert_eq!(c.members(), &[0, 3]);
        assert!((mass - 1.28).abs() < 1e-12);
    }

    #[test]
    fn additive_full_size_and_ties() {
        let v = VoteVector::new(vec![0.1, 0.2, 0.3]);
        assert_eq!(
            exhaustive_additive_coreset(&v, 3).unwrap().0,
            Coreset::full(3)
        );
        let tied = VoteVector::new(vec![0.5, 0.5, 0.5, 0.1]);
        assert_eq!(
            exhaustive_additive_coreset(&tied, 2).unwrap().0.members(),
            &[0, 1]
        );
    }

    #[test]
    fn additive_guards() {
        let big = VoteVector::new(vec![0.0; 21]);
        assert!(matches!(
            exhaustive_additive_coreset(&big, 2),
            Err(Error::OracleGuard { limit: 20, .. })
        ));
        assert!(exhaustive_additive_coreset(&VoteVector::new(vec![1.0; 3]), 4).is_err());
        assert!(exhaustive_additive_coreset(&VoteVector::new(vec![1.0; 3]), 0).is_err());
    }

    #[test]
    fn reconstruction_guards() {
        let cfg = PoolConfig::new(13, 2).with_hidden_dim(2);
        let block = RouterBlock::from_rows(&[vec![0.0; 13]]).unwrap();
        let bank = ExpertBank::new(&cfg, 1, 0);
        assert!(matches!(
            exhaustive_reconstruction_coreset(&block, &cfg, &bank, 2),
            Err(Error::OracleGuard {
                name: "experts_total",
                ..
            })
        ));
        let cfg = PoolConfig::new(4, 2).with_hidden_dim(2);
        let block = RouterBlock::from_rows(&vec![vec![0.0; 4]; 9]).unwrap();
        let bank = ExpertBank::new(&cfg, 9, 0);
        assert!(matches!(
            exhaustive_reconstruction_coreset(&block, &cfg, &bank, 2),
            Err(Error::OracleGuard {
                name: "block_size",
                ..
            })
        ));
    }

    #[test]
    fn reconstruction_finds_zero_loss_cover() {
        let cfg = PoolConfig::new(6, 1).with_hidden_dim(4);
        // both tokens prefer expert 4
        let block = RouterBlock::from_rows(&[
            vec![0.0, 0.1, 0.2, 0.0, 3.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0, 2.0, 0.5],
        ])
        .unwrap();
        let bank = ExpertBank::new(&cfg, 2, 5);
        let (c, loss) = exhaustive_reconstruction_coreset(&block, &cfg, &bank, 1).unwrap();
        assert_eq!(c.members(), &[4]);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn mc_single_token_is_exact() {
        let e = mc_unique_experts(256, 8, 1, 1000, 3).unwrap();
        assert_eq!(e.mean, 8.0);
        assert_eq!(e.stderr, 0.0);
    }

    #[test]
    fn mc_saturates() {
        let e = mc_unique_experts(64, 8, 64, 2000, 4).unwrap();
        assert!(e.mean > 63.5 && e.mean <= 64.0);
    }

    #[test]
    fn mc_rejects_zero_trials() {
        assert!(mc_unique_experts(8, 2, 2, 0, 0).is_err());
    }
}
