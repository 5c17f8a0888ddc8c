mod common;

use expert_sharing::cli::{config_to_string, load_config};
use expert_sharing::metrics::{selection_recall, ReconstructionContext};
use expert_sharing::oracle::exhaustive_additive_coreset;
use expert_sharing::sharing::{des_vote_coreset_sized, vote_vector};
use expert_sharing::{
    baseline_route, constrained_route, coreset_budget, coreset_latency_bound, cosine,
    des_seq_coreset, des_vote_coreset, expected_unique_experts, fused_vote_pipeline, moe_latency,
    topk_recall, unique_experts, vanilla_route, BaselineParams, Coreset, ExpertBank,
    GateActivation, ImportanceScore, LatencyParams, PoolConfig, Rng, RouterBlock, VoteSource,
};
use proptest::prelude::*;

/// (block, cfg) with distinct logits in every row.
fn instance(max_n: usize, max_m: usize) -> impl Strategy<Value = (RouterBlock, PoolConfig)> {
    (1..=max_n, 2..=max_m, any::<u64>(), any::<bool>())
        .prop_flat_map(|(n, m, seed, sigmoid)| (Just(n), Just(m), 1..=m, Just(seed), Just(sigmoid)))
        .prop_map(|(n, m, k, seed, sigmoid)| {
            let mut rng = Rng::new(seed);
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let mut r: Vec<f64> = (0..m)
                        .map(|i| i as f64 * 0.37 + rng.uniform() * 0.1)
                        .collect();
                    for i in (1..m).rev() {
                        r.swap(i, rng.below(i + 1));
                    }
                    r.iter().map(|v| v * 2.0 - 3.0).collect()
                })
                .collect();
            let act = if sigmoid {
                GateActivation::Sigmoid
            } else {
                GateActivation::Softmax
            };
            (
                RouterBlock::from_rows(&rows).unwrap(),
                PoolConfig::new(m, k).with_activation(act),
            )
        })
}

fn permuted(block: &RouterBlock, perm: &[usize]) -> RouterBlock {
    // column perm[i] of the new block holds old column i
    let rows: Vec<Vec<f64>> = (0..block.block_size())
        .map(|t| {
            let mut r = vec![0.0; perm.len()];
            for (i, &p) in perm.iter().enumerate() {
                r[p] = block.row(t)[i];
            }
            r
        })
        .collect();
    RouterBlock::from_rows(&rows).unwrap()
}

fn permutation(m: usize, seed: u64) -> Vec<usize> {
    let mut rng = Rng::new(seed);
    let mut p: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        p.swap(i, rng.below(i + 1));
    }
    p
}

fn min_vote_gap(votes: &[f64]) -> f64 {
    let mut v = votes.to_vec();
    v.sort_by(|a, b| b.total_cmp(a));
    v.windows(2)
        .map(|w| w[0] - w[1])
        .fold(f64::INFINITY, f64::min)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn topk_is_permutation_equivariant((block, cfg) in instance(6, 24), seed in any::<u64>()) {
        let perm = permutation(cfg.experts_total, seed);
        let a = vanilla_route(&block, &cfg).unwrap();
        let b = vanilla_route(&permuted(&block, &perm), &cfg).unwrap();
        for (ta, tb) in a.tokens.iter().zip(&b.tokens) {
            let mapped: Vec<usize> = ta.selected.iter().map(|&i| perm[i]).collect();
            prop_assert_eq!(&mapped, &tb.selected);
            for (x, y) in ta.gates.iter().zip(&tb.gates) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gates_sum_to_one((block, cfg) in instance(8, 32)) {
        let v = vanilla_route(&block, &cfg).unwrap();
        for t in &v.tokens {
            prop_assert!((t.gate_sum() - 1.0).abs() <= 1e-9);
        }
        let u = unique_experts(&v).len();
        prop_assert!(u >= cfg.top_k && u <= cfg.experts_total.min(block.block_size() * cfg.top_k));
    }

    #[test]
    fn softmax_shift_invariance((block, cfg) in instance(6, 20), shifts in prop::collection::vec(-40.0f64..40.0, 6)) {
        let cfg = cfg.with_activation(GateActivation::Softmax);
        let rows: Vec<Vec<f64>> = (0..block.block_size())
            .map(|t| block.row(t).iter().map(|v| v + shifts[t]).collect())
            .collect();
        let shifted = RouterBlock::from_rows(&rows).unwrap();
        let a = vanilla_route(&block, &cfg).unwrap();
        let b = vanilla_route(&shifted, &cfg).unwrap();
        for (ta, tb) in a.tokens.iter().zip(&b.tokens) {
            prop_assert_eq!(&ta.selected, &tb.selected);
            for (x, y) in ta.gates.iter().zip(&tb.gates) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
        for k in 1..=cfg.top_k {
            prop_assert_eq!(des_seq_coreset(&block, &cfg, k).unwrap(), des_seq_coreset(&shifted, &cfg, k).unwrap());
        }
        let votes = vote_vector(&block, &cfg, VoteSource::Activated).unwrap();
        prop_assume!(min_vote_gap(votes.votes()) > 1e-9);
        for m_core in 1..=cfg.experts_total {
            let ca = des_vote_coreset_sized(&block, &cfg, m_core, VoteSource::Activated).unwrap().0;
            let cb = des_vote_coreset_sized(&shifted, &cfg, m_core, VoteSource::Activated).unwrap().0;
            prop_assert_eq!(&ca, &cb);
            let ra = constrained_route(&block, &cfg, &ca).unwrap();
            let rb = constrained_route(&shifted, &cfg, &cb).unwrap();
            for (ta, tb) in ra.tokens.iter().zip(&rb.tokens) {
                prop_assert_eq!(&ta.selected, &tb.selected);
            }
        }
    }

    #[test]
    fn coreset_budgets((block, cfg) in instance(8, 40), beta in 0.01f64..=1.0, k_frac in 0.0f64..1.0) {
        let m = cfg.experts_total;
        prop_assume!(coreset_budget(beta, m) >= 1);
        let (c, _) = des_vote_coreset(&block, &cfg, beta).unwrap();
        prop_assert_eq!(c.len(), (beta * m as f64 + 1e-9).floor() as usize);
        let k = 1 + (k_frac * cfg.top_k as f64) as usize;
        let k = k.min(cfg.top_k);
        let s = des_seq_coreset(&block, &cfg, k).unwrap();
        prop_assert!(s.len() >= k && s.len() <= m.min(block.block_size() * k));
    }

    #[test]
    fn vote_maximizes_additive_mass((block, cfg) in instance(6, 14), m_frac in 0.0f64..1.0) {
        let m = cfg.experts_total;
        let m_core = 1 + ((m - 1) as f64 * m_frac) as usize;
        let (c, votes) = des_vote_coreset_sized(&block, &cfg, m_core, VoteSource::Activated).unwrap();
        let (_, best) = exhaustive_additive_coreset(&votes, m_core).unwrap();
        prop_assert_eq!(votes.retained_mass(&c), best);
    }

    #[test]
    fn nesting_and_monotone_recall((block, cfg) in instance(8, 32)) {
        let vanilla = vanilla_route(&block, &cfg).unwrap();
        let mut prev: Option<(Coreset, f64, f64)> = None;
        for m_core in 1..=cfg.experts_total {
            let (c, votes) = des_vote_coreset_sized(&block, &cfg, m_core, VoteSource::Activated).unwrap();
            let recall = topk_recall(&vanilla, &c);
            let mass = votes.retained_mass(&c);
            if let Some((p, pr, pm)) = &prev {
                prop_assert!(p.is_subset_of(&c));
                prop_assert!(recall >= *pr);
                prop_assert!(mass >= *pm);
            }
            prev = Some((c, recall, mass));
        }
        prop_assert_eq!(prev.unwrap().1, 1.0);
        let mut prev: Option<(Coreset, f64)> = None;
        for k in 1..=cfg.top_k {
            let c = des_seq_coreset(&block, &cfg, k).unwrap();
            let recall = topk_recall(&vanilla, &c);
            if let Some((p, pr)) = &prev {
                prop_assert!(p.is_subset_of(&c));
                prop_assert!(recall >= *pr);
            }
            prev = Some((c, recall));
        }
    }

    #[test]
    fn constrained_routing_consistency((block, cfg) in instance(8, 24), mask_seed in any::<u64>()) {
        let mut rng = Rng::new(mask_seed);
        let mask: Vec<bool> = (0..cfg.experts_total).map(|_| rng.uniform() < 0.6).collect();
        let c = Coreset::from_mask(&mask);
        prop_assume!(!c.is_empty());
        let vanilla = vanilla_route(&block, &cfg).unwrap();
        let routed = constrained_route(&block, &cfg, &c).unwrap();
        for (v, r) in vanilla.tokens.iter().zip(&routed.tokens) {
            prop_assert!(r.selected.iter().all(|&i| c.contains(i)));
            prop_assert_eq!(r.len(), cfg.top_k.min(c.len()));
            if v.selected.iter().all(|&i| c.contains(i)) {
                prop_assert_eq!(&v.selected, &r.selected);
                for (x, y) in v.gates.iter().zip(&r.gates) {
                    prop_assert!((x - y).abs() <= 1e-9);
                }
            }
        }
        prop_assert_eq!(selection_recall(&vanilla, &routed).unwrap(), topk_recall(&vanilla, &c));
    }

    #[test]
    fn fused_equals_composed((block, cfg) in instance(16, 64), beta in 0.01f64..=1.0) {
        prop_assume!(coreset_budget(beta, cfg.experts_total) >= 1);
        let (c1, v1) = des_vote_coreset(&block, &cfg, beta).unwrap();
        let (c2, v2) = fused_vote_pipeline(&block, &cfg, beta).unwrap();
        prop_assert_eq!(c1, c2);
        for (a, b) in v1.votes().iter().zip(v2.votes()) {
            prop_assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn baselines_only_drop((block, cfg) in instance(8, 24), beta in 0.001f64..0.999, frac in 0.0f64..=1.0, neg in any::<bool>()) {
        let vanilla = vanilla_route(&block, &cfg).unwrap();
        let vu = unique_experts(&vanilla);
        let score = if neg { ImportanceScore::NegEntropy } else { ImportanceScore::MaxGate };
        let k_reduced = 1 + ((cfg.top_k - 1) as f64 * frac) as usize;
        for params in [
            BaselineParams::TopkReduce { k_reduced },
            BaselineParams::Naee { beta },
            BaselineParams::McMoe { beta, important_fraction: frac, score },
        ] {
            let r = baseline_route(&block, &cfg, &params).unwrap();
            for (v, b) in vanilla.tokens.iter().zip(&r.tokens) {
                prop_assert!(!b.is_empty());
                prop_assert!(b.selected.iter().all(|i| v.selected.contains(i)));
                prop_assert!((b.gate_sum() - 1.0).abs() <= 1e-9);
            }
            prop_assert!(unique_experts(&r).is_subset_of(&vu));
        }
    }

    #[test]
    fn latency_bound_dominates((block, cfg) in instance(8, 32), beta in 0.01f64..=1.0, a in 0.0f64..2.0, b in 0.0f64..5.0) {
        prop_assume!(coreset_budget(beta, cfg.experts_total) >= 1);
        let params = LatencyParams::new(a, b).unwrap();
        let (c, _) = des_vote_coreset(&block, &cfg, beta).unwrap();
        let r = constrained_route(&block, &cfg, &c).unwrap();
        let report = moe_latency(&r, &cfg, &params).unwrap();
        prop_assert!(report.latency <= coreset_latency_bound(&c, block.block_size(), cfg.top_k, &params) + 1e-12);
    }

    #[test]
    fn expected_unique_is_monotone(m in 1usize..300, n in 1usize..100) {
        for k in 1..=m.min(16) {
            let e = expected_unique_experts(m, k, n);
            prop_assert!(e <= m as f64 + 1e-9);
            prop_assert!(expected_unique_experts(m, k, n + 1) >= e);
            if k < m {
                prop_assert!(expected_unique_experts(m, k + 1, n) >= e);
            }
        }
    }

    #[test]
    fn recall_is_permutation_invariant((block, cfg) in instance(6, 20), seed in any::<u64>(), beta in 0.05f64..=1.0) {
        prop_assume!(coreset_budget(beta, cfg.experts_total) >= 1);
        let perm = permutation(cfg.experts_total, seed);
        let (c, _) = des_vote_coreset(&block, &cfg, beta).unwrap();
        let pc = Coreset::from_indices(c.members().iter().map(|&i| perm[i]), cfg.experts_total).unwrap();
        let r1 = topk_recall(&vanilla_route(&block, &cfg).unwrap(), &c);
        let r2 = topk_recall(&vanilla_route(&permuted(&block, &perm), &cfg).unwrap(), &pc);
        prop_assert_eq!(r1, r2);
    }

    #[test]
    fn zero_loss_iff_coreset_covers((block, cfg) in instance(6, 12), mask_seed in any::<u64>(), bank_seed in any::<u64>()) {
        let cfg = cfg.with_hidden_dim(6);
        let mut rng = Rng::new(mask_seed);
        let mask: Vec<bool> = (0..cfg.experts_total).map(|_| rng.uniform() < 0.7).collect();
        let c = Coreset::from_mask(&mask);
        prop_assume!(!c.is_empty());
        let bank = ExpertBank::new(&cfg, block.block_size(), bank_seed);
        let ctx = ReconstructionContext::new(&block, &cfg, &bank).unwrap();
        let covers = ctx.vanilla().tokens.iter().all(|t| t.selected.iter().all(|&i| c.contains(i)));
        let loss = ctx.loss(&c).unwrap().mean;
        prop_assert_eq!(loss <= 1e-12, covers, "loss {}", loss);
    }

    #[test]
    fn cosine_scale_invariant(v in prop::collection::vec(0.0f64..10.0, 1..40), scale in 1e-3f64..1e3) {
        prop_assume!(v.iter().any(|&x| x > 0.0));
        let w: Vec<f64> = v.iter().map(|x| x * scale).collect();
        prop_assert!((cosine(&v, &w).unwrap() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn config_file_round_trip(m in 1usize..1024, k_frac in 0.0f64..1.0, bytes in 1u64..u64::MAX, d in 1usize..512, sigmoid in any::<bool>()) {
        let k = 1 + ((m - 1) as f64 * k_frac) as usize;
        let act = if sigmoid { GateActivation::Sigmoid } else { GateActivation::Softmax };
        let cfg = PoolConfig::new(m, k).with_activation(act).with_bytes_per_expert(bytes).with_hidden_dim(d);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pool.json");
        std::fs::write(&path, config_to_string(&cfg)).unwrap();
        prop_assert_eq!(load_config(&path).unwrap(), cfg);
    }
}

#[test]
fn rng_streams_reproduce_10k_outputs() {
    let mut a = Rng::new(12345);
    let mut b = Rng::new(12345);
    for _ in 0..10_000 {
        assert_eq!(a.next_u64(), b.next_u64());
    }
}
