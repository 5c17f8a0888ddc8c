//! Shared coreset by weighted voting, constrained routing, and the fused
//! single-pass pipeline.
//!
//! cargo run --example des_vote

use expert_sharing::{
    constrained_route, des_vote_coreset, fused_vote_pipeline, gen_trace, topk_recall,
    unique_experts, vanilla_route, PoolConfig, SynthParams,
};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(256, 8);
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 1, 32, 42)?;
    let block = &trace.records[0].block;

    let vanilla = vanilla_route(block, &cfg)?;
    println!("vanilla: {} unique experts", unique_experts(&vanilla).len());

    for beta in [0.10, 0.15, 0.25] {
        let (coreset, votes) = des_vote_coreset(block, &cfg, beta)?;
        let routed = constrained_route(block, &cfg, &coreset)?;
        println!(
            "beta={beta}: coreset {} experts, {} used, recall {:.3}, retained vote mass {:.3} of {:.3}",
            coreset.len(),
            unique_experts(&routed).len(),
            topk_recall(&vanilla, &coreset),
            votes.retained_mass(&coreset),
            votes.total()
        );
        let (fused, _) = fused_vote_pipeline(block, &cfg, beta)?;
        assert_eq!(fused, coreset);
    }
    Ok(())
}
