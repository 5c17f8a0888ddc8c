//! Analytic latency and memory of vanilla and coreset routing.
//!
//! cargo run --example latency_model

use expert_sharing::{
    coreset_latency_bound, des_run, gen_trace, moe_latency, vanilla_route, DesParams,
    LatencyParams, PoolConfig, SynthParams,
};

fn main() -> expert_sharing::Result<()> {
    let bytes_per_expert = (0.98e9f64 / 84.0).round() as u64;
    let cfg = PoolConfig::new(256, 8).with_bytes_per_expert(bytes_per_expert);
    let params = LatencyParams::new(0.1, 1.0)?;
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 1, 32, 42)?;
    let block = &trace.records[0].block;

    let v = moe_latency(&vanilla_route(block, &cfg)?, &cfg, &params)?;
    println!(
        "vanilla:        {} experts, latency {:.1}, {:.2} GB",
        v.unique_experts,
        v.latency,
        v.memory_bytes as f64 / 1e9
    );

    let (coreset, routed) = des_run(block, &cfg, &DesParams::vote(0.15))?;
    let d = moe_latency(&routed, &cfg, &params)?;
    println!(
        "des-vote:0.15:  {} experts, latency {:.1} (bound {:.1}), {:.2} GB",
        d.unique_experts,
        d.latency,
        coreset_latency_bound(&coreset, block.block_size(), cfg.top_k, &params),
        d.memory_bytes as f64 / 1e9
    );
    println!(
        "operational intensity proxy: {:.3e} vs {:.3e}",
        v.operational_intensity(&params),
        d.operational_intensity(&params)
    );
    Ok(())
}
