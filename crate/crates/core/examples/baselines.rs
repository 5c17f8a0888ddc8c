//! Per-token skipping baselines next to vanilla routing.
//!
//! cargo run --example baselines

use expert_sharing::{
    baseline_route, gen_trace, moe_latency, vanilla_route, BaselineParams, ImportanceScore,
    LatencyParams, PoolConfig, SynthParams,
};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(256, 8);
    let params = LatencyParams::default();
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 1, 32, 42)?;
    let block = &trace.records[0].block;

    let vanilla = moe_latency(&vanilla_route(block, &cfg)?, &cfg, &params)?;
    println!(
        "vanilla       unique {:3}  latency {:.1}",
        vanilla.unique_experts, vanilla.latency
    );

    let methods = [
        ("topk:4", BaselineParams::TopkReduce { k_reduced: 4 }),
        ("naee:0.6", BaselineParams::Naee { beta: 0.6 }),
        (
            "mcmoe:0.6:0.25",
            BaselineParams::McMoe {
                beta: 0.6,
                important_fraction: 0.25,
                score: ImportanceScore::MaxGate,
            },
        ),
    ];
    for (name, p) in methods {
        let r = moe_latency(&baseline_route(block, &cfg, &p)?, &cfg, &params)?;
        println!(
            "{name:<13} unique {:3}  latency {:.1}",
            r.unique_experts, r.latency
        );
    }
    Ok(())
}
