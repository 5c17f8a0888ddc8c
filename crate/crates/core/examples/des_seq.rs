//! Sequential coreset: the union of every token's top-k for k <= K.
//!
//! cargo run --example des_seq

use expert_sharing::{
    des_run, gen_trace, topk_recall, vanilla_route, DesParams, PoolConfig, SynthParams,
};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(256, 8);
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 1, 32, 42)?;
    let block = &trace.records[0].block;
    let vanilla = vanilla_route(block, &cfg)?;

    println!("k  coreset  recall");
    for k in 1..=cfg.top_k {
        let (coreset, _routed) = des_run(block, &cfg, &DesParams::seq(k))?;
        println!(
            "{k}  {:7}  {:.3}",
            coreset.len(),
            topk_recall(&vanilla, &coreset)
        );
    }
    Ok(())
}
