//! Expert hit-rate vectors of coreset routing compared with vanilla.
//!
//! cargo run --example hit_rate

use expert_sharing::metrics::activation_frequency_curve;
use expert_sharing::{
    des_run, gen_trace, hit_rate_cosine, vanilla_route, DesParams, HitRateVector, PoolConfig,
    SynthParams,
};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(64, 8);
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 200, 8, 42)?;
    let mut vanilla = HitRateVector::new(64);
    let mut vote = HitRateVector::new(64);
    let mut seq = HitRateVector::new(64);
    for block in trace.blocks() {
        vanilla.accumulate(&vanilla_route(block, &cfg)?, cfg.top_k)?;
        vote.accumulate(&des_run(block, &cfg, &DesParams::vote(0.4))?.1, cfg.top_k)?;
        seq.accumulate(&des_run(block, &cfg, &DesParams::seq(2))?.1, cfg.top_k)?;
    }
    println!(
        "cosine(vanilla, des-vote:0.4) = {:.4}",
        hit_rate_cosine(&vanilla, &vote)?
    );
    println!(
        "cosine(vanilla, des-seq:2)    = {:.4}",
        hit_rate_cosine(&vanilla, &seq)?
    );
    let head = |h: &HitRateVector| {
        activation_frequency_curve(h)
            .iter()
            .take(5)
            .map(|r| format!("{r:.3}"))
            .collect::<Vec<_>>()
    };
    println!("top-5 rates vanilla  {:?}", head(&vanilla));
    println!("top-5 rates des-vote {:?}", head(&vote));
    Ok(())
}
