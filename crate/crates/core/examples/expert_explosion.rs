//! Growth of unique experts with block size: closed form, Monte Carlo, and
//! a correlated trace.
//!
//! cargo run --release --example expert_explosion

use expert_sharing::report::explosion_report;
use expert_sharing::{gen_trace, PoolConfig, SynthParams};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(256, 8);
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 1, 50, 64, 42)?;
    let report = explosion_report(&cfg, &[1, 2, 4, 8, 16, 32, 64], 20_000, 1, Some(&trace))?;
    print!("{}", report.to_csv());
    Ok(())
}
