//! Strategies against exhaustive optima on small pools.
//!
//! cargo run --release --example oracle_gap

use expert_sharing::report::{oracle_gap_report, OracleGapOptions};
use expert_sharing::{PoolConfig, SynthParams};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(12, 2).with_hidden_dim(16);
    let opts = OracleGapOptions {
        m_core: 3,
        instances: 50,
        block_size: 8,
        synth: SynthParams::shared_bias(0.5),
        seed: 42,
        bank_seed: 7,
    };
    let r = oracle_gap_report(&cfg, &opts, None)?;
    let s = &r.summary;
    println!("instances:               {}", s.instances);
    println!("vote mass optimal:       {}", s.mass_exact);
    let seq_size = r.rows.iter().map(|x| x.seq_size as f64).sum::<f64>() / r.rows.len() as f64;
    println!("coreset size vote/seq:   {} / {seq_size:.2}", opts.m_core);
    println!(
        "mean loss vote/seq/opt:  {:.4} / {:.4} / {:.4}",
        s.mean_vote_loss, s.mean_seq_loss, s.mean_oracle_loss
    );
    println!(
        "mean recall vote/seq:    {:.4} / {:.4}",
        s.mean_vote_recall, s.mean_seq_recall
    );
    println!(
        "vote lower loss than seq on {} instances",
        s.vote_beats_seq_loss
    );
    Ok(())
}
