//! Vanilla top-K routing of one block and the expert union it activates.
//!
//! cargo run --example gating

use expert_sharing::{
    activate, moe_forward, unique_experts, vanilla_route, ExpertBank, PoolConfig, RouterBlock,
};

fn main() -> expert_sharing::Result<()> {
    let cfg = PoolConfig::new(8, 2).with_hidden_dim(4);
    let block = RouterBlock::from_rows(&[
        vec![3.0, 2.0, 1.0, 0.0, -1.0, -1.0, -2.0, -3.0],
        vec![0.0, 0.5, 2.5, 2.0, 0.0, -1.0, 0.0, 0.0],
        vec![-1.0, 0.0, 0.0, 0.0, 1.0, 4.0, 0.0, 3.5],
    ])?;

    let gates = activate(&block, &cfg)?;
    println!("softmax of token 0: {:.4?}", gates.row(0));

    let routed = vanilla_route(&block, &cfg)?;
    for (t, r) in routed.tokens.iter().enumerate() {
        println!("token {t}: experts {:?} gates {:.4?}", r.selected, r.gates);
    }
    println!("unique experts: {:?}", unique_experts(&routed).members());

    let bank = ExpertBank::new(&cfg, block.block_size(), 7);
    let y = moe_forward(&routed, &bank)?;
    println!("output of token 0: {:.4}", y.row(0));
    Ok(())
}
