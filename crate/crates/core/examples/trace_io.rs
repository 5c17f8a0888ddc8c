//! Writing and reading router traces in both formats.
//!
//! cargo run --example trace_io

use expert_sharing::{gen_trace, read_trace, write_trace, PoolConfig, SynthParams};

fn main() -> expert_sharing::Result<()> {
    let dir = std::env::temp_dir().join("expert-sharing-example");
    std::fs::create_dir_all(&dir).map_err(|source| expert_sharing::Error::Io {
        path: dir.clone(),
        source,
    })?;

    let cfg = PoolConfig::new(64, 8);
    let trace = gen_trace(&cfg, &SynthParams::shared_bias(0.5), 4, 8, 32, 42)?;
    for name in ["trace.moet", "trace.jsonl"] {
        let path = dir.join(name);
        write_trace(&trace, &path)?;
        let back = read_trace(&path)?;
        let size = std::fs::metadata(&path).map(|m| m.len()).unwrap_or(0);
        println!(
            "{}: {} records, {size} bytes, identical: {}",
            path.display(),
            back.records.len(),
            back == trace
        );
    }
    Ok(())
}
