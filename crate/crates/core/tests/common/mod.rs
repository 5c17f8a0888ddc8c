#![allow(dead_code)]

use expert_sharing::{Rng, RouterBlock};

pub fn gaussian_block(n: usize, m: usize, seed: u64) -> RouterBlock {
    let mut rng = Rng::new(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.normal()).collect())
        .collect();
    RouterBlock::from_rows(&rows).unwrap()
}

pub fn uniform_block(n: usize, m: usize, seed: u64) -> RouterBlock {
    let mut rng = Rng::new(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..m).map(|_| rng.uniform()).collect())
        .collect();
    RouterBlock::from_rows(&rows).unwrap()
}

/// Softmax written out longhand, without max subtraction.
pub fn naive_softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Top-k indices by repeated linear scans, lowest index on ties.
pub fn scan_top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut taken = vec![false; values.len()];
    let mut out = Vec::new();
    for _ in 0..k {
        let mut best: Option<usize> = None;
        for i in 0..values.len() {
            if taken[i] {
                continue;
            }
            if best.is_none() || values[i] > values[best.unwrap()] {
                best = Some(i);
            }
        }
        let b = best.unwrap();
        taken[b] = true;
        out.push(b);
    }
    out
}
