//! Report builders behind the command-line tool.
//!
//! Every report renders to CSV (first line a `# expert-sharing <cmd> csv v1`
//! comment, LF endings, shortest round-trip decimals) and to JSON with a
//! `schema` field. Output depends only on the inputs, never on thread count.
//!
//! `topk_recall` and `recon_loss` are proxies for downstream accuracy:
//! recall is the fraction of each token's vanilla top-K that survives, loss
//! the relative squared error of the MoE output on a synthetic expert bank.

use std::fmt::{self, Display, Write as _};
use std::str::FromStr;

use ndarray::s;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{expected_unique_experts, moe_latency, LatencyParams};
use crate::baselines::{mcmoe_route, naee_route, topk_reduce_route};
use crate::error::{Error, Result};
use crate::gating::{unique_experts, vanilla_route, ExpertBank};
use crate::metrics::{selection_recall, topk_recall, ReconstructionContext};
use crate::oracle::{
    exhaustive_additive_coreset, exhaustive_reconstruction_coreset, mc_unique_experts,
};
use crate::rng::Rng;
use crate::sharing::{
    constrained_route, coreset_budget, des_seq_coreset, des_vote_coreset_sized, VoteSource,
};
use crate::trace::{gen_trace, SynthParams, TraceFile};
use crate::types::{Coreset, PoolConfig, RouterBlock, RoutingAssignment};

/// A routing method as written on the command line, e.g. `des-vote:0.15`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Vanilla,
    DesSeq { k: usize },
    DesVote { beta: f64 },
    TopkReduce { k: usize },
    Naee { beta: f64 },
    McMoe { beta: f64, fraction: f64 },
}

impl Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Vanilla => write!(f, "vanilla"),
            Method::DesSeq { k } => write!(f, "des-seq:{k}"),
            Method::DesVote { beta } => write!(f, "des-vote:{beta}"),
            Method::TopkReduce { k } => write!(f, "topk:{k}"),
            Method::Naee { beta } => write!(f, "naee:{beta}"),
            Method::McMoe { beta, fraction } => write!(f, "mcmoe:{beta}:{fraction}"),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let usage = || {
            Error::Usage(format!(
                "unknown method {s:?}; expected vanilla, des-seq:K, des-vote:BETA, topk:K, naee:BETA or mcmoe:BETA:FRACTION"
            ))
        };
        let int = |v: &str| v.parse::<usize>().map_err(|_| usage());
        let float = |v: &str| v.parse::<f64>().map_err(|_| usage());
        Ok(match parts.as_slice() {
            ["vanilla"] => Method::Vanilla,
            ["des-seq", k] => Method::DesSeq { k: int(k)? },
            ["des-vote", b] => Method::DesVote { beta: float(b)? },
            ["topk", k] => Method::TopkReduce { k: int(k)? },
            ["naee", b] => Method::Naee { beta: float(b)? },
            ["mcmoe", b, f] => Method::McMoe {
                beta: float(b)?,
                fraction: float(f)?,
            },
            _ => return Err(usage()),
        })
    }
}

/// Coreset (for the sharing strategies) and the routing it induces.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub coreset: Option<Coreset>,
    pub assign: RoutingAssignment,
}

pub fn apply_method(
    block: &RouterBlock,
    cfg: &PoolConfig,
    method: &Method,
) -> Result<MethodOutcome> {
    let with_coreset = |coreset: Coreset| -> Result<MethodOutcome> {
        let assign = constrained_route(block, cfg, &coreset)?;
        Ok(MethodOutcome {
            coreset: Some(coreset),
            assign,
        })
    };
    let plain = |assign| {
        Ok(MethodOutcome {
            coreset: None,
            assign,
        })
    };
    match *method {
        Method::Vanilla => plain(vanilla_route(block, cfg)?),
        Method::DesSeq { k } => with_coreset(des_seq_coreset(block, cfg, k)?),
        Method::DesVote { beta } => {
            if !(beta > 0.0 && beta <= 1.0) {
                return Err(Error::config("0 < beta <= 1", format!("beta={beta}")));
            }
            let m_core = coreset_budget(beta, cfg.experts_total);
            with_coreset(des_vote_coreset_sized(block, cfg, m_core, VoteSource::Activated)?.0)
        }
        Method::TopkReduce { k } => plain(topk_reduce_route(block, cfg, k)?),
        Method::Naee { beta } => plain(naee_route(block, cfg, beta)?),
        Method::McMoe { beta, fraction } => plain(mcmoe_route(block, cfg, beta, fraction)?),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn mean_opt(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Option<Vec<f64>> = values.collect();
    v.filter(|v| !v.is_empty()).map(|v| mean(v.into_iter()))
}

/// Options shared by `run` and `sweep`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub latency: LatencyParams,
    /// Seed of the synthetic expert bank; `None` skips reconstruction loss.
    pub bank_seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub step: u32,
    pub layer: u32,
    pub method: String,
    pub coreset_size: usize,
    pub unique_experts: usize,
    pub selections: usize,
    pub latency: f64,
    pub memory_bytes: u64,
    pub topk_recall: f64,
    pub recon_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunAggregate {
    pub method: String,
    pub coreset_size: f64,
    pub unique_experts: f64,
    pub selections: f64,
    pub latency: f64,
    pub memory_bytes: f64,
    pub topk_recall: f64,
    pub recon_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema: String,
    pub rows: Vec<RunRow>,
    pub aggregate: RunAggregate,
}

fn bank_for(cfg: &PoolConfig, n: usize, seed: u64, record: usize) -> ExpertBank {
    ExpertBank::new(cfg, n, Rng::derived(seed, record as u64).next_u64())
}

fn evaluate_block(
    block: &RouterBlock,
    cfg: &PoolConfig,
    method: &Method,
    opts: &EvalOptions,
    record: usize,
) -> Result<(
    MethodOutcome,
    crate::analysis::TrafficReport,
    f64,
    Option<f64>,
)> {
    let outcome = apply_method(block, cfg, method)?;
    let traffic = moe_latency(&outcome.assign, cfg, &opts.latency)?;
    let vanilla = vanilla_route(block, cfg)?;
    let recall = match &outcome.coreset {
        Some(c) => topk_recall(&vanilla, c),
        None => selection_recall(&vanilla, &outcome.assign)?,
    };
    let loss = match opts.bank_seed {
        Some(seed) => {
            let bank = bank_for(cfg, block.block_size(), seed, record);
            let ctx = ReconstructionContext::new(block, cfg, &bank)?;
            Some(ctx.loss_of_assignment(&outcome.assign)?.mean)
        }
        None => None,
    };
    Ok((outcome, traffic, recall, loss))
}

/// One row per record of `trace` plus a mean row.
pub fn run_report(
    trace: &TraceFile,
    cfg: &PoolConfig,
    method: &Method,
    opts: &EvalOptions,
) -> Result<RunReport> {
    let name = method.to_string();
    let rows = trace
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let (outcome, traffic, recall, loss) = evaluate_block(&r.block, cfg, method, opts, i)?;
            Ok(RunRow {
                step: r.step,
                layer: r.layer,
                method: name.clone(),
                coreset_size: outcome
                    .coreset
                    .as_ref()
                    .map_or(traffic.unique_experts, Coreset::len),
                unique_experts: traffic.unique_experts,
                selections: traffic.total_selections,
                latency: traffic.latency,
                memory_bytes: traffic.memory_bytes,
                topk_recall: recall,
                recon_loss: loss,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aggregate = RunAggregate {
        method: name,
        coreset_size: mean(rows.iter().map(|r| r.coreset_size as f64)),
        unique_experts: mean(rows.iter().map(|r| r.unique_experts as f64)),
        selections: mean(rows.iter().map(|r| r.selections as f64)),
        latency: mean(rows.iter().map(|r| r.latency)),
        memory_bytes: mean(rows.iter().map(|r| r.memory_bytes as f64)),
        topk_recall: mean(rows.iter().map(|r| r.topk_recall)),
        recon_loss: mean_opt(rows.iter().map(|r| r.recon_loss)),
    };
    Ok(RunReport {
        schema: "expert-sharing.run.v1".into(),
        rows,
        aggregate,
    })
}

impl RunReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# expert-sharing run csv v1 (topk_recall and recon_loss are accuracy proxies)\n",
        );
        out.push_str("step,layer,method,coreset_size,unique_experts,selections,latency,memory_bytes,topk_recall,recon_loss\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.step,
                r.layer,
                r.method,
                r.coreset_size,
                r.unique_experts,
                r.selections,
                r.latency,
                r.memory_bytes,
                r.topk_recall,
                fmt_opt(r.recon_loss)
            );
        }
        let a = &self.aggregate;
        let _ = writeln!(
            out,
            "mean,,{},{},{},{},{},{},{},{}",
            a.method,
            a.coreset_size,
            a.unique_experts,
            a.selections,
            a.latency,
            a.memory_bytes,
            a.topk_recall,
            fmt_opt(a.recon_loss)
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Parameter family scanned by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepFamily {
    DesVote,
    DesSeq,
    TopkReduce,
    Naee,
}

impl FromStr for SweepFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "des-vote" => SweepFamily::DesVote,
            "des-seq" => SweepFamily::DesSeq,
            "topk" => SweepFamily::TopkReduce,
            "naee" => SweepFamily::Naee,
            _ => {
                return Err(Error::Usage(format!(
                    "unknown sweep strategy {s:?}; expected des-vote, des-seq, topk or naee"
                )))
            }
        })
    }
}

impl SweepFamily {
    pub fn method(self, value: f64) -> Result<Method> {
        let int = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::config(
                    "integer grid value >= 1",
                    format!("value={value}"),
                ))
            }
        };
        Ok(match self {
            SweepFamily::DesVote => Method::DesVote { beta: value },
            SweepFamily::DesSeq => Method::DesSeq { k: int()? },
            SweepFamily::TopkReduce => Method::TopkReduce { k: int()? },
            SweepFamily::Naee => Method::Naee { beta: value },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub method: String,
    pub param: f64,
    pub coreset_size: f64,
    pub unique_experts: f64,
    pub topk_recall: f64,
    pub recon_loss: Option<f64>,
    pub latency: f64,
    pub memory_bytes: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub schema: String,
    pub rows: Vec<SweepRow>,
}

/// Means over every record of `trace`, one row per grid value, ascending.
pub fn sweep_report(
    trace: &TraceFile,
    cfg: &PoolConfig,
    family: SweepFamily,
    grid: &[f64],
    opts: &EvalOptions,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::Usage("sweep grid is empty".into()));
    }
    let mut rows = grid
        .par_iter()
        .map(|&value| {
            let method = family.method(value)?;
            let run = run_report(trace, cfg, &method, opts)?;
            let a = run.aggregate;
            Ok(SweepRow {
                method: method.to_string(),
                param: value,
                coreset_size: a.coreset_size,
                unique_experts: a.unique_experts,
                topk_recall: a.topk_recall,
                recon_loss: a.recon_loss,
                latency: a.latency,
                memory_bytes: a.memory_bytes,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.param.total_cmp(&b.param));
    rows.dedup_by(|a, b| a.param == b.param);
    Ok(SweepReport {
        schema: "expert-sharing.sweep.v1".into(),
        rows,
    })
}

impl SweepReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# expert-sharing sweep csv v1 (topk_recall and recon_loss are accuracy proxies)\n",
        );
        out.push_str("method,param,coreset_size,unique_experts,topk_recall,recon_loss,latency,memory_bytes\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.method,
                r.param,
                r.coreset_size,
                r.unique_experts,
                r.topk_recall,
                fmt_opt(r.recon_loss),
                r.latency,
                r.memory_bytes
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionRow {
    pub n: usize,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    /// Mean vanilla unique experts over the first `n` tokens of each trace
    /// block; absent without a trace or when `n` exceeds its block size.
    pub empirical: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplosionReport {
    pub schema: String,
    pub experts_total: usize,
    pub top_k: usize,
    pub trials: usize,
    pub rows: Vec<ExplosionRow>,
}

/// Unique-expert growth with block size: closed form, Monte Carlo, and
/// optionally the empirical mean over `trace`.
pub fn explosion_report(
    cfg: &PoolConfig,
    ns: &[usize],
    trials: usize,
    seed: u64,
    trace: Option<&TraceFile>,
) -> Result<ExplosionReport> {
    let cfg = cfg.clone().validate()?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(Error::config("block sizes >= 1", format!("{ns:?}")));
    }
    if let Some(t) = trace {
        let h = &t.header;
        if (h.experts_total as usize, h.top_k as usize) != (cfg.experts_total, cfg.top_k) {
            return Err(Error::config(
                "trace matches experts_total and top_k",
                format!(
                    "trace has M={}, K={}; requested M={}, K={}",
                    h.experts_total, h.top_k, cfg.experts_total, cfg.top_k
                ),
            ));
        }
    }
    let mut sorted = ns.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let rows = sorted
        .par_iter()
        .map(|&n| {
            let mc_seed = Rng::derived(seed, n as u64).next_u64();
            let mc = mc_unique_experts(cfg.experts_total, cfg.top_k, n, trials, mc_seed)?;
            let empirical = match trace {
                Some(t) if n <= t.header.block_size as usize => {
                    let sizes = t
                        .blocks()
                        .map(|b| {
                            let head = RouterBlock::new(b.logits().slice(s![..n, ..]).to_owned())?;
                            Ok(unique_experts(&vanilla_route(&head, &cfg)?).len() as f64)
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Some(mean(sizes.into_iter()))
                }
                _ => None,
            };
            Ok(ExplosionRow {
                n,
                closed_form: expected_unique_experts(cfg.experts_total, cfg.top_k, n),
                mc_mean: mc.mean,
                mc_stderr: mc.stderr,
                empirical,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplosionReport {
        schema: "expert-sharing.explosion.v1".into(),
        experts_total: cfg.experts_total,
        top_k: cfg.top_k,
        trials,
        rows,
    })
}

impl ExplosionReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("# expert-sharing explosion csv v1\n");
        out.push_str("n,closed_form,mc_mean,mc_stderr,empirical\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.n,
                r.closed_form,
                r.mc_mean,
                r.mc_stderr,
                fmt_opt(r.empirical)
            );
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGapRow {
    pub instance: usize,
    pub m_core: usize,
    pub vote_loss: f64,
    pub vote_recall: f64,
    /// Largest `k` whose sequential union fits in `m_core` (at least 1).
    pub seq_k: usize,
    pub seq_size: usize,
    pub seq_loss: f64,
    pub seq_recall: f64,
    /// Exhaustive optimum at the vote coreset's size.
    pub oracle_loss: f64,
    /// Exhaustive optimum at the sequential coreset's size.
    pub oracle_loss_seq_size: f64,
    pub vote_mass: f64,
    pub oracle_mass: f64,
    /// `"exact"` when the vote coreset's retained mass equals the additive
    /// optimum bit for bit.
    pub mass_check: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGapSummary {
    pub instances: usize,
    pub mass_exact: usize,
    pub oracle_bounds_vote: usize,
    pub oracle_bounds_seq: usize,
    pub vote_beats_seq_loss: usize,
    pub vote_beats_seq_recall: usize,
    pub mean_vote_loss: f64,
    pub mean_seq_loss: f64,
    pub mean_oracle_loss: f64,
    pub mean_vote_recall: f64,
    pub mean_seq_recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleGapReport {
    pub schema: String,
    pub rows: Vec<OracleGapRow>,
    pub summary: OracleGapSummary,
}

/// Settings for [`oracle_gap_report`].
#[derive(Debug, Clone, PartialEq)]
pub struct OracleGapOptions {
    pub m_core: usize,
    pub instances: usize,
    pub block_size: usize,
    pub synth: SynthParams,
    pub seed: u64,
    pub bank_seed: u64,
}

/// Compares DES-Vote and size-matched DES-Seq with the exhaustive oracles on
/// one small instance.
pub fn oracle_gap_instance(
    block: &RouterBlock,
    cfg: &PoolConfig,
    bank: &ExpertBank,
    m_core: usize,
    instance: usize,
) -> Result<OracleGapRow> {
    let ctx = ReconstructionContext::new(block, cfg, bank)?;
    let (vote_core, votes) = des_vote_coreset_sized(block, cfg, m_core, VoteSource::Activated)?;
    let vanilla = ctx.vanilla().clone();

    let mut seq_k = 1;
    let mut seq_core = des_seq_coreset(block, cfg, 1)?;
    for k in 2..=cfg.top_k {
        let c = des_seq_coreset(block, cfg, k)?;
        if c.len() > m_core {
            break;
        }
        seq_k = k;
        seq_core = c;
    }

    let vote_loss = ctx.loss(&vote_core)?.mean;
    let seq_loss = ctx.loss(&seq_core)?.mean;
    let (_, oracle_loss) = exhaustive_reconstruction_coreset(block, cfg, bank, m_core)?;
    let oracle_loss_seq_size = if seq_core.len() == m_core {
        oracle_loss
    } else {
        exhaustive_reconstruction_coreset(block, cfg, bank, seq_core.len())?.1
    };
    let (_, oracle_mass) = exhaustive_additive_coreset(&votes, m_core)?;
    let vote_mass = votes.retained_mass(&vote_core);
    Ok(OracleGapRow {
        instance,
        m_core,
        vote_loss,
        vote_recall: topk_recall(&vanilla, &vote_core),
        seq_k,
        seq_size: seq_core.len(),
        seq_loss,
        seq_recall: topk_recall(&vanilla, &seq_core),
        oracle_loss,
        oracle_loss_seq_size,
        vote_mass,
        oracle_mass,
        mass_check: if vote_mass == oracle_mass {
            "exact"
        } else {
            "mismatch"
        }
        .into(),
    })
}

/// Runs [`oracle_gap_instance`] over generated blocks, or over the leading
/// `experts_total` columns and `block_size` rows of the records in `trace`.
pub fn oracle_gap_report(
    cfg: &PoolConfig,
    opts: &OracleGapOptions,
    trace: Option<&TraceFile>,
) -> Result<OracleGapReport> {
    let cfg = cfg.clone().validate()?;
    if opts.instances == 0 {
        return Err(Error::config("instances >= 1", "instances is 0"));
    }
    let blocks: Vec<RouterBlock> = match trace {
        Some(t) => {
            let (rows, cols) = (opts.block_size, cfg.experts_total);
            if rows > t.header.block_size as usize || cols > t.header.experts_total as usize {
                return Err(Error::config(
                    "sub-instance fits inside the trace blocks",
                    format!(
                        "requested {rows}x{cols}, trace blocks are {}x{}",
                        t.header.block_size, t.header.experts_total
                    ),
                ));
            }
            t.blocks()
                .take(opts.instances)
                .map(|b| RouterBlock::new(b.logits().slice(s![..rows, ..cols]).to_owned()))
                .collect::<Result<_>>()?
        }
        None => gen_trace(
            &cfg,
            &opts.synth,
            1,
            opts.instances,
            opts.block_size,
            opts.seed,
        )?
        .records
        .into_iter()
        .map(|r| r.block)
        .collect(),
    };
    let rows = blocks
        .par_iter()
        .enumerate()
        .map(|(i, block)| {
            let bank = bank_for(&cfg, block.block_size(), opts.bank_seed, i);
            oracle_gap_instance(block, &cfg, &bank, opts.m_core, i)
        })
        .collect::<Result<Vec<_>>>()?;
    let count = |f: &dyn Fn(&OracleGapRow) -> bool| rows.iter().filter(|r| f(r)).count();
    let summary = OracleGapSummary {
        instances: rows.len(),
        mass_exact: count(&|r| r.mass_check == "exact"),
        oracle_bounds_vote: count(&|r| r.oracle_loss <= r.vote_loss),
        oracle_bounds_seq: count(&|r| r.oracle_loss_seq_size <= r.seq_loss),
        vote_beats_seq_loss: count(&|r| r.vote_loss < r.seq_loss),
        vote_beats_seq_recall: count(&|r| r.vote_recall > r.seq_recall),
        mean_vote_loss: mean(rows.iter().map(|r| r.vote_loss)),
        mean_seq_loss: mean(rows.iter().map(|r| r.seq_loss)),
        mean_oracle_loss: mean(rows.iter().map(|r| r.oracle_loss)),
        mean_vote_recall: mean(rows.iter().map(|r| r.vote_recall)),
        mean_seq_recall: mean(rows.iter().map(|r| r.seq_recall)),
    };
    Ok(OracleGapReport {
        schema: "expert-sharing.oracle-gap.v1".into(),
        rows,
        summary,
    })
}

impl OracleGapReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "# expert-sharing oracle-gap csv v1 (recall and loss are accuracy proxies)\n",
        );
        out.push_str(
            "instance,m_core,vote_loss,vote_recall,seq_k,seq_size,seq_loss,seq_recall,oracle_loss,oracle_loss_seq_size,vote_mass,oracle_mass,mass_check\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.instance,
                r.m_core,
                r.vote_loss,
                r.vote_recall,
                r.seq_k,
                r.seq_size,
                r.seq_loss,
                r.seq_recall,
                r.oracle_loss,
                r.oracle_loss_seq_size,
                r.vote_mass,
                r.oracle_mass,
                r.mass_check
            );
        }
        let s = &self.summary;
        let _ = writeln!(
            out,
            "# summary: instances={} mass_exact={} oracle_bounds_vote={} oracle_bounds_seq={} vote_beats_seq_loss={} vote_beats_seq_recall={}",
            s.instances, s.mass_exact, s.oracle_bounds_vote, s.oracle_bounds_seq, s.vote_beats_seq_loss, s.vote_beats_seq_recall
        );
        out
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}
