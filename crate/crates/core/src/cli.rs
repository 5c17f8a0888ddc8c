//! Command-line front end. The binary only forwards to [`main_with_args`].
//!
//! Exit codes: 0 success, 1 usage or input error, 2 internal error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::analysis::LatencyParams;
use crate::error::{Error, Result};
use crate::report::{
    explosion_report, oracle_gap_report, run_report, sweep_report, EvalOptions, Method,
    OracleGapOptions, SweepFamily,
};
use crate::trace::{gen_trace, read_trace, write_trace, SynthModel, SynthParams, TraceFile};
use crate::types::{GateActivation, PoolConfig};

#[derive(Debug, Parser)]
#[command(
    name = "expert-sharing",
    version,
    about = "MoE routing simulator for block-parallel decoding"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic router trace (.moet binary or .jsonl).
    GenTrace(GenTraceArgs),
    /// Route every block of a trace with one method and report per block.
    Run(RunArgs),
    /// Scan a strategy parameter over a grid.
    Sweep(SweepArgs),
    /// Unique experts as a function of block size.
    Explosion(ExplosionArgs),
    /// Compare strategies with exhaustive oracles on small instances.
    OracleGap(OracleGapArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ModelArg {
    #[default]
    SharedBias,
    Iid,
    Dirichlet,
}

/// Pool settings; any flag given overrides the `--config` file.
#[derive(Debug, Clone, Default, Args)]
pub struct PoolArgs {
    /// JSON pool config file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub activation: Option<GateActivation>,
    #[arg(long)]
    pub bytes_per_expert: Option<u64>,
    /// Hidden size of the synthetic expert bank.
    #[arg(long)]
    pub hidden_dim: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct OutputArgs {
    #[arg(long, value_enum, default_value_t = OutputFormat::Csv)]
    pub format: OutputFormat,
    /// Write to this file instead of stdout.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LatencyArgs {
    /// Per-token compute cost per expert.
    #[arg(long, default_value_t = 0.1)]
    pub a: f64,
    /// Weight fetch cost per activated expert.
    #[arg(long, default_value_t = 1.0)]
    pub b: f64,
    /// Seed of the synthetic expert bank; enables reconstruction loss.
    #[arg(long)]
    pub bank_seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct GenTraceArgs {
    #[arg(long)]
    pub experts: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Tokens per block.
    #[arg(long)]
    pub block: usize,
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 1)]
    pub steps: usize,
    #[arg(long, value_enum, default_value_t = ModelArg::SharedBias)]
    pub model: ModelArg,
    #[arg(long, default_value_t = 0.0)]
    pub rho: f64,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    /// Dirichlet concentration.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    #[command(flatten)]
    pub pool: PoolArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// vanilla | des-seq:K | des-vote:BETA | topk:K | naee:BETA | mcmoe:BETA:FRACTION
    #[arg(long)]
    pub method: String,
    #[command(flatten)]
    pub latency: LatencyArgs,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub trace: PathBuf,
    /// des-vote | des-seq | topk | naee
    #[arg(long)]
    pub strategy: String,
    /// Comma-separated grid values, e.g. 0.1,0.2,0.3 or 1,2,4.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub grid: Vec<f64>,
    #[command(flatten)]
    pub latency: LatencyArgs,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ExplosionArgs {
    #[arg(long)]
    pub experts: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Comma-separated block sizes.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16,32,64")]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Trace for the empirical column.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct OracleGapArgs {
    #[arg(long, default_value_t = 12)]
    pub experts: usize,
    #[arg(long, default_value_t = 2)]
    pub top_k: usize,
    #[arg(long, default_value_t = 8)]
    pub block: usize,
    /// Coreset size; defaults to a quarter of the pool.
    #[arg(long)]
    pub m_core: Option<usize>,
    #[arg(long, default_value_t = 200)]
    pub instances: usize,
    #[arg(long, default_value_t = 0.5)]
    pub rho: f64,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 7)]
    pub bank_seed: u64,
    /// Take sub-instances from this trace instead of generating them.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub pool: PoolArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

/// Reads a pool config file.
pub fn load_config(path: &Path) -> Result<PoolConfig> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let cfg: PoolConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Usage(format!("bad config file {}: {e}", path.display())))?;
    cfg.validate()
}

/// Config file text for `cfg`; [`load_config`] reads it back unchanged.
pub fn config_to_string(cfg: &PoolConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

impl PoolArgs {
    /// Merges file and flags. `m` and `k` come from the caller (flags or a
    /// trace header) and win over the file as well.
    fn resolve(&self, m: Option<usize>, k: Option<usize>) -> Result<PoolConfig> {
        let base = match &self.config {
            Some(p) => Some(load_config(p)?),
            None => None,
        };
        let m = m
            .or(base.as_ref().map(|c| c.experts_total))
            .ok_or_else(|| {
                Error::Usage("missing --experts (or a --config providing experts_total)".into())
            })?;
        let k = k.or(base.as_ref().map(|c| c.top_k)).ok_or_else(|| {
            Error::Usage("missing --top-k (or a --config providing top_k)".into())
        })?;
        let mut cfg = match base {
            Some(mut c) => {
                c.experts_total = m;
                c.top_k = k;
                c
            }
            None => PoolConfig::new(m, k),
        };
        if let Some(a) = self.activation {
            cfg.gate_activation = a;
        }
        if let Some(b) = self.bytes_per_expert {
            cfg.bytes_per_expert = b;
        }
        if let Some(d) = self.hidden_dim {
            cfg.hidden_dim = d;
        }
        cfg.validate()
    }

    fn resolve_for_trace(&self, trace: &TraceFile) -> Result<PoolConfig> {
        let h = &trace.header;
        if let Some(p) = &self.config {
            let c = load_config(p)?;
            if (c.experts_total, c.top_k) != (h.experts_total as usize, h.top_k as usize) {
                return Err(Error::config(
                    "config matches trace experts_total and top_k",
                    format!(
                        "config M={}, K={}; trace M={}, K={}",
                        c.experts_total, c.top_k, h.experts_total, h.top_k
                    ),
                ));
            }
        }
        self.resolve(Some(h.experts_total as usize), Some(h.top_k as usize))
    }
}

impl LatencyArgs {
    fn options(&self) -> Result<EvalOptions> {
        Ok(EvalOptions {
            latency: LatencyParams::new(self.a, self.b)?,
            bank_seed: self.bank_seed,
        })
    }
}

fn emit(
    out: &OutputArgs,
    csv: impl FnOnce() -> String,
    json: impl FnOnce() -> Result<String>,
    stdout: &mut dyn Write,
) -> Result<()> {
    let text = match out.format {
        OutputFormat::Csv => csv(),
        OutputFormat::Json => json()?,
    };
    match &out.output {
        Some(path) => std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.clone(),
            source,
        }),
        None => stdout
            .write_all(text.as_bytes())
            .map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            }),
    }
}

fn synth_params(args: &GenTraceArgs) -> SynthParams {
    let model = match args.model {
        ModelArg::SharedBias => SynthModel::SharedBias,
        ModelArg::Iid => SynthModel::IidGaussian,
        ModelArg::Dirichlet => SynthModel::Dirichlet { alpha: args.alpha },
    };
    SynthParams {
        model,
        rho: args.rho,
        temperature: args.temperature,
    }
}

/// Executes a parsed command, writing reports to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::GenTrace(args) => {
            let cfg = args.pool.resolve(args.experts, args.top_k)?;
            let trace = gen_trace(
                &cfg,
                &synth_params(&args),
                args.layers,
                args.steps,
                args.block,
                args.seed,
            )?;
            write_trace(&trace, &args.output)?;
            let header =
                serde_json::to_string(&trace.header).map_err(|e| Error::Internal(e.to_string()))?;
            writeln!(stdout, "{header}").map_err(|source| Error::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })
        }
        Command::Run(args) => {
            let trace = read_trace(&args.trace)?;
            let cfg = args.pool.resolve_for_trace(&trace)?;
            let method: Method = args.method.parse()?;
            let report = run_report(&trace, &cfg, &method, &args.latency.options()?)?;
            emit(&args.out, || report.to_csv(), || report.to_json(), stdout)
        }
        Command::Sweep(args) => {
            let trace = read_trace(&args.trace)?;
            let cfg = args.pool.resolve_for_trace(&trace)?;
            let family: SweepFamily = args.strategy.parse()?;
            let report = sweep_report(&trace, &cfg, family, &args.grid, &args.latency.options()?)?;
            emit(&args.out, || report.to_csv(), || report.to_json(), stdout)
        }
        Command::Explosion(args) => {
            let trace = args.trace.as_deref().map(read_trace).transpose()?;
            let (m, k) = match &trace {
                Some(t) => (
                    args.experts.or(Some(t.header.experts_total as usize)),
                    args.top_k.or(Some(t.header.top_k as usize)),
                ),
                None => (args.experts, args.top_k),
            };
            let cfg = args.pool.resolve(m, k)?;
            let report = explosion_report(&cfg, &args.n, args.trials, args.seed, trace.as_ref())?;
            emit(&args.out, || report.to_csv(), || report.to_json(), stdout)
        }
        Command::OracleGap(args) => {
            let trace = args.trace.as_deref().map(read_trace).transpose()?;
            let cfg = args.pool.resolve(Some(args.experts), Some(args.top_k))?;
            let opts = OracleGapOptions {
                m_core: args.m_core.unwrap_or((cfg.experts_total / 4).max(1)),
                instances: args.instances,
                block_size: args.block,
                synth: SynthParams::shared_bias(args.rho),
                seed: args.seed,
                bank_seed: args.bank_seed,
            };
            let report = oracle_gap_report(&cfg, &opts, trace.as_ref())?;
            emit(&args.out, || report.to_csv(), || report.to_json(), stdout)
        }
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code. Errors go to `stderr`.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                return 1;
            }
            let _ = write!(stdout, "{text}");
            return 0;
        }
    };
    match execute(cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
