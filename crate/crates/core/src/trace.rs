//! Router traces: synthetic generation and the on-disk formats.
//!
//! # Binary layout (`.moet`)
//!
//! All integers little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "MOET"
//!      4     2  version (u16, currently 1)
//!      6     4  experts_total M (u32)
//!     10     4  top_k K (u32)
//!     14     4  layers (u32)
//!     18     4  block_size N (u32)
//!     22     4  steps (u32)
//!     26     8  seed (u64)
//!     34     1  generator: 0 external, 1 iid_gaussian, 2 dirichlet, 3 shared_bias
//!     35     8  rho (f64 bits as u64)
//!     43     8  temperature (f64 bits as u64)
//!     51     8  dirichlet alpha (f64 bits as u64, 0 unless dirichlet)
//!     59        records, `steps * layers` of them, ordered by (step, layer):
//!                 step u32, layer u32, rows u32, cols u32,
//!                 rows * cols logits as f32, row-major
//! ```
//!
//! # JSON Lines (`.jsonl`)
//!
//! Line 1 is the header object, every following line one record
//! `{"step":s,"layer":l,"logits":[[...],...]}`, in the same order.
//!
//! Logits are single precision in both formats; in memory they are `f64`
//! values that are exactly representable as `f32`.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TraceError};
use crate::rng::Rng;
use crate::types::{PoolConfig, RouterBlock};

pub const MAGIC: [u8; 4] = *b"MOET";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 59;
const RECORD_HEADER_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthModel {
    /// Every logit i.i.d. standard normal.
    IidGaussian,
    /// Each token's logits are the log of a symmetric Dirichlet draw.
    Dirichlet { alpha: f64 },
    /// `rho * block_bias + (1 - rho) * token_noise`, both standard normal.
    SharedBias,
}

/// Synthetic router model. `temperature` multiplies every logit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthParams {
    pub model: SynthModel,
    pub rho: f64,
    pub temperature: f64,
}

impl SynthParams {
    pub fn shared_bias(rho: f64) -> Self {
        SynthParams {
            model: SynthModel::SharedBias,
            rho,
            temperature: 1.0,
        }
    }

    pub fn iid() -> Self {
        SynthParams {
            model: SynthModel::IidGaussian,
            rho: 0.0,
            temperature: 1.0,
        }
    }

    pub fn with_temperature(mut self, temperature: f64) -> Self {
        self.temperature = temperature;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(Error::config("0 <= rho <= 1", format!("rho={}", self.rho)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(Error::config(
                "temperature > 0",
                format!("temperature={}", self.temperature),
            ));
        }
        if let SynthModel::Dirichlet { alpha } = self.model {
            if !(alpha > 0.0 && alpha.is_finite()) {
                return Err(Error::config("alpha > 0", format!("alpha={alpha}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub experts_total: u32,
    pub top_k: u32,
    pub layers: u32,
    pub block_size: u32,
    pub steps: u32,
    pub seed: u64,
    /// `None` for traces that did not come from [`gen_trace`].
    pub generator: Option<SynthParams>,
}

impl TraceHeader {
    pub fn record_count(&self) -> usize {
        self.steps as usize * self.layers as usize
    }

    /// Pool config with the header's M and K and default bank settings.
    pub fn pool_config(&self) -> PoolConfig {
        PoolConfig::new(self.experts_total as usize, self.top_k as usize)
    }

    fn position(&self, record: usize) -> (u32, u32) {
        let layers = self.layers as usize;
        ((record / layers) as u32, (record % layers) as u32)
    }

    fn check(&self) -> std::result::Result<(), TraceError> {
        let bad = |message: String| TraceError::Malformed { line: 1, message };
        if self.experts_total == 0 || self.block_size == 0 || self.layers == 0 || self.steps == 0 {
            return Err(bad(
                "experts_total, block_size, layers and steps must be >= 1".into(),
            ));
        }
        if self.top_k == 0 || self.top_k > self.experts_total {
            return Err(bad(format!(
                "top_k {} outside 1..={}",
                self.top_k, self.experts_total
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub step: u32,
    pub layer: u32,
    pub block: RouterBlock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceFile {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
}

impl TraceFile {
    pub fn blocks(&self) -> impl Iterator<Item = &RouterBlock> {
        self.records.iter().map(|r| &r.block)
    }
}

fn as_u32(name: &'static str, v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::config(name, format!("{v} does not fit in u32")))
}

/// Generates `steps * layers` blocks of `n` tokens. Each block draws from
/// its own derived stream, so the result does not depend on scheduling.
pub fn gen_trace(
    cfg: &PoolConfig,
    params: &SynthParams,
    layers: usize,
    steps: usize,
    n: usize,
    seed: u64,
) -> Result<TraceFile> {
    let cfg = cfg.clone().validate()?;
    params.validate()?;
    if layers == 0 || steps == 0 || n == 0 {
        return Err(Error::config(
            "layers, steps, block_size >= 1",
            format!("layers={layers}, steps={steps}, block_size={n}"),
        ));
    }
    let header = TraceHeader {
        experts_total: as_u32("experts_total", cfg.experts_total)?,
        top_k: as_u32("top_k", cfg.top_k)?,
        layers: as_u32("layers", layers)?,
        block_size: as_u32("block_size", n)?,
        steps: as_u32("steps", steps)?,
        seed,
        generator: Some(*params),
    };
    let records = (0..header.record_count())
        .into_par_iter()
        .map(|idx| {
            let (step, layer) = header.position(idx);
            let logits = synth_block(cfg.experts_total, n, params, seed, idx as u64);
            RouterBlock::new(logits).map(|block| TraceRecord { step, layer, block })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TraceFile { header, records })
}

fn synth_block(m: usize, n: usize, params: &SynthParams, seed: u64, idx: u64) -> Array2<f64> {
    let mut noise = Rng::derived(seed, 2 * idx);
    let tau = params.temperature;
    let raw = match params.model {
        SynthModel::IidGaussian => Array2::from_shape_fn((n, m), |_| noise.normal()),
        SynthModel::Dirichlet { alpha } => {
            let mut out = Array2::zeros((n, m));
            for mut row in out.rows_mut() {
                for (o, p) in row.iter_mut().zip(noise.dirichlet(m, alpha)) {
                    *o = p.max(f64::MIN_POSITIVE).ln();
                }
            }
            out
        }
        SynthModel::SharedBias => {
            let mut bias_rng = Rng::derived(seed, 2 * idx + 1);
            let bias: Vec<f64> = (0..m).map(|_| bias_rng.normal()).collect();
            let rho = params.rho;
            Array2::from_shape_fn((n, m), |(_, i)| {
                rho * bias[i] + (1.0 - rho) * noise.normal()
            })
        }
    };
    raw.mapv(|v| (tau * v) as f32 as f64)
}

/// Writes `file` to `path`; `.jsonl` selects JSON Lines, anything else the
/// binary format.
pub fn write_trace(file: &TraceFile, path: &Path) -> Result<()> {
    let bytes = if is_jsonl(path) {
        encode_jsonl(file)?.into_bytes()
    } else {
        encode_binary(file)?
    };
    std::fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let bytes = std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    if is_jsonl(path) {
        let text = String::from_utf8(bytes).map_err(|e| TraceError::Malformed {
            line: 0,
            message: e.to_string(),
        })?;
        Ok(decode_jsonl(&text)?)
    } else {
        Ok(decode_binary(&bytes)?)
    }
}

fn is_jsonl(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "jsonl")
}

fn generator_fields(g: &Option<SynthParams>) -> (u8, f64, f64, f64) {
    match g {
        None => (0, 0.0, 0.0, 0.0),
        Some(p) => match p.model {
            SynthModel::IidGaussian => (1, p.rho, p.temperature, 0.0),
            SynthModel::Dirichlet { alpha } => (2, p.rho, p.temperature, alpha),
            SynthModel::SharedBias => (3, p.rho, p.temperature, 0.0),
        },
    }
}

fn check_shape(
    index: usize,
    header: &TraceHeader,
    block: &RouterBlock,
) -> std::result::Result<(), TraceError> {
    let (rows, cols) = (header.block_size as usize, header.experts_total as usize);
    if block.block_size() != rows || block.experts() != cols {
        return Err(TraceError::ShapeMismatch {
            record: index,
            expected_rows: rows,
            expected_cols: cols,
            found_rows: block.block_size(),
            found_cols: block.experts(),
        });
    }
    Ok(())
}

fn check_order(
    index: usize,
    header: &TraceHeader,
    step: u32,
    layer: u32,
) -> std::result::Result<(), TraceError> {
    let (es, el) = header.position(index);
    if (step, layer) != (es, el) {
        return Err(TraceError::RecordOrder {
            record: index,
            expected_step: es,
            expected_layer: el,
            found_step: step,
            found_layer: layer,
        });
    }
    Ok(())
}

fn validate_records(file: &TraceFile) -> std::result::Result<(), TraceError> {
    file.header.check()?;
    if file.records.len() != file.header.record_count() {
        return Err(TraceError::Truncated {
            record: file.records.len().min(file.header.record_count()),
        });
    }
    for (i, r) in file.records.iter().enumerate() {
        check_order(i, &file.header, r.step, r.layer)?;
        check_shape(i, &file.header, &r.block)?;
    }
    Ok(())
}

pub fn encode_binary(file: &TraceFile) -> Result<Vec<u8>> {
    validate_records(file)?;
    let h = &file.header;
    let per_record = RECORD_HEADER_LEN + 4 * h.block_size as usize * h.experts_total as usize;
    let mut out = Vec::with_capacity(HEADER_LEN + per_record * file.records.len());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [h.experts_total, h.top_k, h.layers, h.block_size, h.steps] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&h.seed.to_le_bytes());
    let (kind, rho, temp, alpha) = generator_fields(&h.generator);
    out.push(kind);
    for v in [rho, temp, alpha] {
        out.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    debug_assert_eq!(out.len(), HEADER_LEN);
    for r in &file.records {
        let (rows, cols) = r.block.logits().dim();
        for v in [r.step, r.layer, rows as u32, cols as u32] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &v in r.block.logits().iter() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let s = self.buf.get(self.pos..end)?;
        self.pos = end;
        Some(s)
    }

    fn u16(&mut self) -> Option<u16> {
        self.take(2)
            .map(|b| u16::from_le_bytes(b.try_into().unwrap()))
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8)
            .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.u64().map(f64::from_bits)
    }
}

pub fn decode_binary(bytes: &[u8]) -> std::result::Result<TraceFile, TraceError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let magic = c.take(4).ok_or(TraceError::TruncatedHeader)?;
    if magic != MAGIC {
        return Err(TraceError::BadMagic {
            found: magic.to_vec(),
        });
    }
    let version = c.u16().ok_or(TraceError::TruncatedHeader)?;
    if version != VERSION {
        return Err(TraceError::VersionMismatch {
            found: version.into(),
            expected: VERSION.into(),
        });
    }
    let header = (|| {
        let experts_total = c.u32()?;
        let top_k = c.u32()?;
        let layers = c.u32()?;
        let block_size = c.u32()?;
        let steps = c.u32()?;
        let seed = c.u64()?;
        let kind = c.take(1)?[0];
        let (rho, temperature, alpha) = (c.f64()?, c.f64()?, c.f64()?);
        Some((
            experts_total,
            top_k,
            layers,
            block_size,
            steps,
            seed,
            kind,
            rho,
            temperature,
            alpha,
        ))
    })()
    .ok_or(TraceError::TruncatedHeader)?;
    let (experts_total, top_k, layers, block_size, steps, seed, kind, rho, temperature, alpha) =
        header;
    let generator = match kind {
        0 => None,
        1..=3 => Some(SynthParams {
            model: match kind {
                1 => SynthModel::IidGaussian,
                2 => SynthModel::Dirichlet { alpha },
                _ => SynthModel::SharedBias,
            },
            rho,
            temperature,
        }),
        other => {
            return Err(TraceError::Malformed {
                line: 0,
                message: format!("unknown generator kind {other}"),
            })
        }
    };
    let header = TraceHeader {
        experts_total,
        top_k,
        layers,
        block_size,
        steps,
        seed,
        generator,
    };
    header.check()?;

    let (rows, cols) = (block_size as usize, experts_total as usize);
    let mut records = Vec::with_capacity(header.record_count());
    for index in 0..header.record_count() {
        let truncated = || TraceError::Truncated { record: index };
        let step = c.u32().ok_or_else(truncated)?;
        let layer = c.u32().ok_or_else(truncated)?;
        let found_rows = c.u32().ok_or_else(truncated)? as usize;
        let found_cols = c.u32().ok_or_else(truncated)? as usize;
        if (found_rows, found_cols) != (rows, cols) {
            return Err(TraceError::ShapeMismatch {
                record: index,
                expected_rows: rows,
                expected_cols: cols,
                found_rows,
                found_cols,
            });
        }
        check_order(index, &header, step, layer)?;
        let data = c.take(4 * rows * cols).ok_or_else(truncated)?;
        let values: Vec<f64> = data
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        let logits = Array2::from_shape_vec((rows, cols), values).expect("length checked");
        let block =
            RouterBlock::new(logits).map_err(|_| TraceError::NonFinite { record: index })?;
        records.push(TraceRecord { step, layer, block });
    }
    let extra = bytes.len() - c.pos;
    if extra > 0 {
        return Err(TraceError::TrailingData { extra });
    }
    Ok(TraceFile { header, records })
}

#[derive(Serialize, Deserialize)]
struct JsonHeader {
    format: String,
    version: u32,
    experts_total: u32,
    top_k: u32,
    layers: u32,
    block_size: u32,
    steps: u32,
    seed: u64,
    generator: Option<SynthParams>,
}

#[derive(Serialize, Deserialize)]
struct JsonRecord {
    step: u32,
    layer: u32,
    logits: Vec<Vec<f64>>,
}

pub fn encode_jsonl(file: &TraceFile) -> Result<String> {
    validate_records(file)?;
    let h = &file.header;
    let json_header = JsonHeader {
        format: "MOET".into(),
        version: VERSION.into(),
        experts_total: h.experts_total,
        top_k: h.top_k,
        layers: h.layers,
        block_size: h.block_size,
        steps: h.steps,
        seed: h.seed,
        generator: h.generator,
    };
    let mut out =
        serde_json::to_string(&json_header).map_err(|e| Error::Internal(e.to_string()))?;
    out.push('\n');
    for r in &file.records {
        let rec = JsonRecord {
            step: r.step,
            layer: r.layer,
            logits: r
                .block
                .rows()
                .map(|row| row.iter().map(|&v| v as f32 as f64).collect())
                .collect(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| Error::Internal(e.to_string()))?;
        let _ = writeln!(out, "{line}");
    }
    Ok(out)
}

pub fn decode_jsonl(text: &str) -> std::result::Result<TraceFile, TraceError> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().ok_or(TraceError::TruncatedHeader)?;
    let jh: JsonHeader = serde_json::from_str(first).map_err(|e| TraceError::Malformed {
        line: 1,
        message: e.to_string(),
    })?;
    if jh.format != "MOET" {
        return Err(TraceError::BadMagic {
            found: jh.format.into_bytes(),
        });
    }
    if jh.version != u32::from(VERSION) {
        return Err(TraceError::VersionMismatch {
            found: jh.version,
            expected: VERSION.into(),
        });
    }
    let header = TraceHeader {
        experts_total: jh.experts_total,
        top_k: jh.top_k,
        layers: jh.layers,
        block_size: jh.block_size,
        steps: jh.steps,
        seed: jh.seed,
        generator: jh.generator,
    };
    header.check()?;
    let (rows, cols) = (header.block_size as usize, header.experts_total as usize);
    let mut records = Vec::with_capacity(header.record_count());
    for index in 0..header.record_count() {
        let (lineno, line) = lines
            .next()
            .ok_or(TraceError::Truncated { record: index })?;
        let rec: JsonRecord = serde_json::from_str(line).map_err(|e| {
            if e.is_eof() {
                TraceError::Truncated { record: index }
            } else {
                TraceError::Malformed {
                    line: lineno + 1,
                    message: e.to_string(),
                }
            }
        })?;
        let found_cols = rec
            .logits
            .iter()
            .map(Vec::len)
            .find(|&w| w != cols)
            .unwrap_or(cols);
        if rec.logits.len() != rows || found_cols != cols {
            return Err(TraceError::ShapeMismatch {
                record: index,
                expected_rows: rows,
                expected_cols: cols,
                found_rows: rec.logits.len(),
                found_cols,
            });
        }
        check_order(index, &header, rec.step, rec.layer)?;
        let flat: Vec<f64> = rec
            .logits
            .into_iter()
            .flatten()
            .map(|v| v as f32 as f64)
            .collect();
        let logits = Array2::from_shape_vec((rows, cols), flat).expect("shape checked");
        let block =
            RouterBlock::new(logits).map_err(|_| TraceError::NonFinite { record: index })?;
        records.push(TraceRecord {
            step: rec.step,
            layer: rec.layer,
            block,
        });
    }
    if let Some((lineno, _)) = lines.next() {
        return Err(TraceError::Malformed {
            line: lineno + 1,
            message: "records beyond steps * layers".into(),
        });
    }
    Ok(TraceFile { header, records })
}
