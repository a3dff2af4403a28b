//! Head checkpoints.
//!
//! | bytes | content |
//! |-------|---------|
//! | 0..4  | `"HEAD"` |
//! | 4     | version `0x01` |
//! | 5     | mode: 0 nonlinear, 1 linear |
//! | 6..18 | input, hidden, output widths, `u32` LE |
//! | 18..26 | dropout, `f64` LE |
//! | 26..34 | parameter count, `u64` LE |
//! | 34..  | parameters, `f64` LE |

use std::fs;
use std::path::Path;

use openreid_core::head::{HeadConfig, HeadMode, HeadParams};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HEAD";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 34;

pub fn encode(params: &HeadParams) -> Result<Vec<u8>> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(match cfg.mode {
        HeadMode::Nonlinear => 0,
        HeadMode::Linear => 1,
    });
    for w in [cfg.input_dim, cfg.hidden_dim, cfg.output_dim] {
        let w = u32::try_from(w).map_err(|_| Error::Usage(format!("width {w} exceeds u32")))?;
        out.extend_from_slice(&w.to_le_bytes());
    }
    out.extend_from_slice(&cfg.dropout.to_le_bytes());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<HeadParams> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(path, "truncated header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format(path, "bad magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::format(path, format!("unsupported version {}", bytes[4])));
    }
    let mode = match bytes[5] {
        0 => HeadMode::Nonlinear,
        1 => HeadMode::Linear,
        m => return Err(Error::format(path, format!("unknown head mode {m}"))),
    };
    let u32_at = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap_or_default()) as usize;
    let u64_at = |at: usize| u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap_or_default());
    let config = HeadConfig {
        input_dim: u32_at(6),
        hidden_dim: u32_at(10),
        output_dim: u32_at(14),
        dropout: f64::from_bits(u64_at(18)),
        mode,
    };
    let count = u64_at(26) as usize;
    let payload = &bytes[HEADER_LEN..];
    if Some(payload.len()) != count.checked_mul(8) {
        return Err(Error::format(
            path,
            format!("payload is {} bytes, header declares {count} parameters", payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap_or_default()))
        .collect();
    Ok(HeadParams::from_values(config, values)?)
}

pub fn write(path: &Path, params: &HeadParams) -> Result<()> {
    fs::write(path, encode(params)?).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<HeadParams> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, path)
}
