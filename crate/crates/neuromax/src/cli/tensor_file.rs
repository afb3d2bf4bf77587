//! Self-describing binary tensor format (`.tns`).
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "NMTN" | version u8 | kind u8 | rank u8 | dims: rank x u32 | payload
//! ```
//!
//! Kinds: 0 = real (f32 payload), 1 = activation log codes, 2 = weight log
//! codes. Log codes are one byte each: bits 5..0 hold the exponent code as
//! 6-bit two's complement, bit 7 the weight sign (1 = negative); the
//! all-ones byte 0xFF is the reserved zero-flag pattern, which keeps the
//! full 64-code range usable. Activations never set bit 7.
//!
//! Rank-3 dims are (w, h, c); rank-4 dims are (k, k, channels_per_filter,
//! filters).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{Tensor, Weights};
use crate::quantizer::{LogCode, Sign};

pub const MAGIC: &[u8; 4] = b"NMTN";
pub const VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    Real = 0,
    LogActivation = 1,
    LogWeight = 2,
}

pub const ZERO_BYTE: u8 = 0xFF;

/// Encode one log code. Codes must fit the 6-bit hardware field.
pub fn encode_code(c: &LogCode, kind: ElementKind) -> Result<u8> {
    if c.is_zero {
        return Ok(ZERO_BYTE);
    }
    if c.code < -32 || c.code > 31 {
        return Err(Error::Quant(format!(
            "code {} does not fit the 6-bit serialized field",
            c.code
        )));
    }
    let low = (c.code as i8 as u8) & 0x3F;
    match (kind, c.sign) {
        (ElementKind::LogActivation, Sign::Minus) => Err(Error::Quant(
            "activation codes carry no sign bit; negative value rejected".into(),
        )),
        (ElementKind::LogActivation, Sign::Plus) => Ok(low),
        (ElementKind::LogWeight, Sign::Plus) => Ok(low),
        (ElementKind::LogWeight, Sign::Minus) => Ok(0x80 | low),
        (ElementKind::Real, _) => Err(Error::Quant("real kind holds no codes".into())),
    }
}

pub fn decode_code(b: u8, kind: ElementKind) -> Result<LogCode> {
    if b == ZERO_BYTE {
        return Ok(LogCode::ZERO);
    }
    let sign = if b & 0x80 != 0 {
        if kind == ElementKind::LogActivation {
            return Err(Error::Quant(format!("activation byte {b:#04x} has the sign bit set")));
        }
        Sign::Minus
    } else {
        Sign::Plus
    };
    // sign-extend the 6-bit field
    let code = ((b & 0x3F) as i8) << 2 >> 2;
    Ok(LogCode::new(sign, code as i16))
}

struct Header {
    kind: ElementKind,
    dims: Vec<u32>,
}

fn write_header(buf: &mut Vec<u8>, kind: ElementKind, dims: &[u32]) {
    buf.extend_from_slice(MAGIC);
    buf.push(VERSION);
    buf.push(kind as u8);
    buf.push(dims.len() as u8);
    for d in dims {
        buf.extend_from_slice(&d.to_le_bytes());
    }
}

fn read_header(data: &[u8]) -> Result<(Header, &[u8])> {
    let bad = |msg: &str| Error::Parse {
        line: 0,
        msg: msg.to_string(),
    };
    if data.len() < 7 || &data[..4] != MAGIC {
        return Err(bad("not a tensor file (bad magic)"));
    }
    if data[4] != VERSION {
        return Err(bad(&format!("unsupported tensor version {}", data[4])));
    }
    let kind = match data[5] {
        0 => ElementKind::Real,
        1 => ElementKind::LogActivation,
        2 => ElementKind::LogWeight,
        k => return Err(bad(&format!("unknown element kind {k}"))),
    };
    let rank = data[6] as usize;
    if !(1..=4).contains(&rank) || data.len() < 7 + 4 * rank {
        return Err(bad("truncated tensor header"));
    }
    let mut dims = Vec::with_capacity(rank);
    for i in 0..rank {
        let off = 7 + 4 * i;
        dims.push(u32::from_le_bytes(data[off..off + 4].try_into().unwrap()));
    }
    Ok((Header { kind, dims }, &data[7 + 4 * rank..]))
}

fn expect_payload(actual: usize, expected: usize) -> Result<()> {
    if actual != expected {
        return Err(Error::Parse {
            line: 0,
            msg: format!("payload holds {actual} elements, header says {expected}"),
        });
    }
    Ok(())
}

pub fn write_real_tensor(path: &Path, dims: &[u32], data: &[f32]) -> Result<()> {
    let n: usize = dims.iter().map(|&d| d as usize).product();
    expect_payload(data.len(), n)?;
    let mut buf = Vec::with_capacity(7 + 4 * dims.len() + 4 * data.len());
    write_header(&mut buf, ElementKind::Real, dims);
    for v in data {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_real_tensor(path: &Path) -> Result<(Vec<u32>, Vec<f32>)> {
    let raw = fs::read(path)?;
    let (h, payload) = read_header(&raw)?;
    if h.kind != ElementKind::Real {
        return Err(Error::Parse {
            line: 0,
            msg: "expected a real tensor".into(),
        });
    }
    let n: usize = h.dims.iter().map(|&d| d as usize).product();
    expect_payload(payload.len() / 4, n)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((h.dims, data))
}

pub fn write_activation_tensor(path: &Path, t: &Tensor<LogCode>) -> Result<()> {
    let mut buf = Vec::with_capacity(7 + 12 + t.len());
    write_header(&mut buf, ElementKind::LogActivation, &[t.w, t.h, t.c]);
    for c in t.data() {
        buf.push(encode_code(c, ElementKind::LogActivation)?);
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_activation_tensor(path: &Path) -> Result<Tensor<LogCode>> {
    let raw = fs::read(path)?;
    let (h, payload) = read_header(&raw)?;
    if h.kind != ElementKind::LogActivation || h.dims.len() != 3 {
        return Err(Error::Parse {
            line: 0,
            msg: "expected a rank-3 activation tensor".into(),
        });
    }
    let codes: Result<Vec<LogCode>> = payload
        .iter()
        .map(|&b| decode_code(b, ElementKind::LogActivation))
        .collect();
    Tensor::from_vec(h.dims[0], h.dims[1], h.dims[2], codes?)
}

pub fn write_weight_tensor(path: &Path, w: &Weights<LogCode>) -> Result<()> {
    let dims = [w.kernel, w.kernel, w.channels_per_filter, w.filters];
    let mut buf = Vec::with_capacity(7 + 16 + w.data().len());
    write_header(&mut buf, ElementKind::LogWeight, &dims);
    for c in w.data() {
        buf.push(encode_code(c, ElementKind::LogWeight)?);
    }
    fs::write(path, buf)?;
    Ok(())
}

pub fn read_weight_tensor(path: &Path) -> Result<Weights<LogCode>> {
    let raw = fs::read(path)?;
    let (h, payload) = read_header(&raw)?;
    if h.kind != ElementKind::LogWeight || h.dims.len() != 4 {
        return Err(Error::Parse {
            line: 0,
            msg: "expected a rank-4 weight tensor".into(),
        });
    }
    if h.dims[0] != h.dims[1] {
        return Err(Error::Parse {
            line: 0,
            msg: "weight kernel must be square".into(),
        });
    }
    let codes: Result<Vec<LogCode>> = payload
        .iter()
        .map(|&b| decode_code(b, ElementKind::LogWeight))
        .collect();
    Weights::from_vec(h.dims[0], h.dims[2], h.dims[3], codes?)
}
