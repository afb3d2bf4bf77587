//! Linear and logarithmic quantizers.
//!
//! The accelerator stores weights and activations as log codes: a sign, a
//! zero flag, and an exponent on the lattice of base-√2 powers. With the
//! default parameters (m = 5, n = 1) the code is a 6-bit integer counting
//! half-log2 steps, i.e. the magnitude of a nonzero code `c` is
//! `2^(c/2) = (√2)^c`. Storing the step count as an integer keeps every
//! downstream add/shift exact.

use crate::error::{Error, Result};
use crate::pe::PsumFormat;

/// Sign of a weight value. Activations are always positive (ReLU outputs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_value(x: f64) -> Sign {
        if x < 0.0 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }

    pub fn factor(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Quantization parameters `<m, n, b>`: integer bits, fractional bits and
/// logarithm base. The accelerator path uses `m = 5, n = 1, b = √2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantParams {
    pub m: u32,
    pub n: u32,
    pub base: f64,
}

impl QuantParams {
    pub fn new(m: u32, n: u32, base: f64) -> Result<QuantParams> {
        if !(1..=14).contains(&m) {
            return Err(Error::Config(format!("m must be in 1..=14, got {m}")));
        }
        if n > 8 {
            return Err(Error::Config(format!("n must be in 0..=8, got {n}")));
        }
        if !(base.is_finite() && base > 1.0) {
            return Err(Error::Config(format!("log base must be > 1, got {base}")));
        }
        Ok(QuantParams { m, n, base })
    }

    /// The hardware configuration: 6-bit codes (1 sign bit extra for weights),
    /// base √2.
    pub fn accelerator() -> QuantParams {
        QuantParams {
            m: 5,
            n: 1,
            base: std::f64::consts::SQRT_2,
        }
    }

    /// Step size of the Q(m.n) format, `ε = 2^-n`.
    pub fn step(&self) -> f64 {
        (-(self.n as f64)).exp2()
    }

    /// log2 of the quantizer base.
    fn log2_base(&self) -> f64 {
        snap_near_integer_halves(self.base.log2())
    }

    /// Smallest representable code, in integer exponent steps.
    ///
    /// The code's Q(m.n) storage bounds the log2 exponent to
    /// `[-2^(m-1), 2^(m-1) - ε]`; dividing by log2(base) converts that to
    /// exponent steps. For the accelerator parameters this is -32.
    pub fn code_min(&self) -> i32 {
        let lo = -((1u64 << (self.m - 1)) as f64) / self.log2_base();
        lo.ceil() as i32
    }

    /// Largest representable code, in integer exponent steps (31 for the
    /// accelerator parameters).
    pub fn code_max(&self) -> i32 {
        let hi = ((1u64 << (self.m - 1)) as f64 - self.step()) / self.log2_base();
        hi.floor() as i32
    }

    /// Magnitude represented by an exponent code.
    pub fn magnitude(&self, code: i32) -> f64 {
        (code as f64 * self.log2_base()).exp2()
    }
}

/// Snap values that are within float noise of an exact multiple of 1/2.
/// `log2(sqrt(2))` must come out as exactly 0.5 or the code-range floors
/// wobble by one step.
fn snap_near_integer_halves(x: f64) -> f64 {
    let doubled = (2.0 * x).round();
    if (2.0 * x - doubled).abs() < 1e-9 {
        doubled / 2.0
    } else {
        x
    }
}

/// A log-quantized value: sign, exponent code and a dedicated zero flag.
///
/// `code` counts integer steps on the base-b exponent lattice; with b = √2
/// the magnitude is `2^(code/2)`. When `is_zero` is set the other fields are
/// ignored by every consumer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LogCode {
    pub sign: Sign,
    pub code: i16,
    pub is_zero: bool,
}

impl LogCode {
    pub const ZERO: LogCode = LogCode {
        sign: Sign::Plus,
        code: 0,
        is_zero: true,
    };

    pub fn new(sign: Sign, code: i16) -> LogCode {
        LogCode {
            sign,
            code,
            is_zero: false,
        }
    }

    /// Positive-only constructor for activation codes.
    pub fn activation(code: i16) -> LogCode {
        LogCode::new(Sign::Plus, code)
    }

    pub fn in_range(&self, p: &QuantParams) -> bool {
        self.is_zero || (self.code as i32 >= p.code_min() && self.code as i32 <= p.code_max())
    }
}

/// A plain fixed-point value: `value = raw * 2^-frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedPoint {
    pub raw: i64,
    pub frac_bits: u32,
}

impl FixedPoint {
    pub fn value(&self) -> f64 {
        self.raw as f64 * (-(self.frac_bits as f64)).exp2()
    }
}

/// Linear quantizer: round to the nearest multiple of ε, then clip to the
/// Q(m.n) range. Rounds half away from zero.
pub fn linear_quantize(x: f64, p: &QuantParams) -> Result<FixedPoint> {
    if x.is_nan() {
        return Err(Error::Quant("NaN input to linear_quantize".into()));
    }
    let lo = -((1i64) << (p.m - 1 + p.n));
    let hi = ((1i64) << (p.m - 1 + p.n)) - 1;
    let raw = if x.is_infinite() {
        if x > 0.0 {
            hi
        } else {
            lo
        }
    } else {
        let r = (x / p.step()).round();
        (r as i64).clamp(lo, hi)
    };
    Ok(FixedPoint {
        raw,
        frac_bits: p.n,
    })
}

/// Log quantizer: `x -> sign(x) * b^code` with the exponent rounded half away
/// from zero on the code lattice and clipped to the representable range.
/// Exact zero maps to the zero flag; magnitudes below the smallest
/// representable one saturate to the minimum code instead.
pub fn log_quantize(x: f64, p: &QuantParams) -> Result<LogCode> {
    if x.is_nan() || x.is_infinite() {
        return Err(Error::Quant(format!("non-finite input to log_quantize: {x}")));
    }
    if x == 0.0 {
        return Ok(LogCode::ZERO);
    }
    let sign = Sign::from_value(x);
    let exact = x.abs().log2() / p.log2_base();
    let code = exact.round().clamp(p.code_min() as f64, p.code_max() as f64) as i32;
    Ok(LogCode::new(sign, code as i16))
}

/// Inverse of [`log_quantize`]: zero flag maps to 0, otherwise
/// `sign * b^code`.
pub fn dequantize(c: &LogCode, p: &QuantParams) -> f64 {
    if c.is_zero {
        0.0
    } else {
        c.sign.factor() * p.magnitude(c.code as i32)
    }
}

/// Precomputed table mapping every non-negative psum raw value to the
/// nearest log code. "Nearest" is measured in the log domain (the same
/// rounding the quantizer applies), with exact ties going to the smaller
/// magnitude code; on a binary psum grid, ties cannot actually occur.
#[derive(Debug, Clone)]
pub struct LogTable {
    codes: Vec<LogCode>,
    pub params: QuantParams,
    pub fmt: PsumFormat,
}

/// Default cap on log-table size; larger tables signal a misconfigured
/// psum format rather than a real design point.
pub const DEFAULT_TABLE_CAP: usize = 1 << 20;

impl LogTable {
    pub fn build(p: &QuantParams, fmt: &PsumFormat, max_entries: usize) -> Result<LogTable> {
        let entries = fmt.max_raw() as usize + 1;
        if entries > max_entries {
            return Err(Error::Config(format!(
                "log table would need {entries} entries, cap is {max_entries}"
            )));
        }
        let scale = (-(fmt.frac_bits as f64)).exp2();
        let mut codes = Vec::with_capacity(entries);
        codes.push(LogCode::ZERO);
        for raw in 1..entries as i64 {
            codes.push(log_quantize(raw as f64 * scale, p)?);
        }
        Ok(LogTable {
            codes,
            params: *p,
            fmt: *fmt,
        })
    }

    /// Nearest log code for a non-negative psum raw value.
    pub fn lookup(&self, raw: i64) -> LogCode {
        debug_assert!(raw >= 0 && (raw as usize) < self.codes.len());
        self.codes[raw as usize]
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }
}

/// Relative-error statistics of the log quantizer over a sample set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantErrorStats {
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

/// Round-trip each sample through the log quantizer and report the relative
/// magnitude error. Samples must be nonzero and finite.
pub fn quant_error_stats(samples: &[f64], p: &QuantParams) -> Result<QuantErrorStats> {
    if samples.is_empty() {
        return Err(Error::Quant("empty sample set".into()));
    }
    let mut max = 0.0f64;
    let mut sum = 0.0f64;
    for &x in samples {
        if x == 0.0 || !x.is_finite() {
            return Err(Error::Quant(format!("sample {x} is zero or non-finite")));
        }
        let q = log_quantize(x, p)?;
        let rel = (dequantize(&q, p).abs() - x.abs()).abs() / x.abs();
        max = max.max(rel);
        sum += rel;
    }
    Ok(QuantErrorStats {
        max_rel_err: max,
        mean_rel_err: sum / samples.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p() -> QuantParams {
        QuantParams::accelerator()
    }

    #[test]
    fn accelerator_code_range_is_six_bits() {
        assert_eq!(p().code_min(), -32);
        assert_eq!(p().code_max(), 31);
    }

    #[test]
    fn linear_quantize_examples() {
        let p2 = QuantParams::new(2, 1, 2.0).unwrap();
        // round(0.30/0.5) = round(0.6) = 1 -> 0.5
        assert_eq!(linear_quantize(0.30, &p2).unwrap().value(), 0.5);
        assert_eq!(linear_quantize(0.0, &p2).unwrap().value(), 0.0);
        // clip to 2^(m-1) - eps = 1.5
        assert_eq!(linear_quantize(100.0, &p2).unwrap().value(), 1.5);
        assert_eq!(linear_quantize(-100.0, &p2).unwrap().value(), -2.0);
        assert!(linear_quantize(f64::NAN, &p2).is_err());
    }

    #[test]
    fn log_quantize_examples() {
        // log of one is zero
        let c = log_quantize(1.0, &p()).unwrap();
        assert_eq!((c.sign, c.code, c.is_zero), (Sign::Plus, 0, false));

        // -2.0 -> (-1, code 2): (sqrt2)^2 = 2
        let c = log_quantize(-2.0, &p()).unwrap();
        assert_eq!((c.sign, c.code), (Sign::Minus, 2));
        assert!((dequantize(&c, &p()) - -2.0).abs() < 1e-12);

        // exact zero -> zero flag
        assert!(log_quantize(0.0, &p()).unwrap().is_zero);

        // 0.75: 2*log2(0.75) = -0.830 -> code -1 -> 2^-0.5
        let c = log_quantize(0.75, &p()).unwrap();
        assert_eq!((c.sign, c.code), (Sign::Plus, -1));
        assert!((dequantize(&c, &p()) - 2f64.powf(-0.5)).abs() < 1e-12);

        assert!(log_quantize(f64::INFINITY, &p()).is_err());
        assert!(log_quantize(f64::NAN, &p()).is_err());
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(&LogCode::new(Sign::Plus, 0), &p()), 1.0);
        assert!((dequantize(&LogCode::new(Sign::Minus, 2), &p()) + 2.0).abs() < 1e-12);
        assert_eq!(dequantize(&LogCode::ZERO, &p()), 0.0);
    }

    #[test]
    fn round_trip_every_code() {
        let p = p();
        for sign in [Sign::Plus, Sign::Minus] {
            for code in p.code_min()..=p.code_max() {
                let c = LogCode::new(sign, code as i16);
                let back = log_quantize(dequantize(&c, &p), &p).unwrap();
                assert_eq!(back, c, "code {code} failed round trip");
            }
        }
    }

    #[test]
    fn clip_saturation_not_zero() {
        let p = p();
        // far above range: max code
        let c = log_quantize(1e30, &p).unwrap();
        assert_eq!(c.code as i32, p.code_max());
        // far below smallest magnitude: min code, never the zero flag
        let c = log_quantize(1e-30, &p).unwrap();
        assert!(!c.is_zero);
        assert_eq!(c.code as i32, p.code_min());
        let c = log_quantize(-1e-30, &p).unwrap();
        assert_eq!((c.sign, c.code as i32), (Sign::Minus, p.code_min()));
    }

    #[test]
    fn monotone_codes() {
        let p = p();
        let mut prev = i32::MIN;
        for i in 1..4000 {
            let x = i as f64 * 0.003;
            let c = log_quantize(x, &p).unwrap();
            assert!(c.code as i32 >= prev);
            prev = c.code as i32;
        }
    }

    #[test]
    fn error_stats_examples() {
        let p = p();
        // exact lattice points -> zero error
        let lattice: Vec<f64> = (-8..8).map(|k| p.magnitude(k)).collect();
        let s = quant_error_stats(&lattice, &p).unwrap();
        assert_eq!(s.max_rel_err, 0.0);

        // single sample 0.75
        let s = quant_error_stats(&[0.75], &p).unwrap();
        assert!((s.max_rel_err - 0.0571909584179366).abs() < 1e-9);

        // dense sweep of the in-range part of (0, 1]: bounded by 2^(1/4) - 1
        // (below the smallest representable magnitude the clip saturates
        // and relative error is unbounded by design)
        let lo = p.magnitude(p.code_min());
        let sweep: Vec<f64> = (0..=200_000)
            .map(|i| lo + (1.0 - lo) * i as f64 / 200_000.0)
            .collect();
        let s = quant_error_stats(&sweep, &p).unwrap();
        let bound = 2f64.powf(0.25) - 1.0;
        assert!(s.max_rel_err <= bound + 1e-9, "{} > {}", s.max_rel_err, bound);
        assert!(s.max_rel_err > 0.18, "bound should be nearly attained");

        assert!(quant_error_stats(&[], &p).is_err());
        assert!(quant_error_stats(&[0.0], &p).is_err());
    }

    #[test]
    fn log_table_examples() {
        let fmt = PsumFormat::default();
        let table = LogTable::build(&p(), &fmt, DEFAULT_TABLE_CAP).unwrap();
        // 1.0 -> code 0
        assert_eq!(table.lookup(256), LogCode::new(Sign::Plus, 0));
        // nearest representation of 2^-0.5 -> code -1
        let raw = (2f64.powf(-0.5) * 256.0).round() as i64;
        assert_eq!(table.lookup(raw), LogCode::new(Sign::Plus, -1));
        // zero input -> zero flag
        assert!(table.lookup(0).is_zero);
        // 0.6 is nearer to 2^-0.5 than to 0.5 in the log domain
        let raw = (0.6f64 * 256.0).round() as i64;
        assert_eq!(table.lookup(raw).code, -1);
    }

    #[test]
    fn log_table_cap_enforced() {
        let fmt = PsumFormat::default();
        assert!(LogTable::build(&p(), &fmt, 100).is_err());
    }

    #[test]
    fn log_table_matches_exhaustive_search() {
        // independent oracle: scan all codes for the log-domain nearest one
        let p = p();
        let fmt = PsumFormat::default();
        let table = LogTable::build(&p, &fmt, DEFAULT_TABLE_CAP).unwrap();
        for raw in [1i64, 2, 3, 7, 100, 153, 154, 181, 256, 362, 1000, 32767] {
            let v = raw as f64 / 256.0;
            let target = v.log2() / 0.5;
            let mut best = p.code_min();
            let mut best_d = f64::INFINITY;
            for code in p.code_min()..=p.code_max() {
                let d = (code as f64 - target).abs();
                if d < best_d || (d == best_d && code.abs() < best.abs()) {
                    best = code;
                    best_d = d;
                }
            }
            assert_eq!(table.lookup(raw).code as i32, best, "raw {raw}");
        }
    }
}
