//! Bit-faithful model of the compute fabric: a shift/LUT thread, the
//! three-thread PE, the 6x3 PE matrix and adder net 0.
//!
//! A thread multiplies two log codes by adding their exponent codes and
//! reconstructing the linear value with a tiny lookup table plus a barrel
//! shift: the code sum `g` (in half-log2 steps for the default n = 1) splits
//! into a log2 integer part `I = floor(g / 2^n)` and a fractional index
//! `F = g mod 2^n`; the product is `LUT[F]` shifted by `I`.

use crate::error::{Error, Result};
use crate::quantizer::{LogCode, Sign};

pub const MATRIX_ROWS: usize = 6;
pub const MATRIX_COLS: usize = 3;
pub const THREADS_PER_PE: usize = 3;
pub const PE_MATRICES: usize = 6;
/// Thread slots in one PE matrix: 6 rows x 3 PEs x 3 threads.
pub const SLOTS_PER_MATRIX: u64 = 54;
/// Thread slots across the whole grid, the peak MACs per cycle.
pub const PEAK_OPS_PER_CYCLE: u64 = 324;

/// Signed fixed-point format of partial sums. Defaults to Q8.8 in a 16-bit
/// word; adds and shifts saturate at the format bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsumFormat {
    pub width: u32,
    pub frac_bits: u32,
}

impl Default for PsumFormat {
    fn default() -> Self {
        PsumFormat {
            width: 16,
            frac_bits: 8,
        }
    }
}

impl PsumFormat {
    pub fn new(width: u32, frac_bits: u32) -> Result<PsumFormat> {
        if !(2..=31).contains(&width) || frac_bits >= width {
            return Err(Error::Config(format!(
                "bad psum format: width {width}, frac {frac_bits}"
            )));
        }
        Ok(PsumFormat { width, frac_bits })
    }

    pub fn max_raw(&self) -> i64 {
        (1i64 << (self.width - 1)) - 1
    }

    pub fn min_raw(&self) -> i64 {
        -(1i64 << (self.width - 1))
    }

    pub fn saturate(&self, v: i64) -> i64 {
        v.clamp(self.min_raw(), self.max_raw())
    }

    /// Saturating psum addition.
    pub fn sat_add(&self, a: i64, b: i64) -> i64 {
        self.saturate(a + b)
    }

    pub fn to_value(&self, raw: i64) -> f64 {
        raw as f64 * (-(self.frac_bits as f64)).exp2()
    }
}

/// Per-thread lookup table holding the `2^n` fractional powers of two,
/// pre-scaled to the psum format. Entry k represents `2^(k * 2^-n)`, so
/// entry 0 is always 1.0 and entries increase strictly.
#[derive(Debug, Clone)]
pub struct ThreadLut {
    entries: Vec<i64>,
    pub n: u32,
}

impl ThreadLut {
    pub fn new(n: u32, fmt: &PsumFormat) -> Result<ThreadLut> {
        if n > 8 {
            return Err(Error::Config(format!("LUT fractional bits too large: {n}")));
        }
        let count = 1usize << n;
        let scale = (fmt.frac_bits as f64).exp2();
        let mut entries = Vec::with_capacity(count);
        for k in 0..count {
            let v = (k as f64 * (-(n as f64)).exp2()).exp2();
            entries.push((v * scale).round() as i64);
        }
        debug_assert!(entries.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(entries[0], 1i64 << fmt.frac_bits);
        Ok(ThreadLut { entries, n })
    }

    pub fn entry(&self, idx: usize) -> i64 {
        self.entries[idx]
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// One log-domain multiply. Returns the psum raw value; `saturated` is set
/// when a left shift ran past the format maximum (codes that large do not
/// occur in real layers, so this is a diagnostic rather than an error).
pub fn thread_multiply_flagged(
    w: &LogCode,
    a: &LogCode,
    lut: &ThreadLut,
    fmt: &PsumFormat,
) -> (i64, bool) {
    if w.is_zero || a.is_zero {
        return (0, false);
    }
    let g = w.code as i32 + a.code as i32;
    let shift = g >> lut.n; // floor division: negative shifts go right
    let frac = (g - (shift << lut.n)) as usize;
    let base = lut.entry(frac);
    let (mag, sat) = if shift >= 0 {
        if shift >= 62 || (base << shift) > fmt.max_raw() {
            (fmt.max_raw(), true)
        } else {
            (base << shift, false)
        }
    } else {
        let r = -shift;
        // right shift of a positive value truncates toward zero
        (if r >= 62 { 0 } else { base >> r }, false)
    };
    let signed = match (w.sign, a.sign) {
        (Sign::Plus, Sign::Plus) | (Sign::Minus, Sign::Minus) => mag,
        _ => -mag,
    };
    (signed, sat)
}

/// [`thread_multiply_flagged`] without the saturation flag.
pub fn thread_multiply(w: &LogCode, a: &LogCode, lut: &ThreadLut, fmt: &PsumFormat) -> i64 {
    thread_multiply_flagged(w, a, lut, fmt).0
}

/// The three thread products of one PE.
pub type PeOutput = [i64; THREADS_PER_PE];

/// One PE: a single input value against a 3-vector of weights.
pub fn pe_compute(
    w_vec: &[LogCode; THREADS_PER_PE],
    a: &LogCode,
    lut: &ThreadLut,
    fmt: &PsumFormat,
) -> PeOutput {
    [
        thread_multiply(&w_vec[0], a, lut, fmt),
        thread_multiply(&w_vec[1], a, lut, fmt),
        thread_multiply(&w_vec[2], a, lut, fmt),
    ]
}

/// Inputs to one PE matrix: one log code per PE.
pub type MatrixInputs = [[LogCode; MATRIX_COLS]; MATRIX_ROWS];
/// Weight broadcast: a 3-vector of codes per PE.
pub type MatrixWeights = [[[LogCode; THREADS_PER_PE]; MATRIX_COLS]; MATRIX_ROWS];
/// All 54 products of one matrix cycle.
pub type MatrixProducts = [[PeOutput; MATRIX_COLS]; MATRIX_ROWS];
/// The 18 psums produced by adder net 0.
pub type MatrixPsums = [i64; MATRIX_ROWS * THREADS_PER_PE];

/// Evaluate the whole 6x3 matrix for one cycle: 54 products.
pub fn matrix_compute(
    inputs: &MatrixInputs,
    weights: &MatrixWeights,
    lut: &ThreadLut,
    fmt: &PsumFormat,
) -> MatrixProducts {
    matrix_compute_flagged(inputs, weights, lut, fmt).0
}

/// [`matrix_compute`] plus the count of left-shift saturations, for the
/// core's diagnostic counter.
pub fn matrix_compute_flagged(
    inputs: &MatrixInputs,
    weights: &MatrixWeights,
    lut: &ThreadLut,
    fmt: &PsumFormat,
) -> (MatrixProducts, u32) {
    let mut out = [[[0i64; THREADS_PER_PE]; MATRIX_COLS]; MATRIX_ROWS];
    let mut sats = 0u32;
    for r in 0..MATRIX_ROWS {
        for c in 0..MATRIX_COLS {
            for j in 0..THREADS_PER_PE {
                let (v, sat) = thread_multiply_flagged(&weights[r][c][j], &inputs[r][c], lut, fmt);
                out[r][c][j] = v;
                sats += sat as u32;
            }
        }
    }
    (out, sats)
}

/// Adder net 0: fixed row-wise reduction. `o[3r + j]` sums thread j across
/// the three PEs of row r, left to right, with saturating adds.
pub fn adder_net0(grid: &MatrixProducts, fmt: &PsumFormat) -> MatrixPsums {
    let mut o = [0i64; MATRIX_ROWS * THREADS_PER_PE];
    for r in 0..MATRIX_ROWS {
        for j in 0..THREADS_PER_PE {
            let mut acc = grid[r][0][j];
            acc = fmt.sat_add(acc, grid[r][1][j]);
            acc = fmt.sat_add(acc, grid[r][2][j]);
            o[THREADS_PER_PE * r + j] = acc;
        }
    }
    o
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::{dequantize, QuantParams};

    fn setup() -> (ThreadLut, PsumFormat) {
        let fmt = PsumFormat::default();
        (ThreadLut::new(1, &fmt).unwrap(), fmt)
    }

    #[test]
    fn lut_default_entries() {
        let (lut, _) = setup();
        assert_eq!(lut.len(), 2);
        assert_eq!(lut.entry(0), 256);
        assert_eq!(lut.entry(1), 362); // round(sqrt(2) * 256)
    }

    #[test]
    fn thread_multiply_examples() {
        let (lut, fmt) = setup();
        let one = LogCode::activation(0);
        // 1 x 1 = 1.0
        assert_eq!(thread_multiply(&LogCode::new(Sign::Plus, 0), &one, &lut, &fmt), 256);
        // code sum -2 => log2 = -1 => LUT[0] >> 1 = 0.5
        assert_eq!(thread_multiply(&LogCode::new(Sign::Plus, -2), &one, &lut, &fmt), 128);
        // code sum -1 => I = -1, F = 1 => LUT[1] >> 1 = 181 (~0.7071), negated
        assert_eq!(thread_multiply(&LogCode::new(Sign::Minus, -1), &one, &lut, &fmt), -181);
        // zero annihilates
        assert_eq!(
            thread_multiply(&LogCode::ZERO, &LogCode::activation(3), &lut, &fmt),
            0
        );
        assert_eq!(thread_multiply(&LogCode::new(Sign::Minus, 4), &LogCode::ZERO, &lut, &fmt), 0);
    }

    #[test]
    fn left_shift_saturates_with_flag() {
        let (lut, fmt) = setup();
        let big = LogCode::new(Sign::Plus, 31);
        let (v, sat) = thread_multiply_flagged(&big, &LogCode::activation(31), &lut, &fmt);
        assert_eq!(v, fmt.max_raw());
        assert!(sat);
        let (v, sat) = thread_multiply_flagged(&LogCode::new(Sign::Minus, 31), &LogCode::activation(31), &lut, &fmt);
        assert_eq!(v, -fmt.max_raw());
        assert!(sat);
    }

    #[test]
    fn sign_follows_weight() {
        let (lut, fmt) = setup();
        for code in -20..20i16 {
            let a = LogCode::activation(3);
            let pos = thread_multiply(&LogCode::new(Sign::Plus, code), &a, &lut, &fmt);
            let neg = thread_multiply(&LogCode::new(Sign::Minus, code), &a, &lut, &fmt);
            assert!(pos >= 0);
            assert_eq!(neg, -pos);
        }
    }

    #[test]
    fn exhaustive_match_against_dequantized_products() {
        // every operand pair vs an independently coded shift/LUT oracle
        let (lut, fmt) = setup();
        let p = QuantParams::accelerator();
        let mut checked = 0u64;
        for wsign in [Sign::Plus, Sign::Minus] {
            for wcode in p.code_min()..=p.code_max() {
                for acode in p.code_min()..=p.code_max() {
                    let w = LogCode::new(wsign, wcode as i16);
                    let a = LogCode::activation(acode as i16);
                    let got = thread_multiply(&w, &a, &lut, &fmt);
                    let want = oracle_product(&w, &a, &p, &fmt);
                    assert_eq!(got, want, "w = {w:?}, a = {a:?}");
                    checked += 1;
                }
            }
        }
        assert_eq!(checked, 2 * 64 * 64);
    }

    /// Independent product oracle: dequantize, recompute the fractional
    /// entry on the psum grid, apply the same truncating shift.
    fn oracle_product(w: &LogCode, a: &LogCode, p: &QuantParams, fmt: &PsumFormat) -> i64 {
        let exact = dequantize(w, p) * dequantize(a, p);
        if exact == 0.0 {
            return 0;
        }
        let g = w.code as i64 + a.code as i64;
        let int_part = (g as f64 / 2.0).floor();
        let frac_part = g as f64 / 2.0 - int_part;
        let entry = (frac_part.exp2() * (fmt.frac_bits as f64).exp2()).round();
        let mag = (entry * int_part.exp2()).floor().min(fmt.max_raw() as f64);
        (exact.signum() * mag) as i64
    }

    #[test]
    fn pe_compute_examples() {
        let (lut, fmt) = setup();
        let a = LogCode::activation(0);
        let w = [
            LogCode::new(Sign::Plus, 0),
            LogCode::new(Sign::Plus, 0),
            LogCode::new(Sign::Plus, 0),
        ];
        assert_eq!(pe_compute(&w, &a, &lut, &fmt), [256, 256, 256]);

        let w = [
            LogCode::new(Sign::Plus, -2),
            LogCode::new(Sign::Plus, -1),
            LogCode::new(Sign::Plus, 0),
        ];
        assert_eq!(pe_compute(&w, &a, &lut, &fmt), [128, 181, 256]);

        assert_eq!(pe_compute(&w, &LogCode::ZERO, &lut, &fmt), [0, 0, 0]);
    }

    #[test]
    fn matrix_and_adder_net0() {
        let (lut, fmt) = setup();
        let zero_in: MatrixInputs = [[LogCode::ZERO; 3]; 6];
        let unit_w: MatrixWeights = [[[LogCode::new(Sign::Plus, 0); 3]; 3]; 6];
        let prod = matrix_compute(&zero_in, &unit_w, &lut, &fmt);
        assert!(prod.iter().flatten().flatten().all(|&v| v == 0));

        // all products 1.0 -> every psum is 3.0
        let one_in: MatrixInputs = [[LogCode::activation(0); 3]; 6];
        let prod = matrix_compute(&one_in, &unit_w, &lut, &fmt);
        let o = adder_net0(&prod, &fmt);
        assert!(o.iter().all(|&v| v == 3 * 256));

        // single nonzero input -> exactly 3 nonzero products
        let mut sparse = zero_in;
        sparse[0][0] = LogCode::activation(2);
        let prod = matrix_compute(&sparse, &unit_w, &lut, &fmt);
        let nonzero = prod.iter().flatten().flatten().filter(|&&v| v != 0).count();
        assert_eq!(nonzero, 3);

        // only column 0 nonzero -> psums equal column-0 products
        let mut col0 = zero_in;
        for r in 0..6 {
            col0[r][0] = LogCode::activation(1);
        }
        let prod = matrix_compute(&col0, &unit_w, &lut, &fmt);
        let o = adder_net0(&prod, &fmt);
        for r in 0..6 {
            for j in 0..3 {
                assert_eq!(o[3 * r + j], prod[r][0][j]);
            }
        }
    }

    #[test]
    fn adder_net0_linearity_without_saturation() {
        let (lut, fmt) = setup();
        let w: MatrixWeights = [[[LogCode::new(Sign::Plus, -2); 3]; 3]; 6];
        let mut a: MatrixInputs = [[LogCode::ZERO; 3]; 6];
        let mut b: MatrixInputs = [[LogCode::ZERO; 3]; 6];
        a[1][0] = LogCode::activation(1);
        a[4][2] = LogCode::activation(-3);
        b[1][1] = LogCode::activation(0);
        b[3][0] = LogCode::activation(2);
        let oa = adder_net0(&matrix_compute(&a, &w, &lut, &fmt), &fmt);
        let ob = adder_net0(&matrix_compute(&b, &w, &lut, &fmt), &fmt);
        // disjoint sparse grids: sum of outputs equals output of the sum
        let mut merged = a;
        merged[1][1] = b[1][1];
        merged[3][0] = b[3][0];
        let om = adder_net0(&matrix_compute(&merged, &w, &lut, &fmt), &fmt);
        for i in 0..18 {
            assert_eq!(om[i], oa[i] + ob[i]);
        }
    }

    #[test]
    fn throughput_identity() {
        assert_eq!(SLOTS_PER_MATRIX, 54);
        assert_eq!(PEAK_OPS_PER_CYCLE, 6 * 54);
    }
}
