//! Brute-force oracles: plain floating-point convolution and a
//! quantized-arithmetic convolution that reproduces the core's products and
//! saturating accumulation order without sharing any dataflow code.
//!
//! The quantized oracle is written before and independently of the
//! schedule executor; it walks outputs directly with six nested loops. It
//! must, however, use the same product rule (LUT entry rounded to the psum
//! grid, then a truncating shift) and the same left-to-right fold order
//! (filter columns, then filter rows, then channels ascending in the
//! grid's group structure), because saturating adds do not commute.

use crate::dataflow::{ConvType, LayerConfig};
use crate::error::{Error, Result};
use crate::grid::{Tensor, Weights};
use crate::pe::PsumFormat;
use crate::quantizer::{dequantize, LogCode, QuantParams};

/// Naive direct convolution over real tensors, accumulating in f64.
pub fn conv2d_oracle(
    input: &Tensor<f64>,
    weights: &Weights<f64>,
    cfg: &LayerConfig,
) -> Result<Tensor<f64>> {
    check_dims(cfg, (input.w, input.h, input.c), (weights.kernel, weights.channels_per_filter, weights.filters))?;
    let mut out = Tensor::filled(cfg.out_w, cfg.out_h, cfg.out_c, 0.0f64);
    for f in 0..cfg.out_c {
        for oy in 0..cfg.out_h {
            for ox in 0..cfg.out_w {
                let mut acc = 0.0;
                for ch in 0..channels_per_output(cfg) {
                    let (in_ch, w_ch) = channel_map(cfg, ch, f);
                    for ky in 0..cfg.kernel {
                        for kx in 0..cfg.kernel {
                            let x = input.get(ox * cfg.stride + kx, oy * cfg.stride + ky, in_ch);
                            acc += x * weights.get(kx, ky, w_ch, f);
                        }
                    }
                }
                out.set(ox, oy, f, acc);
            }
        }
    }
    Ok(out)
}

/// Quantized-arithmetic convolution: bit-exact target for the simulated
/// core's psum planes.
pub fn conv2d_quant_oracle(
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    cfg: &LayerConfig,
    params: &QuantParams,
    fmt: &PsumFormat,
) -> Result<Tensor<i64>> {
    check_dims(cfg, (input.w, input.h, input.c), (weights.kernel, weights.channels_per_filter, weights.filters))?;
    let mut out = Tensor::filled(cfg.out_w, cfg.out_h, cfg.out_c, 0i64);
    for f in 0..cfg.out_c {
        for oy in 0..cfg.out_h {
            for ox in 0..cfg.out_w {
                let v = oracle_output(input, weights, cfg, params, fmt, (f, ox, oy));
                out.set(ox, oy, f, v);
            }
        }
    }
    Ok(out)
}

fn channels_per_output(cfg: &LayerConfig) -> u32 {
    match cfg.conv_type {
        ConvType::Depthwise => 1,
        _ => cfg.in_c,
    }
}

/// Input channel and weight channel contributing to output plane `f`.
fn channel_map(cfg: &LayerConfig, ch: u32, f: u32) -> (u32, u32) {
    match cfg.conv_type {
        ConvType::Depthwise => (f, 0),
        _ => (ch, ch),
    }
}

fn oracle_output(
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    cfg: &LayerConfig,
    params: &QuantParams,
    fmt: &PsumFormat,
    (f, ox, oy): (u32, u32, u32),
) -> i64 {
    let mut acc = 0i64;
    if cfg.kernel == 1 {
        // channel groups of three share an adder-net-0 fold
        let chans = channels_per_output(cfg);
        let mut ch = 0;
        while ch < chans {
            let mut group: Option<i64> = None;
            for c in ch..(ch + 3).min(chans) {
                let (in_ch, w_ch) = channel_map(cfg, c, f);
                let p = quant_product(
                    &weights.get(0, 0, w_ch, f),
                    &input.get(ox * cfg.stride, oy * cfg.stride, in_ch),
                    params,
                    fmt,
                );
                group = Some(match group {
                    None => p,
                    Some(a) => fmt.sat_add(a, p),
                });
            }
            acc = fmt.sat_add(acc, group.unwrap_or(0));
            ch += 3;
        }
        return acc;
    }

    // k >= 3: per channel, fold filter columns inside each filter row,
    // rows ascending; 4x4/5x5 split columns 0..3 and 3..k into two phases.
    let col_phases: &[(u32, u32)] = if cfg.kernel == 3 {
        &[(0, 3)]
    } else {
        &[(0, 3), (3, 5)]
    };
    for ch in 0..channels_per_output(cfg) {
        let (in_ch, w_ch) = channel_map(cfg, ch, f);
        let mut contrib: Option<i64> = None;
        for (c0, c1) in col_phases {
            for ky in 0..cfg.kernel {
                let mut term: Option<i64> = None;
                for kx in *c0..(*c1).min(cfg.kernel) {
                    let x = input.get(ox * cfg.stride + kx, oy * cfg.stride + ky, in_ch);
                    let p = quant_product(&weights.get(kx, ky, w_ch, f), &x, params, fmt);
                    term = Some(match term {
                        None => p,
                        Some(a) => fmt.sat_add(a, p),
                    });
                }
                let t = term.unwrap_or(0);
                contrib = Some(match contrib {
                    None => t,
                    Some(a) => fmt.sat_add(a, t),
                });
            }
        }
        acc = fmt.sat_add(acc, contrib.unwrap_or(0));
    }
    acc
}

/// The product rule shared with the thread model but coded from the real
/// values: dequantize, split the log2 exponent, round the fractional power
/// onto the psum grid, shift with truncation toward zero, saturate.
pub fn quant_product(w: &LogCode, a: &LogCode, params: &QuantParams, fmt: &PsumFormat) -> i64 {
    if w.is_zero || a.is_zero {
        return 0;
    }
    let exact = dequantize(w, params) * dequantize(a, params);
    let log2 = exact.abs().log2();
    let int_part = log2.floor();
    // snap the fractional part onto the 2^-n lattice to kill float noise
    let n = params.n as f64;
    let frac = ((log2 - int_part) * n.exp2()).round() / n.exp2();
    let entry = (frac.exp2() * (fmt.frac_bits as f64).exp2()).round();
    let mag = (entry * int_part.exp2()).floor().min(fmt.max_raw() as f64) as i64;
    if exact < 0.0 {
        -mag
    } else {
        mag
    }
}

fn check_dims(cfg: &LayerConfig, input: (u32, u32, u32), weights: (u32, u32, u32)) -> Result<()> {
    if input != (cfg.in_w, cfg.in_h, cfg.in_c) {
        return Err(Error::Shape(format!(
            "oracle input {input:?} does not match layer {:?}",
            (cfg.in_w, cfg.in_h, cfg.in_c)
        )));
    }
    let want = Weights::<LogCode>::expected_shape(cfg);
    if weights != want {
        return Err(Error::Shape(format!(
            "oracle weights {weights:?} do not match layer {want:?}"
        )));
    }
    Ok(())
}
