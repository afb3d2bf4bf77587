//! 4x4 and 5x5 convolutions via the two-phase dataflow: phase one loads
//! filter columns 0-2, phase two the remaining columns with the unused PE
//! columns zeroed. Outputs are cross-checked against the brute-force
//! quantized oracle, bit for bit.
//!
//! Run with: cargo run --example high_order_kernels

use neuromax::dataflow::{ConvType, LayerConfig};
use neuromax::grid::{post_process, run_layer_psums, ConvCore, Tensor, Weights};
use neuromax::quantizer::{LogCode, Sign};
use neuromax::reference::conv2d_quant_oracle;

fn demo(kernel: u32, stride: u32, in_w: u32, in_h: u32) {
    let cfg = LayerConfig::new(ConvType::Standard, kernel, stride, in_w, in_h, 3, 2).unwrap();
    let mut core = ConvCore::default_core().unwrap();

    let mut input = Tensor::filled(in_w, in_h, 3, LogCode::ZERO);
    for ch in 0..3u32 {
        for y in 0..in_h {
            for x in 0..in_w {
                if (x + y) % 5 != 4 {
                    input.set(x, y, ch, LogCode::activation((x * 2 + y + ch) as i16 % 9 - 5));
                }
            }
        }
    }
    let mut weights = Weights::filled(kernel, 3, 2, LogCode::ZERO);
    for f in 0..2u32 {
        for ch in 0..3u32 {
            for ky in 0..kernel {
                for kx in 0..kernel {
                    let sign = if (kx + ky + f) % 2 == 0 { Sign::Plus } else { Sign::Minus };
                    weights.set(kx, ky, ch, f, LogCode::new(sign, -((kx + ky + ch) as i16 % 4) - 1));
                }
            }
        }
    }

    let (psums, m) = run_layer_psums(&mut core, &cfg, &input, &weights).unwrap();
    let oracle = conv2d_quant_oracle(&input, &weights, &cfg, &core.params, &core.fmt).unwrap();
    assert_eq!(psums.data(), oracle.data(), "psums must match the oracle bit for bit");
    let out = post_process(&psums, &core.log_table);

    println!(
        "{kernel}x{kernel} s{stride}: {}x{}x3 -> {}x{}x2 | {} cycles, {:.1} ops/cycle, oracle-exact",
        in_w, in_h, out.w, out.h, m.cycles, m.ops_per_cycle
    );
}

fn main() {
    demo(5, 1, 7, 7); // 7x7 input -> 3x3 output
    demo(4, 1, 6, 6); // 6x6 -> 3x3
    demo(4, 2, 6, 6); // 6x6 -> 2x2
    demo(5, 2, 11, 11);
}
