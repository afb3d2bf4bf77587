//! The 1x1 convolution example: a 3x6x6 input against six 1x1x6 filters.
//! Channels map to PE columns (three per matrix), spatial positions to PE
//! rows and filters to threads; two matrices process all six channels
//! concurrently, their psums summed by the channel accumulators. Six
//! cycles, 108 ops/cycle, 100% thread utilization.
//!
//! Run with: cargo run --example pointwise

use neuromax::dataflow::{ConvType, LayerConfig};
use neuromax::grid::{run_layer, ConvCore, Tensor, Weights};
use neuromax::quantizer::{LogCode, Sign};

fn main() {
    let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 3, 6, 6, 6).unwrap();
    let mut core = ConvCore::default_core().unwrap();

    let mut input = Tensor::filled(3, 6, 6, LogCode::ZERO);
    for ch in 0..6u32 {
        for y in 0..6u32 {
            for x in 0..3u32 {
                input.set(x, y, ch, LogCode::activation((x + 2 * y + ch) as i16 % 8 - 4));
            }
        }
    }
    let mut weights = Weights::filled(1, 6, 6, LogCode::ZERO);
    for f in 0..6u32 {
        for ch in 0..6u32 {
            let sign = if (f + ch) % 3 == 0 { Sign::Minus } else { Sign::Plus };
            weights.set(0, 0, ch, f, LogCode::new(sign, f as i16 - ch as i16 - 2));
        }
    }

    let (out, m) = run_layer(&mut core, &cfg, &input, &weights).unwrap();
    println!(
        "1x1 layer {}x{}x{} -> {}x{}x{}",
        cfg.in_w, cfg.in_h, cfg.in_c, out.w, out.h, out.c
    );
    println!(
        "{} cycles, {} ops, {} ops/cycle on {} active matrices -> {:.0}% thread utilization",
        m.cycles,
        m.useful_ops,
        m.ops_per_cycle,
        m.active_matrices,
        m.utilization * 100.0
    );
    println!("channel accumulation: 18 channels per pass, {} pass(es)", cfg.in_c.div_ceil(18));
}
