//! Average pooling through the convolution path: a depthwise layer with
//! uniform 1/k^2 weights and the pooling stride. The 1/k^2 factor is
//! itself log-quantized (1/9 lands on 0.125), so the result is the
//! accelerator's approximation of the mean, not the exact mean.
//!
//! Run with: cargo run --example average_pooling

use neuromax::dataflow::{ConvType, LayerConfig};
use neuromax::grid::{avg_pool_weights, run_layer, ConvCore, Tensor};
use neuromax::quantizer::{dequantize, LogCode, QuantParams};

fn main() {
    let params = QuantParams::accelerator();
    let cfg = LayerConfig::new(ConvType::Depthwise, 3, 2, 9, 9, 2, 2).unwrap();
    let weights = avg_pool_weights(3, 2, &params).unwrap();
    println!(
        "pool weight: 1/9 = {:.4} quantized to {:.4} (code {})",
        1.0 / 9.0,
        dequantize(&weights.get(0, 0, 0, 0), &params),
        weights.get(0, 0, 0, 0).code
    );

    let mut core = ConvCore::default_core().unwrap();
    let mut input = Tensor::filled(9, 9, 2, LogCode::ZERO);
    for ch in 0..2u32 {
        for y in 0..9u32 {
            for x in 0..9u32 {
                input.set(x, y, ch, LogCode::activation(((x + y) % 4) as i16));
            }
        }
    }
    let (out, m) = run_layer(&mut core, &cfg, &input, &weights).unwrap();
    println!(
        "3x3 stride-2 average pool: {}x{}x{} -> {}x{}x{} in {} cycles",
        cfg.in_w, cfg.in_h, cfg.in_c, out.w, out.h, out.c, m.cycles
    );
    for y in 0..out.h {
        let row: Vec<String> = (0..out.w)
            .map(|x| format!("{:5.2}", dequantize(&out.get(x, y, 0), &params)))
            .collect();
        println!("  {}", row.join(" "));
    }
}
