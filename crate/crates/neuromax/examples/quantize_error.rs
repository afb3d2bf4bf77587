//! Linear vs. log quantization error over a non-uniform value
//! distribution, plus the worst-case bound of the base-√2 code.
//!
//! Run with: cargo run --example quantize_error

use neuromax::quantizer::{
    dequantize, linear_quantize, log_quantize, quant_error_stats, QuantParams,
};

fn main() {
    let log_params = QuantParams::accelerator();
    let lin_params = QuantParams::new(2, 4, 2.0).unwrap(); // 6-bit linear Q2.4

    // trained-network weights cluster near zero; model that with a
    // geometric spread of magnitudes
    let samples: Vec<f64> = (1..=20_000)
        .map(|i| {
            let t = i as f64 / 20_000.0;
            0.001 * (1.0 / 0.001f64).powf(t) * if i % 2 == 0 { 1.0 } else { -1.0 }
        })
        .collect();

    let mut lin_err_sum = 0.0;
    let mut lin_err_max = 0.0f64;
    for &x in &samples {
        let q = linear_quantize(x, &lin_params).unwrap().value();
        let rel = (q - x).abs() / x.abs();
        lin_err_sum += rel;
        lin_err_max = lin_err_max.max(rel);
    }
    let log_stats = quant_error_stats(&samples, &log_params).unwrap();

    println!("{} samples spanning 0.001..1.0 in magnitude", samples.len());
    println!(
        "6-bit linear  (Q2.4):      max rel err {:.4}  mean {:.4}",
        lin_err_max,
        lin_err_sum / samples.len() as f64
    );
    println!(
        "6-bit log     (base √2):   max rel err {:.4}  mean {:.4}",
        log_stats.max_rel_err, log_stats.mean_rel_err
    );
    println!(
        "log worst case is mid-lattice: 2^(1/4) - 1 = {:.4}",
        2f64.powf(0.25) - 1.0
    );

    // a few individual codes
    for x in [0.75, -2.0, 0.3, 5.0] {
        let c = log_quantize(x, &log_params).unwrap();
        println!(
            "  {x:>6} -> code {:>4} (sign {:?})  -> {:+.4}",
            c.code,
            c.sign,
            dequantize(&c, &log_params)
        );
    }
}
