//! The 3x3 stride-1 worked example: a 12-row x 6-column input produces a
//! 10x4 output in 8 cycles at 45 ops/cycle (83.3% thread utilization),
//! with the boundary psums of rows 5/6 held in the shift registers
//! between column sectors. Prints the full schedule trace.
//!
//! Run with: cargo run --example worked_3x3

use neuromax::cli::trace::render_trace;
use neuromax::dataflow::{plan_layer, ConvType, LayerConfig};
use neuromax::grid::{run_layer, ConvCore, Tensor, Weights};
use neuromax::quantizer::{LogCode, Sign};

fn main() {
    let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 6, 12, 1, 1).unwrap();
    let sched = plan_layer(&cfg).unwrap();
    print!("{}", render_trace("worked_3x3", &sched));

    let mut core = ConvCore::default_core().unwrap();
    let mut input = Tensor::filled(6, 12, 1, LogCode::ZERO);
    for y in 0..12u32 {
        for x in 0..6u32 {
            input.set(x, y, 0, LogCode::activation((x as i16 + y as i16) % 6 - 3));
        }
    }
    let mut weights = Weights::filled(3, 1, 1, LogCode::ZERO);
    for ky in 0..3u32 {
        for kx in 0..3u32 {
            let sign = if (kx + ky) % 2 == 0 { Sign::Plus } else { Sign::Minus };
            weights.set(kx, ky, 0, 0, LogCode::new(sign, -(kx as i16) - 1));
        }
    }

    let (out, m) = run_layer(&mut core, &cfg, &input, &weights).unwrap();
    println!();
    println!(
        "executed: {} cycles, {} ops, {} ops/cycle, {:.1}% thread utilization",
        m.cycles,
        m.useful_ops,
        m.ops_per_cycle,
        m.utilization * 100.0
    );
    println!(
        "boundary registers: {} of 18 psums deferred per cycle, {} stored slots (max occupancy {})",
        core.stats.max_deferred_psums_per_cycle,
        core.stats.max_stored_slots_per_cycle,
        core.stats.max_boundary_occupancy
    );
    println!("output codes ({}x{}):", out.w, out.h);
    for y in 0..out.h {
        let row: Vec<String> = (0..out.w)
            .map(|x| {
                let c = out.get(x, y, 0);
                if c.is_zero { " .".into() } else { format!("{:>3}", c.code) }
            })
            .collect();
        println!("  {}", row.join(" "));
    }
}
