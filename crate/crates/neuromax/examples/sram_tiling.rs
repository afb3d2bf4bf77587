//! SRAM tiling of a layer too large for the on-core memories: the planner
//! splits it into filter groups and input row bands whose working sets
//! fit, and counts the off-chip traffic each split costs. Partial sums
//! never travel off-core.
//!
//! Run with: cargo run --example sram_tiling

use neuromax::dataflow::{ConvType, LayerConfig};
use neuromax::grid::{tile_for_sram, SramModel};

fn main() {
    // a 224x224x64 -> 64 layer (padded): far beyond the 3.8 Mb budget
    let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 226, 226, 64, 64).unwrap();
    let sram = SramModel::default();
    println!(
        "SRAM regions: weights {} kb, inputs {} kb, outputs {} kb",
        sram.weight_bits / 1024,
        sram.input_bits / 1024,
        sram.output_bits / 1024
    );

    let plan = tile_for_sram(&cfg, &sram).unwrap();
    println!(
        "layer {}x{}x{} -> {} filters: {} parts ({} filter groups x {} row bands)",
        cfg.in_w, cfg.in_h, cfg.in_c, cfg.out_c, plan.parts.len(), plan.filter_splits, plan.band_splits
    );
    println!(
        "DDR traffic: input {} B, weights {} B, output {} B, psums {} B",
        plan.ddr.input_bytes, plan.ddr.weight_bytes, plan.ddr.output_bytes, plan.ddr.psum_bytes
    );
    assert_eq!(plan.ddr.psum_bytes, 0);

    // doubling the SRAM budget can only reduce the part count
    let plan2 = tile_for_sram(&cfg, &SramModel::with_total_bits(sram.total_bits() * 2)).unwrap();
    println!(
        "with 2x SRAM: {} parts, input traffic {} B",
        plan2.parts.len(),
        plan2.ddr.input_bytes
    );
}
