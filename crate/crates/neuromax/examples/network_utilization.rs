//! Layer-by-layer grid utilization for VGG-16, MobileNet v1 and
//! ResNet-34, with the unweighted and ops-weighted averages. Stride-2
//! layers and under-filled channel groups show up as the ~50% dips.
//!
//! Run with: cargo run --example network_utilization

use neuromax::cli::descriptor::{bundled, parse_descriptor};
use neuromax::metrics::network_report;

fn show(name: &str, text: &str) {
    let layers: Vec<_> = parse_descriptor(text)
        .unwrap()
        .iter()
        .map(|l| (l.name.clone(), l.to_layer_config().unwrap()))
        .collect();
    let report = network_report(&layers, 200e6).unwrap();
    println!("== {name} ({} conv layers)", report.layers.len());
    for (lname, m) in &report.layers {
        let bar_len = (m.grid_utilization * 40.0).round() as usize;
        println!(
            "  {lname:<10} {:>5.1}% {}",
            m.grid_utilization * 100.0,
            "#".repeat(bar_len)
        );
    }
    println!(
        "  mean {:.1}% (unweighted), {:.1}% (ops-weighted), total latency {:.2} ms\n",
        report.mean_utilization * 100.0,
        report.ops_weighted_utilization * 100.0,
        report.total_latency_s * 1e3
    );
}

fn main() {
    show("VGG-16", bundled::VGG16);
    show("MobileNet v1", bundled::MOBILENET_V1);
    show("ResNet-34", bundled::RESNET34);
}
