//! The `quantize` and `simulate` command drivers.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cli::descriptor::{parse_descriptor, validate_execution_chain, NetLayer};
use crate::cli::tensor_file::{
    read_activation_tensor, read_real_tensor, read_weight_tensor, write_activation_tensor,
    write_weight_tensor, ElementKind,
};
use crate::cli::trace::render_trace;
use crate::dataflow::{plan_layer, ConvType, LayerConfig};
use crate::error::{Error, Result};
use crate::grid::{
    post_process, run_layer, tile_for_sram, ConvCore, SramModel, Tensor, Weights,
};
use crate::metrics::{self, LayerMetrics};
use crate::quantizer::{log_quantize, quant_error_stats, LogCode, QuantErrorStats, QuantParams};
use crate::reference::conv2d_quant_oracle;

pub struct QuantizeOpts {
    pub input: PathBuf,
    pub output: PathBuf,
    pub kind: ElementKind,
    pub params: QuantParams,
}

/// Quantize a real tensor file into log codes and report the error stats.
pub fn cmd_quantize(opts: &QuantizeOpts) -> Result<QuantErrorStats> {
    let (dims, data) = read_real_tensor(&opts.input)?;
    let codes: Result<Vec<LogCode>> = data
        .iter()
        .map(|&v| {
            let c = log_quantize(v as f64, &opts.params)?;
            if opts.kind == ElementKind::LogActivation && v < 0.0 {
                return Err(Error::Quant(format!(
                    "negative value {v} cannot be an activation code"
                )));
            }
            Ok(c)
        })
        .collect();
    let codes = codes?;

    match (opts.kind, dims.len()) {
        (ElementKind::LogActivation, 3) => {
            let t = Tensor::from_vec(dims[0], dims[1], dims[2], codes)?;
            write_activation_tensor(&opts.output, &t)?;
        }
        (ElementKind::LogWeight, 4) => {
            if dims[0] != dims[1] {
                return Err(Error::Shape("weight kernel must be square".into()));
            }
            let w = Weights::from_vec(dims[0], dims[2], dims[3], codes)?;
            write_weight_tensor(&opts.output, &w)?;
        }
        (k, r) => {
            return Err(Error::Shape(format!(
                "kind {k:?} does not accept a rank-{r} tensor"
            )))
        }
    }

    let nonzero: Vec<f64> = data
        .iter()
        .filter(|v| **v != 0.0)
        .map(|&v| v as f64)
        .collect();
    if nonzero.is_empty() {
        Ok(QuantErrorStats {
            max_rel_err: 0.0,
            mean_rel_err: 0.0,
        })
    } else {
        quant_error_stats(&nonzero, &opts.params)
    }
}

pub struct SimulateOpts {
    pub descriptor: PathBuf,
    pub input: Option<PathBuf>,
    pub weights_dir: Option<PathBuf>,
    pub clock_mhz: f64,
    pub csv: Option<PathBuf>,
    pub trace: Option<PathBuf>,
    pub verify: bool,
    pub sram_kb: Option<u64>,
}

pub struct LayerRow {
    pub name: String,
    pub cfg: LayerConfig,
    pub metrics: LayerMetrics,
}

pub struct SimSummary {
    pub rows: Vec<LayerRow>,
    pub total_latency_s: f64,
    pub total_ops: u64,
    pub total_ddr_bytes: u64,
    pub mean_utilization: f64,
    pub ops_weighted_utilization: f64,
    pub executed: bool,
    pub verified_layers: u32,
}

pub const CSV_HEADER_COMMENT: &str = "# neuromax-report v1";
pub const CSV_COLUMNS: &str = "layer,type,kernel,stride,out_w,out_h,out_c,cycles,ideal_cycles,useful_ops,ops_per_cycle,active_matrices,utilization,grid_utilization,latency_ms,ddr_bytes";

/// Run a network descriptor. Without an input tensor the run is analytic
/// (cycle/latency/utilization model only); with `--input` and a weights
/// directory every layer executes bit-faithfully and `--verify`
/// cross-checks each output against the quantized convolution oracle.
pub fn cmd_simulate(opts: &SimulateOpts) -> Result<SimSummary> {
    let text = fs::read_to_string(&opts.descriptor)?;
    let layers = parse_descriptor(&text)?;
    let clock_hz = opts.clock_mhz * 1e6;
    let sram = match opts.sram_kb {
        Some(kb) => SramModel::from_kilobytes(kb),
        None => SramModel::default(),
    };

    let mut rows = Vec::with_capacity(layers.len());
    for layer in &layers {
        let cfg = layer.to_layer_config()?;
        let ddr = tile_for_sram(&cfg, &sram)?.ddr.total();
        rows.push(LayerRow {
            name: layer.name.clone(),
            cfg,
            metrics: metrics::layer_metrics(&cfg, clock_hz, ddr),
        });
    }

    let mut verified_layers = 0u32;
    let executed = opts.input.is_some();
    if let Some(input_path) = &opts.input {
        let weights_dir = opts.weights_dir.as_ref().ok_or_else(|| {
            Error::Config("--input needs a weights directory".into())
        })?;
        validate_execution_chain(&layers)?;
        let mut core = ConvCore::with(
            QuantParams::accelerator(),
            Default::default(),
            sram,
            clock_hz,
        )?;
        let mut act = read_activation_tensor(input_path)?;
        for (layer, row) in layers.iter().zip(rows.iter_mut()) {
            let padded = pad_tensor(&act, layer.padding);
            let weights = read_weight_tensor(&weights_dir.join(format!("{}.tns", layer.name)))?;
            let (out, m) = execute_layer(&mut core, &row.cfg, &padded, &weights)?;
            if opts.verify {
                verify_against_oracle(&core, &row.cfg, &padded, &weights, &out, &layer.name)?;
                verified_layers += 1;
            }
            row.metrics = m;
            act = out;
        }
    }

    if let Some(path) = &opts.trace {
        write_traces(path, &layers, &rows)?;
    }
    if let Some(path) = &opts.csv {
        fs::write(path, render_csv(&rows))?;
    }

    let total_ops: u64 = rows.iter().map(|r| r.metrics.useful_ops).sum();
    let total_ddr: u64 = rows.iter().map(|r| r.metrics.ddr_bytes).sum();
    let total_latency: f64 = rows.iter().map(|r| r.metrics.latency_s).sum();
    let util_sum: f64 = rows.iter().map(|r| r.metrics.grid_utilization).sum();
    let util_ops: f64 = rows
        .iter()
        .map(|r| r.metrics.grid_utilization * r.metrics.useful_ops as f64)
        .sum();
    Ok(SimSummary {
        mean_utilization: util_sum / rows.len().max(1) as f64,
        ops_weighted_utilization: util_ops / total_ops.max(1) as f64,
        rows,
        total_latency_s: total_latency,
        total_ops,
        total_ddr_bytes: total_ddr,
        executed,
        verified_layers,
    })
}

pub fn render_csv(rows: &[LayerRow]) -> String {
    let mut out = format!("{CSV_HEADER_COMMENT}\n{CSV_COLUMNS}\n");
    for r in rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{:.4},{},{:.6},{:.6},{:.6},{}\n",
            r.name,
            r.cfg.conv_type,
            r.cfg.kernel,
            r.cfg.stride,
            r.cfg.out_w,
            r.cfg.out_h,
            r.cfg.out_c,
            m.cycles,
            m.ideal_cycles,
            m.useful_ops,
            m.ops_per_cycle,
            m.active_matrices,
            m.utilization,
            m.grid_utilization,
            m.latency_s * 1e3,
            m.ddr_bytes
        ));
    }
    out
}

pub fn render_summary(s: &SimSummary, clock_mhz: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:>9} {:>12} {:>12} {:>8} {:>7} {:>11} {:>12}\n",
        "layer", "kernel", "cycles", "ops", "ops/cyc", "util%", "latency_ms", "ddr_bytes"
    ));
    for r in &s.rows {
        let m = &r.metrics;
        out.push_str(&format!(
            "{:<12} {:>5}x{}s{} {:>12} {:>12} {:>8.1} {:>7.1} {:>11.3} {:>12}\n",
            r.name,
            r.cfg.kernel,
            r.cfg.kernel,
            r.cfg.stride,
            m.cycles,
            m.useful_ops,
            m.ops_per_cycle,
            m.grid_utilization * 100.0,
            m.latency_s * 1e3,
            m.ddr_bytes
        ));
    }
    out.push_str(&format!(
        "total: {} ops, {:.2} ms modeled latency, {} DDR bytes\n",
        s.total_ops,
        s.total_latency_s * 1e3,
        s.total_ddr_bytes
    ));
    out.push_str(&format!(
        "utilization: {:.1}% mean (unweighted), {:.1}% ops-weighted; {}\n",
        s.mean_utilization * 100.0,
        s.ops_weighted_utilization * 100.0,
        metrics::peak_summary(clock_mhz * 1e6)
    ));
    if s.executed {
        out.push_str(&format!(
            "executed bit-faithfully; {} layer(s) oracle-verified\n",
            s.verified_layers
        ));
    }
    out
}

fn write_traces(path: &Path, layers: &[NetLayer], rows: &[LayerRow]) -> Result<()> {
    const TRACE_SWEEP_CAP: u64 = 65_536;
    let mut out = String::new();
    for (layer, row) in layers.iter().zip(rows) {
        let sched = plan_layer(&row.cfg)?;
        if sched.cycles_per_sweep() > TRACE_SWEEP_CAP {
            out.push_str(&format!(
                "# layer {}: sweep of {} cycles exceeds trace cap, skipped\n",
                layer.name,
                sched.cycles_per_sweep()
            ));
        } else {
            out.push_str(&render_trace(&layer.name, &sched));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

/// Zero-pad an activation tensor symmetrically.
pub fn pad_tensor(t: &Tensor<LogCode>, pad: u32) -> Tensor<LogCode> {
    if pad == 0 {
        return t.clone();
    }
    let mut out = Tensor::filled(t.w + 2 * pad, t.h + 2 * pad, t.c, LogCode::ZERO);
    for ch in 0..t.c {
        for y in 0..t.h {
            for x in 0..t.w {
                out.set(x + pad, y + pad, ch, t.get(x, y, ch));
            }
        }
    }
    out
}

/// Run one layer, tiling it over SRAM-sized parts when the working set
/// does not fit in one pass.
pub fn execute_layer(
    core: &mut ConvCore,
    cfg: &LayerConfig,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
) -> Result<(Tensor<LogCode>, LayerMetrics)> {
    if core.sram.fits(cfg) {
        return run_layer(core, cfg, input, weights);
    }
    let plan = tile_for_sram(cfg, &core.sram)?;
    let mut out = Tensor::filled(cfg.out_w, cfg.out_h, cfg.out_c, LogCode::ZERO);
    let mut cycles = 0u64;
    for part in &plan.parts {
        let sub_in = slice_rows(input, part.row0, part.cfg.in_h);
        let sub_w = slice_filters(weights, cfg, part.filter0, &part.cfg);
        let (sub_out, m) = run_layer(core, &part.cfg, &sub_in, &sub_w)?;
        cycles += m.cycles;
        let out_row0 = part.row0 / cfg.stride;
        for ch in 0..sub_out.c {
            let plane = if cfg.conv_type == ConvType::Depthwise {
                ch
            } else {
                part.filter0 + ch
            };
            for y in 0..sub_out.h {
                for x in 0..sub_out.w {
                    out.set(x, out_row0 + y, plane, sub_out.get(x, y, ch));
                }
            }
        }
    }
    let m = metrics::layer_metrics_with_cycles(cfg, cycles, core.clock_hz, plan.ddr.total());
    Ok((out, m))
}

fn slice_rows(t: &Tensor<LogCode>, row0: u32, rows: u32) -> Tensor<LogCode> {
    let mut out = Tensor::filled(t.w, rows, t.c, LogCode::ZERO);
    for ch in 0..t.c {
        for y in 0..rows {
            for x in 0..t.w {
                out.set(x, y, ch, t.get(x, row0 + y, ch));
            }
        }
    }
    out
}

fn slice_filters(
    w: &Weights<LogCode>,
    cfg: &LayerConfig,
    filter0: u32,
    sub: &LayerConfig,
) -> Weights<LogCode> {
    if cfg.conv_type == ConvType::Depthwise {
        return w.clone();
    }
    let filters = sub.out_c;
    let mut out = Weights::filled(w.kernel, w.channels_per_filter, filters, LogCode::ZERO);
    for f in 0..filters {
        for ch in 0..w.channels_per_filter {
            for ky in 0..w.kernel {
                for kx in 0..w.kernel {
                    out.set(kx, ky, ch, f, w.get(kx, ky, ch, filter0 + f));
                }
            }
        }
    }
    out
}

fn verify_against_oracle(
    core: &ConvCore,
    cfg: &LayerConfig,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    simulated: &Tensor<LogCode>,
    name: &str,
) -> Result<()> {
    let psums = conv2d_quant_oracle(input, weights, cfg, &core.params, &core.fmt)?;
    let expect = post_process(&psums, &core.log_table);
    for f in 0..cfg.out_c {
        for y in 0..cfg.out_h {
            for x in 0..cfg.out_w {
                let (got, want) = (simulated.get(x, y, f), expect.get(x, y, f));
                if got != want {
                    return Err(Error::Verify(format!(
                        "layer '{name}' first differs at (filter {f}, y {y}, x {x}): simulator {got:?}, oracle {want:?}"
                    )));
                }
            }
        }
    }
    Ok(())
}
