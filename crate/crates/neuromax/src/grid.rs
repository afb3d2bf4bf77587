//! Top-level CONV core: six PE matrices, the adder stages, an SRAM capacity
//! model, post-processing (ReLU + log requantization) and layer execution.
//!
//! Execution is bit-exact: all reductions fold left to right with
//! saturating psum adds in a fixed canonical order (filter columns, then
//! filter rows, then matrices ascending, then channel passes), which is the
//! order the reference oracle mirrors.

use crate::dataflow::{
    plan_layer, BoundaryRegister, ConvType, LayerConfig, OutWire, Part, Plan, PosCycle,
    Schedule, BOUNDARY_REGS,
};
use crate::error::{Error, Result};
use crate::metrics::{self, LayerMetrics};
use crate::pe::{
    adder_net0, matrix_compute_flagged, MatrixInputs, MatrixPsums, MatrixWeights, PsumFormat,
    ThreadLut, MATRIX_COLS, MATRIX_ROWS, PE_MATRICES, THREADS_PER_PE,
};
use crate::quantizer::{log_quantize, LogCode, LogTable, QuantParams, DEFAULT_TABLE_CAP};

/// Bits per stored activation code (6-bit code, no sign).
pub const ACT_BITS: u64 = 6;
/// Bits per stored weight code (sign + 6-bit code).
pub const WEIGHT_BITS: u64 = 7;
/// Bits per output element while psums are resident on-core.
pub const OUT_BITS: u64 = 16;

/// Dense tensor with channel-major planes; (x, y) is row-major inside a
/// plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub w: u32,
    pub h: u32,
    pub c: u32,
    data: Vec<T>,
}

impl<T: Copy> Tensor<T> {
    pub fn filled(w: u32, h: u32, c: u32, v: T) -> Tensor<T> {
        Tensor {
            w,
            h,
            c,
            data: vec![v; (w as usize) * (h as usize) * (c as usize)],
        }
    }

    pub fn from_vec(w: u32, h: u32, c: u32, data: Vec<T>) -> Result<Tensor<T>> {
        if data.len() != (w as usize) * (h as usize) * (c as usize) {
            return Err(Error::Shape(format!(
                "tensor payload is {} elements, dims say {}x{}x{}",
                data.len(),
                w,
                h,
                c
            )));
        }
        Ok(Tensor { w, h, c, data })
    }

    #[inline]
    pub fn idx(&self, x: u32, y: u32, ch: u32) -> usize {
        ((ch as usize * self.h as usize + y as usize) * self.w as usize) + x as usize
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, ch: u32) -> T {
        self.data[self.idx(x, y, ch)]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, ch: u32, v: T) {
        let i = self.idx(x, y, ch);
        self.data[i] = v;
    }

    /// Read with virtual zero padding outside the stored extent.
    #[inline]
    pub fn get_or(&self, x: i64, y: i64, ch: u32, default: T) -> T {
        if x < 0 || y < 0 || x >= self.w as i64 || y >= self.h as i64 {
            default
        } else {
            self.get(x as u32, y as u32, ch)
        }
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Filter bank. `channels_per_filter` is the input-channel extent of one
/// filter: `in_c` for standard/pointwise convolutions, 1 for depthwise.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights<T> {
    pub kernel: u32,
    pub channels_per_filter: u32,
    pub filters: u32,
    data: Vec<T>,
}

impl<T: Copy> Weights<T> {
    pub fn filled(kernel: u32, channels_per_filter: u32, filters: u32, v: T) -> Weights<T> {
        let n = (kernel * kernel * channels_per_filter * filters) as usize;
        Weights {
            kernel,
            channels_per_filter,
            filters,
            data: vec![v; n],
        }
    }

    pub fn from_vec(
        kernel: u32,
        channels_per_filter: u32,
        filters: u32,
        data: Vec<T>,
    ) -> Result<Weights<T>> {
        if data.len() != (kernel * kernel * channels_per_filter * filters) as usize {
            return Err(Error::Shape(format!(
                "weight payload is {} elements, dims say {}x{}x{}x{}",
                data.len(),
                kernel,
                kernel,
                channels_per_filter,
                filters
            )));
        }
        Ok(Weights {
            kernel,
            channels_per_filter,
            filters,
            data,
        })
    }

    #[inline]
    pub fn idx(&self, kx: u32, ky: u32, ch: u32, f: u32) -> usize {
        (((f as usize * self.channels_per_filter as usize + ch as usize) * self.kernel as usize
            + ky as usize)
            * self.kernel as usize)
            + kx as usize
    }

    #[inline]
    pub fn get(&self, kx: u32, ky: u32, ch: u32, f: u32) -> T {
        self.data[self.idx(kx, ky, ch, f)]
    }

    pub fn set(&mut self, kx: u32, ky: u32, ch: u32, f: u32, v: T) {
        let i = self.idx(kx, ky, ch, f);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn expected_shape(cfg: &LayerConfig) -> (u32, u32, u32) {
        match cfg.conv_type {
            ConvType::Depthwise => (cfg.kernel, 1, cfg.in_c),
            _ => (cfg.kernel, cfg.in_c, cfg.out_c),
        }
    }
}

/// On-core SRAM capacities in bits, split between the weight, input and
/// output regions. The default models a 3.8 Mb budget: one third each for
/// weights and inputs, half the remainder for outputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SramModel {
    pub weight_bits: u64,
    pub input_bits: u64,
    pub output_bits: u64,
}

impl Default for SramModel {
    fn default() -> Self {
        SramModel::with_total_bits(3_800_000)
    }
}

impl SramModel {
    pub fn with_total_bits(total: u64) -> SramModel {
        SramModel {
            weight_bits: total / 3,
            input_bits: total / 3,
            output_bits: total / 6,
        }
    }

    pub fn from_kilobytes(kb: u64) -> SramModel {
        SramModel::with_total_bits(kb * 1024 * 8)
    }

    pub fn total_bits(&self) -> u64 {
        self.weight_bits + self.input_bits + self.output_bits
    }

    fn layer_demand(cfg: &LayerConfig) -> (u64, u64, u64) {
        let (k, cpf, f) = Weights::<LogCode>::expected_shape(cfg);
        let w_bits = (k * k) as u64 * cpf as u64 * f as u64 * WEIGHT_BITS;
        let in_bits = cfg.in_w as u64 * cfg.in_h as u64 * cfg.in_c as u64 * ACT_BITS;
        let out_bits = cfg.out_w as u64 * cfg.out_h as u64 * cfg.out_c as u64 * OUT_BITS;
        (w_bits, in_bits, out_bits)
    }

    /// Whether a layer's full working set is resident without tiling.
    pub fn fits(&self, cfg: &LayerConfig) -> bool {
        let (w, i, o) = SramModel::layer_demand(cfg);
        w <= self.weight_bits && i <= self.input_bits && o <= self.output_bits
    }
}

/// Diagnostic counters accumulated while running layers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CoreStats {
    pub shift_saturations: u64,
    pub max_boundary_occupancy: usize,
    pub max_deferred_psums_per_cycle: u32,
    pub max_stored_slots_per_cycle: u32,
}

/// The CONV core: quantization parameters, thread LUT, post-processing log
/// table, SRAM model and clock.
#[derive(Debug, Clone)]
pub struct ConvCore {
    pub params: QuantParams,
    pub fmt: PsumFormat,
    pub lut: ThreadLut,
    pub log_table: LogTable,
    pub sram: SramModel,
    pub clock_hz: f64,
    pub stats: CoreStats,
}

impl ConvCore {
    pub fn new(clock_hz: f64) -> Result<ConvCore> {
        ConvCore::with(
            QuantParams::accelerator(),
            PsumFormat::default(),
            SramModel::default(),
            clock_hz,
        )
    }

    pub fn with(
        params: QuantParams,
        fmt: PsumFormat,
        sram: SramModel,
        clock_hz: f64,
    ) -> Result<ConvCore> {
        if !(clock_hz.is_finite() && clock_hz > 0.0) {
            return Err(Error::Config(format!("bad clock frequency {clock_hz}")));
        }
        let lut = ThreadLut::new(params.n, &fmt)?;
        let log_table = LogTable::build(&params, &fmt, DEFAULT_TABLE_CAP)?;
        Ok(ConvCore {
            params,
            fmt,
            lut,
            log_table,
            sram,
            clock_hz,
            stats: CoreStats::default(),
        })
    }

    /// The default 200 MHz core.
    pub fn default_core() -> Result<ConvCore> {
        ConvCore::new(200e6)
    }
}

fn check_shapes(
    cfg: &LayerConfig,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
) -> Result<()> {
    if (input.w, input.h, input.c) != (cfg.in_w, cfg.in_h, cfg.in_c) {
        return Err(Error::Shape(format!(
            "input is {}x{}x{}, layer expects {}x{}x{}",
            input.w, input.h, input.c, cfg.in_w, cfg.in_h, cfg.in_c
        )));
    }
    let want = Weights::<LogCode>::expected_shape(cfg);
    let got = (weights.kernel, weights.channels_per_filter, weights.filters);
    if got != want {
        return Err(Error::Shape(format!(
            "weights are k{} x {} x {}, layer expects k{} x {} x {}",
            got.0, got.1, got.2, want.0, want.1, want.2
        )));
    }
    Ok(())
}

/// Per-matrix work binding for one (pass, filter) repetition.
#[derive(Clone, Copy)]
struct MatrixBind {
    channel: u32,
    weight_channel: u32,
    filter: u32,
    out_plane: u32,
}

fn bind_matrices(cfg: &LayerConfig, pass: u32, frep: u32) -> [Option<MatrixBind>; PE_MATRICES] {
    let mut binds = [None; PE_MATRICES];
    for (m, bind) in binds.iter_mut().enumerate() {
        let ch = pass * PE_MATRICES as u32 + m as u32;
        if ch < cfg.in_c {
            *bind = Some(match cfg.conv_type {
                ConvType::Depthwise => MatrixBind {
                    channel: ch,
                    weight_channel: 0,
                    filter: ch,
                    out_plane: ch,
                },
                _ => MatrixBind {
                    channel: ch,
                    weight_channel: ch,
                    filter: frep,
                    out_plane: frep,
                },
            });
        }
    }
    binds
}

/// Run a planned layer and return the raw psum planes. Exposed so the
/// verification driver can compare pre-quantization values bit for bit.
pub fn run_layer_psums(
    core: &mut ConvCore,
    cfg: &LayerConfig,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
) -> Result<(Tensor<i64>, LayerMetrics)> {
    let sched = plan_layer(cfg)?;
    run_plan(core, &sched, input, weights, &DEFAULT_EVAL_ORDER)
}

/// Matrix evaluation order. Results are merged in ascending matrix index
/// regardless, so any order yields bit-identical outputs; the knob exists
/// to let tests demonstrate that.
pub const DEFAULT_EVAL_ORDER: [usize; PE_MATRICES] = [0, 1, 2, 3, 4, 5];

/// Execute a schedule. Takes the plan explicitly so tests can inject
/// wiring faults or permute the evaluation order.
pub fn run_plan(
    core: &mut ConvCore,
    sched: &Schedule,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    eval_order: &[usize; PE_MATRICES],
) -> Result<(Tensor<i64>, LayerMetrics)> {
    let cfg = &sched.cfg;
    check_shapes(cfg, input, weights)?;
    if !core.sram.fits(cfg) {
        return Err(Error::Sram(format!(
            "layer working set exceeds SRAM regions; tile it first ({}x{}x{} -> {} filters)",
            cfg.in_w, cfg.in_h, cfg.in_c, cfg.out_c
        )));
    }

    let mut plane = Tensor::filled(cfg.out_w, cfg.out_h, cfg.out_c, 0i64);
    match &sched.plan {
        Plan::Sector(sweep) => exec_sector(core, sched, sweep, input, weights, &mut plane, eval_order)?,
        Plan::TwoPhase(tiles) => exec_two_phase(core, sched, tiles, input, weights, &mut plane, eval_order)?,
        Plan::Position(cycles) => exec_position(core, sched, cycles, input, weights, &mut plane, eval_order)?,
    }

    core.stats.max_deferred_psums_per_cycle = core
        .stats
        .max_deferred_psums_per_cycle
        .max(sched.max_deferred_psums);
    core.stats.max_stored_slots_per_cycle = core
        .stats
        .max_stored_slots_per_cycle
        .max(sched.max_stored_slots);

    let (w_elems, in_elems, out_elems) = (
        weights.data().len() as u64,
        input.len() as u64,
        plane.len() as u64,
    );
    let metrics = metrics::layer_metrics_with_cycles(
        cfg,
        sched.cycles,
        core.clock_hz,
        in_elems + w_elems + out_elems,
    );
    Ok((plane, metrics))
}

/// ReLU then nearest-log-code requantization via the precomputed table.
pub fn post_process(psums: &Tensor<i64>, table: &LogTable) -> Tensor<LogCode> {
    let mut out = Tensor::filled(psums.w, psums.h, psums.c, LogCode::ZERO);
    for ch in 0..psums.c {
        for y in 0..psums.h {
            for x in 0..psums.w {
                let raw = psums.get(x, y, ch);
                if raw > 0 {
                    out.set(x, y, ch, table.lookup(raw));
                }
            }
        }
    }
    out
}

/// Full layer execution: plan, run, post-process.
pub fn run_layer(
    core: &mut ConvCore,
    cfg: &LayerConfig,
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
) -> Result<(Tensor<LogCode>, LayerMetrics)> {
    let (planes, metrics) = run_layer_psums(core, cfg, input, weights)?;
    Ok((post_process(&planes, &core.log_table), metrics))
}

fn exec_sector(
    core: &mut ConvCore,
    sched: &Schedule,
    sweep: &[crate::dataflow::TileCycle],
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    plane: &mut Tensor<i64>,
    eval_order: &[usize; PE_MATRICES],
) -> Result<()> {
    let cfg = &sched.cfg;
    let fmt = core.fmt;
    for pass in 0..sched.ch_passes {
        for frep in 0..sched.filter_reps {
            let binds = bind_matrices(cfg, pass, frep);
            // one 3x3 weight broadcast per matrix, constant over the sweep
            let bcast: Vec<Option<MatrixWeights>> = binds
                .iter()
                .map(|b| b.map(|b| broadcast_3x3(weights, &b)))
                .collect();
            let mut regs: Vec<[BoundaryRegister; BOUNDARY_REGS]> = (0..PE_MATRICES)
                .map(|_| {
                    [
                        BoundaryRegister::new(cfg.in_w as usize),
                        BoundaryRegister::new(cfg.in_w as usize),
                    ]
                })
                .collect();

            for tc in sweep {
                let mut psums = [[0i64; 18]; PE_MATRICES];
                for &m in eval_order {
                    let Some(bind) = binds[m] else { continue };
                    let inputs = gather_tile(input, tc.col0, tc.row0, bind.channel);
                    psums[m] = matrix_psums(core, &inputs, bcast[m].as_ref().unwrap(), &fmt);
                }
                for d in &tc.defers {
                    for m in 0..PE_MATRICES {
                        if binds[m].is_none() {
                            continue;
                        }
                        let v = fold_slots(&psums[m], &d.slots, &fmt);
                        let reg = &mut regs[m][d.reg as usize];
                        reg.push(v)?;
                        core.stats.max_boundary_occupancy =
                            core.stats.max_boundary_occupancy.max(reg.len());
                    }
                }
                for wire in &tc.outputs {
                    accumulate_wire(plane, tc.col, wire, &psums, &binds, &mut regs, &fmt)?;
                }
            }

            for mregs in &regs {
                for r in mregs {
                    if !r.is_empty() {
                        return Err(Error::Boundary(
                            "register not drained at end of layer".into(),
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

fn accumulate_wire(
    plane: &mut Tensor<i64>,
    col: u32,
    wire: &OutWire,
    psums: &[MatrixPsums; PE_MATRICES],
    binds: &[Option<MatrixBind>; PE_MATRICES],
    regs: &mut [[BoundaryRegister; BOUNDARY_REGS]],
    fmt: &PsumFormat,
) -> Result<()> {
    for m in 0..PE_MATRICES {
        let Some(bind) = binds[m] else { continue };
        let mut acc: Option<i64> = None;
        for part in &wire.parts {
            let v = match part {
                Part::Slot { row, thread } => {
                    psums[m][THREADS_PER_PE * *row as usize + *thread as usize]
                }
                Part::Stored { reg } => regs[m][*reg as usize].pop()?,
            };
            acc = Some(match acc {
                None => v,
                Some(a) => fmt.sat_add(a, v),
            });
        }
        let idx = plane.idx(col, wire.out_row, bind.out_plane);
        let merged = fmt.sat_add(plane.data()[idx], acc.unwrap_or(0));
        plane.set(col, wire.out_row, bind.out_plane, merged);
    }
    Ok(())
}

fn fold_slots(psums: &MatrixPsums, slots: &[(u8, u8)], fmt: &PsumFormat) -> i64 {
    let mut acc: Option<i64> = None;
    for (row, thread) in slots {
        let v = psums[THREADS_PER_PE * *row as usize + *thread as usize];
        acc = Some(match acc {
            None => v,
            Some(a) => fmt.sat_add(a, v),
        });
    }
    acc.unwrap_or(0)
}

fn gather_tile(input: &Tensor<LogCode>, col0: u32, row0: u32, ch: u32) -> MatrixInputs {
    let mut tile = [[LogCode::ZERO; MATRIX_COLS]; MATRIX_ROWS];
    for (r, row) in tile.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = input.get_or(col0 as i64 + c as i64, row0 as i64 + r as i64, ch, LogCode::ZERO);
        }
    }
    tile
}

/// 2D weight broadcast for the 3x3 path: every PE row holds the same
/// array; thread j of column c carries filter tap (row j, col c).
fn broadcast_3x3(weights: &Weights<LogCode>, bind: &MatrixBind) -> MatrixWeights {
    let mut w = [[[LogCode::ZERO; THREADS_PER_PE]; MATRIX_COLS]; MATRIX_ROWS];
    for c in 0..MATRIX_COLS as u32 {
        for j in 0..THREADS_PER_PE as u32 {
            let code = weights.get(c, j, bind.weight_channel, bind.filter);
            for r in 0..MATRIX_ROWS {
                w[r][c as usize][j as usize] = code;
            }
        }
    }
    w
}

fn matrix_psums(
    core: &mut ConvCore,
    inputs: &MatrixInputs,
    weights: &MatrixWeights,
    fmt: &PsumFormat,
) -> MatrixPsums {
    let (products, sats) = matrix_compute_flagged(inputs, weights, &core.lut, fmt);
    core.stats.shift_saturations += sats as u64;
    adder_net0(&products, fmt)
}

fn exec_two_phase(
    core: &mut ConvCore,
    sched: &Schedule,
    tiles: &[crate::dataflow::PhasedTile],
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    plane: &mut Tensor<i64>,
    eval_order: &[usize; PE_MATRICES],
) -> Result<()> {
    let cfg = &sched.cfg;
    let fmt = core.fmt;
    let k = cfg.kernel;
    for pass in 0..sched.ch_passes {
        for frep in 0..sched.filter_reps {
            let binds = bind_matrices(cfg, pass, frep);
            // per-phase weight broadcasts, constant over the sweep
            let bcast: Vec<Option<[MatrixWeights; 2]>> = binds
                .iter()
                .map(|b| b.map(|b| [broadcast_high(weights, &b, k, 0), broadcast_high(weights, &b, k, 1)]))
                .collect();

            for tile in tiles {
                let col0 = tile.col * cfg.stride;
                let mut psums = [[[0i64; 18]; PE_MATRICES]; 2];
                for phase in 0..2usize {
                    for &m in eval_order {
                        let Some(bind) = binds[m] else { continue };
                        let inputs =
                            gather_tile(input, col0 + 3 * phase as u32, tile.row0, bind.channel);
                        psums[phase][m] =
                            matrix_psums(core, &inputs, &bcast[m].as_ref().unwrap()[phase], &fmt);
                    }
                }
                for out in &tile.outputs {
                    for m in 0..PE_MATRICES {
                        let Some(bind) = binds[m] else { continue };
                        let mut acc: Option<i64> = None;
                        for t in &out.terms {
                            let v = psums[t.phase as usize][m]
                                [THREADS_PER_PE * t.row as usize + t.thread as usize];
                            acc = Some(match acc {
                                None => v,
                                Some(a) => fmt.sat_add(a, v),
                            });
                        }
                        let idx = plane.idx(tile.col, out.out_row, bind.out_plane);
                        let merged = fmt.sat_add(plane.data()[idx], acc.unwrap_or(0));
                        plane.set(tile.col, out.out_row, bind.out_plane, merged);
                    }
                }
            }
        }
    }
    Ok(())
}

/// Weight broadcast for the two-phase path. Thread j of PE row r carries
/// filter row j (upper diagonals) or j + 3 (lower diagonals); phase p maps
/// PE columns to filter columns 3p..3p+3, zero beyond the kernel edge.
fn broadcast_high(weights: &Weights<LogCode>, bind: &MatrixBind, k: u32, phase: u32) -> MatrixWeights {
    let mut w = [[[LogCode::ZERO; THREADS_PER_PE]; MATRIX_COLS]; MATRIX_ROWS];
    for r in 0..MATRIX_ROWS as u32 {
        for c in 0..MATRIX_COLS as u32 {
            let kx = 3 * phase + c;
            if kx >= k {
                continue;
            }
            for j in 0..THREADS_PER_PE as u32 {
                if let Some(ky) = crate::dataflow::high_kernel_filter_row(k, r as u8, j as u8) {
                    w[r as usize][c as usize][j as usize] =
                        weights.get(kx, ky as u32, bind.weight_channel, bind.filter);
                }
            }
        }
    }
    w
}

fn exec_position(
    core: &mut ConvCore,
    sched: &Schedule,
    cycles: &[PosCycle],
    input: &Tensor<LogCode>,
    weights: &Weights<LogCode>,
    plane: &mut Tensor<i64>,
    eval_order: &[usize; PE_MATRICES],
) -> Result<()> {
    let cfg = &sched.cfg;
    let fmt = core.fmt;
    for pass in 0..sched.ch_passes {
        for fg in 0..sched.filter_reps {
            // matrix m holds channels 18*pass + 3m .., threads hold filters 3*fg ..
            let mut bcast = [[[[LogCode::ZERO; THREADS_PER_PE]; MATRIX_COLS]; MATRIX_ROWS]; PE_MATRICES];
            let mut active = [false; PE_MATRICES];
            for m in 0..PE_MATRICES {
                let ch0 = 18 * pass + 3 * m as u32;
                if ch0 >= cfg.in_c {
                    continue;
                }
                active[m] = true;
                for c in 0..MATRIX_COLS as u32 {
                    let ch = ch0 + c;
                    if ch >= cfg.in_c {
                        continue;
                    }
                    for j in 0..THREADS_PER_PE as u32 {
                        let f = 3 * fg + j;
                        if f >= cfg.out_c {
                            continue;
                        }
                        let code = weights.get(0, 0, ch, f);
                        for r in 0..MATRIX_ROWS {
                            bcast[m][r][c as usize][j as usize] = code;
                        }
                    }
                }
            }

            for pc in cycles {
                let mut psums = [[0i64; 18]; PE_MATRICES];
                for &m in eval_order {
                    if !active[m] {
                        continue;
                    }
                    let ch0 = 18 * pass + 3 * m as u32;
                    let mut tile = [[LogCode::ZERO; MATRIX_COLS]; MATRIX_ROWS];
                    for r in 0..pc.count as u64 {
                        let pos = pc.pos0 + r;
                        let (ox, oy) = (
                            (pos % cfg.out_w as u64) as u32,
                            (pos / cfg.out_w as u64) as u32,
                        );
                        for c in 0..MATRIX_COLS as u32 {
                            if ch0 + c < cfg.in_c {
                                tile[r as usize][c as usize] =
                                    input.get(ox * cfg.stride, oy * cfg.stride, ch0 + c);
                            }
                        }
                    }
                    psums[m] = matrix_psums(core, &tile, &bcast[m], &fmt);
                }

                for r in 0..pc.count as u64 {
                    let pos = pc.pos0 + r;
                    let (ox, oy) = (
                        (pos % cfg.out_w as u64) as u32,
                        (pos / cfg.out_w as u64) as u32,
                    );
                    for j in 0..THREADS_PER_PE as u32 {
                        let f = 3 * fg + j;
                        if f >= cfg.out_c {
                            continue;
                        }
                        for m in 0..PE_MATRICES {
                            if !active[m] {
                                continue;
                            }
                            let v = psums[m][THREADS_PER_PE * r as usize + j as usize];
                            let idx = plane.idx(ox, oy, f);
                            let merged = fmt.sat_add(plane.data()[idx], v);
                            plane.set(ox, oy, f, merged);
                        }
                    }
                }
            }
        }
    }
    Ok(())
}

/// One sub-run of a tiled layer.
#[derive(Debug, Clone)]
pub struct TilePart {
    pub cfg: LayerConfig,
    pub row0: u32,
    pub filter0: u32,
}

/// Abstract off-chip transfer counts, one byte per element. Psum traffic is
/// structurally zero: partial sums never leave the core.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DdrCounts {
    pub input_bytes: u64,
    pub weight_bytes: u64,
    pub output_bytes: u64,
    pub psum_bytes: u64,
}

impl DdrCounts {
    pub fn total(&self) -> u64 {
        self.input_bytes + self.weight_bytes + self.output_bytes + self.psum_bytes
    }
}

#[derive(Debug, Clone)]
pub struct TilePlan {
    pub parts: Vec<TilePart>,
    pub ddr: DdrCounts,
    pub filter_splits: u32,
    pub band_splits: u32,
}

/// Partition a layer whose working set exceeds SRAM into filter groups and
/// horizontal input bands that fit. Returns the sub-configs plus abstract
/// DDR transfer counts; weights are re-read once per band when the input is
/// banded, inputs once per filter group, whichever costs less.
pub fn tile_for_sram(cfg: &LayerConfig, sram: &SramModel) -> Result<TilePlan> {
    let k = cfg.kernel;
    let st = cfg.stride;
    let depthwise = cfg.conv_type == ConvType::Depthwise;
    let cpf: u64 = if depthwise { 1 } else { cfg.in_c as u64 };
    let bits_per_filter = (k * k) as u64 * cpf * WEIGHT_BITS;

    let max_filters = (sram.weight_bits / bits_per_filter).min(cfg.out_c as u64) as u32;
    if max_filters == 0 {
        return Err(Error::Sram(format!(
            "one filter's weights ({bits_per_filter} bits) exceed the weight region"
        )));
    }

    // largest input band (in output rows) whose input and output slices fit
    let row_bits = cfg.in_w as u64 * cfg.in_c as u64 * ACT_BITS;
    let out_row_bits = |filters: u32| cfg.out_w as u64 * filters as u64 * OUT_BITS;
    let mut filters_per_group = max_filters;
    let band_out_rows = loop {
        let mut best = 0u32;
        for out_rows in 1..=cfg.out_h {
            let in_rows = ((out_rows - 1) * st + k).min(cfg.in_h);
            let fits_in = in_rows as u64 * row_bits <= sram.input_bits;
            let fits_out = out_rows as u64 * out_row_bits(filters_per_group) <= sram.output_bits;
            if fits_in && fits_out {
                best = out_rows;
            } else {
                break;
            }
        }
        if best > 0 {
            break best;
        }
        // a single output row does not fit: shrink the filter group
        if filters_per_group > 1 {
            filters_per_group = filters_per_group.div_ceil(2);
            continue;
        }
        return Err(Error::Sram(
            "a single tile with one weight broadcast exceeds SRAM".into(),
        ));
    };

    let filter_groups = if depthwise { 1 } else { cfg.out_c.div_ceil(filters_per_group) };
    let bands = cfg.out_h.div_ceil(band_out_rows);

    let mut parts = Vec::new();
    let mut banded_input_elems = 0u64;
    for b in 0..bands {
        let out_row0 = b * band_out_rows;
        let out_rows = band_out_rows.min(cfg.out_h - out_row0);
        let in_row0 = out_row0 * st;
        let in_rows = ((out_rows - 1) * st + k).min(cfg.in_h - in_row0);
        banded_input_elems += in_rows as u64 * cfg.in_w as u64 * cfg.in_c as u64;
        for g in 0..filter_groups {
            let f0 = g * filters_per_group;
            let fcount = filters_per_group.min(cfg.out_c - f0);
            let sub = LayerConfig::new(
                cfg.conv_type,
                k,
                st,
                cfg.in_w,
                in_rows,
                cfg.in_c,
                if depthwise { cfg.in_c } else { fcount },
            )?;
            parts.push(TilePart {
                cfg: sub,
                row0: in_row0,
                filter0: f0,
            });
        }
    }

    let weight_elems = (k * k) as u64 * cpf * cfg.out_c as u64;
    let out_elems = cfg.out_w as u64 * cfg.out_h as u64 * cfg.out_c as u64;
    // loop-order choice: filter groups outer (re-reads the input bands per
    // group) vs bands outer (re-reads the weights per band)
    let filter_outer = banded_input_elems * filter_groups as u64 + weight_elems;
    let band_outer = banded_input_elems + weight_elems * bands as u64;
    let ddr = if filter_outer <= band_outer {
        DdrCounts {
            input_bytes: banded_input_elems * filter_groups as u64,
            weight_bytes: weight_elems,
            output_bytes: out_elems,
            psum_bytes: 0,
        }
    } else {
        DdrCounts {
            input_bytes: banded_input_elems,
            weight_bytes: weight_elems * bands as u64,
            output_bytes: out_elems,
            psum_bytes: 0,
        }
    };

    Ok(TilePlan {
        parts,
        ddr,
        filter_splits: filter_groups,
        band_splits: bands,
    })
}

/// Uniform 1/k^2 depthwise weights for average pooling through the
/// convolution path. Quantizing 1/k^2 to a log code is approximate for
/// k = 3 (0.125 instead of 0.111); the error is the quantizer's, not the
/// dataflow's.
pub fn avg_pool_weights(kernel: u32, channels: u32, params: &QuantParams) -> Result<Weights<LogCode>> {
    let inv = 1.0 / (kernel * kernel) as f64;
    let code = log_quantize(inv, params)?;
    Ok(Weights::filled(kernel, 1, channels, code))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantizer::Sign;

    fn core() -> ConvCore {
        ConvCore::default_core().unwrap()
    }

    fn identity_1x1(ch: u32) -> Weights<LogCode> {
        let mut w = Weights::filled(1, ch, 1, LogCode::ZERO);
        for c in 0..ch {
            if c == 0 {
                w.set(0, 0, c, 0, LogCode::new(Sign::Plus, 0));
            }
        }
        w
    }

    #[test]
    fn identity_pointwise_returns_relu_of_input() {
        // single filter with weight code 0 on channel 0: output = input
        let mut core = core();
        let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 4, 3, 1, 1).unwrap();
        let mut input = Tensor::filled(4, 3, 1, LogCode::ZERO);
        for (i, code) in [-3i16, 0, 2, 5, -1, 1, 4, -8, 7, 3, -2, 6].iter().enumerate() {
            input.set(i as u32 % 4, i as u32 / 4, 0, LogCode::activation(*code));
        }
        let (out, _) = run_layer(&mut core, &cfg, &input, &identity_1x1(1)).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(out.get(x, y, 0), input.get(x, y, 0), "at ({x},{y})");
            }
        }
    }

    #[test]
    fn worked_example_metrics() {
        let mut core = core();
        let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 6, 12, 1, 1).unwrap();
        let input = Tensor::filled(6, 12, 1, LogCode::activation(0));
        let weights = Weights::filled(3, 1, 1, LogCode::new(Sign::Plus, 0));
        let (out, m) = run_layer(&mut core, &cfg, &input, &weights).unwrap();
        assert_eq!((out.w, out.h), (4, 10));
        assert_eq!(m.cycles, 8);
        assert_eq!(m.useful_ops, 360);
        assert_eq!(m.ops_per_cycle, 45.0);
        assert!((m.utilization - 45.0 / 54.0).abs() < 1e-12);
        // all-ones 3x3 on constant 1.0 input: every psum is 9.0, log code 2^3.17 -> 3.17 -> code 6
        let expect = core.log_table.lookup(9 * 256);
        assert!(out.data().iter().all(|&c| c == expect));
        assert_eq!(core.stats.max_deferred_psums_per_cycle, 3);
        assert_eq!(core.stats.max_stored_slots_per_cycle, 2);
        // one entry per column sweep cycle, drained by the next sector;
        // bounded by the register capacity (the input width)
        assert_eq!(core.stats.max_boundary_occupancy, 4);
    }

    #[test]
    fn stride2_multichannel_matches_oracle() {
        use crate::reference::conv2d_quant_oracle;
        let mut core = core();
        let cfg = LayerConfig::new(ConvType::Standard, 3, 2, 8, 8, 6, 4).unwrap();
        let mut input = Tensor::filled(8, 8, 6, LogCode::ZERO);
        for ch in 0..6u32 {
            for y in 0..8u32 {
                for x in 0..8u32 {
                    if (x * 5 + y * 3 + ch) % 7 != 0 {
                        input.set(x, y, ch, LogCode::activation(((x + 2 * y + ch) % 11) as i16 - 6));
                    }
                }
            }
        }
        let mut weights = Weights::filled(3, 6, 4, LogCode::ZERO);
        for f in 0..4u32 {
            for ch in 0..6u32 {
                for ky in 0..3u32 {
                    for kx in 0..3u32 {
                        let sign = if (kx + ch + f) % 2 == 0 { Sign::Plus } else { Sign::Minus };
                        weights.set(kx, ky, ch, f, LogCode::new(sign, ((ky + ch) % 5) as i16 - 4));
                    }
                }
            }
        }
        let (planes, _) = run_layer_psums(&mut core, &cfg, &input, &weights).unwrap();
        let oracle =
            conv2d_quant_oracle(&input, &weights, &cfg, &core.params, &core.fmt).unwrap();
        assert_eq!(planes.data(), oracle.data());
    }

    #[test]
    fn post_process_relu_and_requantize() {
        let table = core().log_table;
        let mut psums = Tensor::filled(2, 2, 1, 0i64);
        psums.set(0, 0, 0, -((3.5 * 256.0) as i64));
        psums.set(1, 0, 0, 256);
        psums.set(0, 1, 0, (0.6 * 256.0) as i64);
        let out = post_process(&psums, &table);
        assert!(out.get(0, 0, 0).is_zero);
        assert_eq!(out.get(1, 0, 0), LogCode::new(Sign::Plus, 0));
        assert_eq!(out.get(0, 1, 0).code, -1);
        assert!(out.get(1, 1, 0).is_zero);
    }

    #[test]
    fn sram_tiling_monotone() {
        let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 226, 226, 64, 64).unwrap();
        let small = SramModel::default();
        let plan = tile_for_sram(&cfg, &small).unwrap();
        assert!(plan.parts.len() > 1);
        assert_eq!(plan.ddr.psum_bytes, 0);
        let big = SramModel::with_total_bits(small.total_bits() * 2);
        let plan2 = tile_for_sram(&cfg, &big).unwrap();
        assert!(plan2.parts.len() <= plan.parts.len());
        // resident layer: one part, traffic = in + weights + out
        let tiny = LayerConfig::new(ConvType::Standard, 3, 1, 12, 12, 2, 2).unwrap();
        let plan3 = tile_for_sram(&tiny, &small).unwrap();
        assert_eq!(plan3.parts.len(), 1);
        assert_eq!(plan3.ddr.input_bytes, 12 * 12 * 2);
        assert_eq!(plan3.ddr.weight_bytes, 9 * 2 * 2);
        assert_eq!(plan3.ddr.output_bytes, 10 * 10 * 2);
    }

    #[test]
    fn pointwise_multipass_accumulation_matches_oracle() {
        use crate::reference::conv2d_quant_oracle;
        // 36 channels: two accumulation passes over all six matrices
        let mut core = core();
        let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 5, 4, 36, 5).unwrap();
        let sched = crate::dataflow::plan_layer(&cfg).unwrap();
        assert_eq!(sched.ch_passes, 2);
        let mut input = Tensor::filled(5, 4, 36, LogCode::ZERO);
        for ch in 0..36u32 {
            for y in 0..4u32 {
                for x in 0..5u32 {
                    if (x + y + ch) % 6 != 5 {
                        input.set(x, y, ch, LogCode::activation(((x * 3 + y + ch) % 12) as i16 - 7));
                    }
                }
            }
        }
        let mut weights = Weights::filled(1, 36, 5, LogCode::ZERO);
        for f in 0..5u32 {
            for ch in 0..36u32 {
                let sign = if (f + ch) % 2 == 0 { Sign::Plus } else { Sign::Minus };
                weights.set(0, 0, ch, f, LogCode::new(sign, ((ch + 2 * f) % 9) as i16 - 6));
            }
        }
        let (planes, m) = run_layer_psums(&mut core, &cfg, &input, &weights).unwrap();
        let oracle =
            conv2d_quant_oracle(&input, &weights, &cfg, &core.params, &core.fmt).unwrap();
        assert_eq!(planes.data(), oracle.data());
        assert_eq!(m.useful_ops, 5 * 4 * 36 * 5);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut core = core();
        let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 6, 6, 1, 1).unwrap();
        let input = Tensor::filled(5, 6, 1, LogCode::ZERO);
        let weights = Weights::filled(3, 1, 1, LogCode::ZERO);
        assert!(matches!(
            run_layer(&mut core, &cfg, &input, &weights),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn avg_pool_weight_value() {
        let w = avg_pool_weights(3, 2, &QuantParams::accelerator()).unwrap();
        // 1/9 quantizes to 2^(-3) = 0.125
        assert_eq!(w.get(0, 0, 0, 0).code, -6);
        assert_eq!(w.get(2, 2, 0, 1).code, -6);
    }
}
