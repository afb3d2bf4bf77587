//! The state controller: turns a layer configuration into a cycle-by-cycle
//! schedule of input tiles, weight broadcasts, adder-net-1 wiring and
//! boundary-psum deferrals.
//!
//! Three dataflows cover the supported kernels:
//!
//! * 3x3 (stride 1 or 2): the input is traversed in column sectors of six
//!   rows. Within a sector, one cycle per output column loads a 6x3 tile
//!   and broadcasts the 3x3 weight array to every PE row; thread j of the
//!   PE at (row r, col c) multiplies input (r, c) by weight (row j, col c),
//!   so psum `o[r][j]` is the horizontal 3-tap correlation of input row r
//!   with filter row j. Adder net 1 sums the diagonal (o[R][0], o[R+1][1],
//!   o[R+2][2]) into output row R. Rows 4 and 5 of each sector depend on
//!   the next sector: their psums are pushed into variable-length shift
//!   registers and consumed one sector later. Stride 2 uses the same tiles
//!   with only even row/thread alignments useful, which idles half the
//!   threads.
//! * 1x1: spatial positions map to PE rows (six per cycle), channels to PE
//!   columns (three per matrix, eighteen across the grid) and filters to
//!   threads (three per cycle); cross-matrix channel accumulators reduce
//!   the per-matrix psums.
//! * 4x4 and 5x5: each output needs more filter columns than the matrix has
//!   PE columns, so tiles take two phases (weight columns 0-2, then 3-4
//!   with unused PE columns zeroed). Rows beyond the third diagonal reuse
//!   threads for filter rows 3 and 4; tiles overlap vertically so every
//!   output completes within one tile pair.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::pe::{MATRIX_ROWS, PE_MATRICES, THREADS_PER_PE};

/// Convolution flavor. Depthwise applies one k x k filter per channel with
/// no cross-channel accumulation; pointwise is the 1x1 cross-channel case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvType {
    Standard,
    Depthwise,
    Pointwise,
}

impl std::fmt::Display for ConvType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConvType::Standard => write!(f, "standard"),
            ConvType::Depthwise => write!(f, "depthwise"),
            ConvType::Pointwise => write!(f, "pointwise"),
        }
    }
}

/// One convolution layer's shape parameters. Output dims are derived on
/// construction; padding must be pre-applied to the input dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerConfig {
    pub conv_type: ConvType,
    pub kernel: u32,
    pub stride: u32,
    pub in_w: u32,
    pub in_h: u32,
    pub in_c: u32,
    pub out_c: u32,
    pub out_w: u32,
    pub out_h: u32,
}

impl LayerConfig {
    pub fn new(
        conv_type: ConvType,
        kernel: u32,
        stride: u32,
        in_w: u32,
        in_h: u32,
        in_c: u32,
        out_c: u32,
    ) -> Result<LayerConfig> {
        if !matches!(kernel, 1 | 3 | 4 | 5) {
            return Err(Error::Config(format!(
                "unsupported kernel size {kernel} (supported: 1, 3, 4, 5)"
            )));
        }
        if !matches!(stride, 1 | 2) {
            return Err(Error::Config(format!("unsupported stride {stride}")));
        }
        if in_w == 0 || in_h == 0 || in_c == 0 || out_c == 0 {
            return Err(Error::Config("zero-sized layer dimension".into()));
        }
        match conv_type {
            ConvType::Pointwise if kernel != 1 => {
                return Err(Error::Config("pointwise convolution requires kernel 1".into()));
            }
            ConvType::Depthwise if kernel == 1 => {
                return Err(Error::Config("depthwise convolution requires kernel >= 3".into()));
            }
            ConvType::Depthwise if out_c != in_c => {
                return Err(Error::Config(format!(
                    "depthwise convolution needs out_c == in_c ({out_c} != {in_c})"
                )));
            }
            _ => {}
        }
        let dim = |n: u32| if n >= kernel { (n - kernel) / stride + 1 } else { 0 };
        Ok(LayerConfig {
            conv_type,
            kernel,
            stride,
            in_w,
            in_h,
            in_c,
            out_c,
            out_w: dim(in_w),
            out_h: dim(in_h),
        })
    }

    /// MACs in this layer, counting one op per multiply-accumulate.
    pub fn useful_ops(&self) -> u64 {
        let spatial = self.out_w as u64 * self.out_h as u64;
        let taps = (self.kernel * self.kernel) as u64;
        match self.conv_type {
            ConvType::Depthwise => spatial * taps * self.in_c as u64,
            _ => spatial * taps * self.in_c as u64 * self.out_c as u64,
        }
    }

    /// PE matrices the dataflow assigns work to.
    pub fn active_matrices(&self) -> u32 {
        match self.kernel {
            1 => self.in_c.div_ceil(3).min(PE_MATRICES as u32),
            _ => self.in_c.min(PE_MATRICES as u32),
        }
    }
}

/// Boundary register slot A: the pre-added pair of psums for the first
/// deferred output row (o13 + o17 in the stride-1 pattern).
pub const REG_A: u8 = 0;
/// Boundary register slot B: the single psum for the second deferred row.
pub const REG_B: u8 = 1;
pub const BOUNDARY_REGS: usize = 2;

/// One adder-net-1 input: either a live psum of the current cycle or the
/// head of a boundary register.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Part {
    Slot { row: u8, thread: u8 },
    Stored { reg: u8 },
}

/// Wiring that assembles one output value in one cycle. Parts are listed in
/// filter-row order; the executor folds them left to right with saturating
/// adds, so the order is part of the bit-exact contract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutWire {
    pub out_row: u32,
    pub parts: Vec<Part>,
}

/// Psums written to a boundary register this cycle, pre-added.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Defer {
    pub reg: u8,
    pub out_row: u32,
    pub slots: Vec<(u8, u8)>,
}

/// One cycle of the 3x3 sector dataflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TileCycle {
    pub sector: u32,
    pub col: u32,
    pub row0: u32,
    pub col0: u32,
    pub outputs: Vec<OutWire>,
    pub defers: Vec<Defer>,
}

/// A psum reference inside a two-phase tile: phase 0 holds weight columns
/// 0..3, phase 1 the remaining columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRef {
    pub phase: u8,
    pub row: u8,
    pub thread: u8,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HighOut {
    pub out_row: u32,
    pub terms: Vec<SlotRef>,
}

/// One two-cycle tile of the 4x4 / 5x5 dataflow.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhasedTile {
    pub col: u32,
    pub row0: u32,
    pub outputs: Vec<HighOut>,
}

/// One cycle of the 1x1 dataflow: a group of output positions in raster
/// order. Stride-2 layers load only three positions per cycle (the loader's
/// row-pair structure idles the other half of the matrix).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PosCycle {
    pub pos0: u64,
    pub count: u8,
}

#[derive(Debug, Clone)]
pub enum Plan {
    /// 3x3 path: one sweep of (sector, column) tile cycles.
    Sector(Vec<TileCycle>),
    /// 4x4 / 5x5 path: two cycles per tile.
    TwoPhase(Vec<PhasedTile>),
    /// 1x1 path: position groups.
    Position(Vec<PosCycle>),
}

/// A planned layer: the per-sweep cycle list plus the loop counts that
/// repeat it over channel passes and filters.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub cfg: LayerConfig,
    pub plan: Plan,
    /// Total model cycles: sweep length x channel passes x filter repeats.
    pub cycles: u64,
    pub useful_ops: u64,
    pub active_matrices: u32,
    /// Channel groups processed per pass: 6 matrices x (1 channel, or 3 for 1x1).
    pub ch_passes: u32,
    /// Sweep repetitions over the filter dimension.
    pub filter_reps: u32,
    pub max_deferred_psums: u32,
    pub max_stored_slots: u32,
}

impl Schedule {
    pub fn cycles_per_sweep(&self) -> u64 {
        match &self.plan {
            Plan::Sector(sweep) => sweep.len() as u64,
            Plan::TwoPhase(tiles) => 2 * tiles.len() as u64,
            Plan::Position(cycles) => cycles.len() as u64,
        }
    }

    pub fn ops_per_cycle(&self) -> f64 {
        if self.cycles == 0 {
            0.0
        } else {
            self.useful_ops as f64 / self.cycles as f64
        }
    }
}

/// Filter row held by thread `j` of PE row `r` in the two-phase dataflow,
/// or None for an idle thread. The first three diagonals carry filter rows
/// 0..3, the lower diagonals reuse threads 0..2 for filter rows 3 and 4.
pub fn high_kernel_filter_row(kernel: u32, row: u8, thread: u8) -> Option<u8> {
    let d = row as i32 - thread as i32;
    match d {
        0..=2 => Some(thread),
        3..=5 => {
            let fr = thread + 3;
            (u32::from(fr) < kernel).then_some(fr)
        }
        _ => None,
    }
}

/// Dispatch to the kernel-specific scheduler.
pub fn plan_layer(cfg: &LayerConfig) -> Result<Schedule> {
    if cfg.out_w == 0 || cfg.out_h == 0 {
        // degenerate layer: nothing to do
        return Ok(Schedule {
            cfg: *cfg,
            plan: Plan::Sector(Vec::new()),
            cycles: 0,
            useful_ops: 0,
            active_matrices: 0,
            ch_passes: 0,
            filter_reps: 0,
            max_deferred_psums: 0,
            max_stored_slots: 0,
        });
    }
    match cfg.kernel {
        1 => schedule_1x1(cfg),
        3 => schedule_3x3(cfg),
        4 | 5 => schedule_high(cfg),
        k => Err(Error::Config(format!("unsupported kernel size {k}"))),
    }
}

fn sector_count(in_h: u32) -> u32 {
    in_h.div_ceil(MATRIX_ROWS as u32)
}

/// 3x3 scheduler, stride 1 or 2.
pub fn schedule_3x3(cfg: &LayerConfig) -> Result<Schedule> {
    if cfg.kernel != 3 {
        return Err(Error::Config(format!("schedule_3x3 got kernel {}", cfg.kernel)));
    }
    let st = cfg.stride;
    let sectors = sector_count(cfg.in_h);
    let mut sweep = Vec::with_capacity((sectors * cfg.out_w) as usize);
    let mut max_deferred = 0u32;
    let mut max_stored = 0u32;
    let mut slot_count = 0u64;

    for s in 0..sectors {
        let row0 = s * 6;
        for col in 0..cfg.out_w {
            let mut outputs = Vec::new();
            let mut defers = Vec::new();

            // complete the previous sector's boundary rows
            if s > 0 {
                let base = row0 - 2; // input base row of the straddling output
                if base % st == 0 && base / st < cfg.out_h {
                    outputs.push(OutWire {
                        out_row: base / st,
                        parts: vec![Part::Stored { reg: REG_A }, Part::Slot { row: 0, thread: 2 }],
                    });
                }
                if st == 1 && row0 - 1 < cfg.out_h {
                    outputs.push(OutWire {
                        out_row: row0 - 1,
                        parts: vec![
                            Part::Stored { reg: REG_B },
                            Part::Slot { row: 0, thread: 1 },
                            Part::Slot { row: 1, thread: 2 },
                        ],
                    });
                }
            }

            // rows completing inside this sector
            for rho in (0..=3).step_by(st as usize) {
                let base = row0 + rho;
                if base % st == 0 && base / st < cfg.out_h {
                    outputs.push(OutWire {
                        out_row: base / st,
                        parts: (0..3u8)
                            .map(|j| Part::Slot { row: rho as u8 + j, thread: j })
                            .collect(),
                    });
                }
            }

            // rows straddling the next sector
            let base = row0 + 4;
            if base % st == 0 && base / st < cfg.out_h {
                defers.push(Defer {
                    reg: REG_A,
                    out_row: base / st,
                    slots: vec![(4, 0), (5, 1)],
                });
            }
            if st == 1 && row0 + 5 < cfg.out_h {
                defers.push(Defer {
                    reg: REG_B,
                    out_row: row0 + 5,
                    slots: vec![(5, 0)],
                });
            }

            let deferred: u32 = defers.iter().map(|d| d.slots.len() as u32).sum();
            max_deferred = max_deferred.max(deferred);
            max_stored = max_stored.max(defers.len() as u32);
            slot_count += deferred as u64;
            slot_count += outputs
                .iter()
                .flat_map(|w| &w.parts)
                .filter(|p| matches!(p, Part::Slot { .. }))
                .count() as u64;

            sweep.push(TileCycle {
                sector: s,
                col,
                row0,
                col0: col * st,
                outputs,
                defers,
            });
        }
    }

    // conservation: every useful slot carries 3 products, each MAC once
    debug_assert_eq!(
        slot_count * 3,
        cfg.out_h as u64 * cfg.out_w as u64 * 9,
        "3x3 sweep does not conserve work"
    );

    let ch_passes = cfg.in_c.div_ceil(PE_MATRICES as u32);
    let filter_reps = match cfg.conv_type {
        ConvType::Depthwise => 1,
        _ => cfg.out_c,
    };
    let cycles = sweep.len() as u64 * ch_passes as u64 * filter_reps as u64;
    Ok(Schedule {
        cfg: *cfg,
        useful_ops: cfg.useful_ops(),
        active_matrices: cfg.active_matrices(),
        plan: Plan::Sector(sweep),
        cycles,
        ch_passes,
        filter_reps,
        max_deferred_psums: max_deferred,
        max_stored_slots: max_stored,
    })
}

/// Output offsets (relative to the tile base row) that complete within one
/// 4x4 / 5x5 tile.
pub fn high_kernel_tile_offsets(kernel: u32, stride: u32) -> &'static [u32] {
    match (kernel, stride) {
        (4, 1) => &[0, 1, 2],
        (4, 2) => &[0, 2],
        (5, 1) => &[0, 1],
        (5, 2) => &[0],
        _ => unreachable!("not a high-kernel configuration"),
    }
}

/// 4x4 and 5x5 scheduler: two-phase tiles that overlap vertically.
pub fn schedule_high(cfg: &LayerConfig) -> Result<Schedule> {
    let k = cfg.kernel;
    if !matches!(k, 4 | 5) {
        return Err(Error::Config(format!("schedule_high got kernel {k}")));
    }
    let st = cfg.stride;
    let offsets = high_kernel_tile_offsets(k, st);
    let advance = offsets.last().unwrap() + st;
    let mut tiles = Vec::new();

    for col in 0..cfg.out_w {
        let mut base = 0u32;
        loop {
            let outputs: Vec<HighOut> = offsets
                .iter()
                .filter_map(|&rho| {
                    let in_base = base + rho;
                    (in_base.is_multiple_of(st) && in_base / st < cfg.out_h).then(|| HighOut {
                        out_row: in_base / st,
                        terms: high_out_terms(k, rho),
                    })
                })
                .collect();
            if outputs.is_empty() {
                break;
            }
            tiles.push(PhasedTile { col, row0: base, outputs });
            base += advance;
        }
    }

    let ch_passes = cfg.in_c.div_ceil(PE_MATRICES as u32);
    let filter_reps = match cfg.conv_type {
        ConvType::Depthwise => 1,
        _ => cfg.out_c,
    };
    let cycles = 2 * tiles.len() as u64 * ch_passes as u64 * filter_reps as u64;

    // conservation: each listed output gathers exactly k*k products
    debug_assert_eq!(
        tiles.iter().map(|t| t.outputs.len() as u64).sum::<u64>(),
        cfg.out_h as u64 * cfg.out_w as u64,
    );

    Ok(Schedule {
        cfg: *cfg,
        useful_ops: cfg.useful_ops(),
        active_matrices: cfg.active_matrices(),
        plan: Plan::TwoPhase(tiles),
        cycles,
        ch_passes,
        filter_reps,
        max_deferred_psums: 0,
        max_stored_slots: 0,
    })
}

/// Term list for one two-phase output: filter rows ascending within each
/// phase, phase 0 first. Thread j serves filter row j on the upper
/// diagonals and filter row j + 3 on the lower ones.
fn high_out_terms(kernel: u32, rho: u32) -> Vec<SlotRef> {
    let mut terms = Vec::with_capacity(2 * kernel as usize);
    for phase in 0..2u8 {
        for i in 0..kernel as u8 {
            let row = rho as u8 + i;
            let thread = if i <= 2 { i } else { i - 3 };
            debug_assert_eq!(high_kernel_filter_row(kernel, row, thread), Some(i));
            terms.push(SlotRef { phase, row, thread });
        }
    }
    terms
}

/// 1x1 scheduler: positions to rows, channels to columns, filters to threads.
pub fn schedule_1x1(cfg: &LayerConfig) -> Result<Schedule> {
    if cfg.kernel != 1 {
        return Err(Error::Config(format!("schedule_1x1 got kernel {}", cfg.kernel)));
    }
    let positions = cfg.out_w as u64 * cfg.out_h as u64;
    let per_cycle = if cfg.stride == 1 { 6u64 } else { 3 };
    let mut cycles_v = Vec::with_capacity(positions.div_ceil(per_cycle) as usize);
    let mut pos = 0u64;
    while pos < positions {
        let count = per_cycle.min(positions - pos) as u8;
        cycles_v.push(PosCycle { pos0: pos, count });
        pos += count as u64;
    }
    let ch_passes = cfg.in_c.div_ceil(18);
    let filter_reps = cfg.out_c.div_ceil(3);
    let cycles = cycles_v.len() as u64 * ch_passes as u64 * filter_reps as u64;
    Ok(Schedule {
        cfg: *cfg,
        useful_ops: cfg.useful_ops(),
        active_matrices: cfg.active_matrices(),
        plan: Plan::Position(cycles_v),
        cycles,
        ch_passes,
        filter_reps,
        max_deferred_psums: 0,
        max_stored_slots: 0,
    })
}

/// Variable-length FIFO holding boundary psums between column sectors.
#[derive(Debug, Clone)]
pub struct BoundaryRegister {
    queue: VecDeque<i64>,
    pub max_len: usize,
}

impl BoundaryRegister {
    pub fn new(max_len: usize) -> BoundaryRegister {
        BoundaryRegister {
            queue: VecDeque::new(),
            max_len,
        }
    }

    pub fn push(&mut self, v: i64) -> Result<()> {
        if self.queue.len() >= self.max_len {
            return Err(Error::Boundary(format!(
                "overflow: register already holds {} entries",
                self.queue.len()
            )));
        }
        self.queue.push_back(v);
        Ok(())
    }

    pub fn pop(&mut self) -> Result<i64> {
        self.queue
            .pop_front()
            .ok_or_else(|| Error::Boundary("consume from empty register".into()))
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }
}

/// Verify that every (output position, kernel tap) pair of a single
/// channel/filter plane is produced by exactly one slot of the plan.
pub fn coverage_check(sched: &Schedule) -> Result<()> {
    let cfg = &sched.cfg;
    let k = cfg.kernel as usize;
    let mut seen = vec![0u8; cfg.out_w as usize * cfg.out_h as usize * k * k];
    let mut mark = |out_x: u32, out_y: u32, ky: usize, kx: usize| -> Result<()> {
        let idx = ((out_y as usize * cfg.out_w as usize + out_x as usize) * k + ky) * k + kx;
        seen[idx] += 1;
        if seen[idx] > 1 {
            return Err(Error::Verify(format!(
                "tap (ky {ky}, kx {kx}) of output ({out_x}, {out_y}) covered twice"
            )));
        }
        Ok(())
    };

    match &sched.plan {
        Plan::Sector(sweep) => {
            for tc in sweep {
                for wire in &tc.outputs {
                    for part in &wire.parts {
                        if let Part::Slot { row, thread } = part {
                            for c in 0..3 {
                                mark(tc.col, wire.out_row, *thread as usize, c)?;
                            }
                            let _ = row;
                        }
                    }
                }
                for d in &tc.defers {
                    for (_, thread) in &d.slots {
                        for c in 0..3 {
                            mark(tc.col, d.out_row, *thread as usize, c)?;
                        }
                    }
                }
            }
        }
        Plan::TwoPhase(tiles) => {
            for tile in tiles {
                for out in &tile.outputs {
                    for term in &out.terms {
                        let ky = high_kernel_filter_row(cfg.kernel, term.row, term.thread)
                            .ok_or_else(|| Error::Verify("term on an idle thread".into()))?;
                        for c in 0..3usize {
                            let kx = 3 * term.phase as usize + c;
                            if kx < k {
                                mark(tile.col, out.out_row, ky as usize, kx)?;
                            }
                        }
                    }
                }
            }
        }
        Plan::Position(cycles) => {
            for pc in cycles {
                for r in 0..pc.count as u64 {
                    let pos = pc.pos0 + r;
                    let (x, y) = (pos % cfg.out_w as u64, pos / cfg.out_w as u64);
                    mark(x as u32, y as u32, 0, 0)?;
                }
            }
        }
    }

    if let Some(idx) = seen.iter().position(|&v| v == 0) {
        return Err(Error::Verify(format!("tap index {idx} never covered")));
    }
    Ok(())
}

/// Corrupt one adder-net-1 part of a sector plan. Test hook for the
/// verification driver's fault-injection sanity check.
#[doc(hidden)]
pub fn inject_wiring_fault(sched: &mut Schedule) -> bool {
    if let Plan::Sector(sweep) = &mut sched.plan {
        let mid = sweep.len() / 2;
        if let Some(tc) = sweep.get_mut(mid) {
            for wire in &mut tc.outputs {
                for part in &mut wire.parts {
                    if let Part::Slot { thread, .. } = part {
                        *thread = (*thread + 1) % THREADS_PER_PE as u8;
                        return true;
                    }
                }
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg_3x3(in_w: u32, in_h: u32, stride: u32) -> LayerConfig {
        LayerConfig::new(ConvType::Standard, 3, stride, in_w, in_h, 1, 1).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(LayerConfig::new(ConvType::Standard, 7, 1, 20, 20, 3, 4).is_err());
        assert!(LayerConfig::new(ConvType::Standard, 3, 3, 20, 20, 3, 4).is_err());
        assert!(LayerConfig::new(ConvType::Pointwise, 3, 1, 20, 20, 3, 4).is_err());
        assert!(LayerConfig::new(ConvType::Depthwise, 3, 1, 20, 20, 3, 4).is_err());
        assert!(LayerConfig::new(ConvType::Depthwise, 1, 1, 20, 20, 3, 3).is_err());
        let c = LayerConfig::new(ConvType::Standard, 3, 2, 13, 13, 3, 4).unwrap();
        assert_eq!((c.out_w, c.out_h), (6, 6));
    }

    #[test]
    fn worked_example_cycle_count() {
        // 12-row, 6-column input: 10x4 output over 8 cycles
        let cfg = cfg_3x3(6, 12, 1);
        assert_eq!((cfg.out_w, cfg.out_h), (4, 10));
        let s = plan_layer(&cfg).unwrap();
        assert_eq!(s.cycles, 8);
        assert_eq!(s.useful_ops, 360);
        assert_eq!(s.ops_per_cycle(), 45.0);
        assert_eq!(s.max_deferred_psums, 3);
        assert_eq!(s.max_stored_slots, 2);
        coverage_check(&s).unwrap();
    }

    #[test]
    fn worked_example_defer_pattern() {
        // the three straddling psums are rows 4/5 threads 0/1 and row 5
        // thread 0, stored as two register entries
        let cfg = cfg_3x3(6, 12, 1);
        let s = plan_layer(&cfg).unwrap();
        let Plan::Sector(sweep) = &s.plan else { panic!() };
        let first = &sweep[0];
        assert_eq!(first.defers.len(), 2);
        assert_eq!(first.defers[0].slots, vec![(4, 0), (5, 1)]);
        assert_eq!(first.defers[0].out_row, 4);
        assert_eq!(first.defers[1].slots, vec![(5, 0)]);
        assert_eq!(first.defers[1].out_row, 5);
        // second sector consumes them and defers nothing
        let later = &sweep[4];
        assert_eq!(later.sector, 1);
        assert!(later.defers.is_empty());
        assert_eq!(later.outputs[0].parts[0], Part::Stored { reg: REG_A });
    }

    #[test]
    fn stride_2_dims_and_parity() {
        let cfg = cfg_3x3(7, 13, 2);
        assert_eq!((cfg.out_w, cfg.out_h), (3, 6));
        let s = plan_layer(&cfg).unwrap();
        coverage_check(&s).unwrap();
        // 3 sectors x 3 columns
        assert_eq!(s.cycles, 9);
        assert_eq!(s.max_deferred_psums, 2);
        assert_eq!(s.max_stored_slots, 1);
    }

    #[test]
    fn pointwise_worked_example() {
        // 3x6 spatial, 6 channels, 6 filters: 6 cycles on 2 matrices
        let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 3, 6, 6, 6).unwrap();
        let s = plan_layer(&cfg).unwrap();
        assert_eq!(s.cycles, 6);
        assert_eq!(s.useful_ops, 648);
        assert_eq!(s.ops_per_cycle(), 108.0);
        assert_eq!(s.active_matrices, 2);
        coverage_check(&s).unwrap();
    }

    #[test]
    fn pointwise_channel_grouping() {
        let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 4, 4, 3, 2).unwrap();
        assert_eq!(plan_layer(&cfg).unwrap().active_matrices, 1);
        // 36 channels: two accumulation passes over 6 matrices
        let cfg = LayerConfig::new(ConvType::Pointwise, 1, 1, 4, 4, 36, 2).unwrap();
        let s = plan_layer(&cfg).unwrap();
        assert_eq!(s.ch_passes, 2);
        assert_eq!(s.useful_ops, 16 * 36 * 2);
    }

    #[test]
    fn five_by_five_output_equations() {
        // The first two outputs of a 5x5 tile gather exactly the psum sets
        // {o1,o5,o9,o10,o14} and {o4,o8,o12,o13,o17} (1-based adder-net-0
        // indices); the second phase repeats the same adder inputs for the
        // last two filter columns.
        let cfg = LayerConfig::new(ConvType::Standard, 5, 1, 7, 7, 1, 1).unwrap();
        let s = plan_layer(&cfg).unwrap();
        let Plan::TwoPhase(tiles) = &s.plan else { panic!() };
        let tile = &tiles[0];
        let collect = |out: usize, phase: u8| -> Vec<usize> {
            tile.outputs[out]
                .terms
                .iter()
                .filter(|t| t.phase == phase)
                .map(|t| 3 * t.row as usize + t.thread as usize + 1)
                .collect()
        };
        assert_eq!(collect(0, 0), vec![1, 5, 9, 10, 14]);
        assert_eq!(collect(0, 1), vec![1, 5, 9, 10, 14]);
        assert_eq!(collect(1, 0), vec![4, 8, 12, 13, 17]);
        assert_eq!(collect(1, 1), vec![4, 8, 12, 13, 17]);
        // later tiles repeat the same configuration at shifted bases
        assert_eq!(tiles[1].row0, 2);
        assert_eq!(
            tiles[1].outputs[0].terms, tiles[0].outputs[0].terms,
            "tile wiring is position-independent"
        );
    }

    #[test]
    fn high_kernel_plans_cover() {
        for (k, st, in_w, in_h) in [(5, 1, 7, 7), (4, 1, 6, 6), (4, 2, 6, 6), (5, 2, 9, 11)] {
            let cfg = LayerConfig::new(ConvType::Standard, k, st, in_w, in_h, 2, 2).unwrap();
            let s = plan_layer(&cfg).unwrap();
            coverage_check(&s).unwrap();
        }
    }

    #[test]
    fn conservation_of_work() {
        for (k, st, w, h, c, f) in [
            (3, 1, 10, 17, 4, 3),
            (3, 2, 9, 9, 7, 2),
            (1, 1, 5, 7, 10, 4),
            (1, 2, 8, 8, 19, 5),
            (4, 1, 9, 14, 2, 3),
            (5, 2, 11, 13, 3, 2),
        ] {
            let cfg = LayerConfig::new(ConvType::Standard, k, st, w, h, c, f).unwrap();
            let s = plan_layer(&cfg).unwrap();
            assert_eq!(
                s.useful_ops,
                cfg.out_w as u64 * cfg.out_h as u64 * (k * k) as u64 * c as u64 * f as u64
            );
            coverage_check(&s).unwrap();
        }
    }

    #[test]
    fn boundary_register_fifo() {
        let mut r = BoundaryRegister::new(3);
        r.push(10).unwrap();
        r.push(-4).unwrap();
        assert_eq!(r.pop().unwrap(), 10);
        assert_eq!(r.pop().unwrap(), -4);
        assert!(r.pop().is_err());
        r.push(1).unwrap();
        r.push(2).unwrap();
        r.push(3).unwrap();
        assert!(r.push(4).is_err());
    }

    #[test]
    fn kernel_7_rejected() {
        assert!(LayerConfig::new(ConvType::Standard, 7, 1, 20, 20, 1, 1).is_err());
    }

    #[test]
    fn fault_injection_breaks_coverage() {
        let cfg = cfg_3x3(8, 12, 1);
        let mut s = plan_layer(&cfg).unwrap();
        assert!(inject_wiring_fault(&mut s));
        assert!(coverage_check(&s).is_err());
    }
}
