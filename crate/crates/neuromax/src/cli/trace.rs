//! Human-readable schedule traces (`.trace`), one line per tile cycle.

use std::fmt::Write as _;

use crate::dataflow::{Part, Plan, Schedule};

pub const TRACE_HEADER: &str = "# neuromax-trace v1";

/// Render one sweep of a schedule. The sweep repeats `ch_passes x
/// filter_reps` times with different channel/filter bindings; the header
/// records the repetition counts instead of duplicating lines.
pub fn render_trace(name: &str, sched: &Schedule) -> String {
    let cfg = &sched.cfg;
    let mut out = String::new();
    let _ = writeln!(out, "{TRACE_HEADER}");
    let _ = writeln!(
        out,
        "# layer {name}: {} k{} s{} in {}x{}x{} out {}x{}x{}",
        cfg.conv_type, cfg.kernel, cfg.stride, cfg.in_w, cfg.in_h, cfg.in_c, cfg.out_w, cfg.out_h,
        cfg.out_c
    );
    let _ = writeln!(
        out,
        "# sweep {} cycles x {} channel passes x {} filter repeats = {} cycles",
        sched.cycles_per_sweep(),
        sched.ch_passes,
        sched.filter_reps,
        sched.cycles
    );
    match &sched.plan {
        Plan::Sector(sweep) => {
            for (i, tc) in sweep.iter().enumerate() {
                let mut line = format!(
                    "cycle {i} sector {} col {} in_rows {}..{} in_cols {}..{} |",
                    tc.sector,
                    tc.col,
                    tc.row0,
                    tc.row0 + 6,
                    tc.col0,
                    tc.col0 + 3
                );
                for w in &tc.outputs {
                    let parts: Vec<String> = w
                        .parts
                        .iter()
                        .map(|p| match p {
                            Part::Slot { row, thread } => format!("({row},{thread})"),
                            Part::Stored { reg } => format!("reg{}", reg_name(*reg)),
                        })
                        .collect();
                    let _ = write!(line, " out {} <- {};", w.out_row, parts.join("+"));
                }
                for d in &tc.defers {
                    let slots: Vec<String> =
                        d.slots.iter().map(|(r, t)| format!("({r},{t})")).collect();
                    let _ = write!(
                        line,
                        " defer reg{} out {} <- {};",
                        reg_name(d.reg),
                        d.out_row,
                        slots.join("+")
                    );
                }
                let _ = writeln!(out, "{line}");
            }
        }
        Plan::TwoPhase(tiles) => {
            for (i, t) in tiles.iter().enumerate() {
                let mut line = format!(
                    "tile {i} col {} in_rows {}..{} (2 phases) |",
                    t.col,
                    t.row0,
                    t.row0 + 6
                );
                for o in &t.outputs {
                    let terms: Vec<String> = o
                        .terms
                        .iter()
                        .map(|s| format!("p{}:({},{})", s.phase, s.row, s.thread))
                        .collect();
                    let _ = write!(line, " out {} <- {};", o.out_row, terms.join("+"));
                }
                let _ = writeln!(out, "{line}");
            }
        }
        Plan::Position(cycles) => {
            for (i, pc) in cycles.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "cycle {i} positions {}..{} (rows 0..{})",
                    pc.pos0,
                    pc.pos0 + pc.count as u64,
                    pc.count
                );
            }
        }
    }
    out
}

fn reg_name(reg: u8) -> char {
    if reg == 0 {
        'A'
    } else {
        'B'
    }
}
