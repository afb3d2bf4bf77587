//! Cycle-accurate, bit-faithful simulator of a multi-threaded, log-based
//! CNN convolution accelerator.
//!
//! The modeled core holds 108 processing elements in a 6x3x6 grid (six
//! 6x3 matrices, three shift/LUT threads per PE), fed by a 2D
//! weight-broadcast dataflow. Weights and activations are base-√2 log
//! codes; multiplies are exponent adds plus a two-entry lookup and a
//! barrel shift; partial sums accumulate in saturating Q8.8.
//!
//! Crate layout mirrors the hardware:
//!
//! * [`quantizer`] — linear/log quantization, dequantization, the
//!   post-processing log table.
//! * [`pe`] — thread multiply, PE, PE matrix, adder net 0.
//! * [`dataflow`] — the state controller: per-layer schedules for 3x3
//!   (stride 1/2), 1x1, 4x4 and 5x5 convolutions, boundary-psum
//!   deferral, channel accumulation.
//! * [`grid`] — the CONV core: schedule execution, SRAM model,
//!   post-processing, layer tiling.
//! * [`metrics`] — cycles, throughput, utilization, latency, network
//!   reports.
//! * [`reference`] — brute-force convolution oracles the simulator is
//!   validated against.
//! * [`cli`] — descriptor/tensor file formats and the command driver
//!   behind the `neuromax` binary.
//!
//! Start with the `examples/` directory: each example exercises one
//! capability end to end.

pub mod cli;
pub mod dataflow;
pub mod error;
pub mod grid;
pub mod metrics;
pub mod pe;
pub mod quantizer;
pub mod reference;

pub use error::{Error, Result};
