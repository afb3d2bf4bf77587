//! File formats and command drivers behind the `neuromax` binary.

pub mod commands;
pub mod descriptor;
pub mod tensor_file;
pub mod trace;
pub mod verify;

pub use commands::{cmd_quantize, cmd_simulate, QuantizeOpts, SimulateOpts};
pub use verify::{cmd_verify, VerifyOpts};
