//! Randomized oracle equivalence: draw layer configurations across the
//! supported kernel/stride space, run the bit-faithful simulator and the
//! brute-force quantized oracle, and demand identical psums and output
//! codes. This is the library face of `neuromax verify`.
//!
//! Run with: cargo run --example oracle_check

use neuromax::cli::verify::{cmd_verify, VerifyOpts};

fn main() {
    let opts = VerifyOpts {
        seed: 2024,
        trials: 60,
        ..Default::default()
    };
    match cmd_verify(&opts) {
        Ok(outcome) => println!(
            "{} randomized layers: simulator == oracle, bit for bit",
            outcome.trials_run
        ),
        Err(e) => {
            eprintln!("mismatch: {e}");
            std::process::exit(1);
        }
    }
}
