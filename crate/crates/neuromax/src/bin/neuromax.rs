//! Command-line front end: quantize tensors, simulate network descriptors,
//! verify against the brute-force oracle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use neuromax::cli::commands::{cmd_quantize, cmd_simulate, render_summary, QuantizeOpts, SimulateOpts};
use neuromax::cli::tensor_file::ElementKind;
use neuromax::cli::verify::{cmd_verify, VerifyOpts};
use neuromax::quantizer::QuantParams;

#[derive(Parser)]
#[command(name = "neuromax", version, about = "Log-based CNN accelerator simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum CodeKind {
    Activation,
    Weight,
}

#[derive(Subcommand)]
enum Command {
    /// Log-quantize a real tensor file (.tns) and print error statistics.
    Quantize {
        /// Input real tensor (.tns, kind = real).
        input: PathBuf,
        /// Output log-code tensor (.tns).
        output: PathBuf,
        /// Code kind: activations are unsigned, weights carry a sign bit.
        #[arg(long, value_enum, default_value = "weight")]
        kind: CodeKind,
        /// Integer bits of the code format.
        #[arg(long, default_value_t = 5)]
        m: u32,
        /// Fractional bits of the code format.
        #[arg(long, default_value_t = 1)]
        n: u32,
    },
    /// Simulate a network descriptor (.net); analytic by default,
    /// bit-faithful when an input tensor and weights directory are given.
    Simulate {
        /// Network descriptor file (.net).
        descriptor: PathBuf,
        /// Input activation tensor (.tns); enables bit-faithful execution.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Directory holding one <layer-name>.tns weight file per layer.
        #[arg(long)]
        weights_dir: Option<PathBuf>,
        /// Processing clock in MHz.
        #[arg(long, default_value_t = 200.0)]
        clock_mhz: f64,
        /// Write a per-layer CSV report.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Write schedule traces.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Cross-check every executed layer against the quantized oracle.
        #[arg(long)]
        verify: bool,
        /// Override the on-core SRAM budget, in kilobytes.
        #[arg(long)]
        sram_kb: Option<u64>,
    },
    /// Randomized oracle-equivalence and invariant checks.
    Verify {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        /// Largest input extent drawn per axis.
        #[arg(long, default_value_t = 32)]
        spatial_max: u32,
        #[arg(long, default_value_t = 18)]
        channels_max: u32,
        #[arg(long, default_value_t = 12)]
        filters_max: u32,
        /// Corrupt one wiring entry to prove the checks can fail.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Quantize { input, output, kind, m, n } => {
            QuantParams::new(m, n, std::f64::consts::SQRT_2).and_then(|params| {
                let opts = QuantizeOpts {
                    input,
                    output: output.clone(),
                    kind: match kind {
                        CodeKind::Activation => ElementKind::LogActivation,
                        CodeKind::Weight => ElementKind::LogWeight,
                    },
                    params,
                };
                let stats = cmd_quantize(&opts)?;
                println!(
                    "wrote {}: max_rel_err {:.6}, mean_rel_err {:.6}",
                    output.display(),
                    stats.max_rel_err,
                    stats.mean_rel_err
                );
                Ok(())
            })
        }
        Command::Simulate {
            descriptor,
            input,
            weights_dir,
            clock_mhz,
            csv,
            trace,
            verify,
            sram_kb,
        } => {
            let opts = SimulateOpts {
                descriptor,
                input,
                weights_dir,
                clock_mhz,
                csv,
                trace,
                verify,
                sram_kb,
            };
            cmd_simulate(&opts).map(|summary| {
                print!("{}", render_summary(&summary, clock_mhz));
            })
        }
        Command::Verify {
            seed,
            trials,
            spatial_max,
            channels_max,
            filters_max,
            inject_fault,
        } => {
            let opts = VerifyOpts {
                seed,
                trials,
                spatial_max,
                channels_max,
                filters_max,
                inject_fault,
            };
            cmd_verify(&opts).map(|outcome| {
                if outcome.vacuous {
                    println!("vacuous pass (0 trials)");
                } else {
                    println!("{} trials passed", outcome.trials_run);
                }
            })
        }
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
