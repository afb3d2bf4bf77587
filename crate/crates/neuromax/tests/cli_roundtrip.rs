//! End-to-end CLI coverage: file formats, command flows, exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::Command;

use neuromax::cli::commands::{cmd_quantize, cmd_simulate, QuantizeOpts, SimulateOpts};
use neuromax::cli::descriptor::{parse_descriptor, serialize_descriptor};
use neuromax::cli::tensor_file::{
    read_weight_tensor, write_activation_tensor, write_real_tensor, write_weight_tensor,
    ElementKind,
};
use neuromax::grid::{Tensor, Weights};
use neuromax::quantizer::{LogCode, QuantParams, Sign};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("neuromax_cli_{}_{name}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn quantize_writes_codes_and_stats() {
    let dir = scratch("quant");
    let input = dir.join("w.tns");
    let output = dir.join("w_log.tns");
    // 2x2x1x1 lattice-valued weights: zero error expected
    write_real_tensor(&input, &[2, 2, 1, 1], &[1.0, -2.0, 0.5, 4.0]).unwrap();
    let stats = cmd_quantize(&QuantizeOpts {
        input: input.clone(),
        output: output.clone(),
        kind: ElementKind::LogWeight,
        params: QuantParams::accelerator(),
    })
    .unwrap();
    assert_eq!(stats.max_rel_err, 0.0);
    let w = read_weight_tensor(&output).unwrap();
    assert_eq!(w.get(0, 0, 0, 0), LogCode::new(Sign::Plus, 0));
    assert_eq!(w.get(1, 0, 0, 0), LogCode::new(Sign::Minus, 2));

    // all-zero tensor: zero codes, zero error
    write_real_tensor(&input, &[2, 2, 1, 1], &[0.0; 4]).unwrap();
    let stats = cmd_quantize(&QuantizeOpts {
        input: input.clone(),
        output: output.clone(),
        kind: ElementKind::LogWeight,
        params: QuantParams::accelerator(),
    })
    .unwrap();
    assert_eq!(stats.max_rel_err, 0.0);
    assert!(read_weight_tensor(&output).unwrap().data().iter().all(|c| c.is_zero));

    // pseudo-random in-range activations: error bounded by 2^(1/4) - 1
    let vals: Vec<f32> = (0..500)
        .map(|i| 0.001 + 0.999 * ((i as f32 * 0.712_51).sin().abs()))
        .collect();
    write_real_tensor(&input, &[10, 10, 5], &vals).unwrap();
    let stats = cmd_quantize(&QuantizeOpts {
        input,
        output,
        kind: ElementKind::LogActivation,
        params: QuantParams::accelerator(),
    })
    .unwrap();
    assert!(stats.max_rel_err <= 2f64.powf(0.25) - 1.0 + 1e-7);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn simulate_executes_and_verifies_a_small_net() {
    let dir = scratch("sim");
    let desc = dir.join("net.net");
    fs::write(
        &desc,
        "neuromax-net v1\n\
         l0 standard 3 1 10 10 2 4 1\n\
         l1 depthwise 3 1 10 10 4 4 1\n\
         l2 pointwise 1 1 10 10 4 3 0\n",
    )
    .unwrap();

    // weights per layer
    let wdir = dir.join("weights");
    fs::create_dir_all(&wdir).unwrap();
    let mut w0 = Weights::filled(3, 2, 4, LogCode::ZERO);
    for f in 0..4 {
        for ch in 0..2 {
            for ky in 0..3 {
                for kx in 0..3 {
                    let sign = if (f + kx) % 2 == 0 { Sign::Plus } else { Sign::Minus };
                    w0.set(kx, ky, ch, f, LogCode::new(sign, (kx + ky + ch + f) as i16 % 5 - 4));
                }
            }
        }
    }
    write_weight_tensor(&wdir.join("l0.tns"), &w0).unwrap();
    let mut w1 = Weights::filled(3, 1, 4, LogCode::ZERO);
    for f in 0..4 {
        for ky in 0..3 {
            for kx in 0..3 {
                w1.set(kx, ky, 0, f, LogCode::new(Sign::Plus, -(((kx + ky) % 3) as i16) - 2));
            }
        }
    }
    write_weight_tensor(&wdir.join("l1.tns"), &w1).unwrap();
    let mut w2 = Weights::filled(1, 4, 3, LogCode::ZERO);
    for f in 0..3 {
        for ch in 0..4 {
            let sign = if ch % 2 == 0 { Sign::Plus } else { Sign::Minus };
            w2.set(0, 0, ch, f, LogCode::new(sign, f as i16 - ch as i16 - 1));
        }
    }
    write_weight_tensor(&wdir.join("l2.tns"), &w2).unwrap();

    let mut act = Tensor::filled(10, 10, 2, LogCode::ZERO);
    for ch in 0..2 {
        for y in 0..10 {
            for x in 0..10 {
                if (x + y + ch) % 4 != 0 {
                    act.set(x, y, ch, LogCode::activation(((x * y + ch) % 9) as i16 - 6));
                }
            }
        }
    }
    let input = dir.join("input.tns");
    write_activation_tensor(&input, &act).unwrap();

    let csv = dir.join("report.csv");
    let trace = dir.join("run.trace");
    let summary = cmd_simulate(&SimulateOpts {
        descriptor: desc,
        input: Some(input),
        weights_dir: Some(wdir),
        clock_mhz: 200.0,
        csv: Some(csv.clone()),
        trace: Some(trace.clone()),
        verify: true,
        sram_kb: None,
    })
    .unwrap();
    assert!(summary.executed);
    assert_eq!(summary.verified_layers, 3);
    assert_eq!(summary.rows.len(), 3);

    let report = fs::read_to_string(&csv).unwrap();
    assert!(report.starts_with("# neuromax-report v1"));
    assert_eq!(report.lines().count(), 2 + 3);
    let trace_text = fs::read_to_string(&trace).unwrap();
    assert!(trace_text.contains("# neuromax-trace v1"));
    fs::remove_dir_all(scratch("sim")).ok();
}

#[test]
fn single_layer_worked_example_csv_shows_8_cycles() {
    let dir = scratch("csv8");
    let desc = dir.join("one.net");
    // the 12-row x 6-col worked example, already padded (pad 0)
    fs::write(&desc, "neuromax-net v1\nl0 standard 3 1 6 12 1 1 0\n").unwrap();
    let csv = dir.join("one.csv");
    cmd_simulate(&SimulateOpts {
        descriptor: desc,
        input: None,
        weights_dir: None,
        clock_mhz: 200.0,
        csv: Some(csv.clone()),
        trace: None,
        verify: false,
        sram_kb: None,
    })
    .unwrap();
    let text = fs::read_to_string(&csv).unwrap();
    let row = text.lines().nth(2).unwrap();
    let cycles: u64 = row.split(',').nth(7).unwrap().parse().unwrap();
    assert_eq!(cycles, 8);
    fs::remove_dir_all(dir).ok();
}

#[test]
fn descriptor_round_trip_is_identity() {
    let text = "neuromax-net v1\nl0 standard 3 2 14 14 8 16 1\nl1 pointwise 1 1 7 7 16 32 0\n";
    let layers = parse_descriptor(text).unwrap();
    let layers2 = parse_descriptor(&serialize_descriptor(&layers)).unwrap();
    assert_eq!(layers, layers2);
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_neuromax"))
}

#[test]
fn exit_codes_are_distinct() {
    let dir = scratch("exit");

    // 0: success
    let ok = bin().args(["verify", "--trials", "3", "--seed", "9"]).output().unwrap();
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    // 2: parse failure
    let bad_net = dir.join("bad.net");
    fs::write(&bad_net, "not a header\n").unwrap();
    let parse = bin().arg("simulate").arg(&bad_net).output().unwrap();
    assert_eq!(parse.status.code(), Some(2));

    // 3: shape failure (chain mismatch in execution mode)
    let chain = dir.join("chain.net");
    fs::write(
        &chain,
        "neuromax-net v1\nl0 standard 3 1 8 8 1 2 1\nl1 standard 3 1 8 8 5 2 1\n",
    )
    .unwrap();
    let input = dir.join("in.tns");
    write_activation_tensor(&input, &Tensor::filled(8, 8, 1, LogCode::ZERO)).unwrap();
    let wdir = dir.join("w");
    fs::create_dir_all(&wdir).unwrap();
    let shape = bin()
        .arg("simulate")
        .arg(&chain)
        .arg("--input")
        .arg(&input)
        .arg("--weights-dir")
        .arg(&wdir)
        .output()
        .unwrap();
    assert_eq!(shape.status.code(), Some(3));

    // 4: verification failure (injected wiring fault)
    let verify = bin()
        .args(["verify", "--trials", "1", "--inject-fault"])
        .output()
        .unwrap();
    assert_eq!(verify.status.code(), Some(4));
    let msg = String::from_utf8_lossy(&verify.stderr);
    assert!(msg.contains("at (filter"), "fault report should name coordinates: {msg}");

    // vacuous pass with warning
    let vac = bin().args(["verify", "--trials", "0"]).output().unwrap();
    assert!(vac.status.success());
    assert!(String::from_utf8_lossy(&vac.stderr).contains("vacuous"));
    fs::remove_dir_all(dir).ok();
}

#[test]
fn bundled_descriptors_simulate_analytically() {
    for name in ["vgg16", "mobilenet_v1", "resnet34"] {
        let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
            .join("descriptors")
            .join(format!("{name}.net"));
        let summary = cmd_simulate(&SimulateOpts {
            descriptor: path,
            input: None,
            weights_dir: None,
            clock_mhz: 200.0,
            csv: None,
            trace: None,
            verify: false,
            sram_kb: None,
        })
        .unwrap();
        assert!(!summary.executed);
        assert!(summary.total_latency_s > 0.0);
    }
}
