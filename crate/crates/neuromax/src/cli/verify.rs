//! Randomized oracle-equivalence driver: draws layer configurations from
//! the supported space, runs the simulated core against the brute-force
//! quantized oracle, and checks the schedule invariants. Deterministic
//! under a fixed seed; failures shrink to a smaller reproducing config.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::dataflow::{coverage_check, inject_wiring_fault, plan_layer, ConvType, LayerConfig};
use crate::error::{Error, Result};
use crate::grid::{
    post_process, run_layer_psums, run_plan, ConvCore, Tensor, Weights, DEFAULT_EVAL_ORDER,
};
use crate::quantizer::{LogCode, Sign};
use crate::reference::conv2d_quant_oracle;

#[derive(Debug, Clone)]
pub struct VerifyOpts {
    pub seed: u64,
    pub trials: u64,
    pub spatial_max: u32,
    pub channels_max: u32,
    pub filters_max: u32,
    /// Test hook: corrupt one wiring entry and demand the driver notices.
    pub inject_fault: bool,
}

impl Default for VerifyOpts {
    fn default() -> Self {
        VerifyOpts {
            seed: 1,
            trials: 100,
            spatial_max: 32,
            channels_max: 18,
            filters_max: 12,
            inject_fault: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifyOutcome {
    pub trials_run: u64,
    pub vacuous: bool,
}

/// Random layer configuration within the supported space, biased toward
/// small spatial extents so a run stays fast.
pub fn random_config(rng: &mut impl Rng, opts: &VerifyOpts) -> LayerConfig {
    loop {
        let kernel = *[1u32, 3, 3, 3, 4, 5].choose(rng).unwrap();
        let stride = if rng.gen_bool(0.35) { 2 } else { 1 };
        let conv_type = match kernel {
            1 => ConvType::Pointwise,
            _ if rng.gen_bool(0.25) => ConvType::Depthwise,
            _ => ConvType::Standard,
        };
        let span = |rng: &mut dyn RngCore| {
            if rng.gen_bool(0.7) {
                kernel + rng.gen_range(0..=9)
            } else {
                kernel + rng.gen_range(0..=(opts.spatial_max - kernel))
            }
        };
        let in_w = span(rng);
        let in_h = span(rng);
        let in_c = rng.gen_range(1..=opts.channels_max);
        let out_c = match conv_type {
            ConvType::Depthwise => in_c,
            _ => rng.gen_range(1..=opts.filters_max),
        };
        if let Ok(cfg) = LayerConfig::new(conv_type, kernel, stride, in_w, in_h, in_c, out_c) {
            if cfg.out_w > 0 && cfg.out_h > 0 {
                return cfg;
            }
        }
    }
}

/// Deterministic tensors for a config: moderate code range with sparse
/// zeros, so saturation occurs occasionally but not everywhere.
pub fn random_tensors(seed: u64, cfg: &LayerConfig) -> (Tensor<LogCode>, Weights<LogCode>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x74656e736f72);
    let mut input = Tensor::filled(cfg.in_w, cfg.in_h, cfg.in_c, LogCode::ZERO);
    for ch in 0..cfg.in_c {
        for y in 0..cfg.in_h {
            for x in 0..cfg.in_w {
                if rng.gen_bool(0.9) {
                    input.set(x, y, ch, LogCode::activation(rng.gen_range(-10..=5)));
                }
            }
        }
    }
    let (k, cpf, filters) = Weights::<LogCode>::expected_shape(cfg);
    let mut weights = Weights::filled(k, cpf, filters, LogCode::ZERO);
    for f in 0..filters {
        for ch in 0..cpf {
            for ky in 0..k {
                for kx in 0..k {
                    if rng.gen_bool(0.9) {
                        let sign = if rng.gen_bool(0.5) { Sign::Plus } else { Sign::Minus };
                        weights.set(kx, ky, ch, f, LogCode::new(sign, rng.gen_range(-10..=3)));
                    }
                }
            }
        }
    }
    (input, weights)
}

/// Compare simulator and oracle for one config; returns the first
/// mismatching coordinate.
fn check_equivalence(core: &mut ConvCore, cfg: &LayerConfig, seed: u64) -> Result<()> {
    let (input, weights) = random_tensors(seed, cfg);
    let (planes, _) = run_layer_psums(core, cfg, &input, &weights)?;
    let oracle = conv2d_quant_oracle(&input, &weights, cfg, &core.params, &core.fmt)?;
    for f in 0..cfg.out_c {
        for y in 0..cfg.out_h {
            for x in 0..cfg.out_w {
                let (got, want) = (planes.get(x, y, f), oracle.get(x, y, f));
                if got != want {
                    return Err(Error::Verify(format!(
                        "psum mismatch at (filter {f}, y {y}, x {x}): simulator {got}, oracle {want} [{cfg:?}]"
                    )));
                }
            }
        }
    }
    // post-processed codes must agree as well
    let sim_codes = post_process(&planes, &core.log_table);
    let want_codes = post_process(&oracle, &core.log_table);
    for f in 0..cfg.out_c {
        for y in 0..cfg.out_h {
            for x in 0..cfg.out_w {
                if sim_codes.get(x, y, f) != want_codes.get(x, y, f) {
                    return Err(Error::Verify(format!(
                        "output code mismatch at (filter {f}, y {y}, x {x}) [{cfg:?}]"
                    )));
                }
            }
        }
    }
    Ok(())
}

fn shrink_candidates(cfg: &LayerConfig) -> Vec<LayerConfig> {
    let mut cands = Vec::new();
    let mut push = |w: u32, h: u32, c: u32, f: u32| {
        if let Ok(smaller) = LayerConfig::new(cfg.conv_type, cfg.kernel, cfg.stride, w, h, c, f) {
            if smaller.out_w > 0 && smaller.out_h > 0 && &smaller != cfg {
                cands.push(smaller);
            }
        }
    };
    let halve = |v: u32, min: u32| (v / 2).max(min);
    push(halve(cfg.in_w, cfg.kernel), cfg.in_h, cfg.in_c, cfg.out_c);
    push(cfg.in_w, halve(cfg.in_h, cfg.kernel), cfg.in_c, cfg.out_c);
    if cfg.conv_type == ConvType::Depthwise {
        push(cfg.in_w, cfg.in_h, halve(cfg.in_c, 1), halve(cfg.in_c, 1));
    } else {
        push(cfg.in_w, cfg.in_h, halve(cfg.in_c, 1), cfg.out_c);
        push(cfg.in_w, cfg.in_h, cfg.in_c, halve(cfg.out_c, 1));
    }
    cands
}

/// Greedily shrink a failing config while it keeps failing.
fn shrink(core: &mut ConvCore, cfg: LayerConfig, seed: u64, err: Error) -> Error {
    let mut best_cfg = cfg;
    let mut best_err = err;
    'outer: loop {
        for cand in shrink_candidates(&best_cfg) {
            if let Err(e) = check_equivalence(core, &cand, seed) {
                best_cfg = cand;
                best_err = e;
                continue 'outer;
            }
        }
        break;
    }
    Error::Verify(format!("minimized failure: {best_err}"))
}

/// Run the property driver.
pub fn cmd_verify(opts: &VerifyOpts) -> Result<VerifyOutcome> {
    if opts.trials == 0 {
        eprintln!("warning: 0 trials requested; pass is vacuous");
        return Ok(VerifyOutcome {
            trials_run: 0,
            vacuous: true,
        });
    }
    let mut core = ConvCore::default_core()?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    if opts.inject_fault {
        return fault_injection_run(&mut core, &mut rng);
    }

    for trial in 0..opts.trials {
        let cfg = random_config(&mut rng, opts);
        let tensor_seed = opts.seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(trial);
        if let Err(e) = check_equivalence(&mut core, &cfg, tensor_seed) {
            return Err(match e {
                Error::Verify(_) => shrink(&mut core, cfg, tensor_seed, e),
                other => other,
            });
        }
        // structural invariants, sampled
        if trial % 8 == 0 {
            let sched = plan_layer(&cfg)?;
            coverage_check(&sched)?;
            determinism_check(&mut core, &cfg, tensor_seed, &mut rng)?;
        }
    }
    Ok(VerifyOutcome {
        trials_run: opts.trials,
        vacuous: false,
    })
}

/// Evaluate the six matrices in a random order and demand bit-identical
/// outputs (results merge in canonical order regardless of evaluation
/// order).
fn determinism_check(
    core: &mut ConvCore,
    cfg: &LayerConfig,
    seed: u64,
    rng: &mut impl Rng,
) -> Result<()> {
    let (input, weights) = random_tensors(seed, cfg);
    let sched = plan_layer(cfg)?;
    let (reference, _) = run_plan(core, &sched, &input, &weights, &DEFAULT_EVAL_ORDER)?;
    let mut order = DEFAULT_EVAL_ORDER;
    order.shuffle(rng);
    let (permuted, _) = run_plan(core, &sched, &input, &weights, &order)?;
    if reference.data() != permuted.data() {
        return Err(Error::Verify(format!(
            "matrix evaluation order {order:?} changed the result [{cfg:?}]"
        )));
    }
    Ok(())
}

fn fault_injection_run(core: &mut ConvCore, rng: &mut impl Rng) -> Result<VerifyOutcome> {
    // a mid-sized 3x3 layer; the fault flips one wiring thread index
    let cfg = LayerConfig::new(ConvType::Standard, 3, 1, 12, 18, 3, 2)?;
    let mut sched = plan_layer(&cfg)?;
    if !inject_wiring_fault(&mut sched) {
        return Err(Error::Config("fault hook found nothing to corrupt".into()));
    }
    let (input, weights) = random_tensors(rng.gen(), &cfg);
    let (planes, _) = run_plan(core, &sched, &input, &weights, &DEFAULT_EVAL_ORDER)?;
    let oracle = conv2d_quant_oracle(&input, &weights, &cfg, &core.params, &core.fmt)?;
    for f in 0..cfg.out_c {
        for y in 0..cfg.out_h {
            for x in 0..cfg.out_w {
                if planes.get(x, y, f) != oracle.get(x, y, f) {
                    return Err(Error::Verify(format!(
                        "injected wiring fault detected at (filter {f}, y {y}, x {x}): \
                         simulator {}, oracle {}",
                        planes.get(x, y, f),
                        oracle.get(x, y, f)
                    )));
                }
            }
        }
    }
    Err(Error::Config(
        "injected fault produced no observable mismatch".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_trials_vacuous() {
        let outcome = cmd_verify(&VerifyOpts {
            trials: 0,
            ..Default::default()
        })
        .unwrap();
        assert!(outcome.vacuous);
    }

    #[test]
    fn short_run_passes() {
        let outcome = cmd_verify(&VerifyOpts {
            seed: 7,
            trials: 12,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(outcome.trials_run, 12);
    }

    #[test]
    fn injected_fault_is_caught_with_coordinates() {
        let err = cmd_verify(&VerifyOpts {
            inject_fault: true,
            ..Default::default()
        })
        .unwrap_err();
        match err {
            Error::Verify(msg) => assert!(msg.contains("at (filter"), "{msg}"),
            other => panic!("expected a verification failure, got {other:?}"),
        }
    }
}
