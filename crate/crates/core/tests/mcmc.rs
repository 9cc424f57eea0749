use msgp_core::design::{DesignMatrix, OutputMatrix, VariableSpec};
use msgp_core::emulator::{BasisKind, ModelConfig, MsgpModel};
use msgp_core::kernels::{CutoffRule, KernelFamily, KernelSpec};
use msgp_core::mcmc::{
    compute_psrf, psrf_scalar, ram_step, run_chain, run_chains_sequential, tau_from_unconstrained,
    unconstrained_from_tau, McmcConfig, RamState,
};
use msgp_core::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn small_model() -> MsgpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let x = DMatrix::<f64>::from_fn(40, 2, |_, _| rng.random_range(-1.0..1.0));
    let y = DMatrix::from_fn(40, 2, |i, j| {
        let (a, b) = (x[(i, 0)], x[(i, 1)]);
        if j == 0 {
            (3.0 * a).sin() + 0.5 * b
        } else {
            a * b
        }
    });
    let specs = vec![VariableSpec::continuous("a", -1.0, 1.0), VariableSpec::continuous("b", -1.0, 1.0)];
    let design = DesignMatrix::with_scaling(x, specs, true).unwrap();
    let cfg = ModelConfig {
        basis: BasisKind::Linear,
        kernel: KernelSpec::new(KernelFamily::Bohman).unwrap(),
        prior: None,
        omega: 0.5,
        cutoff_rule: CutoffRule::ZeroFraction,
    };
    MsgpModel::new(design, OutputMatrix::unnamed(y).unwrap(), &cfg).unwrap()
}

#[test]
fn default_schedule_keeps_1960_draws() {
    let cfg = McmcConfig::default();
    assert_eq!(cfg.stored_draws(), 1960);
}

#[test]
fn no_post_burn_in_iterations_gives_no_draws() {
    let cfg = McmcConfig {
        iterations: 200,
        burn_in: 200,
        thin: 1,
        ..McmcConfig::default()
    };
    let chain = run_chain(&small_model(), &cfg, 1).unwrap();
    assert!(chain.draws.is_empty());
}

#[test]
fn chains_converge_on_a_small_model() {
    let model = small_model();
    let cfg = McmcConfig {
        iterations: 6_000,
        burn_in: 1_000,
        thin: 5,
        init_spread: 0.5,
        ..McmcConfig::default()
    };
    let chains = run_chains_sequential(&model, &cfg, &[1, 2, 3]).unwrap();
    let report = compute_psrf(&chains).unwrap();
    let below = report.fraction_below(1.1);
    assert!(below >= 0.9, "only {below} of parameters have PSRF < 1.1");
    // Reruns are bit-identical.
    assert_eq!(chains[1], run_chain(&model, &cfg, 2).unwrap());
}

#[test]
fn separated_chains_are_flagged() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a: Vec<f64> = (0..1000).map(|_| StandardNormal.sample(&mut rng)).collect();
    let b: Vec<f64> = (0..1000).map(|_| 10.0 + Distribution::<f64>::sample(&StandardNormal, &mut rng)).collect();
    let (point, upper) = psrf_scalar(&[&a, &b], 0.95).unwrap();
    assert!(point > 5.0 && upper >= point);
}

#[test]
fn standard_normal_acceptance_settles_near_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let lt = |x: &DVector<f64>| -0.5 * x.norm_squared();
    let x0 = DVector::zeros(2);
    let mut state = RamState::new(x0.clone(), lt(&x0), 1.0, 0.234, 2.0 / 3.0);
    let accepted = (0..50_000).filter(|_| ram_step(&mut state, lt, &mut rng)).count();
    let rate = accepted as f64 / 50_000.0;
    assert!((rate - 0.234).abs() <= 0.05, "acceptance {rate}");
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn simplex_map_round_trips(z in prop::collection::vec(-6.0f64..6.0, 1..6), c in 0.1f64..5.0) {
        let (tau, _) = tau_from_unconstrained(&DVector::from_vec(z.clone()), c);
        prop_assert!(tau.iter().all(|t| *t > 0.0));
        prop_assert!(tau.iter().sum::<f64>() < c);
        let back = unconstrained_from_tau(&tau, c).unwrap();
        for (a, b) in back.iter().zip(&z) {
            prop_assert!((a - b).abs() < 1e-8);
        }
    }
}
