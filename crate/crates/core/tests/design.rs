use msgp_core::design::{
    lhs_sample, mixed_design, scale_inputs, standardize_outputs, unscale_inputs, LhsOptions, OutputMatrix, VariableSpec,
};
use msgp_core::testfns::{arctan_temporal, sobol_g, SOBOL_G_A};
use msgp_core::DMatrix;
use proptest::prelude::*;

fn unit_specs(p: usize) -> Vec<VariableSpec> {
    (0..p).map(|k| VariableSpec::continuous(format!("x{k}"), 0.0, 1.0)).collect()
}

#[test]
fn large_hypercube_is_centred() {
    let d = lhs_sample(&unit_specs(8), 512, LhsOptions::default(), 21).unwrap();
    for k in 0..8 {
        let mean = d.values.column(k).mean();
        assert!((mean - 0.5).abs() < 0.02, "column {k} mean {mean}");
    }
}

#[test]
fn optimized_design_is_no_worse() {
    let specs = unit_specs(2);
    let min_dist = |x: &DMatrix<f64>| {
        let mut best = f64::INFINITY;
        for i in 0..x.nrows() {
            for j in 0..i {
                best = best.min((x.row(i) - x.row(j)).norm());
            }
        }
        best
    };
    let plain = lhs_sample(&specs, 100, LhsOptions::default(), 9).unwrap();
    let opt = lhs_sample(&specs, 100, LhsOptions::optimized(), 9).unwrap();
    assert!(min_dist(&opt.values) >= min_dist(&plain.values));
}

#[test]
fn capped_crossing_balances_levels() {
    let mut specs = unit_specs(2);
    specs.push(VariableSpec::categorical("region", ["a", "b", "c"]));
    specs.push(VariableSpec::categorical("policy", (0..10).map(|i| format!("p{i}"))));
    let cont = lhs_sample(&specs, 2000, LhsOptions::default(), 2).unwrap();
    let d = mixed_design(&cont, &specs, 10_000, 3).unwrap();
    assert_eq!(d.n(), 2000);
    for (col, levels) in [(2, 3usize), (3, 10)] {
        let expected = 2000.0 / levels as f64;
        for l in 0..levels {
            let count = d.values.column(col).iter().filter(|v| **v == l as f64).count() as f64;
            assert!((count - expected).abs() <= 0.05 * expected, "column {col} level {l}: {count}");
        }
    }
}

#[test]
fn continuous_only_design_passes_through() {
    let specs = unit_specs(3);
    let cont = lhs_sample(&specs, 30, LhsOptions::default(), 4).unwrap();
    assert_eq!(mixed_design(&cont, &specs, 100, 1).unwrap(), cont);
}

#[test]
fn standardized_columns_are_a_fixed_point() {
    let y = OutputMatrix::new(DMatrix::from_row_slice(4, 2, &[1.0, 10.0, 2.0, 7.0, 4.0, 3.0, 9.0, 1.0]), vec!["a".into(), "b".into()])
        .unwrap();
    let once = standardize_outputs(&y).unwrap();
    let twice = standardize_outputs(&once).unwrap();
    assert!((once.values - twice.values).abs().max() < 1e-12);
}

#[test]
fn g_function_endpoints() {
    assert_eq!(sobol_g(&[0.0; 5], &[0.0; 5]).unwrap(), 32.0);
    assert_eq!(sobol_g(&[0.5; 8], &SOBOL_G_A).unwrap(), 0.0);
}

#[test]
fn arctan_basis_points() {
    let q = 5;
    let y = arctan_temporal(&[0.0, 0.0], q).unwrap();
    assert!(y.iter().all(|v| *v == 0.0));
    // With q = 5 the grid is 0, pi/2, pi, 3pi/2, 2pi.
    let y = arctan_temporal(&[1.0, -2.0], q).unwrap();
    assert!((y[0] - 1f64.atan()).abs() < 1e-15);
    assert!((y[1] - (-2f64).atan()).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn every_stratum_holds_one_point(n in 2usize..60, p in 1usize..4, seed in any::<u64>()) {
        let d = lhs_sample(&unit_specs(p), n, LhsOptions::default(), seed).unwrap();
        for k in 0..p {
            let mut strata: Vec<usize> = d.values.column(k).iter().map(|v| ((v * n as f64).floor() as usize).min(n - 1)).collect();
            strata.sort_unstable();
            prop_assert_eq!(strata, (0..n).collect::<Vec<_>>());
        }
    }

    #[test]
    fn scaling_round_trips(lo in -100.0f64..100.0, width in 0.1f64..50.0, n in 2usize..20, seed in any::<u64>()) {
        let specs = vec![VariableSpec::continuous("a", lo, lo + width), VariableSpec::continuous("b", -1.0, 3.0)];
        let d = lhs_sample(&specs, n, LhsOptions::default(), seed).unwrap();
        let z = scale_inputs(&d).unwrap();
        prop_assert!(z.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        let back = unscale_inputs(&z).unwrap();
        prop_assert!((back.values - &d.values).abs().max() <= 1e-10 * (1.0 + lo.abs() + width));
    }

    #[test]
    fn g_function_reflection_symmetry(x in prop::collection::vec(0.0f64..1.0, 8), k in 0usize..8) {
        let mut r = x.clone();
        r[k] = 1.0 - r[k];
        let a = sobol_g(&x, &SOBOL_G_A).unwrap();
        let b = sobol_g(&r, &SOBOL_G_A).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }
}
