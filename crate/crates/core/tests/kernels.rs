use approx::assert_relative_eq;
use msgp_core::kernels::{
    assemble_sparse_correlation, calibrate_cutoff, CrossCorrelator, CutoffRule, CutoffVector, KernelFamily, KernelSpec,
};
use msgp_core::DMatrix;
use proptest::prelude::*;

fn families() -> Vec<KernelFamily> {
    vec![
        KernelFamily::Bohman,
        KernelFamily::TruncatedPower { alpha: 1.5, nu: 2.0 },
        KernelFamily::TruncatedPower { alpha: 5.0 / 3.0, nu: 3.0 },
        KernelFamily::MaternWendland {
            phi: 1.5,
            taper_dim: 1,
            taper_k: 2,
        },
    ]
}

fn design_strategy(max_n: usize, max_p: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (3..=max_n, 1..=max_p).prop_flat_map(|(n, p)| {
        prop::collection::vec(-1.0f64..1.0, n * p).prop_map(move |v| DMatrix::from_row_slice(n, p, &v))
    })
}

fn dense(x: &DMatrix<f64>, spec: &KernelSpec, tau: &[f64]) -> DMatrix<f64> {
    let n = x.nrows();
    let row = |i: usize| x.row(i).iter().copied().collect::<Vec<_>>();
    DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { spec.correlation(&row(i), &row(j), tau) })
}

#[test]
fn calibrated_budget_reaches_the_zero_fraction() {
    let mut state = 17u64;
    let mut uniform = || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    let x = DMatrix::from_fn(200, 3, |_, _| uniform());
    let c = calibrate_cutoff(&x, 0.9, CutoffRule::ZeroFraction).unwrap();
    let spec = KernelSpec::new(KernelFamily::Bohman).unwrap();
    let r = assemble_sparse_correlation(&x, &spec, &CutoffVector::centroid(3, c, 0.9)).unwrap();
    assert!(r.zero_fraction() >= 0.9, "zero fraction {}", r.zero_fraction());
    // A vanishing omega asks for no zeros: the budget reaches the diameter.
    let c0 = calibrate_cutoff(&x, 1e-9, CutoffRule::ZeroFraction).unwrap();
    let mut max_d: f64 = 0.0;
    for i in 0..200 {
        for j in 0..i {
            max_d = max_d.max((x.row(i) - x.row(j)).abs().sum());
        }
    }
    assert_eq!(c0, max_d);
}

#[test]
fn bohman_assembly_matches_dense_on_fifty_points() {
    let x = DMatrix::from_fn(50, 2, |i, k| ((i * 37 + k * 11) % 50) as f64 / 25.0 - 1.0 + 0.003 * k as f64);
    let c = calibrate_cutoff(&x, 0.9, CutoffRule::ZeroFraction).unwrap();
    let spec = KernelSpec::new(KernelFamily::Bohman).unwrap();
    let tau = CutoffVector::centroid(2, c, 0.9);
    let sparse = assemble_sparse_correlation(&x, &spec, &tau).unwrap();
    let full = dense(&x, &spec, &tau.tau);
    for i in 0..50 {
        for j in 0..50 {
            if sparse.is_stored(i.max(j), i.min(j)) {
                assert!((sparse.get(i, j) - full[(i, j)]).abs() <= 1e-14);
            } else {
                assert_eq!(full[(i, j)], 0.0);
            }
        }
    }
}

#[test]
fn cross_correlations_match_pointwise_kernel() {
    let x = DMatrix::from_fn(30, 2, |i, k| ((i * 7 + k * 3) % 30) as f64 / 15.0 - 1.0);
    let test = DMatrix::from_row_slice(3, 2, &[0.1, -0.2, 0.95, 0.95, -0.5, 0.4]);
    let spec = KernelSpec::new(KernelFamily::Bohman).unwrap();
    let tau = [0.4, 0.3];
    let r = CrossCorrelator::new(&x, &spec, &tau).unwrap().matrix(&test).unwrap();
    for i in 0..30 {
        for t in 0..3 {
            let a: Vec<f64> = x.row(i).iter().copied().collect();
            let b: Vec<f64> = test.row(t).iter().copied().collect();
            assert_relative_eq!(r[(i, t)], spec.correlation(&a, &b, &tau), epsilon = 1e-15);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn correlation_is_symmetric_bounded_and_compact(
        a in prop::collection::vec(-1.0f64..1.0, 3),
        b in prop::collection::vec(-1.0f64..1.0, 3),
        tau in prop::collection::vec(0.05f64..2.0, 3),
        fam in 0usize..4,
    ) {
        let spec = KernelSpec::new(families()[fam].clone()).unwrap();
        let r = spec.correlation(&a, &b, &tau);
        prop_assert_eq!(r, spec.correlation(&b, &a, &tau));
        prop_assert!((0.0..=1.0).contains(&r));
        if (0..3).any(|k| (a[k] - b[k]).abs() >= tau[k]) {
            prop_assert_eq!(r, 0.0);
        }
    }

    #[test]
    fn sparse_assembly_equals_dense(x in design_strategy(40, 3), fam in 0usize..4, omega in 0.3f64..0.95) {
        let p = x.ncols();
        let spec = KernelSpec::new(families()[fam].clone()).unwrap();
        let Ok(c) = calibrate_cutoff(&x, omega, CutoffRule::ZeroFraction) else { return Ok(()) };
        let tau = CutoffVector::centroid(p, c, omega);
        let sparse = assemble_sparse_correlation(&x, &spec, &tau).unwrap().with_nugget(0.0).to_dense();
        let full = dense(&x, &spec, &tau.tau);
        prop_assert!((sparse - full).abs().max() <= 1e-14);
    }

    #[test]
    fn correlation_matrices_are_positive_semidefinite(x in design_strategy(60, 4), fam in 0usize..4, scale in 0.2f64..3.0) {
        let p = x.ncols();
        let spec = KernelSpec::new(families()[fam].clone()).unwrap();
        let tau = vec![scale; p];
        let min = dense(&x, &spec, &tau).symmetric_eigenvalues().min();
        prop_assert!(min >= -1e-8, "min eigenvalue {}", min);
    }

    #[test]
    fn simplex_is_enforced(tau in prop::collection::vec(0.0f64..1.0, 3), c in 0.1f64..2.0) {
        let sum: f64 = tau.iter().sum();
        let ok = CutoffVector::new(tau, c, 0.5).is_ok();
        prop_assert_eq!(ok, sum <= c * (1.0 + 1e-12));
    }
}
