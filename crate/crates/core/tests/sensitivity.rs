use msgp_core::sensitivity::{
    accumulate, build_saltelli, generalized_indices, main_effect, main_effect_base, output_correlation_matrix,
    projection_indices, univariate_indices, BlockMode, CovDecomposition, Estimator, InputDistribution,
};
use msgp_core::testfns::{sobol_g_oracle, TestFunction};
use msgp_core::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn uniform(p: usize) -> Vec<InputDistribution> {
    vec![InputDistribution::Uniform { lower: -1.0, upper: 1.0 }; p]
}

fn rows_map(x: &DMatrix<f64>, m: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), m);
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        for (k, v) in f(&row).into_iter().enumerate() {
            out[(i, k)] = v;
        }
    }
    out
}

fn decompose(p: usize, m: usize, s: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> CovDecomposition {
    let mats = build_saltelli(&uniform(p), s, 5).unwrap();
    accumulate(&mats, m, BlockMode::Full, 4096, |x| Ok(rows_map(x, m, &f)))
        .unwrap()
        .decomposition(Estimator::Centered)
        .unwrap()
}

#[test]
fn saltelli_inventory_for_twenty_four_inputs() {
    let mats = build_saltelli(&uniform(24), 5000, 1).unwrap();
    assert_eq!(mats.count(), 49);
    for a in std::iter::once(&mats.a0).chain(&mats.a_j).chain(&mats.a_not_j) {
        assert_eq!(a.shape(), (5000, 24));
    }
}

#[test]
fn g_function_estimates_approach_the_oracle() {
    let a = [0.0, 1.0, 4.5, 9.0];
    let f = TestFunction::SobolG { a: a.to_vec() };
    let oracle = sobol_g_oracle(&a).unwrap();
    let dists = vec![InputDistribution::Uniform { lower: 0.0, upper: 1.0 }; 4];
    let mats = build_saltelli(&dists, 100_000, 3).unwrap();
    for est in [Estimator::Uncentered, Estimator::Centered, Estimator::Contrast] {
        let d = accumulate(&mats, 1, BlockMode::Full, 10_000, |x| f.eval_rows(x))
            .unwrap()
            .decomposition(est)
            .unwrap();
        let (first, total) = univariate_indices(&d);
        for j in 0..4 {
            assert!((first[(j, 0)] - oracle.first[j]).abs() < 0.03, "{est:?} S{j}: {}", first[(j, 0)]);
            assert!((total[(j, 0)] - oracle.total[j]).abs() < 0.03, "{est:?} ST{j}: {}", total[(j, 0)]);
        }
    }
}

#[test]
fn identical_outputs_give_equal_blocks() {
    let d = decompose(2, 3, 4000, |x| vec![x[0] + x[1] * x[1]; 3]);
    for block in std::iter::once(&d.omega).chain(&d.omega_j) {
        let v = block[(0, 0)];
        assert!(block.iter().all(|e| (e - v).abs() <= 1e-9 * v.abs().max(1e-12)));
    }
}

#[test]
fn disjoint_drivers_give_diagonal_first_order_blocks() {
    let d = decompose(3, 3, 20_000, |x| vec![x[0], x[1] * x[1], (2.0 * x[2]).sin()]);
    for j in 0..3 {
        let scale = d.omega_j[j][(j, j)];
        assert!(scale > 0.05);
        for a in 0..3 {
            for b in 0..3 {
                if (a, b) != (j, j) {
                    assert!(d.omega_j[j][(a, b)].abs() < 0.01, "block {j} entry ({a},{b})");
                }
            }
        }
    }
}

#[test]
fn inert_input_has_zero_total_projection() {
    let f = |x: &[f64]| vec![x[0] + 0.3 * x[1], x[0] * x[1], x[1] - x[0]];
    let d = decompose(3, 3, 20_000, f);
    let mats = build_saltelli(&uniform(3), 2000, 9).unwrap();
    let y = rows_map(&mats.a0, 3, f);
    let (r, _) = output_correlation_matrix(&y, &["a".into(), "b".into(), "c".into()]).unwrap();
    let proj = projection_indices(&d, &r).unwrap();
    assert!(proj.total[2].abs() < 1e-12, "{}", proj.total[2]);
}

#[test]
fn equal_standardized_indices_aggregate_to_themselves() {
    // Both outputs have unit variance and the same first-order split.
    let d = decompose(2, 2, 20_000, |x| vec![x[0] + x[1], x[1] - x[0]]);
    let (first, _) = generalized_indices(&d).unwrap();
    let (per_output, _) = univariate_indices(&d);
    for j in 0..2 {
        let mean = (per_output[(j, 0)] + per_output[(j, 1)]) / 2.0;
        assert!((first[j] - mean).abs() < 0.01);
    }
}

#[test]
fn main_effect_of_identity_is_the_diagonal() {
    let base = main_effect_base(&uniform(2), 400, 4).unwrap();
    let grid: Vec<f64> = (0..11).map(|g| -1.0 + 0.2 * g as f64).collect();
    let me = main_effect(&base, 0, &grid, |x| Ok(rows_map(x, 1, |r| vec![r[0]]))).unwrap();
    let mean0 = base.column(0).sum() / 400.0;
    for (g, v) in grid.iter().enumerate() {
        assert!((me[(g, 0)] - (v - mean0)).abs() < 1e-12);
    }
    let inert = main_effect(&base, 1, &grid, |x| Ok(rows_map(x, 1, |r| vec![r[0]]))).unwrap();
    assert!(inert.iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn independent_columns_are_nearly_uncorrelated() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let y = DMatrix::<f64>::from_fn(10_000, 4, |_, _| StandardNormal.sample(&mut rng));
    let names: Vec<String> = (0..4).map(|k| format!("y{k}")).collect();
    let (r, floored) = output_correlation_matrix(&y, &names).unwrap();
    assert!(!floored);
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                assert!(r[(i, j)].abs() < 0.03);
            }
        }
    }
}

fn random_psd(rng: &mut ChaCha8Rng, m: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::<f64>::from_fn(m, m, |_, _| StandardNormal.sample(rng));
    &a * a.transpose() * scale
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn identity_metric_with_equal_variances_matches_trace_index(seed in any::<u64>(), p in 1usize..6, m in 2usize..7, v in 0.5f64..4.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut omega = random_psd(&mut rng, m, 1.0);
        for k in 0..m {
            omega[(k, k)] = v;
        }
        let omega_j: Vec<_> = (0..p).map(|_| random_psd(&mut rng, m, 0.02)).collect();
        let omega_not_j: Vec<_> = (0..p).map(|_| random_psd(&mut rng, m, 0.02)).collect();
        let omega_interaction = (0..p).map(|j| &omega - &omega_j[j] - &omega_not_j[j]).collect();
        let d = CovDecomposition { omega, omega_j, omega_not_j, omega_interaction, diagonal_only: false };
        let (first, total) = generalized_indices(&d).unwrap();
        let proj = projection_indices(&d, &DMatrix::identity(m, m)).unwrap();
        for j in 0..p {
            prop_assert!((proj.first[j] - first[j]).abs() <= 1e-10);
            prop_assert!((proj.total[j] - total[j]).abs() <= 1e-10);
        }
    }

    #[test]
    fn single_output_indices_coincide(seed in any::<u64>(), p in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let omega = DMatrix::from_element(1, 1, 1.0 + rand::Rng::random::<f64>(&mut rng));
        let omega_j: Vec<_> = (0..p).map(|_| random_psd(&mut rng, 1, 0.05)).collect();
        let omega_not_j: Vec<_> = (0..p).map(|_| random_psd(&mut rng, 1, 0.05)).collect();
        let omega_interaction = (0..p).map(|j| &omega - &omega_j[j] - &omega_not_j[j]).collect();
        let d = CovDecomposition { omega, omega_j, omega_not_j, omega_interaction, diagonal_only: false };
        let (uf, ut) = univariate_indices(&d);
        let (gf, gt) = generalized_indices(&d).unwrap();
        let proj = projection_indices(&d, &DMatrix::identity(1, 1)).unwrap();
        for j in 0..p {
            prop_assert!((uf[(j, 0)] - gf[j]).abs() <= 1e-10 && (uf[(j, 0)] - proj.first[j]).abs() <= 1e-10);
            prop_assert!((ut[(j, 0)] - gt[j]).abs() <= 1e-10 && (ut[(j, 0)] - proj.total[j]).abs() <= 1e-10);
        }
    }
}
