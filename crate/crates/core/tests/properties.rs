use std::sync::Arc;

use compgrad::experiments::{read_csv, run, write_csv, ExperimentConfig, Suite};
use compgrad::geometry::{sample_haar_frame, sample_sphere};
use compgrad::{
    dp, estimate, estimate_constant, make_hyperplane, make_quadratic, test_deterministic,
    test_randomized, ComparisonOracle, Reflector, TestParams, TiePolicy, UnitVector,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vec_in(n: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, n)
}

fn nonzero(n: usize) -> impl Strategy<Value = Vec<f64>> {
    vec_in(n, -1.0, 1.0).prop_filter("nonzero", |v| v.iter().map(|c| c * c).sum::<f64>() > 1e-6)
}

fn policy(i: u8, seed: u64) -> TiePolicy {
    match i % 5 {
        0 => TiePolicy::AlwaysPlus,
        1 => TiePolicy::AlwaysMinus,
        2 => TiePolicy::RandomSeeded(seed),
        3 => TiePolicy::alternating(),
        _ => TiePolicy::contrarian(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn unit_vectors_are_normalized(v in nonzero(9)) {
        let u = UnitVector::new(v).unwrap();
        let norm: f64 = u.iter().map(|c| c * c).sum::<f64>().sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn reflector_swaps_with_first_axis(v in nonzero(7)) {
        let u = UnitVector::new(v).unwrap();
        let h = Reflector::to_e1(&u);
        let image = h.apply(&u);
        prop_assert!((image[0] - 1.0).abs() < 1e-12);
        prop_assert!(image[1..].iter().all(|c| c.abs() < 1e-12));
        let back = h.apply(&image);
        prop_assert!(back.iter().zip(u.iter()).all(|(a, b)| (a - b).abs() < 1e-12));
    }

    #[test]
    fn haar_frames_are_orthonormal(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(sample_haar_frame(n, &mut rng).orthonormality_residual() < 1e-10);
    }

    #[test]
    fn directional_preference_is_sound(
        diag in vec_in(6, 0.0, 3.0),
        b in vec_in(6, -2.0, 2.0),
        x in vec_in(6, -2.0, 2.0),
        v in nonzero(6),
        log_delta in -4.0f64..0.0,
        which in any::<u8>(),
        seed in any::<u64>(),
    ) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let f = Arc::new(make_quadratic(&a, b, 0.0).unwrap());
        prop_assume!(f.smoothness() > 1e-3);
        let oracle = ComparisonOracle::new(Arc::clone(&f), policy(which, seed));
        let v = UnitVector::new(v).unwrap();
        let delta = 10f64.powf(log_delta);
        let verdict = dp(&oracle, &x, &v, delta, f.smoothness()).unwrap();
        let grad = f.verification().gradient(&x);
        prop_assert!(verdict.holds_for(&grad, 1e-9));
        prop_assert_eq!(oracle.read_counter(), 1);
    }

    #[test]
    fn quadratic_smoothness_and_taylor_bounds(
        diag in vec_in(4, -2.0, 2.0),
        b in vec_in(4, -1.0, 1.0),
        x in vec_in(4, -3.0, 3.0),
        y in vec_in(4, -3.0, 3.0),
        v in nonzero(4),
        h in 1e-3f64..1.0,
    ) {
        let a = DMatrix::from_diagonal(&DVector::from_vec(diag));
        let f = make_quadratic(&a, b, 1.0).unwrap();
        let handle = f.verification();
        let (gx, gy) = (handle.gradient(&x), handle.gradient(&y));
        let dg: f64 = gx.iter().zip(&gy).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        let dx: f64 = x.iter().zip(&y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        prop_assert!(dg <= f.smoothness() * dx + 1e-9);
        let v = UnitVector::new(v).unwrap();
        let stepped: Vec<f64> = x.iter().zip(v.iter()).map(|(p, q)| p + h * q).collect();
        let lhs = (handle.value(&stepped) - handle.value(&x) - h * v.dot(&gx)).abs();
        prop_assert!(lhs <= f.smoothness() * h * h / 2.0 + 1e-9);
    }

    #[test]
    fn hyperplane_comparisons_ignore_offset(
        g in nonzero(5),
        x in vec_in(5, -3.0, 3.0),
        y in vec_in(5, -3.0, 3.0),
        offset in -50.0f64..50.0,
    ) {
        let a = make_hyperplane(&g, 0.0).unwrap();
        let b = make_hyperplane(&g, offset).unwrap();
        let diff: Vec<f64> = y.iter().zip(&x).map(|(p, q)| p - q).collect();
        prop_assert_eq!(a.comparison_sign(&diff), b.comparison_sign(&diff));
    }

    #[test]
    fn randomized_tester_query_count_is_fixed(seed in any::<u64>(), n in 6usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = sample_sphere(n, &mut rng);
        let v = sample_sphere(n, &mut rng);
        let model = make_hyperplane(&g, 0.0).unwrap().into_model(1.0).unwrap();
        let oracle = ComparisonOracle::new(Arc::new(model), TiePolicy::RandomSeeded(seed));
        let params = TestParams::new(0.2, 1.0).unwrap();
        let verdict = test_randomized(&oracle, &vec![0.0; n], &v, &params, &mut rng).unwrap();
        prop_assert_eq!(verdict.queries_used, 879);
        prop_assert_eq!(oracle.read_counter(), 879);
    }

    #[test]
    fn constant_stage_uses_one_query_per_axis(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = sample_sphere(n, &mut rng);
        let model = make_hyperplane(&g, 0.0).unwrap().into_model(1.0).unwrap();
        let oracle = ComparisonOracle::new(Arc::new(model), TiePolicy::AlwaysMinus);
        let r = estimate_constant(&oracle, &vec![0.0; n], 1.0, 1.0, &mut rng).unwrap();
        prop_assert_eq!(r.queries_used, n as u64);
    }

    #[test]
    fn every_evaluation_goes_through_the_oracle(seed in any::<u64>(), n in 2usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = sample_sphere(n, &mut rng);
        let v = sample_sphere(n, &mut rng);
        let f = Arc::new(make_hyperplane(&g, 0.5).unwrap().into_model(1.0).unwrap());
        let oracle = ComparisonOracle::new(Arc::clone(&f), TiePolicy::RandomSeeded(seed));
        let x = vec![0.0; n];
        estimate(&oracle, &x, 0.1, 1.0, 1.0, &mut rng).unwrap();
        let params = TestParams::new(0.1, 1.0).unwrap();
        test_deterministic(&oracle, &x, &v, &params).unwrap();
        prop_assert_eq!(f.evaluations(), 2 * oracle.read_counter());
    }
}

#[test]
fn records_survive_a_csv_round_trip() {
    let mut config = ExperimentConfig::for_suite(Suite::Estimate);
    config.grid.n = Some(vec![5]);
    config.grid.epsilon = Some(vec![0.2]);
    config.seeds.replicas = 4;
    let out = run(&config).unwrap();
    let mut first = Vec::new();
    write_csv(&out.records, &mut first).unwrap();
    let back = read_csv(first.as_slice()).unwrap();
    let mut second = Vec::new();
    write_csv(&back, &mut second).unwrap();
    assert_eq!(first, second);
}
