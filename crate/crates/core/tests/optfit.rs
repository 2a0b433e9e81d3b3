use pi_forge::nullspace::{rational_nullspace, NullspaceBasis};
use pi_forge::optfit::{optfit_discover, OptConfig, OptProblem};
use pi_forge::pitransform::{to_pi, Dataset, PiExponents};
use pi_forge::regress::spearman;
use pi_forge::units::{BaseDimensions, QuantityDecl, Registry};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `a, b, c` in metres, `y = 1 / (1 + a·c/b²)`: one relevant group out of two.
fn data(seed: u64, rows: usize) -> (Dataset, NullspaceBasis) {
    let reg = Registry::new(
        BaseDimensions::new(["L"]).unwrap(),
        vec![
            QuantityDecl::parameter("a", &[1]),
            QuantityDecl::parameter("b", &[1]),
            QuantityDecl::parameter("c", &[1]),
            QuantityDecl::output("y", &[0]),
        ],
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows: Vec<Vec<f64>> = (0..rows)
        .map(|_| {
            let a: f64 = rng.random_range(0.5..2.0);
            let b: f64 = rng.random_range(0.5..2.0);
            let c: f64 = rng.random_range(0.5..2.0);
            vec![a, b, c, 1.0 / (1.0 + a * c / (b * b))]
        })
        .collect();
    let basis = rational_nullspace(&reg.units_matrix().unwrap().d_p());
    (Dataset::from_rows(reg, &rows).unwrap(), basis)
}

fn cfg() -> OptConfig {
    OptConfig {
        n_starts: 6,
        n_train: 60,
        max_iter: 300,
        anchor: Some("a".into()),
        ..OptConfig::default()
    }
}

#[test]
fn discovered_group_orders_held_out_rows_like_the_truth() {
    let (train, basis) = data(1, 200);
    let res = optfit_discover(&train, &basis, 1, &cfg()).unwrap();
    let (held, _) = data(2, 500);
    let found = to_pi(&held, &res.exponents).unwrap();
    let truth = to_pi(&held, &[PiExponents::from_ints(["a", "b", "c"], &[1, -2, 1])]).unwrap();
    let rho = spearman(&found.columns[0], &truth.columns[0]);
    assert!(rho.abs() >= 0.999, "spearman {rho}, exponents {:?}", res.exponents[0].values);

    for s in &res.starts {
        assert!(res.objective <= s.objective);
    }
    assert!(res.null_residual <= 1e-12);
    let anchored = res.anchored[0].as_ref().unwrap();
    assert!((anchored.get("b").unwrap() + 2.0).abs() < 0.05);
}

#[test]
fn result_does_not_depend_on_the_thread_count() {
    let (train, basis) = data(3, 120);
    let c = OptConfig { n_starts: 4, n_train: 40, max_iter: 150, ..cfg() };
    let serial = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap()
        .install(|| optfit_discover(&train, &basis, 1, &c).unwrap());
    let pooled = rayon::ThreadPoolBuilder::new()
        .num_threads(3)
        .build()
        .unwrap()
        .install(|| optfit_discover(&train, &basis, 1, &c).unwrap());
    assert_eq!(serial, pooled);
    let again = optfit_discover(&train, &basis, 1, &c).unwrap();
    assert_eq!(serial, again);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn every_evaluated_point_is_homogeneous(coords in prop::collection::vec(-5.0f64..5.0, 2)) {
        let (train, basis) = data(4, 30);
        let rows: Vec<usize> = (0..30).collect();
        let problem = OptProblem::new(&train, &basis, 1, &rows, &OptConfig::default()).unwrap();
        let phi = problem.exponents(&coords);
        let d_p = basis.matrix();
        for p in &phi {
            let scale = p.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            for r in d_p.mul_f64(p).unwrap() {
                prop_assert!(r.abs() <= 1e-14 * scale);
            }
        }
        let value = problem.objective(&coords);
        prop_assert!(value >= 0.0);
    }
}
