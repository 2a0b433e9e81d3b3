use std::collections::BTreeSet;

use pi_forge::nullspace::{canonical_line, enumerate_candidates, rational_nullspace};
use pi_forge::units::{build_units_matrix, check_homogeneous, BaseDimensions, DimensionVector, QuantityDecl, Registry};
use pi_forge::{Error, Rational};
use proptest::prelude::*;

fn ints(v: &[i64]) -> Vec<Rational> {
    v.iter().map(|&e| Rational::from_integer(e)).collect()
}

fn registry(columns: &[Vec<i64>]) -> Registry {
    Registry::new(
        BaseDimensions::new(["A", "B", "C"]).unwrap(),
        columns
            .iter()
            .enumerate()
            .map(|(i, c)| QuantityDecl::parameter(format!("q{i}"), c))
            .collect(),
    )
    .unwrap()
}

/// Every vector of the integer box `[-bound, bound]^d`.
fn box_vectors(d: usize, bound: i64) -> Vec<Vec<i64>> {
    let mut out = vec![vec![]];
    for _ in 0..d {
        out = out
            .into_iter()
            .flat_map(|v| {
                (-bound..=bound).map(move |x| {
                    let mut w = v.clone();
                    w.push(x);
                    w
                })
            })
            .collect();
    }
    out
}

fn apply(columns: &[Vec<i64>], v: &[i64]) -> Vec<i64> {
    (0..3).map(|r| columns.iter().zip(v).map(|(c, x)| c[r] * x).sum()).collect()
}

fn columns_strategy() -> impl Strategy<Value = Vec<Vec<i64>>> {
    (2usize..=6).prop_flat_map(|d| prop::collection::vec(prop::collection::vec(-2i64..=2, 3), d))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_matches_the_box_oracle(columns in columns_strategy(), bound in 1i64..=2, time in prop::collection::vec(-2i64..=2, 3)) {
        let reg = registry(&columns);
        let d = build_units_matrix(&reg).unwrap();
        let basis = rational_nullspace(&d);
        let all = box_vectors(columns.len(), bound);
        let lines: BTreeSet<Vec<i64>> = all
            .iter()
            .filter(|v| apply(&columns, v) == vec![0; 3])
            .filter_map(|v| canonical_line(v))
            .collect();
        let times: BTreeSet<Vec<i64>> = all.iter().filter(|v| apply(&columns, v) == time).cloned().collect();
        let td = DimensionVector::from_ints(&time);
        match enumerate_candidates(&basis, bound, Some(&td)) {
            Ok(set) => {
                let got: BTreeSet<Vec<i64>> = set.pi_candidates.iter().cloned().collect();
                prop_assert_eq!(got, lines);
                let got_t: BTreeSet<Vec<i64>> = set.timescale_candidates.iter().cloned().collect();
                prop_assert_eq!(got_t, times);
                for c in &set.pi_candidates {
                    prop_assert!(check_homogeneous(&ints(c), &d).unwrap());
                }
                for c in &set.timescale_candidates {
                    prop_assert_eq!(d.mul_vec(&ints(c)).unwrap(), ints(&time));
                }
            }
            Err(Error::EmptyCandidates { .. }) => {
                prop_assert!((lines.is_empty() && basis.pi_count() > 0) || times.is_empty());
            }
            Err(e) => prop_assert!(false, "{e}"),
        }
    }

    #[test]
    fn basis_is_exact_and_counts_match_rank(columns in columns_strategy()) {
        let d = build_units_matrix(&registry(&columns)).unwrap();
        let basis = rational_nullspace(&d);
        for v in basis.basis() {
            prop_assert!(check_homogeneous(v, &d).unwrap());
        }
        let real: Vec<Vec<f64>> = columns.iter().map(|c| c.iter().map(|&x| x as f64).collect()).collect();
        let m = nalgebra::DMatrix::from_fn(3, columns.len(), |i, j| real[j][i]);
        prop_assert_eq!(basis.pi_count(), columns.len() - m.rank(1e-9));
    }

    #[test]
    fn permuting_the_registry_permutes_columns(columns in columns_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut perm: Vec<usize> = (0..columns.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let reg = registry(&columns);
        let shuffled = Registry::new(
            reg.base().clone(),
            perm.iter().map(|&i| reg.quantities()[i].clone()).collect(),
        )
        .unwrap();
        let a = build_units_matrix(&reg).unwrap();
        let b = build_units_matrix(&shuffled).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(b.column(k), a.column(i));
            prop_assert_eq!(&b.names()[k], &a.names()[i]);
        }
        prop_assert_eq!(rational_nullspace(&a).pi_count(), rational_nullspace(&b).pi_count());
    }
}

#[test]
fn benchmark_group_counts() {
    let count = |reg: Registry, names: &[&str]| {
        rational_nullspace(&reg.units_matrix().unwrap().columns(names).unwrap()).pi_count()
    };
    assert_eq!(count(Registry::pendulum(), &["g", "m", "L", "t", "alpha"]), 2);
    assert_eq!(count(Registry::pendulum(), &["g", "m", "L", "t"]), 1);
    assert_eq!(count(Registry::hoop(), &["m", "R", "b", "g", "omega"]), 2);
    assert_eq!(count(Registry::hoop(), &["m", "R", "b", "g", "omega", "t"]), 3);
    assert_eq!(count(Registry::blasius(), &["x", "y", "U_inf", "nu"]), 2);
    assert_eq!(count(Registry::rayleigh_benard(), &["Lz", "g", "alpha", "dT", "nu", "kappa"]), 3);
}

#[test]
fn hoop_candidates_are_homogeneous() {
    let reg = Registry::hoop();
    let d = reg.units_matrix().unwrap().parameters();
    let set = enumerate_candidates(&rational_nullspace(&d), 2, Some(&reg.time_dimension().unwrap())).unwrap();
    for m in set.pi_members() {
        assert!(check_homogeneous(&ints(&m.exponents), &d).unwrap());
        assert!(m.exponents.iter().all(|x| x.abs() <= 2));
    }
    let t = reg.time_dimension().unwrap();
    for c in &set.timescale_candidates {
        assert_eq!(d.mul_vec(&ints(c)).unwrap(), t.exponents());
    }
    assert!(set.timescale_candidates.contains(&vec![-1, 0, 1, -1, 0]));
}
