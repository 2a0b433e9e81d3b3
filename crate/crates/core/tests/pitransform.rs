use pi_forge::pitransform::{to_pi, Dataset, PiExponents};
use pi_forge::units::{rational_to_f64, Registry};
use proptest::prelude::*;

const NAMES: [&str; 5] = ["g", "m", "L", "t", "alpha"];

fn rows_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(
        (1.0f64..20.0, 0.1f64..2.0, 0.2f64..3.0, 0.01f64..5.0, -1.0f64..1.0)
            .prop_map(|(g, m, l, t, a)| vec![g, m, l, t, a]),
        1..30,
    )
}

fn pendulum_groups() -> Vec<PiExponents> {
    vec![
        PiExponents::from_ints(NAMES, &[1, 0, -1, 2, 0]),
        PiExponents::from_ints(NAMES, &[0, 0, 0, 0, 1]),
    ]
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #[test]
    fn row_permutation_commutes(rows in rows_strategy(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let data = Dataset::from_rows(Registry::pendulum(), &rows).unwrap();
        let mut perm: Vec<usize> = (0..rows.len()).collect();
        perm.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = to_pi(&data, &pendulum_groups()).unwrap();
        let b = to_pi(&data.select_rows(&perm), &pendulum_groups()).unwrap();
        for (j, col) in b.columns.iter().enumerate() {
            for (k, &r) in perm.iter().enumerate() {
                prop_assert_eq!(col[k], a.columns[j][r]);
            }
        }
    }

    #[test]
    fn unit_changes_leave_groups_unchanged(
        rows in rows_strategy(),
        length in prop::sample::select(vec![100.0f64, 1e-3, 3.28084]),
        time in prop::sample::select(vec![60.0f64, 1e3, 1.0 / 3600.0]),
        mass in prop::sample::select(vec![1e3f64, 2.20462]),
    ) {
        let reg = Registry::pendulum();
        let data = Dataset::from_rows(reg.clone(), &rows).unwrap();
        // each column picks up length^a · time^b · mass^c from its dimension vector
        let factors: Vec<f64> = NAMES
            .iter()
            .map(|n| {
                let e = reg.omega(n).unwrap().exponents();
                mass.powf(rational_to_f64(e[0])) * length.powf(rational_to_f64(e[1])) * time.powf(rational_to_f64(e[2]))
            })
            .collect();
        let converted: Vec<Vec<f64>> = rows
            .iter()
            .map(|r| r.iter().zip(&factors).map(|(v, f)| v * f).collect())
            .collect();
        let other = Dataset::from_rows(reg, &converted).unwrap();
        let a = to_pi(&data, &pendulum_groups()).unwrap();
        let b = to_pi(&other, &pendulum_groups()).unwrap();
        for (x, y) in a.columns.iter().flatten().zip(b.columns.iter().flatten()) {
            prop_assert!(close(*x, *y, 1e-13), "{x} vs {y}");
        }
    }

    #[test]
    fn exponents_add_when_groups_multiply(
        rows in rows_strategy(),
        e1 in prop::collection::vec(-2.0f64..2.0, 4),
        e2 in prop::collection::vec(-2.0f64..2.0, 4),
    ) {
        let data = Dataset::from_rows(Registry::pendulum(), &rows).unwrap();
        let over = &NAMES[..4];
        let sum: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| a + b).collect();
        let p = to_pi(
            &data,
            &[
                PiExponents::new(over.iter().copied(), e1),
                PiExponents::new(over.iter().copied(), e2),
                PiExponents::new(over.iter().copied(), sum),
            ],
        )
        .unwrap();
        for r in 0..rows.len() {
            prop_assert!(close(p.columns[2][r], p.columns[0][r] * p.columns[1][r], 1e-12));
        }
    }
}

#[test]
fn pendulum_group_matches_hand_value() {
    let data = Dataset::from_rows(Registry::pendulum(), &[vec![9.81, 0.5, 2.0, 1.5, 0.1]]).unwrap();
    let p = to_pi(&data, &pendulum_groups()).unwrap();
    assert!(close(p.columns[0][0], 9.81 * 1.5 * 1.5 / 2.0, 1e-14));
    assert_eq!(p.columns[1][0], 0.1);
}
