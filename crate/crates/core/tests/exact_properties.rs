mod common;

use common::*;
use nalgebra::SymmetricEigen;
use proptest::prelude::*;
use rank_distortion::exact::{
    arcsin_holder_gap, exact_cov, exact_cov_with_stats, exact_matrix, exact_var, orthant_prob,
    CLAMP_TOLERANCE,
};
use rank_distortion::DistortionMatrix;

fn check_structure(m: &DistortionMatrix) -> Result<(), TestCaseError> {
    let n = m.n();
    let c = m.cov();
    for i in 0..n {
        for j in 0..n {
            prop_assert!((c[(i, j)] - c[(j, i)]).abs() <= 1e-9);
        }
        prop_assert!(c[(i, i)] >= -1e-9);
        prop_assert!(
            c.row(i).sum().abs() <= 1e-8 * n as f64,
            "row {} sums to {}",
            i,
            c.row(i).sum()
        );
    }
    let eig = SymmetricEigen::new(c.clone()).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    prop_assert!(min >= -1e-7 * max, "eigenvalues [{min}, {max}]");
    Ok(())
}

fn small_design() -> impl Strategy<Value = (u64, usize, usize, bool)> {
    (5usize..=10).prop_flat_map(|n| (any::<u64>(), Just(n), 1usize..=3, any::<bool>()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distortion_matrix_structure((seed, n, p, icpt) in small_design()) {
        let h = hat(&random_design(seed, n, p, icpt));
        prop_assume!(h.tie_report().passes());
        let m = exact_matrix(&h).unwrap();
        check_structure(&m)?;
        prop_assert!(m.clamp_stats().max_excursion <= CLAMP_TOLERANCE);
    }

    #[test]
    fn variance_formula_agrees_with_general((seed, n, p, icpt) in small_design()) {
        let h = hat(&random_design(seed, n, p, icpt));
        prop_assume!(h.tie_report().passes());
        for i in 1..=n {
            prop_assert!((exact_var(&h, i).unwrap() - exact_cov(&h, i, i).unwrap()).abs() <= 1e-9);
        }
    }

    #[test]
    fn permutation_equivariance((seed, n, p, icpt) in small_design(), pseed in any::<u64>()) {
        let d = random_design(seed, n, p, icpt);
        let perm = shuffled(pseed, n);
        let h = hat(&d);
        prop_assume!(h.tie_report().passes());
        let hp = hat(&permute_rows(&d, &perm));
        // new row r is old row perm[r]
        for r in 0..n {
            for s in 0..n {
                let a = exact_cov(&hp, r + 1, s + 1).unwrap();
                let b = exact_cov(&h, perm[r] + 1, perm[s] + 1).unwrap();
                prop_assert!((a - b).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn holder_gap_nonpositive(x in -1.0f64..=1.0, y in -1.0f64..=1.0) {
        prop_assert!(arcsin_holder_gap(x, y).unwrap() <= 1e-12);
    }

    #[test]
    fn orthant_prob_in_range(rho in -1.0f64..=1.0) {
        let p = orthant_prob(rho).unwrap();
        prop_assert!((0.0..=0.5).contains(&p));
    }
}

#[test]
fn same_hat_gives_same_values() {
    // H is recomputed from D A; values only depend on H
    let d = random_design(3, 8, 3, true);
    let a = random_invertible(4, 3);
    let da = rank_distortion::DesignMatrix::new(d.entries() * a, None).unwrap();
    let (h, ha) = (hat(&d), hat(&da));
    for i in 1..=8 {
        for j in 1..=8 {
            assert!((exact_cov(&h, i, j).unwrap() - exact_cov(&ha, i, j).unwrap()).abs() <= 1e-9);
        }
    }
    let h2 = h.clone();
    assert_eq!(
        exact_cov(&h, 2, 5).unwrap().to_bits(),
        exact_cov(&h2, 2, 5).unwrap().to_bits()
    );
}

#[test]
fn clamping_is_rare_and_tiny() {
    for (n, deg) in [(10, 1), (20, 2), (40, 1)] {
        let h = hat(&poly(n, deg));
        for i in [1, n / 2, n] {
            for j in [1, n / 3, n] {
                let (_, stats) = exact_cov_with_stats(&h, i, j).unwrap();
                assert!(stats.max_excursion <= CLAMP_TOLERANCE);
            }
        }
    }
}

#[test]
fn quadratic_twenty_row_sums() {
    let m = exact_matrix(&hat(&poly(20, 2))).unwrap();
    for row in m.cov().row_iter() {
        assert!(row.sum().abs() <= 1e-8 * 20.0);
    }
}

#[test]
fn holder_gap_million_pairs() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2012);
    let worst = (0..1_000_000)
        .map(|_| {
            let x = rng.random_range(-1.0..=1.0);
            let y = rng.random_range(-1.0..=1.0);
            arcsin_holder_gap(x, y).unwrap()
        })
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(worst <= 1e-12, "worst gap {worst}");
}
