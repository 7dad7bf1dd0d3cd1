#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rank_distortion::design::{equispaced, polynomial_design};
use rank_distortion::projection::compute_hat_matrix;
use rank_distortion::{DesignMatrix, HatMatrix};

/// Random `n x p` design with uniform(-2, 2) entries; the first column is
/// all ones when `intercept` is set.
pub fn random_design(seed: u64, n: usize, p: usize, intercept: bool) -> DesignMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = DMatrix::from_fn(n, p, |_, j| {
        if intercept && j == 0 {
            1.0
        } else {
            rng.random_range(-2.0..2.0)
        }
    });
    DesignMatrix::new(entries, None).expect("random design has full rank")
}

pub fn random_invertible(seed: u64, p: usize) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let a = DMatrix::from_fn(p, p, |_, _| rng.random_range(-2.0..2.0));
        let det: f64 = a.determinant();
        if det.abs() > 0.2 {
            return a;
        }
    }
}

pub fn poly(n: usize, degree: usize) -> DesignMatrix {
    polynomial_design(&equispaced(n, 0.0, 1.0).unwrap(), degree).unwrap()
}

pub fn hat(d: &DesignMatrix) -> HatMatrix {
    compute_hat_matrix(d).unwrap()
}

/// Row permutation `perm` applied to the design: new row `r` is old row `perm[r]`.
pub fn permute_rows(d: &DesignMatrix, perm: &[usize]) -> DesignMatrix {
    let e = d.entries();
    DesignMatrix::new(
        DMatrix::from_fn(e.nrows(), e.ncols(), |r, c| e[(perm[r], c)]),
        None,
    )
    .unwrap()
}

pub fn shuffled(seed: u64, n: usize) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}
