//! Small-leverage approximations of the rank-distortion moments.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{zero_based, Error, Result};
use crate::projection::HatMatrix;
use crate::sum::NeumaierSum;

/// `2 sqrt(4 - delta_ij) pi`: `4 pi` off the diagonal, `2 sqrt(3) pi` on it.
fn divisor(same: bool) -> f64 {
    if same {
        2.0 * 3f64.sqrt() * PI
    } else {
        4.0 * PI
    }
}

/// Gaussian density functionals `((E phi)^2, E phi^2)` in units of `sigma^-2`:
/// `1 / (4 pi)` and `1 / (2 sqrt(3) pi)`.
pub fn gaussian_density_constants() -> (f64, f64) {
    (1.0 / (4.0 * PI), 1.0 / (2.0 * 3f64.sqrt() * PI))
}

/// `(n^2 H_ij - n) / (2 sqrt(4 - delta_ij) pi)`.
///
/// Only meaningful when the column space contains the constant vector; this is
/// not enforced here (see [`ApproxReport::constant_in_span`]).
pub fn approx_cov(h: &HatMatrix, i: usize, j: usize) -> Result<f64> {
    let n = h.n();
    let (a, b) = (zero_based(i, n)?, zero_based(j, n)?);
    Ok(approx_value(n, h.entries()[(a, b)], a == b))
}

fn approx_value(n: usize, h_ij: f64, same: bool) -> f64 {
    let nf = n as f64;
    (nf * nf * h_ij - nf) / divisor(same)
}

/// `n^2 H_ij / (2 sqrt(4 - delta_ij) pi)`: the leading term without centering.
pub fn heuristic_cov(h: &HatMatrix, i: usize, j: usize) -> Result<f64> {
    let n = h.n();
    let (a, b) = (zero_based(i, n)?, zero_based(j, n)?);
    let nf = n as f64;
    Ok(nf * nf * h.entries()[(a, b)] / divisor(a == b))
}

/// Direct double sum of `H_{kl,ij}` over all `k, l`. Equals `n^2 H_ij - n`
/// whenever `H 1 = 1`.
pub fn contrast_sum_identity(h: &HatMatrix, i: usize, j: usize) -> Result<f64> {
    let n = h.n();
    let (a, b) = (zero_based(i, n)?, zero_based(j, n)?);
    if !h.contains_constant() {
        return Err(Error::InterceptMissing(h.constant_gap()));
    }
    let mut acc = NeumaierSum::new();
    for k in 0..n {
        for l in 0..n {
            acc += h.contrast(k, l, a, b);
        }
    }
    Ok(acc.value())
}

/// Per-index approximation lines
/// `n sqrt((H_ii - 1/n) / (2 pi sqrt 3))` and `n sqrt(H_ii / (2 pi sqrt 3))`.
#[derive(Debug, Clone, PartialEq)]
pub struct RmsLines {
    pub with_intercept: Vec<f64>,
    pub raw: Vec<f64>,
    /// Indices (0-based) whose first radicand was negative and floored at 0.
    pub floored: Vec<bool>,
}

pub fn rms_lines(h: &HatMatrix) -> RmsLines {
    let nf = h.n() as f64;
    let c = divisor(true);
    let mut with_intercept = Vec::with_capacity(h.n());
    let mut raw = Vec::with_capacity(h.n());
    let mut floored = Vec::with_capacity(h.n());
    for &lev in h.leverages() {
        let centered = (lev - 1.0 / nf) / c;
        floored.push(centered < 0.0);
        with_intercept.push(nf * centered.max(0.0).sqrt());
        raw.push(nf * (lev.max(0.0) / c).sqrt());
    }
    RmsLines {
        with_intercept,
        raw,
        floored,
    }
}

/// Approximate covariance matrix plus the two rms lines.
#[derive(Debug, Clone, PartialEq)]
pub struct ApproxReport {
    pub approx_cov: DMatrix<f64>,
    pub rms_with_intercept: Vec<f64>,
    pub rms_raw: Vec<f64>,
    pub floored: Vec<bool>,
    pub eta: f64,
    /// `H 1 = 1`; the approximation is only justified when this holds.
    pub constant_in_span: bool,
}

impl ApproxReport {
    pub fn new(h: &HatMatrix) -> Self {
        let n = h.n();
        let approx_cov = DMatrix::from_fn(n, n, |i, j| {
            // built from the upper triangle so the result is exactly symmetric
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            approx_value(n, h.entries()[(a, b)], a == b)
        });
        let constant_in_span = h.contains_constant();
        if !constant_in_span {
            log::warn!(
                "constant vector not in column space (gap {:e}); approximation unjustified",
                h.constant_gap()
            );
        }
        let lines = rms_lines(h);
        Self {
            approx_cov,
            rms_with_intercept: lines.with_intercept,
            rms_raw: lines.raw,
            floored: lines.floored,
            eta: h.eta(),
            constant_in_span,
        }
    }

    pub fn n(&self) -> usize {
        self.approx_cov.nrows()
    }
}
