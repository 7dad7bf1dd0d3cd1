//! Hat matrix construction and the index contrasts built from it.
//!
//! All public index arguments are 1-based. The raw matrix returned by
//! [`HatMatrix::entries`] is an ordinary 0-based `nalgebra` matrix.

use nalgebra::DMatrix;

use crate::design::DesignMatrix;
use crate::error::{zero_based, Error, Result};

/// Relative tolerance on the pivoted-QR diagonal of the column-normalized design.
pub const RANK_TOLERANCE: f64 = 1e-10;
/// Tolerance for the residual tie condition `H_ii = H_jj = H_ij + 1`.
pub const TIE_TOLERANCE: f64 = 1e-10;
/// Per-entry tolerance for `H 1 = 1`.
pub const CONSTANT_TOLERANCE: f64 = 1e-9;

/// Orthogonal projection onto the column space of a design.
#[derive(Debug, Clone)]
pub struct HatMatrix {
    entries: DMatrix<f64>,
    /// Rows of an orthonormal basis `Q` of the column space, row-major `n x p`.
    basis: Vec<f64>,
    leverages: Vec<f64>,
    p: usize,
    eta: f64,
    ties: TieReport,
    constant_gap: f64,
}

/// Outcome of the residual tie checks.
#[derive(Debug, Clone, PartialEq)]
pub struct TieReport {
    /// At most one leverage is `>= 1/2`; sufficient for pairwise distinct residuals.
    pub leverage_condition: bool,
    /// No pair `(i, j)` satisfies the tie condition.
    pub pairwise: bool,
    /// First offending pair (1-based), if any.
    pub tie_pair: Option<(usize, usize)>,
}

impl TieReport {
    /// Either sufficient condition holds.
    pub fn passes(&self) -> bool {
        self.leverage_condition || self.pairwise
    }
}

/// Scales each nonzero column to unit length; zero columns stay zero.
fn normalized_columns(d: &DMatrix<f64>) -> DMatrix<f64> {
    let mut scaled = d.clone();
    for mut col in scaled.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    scaled
}

fn rank_of_factor(r: &DMatrix<f64>) -> usize {
    let max = r.diagonal().iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return 0;
    }
    r.diagonal()
        .iter()
        .filter(|x| x.abs() > RANK_TOLERANCE * max)
        .count()
}

/// Numerical rank of `d` after scaling each column to unit length.
pub fn effective_rank(d: &DMatrix<f64>) -> usize {
    rank_of_factor(&normalized_columns(d).col_piv_qr().r())
}

/// `H = Q Q^T` from a column-pivoted QR of the normalized design.
pub fn compute_hat_matrix(design: &DesignMatrix) -> Result<HatMatrix> {
    let d = design.entries();
    let (n, p) = d.shape();
    let qr = normalized_columns(d).col_piv_qr();
    let rank = rank_of_factor(&qr.r());
    if rank < p {
        return Err(Error::RankDeficient(format!(
            "effective rank {rank} below column count {p}"
        )));
    }
    let q = qr.q();
    let qqt = &q * q.transpose();
    let entries = DMatrix::from_fn(n, n, |i, j| 0.5 * (qqt[(i, j)] + qqt[(j, i)]));
    let basis = (0..n)
        .flat_map(|i| (0..p).map(move |c| (i, c)))
        .map(|(i, c)| q[(i, c)])
        .collect();
    Ok(HatMatrix::from_parts(entries, basis, p))
}

impl HatMatrix {
    fn from_parts(entries: DMatrix<f64>, basis: Vec<f64>, p: usize) -> Self {
        let n = entries.nrows();
        let leverages: Vec<f64> = entries.diagonal().iter().copied().collect();
        let eta = leverages.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let constant_gap = entries
            .row_iter()
            .map(|row| (row.sum() - 1.0).abs())
            .fold(0.0, f64::max);

        let leverage_condition = leverages.iter().filter(|&&h| h >= 0.5).count() <= 1;
        let mut tie_pair = None;
        'outer: for (i, &lev) in leverages.iter().enumerate() {
            if lev < 0.5 - TIE_TOLERANCE {
                continue;
            }
            for j in (i + 1)..n {
                if ties(&entries, i, j) {
                    tie_pair = Some((i + 1, j + 1));
                    break 'outer;
                }
            }
        }
        let ties = TieReport {
            leverage_condition,
            pairwise: tie_pair.is_none(),
            tie_pair,
        };
        Self {
            entries,
            basis,
            leverages,
            p,
            eta,
            ties,
            constant_gap,
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    /// Rank of the projection (number of design columns).
    pub fn p(&self) -> usize {
        self.p
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Diagonal of `H`, 0-based vector.
    pub fn leverages(&self) -> &[f64] {
        &self.leverages
    }

    /// Maximal leverage.
    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// 1-based entry access.
    pub fn get(&self, i: usize, j: usize) -> Result<f64> {
        let n = self.n();
        Ok(self.entries[(zero_based(i, n)?, zero_based(j, n)?)])
    }

    pub fn tie_report(&self) -> &TieReport {
        &self.ties
    }

    /// `max_i |(H 1)_i - 1|`.
    pub fn constant_gap(&self) -> f64 {
        self.constant_gap
    }

    /// Whether the column space contains the constant vector.
    pub fn contains_constant(&self) -> bool {
        self.constant_gap <= CONSTANT_TOLERANCE
    }

    /// Fails with `TieDetected` unless one of the tie-free conditions holds.
    pub fn require_tie_free(&self) -> Result<()> {
        if self.ties.passes() {
            return Ok(());
        }
        let (i, j) = self.ties.tie_pair.unwrap_or((0, 0));
        Err(Error::TieDetected { i, j })
    }

    /// Row `k` of `Q`.
    #[inline]
    fn basis_row(&self, k: usize) -> &[f64] {
        &self.basis[k * self.p..(k + 1) * self.p]
    }

    /// Rows `q_k - q_i` for all `k`, row-major `n x p` (0-based `i`).
    pub(crate) fn differences_from(&self, i: usize) -> Vec<f64> {
        let qi = self.basis_row(i);
        self.basis
            .chunks_exact(self.p)
            .flat_map(|qk| qk.iter().zip(qi).map(|(a, b)| a - b))
            .collect()
    }

    /// `H_{kl,ij}` with 0-based indices, no range checks.
    ///
    /// Evaluated as `(q_k - q_i) . (q_l - q_j)`, which equals
    /// `H_kl + H_ij - H_kj - H_il` but keeps relative accuracy when the
    /// contrast is tiny, e.g. `H_{kk,i}` close to 0.
    #[inline]
    pub(crate) fn contrast(&self, k: usize, l: usize, i: usize, j: usize) -> f64 {
        let (qk, qi, ql, qj) = (
            self.basis_row(k),
            self.basis_row(i),
            self.basis_row(l),
            self.basis_row(j),
        );
        let mut s = 0.0;
        for c in 0..self.p {
            s += (qk[c] - qi[c]) * (ql[c] - qj[c]);
        }
        s
    }
}

/// Dot product of two `p`-vectors.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for (x, y) in a.iter().zip(b) {
        s += x * y;
    }
    s
}

fn ties(h: &DMatrix<f64>, i: usize, j: usize) -> bool {
    (h[(i, i)] - h[(j, j)]).abs() <= TIE_TOLERANCE
        && (h[(i, i)] - h[(i, j)] - 1.0).abs() <= TIE_TOLERANCE
}

/// Kronecker delta contrast `d_kl + d_ij - d_kj - d_il` (1-based indices in `1..=n`).
pub fn delta(n: usize, k: usize, l: usize, i: usize, j: usize) -> Result<i32> {
    for idx in [k, l, i, j] {
        zero_based(idx, n)?;
    }
    Ok(delta_unchecked(k, l, i, j))
}

#[inline]
pub(crate) fn delta_unchecked(k: usize, l: usize, i: usize, j: usize) -> i32 {
    (k == l) as i32 + (i == j) as i32 - (k == j) as i32 - (i == l) as i32
}

/// `H_{kl} + H_{ij} - H_{kj} - H_{il}` (1-based).
pub fn h_contrast(h: &HatMatrix, k: usize, l: usize, i: usize, j: usize) -> Result<f64> {
    let n = h.n();
    Ok(h.contrast(
        zero_based(k, n)?,
        zero_based(l, n)?,
        zero_based(i, n)?,
        zero_based(j, n)?,
    ))
}

/// True when residuals `i` and `j` coincide almost surely.
pub fn tie_condition(h: &HatMatrix, i: usize, j: usize) -> Result<bool> {
    let n = h.n();
    let (a, b) = (zero_based(i, n)?, zero_based(j, n)?);
    if a == b {
        return Err(Error::SameIndex(i));
    }
    Ok(ties(&h.entries, a, b))
}

/// Reports both tie-free conditions; see [`TieReport::passes`].
pub fn tie_free(h: &HatMatrix) -> TieReport {
    h.ties.clone()
}
