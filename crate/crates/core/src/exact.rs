//! Exact second moments of rank distortions under Gaussian errors.
//!
//! Every summand is a sum of four bivariate Gaussian orthant probabilities,
//! each of which has the closed form `(pi/2 + asin(rho)) / (2 pi)`. The
//! constant parts cancel, leaving only the arcsine terms. Evaluating one
//! covariance is `O(n^2)`, the full matrix `O(n^4)`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_6, PI, SQRT_2};

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{zero_based, Error, Result};
use crate::projection::{delta_unchecked, dot, HatMatrix};
use crate::sum::NeumaierSum;

/// Arguments within this distance outside `[-1, 1]` are clamped.
pub const CLAMP_TOLERANCE: f64 = 1e-12;
/// `2 - H_kk,i` at or below this value is rejected.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// `asin(d / 2)` for `d` in `-2..=2`.
const HALF_DELTA_ASIN: [f64; 5] = [-FRAC_PI_2, -FRAC_PI_6, 0.0, FRAC_PI_6, FRAC_PI_2];

/// Clamp instrumentation collected while evaluating the formulas.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ClampStats {
    /// Number of arguments that had to be pulled back into range.
    pub clamped: u64,
    /// Largest excursion beyond the admissible range that was clamped.
    pub max_excursion: f64,
}

impl ClampStats {
    fn merge(&mut self, other: ClampStats) {
        self.clamped += other.clamped;
        self.max_excursion = self.max_excursion.max(other.max_excursion);
    }

    #[inline]
    fn unit(&mut self, x: f64) -> Result<f64> {
        if (-1.0..=1.0).contains(&x) {
            return Ok(x);
        }
        let excursion = x.abs() - 1.0;
        if excursion <= CLAMP_TOLERANCE {
            self.clamped += 1;
            self.max_excursion = self.max_excursion.max(excursion);
            Ok(x.clamp(-1.0, 1.0))
        } else {
            Err(Error::Domain(format!(
                "arcsine argument {x} outside [-1, 1]"
            )))
        }
    }

    #[inline]
    fn asin(&mut self, x: f64) -> Result<f64> {
        Ok(self.unit(x)?.asin())
    }
}

/// Probability that a centered bivariate Gaussian with correlation `rho`
/// falls in the negative quadrant.
pub fn orthant_prob(rho: f64) -> Result<f64> {
    let rho = ClampStats::default().unit(rho)?;
    Ok((FRAC_PI_2 + rho.asin()) / (2.0 * PI))
}

/// `|asin x - asin y| - (pi / sqrt 2) sqrt|x - y|`, which is never positive.
pub fn arcsin_holder_gap(x: f64, y: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&x) || !(-1.0..=1.0).contains(&y) {
        return Err(Error::Domain(format!("({x}, {y}) outside [-1, 1]^2")));
    }
    Ok((x.asin() - y.asin()).abs() - PI / SQRT_2 * (x - y).abs().sqrt())
}

/// Rows `q_k - q_i` of the basis differences, `H_{kk,i}` and `2 - H_{kk,i}`.
struct Anchor {
    p: usize,
    diffs: Vec<f64>,
    squares: Vec<f64>,
    gaps: Vec<f64>,
}

impl Anchor {
    fn new(h: &HatMatrix, i: usize) -> Result<Self> {
        let p = h.p();
        let diffs = h.differences_from(i);
        let squares: Vec<f64> = diffs.chunks_exact(p).map(|u| dot(u, u)).collect();
        let gaps = squares
            .iter()
            .enumerate()
            .map(|(k, &sq)| {
                let g = 2.0 - sq;
                if k != i && g <= DENOMINATOR_FLOOR {
                    Err(Error::DegenerateDenominator {
                        k: k + 1,
                        i: i + 1,
                        value: g,
                    })
                } else {
                    Ok(g)
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Self {
            p,
            diffs,
            squares,
            gaps,
        })
    }

    #[inline]
    fn row(&self, k: usize) -> &[f64] {
        &self.diffs[k * self.p..(k + 1) * self.p]
    }
}

fn cov_unchecked(h: &HatMatrix, i: usize, j: usize, stats: &mut ClampStats) -> Result<f64> {
    let n = h.n();
    let ai = Anchor::new(h, i)?;
    let aj = if i == j {
        None
    } else {
        Some(Anchor::new(h, j)?)
    };
    let aj = aj.as_ref().unwrap_or(&ai);
    let (gi, gj) = (&ai.gaps, &aj.gaps);
    let mut acc = NeumaierSum::new();
    // Summands with k = i or l = j vanish identically.
    for k in (0..n).filter(|&k| k != i) {
        let uk = ai.row(k);
        let left = (2.0 * gi[k]).sqrt();
        for l in (0..n).filter(|&l| l != j) {
            let d = delta_unchecked(k, l, i, j);
            let num = d as f64 - dot(uk, aj.row(l));
            let right = (2.0 * gj[l]).sqrt();
            let term = HALF_DELTA_ASIN[(d + 2) as usize]
                + stats.asin(num / (gi[k] * gj[l]).sqrt())?
                - stats.asin(num / left)?
                - stats.asin(num / right)?;
            acc += term;
        }
    }
    Ok(acc.value() / (2.0 * PI))
}

fn var_unchecked(h: &HatMatrix, i: usize, stats: &mut ClampStats) -> Result<f64> {
    let n = h.n();
    let anchor = Anchor::new(h, i)?;
    let g = &anchor.gaps;
    let mut acc = NeumaierSum::new();
    for k in (0..n).filter(|&k| k != i) {
        // H_kk,i / 2 lies in [0, 1]
        let t = stats.unit(0.5 * anchor.squares[k])?;
        acc += PI - 2.0 * t.sqrt().acos();
    }
    // Off-diagonal pairs enter twice: (1/pi) sum_{k<l} == (1/2pi) 2 sum_{k<l}.
    for k in (0..n).filter(|&k| k != i) {
        let uk = anchor.row(k);
        let left = (2.0 * g[k]).sqrt();
        for l in ((k + 1)..n).filter(|&l| l != i) {
            let num = 1.0 - dot(uk, anchor.row(l));
            let term = FRAC_PI_6 + stats.asin(num / (g[k] * g[l]).sqrt())?
                - stats.asin(num / left)?
                - stats.asin(num / (2.0 * g[l]).sqrt())?;
            acc += 2.0 * term;
        }
    }
    Ok(acc.value() / (2.0 * PI))
}

/// `E[(R^_i - R_i)(R^_j - R_j)]` from the general arcsine-sum formula.
pub fn exact_cov(h: &HatMatrix, i: usize, j: usize) -> Result<f64> {
    exact_cov_with_stats(h, i, j).map(|(v, _)| v)
}

/// [`exact_cov`] together with its clamp instrumentation.
pub fn exact_cov_with_stats(h: &HatMatrix, i: usize, j: usize) -> Result<(f64, ClampStats)> {
    let n = h.n();
    let (a, b) = (zero_based(i, n)?, zero_based(j, n)?);
    h.require_tie_free()?;
    let mut stats = ClampStats::default();
    let v = cov_unchecked(h, a, b, &mut stats)?;
    Ok((v, stats))
}

/// `E[(R^_i - R_i)^2]` from the specialized variance formula.
pub fn exact_var(h: &HatMatrix, i: usize) -> Result<f64> {
    exact_var_with_stats(h, i).map(|(v, _)| v)
}

pub fn exact_var_with_stats(h: &HatMatrix, i: usize) -> Result<(f64, ClampStats)> {
    let a = zero_based(i, h.n())?;
    h.require_tie_free()?;
    let mut stats = ClampStats::default();
    let v = var_unchecked(h, a, &mut stats)?;
    Ok((v, stats))
}

/// Full matrix of exact rank-distortion covariances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistortionMatrix {
    cov: DMatrix<f64>,
    rms: Vec<f64>,
    clamp: ClampStats,
}

impl DistortionMatrix {
    pub fn n(&self) -> usize {
        self.cov.nrows()
    }

    /// Covariance matrix in squared ranks, 0-based.
    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Rank distortions `sqrt(E (R^_i - R_i)^2)`.
    pub fn rms(&self) -> &[f64] {
        &self.rms
    }

    pub fn clamp_stats(&self) -> ClampStats {
        self.clamp
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.cov
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// Evaluates every upper-triangle entry (diagonal via [`exact_var`]) on the
/// global rayon pool.
pub fn exact_matrix(h: &HatMatrix) -> Result<DistortionMatrix> {
    exact_matrix_with_workers(h, rayon::current_num_threads())
}

/// Like [`exact_matrix`] with the pair list split into `workers` contiguous
/// blocks. Each entry is computed independently, so the output does not
/// depend on `workers`.
pub fn exact_matrix_with_workers(h: &HatMatrix, workers: usize) -> Result<DistortionMatrix> {
    h.require_tie_free()?;
    let n = h.n();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let workers = workers.max(1);
    let block = pairs.len().div_ceil(workers).max(1);

    let eval = |&(i, j): &(usize, usize), stats: &mut ClampStats| {
        if i == j {
            var_unchecked(h, i, stats)
        } else {
            cov_unchecked(h, i, j, stats)
        }
    };
    let run = || {
        pairs
            .par_chunks(block)
            .map(|chunk| {
                let mut stats = ClampStats::default();
                let values = chunk
                    .iter()
                    .map(|p| eval(p, &mut stats))
                    .collect::<Result<Vec<f64>>>()?;
                Ok((values, stats))
            })
            .collect::<Result<Vec<_>>>()
    };
    let blocks = if workers == rayon::current_num_threads() {
        run()?
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| Error::InvalidConfig(e.to_string()))?
            .install(run)?
    };

    let mut cov = DMatrix::zeros(n, n);
    let mut clamp = ClampStats::default();
    let mut values = Vec::with_capacity(pairs.len());
    for (vals, stats) in blocks {
        values.extend(vals);
        clamp.merge(stats);
    }
    for (&(i, j), v) in pairs.iter().zip(values) {
        cov[(i, j)] = v;
        cov[(j, i)] = v;
    }
    let rms = cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect();
    Ok(DistortionMatrix { cov, rms, clamp })
}
