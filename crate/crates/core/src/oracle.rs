//! Monte Carlo oracle for the rank-distortion moments.
//!
//! # Reproducibility
//!
//! Replication `r` draws its errors from `ChaCha8Rng::seed_from_u64(seed)`
//! switched to stream `r`. Standard normals come from the Box-Muller
//! transform applied to consecutive pairs of 53-bit uniforms
//! `u1 in (0, 1]`, `u2 in [0, 1)`: `sqrt(-2 ln u1) * (cos 2 pi u2, sin 2 pi u2)`.
//! Rank differences are integers, so their products are accumulated exactly
//! in integer arithmetic. The result is therefore identical for every worker
//! count and every partition of the replications.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::design::DesignMatrix;
use crate::error::{Error, Result};
use crate::projection::{compute_hat_matrix, HatMatrix};

/// Residuals closer than this are counted as a tie.
pub const TIE_EPSILON: f64 = 1e-12;

/// 1-based ranks, ascending, ties broken by index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankVector(Vec<usize>);

impl RankVector {
    pub fn n(&self) -> usize {
        self.0.len()
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }
}

pub fn rank_of(v: &[f64]) -> RankVector {
    let mut ranks = vec![0; v.len()];
    rank_into(v, &mut Vec::with_capacity(v.len()), &mut ranks);
    RankVector(ranks)
}

fn rank_into(v: &[f64], order: &mut Vec<usize>, ranks: &mut [usize]) {
    order.clear();
    order.extend(0..v.len());
    // stable: equal values keep index order
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    for (pos, &idx) in order.iter().enumerate() {
        ranks[idx] = pos + 1;
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub design: DesignMatrix,
    /// Regression coefficients; they cancel in the residuals.
    pub theta: Vec<f64>,
    pub sigma: f64,
    pub replications: u64,
    pub seed: u64,
}

impl SimulationConfig {
    /// `theta = 0`, `sigma = 1`.
    pub fn new(design: DesignMatrix, replications: u64, seed: u64) -> Self {
        let p = design.ncols();
        Self {
            design,
            theta: vec![0.0; p],
            sigma: 1.0,
            replications,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.replications == 0 {
            return Err(Error::InvalidConfig(
                "replications must be at least 1".into(),
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma must be positive, got {}",
                self.sigma
            )));
        }
        if self.theta.len() != self.design.ncols() {
            return Err(Error::InvalidConfig(format!(
                "theta has {} entries for {} columns",
                self.theta.len(),
                self.design.ncols()
            )));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidConfig("theta must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationResult {
    /// Empirical means of `(R^_i - R_i)(R^_j - R_j)`.
    pub mean_cov: DMatrix<f64>,
    /// Standard errors of `mean_cov`.
    pub se_cov: DMatrix<f64>,
    pub replications: u64,
    /// Replications in which some pair of residuals tied.
    pub tie_events: u64,
}

impl SimulationResult {
    pub fn n(&self) -> usize {
        self.mean_cov.nrows()
    }
}

/// Seeded standard-normal source for one replication.
struct Gaussian {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl Gaussian {
    fn for_replication(seed: u64, replication: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replication);
        Self { rng, spare: None }
    }

    fn next(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        const SCALE: f64 = 1.0 / (1u64 << 53) as f64;
        let u1 = ((self.rng.next_u64() >> 11) + 1) as f64 * SCALE;
        let u2 = (self.rng.next_u64() >> 11) as f64 * SCALE;
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * PI * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

/// Per-worker integer accumulators over the upper triangle.
struct Accumulator {
    n: usize,
    sum: Vec<i64>,
    sum_sq: Vec<i128>,
    ties: u64,
}

impl Accumulator {
    fn new(n: usize) -> Self {
        let m = n * (n + 1) / 2;
        Self {
            n,
            sum: vec![0; m],
            sum_sq: vec![0; m],
            ties: 0,
        }
    }

    fn add(&mut self, diff: &[i64]) {
        let mut idx = 0;
        for i in 0..self.n {
            for j in i..self.n {
                let prod = diff[i] * diff[j];
                self.sum[idx] += prod;
                self.sum_sq[idx] += (prod as i128) * (prod as i128);
                idx += 1;
            }
        }
    }

    fn merge(mut self, other: Accumulator) -> Self {
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sum_sq.iter_mut().zip(other.sum_sq) {
            *a += b;
        }
        self.ties += other.ties;
        self
    }
}

struct Workspace {
    eps: DVector<f64>,
    resid: DVector<f64>,
    order: Vec<usize>,
    err_rank: Vec<usize>,
    res_rank: Vec<usize>,
    diff: Vec<i64>,
    sorted: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Self {
            eps: DVector::zeros(n),
            resid: DVector::zeros(n),
            order: Vec::with_capacity(n),
            err_rank: vec![0; n],
            res_rank: vec![0; n],
            diff: vec![0; n],
            sorted: Vec::with_capacity(n),
        }
    }

    /// Draws errors and forms residuals `(I - H) eps`. Returns whether any
    /// two residuals tie.
    fn draw(&mut self, h: &HatMatrix, sigma: f64, seed: u64, replication: u64) -> bool {
        let mut gauss = Gaussian::for_replication(seed, replication);
        for e in self.eps.iter_mut() {
            *e = sigma * gauss.next();
        }
        self.resid.gemv(-1.0, h.entries(), &self.eps, 0.0);
        self.resid += &self.eps;

        self.sorted.clear();
        self.sorted.extend(self.resid.iter());
        self.sorted.sort_by(f64::total_cmp);
        self.sorted.windows(2).any(|w| w[1] - w[0] <= TIE_EPSILON)
    }

    fn rank_differences(&mut self) -> &[i64] {
        rank_into(self.eps.as_slice(), &mut self.order, &mut self.err_rank);
        rank_into(self.resid.as_slice(), &mut self.order, &mut self.res_rank);
        for ((d, &r_hat), &r) in self.diff.iter_mut().zip(&self.res_rank).zip(&self.err_rank) {
            *d = r_hat as i64 - r as i64;
        }
        &self.diff
    }
}

fn blocks(total: u64, workers: usize) -> Vec<(u64, u64)> {
    let w = (workers.max(1) as u64).min(total);
    let base = total / w;
    let extra = total % w;
    let mut start = 0;
    (0..w)
        .map(|b| {
            let len = base + u64::from(b < extra);
            let block = (start, start + len);
            start += len;
            block
        })
        .collect()
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if workers == rayon::current_num_threads() {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(pool.install(f))
}

/// Runs the simulation on the global rayon pool.
pub fn simulate(cfg: &SimulationConfig) -> Result<SimulationResult> {
    simulate_with_workers(cfg, rayon::current_num_threads())
}

/// Runs the simulation with the replications split into `workers` contiguous
/// blocks.
pub fn simulate_with_workers(cfg: &SimulationConfig, workers: usize) -> Result<SimulationResult> {
    cfg.validate()?;
    let h = compute_hat_matrix(&cfg.design)?;
    let n = h.n();
    let parts = blocks(cfg.replications, workers);

    let acc = in_pool(workers, || {
        parts
            .par_iter()
            .map(|&(start, end)| {
                let mut ws = Workspace::new(n);
                let mut acc = Accumulator::new(n);
                for r in start..end {
                    if ws.draw(&h, cfg.sigma, cfg.seed, r) {
                        acc.ties += 1;
                    }
                    acc.add(ws.rank_differences());
                }
                acc
            })
            .collect::<Vec<_>>()
            .into_iter()
            .fold(Accumulator::new(n), Accumulator::merge)
    })?;

    let reps = cfg.replications as f64;
    let mut mean_cov = DMatrix::zeros(n, n);
    let mut se_cov = DMatrix::zeros(n, n);
    let mut idx = 0;
    for i in 0..n {
        for j in i..n {
            let mean = acc.sum[idx] as f64 / reps;
            let se = if cfg.replications > 1 {
                // exact integer numerator: N * S2 - S1^2
                let s1 = acc.sum[idx] as i128;
                let centered = acc.sum_sq[idx] * cfg.replications as i128 - s1 * s1;
                let var = centered as f64 / (reps * (reps - 1.0));
                (var.max(0.0) / reps).sqrt()
            } else {
                0.0
            };
            mean_cov[(i, j)] = mean;
            mean_cov[(j, i)] = mean;
            se_cov[(i, j)] = se;
            se_cov[(j, i)] = se;
            idx += 1;
        }
    }
    Ok(SimulationResult {
        mean_cov,
        se_cov,
        replications: cfg.replications,
        tie_events: acc.ties,
    })
}

/// Counts replications (out of `draws`) containing a pair of residuals
/// within [`TIE_EPSILON`] of each other.
pub fn residual_tie_scan(cfg: &SimulationConfig, draws: u64) -> Result<u64> {
    let cfg = SimulationConfig {
        replications: draws,
        ..cfg.clone()
    };
    cfg.validate()?;
    let h = compute_hat_matrix(&cfg.design)?;
    let n = h.n();
    let parts = blocks(draws, rayon::current_num_threads());
    Ok(parts
        .par_iter()
        .map(|&(start, end)| {
            let mut ws = Workspace::new(n);
            (start..end)
                .filter(|&r| ws.draw(&h, cfg.sigma, cfg.seed, r))
                .count() as u64
        })
        .sum())
}
