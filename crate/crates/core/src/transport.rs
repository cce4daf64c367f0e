//! Pseudo-label codes from entropic and temporal optimal transport.
//!
//! Both solvers scale a strictly positive kernel onto the equal-partition
//! polytope (rows sum to `1/B`, columns to `1/K`) with Sinkhorn-Knopp
//! iterations carried out on log-scalings, so kernels like `exp(S/0.01)`
//! never have to be formed explicitly.
//!
//! * entropic OT: `max ⟨Q, S⟩ + ε·H(Q)`, kernel `exp(S/ε)`
//! * temporal OT: `max ⟨Q, S⟩ − ρ·KL(Q‖T)`, kernel `T ⊙ exp(S/ρ)`

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numerics::{log_sum_exp, Matrix};
use crate::sampler::VideoBlock;

/// Which transport problem produces the pseudo-labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kernel {
    /// Entropic OT with weight `epsilon`.
    Entropic,
    /// Temporal OT with KL weight `rho` toward the Gaussian prior.
    Temporal,
}

/// How the temporal prior is laid over a multi-video batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PriorScope {
    /// One prior and one solve per video block.
    #[default]
    PerVideo,
    /// A single prior and solve over the concatenated batch.
    Batch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransportConfig {
    pub epsilon: f64,
    pub rho: f64,
    pub sigma: f64,
    pub iterations: usize,
    /// Stop early once both marginal errors fall below this; `0` runs the full budget.
    pub marginal_tolerance: f64,
    pub scope: PriorScope,
}

impl Default for TransportConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.05,
            rho: 0.07,
            sigma: 2.5,
            iterations: 3,
            marginal_tolerance: 0.0,
            scope: PriorScope::PerVideo,
        }
    }
}

impl TransportConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("epsilon", self.epsilon), ("rho", self.rho), ("sigma", self.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.iterations == 0 {
            return Err(Error::InvalidConfig("sinkhorn iterations must be at least 1".into()));
        }
        if !(self.marginal_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("marginal tolerance must be non-negative".into()));
        }
        Ok(())
    }
}

/// A solved coupling and its convergence diagnostics.
#[derive(Debug, Clone)]
pub struct CodeMatrix {
    pub values: Matrix,
    pub row_error: f64,
    pub col_error: f64,
    pub iterations: usize,
}

/// Max-abs deviation of the row sums from `1/B` and column sums from `1/K`.
pub fn marginal_error(q: &Matrix) -> (f64, f64) {
    let (b, k) = q.shape();
    let row_target = 1.0 / b as f64;
    let col_target = 1.0 / k as f64;
    let row = q.row_sums().iter().map(|s| (s - row_target).abs()).fold(0.0, f64::max);
    let col = q.col_sums().iter().map(|s| (s - col_target).abs()).fold(0.0, f64::max);
    (row, col)
}

/// `d_ij` of the temporal prior with 1-based `i`, `j`.
fn diagonal_distance(i: usize, j: usize, b: usize, k: usize) -> f64 {
    let (bf, kf) = (b as f64, k as f64);
    let num = ((i + 1) as f64 / bf - (j + 1) as f64 / kf).abs();
    num / (1.0 / (bf * bf) + 1.0 / (kf * kf)).sqrt()
}

/// Logarithm of the temporal prior, computed directly so that far
/// off-diagonal entries do not underflow.
pub fn temporal_log_prior(b: usize, k: usize, sigma: f64) -> Matrix {
    assert!(b >= 1 && k >= 1, "prior needs at least one row and column");
    assert!(sigma > 0.0, "prior width must be positive, got {sigma}");
    let log_peak = -(sigma * (2.0 * PI).sqrt()).ln();
    Matrix::from_fn(b, k, |i, j| {
        let d = diagonal_distance(i, j, b, k);
        log_peak - d * d / (2.0 * sigma * sigma)
    })
}

/// Gaussian band around the `B × K` diagonal: entry `(i, j)` is the normal
/// density (width `σ`) of the distance from `(i/B, j/K)` to the diagonal.
pub fn temporal_prior(b: usize, k: usize, sigma: f64) -> Matrix {
    temporal_log_prior(b, k, sigma).map(f64::exp)
}

/// Scales `exp(log_kernel)` toward the equal-partition polytope.
///
/// Each iteration rescales rows then columns. Stops after `iterations`
/// sweeps, or earlier when both marginal errors drop below `tolerance`.
pub fn sinkhorn_log(log_kernel: &Matrix, iterations: usize, tolerance: f64) -> CodeMatrix {
    let (b, k) = log_kernel.shape();
    let log_row = -(b as f64).ln();
    let log_col = -(k as f64).ln();
    let mut log_u = vec![0.0; b];
    let mut log_v = vec![0.0; k];
    let mut scratch = vec![0.0; b.max(k)];
    let mut q = Matrix::zeros(b, k);
    let mut errors = (f64::INFINITY, f64::INFINITY);
    let mut done = 0;

    for _ in 0..iterations {
        for (i, lu) in log_u.iter_mut().enumerate() {
            for ((s, &kv), &lv) in scratch.iter_mut().zip(log_kernel.row(i)).zip(&log_v) {
                *s = kv + lv;
            }
            *lu = log_row - log_sum_exp(&scratch[..k]);
        }
        for j in 0..k {
            for i in 0..b {
                scratch[i] = log_kernel[(i, j)] + log_u[i];
            }
            log_v[j] = log_col - log_sum_exp(&scratch[..b]);
        }
        done += 1;
        assemble(log_kernel, &log_u, &log_v, &mut q);
        errors = marginal_error(&q);
        if tolerance > 0.0 && errors.0 < tolerance && errors.1 < tolerance {
            break;
        }
    }
    CodeMatrix { values: q, row_error: errors.0, col_error: errors.1, iterations: done }
}

fn assemble(log_kernel: &Matrix, log_u: &[f64], log_v: &[f64], q: &mut Matrix) {
    let k = log_kernel.cols();
    for (i, &lu) in log_u.iter().enumerate() {
        let src = log_kernel.row(i);
        let dst = q.row_mut(i);
        for j in 0..k {
            dst[j] = (src[j] + lu + log_v[j]).exp();
        }
    }
}

fn check_kernel(log_kernel: &Matrix, what: &str) -> Result<()> {
    if log_kernel.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("transport kernel is not finite for {what}")))
    }
}

/// Entropic OT: `Q = diag(u)·exp(S/ε)·diag(v)`.
pub fn sinkhorn_ot(scores: &Matrix, epsilon: f64, iterations: usize, tolerance: f64) -> Result<CodeMatrix> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
    }
    let log_kernel = scores.map(|s| s / epsilon);
    check_kernel(&log_kernel, &format!("epsilon = {epsilon}"))?;
    Ok(sinkhorn_log(&log_kernel, iterations, tolerance))
}

/// Temporal OT with an explicit prior `T` (strictly positive).
pub fn sinkhorn_tot(
    scores: &Matrix,
    prior: &Matrix,
    rho: f64,
    iterations: usize,
    tolerance: f64,
) -> Result<CodeMatrix> {
    assert_eq!(scores.shape(), prior.shape(), "score and prior shapes differ");
    if prior.as_slice().iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Numerical("temporal prior has non-positive entries".into()));
    }
    sinkhorn_tot_log_prior(scores, &prior.map(f64::ln), rho, iterations, tolerance)
}

/// Temporal OT taking `log T`, kernel `log T + S/ρ`.
pub fn sinkhorn_tot_log_prior(
    scores: &Matrix,
    log_prior: &Matrix,
    rho: f64,
    iterations: usize,
    tolerance: f64,
) -> Result<CodeMatrix> {
    assert_eq!(scores.shape(), log_prior.shape(), "score and prior shapes differ");
    if !(rho > 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be positive, got {rho}")));
    }
    let mut log_kernel = scores.map(|s| s / rho);
    log_kernel.add_scaled(log_prior, 1.0);
    check_kernel(&log_kernel, &format!("rho = {rho}"))?;
    Ok(sinkhorn_log(&log_kernel, iterations, tolerance))
}

/// Objective of entropic OT: `⟨Q, S⟩ + ε·H(Q)`.
pub fn entropic_objective(q: &Matrix, scores: &Matrix, epsilon: f64) -> f64 {
    q.as_slice()
        .iter()
        .zip(scores.as_slice())
        .map(|(&q, &s)| q * s - if q > 0.0 { epsilon * q * q.ln() } else { 0.0 })
        .sum()
}

/// Objective of temporal OT: `⟨Q, S⟩ − ρ·KL(Q‖T)`.
pub fn temporal_objective(q: &Matrix, scores: &Matrix, prior: &Matrix, rho: f64) -> f64 {
    q.as_slice()
        .iter()
        .zip(scores.as_slice())
        .zip(prior.as_slice())
        .map(|((&q, &s), &t)| q * s - if q > 0.0 { rho * q * (q / t).ln() } else { 0.0 })
        .sum()
}

/// Solution for a whole batch, assembled from per-block solves.
#[derive(Debug, Clone)]
pub struct BatchCodes {
    pub codes: Matrix,
    /// Worst row error over all solves.
    pub row_error: f64,
    pub col_error: f64,
}

/// Solves the configured transport problem for every video block of a batch
/// (or once over the whole batch with [`PriorScope::Batch`]).
///
/// Each block's rows sum to `1/len(block)`; frames of different videos are
/// never coupled in per-video scope.
pub fn solve_batch(
    scores: &Matrix,
    blocks: &[VideoBlock],
    kernel: Kernel,
    config: &TransportConfig,
) -> Result<BatchCodes> {
    let solve = |s: &Matrix| -> Result<CodeMatrix> {
        match kernel {
            Kernel::Entropic => sinkhorn_ot(s, config.epsilon, config.iterations, config.marginal_tolerance),
            Kernel::Temporal => {
                let log_prior = temporal_log_prior(s.rows(), s.cols(), config.sigma);
                sinkhorn_tot_log_prior(s, &log_prior, config.rho, config.iterations, config.marginal_tolerance)
            }
        }
    };
    if config.scope == PriorScope::Batch || blocks.len() <= 1 {
        let c = solve(scores)?;
        return Ok(BatchCodes { codes: c.values, row_error: c.row_error, col_error: c.col_error });
    }
    let mut codes = Matrix::zeros(scores.rows(), scores.cols());
    let (mut row_error, mut col_error) = (0.0f64, 0.0f64);
    for block in blocks {
        let c = solve(&scores.slice_rows(block.start, block.len))?;
        codes.set_rows(block.start, &c.values);
        row_error = row_error.max(c.row_error);
        col_error = col_error.max(c.col_error);
    }
    Ok(BatchCodes { codes, row_error, col_error })
}
