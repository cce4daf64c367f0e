//! Independent reference implementations used by the integration tests.
//!
//! None of these share code with the library paths they check.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use totseg::numerics::Matrix;

/// Maximizes `⟨Q, S⟩ − ρ·Σ Q·log(Q/T)` over nonnegative `B × K` matrices with
/// rows summing to `1/B` and columns to `1/K`, by damped Newton steps on the
/// affine parametrization `Q = Q₀ + Σ y_ij·E_ij`.
///
/// `E_ij = e_i e_jᵀ − e_i e_Kᵀ − e_B e_jᵀ + e_B e_Kᵀ` for `i < B−1, j < K−1`
/// spans the directions that keep every marginal fixed. Passing `T = 1`
/// gives the entropic problem with `ε = ρ`. Returns `(Q, objective)`.
pub fn polytope_optimum(scores: &Matrix, prior: &Matrix, rho: f64) -> (Matrix, f64) {
    let (b, k) = scores.shape();
    let q0 = vec![1.0 / (b * k) as f64; b * k];
    if b == 1 || k == 1 {
        let q = Matrix::from_vec(b, k, q0);
        let obj = objective(&q, scores, prior, rho);
        return (q, obj);
    }
    let n = (b - 1) * (k - 1);
    // basis columns, each a B·K vector
    let mut basis = DMatrix::<f64>::zeros(b * k, n);
    for i in 0..b - 1 {
        for j in 0..k - 1 {
            let c = i * (k - 1) + j;
            basis[(i * k + j, c)] += 1.0;
            basis[(i * k + k - 1, c)] -= 1.0;
            basis[((b - 1) * k + j, c)] -= 1.0;
            basis[((b - 1) * k + k - 1, c)] += 1.0;
        }
    }
    let s = DVector::from_row_slice(scores.as_slice());
    let t = DVector::from_row_slice(prior.as_slice());
    let f = |q: &DVector<f64>| -> f64 { (0..q.len()).map(|x| q[x] * s[x] - rho * q[x] * (q[x] / t[x]).ln()).sum() };
    let mut q = DVector::from_vec(q0);
    for _ in 0..500 {
        let grad_q = DVector::from_fn(b * k, |x, _| s[x] - rho * ((q[x] / t[x]).ln() + 1.0));
        let g = basis.transpose() * &grad_q;
        // negative Hessian: Nᵀ diag(ρ/q) N
        let weighted = DMatrix::from_fn(b * k, n, |r, c| basis[(r, c)] * rho / q[r]);
        let h = basis.transpose() * weighted;
        let step = h.cholesky().expect("Hessian is positive definite").solve(&g);
        let decrement = g.dot(&step);
        if decrement < 1e-28 {
            break;
        }
        let dq = &basis * &step;
        let mut alpha = 1.0;
        // stay strictly inside the positive orthant
        for x in 0..b * k {
            if dq[x] < 0.0 {
                alpha = f64::min(alpha, 0.99 * q[x] / -dq[x]);
            }
        }
        let current = f(&q);
        loop {
            let trial = &q + &dq * alpha;
            if f(&trial) >= current + 0.25 * alpha * decrement || alpha < 1e-16 {
                q = trial;
                break;
            }
            alpha *= 0.5;
        }
    }
    let qm = Matrix::from_vec(b, k, q.iter().copied().collect());
    let obj = objective(&qm, scores, prior, rho);
    (qm, obj)
}

fn objective(q: &Matrix, scores: &Matrix, prior: &Matrix, rho: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..q.rows() {
        for j in 0..q.cols() {
            let v = q[(i, j)];
            total += v * scores[(i, j)];
            if v > 0.0 {
                total -= rho * v * (v / prior[(i, j)]).ln();
            }
        }
    }
    total
}

/// The temporal prior written out term by term with 1-based indices.
pub fn direct_prior(b: usize, k: usize, sigma: f64) -> Vec<Vec<f64>> {
    let bf = b as f64;
    let kf = k as f64;
    let norm = (1.0 / (bf * bf) + 1.0 / (kf * kf)).sqrt();
    (1..=b)
        .map(|i| {
            (1..=k)
                .map(|j| {
                    let d = (i as f64 / bf - j as f64 / kf).abs() / norm;
                    1.0 / (sigma * (2.0 * std::f64::consts::PI).sqrt()) * (-(d * d) / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        })
        .collect()
}

/// Best monotone path by trying every placement of the `K−1` boundaries.
/// Returns `(labels, score)`.
pub fn brute_force_viterbi(log_probs: &Matrix) -> (Vec<usize>, f64) {
    let (f, k) = log_probs.shape();
    let mut best = (Vec::new(), f64::NEG_INFINITY);
    let mut bounds = Vec::with_capacity(k);
    enumerate_bounds(1, f, k - 1, &mut bounds, &mut |bounds| {
        let mut labels = vec![0; f];
        for (t, l) in labels.iter_mut().enumerate() {
            *l = bounds.iter().filter(|&&b| b <= t).count();
        }
        let score: f64 = labels.iter().enumerate().map(|(t, &l)| log_probs[(t, l)]).sum();
        if score > best.1 {
            best = (labels, score);
        }
    });
    best
}

/// Calls `visit` with each strictly increasing list of `left` cut positions in `from..frames`.
fn enumerate_bounds(from: usize, frames: usize, left: usize, acc: &mut Vec<usize>, visit: &mut impl FnMut(&[usize])) {
    if left == 0 {
        visit(acc);
        return;
    }
    for cut in from..frames {
        if frames - cut < left {
            break;
        }
        acc.push(cut);
        enumerate_bounds(cut + 1, frames, left - 1, acc, visit);
        acc.pop();
    }
}

/// Largest total of `table[r][assign[r]]` over injective row → column maps
/// (or column → row maps when there are more rows than columns).
pub fn brute_force_assignment(table: &[Vec<f64>]) -> f64 {
    let rows = table.len();
    let cols = table.first().map_or(0, Vec::len);
    if rows > cols {
        let t: Vec<Vec<f64>> = (0..cols).map(|c| (0..rows).map(|r| table[r][c]).collect()).collect();
        return brute_force_assignment(&t);
    }
    fn go(table: &[Vec<f64>], r: usize, used: &mut Vec<bool>) -> f64 {
        if r == table.len() {
            return 0.0;
        }
        let mut best = f64::NEG_INFINITY;
        for c in 0..used.len() {
            if !used[c] {
                used[c] = true;
                best = best.max(table[r][c] + go(table, r + 1, used));
                used[c] = false;
            }
        }
        best
    }
    go(table, 0, &mut vec![false; cols])
}

/// Segmental F1 computed frame by frame: each ground-truth run is a hit when
/// an unused predicted run of the same label covers more than half its frames.
pub fn frame_count_f1(pred: &[usize], gt: &[usize]) -> f64 {
    let runs = |labels: &[usize]| -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0;
        for t in 1..=labels.len() {
            if t == labels.len() || labels[t] != labels[start] {
                out.push((labels[start], start, t));
                start = t;
            }
        }
        out
    };
    let p = runs(pred);
    let g = runs(gt);
    let mut used = vec![false; p.len()];
    let mut hits = 0;
    for &(label, gs, ge) in &g {
        let mut best: Option<(usize, usize)> = None;
        for (idx, &(pl, ps, pe)) in p.iter().enumerate() {
            if used[idx] || pl != label {
                continue;
            }
            let overlap = (gs..ge).filter(|t| (ps..pe).contains(t)).count();
            if 2 * overlap > ge - gs && best.is_none_or(|(_, o)| overlap > o) {
                best = Some((idx, overlap));
            }
        }
        if let Some((idx, _)) = best {
            used[idx] = true;
            hits += 1;
        }
    }
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / p.len() as f64;
    let recall = hits as f64 / g.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Index of the nearest row of `means` for every row of `x`.
pub fn nearest_mean(x: &Matrix, means: &Matrix) -> Vec<usize> {
    (0..x.rows())
        .map(|r| {
            (0..means.rows())
                .map(|m| {
                    let d: f64 = x.row(r).iter().zip(means.row(m)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (m, d)
                })
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
        })
        .collect()
}

/// Relative error with a floor on the denominator.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}
