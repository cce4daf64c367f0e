//! Predicted codes, the clustering cross-entropy and the N-pair temporal
//! coherence loss, each returning analytic gradients.

use crate::numerics::{log_sum_exp, row_softmax, Matrix};
use crate::sampler::VideoBlock;

/// Entries of `P` below this are clamped before taking the log.
pub const LOG_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub temperature: f64,
    /// Weight of the temporal coherence term.
    pub alpha: f64,
    /// Half-width of the positive sampling window, in frames.
    pub window: usize,
    /// Row-normalize the pseudo-labels to sum to one before the cross-entropy.
    pub renormalize_q: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { temperature: 0.1, alpha: 1.0, window: 30, renormalize_q: false }
    }
}

/// Softmax over prototype similarities: `P = softmax(Z·Cᵀ / τ)` row-wise.
pub fn predicted_codes(embeddings: &Matrix, prototypes: &Matrix, temperature: f64) -> Matrix {
    row_softmax(&embeddings.matmul_t(prototypes), temperature)
}

#[derive(Debug, Clone)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Gradient w.r.t. the raw scores `S = Z·Cᵀ` (before dividing by τ).
    pub d_scores: Matrix,
    /// Set when some `P_ij` hit [`LOG_FLOOR`] where `Q_ij > 0`.
    pub clamped: bool,
}

/// `L = −(1/B) Σ_ij Q_ij log P_ij` with its gradient w.r.t. the scores.
///
/// `Q` is used as given; its rows need not sum to one. The score gradient of
/// row `i` is `(q_i·p_i − Q_i) / (B·τ)` where `q_i = Σ_j Q_ij`.
pub fn cross_entropy(p: &Matrix, q: &Matrix, temperature: f64) -> CrossEntropy {
    assert_eq!(p.shape(), q.shape(), "P and Q shapes differ");
    let b = p.rows() as f64;
    let mut loss = 0.0;
    let mut clamped = false;
    let mut d_scores = Matrix::zeros(p.rows(), p.cols());
    for i in 0..p.rows() {
        let (pr, qr) = (p.row(i), q.row(i));
        let q_sum: f64 = qr.iter().sum();
        for j in 0..p.cols() {
            if qr[j] != 0.0 {
                if pr[j] < LOG_FLOOR {
                    clamped = true;
                }
                loss -= qr[j] * pr[j].max(LOG_FLOOR).ln();
            }
        }
        let dst = d_scores.row_mut(i);
        for j in 0..p.cols() {
            dst[j] = (q_sum * pr[j] - qr[j]) / (b * temperature);
        }
    }
    CrossEntropy { loss: loss / b, d_scores, clamped }
}

/// Rows of `q` scaled to sum to one (all-zero rows left as is).
pub fn renormalize_rows(q: &Matrix) -> Matrix {
    let mut out = q.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct TemporalCoherence {
    pub loss: f64,
    pub d_anchors: Matrix,
    pub d_positives: Matrix,
}

/// N-pair loss over paired rows: each anchor should score its own positive
/// above every other anchor's positive.
///
/// `L = −(1/N) Σ_i log( exp(a_i·p_i) / Σ_j exp(a_i·p_j) )`.
pub fn temporal_coherence(anchors: &Matrix, positives: &Matrix) -> TemporalCoherence {
    let n = anchors.rows();
    let block = VideoBlock { video_id: String::new(), video_index: 0, start: 0, len: n, video_len: n };
    temporal_coherence_blocks(anchors, positives, std::slice::from_ref(&block))
}

/// Temporal coherence with negatives restricted to each video block; the
/// per-anchor terms are summed over blocks and divided by the total count.
pub fn temporal_coherence_blocks(anchors: &Matrix, positives: &Matrix, blocks: &[VideoBlock]) -> TemporalCoherence {
    assert_eq!(anchors.shape(), positives.shape(), "anchor and positive shapes differ");
    let total: usize = blocks.iter().map(|b| b.len).sum();
    let mut d_anchors = Matrix::zeros(anchors.rows(), anchors.cols());
    let mut d_positives = Matrix::zeros(positives.rows(), positives.cols());
    if total == 0 {
        return TemporalCoherence { loss: 0.0, d_anchors, d_positives };
    }
    let scale = 1.0 / total as f64;
    let mut loss = 0.0;
    for block in blocks {
        let a = anchors.slice_rows(block.start, block.len);
        let p = positives.slice_rows(block.start, block.len);
        let mut logits = a.matmul_t(&p);
        for i in 0..block.len {
            let row = logits.row_mut(i);
            let lse = log_sum_exp(row);
            loss -= row[i] - lse;
            // row becomes (softmax − onehot) · scale
            for (j, v) in row.iter_mut().enumerate() {
                *v = ((*v - lse).exp() - if i == j { 1.0 } else { 0.0 }) * scale;
            }
        }
        d_anchors.set_rows(block.start, &logits.matmul(&p));
        d_positives.set_rows(block.start, &logits.t_matmul(&a));
    }
    TemporalCoherence { loss: loss * scale, d_anchors, d_positives }
}

/// `L = L_CE + α·L_TC`.
pub fn total_loss(cross_entropy: f64, temporal_coherence: f64, alpha: f64) -> f64 {
    cross_entropy + alpha * temporal_coherence
}
