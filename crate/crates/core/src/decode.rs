//! Viterbi decoding under a fixed cluster order.

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Probabilities are clamped to this before taking logs.
pub const PROB_FLOOR: f64 = 1e-12;

/// Half-open run `[start, end)` of one label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub label: usize,
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub labels: Vec<usize>,
    pub log_score: f64,
    pub segments: Vec<Segment>,
}

/// Maximal runs of equal labels.
pub fn segments_from_labels(labels: &[usize]) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for (t, &l) in labels.iter().enumerate() {
        match out.last_mut() {
            Some(seg) if seg.label == l => seg.end = t + 1,
            _ => out.push(Segment { label: l, start: t, end: t + 1 }),
        }
    }
    out
}

/// Expands segments back to per-frame labels.
pub fn labels_from_segments(segments: &[Segment]) -> Vec<usize> {
    segments.iter().flat_map(|s| std::iter::repeat_n(s.label, s.len())).collect()
}

/// `log(max(p, PROB_FLOOR))` elementwise.
pub fn floored_log(probs: &Matrix) -> Matrix {
    probs.map(|p| p.max(PROB_FLOOR).ln())
}

/// Best label path that visits clusters `0, 1, …, K−1` in order, each for at
/// least one frame.
///
/// Maximizes `Σ_t log_probs[t, label_t]` over paths that start in cluster 0,
/// end in cluster `K−1` and step by 0 or +1. On ties the backtrace prefers
/// entering from the previous cluster, which puts boundaries as late as
/// possible.
pub fn viterbi_fixed_order(log_probs: &Matrix) -> Result<SegmentationResult> {
    let (frames, k) = log_probs.shape();
    if k == 0 || frames < k {
        return Err(Error::InfeasibleDecode { frames, clusters: k });
    }
    if !log_probs.is_finite() {
        return Err(Error::Numerical("viterbi input contains non-finite log-probabilities".into()));
    }

    // advanced[t * k + j]: frame t entered cluster j from j − 1
    let mut advanced = vec![false; frames * k];
    let mut prev = vec![f64::NEG_INFINITY; k];
    let mut cur = vec![f64::NEG_INFINITY; k];
    prev[0] = log_probs[(0, 0)];
    for t in 1..frames {
        let row = log_probs.row(t);
        // cluster j is reachable at frame t only if j ≤ t, and can still finish only if k − j ≤ frames − t
        let lo = (k + t).saturating_sub(frames);
        let hi = t.min(k - 1);
        cur.iter_mut().for_each(|v| *v = f64::NEG_INFINITY);
        for j in lo..=hi {
            let stay = prev[j];
            let advance = if j > 0 { prev[j - 1] } else { f64::NEG_INFINITY };
            let (best, adv) = if stay > advance { (stay, false) } else { (advance, true) };
            cur[j] = best + row[j];
            advanced[t * k + j] = adv;
        }
        std::mem::swap(&mut prev, &mut cur);
    }

    let log_score = prev[k - 1];
    let mut labels = vec![0; frames];
    let mut j = k - 1;
    for t in (0..frames).rev() {
        labels[t] = j;
        if t > 0 && advanced[t * k + j] {
            j -= 1;
        }
    }
    debug_assert_eq!(j, 0);
    let segments = segments_from_labels(&labels);
    Ok(SegmentationResult { labels, log_score, segments })
}

/// Decodes a matrix of per-frame cluster probabilities.
pub fn decode_probabilities(probs: &Matrix) -> Result<SegmentationResult> {
    viterbi_fixed_order(&floored_log(probs))
}

/// Score of a label path under `log_probs`.
pub fn path_score(log_probs: &Matrix, labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(t, &l)| log_probs[(t, l)]).sum()
}
