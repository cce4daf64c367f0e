//! The differentiable path from frames to losses: encoder, optional row
//! normalization, prototype scores, cross-entropy and temporal coherence.
//!
//! Pseudo-labels enter [`BatchGraph::loss_and_grads`] as constants.

use crate::encoder::{backward, EncoderGrads, EncoderParams, ForwardCache};
use crate::losses::{cross_entropy, renormalize_rows, temporal_coherence_blocks, total_loss};
use crate::numerics::{l2_normalize_rows, row_log_softmax, row_softmax, Matrix, NormalizedRows};
use crate::sampler::VideoBlock;

/// Settings shared by training and inference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreSettings {
    pub temperature: f64,
    /// Compare unit-norm embeddings and prototypes (cosine scores).
    pub normalize: bool,
}

impl Default for ScoreSettings {
    fn default() -> Self {
        Self { temperature: 0.1, normalize: true }
    }
}

/// Encoder output for a set of frames, as used in scores.
#[derive(Debug, Clone)]
pub struct Embedding {
    /// Normalized rows when normalization is on, raw encoder output otherwise.
    pub z: Matrix,
    cache: ForwardCache,
    norm: Option<NormalizedRows>,
}

impl Embedding {
    pub fn forward(params: &EncoderParams, x: &Matrix, normalize: bool) -> Self {
        let (raw, cache) = params.forward(x);
        if normalize {
            let norm = l2_normalize_rows(&raw);
            Self { z: norm.matrix.clone(), cache, norm: Some(norm) }
        } else {
            Self { z: raw, cache, norm: None }
        }
    }

    pub fn backward(&self, params: &EncoderParams, d_z: &Matrix) -> EncoderGrads {
        let d_raw = match &self.norm {
            Some(n) => n.backward(d_z),
            None => d_z.clone(),
        };
        backward(params, &self.cache, &d_raw)
    }
}

/// Prototypes as used in scores.
#[derive(Debug, Clone)]
pub struct PrototypeView {
    pub c: Matrix,
    norm: Option<NormalizedRows>,
}

impl PrototypeView {
    pub fn new(params: &EncoderParams, normalize: bool) -> Self {
        if normalize {
            let norm = l2_normalize_rows(&params.prototypes);
            Self { c: norm.matrix.clone(), norm: Some(norm) }
        } else {
            Self { c: params.prototypes.clone(), norm: None }
        }
    }

    fn backward(&self, d_c: &Matrix) -> Matrix {
        match &self.norm {
            Some(n) => n.backward(d_c),
            None => d_c.clone(),
        }
    }
}

/// Loss values of one batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub cross_entropy: f64,
    pub temporal_coherence: f64,
    pub total: f64,
    /// A predicted probability hit the log floor.
    pub clamped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveSettings {
    pub score: ScoreSettings,
    /// Weight of the temporal coherence term; only used when `use_tcl`.
    pub alpha: f64,
    pub use_tcl: bool,
    pub renormalize_q: bool,
}

/// Forward state of one training batch.
#[derive(Debug, Clone)]
pub struct BatchGraph {
    pub anchors: Embedding,
    pub positives: Option<Embedding>,
    pub prototypes: PrototypeView,
    /// `S = Z·Cᵀ`, `B × K`.
    pub scores: Matrix,
}

impl BatchGraph {
    pub fn forward(params: &EncoderParams, anchors: &Matrix, positives: Option<&Matrix>, normalize: bool) -> Self {
        let anchors = Embedding::forward(params, anchors, normalize);
        let positives = positives.map(|x| Embedding::forward(params, x, normalize));
        let prototypes = PrototypeView::new(params, normalize);
        let scores = anchors.z.matmul_t(&prototypes.c);
        Self { anchors, positives, prototypes, scores }
    }

    /// Losses and gradients for every parameter with `codes` held fixed.
    pub fn loss_and_grads(
        &self,
        params: &EncoderParams,
        codes: &Matrix,
        blocks: &[VideoBlock],
        settings: &ObjectiveSettings,
    ) -> (LossBreakdown, EncoderGrads) {
        let tau = settings.score.temperature;
        let p = row_softmax(&self.scores, tau);
        let ce = if settings.renormalize_q {
            cross_entropy(&p, &renormalize_rows(codes), tau)
        } else {
            cross_entropy(&p, codes, tau)
        };

        let mut d_anchor_z = ce.d_scores.matmul(&self.prototypes.c);
        let d_c = ce.d_scores.t_matmul(&self.anchors.z);

        let mut tc_loss = 0.0;
        let mut positive_grads = None;
        if settings.use_tcl {
            let positives = self.positives.as_ref().expect("temporal coherence requires positive embeddings");
            let tc = temporal_coherence_blocks(&self.anchors.z, &positives.z, blocks);
            tc_loss = tc.loss;
            d_anchor_z.add_scaled(&tc.d_anchors, settings.alpha);
            positive_grads = Some(positives.backward(params, &tc.d_positives.scale(settings.alpha)));
        }

        let mut grads = self.anchors.backward(params, &d_anchor_z);
        if let Some(pg) = positive_grads {
            grads.accumulate(&pg);
        }
        grads.prototypes = self.prototypes.backward(&d_c);

        let breakdown = LossBreakdown {
            cross_entropy: ce.loss,
            temporal_coherence: tc_loss,
            total: total_loss(ce.loss, tc_loss, if settings.use_tcl { settings.alpha } else { 0.0 }),
            clamped: ce.clamped,
        };
        (breakdown, grads)
    }
}

/// Frame-to-cluster probabilities `P` for a block of frames.
pub fn probabilities(params: &EncoderParams, x: &Matrix, settings: ScoreSettings) -> Matrix {
    let z = Embedding::forward(params, x, settings.normalize).z;
    let c = PrototypeView::new(params, settings.normalize).c;
    row_softmax(&z.matmul_t(&c), settings.temperature)
}

/// Row-wise `log P`, computed without forming `P` first.
pub fn log_probabilities(params: &EncoderParams, x: &Matrix, settings: ScoreSettings) -> Matrix {
    let z = Embedding::forward(params, x, settings.normalize).z;
    let c = PrototypeView::new(params, settings.normalize).c;
    row_log_softmax(&z.matmul_t(&c), settings.temperature)
}
