//! Online training: each iteration samples a mini-batch, solves for
//! pseudo-labels on that batch alone and takes one ADAM step.
//!
//! Working memory depends only on the batch size and model widths, never on
//! the number of frames in the dataset.

use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::dataio::DatasetCatalog;
use crate::decode::{decode_probabilities, SegmentationResult};
use crate::encoder::{adam_step, AdamState, EncoderParams, EncoderShape};
use crate::error::{Error, Result};
use crate::losses::LossConfig;
use crate::model::{probabilities, BatchGraph, ObjectiveSettings, ScoreSettings};
use crate::numerics::Matrix;
use crate::sampler::build_batch;
use crate::transport::{solve_batch, Kernel, TransportConfig};

/// Training variant: transport kernel and whether the coherence loss is on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ot,
    OtTcl,
    Tot,
    TotTcl,
}

impl Mode {
    pub fn kernel(self) -> Kernel {
        match self {
            Mode::Ot | Mode::OtTcl => Kernel::Entropic,
            Mode::Tot | Mode::TotTcl => Kernel::Temporal,
        }
    }

    pub fn uses_tcl(self) -> bool {
        matches!(self, Mode::OtTcl | Mode::TotTcl)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ot => "ot",
            Mode::OtTcl => "ot+tcl",
            Mode::Tot => "tot",
            Mode::TotTcl => "tot+tcl",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ot" => Ok(Mode::Ot),
            "ot+tcl" => Ok(Mode::OtTcl),
            "tot" => Ok(Mode::Tot),
            "tot+tcl" => Ok(Mode::TotTcl),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?} (expected ot, ot+tcl, tot or tot+tcl)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub batch_size: usize,
    pub videos_per_batch: usize,
    /// Passes over the video list; one pass is `⌈videos / videos_per_batch⌉` iterations.
    pub epochs: usize,
    /// Overrides `epochs` when set.
    pub iterations: Option<usize>,
    /// Prototypes receive no updates for this many initial iterations.
    pub freeze_iters: usize,
    pub seed: u64,
    pub embed_dim: usize,
    /// Defaults to `2 · embed_dim`.
    pub hidden_dim: Option<usize>,
    pub lr: f64,
    pub weight_decay: f64,
    pub normalize: bool,
    pub loss: LossConfig,
    pub transport: TransportConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Tot,
            batch_size: 512,
            videos_per_batch: 2,
            epochs: 30,
            iterations: None,
            freeze_iters: 100,
            seed: 0,
            embed_dim: 30,
            hidden_dim: None,
            lr: 1e-3,
            weight_decay: 1e-4,
            normalize: true,
            loss: LossConfig::default(),
            transport: TransportConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.batch_size == 0 || self.videos_per_batch == 0 || !self.batch_size.is_multiple_of(self.videos_per_batch)
        {
            return bad(format!(
                "batch size {} must be a positive multiple of videos per batch {}",
                self.batch_size, self.videos_per_batch
            ));
        }
        if self.embed_dim == 0 || self.hidden_dim == Some(0) {
            return bad("embedding and hidden widths must be positive".into());
        }
        if !(self.loss.temperature > 0.0) {
            return bad(format!("temperature must be positive, got {}", self.loss.temperature));
        }
        if !(self.loss.alpha >= 0.0) {
            return bad(format!("alpha must be non-negative, got {}", self.loss.alpha));
        }
        if !(self.lr > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("learning rate must be positive and weight decay non-negative".into());
        }
        self.transport.validate()
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim.unwrap_or(2 * self.embed_dim)
    }

    pub fn total_iterations(&self, num_videos: usize) -> usize {
        self.iterations.unwrap_or_else(|| self.epochs * num_videos.div_ceil(self.videos_per_batch))
    }

    pub fn score_settings(&self) -> ScoreSettings {
        ScoreSettings { temperature: self.loss.temperature, normalize: self.normalize }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub cross_entropy: f64,
    pub temporal_coherence: f64,
    pub total: f64,
    pub row_error: f64,
    pub col_error: f64,
}

impl fmt::Display for IterationRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}, {:.9e}, {:.9e}, {:.9e}, {:.3e}, {:.3e}",
            self.iteration, self.cross_entropy, self.temporal_coherence, self.total, self.row_error, self.col_error
        )
    }
}

/// Shapes of every matrix the training loop held, for memory accounting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MemoryReport {
    /// Largest dimension (rows or columns) of any loop matrix.
    pub max_dimension: usize,
    /// Largest single loop matrix, in bytes.
    pub peak_matrix_bytes: usize,
    /// Bytes of the anchor embedding matrix `Z` (B × D × 8).
    pub embedding_bytes: usize,
    /// Largest sum of loop matrix bytes within one iteration.
    pub peak_iteration_bytes: usize,
}

#[derive(Default)]
struct MemoryProbe {
    report: MemoryReport,
    iteration_bytes: usize,
}

impl MemoryProbe {
    fn record(&mut self, m: &Matrix) {
        self.record_shape(m.rows(), m.cols());
    }

    fn record_shape(&mut self, rows: usize, cols: usize) {
        let bytes = rows * cols * std::mem::size_of::<f64>();
        let r = &mut self.report;
        r.max_dimension = r.max_dimension.max(rows).max(cols);
        r.peak_matrix_bytes = r.peak_matrix_bytes.max(bytes);
        self.iteration_bytes += bytes;
    }

    fn end_iteration(&mut self) {
        self.report.peak_iteration_bytes = self.report.peak_iteration_bytes.max(self.iteration_bytes);
        self.iteration_bytes = 0;
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub records: Vec<IterationRecord>,
    pub memory: MemoryReport,
}

impl TrainLog {
    pub const HEADER: &'static str = "iter, L_CE, L_TC, L, row_err, col_err";

    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{}", Self::HEADER)?;
        for r in &self.records {
            writeln!(w, "{r}")?;
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

/// Trained encoder with the settings needed for inference.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: EncoderParams,
    pub adam: AdamState,
    pub settings: ScoreSettings,
}

impl TrainedModel {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { params: self.params.clone(), adam: self.adam.clone(), settings: self.settings }
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Self {
        Self { params: ck.params, adam: ck.adam, settings: ck.settings }
    }

    pub fn num_clusters(&self) -> usize {
        self.params.prototypes.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.params.w1.rows()
    }

    /// Cluster probabilities for a block of frames.
    pub fn probabilities(&self, features: &Matrix) -> Matrix {
        probabilities(&self.params, features, self.settings)
    }
}

/// Trains one model with `catalog.num_actions` prototypes.
pub fn train(catalog: &DatasetCatalog, config: &TrainConfig) -> Result<(TrainedModel, TrainLog)> {
    train_with(catalog, config, |_| {})
}

/// Like [`train`], calling `observe` after every iteration.
pub fn train_with(
    catalog: &DatasetCatalog,
    config: &TrainConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<(TrainedModel, TrainLog)> {
    config.validate()?;
    if catalog.num_actions == 0 {
        return Err(Error::InvalidData(format!("activity {} has no actions", catalog.activity)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shape = EncoderShape {
        input_dim: catalog.dim,
        hidden_dim: config.hidden_dim(),
        embed_dim: config.embed_dim,
        num_prototypes: catalog.num_actions,
    };
    let mut params = EncoderParams::init(shape, &mut rng);
    let mut adam = AdamState::new(&params, config.lr, config.weight_decay);
    let objective = ObjectiveSettings {
        score: config.score_settings(),
        alpha: config.loss.alpha,
        use_tcl: config.mode.uses_tcl(),
        renormalize_q: config.loss.renormalize_q,
    };

    let total_iters = config.total_iterations(catalog.len());
    let mut log = TrainLog { records: Vec::with_capacity(total_iters), memory: MemoryReport::default() };
    let mut probe = MemoryProbe::default();

    for iteration in 0..total_iters {
        let batch = build_batch(catalog, config.videos_per_batch, config.batch_size, config.loss.window, &mut rng)?;
        probe.record(&batch.frame_features);
        if objective.use_tcl {
            probe.record(&batch.positive_features);
        }

        let graph = BatchGraph::forward(
            &params,
            &batch.frame_features,
            objective.use_tcl.then_some(&batch.positive_features),
            config.normalize,
        );
        probe.record(&graph.anchors.z);
        if let Some(p) = &graph.positives {
            probe.record(&p.z);
        }
        probe.record(&graph.scores);
        log.memory.embedding_bytes = log.memory.embedding_bytes.max(graph.anchors.z.footprint_bytes());

        // pseudo-labels are constants for the gradient step
        let codes = solve_batch(&graph.scores, &batch.video_blocks, config.mode.kernel(), &config.transport)?;
        probe.record(&codes.codes);

        let (loss, grads) = graph.loss_and_grads(&params, &codes.codes, &batch.video_blocks, &objective);
        if !loss.total.is_finite() {
            return Err(Error::Divergence { iteration });
        }
        // hidden activations and P are held alongside the gradients
        let encoded = if objective.use_tcl { 2 } else { 1 };
        for _ in 0..encoded {
            probe.record_shape(batch.len(), shape.hidden_dim);
        }
        probe.record(&graph.scores);
        probe.end_iteration();

        adam.freeze_prototypes(iteration < config.freeze_iters);
        adam_step(&mut params, &grads, &mut adam);
        if !params.is_finite() {
            return Err(Error::Divergence { iteration });
        }

        let record = IterationRecord {
            iteration,
            cross_entropy: loss.cross_entropy,
            temporal_coherence: loss.temporal_coherence,
            total: loss.total,
            row_error: codes.row_error,
            col_error: codes.col_error,
        };
        observe(&record);
        log.records.push(record);
    }
    adam.freeze_prototypes(false);
    log.memory = MemoryReport { embedding_bytes: log.memory.embedding_bytes, ..probe.report };
    Ok((TrainedModel { params, adam, settings: config.score_settings() }, log))
}

/// Cluster probabilities for one video, computed `chunk_rows` frames at a time.
pub fn embed_video(model: &TrainedModel, catalog: &DatasetCatalog, index: usize, chunk_rows: usize) -> Result<Matrix> {
    let n = catalog.videos[index].num_frames;
    let chunk = chunk_rows.max(1);
    let mut out = Matrix::zeros(n, model.num_clusters());
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let rows: Vec<usize> = (start..end).collect();
        let x = catalog.gather_rows(index, &rows)?;
        out.set_rows(start, &model.probabilities(&x));
        start = end;
    }
    Ok(out)
}

/// Viterbi segmentation of one video under the model's cluster order.
pub fn segment_video(model: &TrainedModel, catalog: &DatasetCatalog, index: usize) -> Result<SegmentationResult> {
    decode_probabilities(&embed_video(model, catalog, index, 4096)?)
}

/// Streams per-video probability matrices, loading one video at a time.
pub fn embed_dataset<'a>(
    model: &'a TrainedModel,
    catalog: &'a DatasetCatalog,
) -> impl Iterator<Item = Result<(String, Matrix)>> + 'a {
    (0..catalog.len()).map(move |i| {
        let p = embed_video(model, catalog, i, 4096)?;
        Ok((catalog.videos[i].video_id.clone(), p))
    })
}
