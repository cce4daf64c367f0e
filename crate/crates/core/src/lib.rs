//! Unsupervised temporal action segmentation.
//!
//! Frames are embedded by a small MLP and assigned to learnable prototypes.
//! Pseudo-labels come from optimal transport with a temporal prior that
//! favors the fixed cluster order, and videos are decoded with Viterbi under
//! the same order. Evaluation matches clusters to actions per activity.

// `!(x > 0.0)` is used on purpose so that NaN fails validation
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod dataio;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod numerics;
pub mod sampler;
pub mod trainer;
pub mod transport;

pub use checkpoint::Checkpoint;
pub use config::RunConfig;
pub use dataio::{generate_synthetic, CatalogOptions, DatasetCatalog, FeatureSequence, LabelMapping, SyntheticSpec};
pub use decode::{decode_probabilities, viterbi_fixed_order, Segment, SegmentationResult};
pub use encoder::{AdamState, EncoderParams, EncoderShape};
pub use error::{Error, Result};
pub use eval::{evaluate_activity, hungarian_match, DatasetReport, EvalOptions, EvalReport, OverlapCriterion};
pub use numerics::Matrix;
pub use trainer::{train, Mode, TrainConfig, TrainLog, TrainedModel};
pub use transport::{sinkhorn_ot, sinkhorn_tot, temporal_prior, Kernel, PriorScope, TransportConfig};
