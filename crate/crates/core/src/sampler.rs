//! Temporally ordered mini-batches with positive partners.

use rand::seq::index;
use rand::Rng;

use crate::dataio::DatasetCatalog;
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Contiguous rows of a batch that come from one video.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VideoBlock {
    pub video_id: String,
    /// Index of the video in its catalog.
    pub video_index: usize,
    pub start: usize,
    pub len: usize,
    /// Frame count of the source video.
    pub video_len: usize,
}

impl VideoBlock {
    pub fn rows(&self) -> std::ops::Range<usize> {
        self.start..self.start + self.len
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// Anchor frames, `B × D_in`, ordered in time within each block.
    pub frame_features: Matrix,
    /// One positive partner per anchor, same video, within the window.
    pub positive_features: Matrix,
    pub video_blocks: Vec<VideoBlock>,
    pub frame_positions: Vec<usize>,
    pub positive_positions: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.frame_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frame_positions.is_empty()
    }
}

/// Draws one frame uniformly from each of `n` equal-length bins over `0..video_len`.
///
/// Bin `i` (0-based) covers `⌊i·F/n⌋ ..= ⌊(i+1)·F/n⌋ − 1`, so the result is
/// strictly increasing and spans the whole video.
pub fn sample_ordered(video_len: usize, n: usize, rng: &mut impl Rng) -> Result<Vec<usize>> {
    if n == 0 || video_len < n {
        return Err(Error::Sampling(format!("cannot draw {n} ordered frames from a video of {video_len} frames")));
    }
    Ok((0..n)
        .map(|i| {
            let lo = i * video_len / n;
            let hi = (i + 1) * video_len / n;
            rng.random_range(lo..hi)
        })
        .collect())
}

/// Uniform draw from `[anchor − window, anchor + window]` clamped to the video.
pub fn sample_positive(anchor: usize, window: usize, video_len: usize, rng: &mut impl Rng) -> usize {
    debug_assert!(anchor < video_len);
    let lo = anchor.saturating_sub(window);
    let hi = (anchor + window).min(video_len - 1);
    rng.random_range(lo..=hi)
}

/// Picks `videos_per_batch` distinct videos and samples `B / videos_per_batch`
/// ordered anchors (and positives within `window`) from each.
///
/// Videos shorter than the per-video sample count are skipped with a warning.
pub fn build_batch(
    catalog: &DatasetCatalog,
    videos_per_batch: usize,
    batch_size: usize,
    window: usize,
    rng: &mut impl Rng,
) -> Result<Batch> {
    if videos_per_batch == 0 || batch_size == 0 || !batch_size.is_multiple_of(videos_per_batch) {
        return Err(Error::Sampling(format!(
            "batch size {batch_size} must be a positive multiple of videos per batch {videos_per_batch}"
        )));
    }
    let per_video = batch_size / videos_per_batch;
    let eligible = eligible_videos(catalog, per_video);
    if eligible.len() < videos_per_batch {
        return Err(Error::Sampling(format!(
            "need {videos_per_batch} videos with at least {per_video} frames (B={batch_size} / {videos_per_batch} videos), \
             but only {} of {} qualify",
            eligible.len(),
            catalog.len()
        )));
    }

    let picks = index::sample(rng, eligible.len(), videos_per_batch);
    let mut frame_features = Matrix::zeros(batch_size, catalog.dim);
    let mut positive_features = Matrix::zeros(batch_size, catalog.dim);
    let mut frame_positions = Vec::with_capacity(batch_size);
    let mut positive_positions = Vec::with_capacity(batch_size);
    let mut video_blocks = Vec::with_capacity(videos_per_batch);

    for (b, pick) in picks.iter().enumerate() {
        let vi = eligible[pick];
        let entry = &catalog.videos[vi];
        let anchors = sample_ordered(entry.num_frames, per_video, rng)?;
        let positives: Vec<usize> =
            anchors.iter().map(|&a| sample_positive(a, window, entry.num_frames, rng)).collect();
        let start = b * per_video;
        frame_features.set_rows(start, &catalog.gather_rows(vi, &anchors)?);
        positive_features.set_rows(start, &catalog.gather_rows(vi, &positives)?);
        frame_positions.extend_from_slice(&anchors);
        positive_positions.extend_from_slice(&positives);
        video_blocks.push(VideoBlock {
            video_id: entry.video_id.clone(),
            video_index: vi,
            start,
            len: per_video,
            video_len: entry.num_frames,
        });
    }

    Ok(Batch { frame_features, positive_features, video_blocks, frame_positions, positive_positions })
}

fn eligible_videos(catalog: &DatasetCatalog, per_video: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(catalog.len());
    for (i, v) in catalog.videos.iter().enumerate() {
        if v.num_frames >= per_video {
            out.push(i);
        } else {
            log::warn!(
                "skipping video {} ({} frames) in batches of {per_video} frames per video",
                v.video_id,
                v.num_frames
            );
        }
    }
    out
}
