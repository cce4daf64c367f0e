//! Feature and label files, dataset catalogs and the synthetic generator.
//!
//! # TOTF feature files
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TOTF"
//! 4       2     format version (u16 LE, currently 1)
//! 6       2     reserved, zero
//! 8       4     rows (u32 LE)
//! 12      4     cols (u32 LE)
//! 16      4·r·c row-major f32 LE
//! ```
//!
//! # Directory layout
//!
//! ```text
//! root/<activity>/mapping.txt              "id name" per line
//! root/<activity>/features/<video>.totf
//! root/<activity>/groundTruth/<video>.txt  one action name per frame
//! ```

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufWriter, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::numerics::{dot, Matrix};

pub const FEATURE_MAGIC: [u8; 4] = *b"TOTF";
pub const FEATURE_VERSION: u16 = 1;
pub const FEATURE_HEADER_LEN: u64 = 16;

pub const FEATURES_DIR: &str = "features";
pub const GROUND_TRUTH_DIR: &str = "groundTruth";
pub const MAPPING_FILE: &str = "mapping.txt";
pub const FEATURE_EXT: &str = "totf";

/// Per-video frame features with optional per-frame action ids.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub video_id: String,
    pub features: Matrix,
    pub labels: Option<Vec<usize>>,
    pub fps: Option<f64>,
}

impl FeatureSequence {
    pub fn new(video_id: impl Into<String>, features: Matrix, labels: Option<Vec<usize>>) -> Result<Self> {
        let seq = Self { video_id: video_id.into(), features, labels, fps: None };
        seq.validate()?;
        Ok(seq)
    }

    pub fn num_frames(&self) -> usize {
        self.features.rows()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    fn validate(&self) -> Result<()> {
        if self.features.rows() == 0 {
            return Err(Error::InvalidData(format!("video {} has no frames", self.video_id)));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.features.rows() {
                return Err(Error::InvalidData(format!(
                    "video {} has {} frames but {} labels",
                    self.video_id,
                    self.features.rows(),
                    labels.len()
                )));
            }
        }
        if !self.features.is_finite() {
            return Err(Error::InvalidData(format!("video {} has non-finite features", self.video_id)));
        }
        if let Some(fps) = self.fps {
            if !(fps > 0.0) {
                return Err(Error::InvalidData(format!("video {} has fps {fps}", self.video_id)));
            }
        }
        Ok(())
    }
}

/// Shape stored in a TOTF header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureHeader {
    pub rows: usize,
    pub cols: usize,
}

impl FeatureHeader {
    pub fn file_len(&self) -> u64 {
        FEATURE_HEADER_LEN + (self.rows * self.cols * 4) as u64
    }
}

pub fn write_feature_matrix(features: &Matrix, path: &Path) -> Result<()> {
    let io = |e| Error::io(path, e);
    let rows = u32::try_from(features.rows())
        .map_err(|_| Error::InvalidData(format!("{} rows exceed the u32 limit", features.rows())))?;
    let cols = u32::try_from(features.cols())
        .map_err(|_| Error::InvalidData(format!("{} cols exceed the u32 limit", features.cols())))?;
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    w.write_all(&FEATURE_MAGIC).map_err(io)?;
    w.write_all(&FEATURE_VERSION.to_le_bytes()).map_err(io)?;
    w.write_all(&0u16.to_le_bytes()).map_err(io)?;
    w.write_all(&rows.to_le_bytes()).map_err(io)?;
    w.write_all(&cols.to_le_bytes()).map_err(io)?;
    for &v in features.as_slice() {
        w.write_all(&(v as f32).to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

/// Writes the feature matrix of `seq` as a TOTF file. Labels are not stored.
pub fn write_features(seq: &FeatureSequence, path: &Path) -> Result<()> {
    write_feature_matrix(&seq.features, path)
}

fn parse_header(path: &Path, bytes: &[u8; 16], file_len: u64) -> Result<FeatureHeader> {
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != FEATURE_MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf(), expected: FEATURE_MAGIC, found: magic });
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch { path: path.to_path_buf(), expected: FEATURE_VERSION, found: version });
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let header = FeatureHeader { rows, cols };
    if file_len < header.file_len() {
        return Err(Error::Truncated { path: path.to_path_buf(), expected: header.file_len(), found: file_len });
    }
    Ok(header)
}

fn open_feature_file(path: &Path) -> Result<(File, FeatureHeader)> {
    let io = |e| Error::io(path, e);
    let mut file = File::open(path).map_err(io)?;
    let len = file.metadata().map_err(io)?.len();
    if len < FEATURE_HEADER_LEN {
        // still report a wrong magic before a short header when we can see it
        let mut head = Vec::new();
        file.read_to_end(&mut head).map_err(io)?;
        if head.len() >= 4 && head[..4] != FEATURE_MAGIC {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: FEATURE_MAGIC,
                found: head[..4].try_into().unwrap(),
            });
        }
        return Err(Error::Truncated { path: path.to_path_buf(), expected: FEATURE_HEADER_LEN, found: len });
    }
    let mut head = [0u8; 16];
    file.read_exact(&mut head).map_err(io)?;
    let header = parse_header(path, &head, len)?;
    Ok((file, header))
}

/// Reads only the header of a TOTF file.
pub fn read_feature_header(path: &Path) -> Result<FeatureHeader> {
    open_feature_file(path).map(|(_, h)| h)
}

fn decode_f32s(bytes: &[u8], out: &mut Vec<f64>) {
    out.extend(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64));
}

pub fn read_feature_matrix(path: &Path) -> Result<Matrix> {
    let (mut file, header) = open_feature_file(path)?;
    let mut payload = vec![0u8; header.rows * header.cols * 4];
    file.read_exact(&mut payload).map_err(|e| Error::io(path, e))?;
    let mut data = Vec::with_capacity(header.rows * header.cols);
    decode_f32s(&payload, &mut data);
    let m = Matrix::from_vec(header.rows, header.cols, data);
    if !m.is_finite() {
        return Err(Error::InvalidData(format!("{}: non-finite feature values", path.display())));
    }
    Ok(m)
}

/// Reads a TOTF file; the video id is the file stem.
pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let features = read_feature_matrix(path)?;
    let video_id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    FeatureSequence::new(video_id, features, None)
}

/// Reads the listed rows of a TOTF file without loading the rest of the payload.
pub fn read_feature_rows(path: &Path, indices: &[usize]) -> Result<Matrix> {
    let (mut file, header) = open_feature_file(path)?;
    let io = |e| Error::io(path, e);
    let row_bytes = header.cols * 4;
    let mut buf = vec![0u8; row_bytes];
    let mut data = Vec::with_capacity(indices.len() * header.cols);
    for &i in indices {
        if i >= header.rows {
            return Err(Error::InvalidData(format!(
                "{}: row {i} out of range for {} rows",
                path.display(),
                header.rows
            )));
        }
        file.seek(SeekFrom::Start(FEATURE_HEADER_LEN + (i * row_bytes) as u64)).map_err(io)?;
        file.read_exact(&mut buf).map_err(io)?;
        decode_f32s(&buf, &mut data);
    }
    Ok(Matrix::from_vec(indices.len(), header.cols, data))
}

/// Bidirectional action-name ↔ id table.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelMapping {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl LabelMapping {
    /// Names are assigned ids `0..names.len()` in order.
    pub fn from_names<S: Into<String>>(names: impl IntoIterator<Item = S>) -> Result<Self> {
        let mut mapping = Self::default();
        for name in names {
            mapping.push(name.into())?;
        }
        Ok(mapping)
    }

    /// Appends a new name and returns its id.
    pub fn push(&mut self, name: String) -> Result<usize> {
        if self.ids.contains_key(&name) {
            return Err(Error::InvalidData(format!("duplicate action name {name:?}")));
        }
        let id = self.names.len();
        self.ids.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Parses a mapping file with one `id name` entry per line. Ids must be `0..n`.
pub fn read_mapping(path: &Path) -> Result<LabelMapping> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse { path: path.to_path_buf(), line: line_no + 1, message };
        let (id, name) = line
            .split_once(char::is_whitespace)
            .ok_or_else(|| parse_err(format!("expected \"id name\", got {line:?}")))?;
        let id: usize = id.parse().map_err(|_| parse_err(format!("invalid id {id:?}")))?;
        entries.push((id, name.trim().to_string(), line_no + 1));
    }
    entries.sort_by_key(|e| e.0);
    let mut mapping = LabelMapping::default();
    for (expected, (id, name, line)) in entries.into_iter().enumerate() {
        if id != expected {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("ids must be contiguous from 0, missing id {expected}"),
            });
        }
        mapping.push(name).map_err(|e| Error::Parse { path: path.to_path_buf(), line, message: e.to_string() })?;
    }
    Ok(mapping)
}

pub fn write_mapping(mapping: &LabelMapping, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, name) in mapping.names().iter().enumerate() {
        out.push_str(&format!("{id} {name}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a per-frame label file, resolving names through `mapping`.
pub fn read_labels(path: &Path, mapping: &LabelMapping) -> Result<Vec<usize>> {
    let names = read_label_names(path)?;
    names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            mapping.id(name).ok_or_else(|| Error::UnknownLabel {
                path: path.to_path_buf(),
                line: i + 1,
                name: name.clone(),
            })
        })
        .collect()
}

/// Reads a per-frame label file as raw names.
pub fn read_label_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let names: Vec<String> = text.lines().map(|l| l.trim().to_string()).filter(|l| !l.is_empty()).collect();
    if names.is_empty() {
        return Err(Error::EmptyLabels { path: path.to_path_buf() });
    }
    Ok(names)
}

pub fn write_label_names<S: AsRef<str>>(names: &[S], path: &Path) -> Result<()> {
    let mut out = String::with_capacity(names.len() * 8);
    for n in names {
        out.push_str(n.as_ref());
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Relabels the leading background run as `start_id` and the trailing run as
/// `end_id`. Background frames in the middle of the video keep `background`.
pub fn split_background_runs(labels: &mut [usize], background: usize, start_id: usize, end_id: usize) {
    for l in labels.iter_mut() {
        if *l != background {
            break;
        }
        *l = start_id;
    }
    for l in labels.iter_mut().rev() {
        if *l != background {
            break;
        }
        *l = end_id;
    }
}

/// Where a catalog video's frames live.
#[derive(Debug, Clone)]
pub enum VideoSource {
    Memory(Arc<FeatureSequence>),
    Disk { features: PathBuf, labels: Option<PathBuf> },
}

#[derive(Debug, Clone)]
pub struct VideoEntry {
    pub video_id: String,
    pub num_frames: usize,
    pub source: VideoSource,
}

/// Options applied while opening an activity directory.
#[derive(Debug, Clone, Default)]
pub struct CatalogOptions {
    /// Name of the background action, excluded from the prototype count.
    pub background: Option<String>,
    /// Split leading/trailing background runs into `action_start` / `action_end`.
    pub split_background: bool,
}

pub const SPLIT_START_NAME: &str = "action_start";
pub const SPLIT_END_NAME: &str = "action_end";

/// All videos of one activity.
#[derive(Debug, Clone)]
pub struct DatasetCatalog {
    pub activity: String,
    /// Number of actions, and therefore prototypes (background excluded).
    pub num_actions: usize,
    pub dim: usize,
    pub videos: Vec<VideoEntry>,
    pub mapping: LabelMapping,
    pub background: Option<usize>,
    split: Option<(usize, usize, usize)>,
}

impl DatasetCatalog {
    /// Builds an in-memory catalog. All sequences must share a feature dimension.
    pub fn from_sequences(
        activity: impl Into<String>,
        mapping: LabelMapping,
        background: Option<usize>,
        sequences: Vec<FeatureSequence>,
    ) -> Result<Self> {
        let dim = sequences
            .first()
            .map(FeatureSequence::dim)
            .ok_or_else(|| Error::InvalidData("catalog has no videos".into()))?;
        let mut videos = Vec::with_capacity(sequences.len());
        for seq in sequences {
            seq.validate()?;
            if seq.dim() != dim {
                return Err(Error::InvalidData(format!(
                    "video {} has feature dimension {} but the catalog uses {dim}",
                    seq.video_id,
                    seq.dim()
                )));
            }
            if let Some(labels) = &seq.labels {
                if let Some(bad) = labels.iter().find(|&&l| l >= mapping.len()) {
                    return Err(Error::InvalidData(format!(
                        "video {} has label id {bad} outside the mapping",
                        seq.video_id
                    )));
                }
            }
            videos.push(VideoEntry {
                video_id: seq.video_id.clone(),
                num_frames: seq.num_frames(),
                source: VideoSource::Memory(Arc::new(seq)),
            });
        }
        let num_actions = mapping.len() - usize::from(background.is_some());
        Ok(Self { activity: activity.into(), num_actions, dim, videos, mapping, background, split: None })
    }

    /// Indexes `root/<activity>`. Only headers are read; frames stay on disk.
    pub fn open(root: &Path, activity: &str, options: &CatalogOptions) -> Result<Self> {
        let dir = root.join(activity);
        let mut mapping = read_mapping(&dir.join(MAPPING_FILE))?;
        let background = match &options.background {
            Some(name) => Some(mapping.id(name).ok_or_else(|| {
                Error::InvalidData(format!("background action {name:?} is not in the mapping of {activity}"))
            })?),
            None => None,
        };
        let split = if options.split_background {
            let bg = background
                .ok_or_else(|| Error::InvalidConfig("splitting background runs requires a background action".into()))?;
            let start = mapping.push(SPLIT_START_NAME.to_string())?;
            let end = mapping.push(SPLIT_END_NAME.to_string())?;
            Some((bg, start, end))
        } else {
            None
        };

        let feat_dir = dir.join(FEATURES_DIR);
        let gt_dir = dir.join(GROUND_TRUTH_DIR);
        let mut paths: Vec<PathBuf> = fs::read_dir(&feat_dir)
            .map_err(|e| Error::io(&feat_dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == FEATURE_EXT))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(Error::InvalidData(format!("{} holds no .{FEATURE_EXT} files", feat_dir.display())));
        }

        let mut videos = Vec::with_capacity(paths.len());
        let mut dim = None;
        for path in paths {
            let header = read_feature_header(&path)?;
            if header.rows == 0 {
                return Err(Error::InvalidData(format!("{} has no frames", path.display())));
            }
            match dim {
                None => dim = Some(header.cols),
                Some(d) if d != header.cols => {
                    return Err(Error::InvalidData(format!(
                        "{} has feature dimension {} but the catalog uses {d}",
                        path.display(),
                        header.cols
                    )))
                }
                _ => {}
            }
            let video_id = path.file_stem().unwrap().to_string_lossy().into_owned();
            let label_path = gt_dir.join(format!("{video_id}.txt"));
            videos.push(VideoEntry {
                video_id,
                num_frames: header.rows,
                source: VideoSource::Disk { features: path, labels: label_path.exists().then_some(label_path) },
            });
        }
        let mut num_actions = mapping.len() - usize::from(background.is_some());
        if split.is_some() {
            // the two split classes are real actions; the plain background id remains for mid-video frames
            num_actions = mapping.len() - 1;
        }
        Ok(Self { activity: activity.to_string(), num_actions, dim: dim.unwrap(), videos, mapping, background, split })
    }

    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn total_frames(&self) -> usize {
        self.videos.iter().map(|v| v.num_frames).sum()
    }

    /// Loads the full features (and labels, when present) of one video.
    pub fn load_video(&self, index: usize) -> Result<FeatureSequence> {
        let entry = &self.videos[index];
        match &entry.source {
            VideoSource::Memory(seq) => Ok(seq.as_ref().clone()),
            VideoSource::Disk { features, .. } => {
                let m = read_feature_matrix(features)?;
                let labels = self.labels(index)?;
                FeatureSequence::new(entry.video_id.clone(), m, labels)
            }
        }
    }

    pub fn labels(&self, index: usize) -> Result<Option<Vec<usize>>> {
        let entry = &self.videos[index];
        let mut labels = match &entry.source {
            VideoSource::Memory(seq) => return Ok(seq.labels.clone()),
            VideoSource::Disk { labels: None, .. } => return Ok(None),
            VideoSource::Disk { labels: Some(path), .. } => read_labels(path, &self.mapping)?,
        };
        if labels.len() != entry.num_frames {
            return Err(Error::InvalidData(format!(
                "video {} has {} frames but {} labels",
                entry.video_id,
                entry.num_frames,
                labels.len()
            )));
        }
        if let Some((bg, start, end)) = self.split {
            split_background_runs(&mut labels, bg, start, end);
        }
        Ok(Some(labels))
    }

    /// Fetches selected frames of one video.
    pub fn gather_rows(&self, index: usize, rows: &[usize]) -> Result<Matrix> {
        match &self.videos[index].source {
            VideoSource::Memory(seq) => Ok(seq.features.select_rows(rows)),
            VideoSource::Disk { features, .. } => read_feature_rows(features, rows),
        }
    }

    /// Writes the catalog under `root/<activity>` in the standard layout.
    pub fn write_to(&self, root: &Path) -> Result<()> {
        let dir = root.join(&self.activity);
        let feat_dir = dir.join(FEATURES_DIR);
        let gt_dir = dir.join(GROUND_TRUTH_DIR);
        fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
        fs::create_dir_all(&gt_dir).map_err(|e| Error::io(&gt_dir, e))?;
        write_mapping(&self.mapping, &dir.join(MAPPING_FILE))?;
        for i in 0..self.videos.len() {
            let seq = self.load_video(i)?;
            write_features(&seq, &feat_dir.join(format!("{}.{FEATURE_EXT}", seq.video_id)))?;
            if let Some(labels) = &seq.labels {
                let names: Vec<&str> = labels.iter().map(|&l| self.mapping.name(l).unwrap()).collect();
                write_label_names(&names, &gt_dir.join(format!("{}.txt", seq.video_id)))?;
            }
        }
        Ok(())
    }
}

/// Activity subdirectories of a dataset root (those holding a mapping file), sorted.
pub fn list_activities(root: &Path) -> Result<Vec<String>> {
    let mut out: Vec<String> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join(MAPPING_FILE).is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    out.sort();
    Ok(out)
}

/// Parameters of the synthetic ordered-activity generator.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_videos: usize,
    pub num_actions: usize,
    pub dim: usize,
    pub mean_segment_len: usize,
    /// Segment lengths vary uniformly within `±len_jitter · mean_segment_len`.
    pub len_jitter: f64,
    /// Minimum distance between any two action means.
    pub cluster_separation: f64,
    pub noise_sigma: f64,
    /// Probability of swapping each adjacent pair of segments.
    pub permute_prob: f64,
    /// Probability of dropping each segment (at least one is always kept).
    pub drop_prob: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_videos: 20,
            num_actions: 5,
            dim: 16,
            mean_segment_len: 60,
            len_jitter: 0.3,
            cluster_separation: 10.0,
            noise_sigma: 1.0,
            permute_prob: 0.0,
            drop_prob: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    /// The action means [`generate_synthetic`] draws frames around.
    pub fn means(&self) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        synthetic_means(self.num_actions, self.dim, self.cluster_separation, &mut rng)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.num_actions < 2 {
            return bad(format!("synthetic data needs at least 2 actions, got {}", self.num_actions));
        }
        if self.mean_segment_len < 2 {
            return bad(format!("mean segment length must be at least 2, got {}", self.mean_segment_len));
        }
        if self.num_videos == 0 || self.dim == 0 {
            return bad("synthetic data needs at least one video and one feature dimension".into());
        }
        if !(0.0..1.0).contains(&self.len_jitter) {
            return bad(format!("len_jitter must lie in [0, 1), got {}", self.len_jitter));
        }
        if !(self.cluster_separation > 0.0) || !(self.noise_sigma > 0.0) {
            return bad("cluster separation and noise sigma must be positive".into());
        }
        for (name, p) in [("permute_prob", self.permute_prob), ("drop_prob", self.drop_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        Ok(())
    }
}

/// Action means with pairwise distance at least `separation`.
///
/// With `dim ≥ k` the means are scaled orthonormal vectors, so every pair sits
/// exactly `separation` apart. Otherwise Gaussian means are scaled up until
/// the closest pair reaches `separation`.
pub fn synthetic_means(k: usize, dim: usize, separation: f64, rng: &mut impl Rng) -> Matrix {
    let mut means = Matrix::from_fn(k, dim, |_, _| StandardNormal.sample(rng));
    if dim >= k {
        // Gram-Schmidt to an orthonormal set
        for i in 0..k {
            for j in 0..i {
                let prev = means.row(j).to_vec();
                let proj = dot(means.row(i), &prev);
                for (v, p) in means.row_mut(i).iter_mut().zip(&prev) {
                    *v -= proj * p;
                }
            }
            let norm = dot(means.row(i), means.row(i)).sqrt();
            means.row_mut(i).iter_mut().for_each(|v| *v /= norm);
        }
        return means.scale(separation / std::f64::consts::SQRT_2);
    }
    let min_dist = (0..k)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| means.row(i).iter().zip(means.row(j)).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .fold(f64::INFINITY, f64::min);
    means.scale((separation / min_dist).max(1.0) * 1.000_001)
}

/// Generates an ordered-activity dataset: each video concatenates action
/// segments in canonical order (modulo swaps and drops), frames drawn from
/// isotropic Gaussians around per-action means.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<DatasetCatalog> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let k = spec.num_actions;
    // same draws as SyntheticSpec::means
    let means = synthetic_means(k, spec.dim, spec.cluster_separation, &mut rng);

    let mut sequences = Vec::with_capacity(spec.num_videos);
    for v in 0..spec.num_videos {
        let mut order: Vec<usize> = (0..k).collect();
        if spec.permute_prob > 0.0 {
            let mut j = 0;
            while j + 1 < order.len() {
                if rng.random_bool(spec.permute_prob) {
                    order.swap(j, j + 1);
                    j += 2;
                } else {
                    j += 1;
                }
            }
        }
        if spec.drop_prob > 0.0 {
            let keep: Vec<bool> = order.iter().map(|_| !rng.random_bool(spec.drop_prob)).collect();
            if keep.iter().any(|&k| k) {
                order = order.into_iter().zip(keep).filter(|(_, k)| *k).map(|(a, _)| a).collect();
            } else {
                let survivor = rng.random_range(0..order.len());
                order = vec![order[survivor]];
            }
        }

        let mut labels = Vec::new();
        for &action in &order {
            let mean = spec.mean_segment_len as f64;
            let len = if spec.len_jitter > 0.0 {
                let u: f64 = rng.random_range(-1.0..1.0);
                (mean * (1.0 + spec.len_jitter * u)).round() as usize
            } else {
                spec.mean_segment_len
            };
            labels.extend(std::iter::repeat_n(action, len.max(1)));
        }
        let features = Matrix::from_fn(labels.len(), spec.dim, |r, c| {
            let z: f64 = StandardNormal.sample(&mut rng);
            means[(labels[r], c)] + spec.noise_sigma * z
        });
        sequences.push(FeatureSequence::new(format!("video_{v:03}"), features, Some(labels))?);
    }
    let mapping = LabelMapping::from_names((0..k).map(|j| format!("action_{j}")))?;
    DatasetCatalog::from_sequences("synthetic", mapping, None, sequences)
}
