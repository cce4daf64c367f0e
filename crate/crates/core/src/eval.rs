//! Activity-level cluster-to-action matching, MOF and segmental F1.

use std::fmt::Write as _;

use crate::decode::{segments_from_labels, Segment};
use crate::error::{Error, Result};

/// Maximum-weight assignment of rows to columns (rectangular allowed).
///
/// Returns, for each row, the column it is assigned to (`None` when there
/// are more rows than columns), and the total weight. Runs the shortest
/// augmenting path form of the Hungarian method in `O(n²·m)`.
pub fn linear_assignment(weights: &[Vec<f64>]) -> (Vec<Option<usize>>, f64) {
    let n = weights.len();
    let m = weights.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return (vec![None; n], 0.0);
    }
    if n > m {
        let transposed: Vec<Vec<f64>> = (0..m).map(|j| (0..n).map(|i| weights[i][j]).collect()).collect();
        let (cols, total) = linear_assignment(&transposed);
        let mut rows = vec![None; n];
        for (j, i) in cols.into_iter().enumerate() {
            if let Some(i) = i {
                rows[i] = Some(j);
            }
        }
        return (rows, total);
    }

    // minimize cost = −weight; potentials u (rows), v (columns), 1-based with a virtual column 0
    let cost = |i: usize, j: usize| -weights[i - 1][j - 1];
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; m + 1];
    let mut owner = vec![0usize; m + 1];
    let mut way = vec![0usize; m + 1];
    for i in 1..=n {
        owner[0] = i;
        let mut j0 = 0;
        let mut min_v = vec![f64::INFINITY; m + 1];
        let mut used = vec![false; m + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=m {
                if used[j] {
                    continue;
                }
                let reduced = cost(i0, j) - u[i0] - v[j];
                if reduced < min_v[j] {
                    min_v[j] = reduced;
                    way[j] = j0;
                }
                if min_v[j] < delta {
                    delta = min_v[j];
                    j1 = j;
                }
            }
            for j in 0..=m {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    min_v[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut rows = vec![None; n];
    let mut total = 0.0;
    for j in 1..=m {
        if owner[j] != 0 {
            rows[owner[j] - 1] = Some(j - 1);
            total += weights[owner[j] - 1][j - 1];
        }
    }
    (rows, total)
}

/// One cluster → action assignment for a whole activity.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterMapping {
    /// `assignment[c]` is the action matched to cluster `c`, if any.
    pub assignment: Vec<Option<usize>>,
    /// Frames whose cluster maps to their ground-truth action.
    pub matched_frames: usize,
    /// Frames considered (background excluded).
    pub total_frames: usize,
}

impl ClusterMapping {
    /// Maps a cluster id to its action. Unmatched clusters map to distinct ids
    /// counted down from `usize::MAX`, which never equal a real action id.
    pub fn apply(&self, cluster: usize) -> usize {
        self.assignment.get(cluster).copied().flatten().unwrap_or(usize::MAX - cluster)
    }

    pub fn apply_all(&self, clusters: &[usize]) -> Vec<usize> {
        clusters.iter().map(|&c| self.apply(c)).collect()
    }
}

fn keep_frame(gt: usize, background: Option<usize>) -> bool {
    background != Some(gt)
}

/// Contingency counts `[cluster][action]` over non-background frames.
pub fn contingency(pred: &[usize], gt: &[usize], background: Option<usize>) -> Vec<Vec<f64>> {
    let k = pred.iter().max().map_or(0, |m| m + 1);
    let a = gt.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0.0; a]; k];
    for (&p, &g) in pred.iter().zip(gt) {
        if keep_frame(g, background) {
            counts[p][g] += 1.0;
        }
    }
    counts
}

/// Hungarian matching over all frames of an activity, maximizing the number
/// of frames whose cluster maps to their action.
pub fn hungarian_match(pred: &[usize], gt: &[usize], background: Option<usize>) -> Result<ClusterMapping> {
    if pred.len() != gt.len() {
        return Err(Error::Evaluation(format!(
            "prediction has {} frames but ground truth has {}",
            pred.len(),
            gt.len()
        )));
    }
    let total_frames = gt.iter().filter(|&&g| keep_frame(g, background)).count();
    if total_frames == 0 {
        return Err(Error::Evaluation("no frames left to evaluate after background exclusion".into()));
    }
    let mut counts = contingency(pred, gt, background);
    if let Some(bg) = background {
        // the background action is never a match target
        for row in counts.iter_mut() {
            if bg < row.len() {
                row[bg] = 0.0;
            }
        }
    }
    let (mut assignment, total) = linear_assignment(&counts);
    if let Some(bg) = background {
        for a in assignment.iter_mut() {
            if *a == Some(bg) {
                *a = None;
            }
        }
    }
    Ok(ClusterMapping { assignment, matched_frames: total.round() as usize, total_frames })
}

/// Fraction of non-background frames whose mapped prediction equals the truth.
pub fn mof(mapped_pred: &[usize], gt: &[usize], background: Option<usize>) -> f64 {
    assert_eq!(mapped_pred.len(), gt.len(), "prediction and ground truth lengths differ");
    let (mut correct, mut total) = (0usize, 0usize);
    for (&p, &g) in mapped_pred.iter().zip(gt) {
        if keep_frame(g, background) {
            total += 1;
            correct += usize::from(p == g);
        }
    }
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

/// When a predicted segment detects a ground-truth segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OverlapCriterion {
    /// Intersection covers more than half of the ground-truth segment.
    #[default]
    GroundTruthFraction,
    /// Intersection over union exceeds one half.
    Iou,
}

impl std::str::FromStr for OverlapCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gt" | "ground-truth" => Ok(Self::GroundTruthFraction),
            "iou" => Ok(Self::Iou),
            other => Err(Error::InvalidConfig(format!("unknown overlap criterion {other:?} (gt or iou)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct F1Stats {
    pub true_positives: usize,
    pub predicted: usize,
    pub ground_truth: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn intersection(a: &Segment, b: &Segment) -> usize {
    a.end.min(b.end).saturating_sub(a.start.max(b.start))
}

fn detects(pred: &Segment, gt: &Segment, criterion: OverlapCriterion) -> bool {
    let inter = intersection(pred, gt);
    match criterion {
        OverlapCriterion::GroundTruthFraction => 2 * inter > gt.len(),
        OverlapCriterion::Iou => {
            let union = pred.len() + gt.len() - inter;
            2 * inter > union
        }
    }
}

/// Segmental F1 for one video. Each predicted segment can detect at most one
/// ground-truth segment of the same label.
pub fn f1_score(pred: &[Segment], gt: &[Segment], criterion: OverlapCriterion) -> F1Stats {
    let mut used = vec![false; pred.len()];
    let mut tp = 0;
    for g in gt {
        let hit = pred
            .iter()
            .enumerate()
            .filter(|(i, p)| !used[*i] && p.label == g.label && detects(p, g, criterion))
            .max_by_key(|(_, p)| intersection(p, g));
        if let Some((i, _)) = hit {
            used[i] = true;
            tp += 1;
        }
    }
    let precision = if pred.is_empty() { 0.0 } else { tp as f64 / pred.len() as f64 };
    let recall = if gt.is_empty() { 0.0 } else { tp as f64 / gt.len() as f64 };
    let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
    F1Stats { true_positives: tp, predicted: pred.len(), ground_truth: gt.len(), precision, recall, f1 }
}

/// Drops background frames from both sequences.
pub fn strip_background(pred: &[usize], gt: &[usize], background: Option<usize>) -> (Vec<usize>, Vec<usize>) {
    pred.iter().zip(gt).filter(|(_, &g)| keep_frame(g, background)).map(|(&p, &g)| (p, g)).unzip()
}

/// Predicted clusters and ground truth of one video.
#[derive(Debug, Clone)]
pub struct VideoLabels {
    pub video_id: String,
    pub predicted: Vec<usize>,
    pub ground_truth: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoScore {
    pub video_id: String,
    pub f1: f64,
    pub frame_accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvalOptions {
    pub background: Option<usize>,
    pub overlap: OverlapCriterion,
}

/// Metrics for one activity.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub mapping: ClusterMapping,
    pub mof: f64,
    /// Mean F1 over the activity's videos.
    pub f1: f64,
    pub per_video: Vec<VideoScore>,
}

/// Matches clusters to actions over all frames of the activity, then scores.
/// Videos consisting only of background are skipped.
pub fn evaluate_activity(videos: &[VideoLabels], options: EvalOptions) -> Result<EvalReport> {
    let mut all_pred = Vec::new();
    let mut all_gt = Vec::new();
    for v in videos {
        if v.predicted.len() != v.ground_truth.len() {
            return Err(Error::Evaluation(format!(
                "video {}: {} predicted frames vs {} ground-truth frames",
                v.video_id,
                v.predicted.len(),
                v.ground_truth.len()
            )));
        }
        all_pred.extend_from_slice(&v.predicted);
        all_gt.extend_from_slice(&v.ground_truth);
    }
    let mapping = hungarian_match(&all_pred, &all_gt, options.background)?;
    let mof_value = mof(&mapping.apply_all(&all_pred), &all_gt, options.background);

    let mut per_video = Vec::with_capacity(videos.len());
    for v in videos {
        let (pred, gt) = strip_background(&v.predicted, &v.ground_truth, options.background);
        if gt.is_empty() {
            continue;
        }
        let mapped = mapping.apply_all(&pred);
        let stats = f1_score(&segments_from_labels(&mapped), &segments_from_labels(&gt), options.overlap);
        per_video.push(VideoScore {
            video_id: v.video_id.clone(),
            f1: stats.f1,
            frame_accuracy: mof(&mapped, &gt, None),
        });
    }
    let f1 = per_video.iter().map(|v| v.f1).sum::<f64>() / per_video.len().max(1) as f64;
    Ok(EvalReport { mapping, mof: mof_value, f1, per_video })
}

/// Reports for several activities.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetReport {
    pub activities: Vec<(String, EvalReport)>,
}

impl DatasetReport {
    /// MOF averaged over activities.
    pub fn mof(&self) -> f64 {
        let n = self.activities.len().max(1) as f64;
        self.activities.iter().map(|(_, r)| r.mof).sum::<f64>() / n
    }

    /// F1 averaged over every video of every activity.
    pub fn f1(&self) -> f64 {
        let scores: Vec<f64> = self.activities.iter().flat_map(|(_, r)| r.per_video.iter().map(|v| v.f1)).collect();
        scores.iter().sum::<f64>() / scores.len().max(1) as f64
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, r) in &self.activities {
            let _ = writeln!(
                out,
                "{name}: MOF {:.2}%  F1 {:.2}%  ({} / {} frames matched, {} videos)",
                100.0 * r.mof,
                100.0 * r.f1,
                r.mapping.matched_frames,
                r.mapping.total_frames,
                r.per_video.len()
            );
        }
        let _ = writeln!(out, "overall: MOF {:.2}%  F1 {:.2}%", 100.0 * self.mof(), 100.0 * self.f1());
        out
    }

    /// One `key=value` pair per line.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "mof={:.6}", self.mof());
        let _ = writeln!(out, "f1={:.6}", self.f1());
        for (name, r) in &self.activities {
            let _ = writeln!(out, "{name}.mof={:.6}", r.mof);
            let _ = writeln!(out, "{name}.f1={:.6}", r.f1);
            let _ = writeln!(out, "{name}.matched_frames={}", r.mapping.matched_frames);
            let _ = writeln!(out, "{name}.total_frames={}", r.mapping.total_frames);
            for (c, a) in r.mapping.assignment.iter().enumerate() {
                match a {
                    Some(a) => {
                        let _ = writeln!(out, "{name}.mapping.{c}={a}");
                    }
                    None => {
                        let _ = writeln!(out, "{name}.mapping.{c}=none");
                    }
                }
            }
            for v in &r.per_video {
                let _ = writeln!(out, "{name}.video.{}.f1={:.6}", v.video_id, v.f1);
                let _ = writeln!(out, "{name}.video.{}.accuracy={:.6}", v.video_id, v.frame_accuracy);
            }
        }
        out
    }
}
