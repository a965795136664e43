//! Evaluation: heatmap decoding, the five-way confusion taxonomy with the
//! 4-pixel rule, metric formulas, dataset split protocols, FPS measurement,
//! and the per-layer weight similarity diagnostic.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::frames::{FrameSequence, TemporalBlock, make_blocks};
use crate::net::{HeatmapStack, ModelWeights};
use crate::synthgen::BallLabel;

/// Default localization tolerance in pixels: a detection within this
/// Euclidean distance of the ground truth counts as a true positive.
pub const DEFAULT_TOLERANCE: f64 = 4.0;

/// Default decode threshold on heatmap peak values.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A decoded per-frame detection. `hit` is `None` when no ball was found.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub frame_index: u64,
    pub hit: Option<Hit>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub x: f64,
    pub y: f64,
    /// Peak heatmap value.
    pub confidence: f64,
}

impl Detection {
    pub fn present(&self) -> bool {
        self.hit.is_some()
    }

    pub fn absent(frame_index: u64) -> Detection {
        Detection {
            frame_index,
            hit: None,
        }
    }
}

/// Decode one heatmap: absent if the peak is below `threshold`, otherwise
/// the intensity-weighted centroid of the 4-connected component (of pixels
/// >= threshold) that contains the peak.
pub fn decode_heatmap(map: &Array2<f64>, threshold: f64, frame_index: u64) -> Detection {
    let (h, w) = map.dim();
    let mut peak = (0usize, 0usize);
    let mut peak_v = f64::NEG_INFINITY;
    for y in 0..h {
        for x in 0..w {
            if map[(y, x)] > peak_v {
                peak_v = map[(y, x)];
                peak = (y, x);
            }
        }
    }
    if peak_v < threshold {
        return Detection::absent(frame_index);
    }
    // flood fill the component containing the peak
    let mut visited = vec![false; h * w];
    let mut stack = vec![peak];
    visited[peak.0 * w + peak.1] = true;
    let mut sum_v = 0.0;
    let mut sum_x = 0.0;
    let mut sum_y = 0.0;
    while let Some((y, x)) = stack.pop() {
        let v = map[(y, x)];
        sum_v += v;
        sum_x += v * x as f64;
        sum_y += v * y as f64;
        let mut push = |ny: usize, nx: usize| {
            if !visited[ny * w + nx] && map[(ny, nx)] >= threshold {
                visited[ny * w + nx] = true;
                stack.push((ny, nx));
            }
        };
        if y > 0 {
            push(y - 1, x);
        }
        if y + 1 < h {
            push(y + 1, x);
        }
        if x > 0 {
            push(y, x - 1);
        }
        if x + 1 < w {
            push(y, x + 1);
        }
    }
    Detection {
        frame_index,
        hit: Some(Hit {
            x: sum_x / sum_v,
            y: sum_y / sum_v,
            confidence: peak_v,
        }),
    }
}

/// The five evaluation outcomes. FP1 is a mislocalized detection of a
/// visible ball; FP2 is a detection while no ball is present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Outcome {
    Tp,
    Tn,
    Fp1,
    Fp2,
    Fn,
}

/// Classify one (detection, label) pair under the tolerance rule.
pub fn classify_frame(det: &Detection, label: &BallLabel, tol: f64) -> Result<Outcome> {
    if det.frame_index != label.frame_index {
        return Err(Error::FrameIndexMismatch(format!(
            "detection frame {} vs label frame {}",
            det.frame_index, label.frame_index
        )));
    }
    Ok(match (label.is_visible(), &det.hit) {
        (true, Some(hit)) => {
            let dist = ((hit.x - label.x).powi(2) + (hit.y - label.y).powi(2)).sqrt();
            if dist <= tol {
                Outcome::Tp
            } else {
                Outcome::Fp1
            }
        }
        (false, Some(_)) => Outcome::Fp2,
        (true, None) => Outcome::Fn,
        (false, None) => Outcome::Tn,
    })
}

/// Confusion-matrix tallies over a set of evaluated frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub tn: usize,
    pub fp1: usize,
    pub fp2: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp1 + self.fp2 + self.fn_
    }
}

pub fn aggregate(outcomes: &[Outcome]) -> Result<ConfusionCounts> {
    if outcomes.is_empty() {
        return Err(Error::EmptyOutcomes);
    }
    let mut c = ConfusionCounts::default();
    for o in outcomes {
        match o {
            Outcome::Tp => c.tp += 1,
            Outcome::Tn => c.tn += 1,
            Outcome::Fp1 => c.fp1 += 1,
            Outcome::Fp2 => c.fp2 += 1,
            Outcome::Fn => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Percentages at full precision; `None` marks a metric whose denominator
/// was zero (undefined, distinct from 0).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

/// Half-up rounding to one decimal, the display convention.
pub fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn fmt1(v: Option<f64>) -> String {
    match v {
        Some(x) => format!("{:.1}", round1(x)),
        None => "undef".to_string(),
    }
}

impl MetricsReport {
    /// `Acc/Prec/Rec/F1` at one decimal for display.
    pub fn row_1dp(&self) -> String {
        format!(
            "{}/{}/{}/{}",
            fmt1(self.accuracy),
            fmt1(self.precision),
            fmt1(self.recall),
            fmt1(self.f1)
        )
    }
}

/// Accuracy, precision, recall and F1 from confusion counts:
/// `acc = (TP+TN)/total`, `prec = TP/(TP+FP1+FP2)`, `rec = TP/(TP+FN)`,
/// `f1 = 2PR/(P+R)`, each as a percentage.
pub fn metrics(c: &ConfusionCounts) -> MetricsReport {
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            None
        } else {
            Some(100.0 * num as f64 / den as f64)
        }
    };
    let accuracy = ratio(c.tp + c.tn, c.total());
    let precision = ratio(c.tp, c.tp + c.fp1 + c.fp2);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        _ => None,
    };
    MetricsReport {
        accuracy,
        precision,
        recall,
        f1,
    }
}

/// Evaluate matched prediction/label sets. Frame index sets must coincide.
pub fn evaluate(preds: &[Detection], labels: &[BallLabel], tol: f64) -> Result<ConfusionCounts> {
    let pred_map: BTreeMap<u64, &Detection> = preds.iter().map(|d| (d.frame_index, d)).collect();
    let label_map: BTreeMap<u64, &BallLabel> = labels.iter().map(|l| (l.frame_index, l)).collect();
    let missing_preds: Vec<u64> = label_map
        .keys()
        .filter(|k| !pred_map.contains_key(k))
        .copied()
        .collect();
    let missing_labels: Vec<u64> = pred_map
        .keys()
        .filter(|k| !label_map.contains_key(k))
        .copied()
        .collect();
    if !missing_preds.is_empty() || !missing_labels.is_empty() {
        return Err(Error::FrameIndexMismatch(format!(
            "frames missing predictions: {missing_preds:?}; frames missing labels: {missing_labels:?}"
        )));
    }
    let outcomes: Vec<Outcome> = label_map
        .iter()
        .map(|(k, label)| classify_frame(pred_map[k], label, tol))
        .collect::<Result<_>>()?;
    aggregate(&outcomes)
}

// ---------------------------------------------------------------------------
// split protocols

/// The game-level tennis protocol's training games.
pub const TENNIS_TRAIN_GAMES: [&str; 7] =
    ["game5", "game10", "game6", "game2", "game7", "game3", "game8"];

/// The game-level tennis protocol's test games.
pub const TENNIS_TEST_GAMES: [&str; 3] = ["game1", "game9", "game4"];

/// One clip of the source data: `frames` video frames belonging to `game`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClipRecord {
    pub game: String,
    pub clip: String,
    pub frames: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Assignment {
    Train,
    Test,
}

impl std::fmt::Display for Assignment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Assignment::Train => "train",
            Assignment::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitEntry {
    pub game: String,
    pub clip: String,
    pub frames: usize,
    pub assignment: Assignment,
}

/// A resolved split: every clip wholly on one side.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitManifest {
    pub entries: Vec<SplitEntry>,
    /// Achieved fraction of frames assigned to training.
    pub train_fraction: f64,
    pub warnings: Vec<String>,
}

impl SplitManifest {
    pub fn train_frames(&self) -> usize {
        self.entries
            .iter()
            .filter(|e| e.assignment == Assignment::Train)
            .map(|e| e.frames)
            .sum()
    }

    pub fn total_frames(&self) -> usize {
        self.entries.iter().map(|e| e.frames).sum()
    }
}

fn finish_split(entries: Vec<SplitEntry>) -> SplitManifest {
    let total: usize = entries.iter().map(|e| e.frames).sum();
    let train: usize = entries
        .iter()
        .filter(|e| e.assignment == Assignment::Train)
        .map(|e| e.frames)
        .sum();
    let mut warnings = Vec::new();
    if train == total {
        warnings.push("test split is empty".to_string());
    }
    if train == 0 {
        warnings.push("train split is empty".to_string());
    }
    SplitManifest {
        entries,
        train_fraction: train as f64 / total as f64,
        warnings,
    }
}

/// Assign whole games to train/test by membership in `train_games`.
/// Every listed game must exist in the source data.
pub fn split_game_level(clips: &[ClipRecord], train_games: &[&str]) -> Result<SplitManifest> {
    if clips.is_empty() {
        return Err(Error::EmptyManifest);
    }
    for game in train_games {
        if !clips.iter().any(|c| c.game == *game) {
            return Err(Error::UnknownGame(game.to_string()));
        }
    }
    let entries = clips
        .iter()
        .map(|c| SplitEntry {
            game: c.game.clone(),
            clip: c.clip.clone(),
            frames: c.frames,
            assignment: if train_games.contains(&c.game.as_str()) {
                Assignment::Train
            } else {
                Assignment::Test
            },
        })
        .collect();
    Ok(finish_split(entries))
}

/// Greedy clip-level split: iterate clips ordered by (game, clip) and
/// assign to train until the cumulative frame count first reaches
/// `train_fraction` of the total; the remainder is test.
pub fn split_clip_level(clips: &[ClipRecord], train_fraction: f64) -> Result<SplitManifest> {
    if clips.is_empty() {
        return Err(Error::EmptyManifest);
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::InvalidConfig(format!(
            "train_fraction must lie in [0, 1], got {train_fraction}"
        )));
    }
    let mut ordered: Vec<&ClipRecord> = clips.iter().collect();
    ordered.sort_by(|a, b| (&a.game, &a.clip).cmp(&(&b.game, &b.clip)));
    let total: usize = ordered.iter().map(|c| c.frames).sum();
    let target = train_fraction * total as f64;
    let mut cumulative = 0usize;
    let mut reached = false;
    let entries = ordered
        .into_iter()
        .map(|c| {
            let assignment = if reached {
                Assignment::Test
            } else {
                cumulative += c.frames;
                if cumulative as f64 >= target {
                    reached = true;
                }
                Assignment::Train
            };
            SplitEntry {
                game: c.game.clone(),
                clip: c.clip.clone(),
                frames: c.frames,
                assignment,
            }
        })
        .collect();
    Ok(finish_split(entries))
}

// ---------------------------------------------------------------------------
// FPS measurement

/// Whole-clip inference throughput. `model_seconds` covers only network
/// forward passes; `total_seconds` additionally includes block assembly,
/// heatmap decoding and any I/O seconds supplied by the caller, so
/// model-only FPS is always >= end-to-end FPS.
#[derive(Debug, Clone, Copy)]
pub struct FpsReport {
    pub frame_count: usize,
    pub model_seconds: f64,
    pub total_seconds: f64,
}

impl FpsReport {
    pub fn model_fps(&self) -> f64 {
        self.frame_count as f64 / self.model_seconds
    }

    pub fn end_to_end_fps(&self) -> f64 {
        self.frame_count as f64 / self.total_seconds
    }
}

/// How stride-1 block overlap is resolved into one heatmap per frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlapPolicy {
    /// Use the block where the frame occupies the last slot (maximal
    /// motion context), falling back to earlier slots at the clip start.
    LastSlot,
    /// Element-wise maximum over every covering block slice.
    PixelMax,
}

impl std::str::FromStr for OverlapPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last-slot" => Ok(OverlapPolicy::LastSlot),
            "pixel-max" => Ok(OverlapPolicy::PixelMax),
            other => Err(Error::InvalidConfig(format!(
                "unknown overlap policy '{other}' (expected last-slot or pixel-max)"
            ))),
        }
    }
}

/// Combine per-block heatmap stacks (block `i` starting at frame position
/// `i + 1`) into one heatmap per frame position `1..=n_frames`.
pub fn resolve_overlap(
    outputs: &[HeatmapStack],
    t_prime: usize,
    n_frames: usize,
    policy: OverlapPolicy,
) -> Vec<Array2<f64>> {
    assert_eq!(outputs.len(), n_frames - t_prime + 1, "block count");
    let mut per_frame = Vec::with_capacity(n_frames);
    for f in 1..=n_frames {
        match policy {
            OverlapPolicy::LastSlot => {
                let block = f.saturating_sub(t_prime).min(outputs.len() - 1);
                let slot = f - 1 - block;
                per_frame.push(outputs[block].map(slot).clone());
            }
            OverlapPolicy::PixelMax => {
                let lo = f.saturating_sub(t_prime).min(outputs.len() - 1);
                let hi = (f - 1).min(outputs.len() - 1);
                let mut acc = outputs[lo].map(f - 1 - lo).clone();
                for block in lo + 1..=hi {
                    let slot = f - 1 - block;
                    acc.zip_mut_with(outputs[block].map(slot), |a, &b| *a = a.max(b));
                }
                per_frame.push(acc);
            }
        }
    }
    per_frame
}

/// Run a model function over every block of a sequence, timing model-only
/// and end-to-end sections separately (one warm-up call is discarded), and
/// decode one detection per frame.
pub fn measure_fps<F>(
    seq: &FrameSequence,
    t_prime: usize,
    threshold: f64,
    policy: OverlapPolicy,
    extra_io_seconds: f64,
    mut model: F,
) -> Result<(FpsReport, Vec<Detection>)>
where
    F: FnMut(&TemporalBlock) -> Result<HeatmapStack>,
{
    let t0 = Instant::now();
    let blocks = make_blocks(seq, t_prime)?;
    let mut total_seconds = t0.elapsed().as_secs_f64();

    // warm-up, not timed
    model(&blocks[0])?;

    let mut model_seconds = 0.0;
    let mut outputs = Vec::with_capacity(blocks.len());
    for block in &blocks {
        let t = Instant::now();
        let out = model(block)?;
        model_seconds += t.elapsed().as_secs_f64();
        outputs.push(out);
    }
    total_seconds += model_seconds;

    let t1 = Instant::now();
    let per_frame = resolve_overlap(&outputs, t_prime, seq.len(), policy);
    let detections: Vec<Detection> = per_frame
        .iter()
        .zip(seq.frame_indices())
        .map(|(map, &idx)| decode_heatmap(map, threshold, idx))
        .collect();
    total_seconds += t1.elapsed().as_secs_f64() + extra_io_seconds;

    Ok((
        FpsReport {
            frame_count: seq.len(),
            model_seconds,
            total_seconds,
        },
        detections,
    ))
}

// ---------------------------------------------------------------------------
// weight similarity diagnostic

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSimilarity {
    pub name: String,
    pub cosine: f64,
}

/// Cosine similarity of the flattened parameter vectors of every trainable
/// block (running statistics excluded). Both models must expose identical
/// block names and shapes.
pub fn weights_cosine_similarity(
    a: &ModelWeights,
    b: &ModelWeights,
) -> Result<Vec<LayerSimilarity>> {
    let mut out = Vec::new();
    for block_a in a.blocks() {
        if !ModelWeights::is_trainable(&block_a.name) {
            continue;
        }
        let block_b = b.block(&block_a.name).ok_or_else(|| {
            Error::ShapeMismatch(format!("block {} missing from second model", block_a.name))
        })?;
        if block_a.dims != block_b.dims {
            return Err(Error::ShapeMismatch(format!(
                "block {}: shape {:?} vs {:?}",
                block_a.name, block_a.dims, block_b.dims
            )));
        }
        let dot: f64 = block_a
            .data
            .iter()
            .zip(&block_b.data)
            .map(|(x, y)| x * y)
            .sum();
        let na: f64 = block_a.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = block_b.data.iter().map(|x| x * x).sum::<f64>().sqrt();
        let cosine = if block_a.data == block_b.data {
            // exact self-similarity, unclouded by sqrt rounding
            1.0
        } else if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        };
        out.push(LayerSimilarity {
            name: block_a.name.clone(),
            cosine,
        });
    }
    for block_b in b.blocks() {
        if ModelWeights::is_trainable(&block_b.name) && a.block(&block_b.name).is_none() {
            return Err(Error::ShapeMismatch(format!(
                "block {} missing from first model",
                block_b.name
            )));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// CSV interfaces

/// `labels.csv` content: header `frame,visibility,x,y`, coordinates empty
/// for invisible frames, LF line endings.
pub fn labels_to_csv(labels: &[BallLabel]) -> String {
    let mut out = String::from("frame,visibility,x,y\n");
    for l in labels {
        if l.is_visible() {
            out.push_str(&format!("{},1,{:.2},{:.2}\n", l.frame_index, l.x, l.y));
        } else {
            out.push_str(&format!("{},0,,\n", l.frame_index));
        }
    }
    out
}

pub fn write_labels_csv(path: &Path, labels: &[BallLabel]) -> Result<String> {
    let out = labels_to_csv(labels);
    std::fs::write(path, &out).map_err(|e| Error::io(path, e))?;
    Ok(out)
}

pub fn read_labels_csv(path: &Path) -> Result<Vec<BallLabel>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "frame,visibility,x,y" {
                return Err(Error::CsvParse {
                    file: path.to_path_buf(),
                    line: 1,
                    message: format!("expected header 'frame,visibility,x,y', got '{line}'"),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |message: String| Error::CsvParse {
            file: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if fields.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", fields.len())));
        }
        let frame: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("frame: {e}")))?;
        let visibility: u8 = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("visibility: {e}")))?;
        if visibility == 1 {
            let x: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("x: {e}")))?;
            let y: f64 = fields[3]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("y: {e}")))?;
            labels.push(BallLabel::visible(frame, x, y));
        } else {
            labels.push(BallLabel::hidden(frame));
        }
    }
    Ok(labels)
}

/// `predictions.csv` content: header `frame,visibility,x,y,confidence`.
pub fn predictions_to_csv(detections: &[Detection]) -> String {
    let mut out = String::from("frame,visibility,x,y,confidence\n");
    for d in detections {
        match &d.hit {
            Some(hit) => out.push_str(&format!(
                "{},1,{:.2},{:.2},{:.4}\n",
                d.frame_index, hit.x, hit.y, hit.confidence
            )),
            None => out.push_str(&format!("{},0,,,\n", d.frame_index)),
        }
    }
    out
}

pub fn write_predictions_csv(path: &Path, detections: &[Detection]) -> Result<String> {
    let out = predictions_to_csv(detections);
    std::fs::write(path, &out).map_err(|e| Error::io(path, e))?;
    Ok(out)
}

pub fn read_predictions_csv(path: &Path) -> Result<Vec<Detection>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut detections = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if lineno == 0 {
            if line.trim() != "frame,visibility,x,y,confidence" {
                return Err(Error::CsvParse {
                    file: path.to_path_buf(),
                    line: 1,
                    message: format!(
                        "expected header 'frame,visibility,x,y,confidence', got '{line}'"
                    ),
                });
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let parse_err = |message: String| Error::CsvParse {
            file: path.to_path_buf(),
            line: lineno + 1,
            message,
        };
        if fields.len() != 5 {
            return Err(parse_err(format!("expected 5 fields, got {}", fields.len())));
        }
        let frame: u64 = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("frame: {e}")))?;
        let visibility: u8 = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(format!("visibility: {e}")))?;
        if visibility == 1 {
            let x: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("x: {e}")))?;
            let y: f64 = fields[3]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("y: {e}")))?;
            let confidence: f64 = fields[4]
                .trim()
                .parse()
                .map_err(|e| parse_err(format!("confidence: {e}")))?;
            detections.push(Detection {
                frame_index: frame,
                hit: Some(Hit { x, y, confidence }),
            });
        } else {
            detections.push(Detection::absent(frame));
        }
    }
    Ok(detections)
}

/// Write a split manifest: header `game,clip,frames,assignment`.
pub fn write_split_csv(path: &Path, manifest: &SplitManifest) -> Result<()> {
    let mut out = String::from("game,clip,frames,assignment\n");
    for e in &manifest.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            e.game, e.clip, e.frames, e.assignment
        ));
    }
    std::fs::write(path, &out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthgen::render_gt_heatmap;

    #[test]
    fn decode_all_low_values_is_absent() {
        let map = Array2::from_elem((20, 20), 0.01);
        let det = decode_heatmap(&map, 0.5, 1);
        assert!(!det.present());
    }

    #[test]
    fn decode_below_threshold_peak_is_absent() {
        let mut map = Array2::from_elem((20, 20), 0.01);
        map[(5, 5)] = 0.4;
        assert!(!decode_heatmap(&map, 0.5, 1).present());
    }

    #[test]
    fn decode_gaussian_recovers_center() {
        // render-decode round trip
        let label = BallLabel::visible(7, 50.0, 30.0);
        let map = render_gt_heatmap(&label, 80, 60, 2.5).unwrap();
        let det = decode_heatmap(&map, 0.5, 7);
        let hit = det.hit.expect("peak above threshold");
        assert!((hit.x - 50.0).abs() <= 1.0);
        assert!((hit.y - 30.0).abs() <= 1.0);
        assert!((hit.confidence - 1.0).abs() < 1e-12);
    }

    #[test]
    fn classify_within_tolerance_is_tp() {
        let label = BallLabel::visible(1, 100.0, 100.0);
        let det = Detection {
            frame_index: 1,
            hit: Some(Hit {
                x: 103.0,
                y: 100.0,
                confidence: 0.9,
            }),
        };
        assert_eq!(classify_frame(&det, &label, 4.0).unwrap(), Outcome::Tp);
    }

    #[test]
    fn classify_beyond_tolerance_is_fp1() {
        let label = BallLabel::visible(1, 100.0, 100.0);
        let det = Detection {
            frame_index: 1,
            hit: Some(Hit {
                x: 105.0,
                y: 100.0,
                confidence: 0.9,
            }),
        };
        assert_eq!(classify_frame(&det, &label, 4.0).unwrap(), Outcome::Fp1);
    }

    #[test]
    fn classify_joint_absence_is_tn() {
        let label = BallLabel::hidden(1);
        let det = Detection::absent(1);
        assert_eq!(classify_frame(&det, &label, 4.0).unwrap(), Outcome::Tn);
    }

    #[test]
    fn classify_spurious_detection_is_fp2_and_miss_is_fn() {
        let det = Detection {
            frame_index: 1,
            hit: Some(Hit {
                x: 1.0,
                y: 1.0,
                confidence: 0.8,
            }),
        };
        assert_eq!(
            classify_frame(&det, &BallLabel::hidden(1), 4.0).unwrap(),
            Outcome::Fp2
        );
        assert_eq!(
            classify_frame(&Detection::absent(1), &BallLabel::visible(1, 5.0, 5.0), 4.0).unwrap(),
            Outcome::Fn
        );
    }

    #[test]
    fn classify_frame_index_mismatch_errors() {
        let det = Detection::absent(2);
        assert!(classify_frame(&det, &BallLabel::hidden(3), 4.0).is_err());
    }

    #[test]
    fn aggregate_counts_and_total() {
        let c = aggregate(&[Outcome::Tp, Outcome::Tp, Outcome::Fn]).unwrap();
        assert_eq!((c.tp, c.fn_, c.total()), (2, 1, 3));
    }

    #[test]
    fn aggregate_order_independent() {
        let a = aggregate(&[Outcome::Tp, Outcome::Tn, Outcome::Fp1, Outcome::Fp2]).unwrap();
        let b = aggregate(&[Outcome::Fp2, Outcome::Fp1, Outcome::Tn, Outcome::Tp]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn aggregate_rejects_empty() {
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn metrics_spec_rows() {
        // tennis game-level baseline row
        let c = ConfusionCounts {
            tp: 15863,
            tn: 396,
            fp1: 142,
            fp2: 17,
            fn_: 775,
        };
        assert_eq!(c.total(), 17193);
        let m = metrics(&c);
        assert_eq!(m.row_1dp(), "94.6/99.0/95.3/97.1");
    }

    #[test]
    fn metrics_perfect_tracker() {
        let c = ConfusionCounts {
            tp: 50,
            ..Default::default()
        };
        let m = metrics(&c);
        assert_eq!(m.row_1dp(), "100.0/100.0/100.0/100.0");
    }

    #[test]
    fn metrics_undefined_denominators() {
        let c = ConfusionCounts {
            tn: 10,
            ..Default::default()
        };
        let m = metrics(&c);
        assert_eq!(m.accuracy, Some(100.0));
        assert_eq!(m.precision, None); // no detections at all
        assert_eq!(m.recall, None); // no visible balls
        assert_eq!(m.f1, None);
    }

    #[test]
    fn game_level_split_assigns_whole_games() {
        let clips = vec![
            ClipRecord { game: "game1".into(), clip: "c1".into(), frames: 100 },
            ClipRecord { game: "game1".into(), clip: "c2".into(), frames: 50 },
            ClipRecord { game: "game2".into(), clip: "c1".into(), frames: 150 },
        ];
        let m = split_game_level(&clips, &["game2"]).unwrap();
        assert_eq!(m.train_frames(), 150);
        assert!((m.train_fraction - 0.5).abs() < 1e-12);
        assert!(m.warnings.is_empty());
    }

    #[test]
    fn game_level_split_unknown_game_errors() {
        let clips = vec![ClipRecord {
            game: "game1".into(),
            clip: "c1".into(),
            frames: 10,
        }];
        assert!(matches!(
            split_game_level(&clips, &["game9"]),
            Err(Error::UnknownGame(_))
        ));
    }

    #[test]
    fn game_level_split_empty_test_warns() {
        let clips = vec![ClipRecord {
            game: "game1".into(),
            clip: "c1".into(),
            frames: 10,
        }];
        let m = split_game_level(&clips, &["game1"]).unwrap();
        assert!(m.warnings.iter().any(|w| w.contains("test split is empty")));
    }

    #[test]
    fn clip_level_split_matches_greedy_example() {
        // hand-executed: [50, 30, 20] at fraction 0.7 -> train {50, 30}, test {20}
        let clips = vec![
            ClipRecord { game: "g".into(), clip: "c1".into(), frames: 50 },
            ClipRecord { game: "g".into(), clip: "c2".into(), frames: 30 },
            ClipRecord { game: "g".into(), clip: "c3".into(), frames: 20 },
        ];
        let m = split_clip_level(&clips, 0.7).unwrap();
        let assignments: Vec<Assignment> = m.entries.iter().map(|e| e.assignment).collect();
        assert_eq!(
            assignments,
            vec![Assignment::Train, Assignment::Train, Assignment::Test]
        );
        assert!((m.train_fraction - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clip_level_single_clip_warns() {
        let clips = vec![ClipRecord {
            game: "g".into(),
            clip: "c1".into(),
            frames: 10,
        }];
        let m = split_clip_level(&clips, 0.7).unwrap();
        assert_eq!(m.entries[0].assignment, Assignment::Train);
        assert!(!m.warnings.is_empty());
    }

    #[test]
    fn clip_level_fraction_one_takes_everything() {
        let clips = vec![
            ClipRecord { game: "g".into(), clip: "c1".into(), frames: 10 },
            ClipRecord { game: "g".into(), clip: "c2".into(), frames: 10 },
        ];
        let m = split_clip_level(&clips, 1.0).unwrap();
        assert!(m.entries.iter().all(|e| e.assignment == Assignment::Train));
    }

    #[test]
    fn splits_partition_clips() {
        let clips: Vec<ClipRecord> = (0..10)
            .map(|i| ClipRecord {
                game: format!("game{}", i % 3 + 1),
                clip: format!("clip{i}"),
                frames: 10 + i,
            })
            .collect();
        let m = split_clip_level(&clips, 0.6).unwrap();
        assert_eq!(m.entries.len(), clips.len());
        for c in &clips {
            assert_eq!(
                m.entries
                    .iter()
                    .filter(|e| e.game == c.game && e.clip == c.clip)
                    .count(),
                1
            );
        }
    }

    #[test]
    fn labels_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.csv");
        let labels = vec![
            BallLabel::visible(1, 10.25, 20.5),
            BallLabel::hidden(2),
            BallLabel::visible(3, 0.0, 0.0),
        ];
        write_labels_csv(&path, &labels).unwrap();
        let back = read_labels_csv(&path).unwrap();
        assert_eq!(back.len(), 3);
        assert_eq!(back[0].x, 10.25);
        assert_eq!(back[1].visibility, 0);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("frame,visibility,x,y\n"));
        assert!(text.contains("2,0,,\n"));
    }

    #[test]
    fn predictions_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("pred.csv");
        let dets = vec![
            Detection {
                frame_index: 1,
                hit: Some(Hit { x: 5.0, y: 6.0, confidence: 0.9321 }),
            },
            Detection::absent(2),
        ];
        write_predictions_csv(&path, &dets).unwrap();
        let back = read_predictions_csv(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert!(back[0].present());
        assert!(!back[1].present());
    }

    #[test]
    fn evaluate_reports_missing_frames() {
        let preds = vec![Detection::absent(1)];
        let labels = vec![BallLabel::hidden(1), BallLabel::hidden(2)];
        let err = evaluate(&preds, &labels, 4.0).unwrap_err();
        assert!(err.to_string().contains("missing predictions: [2]"));
    }

    #[test]
    fn cosine_similarity_extremes() {
        use crate::net::{NetworkConfig, init_weights};
        let cfg = NetworkConfig {
            input_width: 16,
            input_height: 16,
            base_channels: 2,
            ..NetworkConfig::default()
        };
        let a = init_weights(&cfg, 1).unwrap();
        let sims = weights_cosine_similarity(&a, &a).unwrap();
        assert!(!sims.is_empty());
        assert!(sims.iter().all(|s| (s.cosine - 1.0).abs() < 1e-12));
        assert!(sims.iter().all(|s| !s.name.contains("running_")));

        let mut neg = a.clone();
        for name in neg
            .blocks()
            .iter()
            .map(|b| b.name.clone())
            .collect::<Vec<_>>()
        {
            if ModelWeights::is_trainable(&name) {
                for v in &mut neg.block_mut(&name).unwrap().data {
                    *v = -*v;
                }
            }
        }
        let sims = weights_cosine_similarity(&a, &neg).unwrap();
        // zero-valued blocks (biases, beta) stay at cosine 1 by convention
        for s in &sims {
            let data = &a.block(&s.name).unwrap().data;
            if data.iter().any(|&v| v != 0.0) {
                assert!((s.cosine + 1.0).abs() < 1e-12, "{}: {}", s.name, s.cosine);
            }
        }
    }

    #[test]
    fn cosine_similarity_random_high_dim_near_zero() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(21);
        let dim = 10_000;
        let mut make = |rng: &mut rand_chacha::ChaCha20Rng| {
            (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>()
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((dot / (na * nb)).abs() < 0.1);
    }

    #[test]
    fn resolve_overlap_last_slot_coverage() {
        use crate::net::HeatmapStack;
        // 5 frames, T'=3 -> 3 blocks; mark each block slice with a distinct value
        let t_prime = 3;
        let outputs: Vec<HeatmapStack> = (0..3)
            .map(|i| {
                HeatmapStack::from_maps(
                    (0..t_prime)
                        .map(|s| Array2::from_elem((2, 2), (i * 10 + s) as f64 / 100.0))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        let frames = resolve_overlap(&outputs, t_prime, 5, OverlapPolicy::LastSlot);
        let tag = |m: &Array2<f64>| (m[(0, 0)] * 100.0).round() as i64;
        // frame 1, 2: fall back to block 0 slots 0, 1; frames 3..5: last slot of blocks 0..2
        assert_eq!(tag(&frames[0]), 0);
        assert_eq!(tag(&frames[1]), 1);
        assert_eq!(tag(&frames[2]), 2);
        assert_eq!(tag(&frames[3]), 12);
        assert_eq!(tag(&frames[4]), 22);
    }

    #[test]
    fn round1_is_half_up() {
        assert_eq!(round1(94.55), 94.6);
        assert_eq!(round1(94.54), 94.5);
        assert_eq!(round1(99.95), 100.0);
    }
}
