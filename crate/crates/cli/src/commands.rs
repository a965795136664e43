//! The seven pipeline commands: synth, train, track, eval, visualize,
//! bench, simcheck.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use motrack_core::eval::{
    ConfusionCounts, Detection, FpsReport, LayerSimilarity, MetricsReport, decode_heatmap,
    evaluate, labels_to_csv, measure_fps, metrics, predictions_to_csv, read_labels_csv,
    read_predictions_csv, resolve_overlap, round1, weights_cosine_similarity,
};
use motrack_core::frames::{Frame, FrameSequence, load_sequence, make_blocks, save_frame_png};
use motrack_core::motion_prompt::{DiffStack, PNParams, attention};
use motrack_core::net::{HeatmapStack, ModelWeights, Predictor, train};
use motrack_core::synthgen::{BallLabel, generate_sequence, render_gt_heatmap};
use ndarray::Array2;

use crate::{CliError, RunConfig, atomic_write};

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))
}

/// Every command drops the fully resolved configuration next to its
/// outputs so a run can be reproduced from the echo alone.
fn echo_config(out_dir: &Path, cfg: &RunConfig) -> Result<(), CliError> {
    atomic_write(&out_dir.join("config_resolved.txt"), cfg.render().as_bytes())
}

fn load_model(path: &Path) -> Result<ModelWeights, CliError> {
    Ok(ModelWeights::load(path)?)
}

/// Generate a synthetic clip: numbered PNG frames plus `labels.csv`.
pub fn cmd_synth(cfg: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let (seq, labels) = generate_sequence(&cfg.synth_config())?;
    for (frame, &idx) in seq.frames().zip(seq.frame_indices()) {
        let path = out_dir.join(format!("{idx:06}.png"));
        // tmp name keeps the .png extension so the encoder recognizes it
        let tmp = out_dir.join(format!("tmp-{idx:06}.png"));
        save_frame_png(frame, &tmp)?;
        std::fs::rename(&tmp, &path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    }
    atomic_write(&out_dir.join("labels.csv"), labels_to_csv(&labels).as_bytes())?;
    echo_config(out_dir, cfg)?;
    let visible = labels.iter().filter(|l| l.is_visible()).count();
    println!(
        "wrote {} frames ({}x{}) to {}; labels.csv: {} visible, {} occluded",
        seq.len(),
        cfg.width,
        cfg.height,
        out_dir.display(),
        visible,
        labels.len() - visible
    );
    Ok(())
}

fn scaled_label(l: &BallLabel, sx: f64, sy: f64) -> BallLabel {
    if l.is_visible() {
        BallLabel::visible(l.frame_index, l.x * sx, l.y * sy)
    } else {
        *l
    }
}

/// Load a frame directory plus labels and assemble the training dataset at
/// network resolution, one (block, ground-truth stack) pair per stride.
fn build_dataset(
    cfg: &RunConfig,
    data_dir: &Path,
) -> Result<Vec<(motrack_core::frames::TemporalBlock, HeatmapStack)>, CliError> {
    let seq = load_sequence(data_dir)?;
    let labels = read_labels_csv(&data_dir.join("labels.csv"))?;
    let label_map: BTreeMap<u64, &BallLabel> = labels.iter().map(|l| (l.frame_index, l)).collect();
    for idx in seq.frame_indices() {
        if !label_map.contains_key(idx) {
            return Err(CliError::Data(format!("frame {idx} has no label row")));
        }
    }
    let net_cfg = cfg.network_config();
    let sx = net_cfg.input_width as f64 / seq.width() as f64;
    let sy = net_cfg.input_height as f64 / seq.height() as f64;
    let resized = seq.resized(net_cfg.input_width, net_cfg.input_height);
    let blocks = make_blocks(&resized, net_cfg.t_prime)?;
    let stride = cfg.effective_train_stride();
    let mut dataset = Vec::new();
    for block in blocks.into_iter().step_by(stride) {
        let mut maps = Vec::with_capacity(net_cfg.t_prime);
        for t in 0..net_cfg.t_prime {
            let pos = block.start_index() + t;
            let frame_idx = resized.frame_indices()[pos - 1];
            let label = scaled_label(label_map[&frame_idx], sx, sy);
            maps.push(render_gt_heatmap(
                &label,
                net_cfg.input_width,
                net_cfg.input_height,
                cfg.sigma_g,
            )?);
        }
        dataset.push((block, HeatmapStack::from_maps(maps)?));
    }
    Ok(dataset)
}

/// Train a model (optionally continuing from `init`) and write the weights
/// plus a per-epoch `loss_log.csv`.
pub fn cmd_train(
    cfg: &RunConfig,
    data_dir: &Path,
    out_model: &Path,
    init: Option<&Path>,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    let dataset = build_dataset(cfg, data_dir)?;
    let init_weights = init.map(load_model).transpose()?;
    let report = train(
        &dataset,
        &cfg.network_config(),
        &cfg.train_options(),
        init_weights.as_ref(),
    )?;
    let out_dir = out_dir
        .map(Path::to_path_buf)
        .or_else(|| out_model.parent().map(Path::to_path_buf))
        .unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out_dir)?;
    atomic_write(out_model, &report.weights.to_bytes())?;
    let mut log = String::from("epoch,loss\n");
    for (i, loss) in report.epoch_losses.iter().enumerate() {
        log.push_str(&format!("{},{}\n", i + 1, loss));
    }
    atomic_write(&out_dir.join("loss_log.csv"), log.as_bytes())?;
    echo_config(&out_dir, cfg)?;
    println!(
        "trained {} epochs on {} blocks; loss {} -> {}; model written to {}",
        report.epoch_losses.len(),
        dataset.len(),
        report.epoch_losses.first().unwrap(),
        report.epoch_losses.last().unwrap(),
        out_model.display()
    );
    Ok(())
}

struct TrackRun {
    detections: Vec<Detection>,
    native_last_frame: Frame,
    per_frame_maps: Vec<Array2<f64>>,
}

/// Shared inference pipeline: load frames, resize to the model resolution,
/// run stride-1 blocks, resolve overlap, decode, and rescale coordinates
/// back to the native frame resolution.
fn track_pipeline(
    cfg: &RunConfig,
    model: &ModelWeights,
    frames_dir: &Path,
    threshold: f64,
    allow_resize: bool,
) -> Result<TrackRun, CliError> {
    let seq = load_sequence(frames_dir)?;
    let net_cfg = model.config();
    let matches_res =
        seq.width() == net_cfg.input_width && seq.height() == net_cfg.input_height;
    if !matches_res && !allow_resize {
        return Err(CliError::Data(format!(
            "frames are {}x{} but the model expects {}x{}; pass --resize to scale them",
            seq.width(),
            seq.height(),
            net_cfg.input_width,
            net_cfg.input_height
        )));
    }
    let work = seq.resized(net_cfg.input_width, net_cfg.input_height);
    let predictor = Predictor::from_weights(model)?;
    let blocks = make_blocks(&work, net_cfg.t_prime)?;
    let mut outputs: Vec<HeatmapStack> = Vec::with_capacity(blocks.len());
    for chunk in blocks.chunks(8) {
        let refs: Vec<&motrack_core::frames::TemporalBlock> = chunk.iter().collect();
        outputs.extend(predictor.predict_batch(&refs)?);
    }
    let per_frame_maps = resolve_overlap(&outputs, net_cfg.t_prime, work.len(), cfg.overlap_policy);
    let sx = seq.width() as f64 / net_cfg.input_width as f64;
    let sy = seq.height() as f64 / net_cfg.input_height as f64;
    let detections: Vec<Detection> = per_frame_maps
        .iter()
        .zip(seq.frame_indices())
        .map(|(map, &idx)| {
            let mut det = decode_heatmap(map, threshold, idx);
            if let Some(hit) = det.hit.as_mut() {
                hit.x *= sx;
                hit.y *= sy;
            }
            det
        })
        .collect();
    Ok(TrackRun {
        detections,
        native_last_frame: seq.frame(seq.len() - 1).clone(),
        per_frame_maps,
    })
}

/// Run inference over a clip and write `predictions.csv`.
pub fn cmd_track(
    cfg: &RunConfig,
    model_path: &Path,
    frames_dir: &Path,
    out_csv: &Path,
    threshold: Option<f64>,
    allow_resize: bool,
) -> Result<(), CliError> {
    let model = load_model(model_path)?;
    let threshold = threshold.unwrap_or(cfg.threshold);
    let run = track_pipeline(cfg, &model, frames_dir, threshold, allow_resize)?;
    atomic_write(out_csv, predictions_to_csv(&run.detections).as_bytes())?;
    if let Some(dir) = out_csv.parent().filter(|p| !p.as_os_str().is_empty()) {
        echo_config(dir, cfg)?;
    }
    let present = run.detections.iter().filter(|d| d.present()).count();
    println!(
        "tracked {} frames: {} detections, {} empty; predictions written to {}",
        run.detections.len(),
        present,
        run.detections.len() - present,
        out_csv.display()
    );
    Ok(())
}

/// Compare predictions against labels and print the confusion row plus
/// metrics; optionally writes `metrics.json` into `out_dir`.
pub fn cmd_eval(
    predictions_csv: &Path,
    labels_csv: &Path,
    tol: f64,
    out_dir: Option<&Path>,
) -> Result<(ConfusionCounts, MetricsReport), CliError> {
    let preds = read_predictions_csv(predictions_csv)?;
    let labels = read_labels_csv(labels_csv)?;
    let counts = evaluate(&preds, &labels, tol)?;
    let report = metrics(&counts);
    println!(
        "Total {}  TP {}  TN {}  FP1 {}  FP2 {}  FN {}",
        counts.total(),
        counts.tp,
        counts.tn,
        counts.fp1,
        counts.fp2,
        counts.fn_
    );
    println!("Acc/Prec/Rec/F1: {}", report.row_1dp());
    if let Some(dir) = out_dir {
        ensure_dir(dir)?;
        let json = serde_json::json!({
            "total": counts.total(),
            "tp": counts.tp,
            "tn": counts.tn,
            "fp1": counts.fp1,
            "fp2": counts.fp2,
            "fn": counts.fn_,
            "tolerance_px": tol,
            "accuracy": report.accuracy,
            "precision": report.precision,
            "recall": report.recall,
            "f1": report.f1,
            "accuracy_1dp": report.accuracy.map(round1),
            "precision_1dp": report.precision.map(round1),
            "recall_1dp": report.recall.map(round1),
            "f1_1dp": report.f1.map(round1),
        });
        atomic_write(
            &dir.join("metrics.json"),
            serde_json::to_string_pretty(&json)
                .expect("serializable report")
                .as_bytes(),
        )?;
    }
    Ok((counts, report))
}

/// Attention maps over all consecutive frame pairs at native resolution.
fn sequence_attention(seq: &FrameSequence, params: &PNParams) -> Result<Vec<Array2<f64>>, CliError> {
    let (h, w) = (seq.height(), seq.width());
    let mut grays = Vec::with_capacity(seq.len());
    for f in seq.frames() {
        grays.push(if f.channels() == 1 {
            f.clone()
        } else {
            f.to_gray()?
        });
    }
    let mut maps = Vec::with_capacity(seq.len() - 1);
    for pair in grays.windows(2) {
        let signed = Array2::from_shape_fn((h, w), |(y, x)| {
            pair[1].get(0, y, x) as f64 - pair[0].get(0, y, x) as f64
        });
        let diffs = DiffStack::from_signed(vec![signed])?;
        maps.push(attention(&diffs, params).map(0).clone());
    }
    Ok(maps)
}

fn gray_frame_from_map(map: &Array2<f64>) -> Frame {
    Frame::from_fn(1, map.dim().0, map.dim().1, |_, y, x| {
        map[(y, x)].clamp(0.0, 1.0) as f32
    })
    .expect("map values in range")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VisualizeMode {
    Attention,
    Prompted,
    Heatmap,
    Trajectory,
}

impl std::str::FromStr for VisualizeMode {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, CliError> {
        match s {
            "attention" => Ok(VisualizeMode::Attention),
            "prompted" => Ok(VisualizeMode::Prompted),
            "heatmap" => Ok(VisualizeMode::Heatmap),
            "trajectory" => Ok(VisualizeMode::Trajectory),
            other => Err(CliError::Usage(format!(
                "unknown visualize mode '{other}' (expected attention, prompted, heatmap or trajectory)"
            ))),
        }
    }
}

/// Render overlays: PN attention maps, motion-prompted frames, heatmap
/// overlays (model required), or the decoded trajectory drawn over the
/// last frame.
pub fn cmd_visualize(
    cfg: &RunConfig,
    frames_dir: &Path,
    mode: VisualizeMode,
    model_path: Option<&Path>,
    out_dir: &Path,
) -> Result<(), CliError> {
    ensure_dir(out_dir)?;
    let model = model_path.map(load_model).transpose()?;
    let seq = load_sequence(frames_dir)?;
    let pn = model
        .as_ref()
        .and_then(|m| m.pn_params().ok().flatten())
        .unwrap_or_default();

    match mode {
        VisualizeMode::Attention | VisualizeMode::Prompted => {
            let maps = sequence_attention(&seq, &pn)?;
            for (i, map) in maps.iter().enumerate() {
                let idx = seq.frame_indices()[i + 1];
                match mode {
                    VisualizeMode::Attention => {
                        let path = out_dir.join(format!("attention_{idx:06}.png"));
                        save_frame_png(&gray_frame_from_map(map), &path)?;
                    }
                    _ => {
                        let frame = seq.frame(i + 1);
                        let prompted = Frame::from_fn(3, seq.height(), seq.width(), |c, y, x| {
                            (frame.get(c, y, x) as f64 * map[(y, x)]) as f32
                        })?;
                        let path = out_dir.join(format!("prompted_{idx:06}.png"));
                        save_frame_png(&prompted, &path)?;
                    }
                }
            }
            println!("wrote {} {} overlays to {}", maps.len(),
                if mode == VisualizeMode::Attention { "attention" } else { "prompted" },
                out_dir.display());
        }
        VisualizeMode::Heatmap => {
            let Some(model) = model.as_ref() else {
                return Err(CliError::Usage(
                    "heatmap mode requires --model".to_string(),
                ));
            };
            let run = track_pipeline(cfg, model, frames_dir, cfg.threshold, true)?;
            let net_cfg = model.config();
            let work = seq.resized(net_cfg.input_width, net_cfg.input_height);
            for (i, map) in run.per_frame_maps.iter().enumerate() {
                let frame = work.frame(i);
                let overlay = Frame::from_fn(3, map.dim().0, map.dim().1, |c, y, x| {
                    let v = frame.get(c, y, x) as f64;
                    let h = map[(y, x)];
                    let out = if c == 0 { v + h * (1.0 - v) } else { v * (1.0 - 0.7 * h) };
                    out.clamp(0.0, 1.0) as f32
                })?;
                let idx = seq.frame_indices()[i];
                save_frame_png(&overlay, &out_dir.join(format!("heatmap_{idx:06}.png")))?;
            }
            println!(
                "wrote {} heatmap overlays to {}",
                run.per_frame_maps.len(),
                out_dir.display()
            );
        }
        VisualizeMode::Trajectory => {
            let Some(model) = model.as_ref() else {
                return Err(CliError::Usage(
                    "trajectory mode requires --model".to_string(),
                ));
            };
            let run = track_pipeline(cfg, model, frames_dir, cfg.threshold, true)?;
            let mut canvas = run.native_last_frame.data().clone();
            let (_, h, w) = canvas.dim();
            for det in run.detections.iter().filter(|d| d.present()) {
                let hit = det.hit.unwrap();
                let (cx, cy) = (hit.x.round() as i64, hit.y.round() as i64);
                for (dx, dy) in [(0i64, 0i64), (1, 0), (-1, 0), (0, 1), (0, -1)] {
                    let (x, y) = (cx + dx, cy + dy);
                    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
                        canvas[(0, y as usize, x as usize)] = 1.0;
                        canvas[(1, y as usize, x as usize)] = 0.0;
                        canvas[(2, y as usize, x as usize)] = 0.0;
                    }
                }
            }
            save_frame_png(&Frame::new(canvas)?, &out_dir.join("trajectory.png"))?;
            println!("wrote trajectory.png to {}", out_dir.display());
        }
    }
    echo_config(out_dir, cfg)?;
    Ok(())
}

/// Measure model-only and end-to-end FPS over a clip.
pub fn cmd_bench(
    cfg: &RunConfig,
    model_path: &Path,
    frames_dir: &Path,
) -> Result<FpsReport, CliError> {
    let model = load_model(model_path)?;
    let t0 = Instant::now();
    let seq = load_sequence(frames_dir)?;
    let net_cfg = model.config().clone();
    let work = seq.resized(net_cfg.input_width, net_cfg.input_height);
    let io_seconds = t0.elapsed().as_secs_f64();
    let predictor = Predictor::from_weights(&model)?;
    let (report, _) = measure_fps(
        &work,
        net_cfg.t_prime,
        cfg.threshold,
        cfg.overlap_policy,
        io_seconds,
        |block| predictor.predict(block),
    )?;
    println!(
        "{} frames: model-only {:.1} FPS, end-to-end {:.1} FPS (I/O {:.3}s)",
        report.frame_count,
        report.model_fps(),
        report.end_to_end_fps(),
        io_seconds
    );
    Ok(report)
}

/// Per-layer cosine similarity between two models' trainable parameters.
pub fn cmd_simcheck(
    model_a: &Path,
    model_b: &Path,
) -> Result<Vec<LayerSimilarity>, CliError> {
    let a = load_model(model_a)?;
    let b = load_model(model_b)?;
    let sims = weights_cosine_similarity(&a, &b)?;
    for s in &sims {
        println!("{:<24} {:+.6}", s.name, s.cosine);
    }
    Ok(sims)
}
