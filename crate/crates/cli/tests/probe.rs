//! TEMPORARY tuning probe - deleted before finalization.
#![allow(dead_code)]

use std::time::Instant;

use motrack_cli::RunConfig;
use motrack_core::eval::{OverlapPolicy, decode_heatmap, evaluate, metrics, resolve_overlap};
use motrack_core::frames::make_blocks;
use motrack_core::net::{
    FusionMode, HeatmapStack, NetworkConfig, Predictor, TrainOptions, train,
};
use motrack_core::synthgen::{BackgroundMode, BallLabel, SynthConfig, generate_sequence, render_gt_heatmap};

fn experiment_synth(seed: u64, n_frames: usize) -> SynthConfig {
    SynthConfig {
        width: 128,
        height: 72,
        n_frames,
        ball_radius: 2.0,
        speed_min: 4.0,
        speed_max: 14.0,
        contrast: 0.6,
        occlusion_prob: 0.15,
        occlusion_bursts: true,
        noise_sigma: 0.05,
        background_mode: BackgroundMode::MovingDistractor,
        seed,
    }
}

fn sigma_g_env() -> f64 {
    std::env::var("PROBE_SIGMA").map(|v| v.parse().unwrap()).unwrap_or(2.5)
}

fn build_dataset(
    cfg: &NetworkConfig,
    synth: &SynthConfig,
    stride: usize,
    sigma_g: f64,
) -> Vec<(motrack_core::frames::TemporalBlock, HeatmapStack)> {
    let (seq, labels) = generate_sequence(synth).unwrap();
    let blocks = make_blocks(&seq, cfg.t_prime).unwrap();
    blocks
        .into_iter()
        .step_by(stride)
        .map(|b| {
            let maps = (0..cfg.t_prime)
                .map(|t| {
                    let label: &BallLabel = &labels[b.start_index() - 1 + t];
                    render_gt_heatmap(label, cfg.input_width, cfg.input_height, sigma_g).unwrap()
                })
                .collect();
            let gt = HeatmapStack::from_maps(maps).unwrap();
            (b, gt)
        })
        .collect()
}

fn eval_f1(weights: &motrack_core::net::ModelWeights, synth: &SynthConfig) -> (f64, String) {
    let (seq, labels) = generate_sequence(synth).unwrap();
    let predictor = Predictor::from_weights(weights).unwrap();
    let t_prime = weights.config().t_prime;
    let blocks = make_blocks(&seq, t_prime).unwrap();
    let mut outputs = Vec::new();
    for chunk in blocks.chunks(8) {
        let refs: Vec<_> = chunk.iter().collect();
        outputs.extend(predictor.predict_batch(&refs).unwrap());
    }
    let maps = resolve_overlap(&outputs, t_prime, seq.len(), OverlapPolicy::LastSlot);
    let dets: Vec<_> = maps
        .iter()
        .zip(seq.frame_indices())
        .map(|(m, &i)| decode_heatmap(m, 0.5, i))
        .collect();
    // confidence diagnostics: distribution of per-frame peaks
    let mut peaks: Vec<f64> = maps
        .iter()
        .map(|m| m.iter().cloned().fold(0.0f64, f64::max))
        .collect();
    peaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let q = |p: f64| peaks[(p * (peaks.len() - 1) as f64) as usize];
    let counts = evaluate(&dets, &labels, 4.0).unwrap();
    let rep = metrics(&counts);
    (
        rep.f1.unwrap_or(0.0),
        format!(
            "tp {} tn {} fp1 {} fp2 {} fn {} -> {} | peaks p10 {:.3} p50 {:.3} p90 {:.3} max {:.3}",
            counts.tp, counts.tn, counts.fp1, counts.fp2, counts.fn_, rep.row_1dp(),
            q(0.1), q(0.5), q(0.9), q(1.0)
        ),
    )
}

#[test]
#[ignore]
fn probe_epoch_cost_and_direction() {
    let base: usize = std::env::var("PROBE_BASE").map(|v| v.parse().unwrap()).unwrap_or(4);
    let stride: usize = std::env::var("PROBE_STRIDE").map(|v| v.parse().unwrap()).unwrap_or(5);
    let lr: f64 = std::env::var("PROBE_LR").map(|v| v.parse().unwrap()).unwrap_or(1.0);
    let epochs: usize = std::env::var("PROBE_EPOCHS").map(|v| v.parse().unwrap()).unwrap_or(8);
    let n_train: usize = std::env::var("PROBE_FRAMES").map(|v| v.parse().unwrap()).unwrap_or(2000);
    let seed: u64 = std::env::var("PROBE_SEED").map(|v| v.parse().unwrap()).unwrap_or(11);
    let _ = RunConfig::default();

    let mut cfg = NetworkConfig {
        t_prime: 3,
        input_width: 128,
        input_height: 72,
        base_channels: base,
        levels: 3,
        skip_connections: true,
        fusion_mode: FusionMode::Off,
    };
    let train_synth = experiment_synth(seed, n_train);
    let test_synth = experiment_synth(seed + 1000, 500);
    let dataset = build_dataset(&cfg, &train_synth, stride, sigma_g_env());
    eprintln!("dataset: {} blocks", dataset.len());

    for mode in [FusionMode::Off, FusionMode::V1] {
        cfg.fusion_mode = mode;
        let decay: f64 = std::env::var("PROBE_DECAY").map(|v| v.parse().unwrap()).unwrap_or(1.0);
        let opts = TrainOptions {
            lr,
            epochs,
            batch: 8,
            seed,
            lr_decay: if decay == 1.0 { None } else { Some(decay) },
            flip_augment: false,
        };
        let t0 = Instant::now();
        let report = train(&dataset, &cfg, &opts, None).unwrap();
        let dt = t0.elapsed().as_secs_f64();
        let (f1, detail) = eval_f1(&report.weights, &test_synth);
        eprintln!(
            "mode {:?}: {:.1}s total ({:.2}s/epoch), losses {:.4} --> {:.4}, F1 {:.2}\n  {}",
            mode,
            dt,
            dt / epochs as f64,
            report.epoch_losses.first().unwrap(),
            report.epoch_losses.last().unwrap(),
            f1,
            detail
        );
        if mode == FusionMode::V1 {
            let pn = report.weights.pn_params().unwrap().unwrap();
            eprintln!("  learned pn: slope {:.3} shift {:.3}", pn.slope(), pn.shift());
        }
    }
}

#[test]
#[ignore]
fn probe_section_times() {
    use motrack_core::net::diag;
    use motrack_core::net::init_weights;
    let base: usize = std::env::var("PROBE_BASE").map(|v| v.parse().unwrap()).unwrap_or(4);
    let cfg = NetworkConfig {
        t_prime: 3,
        input_width: 128,
        input_height: 72,
        base_channels: base,
        levels: 3,
        skip_connections: true,
        fusion_mode: FusionMode::V1,
    };
    let synth = experiment_synth(11, 27);
    let dataset = build_dataset(&cfg, &synth, 3, 2.5); // 9 blocks -> one batch of 8 + 1
    let dataset: Vec<_> = dataset.into_iter().take(8).collect();
    let weights = init_weights(&cfg, 1).unwrap();
    // warm up
    let _ = diag::training_loss(&weights, &dataset).unwrap();
    let reps = 10;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = diag::training_loss(&weights, &dataset).unwrap();
    }
    let fwd = t0.elapsed().as_secs_f64() / reps as f64;
    let t0 = Instant::now();
    for _ in 0..reps {
        let _ = diag::training_grads(&weights, &dataset).unwrap();
    }
    let full = t0.elapsed().as_secs_f64() / reps as f64;
    eprintln!(
        "batch of 8 at base {base}: forward+loss {:.1} ms, full step {:.1} ms ({:.1} ms/block)",
        fwd * 1e3,
        full * 1e3,
        full * 1e3 / 8.0
    );
}
