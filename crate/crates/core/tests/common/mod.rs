//! Shared helpers for integration tests.
#![allow(dead_code)]

use motrack_core::frames::{Frame, TemporalBlock};
use motrack_core::net::{HeatmapStack, NetworkConfig};
use motrack_core::synthgen::{BallLabel, render_gt_heatmap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// A block of seeded random RGB frames.
pub fn random_block(width: usize, height: usize, t_prime: usize, seed: u64) -> TemporalBlock {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let frames: Vec<Frame> = (0..t_prime)
        .map(|_| {
            let mut values = vec![0f32; 3 * height * width];
            for v in &mut values {
                *v = rng.gen_range(0.0..1.0);
            }
            Frame::from_fn(3, height, width, |c, y, x| {
                values[(c * height + y) * width + x]
            })
            .unwrap()
        })
        .collect();
    TemporalBlock::from_frames(frames, 1).unwrap()
}

/// A block whose frames are all the same (zero motion).
pub fn static_block(width: usize, height: usize, t_prime: usize, seed: u64) -> TemporalBlock {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut values = vec![0f32; 3 * height * width];
    for v in &mut values {
        *v = rng.gen_range(0.0..1.0);
    }
    let frame =
        Frame::from_fn(3, height, width, |c, y, x| values[(c * height + y) * width + x]).unwrap();
    TemporalBlock::from_frames(vec![frame; t_prime], 1).unwrap()
}

/// Ground-truth stack with one Gaussian blob per slice at seeded positions.
pub fn random_gt_stack(
    width: usize,
    height: usize,
    t_prime: usize,
    sigma: f64,
    seed: u64,
) -> HeatmapStack {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let maps = (0..t_prime)
        .map(|t| {
            if rng.gen_bool(0.2) {
                render_gt_heatmap(&BallLabel::hidden(t as u64 + 1), width, height, sigma).unwrap()
            } else {
                let x = rng.gen_range(1.0..(width - 2) as f64);
                let y = rng.gen_range(1.0..(height - 2) as f64);
                render_gt_heatmap(&BallLabel::visible(t as u64 + 1, x, y), width, height, sigma)
                    .unwrap()
            }
        })
        .collect();
    HeatmapStack::from_maps(maps).unwrap()
}

/// Small configuration for fast tests.
pub fn tiny_cfg() -> NetworkConfig {
    NetworkConfig {
        t_prime: 2,
        input_width: 16,
        input_height: 16,
        base_channels: 2,
        levels: 3,
        skip_connections: true,
        fusion_mode: motrack_core::net::FusionMode::V1,
    }
}
