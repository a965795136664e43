//! Deterministic synthetic fast-ball clips and ground-truth heatmap
//! rendering: a bright ball on a configurable background following a linear
//! path with border reflection, optional per-frame occlusion (with
//! contiguous bursts), Gaussian pixel noise, and an unlabeled moving
//! distractor blob.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::frames::{Frame, FrameSequence};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundMode {
    Flat,
    Gradient,
    MovingDistractor,
}

impl std::fmt::Display for BackgroundMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            BackgroundMode::Flat => "flat",
            BackgroundMode::Gradient => "gradient",
            BackgroundMode::MovingDistractor => "moving-distractor",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for BackgroundMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(BackgroundMode::Flat),
            "gradient" => Ok(BackgroundMode::Gradient),
            "moving-distractor" => Ok(BackgroundMode::MovingDistractor),
            other => Err(Error::InvalidConfig(format!(
                "unknown background_mode '{other}' (expected flat, gradient or moving-distractor)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub ball_radius: f64,
    /// Ball speed in pixels per frame, drawn once per clip.
    pub speed_min: f64,
    pub speed_max: f64,
    /// Ball-vs-background intensity gap in [0, 1].
    pub contrast: f64,
    /// Per-frame probability that the ball is hidden.
    pub occlusion_prob: f64,
    /// When set, each occlusion starts a contiguous burst with geometric
    /// length (mean 3 frames).
    pub occlusion_bursts: bool,
    /// Per-pixel Gaussian noise standard deviation.
    pub noise_sigma: f64,
    pub background_mode: BackgroundMode,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            width: 128,
            height: 72,
            n_frames: 120,
            ball_radius: 2.0,
            speed_min: 4.0,
            speed_max: 14.0,
            contrast: 0.6,
            occlusion_prob: 0.0,
            occlusion_bursts: true,
            noise_sigma: 0.0,
            background_mode: BackgroundMode::Flat,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.n_frames == 0 {
            return Err(Error::InvalidConfig(
                "width, height and n_frames must be positive".into(),
            ));
        }
        if self.ball_radius < 1.0 {
            return Err(Error::InvalidConfig("ball_radius must be >= 1".into()));
        }
        if !(self.speed_min > 0.0 && self.speed_max >= self.speed_min) {
            return Err(Error::InvalidConfig("speed range must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.occlusion_prob) || !(0.0..=1.0).contains(&self.contrast) {
            return Err(Error::InvalidConfig(
                "contrast and occlusion_prob must lie in [0, 1]".into(),
            ));
        }
        if self.noise_sigma < 0.0 {
            return Err(Error::InvalidConfig("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

/// Per-frame ball annotation. Coordinates are valid only when the ball is
/// visible.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BallLabel {
    pub frame_index: u64,
    pub visibility: u8,
    pub x: f64,
    pub y: f64,
}

impl BallLabel {
    pub fn visible(frame_index: u64, x: f64, y: f64) -> BallLabel {
        BallLabel {
            frame_index,
            visibility: 1,
            x,
            y,
        }
    }

    pub fn hidden(frame_index: u64) -> BallLabel {
        BallLabel {
            frame_index,
            visibility: 0,
            x: 0.0,
            y: 0.0,
        }
    }

    pub fn is_visible(&self) -> bool {
        self.visibility == 1
    }
}

struct Mover {
    x: f64,
    y: f64,
    vx: f64,
    vy: f64,
}

impl Mover {
    fn advance(&mut self, w: f64, h: f64, margin: f64) {
        self.x += self.vx;
        self.y += self.vy;
        // reflect at borders, keeping the center inside the margin box
        if self.x < margin {
            self.x = 2.0 * margin - self.x;
            self.vx = -self.vx;
        }
        if self.x > w - 1.0 - margin {
            self.x = 2.0 * (w - 1.0 - margin) - self.x;
            self.vx = -self.vx;
        }
        if self.y < margin {
            self.y = 2.0 * margin - self.y;
            self.vy = -self.vy;
        }
        if self.y > h - 1.0 - margin {
            self.y = 2.0 * (h - 1.0 - margin) - self.y;
            self.vy = -self.vy;
        }
        self.x = self.x.clamp(0.0, w - 1.0);
        self.y = self.y.clamp(0.0, h - 1.0);
    }
}

/// Anti-aliased disk: full intensity inside `radius - 0.5`, linear falloff
/// over one pixel.
fn disk_coverage(dist: f64, radius: f64) -> f64 {
    (radius + 0.5 - dist).clamp(0.0, 1.0)
}

/// Generate a synthetic clip plus one label per frame. Deterministic in
/// the config (including its seed).
pub fn generate_sequence(cfg: &SynthConfig) -> Result<(FrameSequence, Vec<BallLabel>)> {
    cfg.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let (w, h) = (cfg.width as f64, cfg.height as f64);
    let margin = cfg.ball_radius + 1.0;

    let speed = rng.gen_range(cfg.speed_min..=cfg.speed_max);
    let angle = rng.gen_range(0.0..std::f64::consts::TAU);
    let mut ball = Mover {
        x: rng.gen_range(margin..w - 1.0 - margin),
        y: rng.gen_range(margin..h - 1.0 - margin),
        vx: speed * angle.cos(),
        vy: speed * angle.sin(),
    };

    let distractor_radius = cfg.ball_radius + 1.0;
    let mut distractor = if cfg.background_mode == BackgroundMode::MovingDistractor {
        let d_speed = 0.5 * speed;
        let d_angle = rng.gen_range(0.0..std::f64::consts::TAU);
        Some(Mover {
            x: rng.gen_range(margin..w - 1.0 - margin),
            y: rng.gen_range(margin..h - 1.0 - margin),
            vx: d_speed * d_angle.cos(),
            vy: d_speed * d_angle.sin(),
        })
    } else {
        None
    };

    let base_level = 0.3;
    let noise = if cfg.noise_sigma > 0.0 {
        Some(Normal::new(0.0, cfg.noise_sigma).expect("validated sigma"))
    } else {
        None
    };

    let mut frames = Vec::with_capacity(cfg.n_frames);
    let mut labels = Vec::with_capacity(cfg.n_frames);
    let mut burst_left = 0usize;

    for i in 0..cfg.n_frames {
        let frame_index = (i + 1) as u64;

        let occluded = if burst_left > 0 {
            burst_left -= 1;
            true
        } else if cfg.occlusion_prob > 0.0 && rng.gen_bool(cfg.occlusion_prob) {
            if cfg.occlusion_bursts {
                // geometric extra length with mean 2 (total burst mean 3)
                let mut extra = 0usize;
                while rng.gen_bool(2.0 / 3.0) {
                    extra += 1;
                    if extra > 50 {
                        break;
                    }
                }
                burst_left = extra;
            }
            true
        } else {
            false
        };

        let mut img = Array2::<f64>::zeros((cfg.height, cfg.width));
        for y in 0..cfg.height {
            for x in 0..cfg.width {
                img[(y, x)] = match cfg.background_mode {
                    BackgroundMode::Flat | BackgroundMode::MovingDistractor => base_level,
                    BackgroundMode::Gradient => {
                        0.1 + 0.4 * (x as f64) / (cfg.width.max(2) - 1) as f64
                    }
                };
            }
        }

        if let Some(d) = distractor.as_ref() {
            stamp_disk(&mut img, d.x, d.y, distractor_radius, 0.6 * cfg.contrast);
        }
        if !occluded {
            stamp_disk(&mut img, ball.x, ball.y, cfg.ball_radius, cfg.contrast);
        }

        if let Some(n) = &noise {
            for v in img.iter_mut() {
                *v += n.sample(&mut rng);
            }
        }

        let frame = Frame::from_fn(3, cfg.height, cfg.width, |_, y, x| {
            img[(y, x)].clamp(0.0, 1.0) as f32
        })?;
        frames.push(frame);

        labels.push(if occluded {
            BallLabel::hidden(frame_index)
        } else {
            BallLabel::visible(frame_index, ball.x, ball.y)
        });

        ball.advance(w, h, margin);
        if let Some(d) = distractor.as_mut() {
            d.advance(w, h, distractor_radius + 1.0);
        }
    }

    let seq = FrameSequence::new(frames, (1..=cfg.n_frames as u64).collect(), None)?;
    Ok((seq, labels))
}

fn stamp_disk(img: &mut Array2<f64>, cx: f64, cy: f64, radius: f64, contrast: f64) {
    let (h, w) = img.dim();
    let reach = radius + 1.0;
    let x0 = ((cx - reach).floor().max(0.0)) as usize;
    let x1 = ((cx + reach).ceil() as usize).min(w - 1);
    let y0 = ((cy - reach).floor().max(0.0)) as usize;
    let y1 = ((cy + reach).ceil() as usize).min(h - 1);
    for y in y0..=y1 {
        for x in x0..=x1 {
            let dist = ((x as f64 - cx).powi(2) + (y as f64 - cy).powi(2)).sqrt();
            let cov = disk_coverage(dist, radius);
            if cov > 0.0 {
                img[(y, x)] += contrast * cov;
            }
        }
    }
}

/// Unnormalized Gaussian ground-truth heatmap: peak 1 at the ball center,
/// all zero when the ball is not visible.
pub fn render_gt_heatmap(
    label: &BallLabel,
    width: usize,
    height: usize,
    sigma_g: f64,
) -> Result<Array2<f64>> {
    if sigma_g <= 0.0 {
        return Err(Error::InvalidConfig("sigma_g must be positive".into()));
    }
    if !label.is_visible() {
        return Ok(Array2::zeros((height, width)));
    }
    if label.x < 0.0 || label.x >= width as f64 || label.y < 0.0 || label.y >= height as f64 {
        return Err(Error::LabelOutOfBounds {
            frame: label.frame_index,
            x: label.x,
            y: label.y,
            width,
            height,
        });
    }
    let denom = 2.0 * sigma_g * sigma_g;
    Ok(Array2::from_shape_fn((height, width), |(y, x)| {
        let d2 = (x as f64 - label.x).powi(2) + (y as f64 - label.y).powi(2);
        (-d2 / denom).exp()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_cfg() -> SynthConfig {
        SynthConfig {
            width: 64,
            height: 48,
            n_frames: 40,
            seed: 42,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn zero_occlusion_means_all_visible() {
        let (_, labels) = generate_sequence(&base_cfg()).unwrap();
        assert!(labels.iter().all(|l| l.visibility == 1));
    }

    #[test]
    fn same_seed_reproduces_frames_and_labels() {
        let cfg = SynthConfig {
            occlusion_prob: 0.2,
            noise_sigma: 0.05,
            background_mode: BackgroundMode::MovingDistractor,
            ..base_cfg()
        };
        let (s1, l1) = generate_sequence(&cfg).unwrap();
        let (s2, l2) = generate_sequence(&cfg).unwrap();
        assert_eq!(l1, l2);
        for (a, b) in s1.frames().zip(s2.frames()) {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn brightest_pixel_sits_on_the_ball() {
        let cfg = SynthConfig {
            contrast: 1.0,
            noise_sigma: 0.0,
            background_mode: BackgroundMode::Flat,
            ..base_cfg()
        };
        let (seq, labels) = generate_sequence(&cfg).unwrap();
        for (frame, label) in seq.frames().zip(&labels) {
            let gray = frame.to_gray().unwrap();
            let mut best = (0usize, 0usize);
            let mut best_v = f32::NEG_INFINITY;
            for y in 0..gray.height() {
                for x in 0..gray.width() {
                    if gray.get(0, y, x) > best_v {
                        best_v = gray.get(0, y, x);
                        best = (x, y);
                    }
                }
            }
            let dist =
                ((best.0 as f64 - label.x).powi(2) + (best.1 as f64 - label.y).powi(2)).sqrt();
            assert!(
                dist <= cfg.ball_radius,
                "frame {}: brightest at {:?}, ball at ({}, {})",
                label.frame_index,
                best,
                label.x,
                label.y
            );
        }
    }

    #[test]
    fn sequence_length_and_label_count_match_config() {
        let (seq, labels) = generate_sequence(&base_cfg()).unwrap();
        assert_eq!(seq.len(), 40);
        assert_eq!(labels.len(), 40);
    }

    #[test]
    fn labels_stay_inside_bounds() {
        let mut cfg = base_cfg();
        cfg.speed_max = 20.0;
        cfg.n_frames = 200;
        let (_, labels) = generate_sequence(&cfg).unwrap();
        for l in labels.iter().filter(|l| l.is_visible()) {
            assert!(l.x >= 0.0 && l.x < cfg.width as f64);
            assert!(l.y >= 0.0 && l.y < cfg.height as f64);
        }
    }

    #[test]
    fn invisible_label_renders_zero_heatmap() {
        let m = render_gt_heatmap(&BallLabel::hidden(1), 32, 24, 2.5).unwrap();
        assert!(m.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn heatmap_peaks_at_one_on_the_center_pixel() {
        let m = render_gt_heatmap(&BallLabel::visible(1, 10.0, 7.0), 32, 24, 2.5).unwrap();
        assert_eq!(m[(7, 10)], 1.0);
    }

    #[test]
    fn heatmap_value_at_one_sigma() {
        // oracle: exp(-0.5)
        let expected = 0.6065306597126334;
        let sigma = 2.0;
        let m = render_gt_heatmap(&BallLabel::visible(1, 10.0, 7.0), 32, 24, sigma).unwrap();
        assert!((m[(7, 12)] - expected).abs() < 1e-12);
    }

    #[test]
    fn heatmap_decreases_with_distance() {
        let m = render_gt_heatmap(&BallLabel::visible(1, 16.0, 12.0), 32, 24, 2.5).unwrap();
        for r in 1..10 {
            assert!(m[(12, 16 + r)] < m[(12, 16 + r - 1)]);
        }
    }

    #[test]
    fn out_of_bounds_visible_label_is_rejected() {
        let err = render_gt_heatmap(&BallLabel::visible(3, 40.0, 7.0), 32, 24, 2.5).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfBounds { frame: 3, .. }));
    }

    #[test]
    fn occlusion_produces_hidden_labels() {
        let cfg = SynthConfig {
            occlusion_prob: 0.3,
            n_frames: 200,
            ..base_cfg()
        };
        let (_, labels) = generate_sequence(&cfg).unwrap();
        let hidden = labels.iter().filter(|l| !l.is_visible()).count();
        assert!(hidden > 10, "expected a healthy number of occluded frames, got {hidden}");
        assert!(hidden < 200);
    }
}
