//! Flat `key = value` run configuration shared by every command. Unknown
//! keys are rejected; every run echoes the fully resolved configuration
//! into its output directory so a run can be reproduced from the echo.

use std::path::Path;

use motrack_core::net::{FusionMode, NetworkConfig, TrainOptions};
use motrack_core::synthgen::{BackgroundMode, SynthConfig};

use crate::CliError;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    // network
    pub t_prime: usize,
    pub input_width: usize,
    pub input_height: usize,
    pub base_channels: usize,
    pub levels: usize,
    pub skip_connections: bool,
    pub fusion_mode: FusionMode,
    // training
    pub lr: f64,
    pub lr_decay: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Block stride for training dataset assembly; 0 means t_prime
    /// (non-overlapping blocks).
    pub train_stride: usize,
    pub flip_augment: bool,
    pub sigma_g: f64,
    // synthetic data
    pub width: usize,
    pub height: usize,
    pub n_frames: usize,
    pub ball_radius: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    pub contrast: f64,
    pub occlusion_prob: f64,
    pub occlusion_bursts: bool,
    pub noise_sigma: f64,
    pub background_mode: BackgroundMode,
    // tracking / evaluation
    pub threshold: f64,
    pub tol: f64,
    pub overlap_policy: motrack_core::eval::OverlapPolicy,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            t_prime: 3,
            input_width: 128,
            input_height: 72,
            base_channels: 16,
            levels: 3,
            skip_connections: true,
            fusion_mode: FusionMode::V1,
            lr: 1.0,
            lr_decay: 1.0,
            epochs: 30,
            batch: 8,
            seed: 0,
            train_stride: 0,
            flip_augment: false,
            sigma_g: 2.5,
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
            threshold: 0.5,
            tol: 4.0,
            overlap_policy: motrack_core::eval::OverlapPolicy::LastSlot,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text)
    }

    pub fn parse(text: &str) -> Result<RunConfig, CliError> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Usage(format!(
                    "config line {}: expected 'key = value', got '{raw}'",
                    lineno + 1
                )));
            };
            cfg.set(key.trim(), value.trim())
                .map_err(|e| CliError::Usage(format!("config line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e| format!("{key}: {e}"))
        }
        match key {
            "t_prime" => self.t_prime = parse(key, value)?,
            "input_width" => self.input_width = parse(key, value)?,
            "input_height" => self.input_height = parse(key, value)?,
            "base_channels" => self.base_channels = parse(key, value)?,
            "levels" => self.levels = parse(key, value)?,
            "skip_connections" => self.skip_connections = parse(key, value)?,
            "fusion_mode" => {
                self.fusion_mode = value.parse().map_err(|e| format!("{e}"))?;
            }
            "lr" => self.lr = parse(key, value)?,
            "lr_decay" => self.lr_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_stride" => self.train_stride = parse(key, value)?,
            "flip_augment" => self.flip_augment = parse(key, value)?,
            "sigma_g" => self.sigma_g = parse(key, value)?,
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "n_frames" => self.n_frames = parse(key, value)?,
            "ball_radius" => self.ball_radius = parse(key, value)?,
            "speed_min" => self.speed_min = parse(key, value)?,
            "speed_max" => self.speed_max = parse(key, value)?,
            "contrast" => self.contrast = parse(key, value)?,
            "occlusion_prob" => self.occlusion_prob = parse(key, value)?,
            "occlusion_bursts" => self.occlusion_bursts = parse(key, value)?,
            "noise_sigma" => self.noise_sigma = parse(key, value)?,
            "background_mode" => {
                self.background_mode = value.parse().map_err(|e| format!("{e}"))?;
            }
            "threshold" => self.threshold = parse(key, value)?,
            "tol" => self.tol = parse(key, value)?,
            "overlap_policy" => {
                self.overlap_policy = value.parse().map_err(|e| format!("{e}"))?;
            }
            other => return Err(format!("unknown key '{other}'")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.network_config()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        self.synth_config()
            .validate()
            .map_err(|e| CliError::Usage(e.to_string()))?;
        if !(0.0 < self.threshold && self.threshold < 1.0) {
            return Err(CliError::Usage(format!(
                "threshold must lie in (0, 1), got {}",
                self.threshold
            )));
        }
        if self.tol <= 0.0 || self.sigma_g <= 0.0 {
            return Err(CliError::Usage(
                "tol and sigma_g must be positive".to_string(),
            ));
        }
        Ok(())
    }

    /// Canonical rendering; re-running with this text reproduces the run.
    pub fn render(&self) -> String {
        format!(
            "t_prime = {}\n\
             input_width = {}\n\
             input_height = {}\n\
             base_channels = {}\n\
             levels = {}\n\
             skip_connections = {}\n\
             fusion_mode = {}\n\
             lr = {}\n\
             lr_decay = {}\n\
             epochs = {}\n\
             batch = {}\n\
             seed = {}\n\
             train_stride = {}\n\
             flip_augment = {}\n\
             sigma_g = {}\n\
             width = {}\n\
             height = {}\n\
             n_frames = {}\n\
             ball_radius = {}\n\
             speed_min = {}\n\
             speed_max = {}\n\
             contrast = {}\n\
             occlusion_prob = {}\n\
             occlusion_bursts = {}\n\
             noise_sigma = {}\n\
             background_mode = {}\n\
             threshold = {}\n\
             tol = {}\n\
             overlap_policy = {}\n",
            self.t_prime,
            self.input_width,
            self.input_height,
            self.base_channels,
            self.levels,
            self.skip_connections,
            self.fusion_mode,
            self.lr,
            self.lr_decay,
            self.epochs,
            self.batch,
            self.seed,
            self.train_stride,
            self.flip_augment,
            self.sigma_g,
            self.width,
            self.height,
            self.n_frames,
            self.ball_radius,
            self.speed_min,
            self.speed_max,
            self.contrast,
            self.occlusion_prob,
            self.occlusion_bursts,
            self.noise_sigma,
            self.background_mode,
            self.threshold,
            self.tol,
            match self.overlap_policy {
                motrack_core::eval::OverlapPolicy::LastSlot => "last-slot",
                motrack_core::eval::OverlapPolicy::PixelMax => "pixel-max",
            },
        )
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            t_prime: self.t_prime,
            input_width: self.input_width,
            input_height: self.input_height,
            base_channels: self.base_channels,
            levels: self.levels,
            skip_connections: self.skip_connections,
            fusion_mode: self.fusion_mode,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            width: self.width,
            height: self.height,
            n_frames: self.n_frames,
            ball_radius: self.ball_radius,
            speed_min: self.speed_min,
            speed_max: self.speed_max,
            contrast: self.contrast,
            occlusion_prob: self.occlusion_prob,
            occlusion_bursts: self.occlusion_bursts,
            noise_sigma: self.noise_sigma,
            background_mode: self.background_mode,
            seed: self.seed,
        }
    }

    pub fn train_options(&self) -> TrainOptions {
        TrainOptions {
            lr: self.lr,
            epochs: self.epochs,
            batch: self.batch,
            seed: self.seed,
            lr_decay: if self.lr_decay == 1.0 {
                None
            } else {
                Some(self.lr_decay)
            },
            flip_augment: self.flip_augment,
        }
    }

    /// Effective training stride (0 means one block per t_prime frames).
    pub fn effective_train_stride(&self) -> usize {
        if self.train_stride == 0 {
            self.t_prime
        } else {
            self.train_stride
        }
    }
}
