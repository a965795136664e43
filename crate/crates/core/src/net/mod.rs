//! The tracking network: a compact encoder-decoder feature extractor, the
//! motion-aware fusion operator (both variants), the sigmoid heatmap head,
//! the weighted focal BCE loss, and the training loop.

mod backbone;
mod layers;
mod loss;
mod train;
mod weights;

pub use loss::{LossReport, wbce_grad_logit, wbce_loss};
pub use train::{TrainOptions, TrainReport, train};
pub use weights::{ModelWeights, WeightBlock};

use ndarray::{Array2, Array4};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::frames::TemporalBlock;
use crate::motion_prompt::{AttentionStack, PNParams, attention, frame_diff};

pub(crate) use backbone::Net;
pub(crate) use layers::Scalar;

/// Where motion attention enters the pipeline.
///
/// `V1` multiplies attention map `t` into feature slice `t+1`, leaving the
/// first slice untouched. `V2` multiplies the mean attention map into every
/// slice. `Off` is the visual-only baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Off,
    V1,
    V2,
}

impl fmt::Display for FusionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FusionMode::Off => "off",
            FusionMode::V1 => "v1",
            FusionMode::V2 => "v2",
        };
        f.write_str(s)
    }
}

impl FromStr for FusionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(FusionMode::Off),
            "v1" => Ok(FusionMode::V1),
            "v2" => Ok(FusionMode::V2),
            other => Err(Error::InvalidConfig(format!(
                "unknown fusion_mode '{other}' (expected off, v1 or v2)"
            ))),
        }
    }
}

/// Network architecture and input geometry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Frames per temporal block (network takes 3*T' channels in, T' maps out).
    pub t_prime: usize,
    pub input_width: usize,
    pub input_height: usize,
    /// Channels at the first encoder level; doubled per level below.
    pub base_channels: usize,
    /// Number of 2x downsampling steps.
    pub levels: usize,
    pub skip_connections: bool,
    pub fusion_mode: FusionMode,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            t_prime: 3,
            input_width: 128,
            input_height: 72,
            base_channels: 16,
            levels: 3,
            skip_connections: true,
            fusion_mode: FusionMode::V1,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.t_prime < 2 {
            return Err(Error::InvalidConfig(format!(
                "t_prime must be >= 2, got {}",
                self.t_prime
            )));
        }
        if self.base_channels < 1 || self.levels < 1 {
            return Err(Error::InvalidConfig(
                "base_channels and levels must be >= 1".into(),
            ));
        }
        let div = 1usize << self.levels;
        if self.input_width == 0
            || self.input_height == 0
            || self.input_width % div != 0
            || self.input_height % div != 0
        {
            return Err(Error::InvalidConfig(format!(
                "input dims {}x{} must be positive and divisible by 2^levels = {div}",
                self.input_width, self.input_height
            )));
        }
        Ok(())
    }

    /// Canonical `key = value` rendering stored in model files.
    pub fn render_echo(&self) -> String {
        format!(
            "version = 1\n\
             t_prime = {}\n\
             input_width = {}\n\
             input_height = {}\n\
             base_channels = {}\n\
             levels = {}\n\
             skip_connections = {}\n\
             fusion_mode = {}\n",
            self.t_prime,
            self.input_width,
            self.input_height,
            self.base_channels,
            self.levels,
            self.skip_connections,
            self.fusion_mode
        )
    }

    pub fn parse_echo(echo: &str) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig::default();
        let mut seen_version = false;
        for (lineno, line) in echo.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::ModelFormat(format!("config echo line {}: missing '='", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: String| Error::ModelFormat(format!("config echo: {key}: {e}"));
            match key {
                "version" => {
                    if value != "1" {
                        return Err(bad(format!("unsupported version {value}")));
                    }
                    seen_version = true;
                }
                "t_prime" => cfg.t_prime = value.parse().map_err(|e| bad(format!("{e}")))?,
                "input_width" => cfg.input_width = value.parse().map_err(|e| bad(format!("{e}")))?,
                "input_height" => {
                    cfg.input_height = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "base_channels" => {
                    cfg.base_channels = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "levels" => cfg.levels = value.parse().map_err(|e| bad(format!("{e}")))?,
                "skip_connections" => {
                    cfg.skip_connections = value.parse().map_err(|e| bad(format!("{e}")))?
                }
                "fusion_mode" => cfg.fusion_mode = value.parse()?,
                other => {
                    return Err(Error::ModelFormat(format!(
                        "config echo: unknown key '{other}'"
                    )));
                }
            }
        }
        if !seen_version {
            return Err(Error::ModelFormat("config echo: missing version".into()));
        }
        cfg.validate().map_err(|e| match e {
            Error::InvalidConfig(m) => Error::ModelFormat(format!("config echo: {m}")),
            other => other,
        })?;
        Ok(cfg)
    }
}

/// `T'` pre-sigmoid feature maps at input resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStack {
    maps: Vec<Array2<f64>>,
}

impl FeatureStack {
    pub fn from_maps(maps: Vec<Array2<f64>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::ShapeMismatch("feature stack needs at least one map".into()));
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::ShapeMismatch("feature maps must share dimensions".into()));
        }
        if maps.iter().flat_map(|m| m.iter()).any(|v| !v.is_finite()) {
            return Err(Error::ShapeMismatch("feature maps must be finite".into()));
        }
        Ok(FeatureStack { maps })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn map(&self, t: usize) -> &Array2<f64> {
        &self.maps[t]
    }

    pub fn maps(&self) -> &[Array2<f64>] {
        &self.maps
    }
}

/// `T'` heatmaps; predicted stacks are sigmoid outputs strictly inside
/// (0, 1), ground-truth stacks may touch 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    maps: Vec<Array2<f64>>,
}

impl HeatmapStack {
    pub fn from_maps(maps: Vec<Array2<f64>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::ShapeMismatch("heatmap stack needs at least one map".into()));
        }
        let dim = maps[0].dim();
        if maps.iter().any(|m| m.dim() != dim) {
            return Err(Error::ShapeMismatch("heatmaps must share dimensions".into()));
        }
        if maps
            .iter()
            .flat_map(|m| m.iter())
            .any(|&v| !(0.0..=1.0).contains(&v))
        {
            return Err(Error::ShapeMismatch("heatmap values must lie in [0, 1]".into()));
        }
        Ok(HeatmapStack { maps })
    }

    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn map(&self, t: usize) -> &Array2<f64> {
        &self.maps[t]
    }

    pub fn maps(&self) -> &[Array2<f64>] {
        &self.maps
    }
}

/// Numerically stable sigmoid nudged off 0 and 1 so heatmap values stay
/// strictly inside the open interval.
pub(crate) fn sigmoid_strict(z: f64) -> f64 {
    let s = if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    };
    if s >= 1.0 {
        1.0 - f64::EPSILON / 2.0
    } else if s <= 0.0 {
        f64::MIN_POSITIVE
    } else {
        s
    }
}

fn check_fusion_shapes(attn: &AttentionStack, feats: &FeatureStack) -> Result<()> {
    if attn.len() + 1 != feats.len() {
        return Err(Error::ShapeMismatch(format!(
            "fusion expects T'-1 = {} attention maps for {} feature maps",
            feats.len() - 1,
            feats.len()
        )));
    }
    let fd = feats.map(0).dim();
    if attn.maps().iter().any(|m| m.dim() != fd) {
        return Err(Error::ShapeMismatch(
            "attention and feature maps must share spatial dimensions".into(),
        ));
    }
    Ok(())
}

/// Motion-aware fusion, version 1: slice 0 passes through unmodulated,
/// slice t (t >= 1) is `attn[t-1] * feats[t]` element-wise.
pub fn fuse_v1(attn: &AttentionStack, feats: &FeatureStack) -> Result<FeatureStack> {
    check_fusion_shapes(attn, feats)?;
    let mut out = Vec::with_capacity(feats.len());
    out.push(feats.map(0).clone());
    for t in 1..feats.len() {
        out.push(attn.map(t - 1) * feats.map(t));
    }
    Ok(FeatureStack { maps: out })
}

/// Motion-aware fusion, version 2: every slice is multiplied by the mean
/// attention map.
pub fn fuse_v2(attn: &AttentionStack, feats: &FeatureStack) -> Result<FeatureStack> {
    check_fusion_shapes(attn, feats)?;
    let mean = attn.mean_map();
    let out = feats.maps().iter().map(|m| &mean * m).collect();
    Ok(FeatureStack { maps: out })
}

/// Stack the RGB frames of each block into a `(B, 3T', H, W)` input tensor.
pub(crate) fn blocks_to_input<A: Scalar>(blocks: &[&TemporalBlock]) -> Array4<A> {
    let (t_prime, h, w) = (blocks[0].t_prime(), blocks[0].height(), blocks[0].width());
    let plane = h * w;
    let mut x = Array4::<A>::zeros((blocks.len(), 3 * t_prime, h, w));
    let xs = x.as_slice_mut().expect("freshly allocated");
    for (b, block) in blocks.iter().enumerate() {
        for t in 0..t_prime {
            let frame = block.rgb(t).data().as_slice().expect("frame layout");
            let dst = &mut xs[(b * 3 * t_prime + 3 * t) * plane..][..3 * plane];
            for (d, s) in dst.iter_mut().zip(frame) {
                *d = A::from_double(*s as f64);
            }
        }
    }
    x
}

fn check_block_matches(block: &TemporalBlock, cfg: &NetworkConfig) -> Result<()> {
    if block.t_prime() != cfg.t_prime
        || block.width() != cfg.input_width
        || block.height() != cfg.input_height
    {
        return Err(Error::ShapeMismatch(format!(
            "block is {} frames at {}x{}, network expects {} at {}x{}",
            block.t_prime(),
            block.width(),
            block.height(),
            cfg.t_prime,
            cfg.input_width,
            cfg.input_height
        )));
    }
    Ok(())
}

pub(crate) fn split_feature_batch(v: &Array4<f64>, b: usize) -> Vec<Array2<f64>> {
    let (_, t, h, w) = v.dim();
    (0..t)
        .map(|s| {
            v.index_axis(ndarray::Axis(0), b)
                .index_axis(ndarray::Axis(0), s)
                .to_owned()
                .into_shape_with_order((h, w))
                .unwrap()
        })
        .collect()
}

/// Run the visual backbone on one block (deterministic, frozen-statistics
/// inference). Output is pre-sigmoid.
pub fn extract_features(block: &TemporalBlock, weights: &ModelWeights) -> Result<FeatureStack> {
    check_block_matches(block, weights.config())?;
    let net = Net::<f64>::from_weights(weights)?;
    let x = blocks_to_input::<f64>(&[block]);
    let v = net.forward_eval(&x);
    Ok(FeatureStack {
        maps: split_feature_batch(&v, 0),
    })
}

fn fused_features(
    block: &TemporalBlock,
    feats: &FeatureStack,
    params: &PNParams,
    mode: FusionMode,
) -> Result<FeatureStack> {
    match mode {
        FusionMode::Off => Ok(feats.clone()),
        FusionMode::V1 => {
            let attn = attention(&frame_diff(block), params);
            fuse_v1(&attn, feats)
        }
        FusionMode::V2 => {
            let attn = attention(&frame_diff(block), params);
            fuse_v2(&attn, feats)
        }
    }
}

fn sigmoid_stack(feats: &FeatureStack) -> HeatmapStack {
    HeatmapStack {
        maps: feats.maps().iter().map(|m| m.mapv(sigmoid_strict)).collect(),
    }
}

/// Full per-block prediction: visual features, optional motion-aware
/// fusion, then the sigmoid head. With `mode = Off` the output is
/// independent of `params`.
pub fn predict_heatmaps(
    block: &TemporalBlock,
    weights: &ModelWeights,
    params: &PNParams,
    mode: FusionMode,
) -> Result<HeatmapStack> {
    let feats = extract_features(block, weights)?;
    let fused = fused_features(block, &feats, params, mode)?;
    Ok(sigmoid_stack(&fused))
}

/// A network assembled once for repeated inference. Fusion mode and PN
/// parameters are taken from the model.
pub struct Predictor {
    net: Net<f64>,
}

impl Predictor {
    pub fn from_weights(weights: &ModelWeights) -> Result<Predictor> {
        Ok(Predictor {
            net: Net::from_weights(weights)?,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.net.cfg
    }

    pub fn pn_params(&self) -> PNParams {
        self.net.pn
    }

    pub fn predict(&self, block: &TemporalBlock) -> Result<HeatmapStack> {
        Ok(self.predict_batch(&[block])?.remove(0))
    }

    /// Batched inference over several blocks (one backbone pass).
    pub fn predict_batch(&self, blocks: &[&TemporalBlock]) -> Result<Vec<HeatmapStack>> {
        for block in blocks {
            check_block_matches(block, &self.net.cfg)?;
        }
        let x = blocks_to_input::<f64>(blocks);
        let v = self.net.forward_eval(&x);
        let mut out = Vec::with_capacity(blocks.len());
        for (b, block) in blocks.iter().enumerate() {
            let feats = FeatureStack {
                maps: split_feature_batch(&v, b),
            };
            let fused = fused_features(block, &feats, &self.net.pn, self.net.cfg.fusion_mode)?;
            out.push(sigmoid_stack(&fused));
        }
        Ok(out)
    }

    /// Pre-sigmoid features for one block (for visualization).
    pub fn features(&self, block: &TemporalBlock) -> Result<FeatureStack> {
        check_block_matches(block, &self.net.cfg)?;
        let x = blocks_to_input::<f64>(&[block]);
        let v = self.net.forward_eval(&x);
        Ok(FeatureStack {
            maps: split_feature_batch(&v, 0),
        })
    }
}

/// Fresh, randomly initialized weights for the given configuration.
pub fn init_weights(cfg: &NetworkConfig, seed: u64) -> Result<ModelWeights> {
    Ok(Net::<f64>::new(cfg, seed)?.to_weights())
}

/// Gradient-check plumbing: evaluate the training-mode loss (and its exact
/// parameter gradients) as a pure function of a weight set, so tests can
/// drive finite-difference oracles through the real training path.
#[doc(hidden)]
pub mod diag {
    use super::*;

    fn batch_parts<'d>(
        weights: &ModelWeights,
        dataset: &'d [(TemporalBlock, HeatmapStack)],
    ) -> Result<(Vec<&'d TemporalBlock>, Array4<f64>)> {
        let cfg = weights.config();
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let blocks: Vec<&TemporalBlock> = dataset.iter().map(|(b, _)| b).collect();
        for block in &blocks {
            check_block_matches(block, cfg)?;
        }
        let (h, w) = (cfg.input_height, cfg.input_width);
        let mut targets = Array4::<f64>::zeros((dataset.len(), cfg.t_prime, h, w));
        for (b, (_, gt)) in dataset.iter().enumerate() {
            for t in 0..cfg.t_prime {
                let m = gt.map(t);
                for y in 0..h {
                    for x in 0..w {
                        targets[(b, t, y, x)] = m[(y, x)];
                    }
                }
            }
        }
        Ok((blocks, targets))
    }

    /// Mean training loss of one batch (the whole dataset), no update.
    pub fn training_loss(
        weights: &ModelWeights,
        dataset: &[(TemporalBlock, HeatmapStack)],
    ) -> Result<f64> {
        let (blocks, targets) = batch_parts(weights, dataset)?;
        let mut net = Net::<f64>::from_weights(weights)?;
        Ok(train::run_batch(&mut net, &blocks, &targets, false))
    }

    /// Exact analytic gradients of `training_loss` for every trainable
    /// parameter block (the "pn" entry holds [d_slope, d_shift]).
    pub fn training_grads(
        weights: &ModelWeights,
        dataset: &[(TemporalBlock, HeatmapStack)],
    ) -> Result<Vec<(String, Vec<f64>)>> {
        let (blocks, targets) = batch_parts(weights, dataset)?;
        let mut net = Net::<f64>::from_weights(weights)?;
        net.zero_grads();
        let loss = train::run_batch(&mut net, &blocks, &targets, true);
        if !loss.is_finite() {
            return Err(Error::NanLoss { epoch: 0, batch: 0 });
        }
        Ok(net.grad_blocks())
    }
}
