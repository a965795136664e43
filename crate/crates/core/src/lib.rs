//! Motion-attention heatmap tracking for fast, small objects.
//!
//! The pipeline slices video into short temporal blocks, converts absolute
//! frame differences into learnable motion attention maps, fuses them with
//! visual features from a compact encoder-decoder network, and decodes the
//! resulting per-frame heatmaps into ball detections.

pub mod error;
pub mod eval;
pub mod frames;
pub mod motion_prompt;
pub mod net;
pub mod synthgen;

pub use error::{Error, Result};
