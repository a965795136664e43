//! Model weight serialization.
//!
//! Byte layout of a model file (all integers little-endian `u32`, all
//! parameter values little-endian IEEE-754 `f32`):
//!
//! ```text
//! magic          5 bytes   "MTRK1"
//! echo_len       u32
//! echo           echo_len bytes, UTF-8 "key = value" lines (the resolved
//!                network configuration, first line "version = 1")
//! block_count    u32
//! per block:
//!   name_len     u32
//!   name         name_len bytes, UTF-8
//!   rank         u32
//!   dims         rank x u32
//!   data         prod(dims) x f32
//! ```
//!
//! Save -> load -> save reproduces the file byte for byte: the echo string
//! is preserved verbatim and f32 values round-trip exactly through the
//! in-memory f64 representation.

use std::path::Path;

use crate::error::{Error, Result};
use crate::motion_prompt::PNParams;
use crate::net::NetworkConfig;

pub const MAGIC: &[u8; 5] = b"MTRK1";

/// One named parameter block: a shape and its values (f64 in memory,
/// f32 on disk).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightBlock {
    pub name: String,
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl WeightBlock {
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// A complete serialized model: configuration echo plus named parameter
/// blocks in canonical order (encoder, bottleneck, decoder, head, and the
/// PN parameters when fusion is enabled).
#[derive(Debug, Clone)]
pub struct ModelWeights {
    config: NetworkConfig,
    echo: String,
    blocks: Vec<WeightBlock>,
}

impl ModelWeights {
    pub(crate) fn from_parts(config: NetworkConfig, blocks: Vec<WeightBlock>) -> ModelWeights {
        let echo = config.render_echo();
        ModelWeights {
            config,
            echo,
            blocks,
        }
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn echo(&self) -> &str {
        &self.echo
    }

    pub fn blocks(&self) -> &[WeightBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&WeightBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }

    pub fn block_mut(&mut self, name: &str) -> Option<&mut WeightBlock> {
        self.blocks.iter_mut().find(|b| b.name == name)
    }

    /// Normalization running statistics are state, not trained parameters;
    /// they are excluded from the similarity diagnostic.
    pub fn is_trainable(name: &str) -> bool {
        !name.contains(".running_")
    }

    /// The PN parameters stored in the "pn" block, if present.
    pub fn pn_params(&self) -> Result<Option<PNParams>> {
        match self.block("pn") {
            None => Ok(None),
            Some(b) => {
                if b.data.len() != 2 {
                    return Err(Error::ModelFormat(
                        "pn block must hold exactly [slope, shift]".into(),
                    ));
                }
                Ok(Some(PNParams::new(b.data[0], b.data[1])?))
            }
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let echo = self.echo.as_bytes();
        out.extend_from_slice(&(echo.len() as u32).to_le_bytes());
        out.extend_from_slice(echo);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for block in &self.blocks {
            let name = block.name.as_bytes();
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name);
            out.extend_from_slice(&(block.dims.len() as u32).to_le_bytes());
            for &d in &block.dims {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in &block.data {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<ModelWeights> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(5)?;
        if magic != MAGIC {
            return Err(Error::ModelFormat("bad magic, not a model file".into()));
        }
        let echo_len = r.u32()? as usize;
        let echo = std::str::from_utf8(r.take(echo_len)?)
            .map_err(|_| Error::ModelFormat("config echo is not valid UTF-8".into()))?
            .to_string();
        let config = NetworkConfig::parse_echo(&echo)?;
        let block_count = r.u32()? as usize;
        if block_count > 10_000 {
            return Err(Error::ModelFormat(format!(
                "implausible block count {block_count}"
            )));
        }
        let mut blocks = Vec::with_capacity(block_count);
        for _ in 0..block_count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::ModelFormat("block name is not valid UTF-8".into()))?
                .to_string();
            let rank = r.u32()? as usize;
            if rank > 8 {
                return Err(Error::ModelFormat(format!(
                    "block {name}: implausible rank {rank}"
                )));
            }
            let mut dims = Vec::with_capacity(rank);
            for _ in 0..rank {
                dims.push(r.u32()? as usize);
            }
            let count: usize = dims.iter().product();
            if count > 100_000_000 {
                return Err(Error::ModelFormat(format!(
                    "block {name}: implausible element count {count}"
                )));
            }
            let mut data = Vec::with_capacity(count);
            for _ in 0..count {
                let raw = r.take(4)?;
                let v = f32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]);
                if !v.is_finite() {
                    return Err(Error::ModelFormat(format!(
                        "block {name}: non-finite parameter value"
                    )));
                }
                data.push(v as f64);
            }
            blocks.push(WeightBlock { name, dims, data });
        }
        if r.pos != bytes.len() {
            return Err(Error::ModelFormat(format!(
                "{} trailing bytes after the last block",
                bytes.len() - r.pos
            )));
        }
        let model = ModelWeights {
            config,
            echo,
            blocks,
        };
        let has_pn = model.block("pn").is_some();
        let needs_pn = model.config.fusion_mode != crate::net::FusionMode::Off;
        if has_pn != needs_pn {
            return Err(Error::ModelFormat(format!(
                "pn block {} but fusion_mode = {}",
                if has_pn { "present" } else { "missing" },
                model.config.fusion_mode
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ModelWeights> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        ModelWeights::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::ModelFormat("unexpected end of file".into()));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32> {
        let raw = self.take(4)?;
        Ok(u32::from_le_bytes([raw[0], raw[1], raw[2], raw[3]]))
    }
}
