//! Motion attention: signed/absolute frame differencing and the learnable
//! two-parameter power-normalization (PN) layer that turns diff magnitudes
//! into attention maps in (0, 1), with exact analytic gradients.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::frames::TemporalBlock;

/// Lower clamp applied to the PN slope after every optimizer step. A
/// non-positive slope would invert the attention semantics.
pub const SLOPE_MIN: f64 = 1e-3;

/// Default initialization for the PN parameters: a gentle, non-saturated
/// curve over diff values in [0, 1].
pub const SLOPE_INIT: f64 = 5.0;
pub const SHIFT_INIT: f64 = 0.25;

/// The two learnable motion-prompt parameters: slope and shift of the
/// shifted-logistic PN function.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PNParams {
    slope: f64,
    shift: f64,
}

impl PNParams {
    pub fn new(slope: f64, shift: f64) -> Result<Self> {
        if !slope.is_finite() || !shift.is_finite() {
            return Err(Error::InvalidConfig(
                "PN parameters must be finite".into(),
            ));
        }
        if slope < SLOPE_MIN {
            return Err(Error::InvalidConfig(format!(
                "PN slope must be >= {SLOPE_MIN}, got {slope}"
            )));
        }
        Ok(PNParams { slope, shift })
    }

    pub fn init() -> Self {
        PNParams {
            slope: SLOPE_INIT,
            shift: SHIFT_INIT,
        }
    }

    pub fn slope(&self) -> f64 {
        self.slope
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// Gradient-descent update with the slope clamped back into its valid
    /// range afterwards.
    pub fn apply_step(&mut self, d_slope: f64, d_shift: f64, lr: f64) {
        self.slope = (self.slope - lr * d_slope).max(SLOPE_MIN);
        self.shift -= lr * d_shift;
    }
}

impl Default for PNParams {
    fn default() -> Self {
        PNParams::init()
    }
}

/// Signed and absolute frame-differencing maps for one temporal block:
/// `T' - 1` slices, with `absolute[t] = |signed[t]|` element-wise.
#[derive(Debug, Clone)]
pub struct DiffStack {
    signed: Vec<Array2<f64>>,
    absolute: Vec<Array2<f64>>,
}

impl DiffStack {
    pub fn len(&self) -> usize {
        self.signed.len()
    }

    pub fn is_empty(&self) -> bool {
        self.signed.is_empty()
    }

    pub fn signed(&self, t: usize) -> &Array2<f64> {
        &self.signed[t]
    }

    pub fn absolute(&self, t: usize) -> &Array2<f64> {
        &self.absolute[t]
    }

    pub fn width(&self) -> usize {
        self.signed[0].dim().1
    }

    pub fn height(&self) -> usize {
        self.signed[0].dim().0
    }

    /// Build a stack from signed maps; absolute maps are derived.
    pub fn from_signed(signed: Vec<Array2<f64>>) -> Result<Self> {
        if signed.is_empty() {
            return Err(Error::ShapeMismatch("diff stack needs at least one slice".into()));
        }
        let dim = signed[0].dim();
        if signed.iter().any(|m| m.dim() != dim) {
            return Err(Error::ShapeMismatch("diff slices must share dimensions".into()));
        }
        let absolute = signed.iter().map(|m| m.mapv(f64::abs)).collect();
        Ok(DiffStack { signed, absolute })
    }
}

/// `T' - 1` motion attention maps, every value strictly inside (0, 1).
#[derive(Debug, Clone)]
pub struct AttentionStack {
    maps: Vec<Array2<f64>>,
}

impl AttentionStack {
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

    /// Element-wise mean over all attention maps (the fusion "version 2"
    /// modulator).
    pub fn mean_map(&self) -> Array2<f64> {
        let mut acc = self.maps[0].clone();
        for m in &self.maps[1..] {
            acc += m;
        }
        acc / self.maps.len() as f64
    }

    pub fn from_maps(maps: Vec<Array2<f64>>) -> Result<Self> {
        if maps.is_empty() {
            return Err(Error::ShapeMismatch("attention stack needs at least one map".into()));
        }
        if maps.iter().flat_map(|m| m.iter()).any(|&v| !(v > 0.0 && v < 1.0)) {
            return Err(Error::ShapeMismatch(
                "attention values must lie strictly in (0, 1)".into(),
            ));
        }
        Ok(AttentionStack { maps })
    }
}

/// Compute signed (`gray[t+1] - gray[t]`) and absolute differencing maps
/// for all consecutive frame pairs of a block.
pub fn frame_diff(block: &TemporalBlock) -> DiffStack {
    let (h, w) = (block.height(), block.width());
    let mut signed = Vec::with_capacity(block.t_prime() - 1);
    let mut absolute = Vec::with_capacity(block.t_prime() - 1);
    for t in 0..block.t_prime() - 1 {
        let a = block.gray(t);
        let b = block.gray(t + 1);
        let mut s = Array2::<f64>::zeros((h, w));
        let mut m = Array2::<f64>::zeros((h, w));
        for y in 0..h {
            for x in 0..w {
                let d = b.get(0, y, x) as f64 - a.get(0, y, x) as f64;
                s[(y, x)] = d;
                m[(y, x)] = d.abs();
            }
        }
        signed.push(s);
        absolute.push(m);
    }
    DiffStack { signed, absolute }
}

/// The PN function: a shifted logistic `a(d) = 1 / (1 + exp(-slope * (d - shift)))`,
/// strictly increasing in `d` for positive slope. The output is nudged off
/// the floating-point endpoints so it stays strictly inside (0, 1) even for
/// saturating inputs.
pub fn pn_forward(d: f64, params: &PNParams) -> f64 {
    let x = params.slope * (d - params.shift);
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
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

/// Partial derivatives of the PN output, each multiplied by `upstream`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnGrad {
    pub d_slope: f64,
    pub d_shift: f64,
    pub d_input: f64,
}

/// Analytic gradients of `pn_forward` with respect to slope, shift, and
/// the input value. With `s = a(d)`:
/// `da/dslope = s(1-s)(d-shift)`, `da/dshift = -slope * s(1-s)`,
/// `da/dd = slope * s(1-s)`.
pub fn pn_grad(d: f64, params: &PNParams, upstream: f64) -> PnGrad {
    let s = pn_forward(d, params);
    let core = s * (1.0 - s);
    PnGrad {
        d_slope: upstream * core * (d - params.shift),
        d_shift: upstream * (-params.slope) * core,
        d_input: upstream * params.slope * core,
    }
}

/// Apply the PN function element-wise to the absolute differencing maps.
pub fn attention(diffs: &DiffStack, params: &PNParams) -> AttentionStack {
    let maps = diffs
        .absolute
        .iter()
        .map(|m| m.mapv(|d| pn_forward(d, params)))
        .collect();
    AttentionStack { maps }
}

/// Accumulate PN parameter gradients over a whole stack: `upstream[t]` holds
/// the loss gradient with respect to attention map `t`. Returns the summed
/// `(d_slope, d_shift)` over every element.
pub fn attention_param_grads(
    diffs: &DiffStack,
    params: &PNParams,
    upstream: &[Array2<f64>],
) -> (f64, f64) {
    assert_eq!(diffs.len(), upstream.len(), "upstream slice count");
    let mut d_slope = 0.0;
    let mut d_shift = 0.0;
    for (m, up) in diffs.absolute.iter().zip(upstream) {
        for (&d, &u) in m.iter().zip(up.iter()) {
            let g = pn_grad(d, params, u);
            d_slope += g.d_slope;
            d_shift += g.d_shift;
        }
    }
    (d_slope, d_shift)
}
