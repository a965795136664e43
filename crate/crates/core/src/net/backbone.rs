//! The compact encoder-decoder backbone: `levels` conv blocks downsampled
//! by 2x max pooling, a bottleneck, then mirrored upsampling with optional
//! skip concatenation, and a 1x1 head that emits one pre-sigmoid feature
//! map per input frame. Input is the T' RGB frames stacked to 3T' channels.

use ndarray::Array4;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::error::{Error, Result};
use crate::motion_prompt::PNParams;
use crate::net::layers::{
    BatchNorm2d, BnCache, Conv2d, Scalar, concat_ch, max_pool2, max_pool2_backward, relu,
    relu_backward, split_ch, upsample2, upsample2_backward,
};
use crate::net::weights::{ModelWeights, WeightBlock};
use crate::net::{FusionMode, NetworkConfig};

/// Channel count at encoder level `i` (0-based).
fn level_channels(cfg: &NetworkConfig, i: usize) -> usize {
    cfg.base_channels << i
}

/// conv 3x3 -> BN -> ReLU, twice.
#[derive(Debug, Clone)]
pub(crate) struct ConvBlock<A> {
    conv1: Conv2d<A>,
    bn1: BatchNorm2d<A>,
    conv2: Conv2d<A>,
    bn2: BatchNorm2d<A>,
}

/// Per-block training tape: BN caches plus the intermediate activation.
/// The block's input and output live in the network-level cache, so
/// nothing is stored twice.
pub(crate) struct ConvBlockCache<A> {
    bn1: BnCache<A>,
    r1: Array4<A>,
    bn2: BnCache<A>,
}

impl<A: Scalar> ConvBlock<A> {
    fn new(prefix: &str, cin: usize, cout: usize) -> Self {
        ConvBlock {
            conv1: Conv2d::new(format!("{prefix}.conv1"), cin, cout, 3, 1),
            bn1: BatchNorm2d::new(format!("{prefix}.bn1"), cout),
            conv2: Conv2d::new(format!("{prefix}.conv2"), cout, cout, 3, 1),
            bn2: BatchNorm2d::new(format!("{prefix}.bn2"), cout),
        }
    }

    fn init(&mut self, rng: &mut ChaCha20Rng) {
        self.conv1.init(rng);
        self.conv2.init(rng);
    }

    fn forward_train(&mut self, x: &Array4<A>) -> (Array4<A>, ConvBlockCache<A>) {
        let z1 = self.conv1.forward(x);
        let (n1, bn1) = self.bn1.forward_train(&z1);
        let r1 = relu(&n1);
        let z2 = self.conv2.forward(&r1);
        let (n2, bn2) = self.bn2.forward_train(&z2);
        let y = relu(&n2);
        (y, ConvBlockCache { bn1, r1, bn2 })
    }

    fn forward_eval(&self, x: &Array4<A>) -> Array4<A> {
        let r1 = relu(&self.bn1.forward_eval(&self.conv1.forward(x)));
        relu(&self.bn2.forward_eval(&self.conv2.forward(&r1)))
    }

    /// `x` and `y` are the block's forward input/output from the network
    /// cache.
    fn backward(
        &mut self,
        x: &Array4<A>,
        y: &Array4<A>,
        cache: &ConvBlockCache<A>,
        dy: &Array4<A>,
    ) -> Array4<A> {
        let dn2 = relu_backward(y, dy);
        let dz2 = self.bn2.backward(&cache.bn2, &dn2);
        let dr1 = self.conv2.backward(&cache.r1, &dz2);
        let dn1 = relu_backward(&cache.r1, &dr1);
        let dz1 = self.bn1.backward(&cache.bn1, &dn1);
        self.conv1.backward(x, &dz1)
    }

    fn zero_grads(&mut self) {
        self.conv1.zero_grads();
        self.bn1.zero_grads();
        self.conv2.zero_grads();
        self.bn2.zero_grads();
    }

    fn sgd_step(&mut self, lr: f64) {
        self.conv1.sgd_step(lr);
        self.bn1.sgd_step(lr);
        self.conv2.sgd_step(lr);
        self.bn2.sgd_step(lr);
    }
}

/// The assembled network: backbone plus the PN motion-prompt parameters.
/// The PN parameters always live in f64; only the backbone tensors follow
/// the element type.
pub(crate) struct Net<A> {
    pub cfg: NetworkConfig,
    enc: Vec<ConvBlock<A>>,
    bottleneck: ConvBlock<A>,
    dec: Vec<ConvBlock<A>>, // deepest level first
    head: Conv2d<A>,
    pub pn: PNParams,
    pub pn_grad: (f64, f64),
}

/// Activation tape for one training-mode forward pass: every intermediate
/// tensor exactly once.
pub(crate) struct NetCache<A> {
    /// Inputs to each encoder block (element 0 is the network input) plus
    /// the bottleneck input at the end.
    ins: Vec<Array4<A>>,
    /// Encoder block outputs, pre-pool (the skip tensors).
    enc_out: Vec<Array4<A>>,
    enc_tapes: Vec<ConvBlockCache<A>>,
    pools: Vec<(Array4<u32>, usize, usize)>,
    bott_out: Array4<A>,
    bott_tape: ConvBlockCache<A>,
    /// Decoder block inputs (upsampled, optionally concatenated with skips).
    dec_in: Vec<Array4<A>>,
    dec_out: Vec<Array4<A>>,
    dec_tapes: Vec<ConvBlockCache<A>>,
}

impl<A: Scalar> Net<A> {
    fn build(cfg: &NetworkConfig, pn: PNParams) -> Net<A> {
        let levels = cfg.levels;
        let mut enc = Vec::with_capacity(levels);
        for i in 0..levels {
            let cin = if i == 0 {
                3 * cfg.t_prime
            } else {
                level_channels(cfg, i - 1)
            };
            enc.push(ConvBlock::new(
                &format!("enc{}", i + 1),
                cin,
                level_channels(cfg, i),
            ));
        }
        let bottleneck = ConvBlock::new(
            "bottleneck",
            level_channels(cfg, levels - 1),
            level_channels(cfg, levels),
        );
        let mut dec = Vec::with_capacity(levels);
        for l in (0..levels).rev() {
            let from_above = level_channels(cfg, l + 1);
            let cin = if cfg.skip_connections {
                from_above + level_channels(cfg, l)
            } else {
                from_above
            };
            dec.push(ConvBlock::new(
                &format!("dec{}", l + 1),
                cin,
                level_channels(cfg, l),
            ));
        }
        let head = Conv2d::new("head", cfg.base_channels, cfg.t_prime, 1, 0);
        Net {
            cfg: cfg.clone(),
            enc,
            bottleneck,
            dec,
            head,
            pn,
            pn_grad: (0.0, 0.0),
        }
    }

    /// Fresh network with seeded fan-in-scaled uniform initialization.
    pub fn new(cfg: &NetworkConfig, seed: u64) -> Result<Net<A>> {
        cfg.validate()?;
        let mut net = Net::build(cfg, PNParams::init());
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        for block in &mut net.enc {
            block.init(&mut rng);
        }
        net.bottleneck.init(&mut rng);
        for block in &mut net.dec {
            block.init(&mut rng);
        }
        net.head.init(&mut rng);
        Ok(net)
    }

    /// Pre-sigmoid feature maps `(B, T', H, W)` in training mode: batch
    /// statistics inside BN, activation tape returned for the backward pass.
    pub fn forward_train(&mut self, x: Array4<A>) -> (Array4<A>, NetCache<A>) {
        let levels = self.enc.len();
        let mut ins = Vec::with_capacity(levels + 1);
        ins.push(x);
        let mut enc_out = Vec::with_capacity(levels);
        let mut enc_tapes = Vec::with_capacity(levels);
        let mut pools = Vec::with_capacity(levels);
        for (i, block) in self.enc.iter_mut().enumerate() {
            let (y, tape) = block.forward_train(&ins[i]);
            let (h, w) = (y.dim().2, y.dim().3);
            let (pooled, idx) = max_pool2(&y);
            enc_out.push(y);
            enc_tapes.push(tape);
            pools.push((idx, h, w));
            ins.push(pooled);
        }
        let (bott_out, bott_tape) = self.bottleneck.forward_train(&ins[levels]);
        let mut dec_in = Vec::with_capacity(levels);
        let mut dec_out: Vec<Array4<A>> = Vec::with_capacity(levels);
        let mut dec_tapes = Vec::with_capacity(levels);
        for (j, block) in self.dec.iter_mut().enumerate() {
            let prev = if j == 0 { &bott_out } else { &dec_out[j - 1] };
            let up = upsample2(prev);
            let level = levels - 1 - j;
            let joined = if self.cfg.skip_connections {
                concat_ch(&up, &enc_out[level])
            } else {
                up
            };
            let (y, tape) = block.forward_train(&joined);
            dec_in.push(joined);
            dec_out.push(y);
            dec_tapes.push(tape);
        }
        let v = self.head.forward(&dec_out[levels - 1]);
        (
            v,
            NetCache {
                ins,
                enc_out,
                enc_tapes,
                pools,
                bott_out,
                bott_tape,
                dec_in,
                dec_out,
                dec_tapes,
            },
        )
    }

    /// Deterministic inference pass using frozen BN statistics.
    pub fn forward_eval(&self, x: &Array4<A>) -> Array4<A> {
        let mut a = x.clone();
        let mut skips = Vec::with_capacity(self.enc.len());
        for block in &self.enc {
            let y = block.forward_eval(&a);
            let (pooled, _) = max_pool2(&y);
            skips.push(y);
            a = pooled;
        }
        a = self.bottleneck.forward_eval(&a);
        for (j, block) in self.dec.iter().enumerate() {
            let up = upsample2(&a);
            let level = self.enc.len() - 1 - j;
            let joined = if self.cfg.skip_connections {
                concat_ch(&up, &skips[level])
            } else {
                up
            };
            a = block.forward_eval(&joined);
        }
        self.head.forward(&a)
    }

    /// Backpropagate `dv` (gradient w.r.t. the pre-sigmoid features) and
    /// accumulate parameter gradients.
    pub fn backward(&mut self, cache: &NetCache<A>, dv: &Array4<A>) {
        let levels = self.enc.len();
        let mut da = self.head.backward(&cache.dec_out[levels - 1], dv);
        let mut skip_grads: Vec<Option<Array4<A>>> = vec![None; levels];
        for (j, block) in self.dec.iter_mut().enumerate().rev() {
            let d_joined = block.backward(&cache.dec_in[j], &cache.dec_out[j], &cache.dec_tapes[j], &da);
            let level = levels - 1 - j;
            let d_up = if self.cfg.skip_connections {
                let up_channels = level_channels(&self.cfg, level + 1);
                let (d_up, d_skip) = split_ch(&d_joined, up_channels);
                skip_grads[level] = Some(d_skip);
                d_up
            } else {
                d_joined
            };
            da = upsample2_backward(&d_up);
        }
        da = self
            .bottleneck
            .backward(&cache.ins[levels], &cache.bott_out, &cache.bott_tape, &da);
        for (i, block) in self.enc.iter_mut().enumerate().rev() {
            let (idx, h, w) = &cache.pools[i];
            let mut d_y = max_pool2_backward(&da, idx, *h, *w);
            if let Some(d_skip) = &skip_grads[i] {
                d_y += d_skip;
            }
            da = block.backward(&cache.ins[i], &cache.enc_out[i], &cache.enc_tapes[i], &d_y);
        }
    }

    pub fn zero_grads(&mut self) {
        for block in &mut self.enc {
            block.zero_grads();
        }
        self.bottleneck.zero_grads();
        for block in &mut self.dec {
            block.zero_grads();
        }
        self.head.zero_grads();
        self.pn_grad = (0.0, 0.0);
    }

    pub fn sgd_step(&mut self, lr: f64) {
        for block in &mut self.enc {
            block.sgd_step(lr);
        }
        self.bottleneck.sgd_step(lr);
        for block in &mut self.dec {
            block.sgd_step(lr);
        }
        self.head.sgd_step(lr);
        if self.cfg.fusion_mode != FusionMode::Off {
            let (gs, gm) = self.pn_grad;
            self.pn.apply_step(gs, gm, lr);
        }
    }

    fn conv_blocks(&self) -> Vec<&ConvBlock<A>> {
        let mut blocks: Vec<&ConvBlock<A>> = self.enc.iter().collect();
        blocks.push(&self.bottleneck);
        blocks.extend(self.dec.iter());
        blocks
    }

    fn conv_blocks_mut(&mut self) -> Vec<&mut ConvBlock<A>> {
        let mut blocks: Vec<&mut ConvBlock<A>> = self.enc.iter_mut().collect();
        blocks.push(&mut self.bottleneck);
        blocks.extend(self.dec.iter_mut());
        blocks
    }

    /// Export every parameter block (plus PN when fusion is enabled) in the
    /// canonical serialization order.
    pub fn to_weights(&self) -> ModelWeights {
        let mut blocks = Vec::new();
        for cb in self.conv_blocks() {
            push_conv(&mut blocks, &cb.conv1);
            push_bn(&mut blocks, &cb.bn1);
            push_conv(&mut blocks, &cb.conv2);
            push_bn(&mut blocks, &cb.bn2);
        }
        push_conv(&mut blocks, &self.head);
        if self.cfg.fusion_mode != FusionMode::Off {
            blocks.push(WeightBlock {
                name: "pn".into(),
                dims: vec![2],
                data: vec![self.pn.slope(), self.pn.shift()],
            });
        }
        ModelWeights::from_parts(self.cfg.clone(), blocks)
    }

    /// Accumulated gradients of every trainable parameter, keyed by the
    /// same names as the serialized blocks.
    pub fn grad_blocks(&self) -> Vec<(String, Vec<f64>)> {
        fn grad<A: Scalar>(values: impl IntoIterator<Item = A>) -> Vec<f64> {
            values.into_iter().map(|v| v.as_double()).collect()
        }
        let mut out = Vec::new();
        for cb in self.conv_blocks() {
            out.push((format!("{}.weight", cb.conv1.name), grad(cb.conv1.gw.iter().copied())));
            out.push((format!("{}.bias", cb.conv1.name), grad(cb.conv1.gb.iter().copied())));
            out.push((format!("{}.gamma", cb.bn1.name), grad(cb.bn1.g_gamma.iter().copied())));
            out.push((format!("{}.beta", cb.bn1.name), grad(cb.bn1.g_beta.iter().copied())));
            out.push((format!("{}.weight", cb.conv2.name), grad(cb.conv2.gw.iter().copied())));
            out.push((format!("{}.bias", cb.conv2.name), grad(cb.conv2.gb.iter().copied())));
            out.push((format!("{}.gamma", cb.bn2.name), grad(cb.bn2.g_gamma.iter().copied())));
            out.push((format!("{}.beta", cb.bn2.name), grad(cb.bn2.g_beta.iter().copied())));
        }
        out.push(("head.weight".to_string(), grad(self.head.gw.iter().copied())));
        out.push(("head.bias".to_string(), grad(self.head.gb.iter().copied())));
        if self.cfg.fusion_mode != FusionMode::Off {
            out.push(("pn".to_string(), vec![self.pn_grad.0, self.pn_grad.1]));
        }
        out
    }

    /// Rebuild a network from serialized weights, validating every shape.
    pub fn from_weights(w: &ModelWeights) -> Result<Net<A>> {
        Net::from_weights_with_cfg(w, w.config())
    }

    /// Rebuild with an overriding config (fine-tuning may switch the fusion
    /// mode on top of a pretrained backbone). Architecture fields must
    /// match; a missing PN block falls back to the default initialization.
    pub fn from_weights_with_cfg(w: &ModelWeights, cfg: &NetworkConfig) -> Result<Net<A>> {
        cfg.validate()?;
        let wc = w.config();
        if (wc.t_prime, wc.input_width, wc.input_height, wc.base_channels, wc.levels, wc.skip_connections)
            != (cfg.t_prime, cfg.input_width, cfg.input_height, cfg.base_channels, cfg.levels, cfg.skip_connections)
        {
            return Err(Error::InvalidConfig(
                "model architecture does not match the requested configuration".into(),
            ));
        }
        let pn = w.pn_params()?.unwrap_or_default();
        let mut net = Net::build(cfg, pn);
        for cb in net.conv_blocks_mut() {
            load_conv(w, &mut cb.conv1)?;
            load_bn(w, &mut cb.bn1)?;
            load_conv(w, &mut cb.conv2)?;
            load_bn(w, &mut cb.bn2)?;
        }
        load_conv(w, &mut net.head)?;
        Ok(net)
    }
}

fn push_conv<A: Scalar>(out: &mut Vec<WeightBlock>, conv: &Conv2d<A>) {
    out.push(WeightBlock {
        name: format!("{}.weight", conv.name),
        dims: vec![conv.cout, conv.cin, conv.k, conv.k],
        data: conv.w.iter().map(|v| v.as_double()).collect(),
    });
    out.push(WeightBlock {
        name: format!("{}.bias", conv.name),
        dims: vec![conv.cout],
        data: conv.b.iter().map(|v| v.as_double()).collect(),
    });
}

fn push_bn<A: Scalar>(out: &mut Vec<WeightBlock>, bn: &BatchNorm2d<A>) {
    for (suffix, values) in [
        ("gamma", &bn.gamma),
        ("beta", &bn.beta),
        ("running_mean", &bn.running_mean),
        ("running_var", &bn.running_var),
    ] {
        out.push(WeightBlock {
            name: format!("{}.{suffix}", bn.name),
            dims: vec![bn.c],
            data: values.iter().map(|v| v.as_double()).collect(),
        });
    }
}

fn fetch<'w>(w: &'w ModelWeights, name: &str, dims: &[usize]) -> Result<&'w WeightBlock> {
    let block = w
        .block(name)
        .ok_or_else(|| Error::ModelFormat(format!("missing parameter block {name}")))?;
    if block.dims != dims {
        return Err(Error::ModelFormat(format!(
            "parameter block {name} has shape {:?}, expected {:?}",
            block.dims, dims
        )));
    }
    Ok(block)
}

fn load_conv<A: Scalar>(w: &ModelWeights, conv: &mut Conv2d<A>) -> Result<()> {
    let wb = fetch(
        w,
        &format!("{}.weight", conv.name),
        &[conv.cout, conv.cin, conv.k, conv.k],
    )?;
    for (dst, src) in conv.w.iter_mut().zip(&wb.data) {
        *dst = A::from_double(*src);
    }
    let bb = fetch(w, &format!("{}.bias", conv.name), &[conv.cout])?;
    for (dst, src) in conv.b.iter_mut().zip(&bb.data) {
        *dst = A::from_double(*src);
    }
    Ok(())
}

fn load_bn<A: Scalar>(w: &ModelWeights, bn: &mut BatchNorm2d<A>) -> Result<()> {
    for (suffix, target) in [
        ("gamma", &mut bn.gamma),
        ("beta", &mut bn.beta),
        ("running_mean", &mut bn.running_mean),
        ("running_var", &mut bn.running_var),
    ] {
        let block = fetch(w, &format!("{}.{suffix}", bn.name), &[bn.c])?;
        for (dst, src) in target.iter_mut().zip(&block.data) {
            *dst = A::from_double(*src);
        }
    }
    Ok(())
}
