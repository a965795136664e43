//! Seeded SGD training over (temporal block, ground-truth heatmap) pairs,
//! including the fine-tuning path that continues from pretrained weights.

use ndarray::{Array2, Array4, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::frames::TemporalBlock;
use crate::motion_prompt::{AttentionStack, DiffStack, attention, attention_param_grads, frame_diff};
use crate::net::layers::Scalar;
use crate::net::loss::{wbce_grad_logit, wbce_term};
use crate::net::weights::ModelWeights;
use crate::net::{FusionMode, HeatmapStack, Net, NetworkConfig, blocks_to_input, sigmoid_strict};

/// Training hyperparameters.
#[derive(Debug, Clone)]
pub struct TrainOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
    /// Multiplicative per-epoch learning-rate decay, e.g. 0.9.
    pub lr_decay: Option<f64>,
    /// Randomly mirror samples horizontally.
    pub flip_augment: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            lr: 1.0,
            epochs: 30,
            batch: 8,
            seed: 0,
            lr_decay: None,
            flip_augment: false,
        }
    }
}

/// Final weights plus the per-epoch mean loss trace.
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub weights: ModelWeights,
    pub epoch_losses: Vec<f64>,
}

/// Train from scratch (seeded init) or continue from `init` weights
/// (fine-tuning; the architecture must match, and a fusion mode enabled on
/// top of a fusion-free checkpoint starts the PN parameters fresh).
pub fn train(
    dataset: &[(TemporalBlock, HeatmapStack)],
    cfg: &NetworkConfig,
    opts: &TrainOptions,
    init: Option<&ModelWeights>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if opts.batch == 0 || opts.epochs == 0 {
        return Err(Error::InvalidConfig("batch and epochs must be >= 1".into()));
    }
    for (block, target) in dataset {
        if block.t_prime() != cfg.t_prime
            || block.width() != cfg.input_width
            || block.height() != cfg.input_height
        {
            return Err(Error::ShapeMismatch(format!(
                "dataset block ({} frames, {}x{}) does not match config ({} frames, {}x{})",
                block.t_prime(),
                block.width(),
                block.height(),
                cfg.t_prime,
                cfg.input_width,
                cfg.input_height
            )));
        }
        if target.len() != cfg.t_prime
            || target.map(0).dim() != (cfg.input_height, cfg.input_width)
        {
            return Err(Error::ShapeMismatch(
                "ground-truth heatmaps must match block shape".into(),
            ));
        }
    }

    // the training fast path runs in f32; gradient correctness of the
    // identical generic code is pinned by the f64 diagnostics
    let mut net: Net<f32> = match init {
        Some(w) => Net::from_weights_with_cfg(w, cfg)?,
        None => Net::new(cfg, opts.seed)?,
    };
    // separate stream from the weight-init RNG
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed ^ 0x9e37_79b9_7f4a_7c15);

    let mut epoch_losses = Vec::with_capacity(opts.epochs);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..opts.epochs {
        let lr = opts.lr * opts.lr_decay.unwrap_or(1.0).powi(epoch as i32);
        indices.shuffle(&mut rng);
        let mut epoch_sum = 0.0;
        let mut epoch_terms = 0usize;
        for (batch_no, chunk) in indices.chunks(opts.batch).enumerate() {
            let flips: Vec<bool> = chunk
                .iter()
                .map(|_| opts.flip_augment && rng.gen_bool(0.5))
                .collect();
            let loss = train_step(&mut net, dataset, chunk, &flips, lr)?;
            if !loss.is_finite() {
                return Err(Error::NanLoss {
                    epoch: epoch + 1,
                    batch: batch_no + 1,
                });
            }
            epoch_sum += loss * chunk.len() as f64;
            epoch_terms += chunk.len();
        }
        epoch_losses.push(epoch_sum / epoch_terms as f64);
    }

    Ok(TrainReport {
        weights: net.to_weights(),
        epoch_losses,
    })
}

/// One SGD step over a batch. Returns the mean per-pixel loss.
fn train_step<A: Scalar>(
    net: &mut Net<A>,
    dataset: &[(TemporalBlock, HeatmapStack)],
    chunk: &[usize],
    flips: &[bool],
    lr: f64,
) -> Result<f64> {
    let cfg = net.cfg.clone();
    let blocks: Vec<TemporalBlock> = chunk
        .iter()
        .zip(flips)
        .map(|(&i, &flip)| {
            if flip {
                dataset[i].0.flipped()
            } else {
                dataset[i].0.clone()
            }
        })
        .collect();
    let block_refs: Vec<&TemporalBlock> = blocks.iter().collect();

    let (bsz, t_prime) = (chunk.len(), cfg.t_prime);
    let (h, w) = (cfg.input_height, cfg.input_width);
    let mut targets = Array4::<f64>::zeros((bsz, t_prime, h, w));
    for (b, (&i, &flip)) in chunk.iter().zip(flips).enumerate() {
        let gt = &dataset[i].1;
        for t in 0..t_prime {
            let m = gt.map(t);
            for y in 0..h {
                for xx in 0..w {
                    let src_x = if flip { w - 1 - xx } else { xx };
                    targets[(b, t, y, xx)] = m[(y, src_x)];
                }
            }
        }
    }

    net.zero_grads();
    let loss = run_batch(net, &block_refs, &targets, true);
    if loss.is_finite() {
        net.sgd_step(lr);
    }
    Ok(loss)
}

/// Training-mode forward (batch statistics, fusion, loss) over one batch;
/// with `with_grads` the exact parameter gradients are accumulated into the
/// network. This is the single path shared by SGD steps and the gradient
/// diagnostics. Attention, PN gradients and the loss are always evaluated
/// in f64 regardless of the backbone element type.
pub(crate) fn run_batch<A: Scalar>(
    net: &mut Net<A>,
    block_refs: &[&TemporalBlock],
    targets: &Array4<f64>,
    with_grads: bool,
) -> f64 {
    let cfg = net.cfg.clone();
    let fusion = cfg.fusion_mode;
    let (bsz, t_prime) = (block_refs.len(), cfg.t_prime);
    let x: Array4<A> = blocks_to_input(block_refs);

    // motion attention per sample (data-dependent, no gradient into frames)
    let diffs_attn: Option<Vec<(DiffStack, Vec<Array2<A>>)>> = if fusion == FusionMode::Off {
        None
    } else {
        let pn = net.pn;
        Some(
            block_refs
                .par_iter()
                .map(|block| {
                    let d = frame_diff(block);
                    let a: AttentionStack = attention(&d, &pn);
                    let maps: Vec<Array2<A>> = match fusion {
                        FusionMode::V1 => {
                            a.maps().iter().map(|m| m.mapv(A::from_double)).collect()
                        }
                        // v2 only needs the mean attention map
                        FusionMode::V2 => vec![a.mean_map().mapv(A::from_double)],
                        FusionMode::Off => unreachable!(),
                    };
                    (d, maps)
                })
                .collect(),
        )
    };

    let (v, cache) = net.forward_train(x);

    // fuse into pre-sigmoid logits
    let mut z = v.clone();
    if let Some(da) = &diffs_attn {
        for b in 0..bsz {
            match fusion {
                FusionMode::V1 => {
                    for t in 1..t_prime {
                        let attn_map = &da[b].1[t - 1];
                        let mut zs = z.index_axis_mut(Axis(0), b);
                        let mut zt = zs.index_axis_mut(Axis(0), t);
                        zt.zip_mut_with(attn_map, |zv, &av| *zv *= av);
                    }
                }
                FusionMode::V2 => {
                    let mean = &da[b].1[0];
                    for t in 0..t_prime {
                        let mut zs = z.index_axis_mut(Axis(0), b);
                        let mut zt = zs.index_axis_mut(Axis(0), t);
                        zt.zip_mut_with(mean, |zv, &av| *zv *= av);
                    }
                }
                FusionMode::Off => unreachable!(),
            }
        }
    }

    // loss and gradient w.r.t. the logits (mean over every pixel);
    // partial sums are collected per chunk in order, then folded
    // sequentially, so the total is deterministic
    let count = z.len() as f64;
    let mut dz = Array4::<A>::zeros(z.raw_dim());
    const CHUNK: usize = 1 << 14;
    let partial_sums: Vec<f64> = dz
        .as_slice_mut()
        .expect("freshly allocated")
        .par_chunks_mut(CHUNK)
        .zip(z.as_slice().expect("standard layout").par_chunks(CHUNK))
        .zip(targets.as_slice().expect("standard layout").par_chunks(CHUNK))
        .map(|((dzc, zc), yc)| {
            let mut sum = 0.0;
            for ((dzv, zv), yv) in dzc.iter_mut().zip(zc).zip(yc) {
                let zf = zv.as_double();
                sum += wbce_term(sigmoid_strict(zf), *yv);
                *dzv = A::from_double(wbce_grad_logit(zf, *yv) / count);
            }
            sum
        })
        .collect();
    let loss = partial_sums.iter().sum::<f64>() / count;
    if !with_grads || !loss.is_finite() {
        return loss;
    }

    // fusion backward: gradient into features and into the PN parameters
    let mut dv = dz.clone();
    if let Some(da) = &diffs_attn {
        let mut g_slope = 0.0;
        let mut g_shift = 0.0;
        let pn = net.pn;
        match fusion {
            FusionMode::V1 => {
                for b in 0..bsz {
                    let mut upstream: Vec<Array2<f64>> = Vec::with_capacity(t_prime - 1);
                    for t in 1..t_prime {
                        let attn_map = &da[b].1[t - 1];
                        let vt = v.index_axis(Axis(0), b);
                        let vt = vt.index_axis(Axis(0), t);
                        let dzt = dz.index_axis(Axis(0), b);
                        let dzt = dzt.index_axis(Axis(0), t);
                        // d attention = dz * V
                        let mut up = Array2::<f64>::zeros(vt.raw_dim());
                        ndarray::Zip::from(&mut up).and(&dzt).and(&vt).for_each(
                            |u, &d, &vv| *u = d.as_double() * vv.as_double(),
                        );
                        upstream.push(up);
                        // d V = dz * attention
                        let mut dvs = dv.index_axis_mut(Axis(0), b);
                        let mut dvt = dvs.index_axis_mut(Axis(0), t);
                        ndarray::Zip::from(&mut dvt)
                            .and(&dzt)
                            .and(attn_map)
                            .for_each(|o, &d, &a| *o = d * a);
                    }
                    let (gs, gm) = attention_param_grads(&da[b].0, &pn, &upstream);
                    g_slope += gs;
                    g_shift += gm;
                }
            }
            FusionMode::V2 => {
                let n_attn = (t_prime - 1) as f64;
                for b in 0..bsz {
                    let mean = &da[b].1[0];
                    let mut d_mean = Array2::<f64>::zeros(mean.raw_dim());
                    for t in 0..t_prime {
                        let vt = v.index_axis(Axis(0), b);
                        let vt = vt.index_axis(Axis(0), t);
                        let dzt = dz.index_axis(Axis(0), b);
                        let dzt = dzt.index_axis(Axis(0), t);
                        ndarray::Zip::from(&mut d_mean).and(&dzt).and(&vt).for_each(
                            |u, &d, &vv| *u += d.as_double() * vv.as_double(),
                        );
                        let mut dvs = dv.index_axis_mut(Axis(0), b);
                        let mut dvt = dvs.index_axis_mut(Axis(0), t);
                        ndarray::Zip::from(&mut dvt)
                            .and(&dzt)
                            .and(mean)
                            .for_each(|o, &d, &a| *o = d * a);
                    }
                    // each attention map receives d_mean / (T' - 1)
                    let per_map = d_mean.mapv(|g| g / n_attn);
                    let upstream: Vec<Array2<f64>> =
                        (0..t_prime - 1).map(|_| per_map.clone()).collect();
                    let (gs, gm) = attention_param_grads(&da[b].0, &pn, &upstream);
                    g_slope += gs;
                    g_shift += gm;
                }
            }
            FusionMode::Off => unreachable!(),
        }
        net.pn_grad = (g_slope, g_shift);
    }

    net.backward(&cache, &dv);
    loss
}
