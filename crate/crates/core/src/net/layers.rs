//! Hand-rolled differentiable layers on batch tensors of shape
//! `(batch, channels, height, width)`, generic over f32/f64. Convolution
//! runs as im2col + GEMM; every layer has an exact analytic backward pass.
//! The f64 instantiation backs inference and the gradient diagnostics, the
//! f32 instantiation the training fast path.

use ndarray::{Array1, Array2, Array4, Axis, s};
use rand::distributions::{Distribution, Uniform};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

/// Element type of the network tensors.
pub trait Scalar:
    ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + num_traits::Float
    + num_traits::NumAssign
    + Send
    + Sync
    + std::fmt::Debug
    + std::fmt::Display
    + 'static
{
    fn from_double(v: f64) -> Self;
    fn as_double(self) -> f64;
}

impl Scalar for f32 {
    fn from_double(v: f64) -> f32 {
        v as f32
    }
    fn as_double(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_double(v: f64) -> f64 {
        v
    }
    fn as_double(self) -> f64 {
        self
    }
}

/// Stride-1 convolution with square kernels (3x3 pad 1 or 1x1 pad 0).
/// Weights are stored GEMM-ready as `(cout, cin * k * k)`.
#[derive(Debug, Clone)]
pub struct Conv2d<A> {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub k: usize,
    pub pad: usize,
    pub w: Array2<A>,
    pub b: Array1<A>,
    pub gw: Array2<A>,
    pub gb: Array1<A>,
}

impl<A: Scalar> Conv2d<A> {
    pub fn new(name: impl Into<String>, cin: usize, cout: usize, k: usize, pad: usize) -> Self {
        Conv2d {
            name: name.into(),
            cin,
            cout,
            k,
            pad,
            w: Array2::zeros((cout, cin * k * k)),
            b: Array1::zeros(cout),
            gw: Array2::zeros((cout, cin * k * k)),
            gb: Array1::zeros(cout),
        }
    }

    /// Fan-in-scaled uniform init (bound `sqrt(6 / fan_in)`); biases zero.
    /// Draws happen in f64 so every instantiation sees the same stream.
    pub fn init(&mut self, rng: &mut ChaCha20Rng) {
        let fan_in = (self.cin * self.k * self.k) as f64;
        let bound = (6.0 / fan_in).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound);
        for v in self.w.iter_mut() {
            *v = A::from_double(dist.sample(rng));
        }
        self.b.fill(A::zero());
    }

    fn chunk_size(bsz: usize) -> usize {
        bsz.div_ceil(rayon::current_num_threads()).max(1)
    }

    pub fn forward(&self, x: &Array4<A>) -> Array4<A> {
        let (bsz, cin, h, w) = x.dim();
        assert_eq!(cin, self.cin, "{}: input channels", self.name);
        let (k, pad) = (self.k, self.pad);
        let (oh, ow) = (h + 2 * pad - k + 1, w + 2 * pad - k + 1);
        let mut y = Array4::<A>::zeros((bsz, self.cout, oh, ow));
        let chunk = Self::chunk_size(bsz);
        let ws = self.w.as_slice().expect("standard layout");
        y.axis_chunks_iter_mut(Axis(0), chunk)
            .into_par_iter()
            .zip(x.axis_chunks_iter(Axis(0), chunk))
            .for_each(|(mut yc, xc)| {
                let xs = xc.as_slice().expect("contiguous input chunk");
                let ys = yc.as_slice_mut().expect("contiguous output chunk");
                let mut acc = vec![A::zero(); ow];
                for b in 0..xc.dim().0 {
                    let x_base = b * cin * h * w;
                    let y_base = b * self.cout * oh * ow;
                    for co in 0..self.cout {
                        let w_base = co * cin * k * k;
                        for oy in 0..oh {
                            acc.fill(self.b[co]);
                            for ci in 0..cin {
                                for di in 0..k {
                                    let iy = oy + di;
                                    if iy < pad || iy >= h + pad {
                                        continue;
                                    }
                                    let x_row = &xs[x_base + (ci * h + iy - pad) * w..][..w];
                                    for dj in 0..k {
                                        let (lo, hi, shift) = tap_range(w, ow, dj, pad);
                                        if lo >= hi {
                                            continue;
                                        }
                                        let wv = ws[w_base + (ci * k + di) * k + dj];
                                        let src = &x_row[(lo as isize + shift) as usize..]
                                            [..hi - lo];
                                        let dst = &mut acc[lo..hi];
                                        for (a, v) in dst.iter_mut().zip(src) {
                                            *a += wv * *v;
                                        }
                                    }
                                }
                            }
                            ys[y_base + (co * oh + oy) * ow..][..ow].copy_from_slice(&acc);
                        }
                    }
                }
            });
        y
    }

    /// Backward pass: accumulates weight/bias gradients and returns the
    /// gradient with respect to the input. `x` must be the tensor the
    /// forward pass consumed.
    pub fn backward(&mut self, x: &Array4<A>, dy: &Array4<A>) -> Array4<A> {
        let (bsz, cin, h, w) = x.dim();
        let (_, cout, oh, ow) = dy.dim();
        assert_eq!(cout, self.cout, "{}: grad channels", self.name);
        let (k, pad) = (self.k, self.pad);
        let kk = cin * k * k;
        let mut dx = Array4::<A>::zeros((bsz, cin, h, w));
        let chunk = Self::chunk_size(bsz);
        let ws = self.w.as_slice().expect("standard layout");
        // contiguous chunks in parallel; partial weight grads merge in
        // chunk order afterwards so the result is deterministic
        let partials: Vec<(Array2<A>, Array1<A>)> = dx
            .axis_chunks_iter_mut(Axis(0), chunk)
            .into_par_iter()
            .zip(x.axis_chunks_iter(Axis(0), chunk))
            .zip(dy.axis_chunks_iter(Axis(0), chunk))
            .map(|((mut dxc, xc), dyc)| {
                let xs = xc.as_slice().expect("contiguous input chunk");
                let dys = dyc.as_slice().expect("contiguous grad chunk");
                let dxs = dxc.as_slice_mut().expect("contiguous grad chunk");
                let mut dw = Array2::<A>::zeros((cout, kk));
                let mut db = Array1::<A>::zeros(cout);
                let dws = dw.as_slice_mut().expect("standard layout");
                for b in 0..xc.dim().0 {
                    let x_base = b * cin * h * w;
                    let dy_base = b * cout * oh * ow;
                    let dx_base = b * cin * h * w;
                    for co in 0..cout {
                        let w_base = co * kk;
                        for oy in 0..oh {
                            let dy_row = &dys[dy_base + (co * oh + oy) * ow..][..ow];
                            let mut row_sum = A::zero();
                            for v in dy_row {
                                row_sum += *v;
                            }
                            db[co] += row_sum;
                            for ci in 0..cin {
                                for di in 0..k {
                                    let iy = oy + di;
                                    if iy < pad || iy >= h + pad {
                                        continue;
                                    }
                                    let x_off = x_base + (ci * h + iy - pad) * w;
                                    let dx_off = dx_base + (ci * h + iy - pad) * w;
                                    for dj in 0..k {
                                        let (lo, hi, shift) = tap_range(w, ow, dj, pad);
                                        if lo >= hi {
                                            continue;
                                        }
                                        let widx = w_base + (ci * k + di) * k + dj;
                                        let wv = ws[widx];
                                        let in_lo = (lo as isize + shift) as usize;
                                        // dW tap: dot of dy row with shifted x row
                                        let x_row = &xs[x_off + in_lo..][..hi - lo];
                                        let dy_seg = &dy_row[lo..hi];
                                        dws[widx] += dot8(dy_seg, x_row);
                                        // dX tap: scatter dy back through the kernel
                                        let dx_row = &mut dxs[dx_off + in_lo..][..hi - lo];
                                        for (d, a) in dx_row.iter_mut().zip(dy_seg) {
                                            *d += wv * *a;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                (dw, db)
            })
            .collect();
        for (dw, db) in partials {
            self.gw += &dw;
            self.gb += &db;
        }
        dx
    }

    pub fn zero_grads(&mut self) {
        self.gw.fill(A::zero());
        self.gb.fill(A::zero());
    }

    pub fn sgd_step(&mut self, lr: f64) {
        let lr = A::from_double(lr);
        self.w.zip_mut_with(&self.gw, |w, g| *w -= lr * *g);
        self.b.zip_mut_with(&self.gb, |b, g| *b -= lr * *g);
    }
}

/// Valid output/input column ranges for one kernel tap at stride 1.
/// Returns `(o_lo, o_hi, shift)` with `input = output + shift`.
fn tap_range(extent: usize, out_extent: usize, tap: usize, pad: usize) -> (usize, usize, isize) {
    let shift = tap as isize - pad as isize;
    let lo = (-shift).max(0) as usize;
    let hi = out_extent.min((extent as isize - shift).max(0) as usize);
    (lo, hi, shift)
}

/// Dot product with eight fixed-order accumulators so the loop vectorizes
/// without floating-point reassociation; fully deterministic.
fn dot8<A: Scalar>(a: &[A], b: &[A]) -> A {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [A::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for lane in 0..8 {
            let j = i * 8 + lane;
            acc[lane] += a[j] * b[j];
        }
    }
    let mut tail = A::zero();
    for j in chunks * 8..a.len() {
        tail += a[j] * b[j];
    }
    let pair0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let pair1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    pair0 + pair1 + tail
}

/// Fixed-order vectorizable sum (same accumulator scheme as `dot8`).
fn sum8<A: Scalar>(a: &[A]) -> A {
    let mut acc = [A::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for lane in 0..8 {
            acc[lane] += a[i * 8 + lane];
        }
    }
    let mut tail = A::zero();
    for v in &a[chunks * 8..] {
        tail += *v;
    }
    let pair0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let pair1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    pair0 + pair1 + tail
}

/// Fixed-order sum of squared deviations from `mean`.
fn sq8<A: Scalar>(a: &[A], mean: A) -> A {
    let mut acc = [A::zero(); 8];
    let chunks = a.len() / 8;
    for i in 0..chunks {
        for lane in 0..8 {
            let d = a[i * 8 + lane] - mean;
            acc[lane] += d * d;
        }
    }
    let mut tail = A::zero();
    for v in &a[chunks * 8..] {
        let d = *v - mean;
        tail += d * d;
    }
    let pair0 = (acc[0] + acc[4]) + (acc[2] + acc[6]);
    let pair1 = (acc[1] + acc[5]) + (acc[3] + acc[7]);
    pair0 + pair1 + tail
}

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and updates running averages; eval mode uses the frozen
/// running statistics for deterministic inference.
#[derive(Debug, Clone)]
pub struct BatchNorm2d<A> {
    pub name: String,
    pub c: usize,
    pub gamma: Array1<A>,
    pub beta: Array1<A>,
    pub running_mean: Array1<A>,
    pub running_var: Array1<A>,
    pub g_gamma: Array1<A>,
    pub g_beta: Array1<A>,
    pub eps: f64,
    pub momentum: f64,
}

pub struct BnCache<A> {
    xhat: Array4<A>,
    invstd: Array1<A>,
}

impl<A: Scalar> BatchNorm2d<A> {
    pub fn new(name: impl Into<String>, c: usize) -> Self {
        BatchNorm2d {
            name: name.into(),
            c,
            gamma: Array1::ones(c),
            beta: Array1::zeros(c),
            running_mean: Array1::zeros(c),
            running_var: Array1::ones(c),
            g_gamma: Array1::zeros(c),
            g_beta: Array1::zeros(c),
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn forward_train(&mut self, x: &Array4<A>) -> (Array4<A>, BnCache<A>) {
        let (bsz, c, h, w) = x.dim();
        assert_eq!(c, self.c, "{}: channels", self.name);
        let plane = h * w;
        let n = A::from_double((bsz * plane) as f64);
        let mut xhat = Array4::<A>::zeros((bsz, c, h, w));
        let mut invstd = Array1::<A>::zeros(c);
        let mut y = Array4::<A>::zeros((bsz, c, h, w));
        let xs = x.as_slice().expect("standard layout");
        let xh = xhat.as_slice_mut().expect("freshly allocated");
        let ys = y.as_slice_mut().expect("freshly allocated");
        let momentum = A::from_double(self.momentum);
        let keep = A::one() - momentum;
        // per-channel batch statistics (deterministic: sequential per channel)
        let stats: Vec<(A, A)> = (0..c)
            .into_par_iter()
            .map(|ci| {
                let mut sum = A::zero();
                for b in 0..bsz {
                    sum += sum8(&xs[(b * c + ci) * plane..][..plane]);
                }
                let mean = sum / n;
                let mut sq = A::zero();
                for b in 0..bsz {
                    sq += sq8(&xs[(b * c + ci) * plane..][..plane], mean);
                }
                (mean, sq / n)
            })
            .collect();
        let mut means = Vec::with_capacity(c);
        for (ci, (mean, var)) in stats.iter().enumerate() {
            invstd[ci] = A::one() / (*var + A::from_double(self.eps)).sqrt();
            means.push(*mean);
            self.running_mean[ci] = keep * self.running_mean[ci] + momentum * *mean;
            self.running_var[ci] = keep * self.running_var[ci] + momentum * *var;
        }
        // normalization writes disjoint per-sample planes in parallel
        let sample = c * plane;
        xh.par_chunks_mut(sample)
            .zip(ys.par_chunks_mut(sample))
            .zip(xs.par_chunks(sample))
            .for_each(|((xh_s, y_s), x_s)| {
                for ci in 0..c {
                    let (mean, is) = (means[ci], invstd[ci]);
                    let (g, beta) = (self.gamma[ci], self.beta[ci]);
                    let src = &x_s[ci * plane..][..plane];
                    let xh_p = &mut xh_s[ci * plane..][..plane];
                    let y_p = &mut y_s[ci * plane..][..plane];
                    for i in 0..plane {
                        let v = (src[i] - mean) * is;
                        xh_p[i] = v;
                        y_p[i] = g * v + beta;
                    }
                }
            });
        (y, BnCache { xhat, invstd })
    }

    pub fn forward_eval(&self, x: &Array4<A>) -> Array4<A> {
        let (bsz, c, h, w) = x.dim();
        assert_eq!(c, self.c, "{}: channels", self.name);
        let plane = h * w;
        let mut y = Array4::<A>::zeros((bsz, c, h, w));
        let xs = x.as_slice().expect("standard layout");
        let ys = y.as_slice_mut().expect("freshly allocated");
        for ci in 0..c {
            let is = A::one() / (self.running_var[ci] + A::from_double(self.eps)).sqrt();
            let (m, g, b) = (self.running_mean[ci], self.gamma[ci], self.beta[ci]);
            for bi in 0..bsz {
                let base = (bi * c + ci) * plane;
                let src = &xs[base..][..plane];
                let dst = &mut ys[base..][..plane];
                for i in 0..plane {
                    dst[i] = g * (src[i] - m) * is + b;
                }
            }
        }
        y
    }

    pub fn backward(&mut self, cache: &BnCache<A>, dy: &Array4<A>) -> Array4<A> {
        let (bsz, c, h, w) = dy.dim();
        let plane = h * w;
        let n = A::from_double((bsz * plane) as f64);
        let mut dx = Array4::<A>::zeros((bsz, c, h, w));
        let dys = dy.as_slice().expect("standard layout");
        let xhs = cache.xhat.as_slice().expect("standard layout");
        let dxs = dx.as_slice_mut().expect("freshly allocated");
        let sums: Vec<(A, A)> = (0..c)
            .into_par_iter()
            .map(|ci| {
                let mut sum_dy = A::zero();
                let mut sum_dy_xhat = A::zero();
                for b in 0..bsz {
                    let base = (b * c + ci) * plane;
                    sum_dy += sum8(&dys[base..][..plane]);
                    sum_dy_xhat += dot8(&dys[base..][..plane], &xhs[base..][..plane]);
                }
                (sum_dy, sum_dy_xhat)
            })
            .collect();
        let mut scales = Vec::with_capacity(c);
        for (ci, (sum_dy, sum_dy_xhat)) in sums.iter().enumerate() {
            self.g_gamma[ci] += *sum_dy_xhat;
            self.g_beta[ci] += *sum_dy;
            scales.push(self.gamma[ci] * cache.invstd[ci] / n);
        }
        let sample = c * plane;
        dxs.par_chunks_mut(sample)
            .zip(dys.par_chunks(sample))
            .zip(xhs.par_chunks(sample))
            .for_each(|((out_s, d_s), xh_s)| {
                for ci in 0..c {
                    let (sum_dy, sum_dy_xhat) = sums[ci];
                    let scale = scales[ci];
                    let d = &d_s[ci * plane..][..plane];
                    let xh = &xh_s[ci * plane..][..plane];
                    let out = &mut out_s[ci * plane..][..plane];
                    for i in 0..plane {
                        out[i] = scale * (n * d[i] - sum_dy - xh[i] * sum_dy_xhat);
                    }
                }
            });
        dx
    }

    pub fn zero_grads(&mut self) {
        self.g_gamma.fill(A::zero());
        self.g_beta.fill(A::zero());
    }

    pub fn sgd_step(&mut self, lr: f64) {
        let lr = A::from_double(lr);
        self.gamma.zip_mut_with(&self.g_gamma, |w, g| *w -= lr * *g);
        self.beta.zip_mut_with(&self.g_beta, |w, g| *w -= lr * *g);
    }
}

pub fn relu<A: Scalar>(x: &Array4<A>) -> Array4<A> {
    let mut y = x.clone();
    if let Some(slice) = y.as_slice_mut() {
        slice.par_chunks_mut(1 << 16).for_each(|chunk| {
            for v in chunk {
                *v = v.max(A::zero());
            }
        });
    } else {
        y.mapv_inplace(|v| v.max(A::zero()));
    }
    y
}

/// Gradient through the rectifier, using the forward output to recover the
/// active mask.
pub fn relu_backward<A: Scalar>(y: &Array4<A>, dy: &Array4<A>) -> Array4<A> {
    let mut dx = dy.clone();
    match (dx.as_slice_mut(), y.as_slice()) {
        (Some(d), Some(ys)) => {
            d.par_chunks_mut(1 << 16)
                .zip(ys.par_chunks(1 << 16))
                .for_each(|(dc, yc)| {
                    for (dv, yv) in dc.iter_mut().zip(yc) {
                        if *yv <= A::zero() {
                            *dv = A::zero();
                        }
                    }
                });
        }
        _ => {
            dx.zip_mut_with(y, |d, &yv| {
                if yv <= A::zero() {
                    *d = A::zero();
                }
            });
        }
    }
    dx
}

/// 2x2 max pooling with stride 2. Returns the pooled tensor and the flat
/// `iy * w + ix` source index of each maximum (first occurrence wins ties).
pub fn max_pool2<A: Scalar>(x: &Array4<A>) -> (Array4<A>, Array4<u32>) {
    let (bsz, c, h, w) = x.dim();
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Array4::<A>::zeros((bsz, c, oh, ow));
    let mut idx = Array4::<u32>::zeros((bsz, c, oh, ow));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("freshly allocated");
    let ids = idx.as_slice_mut().expect("freshly allocated");
    for p in 0..bsz * c {
        let src = &xs[p * h * w..][..h * w];
        let dst = &mut ys[p * oh * ow..][..oh * ow];
        let di = &mut ids[p * oh * ow..][..oh * ow];
        for oy in 0..oh {
            let r0 = &src[(2 * oy) * w..][..w];
            let r1 = &src[(2 * oy + 1) * w..][..w];
            for ox in 0..ow {
                let candidates = [
                    (r0[2 * ox], (2 * oy) * w + 2 * ox),
                    (r0[2 * ox + 1], (2 * oy) * w + 2 * ox + 1),
                    (r1[2 * ox], (2 * oy + 1) * w + 2 * ox),
                    (r1[2 * ox + 1], (2 * oy + 1) * w + 2 * ox + 1),
                ];
                let mut best = candidates[0];
                for cand in &candidates[1..] {
                    if cand.0 > best.0 {
                        best = *cand;
                    }
                }
                dst[oy * ow + ox] = best.0;
                di[oy * ow + ox] = best.1 as u32;
            }
        }
    }
    (y, idx)
}

pub fn max_pool2_backward<A: Scalar>(
    dy: &Array4<A>,
    idx: &Array4<u32>,
    in_h: usize,
    in_w: usize,
) -> Array4<A> {
    let (bsz, c, oh, ow) = dy.dim();
    let mut dx = Array4::<A>::zeros((bsz, c, in_h, in_w));
    let dys = dy.as_slice().expect("standard layout");
    let ids = idx.as_slice().expect("standard layout");
    let dxs = dx.as_slice_mut().expect("freshly allocated");
    let in_plane = in_h * in_w;
    let out_plane = oh * ow;
    for p in 0..bsz * c {
        let src = &dys[p * out_plane..][..out_plane];
        let di = &ids[p * out_plane..][..out_plane];
        let dst = &mut dxs[p * in_plane..][..in_plane];
        for i in 0..out_plane {
            dst[di[i] as usize] += src[i];
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2<A: Scalar>(x: &Array4<A>) -> Array4<A> {
    let (bsz, c, h, w) = x.dim();
    let mut y = Array4::<A>::zeros((bsz, c, 2 * h, 2 * w));
    let xs = x.as_slice().expect("standard layout");
    let ys = y.as_slice_mut().expect("freshly allocated");
    for p in 0..bsz * c {
        let src = &xs[p * h * w..][..h * w];
        let dst = &mut ys[p * 4 * h * w..][..4 * h * w];
        for iy in 0..h {
            let s = &src[iy * w..][..w];
            let (top, bot) = dst[2 * iy * 2 * w..][..4 * w].split_at_mut(2 * w);
            for ix in 0..w {
                let v = s[ix];
                top[2 * ix] = v;
                top[2 * ix + 1] = v;
                bot[2 * ix] = v;
                bot[2 * ix + 1] = v;
            }
        }
    }
    y
}

pub fn upsample2_backward<A: Scalar>(dy: &Array4<A>) -> Array4<A> {
    let (bsz, c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array4::<A>::zeros((bsz, c, h, w));
    let dys = dy.as_slice().expect("standard layout");
    let dxs = dx.as_slice_mut().expect("freshly allocated");
    for p in 0..bsz * c {
        let src = &dys[p * h2 * w2..][..h2 * w2];
        let dst = &mut dxs[p * h * w..][..h * w];
        for iy in 0..h {
            let top = &src[2 * iy * w2..][..w2];
            let bot = &src[(2 * iy + 1) * w2..][..w2];
            let d = &mut dst[iy * w..][..w];
            for ix in 0..w {
                d[ix] = top[2 * ix] + top[2 * ix + 1] + bot[2 * ix] + bot[2 * ix + 1];
            }
        }
    }
    dx
}

/// Concatenate along the channel axis (standard layout for the GEMM path).
pub fn concat_ch<A: Scalar>(a: &Array4<A>, b: &Array4<A>) -> Array4<A> {
    let joined =
        ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching batch/spatial dims");
    if joined.is_standard_layout() {
        joined
    } else {
        Array4::from_shape_vec(joined.raw_dim(), joined.iter().copied().collect())
            .expect("element count matches shape")
    }
}

/// Split a channel-axis gradient back into the two concatenated parts.
pub fn split_ch<A: Scalar>(dy: &Array4<A>, c_first: usize) -> (Array4<A>, Array4<A>) {
    let da = dy.slice(s![.., ..c_first, .., ..]).to_owned();
    let db = dy.slice(s![.., c_first.., .., ..]).to_owned();
    (da, db)
}
