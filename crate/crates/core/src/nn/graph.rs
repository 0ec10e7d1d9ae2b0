//! Tape-based reverse-mode differentiation over the small layer set the
//! detector needs.
//!
//! Every operation appends a node holding its forward value plus whatever it
//! caches for the backward pass. [`Graph::backward`] walks the tape in reverse
//! from a scalar loss and returns the gradient of every trainable leaf.

use rand::Rng;

use super::tensor::{gemm, Scalar, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Length bookkeeping shared by the strided convolution and its transpose.
///
/// `long` is the length on the wide side (conv input, transposed-conv output)
/// and `short` the length on the strided side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct ConvGeom {
    batch: usize,
    long: usize,
    short: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
}

impl ConvGeom {
    /// Output length of a forward convolution over `long` samples.
    fn short_len(long: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
        let padded = long + 2 * pad;
        if padded < kernel || stride == 0 {
            return None;
        }
        Some((padded - kernel) / stride + 1)
    }

    /// Outputs `o` whose tap `k` lands inside the unpadded input, as a range.
    fn valid_outputs(&self, k: usize) -> (usize, usize) {
        let lo = self.pad.saturating_sub(k).div_ceil(self.stride);
        let hi = (self.long + self.pad)
            .saturating_sub(k)
            .div_ceil(self.stride)
            .min(self.short);
        (lo, hi.max(lo))
    }

    /// Unfolds `x` (batch × channels × long) into (channels·kernel) × (batch·short).
    fn im2col<S: Scalar>(&self, x: &[S], channels: usize) -> Vec<S> {
        let cols_n = self.batch * self.short;
        let mut cols = vec![S::zero(); channels * self.kernel * cols_n];
        for c in 0..channels {
            for k in 0..self.kernel {
                let row = &mut cols[(c * self.kernel + k) * cols_n..][..cols_n];
                let (lo, hi) = self.valid_outputs(k);
                for b in 0..self.batch {
                    let src = &x[(b * channels + c) * self.long..][..self.long];
                    let dst = &mut row[b * self.short..][..self.short];
                    for o in lo..hi {
                        dst[o] = src[o * self.stride + k - self.pad];
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`ConvGeom::im2col`]: scatters columns back onto the long axis.
    fn col2im<S: Scalar>(&self, cols: &[S], channels: usize) -> Vec<S> {
        let cols_n = self.batch * self.short;
        let mut x = vec![S::zero(); self.batch * channels * self.long];
        for c in 0..channels {
            for k in 0..self.kernel {
                let row = &cols[(c * self.kernel + k) * cols_n..][..cols_n];
                let (lo, hi) = self.valid_outputs(k);
                for b in 0..self.batch {
                    let dst = &mut x[(b * channels + c) * self.long..][..self.long];
                    let src = &row[b * self.short..][..self.short];
                    for (o, &v) in src.iter().enumerate().take(hi).skip(lo) {
                        let i = o * self.stride + k - self.pad;
                        dst[i] = dst[i] + v;
                    }
                }
            }
        }
        x
    }
}

/// (batch, channels, length) → (channels, batch·length)
fn to_channel_major<S: Scalar>(x: &[S], batch: usize, channels: usize, len: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[c * batch * len + b * len..][..len]
                .copy_from_slice(&x[(b * channels + c) * len..][..len]);
        }
    }
    out
}

/// (channels, batch·length) → (batch, channels, length)
fn from_channel_major<S: Scalar>(x: &[S], batch: usize, channels: usize, len: usize) -> Vec<S> {
    let mut out = vec![S::zero(); x.len()];
    for b in 0..batch {
        for c in 0..channels {
            out[(b * channels + c) * len..][..len]
                .copy_from_slice(&x[c * batch * len + b * len..][..len]);
        }
    }
    out
}

/// Interprets a rank-2 or rank-3 shape as (batch, channels, length).
fn bcl(shape: &[usize], what: &str) -> Result<(usize, usize, usize)> {
    match *shape {
        [b, c] => Ok((b, c, 1)),
        [b, c, l] => Ok((b, c, l)),
        _ => Err(Error::Shape(format!(
            "{what} expects (batch, channels[, length]), got {shape:?}"
        ))),
    }
}

/// Per-channel statistics of one training-mode batch-norm call, used by the
/// caller to update running estimates.
#[derive(Debug, Clone)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    /// Unbiased variance.
    pub var: Vec<S>,
}

enum Op<S> {
    Constant,
    Leaf,
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
        cols: Vec<S>,
    },
    ConvTranspose1d {
        x: Var,
        w: Var,
        b: Var,
        geom: ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Var,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<S>,
        inv_std: Vec<S>,
        dims: (usize, usize, usize),
        batch_stats: bool,
    },
    Relu {
        x: Var,
    },
    Dropout {
        x: Var,
        mask: Vec<S>,
    },
    MaxPoolTime {
        x: Var,
        argmax: Vec<usize>,
    },
    Reshape {
        x: Var,
    },
    Softmax {
        x: Var,
    },
    CrossEntropy {
        probs: Var,
        targets: Vec<S>,
        rows: usize,
    },
    MaskedSquaredError {
        pred: Var,
        target: Vec<S>,
        keep: Vec<S>,
        rows: usize,
    },
    Combine {
        terms: Vec<(Var, S)>,
    },
    WeightedSum {
        x: Var,
        weights: Vec<S>,
    },
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

/// Probabilities below this floor are clamped before taking the logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Gradients of a scalar loss with respect to trainable leaves.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient of a trainable leaf; `None` for nodes that are not leaves.
    pub fn get(&self, var: Var) -> Option<&Tensor<S>> {
        self.grads.get(var.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(var.0).and_then(|g| g.take())
    }
}

/// Recording tape of forward operations.
pub struct Graph<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<S> {
        &self.nodes[v.0]
    }

    fn grad_flag(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// Adds an input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Constant, false)
    }

    /// Adds a trainable leaf.
    pub fn leaf(&mut self, value: Tensor<S>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.node(v).value
    }

    /// Strided 1-D convolution. `x`: (batch, c_in, len), `w`: (c_out, c_in, kernel),
    /// `b`: (c_out).
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize) -> Result<Var> {
        let (batch, c_in, long) = match *self.value(x).shape() {
            [b, c, l] => (b, c, l),
            ref s => return Err(Error::Shape(format!("conv1d input must be rank 3, got {s:?}"))),
        };
        let (c_out, kernel) = match *self.value(w).shape() {
            [o, i, k] if i == c_in => (o, k),
            ref s => {
                return Err(Error::Shape(format!(
                    "conv1d weight {s:?} incompatible with {c_in} input channels"
                )))
            }
        };
        if self.value(b).shape() != [c_out] {
            return Err(Error::Shape(format!(
                "conv1d bias shape {:?}, expected [{c_out}]",
                self.value(b).shape()
            )));
        }
        let short = ConvGeom::short_len(long, kernel, stride, pad).ok_or_else(|| {
            Error::Shape(format!(
                "conv1d: length {long} too short for kernel {kernel} with padding {pad}"
            ))
        })?;
        let geom = ConvGeom {
            batch,
            long,
            short,
            kernel,
            stride,
            pad,
        };
        let cols = geom.im2col(self.value(x).data(), c_in);
        let cols_n = batch * short;
        let mut out = vec![S::zero(); c_out * cols_n];
        gemm(
            c_out,
            c_in * kernel,
            cols_n,
            self.value(w).data(),
            false,
            &cols,
            false,
            S::zero(),
            &mut out,
        );
        let bias = self.value(b).data();
        for (co, row) in out.chunks_mut(cols_n).enumerate() {
            for v in row {
                *v = *v + bias[co];
            }
        }
        let out = from_channel_major(&out, batch, c_out, short);
        let value = Tensor::from_vec(&[batch, c_out, short], out)?;
        let rg = self.grad_flag(&[x, w, b]);
        Ok(self.push(
            value,
            Op::Conv1d {
                x,
                w,
                b,
                geom,
                cols,
            },
            rg,
        ))
    }

    /// Strided transposed 1-D convolution producing exactly `out_len` samples.
    /// `x`: (batch, c_in, len), `w`: (c_in, c_out, kernel), `b`: (c_out).
    ///
    /// `out_len` must be a length that a forward convolution with the same
    /// kernel, stride and padding maps back onto `len`.
    pub fn conv_transpose1d(
        &mut self,
        x: Var,
        w: Var,
        b: Var,
        stride: usize,
        pad: usize,
        out_len: usize,
    ) -> Result<Var> {
        let (batch, c_in, short) = match *self.value(x).shape() {
            [b, c, l] => (b, c, l),
            ref s => {
                return Err(Error::Shape(format!(
                    "conv_transpose1d input must be rank 3, got {s:?}"
                )))
            }
        };
        let (c_out, kernel) = match *self.value(w).shape() {
            [i, o, k] if i == c_in => (o, k),
            ref s => {
                return Err(Error::Shape(format!(
                    "conv_transpose1d weight {s:?} incompatible with {c_in} input channels"
                )))
            }
        };
        if self.value(b).shape() != [c_out] {
            return Err(Error::Shape(format!(
                "conv_transpose1d bias shape {:?}, expected [{c_out}]",
                self.value(b).shape()
            )));
        }
        if ConvGeom::short_len(out_len, kernel, stride, pad) != Some(short) {
            return Err(Error::Shape(format!(
                "conv_transpose1d cannot map length {short} to {out_len} with kernel {kernel}, stride {stride}, padding {pad}"
            )));
        }
        let geom = ConvGeom {
            batch,
            long: out_len,
            short,
            kernel,
            stride,
            pad,
        };
        let xm = to_channel_major(self.value(x).data(), batch, c_in, short);
        let cols_n = batch * short;
        let mut cols = vec![S::zero(); c_out * kernel * cols_n];
        gemm(
            c_out * kernel,
            c_in,
            cols_n,
            self.value(w).data(),
            true,
            &xm,
            false,
            S::zero(),
            &mut cols,
        );
        let mut out = geom.col2im(&cols, c_out);
        let bias = self.value(b).data();
        for (i, chunk) in out.chunks_mut(out_len).enumerate() {
            let co = i % c_out;
            for v in chunk {
                *v = *v + bias[co];
            }
        }
        let value = Tensor::from_vec(&[batch, c_out, out_len], out)?;
        let rg = self.grad_flag(&[x, w, b]);
        Ok(self.push(value, Op::ConvTranspose1d { x, w, b, geom }, rg))
    }

    /// Affine map `x · wᵀ + b`. `x`: (batch, in), `w`: (out, in), `b`: (out).
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (batch, fan_in) = match *self.value(x).shape() {
            [b, i] => (b, i),
            ref s => return Err(Error::Shape(format!("linear input must be rank 2, got {s:?}"))),
        };
        let fan_out = match *self.value(w).shape() {
            [o, i] if i == fan_in => o,
            ref s => {
                return Err(Error::Shape(format!(
                    "linear weight {s:?} incompatible with input width {fan_in}"
                )))
            }
        };
        if self.value(b).shape() != [fan_out] {
            return Err(Error::Shape(format!(
                "linear bias shape {:?}, expected [{fan_out}]",
                self.value(b).shape()
            )));
        }
        let mut out = vec![S::zero(); batch * fan_out];
        gemm(
            batch,
            fan_in,
            fan_out,
            self.value(x).data(),
            false,
            self.value(w).data(),
            true,
            S::zero(),
            &mut out,
        );
        let bias = self.value(b).data();
        for row in out.chunks_mut(fan_out) {
            for (v, &bb) in row.iter_mut().zip(bias) {
                *v = *v + bb;
            }
        }
        let value = Tensor::from_vec(&[batch, fan_out], out)?;
        let rg = self.grad_flag(&[x, w, b]);
        Ok(self.push(value, Op::Linear { x, w, b }, rg))
    }

    fn check_affine_params(&self, gamma: Var, beta: Var, channels: usize) -> Result<()> {
        if self.value(gamma).shape() != [channels] || self.value(beta).shape() != [channels] {
            return Err(Error::Shape(format!(
                "batch-norm affine parameters must have shape [{channels}]"
            )));
        }
        Ok(())
    }

    /// Training-mode batch normalisation over every axis except channels.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        eps: f64,
    ) -> Result<(Var, BatchStats<S>)> {
        let dims = bcl(self.value(x).shape(), "batch_norm")?;
        let (batch, channels, len) = dims;
        self.check_affine_params(gamma, beta, channels)?;
        let count = batch * len;
        if count < 2 {
            return Err(Error::Shape(
                "training-mode batch-norm needs more than one value per channel".into(),
            ));
        }
        let n = S::from_f64(count as f64);
        let eps = S::from_f64(eps);
        let xs = self.value(x).data();
        let mut mean = vec![S::zero(); channels];
        let mut var = vec![S::zero(); channels];
        for b in 0..batch {
            for c in 0..channels {
                let s: S = xs[(b * channels + c) * len..][..len].iter().copied().sum();
                mean[c] = mean[c] + s;
            }
        }
        for m in &mut mean {
            *m = *m / n;
        }
        for b in 0..batch {
            for c in 0..channels {
                for &v in &xs[(b * channels + c) * len..][..len] {
                    let d = v - mean[c];
                    var[c] = var[c] + d * d;
                }
            }
        }
        let biased: Vec<S> = var.iter().map(|&v| v / n).collect();
        let unbiased: Vec<S> = var
            .iter()
            .map(|&v| v / S::from_f64((count - 1) as f64))
            .collect();
        let inv_std: Vec<S> = biased.iter().map(|&v| S::one() / (v + eps).sqrt()).collect();
        let (xhat, out) = self.normalize(xs, dims, &mean, &inv_std, gamma, beta);
        let value = Tensor::from_vec(self.value(x).shape(), out)?;
        let rg = self.grad_flag(&[x, gamma, beta]);
        let var_out = self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                dims,
                batch_stats: true,
            },
            rg,
        );
        Ok((
            var_out,
            BatchStats {
                mean,
                var: unbiased,
            },
        ))
    }

    /// Inference-mode batch normalisation with fixed statistics.
    pub fn batch_norm_inference(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        running_mean: &[S],
        running_var: &[S],
        eps: f64,
    ) -> Result<Var> {
        let dims = bcl(self.value(x).shape(), "batch_norm_inference")?;
        let channels = dims.1;
        self.check_affine_params(gamma, beta, channels)?;
        if running_mean.len() != channels || running_var.len() != channels {
            return Err(Error::Shape(format!(
                "running statistics must have {channels} entries"
            )));
        }
        let eps = S::from_f64(eps);
        let inv_std: Vec<S> = running_var
            .iter()
            .map(|&v| S::one() / (v + eps).sqrt())
            .collect();
        let (xhat, out) = self.normalize(
            self.value(x).data(),
            dims,
            running_mean,
            &inv_std,
            gamma,
            beta,
        );
        let value = Tensor::from_vec(self.value(x).shape(), out)?;
        let rg = self.grad_flag(&[x, gamma, beta]);
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                dims,
                batch_stats: false,
            },
            rg,
        ))
    }

    fn normalize(
        &self,
        xs: &[S],
        (batch, channels, len): (usize, usize, usize),
        mean: &[S],
        inv_std: &[S],
        gamma: Var,
        beta: Var,
    ) -> (Vec<S>, Vec<S>) {
        let g = self.value(gamma).data();
        let be = self.value(beta).data();
        let mut xhat = vec![S::zero(); xs.len()];
        let mut out = vec![S::zero(); xs.len()];
        for b in 0..batch {
            for c in 0..channels {
                let off = (b * channels + c) * len;
                for i in off..off + len {
                    let h = (xs[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = g[c] * h + be[c];
                }
            }
        }
        (xhat, out)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let data = self
            .value(x)
            .data()
            .iter()
            .map(|&v| if v > S::zero() { v } else { S::zero() })
            .collect();
        let value = Tensor::from_vec(self.value(x).shape(), data).expect("same shape");
        let rg = self.grad_flag(&[x]);
        self.push(value, Op::Relu { x }, rg)
    }

    /// Inverted dropout: zeroes each element with probability `p` and scales
    /// survivors by `1 / (1 - p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Parameter(format!("dropout rate {p} outside [0, 1)")));
        }
        let keep = S::from_f64(1.0 / (1.0 - p));
        // Dropped when a uniform u32 falls below p·2³².
        let cut = (p * 4_294_967_296.0) as u64;
        let mask: Vec<S> = (0..self.value(x).len())
            .map(|_| {
                if u64::from(rng.next_u32()) < cut {
                    S::zero()
                } else {
                    keep
                }
            })
            .collect();
        let data = self
            .value(x)
            .data()
            .iter()
            .zip(&mask)
            .map(|(&v, &m)| v * m)
            .collect();
        let value = Tensor::from_vec(self.value(x).shape(), data)?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::Dropout { x, mask }, rg))
    }

    /// Global max over the temporal axis: (batch, channels, len) → (batch, channels).
    pub fn max_pool_time(&mut self, x: Var) -> Result<Var> {
        let (batch, channels, len) = match *self.value(x).shape() {
            [b, c, l] if l > 0 => (b, c, l),
            ref s => {
                return Err(Error::Shape(format!(
                    "max_pool_time expects non-empty (batch, channels, len), got {s:?}"
                )))
            }
        };
        let xs = self.value(x).data();
        let mut out = Vec::with_capacity(batch * channels);
        let mut argmax = Vec::with_capacity(batch * channels);
        for row in xs.chunks(len) {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            out.push(row[best]);
            argmax.push(best);
        }
        let value = Tensor::from_vec(&[batch, channels], out)?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::MaxPoolTime { x, argmax }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    /// Row-wise softmax over the last axis of a (batch, classes) tensor.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let cols = match *self.value(x).shape() {
            [_, k] if k > 0 => k,
            ref s => return Err(Error::Shape(format!("softmax expects (batch, classes), got {s:?}"))),
        };
        let mut out = self.value(x).data().to_vec();
        for row in out.chunks_mut(cols) {
            let max = row.iter().copied().fold(S::neg_infinity(), S::max);
            let mut total = S::zero();
            for v in row.iter_mut() {
                *v = (*v - max).exp();
                total = total + *v;
            }
            for v in row.iter_mut() {
                *v = *v / total;
            }
        }
        let value = Tensor::from_vec(self.value(x).shape(), out)?;
        let rg = self.grad_flag(&[x]);
        Ok(self.push(value, Op::Softmax { x }, rg))
    }

    /// Batch-mean cross-entropy `−Σ target·log(max(prob, floor))`.
    pub fn cross_entropy(&mut self, probs: Var, targets: &[S]) -> Result<Var> {
        let (rows, cols) = match *self.value(probs).shape() {
            [r, k] if r > 0 => (r, k),
            ref s => {
                return Err(Error::Shape(format!(
                    "cross_entropy expects non-empty (batch, classes), got {s:?}"
                )))
            }
        };
        if targets.len() != rows * cols {
            return Err(Error::Shape(format!(
                "cross_entropy targets have {} values, expected {}",
                targets.len(),
                rows * cols
            )));
        }
        let floor = S::from_f64(PROB_FLOOR);
        let total: S = self
            .value(probs)
            .data()
            .iter()
            .zip(targets)
            .map(|(&p, &t)| -t * p.max(floor).ln())
            .sum();
        let value = Tensor::scalar(total / S::from_f64(rows as f64));
        let rg = self.grad_flag(&[probs]);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                probs,
                targets: targets.to_vec(),
                rows,
            },
            rg,
        ))
    }

    /// Batch-mean of the squared error summed over cells where `mask` is 0.
    pub fn masked_squared_error(&mut self, pred: Var, target: &[S], mask: &[S]) -> Result<Var> {
        let shape = self.value(pred).shape();
        let rows = match shape.first() {
            Some(&r) if r > 0 => r,
            _ => return Err(Error::Shape(format!("masked error expects a batch axis, got {shape:?}"))),
        };
        let n = self.value(pred).len();
        if target.len() != n || mask.len() != n {
            return Err(Error::Shape(format!(
                "masked error operands differ in size: prediction {n}, target {}, mask {}",
                target.len(),
                mask.len()
            )));
        }
        let keep: Vec<S> = mask.iter().map(|&m| S::one() - m).collect();
        let total: S = self
            .value(pred)
            .data()
            .iter()
            .zip(target)
            .zip(&keep)
            .map(|((&p, &t), &k)| k * (p - t) * (p - t))
            .sum();
        let value = Tensor::scalar(total / S::from_f64(rows as f64));
        let rg = self.grad_flag(&[pred]);
        Ok(self.push(
            value,
            Op::MaskedSquaredError {
                pred,
                target: target.to_vec(),
                keep,
                rows,
            },
            rg,
        ))
    }

    /// Linear combination of scalar nodes.
    pub fn combine(&mut self, terms: &[(Var, S)]) -> Result<Var> {
        let mut total = S::zero();
        for &(v, c) in terms {
            let t = self.value(v);
            if t.len() != 1 {
                return Err(Error::Shape(format!(
                    "combine expects scalar terms, got shape {:?}",
                    t.shape()
                )));
            }
            total = total + c * t.data()[0];
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.grad_flag(&vars);
        Ok(self.push(
            Tensor::scalar(total),
            Op::Combine {
                terms: terms.to_vec(),
            },
            rg,
        ))
    }

    /// Scalar `Σ weights · x`.
    pub fn weighted_sum(&mut self, x: Var, weights: &[S]) -> Result<Var> {
        if weights.len() != self.value(x).len() {
            return Err(Error::Shape(format!(
                "weighted_sum: {} weights for {} values",
                weights.len(),
                self.value(x).len()
            )));
        }
        let total: S = self
            .value(x)
            .data()
            .iter()
            .zip(weights)
            .map(|(&a, &b)| a * b)
            .sum();
        let rg = self.grad_flag(&[x]);
        Ok(self.push(
            Tensor::scalar(total),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            rg,
        ))
    }

    /// Reverse-mode accumulation from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients<S>> {
        let node = self
            .nodes
            .get(loss.0)
            .ok_or_else(|| Error::Usage("loss handle does not belong to this graph".into()))?;
        if node.value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got shape {:?}",
                node.value.shape()
            )));
        }
        if !node.requires_grad {
            return Err(Error::Usage(
                "loss does not depend on any trainable leaf".into(),
            ));
        }
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(vec![S::one()]);
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf | Op::Constant) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(node, &g, &mut grads)?;
        }
        Ok(Gradients {
            grads: grads
                .into_iter()
                .zip(&self.nodes)
                .map(|(g, n)| match (g, &n.op) {
                    (Some(g), Op::Leaf) => Some(Tensor::from_vec(n.value.shape(), g).ok()?),
                    (None, Op::Leaf) => Some(Tensor::zeros(n.value.shape())),
                    _ => None,
                })
                .collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<S>>], v: Var, contribution: Vec<S>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contribution) {
                    *e = *e + c;
                }
            }
            slot @ None => *slot = Some(contribution),
        }
    }

    fn backward_node(&self, node: &Node<S>, g: &[S], grads: &mut [Option<Vec<S>>]) -> Result<()> {
        match &node.op {
            Op::Constant | Op::Leaf => {}
            Op::Conv1d {
                x,
                w,
                b,
                geom,
                cols,
            } => {
                let c_out = self.value(*w).shape()[0];
                let c_in = self.value(*w).shape()[1];
                let cols_n = geom.batch * geom.short;
                let gm = to_channel_major(g, geom.batch, c_out, geom.short);
                if self.node(*w).requires_grad {
                    let mut dw = vec![S::zero(); c_out * c_in * geom.kernel];
                    gemm(c_out, cols_n, c_in * geom.kernel, &gm, false, cols, true, S::zero(), &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                if self.node(*b).requires_grad {
                    let db = gm.chunks(cols_n).map(|r| r.iter().copied().sum()).collect();
                    self.accumulate(grads, *b, db);
                }
                if self.node(*x).requires_grad {
                    let mut dcols = vec![S::zero(); c_in * geom.kernel * cols_n];
                    gemm(
                        c_in * geom.kernel,
                        c_out,
                        cols_n,
                        self.value(*w).data(),
                        true,
                        &gm,
                        false,
                        S::zero(),
                        &mut dcols,
                    );
                    self.accumulate(grads, *x, geom.col2im(&dcols, c_in));
                }
            }
            Op::ConvTranspose1d { x, w, b, geom } => {
                let c_in = self.value(*w).shape()[0];
                let c_out = self.value(*w).shape()[1];
                let cols_n = geom.batch * geom.short;
                let dcols = geom.im2col(g, c_out);
                if self.node(*w).requires_grad {
                    let xm = to_channel_major(self.value(*x).data(), geom.batch, c_in, geom.short);
                    let mut dw = vec![S::zero(); c_in * c_out * geom.kernel];
                    gemm(c_in, cols_n, c_out * geom.kernel, &xm, false, &dcols, true, S::zero(), &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                if self.node(*b).requires_grad {
                    let mut db = vec![S::zero(); c_out];
                    for (i, chunk) in g.chunks(geom.long).enumerate() {
                        let s: S = chunk.iter().copied().sum();
                        db[i % c_out] = db[i % c_out] + s;
                    }
                    self.accumulate(grads, *b, db);
                }
                if self.node(*x).requires_grad {
                    let mut dxm = vec![S::zero(); c_in * cols_n];
                    gemm(
                        c_in,
                        c_out * geom.kernel,
                        cols_n,
                        self.value(*w).data(),
                        false,
                        &dcols,
                        false,
                        S::zero(),
                        &mut dxm,
                    );
                    self.accumulate(grads, *x, from_channel_major(&dxm, geom.batch, c_in, geom.short));
                }
            }
            Op::Linear { x, w, b } => {
                let (batch, fan_in) = (self.value(*x).shape()[0], self.value(*x).shape()[1]);
                let fan_out = self.value(*w).shape()[0];
                if self.node(*w).requires_grad {
                    let mut dw = vec![S::zero(); fan_out * fan_in];
                    gemm(fan_out, batch, fan_in, g, true, self.value(*x).data(), false, S::zero(), &mut dw);
                    self.accumulate(grads, *w, dw);
                }
                if self.node(*b).requires_grad {
                    let mut db = vec![S::zero(); fan_out];
                    for row in g.chunks(fan_out) {
                        for (d, &v) in db.iter_mut().zip(row) {
                            *d = *d + v;
                        }
                    }
                    self.accumulate(grads, *b, db);
                }
                if self.node(*x).requires_grad {
                    let mut dx = vec![S::zero(); batch * fan_in];
                    gemm(batch, fan_out, fan_in, g, false, self.value(*w).data(), false, S::zero(), &mut dx);
                    self.accumulate(grads, *x, dx);
                }
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                dims: (batch, channels, len),
                batch_stats,
            } => {
                let (batch, channels, len) = (*batch, *channels, *len);
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![S::zero(); channels];
                let mut dbeta = vec![S::zero(); channels];
                for b in 0..batch {
                    for c in 0..channels {
                        let off = (b * channels + c) * len;
                        for i in off..off + len {
                            dgamma[c] = dgamma[c] + g[i] * xhat[i];
                            dbeta[c] = dbeta[c] + g[i];
                        }
                    }
                }
                if self.node(*x).requires_grad {
                    let mut dx = vec![S::zero(); g.len()];
                    if *batch_stats {
                        let n = S::from_f64((batch * len) as f64);
                        for b in 0..batch {
                            for c in 0..channels {
                                let off = (b * channels + c) * len;
                                // dxhat = g·γ; sums over the channel are dβ·γ and dγ·γ.
                                let k = gam[c] * inv_std[c] / n;
                                for i in off..off + len {
                                    dx[i] = k * (n * g[i] - dbeta[c] - xhat[i] * dgamma[c]);
                                }
                            }
                        }
                    } else {
                        for b in 0..batch {
                            for c in 0..channels {
                                let off = (b * channels + c) * len;
                                let k = gam[c] * inv_std[c];
                                for i in off..off + len {
                                    dx[i] = k * g[i];
                                }
                            }
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, dgamma);
                self.accumulate(grads, *beta, dbeta);
            }
            Op::Relu { x } => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gi)| if v > S::zero() { gi } else { S::zero() })
                    .collect();
                self.accumulate(grads, *x, dx);
            }
            Op::Dropout { x, mask } => {
                let dx = g.iter().zip(mask).map(|(&gi, &m)| gi * m).collect();
                self.accumulate(grads, *x, dx);
            }
            Op::MaxPoolTime { x, argmax } => {
                let len = self.value(*x).shape()[2];
                let mut dx = vec![S::zero(); self.value(*x).len()];
                for (row, (&a, &gi)) in argmax.iter().zip(g).enumerate() {
                    dx[row * len + a] = gi;
                }
                self.accumulate(grads, *x, dx);
            }
            Op::Reshape { x } => self.accumulate(grads, *x, g.to_vec()),
            Op::Softmax { x } => {
                let y = node.value.data();
                let cols = node.value.shape()[1];
                let mut dx = vec![S::zero(); y.len()];
                for ((dr, yr), gr) in dx.chunks_mut(cols).zip(y.chunks(cols)).zip(g.chunks(cols)) {
                    let dot: S = yr.iter().zip(gr).map(|(&a, &b)| a * b).sum();
                    for ((d, &yi), &gi) in dr.iter_mut().zip(yr).zip(gr) {
                        *d = yi * (gi - dot);
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::CrossEntropy {
                probs,
                targets,
                rows,
            } => {
                let floor = S::from_f64(PROB_FLOOR);
                let scale = g[0] / S::from_f64(*rows as f64);
                let dp = self
                    .value(*probs)
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&p, &t)| if p > floor { -t * scale / p } else { S::zero() })
                    .collect();
                self.accumulate(grads, *probs, dp);
            }
            Op::MaskedSquaredError {
                pred,
                target,
                keep,
                rows,
            } => {
                let scale = S::from_f64(2.0) * g[0] / S::from_f64(*rows as f64);
                let dp = self
                    .value(*pred)
                    .data()
                    .iter()
                    .zip(target)
                    .zip(keep)
                    .map(|((&p, &t), &k)| scale * k * (p - t))
                    .collect();
                self.accumulate(grads, *pred, dp);
            }
            Op::Combine { terms } => {
                for &(v, c) in terms {
                    self.accumulate(grads, v, vec![c * g[0]]);
                }
            }
            Op::WeightedSum { x, weights } => {
                let dx = weights.iter().map(|&w| w * g[0]).collect();
                self.accumulate(grads, *x, dx);
            }
        }
        Ok(())
    }
}
