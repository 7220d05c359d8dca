//! Batched jet propagation and reverse-mode parameter gradients.
//!
//! Points are processed in fixed-size chunks. Within a chunk every jet
//! channel of every point is one column of an activation matrix, so each
//! affine layer is a single GEMM. The forward pass can keep its activations
//! (a tape) so that [`Network::backward_batch`] can reverse-accumulate the
//! gradient of any linear functional of the output channels, including the
//! paths through the input derivatives.
//!
//! Chunk results are reduced in chunk order, so results do not depend on how
//! many threads rayon uses.

use rayon::prelude::*;

use super::{ChannelLayout, Network};
use crate::error::{Error, Result};
use crate::points::PointSet;

const CHUNK: usize = 256;

/// Output jets of a batch, stored channel-major: channel `c` of point `p` is
/// at `c * n + p`.
#[derive(Clone, Debug)]
pub struct BatchOutput {
    channels: ChannelLayout,
    n: usize,
    values: Vec<f64>,
}

impl BatchOutput {
    pub fn layout(&self) -> ChannelLayout {
        self.channels
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.values[c * self.n..(c + 1) * self.n]
    }

    pub fn values(&self) -> &[f64] {
        self.channel(0)
    }
}

/// A forward pass together with the activations needed to run it backwards.
#[derive(Debug)]
pub struct BatchForward {
    output: BatchOutput,
    chunks: Vec<ChunkTape>,
}

impl BatchForward {
    pub fn output(&self) -> &BatchOutput {
        &self.output
    }
}

#[derive(Debug)]
struct ChunkTape {
    start: usize,
    len: usize,
    /// Input activations of every affine layer, `fan_in x (channels * len)`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
}

/// `C (m x n) = A (m x k) B (k x n) + beta C` with arbitrary strides for `A`
/// and `B` and a dense row-major `C`.
#[allow(clippy::too_many_arguments)]
fn gemm(
    (m, k, n): (usize, usize, usize),
    a: &[f64],
    (rsa, csa): (usize, usize),
    b: &[f64],
    (rsb, csb): (usize, usize),
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() >= m * n);
    if k > 0 {
        assert!((m - 1) * rsa + (k - 1) * csa < a.len());
        assert!((k - 1) * rsb + (n - 1) * csb < b.len());
    }
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Network {
    fn check_batch(&self, params: &[f64], points: &PointSet) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                got: params.len(),
            });
        }
        if points.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: points.dim(),
            });
        }
        Ok(())
    }

    /// Output jets of `order` at every point.
    pub fn forward_batch(&self, params: &[f64], points: &PointSet, order: usize) -> Result<BatchOutput> {
        Ok(self.run_forward(params, points, order, false)?.output)
    }

    /// Like [`Network::forward_batch`], keeping the tape for
    /// [`Network::backward_batch`].
    pub fn forward_batch_taped(&self, params: &[f64], points: &PointSet, order: usize) -> Result<BatchForward> {
        self.run_forward(params, points, order, true)
    }

    fn run_forward(&self, params: &[f64], points: &PointSet, order: usize, keep: bool) -> Result<BatchForward> {
        let channels = ChannelLayout::new(self.input_dim(), order)?;
        self.check_batch(params, points)?;
        let n = points.len();
        let nc = channels.count();
        let starts: Vec<usize> = (0..n).step_by(CHUNK).collect();
        let results: Vec<(Vec<f64>, ChunkTape)> = starts
            .par_iter()
            .map(|&start| {
                let len = CHUNK.min(n - start);
                self.chunk_forward(params, points, start, len, channels, keep)
            })
            .collect();

        let mut values = vec![0.0; nc * n];
        let mut chunks = Vec::with_capacity(if keep { results.len() } else { 0 });
        for (out, tape) in results {
            for c in 0..nc {
                values[c * n + tape.start..c * n + tape.start + tape.len]
                    .copy_from_slice(&out[c * tape.len..(c + 1) * tape.len]);
            }
            if keep {
                chunks.push(tape);
            }
        }
        Ok(BatchForward {
            output: BatchOutput { channels, n, values },
            chunks,
        })
    }

    fn chunk_forward(
        &self,
        params: &[f64],
        points: &PointSet,
        start: usize,
        len: usize,
        channels: ChannelLayout,
        keep: bool,
    ) -> (Vec<f64>, ChunkTape) {
        let d = self.input_dim();
        let nc = channels.count();
        let cols = nc * len;

        // Input jets: x itself, the unit vectors, and zero curvature.
        let mut a = vec![0.0; d * cols];
        for p in 0..len {
            let x = points.point(start + p);
            for k in 0..d {
                a[k * cols + p] = x[k];
            }
        }
        if channels.order() >= 1 {
            for k in 0..d {
                let c = channels.first(k);
                a[k * cols + c * len..k * cols + (c + 1) * len].fill(1.0);
            }
        }

        let slots = self.layout().slots();
        let last = slots.len() - 1;
        let mut inputs = Vec::with_capacity(if keep { slots.len() } else { 0 });
        let mut pre = Vec::with_capacity(if keep { last } else { 0 });
        for (l, s) in slots.iter().enumerate() {
            let w = &params[s.weights..s.biases];
            let b = &params[s.biases..s.biases + s.fan_out];
            let mut z = vec![0.0; s.fan_out * cols];
            gemm(
                (s.fan_out, s.fan_in, cols),
                w,
                (s.fan_in, 1),
                &a,
                (cols, 1),
                0.0,
                &mut z,
            );
            for (r, &br) in b.iter().enumerate() {
                z[r * cols..r * cols + len].iter_mut().for_each(|v| *v += br);
            }
            if l == last {
                if keep {
                    inputs.push(a);
                }
                let tape = ChunkTape {
                    start,
                    len,
                    inputs,
                    pre,
                };
                return (z, tape);
            }
            let next = activate(&z, s.fan_out, len, channels);
            if keep {
                inputs.push(std::mem::replace(&mut a, next));
                pre.push(z);
            } else {
                a = next;
            }
        }
        unreachable!("a network always has an output layer")
    }

    /// Adds to `grad` the gradient with respect to the parameters of
    /// `sum_{c,p} seeds[c * n + p] * output[c * n + p]`.
    pub fn backward_batch(
        &self,
        params: &[f64],
        forward: &BatchForward,
        seeds: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        let channels = forward.output.channels;
        let n = forward.output.n;
        let nc = channels.count();
        if seeds.len() != nc * n {
            return Err(Error::DimensionMismatch {
                expected: nc * n,
                got: seeds.len(),
            });
        }
        if grad.len() != self.parameter_count() || params.len() != self.parameter_count() {
            return Err(Error::DimensionMismatch {
                expected: self.parameter_count(),
                got: grad.len().min(params.len()),
            });
        }
        if n > 0 && forward.chunks.is_empty() {
            return Err(Error::InvalidParameter("forward pass was run without a tape".into()));
        }
        let partials: Vec<Vec<f64>> = forward
            .chunks
            .par_iter()
            .map(|tape| {
                let mut g = vec![0.0; grad.len()];
                self.chunk_backward(params, tape, seeds, n, channels, &mut g);
                g
            })
            .collect();
        for g in partials {
            for (acc, v) in grad.iter_mut().zip(&g) {
                *acc += v;
            }
        }
        Ok(())
    }

    fn chunk_backward(
        &self,
        params: &[f64],
        tape: &ChunkTape,
        seeds: &[f64],
        n: usize,
        channels: ChannelLayout,
        grad: &mut [f64],
    ) {
        let len = tape.len;
        let nc = channels.count();
        let cols = nc * len;
        let mut zbar = vec![0.0; cols];
        for c in 0..nc {
            zbar[c * len..(c + 1) * len].copy_from_slice(&seeds[c * n + tape.start..c * n + tape.start + len]);
        }

        let slots = self.layout().slots();
        for l in (0..slots.len()).rev() {
            let s = slots[l];
            let a_in = &tape.inputs[l];
            let (gw, rest) = grad[s.weights..].split_at_mut(s.fan_in * s.fan_out);
            gemm((s.fan_out, cols, s.fan_in), &zbar, (cols, 1), a_in, (1, cols), 1.0, gw);
            for (r, gb) in rest[..s.fan_out].iter_mut().enumerate() {
                *gb += zbar[r * cols..r * cols + len].iter().sum::<f64>();
            }
            if l == 0 {
                break;
            }
            let w = &params[s.weights..s.biases];
            let mut abar = vec![0.0; s.fan_in * cols];
            gemm(
                (s.fan_in, s.fan_out, cols),
                w,
                (1, s.fan_in),
                &zbar,
                (cols, 1),
                0.0,
                &mut abar,
            );
            // Layer l-1 is hidden: its output is this layer's input.
            zbar = activate_backward(&abar, &tape.pre[l - 1], a_in, slots[l - 1].fan_out, len, channels);
        }
    }
}

/// Elementwise tanh jet map from pre-activations to activations.
fn activate(z: &[f64], rows: usize, len: usize, channels: ChannelLayout) -> Vec<f64> {
    let d = channels.dim();
    let nc = channels.count();
    let cols = nc * len;
    let pairs = channels.pairs();
    let mut out = vec![0.0; rows * cols];
    let mut s1 = vec![0.0; len];
    let mut s2 = vec![0.0; len];
    for r in 0..rows {
        let zr = &z[r * cols..(r + 1) * cols];
        let or = &mut out[r * cols..(r + 1) * cols];
        for p in 0..len {
            let t = zr[p].tanh();
            or[p] = t;
            s1[p] = 1.0 - t * t;
            s2[p] = -2.0 * t * s1[p];
        }
        if nc == 1 {
            continue;
        }
        for i in 0..d {
            let c = channels.first(i) * len;
            for p in 0..len {
                or[c + p] = s1[p] * zr[c + p];
            }
        }
        for (q, &(i, j)) in pairs.iter().enumerate() {
            let c = (1 + d + q) * len;
            let ci = channels.first(i) * len;
            let cj = channels.first(j) * len;
            for p in 0..len {
                or[c + p] = s1[p] * zr[c + p] + s2[p] * zr[ci + p] * zr[cj + p];
            }
        }
    }
    out
}

/// Adjoint of [`activate`]: maps activation adjoints to pre-activation
/// adjoints, given the pre-activations `z` and activations `a`.
fn activate_backward(abar: &[f64], z: &[f64], a: &[f64], rows: usize, len: usize, channels: ChannelLayout) -> Vec<f64> {
    let d = channels.dim();
    let nc = channels.count();
    let cols = nc * len;
    let pairs = channels.pairs();
    let mut zbar = vec![0.0; rows * cols];
    let mut s1 = vec![0.0; len];
    let mut s2 = vec![0.0; len];
    let mut s3 = vec![0.0; len];
    for r in 0..rows {
        let ab = &abar[r * cols..(r + 1) * cols];
        let zr = &z[r * cols..(r + 1) * cols];
        let ar = &a[r * cols..(r + 1) * cols];
        let zb = &mut zbar[r * cols..(r + 1) * cols];
        for p in 0..len {
            let t = ar[p];
            s1[p] = 1.0 - t * t;
            s2[p] = -2.0 * t * s1[p];
            // d s2 / dz
            s3[p] = -2.0 * s1[p] * s1[p] - 2.0 * t * s2[p];
            zb[p] = s1[p] * ab[p];
        }
        if nc == 1 {
            continue;
        }
        for i in 0..d {
            let c = channels.first(i) * len;
            for p in 0..len {
                zb[p] += s2[p] * ab[c + p] * zr[c + p];
                zb[c + p] = s1[p] * ab[c + p];
            }
        }
        for (q, &(i, j)) in pairs.iter().enumerate() {
            let c = (1 + d + q) * len;
            let ci = channels.first(i) * len;
            let cj = channels.first(j) * len;
            for p in 0..len {
                let g = ab[c + p];
                let (zi, zj) = (zr[ci + p], zr[cj + p]);
                zb[p] += g * (s2[p] * zr[c + p] + s3[p] * zi * zj);
                zb[c + p] = s1[p] * g;
                zb[ci + p] += g * s2[p] * zj;
                zb[cj + p] += g * s2[p] * zi;
            }
        }
    }
    zbar
}
