//! Cross-correlation via im2col + GEMM.
//!
//! 1-D convolutions are 2-D convolutions over a height-1 plane, so both
//! dimensionalities share one implementation.

use super::scalar::{gemm, MatRef};
use super::{NeuralError, Result, Scalar, Tensor};

/// Upper bound on im2col buffer elements per GEMM call; larger batches are chunked.
const COLS_BUDGET: usize = 1 << 23;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub ph: usize,
    pub pw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

/// `floor((in + 2 pad - kernel) / stride) + 1`, or an error if the kernel does not fit.
pub(crate) fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    if stride == 0 || kernel == 0 || input + 2 * pad < kernel {
        return None;
    }
    Some((input + 2 * pad - kernel) / stride + 1)
}

impl ConvGeom {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn new(
        (in_c, in_h, in_w): (usize, usize, usize),
        out_c: usize,
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
        (ph, pw): (usize, usize),
    ) -> Result<Self> {
        let out_h = out_extent(in_h, kh, sh, ph);
        let out_w = out_extent(in_w, kw, sw, pw);
        match (out_h, out_w) {
            (Some(out_h), Some(out_w)) if in_c > 0 && out_c > 0 => Ok(ConvGeom {
                in_c,
                in_h,
                in_w,
                out_c,
                kh,
                kw,
                sh,
                sw,
                ph,
                pw,
                out_h,
                out_w,
            }),
            _ => Err(NeuralError::ShapeMismatch(format!(
                "kernel {kh}x{kw} stride {sh}x{sw} pad {ph}x{pw} does not fit input {in_c}x{in_h}x{in_w}"
            ))),
        }
    }

    pub(crate) fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    pub(crate) fn in_len(&self) -> usize {
        self.in_c * self.in_h * self.in_w
    }

    pub(crate) fn out_plane(&self) -> usize {
        self.out_h * self.out_w
    }

    pub(crate) fn out_len(&self) -> usize {
        self.out_c * self.out_plane()
    }

    fn chunk(&self, n: usize) -> usize {
        (COLS_BUDGET / (self.patch_len() * self.out_plane()).max(1)).clamp(1, n.max(1))
    }
}

/// Unfolds one sample into columns `[patch_len, out_plane]`, written at
/// column offset `col0` of a matrix with row length `ld`.
fn im2col<T: Scalar>(g: &ConvGeom, x: &[T], cols: &mut [T], ld: usize, col0: usize) {
    let plane = g.out_plane();
    for c in 0..g.in_c {
        let xc = &x[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * ld + col0..row * ld + col0 + plane];
                for oh in 0..g.out_h {
                    let ih = (oh * g.sh + ki) as isize - g.ph as isize;
                    let line = &mut dst[oh * g.out_w..(oh + 1) * g.out_w];
                    if ih < 0 || ih as usize >= g.in_h {
                        line.fill(T::zero());
                        continue;
                    }
                    let src = &xc[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    for (ow, o) in line.iter_mut().enumerate() {
                        let iw = (ow * g.sw + kj) as isize - g.pw as isize;
                        *o = if iw < 0 || iw as usize >= g.in_w {
                            T::zero()
                        } else {
                            src[iw as usize]
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into a sample gradient.
fn col2im<T: Scalar>(g: &ConvGeom, cols: &[T], ld: usize, col0: usize, dx: &mut [T]) {
    let plane = g.out_plane();
    for c in 0..g.in_c {
        let dxc = &mut dx[c * g.in_h * g.in_w..(c + 1) * g.in_h * g.in_w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * ld + col0..row * ld + col0 + plane];
                for oh in 0..g.out_h {
                    let ih = (oh * g.sh + ki) as isize - g.ph as isize;
                    if ih < 0 || ih as usize >= g.in_h {
                        continue;
                    }
                    let dst = &mut dxc[ih as usize * g.in_w..(ih as usize + 1) * g.in_w];
                    for ow in 0..g.out_w {
                        let iw = (ow * g.sw + kj) as isize - g.pw as isize;
                        if iw >= 0 && (iw as usize) < g.in_w {
                            dst[iw as usize] += src[oh * g.out_w + ow];
                        }
                    }
                }
            }
        }
    }
}

/// Batched forward pass: `x` is `[n, in_len]`, `out` is `[n, out_len]`.
pub(crate) fn forward_batch<T: Scalar>(g: &ConvGeom, n: usize, x: &[T], w: &[T], b: &[T], out: &mut [T]) {
    forward_chunked(g, n, x, w, b, out, g.chunk(n))
}

fn forward_chunked<T: Scalar>(g: &ConvGeom, n: usize, x: &[T], w: &[T], b: &[T], out: &mut [T], chunk: usize) {
    let (k, plane) = (g.patch_len(), g.out_plane());
    let mut cols = vec![T::zero(); k * chunk * plane];
    let mut res = vec![T::zero(); g.out_c * chunk * plane];
    for s0 in (0..n).step_by(chunk) {
        let m = chunk.min(n - s0);
        let ld = m * plane;
        let cols = &mut cols[..k * ld];
        for s in 0..m {
            im2col(g, &x[(s0 + s) * g.in_len()..(s0 + s + 1) * g.in_len()], cols, ld, s * plane);
        }
        let res = &mut res[..g.out_c * ld];
        gemm(T::one(), MatRef::row_major(w, g.out_c, k), MatRef::row_major(cols, k, ld), T::zero(), res);
        for s in 0..m {
            let o = &mut out[(s0 + s) * g.out_len()..(s0 + s + 1) * g.out_len()];
            for co in 0..g.out_c {
                let src = &res[co * ld + s * plane..co * ld + (s + 1) * plane];
                for (d, &v) in o[co * plane..(co + 1) * plane].iter_mut().zip(src) {
                    *d = v + b[co];
                }
            }
        }
    }
}

/// Batched backward pass. Accumulates into `dw`/`db` (sample order) and
/// writes `dx` when requested.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_batch<T: Scalar>(
    g: &ConvGeom,
    n: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let (k, plane) = (g.patch_len(), g.out_plane());
    let chunk = g.chunk(n);
    let mut cols = vec![T::zero(); k * chunk * plane];
    let mut dmat = vec![T::zero(); g.out_c * chunk * plane];
    let mut dcols = if dx.is_some() { vec![T::zero(); k * chunk * plane] } else { Vec::new() };
    if let Some(dx) = dx.as_deref_mut() {
        dx.fill(T::zero());
    }
    for s0 in (0..n).step_by(chunk) {
        let m = chunk.min(n - s0);
        let ld = m * plane;
        let cols = &mut cols[..k * ld];
        let dmat = &mut dmat[..g.out_c * ld];
        for s in 0..m {
            im2col(g, &x[(s0 + s) * g.in_len()..(s0 + s + 1) * g.in_len()], cols, ld, s * plane);
            let d = &dy[(s0 + s) * g.out_len()..(s0 + s + 1) * g.out_len()];
            for co in 0..g.out_c {
                dmat[co * ld + s * plane..co * ld + (s + 1) * plane]
                    .copy_from_slice(&d[co * plane..(co + 1) * plane]);
            }
        }
        gemm(
            T::one(),
            MatRef::row_major(dmat, g.out_c, ld),
            MatRef::row_major(cols, k, ld).t(),
            T::one(),
            dw,
        );
        for (co, acc) in db.iter_mut().enumerate() {
            let mut s = 0.0f64;
            for &v in &dmat[co * ld..(co + 1) * ld] {
                s += v.as_f64();
            }
            *acc += T::from_f64(s);
        }
        if let Some(dx) = dx.as_deref_mut() {
            let dcols = &mut dcols[..k * ld];
            gemm(
                T::one(),
                MatRef::row_major(w, g.out_c, k).t(),
                MatRef::row_major(dmat, g.out_c, ld),
                T::zero(),
                dcols,
            );
            for s in 0..m {
                col2im(g, dcols, ld, s * plane, &mut dx[(s0 + s) * g.in_len()..(s0 + s + 1) * g.in_len()]);
            }
        }
    }
}

/// Geometry for a tensor-level call: weights `[out, in, k]` (1-D) or
/// `[out, in, k, k]` (2-D) against input `[n, in, len]` / `[n, in, h, w]`.
fn geometry_for(input: &[usize], weights: &[usize], stride: usize, padding: usize) -> Result<(usize, ConvGeom)> {
    let mismatch = || {
        NeuralError::ShapeMismatch(format!("conv input {input:?} is incompatible with weights {weights:?}"))
    };
    match (input, weights) {
        ([n, c, l], [co, ci, k]) if c == ci => {
            Ok((*n, ConvGeom::new((*c, 1, *l), *co, (1, *k), (1, stride), (0, padding))?))
        }
        ([n, c, h, w], [co, ci, kh, kw]) if c == ci => {
            Ok((*n, ConvGeom::new((*c, *h, *w), *co, (*kh, *kw), (stride, stride), (padding, padding))?))
        }
        _ => Err(mismatch()),
    }
}

/// Cross-correlation of a batch with a filter bank plus per-channel bias.
pub fn conv_forward<T: Scalar>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (n, g) = geometry_for(input.shape(), weights.shape(), stride, padding)?;
    if bias.len() != g.out_c {
        return Err(NeuralError::ShapeMismatch(format!(
            "bias has {} values for {} output channels",
            bias.len(),
            g.out_c
        )));
    }
    let mut out = vec![T::zero(); n * g.out_len()];
    forward_batch(&g, n, input.data(), weights.data(), bias.data(), &mut out);
    let shape = if weights.shape().len() == 3 {
        vec![n, g.out_c, g.out_w]
    } else {
        vec![n, g.out_c, g.out_h, g.out_w]
    };
    Tensor::from_vec(shape, out)
}
