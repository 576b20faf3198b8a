use super::conv::out_extent;
use super::{NeuralError, Result, Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PoolGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kh: usize,
    pub kw: usize,
    pub sh: usize,
    pub sw: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl PoolGeom {
    pub(crate) fn new(
        (channels, in_h, in_w): (usize, usize, usize),
        (kh, kw): (usize, usize),
        (sh, sw): (usize, usize),
    ) -> Result<Self> {
        match (out_extent(in_h, kh, sh, 0), out_extent(in_w, kw, sw, 0)) {
            (Some(out_h), Some(out_w)) => Ok(PoolGeom {
                channels,
                in_h,
                in_w,
                kh,
                kw,
                sh,
                sw,
                out_h,
                out_w,
            }),
            _ => Err(NeuralError::ShapeMismatch(format!(
                "pool window {kh}x{kw} stride {sh}x{sw} does not fit input {in_h}x{in_w}"
            ))),
        }
    }

    pub(crate) fn out_len(&self) -> usize {
        self.channels * self.out_h * self.out_w
    }
}

/// Max pooling over `n` samples; `argmax` receives, per output, the index of
/// the winning input within its plane. Ties keep the first (lowest) index.
pub(crate) fn forward_batch<T: Scalar>(g: &PoolGeom, n: usize, x: &[T], out: &mut [T], argmax: &mut [u32]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    for p in 0..n * g.channels {
        let xp = &x[p * in_plane..(p + 1) * in_plane];
        let op = &mut out[p * out_plane..(p + 1) * out_plane];
        let ap = &mut argmax[p * out_plane..(p + 1) * out_plane];
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let (h0, w0) = (oh * g.sh, ow * g.sw);
                let mut best = h0 * g.in_w + w0;
                let mut best_v = xp[best];
                for i in h0..h0 + g.kh {
                    for j in w0..w0 + g.kw {
                        let idx = i * g.in_w + j;
                        if xp[idx] > best_v {
                            best_v = xp[idx];
                            best = idx;
                        }
                    }
                }
                op[oh * g.out_w + ow] = best_v;
                ap[oh * g.out_w + ow] = best as u32;
            }
        }
    }
}

pub(crate) fn backward_batch<T: Scalar>(g: &PoolGeom, n: usize, argmax: &[u32], dy: &[T], dx: &mut [T]) {
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    dx.fill(T::zero());
    for p in 0..n * g.channels {
        let dxp = &mut dx[p * in_plane..(p + 1) * in_plane];
        for (&a, &d) in argmax[p * out_plane..(p + 1) * out_plane]
            .iter()
            .zip(&dy[p * out_plane..(p + 1) * out_plane])
        {
            dxp[a as usize] += d;
        }
    }
}

fn geometry_for(shape: &[usize], window: usize, stride: usize) -> Result<(usize, PoolGeom)> {
    match *shape {
        [n, c, l] => Ok((n, PoolGeom::new((c, 1, l), (1, window), (1, stride))?)),
        [n, c, h, w] => Ok((n, PoolGeom::new((c, h, w), (window, window), (stride, stride))?)),
        _ => Err(NeuralError::ShapeMismatch(format!(
            "pool input must be [n, c, len] or [n, c, h, w], got {shape:?}"
        ))),
    }
}

/// Max pooling of `[n, c, len]` or `[n, c, h, w]` input. Returns the pooled
/// tensor and, per output element, the flat input index that produced it.
pub fn maxpool_forward<T: Scalar>(input: &Tensor<T>, window: usize, stride: usize) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, g) = geometry_for(input.shape(), window, stride)?;
    let mut out = vec![T::zero(); n * g.out_len()];
    let mut arg = vec![0u32; n * g.out_len()];
    forward_batch(&g, n, input.data(), &mut out, &mut arg);
    let in_plane = g.in_h * g.in_w;
    let out_plane = g.out_h * g.out_w;
    let flat = arg
        .iter()
        .enumerate()
        .map(|(i, &a)| (i / out_plane) * in_plane + a as usize)
        .collect();
    let mut shape = input.shape().to_vec();
    let last = shape.len() - 1;
    shape[last] = g.out_w;
    if shape.len() == 4 {
        shape[2] = g.out_h;
    }
    Ok((Tensor::from_vec(shape, out)?, flat))
}

/// Routes `upstream` back to the recorded argmax positions.
pub fn maxpool_backward<T: Scalar>(input_shape: &[usize], argmax: &[usize], upstream: &Tensor<T>) -> Result<Tensor<T>> {
    if argmax.len() != upstream.len() {
        return Err(NeuralError::ShapeMismatch("argmax and upstream sizes differ".into()));
    }
    let mut dx = Tensor::zeros(input_shape);
    for (&a, &d) in argmax.iter().zip(upstream.data()) {
        dx.data_mut()[a] += d;
    }
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_max() {
        let x = Tensor::<f64>::from_vec(vec![1, 1, 4], vec![1.0, 3.0, 2.0, 5.0]).unwrap();
        let (y, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 3]);
    }

    #[test]
    fn ties_route_to_lowest_index() {
        let x = Tensor::<f64>::from_vec(vec![1, 1, 2, 2], vec![7.0; 4]).unwrap();
        let (y, arg) = maxpool_forward(&x, 2, 2).unwrap();
        assert_eq!(y.data(), &[7.0]);
        assert_eq!(arg, vec![0]);
        let up = Tensor::from_vec(vec![1, 1, 1, 1], vec![2.0]).unwrap();
        let dx = maxpool_backward(x.shape(), &arg, &up).unwrap();
        assert_eq!(dx.data(), &[2.0, 0.0, 0.0, 0.0]);

        let x = Tensor::<f64>::from_vec(vec![1, 1, 5], vec![1.0; 5]).unwrap();
        let (y, arg) = maxpool_forward(&x, 3, 2).unwrap();
        assert_eq!(y.data(), &[1.0, 1.0]);
        assert_eq!(arg, vec![0, 2]);
    }

    #[test]
    fn shapes() {
        let g = PoolGeom::new((96, 62, 62), (3, 3), (2, 2)).unwrap();
        assert_eq!((g.out_h, g.out_w), (30, 30));
        let x = Tensor::<f32>::zeros(&[2, 3, 9]);
        let (y, _) = maxpool_forward(&x, 3, 2).unwrap();
        assert_eq!(y.shape(), &[2, 3, 4]);
        assert!(maxpool_forward(&x, 10, 1).is_err());
    }

    #[test]
    fn overlapping_windows_accumulate_gradient() {
        let x = Tensor::<f64>::from_vec(vec![1, 1, 5], vec![0.0, 0.0, 9.0, 0.0, 0.0]).unwrap();
        let (_, arg) = maxpool_forward(&x, 3, 2).unwrap();
        let up = Tensor::from_vec(vec![1, 1, 2], vec![1.0, 1.0]).unwrap();
        let dx = maxpool_backward(x.shape(), &arg, &up).unwrap();
        assert_eq!(dx.data(), &[0.0, 0.0, 2.0, 0.0, 0.0]);
    }
}
