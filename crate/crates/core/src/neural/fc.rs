use super::scalar::{gemm, MatRef};
use super::{NeuralError, Result, Scalar, Tensor};

/// Batches up to this size stream the weight matrix once per pass instead of
/// calling GEMM, which is memory-bound at small `n`.
const STREAM_MAX_BATCH: usize = 8;

const LANES: usize = 8;

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); LANES];
    let (ca, cb) = (a.chunks_exact(LANES), b.chunks_exact(LANES));
    let tail: T = ca.remainder().iter().zip(cb.remainder()).map(|(&x, &y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for l in 0..LANES {
            acc[l] += x[l] * y[l];
        }
    }
    acc.iter().copied().sum::<T>() + tail
}

fn axpy<T: Scalar>(y: &mut [T], alpha: T, x: &[T]) {
    for (v, &u) in y.iter_mut().zip(x) {
        *v += alpha * u;
    }
}

/// `y = x w^T + b` for `x: [n, d]`, `w: [o, d]`.
pub(crate) fn forward_batch<T: Scalar>(n: usize, d: usize, o: usize, x: &[T], w: &[T], b: &[T], y: &mut [T]) {
    if n <= STREAM_MAX_BATCH {
        for (j, row) in w.chunks_exact(d).enumerate() {
            for i in 0..n {
                y[i * o + j] = dot(&x[i * d..(i + 1) * d], row) + b[j];
            }
        }
        return;
    }
    gemm(T::one(), MatRef::row_major(x, n, d), MatRef::row_major(w, o, d).t(), T::zero(), y);
    for row in y.chunks_exact_mut(o) {
        for (v, &bias) in row.iter_mut().zip(b) {
            *v += bias;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn backward_batch<T: Scalar>(
    n: usize,
    d: usize,
    o: usize,
    x: &[T],
    w: &[T],
    dy: &[T],
    dw: &mut [T],
    db: &mut [T],
    dx: Option<&mut [T]>,
) {
    if n <= STREAM_MAX_BATCH {
        let mut dx = dx;
        if let Some(dx) = dx.as_deref_mut() {
            dx.fill(T::zero());
        }
        for (j, (wrow, dwrow)) in w.chunks_exact(d).zip(dw.chunks_exact_mut(d)).enumerate() {
            let mut bias = 0.0f64;
            for i in 0..n {
                let g = dy[i * o + j];
                bias += g.as_f64();
                if g == T::zero() {
                    continue;
                }
                axpy(dwrow, g, &x[i * d..(i + 1) * d]);
                if let Some(dx) = dx.as_deref_mut() {
                    axpy(&mut dx[i * d..(i + 1) * d], g, wrow);
                }
            }
            db[j] += T::from_f64(bias);
        }
        return;
    }
    gemm(T::one(), MatRef::row_major(dy, n, o).t(), MatRef::row_major(x, n, d), T::one(), dw);
    for (j, acc) in db.iter_mut().enumerate() {
        let mut s = 0.0f64;
        for i in 0..n {
            s += dy[i * o + j].as_f64();
        }
        *acc += T::from_f64(s);
    }
    if let Some(dx) = dx {
        gemm(T::one(), MatRef::row_major(dy, n, o), MatRef::row_major(w, o, d), T::zero(), dx);
    }
}

/// Affine map of a batch; trailing dimensions of `input` are flattened.
pub fn fc_forward<T: Scalar>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (o, d) = match *weights.shape() {
        [o, d] => (o, d),
        _ => return Err(NeuralError::ShapeMismatch(format!("fc weights must be 2-D, got {:?}", weights.shape()))),
    };
    let n = input.shape().first().copied().unwrap_or(0);
    if n == 0 || input.len() != n * d || bias.len() != o {
        return Err(NeuralError::ShapeMismatch(format!(
            "fc input {:?} / bias {:?} incompatible with weights {:?}",
            input.shape(),
            bias.shape(),
            weights.shape()
        )));
    }
    let mut y = vec![T::zero(); n * o];
    forward_batch(n, d, o, input.data(), weights.data(), bias.data(), &mut y);
    Tensor::from_vec(vec![n, o], y)
}
