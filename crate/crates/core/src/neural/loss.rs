use super::{Scalar, Tensor};

/// Softmax cross-entropy for one logit vector, stabilized by subtracting the max.
/// Returns the loss and `softmax - onehot`.
pub(crate) fn xent_slice<T: Scalar>(logits: &[T], label: usize, dlogits: &mut [T]) -> f64 {
    let max = logits.iter().map(|v| v.as_f64()).fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for (d, &l) in dlogits.iter_mut().zip(logits) {
        let e = (l.as_f64() - max).exp();
        *d = T::from_f64(e);
        z += e;
    }
    for (j, d) in dlogits.iter_mut().enumerate() {
        let p = d.as_f64() / z;
        *d = T::from_f64(if j == label { p - 1.0 } else { p });
    }
    let shifted = logits[label].as_f64() - max;
    z.ln() - shifted
}

/// Loss and logit gradient for a single example.
pub fn softmax_xent<T: Scalar>(logits: &Tensor<T>, label: usize) -> (f64, Tensor<T>) {
    assert!(label < logits.len(), "label {label} out of range");
    let mut d = Tensor::zeros(logits.shape());
    let loss = xent_slice(logits.data(), label, d.data_mut());
    (loss, d)
}

/// Mean loss over a `[n, classes]` batch; the gradient is scaled by `1/n`.
pub fn softmax_xent_batch<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> (f64, Tensor<T>) {
    let n = labels.len();
    let classes = logits.len() / n.max(1);
    let mut d = Tensor::zeros(logits.shape());
    let mut total = 0.0;
    let inv = T::from_f64(1.0 / n as f64);
    for (i, &label) in labels.iter().enumerate() {
        let row = &mut d.data_mut()[i * classes..(i + 1) * classes];
        total += xent_slice(&logits.data()[i * classes..(i + 1) * classes], label, row);
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
    (total / n as f64, d)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_logits() {
        let l = Tensor::<f64>::from_vec(vec![2], vec![0.3, 0.3]).unwrap();
        let (loss, d) = softmax_xent(&l, 1);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(d.data(), &[0.5, -0.5]);
    }

    #[test]
    fn saturates_and_stays_finite() {
        let l = Tensor::<f64>::from_vec(vec![2], vec![20.0, 0.0]).unwrap();
        assert!(softmax_xent(&l, 0).0 < 1e-8);
        let l = Tensor::<f32>::from_vec(vec![2], vec![1000.0, -1000.0]).unwrap();
        let (loss, d) = softmax_xent(&l, 1);
        assert!(loss.is_finite() && d.all_finite());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let base = [0.2, -1.3, 0.7];
        let h = 1e-6;
        let l = Tensor::<f64>::from_vec(vec![3], base.to_vec()).unwrap();
        let (_, d) = softmax_xent(&l, 2);
        for j in 0..3 {
            let mut p = base;
            p[j] += h;
            let mut m = base;
            m[j] -= h;
            let fp = softmax_xent(&Tensor::from_vec(vec![3], p.to_vec()).unwrap(), 2).0;
            let fm = softmax_xent(&Tensor::from_vec(vec![3], m.to_vec()).unwrap(), 2).0;
            assert!(((fp - fm) / (2.0 * h) - d.data()[j]).abs() < 1e-6);
        }
    }

    #[test]
    fn batch_mean() {
        let l = Tensor::<f64>::from_vec(vec![2, 2], vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        let (loss, d) = softmax_xent_batch(&l, &[0, 1]);
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(d.data(), &[-0.25, 0.25, 0.25, -0.25]);
    }
}
