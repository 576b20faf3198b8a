use rand::Rng;

use super::{Mode, Scalar, Tensor};
use crate::seed;

/// Inverted-dropout scale factors (0 or `1/(1-rate)`) for `len` units.
pub(crate) fn mask<T: Scalar>(len: usize, rate: f64, seed_value: u64) -> Vec<T> {
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mut rng = seed::rng(seed_value);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
        .collect()
}

/// Inverted dropout in train mode, identity in eval mode.
pub fn dropout<T: Scalar>(input: &Tensor<T>, rate: f64, mode: Mode, seed_value: u64) -> Tensor<T> {
    assert!((0.0..1.0).contains(&rate), "dropout rate must be in [0, 1)");
    if mode == Mode::Eval || rate == 0.0 {
        return input.clone();
    }
    let m = mask::<T>(input.len(), rate, seed_value);
    let mut out = input.clone();
    for (v, k) in out.data_mut().iter_mut().zip(m) {
        *v *= k;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_cases() {
        let x = Tensor::<f32>::from_vec(vec![4], vec![1.0, -2.0, 3.5, 0.25]).unwrap();
        assert_eq!(dropout(&x, 0.0, Mode::Train, 1), x);
        assert_eq!(dropout(&x, 0.7, Mode::Eval, 1), x);
    }

    #[test]
    fn train_mode_is_unbiased() {
        // 10^4 seeds; each output unit is x * Bernoulli(0.5) * 2, so the mean has
        // standard error |x| / sqrt(10^4) and a 3-sigma band of 0.03 |x|.
        let x = Tensor::<f64>::from_vec(vec![3], vec![1.0, -2.0, 0.5]).unwrap();
        let mut acc = [0.0f64; 3];
        let seeds = 10_000;
        for s in 0..seeds {
            let y = dropout(&x, 0.5, Mode::Train, s);
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, &v) in acc.iter().zip(x.data()) {
            let mean = a / seeds as f64;
            assert!((mean - v).abs() <= 3.0 * v.abs() / (seeds as f64).sqrt(), "{mean} vs {v}");
        }
    }

    #[test]
    fn masked_units_are_zero_or_rescaled() {
        let x = Tensor::<f64>::from_vec(vec![1000], vec![1.0; 1000]).unwrap();
        let y = dropout(&x, 0.25, Mode::Train, 3);
        assert!(y.data().iter().all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-12));
        let dropped = y.data().iter().filter(|&&v| v == 0.0).count();
        assert!((150..350).contains(&dropped));
    }
}
