//! Elementwise activation functions and their derivatives.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{NeuralError, Result, Scalar, Tensor};

/// SeLU scale.
pub const SELU_LAMBDA: f64 = 1.050_700_987_355_480_5;
/// SeLU negative-side scale.
pub const SELU_ALPHA: f64 = 1.673_263_242_354_377_2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ActivationKind {
    Tanh,
    Relu,
    Elu { alpha: f64 },
    /// Fixed constants [`SELU_LAMBDA`], [`SELU_ALPHA`].
    Selu,
    /// `x * sigmoid(beta * x)`.
    Swish { beta: f64 },
}

impl ActivationKind {
    pub const ELU: ActivationKind = ActivationKind::Elu { alpha: 1.0 };
    pub const SWISH: ActivationKind = ActivationKind::Swish { beta: 1.0 };

    pub fn validate(&self) -> Result<()> {
        match *self {
            ActivationKind::Elu { alpha: p } | ActivationKind::Swish { beta: p }
                if !(p.is_finite() && p > 0.0) =>
            {
                Err(NeuralError::InvalidConfig(format!("{self}: parameter must be positive")))
            }
            _ => Ok(()),
        }
    }

    /// True for activations whose derivative jumps at 0.
    pub fn has_kink(&self) -> bool {
        match *self {
            ActivationKind::Relu | ActivationKind::Selu => true,
            ActivationKind::Elu { alpha } => alpha != 1.0,
            ActivationKind::Tanh | ActivationKind::Swish { .. } => false,
        }
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Relu => x.max(0.0),
            ActivationKind::Elu { alpha } => elu(x, alpha),
            ActivationKind::Selu => SELU_LAMBDA * elu(x, SELU_ALPHA),
            ActivationKind::Swish { beta } => x * sigmoid(beta * x),
        }
    }

    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ActivationKind::Tanh => {
                let t = x.tanh();
                1.0 - t * t
            }
            ActivationKind::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            ActivationKind::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            ActivationKind::Selu => {
                SELU_LAMBDA * if x > 0.0 { 1.0 } else { SELU_ALPHA * x.exp() }
            }
            ActivationKind::Swish { beta } => {
                let s = sigmoid(beta * x);
                s + beta * x * s * (1.0 - s)
            }
        }
    }

    pub(crate) fn forward_slice<T: Scalar>(&self, x: &[T], y: &mut [T]) {
        for (o, &v) in y.iter_mut().zip(x) {
            *o = T::from_f64(self.apply(v.as_f64()));
        }
    }

    pub(crate) fn backward_slice<T: Scalar>(&self, x: &[T], dy: &[T], dx: &mut [T]) {
        for ((o, &v), &g) in dx.iter_mut().zip(x).zip(dy) {
            *o = T::from_f64(self.derivative(v.as_f64()) * g.as_f64());
        }
    }
}

#[inline]
fn elu(x: f64, alpha: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ActivationKind::Tanh => write!(f, "tanh"),
            ActivationKind::Relu => write!(f, "relu"),
            ActivationKind::Elu { alpha } if *alpha == 1.0 => write!(f, "elu"),
            ActivationKind::Elu { alpha } => write!(f, "elu:{alpha}"),
            ActivationKind::Selu => write!(f, "selu"),
            ActivationKind::Swish { beta } if *beta == 1.0 => write!(f, "swish"),
            ActivationKind::Swish { beta } => write!(f, "swish:{beta}"),
        }
    }
}

impl FromStr for ActivationKind {
    type Err = NeuralError;

    /// `tanh`, `relu`, `selu`, `elu[:alpha]`, `swish[:beta]`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n, Some(p)),
            None => (s, None),
        };
        let param = param
            .map(|p| {
                p.parse::<f64>()
                    .map_err(|_| NeuralError::InvalidConfig(format!("bad activation parameter in {s:?}")))
            })
            .transpose()?;
        let kind = match (name.to_ascii_lowercase().as_str(), param) {
            ("tanh", None) => ActivationKind::Tanh,
            ("relu", None) => ActivationKind::Relu,
            ("selu", None) => ActivationKind::Selu,
            ("elu", p) => ActivationKind::Elu { alpha: p.unwrap_or(1.0) },
            ("swish", p) => ActivationKind::Swish { beta: p.unwrap_or(1.0) },
            ("tanh" | "relu" | "selu", Some(_)) => {
                return Err(NeuralError::InvalidConfig(format!("{name} takes no parameter")))
            }
            _ => return Err(NeuralError::InvalidConfig(format!("unknown activation {s:?}"))),
        };
        kind.validate()?;
        Ok(kind)
    }
}

impl TryFrom<String> for ActivationKind {
    type Error = NeuralError;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ActivationKind> for String {
    fn from(k: ActivationKind) -> String {
        k.to_string()
    }
}

/// Applies `kind` elementwise.
pub fn activation_forward<T: Scalar>(kind: ActivationKind, x: &Tensor<T>) -> Tensor<T> {
    let mut y = Tensor::zeros(x.shape());
    kind.forward_slice(x.data(), y.data_mut());
    y
}

/// `f'(x) * upstream`, elementwise.
pub fn activation_backward<T: Scalar>(
    kind: ActivationKind,
    x: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<Tensor<T>> {
    if x.shape() != upstream.shape() {
        return Err(NeuralError::ShapeMismatch(format!(
            "activation input {:?} vs upstream {:?}",
            x.shape(),
            upstream.shape()
        )));
    }
    let mut dx = Tensor::zeros(x.shape());
    kind.backward_slice(x.data(), upstream.data(), dx.data_mut());
    Ok(dx)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ALL: [ActivationKind; 6] = [
        ActivationKind::Tanh,
        ActivationKind::Relu,
        ActivationKind::ELU,
        ActivationKind::Elu { alpha: 0.5 },
        ActivationKind::Selu,
        ActivationKind::SWISH,
    ];

    #[test]
    fn point_values() {
        assert_eq!(ActivationKind::Relu.apply(-2.0), 0.0);
        assert_eq!(ActivationKind::SWISH.apply(0.0), 0.0);
        assert_eq!(ActivationKind::Tanh.apply(0.0), 0.0);
        assert_eq!(ActivationKind::ELU.apply(0.0), 0.0);
        assert!((ActivationKind::SWISH.apply(1.0) - 0.731_058_6).abs() < 1e-7);
    }

    #[test]
    fn tanh_matches_exponential_form() {
        for i in -40..=40 {
            let x = f64::from(i) * 0.1;
            let e = (-2.0 * x).exp();
            assert!((ActivationKind::Tanh.apply(x) - (1.0 - e) / (1.0 + e)).abs() < 1e-12);
        }
    }

    #[test]
    fn printed_swish_is_beta_two() {
        let k = ActivationKind::Swish { beta: 2.0 };
        for i in -50..=50 {
            let x = f64::from(i) * 0.2;
            assert!((k.apply(x) - x / (1.0 + (-2.0 * x).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn identities() {
        for i in -100..=100 {
            let x = f64::from(i) * 0.1;
            assert!((ActivationKind::Swish { beta: 50.0 }.apply(x) - x.max(0.0)).abs() < 0.02);
            assert_eq!(ActivationKind::Tanh.apply(-x), -ActivationKind::Tanh.apply(x));
            if x > 0.0 {
                assert_eq!(ActivationKind::Selu.apply(x), SELU_LAMBDA * x);
            }
        }
        // Negative-side saturation.
        assert!((ActivationKind::ELU.apply(-30.0) + 1.0).abs() < 1e-12);
        assert!((ActivationKind::Selu.apply(-30.0) + SELU_LAMBDA * SELU_ALPHA).abs() < 1e-12);
    }

    #[test]
    fn derivative_special_points() {
        assert_eq!(ActivationKind::Relu.derivative(0.0), 0.0);
        assert_eq!(ActivationKind::Relu.derivative(3.0), 1.0);
        assert_eq!(ActivationKind::Tanh.derivative(0.0), 1.0);
        let x = Tensor::<f64>::from_vec(vec![2], vec![1.5, 2.0]).unwrap();
        let up = Tensor::from_vec(vec![2], vec![0.25, -4.0]).unwrap();
        assert_eq!(activation_backward(ActivationKind::Relu, &x, &up).unwrap(), up);
    }

    #[test]
    fn derivatives_match_central_differences() {
        let h = 1e-5;
        for kind in ALL {
            for i in -60..=60 {
                let x = f64::from(i) * 0.1 + 0.013;
                let fd = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let an = kind.derivative(x);
                let rel = (fd - an).abs() / an.abs().max(fd.abs()).max(1e-8);
                assert!(rel < 1e-5 || (fd - an).abs() < 1e-9, "{kind} at {x}: {an} vs {fd}");
            }
        }
    }

    #[test]
    fn parse_and_display() {
        for kind in ALL {
            assert_eq!(kind.to_string().parse::<ActivationKind>().unwrap(), kind);
        }
        assert_eq!("swish:2".parse::<ActivationKind>().unwrap(), ActivationKind::Swish { beta: 2.0 });
        assert!("swish:-1".parse::<ActivationKind>().is_err());
        assert!("relu:2".parse::<ActivationKind>().is_err());
        assert!("gelu".parse::<ActivationKind>().is_err());
        let json = serde_json::to_string(&ActivationKind::SWISH).unwrap();
        assert_eq!(json, "\"swish\"");
        assert_eq!(serde_json::from_str::<ActivationKind>("\"elu:0.5\"").unwrap(), ActivationKind::Elu { alpha: 0.5 });
    }
}
