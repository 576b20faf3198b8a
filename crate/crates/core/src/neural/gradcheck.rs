//! Central finite-difference verification of backward passes.
//!
//! The relative error of one coordinate is
//! `|analytic - numeric| / max(|analytic|, |numeric|, floor)`. Coordinates
//! whose `+eps` or `-eps` pass takes a different piecewise branch than the
//! unperturbed pass (relu sign flips, pooling argmax changes) are skipped and
//! counted, since the derivative is undefined or discontinuous there.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::{
    ActivationKind, ArchitectureProfile, Dimensionality, InitScheme, LayerSpec, Network, Result, Tensor,
};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckOptions {
    pub epsilon: f64,
    /// Lower bound on the relative-error denominator.
    pub floor: f64,
    /// Coordinates sampled per tensor; `None` checks every coordinate.
    pub max_coords: Option<usize>,
    pub check_input: bool,
    pub seed: u64,
    /// Multiplies every analytic gradient by `1 + fault`. Negative control only.
    pub fault: Option<f64>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            epsilon: 1e-4,
            floor: 1e-6,
            max_coords: Some(200),
            check_input: true,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub skipped: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub profile: String,
    pub max_rel_error: f64,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance && self.tensors.iter().any(|t| t.checked > 0)
    }
}

fn rel_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

fn coords(len: usize, max: Option<usize>, seed_value: u64) -> Vec<usize> {
    match max {
        Some(m) if m < len => {
            let mut v = sample(&mut seed::rng(seed_value), len, m).into_vec();
            v.sort_unstable();
            v
        }
        _ => (0..len).collect(),
    }
}

/// Checks every parameter tensor (and optionally the input gradient) of `net`
/// on the mean loss of `(input, labels)`. Dropout, if active, uses one fixed
/// mask for all evaluations.
pub fn grad_check(
    net: &Network<f64>,
    input: &Tensor<f64>,
    labels: &[usize],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let mask_seed = seed::derive(opts.seed, "dropout");
    let base_pass = net.forward(input, mask_seed)?;
    let base_sig = net.branch_signature(&base_pass);
    let (_, grads) = net.loss_and_gradients(input, labels, mask_seed, opts.check_input)?;
    let scale = 1.0 + opts.fault.unwrap_or(0.0);
    let eps = opts.epsilon;

    // Evaluates the loss at a perturbed network/input; `None` on a branch change.
    let probe = |n: &Network<f64>, x: &Tensor<f64>| -> Result<Option<f64>> {
        let pass = n.forward(x, mask_seed)?;
        if n.branch_signature(&pass) != base_sig {
            return Ok(None);
        }
        Ok(Some(super::loss::softmax_xent_batch(pass.logits(), labels).0))
    };

    let mut tensors = Vec::new();
    let mut work = net.clone();
    for (li, g) in grads.params.iter().enumerate() {
        for (is_bias, analytic) in [(false, &g.weight), (true, &g.bias)] {
            let name = format!("{}.{}", g.name, if is_bias { "bias" } else { "weight" });
            let mut check = TensorCheck {
                name: name.clone(),
                checked: 0,
                skipped: 0,
                max_rel_error: 0.0,
            };
            for i in coords(analytic.len(), opts.max_coords, seed::derive(opts.seed, &name)) {
                let slot = |w: &mut Network<f64>| -> *mut f64 {
                    let p = &mut w.params_mut()[li];
                    let t = if is_bias { &mut p.bias } else { &mut p.weight };
                    &mut t.data_mut()[i]
                };
                let orig = unsafe { *slot(&mut work) };
                unsafe { *slot(&mut work) = orig + eps };
                let plus = probe(&work, input)?;
                unsafe { *slot(&mut work) = orig - eps };
                let minus = probe(&work, input)?;
                unsafe { *slot(&mut work) = orig };
                match (plus, minus) {
                    (Some(p), Some(m)) => {
                        let numeric = (p - m) / (2.0 * eps);
                        let e = rel_error(analytic.data()[i] * scale, numeric, opts.floor);
                        check.max_rel_error = check.max_rel_error.max(e);
                        check.checked += 1;
                    }
                    _ => check.skipped += 1,
                }
            }
            tensors.push(check);
        }
    }
    if let Some(dx) = &grads.input {
        let mut check = TensorCheck {
            name: "input".into(),
            checked: 0,
            skipped: 0,
            max_rel_error: 0.0,
        };
        let mut x = input.clone();
        for i in coords(x.len(), opts.max_coords, seed::derive(opts.seed, "input")) {
            let orig = x.data()[i];
            x.data_mut()[i] = orig + eps;
            let plus = probe(net, &x)?;
            x.data_mut()[i] = orig - eps;
            let minus = probe(net, &x)?;
            x.data_mut()[i] = orig;
            match (plus, minus) {
                (Some(p), Some(m)) => {
                    let numeric = (p - m) / (2.0 * eps);
                    let e = rel_error(dx.data()[i] * scale, numeric, opts.floor);
                    check.max_rel_error = check.max_rel_error.max(e);
                    check.checked += 1;
                }
                _ => check.skipped += 1,
            }
        }
        tensors.push(check);
    }
    Ok(GradCheckReport {
        profile: net.profile().name.clone(),
        max_rel_error: tensors.iter().map(|t| t.max_rel_error).fold(0.0, f64::max),
        tensors,
    })
}

/// Random `[n, input_shape..]` uniform(-1, 1) batch with alternating labels.
pub fn random_batch(profile: &ArchitectureProfile, n: usize, seed_value: u64) -> (Tensor<f64>, Vec<usize>) {
    let mut shape = vec![n];
    shape.extend_from_slice(&profile.input_shape);
    let len = shape.iter().product();
    let mut rng = seed::rng(seed_value);
    let data = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|i| i % profile.n_classes).collect();
    (Tensor::from_vec(shape, data).expect("shape"), labels)
}

/// Builds a network with small random biases so no activation input sits
/// exactly on a kink, then checks it on a random batch.
pub fn check_profile(profile: &ArchitectureProfile, batch: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut net = Network::<f64>::new(profile.clone(), InitScheme::Auto, seed::derive(opts.seed, "init"))?;
    let mut rng = seed::rng(seed::derive(opts.seed, "bias"));
    for p in net.params_mut() {
        for b in p.bias.data_mut() {
            *b = rng.random_range(-0.1..0.1);
        }
    }
    let (x, labels) = random_batch(profile, batch, seed::derive(opts.seed, "batch"));
    grad_check(&net, &x, &labels, opts)
}

fn single(name: &str, dimensionality: Dimensionality, input_shape: Vec<usize>, layer: Option<LayerSpec>) -> ArchitectureProfile {
    let mut layers: Vec<LayerSpec> = layer.into_iter().collect();
    layers.push(LayerSpec::Fc {
        name: "head".into(),
        out_features: 2,
    });
    ArchitectureProfile {
        name: name.into(),
        dimensionality,
        input_shape,
        layers,
        n_classes: 2,
    }
}

/// One small profile per layer type, each a single layer under test followed
/// by a 2-way FC head that turns its output into a loss.
pub fn isolation_profiles() -> Vec<ArchitectureProfile> {
    use Dimensionality::{OneD, TwoD};
    let conv = |k, s, p| LayerSpec::Conv {
        name: "conv".into(),
        out_channels: 3,
        kernel: k,
        stride: s,
        padding: p,
    };
    let mut v = vec![
        single("fc", OneD, vec![2, 5], None),
        single("conv1d", OneD, vec![2, 17], Some(conv(5, 2, 1))),
        single("conv2d", TwoD, vec![2, 9, 9], Some(conv(3, 2, 1))),
        single("maxpool1d", OneD, vec![2, 15], Some(LayerSpec::MaxPool { window: 3, stride: 2 })),
        single("maxpool2d", TwoD, vec![2, 7, 7], Some(LayerSpec::MaxPool { window: 3, stride: 2 })),
        single("dropout", OneD, vec![2, 8], Some(LayerSpec::Dropout { rate: 0.5 })),
    ];
    for kind in [
        ActivationKind::Tanh,
        ActivationKind::Relu,
        ActivationKind::ELU,
        ActivationKind::Elu { alpha: 0.5 },
        ActivationKind::Selu,
        ActivationKind::SWISH,
        ActivationKind::Swish { beta: 2.0 },
    ] {
        v.push(single(
            &format!("activation-{kind}"),
            OneD,
            vec![2, 8],
            Some(LayerSpec::Activation { activation: kind }),
        ));
    }
    v
}
