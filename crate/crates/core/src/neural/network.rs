use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::profile::{resolve, Resolved};
use super::{conv, dropout, fc, loss, pool};
use super::{ActivationKind, ArchitectureProfile, Mode, NeuralError, Result, Scalar, Tensor};
use crate::seed;

/// Weight initialization. Biases always start at zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitScheme {
    /// He-uniform for layers feeding relu/elu/swish, LeCun-uniform for selu,
    /// Xavier-uniform for layers feeding tanh and for the output layer.
    #[default]
    Auto,
    /// Zero-mean Gaussian with the given standard deviation.
    Normal { std: f64 },
}

impl fmt::Display for InitScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitScheme::Auto => write!(f, "auto"),
            InitScheme::Normal { std } => write!(f, "normal:{std}"),
        }
    }
}

impl FromStr for InitScheme {
    type Err = NeuralError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || NeuralError::InvalidConfig(format!("unknown init scheme {s:?}"));
        match s.split_once(':') {
            None if s == "auto" => Ok(InitScheme::Auto),
            Some(("normal", v)) => {
                let std: f64 = v.parse().map_err(|_| bad())?;
                if std.is_finite() && std > 0.0 {
                    Ok(InitScheme::Normal { std })
                } else {
                    Err(bad())
                }
            }
            _ => Err(bad()),
        }
    }
}

impl TryFrom<String> for InitScheme {
    type Error = NeuralError;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitScheme> for String {
    fn from(s: InitScheme) -> String {
        s.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayer<T: Scalar = f32> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
    /// Scales the global learning rate for this layer.
    pub lr_multiplier: f64,
}

impl<T: Scalar> ParamLayer<T> {
    pub fn weight_name(&self) -> String {
        format!("{}.weight", self.name)
    }

    pub fn bias_name(&self) -> String {
        format!("{}.bias", self.name)
    }
}

/// Gradients for one parameterized layer, in the same order as
/// [`Network::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad<T: Scalar = f32> {
    pub name: String,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T: Scalar = f32> {
    pub params: Vec<ParamGrad<T>>,
    /// Gradient with respect to the network input, when requested.
    pub input: Option<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// `(name, tensor)` pairs named `layer.weight` / `layer.bias`.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        self.params
            .iter()
            .flat_map(|g| [(format!("{}.weight", g.name), &g.weight), (format!("{}.bias", g.name), &g.bias)])
            .collect()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|g| g.weight.all_finite() && g.bias.all_finite())
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass<T: Scalar = f32> {
    pub(crate) n: usize,
    /// Input of every op; `inputs[0]` is the network input.
    pub(crate) inputs: Vec<Vec<T>>,
    pub(crate) argmax: Vec<Vec<u32>>,
    pub(crate) masks: Vec<Vec<T>>,
    pub(crate) logits: Tensor<T>,
}

impl<T: Scalar> ForwardPass<T> {
    pub fn logits(&self) -> &Tensor<T> {
        &self.logits
    }

    pub fn batch_size(&self) -> usize {
        self.n
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network<T: Scalar = f32> {
    profile: ArchitectureProfile,
    ops: Vec<Resolved>,
    op_param: Vec<Option<usize>>,
    params: Vec<ParamLayer<T>>,
    mode: Mode,
}

fn fans(op: &Resolved) -> (usize, usize) {
    match op {
        Resolved::Conv { geom, .. } => (geom.patch_len(), geom.out_c * geom.kh * geom.kw),
        Resolved::Fc {
            in_features,
            out_features,
            ..
        } => (*in_features, *out_features),
        _ => (0, 0),
    }
}

impl<T: Scalar> Network<T> {
    /// Builds a network with freshly initialized parameters. Each layer draws
    /// from a stream derived from `seed` and its name.
    pub fn new(profile: ArchitectureProfile, init: InitScheme, seed_value: u64) -> Result<Self> {
        let (ops, _) = resolve(&profile)?;
        let mut op_param = Vec::with_capacity(ops.len());
        let mut params = Vec::new();
        for op in &ops {
            let shapes = match op {
                Resolved::Conv { name, geom } => {
                    let w = if profile.dimensionality == super::Dimensionality::OneD {
                        vec![geom.out_c, geom.in_c, geom.kw]
                    } else {
                        vec![geom.out_c, geom.in_c, geom.kh, geom.kw]
                    };
                    Some((name.clone(), w, geom.out_c))
                }
                Resolved::Fc {
                    name,
                    in_features,
                    out_features,
                } => Some((name.clone(), vec![*out_features, *in_features], *out_features)),
                _ => None,
            };
            op_param.push(shapes.as_ref().map(|_| params.len()));
            if let Some((name, wshape, b)) = shapes {
                params.push(ParamLayer {
                    name,
                    weight: Tensor::zeros(&wshape),
                    bias: Tensor::zeros(&[b]),
                    lr_multiplier: 1.0,
                });
            }
        }
        let mut net = Network {
            profile,
            ops,
            op_param,
            params,
            mode: Mode::Train,
        };
        let names: Vec<String> = net.params.iter().map(|p| p.name.clone()).collect();
        for name in names {
            net.reinit_param(&name, init, seed_value)?;
        }
        Ok(net)
    }

    /// Re-draws the weights of one layer and zeroes its bias.
    pub fn reinit_param(&mut self, name: &str, init: InitScheme, seed_value: u64) -> Result<()> {
        let op_idx = self
            .ops
            .iter()
            .position(|op| matches!(op, Resolved::Conv { name: n, .. } | Resolved::Fc { name: n, .. } if n == name))
            .ok_or_else(|| NeuralError::InvalidConfig(format!("no layer named {name}")))?;
        let (fan_in, fan_out) = fans(&self.ops[op_idx]);
        let driven = self.ops[op_idx + 1..]
            .iter()
            .take_while(|op| !matches!(op, Resolved::Conv { .. } | Resolved::Fc { .. }))
            .find_map(|op| match op {
                Resolved::Activation { kind } => Some(*kind),
                _ => None,
            });
        let mut rng = seed::rng(seed::derive(seed_value, name));
        let p = &mut self.params[self.op_param[op_idx].expect("parameterized op")];
        match init {
            InitScheme::Auto => {
                let limit = match driven {
                    Some(ActivationKind::Tanh) | None => (6.0 / (fan_in + fan_out) as f64).sqrt(),
                    Some(ActivationKind::Selu) => (3.0 / fan_in as f64).sqrt(),
                    Some(_) => (6.0 / fan_in as f64).sqrt(),
                };
                for v in p.weight.data_mut() {
                    *v = T::from_f64(rng.random_range(-limit..limit));
                }
            }
            InitScheme::Normal { std } => {
                let dist = Normal::new(0.0, std).map_err(|e| NeuralError::InvalidConfig(e.to_string()))?;
                for v in p.weight.data_mut() {
                    *v = T::from_f64(dist.sample(&mut rng));
                }
            }
        }
        p.bias.data_mut().fill(T::zero());
        Ok(())
    }

    pub fn profile(&self) -> &ArchitectureProfile {
        &self.profile
    }

    pub fn params(&self) -> &[ParamLayer<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [ParamLayer<T>] {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&ParamLayer<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut ParamLayer<T>> {
        self.params.iter_mut().find(|p| p.name == name)
    }

    pub fn n_parameters(&self) -> usize {
        self.params.iter().map(|p| p.weight.len() + p.bias.len()).sum()
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    /// Converts parameters to another precision.
    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            profile: self.profile.clone(),
            ops: self.ops.clone(),
            op_param: self.op_param.clone(),
            params: self
                .params
                .iter()
                .map(|p| ParamLayer {
                    name: p.name.clone(),
                    weight: p.weight.cast(),
                    bias: p.bias.cast(),
                    lr_multiplier: p.lr_multiplier,
                })
                .collect(),
            mode: self.mode,
        }
    }

    fn sample_len(&self) -> usize {
        self.profile.input_shape.iter().product()
    }

    fn batch_of(&self, input: &Tensor<T>) -> Result<usize> {
        let shape = input.shape();
        if shape.len() != self.profile.input_shape.len() + 1 || shape[1..] != self.profile.input_shape[..] || shape[0] == 0
        {
            return Err(NeuralError::ShapeMismatch(format!(
                "input {shape:?} does not match [n, {:?}] of profile {}",
                self.profile.input_shape, self.profile.name
            )));
        }
        Ok(shape[0])
    }

    /// Forward pass in the network's current mode. Dropout masks are drawn
    /// from streams derived from `dropout_seed`.
    pub fn forward(&self, input: &Tensor<T>, dropout_seed: u64) -> Result<ForwardPass<T>> {
        self.forward_in(input, self.mode, dropout_seed)
    }

    fn forward_in(&self, input: &Tensor<T>, mode: Mode, dropout_seed: u64) -> Result<ForwardPass<T>> {
        let n = self.batch_of(input)?;
        let mut inputs = Vec::with_capacity(self.ops.len());
        let mut argmax = vec![Vec::new(); self.ops.len()];
        let mut masks = vec![Vec::new(); self.ops.len()];
        let mut cur = input.data().to_vec();
        let mut len = self.sample_len();
        for (i, op) in self.ops.iter().enumerate() {
            let out_len = op.out_len(len);
            let mut out = vec![T::zero(); n * out_len];
            match op {
                Resolved::Conv { geom, .. } => {
                    let p = &self.params[self.op_param[i].unwrap()];
                    conv::forward_batch(geom, n, &cur, p.weight.data(), p.bias.data(), &mut out);
                }
                Resolved::Pool { geom } => {
                    let mut arg = vec![0u32; n * out_len];
                    pool::forward_batch(geom, n, &cur, &mut out, &mut arg);
                    argmax[i] = arg;
                }
                Resolved::Fc {
                    in_features,
                    out_features,
                    ..
                } => {
                    let p = &self.params[self.op_param[i].unwrap()];
                    fc::forward_batch(n, *in_features, *out_features, &cur, p.weight.data(), p.bias.data(), &mut out);
                }
                Resolved::Dropout { rate } => {
                    if mode == Mode::Train && *rate > 0.0 {
                        let m = dropout::mask::<T>(n * len, *rate, seed::derive_index(dropout_seed, i as u64));
                        for ((o, &x), &k) in out.iter_mut().zip(&cur).zip(&m) {
                            *o = x * k;
                        }
                        masks[i] = m;
                    } else {
                        out.copy_from_slice(&cur);
                    }
                }
                Resolved::Activation { kind } => kind.forward_slice(&cur, &mut out),
            }
            inputs.push(std::mem::replace(&mut cur, out));
            len = out_len;
        }
        Ok(ForwardPass {
            n,
            inputs,
            argmax,
            masks,
            logits: Tensor::from_vec(vec![n, len], cur)?,
        })
    }

    /// Eval-mode logits `[n, n_classes]`.
    pub fn predict(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.forward_in(input, Mode::Eval, 0)?.logits)
    }

    /// Eval-mode class decisions (ties go to the lower class index).
    pub fn classify(&self, input: &Tensor<T>) -> Result<Vec<usize>> {
        let logits = self.predict(input)?;
        let k = self.profile.n_classes;
        Ok(logits
            .data()
            .chunks_exact(k)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .fold((0, row[0]), |(bi, bv), (i, &v)| if v > bv { (i, v) } else { (bi, bv) })
                    .0
            })
            .collect())
    }

    /// Backpropagates `dlogits` through a cached pass. Parameter gradients
    /// sum over the batch.
    pub fn backward(&self, pass: &ForwardPass<T>, dlogits: &Tensor<T>, want_input: bool) -> Result<Gradients<T>> {
        let n = pass.n;
        if dlogits.shape() != pass.logits.shape() {
            return Err(NeuralError::ShapeMismatch(format!(
                "upstream {:?} vs logits {:?}",
                dlogits.shape(),
                pass.logits.shape()
            )));
        }
        let mut grads: Vec<ParamGrad<T>> = self
            .params
            .iter()
            .map(|p| ParamGrad {
                name: p.name.clone(),
                weight: Tensor::zeros(p.weight.shape()),
                bias: Tensor::zeros(p.bias.shape()),
            })
            .collect();
        let mut dy = dlogits.data().to_vec();
        for i in (0..self.ops.len()).rev() {
            let x = &pass.inputs[i];
            let need_dx = i > 0 || want_input;
            let mut dx = vec![T::zero(); if need_dx { x.len() } else { 0 }];
            match &self.ops[i] {
                Resolved::Conv { geom, .. } => {
                    let pi = self.op_param[i].unwrap();
                    let g = &mut grads[pi];
                    conv::backward_batch(
                        geom,
                        n,
                        x,
                        self.params[pi].weight.data(),
                        &dy,
                        g.weight.data_mut(),
                        g.bias.data_mut(),
                        need_dx.then_some(&mut dx[..]),
                    );
                }
                Resolved::Pool { geom } => {
                    if need_dx {
                        pool::backward_batch(geom, n, &pass.argmax[i], &dy, &mut dx);
                    }
                }
                Resolved::Fc {
                    in_features,
                    out_features,
                    ..
                } => {
                    let pi = self.op_param[i].unwrap();
                    let g = &mut grads[pi];
                    fc::backward_batch(
                        n,
                        *in_features,
                        *out_features,
                        x,
                        self.params[pi].weight.data(),
                        &dy,
                        g.weight.data_mut(),
                        g.bias.data_mut(),
                        need_dx.then_some(&mut dx[..]),
                    );
                }
                Resolved::Dropout { .. } => {
                    if need_dx {
                        let m = &pass.masks[i];
                        if m.is_empty() {
                            dx.copy_from_slice(&dy);
                        } else {
                            for ((d, &u), &k) in dx.iter_mut().zip(&dy).zip(m) {
                                *d = u * k;
                            }
                        }
                    }
                }
                Resolved::Activation { kind } => {
                    if need_dx {
                        kind.backward_slice(x, &dy, &mut dx);
                    }
                }
            }
            if !need_dx {
                break;
            }
            dy = dx;
        }
        let input = if want_input {
            let mut shape = vec![n];
            shape.extend_from_slice(&self.profile.input_shape);
            Some(Tensor::from_vec(shape, dy)?)
        } else {
            None
        };
        Ok(Gradients { params: grads, input })
    }

    /// Mean softmax cross-entropy over the batch and its gradients.
    pub fn loss_and_gradients(
        &self,
        input: &Tensor<T>,
        labels: &[usize],
        dropout_seed: u64,
        want_input: bool,
    ) -> Result<(f64, Gradients<T>)> {
        let pass = self.forward(input, dropout_seed)?;
        self.check_labels(pass.n, labels)?;
        let (l, d) = loss::softmax_xent_batch(&pass.logits, labels);
        let g = self.backward(&pass, &d, want_input)?;
        Ok((l, g))
    }

    /// Mean loss only, in the network's current mode.
    pub fn loss(&self, input: &Tensor<T>, labels: &[usize], dropout_seed: u64) -> Result<f64> {
        let pass = self.forward(input, dropout_seed)?;
        self.check_labels(pass.n, labels)?;
        Ok(loss::softmax_xent_batch(&pass.logits, labels).0)
    }

    fn check_labels(&self, n: usize, labels: &[usize]) -> Result<()> {
        if labels.len() != n || labels.iter().any(|&l| l >= self.profile.n_classes) {
            return Err(NeuralError::ShapeMismatch(format!(
                "{} labels for a batch of {n} with {} classes",
                labels.len(),
                self.profile.n_classes
            )));
        }
        Ok(())
    }

    /// Hash of every piecewise branch taken in a pass: the sign pattern at
    /// kinked activations and all pooling argmaxes. Finite differences are
    /// only meaningful between passes with equal signatures.
    pub(crate) fn branch_signature(&self, pass: &ForwardPass<T>) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for (i, op) in self.ops.iter().enumerate() {
            match op {
                Resolved::Activation { kind } if kind.has_kink() => {
                    for &v in &pass.inputs[i] {
                        (v > T::zero()).hash(&mut h);
                    }
                }
                Resolved::Pool { .. } => pass.argmax[i].hash(&mut h),
                _ => {}
            }
        }
        h.finish()
    }
}
