//! Declarative layer stacks and shape inference.

use serde::{Deserialize, Serialize};

use super::conv::ConvGeom;
use super::pool::PoolGeom;
use super::{ActivationKind, NeuralError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Dimensionality {
    #[serde(rename = "1d")]
    OneD,
    #[serde(rename = "2d")]
    TwoD,
}

/// One entry of a layer stack. Kernels and windows are square in 2-D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Conv {
        name: String,
        out_channels: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    MaxPool {
        window: usize,
        stride: usize,
    },
    Fc {
        name: String,
        out_features: usize,
    },
    Dropout {
        rate: f64,
    },
    Activation {
        activation: ActivationKind,
    },
}

fn one() -> usize {
    1
}

impl LayerSpec {
    fn conv(name: &str, out_channels: usize, kernel: usize, stride: usize, padding: usize) -> Self {
        LayerSpec::Conv {
            name: name.into(),
            out_channels,
            kernel,
            stride,
            padding,
        }
    }

    fn fc(name: &str, out_features: usize) -> Self {
        LayerSpec::Fc {
            name: name.into(),
            out_features,
        }
    }

    fn pool(window: usize, stride: usize) -> Self {
        LayerSpec::MaxPool { window, stride }
    }

    fn act(activation: ActivationKind) -> Self {
        LayerSpec::Activation { activation }
    }

    /// Name of a parameterized layer.
    pub fn param_name(&self) -> Option<&str> {
        match self {
            LayerSpec::Conv { name, .. } | LayerSpec::Fc { name, .. } => Some(name),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureProfile {
    pub name: String,
    pub dimensionality: Dimensionality,
    /// Per-sample input shape without the batch axis: `[c, len]` or `[c, h, w]`.
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerSpec>,
    pub n_classes: usize,
}

impl ArchitectureProfile {
    /// AlexNet-like stack over a `1 x 820` signal with 1024-wide FC layers.
    pub fn canonical_1d() -> Self {
        Self::alexnet("canonical-1d", Dimensionality::OneD, vec![1, 820], 1024)
    }

    /// AlexNet-like stack over a `channels x 256 x 256` image.
    pub fn canonical_2d(channels: usize) -> Self {
        Self::alexnet("canonical-2d", Dimensionality::TwoD, vec![channels, 256, 256], 4096)
    }

    fn alexnet(name: &str, dimensionality: Dimensionality, input_shape: Vec<usize>, fc_width: usize) -> Self {
        let a = ActivationKind::Relu;
        let layers = vec![
            LayerSpec::conv("conv1", 96, 11, 4, 0),
            LayerSpec::act(a),
            LayerSpec::pool(3, 2),
            LayerSpec::conv("conv2", 256, 5, 1, 2),
            LayerSpec::act(a),
            LayerSpec::pool(3, 2),
            LayerSpec::conv("conv3", 384, 3, 1, 1),
            LayerSpec::act(a),
            LayerSpec::conv("conv4", 384, 3, 1, 1),
            LayerSpec::act(a),
            LayerSpec::conv("conv5", 256, 3, 1, 1),
            LayerSpec::act(a),
            LayerSpec::pool(3, 2),
            LayerSpec::fc("fc6", fc_width),
            LayerSpec::act(a),
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::fc("fc7", fc_width),
            LayerSpec::act(a),
            LayerSpec::Dropout { rate: 0.5 },
            LayerSpec::fc("fc8", 2),
        ];
        ArchitectureProfile {
            name: name.into(),
            dimensionality,
            input_shape,
            layers,
            n_classes: 2,
        }
    }

    /// Two 8-channel convolutions and one FC layer over a `1 x 64` signal;
    /// small enough for exhaustive gradient checks.
    pub fn tiny_1d() -> Self {
        let a = ActivationKind::Relu;
        ArchitectureProfile {
            name: "tiny-1d".into(),
            dimensionality: Dimensionality::OneD,
            input_shape: vec![1, 64],
            layers: vec![
                LayerSpec::conv("conv1", 8, 7, 2, 0),
                LayerSpec::act(a),
                LayerSpec::pool(3, 2),
                LayerSpec::conv("conv2", 8, 3, 1, 1),
                LayerSpec::act(a),
                LayerSpec::pool(3, 2),
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::fc("fc3", 2),
            ],
            n_classes: 2,
        }
    }

    /// 2-D counterpart of [`tiny_1d`](Self::tiny_1d) over a `1 x 16 x 16` image.
    pub fn tiny_2d() -> Self {
        let a = ActivationKind::Relu;
        ArchitectureProfile {
            name: "tiny-2d".into(),
            dimensionality: Dimensionality::TwoD,
            input_shape: vec![1, 16, 16],
            layers: vec![
                LayerSpec::conv("conv1", 8, 5, 1, 2),
                LayerSpec::act(a),
                LayerSpec::pool(2, 2),
                LayerSpec::conv("conv2", 8, 3, 1, 1),
                LayerSpec::act(a),
                LayerSpec::pool(2, 2),
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::fc("fc3", 2),
            ],
            n_classes: 2,
        }
    }

    /// Same stack as [`tiny_1d`](Self::tiny_1d) over a full 820-sample beat,
    /// for fast training smoke tests.
    pub fn tiny_beat() -> Self {
        let mut p = Self::tiny_1d();
        p.name = "tiny-beat".into();
        p.input_shape = vec![1, 820];
        p.layers[0] = LayerSpec::conv("conv1", 8, 7, 4, 0);
        p.layers[3] = LayerSpec::conv("conv2", 8, 5, 2, 0);
        p
    }

    /// Built-in profile by name.
    pub fn builtin(name: &str, channels: usize) -> Option<Self> {
        match name {
            "canonical-1d" => Some(Self::canonical_1d()),
            "canonical-2d" => Some(Self::canonical_2d(channels)),
            "tiny-1d" => Some(Self::tiny_1d()),
            "tiny-2d" => Some(Self::tiny_2d()),
            "tiny-beat" => Some(Self::tiny_beat()),
            _ => None,
        }
    }

    /// Replaces every activation layer's kind.
    pub fn with_activation(mut self, kind: ActivationKind) -> Self {
        for l in &mut self.layers {
            if let LayerSpec::Activation { activation } = l {
                *activation = kind;
            }
        }
        self
    }

    /// Replaces the output width of the last FC layer.
    pub fn with_classes(mut self, n_classes: usize) -> Self {
        if let Some(LayerSpec::Fc { out_features, .. }) =
            self.layers.iter_mut().rev().find(|l| matches!(l, LayerSpec::Fc { .. }))
        {
            *out_features = n_classes;
        }
        self.n_classes = n_classes;
        self
    }

    /// Name of the last FC layer, which transfer re-initializes.
    pub fn output_layer(&self) -> Option<&str> {
        self.layers.iter().rev().find_map(|l| match l {
            LayerSpec::Fc { name, .. } => Some(name.as_str()),
            _ => None,
        })
    }

    /// The activation kind shared by the stack, if all activation layers agree.
    pub fn activation(&self) -> Option<ActivationKind> {
        let mut kinds = self.layers.iter().filter_map(|l| match l {
            LayerSpec::Activation { activation } => Some(*activation),
            _ => None,
        });
        let first = kinds.next()?;
        kinds.all(|k| k == first).then_some(first)
    }
}

/// Output shape (without batch axis) of one layer.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeEntry {
    pub label: String,
    pub output: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShapeTable {
    pub input: Vec<usize>,
    pub entries: Vec<ShapeEntry>,
    /// Index of the first FC layer, if any.
    first_fc: Option<usize>,
}

impl ShapeTable {
    /// Spatial extent (last axis) of the input and of every conv/pool output.
    pub fn spatial_chain(&self) -> Vec<usize> {
        std::iter::once(*self.input.last().unwrap_or(&0))
            .chain(
                self.entries
                    .iter()
                    .filter(|e| e.label.starts_with("conv") || e.label.starts_with("pool"))
                    .map(|e| *e.output.last().unwrap_or(&0)),
            )
            .collect()
    }

    /// Flattened size of the feature map entering the first FC layer.
    pub fn flatten_features(&self) -> Option<usize> {
        let i = self.first_fc?;
        let shape = if i == 0 { &self.input } else { &self.entries[i - 1].output };
        Some(shape.iter().product())
    }

    pub fn output(&self) -> &[usize] {
        self.entries.last().map_or(&self.input, |e| &e.output)
    }
}

/// Resolved per-layer geometry used by both shape inference and execution.
#[derive(Debug, Clone, PartialEq)]
pub(crate) enum Resolved {
    Conv { name: String, geom: ConvGeom },
    Pool { geom: PoolGeom },
    Fc { name: String, in_features: usize, out_features: usize },
    Dropout { rate: f64 },
    Activation { kind: ActivationKind },
}

impl Resolved {
    pub(crate) fn out_len(&self, in_len: usize) -> usize {
        match self {
            Resolved::Conv { geom, .. } => geom.out_len(),
            Resolved::Pool { geom } => geom.out_len(),
            Resolved::Fc { out_features, .. } => *out_features,
            Resolved::Dropout { .. } | Resolved::Activation { .. } => in_len,
        }
    }
}

/// Splits a sample shape into `(c, h, w)` for the profile's dimensionality.
fn as_chw(dim: Dimensionality, shape: &[usize]) -> Option<(usize, usize, usize)> {
    match (dim, shape) {
        (Dimensionality::OneD, &[c, l]) => Some((c, 1, l)),
        (Dimensionality::TwoD, &[c, h, w]) => Some((c, h, w)),
        _ => None,
    }
}

fn from_chw(dim: Dimensionality, c: usize, h: usize, w: usize) -> Vec<usize> {
    match dim {
        Dimensionality::OneD => vec![c, w],
        Dimensionality::TwoD => vec![c, h, w],
    }
}

/// Labels like `pool1`/`act6`/`drop7` take the number of the preceding
/// parameterized layer.
fn suffix(name: Option<&str>) -> String {
    name.map(|n| n.trim_start_matches(|c: char| !c.is_ascii_digit()).to_string())
        .filter(|d| !d.is_empty())
        .unwrap_or_else(|| "0".into())
}

pub(crate) fn resolve(profile: &ArchitectureProfile) -> Result<(Vec<Resolved>, ShapeTable)> {
    let dim = profile.dimensionality;
    let err = |label: &str, what: String| NeuralError::ShapeMismatch(format!("{label}: {what}"));
    if profile.input_shape.iter().any(|&d| d == 0) || as_chw(dim, &profile.input_shape).is_none() {
        return Err(err("input", format!("invalid input shape {:?}", profile.input_shape)));
    }
    if profile.n_classes < 2 {
        return Err(NeuralError::InvalidConfig("n_classes must be at least 2".into()));
    }
    let mut shape = profile.input_shape.clone();
    let mut flat = false;
    let mut last_param: Option<&str> = None;
    let mut ops = Vec::with_capacity(profile.layers.len());
    let mut entries = Vec::with_capacity(profile.layers.len());
    let mut first_fc = None;
    let mut names = std::collections::HashSet::new();
    for (i, layer) in profile.layers.iter().enumerate() {
        if let Some(name) = layer.param_name() {
            if !names.insert(name) {
                return Err(NeuralError::InvalidConfig(format!("duplicate layer name {name}")));
            }
        }
        let (label, op) = match layer {
            LayerSpec::Conv {
                name,
                out_channels,
                kernel,
                stride,
                padding,
            } => {
                let (c, h, w) = if flat { None } else { as_chw(dim, &shape) }
                    .ok_or_else(|| err(name, "convolution after flatten".into()))?;
                let geom = match dim {
                    Dimensionality::OneD => ConvGeom::new((c, h, w), *out_channels, (1, *kernel), (1, *stride), (0, *padding)),
                    Dimensionality::TwoD => ConvGeom::new(
                        (c, h, w),
                        *out_channels,
                        (*kernel, *kernel),
                        (*stride, *stride),
                        (*padding, *padding),
                    ),
                }
                .map_err(|e| err(name, e.to_string()))?;
                shape = from_chw(dim, geom.out_c, geom.out_h, geom.out_w);
                last_param = Some(name);
                (name.clone(), Resolved::Conv { name: name.clone(), geom })
            }
            LayerSpec::MaxPool { window, stride } => {
                let label = format!("pool{}", suffix(last_param));
                let (c, h, w) = if flat { None } else { as_chw(dim, &shape) }
                    .ok_or_else(|| err(&label, "pooling after flatten".into()))?;
                let geom = match dim {
                    Dimensionality::OneD => PoolGeom::new((c, h, w), (1, *window), (1, *stride)),
                    Dimensionality::TwoD => PoolGeom::new((c, h, w), (*window, *window), (*stride, *stride)),
                }
                .map_err(|e| err(&label, e.to_string()))?;
                shape = from_chw(dim, c, geom.out_h, geom.out_w);
                (label, Resolved::Pool { geom })
            }
            LayerSpec::Fc { name, out_features } => {
                if *out_features == 0 {
                    return Err(err(name, "zero output features".into()));
                }
                first_fc.get_or_insert(i);
                let in_features = shape.iter().product();
                shape = vec![*out_features];
                flat = true;
                last_param = Some(name);
                (
                    name.clone(),
                    Resolved::Fc {
                        name: name.clone(),
                        in_features,
                        out_features: *out_features,
                    },
                )
            }
            LayerSpec::Dropout { rate } => {
                let label = format!("drop{}", suffix(last_param));
                if !(0.0..1.0).contains(rate) {
                    return Err(NeuralError::InvalidConfig(format!("{label}: dropout rate {rate} outside [0, 1)")));
                }
                (label, Resolved::Dropout { rate: *rate })
            }
            LayerSpec::Activation { activation } => {
                activation.validate()?;
                (format!("act{}", suffix(last_param)), Resolved::Activation { kind: *activation })
            }
        };
        entries.push(ShapeEntry {
            label,
            output: shape.clone(),
        });
        ops.push(op);
    }
    if shape != [profile.n_classes] {
        return Err(err(
            "output",
            format!("network produces {shape:?}, expected [{}]", profile.n_classes),
        ));
    }
    Ok((
        ops,
        ShapeTable {
            input: profile.input_shape.clone(),
            entries,
            first_fc,
        },
    ))
}

/// Per-layer output shapes; fails on the first inconsistent layer.
pub fn infer_shapes(profile: &ArchitectureProfile) -> Result<ShapeTable> {
    resolve(profile).map(|(_, t)| t)
}
