//! SGD with momentum and step decay, cross-validation orchestration and
//! transfer initialization from weight archives.

mod archive;
mod data;

use std::path::Path;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use archive::{apply_transfer, load_weights, WeightArchive};
pub use data::{
    classes_of, gather, predict_classes, to_labels, Examples, ImageSet, RenderedBeats, Subset, TensorSet,
};

use crate::beatprep::{split_labels, BeatError, Fold, FoldPlan, Label};
use crate::metrics::{self, ConfusionMatrix, MetricsReport};
use crate::neural::{ArchitectureProfile, Dimensionality, Gradients, InitScheme, Mode, Network, NeuralError};
use crate::seed;

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite gradient in {tensor} at iteration {iteration}")]
    NonFiniteGradient { iteration: usize, tensor: String },
    #[error("non-finite loss at iteration {0}")]
    NonFiniteLoss(usize),
    #[error("not a weight archive (bad magic)")]
    BadMagic,
    #[error("unsupported weight archive version {0}")]
    VersionUnsupported(u32),
    #[error("corrupt weight archive: {0}")]
    CorruptTensor(String),
    #[error("archive has no tensor {0}")]
    MissingLayer(String),
    #[error("{name}: archive shape {found:?}, network expects {expected:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Data(#[from] BeatError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl TrainError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        TrainError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    pub(crate) fn in_file(self, path: &Path) -> Self {
        match self {
            TrainError::Io { source, .. } => TrainError::io(path, source),
            e => e,
        }
    }
}

pub type Result<T> = std::result::Result<T, TrainError>;

/// `lr = base_lr * gamma ^ floor(iteration / step_size)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDecay {
    pub gamma: f64,
    pub step_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub lr_policy: StepDecay,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_iterations: usize,
    /// Test accuracy is recorded every this many iterations and at the end.
    pub eval_interval: usize,
    pub eval_batch_size: usize,
    pub seed: u64,
    /// Learning-rate factor for layers imported by [`apply_transfer`].
    pub finetune_lr_multiplier: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            base_lr: 0.01,
            lr_policy: StepDecay {
                gamma: 0.1,
                step_size: 1000,
            },
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            max_iterations: 2000,
            eval_interval: 100,
            eval_batch_size: 64,
            seed: 0,
            finetune_lr_multiplier: 0.1,
        }
    }
}

impl TrainConfig {
    /// Defaults with the batch size for the given input kind (64 for
    /// signals, 32 for images).
    pub fn for_dimensionality(dim: Dimensionality) -> Self {
        TrainConfig {
            batch_size: match dim {
                Dimensionality::OneD => 64,
                Dimensionality::TwoD => 32,
            },
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return bad("base_lr must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must be in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if !(self.lr_policy.gamma > 0.0 && self.lr_policy.gamma <= 1.0) || self.lr_policy.step_size == 0 {
            return bad("lr_policy needs gamma in (0, 1] and step_size >= 1");
        }
        if self.batch_size == 0 || self.max_iterations == 0 || self.eval_interval == 0 || self.eval_batch_size == 0 {
            return bad("batch sizes, max_iterations and eval_interval must be at least 1");
        }
        if !(self.finetune_lr_multiplier >= 0.0 && self.finetune_lr_multiplier.is_finite()) {
            return bad("finetune_lr_multiplier must be non-negative");
        }
        Ok(())
    }
}

pub fn lr_at(config: &TrainConfig, iteration: usize) -> f64 {
    let steps = (iteration / config.lr_policy.step_size) as i32;
    config.base_lr * config.lr_policy.gamma.powi(steps)
}

/// Momentum buffers, one per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Velocity {
    layers: Vec<(Vec<f32>, Vec<f32>)>,
}

impl Velocity {
    pub fn zeros(net: &Network<f32>) -> Self {
        Velocity {
            layers: net
                .params()
                .iter()
                .map(|p| (vec![0.0; p.weight.len()], vec![0.0; p.bias.len()]))
                .collect(),
        }
    }
}

/// One update `v <- momentum v - lr m (g + decay theta); theta <- theta + v`
/// where `m` is the layer's learning-rate multiplier. Nothing is modified
/// when any gradient is non-finite.
pub fn sgd_step(
    net: &mut Network<f32>,
    grads: &Gradients<f32>,
    config: &TrainConfig,
    iteration: usize,
    velocity: &mut Velocity,
) -> Result<()> {
    if grads.params.len() != net.params().len() || velocity.layers.len() != net.params().len() {
        return Err(TrainError::InvalidConfig("gradients do not match network".into()));
    }
    for (p, g) in net.params().iter().zip(&grads.params) {
        if g.weight.shape() != p.weight.shape() || g.bias.shape() != p.bias.shape() {
            return Err(TrainError::InvalidConfig(format!("gradient shape mismatch for {}", p.name)));
        }
        for (t, name) in [(&g.weight, p.weight_name()), (&g.bias, p.bias_name())] {
            if !t.all_finite() {
                return Err(TrainError::NonFiniteGradient { iteration, tensor: name });
            }
        }
    }
    let lr = lr_at(config, iteration);
    let mu = config.momentum as f32;
    let wd = config.weight_decay as f32;
    for ((p, g), (vw, vb)) in net.params_mut().iter_mut().zip(&grads.params).zip(&mut velocity.layers) {
        let rate = (lr * p.lr_multiplier) as f32;
        for (theta, grad, v) in [
            (p.weight.data_mut(), g.weight.data(), vw),
            (p.bias.data_mut(), g.bias.data(), vb),
        ] {
            for ((t, &d), v) in theta.iter_mut().zip(grad).zip(v.iter_mut()) {
                *v = mu * *v - rate * (d + wd * *t);
                *t += *v;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    /// Mean mini-batch loss since the previous point.
    pub train_loss: f64,
    /// Percent correct on the test set.
    pub test_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub points: Vec<HistoryPoint>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("iteration,train_loss,test_accuracy\n");
        for p in &self.points {
            s.push_str(&format!("{},{:.6},{:.2}\n", p.iteration, p.train_loss, p.test_accuracy));
        }
        s
    }

    pub fn last(&self) -> Option<&HistoryPoint> {
        self.points.last()
    }
}

/// Percent of examples classified correctly in eval mode.
pub fn accuracy<E: Examples + ?Sized>(net: &Network<f32>, data: &E, batch: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(TrainError::InvalidConfig("empty evaluation set".into()));
    }
    let pred = predict_classes(net, data, batch)?;
    let correct = pred.iter().enumerate().filter(|&(i, &c)| c == data.class(i)).count();
    Ok(100.0 * correct as f64 / data.len() as f64)
}

fn check_shapes<E: Examples + ?Sized>(net: &Network<f32>, data: &E, what: &str) -> Result<()> {
    if data.is_empty() {
        return Err(TrainError::InvalidConfig(format!("{what} set is empty")));
    }
    if data.sample_shape() != net.profile().input_shape {
        return Err(TrainError::InvalidConfig(format!(
            "{what} samples have shape {:?}, profile {} expects {:?}",
            data.sample_shape(),
            net.profile().name,
            net.profile().input_shape
        )));
    }
    Ok(())
}

/// Runs `max_iterations` mini-batch steps, reshuffling the training set at
/// every epoch boundary. Deterministic given `config.seed`.
pub fn train<A, B>(net: &mut Network<f32>, train_set: &A, test_set: &B, config: &TrainConfig) -> Result<TrainHistory>
where
    A: Examples + ?Sized,
    B: Examples + ?Sized,
{
    config.validate()?;
    check_shapes(net, train_set, "training")?;
    check_shapes(net, test_set, "test")?;
    let mut shuffle_rng = seed::rng(seed::derive(config.seed, "shuffle"));
    let dropout_stream = seed::derive(config.seed, "dropout");
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    order.shuffle(&mut shuffle_rng);
    let mut cursor = 0;
    let mut velocity = Velocity::zeros(net);
    let mut history = TrainHistory::default();
    let (mut loss_sum, mut loss_n) = (0.0, 0usize);
    let mut batch = Vec::with_capacity(config.batch_size);
    for it in 0..config.max_iterations {
        batch.clear();
        while batch.len() < config.batch_size {
            if cursor == order.len() {
                order.shuffle(&mut shuffle_rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let (x, labels) = gather(train_set, &batch);
        net.set_mode(Mode::Train);
        let (loss, grads) = net.loss_and_gradients(&x, &labels, seed::derive_index(dropout_stream, it as u64), false)?;
        if !loss.is_finite() {
            return Err(TrainError::NonFiniteLoss(it));
        }
        sgd_step(net, &grads, config, it, &mut velocity)?;
        loss_sum += loss;
        loss_n += 1;
        let done = it + 1;
        if done % config.eval_interval == 0 || done == config.max_iterations {
            net.set_mode(Mode::Eval);
            history.points.push(HistoryPoint {
                iteration: done,
                train_loss: loss_sum / loss_n as f64,
                test_accuracy: accuracy(net, test_set, config.eval_batch_size)?,
            });
            net.set_mode(Mode::Train);
            (loss_sum, loss_n) = (0.0, 0);
        }
    }
    net.set_mode(Mode::Eval);
    Ok(history)
}

/// How each fold's network is initialized.
#[derive(Debug, Clone, Copy, Default)]
pub enum Initialization<'a> {
    #[default]
    Random,
    /// Random init, then [`apply_transfer`] from the archive.
    Transfer(&'a WeightArchive),
}

#[derive(Debug, Clone)]
pub struct ExperimentOptions<'a> {
    pub init_scheme: InitScheme,
    pub initialization: Initialization<'a>,
    /// Folds trained concurrently; results do not depend on it.
    pub jobs: usize,
    pub model: String,
}

impl Default for ExperimentOptions<'_> {
    fn default() -> Self {
        ExperimentOptions {
            init_scheme: InitScheme::Auto,
            initialization: Initialization::Random,
            jobs: 1,
            model: String::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub fold: usize,
    pub split: Fold,
    pub history: TrainHistory,
    pub report: MetricsReport,
    pub network: Network<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub model: String,
    pub folds: Vec<MetricsReport>,
    /// Arithmetic means over folds; `None` if any fold's metric is undefined.
    pub mean_sensitivity: Option<f64>,
    pub mean_specificity: Option<f64>,
    pub mean_accuracy: Option<f64>,
}

impl ExperimentReport {
    pub fn from_folds(model: impl Into<String>, folds: Vec<MetricsReport>) -> Self {
        let mean = |f: fn(&MetricsReport) -> Option<f64>| -> Option<f64> {
            let v: Option<Vec<f64>> = folds.iter().map(f).collect();
            v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        ExperimentReport {
            model: model.into(),
            mean_sensitivity: mean(|r| r.sensitivity),
            mean_specificity: mean(|r| r.specificity),
            mean_accuracy: mean(|r| r.accuracy),
            folds,
        }
    }
}

/// Trains and evaluates one fold. Seeds derive from `config.seed` and the
/// fold index, so folds are independent of execution order.
pub fn run_fold<E: Examples + ?Sized>(
    data: &E,
    fold_index: usize,
    split: &Fold,
    profile: &ArchitectureProfile,
    config: &TrainConfig,
    opts: &ExperimentOptions<'_>,
) -> Result<FoldResult> {
    let fold_seed = seed::derive_index(seed::derive(config.seed, "fold"), fold_index as u64);
    let mut net = Network::<f32>::new(profile.clone(), opts.init_scheme, seed::derive(fold_seed, "init"))?;
    if let Initialization::Transfer(archive) = opts.initialization {
        apply_transfer(&mut net, archive, config.finetune_lr_multiplier, seed::derive(fold_seed, "output"))?;
    }
    let fold_config = TrainConfig {
        seed: seed::derive(fold_seed, "train"),
        ..config.clone()
    };
    let train_set = Subset {
        inner: data,
        indices: &split.train,
    };
    let test_set = Subset {
        inner: data,
        indices: &split.test,
    };
    let history = train(&mut net, &train_set, &test_set, &fold_config)?;
    let pred = to_labels(&predict_classes(&net, &test_set, config.eval_batch_size)?);
    let truth = to_labels(&classes_of(&test_set));
    let matrix = metrics::confusion(&pred, &truth)?;
    let mut report = metrics::evaluate(&matrix);
    report.model = Some(opts.model.clone());
    report.fold = Some(fold_index);
    Ok(FoldResult {
        fold: fold_index,
        split: split.clone(),
        history,
        report,
        network: net,
    })
}

/// Splits `data` per `plan`, trains one model per fold and aggregates the
/// reports. Each finished fold is handed to `sink` (e.g. to persist weights)
/// and then dropped.
pub fn run_experiment<E, F>(
    data: &E,
    plan: &FoldPlan,
    profile: &ArchitectureProfile,
    config: &TrainConfig,
    opts: &ExperimentOptions<'_>,
    sink: F,
) -> Result<(ExperimentReport, Vec<TrainHistory>)>
where
    E: Examples + ?Sized,
    F: Fn(&FoldResult) -> Result<()> + Sync,
{
    let labels: Vec<Label> = to_labels(&classes_of(data));
    let folds = split_labels(&labels, plan)?;
    let run = |(k, split): (usize, &Fold)| -> Result<(MetricsReport, TrainHistory)> {
        let r = run_fold(data, k, split, profile, config, opts)?;
        sink(&r)?;
        Ok((r.report, r.history))
    };
    let results: Vec<Result<(MetricsReport, TrainHistory)>> = if opts.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.jobs)
            .build()
            .map_err(|e| TrainError::InvalidConfig(e.to_string()))?;
        pool.install(|| folds.par_iter().enumerate().map(run).collect())
    } else {
        folds.iter().enumerate().map(run).collect()
    };
    let (reports, histories): (Vec<_>, Vec<_>) = results.into_iter().collect::<Result<Vec<_>>>()?.into_iter().unzip();
    Ok((ExperimentReport::from_folds(opts.model.clone(), reports), histories))
}

/// Bookkeeping used by callers that need the confusion matrix itself.
pub fn confusion_on<E: Examples + ?Sized>(net: &Network<f32>, data: &E, batch: usize) -> Result<ConfusionMatrix> {
    let pred = to_labels(&predict_classes(net, data, batch)?);
    Ok(metrics::confusion(&pred, &to_labels(&classes_of(data)))?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    #[test]
    fn step_decay_schedule() {
        let c = TrainConfig::default();
        assert_eq!(lr_at(&c, 0), 0.01);
        assert_eq!(lr_at(&c, 999), 0.01);
        assert!((lr_at(&c, 1000) - 0.001).abs() < 1e-18);
        assert!((lr_at(&c, 1999) - 0.001).abs() < 1e-18);
        let mut prev = f64::INFINITY;
        for it in 0..5000 {
            let lr = lr_at(&c, it);
            assert!(lr <= prev);
            prev = lr;
        }
    }

    fn scalar_net() -> Network<f32> {
        let p = ArchitectureProfile {
            name: "scalar".into(),
            dimensionality: Dimensionality::OneD,
            input_shape: vec![1, 1],
            layers: vec![crate::neural::LayerSpec::Fc {
                name: "fc".into(),
                out_features: 2,
            }],
            n_classes: 2,
        };
        let mut net = Network::new(p, InitScheme::Auto, 0).unwrap();
        for t in net.params_mut() {
            t.weight.data_mut().fill(0.0);
        }
        net
    }

    fn unit_grads(net: &Network<f32>, v: f32) -> Gradients<f32> {
        Gradients {
            params: net
                .params()
                .iter()
                .map(|p| crate::neural::ParamGrad {
                    name: p.name.clone(),
                    weight: Tensor::from_vec(p.weight.shape().to_vec(), vec![v; p.weight.len()]).unwrap(),
                    bias: Tensor::from_vec(p.bias.shape().to_vec(), vec![v; p.bias.len()]).unwrap(),
                })
                .collect(),
            input: None,
        }
    }

    fn plain(lr: f64, momentum: f64) -> TrainConfig {
        TrainConfig {
            base_lr: lr,
            momentum,
            weight_decay: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn single_plain_step() {
        let mut net = scalar_net();
        net.params_mut()[0].weight.data_mut().fill(1.0);
        let g = unit_grads(&net, 1.0);
        let mut v = Velocity::zeros(&net);
        sgd_step(&mut net, &g, &plain(0.1, 0.0), 0, &mut v).unwrap();
        assert!(net.params()[0].weight.data().iter().all(|&w| (w - 0.9).abs() < 1e-7));
    }

    #[test]
    fn momentum_two_steps() {
        let mut net = scalar_net();
        let g = unit_grads(&net, 1.0);
        let mut v = Velocity::zeros(&net);
        let c = plain(0.1, 0.9);
        sgd_step(&mut net, &g, &c, 0, &mut v).unwrap();
        sgd_step(&mut net, &g, &c, 1, &mut v).unwrap();
        // v1 = -0.1, theta1 = -0.1; v2 = -0.09 - 0.1, theta2 = -0.29.
        assert!(net.params()[0].weight.data().iter().all(|&w| (w + 0.29).abs() < 1e-6));
    }

    #[test]
    fn nan_gradient_is_rejected_without_update() {
        let mut net = scalar_net();
        let before = net.clone();
        let mut g = unit_grads(&net, 1.0);
        g.params[0].bias.data_mut()[1] = f32::NAN;
        let mut v = Velocity::zeros(&net);
        let err = sgd_step(&mut net, &g, &plain(0.1, 0.0), 7, &mut v).unwrap_err();
        assert!(matches!(err, TrainError::NonFiniteGradient { iteration: 7, ref tensor } if tensor == "fc.bias"));
        assert_eq!(net, before);
    }

    #[test]
    fn finetune_multiplier_scales_the_delta() {
        let mut net = scalar_net();
        net.params_mut()[0].lr_multiplier = 0.1;
        let g = unit_grads(&net, 1.0);
        let mut v = Velocity::zeros(&net);
        let c = plain(0.5, 0.0);
        sgd_step(&mut net, &g, &c, 0, &mut v).unwrap();
        let delta = net.params()[0].weight.data()[0];
        assert!((f64::from(delta) + 0.1 * lr_at(&c, 0)).abs() < 1e-7);
    }

    #[test]
    fn history_csv_format() {
        let h = TrainHistory {
            points: vec![HistoryPoint {
                iteration: 100,
                train_loss: 0.5,
                test_accuracy: 93.25,
            }],
        };
        assert_eq!(h.to_csv(), "iteration,train_loss,test_accuracy\n100,0.500000,93.25\n");
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig {
                base_lr: 0.0,
                ..Default::default()
            },
            TrainConfig {
                momentum: 1.0,
                ..Default::default()
            },
            TrainConfig {
                batch_size: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        let c: TrainConfig = serde_json::from_str(r#"{"base_lr": 0.05}"#).unwrap();
        assert_eq!(c.max_iterations, 2000);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"base_lr": 0.05, "lr": 1}"#).is_err());
        assert_eq!(TrainConfig::for_dimensionality(Dimensionality::TwoD).batch_size, 32);
    }
}
