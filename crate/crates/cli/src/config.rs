//! Experiment definition files.
//!
//! Record and channel selection happen at ingest: a beat container holds
//! exactly the beats an experiment draws from.
//!
//! A config is JSON with every key checked; unknown keys are errors. The
//! copy written into a run directory is the resolved form: the profile is
//! inlined with its activation applied, the training schedule, bounds and
//! stage seeds are materialized, and paths are absolute. Re-running that
//! copy reproduces the run.

use std::path::{Path, PathBuf};

use ecg_core::beatprep::{balance_pool, read_beats_file, Beat, FoldPlan};
use ecg_core::metrics::DEFAULT_SNRS;
use ecg_core::neural::{ActivationKind, ArchitectureProfile, Dimensionality, InitScheme};
use ecg_core::raster::{compute_bounds, AxisBounds};
use ecg_core::seed;
use ecg_core::trainer::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RepresentationKind {
    #[default]
    #[serde(rename = "signal-1d")]
    Signal1d,
    #[serde(rename = "image-2d")]
    Image2d,
}

impl RepresentationKind {
    pub fn dimensionality(self) -> Dimensionality {
        match self {
            RepresentationKind::Signal1d => Dimensionality::OneD,
            RepresentationKind::Image2d => Dimensionality::TwoD,
        }
    }

    fn default_profile(self) -> &'static str {
        match self {
            RepresentationKind::Signal1d => "canonical-1d",
            RepresentationKind::Image2d => "canonical-2d",
        }
    }
}

/// A built-in profile name or a full inline definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileRef {
    Named(String),
    Inline(ArchitectureProfile),
}

fn default_channels() -> usize {
    1
}

fn default_snrs() -> Vec<Option<f64>> {
    DEFAULT_SNRS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// ECGB beat container.
    pub dataset: PathBuf,
    #[serde(default)]
    pub representation: RepresentationKind,
    #[serde(default)]
    pub profile: Option<ProfileRef>,
    /// Replaces every activation of the profile.
    #[serde(default)]
    pub activation: Option<ActivationKind>,
    #[serde(default)]
    pub init: InitScheme,
    /// Image planes fed to a 2-D profile (1 or 3).
    #[serde(default = "default_channels")]
    pub channels: usize,
    /// Image voltage axis; computed from the selected beats when absent.
    #[serde(default)]
    pub bounds: Option<AxisBounds>,
    /// Subsamples the dataset to this normal-class share before splitting.
    #[serde(default)]
    pub normal_fraction: Option<f64>,
    #[serde(default)]
    pub folds: FoldPlan,
    /// Defaults depend on the representation.
    #[serde(default)]
    pub train: Option<TrainConfig>,
    /// Sweep conditions; `null` is the clean row.
    #[serde(default = "default_snrs")]
    pub snrs: Vec<Option<f64>>,
    /// ECGW archive used for transfer initialization.
    #[serde(default)]
    pub transfer: Option<PathBuf>,
    /// Root of every stage seed. The nested `folds.seed` and `train.seed`
    /// are derived from it and overwritten.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn minimal(dataset: impl Into<PathBuf>, representation: RepresentationKind) -> Self {
        ExperimentConfig {
            dataset: dataset.into(),
            representation,
            profile: None,
            activation: None,
            init: InitScheme::Auto,
            channels: 1,
            bounds: None,
            normal_fraction: None,
            folds: FoldPlan::default(),
            train: None,
            snrs: default_snrs(),
            transfer: None,
            seed: 0,
            output_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("invalid experiment config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| e.context(path.display()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    /// The resolved profile; activation is applied when set.
    pub fn resolve_profile(&self) -> Result<ArchitectureProfile> {
        let profile = match &self.profile {
            Some(ProfileRef::Inline(p)) => p.clone(),
            Some(ProfileRef::Named(name)) => ArchitectureProfile::builtin(name, self.channels)
                .ok_or_else(|| CliError::usage(format!("unknown profile {name:?}")))?,
            None => ArchitectureProfile::builtin(self.representation.default_profile(), self.channels)
                .expect("default profiles exist"),
        };
        let profile = match self.activation {
            Some(a) => {
                a.validate()?;
                profile.with_activation(a)
            }
            None => profile,
        };
        if profile.dimensionality != self.representation.dimensionality() {
            return Err(CliError::usage(format!(
                "profile {} is {:?} but representation is {:?}",
                profile.name, profile.dimensionality, self.representation
            )));
        }
        ecg_core::neural::infer_shapes(&profile)?;
        Ok(profile)
    }
}

/// A validated config plus the data it refers to.
pub struct Resolved {
    pub config: ExperimentConfig,
    pub profile: ArchitectureProfile,
    pub train: TrainConfig,
    pub beats: Vec<Beat>,
    /// `Some` exactly for the image representation.
    pub bounds: Option<AxisBounds>,
}

fn existing(path: &Path, what: &str) -> Result<PathBuf> {
    std::fs::canonicalize(path).map_err(|e| CliError::data(format!("{what} {}: {e}", path.display())))
}

/// Validates `config`, loads its dataset and materializes every default.
/// `seed` and `output_dir` override the file when given.
pub fn resolve(mut config: ExperimentConfig, seed_override: Option<u64>, output_dir: Option<&Path>) -> Result<Resolved> {
    if let Some(s) = seed_override {
        config.seed = s;
    }
    if let Some(dir) = output_dir {
        config.output_dir = Some(dir.to_path_buf());
    }
    if let Some(dir) = &config.output_dir {
        let abs = std::path::absolute(dir).map_err(|e| CliError::usage(format!("{}: {e}", dir.display())))?;
        config.output_dir = Some(abs);
    }
    if config.snrs.is_empty() {
        return Err(CliError::usage("snrs must list at least one condition"));
    }
    if config.normal_fraction.is_some_and(|f| !(0.0..=1.0).contains(&f)) {
        return Err(CliError::usage("normal_fraction must lie in [0, 1]"));
    }
    let profile = resolve_profile_checked(&config)?;
    config.dataset = existing(&config.dataset, "dataset")?;
    if let Some(t) = &config.transfer {
        config.transfer = Some(existing(t, "transfer archive")?);
    }
    let mut train = config
        .train
        .clone()
        .unwrap_or_else(|| TrainConfig::for_dimensionality(profile.dimensionality));
    train.seed = seed::derive(config.seed, "train");
    train.validate()?;
    config.folds.seed = seed::derive(config.seed, "split");

    let mut beats = read_beats_file(&config.dataset)?;
    if let Some(f) = config.normal_fraction {
        let labels: Vec<_> = beats.iter().map(|b| b.label).collect();
        let keep = balance_pool(&labels, f, seed::derive(config.seed, "balance"))?;
        let mut all: Vec<Option<Beat>> = beats.into_iter().map(Some).collect();
        beats = keep.iter().map(|&i| all[i].take().expect("indices are unique")).collect();
    }
    if beats.is_empty() {
        return Err(CliError::data(format!("{}: no beats selected", config.dataset.display())));
    }
    let bounds = match config.representation {
        RepresentationKind::Signal1d => None,
        RepresentationKind::Image2d => Some(match config.bounds {
            Some(b) => AxisBounds::new(b.lo(), b.hi())?,
            None => compute_bounds(&beats)?,
        }),
    };
    if config.activation.is_none() {
        config.activation = profile.activation();
    }
    config.bounds = bounds;
    config.train = Some(train.clone());
    config.profile = Some(ProfileRef::Inline(profile.clone()));
    Ok(Resolved { config, profile, train, beats, bounds })
}

fn resolve_profile_checked(config: &ExperimentConfig) -> Result<ArchitectureProfile> {
    if config.representation == RepresentationKind::Image2d && config.channels != 1 && config.channels != 3 {
        return Err(CliError::usage(format!("channels must be 1 or 3, got {}", config.channels)));
    }
    config.resolve_profile()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let ok = r#"{"dataset": "b.ecgb", "train": {"base_lr": 0.001}}"#;
        assert!(ExperimentConfig::from_json(ok).is_ok());
        let typo = r#"{"dataset": "b.ecgb", "trian": {}}"#;
        assert_eq!(ExperimentConfig::from_json(typo).unwrap_err().code(), 1);
        let nested = r#"{"dataset": "b.ecgb", "folds": {"n_fold": 2}}"#;
        assert!(ExperimentConfig::from_json(nested).is_err());
    }

    #[test]
    fn partial_fold_plan_takes_defaults() {
        let c = ExperimentConfig::from_json(r#"{"dataset": "b", "folds": {"n_folds": 2}}"#).unwrap();
        assert_eq!(c.folds.n_folds, 2);
        assert_eq!(c.folds.train_size, FoldPlan::default().train_size);
        assert_eq!(c.snrs, DEFAULT_SNRS.to_vec());
    }

    #[test]
    fn profile_resolution() {
        let mut c = ExperimentConfig::minimal("b", RepresentationKind::Signal1d);
        c.activation = Some(ActivationKind::SWISH);
        let p = c.resolve_profile().unwrap();
        assert_eq!(p.name, "canonical-1d");
        assert_eq!(p.activation(), Some(ActivationKind::SWISH));
        let json = r#"{"dataset": "b", "representation": "image-2d", "profile": "tiny-1d"}"#;
        let err = ExperimentConfig::from_json(json).unwrap().resolve_profile().unwrap_err();
        assert_eq!(err.code(), 1);
        c.profile = Some(ProfileRef::Named("nope".into()));
        assert!(c.resolve_profile().is_err());
    }

    #[test]
    fn inline_profile_round_trips() {
        let mut c = ExperimentConfig::minimal("b", RepresentationKind::Signal1d);
        c.profile = Some(ProfileRef::Inline(ArchitectureProfile::tiny_beat()));
        let back = ExperimentConfig::from_json(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn normal_fraction_balances_the_pool() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.ecgb");
        let (rec, ann) = ecg_core::synth::synth_record("s", &ecg_core::synth::SynthConfig::default(), 2);
        let beats = ecg_core::beatprep::segment_beats(&rec, &ann).unwrap();
        ecg_core::beatprep::write_beats_file(&path, &beats).unwrap();
        let mut c = ExperimentConfig::minimal(&path, RepresentationKind::Signal1d);
        c.normal_fraction = Some(0.5);
        let r = resolve(c.clone(), None, None).unwrap();
        let normal = r.beats.iter().filter(|b| b.label == ecg_core::beatprep::Label::Normal).count();
        assert_eq!(2 * normal, r.beats.len());
        c.normal_fraction = Some(1.5);
        assert_eq!(resolve(c, None, None).err().unwrap().code(), 1);
    }

    #[test]
    fn missing_dataset_is_a_data_error() {
        let c = ExperimentConfig::minimal("/definitely/not/here.ecgb", RepresentationKind::Signal1d);
        assert_eq!(resolve(c, None, None).err().unwrap().code(), 2);
    }
}
