use std::fs;
use std::path::{Path, PathBuf};

use ecg_core::beatprep::{
    class_counts, read_beats_file, segment_beats_channel, split_labels, write_beats_file, Beat, Label,
};
use ecg_core::metrics::{self, robustness_sweep, MetricsReport, Representation, SweepTable};
use ecg_core::neural::gradcheck::{check_profile, isolation_profiles, GradCheckOptions, GradCheckReport};
use ecg_core::neural::{ArchitectureProfile, InitScheme, Network};
use ecg_core::raster::{compute_bounds, rasterize, write_images_file, AxisBounds, BeatImage, IMAGE_SIZE};
use ecg_core::seed;
use ecg_core::synth::{pretrain_images, synth_records, SynthConfig, PRETRAIN_CLASSES};
use ecg_core::trainer::{
    self, confusion_on, load_weights, run_experiment, Examples, ExperimentOptions, FoldResult, Initialization,
    RenderedBeats, TrainConfig, WeightArchive,
};
use ecg_core::wfdb::{csv::load_csv_record, csv::write_csv_record, load_record_from_base};

use crate::config::{resolve, ExperimentConfig, RepresentationKind, Resolved};
use crate::error::{CliError, Result};
use crate::{EvalArgs, GradcheckArgs, IngestArgs, PretrainArgs, RenderArgs, SweepArgs, SynthArgs, TrainArgs};

pub const CONFIG_FILE: &str = "config.json";
pub const REPORT_FILE: &str = "report.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const WEIGHTS_FILE: &str = "weights.ecgw";
pub const SWEEP_FILE: &str = "sweep.csv";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("reports serialize") + "\n"
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Strips a record file extension so `100.hea`, `100.dat` and `100` agree.
fn record_base(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for ext in [".ann.csv", ".hea", ".dat", ".atr", ".csv"] {
        if let Some(stem) = s.strip_suffix(ext) {
            return PathBuf::from(stem);
        }
    }
    path.to_path_buf()
}

/// Beats of one record, WFDB when `<base>.hea` exists, CSV fallback otherwise.
pub fn load_record_beats(path: &Path, channel: usize, fs_hz: f64) -> Result<Vec<Beat>> {
    let base = record_base(path);
    let (record, annotations) = if with_suffix(&base, ".hea").exists() {
        load_record_from_base(&base)?
    } else if with_suffix(&base, ".csv").exists() {
        load_csv_record(&with_suffix(&base, ".csv"), &with_suffix(&base, ".ann.csv"), fs_hz)?
    } else {
        return Err(CliError::data(format!("{}: no .hea or .csv record found", base.display())));
    };
    segment_beats_channel(&record, channel, &annotations).map_err(|e| CliError::from(e).context(base.display()))
}

pub fn ingest(a: &IngestArgs) -> Result<Vec<Beat>> {
    if a.records.is_empty() {
        return Err(CliError::usage("no records given"));
    }
    // Globs such as `100.*` name one record several times; keep first mentions.
    let mut bases: Vec<PathBuf> = Vec::new();
    for r in &a.records {
        let b = record_base(r);
        if !bases.contains(&b) {
            bases.push(b);
        }
    }
    let mut beats = Vec::new();
    for b in &bases {
        beats.extend(load_record_beats(b, a.channel, a.fs)?);
    }
    write_beats_file(&a.out, &beats)?;
    let (normal, abnormal) = class_counts(&beats);
    println!(
        "ingested {} records: {} beats ({normal} normal, {abnormal} abnormal) -> {}",
        bases.len(),
        beats.len(),
        a.out.display()
    );
    Ok(beats)
}

fn read_bounds(path: &Path) -> Result<AxisBounds> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
    let b: AxisBounds =
        serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: invalid bounds: {e}", path.display())))?;
    Ok(AxisBounds::new(b.lo(), b.hi())?)
}

fn write_png(path: &Path, gray: &[u8]) -> Result<()> {
    let err = |e: &dyn std::fmt::Display| CliError::data(format!("{}: {e}", path.display()));
    let file = fs::File::create(path).map_err(|e| err(&e))?;
    let mut enc = png::Encoder::new(std::io::BufWriter::new(file), IMAGE_SIZE as u32, IMAGE_SIZE as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let mut w = enc.write_header().map_err(|e| err(&e))?;
    w.write_image_data(gray).map_err(|e| err(&e))?;
    w.finish().map_err(|e| err(&e))
}

/// Renders every beat; the bounds used are echoed to `<out>.bounds.json`.
pub fn render(a: &RenderArgs) -> Result<Vec<BeatImage>> {
    let beats = read_beats_file(&a.beats)?;
    let bounds = match (&a.bounds, a.lo, a.hi) {
        (Some(p), _, _) => read_bounds(p)?,
        (None, Some(lo), Some(hi)) => AxisBounds::new(lo, hi)?,
        _ => compute_bounds(&beats)?,
    };
    let images: Vec<BeatImage> = beats.iter().map(|b| rasterize(b, &bounds)).collect();
    write_images_file(&a.out, &images)?;
    write_file(&with_suffix(&a.out, ".bounds.json"), to_json(&bounds))?;
    if let Some(dir) = &a.png_dir {
        create_dir(dir)?;
        for (i, img) in images.iter().take(a.png_limit).enumerate() {
            let label = match img.label {
                Label::Normal => "normal",
                Label::Abnormal => "abnormal",
            };
            write_png(&dir.join(format!("{i:06}_{label}.png")), &img.to_gray8(a.invert))?;
        }
    }
    println!(
        "rendered {} images (bounds {} .. {} mV) -> {}",
        images.len(),
        bounds.lo(),
        bounds.hi(),
        a.out.display()
    );
    Ok(images)
}

fn model_name(r: &Resolved) -> String {
    let act = r.profile.activation().map(|a| a.to_string()).unwrap_or_else(|| "linear".into());
    let dim = match r.config.representation {
        RepresentationKind::Signal1d => "1d",
        RepresentationKind::Image2d => "2d",
    };
    match r.config.transfer {
        Some(_) => format!("{act}-{dim}-transfer"),
        None => format!("{act}-{dim}"),
    }
}

/// Beats in the configured representation.
pub enum Dataset<'a> {
    Signal(&'a [Beat]),
    Image(RenderedBeats<'a>),
}

impl<'a> Dataset<'a> {
    pub fn new(r: &Resolved, beats: &'a [Beat]) -> Result<Self> {
        Ok(match r.bounds {
            None => Dataset::Signal(beats),
            Some(bounds) => Dataset::Image(RenderedBeats::new(beats, bounds, r.config.channels)?),
        })
    }
}

impl Examples for Dataset<'_> {
    fn len(&self) -> usize {
        match self {
            Dataset::Signal(b) => b.len(),
            Dataset::Image(i) => i.len(),
        }
    }

    fn sample_shape(&self) -> Vec<usize> {
        match self {
            Dataset::Signal(b) => b.sample_shape(),
            Dataset::Image(i) => i.sample_shape(),
        }
    }

    fn class(&self, i: usize) -> usize {
        match self {
            Dataset::Signal(b) => b.class(i),
            Dataset::Image(s) => s.class(i),
        }
    }

    fn write_sample(&self, i: usize, out: &mut [f32]) {
        match self {
            Dataset::Signal(b) => b.write_sample(i, out),
            Dataset::Image(s) => s.write_sample(i, out),
        }
    }
}

pub fn train(a: &TrainArgs, seed_override: Option<u64>, jobs: usize) -> Result<PathBuf> {
    let mut config = ExperimentConfig::load(&a.config)?;
    if let Some(act) = &a.activation {
        config.activation = Some(act.parse()?);
    }
    if let Some(init) = &a.init {
        config.init = init.parse()?;
    }
    run_config(config, seed_override, a.out.as_deref(), jobs)
}

/// Trains every fold of `config` and fills its run directory:
/// `config.json`, `report.json`, plus `history.csv` and `weights.ecgw` of
/// fold 0 at the top level, and one `folds/fold_k/` per fold.
pub fn run_config(config: ExperimentConfig, seed_override: Option<u64>, out: Option<&Path>, jobs: usize) -> Result<PathBuf> {
    if jobs == 0 {
        return Err(CliError::usage("--jobs must be at least 1"));
    }
    let r = resolve(config, seed_override, out)?;
    let dir = r
        .config
        .output_dir
        .clone()
        .ok_or_else(|| CliError::usage("no run directory: pass --out or set output_dir"))?;
    create_dir(&dir.join("folds"))?;
    write_file(&dir.join(CONFIG_FILE), r.config.to_json())?;
    let archive = match &r.config.transfer {
        Some(p) => Some(WeightArchive::load(p)?),
        None => None,
    };
    let opts = ExperimentOptions {
        init_scheme: r.config.init,
        initialization: archive.as_ref().map_or(Initialization::Random, Initialization::Transfer),
        jobs,
        model: model_name(&r),
    };
    let sink = |f: &FoldResult| -> trainer::Result<()> {
        let fold_dir = dir.join("folds").join(format!("fold_{}", f.fold));
        let io = |e: std::io::Error| trainer::TrainError::Io { path: fold_dir.display().to_string(), source: e };
        fs::create_dir_all(&fold_dir).map_err(io)?;
        fs::write(fold_dir.join(HISTORY_FILE), f.history.to_csv()).map_err(io)?;
        fs::write(fold_dir.join(REPORT_FILE), to_json(&f.report)).map_err(io)?;
        WeightArchive::from_network(&f.network).save(&fold_dir.join(WEIGHTS_FILE))?;
        println!("fold {}: {}", f.fold, summary(&f.report));
        Ok(())
    };
    let data = Dataset::new(&r, &r.beats)?;
    let (report, histories) = run_experiment(&data, &r.config.folds, &r.profile, &r.train, &opts, sink)?;
    write_file(&dir.join(REPORT_FILE), to_json(&report))?;
    write_file(&dir.join(HISTORY_FILE), histories[0].to_csv())?;
    let fold0 = dir.join("folds").join("fold_0").join(WEIGHTS_FILE);
    fs::copy(&fold0, dir.join(WEIGHTS_FILE)).map_err(|e| CliError::data(format!("{}: {e}", fold0.display())))?;
    let mean = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.2}"));
    println!(
        "{}: mean sensitivity {} specificity {} accuracy {} over {} folds -> {}",
        report.model,
        mean(report.mean_sensitivity),
        mean(report.mean_specificity),
        mean(report.mean_accuracy),
        report.folds.len(),
        dir.display()
    );
    Ok(dir)
}

fn summary(r: &MetricsReport) -> String {
    let f = |v: Option<f64>| v.map_or("undefined".to_string(), |v| format!("{v:.2}"));
    format!("sensitivity {} specificity {} accuracy {}", f(r.sensitivity), f(r.specificity), f(r.accuracy))
}

/// A trained run: its resolved config and fold-0 network.
pub struct TrainedRun {
    pub resolved: Resolved,
    pub network: Network<f32>,
}

impl TrainedRun {
    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join(CONFIG_FILE);
        if !cfg_path.exists() {
            return Err(CliError::data(format!("{}: not a run directory (no {CONFIG_FILE})", dir.display())));
        }
        let weights = dir.join(WEIGHTS_FILE);
        if !weights.exists() {
            return Err(CliError::data(format!(
                "{}: no trained weights ({WEIGHTS_FILE}); run `ecgbench train` first",
                dir.display()
            )));
        }
        let resolved = resolve(ExperimentConfig::load(&cfg_path)?, None, None)?;
        let mut network = Network::<f32>::new(resolved.profile.clone(), InitScheme::Auto, 0)?;
        load_weights(&mut network, &WeightArchive::load(&weights)?)?;
        Ok(TrainedRun { resolved, network })
    }

    /// Held-out beats of fold 0, the split the top-level weights never saw.
    pub fn test_beats(&self) -> Result<Vec<Beat>> {
        let beats = &self.resolved.beats;
        let labels: Vec<Label> = beats.iter().map(|b| b.label).collect();
        let folds = split_labels(&labels, &self.resolved.config.folds)?;
        Ok(folds[0].test.iter().map(|&i| beats[i].clone()).collect())
    }

    pub fn model(&self) -> String {
        model_name(&self.resolved)
    }
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    let report = evaluate_run(&a.run, a.dataset.as_deref())?;
    let json = to_json(&report);
    match &a.out {
        Some(p) => write_file(p, &json),
        None => {
            print!("{json}");
            Ok(())
        }
    }
}

pub fn evaluate_run(run: &Path, dataset: Option<&Path>) -> Result<MetricsReport> {
    let t = TrainedRun::load(run)?;
    let beats = match dataset {
        Some(p) => read_beats_file(p)?,
        None => t.test_beats()?,
    };
    let batch = t.resolved.train.eval_batch_size;
    let matrix = confusion_on(&t.network, &Dataset::new(&t.resolved, &beats)?, batch)?;
    let mut report = metrics::evaluate(&matrix);
    report.model = Some(t.model());
    Ok(report)
}

fn parse_snr(s: &str) -> Result<Option<f64>> {
    let s = s.trim();
    if s.eq_ignore_ascii_case("none") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| CliError::usage(format!("invalid SNR {s:?}; expected dB or `none`")))
}

pub fn sweep(a: &SweepArgs) -> Result<SweepTable> {
    let t = TrainedRun::load(&a.run)?;
    let snrs = match &a.snr {
        Some(list) => list.iter().map(|s| parse_snr(s)).collect::<Result<Vec<_>>>()?,
        None => t.resolved.config.snrs.clone(),
    };
    let representation = match t.resolved.bounds {
        None => Representation::Signal,
        Some(bounds) => Representation::Image { bounds, channels: t.resolved.config.channels },
    };
    let table = robustness_sweep(
        &t.network,
        &t.test_beats()?,
        &snrs,
        representation,
        &t.model(),
        seed::derive(t.resolved.config.seed, "sweep"),
        t.resolved.train.eval_batch_size,
    )?;
    let csv = table.to_csv();
    let out = a.out.clone().unwrap_or_else(|| a.run.join(SWEEP_FILE));
    write_file(&out, &csv)?;
    print!("{csv}");
    Ok(table)
}

pub fn gradcheck(a: &GradcheckArgs, seed_value: u64) -> Result<Vec<GradCheckReport>> {
    let mut profiles = Vec::new();
    for name in &a.profile {
        if name == "isolation" {
            profiles.extend(isolation_profiles());
        } else {
            profiles.push(
                ArchitectureProfile::builtin(name, 1).ok_or_else(|| CliError::usage(format!("unknown profile {name:?}")))?,
            );
        }
    }
    let opts = GradCheckOptions {
        epsilon: a.epsilon,
        max_coords: (a.max_coords > 0).then_some(a.max_coords),
        seed: seed_value,
        fault: a.corrupt_backward,
        ..GradCheckOptions::default()
    };
    let mut reports = Vec::new();
    let mut failed = Vec::new();
    for p in &profiles {
        let report = check_profile(p, a.batch, &opts)?;
        let verdict = if report.passed(a.tolerance) { "PASS" } else { "FAIL" };
        println!("{verdict} {}: max relative error {:.3e}", report.profile, report.max_rel_error);
        for t in &report.tensors {
            println!(
                "  {:<16} checked {:>4} skipped {:>3} max relative error {:.3e}",
                t.name, t.checked, t.skipped, t.max_rel_error
            );
        }
        if !report.passed(a.tolerance) {
            failed.push(report.profile.clone());
        }
        reports.push(report);
    }
    if failed.is_empty() {
        Ok(reports)
    } else {
        Err(CliError::numerical(format!(
            "gradient check exceeded {:e} for {}",
            a.tolerance,
            failed.join(", ")
        )))
    }
}

/// Trains `profile` on synthetic waveform images and returns its weights.
/// The output layer has [`PRETRAIN_CLASSES`] units, so transfer always
/// re-initializes it.
pub fn pretrain_synthetic(a: &PretrainArgs, seed_value: u64) -> Result<WeightArchive> {
    let profile = ArchitectureProfile::builtin(&a.profile, a.channels)
        .ok_or_else(|| CliError::usage(format!("unknown profile {:?}", a.profile)))?
        .with_classes(PRETRAIN_CLASSES);
    let shape = vec![a.channels, IMAGE_SIZE, IMAGE_SIZE];
    if profile.input_shape != shape {
        return Err(CliError::usage(format!(
            "profile {} takes input {:?}; synthetic images are {shape:?}",
            profile.name, profile.input_shape
        )));
    }
    let train_set = pretrain_images(a.images, a.channels, seed::derive(seed_value, "pretrain-data"));
    let test_set = pretrain_images((a.images / 10).max(PRETRAIN_CLASSES), a.channels, seed::derive(seed_value, "pretrain-test"));
    let config = TrainConfig {
        base_lr: a.lr,
        batch_size: a.batch,
        max_iterations: a.iterations,
        eval_interval: a.iterations.max(1),
        seed: seed::derive(seed_value, "pretrain-train"),
        ..TrainConfig::default()
    };
    let mut net = Network::<f32>::new(profile, InitScheme::Auto, seed::derive(seed_value, "pretrain-init"))?;
    let history = trainer::train(&mut net, &train_set, &test_set, &config)?;
    let archive = WeightArchive::from_network(&net);
    archive.save(&a.out)?;
    let acc = history.last().map_or(f64::NAN, |h| h.test_accuracy);
    println!(
        "pretrained {} on {} synthetic images: held-out accuracy {acc:.2}% -> {}",
        net.profile().name,
        a.images,
        a.out.display()
    );
    Ok(archive)
}

pub fn synth(a: &SynthArgs, seed_value: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&a.abnormal_fraction) {
        return Err(CliError::usage("abnormal fraction must lie in [0, 1]"));
    }
    create_dir(&a.out_dir)?;
    let cfg = SynthConfig { beats: a.beats, abnormal_fraction: a.abnormal_fraction, ..SynthConfig::default() };
    for (record, annotations) in synth_records(a.records, &cfg, seed_value) {
        let base = a.out_dir.join(record.name());
        write_csv_record(
            record.channel(0)?,
            &annotations,
            &with_suffix(&base, ".csv"),
            &with_suffix(&base, ".ann.csv"),
        )?;
    }
    println!("wrote {} synthetic records -> {}", a.records, a.out_dir.display());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_base_strips_known_extensions() {
        assert_eq!(record_base(Path::new("d/100.hea")), PathBuf::from("d/100"));
        assert_eq!(record_base(Path::new("d/s001.ann.csv")), PathBuf::from("d/s001"));
        assert_eq!(record_base(Path::new("d/100")), PathBuf::from("d/100"));
    }

    #[test]
    fn snr_lists() {
        assert_eq!(parse_snr("none").unwrap(), None);
        assert_eq!(parse_snr(" 35 ").unwrap(), Some(35.0));
        assert_eq!(parse_snr("loud").unwrap_err().code(), 1);
    }
}
