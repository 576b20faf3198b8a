//! Procedural data for running the pipeline without database files.
//!
//! [`synth_record`] builds a single-lead 360 Hz ECG as a sum of Gaussian
//! P/Q/R/S/T waves per beat, with per-record rate, amplitude, baseline
//! wander and measurement noise. Abnormal beats use four morphologies:
//! premature ventricular (`V`), left and right bundle branch block (`L`,
//! `R`) and atrial premature (`A`). Rhythm-change markers (`+`) are mixed in
//! so consumers exercise the non-beat path.
//!
//! [`pretrain_images`] renders three classes of generic line drawings for
//! pretraining 2-D networks before transfer.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::raster::{render_polyline, AxisBounds, IMAGE_SIZE};
use crate::seed;
use crate::trainer::TensorSet;
use crate::wfdb::{Annotation, Record, RecordHeader, SignalSpec, DEFAULT_BASELINE, DEFAULT_GAIN};

pub const SYNTH_FS: f64 = 360.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub beats: usize,
    /// Probability that a beat is abnormal.
    pub abnormal_fraction: f64,
    /// Standard deviation of additive measurement noise, mV.
    pub noise_mv: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            beats: 400,
            abnormal_fraction: 0.4,
            noise_mv: 0.01,
        }
    }
}

/// One Gaussian wave: amplitude (mV), center offset from R (s), width (s).
#[derive(Debug, Clone, Copy)]
struct Wave {
    amp: f64,
    at: f64,
    width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Normal,
    Ventricular,
    LeftBundle,
    RightBundle,
    AtrialPremature,
}

impl Kind {
    fn symbol(self) -> char {
        match self {
            Kind::Normal => 'N',
            Kind::Ventricular => 'V',
            Kind::LeftBundle => 'L',
            Kind::RightBundle => 'R',
            Kind::AtrialPremature => 'A',
        }
    }

    /// RR interval preceding this beat relative to the record's base RR.
    fn prematurity(self) -> f64 {
        match self {
            Kind::Ventricular => 0.65,
            Kind::AtrialPremature => 0.7,
            _ => 1.0,
        }
    }
}

/// Per-record morphology jitter.
struct Style {
    scale: f64,
    r_width: f64,
    t_amp: f64,
    p_amp: f64,
}

fn waves(kind: Kind, s: &Style, rng: &mut impl Rng) -> Vec<Wave> {
    let j = |rng: &mut dyn rand::RngCore, v: f64| v * (1.0 + 0.08 * (rng.random::<f64>() * 2.0 - 1.0));
    let w = |amp: f64, at: f64, width: f64| Wave { amp, at, width };
    let rw = s.r_width;
    let mut v = match kind {
        Kind::Normal => vec![
            w(s.p_amp, -0.2, 0.025),
            w(-0.12, -0.035, 0.01),
            w(1.0, 0.0, rw),
            w(-0.25, 0.035, 0.012),
            w(s.t_amp, 0.26, 0.05),
        ],
        Kind::Ventricular => vec![
            w(-0.3, -0.02, 0.03),
            w(1.3, 0.02, 0.035),
            w(-0.45, 0.09, 0.04),
            w(-0.4, 0.3, 0.07),
        ],
        Kind::LeftBundle => vec![
            w(s.p_amp, -0.22, 0.025),
            w(0.75, -0.012, 0.022),
            w(0.7, 0.03, 0.022),
            w(-0.3, 0.28, 0.06),
        ],
        Kind::RightBundle => vec![
            w(s.p_amp, -0.2, 0.025),
            w(0.55, 0.0, rw),
            w(-0.35, 0.03, 0.012),
            w(0.65, 0.065, 0.016),
            w(-0.15, 0.27, 0.05),
        ],
        Kind::AtrialPremature => vec![
            w(-0.6 * s.p_amp, -0.15, 0.02),
            w(-0.12, -0.035, 0.01),
            w(0.95, 0.0, rw),
            w(-0.25, 0.035, 0.012),
            w(0.8 * s.t_amp, 0.25, 0.05),
        ],
    };
    for wave in &mut v {
        wave.amp = j(rng, wave.amp) * s.scale;
        wave.width = j(rng, wave.width);
    }
    v
}

/// A synthetic record named `name` with its annotation list.
pub fn synth_record(name: &str, config: &SynthConfig, seed_value: u64) -> (Record, Vec<Annotation>) {
    let mut rng = seed::rng(seed::derive(seed_value, name));
    let fs = SYNTH_FS;
    let base_rr = rng.random_range(0.65..1.0);
    let style = Style {
        scale: rng.random_range(0.8..1.25),
        r_width: rng.random_range(0.009..0.013),
        t_amp: rng.random_range(0.2..0.4),
        p_amp: rng.random_range(0.1..0.2),
    };
    let abnormal = [Kind::Ventricular, Kind::LeftBundle, Kind::RightBundle, Kind::AtrialPremature];
    // Each record favors two abnormal morphologies, like real patients.
    let favored = [abnormal[rng.random_range(0..4)], abnormal[rng.random_range(0..4)]];

    let mut beats: Vec<(f64, Kind)> = Vec::with_capacity(config.beats);
    let mut t = 1.2;
    let mut prev = Kind::Normal;
    for _ in 0..config.beats {
        let kind = if rng.random_bool(config.abnormal_fraction.clamp(0.0, 1.0)) {
            if rng.random_bool(0.8) {
                favored[rng.random_range(0..2)]
            } else {
                abnormal[rng.random_range(0..4)]
            }
        } else {
            Kind::Normal
        };
        // Compensatory pause after a premature beat.
        let pause = if prev.prematurity() < 1.0 { 1.25 } else { 1.0 };
        t += base_rr * kind.prematurity() * pause * rng.random_range(0.95..1.05);
        beats.push((t, kind));
        prev = kind;
    }
    let n = ((t + 1.2) * fs) as usize;
    let mut signal = vec![0.0f64; n];
    for &(tr, kind) in &beats {
        for wv in waves(kind, &style, &mut rng) {
            let center = (tr + wv.at) * fs;
            let sigma = wv.width * fs;
            let lo = (center - 5.0 * sigma).max(0.0) as usize;
            let hi = ((center + 5.0 * sigma) as usize).min(n - 1);
            for (i, v) in signal.iter_mut().enumerate().take(hi + 1).skip(lo) {
                let z = (i as f64 - center) / sigma;
                *v += wv.amp * (-0.5 * z * z).exp();
            }
        }
    }
    let wander_amp = rng.random_range(0.02..0.08);
    let wander_hz = rng.random_range(0.15..0.4);
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let noise = Normal::new(0.0, config.noise_mv.max(0.0)).expect("finite noise level");
    for (i, v) in signal.iter_mut().enumerate() {
        let time = i as f64 / fs;
        *v += wander_amp * (std::f64::consts::TAU * wander_hz * time + phase).sin() + noise.sample(&mut rng);
        // Quantize through the 12-bit converter like a real recording.
        *v = ((*v * DEFAULT_GAIN).round().clamp(-2048.0, 2047.0)) / DEFAULT_GAIN;
    }

    let mut annotations: Vec<Annotation> = Vec::with_capacity(beats.len() + beats.len() / 50 + 1);
    for (k, &(tr, kind)) in beats.iter().enumerate() {
        let idx = (tr * fs).round() as u64;
        if k % 50 == 0 {
            annotations.push(Annotation::from_symbol(idx.saturating_sub(20), '+').expect("defined symbol"));
        }
        annotations.push(Annotation::from_symbol(idx, kind.symbol()).expect("defined symbol"));
    }
    let header = RecordHeader {
        record_name: name.to_string(),
        sampling_rate: fs,
        n_samples: Some(n),
        signals: vec![SignalSpec {
            file_name: format!("{name}.dat"),
            format_code: 212,
            byte_offset: 0,
            gain: DEFAULT_GAIN,
            baseline: DEFAULT_BASELINE,
            units: "mV".into(),
            description: "synthetic lead".into(),
        }],
    };
    let record = Record::new(header, vec![signal]).expect("synthetic record is well-formed");
    (record, annotations)
}

/// Names `s000`, `s001`, ... with per-record seeds derived from `seed_value`.
pub fn synth_records(count: usize, config: &SynthConfig, seed_value: u64) -> Vec<(Record, Vec<Annotation>)> {
    (0..count)
        .map(|i| synth_record(&format!("s{i:03}"), config, seed_value))
        .collect()
}

/// Number of classes produced by [`pretrain_images`].
pub const PRETRAIN_CLASSES: usize = 3;

/// `count` images of shape `[channels, 256, 256]` in three balanced classes:
/// 0 = trains of random Gaussian bumps, 1 = sums of sinusoids, 2 = random
/// walks.
pub fn pretrain_images(count: usize, channels: usize, seed_value: u64) -> TensorSet {
    let bounds = AxisBounds::new(-1.2, 1.2).expect("static bounds");
    let len = 820;
    let plane = IMAGE_SIZE * IMAGE_SIZE;
    let mut set = TensorSet::new(vec![channels, IMAGE_SIZE, IMAGE_SIZE]);
    let mut sample = vec![0.0f32; channels * plane];
    for i in 0..count {
        let class = i % PRETRAIN_CLASSES;
        let mut rng = seed::rng(seed::derive_index(seed_value, i as u64));
        let mut values = vec![0.0f64; len];
        match class {
            0 => {
                let bumps = rng.random_range(2..7);
                for _ in 0..bumps {
                    let c = rng.random_range(0.0..len as f64);
                    let w = rng.random_range(3.0..40.0);
                    let a = rng.random_range(-0.9..1.0);
                    for (t, v) in values.iter_mut().enumerate() {
                        let z = (t as f64 - c) / w;
                        *v += a * (-0.5 * z * z).exp();
                    }
                }
            }
            1 => {
                for _ in 0..rng.random_range(1..4) {
                    let f = rng.random_range(0.5..6.0) / len as f64;
                    let a = rng.random_range(0.1..0.5);
                    let ph = rng.random_range(0.0..std::f64::consts::TAU);
                    for (t, v) in values.iter_mut().enumerate() {
                        *v += a * (std::f64::consts::TAU * f * t as f64 + ph).sin();
                    }
                }
            }
            _ => {
                let step = rng.random_range(0.01..0.06);
                let mut x = rng.random_range(-0.3..0.3);
                for v in values.iter_mut() {
                    x = (x + rng.random_range(-step..step)) * 0.995;
                    *v = x;
                }
            }
        }
        let offset = rng.random_range(-0.2..0.2);
        let values: Vec<f32> = values.iter().map(|v| (v + offset) as f32).collect();
        let pixels = render_polyline(&values, &bounds);
        for c in 0..channels {
            for (o, &p) in sample[c * plane..(c + 1) * plane].iter_mut().zip(&pixels) {
                *o = f32::from(p);
            }
        }
        set.push(&sample, class);
    }
    set
}
