use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Beat, BeatError, Result};
use crate::seed;

/// Target SNR and RNG seed for one noise draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(snr_db: f64, seed: u64) -> Result<Self> {
        let spec = NoiseSpec { snr_db, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if (0.0..=60.0).contains(&self.snr_db) {
            Ok(())
        } else {
            Err(BeatError::SnrOutOfRange(self.snr_db))
        }
    }
}

fn power(samples: &[f32]) -> f64 {
    samples.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>() / samples.len() as f64
}

/// Noise variance that yields `snr_db` for a signal of mean power `signal_power`.
pub fn noise_variance(signal_power: f64, snr_db: f64) -> f64 {
    signal_power / 10f64.powf(snr_db / 10.0)
}

/// Adds white Gaussian noise scaled to this beat's own mean power.
pub fn inject_noise(beat: &Beat, spec: NoiseSpec) -> Result<Beat> {
    spec.validate()?;
    if !beat.is_clean() {
        return Err(BeatError::AlreadyNoisy);
    }
    let p = power(beat.samples());
    if p == 0.0 {
        return Err(BeatError::ZeroPowerSignal);
    }
    let sigma = noise_variance(p, spec.snr_db).sqrt();
    let mut rng = seed::rng(spec.seed);
    let noisy = beat
        .samples()
        .iter()
        .map(|&v| {
            let n: f64 = StandardNormal.sample(&mut rng);
            (f64::from(v) + sigma * n) as f32
        })
        .collect();
    beat.with_samples(noisy, Some(spec.snr_db as f32))
}

/// Noise-injects every beat with a per-beat stream derived from `seed`.
pub fn inject_noise_all(beats: &[Beat], snr_db: f64, seed: u64) -> Result<Vec<Beat>> {
    beats
        .par_iter()
        .enumerate()
        .map(|(i, b)| inject_noise(b, NoiseSpec::new(snr_db, seed::derive_index(seed, i as u64))?))
        .collect()
}

/// `10 log10(sum clean^2 / sum (noisy - clean)^2)` for raw sample slices.
pub fn snr_db(clean: &[f32], noisy: &[f32]) -> Result<f64> {
    if clean.len() != noisy.len() {
        return Err(BeatError::LengthMismatch(clean.len(), noisy.len()));
    }
    let (mut ps, mut pn) = (0.0f64, 0.0f64);
    for (&c, &n) in clean.iter().zip(noisy) {
        let c = f64::from(c);
        let d = f64::from(n) - c;
        ps += c * c;
        pn += d * d;
    }
    if pn == 0.0 {
        return Err(BeatError::IdenticalSignals);
    }
    if ps == 0.0 {
        return Err(BeatError::ZeroPowerSignal);
    }
    Ok(10.0 * (ps / pn).log10())
}

/// Empirical SNR of `noisy` relative to `clean`.
pub fn measure_snr(clean: &Beat, noisy: &Beat) -> Result<f64> {
    snr_db(clean.samples(), noisy.samples())
}
