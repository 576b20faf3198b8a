//! Heartbeat classification workbench.
//!
//! The crate covers the full pipeline from MIT-BIH style records to trained
//! networks and evaluation tables:
//!
//! * [`wfdb`] parses WFDB headers, format-212 signal files and annotation
//!   streams (plus a CSV fallback).
//! * [`beatprep`] cuts R-centered 820-sample beats, injects white Gaussian
//!   noise at a target SNR and plans train/test folds.
//! * [`raster`] renders beats into 256x256 binary waveform images.
//! * [`neural`] is a small CPU tensor and layer core for 1-D and 2-D
//!   AlexNet-like networks with hand-written backward passes.
//! * [`trainer`] runs SGD with step decay, weight archives and transfer
//!   initialization.
//! * [`metrics`] computes sensitivity, specificity and accuracy and the SNR
//!   robustness sweep.
//! * [`synth`] generates synthetic ECG records and pretraining images.

pub mod beatprep;
pub mod metrics;
pub mod neural;
pub mod raster;
pub mod seed;
pub mod synth;
pub mod trainer;
pub mod wfdb;
