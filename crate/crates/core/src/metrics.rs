//! Confusion-matrix accounting and the SNR robustness sweep.
//!
//! Percentages are computed as `100 * numerator / denominator` from exact
//! integer counts, so values representable in binary come out exact.

use serde::{Deserialize, Serialize};

use crate::beatprep::{inject_noise_all, Beat, BeatError, Label};
use crate::neural::{Network, NeuralError};
use crate::raster::{rasterize, AxisBounds, BeatImage};
use crate::seed;
use crate::trainer::{predict_classes, to_labels, ImageSet};

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("{predictions} predictions for {truth} ground-truth labels")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("no labels to evaluate")]
    EmptyInput,
    #[error("{0} is undefined (zero denominator)")]
    UndefinedMetric(&'static str),
    #[error("sweep needs at least one condition")]
    EmptySweep,
    #[error(transparent)]
    Data(#[from] BeatError),
    #[error(transparent)]
    Neural(#[from] NeuralError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Which class counts as "positive".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    #[default]
    AbnormalPositive,
    NormalPositive,
}

impl Polarity {
    fn positive(self) -> Label {
        match self {
            Polarity::AbnormalPositive => Label::Abnormal,
            Polarity::NormalPositive => Label::Normal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// The same counts seen with the opposite class as positive.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }
}

/// Contingency counts with abnormal as the positive class.
pub fn confusion(predictions: &[Label], truth: &[Label]) -> Result<ConfusionMatrix> {
    confusion_with(predictions, truth, Polarity::default())
}

pub fn confusion_with(predictions: &[Label], truth: &[Label], polarity: Polarity) -> Result<ConfusionMatrix> {
    if predictions.len() != truth.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if truth.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let pos = polarity.positive();
    let mut m = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truth) {
        match (p == pos, t == pos) {
            (true, true) => m.tp += 1,
            (false, false) => m.tn += 1,
            (true, false) => m.fp += 1,
            (false, true) => m.fn_ += 1,
        }
    }
    Ok(m)
}

/// Sensitivity, specificity and accuracy in percent. A metric whose
/// denominator is zero is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub accuracy: Option<f64>,
    pub matrix: ConfusionMatrix,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub fold: Option<usize>,
}

fn percent(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| (100 * num) as f64 / den as f64)
}

pub fn evaluate(matrix: &ConfusionMatrix) -> MetricsReport {
    let m = matrix;
    MetricsReport {
        sensitivity: percent(m.tp, m.tp + m.fn_),
        specificity: percent(m.tn, m.tn + m.fp),
        accuracy: percent(m.tp + m.tn, m.total()),
        matrix: *m,
        model: None,
        snr_db: None,
        fold: None,
    }
}

impl MetricsReport {
    pub fn sensitivity(&self) -> Result<f64> {
        self.sensitivity.ok_or(MetricsError::UndefinedMetric("sensitivity"))
    }

    pub fn specificity(&self) -> Result<f64> {
        self.specificity.ok_or(MetricsError::UndefinedMetric("specificity"))
    }

    pub fn accuracy(&self) -> Result<f64> {
        self.accuracy.ok_or(MetricsError::UndefinedMetric("accuracy"))
    }
}

/// Input representation the swept network consumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Representation {
    Signal,
    /// Beats are re-rendered with fixed bounds after noise injection.
    Image { bounds: AxisBounds, channels: usize },
}

/// Default sweep: clean, then 35, 30, 25 and 20 dB.
pub const DEFAULT_SNRS: [Option<f64>; 5] = [None, Some(35.0), Some(30.0), Some(25.0), Some(20.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<MetricsReport>,
}

impl SweepTable {
    /// `max - min` accuracy across rows.
    pub fn span(&self) -> Option<f64> {
        let acc: Option<Vec<f64>> = self.rows.iter().map(|r| r.accuracy).collect();
        let acc = acc.filter(|a| !a.is_empty())?;
        let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = acc.iter().copied().fold(f64::INFINITY, f64::min);
        Some(max - min)
    }

    /// `model,snr_db,sensitivity,specificity,accuracy`, two decimals;
    /// the clean row has `snr_db = none`, undefined metrics are empty.
    pub fn to_csv(&self) -> String {
        let f = |v: Option<f64>| v.map(|v| format!("{v:.2}")).unwrap_or_default();
        let mut s = String::from("model,snr_db,sensitivity,specificity,accuracy\n");
        for r in &self.rows {
            let snr = r.snr_db.map(|v| format!("{v}")).unwrap_or_else(|| "none".into());
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.model.as_deref().unwrap_or(""),
                snr,
                f(r.sensitivity),
                f(r.specificity),
                f(r.accuracy)
            ));
        }
        s
    }
}

/// Evaluates `net` on a fresh noisy copy of `clean` per requested SNR
/// (`None` = clean). Each condition's noise stream derives from `seed` and
/// the row index.
pub fn robustness_sweep(
    net: &Network<f32>,
    clean: &[Beat],
    snrs: &[Option<f64>],
    representation: Representation,
    model: &str,
    seed_value: u64,
    batch: usize,
) -> Result<SweepTable> {
    if snrs.is_empty() {
        return Err(MetricsError::EmptySweep);
    }
    if clean.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let truth: Vec<Label> = clean.iter().map(|b| b.label).collect();
    let noise_root = seed::derive(seed_value, "sweep");
    let mut rows = Vec::with_capacity(snrs.len());
    for (k, snr) in snrs.iter().enumerate() {
        let noisy;
        let beats = match snr {
            None => clean,
            Some(db) => {
                noisy = inject_noise_all(clean, *db, seed::derive_index(noise_root, k as u64))?;
                &noisy[..]
            }
        };
        let classes = match representation {
            Representation::Signal => predict_classes(net, beats, batch)?,
            Representation::Image { bounds, channels } => {
                let images: Vec<BeatImage> = beats.iter().map(|b| rasterize(b, &bounds)).collect();
                predict_classes(net, &ImageSet { images: &images, channels }, batch)?
            }
        };
        let mut report = evaluate(&confusion(&to_labels(&classes), &truth)?);
        report.model = Some(model.to_string());
        report.snr_db = *snr;
        rows.push(report);
    }
    Ok(SweepTable { rows })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::Rng;

    use super::*;
    use Label::{Abnormal as A, Normal as N};

    #[test]
    fn confusion_examples() {
        assert_eq!(confusion(&[A], &[A]).unwrap(), ConfusionMatrix { tp: 1, ..Default::default() });
        assert_eq!(confusion(&[N], &[A]).unwrap(), ConfusionMatrix { fn_: 1, ..Default::default() });
        assert!(matches!(confusion(&[N], &[]), Err(MetricsError::LengthMismatch { .. })));
        assert!(matches!(confusion(&[], &[]), Err(MetricsError::EmptyInput)));
    }

    #[test]
    fn confusion_matches_brute_force() {
        let mut rng = crate::seed::rng(3);
        let pick = |r: &mut rand_chacha::ChaCha8Rng| if r.random_bool(0.4) { A } else { N };
        let p: Vec<Label> = (0..1000).map(|_| pick(&mut rng)).collect();
        let t: Vec<Label> = (0..1000).map(|_| pick(&mut rng)).collect();
        let count = |pp: Label, tt: Label| p.iter().zip(&t).filter(|&(&a, &b)| a == pp && b == tt).count() as u64;
        let m = confusion(&p, &t).unwrap();
        assert_eq!(
            m,
            ConfusionMatrix {
                tp: count(A, A),
                tn: count(N, N),
                fp: count(A, N),
                fn_: count(N, A)
            }
        );
        assert_eq!(confusion_with(&p, &t, Polarity::NormalPositive).unwrap(), m.swapped());
    }

    #[test]
    fn table_row_is_exact() {
        let r = evaluate(&ConfusionMatrix {
            tp: 891,
            fn_: 9,
            tn: 579,
            fp: 21,
        });
        assert_eq!(r.sensitivity, Some(99.0));
        assert_eq!(r.specificity, Some(96.5));
        assert_eq!(r.accuracy, Some(98.0));
    }

    #[test]
    fn perfect_and_undefined() {
        let r = evaluate(&ConfusionMatrix {
            tp: 1,
            tn: 1,
            fp: 0,
            fn_: 0,
        });
        assert_eq!((r.sensitivity, r.specificity, r.accuracy), (Some(100.0), Some(100.0), Some(100.0)));
        let r = evaluate(&ConfusionMatrix {
            tn: 3,
            fp: 1,
            ..Default::default()
        });
        assert!(matches!(r.sensitivity(), Err(MetricsError::UndefinedMetric("sensitivity"))));
        assert_eq!(r.specificity, Some(75.0));
    }

    #[test]
    fn csv_rows() {
        let mut a = evaluate(&ConfusionMatrix {
            tp: 1,
            tn: 2,
            fp: 0,
            fn_: 1,
        });
        a.model = Some("m".into());
        let mut b = a.clone();
        b.snr_db = Some(35.0);
        let t = SweepTable { rows: vec![a, b] };
        assert_eq!(
            t.to_csv(),
            "model,snr_db,sensitivity,specificity,accuracy\nm,none,50.00,100.00,75.00\nm,35,50.00,100.00,75.00\n"
        );
        assert_eq!(t.span(), Some(0.0));
    }

    proptest! {
        #[test]
        fn metric_invariants(tp in 0u64..5000, tn in 0u64..5000, fp in 0u64..5000, fn_ in 0u64..5000) {
            let m = ConfusionMatrix { tp, tn, fp, fn_ };
            let r = evaluate(&m);
            for v in [r.sensitivity, r.specificity, r.accuracy].into_iter().flatten() {
                prop_assert!((0.0..=100.0).contains(&v));
            }
            if let Some(acc) = r.accuracy {
                prop_assert!((acc * m.total() as f64 / 100.0 - (tp + tn) as f64).abs() <= 0.5);
                prop_assert_eq!(evaluate(&m.swapped()).accuracy, Some(acc));
            }
            if fp == 0 && fn_ == 0 && m.total() > 0 {
                prop_assert_eq!(r.accuracy, Some(100.0));
            }
        }
    }
}
