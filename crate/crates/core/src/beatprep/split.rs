use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{Beat, BeatError, Label, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CvMode {
    /// Independently seeded train/test draws of the planned sizes, one per fold.
    #[default]
    Resample,
    /// Classic partitioned k-fold over a pool of `train_size + test_size` beats.
    Kfold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FoldPlan {
    pub n_folds: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
    pub stratified: bool,
    #[serde(default)]
    pub cv_mode: CvMode,
}

impl Default for FoldPlan {
    fn default() -> Self {
        FoldPlan {
            n_folds: 5,
            train_size: 5000,
            test_size: 1500,
            seed: 0,
            stratified: true,
            cv_mode: CvMode::Resample,
        }
    }
}

/// Indices into the beat pool for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Largest-remainder apportionment of `n` proportional to `weights`.
/// Ties go to the lower index.
fn apportion(n: usize, weights: &[usize]) -> Vec<usize> {
    let total: usize = weights.iter().sum();
    if total == 0 {
        return vec![0; weights.len()];
    }
    let mut parts: Vec<usize> = weights.iter().map(|&w| n * w / total).collect();
    let mut rem: Vec<(usize, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (n * w % total, i))
        .collect();
    rem.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let short = n - parts.iter().sum::<usize>();
    for &(_, i) in rem.iter().take(short) {
        parts[i] += 1;
    }
    parts
}

fn by_class(labels: &[Label]) -> [Vec<usize>; 2] {
    let mut classes = [Vec::new(), Vec::new()];
    for (i, l) in labels.iter().enumerate() {
        classes[l.index()].push(i);
    }
    classes
}

/// Per-class (test, train) counts that keep pool proportions within one beat.
fn stratified_counts(counts: &[usize; 2], test: usize, train: usize) -> [(usize, usize); 2] {
    let t = apportion(test, counts);
    let mut r = apportion(train, counts);
    for c in 0..2 {
        let other = 1 - c;
        while t[c] + r[c] > counts[c] && t[other] + r[other] < counts[other] {
            r[c] -= 1;
            r[other] += 1;
        }
    }
    [(t[0], r[0]), (t[1], r[1])]
}

fn validate(plan: &FoldPlan, available: usize) -> Result<()> {
    if plan.n_folds == 0 {
        return Err(BeatError::InvalidPlan("n_folds must be at least 1".into()));
    }
    if plan.train_size == 0 || plan.test_size == 0 {
        return Err(BeatError::InvalidPlan("train and test sizes must be positive".into()));
    }
    let needed = plan.train_size + plan.test_size;
    if needed > available {
        return Err(BeatError::InsufficientData { needed, available });
    }
    if plan.cv_mode == CvMode::Kfold && plan.n_folds < 2 {
        return Err(BeatError::InvalidPlan("k-fold needs at least 2 folds".into()));
    }
    Ok(())
}

/// Plans folds over a beat pool.
pub fn split_dataset(beats: &[Beat], plan: &FoldPlan) -> Result<Vec<Fold>> {
    let labels: Vec<Label> = beats.iter().map(|b| b.label).collect();
    split_labels(&labels, plan)
}

/// Plans folds over a label sequence; returned indices refer to `labels`.
pub fn split_labels(labels: &[Label], plan: &FoldPlan) -> Result<Vec<Fold>> {
    validate(plan, labels.len())?;
    match plan.cv_mode {
        CvMode::Resample => Ok((0..plan.n_folds)
            .map(|f| resample_fold(labels, plan, seed::derive_index(plan.seed, f as u64)))
            .collect()),
        CvMode::Kfold => Ok(kfold(labels, plan)),
    }
}

fn resample_fold(labels: &[Label], plan: &FoldPlan, fold_seed: u64) -> Fold {
    let mut rng = seed::rng(fold_seed);
    let (mut test, mut train) = (Vec::new(), Vec::new());
    if plan.stratified {
        let mut classes = by_class(labels);
        let counts = [classes[0].len(), classes[1].len()];
        let alloc = stratified_counts(&counts, plan.test_size, plan.train_size);
        for (idx, (t, r)) in classes.iter_mut().zip(alloc) {
            idx.shuffle(&mut rng);
            test.extend_from_slice(&idx[..t]);
            train.extend_from_slice(&idx[t..t + r]);
        }
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        test.extend_from_slice(&idx[..plan.test_size]);
        train.extend_from_slice(&idx[plan.test_size..plan.test_size + plan.train_size]);
    }
    test.sort_unstable();
    train.sort_unstable();
    Fold { train, test }
}

fn kfold(labels: &[Label], plan: &FoldPlan) -> Vec<Fold> {
    let mut rng = seed::rng(plan.seed);
    let total = plan.train_size + plan.test_size;
    let k = plan.n_folds;
    let mut parts = vec![Vec::new(); k];
    if plan.stratified {
        let mut classes = by_class(labels);
        let take = apportion(total, &[classes[0].len(), classes[1].len()]);
        // Continue dealing where the previous class stopped so fold sizes stay within one.
        let mut next = 0;
        for (idx, n) in classes.iter_mut().zip(take) {
            idx.shuffle(&mut rng);
            for &i in &idx[..n] {
                parts[next % k].push(i);
                next += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..labels.len()).collect();
        idx.shuffle(&mut rng);
        for (j, &i) in idx[..total].iter().enumerate() {
            parts[j % k].push(i);
        }
    }
    (0..k)
        .map(|f| {
            let mut test = parts[f].clone();
            let mut train: Vec<usize> = (0..k).filter(|&g| g != f).flat_map(|g| parts[g].iter().copied()).collect();
            test.sort_unstable();
            train.sort_unstable();
            Fold { train, test }
        })
        .collect()
}

/// Subsamples the largest pool whose normal share is `normal_fraction`.
/// Returned indices are sorted.
pub fn balance_pool(labels: &[Label], normal_fraction: f64, seed_value: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&normal_fraction) {
        return Err(BeatError::InvalidPlan(format!(
            "normal fraction {normal_fraction} is outside [0, 1]"
        )));
    }
    let mut classes = by_class(labels);
    let (n, a) = (classes[0].len() as f64, classes[1].len() as f64);
    // Largest total T with T*f <= n and T*(1-f) <= a.
    let cap_n = if normal_fraction > 0.0 { n / normal_fraction } else { f64::INFINITY };
    let cap_a = if normal_fraction < 1.0 { a / (1.0 - normal_fraction) } else { f64::INFINITY };
    let total = cap_n.min(cap_a).floor();
    let keep_n = ((total * normal_fraction).round() as usize).min(classes[0].len());
    let keep_a = ((total as usize).saturating_sub(keep_n)).min(classes[1].len());
    let mut rng = seed::rng(seed_value);
    let mut out = Vec::with_capacity(keep_n + keep_a);
    for (idx, keep) in classes.iter_mut().zip([keep_n, keep_a]) {
        idx.shuffle(&mut rng);
        out.extend_from_slice(&idx[..keep]);
    }
    out.sort_unstable();
    Ok(out)
}
