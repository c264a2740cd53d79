//! Segmentation accuracy: pixel confusion counts, mean IoU and mean pixel accuracy.
//!
//! `counts[i][j]` is the number of pixels whose true class is `i` and whose
//! predicted class is `j`. A single confusion matrix is accumulated over a
//! whole dataset and the metrics are computed from it once.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::raster::{load_mask, ClassMask, RasterError};

/// Background plus panel.
pub const NUM_CLASSES: usize = 2;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("mask dimensions differ: truth {truth:?}, prediction {pred:?}")]
    DimensionMismatch {
        truth: (usize, usize),
        pred: (usize, usize),
    },
    #[error("label {0} outside the confusion matrix")]
    LabelOutOfRange(u8),
    #[error("no class has a defined score")]
    NoDefinedClasses,
    #[error("no pairs found")]
    NoPairs,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl Default for ConfusionMatrix {
    fn default() -> Self {
        Self::new(NUM_CLASSES)
    }
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    /// Pixels of true class `truth` predicted as `pred`.
    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        (0..self.classes).map(|j| self.get(i, j)).sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        (0..self.classes).map(|i| self.get(i, j)).sum()
    }

    pub fn accumulate(&mut self, truth: &ClassMask, pred: &ClassMask) -> Result<(), EvalError> {
        let (td, pd) = (
            (truth.width(), truth.height()),
            (pred.width(), pred.height()),
        );
        if td != pd {
            return Err(EvalError::DimensionMismatch {
                truth: td,
                pred: pd,
            });
        }
        let n = self.classes;
        for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
            let (t, p) = (usize::from(t), usize::from(p));
            if t >= n || p >= n {
                return Err(EvalError::LabelOutOfRange(t.max(p) as u8));
            }
        }
        for (&t, &p) in truth.labels().iter().zip(pred.labels()) {
            self.counts[usize::from(t) * n + usize::from(p)] += 1;
        }
        Ok(())
    }

    /// Adds another matrix's counts; used to combine per-worker tallies.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(
            self.classes, other.classes,
            "confusion matrices of different size"
        );
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    /// Per-class IoU as `(intersection, union)`, `None` where the class never
    /// occurs in truth or prediction.
    pub fn class_iou_ratio(&self) -> Vec<Option<(u64, u64)>> {
        (0..self.classes)
            .map(|i| {
                let pii = self.get(i, i);
                let union = self.row_sum(i) + self.col_sum(i) - pii;
                (union > 0).then_some((pii, union))
            })
            .collect()
    }

    /// Per-class pixel accuracy as `(correct, true pixels)`, `None` where the
    /// class is absent from truth.
    pub fn class_pa_ratio(&self) -> Vec<Option<(u64, u64)>> {
        (0..self.classes)
            .map(|i| {
                let row = self.row_sum(i);
                (row > 0).then_some((self.get(i, i), row))
            })
            .collect()
    }

    pub fn class_iou(&self) -> Vec<Option<f64>> {
        self.class_iou_ratio()
            .into_iter()
            .map(|r| r.map(ratio))
            .collect()
    }

    pub fn class_pa(&self) -> Vec<Option<f64>> {
        self.class_pa_ratio()
            .into_iter()
            .map(|r| r.map(ratio))
            .collect()
    }
}

fn ratio((n, d): (u64, u64)) -> f64 {
    n as f64 / d as f64
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Mean of fractions, summed as one exact rational and rounded once when the
/// integers allow it, so e.g. the mean of 2/3 and 1/2 is the nearest double to 7/12.
fn mean_of_ratios(ratios: &[(u64, u64)]) -> f64 {
    let exact = ratios
        .iter()
        .try_fold((0u128, 1u128), |(num, den), &(n, d)| {
            let (n, d) = (n as u128, d as u128);
            let num = num.checked_mul(d)?.checked_add(n.checked_mul(den)?)?;
            let den = den.checked_mul(d)?;
            let g = gcd(num, den).max(1);
            Some((num / g, den / g))
        });
    match exact.and_then(|(num, den)| Some((num, den.checked_mul(ratios.len() as u128)?))) {
        Some((num, den)) => {
            let g = gcd(num, den).max(1);
            (num / g) as f64 / (den / g) as f64
        }
        None => ratios.iter().map(|&r| ratio(r)).sum::<f64>() / ratios.len() as f64,
    }
}

/// A class-averaged score and the classes left out of the average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeanScore {
    pub value: f64,
    pub per_class: Vec<Option<f64>>,
    /// Classes whose score is undefined (division by zero) and were excluded.
    pub excluded: Vec<usize>,
}

fn mean_defined(per_class: Vec<Option<(u64, u64)>>) -> Result<MeanScore, EvalError> {
    let defined: Vec<(u64, u64)> = per_class.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(EvalError::NoDefinedClasses);
    }
    let excluded = per_class
        .iter()
        .enumerate()
        .filter_map(|(i, v)| v.is_none().then_some(i))
        .collect();
    Ok(MeanScore {
        value: mean_of_ratios(&defined),
        per_class: per_class.into_iter().map(|r| r.map(ratio)).collect(),
        excluded,
    })
}

pub fn miou(cm: &ConfusionMatrix) -> Result<MeanScore, EvalError> {
    mean_defined(cm.class_iou_ratio())
}

pub fn mpa(cm: &ConfusionMatrix) -> Result<MeanScore, EvalError> {
    mean_defined(cm.class_pa_ratio())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairFailure {
    pub file: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegEvalReport {
    pub miou: f64,
    pub mpa: f64,
    pub per_class_iou: Vec<Option<f64>>,
    pub per_class_pa: Vec<Option<f64>>,
    /// Classes dropped from either mean because their score was undefined.
    pub excluded_classes: Vec<usize>,
    pub pixel_total: u64,
    pub image_count: usize,
    pub confusion: ConfusionMatrix,
    /// Unmatched file names and pairs that could not be evaluated.
    pub failures: Vec<PairFailure>,
}

impl SegEvalReport {
    pub fn from_matrix(
        cm: ConfusionMatrix,
        image_count: usize,
        failures: Vec<PairFailure>,
    ) -> Result<Self, EvalError> {
        let iou = miou(&cm)?;
        let pa = mpa(&cm)?;
        let excluded: BTreeSet<usize> = iou.excluded.iter().chain(&pa.excluded).copied().collect();
        Ok(Self {
            miou: iou.value,
            mpa: pa.value,
            per_class_iou: iou.per_class,
            per_class_pa: pa.per_class,
            excluded_classes: excluded.into_iter().collect(),
            pixel_total: cm.total(),
            image_count,
            confusion: cm,
            failures,
        })
    }

    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    /// Plain-text table in percent.
    pub fn to_table(&self) -> String {
        let pct =
            |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.2}", v * 100.0));
        let mut out = String::new();
        out.push_str(&format!("{:<12}{:>10}{:>10}\n", "class", "IoU/%", "PA/%"));
        for i in 0..self.per_class_iou.len() {
            let name = match i {
                0 => "background".to_string(),
                1 => "panel".to_string(),
                _ => format!("class {i}"),
            };
            out.push_str(&format!(
                "{:<12}{:>10}{:>10}\n",
                name,
                pct(self.per_class_iou[i]),
                pct(self.per_class_pa[i])
            ));
        }
        out.push_str(&format!("{:<12}{:>10}{:>10}\n", "", "MIoU/%", "MPA/%"));
        out.push_str(&format!(
            "{:<12}{:>10}{:>10}\n",
            "mean",
            pct(Some(self.miou)),
            pct(Some(self.mpa))
        ));
        out.push_str(&format!(
            "images: {}  pixels: {}\n",
            self.image_count, self.pixel_total
        ));
        for f in &self.failures {
            out.push_str(&format!("failed: {}: {}\n", f.file, f.error));
        }
        out
    }
}

fn is_mask_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png") || e.eq_ignore_ascii_case("pgm"))
}

/// Names of the mask files (`.png`, `.pgm`) directly inside `dir`. Other
/// files, such as ground-truth sidecars, are ignored.
fn list_files(dir: &Path) -> Result<BTreeSet<String>, EvalError> {
    let io_err = |source| EvalError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut names = BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(io_err)? {
        let entry = entry.map_err(io_err)?;
        if entry.file_type().map_err(io_err)?.is_file() && is_mask_file(&entry.path()) {
            names.insert(entry.file_name().to_string_lossy().into_owned());
        }
    }
    Ok(names)
}

/// Pairs same-named masks from the two directories and evaluates them into
/// one global confusion matrix. Bad pairs are reported, not fatal.
pub fn evaluate_directory(truth_dir: &Path, pred_dir: &Path) -> Result<SegEvalReport, EvalError> {
    let truth = list_files(truth_dir)?;
    let pred = list_files(pred_dir)?;
    let mut failures = Vec::new();
    for name in truth.symmetric_difference(&pred) {
        let side = if truth.contains(name) {
            "prediction"
        } else {
            "truth"
        };
        failures.push(PairFailure {
            file: name.clone(),
            error: format!("no matching {side} file"),
        });
    }

    let mut cm = ConfusionMatrix::default();
    let mut images = 0;
    for name in truth.intersection(&pred) {
        let load = |dir: &Path| load_mask(dir.join(name)).map_err(|e: RasterError| e.to_string());
        let result = load(truth_dir).and_then(|t| {
            let p = load(pred_dir)?;
            let mut local = ConfusionMatrix::default();
            local.accumulate(&t, &p).map_err(|e| e.to_string())?;
            Ok(local)
        });
        match result {
            Ok(local) => {
                cm.merge(&local);
                images += 1;
            }
            Err(error) => failures.push(PairFailure {
                file: name.clone(),
                error,
            }),
        }
    }
    failures.sort_by(|a, b| a.file.cmp(&b.file));
    if images == 0 {
        return Err(EvalError::NoPairs);
    }
    SegEvalReport::from_matrix(cm, images, failures)
}
