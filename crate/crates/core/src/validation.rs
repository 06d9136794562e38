//! Cross-validated check that high-dependence groups are the ones a trained
//! classifier treats unequally, plus a comparison of detections across kernels.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::EncodedDataset;
use crate::detector::DependenceReport;
use crate::error::ValidationError;
use crate::fairness::{fairness_measures, group_confusion, FairnessMeasures, MEASURE_NAMES};
use crate::forest::{ForestConfig, RandomForest};
use crate::kernels::KernelKind;
use crate::seed;
use crate::stats::spearman;

/// Scores below this for every group mark a run as carrying no usable signal.
pub const LOW_SIGNAL_NOCCO: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub folds: usize,
    pub forest: ForestConfig,
    /// Drop the detected sensitive features from the classifier inputs.
    pub exclude_sensitive: bool,
    pub seed: u64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            folds: 10,
            forest: ForestConfig::default(),
            exclude_sensitive: false,
            seed: crate::detector::DEFAULT_SEED,
        }
    }
}

/// Label-stratified partition of `0..labels.len()` into `folds` test sets.
pub fn stratified_folds(
    labels: &[f64],
    folds: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>, ValidationError> {
    let n = labels.len();
    if folds < 2 || folds > n {
        return Err(ValidationError::BadFolds { folds, n });
    }
    let mut rng = seed::rng(seed);
    let mut pos: Vec<usize> = (0..n).filter(|&i| labels[i] > 0.0).collect();
    let mut neg: Vec<usize> = (0..n).filter(|&i| labels[i] <= 0.0).collect();
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut out = vec![Vec::new(); folds];
    // dealing positives then negatives round-robin keeps class counts within one row per fold
    for (i, &r) in pos.iter().chain(&neg).enumerate() {
        out[i % folds].push(r);
    }
    for (fold, rows) in out.iter_mut().enumerate() {
        let p = rows.iter().filter(|&&r| labels[r] > 0.0).count();
        if p == 0 || p == rows.len() {
            return Err(ValidationError::DegenerateFold { fold });
        }
        rows.sort_unstable();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub folds: Vec<Vec<usize>>,
    /// Held-out prediction for every row.
    pub predictions: Vec<f64>,
    pub fold_accuracy: Vec<f64>,
}

pub fn cross_validate(
    columns: &[&[f64]],
    labels: &[f64],
    folds: usize,
    forest: &ForestConfig,
    fold_seed: u64,
) -> Result<CrossValidation, ValidationError> {
    let parts = stratified_folds(labels, folds, fold_seed)?;
    let n = labels.len();
    let mut predictions = vec![0.0; n];
    let mut fold_accuracy = Vec::with_capacity(parts.len());
    let mut in_test = vec![false; n];
    for (f, test) in parts.iter().enumerate() {
        test.iter().for_each(|&r| in_test[r] = true);
        let train: Vec<usize> = (0..n).filter(|&r| !in_test[r]).collect();
        test.iter().for_each(|&r| in_test[r] = false);
        let config = ForestConfig {
            seed: seed::derive(forest.seed, &format!("fold{f}")),
            ..*forest
        };
        let model = RandomForest::fit(columns, labels, &train, &config)?;
        let pred = model.predict(columns, test);
        let hits = test.iter().zip(&pred).filter(|(&r, &p)| labels[r] == p).count();
        fold_accuracy.push(hits as f64 / test.len() as f64);
        for (&r, p) in test.iter().zip(pred) {
            predictions[r] = p;
        }
    }
    Ok(CrossValidation {
        folds: parts,
        predictions,
        fold_accuracy,
    })
}

/// Count of folds in which each measure was undefined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UndefinedCounts {
    pub f_pe: usize,
    pub f_ep: usize,
    pub f_eo: usize,
    pub f_oae: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubfeatureRecord {
    pub name: String,
    pub feature: String,
    pub nocco: f64,
    pub folds: Vec<FairnessMeasures>,
    /// Mean over the folds where each measure is defined.
    pub mean: FairnessMeasures,
    pub undefined: UndefinedCounts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeasureCorrelations {
    pub f_pe: Option<f64>,
    pub f_ep: Option<f64>,
    pub f_eo: Option<f64>,
    pub f_oae: Option<f64>,
}

impl MeasureCorrelations {
    pub fn values(&self) -> [Option<f64>; 4] {
        [self.f_pe, self.f_ep, self.f_eo, self.f_oae]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationEcho {
    pub folds: usize,
    pub forest: ForestConfig,
    pub kernel: KernelKind,
    pub epsilon: f64,
    pub exclude_sensitive: bool,
    pub seed: u64,
    pub fold_seed: u64,
    pub forest_seed: u64,
    pub rows: usize,
    pub trained_on: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub config: ValidationEcho,
    pub fold_accuracy: Vec<f64>,
    pub mean_accuracy: f64,
    pub subfeatures: Vec<SubfeatureRecord>,
    /// Spearman correlation between NOCCO and each mean measure across subfeatures.
    pub spearman: MeasureCorrelations,
    /// Every group scored below [`LOW_SIGNAL_NOCCO`].
    pub low_signal: bool,
}

impl ValidationReport {
    pub fn record(&self, name: &str) -> Option<&SubfeatureRecord> {
        self.subfeatures.iter().find(|r| r.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Plot-ready rows: `subfeature, kernel, nocco, f_pe, f_ep, f_eo, f_oae, accuracy`.
    pub fn write_scatter(&self, sink: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(sink);
        w.write_record(
            ["subfeature", "kernel", "nocco"]
                .into_iter()
                .chain(MEASURE_NAMES)
                .chain(["accuracy"]),
        )?;
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for r in &self.subfeatures {
            let mut rec = vec![r.name.clone(), self.config.kernel.to_string(), r.nocco.to_string()];
            rec.extend(r.mean.values().into_iter().map(fmt));
            rec.push(self.mean_accuracy.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mean_measures(folds: &[FairnessMeasures]) -> (FairnessMeasures, UndefinedCounts) {
    let mut sums = [0.0; 4];
    let mut counts = [0usize; 4];
    for m in folds {
        for (k, v) in m.values().into_iter().enumerate() {
            if let Some(v) = v {
                sums[k] += v;
                counts[k] += 1;
            }
        }
    }
    let mean = |k: usize| (counts[k] > 0).then(|| sums[k] / counts[k] as f64);
    let undefined = |k: usize| folds.len() - counts[k];
    (
        FairnessMeasures {
            f_pe: mean(0),
            f_ep: mean(1),
            f_eo: mean(2),
            f_oae: mean(3),
        },
        UndefinedCounts {
            f_pe: undefined(0),
            f_ep: undefined(1),
            f_eo: undefined(2),
            f_oae: undefined(3),
        },
    )
}

/// Trains the forest under cross-validation and pairs every indicator
/// subfeature's NOCCO with its held-out fairness measures.
pub fn validate(
    encoded: &EncodedDataset,
    report: &DependenceReport,
    config: &ValidationConfig,
) -> Result<ValidationReport, ValidationError> {
    if report.config.rows_used != encoded.n() {
        return Err(ValidationError::Invalid(format!(
            "dependence report covers {} rows but the dataset has {}",
            report.config.rows_used,
            encoded.n()
        )));
    }
    let dropped: Vec<usize> = if config.exclude_sensitive {
        report
            .sensitive_features
            .iter()
            .map(|f| encoded.feature_index(f))
            .collect::<Result<_, _>>()
            .map_err(|e| ValidationError::Invalid(e.to_string()))?
    } else {
        Vec::new()
    };
    let training = encoded.without_features(&dropped);
    let columns: Vec<&[f64]> = training.columns().iter().map(|c| c.as_slice()).collect();
    let labels = encoded.labels();
    let fold_seed = seed::derive(config.seed, "folds");
    let forest_seed = seed::derive(config.seed, "forest");
    let forest = ForestConfig {
        seed: forest_seed,
        ..config.forest
    };
    let cv = cross_validate(&columns, labels, config.folds, &forest, fold_seed)?;

    let mut records = Vec::new();
    for (k, sub) in encoded.subfeatures().iter().enumerate() {
        if !sub.is_indicator() {
            continue;
        }
        let nocco = report.subfeature_score(&sub.name).ok_or_else(|| {
            ValidationError::Invalid(format!("`{}` is missing from the dependence report", sub.name))
        })?;
        let indicator = encoded.column(k);
        let folds = cv
            .folds
            .iter()
            .map(|test| {
                let pick = |v: &[f64]| test.iter().map(|&r| v[r]).collect::<Vec<_>>();
                let gc = group_confusion(
                    &pick(&cv.predictions),
                    &pick(labels),
                    &pick(indicator),
                )
                .expect("fold slices share one length");
                fairness_measures(&gc)
            })
            .collect::<Vec<_>>();
        let (mean, undefined) = mean_measures(&folds);
        records.push(SubfeatureRecord {
            name: sub.name.clone(),
            feature: encoded.features()[sub.parent].name.clone(),
            nocco,
            folds,
            mean,
            undefined,
        });
    }

    let correlation = |k: usize| {
        let (d, m): (Vec<f64>, Vec<f64>) = records
            .iter()
            .filter_map(|r| r.mean.values()[k].map(|v| (r.nocco, v)))
            .unzip();
        spearman(&d, &m)
    };
    let mean_accuracy = cv.fold_accuracy.iter().sum::<f64>() / cv.fold_accuracy.len() as f64;
    Ok(ValidationReport {
        config: ValidationEcho {
            folds: config.folds,
            forest,
            kernel: report.config.kernel,
            epsilon: report.config.epsilon,
            exclude_sensitive: config.exclude_sensitive,
            seed: config.seed,
            fold_seed,
            forest_seed,
            rows: encoded.n(),
            trained_on: training.features().iter().map(|f| f.name.clone()).collect(),
        },
        low_signal: records.iter().all(|r| r.nocco < LOW_SIGNAL_NOCCO),
        spearman: MeasureCorrelations {
            f_pe: correlation(0),
            f_ep: correlation(1),
            f_eo: correlation(2),
            f_oae: correlation(3),
        },
        fold_accuracy: cv.fold_accuracy,
        mean_accuracy,
        subfeatures: records,
    })
}

/// A feature whose strongest group differs between the two kernels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupFlip {
    pub feature: String,
    pub rbf_group: String,
    pub linear_group: String,
    /// Largest relative score gap between the two groups under either kernel.
    pub relative_gap: f64,
    pub near_tie: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConsistency {
    /// Spearman correlation of feature scores between the kernels.
    pub spearman: Option<f64>,
    pub only_rbf: Vec<String>,
    pub only_linear: Vec<String>,
    pub group_flips: Vec<GroupFlip>,
    /// Same sensitive features, with group differences limited to near ties.
    pub consistent: bool,
}

/// Relative gap below which two groups count as tied.
pub const NEAR_TIE_GAP: f64 = 0.05;

fn relative_gap(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi <= 0.0 {
        0.0
    } else {
        (a - b).abs() / hi
    }
}

/// Compares an RBF and a linear-kernel report on the same data.
pub fn kernel_consistency(
    rbf: &DependenceReport,
    linear: &DependenceReport,
) -> Result<KernelConsistency, ValidationError> {
    let mut pairs = Vec::new();
    for s in &rbf.scores {
        let l = linear.score(&s.feature).ok_or_else(|| {
            ValidationError::Invalid(format!("feature `{}` missing from linear report", s.feature))
        })?;
        pairs.push((s, l));
    }
    let (d_rbf, d_lin): (Vec<f64>, Vec<f64>) = pairs.iter().map(|(a, b)| (a.d, b.d)).unzip();
    let spearman = if pairs.len() == 1 { Some(1.0) } else { spearman(&d_rbf, &d_lin) };
    let only_rbf: Vec<String> = rbf
        .sensitive_features
        .iter()
        .filter(|f| !linear.is_sensitive(f))
        .cloned()
        .collect();
    let only_linear: Vec<String> = linear
        .sensitive_features
        .iter()
        .filter(|f| !rbf.is_sensitive(f))
        .cloned()
        .collect();
    let mut group_flips = Vec::new();
    for (a, b) in &pairs {
        if !(rbf.is_sensitive(&a.feature) && linear.is_sensitive(&b.feature)) || a.argmax == b.argmax {
            continue;
        }
        let gap_rbf = relative_gap(a.d, a.subfeature(&b.argmax).unwrap_or(0.0));
        let gap_lin = relative_gap(b.d, b.subfeature(&a.argmax).unwrap_or(0.0));
        let relative_gap = gap_rbf.max(gap_lin);
        group_flips.push(GroupFlip {
            feature: a.feature.clone(),
            rbf_group: a.argmax.clone(),
            linear_group: b.argmax.clone(),
            relative_gap,
            near_tie: relative_gap < NEAR_TIE_GAP,
        });
    }
    let consistent =
        only_rbf.is_empty() && only_linear.is_empty() && group_flips.iter().all(|f| f.near_tie);
    Ok(KernelConsistency {
        spearman,
        only_rbf,
        only_linear,
        group_flips,
        consistent,
    })
}
