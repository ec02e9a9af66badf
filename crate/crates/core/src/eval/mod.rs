//! Confusion matrices, accuracy/precision/recall/F1, ROC curves,
//! cross-validation and learning curves.

mod metrics;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use metrics::{
    confusion, metrics, roc_auc, ClassMetrics, ConfusionMatrix, MetricsReport, RocCurve,
    WeightedMetrics,
};

use crate::error::{Error, Result};
use crate::models::{fit, predict_proba, ModelKind, TrainConfig, TreeEnsembleModel};
use crate::sampling::{
    balance, derive_seed, kfold_indices, train_test_split, LabeledDataset, SmoteConfig,
};

/// Fits `kind` after optionally balancing the training rows with SMOTE.
/// Balancing is skipped, with a warning, when the minority class has fewer
/// than two rows.
pub fn fit_balanced(
    train: &LabeledDataset,
    kind: ModelKind,
    config: &TrainConfig,
    smote: Option<&SmoteConfig>,
) -> Result<TreeEnsembleModel> {
    match smote {
        Some(cfg) => {
            let [c0, c1] = train.class_counts();
            if c0.min(c1) < 2 {
                log::warn!("skipping SMOTE: minority class has {} rows", c0.min(c1));
                fit(kind, train, config)
            } else {
                fit(kind, &balance(train, cfg)?, config)
            }
        }
        None => fit(kind, train, config),
    }
}

/// Scores of one model on one labelled set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub report: MetricsReport,
    /// Absent when the evaluated set holds a single class.
    pub auc: Option<f64>,
    pub probabilities: Vec<f64>,
}

pub fn evaluate(
    model: &TreeEnsembleModel,
    ds: &LabeledDataset,
    threshold: f64,
) -> Result<Evaluation> {
    let probabilities = predict_proba(model, &ds.features)?;
    let predicted: Vec<u8> = probabilities
        .iter()
        .map(|&p| u8::from(p > threshold))
        .collect();
    let report = metrics(&confusion(&ds.labels, &predicted)?);
    let auc = roc_auc(&ds.labels, &probabilities).ok().map(|c| c.auc);
    Ok(Evaluation {
        report,
        auc,
        probabilities,
    })
}

/// Headline numbers: weighted metrics plus AUC. An undefined AUC reads 0.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
}

impl Summary {
    pub fn of(e: &Evaluation) -> Self {
        let w = e.report.weighted;
        Summary {
            accuracy: w.accuracy,
            precision: w.precision,
            recall: w.recall,
            f1: w.f1,
            auc: e.auc.unwrap_or(0.0),
        }
    }

    fn values(&self) -> [f64; 5] {
        [
            self.accuracy,
            self.precision,
            self.recall,
            self.f1,
            self.auc,
        ]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Summary {
            accuracy: v[0],
            precision: v[1],
            recall: v[2],
            f1: v[3],
            auc: v[4],
        }
    }

    pub const TSV_HEADER: &'static str = "accuracy\tprecision\trecall\tf1\tauc";

    pub fn tsv_fields(&self) -> String {
        self.values()
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join("\t")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_validation: usize,
    pub report: MetricsReport,
    pub auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossValidation {
    pub folds: Vec<FoldResult>,
    pub mean: Summary,
    /// Sample standard deviation across folds; 0 for a single fold.
    pub sd: Summary,
    /// Folds whose validation part lacked one class (AUC undefined).
    pub folds_without_auc: usize,
}

fn mean_sd(rows: &[Summary], auc_rows: &[f64]) -> (Summary, Summary) {
    let stat = |xs: Vec<f64>| {
        if xs.is_empty() {
            return (0.0, 0.0);
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() < 2 {
            0.0
        } else {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        (mean, sd)
    };
    let mut mean = [0.0; 5];
    let mut sd = [0.0; 5];
    for i in 0..4 {
        (mean[i], sd[i]) = stat(rows.iter().map(|r| r.values()[i]).collect());
    }
    (mean[4], sd[4]) = stat(auc_rows.to_vec());
    (Summary::from_values(mean), Summary::from_values(sd))
}

/// Stratified k-fold cross-validation. SMOTE, when given, is applied to
/// each fold's training part only; fold `f` seeds its model and SMOTE
/// with `derive_seed(seed, f)`.
pub fn cross_validate(
    ds: &LabeledDataset,
    folds: usize,
    kind: ModelKind,
    config: &TrainConfig,
    smote: Option<&SmoteConfig>,
    seed: u64,
) -> Result<CrossValidation> {
    let splits = kfold_indices(ds.len(), folds, Some(&ds.labels), seed)?;
    let results: Result<Vec<FoldResult>> = splits
        .par_iter()
        .enumerate()
        .map(|(f, (train_idx, val_idx))| {
            let fold_seed = derive_seed(seed, f as u64);
            let train = ds.subset(train_idx);
            let val = ds.subset(val_idx);
            let cfg = config.clone().with_seed(derive_seed(config.seed, f as u64));
            let smote = smote.map(|s| SmoteConfig {
                seed: fold_seed,
                ..*s
            });
            let model = fit_balanced(&train, kind, &cfg, smote.as_ref())?;
            let e = evaluate(&model, &val, 0.5)?;
            Ok(FoldResult {
                fold: f,
                n_train: train.len(),
                n_validation: val.len(),
                report: e.report,
                auc: e.auc,
            })
        })
        .collect();
    let folds = results?;
    let rows: Vec<Summary> = folds
        .iter()
        .map(|f| {
            let w = f.report.weighted;
            Summary {
                accuracy: w.accuracy,
                precision: w.precision,
                recall: w.recall,
                f1: w.f1,
                auc: 0.0,
            }
        })
        .collect();
    let aucs: Vec<f64> = folds.iter().filter_map(|f| f.auc).collect();
    let folds_without_auc = folds.len() - aucs.len();
    if folds_without_auc > 0 {
        log::warn!(
            "{folds_without_auc} folds lack one class; AUC averaged over the remaining folds"
        );
    }
    let (mean, sd) = mean_sd(&rows, &aucs);
    Ok(CrossValidation {
        folds,
        mean,
        sd,
        folds_without_auc,
    })
}

impl CrossValidation {
    /// One row per fold, then `mean` and `sd` rows.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "fold\tn_train\tn_validation\t{}", Summary::TSV_HEADER)?;
        for f in &self.folds {
            let w = f.report.weighted;
            let auc = f.auc.map_or("NA".to_string(), |a| a.to_string());
            writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{auc}",
                f.fold, f.n_train, f.n_validation, w.accuracy, w.precision, w.recall, w.f1
            )?;
        }
        writeln!(out, "mean\t-\t-\t{}", self.mean.tsv_fields())?;
        writeln!(out, "sd\t-\t-\t{}", self.sd.tsv_fields())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningPoint {
    pub fraction: f64,
    pub n_train: usize,
    pub train_score: f64,
    pub validation_score: f64,
}

/// Trains on growing prefixes of one shuffled training split and scores
/// accuracy on that prefix and on the fixed validation split. Fractions
/// yielding fewer than two rows are skipped with a warning.
pub fn learning_curve(
    ds: &LabeledDataset,
    fractions: &[f64],
    train_ratio: f64,
    kind: ModelKind,
    config: &TrainConfig,
    smote: Option<&SmoteConfig>,
    seed: u64,
) -> Result<Vec<LearningPoint>> {
    if fractions.iter().any(|&f| !(f > 0.0 && f <= 1.0))
        || fractions.windows(2).any(|w| w[0] >= w[1])
    {
        return Err(Error::invalid(
            "fractions must be ascending and lie in (0, 1]",
        ));
    }
    let (train, val) = train_test_split(ds, train_ratio, seed)?;
    let points: Result<Vec<Option<LearningPoint>>> = fractions
        .par_iter()
        .map(|&fraction| {
            let n = ((fraction * train.len() as f64).round() as usize).min(train.len());
            if n < 2 {
                log::warn!("skipping learning-curve fraction {fraction}: only {n} training rows");
                return Ok(None);
            }
            let prefix = train.subset(&(0..n).collect::<Vec<_>>());
            let model = fit_balanced(&prefix, kind, config, smote)?;
            let train_score = evaluate(&model, &prefix, 0.5)?.report.accuracy;
            let validation_score = evaluate(&model, &val, 0.5)?.report.accuracy;
            Ok(Some(LearningPoint {
                fraction,
                n_train: n,
                train_score,
                validation_score,
            }))
        })
        .collect();
    Ok(points?.into_iter().flatten().collect())
}

pub fn write_learning_curve_tsv<W: Write>(points: &[LearningPoint], mut out: W) -> Result<()> {
    writeln!(out, "fraction\tn_train\ttrain_score\tvalidation_score")?;
    for p in points {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            p.fraction, p.n_train, p.train_score, p.validation_score
        )?;
    }
    Ok(())
}

pub fn write_roc_tsv<W: Write>(curve: &RocCurve, mut out: W) -> Result<()> {
    writeln!(out, "fpr\ttpr")?;
    for (x, y) in &curve.points {
        writeln!(out, "{x}\t{y}")?;
    }
    Ok(())
}
