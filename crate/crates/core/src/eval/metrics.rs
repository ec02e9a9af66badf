use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary confusion counts with class 1 as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// The same matrix seen with class 0 as positive.
    pub fn flipped(&self) -> ConfusionMatrix {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            fn_: self.fp,
            tn: self.tp,
        }
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "label vectors differ in length: {} true vs {} predicted",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (1, 0) => cm.fn_ += 1,
            (0, 0) => cm.tn += 1,
            _ => {
                return Err(Error::invalid(format!(
                    "labels must be 0 or 1, got ({t}, {p})"
                )))
            }
        }
    }
    Ok(cm)
}

/// Precision, recall and F1 for one class. A zero denominator yields 0 and
/// sets the matching flag.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_degenerate: bool,
    pub recall_degenerate: bool,
    pub f1_degenerate: bool,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

impl ClassMetrics {
    /// Metrics for the positive class of `cm`.
    pub fn of_positive(cm: &ConfusionMatrix) -> Self {
        let (precision, precision_degenerate) = ratio(cm.tp, cm.tp + cm.fp);
        let (recall, recall_degenerate) = ratio(cm.tp, cm.tp + cm.fn_);
        // harmonic mean of precision and recall, in count form
        let (f1, f1_degenerate) = ratio(2 * cm.tp, 2 * cm.tp + cm.fp + cm.fn_);
        ClassMetrics {
            precision,
            recall,
            f1,
            support: cm.tp + cm.fn_,
            precision_degenerate,
            recall_degenerate,
            f1_degenerate,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightedMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Per-class metrics plus their support-weighted average.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub confusion: ConfusionMatrix,
    /// Overall accuracy; identical for both one-vs-rest views.
    pub accuracy: f64,
    pub accuracy_degenerate: bool,
    /// Indexed by class id.
    pub classes: [ClassMetrics; 2],
    pub weighted: WeightedMetrics,
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let n = cm.total();
    let (accuracy, accuracy_degenerate) = ratio(cm.tp + cm.tn, n);
    let classes = [
        ClassMetrics::of_positive(&cm.flipped()),
        ClassMetrics::of_positive(cm),
    ];
    let weigh = |f: fn(&ClassMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            classes.iter().map(|c| c.support as f64 * f(c)).sum::<f64>() / n as f64
        }
    };
    MetricsReport {
        confusion: *cm,
        accuracy,
        accuracy_degenerate,
        classes,
        weighted: WeightedMetrics {
            accuracy,
            precision: weigh(|c| c.precision),
            recall: weigh(|c| c.recall),
            f1: weigh(|c| c.f1),
        },
    }
}

impl MetricsReport {
    pub fn degenerate(&self) -> bool {
        self.accuracy_degenerate
            || self
                .classes
                .iter()
                .any(|c| c.precision_degenerate || c.recall_degenerate || c.f1_degenerate)
    }

    /// Rows `0`, `1` and `weighted`.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "class\taccuracy\tprecision\trecall\tf1\tsupport\tdegenerate"
        )?;
        for (c, m) in self.classes.iter().enumerate() {
            let mut flags = Vec::new();
            if m.precision_degenerate {
                flags.push("precision");
            }
            if m.recall_degenerate {
                flags.push("recall");
            }
            if m.f1_degenerate {
                flags.push("f1");
            }
            let flags = if flags.is_empty() {
                "-".to_string()
            } else {
                flags.join(",")
            };
            writeln!(
                out,
                "{c}\t{}\t{}\t{}\t{}\t{}\t{flags}",
                self.accuracy, m.precision, m.recall, m.f1, m.support
            )?;
        }
        let w = &self.weighted;
        let flags = if self.accuracy_degenerate {
            "accuracy"
        } else {
            "-"
        };
        writeln!(
            out,
            "weighted\t{}\t{}\t{}\t{}\t{}\t{flags}",
            w.accuracy,
            w.precision,
            w.recall,
            w.f1,
            self.confusion.total()
        )?;
        Ok(())
    }
}

/// ROC points from the highest threshold down; tied scores form one
/// (possibly diagonal) segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

pub fn roc_auc(y_true: &[u8], scores: &[f64]) -> Result<RocCurve> {
    if y_true.len() != scores.len() {
        return Err(Error::invalid(format!(
            "{} labels but {} scores",
            y_true.len(),
            scores.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("scores contain NaN"));
    }
    let pos = y_true.iter().filter(|&&y| y == 1).count() as u64;
    let neg = y_true.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::invalid("ROC needs both classes in y_true"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    // twice the area in count units: Σ Δfp·(tp_before + tp_after)
    let mut area2: u128 = 0;
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if y_true[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp0 + tp) as u128;
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}
