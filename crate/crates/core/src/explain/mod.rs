//! SHAP attributions for tree ensembles, feature rankings by mean |SHAP|,
//! and incremental-AUC feature selection.
//!
//! Attributions explain the model's raw output: the class-1 probability
//! for trees and forests, the log-odds for boosting. The marginal
//! contribution of feature `i` to coalition `S` is `f(S ∪ {i}) − f(S)`,
//! so a positive value pushes toward class 1.

mod treeshap;

use std::io::Write;

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

pub use treeshap::tree_expected_value;

use crate::encode::SparseRow;
use crate::error::{Error, Result};
use crate::eval::{cross_validate, evaluate, fit_balanced};
use crate::models::{ModelKind, Node, TrainConfig, Tree, TreeEnsembleModel};
use crate::sampling::{LabeledDataset, SmoteConfig};

/// Largest feature set the exact engine will enumerate.
pub const MAX_EXACT_FEATURES: usize = 20;

/// SHAP values for one instance, stored sparsely: features absent from
/// `values` have φ = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapAttribution {
    pub base_value: f64,
    /// `(column, φ)` sorted by column.
    pub values: Vec<(u32, f64)>,
}

impl ShapAttribution {
    pub fn phi(&self, col: usize) -> f64 {
        self.values
            .binary_search_by_key(&(col as u32), |e| e.0)
            .map_or(0.0, |i| self.values[i].1)
    }

    /// `base_value + Σφ`; equals the explained output.
    pub fn total(&self) -> f64 {
        self.base_value + self.values.iter().map(|e| e.1).sum::<f64>()
    }

    fn from_map(base_value: f64, map: FxHashMap<u32, f64>) -> Self {
        let mut values: Vec<(u32, f64)> = map.into_iter().collect();
        values.sort_unstable_by_key(|e| e.0);
        ShapAttribution { base_value, values }
    }
}

/// Expected raw output over the training distribution encoded in covers.
pub fn expected_output(model: &TreeEnsembleModel) -> f64 {
    model.output_offset()
        + model.tree_scale() * model.trees.iter().map(tree_expected_value).sum::<f64>()
}

/// Tree-path SHAP values for one instance.
pub fn shap_tree(model: &TreeEnsembleModel, x: &SparseRow) -> ShapAttribution {
    let mut phi = FxHashMap::default();
    let scale = model.tree_scale();
    for tree in &model.trees {
        treeshap::tree_shap_into(tree, x, scale, &mut phi);
    }
    ShapAttribution::from_map(expected_output(model), phi)
}

/// Tree-path SHAP values for every row, in row order.
pub fn shap_tree_batch(model: &TreeEnsembleModel, rows: &[SparseRow]) -> Vec<ShapAttribution> {
    rows.par_iter().map(|x| shap_tree(model, x)).collect()
}

/// How the exact engine values a coalition `S`.
#[derive(Debug, Clone, Copy)]
pub enum CoalitionValue<'a> {
    /// Features outside `S` follow both branches weighted by training cover.
    TreeConditional,
    /// Features outside `S` take their values from each background row;
    /// `f(S)` is the mean output over the background.
    Interventional(&'a [SparseRow]),
}

fn conditional_tree_value(tree: &Tree, x: &SparseRow, in_coalition: &dyn Fn(u32) -> bool) -> f64 {
    fn walk(tree: &Tree, i: usize, x: &SparseRow, s: &dyn Fn(u32) -> bool) -> f64 {
        match tree.nodes[i] {
            Node::Leaf { ref value, .. } => value.output(),
            Node::Split {
                feature,
                threshold,
                left,
                right,
                cover,
            } => {
                if s(feature) {
                    let next = if x.get(feature as usize) <= threshold {
                        left
                    } else {
                        right
                    };
                    walk(tree, next as usize, x, s)
                } else {
                    let (l, r) = (left as usize, right as usize);
                    (tree.nodes[l].cover() * walk(tree, l, x, s)
                        + tree.nodes[r].cover() * walk(tree, r, x, s))
                        / cover
                }
            }
        }
    }
    walk(tree, 0, x, in_coalition)
}

/// Exact Shapley values by enumerating every subset of the features the
/// model splits on (all other features are dummies with φ = 0).
pub fn shap_exact(
    model: &TreeEnsembleModel,
    x: &SparseRow,
    value: CoalitionValue,
) -> Result<ShapAttribution> {
    let features = model.used_features();
    let p = features.len();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            active: p,
            max: MAX_EXACT_FEATURES,
        });
    }
    if let CoalitionValue::Interventional(bg) = value {
        if bg.is_empty() {
            return Err(Error::invalid(
                "interventional SHAP needs a non-empty background",
            ));
        }
    }
    let position: FxHashMap<u32, usize> = features
        .iter()
        .enumerate()
        .map(|(i, &f)| (f as u32, i))
        .collect();
    let f_of = |mask: usize| -> f64 {
        match value {
            CoalitionValue::TreeConditional => {
                let s = |f: u32| position.get(&f).is_some_and(|&i| mask >> i & 1 == 1);
                model.output_offset()
                    + model.tree_scale()
                        * model
                            .trees
                            .iter()
                            .map(|t| conditional_tree_value(t, x, &s))
                            .sum::<f64>()
            }
            CoalitionValue::Interventional(bg) => {
                let total: f64 = bg
                    .iter()
                    .map(|z| {
                        let mut pairs: Vec<(u32, f64)> = z
                            .pairs()
                            .filter(|(c, _)| {
                                !position
                                    .get(&(*c as u32))
                                    .is_some_and(|&i| mask >> i & 1 == 1)
                            })
                            .map(|(c, v)| (c as u32, v))
                            .collect();
                        for (i, &f) in features.iter().enumerate() {
                            if mask >> i & 1 == 1 {
                                pairs.push((f as u32, x.get(f)));
                            }
                        }
                        model.raw_output(&SparseRow::from_pairs(pairs))
                    })
                    .sum();
                total / bg.len() as f64
            }
        }
    };
    let values: Vec<f64> = (0..1usize << p).into_par_iter().map(f_of).collect();
    // w(s) = s!(p−s−1)!/p!
    let mut weight = vec![0.0; p.max(1)];
    for (s, w) in weight.iter_mut().enumerate().take(p) {
        *w = (0..s).map(|j| (j + 1) as f64).product::<f64>()
            * (0..p - s - 1).map(|j| (j + 1) as f64).product::<f64>()
            / (0..p).map(|j| (j + 1) as f64).product::<f64>();
    }
    let mut phi = Vec::with_capacity(p);
    for (i, &f) in features.iter().enumerate() {
        let bit = 1usize << i;
        let mut acc = 0.0;
        for mask in 0..1usize << p {
            if mask & bit == 0 {
                acc += weight[mask.count_ones() as usize] * (values[mask | bit] - values[mask]);
            }
        }
        phi.push((f as u32, acc));
    }
    Ok(ShapAttribution {
        base_value: values[0],
        values: phi,
    })
}

/// Columns ordered by mean |φ| over an explanation set, highest first;
/// ties by column id. Every column of the feature space is listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureRanking {
    pub fn from_scores(scores: &[f64]) -> Self {
        let mut entries: Vec<(usize, f64)> = scores.iter().copied().enumerate().collect();
        entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        FeatureRanking { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn top(&self, m: usize) -> Vec<usize> {
        self.entries.iter().take(m).map(|e| e.0).collect()
    }

    pub fn score(&self, col: usize) -> f64 {
        self.entries
            .iter()
            .find(|e| e.0 == col)
            .map_or(0.0, |e| e.1)
    }

    /// `rank  column  label  mean_abs_shap`; `limit` caps the row count.
    pub fn write_tsv<W: Write>(
        &self,
        mut out: W,
        label: impl Fn(usize) -> String,
        limit: Option<usize>,
    ) -> Result<()> {
        writeln!(out, "rank\tcolumn\tfeature\tmean_abs_shap")?;
        for (r, (col, score)) in self
            .entries
            .iter()
            .take(limit.unwrap_or(usize::MAX))
            .enumerate()
        {
            writeln!(out, "{}\t{col}\t{}\t{score}", r + 1, label(*col))?;
        }
        Ok(())
    }
}

/// Mean |φ| of every column over `attributions`.
pub fn mean_abs_shap(attributions: &[ShapAttribution], n_cols: usize) -> Vec<f64> {
    let mut sums = vec![0.0; n_cols];
    for a in attributions {
        for &(c, v) in &a.values {
            sums[c as usize] += v.abs();
        }
    }
    let n = attributions.len().max(1) as f64;
    sums.iter().map(|s| s / n).collect()
}

/// Ranks columns by mean |φ| from the tree-path engine over `explain_set`.
pub fn rank_features(
    model: &TreeEnsembleModel,
    explain_set: &LabeledDataset,
) -> Result<FeatureRanking> {
    if explain_set.is_empty() {
        return Err(Error::invalid("explanation set is empty"));
    }
    model.check_features(&explain_set.features)?;
    let attributions = shap_tree_batch(model, &explain_set.features.rows);
    Ok(FeatureRanking::from_scores(&mean_abs_shap(
        &attributions,
        model.n_features,
    )))
}

/// Result of the stabilization rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub chosen_m: usize,
    /// False when no m satisfied the rule and the largest m was returned.
    pub stabilized: bool,
}

/// Smallest m (1-based) whose window `[m, m + patience − 1]` stays within
/// `epsilon` of the curve's maximum. Returns the largest m, with a warning,
/// when no full window qualifies.
pub fn select_top_features(curve: &[f64], epsilon: f64, patience: usize) -> Result<Selection> {
    if curve.is_empty() || !(epsilon > 0.0) || patience == 0 {
        return Err(Error::invalid(
            "selection needs a non-empty curve, epsilon > 0 and patience >= 1",
        ));
    }
    let best = curve.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let floor = best - epsilon;
    for m in 1..=curve.len() {
        let end = m - 1 + patience;
        if end > curve.len() {
            break;
        }
        if curve[m - 1..end].iter().all(|&a| a >= floor) {
            return Ok(Selection {
                chosen_m: m,
                stabilized: true,
            });
        }
    }
    log::warn!("AUC curve never stabilized within epsilon={epsilon}, patience={patience}; using all {} features", curve.len());
    Ok(Selection {
        chosen_m: curve.len(),
        stabilized: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub m: usize,
    pub test_auc: f64,
    /// Mean k-fold AUC on the training split, when requested.
    pub cv_auc: Option<f64>,
}

impl CurvePoint {
    /// Value fed to the stabilization rule: mean of held-out and CV AUC, or
    /// the held-out AUC alone.
    pub fn selection_auc(&self) -> f64 {
        self.cv_auc
            .map_or(self.test_auc, |cv| (self.test_auc + cv) / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionCurve {
    pub points: Vec<CurvePoint>,
    pub selection: Selection,
    /// Ranked columns, in order, that the curve added one at a time.
    pub columns: Vec<usize>,
}

impl SelectionCurve {
    pub fn chosen_columns(&self) -> &[usize] {
        &self.columns[..self.selection.chosen_m]
    }

    pub fn write_tsv<W: Write>(&self, mut out: W, label: impl Fn(usize) -> String) -> Result<()> {
        writeln!(
            out,
            "m\tadded_column\tadded_feature\ttest_auc\tcv_auc\tselection_auc\tchosen"
        )?;
        for p in &self.points {
            let col = self.columns[p.m - 1];
            let cv = p.cv_auc.map_or("NA".to_string(), |v| v.to_string());
            let chosen = u8::from(p.m == self.selection.chosen_m);
            writeln!(
                out,
                "{}\t{col}\t{}\t{}\t{cv}\t{}\t{chosen}",
                p.m,
                label(col),
                p.test_auc,
                p.selection_auc()
            )?;
        }
        Ok(())
    }
}

/// Settings for [`incremental_auc_curve`].
#[derive(Debug, Clone, PartialEq)]
pub struct CurveConfig {
    pub kind: ModelKind,
    pub train: TrainConfig,
    pub smote: Option<SmoteConfig>,
    pub max_m: usize,
    /// Folds for the training-split CV AUC; 0 disables it.
    pub cv_folds: usize,
    pub epsilon: f64,
    pub patience: usize,
    pub seed: u64,
}

/// Retrains on the top-m ranked columns for m = 1..=max_m, recording the
/// held-out AUC and optionally the CV AUC on the training split, then
/// applies the stabilization rule.
pub fn incremental_auc_curve(
    ranking: &FeatureRanking,
    train: &LabeledDataset,
    test: &LabeledDataset,
    config: &CurveConfig,
) -> Result<SelectionCurve> {
    if config.max_m == 0 || config.max_m > ranking.len() {
        return Err(Error::invalid(format!(
            "max_m must lie in 1..={}, got {}",
            ranking.len(),
            config.max_m
        )));
    }
    let columns = ranking.top(config.max_m);
    let points: Result<Vec<CurvePoint>> = (1..=config.max_m)
        .into_par_iter()
        .map(|m| {
            let cols = &columns[..m];
            let tr = train.select_columns(cols);
            let te = test.select_columns(cols);
            let model = fit_balanced(&tr, config.kind, &config.train, config.smote.as_ref())?;
            let test_auc = evaluate(&model, &te, 0.5)?.auc.ok_or_else(|| {
                Error::Dataset("held-out split holds a single class; AUC undefined".into())
            })?;
            let cv_auc = if config.cv_folds > 1 {
                Some(
                    cross_validate(
                        &tr,
                        config.cv_folds,
                        config.kind,
                        &config.train,
                        config.smote.as_ref(),
                        config.seed,
                    )?
                    .mean
                    .auc,
                )
            } else {
                None
            };
            Ok(CurvePoint {
                m,
                test_auc,
                cv_auc,
            })
        })
        .collect();
    let points = points?;
    let signal: Vec<f64> = points.iter().map(CurvePoint::selection_auc).collect();
    let selection = select_top_features(&signal, config.epsilon, config.patience)?;
    Ok(SelectionCurve {
        points,
        selection,
        columns,
    })
}

/// Per-instance attributions as `row  column  phi` triplets after a
/// `base_value` line per row.
pub fn write_attributions_tsv<W: Write>(
    attributions: &[ShapAttribution],
    ids: &[String],
    mut out: W,
) -> Result<()> {
    writeln!(out, "id\tcolumn\tphi")?;
    for (a, id) in attributions.iter().zip(ids) {
        writeln!(out, "{id}\tbase\t{}", a.base_value)?;
        for &(c, v) in &a.values {
            if v != 0.0 {
                writeln!(out, "{id}\t{c}\t{v}")?;
            }
        }
    }
    Ok(())
}
