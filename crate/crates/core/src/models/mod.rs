//! CART decision trees, random forests and second-order gradient-boosted
//! trees over sparse k-mer features, plus a versioned JSON model format.

mod builder;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encode::{ColumnIndex, SparseFeatureMatrix, SparseRow};
use crate::error::{Error, Result};
use crate::sampling::{derive_seed, LabeledDataset};
use builder::{GrowParams, Objective, Stats, TreeGrower};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DecisionTree,
    RandomForest,
    Gbdt,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Gbdt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Gbdt => "gbdt",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "decision_tree" | "tree" => Ok(ModelKind::DecisionTree),
            "random_forest" | "forest" => Ok(ModelKind::RandomForest),
            "gbdt" => Ok(ModelKind::Gbdt),
            _ => Err(Error::invalid(format!("unknown model kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Gini,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub criterion: Criterion,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub n_trees: usize,
    /// Features examined per split; `None` means ⌈√n_cols⌉ for forests
    /// and every feature otherwise.
    pub mtry: Option<usize>,
    pub learning_rate: f64,
    pub l2_leaf_penalty: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::forest()
    }
}

impl TrainConfig {
    pub fn decision_tree() -> Self {
        TrainConfig {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_leaf: 1,
            n_trees: 1,
            mtry: None,
            learning_rate: 1.0,
            l2_leaf_penalty: 0.0,
            seed: 0,
        }
    }

    pub fn forest() -> Self {
        TrainConfig {
            n_trees: 200,
            ..Self::decision_tree()
        }
    }

    pub fn gbdt() -> Self {
        TrainConfig {
            max_depth: Some(6),
            n_trees: 200,
            learning_rate: 0.1,
            l2_leaf_penalty: 1.0,
            ..Self::decision_tree()
        }
    }

    pub fn for_kind(kind: ModelKind) -> Self {
        match kind {
            ModelKind::DecisionTree => Self::decision_tree(),
            ModelKind::RandomForest => Self::forest(),
            ModelKind::Gbdt => Self::gbdt(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_depth == Some(0)
            || self.min_samples_leaf == 0
            || self.n_trees == 0
            || self.mtry == Some(0)
        {
            return Err(Error::invalid(
                "max_depth, min_samples_leaf, n_trees and mtry must be >= 1",
            ));
        }
        if !(0.0..=1.0).contains(&self.learning_rate) {
            return Err(Error::invalid(format!(
                "learning_rate must lie in [0, 1], got {}",
                self.learning_rate
            )));
        }
        if !(self.l2_leaf_penalty >= 0.0) {
            return Err(Error::invalid("l2_leaf_penalty must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LeafValue {
    /// Class probabilities `[p0, p1]`.
    Proba([f64; 2]),
    /// Additive boosting score.
    Score(f64),
}

impl LeafValue {
    /// The scalar a leaf contributes to the model output.
    pub fn output(&self) -> f64 {
        match *self {
            LeafValue::Proba(p) => p[1],
            LeafValue::Score(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
        cover: f64,
    },
    Leaf {
        value: LeafValue,
        cover: f64,
    },
}

impl Node {
    pub fn cover(&self) -> f64 {
        match *self {
            Node::Split { cover, .. } | Node::Leaf { cover, .. } => cover,
        }
    }
}

/// A tree as a node array; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_of(&self, row: &SparseRow) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    i = if row.get(feature as usize) <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn output(&self, row: &SparseRow) -> f64 {
        match &self.nodes[self.leaf_of(row)] {
            Node::Leaf { value, .. } => value.output(),
            Node::Split { .. } => unreachable!(),
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, i: usize) -> usize {
            match t.nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => {
                    1 + walk(t, left as usize).max(walk(t, right as usize))
                }
            }
        }
        walk(self, 0)
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            Node::Split { feature, .. } => Some(*feature as usize),
            Node::Leaf { .. } => None,
        })
    }
}

/// A trained model bound to the feature space it was fitted on.
///
/// The output scale is kind-specific: trees and forests produce the
/// probability of class 1 directly, boosting produces log-odds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeEnsembleModel {
    pub format_version: u32,
    pub kind: ModelKind,
    pub config: TrainConfig,
    pub dictionary_hash: String,
    pub n_features: usize,
    pub base_score: f64,
    pub trees: Vec<Tree>,
}

impl TreeEnsembleModel {
    /// Raw model output for one row: probability for trees and forests,
    /// log-odds for boosting. This is the quantity SHAP values explain.
    pub fn raw_output(&self, row: &SparseRow) -> f64 {
        match self.kind {
            ModelKind::Gbdt => {
                self.base_score
                    + self.config.learning_rate
                        * self.trees.iter().map(|t| t.output(row)).sum::<f64>()
            }
            _ => self.trees.iter().map(|t| t.output(row)).sum::<f64>() / self.trees.len() as f64,
        }
    }

    /// Weight applied to tree `t`'s output in [`raw_output`](Self::raw_output).
    pub fn tree_scale(&self) -> f64 {
        match self.kind {
            ModelKind::Gbdt => self.config.learning_rate,
            _ => 1.0 / self.trees.len() as f64,
        }
    }

    /// Constant added to the scaled tree sum.
    pub fn output_offset(&self) -> f64 {
        match self.kind {
            ModelKind::Gbdt => self.base_score,
            _ => 0.0,
        }
    }

    pub fn row_proba(&self, row: &SparseRow) -> f64 {
        let raw = self.raw_output(row);
        match self.kind {
            ModelKind::Gbdt => logistic(raw),
            _ => raw,
        }
    }

    pub fn check_features(&self, features: &SparseFeatureMatrix) -> Result<()> {
        if features.n_cols != self.n_features || features.space() != self.dictionary_hash {
            return Err(Error::FeatureSpaceMismatch {
                expected_cols: self.n_features,
                expected_hash: self.dictionary_hash.clone(),
                found_cols: features.n_cols,
                found_hash: features.space().to_string(),
            });
        }
        Ok(())
    }

    /// Number of distinct features used by any split.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self.trees.iter().flat_map(Tree::split_features).collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn check_train(train: &LabeledDataset, config: &TrainConfig) -> Result<()> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    Ok(())
}

fn class_stats(train: &LabeledDataset) -> Vec<Stats> {
    train
        .labels
        .iter()
        .map(|&y| {
            if y == 1 {
                [0.0, 1.0, 1.0]
            } else {
                [1.0, 0.0, 1.0]
            }
        })
        .collect()
}

fn new_model(
    kind: ModelKind,
    config: &TrainConfig,
    train: &LabeledDataset,
    base_score: f64,
    trees: Vec<Tree>,
) -> TreeEnsembleModel {
    TreeEnsembleModel {
        format_version: FORMAT_VERSION,
        kind,
        config: config.clone(),
        dictionary_hash: train.features.space().to_string(),
        n_features: train.n_cols(),
        base_score,
        trees,
    }
}

/// Single CART tree with Gini impurity over every feature.
pub fn fit_decision_tree(
    train: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TreeEnsembleModel> {
    check_train(train, config)?;
    let columns = ColumnIndex::build(&train.features);
    let stats = class_stats(train);
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        mtry: config.mtry,
    };
    let mut grower = TreeGrower::new(&train.features, &columns, &stats, Objective::Gini, &params);
    let samples = (0..train.len() as u32).map(|r| (r, 1.0)).collect();
    let tree = grower.grow(samples, &mut ChaCha8Rng::seed_from_u64(config.seed));
    Ok(new_model(
        ModelKind::DecisionTree,
        config,
        train,
        0.0,
        vec![tree],
    ))
}

pub fn default_mtry(n_cols: usize) -> usize {
    ((n_cols as f64).sqrt().ceil() as usize).max(1)
}

/// Bagged Gini trees with per-split feature subsampling. Tree `i` draws
/// from a generator seeded by `derive_seed(seed, i)`.
pub fn fit_random_forest(
    train: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TreeEnsembleModel> {
    check_train(train, config)?;
    let columns = ColumnIndex::build(&train.features);
    let stats = class_stats(train);
    let mtry = config.mtry.unwrap_or_else(|| default_mtry(train.n_cols()));
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        mtry: Some(mtry),
    };
    let n = train.len();
    let trees: Vec<Tree> = (0..config.n_trees as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i));
            let mut counts = vec![0u32; n];
            for _ in 0..n {
                counts[rand::Rng::gen_range(&mut rng, 0..n)] += 1;
            }
            let samples = counts
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(r, &c)| (r as u32, c as f64))
                .collect();
            TreeGrower::new(&train.features, &columns, &stats, Objective::Gini, &params)
                .grow(samples, &mut rng)
        })
        .collect();
    Ok(new_model(
        ModelKind::RandomForest,
        config,
        train,
        0.0,
        trees,
    ))
}

/// Second-order boosting on logistic loss. Leaf weight is −G/(H+λ); split
/// gain is ½[G_L²/(H_L+λ) + G_R²/(H_R+λ) − G²/(H+λ)].
pub fn fit_gbdt(train: &LabeledDataset, config: &TrainConfig) -> Result<TreeEnsembleModel> {
    check_train(train, config)?;
    let [n0, n1] = train.class_counts();
    if n0 == 0 || n1 == 0 {
        return Err(Error::Training("boosting requires both classes".into()));
    }
    let prior = n1 as f64 / train.len() as f64;
    let base_score = (prior / (1.0 - prior)).ln();
    let columns = ColumnIndex::build(&train.features);
    let params = GrowParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        mtry: config.mtry,
    };
    let objective = Objective::Newton {
        lambda: config.l2_leaf_penalty,
    };
    let mut raw = vec![base_score; train.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut trees = Vec::with_capacity(config.n_trees);
    let samples: Vec<(u32, f64)> = (0..train.len() as u32).map(|r| (r, 1.0)).collect();
    for _ in 0..config.n_trees {
        let stats: Vec<Stats> = raw
            .par_iter()
            .zip(&train.labels)
            .map(|(&f, &y)| {
                let p = logistic(f);
                [p - y as f64, (p * (1.0 - p)).max(1e-16), 1.0]
            })
            .collect();
        let tree = TreeGrower::new(&train.features, &columns, &stats, objective, &params)
            .grow(samples.clone(), &mut rng);
        raw.par_iter_mut()
            .zip(&train.features.rows)
            .for_each(|(f, row)| *f += config.learning_rate * tree.output(row));
        trees.push(tree);
    }
    Ok(new_model(ModelKind::Gbdt, config, train, base_score, trees))
}

pub fn fit(
    kind: ModelKind,
    train: &LabeledDataset,
    config: &TrainConfig,
) -> Result<TreeEnsembleModel> {
    log::debug!(
        "fitting {} on {} rows x {} cols",
        kind.name(),
        train.len(),
        train.n_cols()
    );
    match kind {
        ModelKind::DecisionTree => fit_decision_tree(train, config),
        ModelKind::RandomForest => fit_random_forest(train, config),
        ModelKind::Gbdt => fit_gbdt(train, config),
    }
}

/// Probability of class 1 per row.
pub fn predict_proba(
    model: &TreeEnsembleModel,
    features: &SparseFeatureMatrix,
) -> Result<Vec<f64>> {
    model.check_features(features)?;
    Ok(features
        .rows
        .par_iter()
        .map(|r| model.row_proba(r))
        .collect())
}

/// Class 1 iff the probability is strictly above `threshold`.
pub fn predict_label(
    model: &TreeEnsembleModel,
    features: &SparseFeatureMatrix,
    threshold: f64,
) -> Result<Vec<u8>> {
    Ok(predict_proba(model, features)?
        .into_iter()
        .map(|p| u8::from(p > threshold))
        .collect())
}

pub fn write_model<W: Write>(model: &TreeEnsembleModel, out: W) -> Result<()> {
    let mut out = out;
    serde_json::to_writer(&mut out, model).map_err(|e| Error::ModelFormat(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_model<R: Read>(input: R) -> Result<TreeEnsembleModel> {
    let value: serde_json::Value = serde_json::from_reader(input)
        .map_err(|e| Error::ModelFormat(format!("malformed model file: {e}")))?;
    match value.get("format_version").and_then(|v| v.as_u64()) {
        Some(v) if v == FORMAT_VERSION as u64 => {}
        Some(v) => {
            return Err(Error::ModelFormat(format!(
                "unsupported format_version {v}, expected {FORMAT_VERSION}"
            )))
        }
        None => return Err(Error::ModelFormat("missing format_version".into())),
    }
    let model: TreeEnsembleModel = serde_json::from_value(value)
        .map_err(|e| Error::ModelFormat(format!("malformed model file: {e}")))?;
    validate_model(&model)?;
    Ok(model)
}

fn validate_model(model: &TreeEnsembleModel) -> Result<()> {
    if model.trees.is_empty() && model.kind != ModelKind::Gbdt {
        return Err(Error::ModelFormat("model has no trees".into()));
    }
    for (t, tree) in model.trees.iter().enumerate() {
        if tree.nodes.is_empty() {
            return Err(Error::ModelFormat(format!("tree {t} has no nodes")));
        }
        for (i, node) in tree.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = *node
            {
                let n = tree.nodes.len() as u32;
                if left as usize <= i || right as usize <= i || left >= n || right >= n {
                    return Err(Error::ModelFormat(format!(
                        "tree {t} node {i} has invalid children"
                    )));
                }
                if feature as usize >= model.n_features {
                    return Err(Error::ModelFormat(format!(
                        "tree {t} node {i} splits on unknown feature {feature}"
                    )));
                }
            }
        }
    }
    Ok(())
}

pub fn save_model(model: &TreeEnsembleModel, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_model(model, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<TreeEnsembleModel> {
    read_model(BufReader::new(File::open(path)?))
}
