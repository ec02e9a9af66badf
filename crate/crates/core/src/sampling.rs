//! Labeled datasets, seeded splits, stratified k-fold indices and SMOTE.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::encode::{SparseFeatureMatrix, SparseRow};
use crate::error::{Error, Result};

/// Feature rows with binary labels (0 = control, 1 = study class) and record ids.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub features: SparseFeatureMatrix,
    pub labels: Vec<u8>,
    pub ids: Vec<String>,
}

impl LabeledDataset {
    pub fn new(features: SparseFeatureMatrix, labels: Vec<u8>, ids: Vec<String>) -> Result<Self> {
        if labels.len() != features.n_rows() || ids.len() != features.n_rows() {
            return Err(Error::Dataset(format!(
                "{} feature rows, {} labels, {} ids",
                features.n_rows(),
                labels.len(),
                ids.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Dataset(format!("label {bad} is not 0 or 1")));
        }
        Ok(LabeledDataset {
            features,
            labels,
            ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.features.n_cols
    }

    /// `[count of class 0, count of class 1]`.
    pub fn class_counts(&self) -> [usize; 2] {
        let ones = self.labels.iter().filter(|&&l| l == 1).count();
        [self.len() - ones, ones]
    }

    pub fn subset(&self, idx: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            ids: idx.iter().map(|&i| self.ids[i].clone()).collect(),
        }
    }

    pub fn select_columns(&self, columns: &[usize]) -> LabeledDataset {
        LabeledDataset {
            features: self.features.select_columns(columns),
            labels: self.labels.clone(),
            ids: self.ids.clone(),
        }
    }
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Mixes a seed with a stream index (splitmix64), for per-item derived seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Shuffled `(train, test)` index lists. Train size is `n * ratio`
/// rounded half up, clamped so both sides are non-empty.
pub fn split_indices(n: usize, train_ratio: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 2 {
        return Err(Error::Dataset(format!(
            "cannot split {n} rows; need at least 2"
        )));
    }
    if !(train_ratio > 0.0 && train_ratio < 1.0) {
        return Err(Error::invalid(format!(
            "train ratio must be in (0, 1), got {train_ratio}"
        )));
    }
    let n_train = ((n as f64 * train_ratio + 0.5).floor() as usize).clamp(1, n - 1);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng(seed));
    let test = perm.split_off(n_train);
    Ok((perm, test))
}

pub fn train_test_split(
    ds: &LabeledDataset,
    train_ratio: f64,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let (train, test) = split_indices(ds.len(), train_ratio, seed)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}

/// Fold assignments as `(train indices, validation indices)`, both ascending.
///
/// Rows are shuffled within each class, laid out class by class, and dealt
/// to folds round-robin, so fold sizes differ by at most one and each
/// class's per-fold count is the floor or ceiling of its share.
pub fn kfold_indices(
    n: usize,
    folds: usize,
    stratify_labels: Option<&[u8]>,
    seed: u64,
) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    if folds > n {
        return Err(Error::invalid(format!(
            "{folds} folds requested for {n} rows"
        )));
    }
    let mut rng = rng(seed);
    let order: Vec<usize> = match stratify_labels {
        Some(labels) => {
            if labels.len() != n {
                return Err(Error::Dataset(format!(
                    "{} stratification labels for {n} rows",
                    labels.len()
                )));
            }
            let mut order = Vec::with_capacity(n);
            for class in [0u8, 1] {
                let mut members: Vec<usize> = (0..n).filter(|&i| labels[i] == class).collect();
                members.shuffle(&mut rng);
                order.extend(members);
            }
            order
        }
        None => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            order
        }
    };
    let mut assignment = vec![0usize; n];
    for (pos, &row) in order.iter().enumerate() {
        assignment[row] = pos % folds;
    }
    Ok((0..folds)
        .map(|f| {
            let (val, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&i| assignment[i] == f);
            (train, val)
        })
        .collect())
}

/// SMOTE parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig {
            k_neighbors: 5,
            seed: 0,
        }
    }
}

/// Class with fewer rows; class 1 when the counts tie.
pub fn minority_class(ds: &LabeledDataset) -> u8 {
    let [c0, c1] = ds.class_counts();
    if c0 < c1 {
        0
    } else {
        1
    }
}

/// Nearest minority neighbours of each minority row: `(distance², index)`
/// sorted ascending with ties broken by position.
pub fn minority_neighbours(rows: &[&SparseRow], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (rows[i].sq_distance(rows[j]), j))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            d.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Grows the minority class to `target_minority_count` rows with synthetic
/// points `x + u (x' - x)`, `x'` among the k nearest minority neighbours of
/// `x` and `u ~ U(0, 1)`. Originals are kept unchanged and first; synthetic
/// rows are appended with ids `synth#{n}`.
pub fn smote(
    ds: &LabeledDataset,
    k_neighbors: usize,
    target_minority_count: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if k_neighbors == 0 {
        return Err(Error::invalid("SMOTE needs k_neighbors >= 1"));
    }
    let minority = minority_class(ds);
    let members: Vec<usize> = (0..ds.len())
        .filter(|&i| ds.labels[i] == minority)
        .collect();
    if members.len() < 2 {
        return Err(Error::Dataset("SMOTE requires ≥ 2 minority samples".into()));
    }
    if target_minority_count < members.len() {
        return Err(Error::invalid(format!(
            "SMOTE target {target_minority_count} is below the current minority count {}",
            members.len()
        )));
    }
    let needed = target_minority_count - members.len();
    if needed == 0 {
        return Ok(ds.clone());
    }
    let k = k_neighbors.min(members.len() - 1);
    let rows: Vec<&SparseRow> = members.iter().map(|&i| &ds.features.rows[i]).collect();
    let neighbours = minority_neighbours(&rows, k);

    let mut rng = rng(seed);
    let mut out = ds.clone();
    let mut synthetic = Vec::with_capacity(needed);
    for n in 0..needed {
        let x = rng.gen_range(0..rows.len());
        let nb = neighbours[x][rng.gen_range(0..k)];
        let u: f64 = rng.gen();
        synthetic.push(rows[x].interpolate(rows[nb], u));
        out.labels.push(minority);
        out.ids.push(format!("synth#{n}"));
    }
    out.features.extend_rows(synthetic);
    Ok(out)
}

/// SMOTE up to the majority count.
pub fn balance(ds: &LabeledDataset, cfg: &SmoteConfig) -> Result<LabeledDataset> {
    let counts = ds.class_counts();
    smote(ds, cfg.k_neighbors, counts[0].max(counts[1]), cfg.seed)
}
