//! Exact greedy tree growth over sparse rows, shared by the Gini learners
//! and the second-order boosting learner.
//!
//! Per-row statistics are `[a, b, weight]` triples: class weights
//! `[w0, w1, w]` for Gini, gradient sums `[g, h, n]` for boosting. Candidate
//! thresholds are midpoints between consecutive distinct values present in
//! the node; ties in gain go to the lowest feature id, then the lowest
//! threshold.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustc_hash::FxHashMap;

use super::{LeafValue, Node, Tree};
use crate::encode::{ColumnIndex, SparseFeatureMatrix};

pub(crate) type Stats = [f64; 3];

#[inline]
fn add(a: &mut Stats, b: &Stats, w: f64) {
    a[0] += b[0] * w;
    a[1] += b[1] * w;
    a[2] += b[2] * w;
}

#[inline]
fn sub(a: &Stats, b: &Stats) -> Stats {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Objective {
    Gini,
    Newton { lambda: f64 },
}

impl Objective {
    fn gini(s: &Stats) -> f64 {
        if s[2] <= 0.0 {
            return 0.0;
        }
        let p0 = s[0] / s[2];
        let p1 = s[1] / s[2];
        1.0 - p0 * p0 - p1 * p1
    }

    pub(crate) fn gain(&self, parent: &Stats, left: &Stats, right: &Stats) -> f64 {
        match *self {
            Objective::Gini => {
                let w = parent[2];
                Self::gini(parent)
                    - left[2] / w * Self::gini(left)
                    - right[2] / w * Self::gini(right)
            }
            Objective::Newton { lambda } => {
                let score = |s: &Stats| s[0] * s[0] / (s[1] + lambda);
                0.5 * (score(left) + score(right) - score(parent))
            }
        }
    }

    fn leaf(&self, s: &Stats) -> LeafValue {
        match *self {
            Objective::Gini => LeafValue::Proba([s[0] / s[2], s[1] / s[2]]),
            Objective::Newton { lambda } => LeafValue::Score(-s[0] / (s[1] + lambda)),
        }
    }

    fn is_pure(&self, s: &Stats) -> bool {
        match self {
            Objective::Gini => s[0] <= 0.0 || s[1] <= 0.0,
            Objective::Newton { .. } => false,
        }
    }

    fn accepts(&self, gain: f64) -> bool {
        match self {
            // zero-gain splits are needed to separate XOR-like structure
            Objective::Gini => gain >= 0.0,
            Objective::Newton { .. } => gain > 0.0,
        }
    }
}

pub(crate) struct GrowParams {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features examined per node; `None` examines every feature.
    pub mtry: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
}

/// Gains closer than this are ties, so rounding noise cannot override the
/// feature-id and threshold order.
const GAIN_TIE: f64 = 1e-12;

impl Candidate {
    fn better_than(&self, other: &Option<Candidate>) -> bool {
        match other {
            None => true,
            Some(o) => {
                self.gain > o.gain + GAIN_TIE
                    || ((self.gain - o.gain).abs() <= GAIN_TIE
                        && (self.feature < o.feature
                            || (self.feature == o.feature && self.threshold < o.threshold)))
            }
        }
    }
}

/// Lazy Fisher-Yates over `0..n` that only materializes touched slots.
struct LazyShuffle {
    n: usize,
    drawn: usize,
    swapped: FxHashMap<usize, usize>,
}

impl LazyShuffle {
    fn new(n: usize) -> Self {
        LazyShuffle {
            n,
            drawn: 0,
            swapped: FxHashMap::default(),
        }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> Option<usize> {
        if self.drawn == self.n {
            return None;
        }
        let i = self.drawn;
        let j = rng.gen_range(i..self.n);
        let vi = *self.swapped.get(&i).unwrap_or(&i);
        let vj = *self.swapped.get(&j).unwrap_or(&j);
        self.swapped.insert(j, vi);
        self.drawn += 1;
        Some(vj)
    }
}

pub(crate) struct TreeGrower<'a> {
    data: &'a SparseFeatureMatrix,
    columns: &'a ColumnIndex,
    row_stats: &'a [Stats],
    objective: Objective,
    params: &'a GrowParams,
    avg_row_nnz: f64,
    // scratch, indexed by row / column
    node_weight: Vec<f64>,
    col_mark: Vec<bool>,
}

struct Pending {
    samples: Vec<(u32, f64)>,
    depth: usize,
    parent: Option<(usize, bool)>,
}

impl<'a> TreeGrower<'a> {
    pub fn new(
        data: &'a SparseFeatureMatrix,
        columns: &'a ColumnIndex,
        row_stats: &'a [Stats],
        objective: Objective,
        params: &'a GrowParams,
    ) -> Self {
        let avg_row_nnz = if data.n_rows() == 0 {
            0.0
        } else {
            data.nnz() as f64 / data.n_rows() as f64
        };
        TreeGrower {
            data,
            columns,
            row_stats,
            objective,
            params,
            avg_row_nnz,
            node_weight: vec![0.0; data.n_rows()],
            col_mark: Vec::new(),
        }
    }

    /// Grows one tree from weighted samples `(row, weight)` with distinct rows.
    pub fn grow(&mut self, samples: Vec<(u32, f64)>, rng: &mut ChaCha8Rng) -> Tree {
        let mut nodes: Vec<Node> = Vec::new();
        let mut stack = vec![Pending {
            samples,
            depth: 0,
            parent: None,
        }];
        while let Some(Pending {
            samples,
            depth,
            parent,
        }) = stack.pop()
        {
            let id = nodes.len();
            if let Some((p, is_left)) = parent {
                if let Node::Split { left, right, .. } = &mut nodes[p] {
                    if is_left {
                        *left = id as u32;
                    } else {
                        *right = id as u32;
                    }
                }
            }
            let mut total = [0.0; 3];
            for &(r, w) in &samples {
                add(&mut total, &self.row_stats[r as usize], w);
            }
            let min_leaf = self.params.min_samples_leaf as f64;
            let stop = self.params.max_depth.is_some_and(|d| depth >= d)
                || total[2] < 2.0 * min_leaf
                || self.objective.is_pure(&total);
            let best = if stop {
                None
            } else {
                self.best_split(&samples, &total, rng)
            };
            match best {
                None => nodes.push(Node::Leaf {
                    value: self.objective.leaf(&total),
                    cover: total[2],
                }),
                Some(c) => {
                    let (left, right): (Vec<_>, Vec<_>) =
                        samples.into_iter().partition(|&(r, _)| {
                            self.data.rows[r as usize].get(c.feature) <= c.threshold
                        });
                    nodes.push(Node::Split {
                        feature: c.feature as u32,
                        threshold: c.threshold,
                        left: 0,
                        right: 0,
                        cover: total[2],
                    });
                    stack.push(Pending {
                        samples: right,
                        depth: depth + 1,
                        parent: Some((id, false)),
                    });
                    stack.push(Pending {
                        samples: left,
                        depth: depth + 1,
                        parent: Some((id, true)),
                    });
                }
            }
        }
        Tree { nodes }
    }

    fn best_split(
        &mut self,
        samples: &[(u32, f64)],
        total: &Stats,
        rng: &mut ChaCha8Rng,
    ) -> Option<Candidate> {
        for &(r, w) in samples {
            self.node_weight[r as usize] = w;
        }
        let n_cols = self.data.n_cols;
        let mut best: Option<Candidate> = None;
        match self.params.mtry {
            Some(mtry) if mtry < n_cols => {
                let node_nnz: usize = samples
                    .iter()
                    .map(|&(r, _)| self.data.rows[r as usize].nnz())
                    .sum();
                let mut evaluated = 0;
                if node_nnz < n_cols / 4 {
                    // draw only among columns present in the node; absent ones are constant
                    let pool = self.node_columns(samples);
                    let mut order = LazyShuffle::new(pool.len());
                    while evaluated < mtry {
                        let Some(i) = order.next(rng) else { break };
                        if let Some(found) = self.evaluate(pool[i], samples, total, &mut best) {
                            evaluated += found as usize;
                        }
                    }
                } else {
                    let mut order = LazyShuffle::new(n_cols);
                    while evaluated < mtry {
                        let Some(f) = order.next(rng) else { break };
                        if let Some(found) = self.evaluate(f, samples, total, &mut best) {
                            evaluated += found as usize;
                        }
                    }
                }
            }
            _ => {
                for f in 0..n_cols {
                    self.evaluate(f, samples, total, &mut best);
                }
            }
        }
        for &(r, _) in samples {
            self.node_weight[r as usize] = 0.0;
        }
        best
    }

    fn node_columns(&mut self, samples: &[(u32, f64)]) -> Vec<usize> {
        if self.col_mark.len() != self.data.n_cols {
            self.col_mark = vec![false; self.data.n_cols];
        }
        let mut pool = Vec::new();
        for &(r, _) in samples {
            for &c in &self.data.rows[r as usize].indices {
                if !self.col_mark[c as usize] {
                    self.col_mark[c as usize] = true;
                    pool.push(c as usize);
                }
            }
        }
        for &c in &pool {
            self.col_mark[c] = false;
        }
        pool.sort_unstable();
        pool
    }

    /// Scans one feature. Returns `None` when the feature is constant in the
    /// node, otherwise `Some(true)`; updates `best` in place.
    fn evaluate(
        &self,
        feature: usize,
        samples: &[(u32, f64)],
        total: &Stats,
        best: &mut Option<Candidate>,
    ) -> Option<bool> {
        let column = &self.columns.columns[feature];
        let lookup_cost = samples.len() as f64 * (self.avg_row_nnz + 1.0).log2().max(1.0);
        let mut entries: Vec<(f64, u32, f64)> = Vec::new();
        if (column.len() as f64) <= lookup_cost {
            for &(r, v) in column {
                let w = self.node_weight[r as usize];
                if w > 0.0 {
                    entries.push((v, r, w));
                }
            }
        } else {
            for &(r, w) in samples {
                let v = self.data.rows[r as usize].get(feature);
                if v != 0.0 {
                    entries.push((v, r, w));
                }
            }
        }
        let mut nonzero = [0.0; 3];
        for &(_, r, w) in &entries {
            add(&mut nonzero, &self.row_stats[r as usize], w);
        }
        let zero_block = sub(total, &nonzero);
        let has_zero = zero_block[2] > 1e-12;
        if entries.is_empty() {
            return None;
        }
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        if !has_zero && entries[0].0 == entries[entries.len() - 1].0 {
            return None;
        }

        // (value, stats) groups in ascending value order, zero block in place
        let first_positive = entries.partition_point(|e| e.0 < 0.0);
        let min_leaf = self.params.min_samples_leaf as f64;
        let mut left = [0.0; 3];
        let mut prev: Option<f64> = None;
        let mut consider = |value: f64, left: &Stats, prev: Option<f64>| {
            if let Some(p) = prev {
                if value > p {
                    let right = sub(total, left);
                    if left[2] >= min_leaf && right[2] >= min_leaf {
                        let gain = self.objective.gain(total, left, &right);
                        if self.objective.accepts(gain) {
                            let mut threshold = p + (value - p) / 2.0;
                            if threshold >= value {
                                threshold = p;
                            }
                            let cand = Candidate {
                                gain,
                                feature,
                                threshold,
                            };
                            if cand.better_than(best) {
                                *best = Some(cand);
                            }
                        }
                    }
                }
            }
        };
        let mut i = 0;
        let mut zero_done = !has_zero;
        loop {
            let next_is_zero = !zero_done && i == first_positive;
            let value = if next_is_zero {
                0.0
            } else if i < entries.len() {
                entries[i].0
            } else {
                break;
            };
            consider(value, &left, prev);
            if next_is_zero {
                add(&mut left, &zero_block, 1.0);
                zero_done = true;
            } else {
                while i < entries.len() && entries[i].0 == value {
                    let (_, r, w) = entries[i];
                    add(&mut left, &self.row_stats[r as usize], w);
                    i += 1;
                }
            }
            prev = Some(value);
        }
        Some(true)
    }
}
