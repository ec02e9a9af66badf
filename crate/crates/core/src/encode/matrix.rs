use std::io::{BufRead, Write};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Sparse row: strictly increasing column ids with non-zero values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseRow {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseRow {
    /// Builds a row from `(column, value)` pairs in any order. Duplicate
    /// columns are summed and zeros are dropped.
    pub fn from_pairs(mut pairs: Vec<(u32, f64)>) -> Self {
        pairs.sort_by_key(|&(c, _)| c);
        let mut row = SparseRow::default();
        for (c, v) in pairs {
            if row.indices.last() == Some(&c) {
                *row.values.last_mut().unwrap() += v;
            } else {
                row.indices.push(c);
                row.values.push(v);
            }
        }
        row.drop_zeros();
        row
    }

    /// Run-length encodes sorted column ids into counts.
    pub fn from_sorted_columns(cols: &[u32]) -> Self {
        let mut row = SparseRow::default();
        for &c in cols {
            if row.indices.last() == Some(&c) {
                *row.values.last_mut().unwrap() += 1.0;
            } else {
                row.indices.push(c);
                row.values.push(1.0);
            }
        }
        row
    }

    pub fn from_dense(dense: &[f64]) -> Self {
        let mut row = SparseRow::default();
        for (i, &v) in dense.iter().enumerate() {
            if v != 0.0 {
                row.indices.push(i as u32);
                row.values.push(v);
            }
        }
        row
    }

    fn drop_zeros(&mut self) {
        if self.values.iter().all(|&v| v != 0.0) {
            return;
        }
        let (indices, values) = self
            .indices
            .iter()
            .zip(&self.values)
            .filter(|(_, &v)| v != 0.0)
            .map(|(&c, &v)| (c, v))
            .unzip();
        self.indices = indices;
        self.values = values;
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    #[inline]
    pub fn get(&self, col: usize) -> f64 {
        match self.indices.binary_search(&(col as u32)) {
            Ok(i) => self.values[i],
            Err(_) => 0.0,
        }
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&c, &v)| (c as usize, v))
    }

    pub fn to_dense(&self, n_cols: usize) -> Vec<f64> {
        let mut d = vec![0.0; n_cols];
        for (c, v) in self.pairs() {
            d[c] = v;
        }
        d
    }

    /// Squared Euclidean distance, merged over both supports.
    pub fn sq_distance(&self, other: &SparseRow) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.nnz() || j < other.nnz() {
            let a = self.indices.get(i).copied().unwrap_or(u32::MAX);
            let b = other.indices.get(j).copied().unwrap_or(u32::MAX);
            let d = if a == b {
                let d = self.values[i] - other.values[j];
                i += 1;
                j += 1;
                d
            } else if a < b {
                i += 1;
                self.values[i - 1]
            } else {
                j += 1;
                other.values[j - 1]
            };
            acc += d * d;
        }
        acc
    }

    /// `self + t * (other - self)`, merged over both supports.
    pub fn interpolate(&self, other: &SparseRow, t: f64) -> SparseRow {
        let mut pairs = Vec::with_capacity(self.nnz() + other.nnz());
        let (mut i, mut j) = (0, 0);
        while i < self.nnz() || j < other.nnz() {
            let a = self.indices.get(i).copied().unwrap_or(u32::MAX);
            let b = other.indices.get(j).copied().unwrap_or(u32::MAX);
            let (c, x, y) = if a == b {
                i += 1;
                j += 1;
                (a, self.values[i - 1], other.values[j - 1])
            } else if a < b {
                i += 1;
                (a, self.values[i - 1], 0.0)
            } else {
                j += 1;
                (b, 0.0, other.values[j - 1])
            };
            pairs.push((c, x + t * (y - x)));
        }
        let mut row = SparseRow {
            indices: pairs.iter().map(|p| p.0).collect(),
            values: pairs.iter().map(|p| p.1).collect(),
        };
        row.drop_zeros();
        row
    }
}

/// Row-sparse feature matrix tagged with the identifier of its column space.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseFeatureMatrix {
    pub n_cols: usize,
    pub rows: Vec<SparseRow>,
    space: String,
}

impl SparseFeatureMatrix {
    pub fn new(n_cols: usize, rows: Vec<SparseRow>, space: String) -> Self {
        debug_assert!(rows
            .iter()
            .all(|r| r.indices.last().is_none_or(|&c| (c as usize) < n_cols)));
        SparseFeatureMatrix {
            n_cols,
            rows,
            space,
        }
    }

    /// Checks the structural invariants; used on externally supplied data.
    pub fn validated(n_cols: usize, rows: Vec<SparseRow>, space: String) -> Result<Self> {
        for (r, row) in rows.iter().enumerate() {
            if row.indices.len() != row.values.len() {
                return Err(Error::Dataset(format!(
                    "row {r}: index/value length mismatch"
                )));
            }
            if row.indices.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Dataset(format!(
                    "row {r}: column ids not strictly increasing"
                )));
            }
            if row.indices.last().is_some_and(|&c| c as usize >= n_cols) {
                return Err(Error::Dataset(format!("row {r}: column id out of range")));
            }
            if row.values.iter().any(|&v| v == 0.0 || !v.is_finite()) {
                return Err(Error::Dataset(format!(
                    "row {r}: stored values must be finite and non-zero"
                )));
            }
        }
        Ok(SparseFeatureMatrix {
            n_cols,
            rows,
            space,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn space(&self) -> &str {
        &self.space
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).sum()
    }

    pub fn select_rows(&self, idx: &[usize]) -> SparseFeatureMatrix {
        SparseFeatureMatrix {
            n_cols: self.n_cols,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            space: self.space.clone(),
        }
    }

    /// Projects onto `columns`; new column `j` is old column `columns[j]`.
    pub fn select_columns(&self, columns: &[usize]) -> SparseFeatureMatrix {
        let mut remap = std::collections::HashMap::with_capacity(columns.len());
        for (new, &old) in columns.iter().enumerate() {
            remap.insert(old as u32, new as u32);
        }
        let rows = self
            .rows
            .iter()
            .map(|row| {
                SparseRow::from_pairs(
                    row.pairs()
                        .filter_map(|(c, v)| remap.get(&(c as u32)).map(|&n| (n, v)))
                        .collect(),
                )
            })
            .collect();
        SparseFeatureMatrix {
            n_cols: columns.len(),
            rows,
            space: projected_space(&self.space, columns),
        }
    }

    /// Appends rows of another matrix over the same column space.
    pub fn extend_rows(&mut self, rows: impl IntoIterator<Item = SparseRow>) {
        self.rows.extend(rows);
    }

    /// `row<TAB>col<TAB>value` triplets with a header line.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "row\tcol\tvalue")?;
        for (r, row) in self.rows.iter().enumerate() {
            for (c, v) in row.pairs() {
                writeln!(out, "{r}\t{c}\t{v}")?;
            }
        }
        Ok(())
    }

    pub fn read_triplets<R: BufRead>(
        input: R,
        n_rows: usize,
        n_cols: usize,
        space: String,
    ) -> Result<Self> {
        let mut pairs: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_rows];
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if n == 0 && line.starts_with("row") {
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            let bad = || {
                Error::Dataset(format!(
                    "matrix line {}: expected 'row<TAB>col<TAB>value'",
                    n + 1
                ))
            };
            let mut f = line.split('\t');
            let r: usize = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let c: u32 = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let v: f64 = f.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if r >= n_rows || c as usize >= n_cols {
                return Err(Error::Dataset(format!(
                    "matrix line {}: cell ({r},{c}) outside {n_rows}x{n_cols}",
                    n + 1
                )));
            }
            pairs[r].push((c, v));
        }
        let rows = pairs.into_iter().map(SparseRow::from_pairs).collect();
        SparseFeatureMatrix::validated(n_cols, rows, space)
    }
}

/// Identifier of a derived column space.
pub fn space_id(descriptor: &str) -> String {
    hex::encode(&Sha256::digest(descriptor.as_bytes())[..8])
}

fn projected_space(parent: &str, columns: &[usize]) -> String {
    let cols: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    space_id(&format!("{parent}|columns={}", cols.join(",")))
}

/// Column-major view used by the tree learners.
#[derive(Debug, Clone)]
pub struct ColumnIndex {
    pub columns: Vec<Vec<(u32, f64)>>,
}

impl ColumnIndex {
    pub fn build(m: &SparseFeatureMatrix) -> Self {
        let mut columns = vec![Vec::new(); m.n_cols];
        for (r, row) in m.rows.iter().enumerate() {
            for (c, v) in row.pairs() {
                columns[c].push((r as u32, v));
            }
        }
        ColumnIndex { columns }
    }
}
