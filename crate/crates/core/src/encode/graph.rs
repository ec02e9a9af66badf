//! De Bruijn-style k-mer co-occurrence graphs.
//!
//! An edge `(u, v)` between adjacent windows is the same object as the
//! (k+1)-mer `u + last(v)`, so the weight vector of a record's graph over a
//! (k+1)-mer dictionary is exactly that record's (k+1)-mer count row.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::kmer::{check_k, kmer_windows, unpack_kmer, KmerDictionary};
use super::matrix::{SparseFeatureMatrix, SparseRow};
use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerGraph {
    pub k: usize,
    pub nodes: BTreeSet<u64>,
    /// `(from, to) -> number of times the pair occurs at adjacent positions`.
    pub edges: BTreeMap<(u64, u64), u32>,
}

impl KmerGraph {
    pub fn total_weight(&self) -> u64 {
        self.edges.values().map(|&w| w as u64).sum()
    }

    pub fn node_labels(&self) -> Vec<String> {
        self.nodes.iter().map(|&c| unpack_kmer(c, self.k)).collect()
    }

    pub fn edge_weight(&self, from: &str, to: &str) -> u32 {
        match (
            super::kmer::pack_kmer(from.as_bytes()),
            super::kmer::pack_kmer(to.as_bytes()),
        ) {
            (Some(u), Some(v)) => self.edges.get(&(u, v)).copied().unwrap_or(0),
            _ => 0,
        }
    }

    /// The (k+1)-mer spelled by edge `(u, v)`.
    #[inline]
    pub fn edge_kmer(u: u64, v: u64) -> u64 {
        (u << 2) | (v & 3)
    }
}

pub fn build_kmer_graph(residues: &[u8], k: usize) -> Result<KmerGraph> {
    check_k(k)?;
    let mut nodes = BTreeSet::new();
    let mut edges = BTreeMap::new();
    let mut prev: Option<(usize, u64)> = None;
    for (pos, code) in kmer_windows(residues, k) {
        nodes.insert(code);
        if let Some((ppos, pcode)) = prev {
            if ppos + 1 == pos {
                *edges.entry((pcode, code)).or_insert(0) += 1;
            }
        }
        prev = Some((pos, code));
    }
    Ok(KmerGraph { k, nodes, edges })
}

/// Edge-weight vectors over a dictionary of (k+1)-mers.
pub fn encode_graph_features(
    records: &[SequenceRecord],
    k: usize,
    edge_dict: &KmerDictionary,
) -> Result<SparseFeatureMatrix> {
    if edge_dict.k() != k + 1 {
        return Err(Error::invalid(format!(
            "graph features over k={k} need a dictionary of {}-mers, got {}-mers",
            k + 1,
            edge_dict.k()
        )));
    }
    let rows: Result<Vec<SparseRow>> = records
        .par_iter()
        .map(|rec| {
            let graph = build_kmer_graph(&rec.residues, k)?;
            let pairs = graph
                .edges
                .iter()
                .filter_map(|(&(u, v), &w)| {
                    edge_dict
                        .column(KmerGraph::edge_kmer(u, v))
                        .map(|c| (c, w as f64))
                })
                .collect();
            Ok(SparseRow::from_pairs(pairs))
        })
        .collect();
    Ok(SparseFeatureMatrix::new(
        edge_dict.len(),
        rows?,
        edge_dict.hash().to_string(),
    ))
}
