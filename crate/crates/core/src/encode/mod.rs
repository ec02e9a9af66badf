//! Sequence vectorization: ordinal, one-hot, k-mer counts, k-mer graphs and
//! channel images, all delivered as [`SparseFeatureMatrix`] rows.

mod graph;
mod kmer;
mod matrix;
mod positional;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use graph::{build_kmer_graph, encode_graph_features, KmerGraph};
pub use kmer::{
    base_code, build_kmer_dictionary, check_k, encode_kmer_counts, extract_kmers, kmer_windows,
    pack_kmer, unpack_kmer, KmerDictionary, KmerWindows, MAX_K,
};
pub use matrix::{space_id, ColumnIndex, SparseFeatureMatrix, SparseRow};
pub use positional::{
    encode_image, encode_onehot, encode_sequential, onehot_row, sequential_value, square_side,
    ChannelImage, CHANNEL_ORDER,
};

use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;

/// Encoding scheme and its parameters. `None` sizes are derived from the
/// corpus by [`EncodingScheme::resolve`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase")]
pub enum EncodingScheme {
    Sequential {
        max_len: Option<usize>,
    },
    Onehot {
        max_len: Option<usize>,
    },
    Kmer {
        k: usize,
        min_count: u64,
    },
    Graph {
        k: usize,
        min_count: u64,
    },
    Image {
        width: Option<usize>,
        height: Option<usize>,
    },
}

impl EncodingScheme {
    pub fn name(&self) -> &'static str {
        match self {
            EncodingScheme::Sequential { .. } => "sequential",
            EncodingScheme::Onehot { .. } => "onehot",
            EncodingScheme::Kmer { .. } => "kmer",
            EncodingScheme::Graph { .. } => "graph",
            EncodingScheme::Image { .. } => "image",
        }
    }

    /// Fills unset sizes: positional length = longest record, image = the
    /// smallest square covering the longest record.
    pub fn resolve(&self, records: &[SequenceRecord]) -> EncodingScheme {
        let longest = records
            .iter()
            .map(SequenceRecord::len)
            .max()
            .unwrap_or(1)
            .max(1);
        match *self {
            EncodingScheme::Sequential { max_len } => EncodingScheme::Sequential {
                max_len: Some(max_len.unwrap_or(longest)),
            },
            EncodingScheme::Onehot { max_len } => EncodingScheme::Onehot {
                max_len: Some(max_len.unwrap_or(longest)),
            },
            EncodingScheme::Image { width, height } => {
                let side = square_side(longest);
                EncodingScheme::Image {
                    width: Some(width.unwrap_or(side)),
                    height: Some(height.unwrap_or(side)),
                }
            }
            ref other => other.clone(),
        }
    }

    /// Canonical one-line description, e.g. `kmer k=19 min_count=2`.
    pub fn describe(&self) -> String {
        let opt = |v: Option<usize>| v.map_or("auto".to_string(), |v| v.to_string());
        match *self {
            EncodingScheme::Sequential { max_len } => {
                format!("sequential max_len={}", opt(max_len))
            }
            EncodingScheme::Onehot { max_len } => format!("onehot max_len={}", opt(max_len)),
            EncodingScheme::Kmer { k, min_count } => format!("kmer k={k} min_count={min_count}"),
            EncodingScheme::Graph { k, min_count } => format!("graph k={k} min_count={min_count}"),
            EncodingScheme::Image { width, height } => {
                format!("image width={} height={}", opt(width), opt(height))
            }
        }
    }
}

/// A corpus encoded under a resolved scheme.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub scheme: EncodingScheme,
    pub matrix: SparseFeatureMatrix,
    /// Present for the `kmer` and `graph` schemes.
    pub dictionary: Option<KmerDictionary>,
}

impl EncodedCorpus {
    /// Human-readable name of a column.
    pub fn column_label(&self, col: usize) -> String {
        match (&self.scheme, &self.dictionary) {
            (_, Some(d)) => d.kmer(col),
            (EncodingScheme::Onehot { .. }, None) => {
                const ROW_BASES: [char; 4] = ['G', 'C', 'T', 'A'];
                format!("pos{}:{}", col / 4, ROW_BASES[col % 4])
            }
            (
                EncodingScheme::Image {
                    width: Some(w),
                    height: Some(h),
                    ..
                },
                None,
            ) => {
                let plane = w * h;
                format!("{}@{}", CHANNEL_ORDER[col / plane] as char, col % plane)
            }
            _ => format!("pos{col}"),
        }
    }
}

/// Encodes every record with one scheme; rows follow record order.
pub fn encode_corpus(records: &[SequenceRecord], scheme: &EncodingScheme) -> Result<EncodedCorpus> {
    let scheme = scheme.resolve(records);
    let space = space_id(&scheme.describe());
    let (matrix, dictionary) = match scheme {
        EncodingScheme::Sequential {
            max_len: Some(max_len),
        } => {
            let rows: Result<Vec<_>> = records
                .par_iter()
                .map(|r| {
                    Ok(SparseRow::from_dense(&encode_sequential(
                        &r.residues,
                        max_len,
                    )?))
                })
                .collect();
            (SparseFeatureMatrix::new(max_len, rows?, space), None)
        }
        EncodingScheme::Onehot {
            max_len: Some(max_len),
        } => {
            let rows: Result<Vec<_>> = records
                .par_iter()
                .map(|r| {
                    let flat: Vec<f64> = encode_onehot(&r.residues, max_len)?
                        .iter()
                        .flat_map(|row| row.iter().map(|&v| v as f64))
                        .collect();
                    Ok(SparseRow::from_dense(&flat))
                })
                .collect();
            (SparseFeatureMatrix::new(max_len * 4, rows?, space), None)
        }
        EncodingScheme::Image {
            width: Some(w),
            height: Some(h),
        } => {
            let rows: Result<Vec<_>> = records
                .par_iter()
                .map(|r| {
                    Ok(SparseRow::from_dense(
                        &encode_image(&r.residues, w, h)?.flatten(),
                    ))
                })
                .collect();
            (SparseFeatureMatrix::new(4 * w * h, rows?, space), None)
        }
        EncodingScheme::Kmer { k, min_count } => {
            let dict = build_kmer_dictionary(records, k, min_count)?;
            (encode_kmer_counts(records, &dict), Some(dict))
        }
        EncodingScheme::Graph { k, min_count } => {
            if k + 1 > MAX_K {
                return Err(Error::invalid(format!(
                    "graph scheme needs k <= {}",
                    MAX_K - 1
                )));
            }
            let dict = build_kmer_dictionary(records, k + 1, min_count)?;
            (encode_graph_features(records, k, &dict)?, Some(dict))
        }
        _ => unreachable!("resolve fills every size"),
    };
    Ok(EncodedCorpus {
        scheme,
        matrix,
        dictionary,
    })
}
