//! 2-bit packed k-mers, corpus dictionaries and count encoding.

use std::io::{BufRead, Write};

use rayon::prelude::*;
use rustc_hash::FxHashMap;
use sha2::{Digest, Sha256};

use super::matrix::{SparseFeatureMatrix, SparseRow};
use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;

/// Largest k representable in a packed `u64`.
pub const MAX_K: usize = 32;

/// `A=0, C=1, G=2, T=3`, so numeric order of packed k-mers equals
/// lexicographic order of the strings.
#[inline]
pub fn base_code(b: u8) -> Option<u64> {
    match b {
        b'A' => Some(0),
        b'C' => Some(1),
        b'G' => Some(2),
        b'T' => Some(3),
        _ => None,
    }
}

const BASES: [u8; 4] = *b"ACGT";

pub fn check_k(k: usize) -> Result<()> {
    if k == 0 || k > MAX_K {
        return Err(Error::invalid(format!("k must be in 1..={MAX_K}, got {k}")));
    }
    Ok(())
}

#[inline]
fn mask(k: usize) -> u64 {
    if k == 32 {
        u64::MAX
    } else {
        (1u64 << (2 * k)) - 1
    }
}

pub fn pack_kmer(kmer: &[u8]) -> Option<u64> {
    if kmer.is_empty() || kmer.len() > MAX_K {
        return None;
    }
    kmer.iter()
        .try_fold(0u64, |acc, &b| Some((acc << 2) | base_code(b)?))
}

pub fn unpack_kmer(code: u64, k: usize) -> String {
    (0..k)
        .map(|i| BASES[((code >> (2 * (k - 1 - i))) & 3) as usize] as char)
        .collect()
}

/// Rolling iterator over `(position, packed k-mer)` for every window free of `N`.
pub struct KmerWindows<'a> {
    seq: &'a [u8],
    k: usize,
    pos: usize,
    code: u64,
    valid: usize,
}

impl<'a> KmerWindows<'a> {
    pub fn new(seq: &'a [u8], k: usize) -> Self {
        assert!((1..=MAX_K).contains(&k), "k out of range");
        KmerWindows {
            seq,
            k,
            pos: 0,
            code: 0,
            valid: 0,
        }
    }
}

impl Iterator for KmerWindows<'_> {
    type Item = (usize, u64);

    fn next(&mut self) -> Option<Self::Item> {
        while self.pos < self.seq.len() {
            let b = self.seq[self.pos];
            self.pos += 1;
            match base_code(b) {
                Some(c) => {
                    self.code = ((self.code << 2) | c) & mask(self.k);
                    self.valid += 1;
                    if self.valid >= self.k {
                        return Some((self.pos - self.k, self.code));
                    }
                }
                None => {
                    self.valid = 0;
                    self.code = 0;
                }
            }
        }
        None
    }
}

pub fn kmer_windows(seq: &[u8], k: usize) -> KmerWindows<'_> {
    KmerWindows::new(seq, k)
}

/// All clean length-`k` windows of `residues`, in order.
pub fn extract_kmers(residues: &[u8], k: usize) -> Result<Vec<String>> {
    check_k(k)?;
    Ok(kmer_windows(residues, k)
        .map(|(_, c)| unpack_kmer(c, k))
        .collect())
}

fn count_corpus(records: &[SequenceRecord], k: usize) -> FxHashMap<u64, u64> {
    records
        .par_iter()
        .fold(FxHashMap::default, |mut counts, rec| {
            for (_, code) in kmer_windows(&rec.residues, k) {
                *counts.entry(code).or_insert(0) += 1;
            }
            counts
        })
        .reduce(FxHashMap::default, |mut a, b| {
            let (mut big, small) = if a.len() >= b.len() {
                (a, b)
            } else {
                (b, std::mem::take(&mut a))
            };
            for (code, n) in small {
                *big.entry(code).or_insert(0) += n;
            }
            big
        })
}

/// Maps k-mers to dense column ids in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerDictionary {
    k: usize,
    min_count: u64,
    kmers: Vec<u64>,
    hash: String,
}

impl KmerDictionary {
    /// Builds a dictionary from an explicit k-mer list. Duplicates are removed.
    pub fn from_kmers(
        k: usize,
        min_count: u64,
        kmers: impl IntoIterator<Item = u64>,
    ) -> Result<Self> {
        check_k(k)?;
        let mut kmers: Vec<u64> = kmers.into_iter().collect();
        if let Some(bad) = kmers.iter().find(|&&c| c > mask(k)) {
            return Err(Error::invalid(format!(
                "k-mer code {bad} does not fit k={k}"
            )));
        }
        kmers.sort_unstable();
        kmers.dedup();
        let hash = dictionary_hash(k, &kmers);
        Ok(KmerDictionary {
            k,
            min_count,
            kmers,
            hash,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn len(&self) -> usize {
        self.kmers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kmers.is_empty()
    }

    /// Stable identifier of the column space, used to bind models to features.
    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn column(&self, code: u64) -> Option<u32> {
        self.kmers.binary_search(&code).ok().map(|i| i as u32)
    }

    pub fn column_of(&self, kmer: &str) -> Option<u32> {
        if kmer.len() != self.k {
            return None;
        }
        pack_kmer(kmer.as_bytes()).and_then(|c| self.column(c))
    }

    pub fn kmer_code(&self, column: usize) -> u64 {
        self.kmers[column]
    }

    pub fn kmer(&self, column: usize) -> String {
        unpack_kmer(self.kmers[column], self.k)
    }

    /// `(k-mer, column)` pairs in column order.
    pub fn entries(&self) -> impl Iterator<Item = (String, usize)> + '_ {
        self.kmers
            .iter()
            .enumerate()
            .map(|(i, &c)| (unpack_kmer(c, self.k), i))
    }

    /// One `kmer<TAB>column` line per entry, lexicographic order.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> Result<()> {
        for (kmer, col) in self.entries() {
            writeln!(out, "{kmer}\t{col}")?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, min_count: u64) -> Result<Self> {
        let mut kmers = Vec::new();
        let mut k = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = || {
                Error::Dataset(format!(
                    "dictionary line {}: expected 'kmer<TAB>column'",
                    n + 1
                ))
            };
            let (kmer, col) = line.split_once('\t').ok_or_else(bad)?;
            let col: usize = col.trim().parse().map_err(|_| bad())?;
            if col != kmers.len() {
                return Err(Error::Dataset(format!(
                    "dictionary line {}: column {col} out of order (expected {})",
                    n + 1,
                    kmers.len()
                )));
            }
            let code = pack_kmer(kmer.as_bytes()).ok_or_else(bad)?;
            match k {
                None => k = Some(kmer.len()),
                Some(k) if k != kmer.len() => return Err(bad()),
                _ => {}
            }
            kmers.push(code);
        }
        let k = k.ok_or_else(|| Error::Dataset("dictionary file is empty".into()))?;
        let dict = KmerDictionary::from_kmers(k, min_count, kmers.iter().copied())?;
        if dict.kmers != kmers {
            return Err(Error::Dataset(
                "dictionary entries are not in lexicographic order".into(),
            ));
        }
        Ok(dict)
    }
}

fn dictionary_hash(k: usize, kmers: &[u64]) -> String {
    let mut h = Sha256::new();
    h.update(format!("kmer-dictionary k={k}\n"));
    for &c in kmers {
        h.update(unpack_kmer(c, k));
        h.update(b"\n");
    }
    hex::encode(&h.finalize()[..8])
}

/// Keeps every k-mer whose total corpus count is at least `min_count`.
pub fn build_kmer_dictionary(
    corpus: &[SequenceRecord],
    k: usize,
    min_count: u64,
) -> Result<KmerDictionary> {
    check_k(k)?;
    if min_count == 0 {
        return Err(Error::invalid("min_count must be at least 1"));
    }
    let counts = count_corpus(corpus, k);
    let kept = counts
        .into_iter()
        .filter(|&(_, n)| n >= min_count)
        .map(|(c, _)| c);
    let dict = KmerDictionary::from_kmers(k, min_count, kept)?;
    if dict.is_empty() {
        return Err(Error::EmptyDictionary { k, min_count });
    }
    Ok(dict)
}

pub(crate) fn count_row(residues: &[u8], dict: &KmerDictionary) -> SparseRow {
    let mut cols: Vec<u32> = kmer_windows(residues, dict.k())
        .filter_map(|(_, c)| dict.column(c))
        .collect();
    cols.sort_unstable();
    SparseRow::from_sorted_columns(&cols)
}

/// One row per record holding the dictionary k-mer counts.
pub fn encode_kmer_counts(
    records: &[SequenceRecord],
    dict: &KmerDictionary,
) -> SparseFeatureMatrix {
    let rows = records
        .par_iter()
        .map(|r| count_row(&r.residues, dict))
        .collect();
    SparseFeatureMatrix::new(dict.len(), rows, dict.hash().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn recs(seqs: &[&str]) -> Vec<SequenceRecord> {
        seqs.iter()
            .enumerate()
            .map(|(i, s)| SequenceRecord::new(format!("r{i}"), "", s.as_bytes()))
            .collect()
    }

    #[test]
    fn pack_roundtrip_and_order() {
        assert_eq!(unpack_kmer(pack_kmer(b"GATTACA").unwrap(), 7), "GATTACA");
        assert!(pack_kmer(b"AAC").unwrap() < pack_kmer(b"ACA").unwrap());
        assert_eq!(pack_kmer(b"ANA"), None);
        let t32 = "T".repeat(32);
        assert_eq!(pack_kmer(t32.as_bytes()), Some(u64::MAX));
    }

    #[test]
    fn figure_three_windows() {
        assert_eq!(
            extract_kmers(b"ATCGCA", 3).unwrap(),
            vec!["ATC", "TCG", "CGC", "GCA"]
        );
        assert!(extract_kmers(b"AA", 3).unwrap().is_empty());
        assert!(extract_kmers(b"ANA", 2).unwrap().is_empty());
        assert!(extract_kmers(b"ACGT", 0).is_err());
        assert!(extract_kmers(b"ACGT", 33).is_err());
    }

    #[test]
    fn windows_restart_after_n() {
        let got = extract_kmers(b"ACGNTTGA", 3).unwrap();
        assert_eq!(got, vec!["ACG", "TTG", "TGA"]);
    }

    #[test]
    fn dictionary_examples() {
        let d = build_kmer_dictionary(&recs(&["ATCGCA"]), 3, 1).unwrap();
        let entries: Vec<_> = d.entries().collect();
        assert_eq!(
            entries,
            vec![
                ("ATC".into(), 0),
                ("CGC".into(), 1),
                ("GCA".into(), 2),
                ("TCG".into(), 3)
            ]
        );
        let d = build_kmer_dictionary(&recs(&["AAAA"]), 2, 1).unwrap();
        assert_eq!(d.entries().collect::<Vec<_>>(), vec![("AA".to_string(), 0)]);
        assert!(matches!(
            build_kmer_dictionary(&recs(&["ATCGCA"]), 3, 2),
            Err(Error::EmptyDictionary { .. })
        ));
    }

    #[test]
    fn count_examples() {
        let corpus = recs(&["ATCGCA"]);
        let d = build_kmer_dictionary(&corpus, 3, 1).unwrap();
        let m = encode_kmer_counts(&corpus, &d);
        assert_eq!(
            m.rows[0].pairs().collect::<Vec<_>>(),
            vec![(0, 1.0), (1, 1.0), (2, 1.0), (3, 1.0)]
        );

        let d = build_kmer_dictionary(&recs(&["AAAA"]), 2, 1).unwrap();
        let m = encode_kmer_counts(&recs(&["AAAA", "CCCC"]), &d);
        assert_eq!(m.rows[0].pairs().collect::<Vec<_>>(), vec![(0, 3.0)]);
        assert_eq!(m.rows[1].nnz(), 0);
        assert_eq!(m.space(), d.hash());
    }

    #[test]
    fn dictionary_tsv_roundtrip() {
        let d = build_kmer_dictionary(&recs(&["ATCGCAGGT", "TTTACG"]), 3, 1).unwrap();
        let mut buf = Vec::new();
        d.write_tsv(&mut buf).unwrap();
        let back = KmerDictionary::read_tsv(&buf[..], 1).unwrap();
        assert_eq!(back, d);
        assert!(KmerDictionary::read_tsv(&b"ACG\t1\n"[..], 1).is_err());
    }

    proptest! {
        #[test]
        fn row_sum_is_window_count(seq in "[ACGT]{1,400}", k in 1usize..12) {
            let corpus = recs(&[&seq]);
            let expected = (seq.len() + 1).saturating_sub(k) as f64;
            match build_kmer_dictionary(&corpus, k, 1) {
                Ok(d) => {
                    let m = encode_kmer_counts(&corpus, &d);
                    prop_assert_eq!(m.rows[0].values.iter().sum::<f64>(), expected);
                }
                Err(_) => prop_assert_eq!(expected, 0.0),
            }
        }

        #[test]
        fn dictionary_ignores_record_order(seqs in proptest::collection::vec("[ACGTN]{0,60}", 1..20), k in 1usize..6) {
            let a = recs(&seqs.iter().map(String::as_str).collect::<Vec<_>>());
            let mut b = a.clone();
            b.reverse();
            let da = build_kmer_dictionary(&a, k, 1).ok();
            let db = build_kmer_dictionary(&b, k, 1).ok();
            prop_assert_eq!(da, db);
        }
    }
}
