//! Two-class synthetic corpora with planted motifs, and read simulation
//! from a genome.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;
use crate::sampling::derive_seed;

const BASES: [u8; 4] = *b"ACGT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub n_class0: usize,
    pub n_class1: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub gc_content: f64,
    /// Motifs to plant; when empty, `motif_count` motifs of `motif_len` are
    /// drawn from the background distribution.
    pub motifs: Vec<String>,
    pub motif_count: usize,
    pub motif_len: usize,
    /// Motif copies per class-1 sequence; 0 makes the classes identical
    /// in distribution.
    pub insertions_per_sequence: usize,
    /// Substitution rate for simulated reads.
    pub error_rate: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_class0: 2000,
            n_class1: 60,
            min_len: 500,
            max_len: 1500,
            gc_content: 0.5,
            motifs: Vec::new(),
            motif_count: 10,
            motif_len: 19,
            insertions_per_sequence: 2,
            error_rate: 0.01,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gc_content) {
            return Err(Error::invalid(format!(
                "gc_content must lie in [0, 1], got {}",
                self.gc_content
            )));
        }
        if !(0.0..=1.0).contains(&self.error_rate) {
            return Err(Error::invalid(format!(
                "error_rate must lie in [0, 1], got {}",
                self.error_rate
            )));
        }
        if self.min_len == 0 || self.min_len > self.max_len {
            return Err(Error::invalid("need 0 < min_len <= max_len"));
        }
        let len = self.effective_motif_len();
        if self
            .motifs
            .iter()
            .any(|m| m.len() != len || !m.bytes().all(|b| BASES.contains(&b)))
        {
            return Err(Error::invalid(
                "motifs must be uppercase ACGT strings of one common length",
            ));
        }
        if self.insertions_per_sequence > 0 {
            if len == 0 || (self.motifs.is_empty() && self.motif_count == 0) {
                return Err(Error::invalid(
                    "insertions need at least one non-empty motif",
                ));
            }
            if self.insertions_per_sequence * len > self.min_len {
                return Err(Error::invalid(format!(
                    "{} motif copies of length {len} do not fit in min_len={}",
                    self.insertions_per_sequence, self.min_len
                )));
            }
        }
        Ok(())
    }

    fn effective_motif_len(&self) -> usize {
        self.motifs.first().map_or(self.motif_len, String::len)
    }
}

/// One planted motif copy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Insertion {
    pub id: String,
    pub motif: String,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub class0: Vec<SequenceRecord>,
    pub class1: Vec<SequenceRecord>,
    pub motifs: Vec<String>,
    pub manifest: Vec<Insertion>,
}

fn random_base(rng: &mut ChaCha8Rng, gc: f64) -> u8 {
    let strong = rng.gen_bool(gc);
    let pick = rng.gen_bool(0.5);
    match (strong, pick) {
        (true, false) => b'C',
        (true, true) => b'G',
        (false, false) => b'A',
        (false, true) => b'T',
    }
}

pub fn random_sequence(rng: &mut ChaCha8Rng, len: usize, gc: f64) -> Vec<u8> {
    (0..len).map(|_| random_base(rng, gc)).collect()
}

fn contains(hay: &[u8], needle: &[u8]) -> bool {
    hay.windows(needle.len()).any(|w| w == needle)
}

/// Uniform non-overlapping offsets for `count` copies of length `len`.
fn place(rng: &mut ChaCha8Rng, seq_len: usize, len: usize, count: usize) -> Vec<usize> {
    // choose gaps: distribute the free bases among count + 1 gaps, which is
    // uniform over non-overlapping placements in order
    let free = seq_len - count * len;
    let mut cuts: Vec<usize> = (0..count).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    cuts.iter().enumerate().map(|(i, &c)| c + i * len).collect()
}

/// Motif index sets for `n` sequences. Sets cycle through every
/// `per_seq`-subset of the motifs in a seeded random order, so each
/// combination appears before any repeats and motif counts stay balanced.
/// Falls back to independent draws when the subsets are too many to list
/// or `per_seq` exceeds the motif count.
fn motif_sets(n_motifs: usize, per_seq: usize, n: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 3 << 32));
    if per_seq == 0 || n_motifs == 0 {
        return vec![Vec::new(); n];
    }
    let mut subsets: Vec<Vec<usize>> = Vec::new();
    if per_seq <= n_motifs {
        let mut combo: Vec<usize> = (0..per_seq).collect();
        loop {
            subsets.push(combo.clone());
            if subsets.len() > 100_000 {
                subsets.clear();
                break;
            }
            // next combination in lexicographic order
            let Some(i) = (0..per_seq)
                .rev()
                .find(|&i| combo[i] < n_motifs - per_seq + i)
            else {
                break;
            };
            combo[i] += 1;
            for j in i + 1..per_seq {
                combo[j] = combo[j - 1] + 1;
            }
        }
    }
    if subsets.is_empty() {
        return (0..n)
            .map(|_| (0..per_seq).map(|_| rng.gen_range(0..n_motifs)).collect())
            .collect();
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut round = subsets.clone();
        round.shuffle(&mut rng);
        out.extend(round.into_iter().take(n - out.len()));
    }
    for set in &mut out {
        set.shuffle(&mut rng);
    }
    out
}

/// Generates both classes and the insertion manifest. Each class-1
/// sequence receives `insertions_per_sequence` distinct motifs (see
/// [`motif_sets`]) at uniform non-overlapping offsets.
pub fn generate_dataset(spec: &SynthSpec) -> Result<SynthDataset> {
    spec.validate()?;
    let make = |class: u64, i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, (class << 32) | i as u64));
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        (random_sequence(&mut rng, len, spec.gc_content), rng)
    };
    let class0: Vec<SequenceRecord> = (0..spec.n_class0)
        .into_par_iter()
        .map(|i| SequenceRecord::new(format!("class0_{i:05}"), "", &make(0, i).0))
        .collect();

    let motifs = if !spec.motifs.is_empty() || spec.insertions_per_sequence == 0 {
        spec.motifs.clone()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, 2 << 32));
        let limit = spec.n_class0 / 100;
        let mut motifs: Vec<String> = Vec::with_capacity(spec.motif_count);
        let mut attempts = 0;
        while motifs.len() < spec.motif_count {
            attempts += 1;
            if attempts > 1000 * spec.motif_count {
                return Err(Error::invalid(
                    "could not draw motifs that are rare in the background",
                ));
            }
            let m = random_sequence(&mut rng, spec.motif_len, spec.gc_content);
            let hits = class0
                .par_iter()
                .filter(|r| contains(&r.residues, &m))
                .count();
            let m = String::from_utf8(m).expect("ACGT");
            if hits > limit || motifs.contains(&m) {
                continue;
            }
            motifs.push(m);
        }
        motifs
    };

    let per_seq = spec.insertions_per_sequence;
    let sets = motif_sets(motifs.len(), per_seq, spec.n_class1, spec.seed);
    let generated: Vec<(SequenceRecord, Vec<Insertion>)> = (0..spec.n_class1)
        .into_par_iter()
        .map(|i| {
            let (mut seq, mut rng) = make(1, i);
            let id = format!("class1_{i:05}");
            let mut inserted = Vec::new();
            if per_seq > 0 {
                let offsets = place(&mut rng, seq.len(), motifs[0].len(), per_seq);
                for (&off, &pick) in offsets.iter().zip(&sets[i]) {
                    let motif = &motifs[pick];
                    seq[off..off + motif.len()].copy_from_slice(motif.as_bytes());
                    inserted.push(Insertion {
                        id: id.clone(),
                        motif: motif.clone(),
                        offset: off,
                    });
                }
            }
            (SequenceRecord::new(id, "", &seq), inserted)
        })
        .collect();
    let (class1, manifest): (Vec<_>, Vec<_>) = generated.into_iter().unzip();
    Ok(SynthDataset {
        class0,
        class1,
        motifs,
        manifest: manifest.into_iter().flatten().collect(),
    })
}

pub fn write_manifest_tsv<W: Write>(manifest: &[Insertion], mut out: W) -> Result<()> {
    writeln!(out, "id\tmotif\toffset")?;
    for m in manifest {
        writeln!(out, "{}\t{}\t{}", m.id, m.motif, m.offset)?;
    }
    Ok(())
}

/// Reads sampled uniformly from `genome` with per-base substitutions at
/// `error_rate`. The read count is `round(coverage · len / read_len)`.
pub fn simulate_reads(
    genome: &SequenceRecord,
    read_len: usize,
    coverage: f64,
    error_rate: f64,
    seed: u64,
) -> Result<Vec<SequenceRecord>> {
    let len = genome.len();
    if read_len == 0 || read_len > len {
        return Err(Error::invalid(format!(
            "read length {read_len} must lie in 1..={len}"
        )));
    }
    if !(coverage >= 0.0) || !(0.0..=1.0).contains(&error_rate) {
        return Err(Error::invalid(
            "coverage must be >= 0 and error_rate in [0, 1]",
        ));
    }
    let n = (coverage * len as f64 / read_len as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut reads = Vec::with_capacity(n);
    for i in 0..n {
        let start = rng.gen_range(0..=len - read_len);
        let mut read = genome.residues[start..start + read_len].to_vec();
        for b in read.iter_mut() {
            if rng.gen_bool(error_rate) {
                let alternatives: Vec<u8> = BASES.iter().copied().filter(|x| x != b).collect();
                *b = alternatives[rng.gen_range(0..alternatives.len())];
            }
        }
        reads.push(SequenceRecord::new(
            format!("read{i}"),
            format!("start={start}"),
            &read,
        ));
    }
    Ok(reads)
}

/// An i.i.d. genome of `len` bases.
pub fn random_genome(id: &str, len: usize, gc: f64, seed: u64) -> SequenceRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SequenceRecord::new(id, "", &random_sequence(&mut rng, len, gc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fasta::write_fasta;

    fn small() -> SynthSpec {
        SynthSpec {
            n_class0: 200,
            n_class1: 30,
            min_len: 100,
            max_len: 200,
            seed: 3,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn manifest_matches_sequences() {
        let spec = SynthSpec {
            insertions_per_sequence: 3,
            ..small()
        };
        let ds = generate_dataset(&spec).unwrap();
        assert_eq!(ds.motifs.len(), 10);
        assert!(ds.motifs.iter().all(|m| m.len() == 19));
        assert_eq!(ds.manifest.len(), 30 * 3);
        for ins in &ds.manifest {
            let rec = ds.class1.iter().find(|r| r.id == ins.id).unwrap();
            assert_eq!(
                &rec.residues[ins.offset..ins.offset + 19],
                ins.motif.as_bytes()
            );
        }
        for rec in &ds.class1 {
            let mut offs: Vec<usize> = ds
                .manifest
                .iter()
                .filter(|m| m.id == rec.id)
                .map(|m| m.offset)
                .collect();
            offs.sort();
            assert!(
                offs.windows(2).all(|w| w[1] >= w[0] + 19),
                "overlap in {}",
                rec.id
            );
        }
        for rec in ds.class0.iter().chain(&ds.class1) {
            assert!((100..=200).contains(&rec.len()));
        }
        for rec in &ds.class1 {
            let mut planted: Vec<&str> = ds
                .manifest
                .iter()
                .filter(|m| m.id == rec.id)
                .map(|m| m.motif.as_str())
                .collect();
            planted.sort();
            planted.dedup();
            assert_eq!(planted.len(), 3, "motifs repeat within {}", rec.id);
        }
    }

    #[test]
    fn motif_sets_cover_every_combination_first() {
        let sets = motif_sets(10, 2, 60, 4);
        let mut first: Vec<Vec<usize>> = sets[..45]
            .iter()
            .map(|s| {
                let mut s = s.clone();
                s.sort();
                s
            })
            .collect();
        first.sort();
        first.dedup();
        assert_eq!(first.len(), 45);
        let singles = motif_sets(10, 1, 30, 4);
        for m in 0..10 {
            assert_eq!(singles.iter().filter(|s| s[0] == m).count(), 3);
        }
        assert!(motif_sets(3, 5, 4, 0)
            .iter()
            .all(|s| s.len() == 5 && s.iter().all(|&m| m < 3)));
        assert!(motif_sets(10, 0, 4, 0).iter().all(Vec::is_empty));
    }

    #[test]
    fn same_seed_same_bytes() {
        let render = |spec: &SynthSpec| {
            let ds = generate_dataset(spec).unwrap();
            let mut buf = Vec::new();
            write_fasta(&mut buf, &ds.class0, 60).unwrap();
            write_fasta(&mut buf, &ds.class1, 60).unwrap();
            write_manifest_tsv(&ds.manifest, &mut buf).unwrap();
            buf
        };
        assert_eq!(render(&small()), render(&small()));
        assert_ne!(render(&small()), render(&SynthSpec { seed: 4, ..small() }));
    }

    #[test]
    fn gc_content_is_respected() {
        let ds = generate_dataset(&SynthSpec {
            gc_content: 0.7,
            ..small()
        })
        .unwrap();
        let (gc, total) = ds.class0.iter().fold((0usize, 0usize), |(g, t), r| {
            (
                g + r
                    .residues
                    .iter()
                    .filter(|&&b| b == b'G' || b == b'C')
                    .count(),
                t + r.len(),
            )
        });
        let p = gc as f64 / total as f64;
        let sd = (0.7 * 0.3 / total as f64).sqrt();
        assert!((p - 0.7).abs() < 4.0 * sd, "{p}");
    }

    #[test]
    fn invalid_specs() {
        assert!(generate_dataset(&SynthSpec {
            motif_len: 150,
            ..small()
        })
        .is_err());
        assert!(generate_dataset(&SynthSpec {
            gc_content: 1.2,
            ..small()
        })
        .is_err());
        assert!(generate_dataset(&SynthSpec {
            motifs: vec!["ACG".into(), "AC".into()],
            ..small()
        })
        .is_err());
        let none = generate_dataset(&SynthSpec {
            insertions_per_sequence: 0,
            ..small()
        })
        .unwrap();
        assert!(none.manifest.is_empty() && none.motifs.is_empty());
    }

    #[test]
    fn explicit_motifs_are_used() {
        let spec = SynthSpec {
            motifs: vec!["ACGTACGT".into(), "TTTTGGGG".into()],
            ..small()
        };
        let ds = generate_dataset(&spec).unwrap();
        assert_eq!(ds.motifs, spec.motifs);
        assert!(ds
            .class1
            .iter()
            .all(|r| contains(&r.residues, b"ACGTACGT") || contains(&r.residues, b"TTTTGGGG")));
    }

    #[test]
    fn error_free_reads_are_substrings() {
        let genome = random_genome("g", 2000, 0.5, 1);
        let reads = simulate_reads(&genome, 100, 5.0, 0.0, 2).unwrap();
        assert_eq!(reads.len(), 100);
        let text = genome.residues_str();
        assert!(reads.iter().all(|r| text.contains(r.residues_str())));
        assert!(simulate_reads(&genome, 100, 0.0, 0.1, 2)
            .unwrap()
            .is_empty());
        assert!(simulate_reads(&genome, 3000, 1.0, 0.0, 2).is_err());
    }

    #[test]
    fn substitution_rate_is_binomial() {
        let genome = random_genome("g", 20_000, 0.5, 7);
        let reads = simulate_reads(&genome, 150, 10.0, 0.02, 8).unwrap();
        let mut mismatches = 0usize;
        let mut bases = 0usize;
        for r in &reads {
            let start: usize = r.description.trim_start_matches("start=").parse().unwrap();
            let truth = &genome.residues[start..start + 150];
            mismatches += r.residues.iter().zip(truth).filter(|(a, b)| a != b).count();
            bases += 150;
        }
        let rate = mismatches as f64 / bases as f64;
        let sd = (0.02 * 0.98 / bases as f64).sqrt();
        assert!((rate - 0.02).abs() <= 3.0 * sd, "{rate}");
    }
}
