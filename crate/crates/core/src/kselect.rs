//! K-mer abundance spectra and optimal-k selection.
//!
//! For each candidate k the spectrum's first valley (the end of the
//! descending run that starts at abundance 1) separates error k-mers from
//! genomic ones; the k with the most distinct above-valley k-mers wins.

use std::collections::BTreeMap;

use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::encode::{check_k, kmer_windows};
use crate::error::{Error, Result};
use crate::fasta::SequenceRecord;

/// Abundance histogram: abundance -> number of distinct k-mers seen that many times.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KmerSpectrum {
    pub k: usize,
    pub histogram: BTreeMap<u64, u64>,
}

impl KmerSpectrum {
    pub fn from_histogram(k: usize, histogram: impl IntoIterator<Item = (u64, u64)>) -> Self {
        KmerSpectrum {
            k,
            histogram: histogram
                .into_iter()
                .filter(|&(a, n)| a > 0 && n > 0)
                .collect(),
        }
    }

    pub fn distinct(&self) -> u64 {
        self.histogram.values().sum()
    }

    /// Total k-mer occurrences, i.e. the number of clean windows counted.
    pub fn total(&self) -> u64 {
        self.histogram.iter().map(|(a, n)| a * n).sum()
    }

    pub fn max_abundance(&self) -> u64 {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// `h[a]` for `a` in `0..=max_abundance` (index 0 unused).
    pub fn dense(&self) -> Vec<f64> {
        let mut h = vec![0.0; self.max_abundance() as usize + 1];
        for (&a, &n) in &self.histogram {
            h[a as usize] = n as f64;
        }
        h
    }
}

fn shard_of(code: u64, shards: usize) -> usize {
    // splitmix64 finalizer
    let mut z = code.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ((z ^ (z >> 31)) % shards as u64) as usize
}

/// Exact abundance histogram over every clean window of the corpus.
///
/// K-mers are sharded by hash, one shard per worker; shard histograms add
/// up, so the result does not depend on the number of threads.
pub fn kmer_spectrum(corpus: &[SequenceRecord], k: usize) -> Result<KmerSpectrum> {
    check_k(k)?;
    let shards = rayon::current_num_threads().max(1);
    let partial: Vec<BTreeMap<u64, u64>> = (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut counts: FxHashMap<u64, u64> = FxHashMap::default();
            for rec in corpus {
                for (_, code) in kmer_windows(&rec.residues, k) {
                    if shards == 1 || shard_of(code, shards) == shard {
                        *counts.entry(code).or_insert(0) += 1;
                    }
                }
            }
            let mut hist = BTreeMap::new();
            for n in counts.into_values() {
                *hist.entry(n).or_insert(0) += 1;
            }
            hist
        })
        .collect();
    let mut histogram = BTreeMap::new();
    for hist in partial {
        for (a, n) in hist {
            *histogram.entry(a).or_insert(0) += n;
        }
    }
    if histogram.is_empty() {
        return Err(Error::NoKmers { k });
    }
    Ok(KmerSpectrum { k, histogram })
}

/// Centered moving average with an odd window; `window <= 1` is the identity.
pub fn smooth(h: &[f64], window: usize) -> Vec<f64> {
    if window <= 1 || h.len() < 2 {
        return h.to_vec();
    }
    let half = window / 2;
    (0..h.len())
        .map(|i| {
            if i == 0 {
                return h[0];
            }
            let lo = i.saturating_sub(half).max(1);
            let hi = (i + half).min(h.len() - 1);
            h[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect()
}

fn valley_of(h: &[f64]) -> u64 {
    let max = h.len().saturating_sub(1);
    if max < 2 {
        return 1;
    }
    let mut a = 1;
    while a < max && h[a + 1] < h[a] {
        a += 1;
    }
    if a == 1 || a == max {
        return 1;
    }
    if h[a + 1..].iter().any(|&v| v > h[a]) {
        a as u64
    } else {
        1
    }
}

/// Abundance at the first valley after the error peak; 1 when the spectrum
/// has no error peak (monotone or rising from abundance 1).
pub fn find_valley(spectrum: &KmerSpectrum) -> u64 {
    valley_of(&spectrum.dense())
}

/// [`find_valley`] on a moving-average-smoothed spectrum.
pub fn find_valley_smoothed(spectrum: &KmerSpectrum, window: usize) -> u64 {
    valley_of(&smooth(&spectrum.dense(), window))
}

/// Distinct k-mers above `valley`; every distinct k-mer when `valley <= 1`.
pub fn estimate_above(spectrum: &KmerSpectrum, valley: u64) -> u64 {
    if valley <= 1 {
        return spectrum.distinct();
    }
    spectrum.histogram.range(valley + 1..).map(|(_, n)| n).sum()
}

pub fn estimate_genomic_kmers(spectrum: &KmerSpectrum) -> u64 {
    estimate_above(spectrum, find_valley(spectrum))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KEstimate {
    pub k: usize,
    pub valley: u64,
    pub estimate: u64,
    pub distinct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KSelectionReport {
    pub estimates: Vec<KEstimate>,
    pub spectra: Vec<KmerSpectrum>,
    pub chosen_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KRange {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
}

impl KRange {
    pub fn ks(&self) -> impl Iterator<Item = usize> {
        (self.k_min..=self.k_max).step_by(self.step.max(1))
    }
}

pub fn select_optimal_k(
    corpus: &[SequenceRecord],
    k_min: usize,
    k_max: usize,
    step: usize,
) -> Result<KSelectionReport> {
    select_optimal_k_with(corpus, KRange { k_min, k_max, step }, 0)
}

/// Scans `range`, estimating genomic k-mers per k; ties go to the smallest k.
pub fn select_optimal_k_with(
    corpus: &[SequenceRecord],
    range: KRange,
    smoothing: usize,
) -> Result<KSelectionReport> {
    if range.k_min == 0 || range.k_min > range.k_max || range.step == 0 {
        return Err(Error::invalid(format!(
            "k range needs 1 <= k_min <= k_max and step >= 1 (got {}..{} step {})",
            range.k_min, range.k_max, range.step
        )));
    }
    if smoothing > 1 && smoothing.is_multiple_of(2) {
        return Err(Error::invalid("smoothing window must be odd"));
    }
    let mut estimates = Vec::new();
    let mut spectra = Vec::new();
    for k in range.ks() {
        let spectrum = kmer_spectrum(corpus, k)?;
        let valley = find_valley_smoothed(&spectrum, smoothing);
        estimates.push(KEstimate {
            k,
            valley,
            estimate: estimate_above(&spectrum, valley),
            distinct: spectrum.distinct(),
            total: spectrum.total(),
        });
        spectra.push(spectrum);
    }
    let chosen_k = estimates
        .iter()
        .fold(None::<&KEstimate>, |best, e| match best {
            Some(b) if b.estimate >= e.estimate => Some(b),
            _ => Some(e),
        })
        .map(|e| e.k)
        .expect("range is non-empty");
    Ok(KSelectionReport {
        estimates,
        spectra,
        chosen_k,
    })
}
