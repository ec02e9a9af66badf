//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N: PASS|FAIL` line (straight to stderr, so it shows even when
//! output capture is on) before asserting.

use std::collections::HashMap;
use std::io::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kmerlens::encode::{
    build_kmer_dictionary, encode_corpus, encode_graph_features, encode_kmer_counts, encode_onehot,
    encode_sequential, extract_kmers, EncodingScheme, SparseFeatureMatrix, SparseRow,
};
use kmerlens::eval::{confusion, metrics, roc_auc, ConfusionMatrix};
use kmerlens::explain::shap_tree;
use kmerlens::fasta::SequenceRecord;
use kmerlens::kselect::{kmer_spectrum, select_optimal_k};
use kmerlens::models::{fit_random_forest, Node, TrainConfig, Tree, TreeEnsembleModel};
use kmerlens::sampling::{smote, LabeledDataset};
use kmerlens::synth::{random_genome, simulate_reads};
use kmerlens_cli::commands::{compare_encodings, pipeline, snapshot};
use kmerlens_cli::config::RunConfig;
use kmerlens_cli::io::normalize_manifest;
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, title: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n}: {verdict} - {title} ({detail})"
    );
    assert!(ok, "criterion {n} failed: {title} ({detail})");
}

fn random_dna(rng: &mut ChaCha8Rng, len: usize) -> Vec<u8> {
    (0..len).map(|_| b"ACGT"[rng.gen_range(0..4)]).collect()
}

fn records(seqs: Vec<Vec<u8>>) -> Vec<SequenceRecord> {
    seqs.iter()
        .enumerate()
        .map(|(i, s)| SequenceRecord::new(format!("s{i}"), "", s))
        .collect()
}

// ---------------------------------------------------------------- 1

fn oracle_sequential(b: u8) -> f64 {
    match b {
        b'A' => 0.25,
        b'C' => 0.5,
        b'G' => 0.75,
        b'T' => 1.0,
        _ => 0.0,
    }
}

fn oracle_onehot(b: u8) -> [u8; 4] {
    match b {
        b'A' => [0, 0, 0, 1],
        b'T' => [0, 0, 1, 0],
        b'C' => [0, 1, 0, 0],
        b'G' => [1, 0, 0, 0],
        _ => [0; 4],
    }
}

#[test]
fn criterion_1_encoding_oracles() {
    let start = Instant::now();
    let mut failures = Vec::new();

    let kmers = extract_kmers(b"ATCGCA", 3).unwrap();
    if kmers != ["ATC", "TCG", "CGC", "GCA"] {
        failures.push(format!("worked example gave {kmers:?}"));
    }
    let enc = encode_corpus(
        &records(vec![b"ATCGCA".to_vec()]),
        &EncodingScheme::Kmer { k: 3, min_count: 1 },
    )
    .unwrap();
    let labels: Vec<String> = (0..enc.matrix.n_cols)
        .map(|c| enc.column_label(c))
        .collect();
    if labels != ["ATC", "CGC", "GCA", "TCG"]
        || enc.matrix.rows[0] != SparseRow::from_dense(&[1.0; 4])
    {
        failures.push(format!("worked example matrix {labels:?}"));
    }
    if encode_sequential(b"ACGT", 4).unwrap() != [0.25, 0.5, 0.75, 1.0] {
        failures.push("ACGT sequential values".into());
    }
    if encode_onehot(b"ATCG", 4).unwrap()
        != [[0, 0, 0, 1], [0, 0, 1, 0], [0, 1, 0, 0], [1, 0, 0, 0]]
    {
        failures.push("ATCG one-hot rows".into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut seqs = Vec::new();
    for _ in 0..1000 {
        let len = rng.gen_range(1..400);
        seqs.push(random_dna(&mut rng, len));
    }
    for (i, s) in seqs.iter().enumerate().take(200) {
        let max_len = rng.gen_range(1..500);
        let seq = encode_sequential(s, max_len).unwrap();
        let hot = encode_onehot(s, max_len).unwrap();
        for p in 0..max_len {
            let b = s.get(p).copied().unwrap_or(0);
            if seq[p] != oracle_sequential(b) || hot[p] != oracle_onehot(b) {
                failures.push(format!("sequence {i} position {p}"));
                break;
            }
        }
    }
    let corpus = records(seqs);
    let mut checked = 0;
    for k in [1, 3, 7, 11, 19, 25, 31] {
        let dict = build_kmer_dictionary(&corpus, k, 1).unwrap();
        let m = encode_kmer_counts(&corpus, &dict);
        for (r, row) in corpus.iter().zip(&m.rows) {
            let expected = (r.len() + 1).saturating_sub(k) as f64;
            if row.values.iter().sum::<f64>() != expected {
                failures.push(format!("k={k} record {} row sum", r.id));
            }
            checked += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = failures.is_empty() && elapsed < Duration::from_secs(1);
    report(
        1,
        "encoding oracles",
        ok,
        &format!(
            "{checked} row sums over 1000 sequences, {} mismatches, {:.2?}",
            failures.len(),
            elapsed
        ),
    );
}

// ---------------------------------------------------------------- 2

#[test]
fn criterion_2_graph_equals_next_kmer_counts() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let seqs: Vec<Vec<u8>> = (0..500)
        .map(|_| {
            let len = rng.gen_range(1..300);
            let mut s = random_dna(&mut rng, len);
            if rng.gen_bool(0.2) && !s.is_empty() {
                let at = rng.gen_range(0..s.len());
                s[at] = b'N';
            }
            s
        })
        .collect();
    let corpus = records(seqs);
    let mut mismatches = 0;
    for k in 1..=20 {
        let dict = build_kmer_dictionary(&corpus, k + 1, 1).unwrap();
        let graph = encode_graph_features(&corpus, k, &dict).unwrap();
        let counts = encode_kmer_counts(&corpus, &dict);
        if graph != counts {
            mismatches += 1;
        }
        let via_schemes = (
            encode_corpus(&corpus, &EncodingScheme::Graph { k, min_count: 1 })
                .unwrap()
                .matrix,
            encode_corpus(
                &corpus,
                &EncodingScheme::Kmer {
                    k: k + 1,
                    min_count: 1,
                },
            )
            .unwrap()
            .matrix,
        );
        if via_schemes.0 != via_schemes.1 {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    report(
        2,
        "graph features equal (k+1)-mer counts",
        mismatches == 0 && elapsed < Duration::from_secs(5),
        &format!("500 sequences, k = 1..=20, {mismatches} mismatches, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- 3

/// Cover-weighted value of `tree` when only the features in `set` are known.
fn tree_value_given(tree: &Tree, node: usize, x: &SparseRow, set: u32) -> f64 {
    match &tree.nodes[node] {
        Node::Leaf { value, .. } => value.output(),
        Node::Split {
            feature,
            threshold,
            left,
            right,
            cover,
        } => {
            let (l, r) = (*left as usize, *right as usize);
            if set & (1 << feature) != 0 {
                let next = if x.get(*feature as usize) <= *threshold {
                    l
                } else {
                    r
                };
                tree_value_given(tree, next, x, set)
            } else {
                (tree.nodes[l].cover() * tree_value_given(tree, l, x, set)
                    + tree.nodes[r].cover() * tree_value_given(tree, r, x, set))
                    / cover
            }
        }
    }
}

fn model_value_given(model: &TreeEnsembleModel, x: &SparseRow, set: u32) -> f64 {
    model.output_offset()
        + model.tree_scale()
            * model
                .trees
                .iter()
                .map(|t| tree_value_given(t, 0, x, set))
                .sum::<f64>()
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

/// Shapley values by enumerating every coalition of all `m` columns.
fn brute_force_phi(model: &TreeEnsembleModel, x: &SparseRow, m: usize) -> (f64, Vec<f64>) {
    let values: Vec<f64> = (0..1u32 << m)
        .map(|s| model_value_given(model, x, s))
        .collect();
    let mut phi = vec![0.0; m];
    for (i, p) in phi.iter_mut().enumerate() {
        for s in 0..1u32 << m {
            if s & (1 << i) != 0 {
                continue;
            }
            let size = s.count_ones() as usize;
            let w = factorial(size) * factorial(m - size - 1) / factorial(m);
            *p += w * (values[(s | (1 << i)) as usize] - values[s as usize]);
        }
    }
    (values[0], phi)
}

#[test]
fn criterion_3_shap_matches_enumeration() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut max_delta, mut max_local, mut dummy_violations, mut explained) =
        (0.0f64, 0.0f64, 0, 0);
    for trial in 0..200u64 {
        let n_cols = rng.gen_range(2..=8);
        let dummies: Vec<bool> = (0..n_cols).map(|_| rng.gen_bool(0.25)).collect();
        let n = rng.gen_range(20..60);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..n {
            let dense: Vec<f64> = (0..n_cols)
                .map(|c| {
                    if dummies[c] {
                        0.0
                    } else {
                        rng.gen_range(0..4) as f64
                    }
                })
                .collect();
            let signal = dense.iter().take(3).sum::<f64>() + rng.gen_range(0.0..3.0);
            labels.push(u8::from(signal > 4.0));
            rows.push(SparseRow::from_dense(&dense));
        }
        labels[0] = 0;
        labels[1] = 1;
        let ds = LabeledDataset::new(
            SparseFeatureMatrix::new(n_cols, rows, "acceptance".into()),
            labels,
            (0..n).map(|i| format!("r{i}")).collect(),
        )
        .unwrap();
        let cfg = TrainConfig {
            n_trees: rng.gen_range(1..=5),
            max_depth: Some(rng.gen_range(1..=4)),
            mtry: Some(rng.gen_range(1..=n_cols)),
            seed: trial,
            ..TrainConfig::forest()
        };
        let model = fit_random_forest(&ds, &cfg).unwrap();
        for x in ds.features.rows.iter().take(10) {
            let fast = shap_tree(&model, x);
            let (base, phi) = brute_force_phi(&model, x, n_cols);
            max_delta = max_delta.max((fast.base_value - base).abs());
            for (c, p) in phi.iter().enumerate() {
                max_delta = max_delta.max((fast.phi(c) - p).abs());
                if dummies[c] && fast.phi(c) != 0.0 {
                    dummy_violations += 1;
                }
            }
            max_local = max_local.max((fast.total() - model.raw_output(x)).abs());
            max_local = max_local.max((base + phi.iter().sum::<f64>() - model.raw_output(x)).abs());
            explained += 1;
        }
    }
    let elapsed = start.elapsed();
    let ok = max_delta <= 1e-9
        && max_local <= 1e-9
        && dummy_violations == 0
        && elapsed < Duration::from_secs(60);
    report(
        3,
        "tree SHAP equals exhaustive Shapley values",
        ok,
        &format!(
            "200 forests, {explained} rows, max |dphi| {max_delta:.1e}, max local-accuracy gap {max_local:.1e}, \
             {dummy_violations} nonzero dummies, {elapsed:.2?}"
        ),
    );
}

// ---------------------------------------------------------------- 4

type Q = Ratio<i128>;

fn to_f64(q: Q) -> f64 {
    *q.numer() as f64 / *q.denom() as f64
}

fn q_div(a: i128, b: i128) -> Option<Q> {
    (b != 0).then(|| Q::new(a, b))
}

#[test]
fn criterion_4_metric_identities() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut bad = 0;
    for i in 0..10_000 {
        let scale = if i % 10 == 0 { 3 } else { 5000 };
        let cm = ConfusionMatrix {
            tp: rng.gen_range(0..scale),
            fp: rng.gen_range(0..scale),
            fn_: rng.gen_range(0..scale),
            tn: rng.gen_range(0..scale),
        };
        let r = metrics(&cm);
        let (tp, fp, fn_, tn) = (cm.tp as i128, cm.fp as i128, cm.fn_ as i128, cm.tn as i128);
        let accuracy = q_div(tp + tn, tp + tn + fp + fn_);
        let precision = q_div(tp, tp + fp);
        let recall = q_div(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r != Q::from_integer(0) => {
                Some(Q::from_integer(2) * p * r / (p + r))
            }
            _ => None,
        };
        let matches = |got: f64, want: Option<Q>| want.map_or(got == 0.0, |q| got == to_f64(q));
        let pos = r.classes[1];
        // F1 as a harmonic mean is undefined when tp = 0; the count form then reads 0
        let f1_ok = match f1 {
            Some(q) => pos.f1 == to_f64(q),
            None => pos.f1 == 0.0,
        };
        if !(matches(r.accuracy, accuracy)
            && matches(pos.precision, precision)
            && matches(pos.recall, recall)
            && f1_ok)
        {
            bad += 1;
        }
        if pos.precision_degenerate != precision.is_none()
            || pos.recall_degenerate != recall.is_none()
        {
            bad += 1;
        }
        // the negative class is the positive class of the flipped matrix
        let neg = r.classes[0];
        if !(matches(neg.precision, q_div(tn, tn + fn_)) && matches(neg.recall, q_div(tn, tn + fp)))
        {
            bad += 1;
        }
    }

    let mut auc_gap = 0.0f64;
    for _ in 0..1000 {
        let n = rng.gen_range(2..120);
        let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        labels[0] = 0;
        labels[1] = 1;
        let levels = rng.gen_range(2..12);
        let scores: Vec<f64> = (0..n)
            .map(|_| rng.gen_range(0..levels) as f64 / levels as f64)
            .collect();
        let mut twice_wins = 0u64;
        let mut pairs = 0u64;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    pairs += 1;
                    twice_wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        let oracle = twice_wins as f64 / (2 * pairs) as f64;
        auc_gap = auc_gap.max((roc_auc(&labels, &scores).unwrap().auc - oracle).abs());
    }
    let cm = confusion(&[1, 0, 1, 1], &[1, 1, 0, 1]).unwrap();
    if (cm.tp, cm.fp, cm.fn_, cm.tn) != (2, 1, 1, 0) {
        bad += 1;
    }
    let elapsed = start.elapsed();
    report(
        4,
        "metric identities and AUC",
        bad == 0 && auc_gap <= 1e-12 && elapsed < Duration::from_secs(10),
        &format!("10000 confusion matrices, {bad} mismatches; 1000 score vectors, max AUC gap {auc_gap:.1e}; {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- 5

fn dense(row: &SparseRow, n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n];
    for (&c, &v) in row.indices.iter().zip(&row.values) {
        d[c as usize] = v;
    }
    d
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Some(u)` when `s = x + u (y - x)` for some `u` in [0, 1], within `tol`.
fn interpolation_weight(s: &[f64], x: &[f64], y: &[f64], tol: f64) -> Option<f64> {
    let pivot =
        (0..x.len()).max_by(|&a, &b| (y[a] - x[a]).abs().total_cmp(&(y[b] - x[b]).abs()))?;
    let span = y[pivot] - x[pivot];
    let u = if span.abs() < 1e-300 {
        0.0
    } else {
        (s[pivot] - x[pivot]) / span
    };
    let fits = (0..x.len()).all(|c| (x[c] + u * (y[c] - x[c]) - s[c]).abs() <= tol);
    (fits && (-tol..=1.0 + tol).contains(&u)).then_some(u)
}

#[test]
fn criterion_5_smote_geometry() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut bad, mut synthetic_rows) = (0, 0);
    for trial in 0..100u64 {
        let n_cols = rng.gen_range(1..12);
        let n_min = rng.gen_range(2..15);
        let n_maj = n_min + rng.gen_range(1..40);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n_min + n_maj {
            let d: Vec<f64> = (0..n_cols)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        0.0
                    } else {
                        rng.gen_range(-5.0..5.0)
                    }
                })
                .collect();
            rows.push(SparseRow::from_dense(&d));
            labels.push(u8::from(i < n_min));
        }
        let ds = LabeledDataset::new(
            SparseFeatureMatrix::new(n_cols, rows, "s".into()),
            labels,
            (0..n_min + n_maj).map(|i| format!("o{i}")).collect(),
        )
        .unwrap();
        let k = rng.gen_range(1..8);
        let out = smote(&ds, k, n_maj, trial).unwrap();
        if out.class_counts()[1] != n_maj || out.features.rows[..ds.len()] != ds.features.rows[..] {
            bad += 1;
        }
        let minority: Vec<Vec<f64>> = (0..n_min)
            .map(|i| dense(&ds.features.rows[i], n_cols))
            .collect();
        let k_eff = k.min(n_min - 1);
        // neighbour sets by brute force; ties at the k-th distance all qualify
        let neighbours: Vec<Vec<usize>> = (0..n_min)
            .map(|i| {
                let mut d: Vec<f64> = (0..n_min)
                    .filter(|&j| j != i)
                    .map(|j| sq_dist(&minority[i], &minority[j]))
                    .collect();
                d.sort_by(f64::total_cmp);
                let cutoff = d[k_eff - 1];
                (0..n_min)
                    .filter(|&j| j != i && sq_dist(&minority[i], &minority[j]) <= cutoff + 1e-12)
                    .collect()
            })
            .collect();
        for (r, row) in out.features.rows.iter().enumerate().skip(ds.len()) {
            synthetic_rows += 1;
            let s = dense(row, n_cols);
            let found = (0..n_min).any(|x| {
                neighbours[x]
                    .iter()
                    .any(|&y| interpolation_weight(&s, &minority[x], &minority[y], 1e-9).is_some())
            });
            if !found || out.labels[r] != 1 {
                bad += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        5,
        "SMOTE geometry",
        bad == 0 && elapsed < Duration::from_secs(10),
        &format!("100 datasets, {synthetic_rows} synthetic rows, {bad} violations, {elapsed:.2?}"),
    );
}

// ---------------------------------------------------------------- 6

#[test]
fn criterion_6_planted_motif_pipeline() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::default().normalized();
    let outcome = pipeline(&cfg, dir.path()).unwrap();
    let recovered = outcome
        .ranking_labels
        .iter()
        .take(10)
        .filter(|k| outcome.motifs.iter().any(|m| m.contains(k.as_str())))
        .count();
    let chosen = outcome.curve.selection.chosen_m;
    let elapsed = start.elapsed();
    for f in [
        "model/model.json",
        "evaluate/metrics.tsv",
        "explain/ranking.tsv",
        "select/curve.tsv",
    ] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let ok = outcome.test.accuracy >= 0.99
        && outcome.test.auc >= 0.995
        && recovered >= 8
        && (8..=14).contains(&chosen)
        && elapsed < Duration::from_secs(300);
    report(
        6,
        "planted-motif pipeline",
        ok,
        &format!(
            "accuracy {:.4}, AUC {:.4}, {recovered}/10 motifs in top 10, chosen m = {chosen}, {elapsed:.1?}",
            outcome.test.accuracy, outcome.test.auc
        ),
    );
}

// ---------------------------------------------------------------- 7

#[test]
fn criterion_7_kmer_encoding_beats_positional() {
    let mut lines = Vec::new();
    let mut ok = true;
    for seed in 0..3u64 {
        let mut cfg = RunConfig {
            seed,
            ..RunConfig::default()
        }
        .normalized();
        cfg.compare.schemes = vec!["kmer".into(), "onehot".into(), "sequential".into()];
        let synth = kmerlens::synth::generate_dataset(&cfg.synth).unwrap();
        let labels: Vec<u8> = synth
            .class0
            .iter()
            .map(|_| 0)
            .chain(synth.class1.iter().map(|_| 1))
            .collect();
        let recs: Vec<SequenceRecord> = synth.class0.into_iter().chain(synth.class1).collect();
        let dir = tempfile::tempdir().unwrap();
        let rows = compare_encodings(&recs, &labels, &cfg, dir.path()).unwrap();
        let acc: HashMap<&str, f64> = rows
            .iter()
            .map(|(n, _, s)| (n.as_str(), s.accuracy))
            .collect();
        let (kmer, onehot, sequential) = (acc["kmer"], acc["onehot"], acc["sequential"]);
        ok &= kmer >= onehot && kmer >= sequential;
        lines.push(format!(
            "seed {seed}: kmer {kmer:.4} onehot {onehot:.4} sequential {sequential:.4}"
        ));
    }
    report(
        7,
        "k-mer accuracy >= one-hot and sequential",
        ok,
        &lines.join("; "),
    );
}

// ---------------------------------------------------------------- 8

fn oracle_valley(hist: &std::collections::BTreeMap<u64, u64>) -> u64 {
    let top = *hist.keys().next_back().unwrap();
    let h = |a: u64| hist.get(&a).copied().unwrap_or(0);
    if top < 2 {
        return 1;
    }
    // end of the strictly falling run that starts at abundance 1
    let bottom = (1..top).find(|&a| h(a + 1) >= h(a)).unwrap_or(top);
    let rises_later = (bottom + 1..=top).any(|a| h(a) > h(bottom));
    if bottom == 1 || bottom == top || !rises_later {
        1
    } else {
        bottom
    }
}

#[test]
fn criterion_8_k_selection_oracle() {
    let start = Instant::now();
    let genome = random_genome("chr", 1_000_000, 0.5, 8);
    let reads = simulate_reads(&genome, 150, 30.0, 0.01, 80).unwrap();
    let ks: Vec<usize> = (15..=31).step_by(2).collect();
    let report_k = select_optimal_k(&reads, 15, 31, 2).unwrap();
    let mut best: Option<(u64, usize)> = None;
    let mut identity_failures = 0;
    let mut disagreements = 0;
    for (i, &k) in ks.iter().enumerate() {
        let mut counts: HashMap<&[u8], u64> = HashMap::new();
        let mut windows = 0u64;
        for r in &reads {
            for w in r.residues.windows(k) {
                if w.iter().all(|b| b"ACGT".contains(b)) {
                    *counts.entry(w).or_insert(0) += 1;
                    windows += 1;
                }
            }
        }
        let mut hist = std::collections::BTreeMap::new();
        for &c in counts.values() {
            *hist.entry(c).or_insert(0u64) += 1;
        }
        let spectrum = kmer_spectrum(&reads, k).unwrap();
        let mass: u64 = spectrum.histogram.iter().map(|(a, n)| a * n).sum();
        if mass != windows || spectrum.total() != windows {
            identity_failures += 1;
        }
        if spectrum.histogram != hist {
            disagreements += 1;
        }
        let valley = oracle_valley(&hist);
        let estimate: u64 = if valley <= 1 {
            counts.len() as u64
        } else {
            hist.range(valley + 1..).map(|(_, n)| n).sum()
        };
        let e = &report_k.estimates[i];
        if e.k != k || e.valley != valley || e.estimate != estimate {
            disagreements += 1;
        }
        if best.is_none_or(|(b, _)| estimate > b) {
            best = Some((estimate, k));
        }
    }
    let oracle_k = best.unwrap().1;
    let elapsed = start.elapsed();
    let ok = report_k.chosen_k == oracle_k
        && identity_failures == 0
        && disagreements == 0
        && elapsed < Duration::from_secs(180);
    report(
        8,
        "optimal k matches brute-force enumeration",
        ok,
        &format!(
            "{} reads, chosen k = {} (oracle {oracle_k}), {identity_failures} mass-identity failures, \
             {disagreements} disagreements, {elapsed:.1?}",
            reads.len(),
            report_k.chosen_k
        ),
    );
}

// ---------------------------------------------------------------- 9

#[test]
fn criterion_9_null_control() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.synth.insertions_per_sequence = 0;
    cfg.pipeline.kselect = false;
    cfg.pipeline.learning_curve = false;
    let cfg = cfg.normalized();
    let outcome = pipeline(&cfg, dir.path()).unwrap();
    let auc = outcome.test.auc;
    report(
        9,
        "no planted signal gives chance AUC",
        (auc - 0.5).abs() <= 0.05,
        &format!("test AUC {auc:.4}"),
    );
}

// ---------------------------------------------------------------- 10

fn run_pipeline(spec: &Path, out: &Path, threads: &str) {
    let status = Command::new(env!("CARGO_BIN_EXE_kmerlens"))
        .args(["pipeline", "--spec"])
        .arg(spec)
        .arg("--out")
        .arg(out)
        .args(["--threads", threads])
        .status()
        .unwrap();
    assert!(status.success(), "pipeline exited with {status}");
}

fn normalized_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    snapshot(dir)
        .unwrap()
        .into_iter()
        .map(|(name, bytes)| {
            if name == "run.toml" {
                let text = String::from_utf8(bytes).unwrap();
                (name, normalize_manifest(&text).into_bytes())
            } else {
                (name, bytes)
            }
        })
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    // every stage enabled on a reduced corpus
    std::fs::write(
        &spec,
        "seed = 11\n\
         [synth]\nn_class0 = 300\nn_class1 = 40\nmin_len = 300\nmax_len = 600\n\
         [model]\nn_trees = 40\n\
         [cv]\nfolds = 4\n\
         [kselect]\nk_min = 15\nk_max = 21\n\
         [select]\nmax_m = 8\ncv_folds = 3\n\
         [pipeline]\ncompare_encodings = true\ncompare_models = true\n",
    )
    .unwrap();
    let runs = [("a", "8"), ("b", "8"), ("c", "1")];
    for (name, threads) in runs {
        run_pipeline(&spec, &dir.path().join(name), threads);
    }
    let snaps: Vec<_> = runs
        .iter()
        .map(|(name, _)| normalized_snapshot(&dir.path().join(name)))
        .collect();
    let files = snaps[0].len();
    let differing: Vec<String> = snaps[0]
        .iter()
        .zip(&snaps[1])
        .zip(&snaps[2])
        .filter(|((a, b), c)| a != b || a != c)
        .map(|((a, _), _)| a.0.clone())
        .collect();
    let same_layout = snaps[1].len() == files && snaps[2].len() == files;
    report(
        10,
        "byte-identical pipeline output across runs and thread counts",
        same_layout && differing.is_empty() && files > 30,
        &format!(
            "{files} files compared over runs with 8, 8 and 1 threads, differing: {differing:?}"
        ),
    );
}
