//! Subcommand bodies. Each writes its artifacts into an existing output
//! directory and returns what later stages or callers need.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use kmerlens::encode::{
    encode_corpus, encode_graph_features, encode_kmer_counts, EncodingScheme, KmerDictionary,
};
use kmerlens::eval::{
    cross_validate as run_cv, evaluate as run_evaluate, fit_balanced,
    learning_curve as run_learning_curve, roc_auc, write_learning_curve_tsv, write_roc_tsv,
    CrossValidation, Evaluation, Summary,
};
use kmerlens::explain::{
    incremental_auc_curve, mean_abs_shap, shap_tree_batch, write_attributions_tsv, FeatureRanking,
    SelectionCurve,
};
use kmerlens::fasta::{
    chunk_sequence, sequence_stats, write_fasta, write_stats_tsv, SequenceRecord,
};
use kmerlens::kselect::{select_optimal_k_with, KRange, KSelectionReport};
use kmerlens::models::{save_model, ModelKind, TreeEnsembleModel};
use kmerlens::sampling::{balance as run_balance, train_test_split, SmoteConfig};
use kmerlens::synth::{generate_dataset, write_manifest_tsv, SynthDataset};

use crate::config::{parse_model_kind, EncodeSection, RunConfig};
use crate::io::{create_dir, open_input, write_dataset, write_file, write_text, StoredDataset};
use crate::svg;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

/// Splits labelled records into windows when `encode.chunk` is set; each
/// window inherits its parent's label.
pub fn chunk_records(
    records: Vec<SequenceRecord>,
    labels: Vec<u8>,
    enc: &EncodeSection,
) -> Result<(Vec<SequenceRecord>, Vec<u8>)> {
    let Some(window) = enc.chunk else {
        return Ok((records, labels));
    };
    let mut out = Vec::new();
    let mut out_labels = Vec::new();
    for (r, y) in records.iter().zip(labels) {
        for c in chunk_sequence(r, window, enc.keep_tail)? {
            out.push(c);
            out_labels.push(y);
        }
    }
    Ok((out, out_labels))
}

pub fn stats(records: &[SequenceRecord], out: &Path) -> Result<()> {
    let st = sequence_stats(records);
    write_file(&out.join("stats.tsv"), |w| {
        Ok(write_stats_tsv(w, records, &st)?)
    })?;
    let fmt = |v: Option<f64>| v.map_or("NA".to_string(), |v| v.to_string());
    write_file(&out.join("summary.tsv"), |w| {
        writeln!(w, "count\tmin\tmedian\tmean\tmax\tiqr_outliers")?;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            st.count,
            fmt(st.min.map(|v| v as f64)),
            fmt(st.median),
            fmt(st.mean),
            fmt(st.max.map(|v| v as f64)),
            st.iqr_outliers.len()
        )?;
        Ok(())
    })?;
    write_text(
        &out.join("lengths.svg"),
        &svg::histogram_chart("Sequence lengths", "length (bp)", &st.lengths, 30),
    )
}

pub fn select_k(
    records: &[SequenceRecord],
    cfg: &RunConfig,
    out: &Path,
) -> Result<KSelectionReport> {
    let ks = &cfg.kselect;
    let report = select_optimal_k_with(
        records,
        KRange {
            k_min: ks.k_min,
            k_max: ks.k_max,
            step: ks.step,
        },
        ks.smoothing,
    )?;
    write_file(&out.join("kselect.tsv"), |w| {
        writeln!(w, "k\tvalley\testimate\tdistinct\ttotal\tchosen")?;
        for e in &report.estimates {
            let chosen = u8::from(e.k == report.chosen_k);
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{chosen}",
                e.k, e.valley, e.estimate, e.distinct, e.total
            )?;
        }
        Ok(())
    })?;
    write_file(&out.join("spectra.tsv"), |w| {
        writeln!(w, "k\tabundance\tdistinct")?;
        for s in &report.spectra {
            for (a, n) in &s.histogram {
                writeln!(w, "{}\t{a}\t{n}", s.k)?;
            }
        }
        Ok(())
    })?;
    for (s, e) in report.spectra.iter().zip(&report.estimates) {
        let hist: Vec<(u64, u64)> = s.histogram.iter().map(|(&a, &n)| (a, n)).collect();
        write_text(
            &out.join(format!("spectrum_k{}.svg", s.k)),
            &svg::spectrum_chart(s.k, &hist, e.valley),
        )?;
    }
    let pts: Vec<(f64, f64)> = report
        .estimates
        .iter()
        .map(|e| (e.k as f64, e.estimate as f64))
        .collect();
    write_text(
        &out.join("estimates.svg"),
        &svg::line_chart(
            "Genomic k-mers above the error valley",
            "k",
            "estimate",
            &[("estimate", pts)],
            false,
        ),
    )?;
    Ok(report)
}

/// Encodes labelled records. A supplied dictionary fixes the column space
/// for the `kmer` and `graph` schemes so held-out data lines up with a
/// training set.
pub fn encode(
    records: &[SequenceRecord],
    labels: Vec<u8>,
    scheme: &EncodingScheme,
    dictionary: Option<KmerDictionary>,
) -> Result<StoredDataset> {
    let ids = records.iter().map(|r| r.id.clone()).collect();
    let (scheme, matrix, dictionary) = match (scheme, dictionary) {
        (EncodingScheme::Kmer { k, .. }, Some(dict)) => {
            if dict.k() != *k {
                return Err(CliError::Usage(format!(
                    "dictionary holds {}-mers but k = {k}",
                    dict.k()
                )));
            }
            (
                scheme.clone(),
                encode_kmer_counts(records, &dict),
                Some(dict),
            )
        }
        (EncodingScheme::Graph { k, .. }, Some(dict)) => (
            scheme.clone(),
            encode_graph_features(records, *k, &dict)?,
            Some(dict),
        ),
        (_, Some(_)) => {
            return Err(CliError::Usage(
                "--dictionary only applies to the kmer and graph schemes".into(),
            ))
        }
        (_, None) => {
            let enc = encode_corpus(records, scheme)?;
            (enc.scheme, enc.matrix, enc.dictionary)
        }
    };
    let data = kmerlens::sampling::LabeledDataset::new(matrix, labels, ids)?;
    Ok(StoredDataset {
        data,
        scheme,
        dictionary,
    })
}

pub fn split(
    ds: &StoredDataset,
    cfg: &RunConfig,
    out: &Path,
) -> Result<(StoredDataset, StoredDataset)> {
    let (train, test) = train_test_split(&ds.data, cfg.split.train_ratio, cfg.seed)?;
    let (train, test) = (ds.with_data(train), ds.with_data(test));
    write_dataset(&out.join("train"), &train)?;
    write_dataset(&out.join("test"), &test)?;
    Ok((train, test))
}

pub fn balance(ds: &StoredDataset, cfg: &RunConfig, out: &Path) -> Result<StoredDataset> {
    let balanced = run_balance(
        &ds.data,
        &SmoteConfig {
            k_neighbors: cfg.smote.k_neighbors,
            seed: cfg.seed,
        },
    )?;
    let balanced = ds.with_data(balanced);
    write_dataset(out, &balanced)?;
    Ok(balanced)
}

/// Fits the configured model, balancing first when SMOTE is enabled.
pub fn train(
    ds: &StoredDataset,
    cfg: &RunConfig,
    kind: ModelKind,
    out: &Path,
) -> Result<TreeEnsembleModel> {
    let model = fit_balanced(
        &ds.data,
        kind,
        &cfg.train_config(kind)?,
        cfg.smote().as_ref(),
    )?;
    save_model(&model, &out.join("model.json"))?;
    Ok(model)
}

pub fn evaluate(
    model: &TreeEnsembleModel,
    ds: &StoredDataset,
    cfg: &RunConfig,
    out: &Path,
) -> Result<Evaluation> {
    let e = run_evaluate(model, &ds.data, cfg.evaluate.threshold)?;
    write_file(&out.join("metrics.tsv"), |w| Ok(e.report.write_tsv(w)?))?;
    write_file(&out.join("summary.tsv"), |w| {
        writeln!(w, "{}", Summary::TSV_HEADER)?;
        writeln!(w, "{}", Summary::of(&e).tsv_fields())?;
        Ok(())
    })?;
    write_file(&out.join("predictions.tsv"), |w| {
        writeln!(w, "id\tlabel\tprobability\tpredicted")?;
        for ((id, y), p) in ds
            .data
            .ids
            .iter()
            .zip(&ds.data.labels)
            .zip(&e.probabilities)
        {
            writeln!(
                w,
                "{id}\t{y}\t{p}\t{}",
                u8::from(*p > cfg.evaluate.threshold)
            )?;
        }
        Ok(())
    })?;
    let cm = e.report.confusion;
    write_text(
        &out.join("confusion.svg"),
        &svg::confusion_chart(cm.tn, cm.fp, cm.fn_, cm.tp),
    )?;
    if let Ok(roc) = roc_auc(&ds.data.labels, &e.probabilities) {
        write_file(&out.join("roc.tsv"), |w| Ok(write_roc_tsv(&roc, w)?))?;
        write_text(&out.join("roc.svg"), &svg::roc_chart(&roc.points, roc.auc))?;
    } else {
        log::warn!("evaluation set holds a single class; ROC skipped");
    }
    Ok(e)
}

pub fn cross_validate(
    ds: &StoredDataset,
    cfg: &RunConfig,
    kind: ModelKind,
    out: &Path,
) -> Result<CrossValidation> {
    let cv = run_cv(
        &ds.data,
        cfg.cv.folds,
        kind,
        &cfg.train_config(kind)?,
        cfg.smote().as_ref(),
        cfg.seed,
    )?;
    write_file(&out.join("cv.tsv"), |w| Ok(cv.write_tsv(w)?))?;
    Ok(cv)
}

pub fn learning_curve(
    ds: &StoredDataset,
    cfg: &RunConfig,
    kind: ModelKind,
    out: &Path,
) -> Result<()> {
    let points = run_learning_curve(
        &ds.data,
        &cfg.learning_curve.fractions,
        cfg.split.train_ratio,
        kind,
        &cfg.train_config(kind)?,
        cfg.smote().as_ref(),
        cfg.seed,
    )?;
    write_file(&out.join("learning_curve.tsv"), |w| {
        Ok(write_learning_curve_tsv(&points, w)?)
    })?;
    let train: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.n_train as f64, p.train_score))
        .collect();
    let val: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p.n_train as f64, p.validation_score))
        .collect();
    write_text(
        &out.join("learning_curve.svg"),
        &svg::line_chart(
            "Learning curve",
            "training rows",
            "accuracy",
            &[("train", train), ("validation", val)],
            false,
        ),
    )
}

/// Test-split scores of each configured encoding, all with the same model
/// settings, split and seed.
pub fn compare_encodings(
    records: &[SequenceRecord],
    labels: &[u8],
    cfg: &RunConfig,
    out: &Path,
) -> Result<Vec<(String, usize, Summary)>> {
    let kind = cfg.model_kind()?;
    let train_cfg = cfg.train_config(kind)?;
    let mut rows = Vec::new();
    for name in &cfg.compare.schemes {
        let scheme = cfg.encode.scheme_named(name)?;
        let ds = encode(records, labels.to_vec(), &scheme, None)?;
        let (train, test) = train_test_split(&ds.data, cfg.split.train_ratio, cfg.seed)?;
        let model = fit_balanced(&train, kind, &train_cfg, cfg.smote().as_ref())?;
        let e = run_evaluate(&model, &test, cfg.evaluate.threshold)?;
        rows.push((name.clone(), ds.data.n_cols(), Summary::of(&e)));
    }
    write_file(&out.join("encodings.tsv"), |w| {
        writeln!(w, "scheme\tn_cols\t{}", Summary::TSV_HEADER)?;
        for (name, n_cols, s) in &rows {
            writeln!(w, "{name}\t{n_cols}\t{}", s.tsv_fields())?;
        }
        Ok(())
    })?;
    Ok(rows)
}

/// Held-out scores plus cross-validated mean and sd for each model kind.
pub fn compare_models(ds: &StoredDataset, cfg: &RunConfig, out: &Path) -> Result<()> {
    let (train, test) = train_test_split(&ds.data, cfg.split.train_ratio, cfg.seed)?;
    let mut lines = Vec::new();
    for name in &cfg.compare.models {
        let kind = parse_model_kind(name)?;
        let train_cfg = cfg.train_config(kind)?;
        let model = fit_balanced(&train, kind, &train_cfg, cfg.smote().as_ref())?;
        let e = run_evaluate(&model, &test, cfg.evaluate.threshold)?;
        let cv = run_cv(
            &ds.data,
            cfg.cv.folds,
            kind,
            &train_cfg,
            cfg.smote().as_ref(),
            cfg.seed,
        )?;
        lines.push(format!(
            "{}\ttest\t{}",
            kind.name(),
            Summary::of(&e).tsv_fields()
        ));
        lines.push(format!(
            "{}\tcv_mean\t{}",
            kind.name(),
            cv.mean.tsv_fields()
        ));
        lines.push(format!("{}\tcv_sd\t{}", kind.name(), cv.sd.tsv_fields()));
    }
    write_file(&out.join("models.tsv"), |w| {
        writeln!(w, "model\tevaluation\t{}", Summary::TSV_HEADER)?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}

/// SHAP ranking of every column over `ds`; writes the top `top` entries,
/// per-instance attributions and a summary plot.
pub fn explain(
    model: &TreeEnsembleModel,
    ds: &StoredDataset,
    top: usize,
    out: &Path,
) -> Result<FeatureRanking> {
    model.check_features(&ds.data.features)?;
    let attributions = shap_tree_batch(model, &ds.data.features.rows);
    let ranking = FeatureRanking::from_scores(&mean_abs_shap(&attributions, ds.data.n_cols()));
    write_file(&out.join("ranking.tsv"), |w| {
        Ok(ranking.write_tsv(w, |c| ds.label(c), Some(top))?)
    })?;
    write_file(&out.join("attributions.tsv"), |w| {
        Ok(write_attributions_tsv(&attributions, &ds.data.ids, w)?)
    })?;
    let rows: Vec<(String, Vec<(f64, f64)>)> = ranking
        .top(top.min(ranking.len()))
        .into_iter()
        .map(|col| {
            let values: Vec<f64> = ds.data.features.rows.iter().map(|r| r.get(col)).collect();
            let (lo, hi) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
                    (l.min(v), h.max(v))
                });
            let span = if hi > lo { hi - lo } else { 1.0 };
            let pts = attributions
                .iter()
                .zip(&values)
                .map(|(a, &v)| (a.phi(col), (v - lo) / span))
                .collect();
            (ds.label(col), pts)
        })
        .collect();
    write_text(&out.join("shap_summary.svg"), &svg::beeswarm_chart(&rows))?;
    Ok(ranking)
}

/// Reads a ranking written by `explain`.
pub fn read_ranking(path: &Path) -> Result<FeatureRanking> {
    let mut entries = Vec::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [_, col, _, score] => col.parse::<usize>().ok().zip(score.parse::<f64>().ok()),
            _ => None,
        };
        let entry = parsed.ok_or_else(|| {
            CliError::Data(format!(
                "{} line {}: expected rank, column, feature, mean_abs_shap",
                path.display(),
                i + 1
            ))
        })?;
        entries.push(entry);
    }
    Ok(FeatureRanking { entries })
}

pub fn select_features(
    ranking: &FeatureRanking,
    train: &StoredDataset,
    test: &StoredDataset,
    cfg: &RunConfig,
    out: &Path,
) -> Result<SelectionCurve> {
    if ranking
        .entries
        .iter()
        .any(|&(c, _)| c >= train.data.n_cols())
    {
        return Err(CliError::Data(
            "ranking names columns outside the training data".into(),
        ));
    }
    if cfg.select.max_m > ranking.len() {
        return Err(CliError::Usage(format!(
            "select.max_m = {} exceeds the {} ranked features; lower it or rerun explain with a larger --top",
            cfg.select.max_m,
            ranking.len()
        )));
    }
    let curve = incremental_auc_curve(ranking, &train.data, &test.data, &cfg.curve_config()?)?;
    write_file(&out.join("curve.tsv"), |w| {
        Ok(curve.write_tsv(w, |c| train.label(c))?)
    })?;
    write_file(&out.join("selected.tsv"), |w| {
        writeln!(w, "rank\tcolumn\tfeature")?;
        for (r, &c) in curve.chosen_columns().iter().enumerate() {
            writeln!(w, "{}\t{c}\t{}", r + 1, train.label(c))?;
        }
        Ok(())
    })?;
    if !curve.selection.stabilized {
        log::warn!(
            "AUC curve never stabilized; chose the maximum at m = {}",
            curve.selection.chosen_m
        );
    }
    let m = |f: &dyn Fn(&kmerlens::explain::CurvePoint) -> Option<f64>| -> Vec<(f64, f64)> {
        curve
            .points
            .iter()
            .filter_map(|p| f(p).map(|v| (p.m as f64, v)))
            .collect()
    };
    let mut series = vec![("held-out AUC", m(&|p| Some(p.test_auc)))];
    if curve.points.iter().any(|p| p.cv_auc.is_some()) {
        series.push(("CV AUC", m(&|p| p.cv_auc)));
        series.push(("selection signal", m(&|p| Some(p.selection_auc()))));
    }
    write_text(
        &out.join("curve.svg"),
        &svg::line_chart(
            &format!("Incremental AUC (chosen m = {})", curve.selection.chosen_m),
            "top-m features",
            "AUC",
            &series,
            false,
        ),
    )?;
    Ok(curve)
}

pub fn synth(cfg: &RunConfig, out: &Path) -> Result<SynthDataset> {
    let ds = generate_dataset(&cfg.synth)?;
    write_file(&out.join("class0.fa"), |w| {
        Ok(write_fasta(w, &ds.class0, 80)?)
    })?;
    write_file(&out.join("class1.fa"), |w| {
        Ok(write_fasta(w, &ds.class1, 80)?)
    })?;
    write_file(&out.join("motifs.tsv"), |w| {
        writeln!(w, "index\tmotif")?;
        for (i, m) in ds.motifs.iter().enumerate() {
            writeln!(w, "{i}\t{m}")?;
        }
        Ok(())
    })?;
    write_file(&out.join("insertions.tsv"), |w| {
        Ok(write_manifest_tsv(&ds.manifest, w)?)
    })?;
    Ok(ds)
}

/// Headline results of a pipeline run.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub motifs: Vec<String>,
    pub test: Summary,
    pub ranking_labels: Vec<String>,
    pub curve: SelectionCurve,
}

/// synth → stats → k selection → encode → split → train → evaluate →
/// cross-validate → learning curve → comparisons → explain → select,
/// each stage in its own subdirectory.
pub fn pipeline(cfg: &RunConfig, out: &Path) -> Result<PipelineOutcome> {
    let stage = |name: &str| -> Result<std::path::PathBuf> {
        let dir = out.join(name);
        create_dir(&dir)?;
        Ok(dir)
    };
    let synth_ds = synth(cfg, &stage("synth")?)?;
    let mut records = synth_ds.class0.clone();
    records.extend(synth_ds.class1.iter().cloned());
    let labels: Vec<u8> = synth_ds
        .class0
        .iter()
        .map(|_| 0)
        .chain(synth_ds.class1.iter().map(|_| 1))
        .collect();
    let (records, labels) = chunk_records(records, labels, &cfg.encode)?;
    stats(&records, &stage("stats")?)?;
    if cfg.pipeline.kselect {
        select_k(&records, cfg, &stage("kselect")?)?;
    }
    let ds = encode(&records, labels.clone(), &cfg.encode.scheme()?, None)?;
    write_dataset(&out.join("data"), &ds)?;
    let (train_ds, test_ds) = split(&ds, cfg, &stage("split")?)?;
    let kind = cfg.model_kind()?;
    let model = train(&train_ds, cfg, kind, &stage("model")?)?;
    let e = evaluate(&model, &test_ds, cfg, &stage("evaluate")?)?;
    if cfg.pipeline.cross_validate {
        cross_validate(&ds, cfg, kind, &stage("cv")?)?;
    }
    if cfg.pipeline.learning_curve {
        learning_curve(&ds, cfg, kind, &stage("learning_curve")?)?;
    }
    if cfg.pipeline.compare_encodings {
        compare_encodings(&records, &labels, cfg, &stage("compare_encodings")?)?;
    }
    if cfg.pipeline.compare_models {
        compare_models(&ds, cfg, &stage("compare_models")?)?;
    }
    let ranking = explain(&model, &test_ds, cfg.explain.top, &stage("explain")?)?;
    let mut select_cfg = cfg.clone();
    if select_cfg.select.max_m > ranking.len() {
        log::warn!(
            "only {} features to rank; curve stops at m = {}",
            ranking.len(),
            ranking.len()
        );
        select_cfg.select.max_m = ranking.len();
    }
    let curve = select_features(
        &ranking,
        &train_ds,
        &test_ds,
        &select_cfg,
        &stage("select")?,
    )?;
    let ranking_labels = ranking
        .top(ranking.len().min(cfg.explain.top))
        .into_iter()
        .map(|c| ds.label(c))
        .collect();
    Ok(PipelineOutcome {
        motifs: synth_ds.motifs,
        test: Summary::of(&e),
        ranking_labels,
        curve,
    })
}

/// Every regular file under `dir`, relative path → bytes, sorted by path.
pub fn snapshot(dir: &Path) -> std::io::Result<Vec<(String, Vec<u8>)>> {
    fn walk(root: &Path, dir: &Path, acc: &mut Vec<(String, Vec<u8>)>) -> std::io::Result<()> {
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.is_dir() {
                walk(root, &path, acc)?;
            } else {
                let rel = path
                    .strip_prefix(root)
                    .expect("under root")
                    .to_string_lossy()
                    .replace('\\', "/");
                acc.push((rel, fs::read(&path)?));
            }
        }
        Ok(())
    }
    let mut acc = Vec::new();
    walk(dir, dir, &mut acc)?;
    acc.sort();
    Ok(acc)
}
