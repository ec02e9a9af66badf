//! Command-line front end for the `kmerlens` library.
//!
//! Every subcommand reads a TOML run config (`--config`, or `--spec` for
//! `synth` and `pipeline`), applies `--set key=value` overrides and its own
//! flags, writes into a fresh output directory and echoes the effective
//! config there as `run.toml`. Exit codes: 0 success, 1 usage error, 2 data
//! error.

pub mod commands;
pub mod config;
pub mod io;
pub mod svg;

use std::ffi::OsString;
use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use kmerlens::encode::KmerDictionary;
use kmerlens::models::load_model;

use crate::config::{apply_overrides, load_config, parse_assignment, parse_value, RunConfig};
use crate::io::{
    open_input, prepare_out_dir, read_dataset, read_label_table, read_records, write_dataset,
    write_manifest,
};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Bad flags, config keys or parameter values.
    Usage(String),
    /// Missing, malformed or mismatched input data.
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<kmerlens::Error> for CliError {
    fn from(e: kmerlens::Error) -> Self {
        match e {
            kmerlens::Error::InvalidParameter(_) | kmerlens::Error::TooManyFeatures { .. } => {
                CliError::Usage(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "kmerlens",
    version,
    about = "K-mer based differential sequence discovery with tree ensembles and SHAP"
)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Run config (TOML); a previous run's run.toml also works
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. --set model.n_trees=50 (repeatable)
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Global seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 or unset uses every core. Results do not depend on it
    #[arg(long, global = true, env = "KMERLENS_THREADS")]
    pub threads: Option<usize>,
    /// Output directory [default: kmerlens-<subcommand>]
    #[arg(long, short, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Replace a non-empty output directory
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct DataArg {
    /// Dataset directory written by encode, split or balance
    #[arg(long, value_name = "DIR")]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ModelArg {
    /// Model kind: tree, forest or gbdt [config: model.kind]
    #[arg(long = "model", value_name = "KIND")]
    pub kind: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-sequence length table, summary and length histogram
    Stats {
        #[arg(required = true)]
        fasta: Vec<PathBuf>,
    },
    /// Scan k, locate each spectrum's error valley and pick the k with the most genomic k-mers
    SelectK {
        #[arg(required = true)]
        fasta: Vec<PathBuf>,
        #[arg(long)]
        k_min: Option<usize>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        step: Option<usize>,
        /// Odd smoothing window for the valley search
        #[arg(long)]
        smoothing: Option<usize>,
    },
    /// Vectorize labelled sequences into a dataset directory
    Encode {
        /// FASTA files labelled through --labels
        fasta: Vec<PathBuf>,
        /// FASTA whose records are class 0 (repeatable)
        #[arg(long)]
        class0: Vec<PathBuf>,
        /// FASTA whose records are class 1 (repeatable)
        #[arg(long)]
        class1: Vec<PathBuf>,
        /// TSV of id<TAB>label for the positional FASTA files
        #[arg(long, value_name = "TSV")]
        labels: Option<PathBuf>,
        /// sequential, onehot, kmer, graph or image [config: encode.scheme]
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        max_len: Option<usize>,
        #[arg(long)]
        width: Option<usize>,
        #[arg(long)]
        height: Option<usize>,
        /// Split records into windows of this many bases first
        #[arg(long)]
        chunk: Option<usize>,
        /// Reuse the column space of an existing dictionary.tsv
        #[arg(long, value_name = "TSV")]
        dictionary: Option<PathBuf>,
    },
    /// Shuffle a dataset into train/ and test/ parts
    Split {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        train_ratio: Option<f64>,
    },
    /// Oversample the minority class with SMOTE
    Balance {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        k_neighbors: Option<usize>,
    },
    /// Fit a model (SMOTE first when smote.enabled)
    Train {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        n_trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Score a saved model on a dataset
    Evaluate {
        /// model.json written by train
        #[arg(long = "model", value_name = "FILE")]
        model_file: PathBuf,
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Stratified k-fold cross-validation
    CrossValidate {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Accuracy against training-set size
    LearningCurve {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        model: ModelArg,
    },
    /// Same split and model across encodings (compare.schemes)
    CompareEncodings {
        #[arg(long, required = true)]
        class0: Vec<PathBuf>,
        #[arg(long, required = true)]
        class1: Vec<PathBuf>,
    },
    /// Held-out and cross-validated scores per model kind (compare.models)
    CompareModels {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        folds: Option<usize>,
    },
    /// SHAP attributions and the mean |SHAP| feature ranking
    Explain {
        #[arg(long = "model", value_name = "FILE")]
        model_file: PathBuf,
        /// Explain set, usually the held-out split
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        top: Option<usize>,
    },
    /// Incremental-AUC curve over the ranking and the stabilized feature count
    SelectFeatures {
        #[arg(long, value_name = "DIR")]
        train: PathBuf,
        #[arg(long, value_name = "DIR")]
        test: PathBuf,
        /// ranking.tsv from explain; computed from a fresh model when absent
        #[arg(long, value_name = "TSV")]
        ranking: Option<PathBuf>,
        #[arg(long)]
        max_m: Option<usize>,
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
    },
    /// Generate a planted-motif dataset
    Synth {
        /// Run config holding a [synth] table
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
    /// Run every stage on a synthetic dataset
    Pipeline {
        #[arg(long, value_name = "FILE")]
        spec: Option<PathBuf>,
    },
}

fn set<T: Into<toml::Value>>(acc: &mut Vec<(String, toml::Value)>, key: &str, v: Option<T>) {
    if let Some(v) = v {
        acc.push((key.to_string(), v.into()));
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::SelectK { .. } => "select-k",
            Command::Encode { .. } => "encode",
            Command::Split { .. } => "split",
            Command::Balance { .. } => "balance",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::CrossValidate { .. } => "cross-validate",
            Command::LearningCurve { .. } => "learning-curve",
            Command::CompareEncodings { .. } => "compare-encodings",
            Command::CompareModels { .. } => "compare-models",
            Command::Explain { .. } => "explain",
            Command::SelectFeatures { .. } => "select-features",
            Command::Synth { .. } => "synth",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    /// Flag values as config overrides, applied after `--set`.
    fn overrides(&self) -> Vec<(String, toml::Value)> {
        let mut o = Vec::new();
        let int = |v: &Option<usize>| v.map(|v| v as i64);
        match self {
            Command::SelectK {
                k_min,
                k_max,
                step,
                smoothing,
                ..
            } => {
                set(&mut o, "kselect.k_min", int(k_min));
                set(&mut o, "kselect.k_max", int(k_max));
                set(&mut o, "kselect.step", int(step));
                set(&mut o, "kselect.smoothing", int(smoothing));
            }
            Command::Encode {
                scheme,
                k,
                min_count,
                max_len,
                width,
                height,
                chunk,
                ..
            } => {
                set(&mut o, "encode.scheme", scheme.clone());
                set(&mut o, "encode.k", int(k));
                set(&mut o, "encode.min_count", min_count.map(|v| v as i64));
                set(&mut o, "encode.max_len", int(max_len));
                set(&mut o, "encode.width", int(width));
                set(&mut o, "encode.height", int(height));
                set(&mut o, "encode.chunk", int(chunk));
            }
            Command::Split { train_ratio, .. } => set(&mut o, "split.train_ratio", *train_ratio),
            Command::Balance { k_neighbors, .. } => {
                set(&mut o, "smote.k_neighbors", int(k_neighbors))
            }
            Command::Train {
                model,
                n_trees,
                max_depth,
                ..
            } => {
                set(&mut o, "model.kind", model.kind.clone());
                set(&mut o, "model.n_trees", int(n_trees));
                set(&mut o, "model.max_depth", int(max_depth));
            }
            Command::Evaluate { threshold, .. } => set(&mut o, "evaluate.threshold", *threshold),
            Command::CrossValidate { model, folds, .. } => {
                set(&mut o, "model.kind", model.kind.clone());
                set(&mut o, "cv.folds", int(folds));
            }
            Command::LearningCurve { model, .. } => set(&mut o, "model.kind", model.kind.clone()),
            Command::CompareModels { folds, .. } => set(&mut o, "cv.folds", int(folds)),
            Command::Explain { top, .. } => set(&mut o, "explain.top", int(top)),
            Command::SelectFeatures {
                max_m,
                epsilon,
                patience,
                ..
            } => {
                set(&mut o, "select.max_m", int(max_m));
                set(&mut o, "select.epsilon", *epsilon);
                set(&mut o, "select.patience", int(patience));
            }
            _ => {}
        }
        o
    }

    fn spec(&self) -> Option<&Path> {
        match self {
            Command::Synth { spec } | Command::Pipeline { spec } => spec.as_deref(),
            _ => None,
        }
    }

    fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Command::Stats { fasta } | Command::SelectK { fasta, .. } => fasta.clone(),
            Command::Encode {
                fasta,
                class0,
                class1,
                labels,
                dictionary,
                ..
            } => fasta
                .iter()
                .chain(class0)
                .chain(class1)
                .chain(labels)
                .chain(dictionary)
                .cloned()
                .collect(),
            Command::Split { data, .. }
            | Command::Balance { data, .. }
            | Command::Train { data, .. }
            | Command::CrossValidate { data, .. }
            | Command::LearningCurve { data, .. }
            | Command::CompareModels { data, .. } => vec![data.data.clone()],
            Command::Evaluate {
                model_file, data, ..
            }
            | Command::Explain {
                model_file, data, ..
            } => {
                vec![model_file.clone(), data.data.clone()]
            }
            Command::CompareEncodings { class0, class1 } => {
                class0.iter().chain(class1).cloned().collect()
            }
            Command::SelectFeatures {
                train,
                test,
                ranking,
                ..
            } => [train.clone(), test.clone()]
                .into_iter()
                .chain(ranking.clone())
                .collect(),
            Command::Synth { .. } | Command::Pipeline { .. } => Vec::new(),
        }
    }
}

/// File config, then `--set`, then `--seed`, then subcommand flags.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let file = match (cli.global.config.as_deref(), cli.command.spec()) {
        (Some(_), Some(_)) => {
            return Err(CliError::Usage(
                "pass either --config or --spec, not both".into(),
            ))
        }
        (Some(p), None) | (None, Some(p)) => Some(p),
        (None, None) => None,
    };
    let base = match file {
        Some(p) => load_config(p)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli
        .global
        .set
        .iter()
        .map(|s| parse_assignment(s))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(seed) = cli.global.seed {
        overrides.push(("seed".into(), parse_value(&seed.to_string())));
    }
    overrides.extend(cli.command.overrides());
    Ok(apply_overrides(&base, &overrides)?.normalized())
}

fn labelled_fasta(
    class0: &[PathBuf],
    class1: &[PathBuf],
) -> Result<(Vec<kmerlens::fasta::SequenceRecord>, Vec<u8>), CliError> {
    let zero = read_records(class0)?;
    let one = read_records(class1)?;
    let labels = zero
        .iter()
        .map(|_| 0)
        .chain(one.iter().map(|_| 1))
        .collect();
    Ok((zero.into_iter().chain(one).collect(), labels))
}

fn execute(cli: &Cli, cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    use commands as c;
    match &cli.command {
        Command::Stats { fasta } => c::stats(&read_records(fasta)?, out),
        Command::SelectK { fasta, .. } => {
            let report = c::select_k(&read_records(fasta)?, cfg, out)?;
            println!("chosen k = {}", report.chosen_k);
            Ok(())
        }
        Command::Encode {
            fasta,
            class0,
            class1,
            labels,
            dictionary,
            ..
        } => {
            let (mut records, mut ys) = labelled_fasta(class0, class1)?;
            if !fasta.is_empty() {
                let table_path = labels.as_ref().ok_or_else(|| {
                    CliError::Usage(
                        "positional FASTA files need --labels (or use --class0/--class1)".into(),
                    )
                })?;
                let table = read_label_table(table_path)?;
                for r in read_records(fasta)? {
                    let y = *table.get(&r.id).ok_or_else(|| {
                        CliError::Data(format!(
                            "record `{}` has no label in {}",
                            r.id,
                            table_path.display()
                        ))
                    })?;
                    records.push(r);
                    ys.push(y);
                }
            }
            if records.is_empty() {
                return Err(CliError::Usage(
                    "no input sequences; give FASTA files with --labels or --class0/--class1"
                        .into(),
                ));
            }
            let (records, ys) = c::chunk_records(records, ys, &cfg.encode)?;
            let scheme = cfg.encode.scheme()?;
            let dict = match (dictionary, &scheme) {
                (
                    Some(p),
                    kmerlens::encode::EncodingScheme::Kmer { min_count, .. }
                    | kmerlens::encode::EncodingScheme::Graph { min_count, .. },
                ) => Some(KmerDictionary::read_tsv(open_input(p)?, *min_count)?),
                (Some(_), _) => {
                    return Err(CliError::Usage(
                        "--dictionary only applies to the kmer and graph schemes".into(),
                    ))
                }
                (None, _) => None,
            };
            let ds = c::encode(&records, ys, &scheme, dict)?;
            write_dataset(out, &ds)?;
            println!(
                "encoded {} rows x {} columns",
                ds.data.len(),
                ds.data.n_cols()
            );
            Ok(())
        }
        Command::Split { data, .. } => c::split(&read_dataset(&data.data)?, cfg, out).map(|_| ()),
        Command::Balance { data, .. } => {
            c::balance(&read_dataset(&data.data)?, cfg, out).map(|_| ())
        }
        Command::Train { data, .. } => {
            c::train(&read_dataset(&data.data)?, cfg, cfg.model_kind()?, out)?;
            Ok(())
        }
        Command::Evaluate {
            model_file, data, ..
        } => {
            let model = load_model(model_file)?;
            let e = c::evaluate(&model, &read_dataset(&data.data)?, cfg, out)?;
            let auc = e.auc.map_or("NA".to_string(), |a| format!("{a:.4}"));
            println!("accuracy {:.4}  auc {auc}", e.report.accuracy);
            Ok(())
        }
        Command::CrossValidate { data, .. } => {
            let cv = c::cross_validate(&read_dataset(&data.data)?, cfg, cfg.model_kind()?, out)?;
            println!(
                "mean accuracy {:.4}  mean auc {:.4}",
                cv.mean.accuracy, cv.mean.auc
            );
            Ok(())
        }
        Command::LearningCurve { data, .. } => {
            c::learning_curve(&read_dataset(&data.data)?, cfg, cfg.model_kind()?, out)
        }
        Command::CompareEncodings { class0, class1 } => {
            let (records, labels) = labelled_fasta(class0, class1)?;
            let (records, labels) = c::chunk_records(records, labels, &cfg.encode)?;
            c::compare_encodings(&records, &labels, cfg, out).map(|_| ())
        }
        Command::CompareModels { data, .. } => {
            c::compare_models(&read_dataset(&data.data)?, cfg, out)
        }
        Command::Explain {
            model_file, data, ..
        } => {
            let model = load_model(model_file)?;
            c::explain(&model, &read_dataset(&data.data)?, cfg.explain.top, out).map(|_| ())
        }
        Command::SelectFeatures {
            train,
            test,
            ranking,
            ..
        } => {
            let train = read_dataset(train)?;
            let test = read_dataset(test)?;
            let ranking = match ranking {
                Some(p) => c::read_ranking(p)?,
                None => {
                    let kind = cfg.model_kind()?;
                    let model = kmerlens::eval::fit_balanced(
                        &train.data,
                        kind,
                        &cfg.train_config(kind)?,
                        cfg.smote().as_ref(),
                    )?;
                    kmerlens::explain::rank_features(&model, &test.data)?
                }
            };
            let curve = c::select_features(&ranking, &train, &test, cfg, out)?;
            println!(
                "chosen m = {}{}",
                curve.selection.chosen_m,
                if curve.selection.stabilized {
                    ""
                } else {
                    " (not stabilized)"
                }
            );
            Ok(())
        }
        Command::Synth { .. } => c::synth(cfg, out).map(|_| ()),
        Command::Pipeline { .. } => {
            let r = c::pipeline(cfg, out)?;
            println!(
                "test accuracy {:.4}  auc {:.4}  chosen m = {}",
                r.test.accuracy, r.test.auc, r.curve.selection.chosen_m
            );
            Ok(())
        }
    }
}

fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // a pool may already exist when called repeatedly in one process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads(cli.global.threads)?;
    let cfg = effective_config(cli)?;
    cfg.validate()?;
    let out = cli
        .global
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("kmerlens-{}", cli.command.name())));
    let out_abs = out.canonicalize().ok();
    for input in cli.command.inputs() {
        if !input.exists() {
            return Err(CliError::Data(format!(
                "input {} does not exist",
                input.display()
            )));
        }
        if let (Some(o), Ok(i)) = (&out_abs, input.canonicalize()) {
            if i.starts_with(o) {
                return Err(CliError::Usage(format!(
                    "input {} lies inside the output directory",
                    input.display()
                )));
            }
        }
    }
    prepare_out_dir(&out, cli.global.force)?;
    write_manifest(&out, cli.command.name(), &cli.command.inputs(), &cfg)?;
    execute(cli, &cfg, &out)
}

/// Parses `args`, runs, and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("kmerlens: {e}");
            e.exit_code()
        }
    }
}
