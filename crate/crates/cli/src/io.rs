//! Output directories, the on-disk dataset layout and the run manifest.

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use kmerlens::encode::{EncodedCorpus, EncodingScheme, KmerDictionary, SparseFeatureMatrix};
use kmerlens::fasta::{read_fasta, SequenceRecord};
use kmerlens::sampling::LabeledDataset;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::CliError;

pub const MANIFEST: &str = "run.toml";

/// Prepares `dir` for writing: it must be absent or empty unless `force`
/// is set, in which case previous contents are removed.
pub fn prepare_out_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    if dir.exists() {
        let occupied = fs::read_dir(dir)
            .map_err(|e| CliError::Data(format!("cannot read {}: {e}", dir.display())))?
            .next()
            .is_some();
        if occupied {
            if !force {
                return Err(CliError::Usage(format!(
                    "output directory {} is not empty; pass --force to replace it",
                    dir.display()
                )));
            }
            fs::remove_dir_all(dir)
                .map_err(|e| CliError::Data(format!("cannot clear {}: {e}", dir.display())))?;
        }
    }
    create_dir(dir)
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

/// Creates `path` and hands a buffered writer to `body`.
pub fn write_file(
    path: &Path,
    body: impl FnOnce(&mut BufWriter<File>) -> Result<(), CliError>,
) -> Result<(), CliError> {
    let file = File::create(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    body(&mut out)?;
    out.flush()
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn open_input(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::Data(format!("cannot open {}: {e}", path.display())))
}

pub fn read_records(paths: &[PathBuf]) -> Result<Vec<SequenceRecord>, CliError> {
    let mut all = Vec::new();
    for p in paths {
        if !p.is_file() {
            return Err(CliError::Data(format!(
                "input file {} does not exist",
                p.display()
            )));
        }
        all.extend(read_fasta(p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?);
    }
    Ok(all)
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` pins it.
    created_unix: u64,
    inputs: Vec<String>,
    config: &'a RunConfig,
}

fn created_unix() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or_else(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs())
        })
}

/// Echoes the effective config into `dir/run.toml`. The worker count is
/// left out because it never changes results.
pub fn write_manifest(
    dir: &Path,
    command: &str,
    inputs: &[PathBuf],
    config: &RunConfig,
) -> Result<(), CliError> {
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        created_unix: created_unix(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
        config,
    };
    let text = toml::to_string(&manifest).map_err(|e| CliError::Data(e.to_string()))?;
    write_text(
        &dir.join(MANIFEST),
        &format!("# kmerlens run manifest\n{text}"),
    )
}

/// Replaces the timestamp line of a manifest so two runs can be compared.
pub fn normalize_manifest(text: &str) -> String {
    text.lines()
        .map(|l| {
            if l.starts_with("created_unix") {
                "created_unix = 0"
            } else {
                l
            }
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetMeta {
    n_rows: usize,
    n_cols: usize,
    space: String,
    encoding: EncodingScheme,
}

/// An encoded, labelled dataset plus what is needed to name its columns.
#[derive(Debug, Clone)]
pub struct StoredDataset {
    pub data: LabeledDataset,
    pub scheme: EncodingScheme,
    pub dictionary: Option<KmerDictionary>,
}

impl StoredDataset {
    pub fn label(&self, col: usize) -> String {
        corpus_label(&self.scheme, self.dictionary.as_ref(), col)
    }

    pub fn with_data(&self, data: LabeledDataset) -> StoredDataset {
        StoredDataset {
            data,
            scheme: self.scheme.clone(),
            dictionary: self.dictionary.clone(),
        }
    }
}

/// Column label under `scheme`.
pub fn corpus_label(
    scheme: &EncodingScheme,
    dictionary: Option<&KmerDictionary>,
    col: usize,
) -> String {
    let probe = EncodedCorpus {
        scheme: scheme.clone(),
        matrix: SparseFeatureMatrix::new(0, Vec::new(), String::new()),
        dictionary: dictionary.cloned(),
    };
    probe.column_label(col)
}

/// Layout: `dataset.toml` (shape, space id, encoding), `matrix.tsv`
/// (row/col/value triplets), `rows.tsv` (id, label) and, for k-mer
/// schemes, `dictionary.tsv`.
pub fn write_dataset(dir: &Path, ds: &StoredDataset) -> Result<(), CliError> {
    create_dir(dir)?;
    let meta = DatasetMeta {
        n_rows: ds.data.len(),
        n_cols: ds.data.n_cols(),
        space: ds.data.features.space().to_string(),
        encoding: ds.scheme.clone(),
    };
    write_text(
        &dir.join("dataset.toml"),
        &toml::to_string(&meta).map_err(|e| CliError::Data(e.to_string()))?,
    )?;
    write_file(&dir.join("matrix.tsv"), |out| {
        Ok(ds.data.features.write_triplets(out)?)
    })?;
    write_file(&dir.join("rows.tsv"), |out| {
        writeln!(out, "id\tlabel")?;
        for (id, y) in ds.data.ids.iter().zip(&ds.data.labels) {
            writeln!(out, "{id}\t{y}")?;
        }
        Ok(())
    })?;
    if let Some(d) = &ds.dictionary {
        write_file(&dir.join("dictionary.tsv"), |out| Ok(d.write_tsv(out)?))?;
    }
    Ok(())
}

pub fn read_dataset(dir: &Path) -> Result<StoredDataset, CliError> {
    let meta_path = dir.join("dataset.toml");
    let text = fs::read_to_string(&meta_path).map_err(|e| {
        CliError::Data(format!(
            "{} is not a dataset directory ({}: {e})",
            dir.display(),
            meta_path.display()
        ))
    })?;
    let meta: DatasetMeta = toml::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {}", meta_path.display(), e.message())))?;
    let features = SparseFeatureMatrix::read_triplets(
        open_input(&dir.join("matrix.tsv"))?,
        meta.n_rows,
        meta.n_cols,
        meta.space,
    )
    .map_err(|e| CliError::Data(format!("{}: {e}", dir.join("matrix.tsv").display())))?;
    let mut ids = Vec::with_capacity(meta.n_rows);
    let mut labels = Vec::with_capacity(meta.n_rows);
    for (i, line) in open_input(&dir.join("rows.tsv"))?.lines().enumerate() {
        let line = line?;
        if i == 0 {
            continue;
        }
        let (id, label) = line.split_once('\t').ok_or_else(|| {
            CliError::Data(format!("rows.tsv line {}: expected id<TAB>label", i + 1))
        })?;
        let label: u8 = match label {
            "0" => 0,
            "1" => 1,
            other => {
                return Err(CliError::Data(format!(
                    "rows.tsv line {}: label must be 0 or 1, got `{other}`",
                    i + 1
                )))
            }
        };
        ids.push(id.to_string());
        labels.push(label);
    }
    let data = LabeledDataset::new(features, labels, ids)?;
    let dict_path = dir.join("dictionary.tsv");
    let dictionary = match &meta.encoding {
        EncodingScheme::Kmer { min_count, .. } | EncodingScheme::Graph { min_count, .. }
            if dict_path.exists() =>
        {
            Some(KmerDictionary::read_tsv(
                open_input(&dict_path)?,
                *min_count,
            )?)
        }
        _ => None,
    };
    Ok(StoredDataset {
        data,
        scheme: meta.encoding,
        dictionary,
    })
}

/// Reads `id<TAB>label` lines (header optional) into a lookup table.
pub fn read_label_table(path: &Path) -> Result<std::collections::HashMap<String, u8>, CliError> {
    let mut map = std::collections::HashMap::new();
    for (i, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        let Some((id, label)) = line.split_once('\t') else {
            if line.trim().is_empty() {
                continue;
            }
            return Err(CliError::Data(format!(
                "{} line {}: expected id<TAB>label",
                path.display(),
                i + 1
            )));
        };
        match label.trim() {
            "0" => map.insert(id.to_string(), 0),
            "1" => map.insert(id.to_string(), 1),
            _ if i == 0 => None,
            other => {
                return Err(CliError::Data(format!(
                    "{} line {}: label must be 0 or 1, got `{other}`",
                    path.display(),
                    i + 1
                )))
            }
        };
    }
    Ok(map)
}
