//! Run configuration: a TOML file with one table per pipeline stage,
//! dotted-key overrides, and conversion into library parameter types.

use std::fs;
use std::path::Path;

use kmerlens::encode::EncodingScheme;
use kmerlens::explain::CurveConfig;
use kmerlens::models::{ModelKind, TrainConfig};
use kmerlens::sampling::SmoteConfig;
use kmerlens::synth::SynthSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
#[derive(Default)]
pub struct RunConfig {
    /// Global seed; every stage derives its randomness from it.
    pub seed: u64,
    pub encode: EncodeSection,
    pub kselect: KSelectSection,
    pub split: SplitSection,
    pub smote: SmoteSection,
    pub model: ModelSection,
    pub evaluate: EvaluateSection,
    pub cv: CvSection,
    pub learning_curve: LearningCurveSection,
    pub compare: CompareSection,
    pub explain: ExplainSection,
    pub select: SelectSection,
    /// `synth.seed` is always replaced by the global seed.
    pub synth: SynthSpec,
    pub pipeline: PipelineSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncodeSection {
    /// One of sequential, onehot, kmer, graph, image.
    pub scheme: String,
    pub k: usize,
    pub min_count: u64,
    pub max_len: Option<usize>,
    pub width: Option<usize>,
    pub height: Option<usize>,
    /// Split records into windows of this many bases before encoding.
    pub chunk: Option<usize>,
    pub keep_tail: bool,
}

impl Default for EncodeSection {
    fn default() -> Self {
        EncodeSection {
            scheme: "kmer".into(),
            k: 19,
            min_count: 2,
            max_len: None,
            width: None,
            height: None,
            chunk: None,
            keep_tail: true,
        }
    }
}

impl EncodeSection {
    pub fn scheme_named(&self, name: &str) -> Result<EncodingScheme, CliError> {
        Ok(match name {
            "sequential" => EncodingScheme::Sequential {
                max_len: self.max_len,
            },
            "onehot" => EncodingScheme::Onehot {
                max_len: self.max_len,
            },
            "kmer" => EncodingScheme::Kmer {
                k: self.k,
                min_count: self.min_count,
            },
            "graph" => EncodingScheme::Graph {
                k: self.k,
                min_count: self.min_count,
            },
            "image" => EncodingScheme::Image {
                width: self.width,
                height: self.height,
            },
            other => return Err(CliError::Usage(format!(
                "unknown encoding scheme `{other}`; use sequential, onehot, kmer, graph or image"
            ))),
        })
    }

    pub fn scheme(&self) -> Result<EncodingScheme, CliError> {
        self.scheme_named(&self.scheme)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KSelectSection {
    pub k_min: usize,
    pub k_max: usize,
    pub step: usize,
    /// Odd moving-average window applied before the valley search; 0 or 1 disables.
    pub smoothing: usize,
}

impl Default for KSelectSection {
    fn default() -> Self {
        KSelectSection {
            k_min: 15,
            k_max: 31,
            step: 2,
            smoothing: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSection {
    pub train_ratio: f64,
}

impl Default for SplitSection {
    fn default() -> Self {
        SplitSection { train_ratio: 0.7 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmoteSection {
    /// Balance every training set before fitting.
    pub enabled: bool,
    pub k_neighbors: usize,
}

impl Default for SmoteSection {
    fn default() -> Self {
        SmoteSection {
            enabled: true,
            k_neighbors: 5,
        }
    }
}

/// Unset fields take the defaults of the chosen model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// tree, forest or gbdt.
    pub kind: String,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: Option<usize>,
    pub n_trees: Option<usize>,
    pub mtry: Option<usize>,
    pub learning_rate: Option<f64>,
    pub l2_leaf_penalty: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            kind: "forest".into(),
            max_depth: None,
            min_samples_leaf: None,
            n_trees: None,
            mtry: None,
            learning_rate: None,
            l2_leaf_penalty: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub threshold: f64,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        EvaluateSection { threshold: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvSection {
    pub folds: usize,
}

impl Default for CvSection {
    fn default() -> Self {
        CvSection { folds: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningCurveSection {
    pub fractions: Vec<f64>,
}

impl Default for LearningCurveSection {
    fn default() -> Self {
        LearningCurveSection {
            fractions: vec![0.2, 0.4, 0.6, 0.8, 1.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSection {
    pub schemes: Vec<String>,
    pub models: Vec<String>,
}

impl Default for CompareSection {
    fn default() -> Self {
        CompareSection {
            schemes: ["sequential", "onehot", "kmer", "graph", "image"]
                .map(String::from)
                .to_vec(),
            models: ["tree", "forest", "gbdt"].map(String::from).to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExplainSection {
    pub top: usize,
}

impl Default for ExplainSection {
    fn default() -> Self {
        ExplainSection { top: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectSection {
    pub max_m: usize,
    /// Folds for the training-split CV AUC; 0 uses the held-out AUC alone.
    pub cv_folds: usize,
    pub epsilon: f64,
    pub patience: usize,
}

impl Default for SelectSection {
    fn default() -> Self {
        SelectSection {
            max_m: 20,
            cv_folds: 5,
            epsilon: 0.005,
            patience: 2,
        }
    }
}

/// Optional stages of `pipeline`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSection {
    pub kselect: bool,
    pub cross_validate: bool,
    pub learning_curve: bool,
    pub compare_encodings: bool,
    pub compare_models: bool,
}

impl Default for PipelineSection {
    fn default() -> Self {
        PipelineSection {
            kselect: true,
            cross_validate: true,
            learning_curve: true,
            compare_encodings: false,
            compare_models: false,
        }
    }
}

fn schema_error(source: &str, err: impl std::fmt::Display) -> CliError {
    let msg = err.to_string();
    CliError::Usage(format!("{source}: {}", msg.trim().replace('\n', " ")))
}

/// Parses a config document. A run manifest (`command` plus a `[config]`
/// table) is accepted too, so a finished run can be replayed.
pub fn parse_config(text: &str, source: &str) -> Result<RunConfig, CliError> {
    let mut table: toml::Table = toml::from_str(text).map_err(|e| schema_error(source, e))?;
    if table.contains_key("command") {
        if let Some(toml::Value::Table(inner)) = table.remove("config") {
            table = inner;
        }
    }
    RunConfig::deserialize(toml::Value::Table(table)).map_err(|e| schema_error(source, e))
}

pub fn load_config(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text, &path.display().to_string())
}

/// Parses the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
pub fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

/// Applies dotted-key overrides such as `model.n_trees=50`.
pub fn apply_overrides(
    config: &RunConfig,
    overrides: &[(String, toml::Value)],
) -> Result<RunConfig, CliError> {
    if overrides.is_empty() {
        return Ok(config.clone());
    }
    let mut root = toml::Value::try_from(config).map_err(|e| CliError::Usage(e.to_string()))?;
    for (key, value) in overrides {
        let parts: Vec<&str> = key.split('.').collect();
        if parts.iter().any(|p| p.is_empty()) {
            return Err(CliError::Usage(format!("malformed config key `{key}`")));
        }
        let mut node = &mut root;
        for part in &parts[..parts.len() - 1] {
            let table = node
                .as_table_mut()
                .ok_or_else(|| CliError::Usage(format!("`{key}` is not a config table path")))?;
            node = table
                .entry(part.to_string())
                .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("`{key}` is not a config table path")))?;
        table.insert(parts[parts.len() - 1].to_string(), value.clone());
    }
    RunConfig::deserialize(root).map_err(|e| schema_error("override", e))
}

/// Splits `key=value`.
pub fn parse_assignment(raw: &str) -> Result<(String, toml::Value), CliError> {
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("--set expects key=value, got `{raw}`")))?;
    Ok((key.trim().to_string(), parse_value(value.trim())))
}

impl RunConfig {
    /// Pins derived fields so the echoed config is self-consistent.
    pub fn normalized(mut self) -> Self {
        self.synth.seed = self.seed;
        self
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn model_kind(&self) -> Result<ModelKind, CliError> {
        parse_model_kind(&self.model.kind)
    }

    /// Training settings for `kind`, seeded with the global seed.
    /// Rejects names and parameter values no stage could use.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config(self.model_kind()?)?;
        self.encode.scheme()?;
        for name in &self.compare.schemes {
            self.encode.scheme_named(name)?;
        }
        for name in &self.compare.models {
            parse_model_kind(name)?;
        }
        Ok(())
    }

    pub fn train_config(&self, kind: ModelKind) -> Result<TrainConfig, CliError> {
        let m = &self.model;
        let mut cfg = TrainConfig::for_kind(kind).with_seed(self.seed);
        if let Some(d) = m.max_depth {
            cfg.max_depth = Some(d);
        }
        if let Some(v) = m.min_samples_leaf {
            cfg.min_samples_leaf = v;
        }
        if let Some(v) = m.n_trees {
            cfg.n_trees = v;
        }
        if m.mtry.is_some() {
            cfg.mtry = m.mtry;
        }
        if let Some(v) = m.learning_rate {
            cfg.learning_rate = v;
        }
        if let Some(v) = m.l2_leaf_penalty {
            cfg.l2_leaf_penalty = v;
        }
        cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(cfg)
    }

    pub fn smote(&self) -> Option<SmoteConfig> {
        self.smote.enabled.then_some(SmoteConfig {
            k_neighbors: self.smote.k_neighbors,
            seed: self.seed,
        })
    }

    pub fn curve_config(&self) -> Result<CurveConfig, CliError> {
        let kind = self.model_kind()?;
        Ok(CurveConfig {
            kind,
            train: self.train_config(kind)?,
            smote: self.smote(),
            max_m: self.select.max_m,
            cv_folds: self.select.cv_folds,
            epsilon: self.select.epsilon,
            patience: self.select.patience,
            seed: self.seed,
        })
    }
}

pub fn parse_model_kind(name: &str) -> Result<ModelKind, CliError> {
    ModelKind::parse(name)
        .map_err(|_| CliError::Usage(format!("unknown model `{name}`; use tree, forest or gbdt")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let cfg = RunConfig::default();
        assert_eq!(parse_config(&cfg.to_toml(), "t").unwrap(), cfg);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let cfg = parse_config("seed = 4\n[model]\nkind = \"gbdt\"\nn_trees = 7\n", "t").unwrap();
        assert_eq!(cfg.seed, 4);
        let t = cfg.train_config(cfg.model_kind().unwrap()).unwrap();
        assert_eq!((t.n_trees, t.seed, t.max_depth), (7, 4, Some(6)));
        assert_eq!(cfg.encode, EncodeSection::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(
            parse_config("[model]\ntrees = 3\n", "t"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            parse_config("bogus = 1\n", "t"),
            Err(CliError::Usage(_))
        ));
    }

    #[test]
    fn overrides_are_typed() {
        let sets = [
            "model.n_trees=5",
            "encode.scheme=onehot",
            "select.epsilon=0.01",
            "synth.motifs=[\"ACGT\"]",
        ];
        let parsed: Vec<_> = sets.iter().map(|s| parse_assignment(s).unwrap()).collect();
        let cfg = apply_overrides(&RunConfig::default(), &parsed).unwrap();
        assert_eq!(cfg.model.n_trees, Some(5));
        assert_eq!(cfg.encode.scheme, "onehot");
        assert_eq!(cfg.select.epsilon, 0.01);
        assert_eq!(cfg.synth.motifs, vec!["ACGT".to_string()]);
        assert!(apply_overrides(&cfg, &[parse_assignment("model.n_trees=many").unwrap()]).is_err());
        assert!(apply_overrides(&cfg, &[parse_assignment("nope.x=1").unwrap()]).is_err());
        assert!(parse_assignment("novalue").is_err());
    }

    #[test]
    fn manifest_documents_replay() {
        let cfg = RunConfig {
            seed: 9,
            ..RunConfig::default()
        };
        let mut doc = toml::Table::new();
        doc.insert("command".into(), "train".into());
        doc.insert("config".into(), toml::Value::try_from(&cfg).unwrap());
        assert_eq!(
            parse_config(&toml::to_string(&doc).unwrap(), "m").unwrap(),
            cfg
        );
    }
}
