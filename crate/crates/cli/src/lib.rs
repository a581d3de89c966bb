//! Library side of the `nndiag` command: input loading, the `diagnose`,
//! `corpus` and `generate` commands, and the built-in buggy-model corpus.

use std::path::{Path, PathBuf};

use thiserror::Error;

use nndiag_core::data::{load_csv, load_or_generate};
use nndiag_core::nn::ModelSpec;
use nndiag_core::{run_diagnosis, Dataset, DatasetSpec, DiagnosisReport, MonitorConfig, RunOptions};

pub mod corpus;

pub use corpus::{cmd_corpus, CaseResult, CorpusSource, CorpusSummary};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] nndiag_core::Error),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("corpus manifest: {0}")]
    Manifest(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

/// Process exit codes.
pub const EXIT_CORRECT: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_SYMPTOM: i32 = 2;

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Parses and validates a model description.
pub fn parse_model_spec(text: &str) -> Result<ModelSpec> {
    Ok(ModelSpec::from_json(text)?)
}

/// How to read a dataset argument.
#[derive(Debug, Clone, PartialEq)]
pub struct DataOptions {
    /// CSV only: the first line holds column names.
    pub header: bool,
    /// CSV only: number of trailing label columns.
    pub label_columns: usize,
}

impl Default for DataOptions {
    fn default() -> Self {
        Self {
            header: false,
            label_columns: 1,
        }
    }
}

/// Loads a `.csv` file directly, or anything else as a dataset spec (JSON)
/// whose relative paths resolve against the spec's directory.
pub fn load_dataset(path: &Path, opts: &DataOptions) -> Result<Dataset> {
    let is_csv = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        return load_csv(path, opts.header, opts.label_columns).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            reason: e.to_string(),
        });
    }
    let mut spec = DatasetSpec::from_json(&read_file(path)?)?;
    if let Some(dir) = path.parent() {
        spec.resolve_paths(dir);
    }
    Ok(load_or_generate(&spec)?)
}

/// Per-flag threshold overrides, applied on top of the config file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Thresholds {
    pub history_window: Option<usize>,
    pub saturation_max: Option<f64>,
    pub saturation_min: Option<f64>,
    pub saturation_layer_ratio: Option<f64>,
    pub dead_node_threshold: Option<f64>,
    pub dead_node_layer_ratio: Option<f64>,
    pub vanishing_threshold: Option<f64>,
    pub data_range_low: Option<f64>,
    pub data_range_high: Option<f64>,
    pub weight_var_min: Option<f64>,
    pub weight_var_max: Option<f64>,
    pub learn_threshold: Option<f64>,
    pub learn_band_factor: Option<f64>,
    pub unchanged_rel_tolerance: Option<f64>,
    pub max_param_layers: Option<usize>,
}

impl Thresholds {
    pub fn apply(&self, cfg: &mut MonitorConfig) {
        macro_rules! set {
            ($($f:ident),*) => {$(
                if let Some(v) = self.$f {
                    cfg.$f = v;
                }
            )*};
        }
        set!(
            history_window,
            saturation_max,
            saturation_min,
            saturation_layer_ratio,
            dead_node_threshold,
            dead_node_layer_ratio,
            vanishing_threshold,
            data_range_low,
            data_range_high,
            weight_var_min,
            weight_var_max,
            learn_threshold,
            learn_band_factor,
            unchanged_rel_tolerance,
            max_param_layers
        );
    }
}

/// Inputs of one `diagnose` run.
#[derive(Debug, Clone, Default)]
pub struct DiagnoseArgs {
    pub model: PathBuf,
    pub data: PathBuf,
    pub data_options: DataOptions,
    pub out: Option<PathBuf>,
    /// Replaces the model seed (initialization, dropout, shuffling).
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
    pub config: Option<PathBuf>,
    pub thresholds: Thresholds,
    pub explain: bool,
}

pub fn resolve_config(config: Option<&Path>, thresholds: &Thresholds) -> Result<MonitorConfig> {
    let mut cfg = match config {
        Some(path) => MonitorConfig::from_json(&read_file(path)?)?,
        None => MonitorConfig::default(),
    };
    thresholds.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

/// Runs one diagnosis and writes the report to `--out` when given.
pub fn cmd_diagnose(args: &DiagnoseArgs) -> Result<DiagnosisReport> {
    let mut spec = parse_model_spec(&read_file(&args.model)?)?;
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(epochs) = args.epochs {
        spec.epochs = epochs;
        spec.validate()?;
    }
    let data = load_dataset(&args.data, &args.data_options)?;
    let cfg = resolve_config(args.config.as_deref(), &args.thresholds)?;
    let report = run_diagnosis(&spec, &data, &cfg, RunOptions { explain: args.explain })?;
    if let Some(out) = &args.out {
        write_file(out, &report.to_json())?;
    }
    Ok(report)
}

pub fn exit_code(report: &DiagnosisReport) -> i32 {
    if report.is_correct_model() {
        EXIT_CORRECT
    } else {
        EXIT_SYMPTOM
    }
}

/// Writes a dataset as CSV: feature columns, then label columns.
pub fn dataset_to_csv(data: &Dataset) -> String {
    let mut out = String::new();
    for r in 0..data.len() {
        let cells: Vec<String> = data
            .x
            .row(r)
            .iter()
            .chain(data.y.row(r))
            .map(|v| format!("{v}"))
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Materializes a dataset spec into a CSV file.
pub fn cmd_generate(spec_path: &Path, out: &Path) -> Result<usize> {
    let data = load_dataset(spec_path, &DataOptions::default())?;
    write_file(out, &dataset_to_csv(&data))?;
    Ok(data.len())
}
