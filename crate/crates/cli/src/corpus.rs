//! Buggy-model corpus: a manifest of (model, data, expected verdict,
//! expected message) cases, run end to end.
//!
//! Expectations are compared against the report's rendered verdict and
//! message text. A pattern may list alternatives separated by `|`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use nndiag_core::data::load_or_generate;
use nndiag_core::{run_diagnosis, Dataset, DatasetSpec, MonitorConfig, RunOptions};

use crate::{load_dataset, parse_model_spec, read_file, CliError, DataOptions, Result};

/// Files of the built-in corpus, embedded at compile time.
const BUILTIN: &[(&str, &str)] = &[
    ("manifest.json", include_str!("../corpus/manifest.json")),
    ("softmax_head.model.json", include_str!("../corpus/softmax_head.model.json")),
    ("softmax_head.data.json", include_str!("../corpus/softmax_head.data.json")),
    ("unscaled_sigmoid.model.json", include_str!("../corpus/unscaled_sigmoid.model.json")),
    ("unscaled_sigmoid.data.json", include_str!("../corpus/unscaled_sigmoid.data.json")),
    ("dead_relu.model.json", include_str!("../corpus/dead_relu.model.json")),
    ("dead_relu.data.json", include_str!("../corpus/dead_relu.data.json")),
    ("tanh_head.model.json", include_str!("../corpus/tanh_head.model.json")),
    ("tanh_head.data.json", include_str!("../corpus/tanh_head.data.json")),
    ("frozen_lr.model.json", include_str!("../corpus/frozen_lr.model.json")),
    ("frozen_lr.data.json", include_str!("../corpus/frozen_lr.data.json")),
    ("deep_sigmoid.model.json", include_str!("../corpus/deep_sigmoid.model.json")),
    ("deep_sigmoid.data.json", include_str!("../corpus/deep_sigmoid.data.json")),
];

/// Where a corpus lives.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Builtin,
    /// A manifest file; case files resolve against its directory.
    Manifest(PathBuf),
}

impl CorpusSource {
    /// A directory argument means `<dir>/manifest.json`.
    pub fn from_path(path: &Path) -> Self {
        if path.is_dir() {
            CorpusSource::Manifest(path.join("manifest.json"))
        } else {
            CorpusSource::Manifest(path.to_path_buf())
        }
    }

    fn manifest_text(&self) -> Result<String> {
        match self {
            CorpusSource::Builtin => Ok(builtin_file("manifest.json")?.to_string()),
            CorpusSource::Manifest(path) => read_file(path),
        }
    }

    fn base(&self) -> Option<&Path> {
        match self {
            CorpusSource::Builtin => None,
            CorpusSource::Manifest(path) => path.parent(),
        }
    }

    fn model_text(&self, name: &str) -> Result<String> {
        match self.base() {
            None => Ok(builtin_file(name)?.to_string()),
            Some(dir) => read_file(&dir.join(name)),
        }
    }

    fn dataset(&self, case: &CorpusCase) -> Result<Dataset> {
        match self.base() {
            None => {
                let spec = DatasetSpec::from_json(builtin_file(&case.data)?)?;
                Ok(load_or_generate(&spec)?)
            }
            Some(dir) => {
                let opts = DataOptions {
                    header: case.header,
                    label_columns: case.label_columns,
                };
                load_dataset(&dir.join(&case.data), &opts)
            }
        }
    }
}

pub fn builtin_file(name: &str) -> Result<&'static str> {
    BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| *text)
        .ok_or_else(|| CliError::Manifest(format!("no built-in corpus file {name:?}")))
}

fn default_label_columns() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusCase {
    pub name: String,
    pub model: String,
    /// Dataset spec (JSON) or CSV file.
    pub data: String,
    pub expect_verdict: String,
    /// Absent when no message is expected (CM).
    #[serde(default)]
    pub expect_message: Option<String>,
    #[serde(default)]
    pub header: bool,
    #[serde(default = "default_label_columns")]
    pub label_columns: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cases: Vec<CorpusCase>,
}

impl Manifest {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| CliError::Manifest(e.to_string()))
    }
}

/// `true` when `actual` equals one of the `|`-separated alternatives.
pub fn matches_pattern(pattern: &str, actual: &str) -> bool {
    pattern.split('|').any(|alt| alt.trim() == actual)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    pub verdict: Option<String>,
    pub message: Option<String>,
    pub expect_verdict: String,
    pub expect_message: Option<String>,
    /// Why the case could not run.
    pub error: Option<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub results: Vec<CaseResult>,
    pub seconds: f64,
}

impl CorpusSummary {
    pub fn passed(&self) -> usize {
        self.results.iter().filter(|r| r.passed).count()
    }

    pub fn all_passed(&self) -> bool {
        self.passed() == self.results.len()
    }

    pub fn exit_code(&self) -> i32 {
        if self.all_passed() {
            crate::EXIT_CORRECT
        } else {
            crate::EXIT_ERROR
        }
    }

    /// One line per case, then a total.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let status = if r.passed { "PASS" } else { "FAIL" };
            let got = match (&r.error, &r.verdict) {
                (Some(e), _) => format!("error: {e}"),
                (None, Some(v)) => match &r.message {
                    Some(m) => format!("{v} -> {m}"),
                    None => v.clone(),
                },
                (None, None) => String::new(),
            };
            let _ = writeln!(out, "{status} {:<18} {got} ({:.2}s)", r.name, r.seconds);
            if !r.passed && r.error.is_none() {
                let _ = writeln!(
                    out,
                    "     expected {} -> {}",
                    r.expect_verdict,
                    r.expect_message.as_deref().unwrap_or("(no message)")
                );
            }
        }
        if self.results.is_empty() {
            let _ = writeln!(out, "0 cases");
        } else {
            let _ = writeln!(
                out,
                "{}/{} cases passed in {:.2}s",
                self.passed(),
                self.results.len(),
                self.seconds
            );
        }
        out
    }
}

fn run_case(source: &CorpusSource, case: &CorpusCase, cfg: &MonitorConfig) -> CaseResult {
    let start = Instant::now();
    let outcome = (|| {
        let spec = parse_model_spec(&source.model_text(&case.model)?)?;
        let data = source.dataset(case)?;
        Ok::<_, CliError>(run_diagnosis(&spec, &data, cfg, RunOptions::default())?)
    })();
    let mut result = CaseResult {
        name: case.name.clone(),
        passed: false,
        verdict: None,
        message: None,
        expect_verdict: case.expect_verdict.clone(),
        expect_message: case.expect_message.clone(),
        error: None,
        seconds: 0.0,
    };
    match outcome {
        Ok(report) => {
            let verdict_ok = matches_pattern(&case.expect_verdict, &report.verdict);
            let message_ok = match (&case.expect_message, &report.message_text) {
                (Some(p), Some(m)) => matches_pattern(p, m),
                (None, None) => true,
                _ => false,
            };
            result.passed = verdict_ok && message_ok;
            result.verdict = Some(report.verdict);
            result.message = report.message_text;
        }
        Err(e) => result.error = Some(e.to_string()),
    }
    result.seconds = start.elapsed().as_secs_f64();
    result
}

/// Runs every case. Only an unreadable manifest is an error; case failures
/// are reported in the summary.
pub fn cmd_corpus(source: &CorpusSource, cfg: &MonitorConfig) -> Result<CorpusSummary> {
    let start = Instant::now();
    let manifest = Manifest::parse(&source.manifest_text()?)?;
    let results = manifest
        .cases
        .iter()
        .map(|case| run_case(source, case, cfg))
        .collect();
    Ok(CorpusSummary {
        results,
        seconds: start.elapsed().as_secs_f64(),
    })
}
