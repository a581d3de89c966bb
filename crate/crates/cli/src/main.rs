//! `nndiag`: train a model under the symptom monitor and report the first
//! detected symptom together with a repair message.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use nndiag_cli::{
    cmd_corpus, cmd_diagnose, cmd_generate, exit_code, resolve_config, CorpusSource, DataOptions,
    DiagnoseArgs, Thresholds, EXIT_ERROR,
};

#[derive(Debug, Parser)]
#[command(name = "nndiag", version, about = "Detect training symptoms and suggest repairs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model under the monitor and print the diagnosis report.
    Diagnose(Box<DiagnoseCmd>),
    /// Run a corpus of models with expected verdicts.
    Corpus(CorpusCmd),
    /// Write the dataset described by a spec as CSV.
    Generate(GenerateCmd),
}

#[derive(Debug, Args)]
struct DiagnoseCmd {
    /// Model description (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Dataset spec (JSON) or CSV file.
    #[arg(long)]
    data: PathBuf,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the model seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the epoch budget.
    #[arg(long)]
    epochs: Option<usize>,
    /// Monitor configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include the checker trace in the report.
    #[arg(long)]
    explain: bool,
    /// CSV input has a header row.
    #[arg(long)]
    header: bool,
    /// Number of trailing label columns in CSV input.
    #[arg(long, default_value_t = 1)]
    label_columns: usize,
    #[command(flatten)]
    thresholds: ThresholdFlags,
}

#[derive(Debug, Args)]
struct ThresholdFlags {
    #[arg(long)]
    history_window: Option<usize>,
    #[arg(long)]
    saturation_max: Option<f64>,
    #[arg(long)]
    saturation_min: Option<f64>,
    #[arg(long)]
    saturation_layer_ratio: Option<f64>,
    #[arg(long)]
    dead_node_threshold: Option<f64>,
    #[arg(long)]
    dead_node_layer_ratio: Option<f64>,
    #[arg(long)]
    vanishing_threshold: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    data_range_low: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    data_range_high: Option<f64>,
    #[arg(long)]
    weight_var_min: Option<f64>,
    #[arg(long)]
    weight_var_max: Option<f64>,
    #[arg(long)]
    learn_threshold: Option<f64>,
    #[arg(long)]
    learn_band_factor: Option<f64>,
    #[arg(long)]
    unchanged_rel_tolerance: Option<f64>,
    #[arg(long)]
    max_param_layers: Option<usize>,
}

impl From<ThresholdFlags> for Thresholds {
    fn from(f: ThresholdFlags) -> Self {
        Thresholds {
            history_window: f.history_window,
            saturation_max: f.saturation_max,
            saturation_min: f.saturation_min,
            saturation_layer_ratio: f.saturation_layer_ratio,
            dead_node_threshold: f.dead_node_threshold,
            dead_node_layer_ratio: f.dead_node_layer_ratio,
            vanishing_threshold: f.vanishing_threshold,
            data_range_low: f.data_range_low,
            data_range_high: f.data_range_high,
            weight_var_min: f.weight_var_min,
            weight_var_max: f.weight_var_max,
            learn_threshold: f.learn_threshold,
            learn_band_factor: f.learn_band_factor,
            unchanged_rel_tolerance: f.unchanged_rel_tolerance,
            max_param_layers: f.max_param_layers,
        }
    }
}

#[derive(Debug, Args)]
struct CorpusCmd {
    /// `builtin`, a corpus directory, or a manifest file.
    #[arg(long, default_value = "builtin")]
    corpus: String,
    /// Monitor configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateCmd {
    /// Dataset spec (JSON).
    #[arg(long)]
    data: PathBuf,
    /// Destination CSV file.
    #[arg(long)]
    out: PathBuf,
}

fn run(cli: Cli) -> nndiag_cli::Result<i32> {
    match cli.command {
        Command::Diagnose(c) => {
            let args = DiagnoseArgs {
                model: c.model,
                data: c.data,
                data_options: DataOptions {
                    header: c.header,
                    label_columns: c.label_columns,
                },
                out: c.out,
                seed: c.seed,
                epochs: c.epochs,
                config: c.config,
                thresholds: c.thresholds.into(),
                explain: c.explain,
            };
            let report = cmd_diagnose(&args)?;
            if args.out.is_none() {
                print!("{}", report.to_json());
            }
            eprintln!("{}", report.headline());
            Ok(exit_code(&report))
        }
        Command::Corpus(c) => {
            let source = if c.corpus == "builtin" {
                CorpusSource::Builtin
            } else {
                CorpusSource::from_path(&PathBuf::from(&c.corpus))
            };
            let cfg = resolve_config(c.config.as_deref(), &Thresholds::default())?;
            let summary = cmd_corpus(&source, &cfg)?;
            print!("{}", summary.render());
            Ok(summary.exit_code())
        }
        Command::Generate(c) => {
            let n = cmd_generate(&c.data, &c.out)?;
            eprintln!("wrote {n} rows to {}", c.out.display());
            Ok(nndiag_cli::EXIT_CORRECT)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
