//! `procnoise`: procedural-noise perturbations and black-box attacks from the shell.
//!
//! Exit codes: 0 success, 2 usage, 3 oracle transport, 4 data or manifests.
//! Every report echoes the invocation under `config`; `procnoise --config FILE`
//! replays it.

mod commands;
mod failure;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use procnoise::{AttackMode, Method, NoiseKind};
use serde::{Deserialize, Serialize};

use crate::failure::Failure;

#[derive(Parser, Debug)]
#[command(name = "procnoise", version, about = "Procedural-noise adversarial perturbations and black-box attacks")]
#[command(args_conflicts_with_subcommands = true)]
struct Cli {
    /// Replay the invocation echoed in a report or saved config file.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Concurrent oracle requests. Results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", content = "args", rename_all = "kebab-case")]
pub enum Command {
    /// Render one noise field and its ε-scaled perturbation as PNGs.
    GenNoise(GenNoiseArgs),
    /// Run a universal or input-specific black-box attack.
    Attack(AttackArgs),
    /// Evaluate a seeded perturbation set on every dataset item.
    EvalGrid(EvalGridArgs),
    /// Metrics, correlations and histograms from an evaluation grid.
    Analyze(AnalyzeArgs),
    /// Universal evasion with and without median-filter denoising over an ε sweep.
    Defend(DefendArgs),
    /// Comparison table from attack reports.
    Report(ReportArgs),
    /// Serve an oracle over the line protocol on stdin/stdout.
    #[command(hide = true)]
    OracleStdio(OracleStdioArgs),
    /// Write a toy-oracle corpus as PNGs plus manifests.
    #[command(hide = true)]
    GenCorpus(GenCorpusArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenNoiseArgs {
    #[arg(long)]
    pub kind: NoiseKind,
    #[arg(long)]
    pub side: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16.0)]
    pub eps: f64,
    /// Gabor kernel width in pixels.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Gabor wavelength in pixels.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gabor orientation in radians.
    #[arg(long)]
    pub omega: Option<f64>,
    /// Gabor isotropy.
    #[arg(long)]
    pub xi: Option<u32>,
    /// Perlin wavelength along x in pixels.
    #[arg(long)]
    pub lx: Option<f64>,
    #[arg(long)]
    pub ly: Option<f64>,
    /// Perlin sine colour-map frequency.
    #[arg(long)]
    pub phi: Option<f64>,
    #[arg(long)]
    pub octaves: Option<u32>,
    /// Output directory.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AttackArgs {
    /// `toy://?seed=S&side=D&classes=C`, `http://host:port` or `subprocess:<command>`.
    #[arg(long)]
    pub oracle: String,
    /// universal or specific.
    #[arg(long)]
    pub mode: AttackMode,
    #[arg(long)]
    pub kind: NoiseKind,
    /// bayesopt, lbfgs or random.
    #[arg(long)]
    pub method: Method,
    #[arg(long, default_value_t = 1000)]
    pub budget: u64,
    #[arg(long, default_value_t = 16.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
    /// Training manifest (universal mode).
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Validation manifest (universal mode).
    #[arg(long)]
    pub val: Option<PathBuf>,
    /// Manifest of inputs to attack (specific mode).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Median-filter window applied in front of the oracle.
    #[arg(long)]
    pub defence: Option<usize>,
    /// Report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EvalGridArgs {
    #[arg(long)]
    pub oracle: String,
    #[arg(long)]
    pub data: PathBuf,
    /// gabor, perlin or random.
    #[arg(long)]
    pub kind: NoiseKind,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 16.0)]
    pub eps: f64,
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
    #[arg(long)]
    pub defence: Option<usize>,
    /// Continue a partially evaluated grid at `--out`.
    #[arg(long)]
    pub resume: bool,
    /// Grid CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct DefendArgs {
    #[arg(long)]
    pub oracle: String,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "perlin")]
    pub kind: NoiseKind,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 3)]
    pub window: usize,
    #[arg(long, value_delimiter = ',', default_value = "4,8,12,16")]
    pub eps: Vec<f64>,
    #[arg(long, default_value_t = 1)]
    pub top_k: usize,
    /// Paired metrics JSON path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReportArgs {
    /// Attack report JSON files.
    #[arg(required = true)]
    pub reports: Vec<PathBuf>,
    /// Table CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct OracleStdioArgs {
    #[arg(long)]
    pub oracle: String,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct GenCorpusArgs {
    /// A `toy://` URI.
    #[arg(long)]
    pub oracle: String,
    #[arg(long)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Items at the end of the corpus written to `val.csv` instead of `train.csv`.
    #[arg(long, default_value_t = 0)]
    pub val: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn load_config(path: &PathBuf) -> Result<Command, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::data(path.display(), e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Failure::data(path.display(), e))?;
    // reports carry the invocation under `config`
    let value = match value.get("config") {
        Some(c) => c.clone(),
        None => value,
    };
    serde_json::from_value(value).map_err(|e| Failure::data(path.display(), e))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match (&cli.config, cli.command) {
        (Some(path), _) => match load_config(path) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("procnoise: {e}");
                return e.code();
            }
        },
        (None, Some(c)) => c,
        (None, None) => {
            eprintln!("procnoise: a subcommand or --config is required (see --help)");
            return ExitCode::from(2);
        }
    };
    match commands::run(&command, cli.jobs.max(1)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("procnoise: {e}");
            e.code()
        }
    }
}
