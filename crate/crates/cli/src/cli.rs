use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use romdx_core::ingest::{CropRegion, DEFAULT_FRAME_COUNT};
use romdx_core::Framework;

#[derive(Debug, Parser)]
#[command(name = "romdx", version, about = "Range-of-motion video diagnosis workbench")]
pub struct Cli {
    /// Workspace directory holding cases, results, grades and reports.
    #[arg(long, global = true, default_value = ".", env = "ROMDX_WORKSPACE")]
    pub workspace: PathBuf,
    /// TOML configuration file. Defaults to `romdx.toml` in the workspace.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Validate a case manifest and store it in the workspace.
    Ingest(IngestArgs),
    /// Mask, strip, crop and compress videos with an external command.
    Preprocess(PreprocessArgs),
    /// Generate a synthetic corpus with known answers.
    Simulate(SimulateArgs),
    /// Run one diagnosis framework over every case.
    Run(RunArgs),
    /// Serve the grading API and UI assets.
    Serve(ServeArgs),
    /// Compute metrics and usability reports from graded results.
    Eval(EvalArgs),
    /// Print the last evaluation report.
    Report(ReportArgs),
    /// Write the grading event log as JSON Lines.
    Export(ExportArgs),
    /// Append grading events from a JSON Lines file.
    Import(ImportArgs),
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Replace stored cases even when results already exist for them.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Shell template with `{input}`, `{output}`, `{crop}` and `{target_kbps}`.
    #[arg(long)]
    pub exec: Option<String>,
    /// `auto`, `none` or WxH+X+Y.
    #[arg(long)]
    pub crop: Option<String>,
    /// Target bitrate; 0 disables compression.
    #[arg(long)]
    pub target_kbps: Option<u32>,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
}

impl PreprocessArgs {
    pub fn crop_region(&self) -> Result<Option<Option<CropRegion>>, String> {
        match self.crop.as_deref() {
            None => Ok(None),
            Some("none") => Ok(Some(None)),
            Some(raw) => raw.parse().map(|r| Some(Some(r))),
        }
    }
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Probability that a case leaves out performed movements.
    #[arg(long, default_value_t = 0.0)]
    pub omit: f64,
    /// Probability that a case carries a contradictory judgment.
    #[arg(long, default_value_t = 0.0)]
    pub contradiction: f64,
    /// Probability that a case carries an unsupported judgment.
    #[arg(long, default_value_t = 0.0)]
    pub logic_leap: f64,
    /// Replace stored cases even when results already exist for them.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendChoice {
    Remote,
    #[value(alias = "simulated")]
    Sim,
}

impl BackendChoice {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendChoice::Remote => "remote",
            BackendChoice::Sim => "sim",
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub framework: Framework,
    #[arg(long, value_enum, default_value_t = BackendChoice::Sim)]
    pub backend: BackendChoice,
    /// Frames sampled per video by the baseline.
    #[arg(long, default_value_t = DEFAULT_FRAME_COUNT)]
    pub frames: usize,
    #[arg(long, default_value_t = 4)]
    pub concurrency: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8765")]
    pub addr: SocketAddr,
    /// Directory of built UI assets. Defaults to `ui/` in the workspace.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Withhold raw transcripts from graders.
    #[arg(long)]
    pub hide_raw: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Comma-separated scenario numbers.
    #[arg(long, value_delimiter = ',', default_values_t = [1u8, 2, 3])]
    pub scenarios: Vec<u8>,
    /// Bootstrap replicates; overrides the config file.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Bootstrap seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Restrict to these frameworks; defaults to every framework with results.
    #[arg(long, value_delimiter = ',')]
    pub frameworks: Vec<Framework>,
    /// Grade ungraded results of a simulated corpus from its defect records.
    #[arg(long)]
    pub auto_grade: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Csv,
    Md,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    /// Output file; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub framework: Option<Framework>,
}

#[derive(Debug, Args)]
pub struct ImportArgs {
    #[arg(long)]
    pub input: PathBuf,
}
