//! The `layoutkit` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 internal invariant failure.

mod config;
mod pipeline;
mod render;
mod selftest;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::benchgen::TaskKind;
use crate::metrics::Axis;

pub use config::{FileConfig, GenParamArgs, Overrides, ReportFormat, RunConfig};
pub use pipeline::{PredictionRecord, SolveStatus};
pub use render::render_svg;
pub use selftest::{run_suites, SuiteOutcome};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<crate::benchgen::GenError> for CliError {
    fn from(e: crate::benchgen::GenError) -> Self {
        CliError::Data(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "layoutkit",
    version,
    about = "Generate, solve, score and evaluate 3D layout-editing benchmarks"
)]
pub struct Cli {
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, short = 'j', global = true)]
    pub parallelism: Option<usize>,
    /// Raise log verbosity (repeat for more).
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark manifest.
    Gen(GenArgs),
    /// Run the rule-based solvers over a manifest.
    Solve(SolveArgs),
    /// Score predictions against a manifest.
    Eval(EvalArgs),
    /// Compute composite rewards for raw traces.
    Score(ScoreArgs),
    /// Draw top-down SVGs of a graph or a manifest.
    Render(RenderArgs),
    /// Run the embedded invariant suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TaskArg {
    Sorting,
    Alignment,
    Roomedit,
    All,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Task family; comma separated or `all`.
    #[arg(long, value_delimiter = ',', required = true)]
    pub task: Vec<TaskArg>,
    /// Instances per task.
    #[arg(long, default_value_t = 10)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output manifest (JSONL).
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    #[command(flatten)]
    pub params: GenParamArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output predictions (JSONL).
    #[arg(long, short = 'o')]
    pub out: PathBuf,
    /// Let the alignment solver read the grid spec instead of inferring it.
    #[arg(long)]
    pub grid_hint: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub predictions: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<ReportFormat>,
    /// Report destination; stdout when absent.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    /// IoU@x thresholds (repeatable).
    #[arg(long = "iou-threshold")]
    pub iou_thresholds: Vec<f64>,
    /// Override the sort axis used for edit distance.
    #[arg(long)]
    pub sort_axis: Option<Axis>,
    #[arg(long)]
    pub collision_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// JSONL with `{"id", "text"}` per rollout.
    #[arg(long)]
    pub traces: PathBuf,
    #[arg(long)]
    pub manifest: PathBuf,
    /// Per-rollout rewards (JSONL); stdout when absent.
    #[arg(long, short = 'o')]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub collision_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// A scene-graph JSON file or a manifest.
    pub input: PathBuf,
    /// SVG file for a graph, directory for a manifest.
    #[arg(long, short = 'o')]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fresh instances per task for the closure suites.
    #[arg(long, default_value_t = 50)]
    pub instances: usize,
}

impl TaskArg {
    fn expand(list: &[TaskArg]) -> Vec<TaskKind> {
        let mut out: Vec<TaskKind> = Vec::new();
        for t in list {
            let kinds: &[TaskKind] = match t {
                TaskArg::Sorting => &[TaskKind::Sorting],
                TaskArg::Alignment => &[TaskKind::Alignment],
                TaskArg::Roomedit => &[TaskKind::Roomedit],
                TaskArg::All => &TaskKind::ALL,
            };
            for k in kinds {
                if !out.contains(k) {
                    out.push(*k);
                }
            }
        }
        out
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let mut flags = Overrides {
        parallelism: cli.parallelism,
        ..Overrides::default()
    };
    match &cli.command {
        Command::Gen(a) => flags.seed = a.seed,
        Command::Selftest(a) => flags.seed = a.seed,
        Command::Eval(a) => {
            flags.format = a.format;
            flags.sort_axis = a.sort_axis;
            flags.collision_eps = a.collision_eps;
            if !a.iou_thresholds.is_empty() {
                flags.iou_thresholds = Some(a.iou_thresholds.clone());
            }
        }
        Command::Score(a) => {
            flags.lambda1 = a.lambda1;
            flags.lambda2 = a.lambda2;
            flags.collision_eps = a.collision_eps;
        }
        Command::Solve(_) | Command::Render(_) => {}
    }
    let cfg = RunConfig::resolve(&file, &flags)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism)
        .build()
        .map_err(|e| CliError::Internal(format!("thread pool: {e}")))?;

    pool.install(|| match &cli.command {
        Command::Gen(a) => {
            let params = a.params.overlay(&file.gen).to_params()?;
            pipeline::cmd_gen(&TaskArg::expand(&a.task), a.count, cfg.seed, &params, &a.out)
        }
        Command::Solve(a) => pipeline::cmd_solve(&a.manifest, &a.out, a.grid_hint || file.grid_hint.unwrap_or(false)),
        Command::Eval(a) => pipeline::cmd_eval(&a.manifest, &a.predictions, &cfg, a.out.as_deref()),
        Command::Score(a) => pipeline::cmd_score(&a.traces, &a.manifest, &cfg, a.out.as_deref()),
        Command::Render(a) => render::cmd_render(&a.input, &a.out),
        Command::Selftest(a) => selftest::cmd_selftest(cfg.seed, a.instances),
    })
}

/// Writes `bytes` to `path`, or stdout when `path` is absent or `-`.
pub(crate) fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, bytes).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes)
                .and_then(|_| out.flush())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}
