//! `flowsieve`: synthesize, ingest, clean, train, evaluate and compare.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "flowsieve", version, about = "Clean app-tagged encrypted traffic for classifier training")]
pub struct Cli {
    /// `key = value` file supplying defaults for any long option.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a labeled scenario with ground-truth roles.
    Synth(SynthArgs),
    /// Assemble tagged flows from pcap captures.
    Ingest(IngestArgs),
    /// DPI-filter, cluster and select flows per app.
    Clean(CleanArgs),
    /// Split a flow table and train a random forest.
    Train(TrainArgs),
    /// Score a trained model on a test flow table.
    Eval(EvalArgs),
    /// Uncleaned vs oracle vs pipeline-cleaned training sets.
    Compare(CompareArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Scenario file; the built-in five-app scenario when omitted.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    /// Capture file; repeat for several.
    #[arg(long, required = true)]
    pub pcap: Vec<PathBuf>,
    /// Tag map (`mac <addr> <label>` / `vlan <id> <label>` lines).
    #[arg(long)]
    pub tags: Option<PathBuf>,
    #[arg(long)]
    pub idle_timeout: Option<f64>,
    #[arg(long)]
    pub prefix_cap: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct CleanOpts {
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// ward, average or complete.
    #[arg(long)]
    pub linkage: Option<String>,
    /// Selection rules file.
    #[arg(long)]
    pub policy: Option<PathBuf>,
    /// Domain suffix blocklist, one per line.
    #[arg(long)]
    pub blocklist: Option<PathBuf>,
    #[arg(long)]
    pub skip_dpi: bool,
    /// Cluster all apps together.
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write CSV versions of the reports.
    #[arg(long)]
    pub emit_csv: bool,
}

#[derive(Args, Debug)]
pub struct CleanArgs {
    #[arg(long)]
    pub flows: Option<PathBuf>,
    /// kmeans or hier.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[command(flatten)]
    pub opts: CleanOpts,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ForestOpts {
    #[arg(long)]
    pub train_frac: Option<f64>,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub max_depth: Option<usize>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub forest: ForestOpts,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Scenario file to generate; ignored when --flows is given.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Existing flow table, used together with --roles.
    #[arg(long, requires = "roles")]
    pub flows: Option<PathBuf>,
    #[arg(long)]
    pub roles: Option<PathBuf>,
    /// Comma-separated: kmeans,hier.
    #[arg(long)]
    pub algorithm: Option<String>,
    #[command(flatten)]
    pub opts: CleanOpts,
    #[command(flatten)]
    pub forest: ForestOpts,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
