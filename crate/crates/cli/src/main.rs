mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use jump_kolmogorov::feller::Summation;
use jump_kolmogorov::kolmogorov::{DIFFERENTIAL_TOL, INTEGRAL_TOL};

#[derive(Debug, Parser)]
#[command(name = "jumpkol", version, about = "Minimal transition functions of jump Markov processes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sum the minimal solution on a time grid.
    Solve(SolveArgs),
    /// Monte Carlo estimate of the transition law.
    Simulate(SimulateArgs),
    /// Check the Kolmogorov equations on a computed solution.
    Verify(VerifyArgs),
    /// Probe the rate boundedness assumptions.
    Check(CheckArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SummationArg {
    Terms,
    Resolvent,
}

impl From<SummationArg> for Summation {
    fn from(s: SummationArg) -> Self {
        match s {
            SummationArg::Terms => Summation::Terms,
            SummationArg::Resolvent => Summation::Resolvent,
        }
    }
}

/// Options shared by every command.
#[derive(Debug, Args)]
pub struct Common {
    /// Model spec (JSON file), or the name of a catalog family with its defaults.
    #[arg(long)]
    pub model: String,
    /// Start time.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub u: f64,
    /// Start state (index; signed models use the interleaved order 0, 1, -1, 2, ...).
    #[arg(long, default_value_t = 0)]
    pub x: usize,
    /// End time; the grid is uniform with step `--h`.
    #[arg(long, conflicts_with = "t_grid", required_unless_present = "t_grid")]
    pub t: Option<f64>,
    /// Time grid `a:b:h`; `a` must equal `--u`.
    #[arg(long)]
    pub t_grid: Option<String>,
    /// Grid step used with `--t`.
    #[arg(long, default_value_t = 1e-3)]
    pub h: f64,
    /// Number of states kept (signed models count both signs).
    #[arg(long, default_value_t = 40)]
    pub trunc: usize,
    /// Output file; defaults to `$JUMPKOL_OUT_DIR/<command>.<format>`, then stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Default directory for output files.
    #[arg(long, env = "JUMPKOL_OUT_DIR", hide_env_values = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SeriesArgs {
    /// Stop once a term's mass falls below this.
    #[arg(long, default_value_t = 1e-10)]
    pub eps: f64,
    #[arg(long, default_value_t = 200)]
    pub max_terms: usize,
    #[arg(long, value_enum, default_value_t = SummationArg::Resolvent)]
    pub summation: SummationArg,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub series: SeriesArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value_t = 10_000)]
    pub paths: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = jump_kolmogorov::simulate::DEFAULT_JUMP_CAP)]
    pub jump_cap: usize,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub series: SeriesArgs,
    /// Target set B as comma-separated indices, or `all` for the whole truncation.
    #[arg(long, default_value = "0")]
    pub set: String,
    /// Rate bound for B; defaults to the largest rate of B on the grid.
    #[arg(long)]
    pub bound: Option<f64>,
    #[arg(long, default_value_t = INTEGRAL_TOL)]
    pub integral_tol: f64,
    #[arg(long, default_value_t = DIFFERENTIAL_TOL)]
    pub differential_tol: f64,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub common: Common,
    /// Rates above this count as unbounded.
    #[arg(long, default_value_t = 1e6)]
    pub bound_threshold: f64,
    /// Also probe the model extended by zero rates to `[0, ∞)`.
    #[arg(long)]
    pub halfline: bool,
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
    let result = match cli.command {
        Command::Solve(a) => commands::solve(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Check(a) => commands::check(&a),
    };
    match result {
        Ok(status) => ExitCode::from(status as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
