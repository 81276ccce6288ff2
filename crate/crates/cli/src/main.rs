//! `rehost`: analyze, instrument, run and fuzz FIR firmware programs, and
//! plan link integration against a host RTOS port.

mod commands;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rehost_core::transforms::PassConfig;

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_FOUND: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_INTERNAL: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "rehost", version, about = "Rehost and fuzz FIR firmware programs on a deterministic VM")]
pub struct Cli {
    /// Directory for output files. Without it, results only go to stdout.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// RNG seed for fuzzing and asm elision.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Print results, and errors on stderr, as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone, Copy, Default)]
pub struct Passes {
    /// Leave MMIO accesses unhooked; they fault as unmapped. Needs --no-weaken.
    #[arg(long)]
    pub no_mmio: bool,
    /// Do not weaken device-dependent branch conditions.
    #[arg(long)]
    pub no_weaken: bool,
    /// Do not inject the interrupt dispatcher task.
    #[arg(long)]
    pub no_dispatcher: bool,
    /// Keep inline assembly (it then executes as a no-op).
    #[arg(long)]
    pub no_asm_elide: bool,
}

impl Passes {
    pub fn config(&self, seed: u64) -> PassConfig {
        PassConfig {
            elide_asm: !self.no_asm_elide,
            mmio: !self.no_mmio,
            weaken: !self.no_weaken,
            dispatcher: !self.no_dispatcher,
            seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct FuzzFlags {
    /// Number of executions (default 10000).
    #[arg(long, conflicts_with = "seconds")]
    pub execs: Option<u64>,
    /// Wall-clock budget; results are not reproducible.
    #[arg(long)]
    pub seconds: Option<f64>,
    /// Worker threads; more than one is not reproducible.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Instruction budget per execution.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Directory of seed inputs, run in file-name order.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Find MMIO ranges from constant addresses; optionally compare with an SVD JSON file.
    Analyze {
        file: PathBuf,
        #[arg(long)]
        svd: Option<PathBuf>,
        /// Lay memory out without the dispatcher task.
        #[arg(long)]
        no_dispatcher: bool,
    },
    /// Apply the instrumentation passes and write the instrumented artifact.
    Instrument {
        file: PathBuf,
        #[command(flatten)]
        passes: Passes,
    },
    /// Execute one input and print the execution report.
    Run {
        file: PathBuf,
        /// Input bytes; empty when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Instruction budget.
        #[arg(long)]
        budget: Option<u64>,
        #[command(flatten)]
        passes: Passes,
    },
    /// Coverage-guided fuzzing of the whole program.
    Fuzz {
        file: PathBuf,
        #[command(flatten)]
        passes: Passes,
        #[command(flatten)]
        flags: FuzzFlags,
    },
    /// Fuzz one function through a synthesized single-call harness.
    FuzzFn {
        function: String,
        file: PathBuf,
        #[command(flatten)]
        passes: Passes,
        #[command(flatten)]
        flags: FuzzFlags,
    },
    /// Resolve a link manifest into a link plan.
    Linkplan {
        #[arg(long)]
        manifest: PathBuf,
        /// Build oracle for config selection, run through `sh -c` with the
        /// candidate `key=value` file as `$1`; exit status 0 accepts.
        #[arg(long)]
        oracle_cmd: Option<String>,
    },
    /// Recompute coverage for a finished campaign directory.
    Report {
        dir: PathBuf,
        /// Root functions for reachability, comma separated. Defaults to the
        /// entry and task bodies.
        #[arg(long, value_delimiter = ',')]
        roots: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let json = cli.json;
    match commands::dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            output::report_error(&e, json);
            ExitCode::from(e.code())
        }
    }
}
