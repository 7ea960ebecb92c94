//! `memoshare`: run rewrite programs under the plain, memoized and shared
//! engines, check programs and tiers, compile recursion modules, and
//! produce cost curves.

mod bench;
mod engine;
mod error;
mod grsr_cmd;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::engine::EngineKind;
use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "memoshare", version, about = "Memoized rewriting with maximal sharing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a ground term and print a run report.
    Run(RunArgs),
    /// Check that a program is left-linear and non-ambiguous.
    Check {
        program: PathBuf,
    },
    /// Check or infer tier signatures of the definitions in a module.
    Tier {
        module: PathBuf,
        /// Largest tier considered.
        #[arg(long)]
        tmax: Option<u32>,
        /// Only this definition.
        #[arg(long)]
        def: Option<String>,
    },
    /// Compile a definition of a module to a rewrite program.
    Compile {
        module: PathBuf,
        /// Definition to compile; defaults to the last one.
        #[arg(long)]
        def: Option<String>,
        /// Write the program here instead of standard output.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Measure costs over a family of inputs and write CSV.
    Bench(BenchArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    program: PathBuf,
    term: String,
    #[arg(long, value_enum, default_value_t = EngineKind::Shared)]
    engine: EngineKind,
    /// Step budget, e.g. `1000000`, `10^6` or `1e6`.
    #[arg(long, value_parser = parse_budget)]
    budget: Option<u64>,
    /// Write the answer DAG in Graphviz format.
    #[arg(long)]
    dot: Option<PathBuf>,
    /// Write the step log as CSV (shared engine only).
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Run all three engines and compare their answers and costs.
    #[arg(long)]
    check_all: bool,
    /// Print the result in full only up to this depth.
    #[arg(long, default_value_t = 16)]
    depth_cap: usize,
}

#[derive(Args, Debug)]
struct BenchArgs {
    program: PathBuf,
    /// Operation applied to `suc^n(zero)`.
    #[arg(long, required_unless_present = "template", conflicts_with = "template")]
    entry: Option<String>,
    /// Input term with `{n}` standing for the size parameter,
    /// e.g. `add(suc^{n}(zero), zero)`.
    #[arg(long)]
    template: Option<String>,
    #[arg(long, default_value_t = 1)]
    from: u64,
    #[arg(long, default_value_t = 20)]
    to: u64,
    #[arg(long, default_value_t = 1)]
    step: u64,
    /// Engines to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "shared")]
    engine: Vec<EngineKind>,
    /// Step budget per run; rows over budget are marked, not fatal.
    #[arg(long, value_parser = parse_budget)]
    budget: Option<u64>,
    /// Write CSV here instead of standard output.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Repetitions per row; the fastest wall time is kept.
    #[arg(long, default_value_t = 1)]
    reps: u32,
}

fn parse_budget(s: &str) -> Result<u64, String> {
    let s = s.trim().replace('_', "");
    let bad = || format!("invalid budget `{s}`");
    let power = |base: &str, exp: &str| -> Result<u64, String> {
        let b: u64 = base.parse().map_err(|_| bad())?;
        let e: u32 = exp.parse().map_err(|_| bad())?;
        b.checked_pow(e).ok_or_else(bad)
    };
    if let Some((base, exp)) = s.split_once('^') {
        power(base, exp)
    } else if let Some((mant, exp)) = s.split_once(['e', 'E']) {
        let m: u64 = mant.parse().map_err(|_| bad())?;
        m.checked_mul(power("10", exp)?).ok_or_else(bad)
    } else {
        s.parse().map_err(|_| bad())
    }
}

fn read(path: &PathBuf) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => run::cmd_run(&args),
        Command::Check { program } => run::cmd_check(&read(&program)?),
        Command::Tier { module, tmax, def } => grsr_cmd::cmd_tier(&read(&module)?, tmax, def.as_deref()),
        Command::Compile { module, def, output } => {
            let text = grsr_cmd::cmd_compile(&read(&module)?, def.as_deref())?;
            match output {
                Some(path) => std::fs::write(&path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Command::Bench(args) => bench::cmd_bench(&args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
