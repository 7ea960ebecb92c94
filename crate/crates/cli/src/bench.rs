//! Cost curves as CSV, one row per engine and input size:
//!
//! ```text
//! engine,n,m,total_steps,heap_nodes,unfolded_size_or_overflow,wall_ns
//! ```
//!
//! `heap_nodes` counts the nodes of the answer DAG. The unfolded size is
//! written exactly while it fits in 64 bits and as `overflow` beyond. A run
//! that exceeds the budget leaves `m`, `heap_nodes` and the size empty and
//! puts `over_budget` in `total_steps`.

use std::fs::File;
use std::io::{self, BufWriter, Write};

use memoshare::{parse_program, parse_term, Machine, Term};
use num_bigint::BigUint;

use crate::engine::{evaluate, EngineKind};
use crate::error::CliError;
use crate::{read, BenchArgs};

pub const CSV_HEADER: &str = "engine,n,m,total_steps,heap_nodes,unfolded_size_or_overflow,wall_ns";

/// The input of size `n`: the template with `{n}` replaced, or the entry
/// operation applied to `suc^n(zero)`.
pub fn instantiate(entry: Option<&str>, template: Option<&str>, n: u64) -> String {
    match (template, entry) {
        (Some(t), _) => t.replace("{n}", &n.to_string()),
        (None, Some(op)) => format!("{op}(suc^{n}(zero))"),
        (None, None) => unreachable!("clap requires --entry or --template"),
    }
}

pub fn cmd_bench(args: &BenchArgs) -> Result<(), CliError> {
    if args.step == 0 || args.from > args.to {
        return Err(CliError::Other("empty range: need --step > 0 and --from <= --to".into()));
    }
    let program = parse_program(&read(&args.program)?)?;
    let machine = Machine::new(&program);
    let io_err = |e: io::Error| CliError::Io(e.to_string());
    let mut out: Box<dyn Write> = match &args.csv {
        Some(path) => Box::new(BufWriter::new(
            File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    };
    writeln!(out, "{CSV_HEADER}").map_err(io_err)?;
    let inputs: Vec<(u64, Term)> = (args.from..=args.to)
        .step_by(args.step as usize)
        .map(|n| {
            let text = instantiate(args.entry.as_deref(), args.template.as_deref(), n);
            parse_term(program.signature(), &text).map(|t| (n, t))
        })
        .collect::<Result<_, _>>()?;
    for &engine in &args.engine {
        for (n, input) in &inputs {
            let row = bench_row(&program, &machine, input, engine, args.budget, args.reps.max(1))?;
            writeln!(out, "{},{n},{row}", engine.name()).map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)
}

fn bench_row(
    program: &memoshare::Program,
    machine: &Machine<'_>,
    input: &Term,
    engine: EngineKind,
    budget: Option<u64>,
    reps: u32,
) -> Result<String, CliError> {
    let mut best: Option<crate::engine::Evaluation> = None;
    for _ in 0..reps {
        let start = std::time::Instant::now();
        match evaluate(program, machine, input, engine, budget, false) {
            Ok(eval) => {
                if best.as_ref().is_none_or(|b| eval.wall_ns < b.wall_ns) {
                    best = Some(eval);
                }
            }
            Err(CliError::Budget(_)) => {
                return Ok(format!(",over_budget,,,{}", start.elapsed().as_nanos()));
            }
            Err(e) => return Err(e),
        }
    }
    let eval = best.expect("at least one repetition");
    let size = eval.unfolded_size();
    let size = if size <= BigUint::from(u64::MAX) {
        size.to_string()
    } else {
        "overflow".to_string()
    };
    Ok(format!(
        "{},{},{},{size},{}",
        eval.cost,
        eval.steps,
        eval.dag_nodes(),
        eval.wall_ns
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn families() {
        assert_eq!(instantiate(Some("tree"), None, 3), "tree(suc^3(zero))");
        assert_eq!(
            instantiate(None, Some("add(suc^{n}(zero), suc^{n}(zero))"), 2),
            "add(suc^2(zero), suc^2(zero))"
        );
    }
}
