use std::fs::File;
use std::io::{BufWriter, Write};

use memoshare::machine::write_trace_csv;
use memoshare::parse::parse_program_parts;
use memoshare::term::check_rules;
use memoshare::{parse_program, parse_term, Machine};
use num_bigint::BigUint;

use crate::engine::{evaluate, EngineKind, Evaluation};
use crate::error::CliError;
use crate::{read, RunArgs};

/// Results larger than this are summarized even within the depth cap.
const PRINT_SIZE_CAP: u64 = 10_000;

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let program = parse_program(&read(&args.program)?)?;
    let input = parse_term(program.signature(), &args.term)?;
    let machine = Machine::new(&program);
    if args.trace.is_some() && (args.engine != EngineKind::Shared || args.check_all) {
        return Err(CliError::Other("--trace needs --engine shared and no --check-all".into()));
    }

    if !args.check_all {
        let eval = evaluate(&program, &machine, &input, args.engine, args.budget, args.trace.is_some())?;
        print_report(&eval, &args.term, args.depth_cap);
        return write_outputs(args, &eval);
    }

    let mut runs = Vec::new();
    for engine in [EngineKind::Naive, EngineKind::Memo, EngineKind::Shared] {
        match evaluate(&program, &machine, &input, engine, args.budget, false) {
            Ok(eval) => {
                print_report(&eval, &args.term, args.depth_cap);
                println!();
                runs.push(eval);
            }
            // The plain engine is exponential on some inputs; the other two
            // are still compared.
            Err(CliError::Budget(msg)) if engine == EngineKind::Naive => {
                println!("engine:        naive");
                println!("skipped:       {msg}");
                println!();
            }
            Err(e) => return Err(e),
        }
    }
    let shared = runs.last().expect("shared run");
    for other in &runs[..runs.len() - 1] {
        if !shared.same_value(other) {
            return Err(CliError::Disagreement(format!(
                "{} and shared engines computed different values",
                other.engine
            )));
        }
    }
    let memo = runs.iter().find(|r| r.engine == EngineKind::Memo).expect("memo run");
    if memo.cost != shared.cost {
        return Err(CliError::Disagreement(format!(
            "memo cost {} differs from shared apply steps {}",
            memo.cost, shared.cost
        )));
    }
    let names: Vec<&str> = runs.iter().map(|r| r.engine.name()).collect();
    println!("check-all:     agree ({}), m = {}", names.join(", "), shared.cost);
    let selected = runs.iter().find(|r| r.engine == args.engine).unwrap_or(shared);
    write_outputs(args, selected)
}

fn write_outputs(args: &RunArgs, eval: &Evaluation) -> Result<(), CliError> {
    let io = |path: &std::path::Path, e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    if let Some(path) = &args.dot {
        let dot = eval.heap.to_dot_from(eval.root).map_err(|e| CliError::Other(e.to_string()))?;
        std::fs::write(path, dot).map_err(|e| io(path, e))?;
    }
    if let Some(path) = &args.trace {
        let file = File::create(path).map_err(|e| io(path, e))?;
        let mut out = BufWriter::new(file);
        write_trace_csv(&eval.trace, &mut out).map_err(|e| io(path, e))?;
        out.flush().map_err(|e| io(path, e))?;
    }
    Ok(())
}

fn print_report(eval: &Evaluation, input: &str, depth_cap: usize) {
    let depth = eval.depth();
    let unfolded = eval.unfolded_size();
    let result = if depth <= depth_cap && unfolded <= BigUint::from(PRINT_SIZE_CAP) {
        eval.value().to_string()
    } else {
        format!("<depth {depth}, not printed; see dag_nodes and unfolded_size>")
    };
    let or_dash = |x: Option<usize>| x.map_or("-".to_string(), |x| x.to_string());
    println!("engine:        {}", eval.engine);
    println!("input:         {input}");
    println!("result:        {result}");
    println!("dag_nodes:     {}", eval.dag_nodes());
    println!("unfolded_size: {unfolded}");
    println!("cost_m:        {}", eval.cost);
    println!("total_steps:   {}", eval.steps);
    println!("delta:         {}", eval.delta);
    println!("heap_size:     {}", or_dash(eval.heap_size));
    println!("cache_size:    {}", eval.cache_size);
    println!("wall_ns:       {}", eval.wall_ns);
}

pub fn cmd_check(text: &str) -> Result<(), CliError> {
    let (sig, rules) = parse_program_parts(text)?;
    let problems = check_rules(&sig, &rules);
    if problems.is_empty() {
        println!("orthogonal");
        return Ok(());
    }
    for p in &problems {
        println!("{p}");
    }
    Err(CliError::Other(format!("{} problem(s) found", problems.len())))
}
