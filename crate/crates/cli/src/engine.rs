use std::fmt;
use std::time::Instant;

use clap::ValueEnum;
use memoshare::bigstep::{eval_cbv, eval_memo_with_budget};
use memoshare::machine::{RunOptions, TraceRow};
use memoshare::{Heap, Location, Machine, Program, Term, TermCache};
use num_bigint::BigUint;

use crate::error::CliError;

/// Budget of the plain engine when none is given, in derivation steps.
pub const DEFAULT_NAIVE_BUDGET: u64 = 100_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineKind {
    /// Plain call-by-value evaluation on terms.
    Naive,
    /// Call-by-value with a cache of calls.
    Memo,
    /// The small-step machine on a maximally shared heap.
    Shared,
}

impl EngineKind {
    pub fn name(self) -> &'static str {
        match self {
            EngineKind::Naive => "naive",
            EngineKind::Memo => "memo",
            EngineKind::Shared => "shared",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// The outcome of one engine run. The answer is always kept as a
/// maximally shared heap so that statistics never unfold it.
pub struct Evaluation {
    pub engine: EngineKind,
    pub heap: Heap,
    pub root: Location,
    /// Firings for the plain engine, cache updates (apply steps) otherwise.
    pub cost: u64,
    pub steps: u64,
    /// Heap of the shared engine, including the input.
    pub heap_size: Option<usize>,
    pub cache_size: usize,
    pub delta: u64,
    pub wall_ns: u128,
    pub trace: Vec<TraceRow>,
}

impl Evaluation {
    pub fn dag_nodes(&self) -> usize {
        self.heap.dag_size(self.root).expect("answer is in the heap")
    }

    pub fn unfolded_size(&self) -> BigUint {
        self.heap.unfolded_size(self.root).expect("answer is in the heap")
    }

    /// Depth of the answer, with constants at depth 1.
    pub fn depth(&self) -> usize {
        let order = self.heap.reachable(&[self.root]).expect("answer is in the heap");
        let mut depth = vec![0usize; self.root.index() + 1];
        for l in order {
            let node = self.heap.node(l).expect("reachable");
            depth[l.index()] = 1 + node.children.iter().map(|c| depth[c.index()]).max().unwrap_or(0);
        }
        depth[self.root.index()]
    }

    pub fn value(&self) -> Term {
        self.heap.unfold(self.root).expect("answer is in the heap")
    }

    /// Whether `other` computed the same answer, compared on DAGs.
    pub fn same_value(&self, other: &Evaluation) -> bool {
        let mut heap = self.heap.clone();
        let theirs = other.value();
        heap.store_value(&theirs).ok() == Some(self.root)
    }
}

pub fn evaluate(
    program: &Program,
    machine: &Machine<'_>,
    input: &Term,
    engine: EngineKind,
    budget: Option<u64>,
    trace: bool,
) -> Result<Evaluation, CliError> {
    let delta = machine.delta();
    let start = Instant::now();
    match engine {
        EngineKind::Naive => {
            let out = eval_cbv(program, input, budget.unwrap_or(DEFAULT_NAIVE_BUDGET))?;
            let wall_ns = start.elapsed().as_nanos();
            let (heap, root) = heap_of(&out.value)?;
            Ok(Evaluation {
                engine,
                heap,
                root,
                cost: out.firings,
                steps: out.steps,
                heap_size: None,
                cache_size: 0,
                delta,
                wall_ns,
                trace: Vec::new(),
            })
        }
        EngineKind::Memo => {
            let out = eval_memo_with_budget(program, TermCache::new(), input, budget)?;
            let wall_ns = start.elapsed().as_nanos();
            let (heap, root) = heap_of(&out.value)?;
            Ok(Evaluation {
                engine,
                heap,
                root,
                cost: out.cost,
                steps: out.steps,
                heap_size: None,
                cache_size: out.cache.len(),
                delta,
                wall_ns,
                trace: Vec::new(),
            })
        }
        EngineKind::Shared => {
            let opts = RunOptions {
                budget,
                trace,
                ..RunOptions::default()
            };
            let out = machine.eval(input, &opts)?;
            let wall_ns = start.elapsed().as_nanos();
            Ok(Evaluation {
                engine,
                heap_size: Some(out.config.heap.len()),
                cache_size: out.config.cache.len(),
                heap: out.config.heap,
                root: out.result,
                cost: out.stats.applies,
                steps: out.stats.total,
                delta,
                wall_ns,
                trace: out.trace,
            })
        }
    }
}

fn heap_of(value: &Term) -> Result<(Heap, Location), CliError> {
    let mut heap = Heap::new();
    let root = heap.store_value(value).map_err(|e| CliError::Other(e.to_string()))?;
    Ok((heap, root))
}
