//! Orthogonal constructor rewrite programs with memoized, maximally shared
//! evaluation, and a ramified recursion algebra that compiles to them.

pub mod bigstep;
pub mod fit;
pub mod graph;
pub mod grsr;
pub mod heap;
pub mod machine;
pub mod parse;
pub mod term;

pub use bigstep::{eval_cbv, eval_memo, equivalence_check, CostedOutcome, EvalError, TermCache};
pub use heap::{Heap, HeapError, Location};
pub use machine::{Configuration, Expr, Machine, MachineError, RunOptions, RunStats, StepKind};
pub use parse::{parse_program, parse_term, LoadError, ParseError};
pub use term::{
    match_term, minimal_shared_size, program_delta, term_size, Program, ProgramError, Rule,
    Signature, Substitution, Symbol, Term, TermKind, Var,
};
