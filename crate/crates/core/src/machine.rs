//! The small-step machine with a reference cache and a maximally shared heap.
//!
//! A configuration is a cache, a heap and an expression. Each step rewrites
//! the leftmost-innermost redex with one of four rules:
//!
//! * `apply`: an uncached call `f(ℓ̄)` becomes `f⟨ℓ̄⟩{r·σ}` for the unique
//!   rule `f(p̄) -> r` whose patterns match the heap at `ℓ̄`;
//! * `read`: a cached call becomes the cached location;
//! * `store`: `f⟨ℓ̄⟩{ℓ}` becomes `ℓ` and records `f(ℓ̄) ↦ ℓ`;
//! * `merge`: `c(ℓ̄)` becomes the location of `c(ℓ̄)` in the heap.
//!
//! [`Machine::step`] finds the redex from the root every time. [`Machine::run`]
//! keeps the evaluation context as a stack of frames instead, so a step
//! costs time proportional to the redex, not to the expression depth.

use std::collections::HashMap;
use std::fmt;
use std::io;

use thiserror::Error;

use crate::graph::{canonical_tree, match_tree, TermGraph};
use crate::heap::{Heap, HeapError, Location};
use crate::term::{Program, Signature, Symbol, Term, TermKind};

/// Machine expressions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Expr {
    Loc(Location),
    /// `op⟨args⟩{body}`: `body` descends from the call `op(args)`.
    Annot {
        op: Symbol,
        args: Vec<Location>,
        body: Box<Expr>,
    },
    Call(Symbol, Vec<Expr>),
    Cons(Symbol, Vec<Expr>),
}

enum ExprNode {
    Loc(Location),
    Annot {
        op: Symbol,
        args: Vec<Location>,
        body: Box<Expr>,
    },
    Call(Symbol, Vec<Expr>),
    Cons(Symbol, Vec<Expr>),
}

const PLACEHOLDER: Expr = Expr::Loc(Location(0));

impl Expr {
    fn children_mut(&mut self, out: &mut Vec<Expr>) {
        match self {
            Expr::Loc(_) => {}
            Expr::Annot { body, .. } => {
                if !matches!(**body, Expr::Loc(_)) {
                    out.push(std::mem::replace(&mut **body, PLACEHOLDER));
                }
            }
            Expr::Call(_, args) | Expr::Cons(_, args) => out.append(args),
        }
    }

    fn into_node(mut self) -> ExprNode {
        match &mut self {
            Expr::Loc(l) => ExprNode::Loc(*l),
            Expr::Annot { op, args, body } => ExprNode::Annot {
                op: op.clone(),
                args: std::mem::take(args),
                body: std::mem::replace(body, Box::new(PLACEHOLDER)),
            },
            Expr::Call(f, args) => ExprNode::Call(f.clone(), std::mem::take(args)),
            Expr::Cons(c, args) => ExprNode::Cons(c.clone(), std::mem::take(args)),
        }
    }

    pub fn as_loc(&self) -> Option<Location> {
        match self {
            Expr::Loc(l) => Some(*l),
            _ => None,
        }
    }

    /// Direct subexpressions.
    pub fn children(&self) -> &[Expr] {
        match self {
            Expr::Loc(_) => &[],
            Expr::Annot { body, .. } => std::slice::from_ref(&**body),
            Expr::Call(_, args) | Expr::Cons(_, args) => args,
        }
    }

    fn child_mut(&mut self, i: usize) -> &mut Expr {
        match self {
            Expr::Loc(_) => panic!("locations have no children"),
            Expr::Annot { body, .. } => body,
            Expr::Call(_, args) | Expr::Cons(_, args) => &mut args[i],
        }
    }

    fn is_redex(&self) -> bool {
        match self {
            Expr::Loc(_) => false,
            Expr::Annot { body, .. } => body.as_loc().is_some(),
            Expr::Call(_, args) | Expr::Cons(_, args) => args.iter().all(|a| a.as_loc().is_some()),
        }
    }

    /// Every location mentioned, including annotation arguments.
    pub fn locations(&self) -> Vec<Location> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(e) = stack.pop() {
            match e {
                Expr::Loc(l) => out.push(*l),
                Expr::Annot { args, body, .. } => {
                    out.extend(args.iter().copied());
                    stack.push(body);
                }
                Expr::Call(_, args) | Expr::Cons(_, args) => stack.extend(args.iter()),
            }
        }
        out
    }
}

impl Drop for Expr {
    fn drop(&mut self) {
        let mut pending = Vec::new();
        self.children_mut(&mut pending);
        while let Some(mut e) = pending.pop() {
            e.children_mut(&mut pending);
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list<T: fmt::Display>(f: &mut fmt::Formatter<'_>, xs: &[T]) -> fmt::Result {
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{x}")?;
            }
            Ok(())
        }
        match self {
            Expr::Loc(l) => write!(f, "{l}"),
            Expr::Annot { op, args, body } => {
                write!(f, "{op}⟨")?;
                list(f, args)?;
                write!(f, "⟩{{{body}}}")
            }
            Expr::Call(h, args) | Expr::Cons(h, args) => {
                write!(f, "{h}")?;
                if args.is_empty() && matches!(self, Expr::Cons(..)) {
                    return Ok(());
                }
                f.write_str("(")?;
                list(f, args)?;
                f.write_str(")")
            }
        }
    }
}

/// Size of an expression: locations count one, an annotation counts one
/// plus its body.
pub fn expression_size(e: &Expr) -> u64 {
    measure(e, 1)
}

/// Like [`expression_size`], but locations count zero.
pub fn expression_weight(e: &Expr) -> u64 {
    measure(e, 0)
}

fn measure(e: &Expr, loc_cost: u64) -> u64 {
    let mut total = 0;
    let mut stack = vec![e];
    while let Some(e) = stack.pop() {
        match e {
            Expr::Loc(_) => total += loc_cost,
            _ => {
                total += 1;
                stack.extend(e.children());
            }
        }
    }
    total
}

/// The term denoted by `e`: locations are unfolded, annotations dropped.
pub fn unfold_expression(h: &Heap, e: &Expr) -> Result<Term, HeapError> {
    let mut unfolded: HashMap<Location, Term> = HashMap::new();
    for l in e.locations() {
        if let std::collections::hash_map::Entry::Vacant(v) = unfolded.entry(l) {
            v.insert(h.unfold(l)?);
        }
    }
    let mut results: Vec<Term> = Vec::new();
    let mut stack: Vec<(&Expr, bool)> = vec![(e, false)];
    while let Some((e, expanded)) = stack.pop() {
        match e {
            Expr::Loc(l) => results.push(unfolded[l].clone()),
            Expr::Annot { body, .. } => stack.push((body, false)),
            Expr::Call(h, args) | Expr::Cons(h, args) => {
                if expanded {
                    let kids = results.split_off(results.len() - args.len());
                    results.push(Term::app(h.clone(), kids));
                } else {
                    stack.push((e, true));
                    stack.extend(args.iter().rev().map(|a| (a, false)));
                }
            }
        }
    }
    Ok(results.pop().expect("one result"))
}

/// An evaluation context, given as the path from the root of an
/// expression to its hole. Step `i` selects argument `i` of a call or
/// constructor, or the body of an annotation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EvalContext {
    pub path: Vec<usize>,
}

impl EvalContext {
    pub fn redex<'e>(&self, e: &'e Expr) -> &'e Expr {
        self.path.iter().fold(e, |e, &i| &e.children()[i])
    }

    pub fn redex_mut<'e>(&self, e: &'e mut Expr) -> &'e mut Expr {
        self.path.iter().fold(e, |e, &i| e.child_mut(i))
    }

    /// Fills the hole of the context, as it sits in `e`, with `filler`.
    pub fn plug(&self, mut e: Expr, filler: Expr) -> Expr {
        *self.redex_mut(&mut e) = filler;
        e
    }

    /// The context drawn with `□` for the hole.
    pub fn render(&self, e: &Expr) -> String {
        fn go(e: &Expr, path: &[usize], out: &mut String) {
            let Some((&i, rest)) = path.split_first() else {
                out.push('□');
                return;
            };
            match e {
                Expr::Loc(l) => out.push_str(&l.to_string()),
                Expr::Annot { op, args, body } => {
                    let args: Vec<String> = args.iter().map(|a| a.to_string()).collect();
                    out.push_str(&format!("{op}⟨{}⟩{{", args.join(", ")));
                    go(body, rest, out);
                    out.push('}');
                }
                Expr::Call(h, args) | Expr::Cons(h, args) => {
                    out.push_str(&format!("{h}("));
                    for (j, a) in args.iter().enumerate() {
                        if j > 0 {
                            out.push_str(", ");
                        }
                        if j == i {
                            go(a, rest, out);
                        } else {
                            out.push_str(&a.to_string());
                        }
                    }
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        go(e, &self.path, &mut out);
        out
    }
}

/// The leftmost-innermost decomposition `e = E[r]`; `None` when `e` is a
/// location.
pub fn decompose(e: &Expr) -> Option<(EvalContext, &Expr)> {
    let mut path = Vec::new();
    let mut cur = e;
    loop {
        if cur.is_redex() {
            return Some((EvalContext { path }, cur));
        }
        let next = match cur {
            Expr::Loc(_) => return None,
            Expr::Annot { .. } => 0,
            Expr::Call(_, args) | Expr::Cons(_, args) => args
                .iter()
                .position(|a| a.as_loc().is_none())
                .expect("not a redex, so some argument is not a location"),
        };
        path.push(next);
        cur = &cur.children()[next];
    }
}

/// Every way of writing `e` as `E[r]` with `E` generated by the context
/// grammar and `r` a redex. Used to check that decomposition is unique.
pub fn all_decompositions(e: &Expr) -> Vec<EvalContext> {
    let mut out = Vec::new();
    let mut stack = vec![(e, Vec::new())];
    while let Some((e, path)) = stack.pop() {
        if e.is_redex() {
            out.push(EvalContext { path: path.clone() });
        }
        match e {
            Expr::Loc(_) => {}
            Expr::Annot { body, .. } => {
                let mut p = path.clone();
                p.push(0);
                stack.push((body, p));
            }
            Expr::Call(_, args) | Expr::Cons(_, args) => {
                // The hole may sit at position i only if everything to its
                // left is a location.
                for (i, a) in args.iter().enumerate() {
                    let mut p = path.clone();
                    p.push(i);
                    stack.push((a, p));
                    if a.as_loc().is_none() {
                        break;
                    }
                }
            }
        }
    }
    out
}

/// Reference-level cache from calls on locations to result locations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RefCache {
    entries: HashMap<(Symbol, Vec<Location>), Location>,
}

impl RefCache {
    pub fn new() -> Self {
        RefCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, op: &Symbol, args: &[Location]) -> Option<Location> {
        if self.entries.is_empty() {
            return None;
        }
        self.entries.get(&(op.clone(), args.to_vec())).copied()
    }

    pub fn insert(&mut self, op: Symbol, args: Vec<Location>, result: Location) -> Option<Location> {
        self.entries.insert((op, args), result)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Symbol, &[Location], Location)> {
        self.entries.iter().map(|((f, a), l)| (f, a.as_slice(), *l))
    }
}

/// Machine state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Configuration {
    pub cache: RefCache,
    pub heap: Heap,
    pub expr: Expr,
}

impl Configuration {
    /// The initial configuration for a ground term: maximal value subterms
    /// are stored in a fresh heap and replaced by their locations.
    pub fn initial(sig: &Signature, t: &Term) -> Result<Configuration, MachineError> {
        Configuration::with_heap(sig, Heap::new(), t)
    }

    /// Like [`Configuration::initial`], storing into an existing heap.
    pub fn with_heap(sig: &Signature, mut heap: Heap, t: &Term) -> Result<Configuration, MachineError> {
        fn convert(sig: &Signature, heap: &mut Heap, t: &Term) -> Result<Expr, MachineError> {
            if t.is_value(sig) {
                return Ok(Expr::Loc(heap.store_value(t)?));
            }
            match t.kind() {
                TermKind::Var(x) => Err(MachineError::NotGround { var: x.to_string() }),
                TermKind::App(f, args) => {
                    let args = args
                        .iter()
                        .map(|a| convert(sig, heap, a))
                        .collect::<Result<Vec<_>, _>>()?;
                    if sig.is_operation(f) {
                        Ok(Expr::Call(f.clone(), args))
                    } else if sig.is_constructor(f) {
                        Ok(Expr::Cons(f.clone(), args))
                    } else {
                        Err(MachineError::UnknownSymbol { symbol: f.clone() })
                    }
                }
            }
        }
        let expr = convert(sig, &mut heap, t)?;
        Ok(Configuration {
            cache: RefCache::new(),
            heap,
            expr,
        })
    }

    /// `|C| + |H| + |e|`.
    pub fn size(&self) -> u64 {
        self.cache.len() as u64 + self.heap.len() as u64 + expression_size(&self.expr)
    }
}

/// A violated well-formedness condition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WellFormedness {
    /// Two locations hold the same node.
    NotMaximallyShared { first: Location, second: Location },
    /// An annotation is present although its call is already cached.
    IncompatibleCache { op: Symbol, args: Vec<Location>, cached: Location },
    /// A location that is not in the heap.
    Dangling { location: Location, place: &'static str },
}

impl fmt::Display for WellFormedness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WellFormedness::NotMaximallyShared { first, second } => {
                write!(f, "heap not maximally shared: {first} and {second} hold the same node")
            }
            WellFormedness::IncompatibleCache { op, args, cached } => {
                write!(f, "cache incompatible: annotation {op}⟨{args:?}⟩ while the call is cached as {cached}")
            }
            WellFormedness::Dangling { location, place } => {
                write!(f, "dangling location {location} in the {place}")
            }
        }
    }
}

/// All violations of well-formedness: maximal sharing, cache
/// compatibility, and absence of dangling locations.
pub fn check_well_formed(cfg: &Configuration) -> Vec<WellFormedness> {
    let mut out = Vec::new();
    let mut seen: HashMap<&crate::heap::HeapNode, Location> = HashMap::new();
    for (l, n) in cfg.heap.nodes() {
        if let Some(&first) = seen.get(n) {
            out.push(WellFormedness::NotMaximallyShared { first, second: l });
        } else {
            seen.insert(n, l);
        }
    }
    let mut stack = vec![&cfg.expr];
    while let Some(e) = stack.pop() {
        if let Expr::Annot { op, args, .. } = e {
            if let Some(cached) = cfg.cache.get(op, args) {
                out.push(WellFormedness::IncompatibleCache {
                    op: op.clone(),
                    args: args.clone(),
                    cached,
                });
            }
        }
        stack.extend(e.children());
    }
    for l in cfg.expr.locations() {
        if !cfg.heap.contains(l) {
            out.push(WellFormedness::Dangling {
                location: l,
                place: "expression",
            });
        }
    }
    let mut cache_locs: Vec<Location> = Vec::new();
    for (_, args, r) in cfg.cache.iter() {
        cache_locs.extend(args.iter().copied());
        cache_locs.push(r);
    }
    cache_locs.sort();
    cache_locs.dedup();
    for l in cache_locs {
        if !cfg.heap.contains(l) {
            out.push(WellFormedness::Dangling {
                location: l,
                place: "cache",
            });
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StepKind {
    Apply,
    Read,
    Store,
    Merge,
}

impl StepKind {
    pub fn name(self) -> &'static str {
        match self {
            StepKind::Apply => "apply",
            StepKind::Read => "read",
            StepKind::Store => "store",
            StepKind::Merge => "merge",
        }
    }
}

impl fmt::Display for StepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum MachineError {
    #[error("stuck: no rule matches `{call}`")]
    Stuck { call: Term },
    #[error("budget of {budget} steps exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("term is not ground: variable `{var}`")]
    NotGround { var: String },
    #[error("unknown symbol `{symbol}`")]
    UnknownSymbol { symbol: Symbol },
    #[error(transparent)]
    Heap(#[from] HeapError),
}

/// Step counts of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    /// Apply steps; the memoized cost `m`.
    pub applies: u64,
    pub reads: u64,
    pub stores: u64,
    pub merges: u64,
    /// All steps; `n`.
    pub total: u64,
    pub delta: u64,
    pub initial_weight: u64,
}

impl RunStats {
    fn count(&mut self, kind: StepKind) {
        self.total += 1;
        match kind {
            StepKind::Apply => self.applies += 1,
            StepKind::Read => self.reads += 1,
            StepKind::Store => self.stores += 1,
            StepKind::Merge => self.merges += 1,
        }
    }
}

/// One line of the step log.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceRow {
    pub step: u64,
    pub kind: StepKind,
    /// Weight of the expression after the step.
    pub weight: u64,
    pub heap_size: usize,
    pub cache_size: usize,
}

pub const TRACE_HEADER: &str = "step,kind,weight,heap_size,cache_size";

pub fn write_trace_csv(rows: &[TraceRow], mut out: impl io::Write) -> io::Result<()> {
    writeln!(out, "{TRACE_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.step, r.kind, r.weight, r.heap_size, r.cache_size
        )?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Step limit; `None` means `(1+Δ)·10^7` plus the initial weight.
    pub budget: Option<u64>,
    /// Keep the evaluation context as a frame stack instead of searching
    /// for the redex from the root after every step.
    pub fast_path: bool,
    pub trace: bool,
    /// Recompute the decomposition from the root and check the step lemmas
    /// and well-formedness after every step. Implies the slow path.
    pub check_invariants: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            budget: None,
            fast_path: true,
            trace: false,
            check_invariants: false,
        }
    }
}

/// A step lemma or well-formedness condition that failed during a run.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub step: u64,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub config: Configuration,
    pub result: Location,
    pub stats: RunStats,
    pub trace: Vec<TraceRow>,
    pub violations: Vec<Violation>,
}

struct CompiledRule {
    patterns: Vec<TermGraph>,
    index: usize,
}

/// A program prepared for the machine: patterns as canonical trees,
/// indexed by operation.
pub struct Machine<'p> {
    program: &'p Program,
    rules: HashMap<Symbol, Vec<CompiledRule>>,
    delta: u64,
}

enum Frame {
    Annot {
        op: Symbol,
        args: Vec<Location>,
    },
    Args {
        is_op: bool,
        head: Symbol,
        done: Vec<Location>,
        /// Remaining arguments, last one first.
        rest: Vec<Expr>,
    },
}

enum Mode {
    Descend(Expr),
    Return(Location),
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program) -> Self {
        let mut rules: HashMap<Symbol, Vec<CompiledRule>> = HashMap::new();
        for (index, r) in program.rules().iter().enumerate() {
            rules.entry(r.operation().clone()).or_default().push(CompiledRule {
                patterns: r.patterns().iter().map(canonical_tree).collect(),
                index,
            });
        }
        Machine {
            program,
            rules,
            delta: program.delta().unwrap_or(0),
        }
    }

    pub fn program(&self) -> &'p Program {
        self.program
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    /// Indices of the rules whose patterns match `op(args)` on the heap,
    /// with the location bound to each variable.
    fn matching_rules(
        &self,
        heap: &Heap,
        op: &Symbol,
        args: &[Location],
    ) -> Vec<(usize, HashMap<crate::term::Var, Location>)> {
        let mut out = Vec::new();
        'rules: for rule in self.rules.get(op).map(Vec::as_slice).unwrap_or(&[]) {
            let mut bindings = HashMap::new();
            for (tree, &loc) in rule.patterns.iter().zip(args) {
                match match_tree(tree, heap, loc) {
                    Some(m) => bindings.extend(m.bindings),
                    None => continue 'rules,
                }
            }
            out.push((rule.index, bindings));
        }
        out
    }

    fn find_rule(&self, heap: &Heap, op: &Symbol, args: &[Location]) -> Result<Expr, MachineError> {
        let Some((index, bindings)) = self.matching_rules(heap, op, args).into_iter().next() else {
            let args = args
                .iter()
                .map(|&l| heap.unfold(l))
                .collect::<Result<Vec<_>, _>>()?;
            return Err(MachineError::Stuck {
                call: Term::app(op.clone(), args),
            });
        };
        Ok(self.instantiate(&self.program.rules()[index].rhs, &bindings))
    }

    /// `r·σ` as an expression: variables become their locations.
    fn instantiate(&self, rhs: &Term, bindings: &HashMap<crate::term::Var, Location>) -> Expr {
        match rhs.kind() {
            TermKind::Var(x) => Expr::Loc(bindings[x]),
            TermKind::App(f, args) => {
                let args = args.iter().map(|a| self.instantiate(a, bindings)).collect();
                if self.program.signature().is_operation(f) {
                    Expr::Call(f.clone(), args)
                } else {
                    Expr::Cons(f.clone(), args)
                }
            }
        }
    }

    /// Number of rules applicable to the leftmost-innermost redex: reads
    /// and applies are told apart by the cache, and every matching program
    /// rule counts as a candidate apply.
    pub fn applicable_rules(&self, cfg: &Configuration) -> usize {
        let Some((_, redex)) = decompose(&cfg.expr) else {
            return 0;
        };
        match redex {
            Expr::Loc(_) => 0,
            Expr::Annot { .. } | Expr::Cons(..) => 1,
            Expr::Call(f, args) => {
                let locs: Vec<Location> = args.iter().filter_map(Expr::as_loc).collect();
                if cfg.cache.get(f, &locs).is_some() {
                    1
                } else {
                    self.matching_rules(&cfg.heap, f, &locs).len()
                }
            }
        }
    }

    /// Performs one step, locating the redex from the root. Returns `None`
    /// on a terminal configuration.
    pub fn step(&self, cfg: &mut Configuration) -> Result<Option<StepKind>, MachineError> {
        let Configuration { cache, heap, expr } = cfg;
        let Some((ctx, _)) = decompose(expr) else {
            return Ok(None);
        };
        let redex = ctx.redex_mut(expr);
        let (kind, replacement) = match &*redex {
            Expr::Loc(_) => unreachable!("locations are not redexes"),
            Expr::Cons(c, args) => {
                let locs: Vec<Location> = args.iter().filter_map(Expr::as_loc).collect();
                (StepKind::Merge, Expr::Loc(heap.merge(c, &locs)?))
            }
            Expr::Annot { op, args, body } => {
                let l = body.as_loc().expect("redex body is a location");
                cache.insert(op.clone(), args.clone(), l);
                (StepKind::Store, Expr::Loc(l))
            }
            Expr::Call(f, args) => {
                let locs: Vec<Location> = args.iter().filter_map(Expr::as_loc).collect();
                match cache.get(f, &locs) {
                    Some(l) => (StepKind::Read, Expr::Loc(l)),
                    None => {
                        let body = self.find_rule(heap, f, &locs)?;
                        (
                            StepKind::Apply,
                            Expr::Annot {
                                op: f.clone(),
                                args: locs,
                                body: Box::new(body),
                            },
                        )
                    }
                }
            }
        };
        *redex = replacement;
        Ok(Some(kind))
    }

    fn default_budget(&self, initial_weight: u64) -> u64 {
        (1 + self.delta)
            .saturating_mul(10_000_000)
            .saturating_add(initial_weight)
    }

    /// Runs a configuration to a location.
    pub fn run(&self, cfg: Configuration, opts: &RunOptions) -> Result<RunOutcome, MachineError> {
        let initial_weight = expression_weight(&cfg.expr);
        let budget = opts.budget.unwrap_or_else(|| self.default_budget(initial_weight));
        let stats = RunStats {
            delta: self.delta,
            initial_weight,
            ..RunStats::default()
        };
        if opts.fast_path && !opts.check_invariants {
            self.run_frames(cfg, budget, opts.trace, stats)
        } else {
            self.run_reference(cfg, budget, opts, stats)
        }
    }

    fn run_reference(
        &self,
        mut cfg: Configuration,
        budget: u64,
        opts: &RunOptions,
        mut stats: RunStats,
    ) -> Result<RunOutcome, MachineError> {
        let mut trace = Vec::new();
        let mut violations = Vec::new();
        let check = opts.check_invariants;
        if check {
            for v in check_well_formed(&cfg) {
                violations.push(Violation {
                    step: 0,
                    message: v.to_string(),
                });
            }
        }
        loop {
            let step_no = stats.total + 1;
            let before = check.then(|| {
                let decomps = all_decompositions(&cfg.expr).len();
                let applicable = self.applicable_rules(&cfg);
                (
                    expression_weight(&cfg.expr),
                    cfg.size(),
                    cfg.heap.clone(),
                    decomps,
                    applicable,
                )
            });
            let Some(kind) = self.step(&mut cfg)? else {
                break;
            };
            stats.count(kind);
            if stats.total > budget {
                return Err(MachineError::BudgetExceeded { budget });
            }
            let weight = expression_weight(&cfg.expr);
            if let Some((w0, s0, heap0, decomps, applicable)) = before {
                let mut fail = |message: String| violations.push(Violation { step: step_no, message });
                if decomps != 1 {
                    fail(format!("{decomps} decompositions"));
                }
                if applicable != 1 {
                    fail(format!("{applicable} applicable rules"));
                }
                match kind {
                    StepKind::Apply if weight > w0 + self.delta => {
                        fail(format!("apply raised weight from {w0} to {weight}, Δ = {}", self.delta))
                    }
                    StepKind::Apply => {}
                    _ if weight >= w0 => fail(format!("{kind} did not decrease weight ({w0} -> {weight})")),
                    _ => {}
                }
                let s1 = cfg.size();
                if s1 > s0 + self.delta {
                    fail(format!("configuration size grew from {s0} to {s1}, Δ = {}", self.delta));
                }
                let unchanged = heap0.nodes().zip(cfg.heap.nodes()).all(|(a, b)| a == b);
                if !unchanged || cfg.heap.len() < heap0.len() {
                    fail("existing heap nodes changed".into());
                }
                for v in check_well_formed(&cfg) {
                    fail(v.to_string());
                }
            }
            if opts.trace {
                trace.push(TraceRow {
                    step: stats.total,
                    kind,
                    weight,
                    heap_size: cfg.heap.len(),
                    cache_size: cfg.cache.len(),
                });
            }
        }
        if check {
            let bound = (1 + self.delta) * stats.applies + stats.initial_weight;
            if stats.total > bound {
                violations.push(Violation {
                    step: stats.total,
                    message: format!("{} steps exceed (1+Δ)·m + w(e0) = {bound}", stats.total),
                });
            }
        }
        let result = cfg.expr.as_loc().expect("terminal expression is a location");
        Ok(RunOutcome {
            config: cfg,
            result,
            stats,
            trace,
            violations,
        })
    }

    fn run_frames(
        &self,
        cfg: Configuration,
        budget: u64,
        tracing: bool,
        mut stats: RunStats,
    ) -> Result<RunOutcome, MachineError> {
        let Configuration {
            mut cache,
            mut heap,
            expr,
        } = cfg;
        let mut trace = Vec::new();
        let mut weight = stats.initial_weight;
        let mut frames: Vec<Frame> = Vec::new();
        let mut mode = Mode::Descend(expr);
        let sig = self.program.signature();
        let result = loop {
            let fired: (StepKind, Mode) = match mode {
                Mode::Descend(e) => match e.into_node() {
                    ExprNode::Loc(l) => {
                        mode = Mode::Return(l);
                        continue;
                    }
                    ExprNode::Annot { op, args, body } => {
                        frames.push(Frame::Annot { op, args });
                        mode = Mode::Descend(*body);
                        continue;
                    }
                    ExprNode::Call(head, mut rest) | ExprNode::Cons(head, mut rest) => {
                        let is_op = sig.is_operation(&head);
                        if rest.is_empty() {
                            self.fire(&mut cache, &mut heap, &mut frames, is_op, head, Vec::new())?
                        } else {
                            rest.reverse();
                            let next = rest.pop().expect("non-empty");
                            frames.push(Frame::Args {
                                is_op,
                                head,
                                done: Vec::with_capacity(rest.len() + 1),
                                rest,
                            });
                            mode = Mode::Descend(next);
                            continue;
                        }
                    }
                },
                Mode::Return(l) => match frames.last_mut() {
                    None => break l,
                    Some(Frame::Annot { .. }) => {
                        let Some(Frame::Annot { op, args }) = frames.pop() else {
                            unreachable!()
                        };
                        cache.insert(op, args, l);
                        (StepKind::Store, Mode::Return(l))
                    }
                    Some(Frame::Args { done, rest, .. }) => {
                        done.push(l);
                        if let Some(next) = rest.pop() {
                            mode = Mode::Descend(next);
                            continue;
                        }
                        let Some(Frame::Args { is_op, head, done, .. }) = frames.pop() else {
                            unreachable!()
                        };
                        self.fire(&mut cache, &mut heap, &mut frames, is_op, head, done)?
                    }
                },
            };
            let (kind, next) = fired;
            stats.count(kind);
            if stats.total > budget {
                return Err(MachineError::BudgetExceeded { budget });
            }
            weight = match (&kind, &next) {
                (StepKind::Apply, Mode::Descend(body)) => weight + expression_weight(body),
                _ => weight - 1,
            };
            if tracing {
                trace.push(TraceRow {
                    step: stats.total,
                    kind,
                    weight,
                    heap_size: heap.len(),
                    cache_size: cache.len(),
                });
            }
            mode = next;
        };
        Ok(RunOutcome {
            config: Configuration {
                cache,
                heap,
                expr: Expr::Loc(result),
            },
            result,
            stats,
            trace,
            violations: Vec::new(),
        })
    }

    fn fire(
        &self,
        cache: &mut RefCache,
        heap: &mut Heap,
        frames: &mut Vec<Frame>,
        is_op: bool,
        head: Symbol,
        args: Vec<Location>,
    ) -> Result<(StepKind, Mode), MachineError> {
        if !is_op {
            return Ok((StepKind::Merge, Mode::Return(heap.merge(&head, &args)?)));
        }
        if let Some(l) = cache.get(&head, &args) {
            return Ok((StepKind::Read, Mode::Return(l)));
        }
        let body = self.find_rule(heap, &head, &args)?;
        frames.push(Frame::Annot { op: head, args });
        Ok((StepKind::Apply, Mode::Descend(body)))
    }

    /// Evaluates a ground term from the empty cache and a fresh heap.
    pub fn eval(&self, t: &Term, opts: &RunOptions) -> Result<RunOutcome, MachineError> {
        self.run(Configuration::initial(self.program.signature(), t)?, opts)
    }
}

/// Runs `e0` over `h0` from the empty cache with default options.
pub fn run(p: &Program, h0: Heap, e0: Expr, step_budget: Option<u64>) -> Result<(Configuration, RunStats), MachineError> {
    let machine = Machine::new(p);
    let cfg = Configuration {
        cache: RefCache::new(),
        heap: h0,
        expr: e0,
    };
    let out = machine.run(
        cfg,
        &RunOptions {
            budget: step_budget,
            ..RunOptions::default()
        },
    )?;
    Ok((out.config, out.stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::{parse_program, parse_term};

    fn l(i: usize) -> Expr {
        Expr::Loc(Location(i))
    }

    fn sym(s: &str) -> Symbol {
        Symbol::new(s)
    }

    #[test]
    fn decompose_examples() {
        assert!(decompose(&l(0)).is_none());

        let e = Expr::Cons(sym("suc"), vec![Expr::Call(sym("f"), vec![l(0)])]);
        let (ctx, redex) = decompose(&e).unwrap();
        assert_eq!(ctx.render(&e), "suc(□)");
        assert_eq!(redex.to_string(), "f(ℓ0)");

        let e = Expr::Annot {
            op: sym("f"),
            args: vec![Location(0)],
            body: Box::new(Expr::Cons(sym("c"), vec![l(1), Expr::Call(sym("g"), vec![l(2)])])),
        };
        let (ctx, redex) = decompose(&e).unwrap();
        assert_eq!(ctx.render(&e), "f⟨ℓ0⟩{c(ℓ1, □)}");
        assert_eq!(redex.to_string(), "g(ℓ2)");
        assert_eq!(all_decompositions(&e), vec![ctx]);
    }

    #[test]
    fn weights() {
        assert_eq!(expression_weight(&l(0)), 0);
        assert_eq!(expression_weight(&Expr::Call(sym("f"), vec![l(0), l(1)])), 1);
        let annot = Expr::Annot {
            op: sym("f"),
            args: vec![Location(0)],
            body: Box::new(Expr::Cons(sym("suc"), vec![l(1)])),
        };
        assert_eq!(expression_weight(&annot), 2);
        assert_eq!(expression_size(&annot), 3);
    }

    #[test]
    fn unfold_examples() {
        let mut h = Heap::new();
        let z = h.merge(&sym("zero"), &[]).unwrap();
        assert_eq!(unfold_expression(&h, &Expr::Loc(z)).unwrap().to_string(), "zero");
        let annot = Expr::Annot {
            op: sym("f"),
            args: vec![z],
            body: Box::new(Expr::Call(sym("g"), vec![Expr::Loc(z)])),
        };
        assert_eq!(unfold_expression(&h, &annot).unwrap().to_string(), "g(zero)");
        let e = Expr::Cons(sym("suc"), vec![Expr::Call(sym("f"), vec![Expr::Loc(z)])]);
        assert_eq!(unfold_expression(&h, &e).unwrap().to_string(), "suc(f(zero))");
        assert!(unfold_expression(&h, &l(5)).is_err());
    }

    #[test]
    fn identity_apply_then_store() {
        let p = parse_program("constructors: zero/0 ; operations: id/1 ; rules: id(x) -> x ;").unwrap();
        let m = Machine::new(&p);
        let mut heap = Heap::new();
        let z = heap.merge(&sym("zero"), &[]).unwrap();
        let mut cfg = Configuration {
            cache: RefCache::new(),
            heap,
            expr: Expr::Call(sym("id"), vec![Expr::Loc(z)]),
        };
        assert_eq!(m.step(&mut cfg).unwrap(), Some(StepKind::Apply));
        assert_eq!(cfg.expr.to_string(), "id⟨ℓ0⟩{ℓ0}");
        assert_eq!(m.step(&mut cfg).unwrap(), Some(StepKind::Store));
        assert_eq!(cfg.expr, Expr::Loc(z));
        assert_eq!(cfg.cache.get(&sym("id"), &[z]), Some(z));
        assert_eq!(m.step(&mut cfg).unwrap(), None);

        let (_, stats) = run(&p, Heap::new(), Expr::Call(sym("id"), vec![Expr::Cons(sym("zero"), vec![])]), None).unwrap();
        assert_eq!((stats.applies, stats.stores, stats.merges), (1, 1, 1));
    }

    #[test]
    fn read_and_merge() {
        let p = parse_program("constructors: zero/0, suc/1 ; operations: f/1 ; rules: f(x) -> x ;").unwrap();
        let m = Machine::new(&p);
        let mut heap = Heap::new();
        let z = heap.merge(&sym("zero"), &[]).unwrap();
        let one = heap.merge(&sym("suc"), &[z]).unwrap();
        let mut cache = RefCache::new();
        cache.insert(sym("f"), vec![z], one);
        let mut cfg = Configuration {
            cache: cache.clone(),
            heap: heap.clone(),
            expr: Expr::Call(sym("f"), vec![Expr::Loc(z)]),
        };
        assert_eq!(m.step(&mut cfg).unwrap(), Some(StepKind::Read));
        assert_eq!(cfg.expr, Expr::Loc(one));
        assert_eq!(cfg.cache, cache);

        let mut h = Heap::new();
        let z = h.merge(&sym("zero"), &[]).unwrap();
        let mut cfg = Configuration {
            cache: RefCache::new(),
            heap: h,
            expr: Expr::Cons(sym("suc"), vec![Expr::Loc(z)]),
        };
        assert_eq!(m.step(&mut cfg).unwrap(), Some(StepKind::Merge));
        assert_eq!(cfg.expr, l(1));
        assert_eq!(cfg.heap.len(), 2);
    }

    #[test]
    fn well_formedness_violations() {
        let p = parse_program("constructors: zero/0 ; operations: f/1 ; rules: f(x) -> x ;").unwrap();
        let cfg = Configuration::initial(p.signature(), &parse_term(p.signature(), "f(zero)").unwrap()).unwrap();
        assert!(check_well_formed(&cfg).is_empty());

        let dup = Heap::from_nodes_unchecked([(sym("zero"), vec![]), (sym("zero"), vec![])]).unwrap();
        let cfg = Configuration {
            cache: RefCache::new(),
            heap: dup,
            expr: l(0),
        };
        assert!(matches!(
            check_well_formed(&cfg)[..],
            [WellFormedness::NotMaximallyShared { .. }]
        ));

        let heap = Heap::from_nodes_unchecked([(sym("zero"), vec![]), (sym("suc"), vec![Location(0)]), (sym("suc"), vec![Location(1)])])
            .unwrap();
        let mut cache = RefCache::new();
        cache.insert(sym("f"), vec![Location(0)], Location(2));
        let cfg = Configuration {
            cache,
            heap,
            expr: Expr::Annot {
                op: sym("f"),
                args: vec![Location(0)],
                body: Box::new(l(1)),
            },
        };
        assert!(matches!(
            check_well_formed(&cfg)[..],
            [WellFormedness::IncompatibleCache { .. }]
        ));

        let cfg = Configuration {
            cache: RefCache::new(),
            heap: Heap::new(),
            expr: l(3),
        };
        assert!(matches!(check_well_formed(&cfg)[..], [WellFormedness::Dangling { .. }]));
    }

    #[test]
    fn stuck_is_reported() {
        let p = parse_program("constructors: zero/0, suc/1 ; operations: pred/1 ; rules: pred(suc(x)) -> x ;").unwrap();
        let m = Machine::new(&p);
        let t = parse_term(p.signature(), "pred(zero)").unwrap();
        match m.eval(&t, &RunOptions::default()) {
            Err(MachineError::Stuck { call }) => assert_eq!(call, t),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn deep_recursion_runs() {
        let p = parse_program(
            "constructors: zero/0, suc/1 ; operations: add/2 ; rules: add(zero, y) -> y ; add(suc(x), y) -> suc(add(x, y)) ;",
        )
        .unwrap();
        let m = Machine::new(&p);
        let t = Term::app("add", vec![Term::numeral(20_000), Term::numeral(1)]);
        let out = m.eval(&t, &RunOptions::default()).unwrap();
        assert_eq!(out.stats.applies, 20_001);
        assert_eq!(out.config.heap.unfold(out.result).unwrap(), Term::numeral(20_001));
    }
}
