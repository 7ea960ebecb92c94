//! Terms, values, rewrite rules and orthogonal constructor programs.
//!
//! Terms are immutable and reference counted, so substituting a value into a
//! right-hand side never copies it. Every node caches a structural hash; the
//! hash, equality and drop implementations walk the term with an explicit
//! stack so that long constructor chains (`suc^10000(zero)`) never recurse.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::hash::{DefaultHasher, Hash, Hasher};
use std::sync::Arc;

use thiserror::Error;

/// A function or constructor name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Symbol(Arc<str>);

impl Symbol {
    pub fn new(name: &str) -> Self {
        Symbol(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Symbol {
    fn from(name: &str) -> Self {
        Symbol::new(name)
    }
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A variable name.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(Arc<str>);

impl Var {
    pub fn new(name: &str) -> Self {
        Var(Arc::from(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl From<&str> for Var {
    fn from(name: &str) -> Self {
        Var::new(name)
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

struct Node {
    kind: NodeKind,
    hash: u64,
    size: u64,
}

enum NodeKind {
    Var(Var),
    App(Symbol, Vec<Term>),
}

impl Drop for Node {
    fn drop(&mut self) {
        let NodeKind::App(_, args) = &mut self.kind else {
            return;
        };
        if args.is_empty() {
            return;
        }
        let mut pending = std::mem::take(args);
        while let Some(term) = pending.pop() {
            if let Ok(mut node) = Arc::try_unwrap(term.0) {
                if let NodeKind::App(_, args) = &mut node.kind {
                    pending.append(args);
                }
            }
        }
    }
}

/// A first-order term over variables and function symbols.
///
/// A term containing only constructors and no variables is a *value*.
#[derive(Clone)]
pub struct Term(Arc<Node>);

/// Borrowed view of the top of a term.
#[derive(Clone, Copy, Debug)]
pub enum TermKind<'a> {
    Var(&'a Var),
    App(&'a Symbol, &'a [Term]),
}

impl Term {
    pub fn var(name: impl Into<Var>) -> Term {
        let var = name.into();
        let mut hasher = DefaultHasher::new();
        0u8.hash(&mut hasher);
        var.hash(&mut hasher);
        Term(Arc::new(Node {
            hash: hasher.finish(),
            size: 1,
            kind: NodeKind::Var(var),
        }))
    }

    pub fn app(symbol: impl Into<Symbol>, args: Vec<Term>) -> Term {
        let symbol = symbol.into();
        let mut hasher = DefaultHasher::new();
        1u8.hash(&mut hasher);
        symbol.hash(&mut hasher);
        let mut size = 1u64;
        for arg in &args {
            hasher.write_u64(arg.0.hash);
            size = size.saturating_add(arg.0.size);
        }
        Term(Arc::new(Node {
            hash: hasher.finish(),
            size,
            kind: NodeKind::App(symbol, args),
        }))
    }

    pub fn constant(symbol: impl Into<Symbol>) -> Term {
        Term::app(symbol, Vec::new())
    }

    /// `symbol` applied `times` times on top of `base`, e.g. `suc^n(zero)`.
    pub fn iterate(symbol: impl Into<Symbol>, times: usize, base: Term) -> Term {
        let symbol = symbol.into();
        (0..times).fold(base, |acc, _| Term::app(symbol.clone(), vec![acc]))
    }

    /// The unary numeral `suc^n(zero)`.
    pub fn numeral(n: usize) -> Term {
        Term::iterate("suc", n, Term::constant("zero"))
    }

    pub fn kind(&self) -> TermKind<'_> {
        match &self.0.kind {
            NodeKind::Var(v) => TermKind::Var(v),
            NodeKind::App(f, args) => TermKind::App(f, args),
        }
    }

    pub fn as_var(&self) -> Option<&Var> {
        match &self.0.kind {
            NodeKind::Var(v) => Some(v),
            NodeKind::App(..) => None,
        }
    }

    pub fn head(&self) -> Option<&Symbol> {
        match &self.0.kind {
            NodeKind::Var(_) => None,
            NodeKind::App(f, _) => Some(f),
        }
    }

    pub fn args(&self) -> &[Term] {
        match &self.0.kind {
            NodeKind::Var(_) => &[],
            NodeKind::App(_, args) => args,
        }
    }

    /// True when both handles point at the same allocation.
    pub fn ptr_eq(&self, other: &Term) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
    }

    fn addr(&self) -> *const () {
        Arc::as_ptr(&self.0) as *const ()
    }

    /// Bottom-up fold over the term, visiting each physically shared node
    /// once. `combine` receives the node and the results for its arguments.
    pub fn fold<T: Clone>(&self, mut combine: impl FnMut(&Term, Vec<T>) -> T) -> T {
        let mut done: HashMap<*const (), T> = HashMap::new();
        let mut stack: Vec<(&Term, bool)> = vec![(self, false)];
        while let Some((term, expanded)) = stack.pop() {
            if done.contains_key(&term.addr()) {
                continue;
            }
            if expanded {
                let kids = term
                    .args()
                    .iter()
                    .map(|a| done[&a.addr()].clone())
                    .collect();
                let result = combine(term, kids);
                done.insert(term.addr(), result);
            } else {
                stack.push((term, true));
                for arg in term.args().iter().rev() {
                    if !done.contains_key(&arg.addr()) {
                        stack.push((arg, false));
                    }
                }
            }
        }
        done.remove(&self.addr()).expect("root is folded last")
    }

    pub fn is_ground(&self) -> bool {
        self.fold(|t, kids: Vec<bool>| t.as_var().is_none() && kids.into_iter().all(|k| k))
    }

    /// Ground and built from constructors of `sig` only.
    pub fn is_value(&self, sig: &Signature) -> bool {
        self.fold(|t, kids: Vec<bool>| match t.kind() {
            TermKind::Var(_) => false,
            TermKind::App(f, _) => sig.is_constructor(f) && kids.into_iter().all(|k| k),
        })
    }

    /// Number of nodes of the (unshared) term; variables count one.
    /// Saturates at `u64::MAX`.
    pub fn size(&self) -> u64 {
        self.0.size
    }

    /// Height of the term; a constant or variable has depth 1.
    pub fn depth(&self) -> usize {
        self.fold(|_, kids: Vec<usize>| 1 + kids.into_iter().max().unwrap_or(0))
    }

    /// Variable occurrences in left-to-right order, with repetitions.
    pub fn var_occurrences(&self) -> Vec<Var> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            match t.kind() {
                TermKind::Var(v) => out.push(v.clone()),
                TermKind::App(_, args) => stack.extend(args.iter().rev()),
            }
        }
        out
    }

    /// Every symbol occurrence with its argument count.
    pub fn symbols(&self) -> Vec<(Symbol, usize)> {
        let mut out = Vec::new();
        let mut seen = HashSet::new();
        let mut stack = vec![self];
        while let Some(t) = stack.pop() {
            if !seen.insert(t.addr()) {
                continue;
            }
            if let TermKind::App(f, args) = t.kind() {
                out.push((f.clone(), args.len()));
                stack.extend(args.iter());
            }
        }
        out
    }

    pub fn is_linear(&self) -> bool {
        let mut seen = HashSet::new();
        self.var_occurrences().into_iter().all(|v| seen.insert(v))
    }

    pub fn substitute(&self, subst: &Substitution) -> Term {
        self.fold(|t, kids: Vec<Term>| match t.kind() {
            TermKind::Var(v) => subst.get(v).cloned().unwrap_or_else(|| t.clone()),
            TermKind::App(f, _) => Term::app(f.clone(), kids),
        })
    }
}

impl PartialEq for Term {
    fn eq(&self, other: &Term) -> bool {
        let mut stack = vec![(self, other)];
        while let Some((a, b)) = stack.pop() {
            if a.ptr_eq(b) {
                continue;
            }
            if a.0.hash != b.0.hash || a.0.size != b.0.size {
                return false;
            }
            match (&a.0.kind, &b.0.kind) {
                (NodeKind::Var(x), NodeKind::Var(y)) => {
                    if x != y {
                        return false;
                    }
                }
                (NodeKind::App(f, xs), NodeKind::App(g, ys)) => {
                    if f != g || xs.len() != ys.len() {
                        return false;
                    }
                    stack.extend(xs.iter().zip(ys.iter()));
                }
                _ => return false,
            }
        }
        true
    }
}

impl Eq for Term {}

impl Hash for Term {
    fn hash<H: Hasher>(&self, state: &mut H) {
        state.write_u64(self.0.hash);
    }
}

// Runs of at least this many identical unary symbols print as `f^k(...)`.
const RUN_SHORTHAND: usize = 4;

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            TermKind::Var(v) => write!(f, "{v}"),
            TermKind::App(sym, []) => write!(f, "{sym}"),
            TermKind::App(sym, [arg]) => {
                let mut run = 1;
                let mut inner = arg;
                while let TermKind::App(g, [next]) = inner.kind() {
                    if g != sym {
                        break;
                    }
                    run += 1;
                    inner = next;
                }
                if run >= RUN_SHORTHAND {
                    write!(f, "{sym}^{run}({inner})")
                } else {
                    write!(f, "{sym}({arg})")
                }
            }
            TermKind::App(sym, args) => {
                write!(f, "{sym}(")?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str(")")
            }
        }
    }
}

impl fmt::Debug for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// Node count of a term; variables count one.
pub fn term_size(t: &Term) -> u64 {
    t.size()
}

/// Number of distinct subterms of the given values, i.e. the number of heap
/// cells needed to store all of them with maximal sharing.
pub fn minimal_shared_size(values: &[Term]) -> usize {
    let mut distinct: HashSet<Term> = HashSet::new();
    let mut visited: HashSet<*const ()> = HashSet::new();
    let mut stack: Vec<&Term> = values.iter().collect();
    while let Some(t) = stack.pop() {
        if !visited.insert(t.addr()) {
            continue;
        }
        distinct.insert(t.clone());
        stack.extend(t.args());
    }
    distinct.len()
}

/// A finite map from variables to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Substitution(BTreeMap<Var, Term>);

impl Substitution {
    pub fn new() -> Self {
        Substitution::default()
    }

    pub fn get(&self, var: &Var) -> Option<&Term> {
        self.0.get(var)
    }

    pub fn insert(&mut self, var: Var, term: Term) -> Option<Term> {
        self.0.insert(var, term)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Var, &Term)> {
        self.0.iter()
    }
}

/// Syntactic matching: the substitution `σ` with `pattern·σ = subject`, if
/// one exists. Repeated pattern variables must bind equal subterms.
pub fn match_term(pattern: &Term, subject: &Term) -> Option<Substitution> {
    let mut subst = Substitution::new();
    let mut stack = vec![(pattern, subject)];
    while let Some((p, s)) = stack.pop() {
        match p.kind() {
            TermKind::Var(x) => match subst.get(x) {
                Some(bound) if bound != s => return None,
                Some(_) => {}
                None => {
                    subst.insert(x.clone(), s.clone());
                }
            },
            TermKind::App(f, ps) => match s.kind() {
                TermKind::App(g, ss) if f == g && ps.len() == ss.len() => {
                    stack.extend(ps.iter().zip(ss.iter()));
                }
                _ => return None,
            },
        }
    }
    Some(subst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SymbolKind {
    Constructor,
    Operation,
}

/// Disjoint constructor and operation signatures, in declaration order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Signature {
    symbols: BTreeMap<Symbol, (SymbolKind, usize)>,
    constructors: Vec<Symbol>,
    operations: Vec<Symbol>,
}

impl Signature {
    pub fn new() -> Self {
        Signature::default()
    }

    pub fn add_constructor(&mut self, name: impl Into<Symbol>, arity: usize) -> Result<(), ProgramError> {
        self.add(name.into(), SymbolKind::Constructor, arity)
    }

    pub fn add_operation(&mut self, name: impl Into<Symbol>, arity: usize) -> Result<(), ProgramError> {
        self.add(name.into(), SymbolKind::Operation, arity)
    }

    fn add(&mut self, name: Symbol, kind: SymbolKind, arity: usize) -> Result<(), ProgramError> {
        if let Some(&(k, a)) = self.symbols.get(&name) {
            if k == kind && a == arity {
                return Ok(());
            }
            return Err(ProgramError::DuplicateSymbol { symbol: name });
        }
        self.symbols.insert(name.clone(), (kind, arity));
        match kind {
            SymbolKind::Constructor => self.constructors.push(name),
            SymbolKind::Operation => self.operations.push(name),
        }
        Ok(())
    }

    pub fn arity(&self, name: &Symbol) -> Option<usize> {
        self.symbols.get(name).map(|&(_, a)| a)
    }

    pub fn kind(&self, name: &Symbol) -> Option<SymbolKind> {
        self.symbols.get(name).map(|&(k, _)| k)
    }

    pub fn is_constructor(&self, name: &Symbol) -> bool {
        self.kind(name) == Some(SymbolKind::Constructor)
    }

    pub fn is_operation(&self, name: &Symbol) -> bool {
        self.kind(name) == Some(SymbolKind::Operation)
    }

    pub fn constructors(&self) -> impl Iterator<Item = (&Symbol, usize)> {
        self.constructors.iter().map(|c| (c, self.symbols[c].1))
    }

    pub fn operations(&self) -> impl Iterator<Item = (&Symbol, usize)> {
        self.operations.iter().map(|c| (c, self.symbols[c].1))
    }

    /// Every symbol of `t` is declared with the arity it is used at.
    pub fn check_term(&self, t: &Term) -> Result<(), ProgramError> {
        for (f, n) in t.symbols() {
            match self.arity(&f) {
                None => return Err(ProgramError::UnknownSymbol { symbol: f }),
                Some(a) if a != n => {
                    return Err(ProgramError::ArityMismatch {
                        symbol: f,
                        expected: a,
                        found: n,
                    })
                }
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// A rewrite rule `lhs -> rhs`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Rule {
    pub lhs: Term,
    pub rhs: Term,
}

impl Rule {
    pub fn new(lhs: Term, rhs: Term) -> Self {
        Rule { lhs, rhs }
    }

    /// The defined operation at the root of the left-hand side.
    pub fn operation(&self) -> &Symbol {
        self.lhs.head().expect("left-hand side is an application")
    }

    pub fn patterns(&self) -> &[Term] {
        self.lhs.args()
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.lhs, self.rhs)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ProgramError {
    #[error("symbol `{symbol}` is declared twice")]
    DuplicateSymbol { symbol: Symbol },
    #[error("unknown symbol `{symbol}`")]
    UnknownSymbol { symbol: Symbol },
    #[error("arity mismatch: `{symbol}` expects {expected} argument(s), found {found}")]
    ArityMismatch {
        symbol: Symbol,
        expected: usize,
        found: usize,
    },
    #[error("rule {rule} (`{text}`): {reason}")]
    MalformedLhs {
        rule: usize,
        text: String,
        reason: String,
    },
    #[error("rule {rule} (`{text}`): variable `{var}` occurs more than once on the left-hand side")]
    NonLinear { rule: usize, text: String, var: Var },
    #[error("rule {rule} (`{text}`): variable `{var}` of the right-hand side is not bound by the left-hand side")]
    UnboundVariable { rule: usize, text: String, var: Var },
    #[error("rules {first} (`{first_text}`) and {second} (`{second_text}`) have overlapping left-hand sides")]
    Ambiguous {
        first: usize,
        second: usize,
        first_text: String,
        second_text: String,
    },
    #[error("rule {rule} (`{text}`): {source}")]
    InRule {
        rule: usize,
        text: String,
        source: Box<ProgramError>,
    },
    #[error("program has no rules")]
    NoRules,
}

/// Whether two linear constructor patterns (with disjoint variables) have a
/// common instance.
pub fn patterns_overlap(p: &Term, q: &Term) -> bool {
    let mut stack = vec![(p, q)];
    while let Some((a, b)) = stack.pop() {
        match (a.kind(), b.kind()) {
            (TermKind::Var(_), _) | (_, TermKind::Var(_)) => {}
            (TermKind::App(f, xs), TermKind::App(g, ys)) => {
                if f != g || xs.len() != ys.len() {
                    return false;
                }
                stack.extend(xs.iter().zip(ys.iter()));
            }
        }
    }
    true
}

/// Every violation of well-formedness and orthogonality, in rule order.
/// Rule numbers in the diagnostics are 1-based.
pub fn check_rules(sig: &Signature, rules: &[Rule]) -> Vec<ProgramError> {
    let mut errors = Vec::new();
    let mut shape_ok = vec![false; rules.len()];
    for (i, rule) in rules.iter().enumerate() {
        let n = i + 1;
        let text = rule.to_string();
        let mut ok = true;
        for side in [&rule.lhs, &rule.rhs] {
            if let Err(e) = sig.check_term(side) {
                errors.push(ProgramError::InRule {
                    rule: n,
                    text: text.clone(),
                    source: Box::new(e),
                });
                ok = false;
            }
        }
        if !ok {
            continue;
        }
        let root_ok = rule.lhs.head().is_some_and(|f| sig.is_operation(f));
        if !root_ok {
            errors.push(ProgramError::MalformedLhs {
                rule: n,
                text: text.clone(),
                reason: "left-hand side must be an operation applied to patterns".into(),
            });
            continue;
        }
        let patterns_ok = rule.patterns().iter().all(|p| {
            p.symbols().iter().all(|(f, _)| sig.is_constructor(f))
        });
        if !patterns_ok {
            errors.push(ProgramError::MalformedLhs {
                rule: n,
                text: text.clone(),
                reason: "patterns may contain only variables and constructors".into(),
            });
            continue;
        }
        let mut seen = HashSet::new();
        let mut linear = true;
        for v in rule.lhs.var_occurrences() {
            if !seen.insert(v.clone()) {
                errors.push(ProgramError::NonLinear {
                    rule: n,
                    text: text.clone(),
                    var: v,
                });
                linear = false;
                break;
            }
        }
        for v in rule.rhs.var_occurrences() {
            if !seen.contains(&v) {
                errors.push(ProgramError::UnboundVariable {
                    rule: n,
                    text: text.clone(),
                    var: v,
                });
                break;
            }
        }
        shape_ok[i] = linear;
    }
    for i in 0..rules.len() {
        for j in i + 1..rules.len() {
            if !(shape_ok[i] && shape_ok[j]) {
                continue;
            }
            if patterns_overlap(&rules[i].lhs, &rules[j].lhs) {
                errors.push(ProgramError::Ambiguous {
                    first: i + 1,
                    second: j + 1,
                    first_text: rules[i].to_string(),
                    second_text: rules[j].to_string(),
                });
            }
        }
    }
    errors
}

/// An orthogonal constructor rewrite program.
#[derive(Clone, Debug)]
pub struct Program {
    signature: Signature,
    rules: Vec<Rule>,
    by_operation: HashMap<Symbol, Vec<usize>>,
}

impl PartialEq for Program {
    fn eq(&self, other: &Program) -> bool {
        self.signature == other.signature && self.rules == other.rules
    }
}

impl Eq for Program {}

impl Program {
    /// Validates the rules and builds the program; reports the first
    /// violation found by [`check_rules`].
    pub fn new(signature: Signature, rules: Vec<Rule>) -> Result<Program, ProgramError> {
        if let Some(e) = check_rules(&signature, &rules).into_iter().next() {
            return Err(e);
        }
        let mut by_operation: HashMap<Symbol, Vec<usize>> = HashMap::new();
        for (i, r) in rules.iter().enumerate() {
            by_operation.entry(r.operation().clone()).or_default().push(i);
        }
        Ok(Program {
            signature,
            rules,
            by_operation,
        })
    }

    pub fn signature(&self) -> &Signature {
        &self.signature
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    /// Indices of the rules defining `op`.
    pub fn rules_for(&self, op: &Symbol) -> &[usize] {
        self.by_operation.get(op).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The unique rule whose left-hand side matches `op(args)`, together
    /// with the matching substitution.
    pub fn select_rule(&self, op: &Symbol, args: &[Term]) -> Option<(usize, Substitution)> {
        'rules: for &i in self.rules_for(op) {
            let mut subst = Substitution::new();
            for (p, v) in self.rules[i].patterns().iter().zip(args) {
                match match_term(p, v) {
                    Some(s) => {
                        for (x, t) in s.iter() {
                            subst.insert(x.clone(), t.clone());
                        }
                    }
                    None => continue 'rules,
                }
            }
            return Some((i, subst));
        }
        None
    }

    /// `Δ`: the largest right-hand side size.
    pub fn delta(&self) -> Result<u64, ProgramError> {
        self.rules
            .iter()
            .map(|r| r.rhs.size())
            .max()
            .ok_or(ProgramError::NoRules)
    }
}

/// `Δ` of a program; see [`Program::delta`].
pub fn program_delta(p: &Program) -> Result<u64, ProgramError> {
    p.delta()
}

fn write_decls<'a>(
    f: &mut fmt::Formatter<'_>,
    label: &str,
    decls: impl Iterator<Item = (&'a Symbol, usize)>,
) -> fmt::Result {
    write!(f, "{label}:")?;
    for (i, (s, a)) in decls.enumerate() {
        let sep = if i == 0 { " " } else { ", " };
        write!(f, "{sep}{s}/{a}")?;
    }
    writeln!(f, " ;")
}

impl fmt::Display for Program {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_decls(f, "constructors", self.signature.constructors())?;
        write_decls(f, "operations", self.signature.operations())?;
        writeln!(f, "rules:")?;
        for r in &self.rules {
            writeln!(f, "  {r} ;")?;
        }
        Ok(())
    }
}
