//! Shared helpers for the integration tests: corpus access, exhaustive
//! value grids, and a generator of random orthogonal programs.

#![allow(dead_code)]

use std::collections::HashMap;
use std::path::PathBuf;

use memoshare::grsr::{parse_module, GrsrModule};
use memoshare::term::{Rule, Signature};
use memoshare::{parse_program, Program, Symbol, Term, Var};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus").join(name)
}

pub fn corpus_text(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn corpus_program(name: &str) -> Program {
    parse_program(&corpus_text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn corpus_module(name: &str) -> GrsrModule {
    parse_module(&corpus_text(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn nat() -> Vec<(Symbol, usize)> {
    vec![(Symbol::new("zero"), 0), (Symbol::new("suc"), 1)]
}

pub fn rabbit_trees() -> Vec<(Symbol, usize)> {
    ["leafn/0", "leafm/0", "n/1", "m/2"].iter().map(|s| ctor(s)).collect()
}

pub fn ctor(spec: &str) -> (Symbol, usize) {
    let (name, arity) = spec.split_once('/').expect("name/arity");
    (Symbol::new(name), arity.parse().expect("arity"))
}

pub fn app(f: &str, args: Vec<Term>) -> Term {
    Term::app(Symbol::new(f), args)
}

/// Every value over a constructor set with at most `max` distinct subterms,
/// found in rounds of increasing depth.
pub struct ValueSpace {
    pub values: Vec<Term>,
    /// Sorted indices (into `values`) of the distinct subterms of each value.
    subterms: Vec<Vec<u32>>,
    pub max: usize,
}

fn union(a: &[u32], b: &[u32]) -> Vec<u32> {
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            std::cmp::Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

impl ValueSpace {
    /// `None` if there are more than `cap` such values.
    pub fn new(constructors: &[(Symbol, usize)], max: usize, cap: usize) -> Option<ValueSpace> {
        let mut space = ValueSpace {
            values: Vec::new(),
            subterms: Vec::new(),
            max,
        };
        let mut index: HashMap<Term, u32> = HashMap::new();
        loop {
            let known = space.values.len();
            let mut fresh = Vec::new();
            for (c, arity) in constructors {
                let mut partial: Vec<(Vec<u32>, Vec<u32>)> = vec![(Vec::new(), Vec::new())];
                for _ in 0..*arity {
                    let mut next = Vec::new();
                    for (args, subs) in &partial {
                        for v in 0..known as u32 {
                            let u = union(subs, &space.subterms[v as usize]);
                            if u.len() < max {
                                let mut a = args.clone();
                                a.push(v);
                                next.push((a, u));
                            }
                        }
                    }
                    partial = next;
                }
                if partial.len() > cap {
                    return None;
                }
                for (args, subs) in partial {
                    let t = Term::app(c.clone(), args.iter().map(|&a| space.values[a as usize].clone()).collect());
                    if !index.contains_key(&t) {
                        fresh.push((t, subs));
                    }
                }
            }
            if fresh.is_empty() {
                return Some(space);
            }
            for (t, mut subs) in fresh {
                if index.contains_key(&t) {
                    continue;
                }
                let id = space.values.len() as u32;
                index.insert(t.clone(), id);
                subs.push(id);
                space.values.push(t);
                space.subterms.push(subs);
                if space.values.len() > cap {
                    return None;
                }
            }
        }
    }

    /// Every `arity`-tuple of values whose combined shared size is at most
    /// `max`, or `None` if there are more than `cap`.
    pub fn tuples(&self, arity: usize, cap: usize) -> Option<Vec<Vec<Term>>> {
        let mut partial: Vec<(Vec<Term>, Vec<u32>)> = vec![(Vec::new(), Vec::new())];
        for _ in 0..arity {
            let mut next = Vec::new();
            for (args, subs) in &partial {
                for (v, vs) in self.values.iter().zip(&self.subterms) {
                    let u = union(subs, vs);
                    if u.len() <= self.max {
                        let mut a = args.clone();
                        a.push(v.clone());
                        next.push((a, u));
                        if next.len() > cap {
                            return None;
                        }
                    }
                }
            }
            partial = next;
        }
        Some(partial.into_iter().map(|(a, _)| a).collect())
    }
}

/// The argument tuples of an operation: exhaustive up to the largest shared
/// size (at most `max`) whose grid has at most `cap` tuples.
pub struct Grid {
    pub tuples: Vec<Vec<Term>>,
    pub exhaustive_to: usize,
}

pub fn grid(domains: &[Vec<(Symbol, usize)>], max: usize, cap: usize) -> Grid {
    let mut best = Grid {
        tuples: Vec::new(),
        exhaustive_to: 0,
    };
    for k in 1..=max {
        match grid_exactly(domains, k, cap) {
            Some(tuples) => {
                best = Grid {
                    tuples,
                    exhaustive_to: k,
                }
            }
            None => break,
        }
    }
    best
}

/// All tuples over per-argument constructor sets with shared size `<= k`.
fn grid_exactly(domains: &[Vec<(Symbol, usize)>], k: usize, cap: usize) -> Option<Vec<Vec<Term>>> {
    let Some(first) = domains.first() else {
        return Some(vec![Vec::new()]);
    };
    if domains.iter().all(|d| d == first) {
        return ValueSpace::new(first, k, cap)?.tuples(domains.len(), cap);
    }
    // Mixed domains: per-argument grids, filtered on the combined size.
    let spaces: Vec<ValueSpace> = domains
        .iter()
        .map(|d| ValueSpace::new(d, k, cap))
        .collect::<Option<_>>()?;
    let mut partial: Vec<Vec<Term>> = vec![Vec::new()];
    for space in &spaces {
        let mut next = Vec::new();
        for args in &partial {
            for v in &space.values {
                let mut a = args.clone();
                a.push(v.clone());
                if memoshare::minimal_shared_size(&a) <= k {
                    next.push(a);
                    if next.len() > cap {
                        return None;
                    }
                }
            }
        }
        partial = next;
    }
    Some(partial)
}

/// Random tuples with shared size in `lo..=hi`, `count` of them at most
/// (fewer if the generator keeps missing the window).
pub fn sample_tuples(
    domains: &[Vec<(Symbol, usize)>],
    lo: usize,
    hi: usize,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<Term>> {
    let mut out = Vec::new();
    let mut attempts = 0;
    while out.len() < count && attempts < count * 200 {
        attempts += 1;
        let depth = rng.gen_range(1..=hi);
        let tuple: Vec<Term> = domains.iter().map(|d| random_value(d, depth, rng)).collect();
        let s = memoshare::minimal_shared_size(&tuple);
        if (lo..=hi).contains(&s) {
            out.push(tuple);
        }
    }
    out
}

/// A random value of depth at most `depth`; leaves are chosen more often
/// near the bottom.
pub fn random_value(constructors: &[(Symbol, usize)], depth: usize, rng: &mut ChaCha8Rng) -> Term {
    let leaves: Vec<&(Symbol, usize)> = constructors.iter().filter(|c| c.1 == 0).collect();
    if depth <= 1 || rng.gen_bool(0.2) {
        return Term::constant(leaves.choose(rng).expect("nullary").0.clone());
    }
    let (c, arity) = constructors.choose(rng).expect("constructors").clone();
    // Reusing the first argument for later ones keeps shared sizes small.
    let mut args: Vec<Term> = Vec::with_capacity(arity);
    for i in 0..arity {
        if i > 0 && rng.gen_bool(0.5) {
            args.push(args[0].clone());
        } else {
            args.push(random_value(constructors, depth - 1, rng));
        }
    }
    Term::app(c, args)
}

/// A random orthogonal, terminating program over at most three
/// constructors. Operations are `f0, f1, ..`; `fi` only calls `fj` for
/// `j > i` or itself on a strict subterm of its case argument.
pub struct RandomProgram {
    pub program: Program,
    pub constructors: Vec<(Symbol, usize)>,
    pub operations: Vec<(Symbol, usize)>,
}

const CONSTRUCTOR_SETS: &[&[&str]] = &[
    &["z/0", "s/1"],
    &["z/0", "s/1", "t/1"],
    &["z/0", "s/1", "c/2"],
    &["a/0", "b/0", "c/2"],
];

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    constructors: &'a [(Symbol, usize)],
    operations: &'a [(Symbol, usize)],
    next_var: usize,
}

impl Gen<'_> {
    fn fresh(&mut self) -> Term {
        self.next_var += 1;
        Term::var(Var::new(&format!("x{}", self.next_var)))
    }

    fn ctor_pattern(&mut self, c: &(Symbol, usize)) -> Term {
        let args = (0..c.1).map(|_| self.fresh()).collect();
        Term::app(c.0.clone(), args)
    }

    /// Patterns for the case argument: one per constructor, possibly
    /// splitting the first child of one constructor a level deeper.
    fn case_patterns(&mut self) -> Vec<Term> {
        let cs = self.constructors.to_vec();
        let deep = self.rng.gen_bool(0.35);
        let split: Option<usize> = if deep {
            let with_children: Vec<usize> = (0..cs.len()).filter(|&i| cs[i].1 > 0).collect();
            with_children.choose(self.rng).copied()
        } else {
            None
        };
        let mut out = Vec::new();
        for (i, c) in cs.iter().enumerate() {
            if Some(i) == split {
                for inner in &cs {
                    let first = self.ctor_pattern(inner);
                    let mut args = vec![first];
                    args.extend((1..c.1).map(|_| self.fresh()));
                    out.push(Term::app(c.0.clone(), args));
                }
            } else {
                out.push(self.ctor_pattern(c));
            }
        }
        out
    }

    fn rhs(&mut self, depth: usize, op: usize, vars: &[Term], smaller: &[Term]) -> Term {
        let leaf = depth == 0 || self.rng.gen_bool(0.3);
        if leaf {
            let nullary: Vec<&(Symbol, usize)> = self.constructors.iter().filter(|c| c.1 == 0).collect();
            if !vars.is_empty() && self.rng.gen_bool(0.7) {
                return vars.choose(self.rng).expect("nonempty").clone();
            }
            return Term::constant(nullary.choose(self.rng).expect("nullary constructor").0.clone());
        }
        let later = &self.operations[op + 1..];
        let roll = self.rng.gen_range(0..10);
        if roll < 2 && !smaller.is_empty() {
            // Recursive call on a strict subterm of the case argument.
            let (f, arity) = self.operations[op].clone();
            let mut args: Vec<Term> = (0..arity).map(|_| self.rhs(depth - 1, op, vars, &[])).collect();
            args[0] = smaller.choose(self.rng).expect("nonempty").clone();
            return Term::app(f, args);
        }
        if roll < 5 && !later.is_empty() {
            let (g, arity) = later.choose(self.rng).expect("nonempty").clone();
            let args = (0..arity).map(|_| self.rhs(depth - 1, op, vars, smaller)).collect();
            return Term::app(g, args);
        }
        let (c, arity) = self.constructors.choose(self.rng).expect("constructors").clone();
        let args = (0..arity).map(|_| self.rhs(depth - 1, op, vars, smaller)).collect();
        Term::app(c, args)
    }
}

pub fn random_program(seed: u64) -> RandomProgram {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let constructors: Vec<(Symbol, usize)> = CONSTRUCTOR_SETS
        .choose(&mut rng)
        .expect("sets")
        .iter()
        .map(|s| ctor(s))
        .collect();
    let n_ops = rng.gen_range(1..=3);
    let operations: Vec<(Symbol, usize)> = (0..n_ops)
        .map(|i| (Symbol::new(&format!("f{i}")), rng.gen_range(1..=2)))
        .collect();
    let mut sig = Signature::new();
    for (c, a) in &constructors {
        sig.add_constructor(c.clone(), *a).expect("fresh");
    }
    for (f, a) in &operations {
        sig.add_operation(f.clone(), *a).expect("fresh");
    }
    let mut rules = Vec::new();
    let mut g = Gen {
        rng: &mut rng,
        constructors: &constructors,
        operations: &operations,
        next_var: 0,
    };
    for (op, (f, arity)) in operations.iter().enumerate() {
        // The case argument is argument 0; the others are variables.
        for pattern in g.case_patterns() {
            let others: Vec<Term> = (1..*arity).map(|_| g.fresh()).collect();
            let smaller: Vec<Term> = pattern
                .var_occurrences()
                .into_iter()
                .map(Term::var)
                .collect();
            let mut vars = smaller.clone();
            vars.extend(others.iter().cloned());
            let mut args = vec![pattern];
            args.extend(others);
            let lhs = Term::app(f.clone(), args);
            let rhs = g.rhs(3, op, &vars, &smaller);
            rules.push(Rule::new(lhs, rhs));
        }
    }
    let program = Program::new(sig, rules).expect("generated programs are orthogonal");
    RandomProgram {
        program,
        constructors,
        operations,
    }
}

/// Random values over `constructors` of depth at most `depth`.
pub fn value_strategy(constructors: Vec<(Symbol, usize)>, depth: u32) -> BoxedStrategy<Term> {
    let leaves: Vec<Symbol> = constructors.iter().filter(|c| c.1 == 0).map(|c| c.0.clone()).collect();
    let leaf = proptest::sample::select(leaves).prop_map(Term::constant);
    leaf.prop_recursive(depth, 64, 3, move |inner| {
        let cs = constructors.clone();
        proptest::sample::select(cs).prop_flat_map(move |(c, arity)| {
            proptest::collection::vec(inner.clone(), arity).prop_map(move |args| Term::app(c.clone(), args))
        })
    })
    .boxed()
}

/// Random linear patterns: values with some subterms replaced by
/// distinct variables.
pub fn pattern_strategy(constructors: Vec<(Symbol, usize)>, depth: u32) -> BoxedStrategy<Term> {
    let leaves: Vec<Symbol> = constructors.iter().filter(|c| c.1 == 0).map(|c| c.0.clone()).collect();
    let leaf = prop_oneof![
        proptest::sample::select(leaves).prop_map(Term::constant),
        Just(Term::var(Var::new("_"))),
    ];
    leaf.prop_recursive(depth, 64, 3, move |inner| {
        let cs = constructors.clone();
        proptest::sample::select(cs).prop_flat_map(move |(c, arity)| {
            proptest::collection::vec(inner.clone(), arity).prop_map(move |args| Term::app(c.clone(), args))
        })
    })
    .prop_map(|t| linearize(&t))
    .boxed()
}

/// Renames every variable occurrence apart: `x1, x2, ..` left to right.
pub fn linearize(t: &Term) -> Term {
    fn go(t: &Term, next: &mut usize) -> Term {
        match t.as_var() {
            Some(_) => {
                *next += 1;
                Term::var(Var::new(&format!("x{next}")))
            }
            None => Term::app(
                t.head().expect("application").clone(),
                t.args().iter().map(|a| go(a, next)).collect(),
            ),
        }
    }
    go(t, &mut 0)
}
