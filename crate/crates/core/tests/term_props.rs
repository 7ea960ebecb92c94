mod common;

use std::collections::HashSet;

use common::*;
use memoshare::term::{check_rules, Rule, Signature};
use memoshare::{
    match_term, minimal_shared_size, parse_program, parse_term, term_size, ProgramError, Substitution, Symbol, Term,
    Var,
};
use proptest::prelude::*;

fn abc() -> Vec<(Symbol, usize)> {
    vec![ctor("a/0"), ctor("b/1"), ctor("c/2")]
}

/// Every subterm occurrence, printed.
fn occurrences(t: &Term, out: &mut Vec<String>) {
    out.push(t.to_string());
    for a in t.args() {
        occurrences(a, out);
    }
}

/// All values over {a, b, c} of depth at most `d`.
fn values_to_depth(d: usize) -> Vec<Term> {
    let mut level = vec![Term::constant("a")];
    for _ in 1..d {
        let mut next = vec![Term::constant("a")];
        for x in &level {
            next.push(app("b", vec![x.clone()]));
        }
        for x in &level {
            for y in &level {
                next.push(app("c", vec![x.clone(), y.clone()]));
            }
        }
        level = next;
    }
    level
}

proptest! {
    #[test]
    fn match_inverts_instantiation(
        p in pattern_strategy(abc(), 3),
        fill in proptest::collection::vec(value_strategy(abc(), 3), 8),
    ) {
        let mut sigma = Substitution::new();
        for (i, x) in p.var_occurrences().into_iter().enumerate() {
            sigma.insert(x, fill[i % fill.len()].clone());
        }
        let v = p.substitute(&sigma);
        prop_assert_eq!(match_term(&p, &v), Some(sigma));
    }

    #[test]
    fn successful_match_reproduces_the_value(p in pattern_strategy(abc(), 3), v in value_strategy(abc(), 4)) {
        if let Some(sigma) = match_term(&p, &v) {
            prop_assert_eq!(p.substitute(&sigma), v);
        }
    }

    #[test]
    fn shared_size_bounded_by_total_size(vs in proptest::collection::vec(value_strategy(abc(), 4), 1..4)) {
        let total: u64 = vs.iter().map(term_size).sum();
        let shared = minimal_shared_size(&vs) as u64;
        let mut occ = Vec::new();
        for v in &vs {
            occurrences(v, &mut occ);
        }
        let distinct: HashSet<&String> = occ.iter().collect();
        prop_assert!(shared <= total);
        prop_assert_eq!(shared as usize, distinct.len());
        prop_assert_eq!(shared == total, distinct.len() == occ.len());
    }

    #[test]
    fn terms_print_and_parse_back(v in value_strategy(abc(), 5)) {
        let mut sig = Signature::new();
        for (c, n) in abc() {
            sig.add_constructor(c, n).unwrap();
        }
        prop_assert_eq!(parse_term(&sig, &v.to_string()).unwrap(), v);
    }

    /// Ambiguity detection agrees with searching all argument tuples of
    /// depth at most 3 for one that two left-hand sides both match.
    #[test]
    fn ambiguity_agrees_with_brute_force(
        lhs in proptest::collection::vec((shallow_pattern(), shallow_pattern()), 2..4),
    ) {
        let mut sig = Signature::new();
        for (c, n) in abc() {
            sig.add_constructor(c, n).unwrap();
        }
        sig.add_operation("f", 2).unwrap();
        let rules: Vec<Rule> = lhs
            .iter()
            .map(|(p, q)| {
                let q = rename(q, "y");
                Rule::new(app("f", vec![p.clone(), q]), Term::constant("a"))
            })
            .collect();
        let reported: HashSet<(usize, usize)> = check_rules(&sig, &rules)
            .into_iter()
            .filter_map(|e| match e {
                ProgramError::Ambiguous { first, second, .. } => Some((first, second)),
                _ => None,
            })
            .collect();
        let values = values_to_depth(3);
        for i in 0..rules.len() {
            for j in i + 1..rules.len() {
                let witness = values.iter().any(|x| values.iter().any(|y| {
                    let call = app("f", vec![x.clone(), y.clone()]);
                    match_term(&rules[i].lhs, &call).is_some() && match_term(&rules[j].lhs, &call).is_some()
                }));
                prop_assert_eq!(witness, reported.contains(&(i + 1, j + 1)), "rules {} and {}", i + 1, j + 1);
            }
        }
    }
}

/// Patterns whose instances by `a` have depth at most 3.
fn shallow_pattern() -> impl Strategy<Value = Term> {
    pattern_strategy(abc(), 3).prop_filter("depth <= 3", |p| p.depth() <= 3)
}

/// Renames variables with a prefix so two patterns share none.
fn rename(t: &Term, prefix: &str) -> Term {
    match t.as_var() {
        Some(x) => Term::var(Var::new(&format!("{prefix}{}", x.as_str()))),
        None => Term::app(t.head().unwrap().clone(), t.args().iter().map(|a| rename(a, prefix)).collect()),
    }
}

#[test]
fn random_programs_print_and_parse_back() {
    for seed in 0..200 {
        let p = random_program(seed).program;
        let text = p.to_string();
        let back = parse_program(&text).unwrap_or_else(|e| panic!("seed {seed}: {e}\n{text}"));
        assert_eq!(back, p, "seed {seed}");
    }
}

#[test]
fn corpus_programs_print_and_parse_back() {
    for name in ["add.trs", "tree.trs", "rabbits.trs", "leafs.trs", "id.trs"] {
        let p = corpus_program(name);
        assert_eq!(parse_program(&p.to_string()).unwrap(), p, "{name}");
    }
}

#[test]
fn corpus_deltas() {
    let delta = |name| corpus_program(name).delta().unwrap();
    // suc(add(x, y)) and m(adults(x), babies(x)) have sizes 4 and 5.
    assert_eq!(delta("add.trs"), 4);
    assert_eq!(delta("rabbits.trs"), 5);
    assert_eq!(delta("tree.trs"), 3);
    assert_eq!(delta("id.trs"), 1);
}

#[test]
fn checker_reports_overlap_and_nonlinearity() {
    let dup = "constructors: zero/0 ; operations: f/1 ; rules: f(x) -> zero ; f(zero) -> zero ;";
    match parse_program(dup) {
        Err(memoshare::LoadError::Program(ProgramError::Ambiguous { first, second, .. })) => {
            assert_eq!((first, second), (1, 2));
        }
        other => panic!("expected ambiguity, got {other:?}"),
    }
    let nonlinear = "constructors: zero/0 ; operations: g/2 ; rules: g(x, x) -> x ;";
    assert!(matches!(
        parse_program(nonlinear),
        Err(memoshare::LoadError::Program(ProgramError::NonLinear { .. }))
    ));
}
