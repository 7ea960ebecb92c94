//! Big-step call-by-value evaluation, plain and memoized.
//!
//! Both engines run on an explicit task stack. Right-hand sides are
//! evaluated under the matching substitution instead of being instantiated,
//! which gives the same values without copying; the derivation-size counter
//! still charges every variable occurrence with the size of the value it
//! stands for, as instantiating and re-deriving it would.

use std::collections::HashMap;
use std::rc::Rc;

use thiserror::Error;

use crate::term::{Program, Substitution, Symbol, Term, TermKind};

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("stuck: no rule matches `{call}`")]
    Stuck { call: Term },
    #[error("budget of {budget} steps exceeded")]
    BudgetExceeded { budget: u64 },
    #[error("term is not ground: variable `{var}`")]
    NotGround { var: String },
    #[error("unknown symbol `{symbol}`")]
    UnknownSymbol { symbol: Symbol },
}

/// A fully applied call on values.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct CallKey {
    pub op: Symbol,
    pub args: Vec<Term>,
}

impl CallKey {
    pub fn to_term(&self) -> Term {
        Term::app(self.op.clone(), self.args.clone())
    }
}

/// Term-level cache from calls to their results.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TermCache {
    entries: HashMap<CallKey, Term>,
}

impl TermCache {
    pub fn new() -> Self {
        TermCache::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, op: &Symbol, args: &[Term]) -> Option<&Term> {
        // Avoid building an owned key on the lookup path when empty.
        if self.entries.is_empty() {
            return None;
        }
        self.entries.get(&CallKey {
            op: op.clone(),
            args: args.to_vec(),
        })
    }

    /// Inserts an entry; returns the previous result for the key, if any.
    pub fn insert(&mut self, key: CallKey, value: Term) -> Option<Term> {
        self.entries.insert(key, value)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&CallKey, &Term)> {
        self.entries.iter()
    }

    /// Whether every entry of `self` is in `other` with the same result.
    pub fn is_subset_of(&self, other: &TermCache) -> bool {
        self.entries.iter().all(|(k, v)| other.entries.get(k) == Some(v))
    }
}

/// Result of plain evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CbvOutcome {
    pub value: Term,
    /// Rule firings (calls rewritten).
    pub firings: u64,
    /// Size of the derivation: constructor and call rule instances.
    pub steps: u64,
}

/// Result of memoized evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CostedOutcome {
    pub cache: TermCache,
    pub value: Term,
    /// Cache updates, i.e. calls evaluated by rewriting.
    pub cost: u64,
    /// Calls answered from the cache.
    pub reads: u64,
    pub steps: u64,
}

enum Task {
    Eval(Term, Option<Rc<Substitution>>),
    Build(Symbol, usize),
    Call(Symbol, usize),
    Update(CallKey),
}

struct Engine<'p> {
    program: &'p Program,
    cache: Option<TermCache>,
    steps: u64,
    firings: u64,
    reads: u64,
    step_budget: Option<u64>,
    call_budget: Option<u64>,
}

impl Engine<'_> {
    fn run(&mut self, t: &Term) -> Result<Term, EvalError> {
        let sig = self.program.signature();
        let mut tasks = vec![Task::Eval(t.clone(), None)];
        let mut values: Vec<Term> = Vec::new();
        while let Some(task) = tasks.pop() {
            match task {
                Task::Eval(term, env) => match term.kind() {
                    TermKind::Var(x) => {
                        let v = env
                            .as_ref()
                            .and_then(|s| s.get(x))
                            .ok_or_else(|| EvalError::NotGround { var: x.to_string() })?;
                        self.charge(v.size())?;
                        values.push(v.clone());
                    }
                    TermKind::App(f, args) => {
                        self.charge(1)?;
                        if sig.is_constructor(f) {
                            tasks.push(Task::Build(f.clone(), args.len()));
                        } else if sig.is_operation(f) {
                            tasks.push(Task::Call(f.clone(), args.len()));
                        } else {
                            return Err(EvalError::UnknownSymbol { symbol: f.clone() });
                        }
                        for a in args.iter().rev() {
                            tasks.push(Task::Eval(a.clone(), env.clone()));
                        }
                    }
                },
                Task::Build(c, n) => {
                    let args = values.split_off(values.len() - n);
                    values.push(Term::app(c, args));
                }
                Task::Call(f, n) => {
                    let args = values.split_off(values.len() - n);
                    let cached = self.cache.as_ref().and_then(|c| c.get(&f, &args)).cloned();
                    if let Some(v) = cached {
                        self.reads += 1;
                        self.charge_call()?;
                        values.push(v);
                        continue;
                    }
                    let Some((rule, subst)) = self.program.select_rule(&f, &args) else {
                        return Err(EvalError::Stuck {
                            call: Term::app(f, args),
                        });
                    };
                    self.firings += 1;
                    self.charge_call()?;
                    if self.cache.is_some() {
                        tasks.push(Task::Update(CallKey { op: f, args }));
                    }
                    let rhs = self.program.rules()[rule].rhs.clone();
                    tasks.push(Task::Eval(rhs, Some(Rc::new(subst))));
                }
                Task::Update(key) => {
                    let v = values.last().expect("call result").clone();
                    self.cache.as_mut().expect("memo engine").insert(key, v);
                }
            }
        }
        debug_assert_eq!(values.len(), 1);
        Ok(values.pop().expect("one result"))
    }

    fn charge(&mut self, n: u64) -> Result<(), EvalError> {
        self.steps = self.steps.saturating_add(n);
        match self.step_budget {
            Some(b) if self.steps > b => Err(EvalError::BudgetExceeded { budget: b }),
            _ => Ok(()),
        }
    }

    fn charge_call(&mut self) -> Result<(), EvalError> {
        match self.call_budget {
            Some(b) if self.firings + self.reads > b => Err(EvalError::BudgetExceeded { budget: b }),
            _ => Ok(()),
        }
    }
}

/// Plain call-by-value evaluation. `budget` bounds the derivation size
/// ([`CbvOutcome::steps`]).
pub fn eval_cbv(p: &Program, t: &Term, budget: u64) -> Result<CbvOutcome, EvalError> {
    let mut engine = Engine {
        program: p,
        cache: None,
        steps: 0,
        firings: 0,
        reads: 0,
        step_budget: Some(budget),
        call_budget: None,
    };
    let value = engine.run(t)?;
    Ok(CbvOutcome {
        value,
        firings: engine.firings,
        steps: engine.steps,
    })
}

/// Memoized evaluation starting from cache `c0`.
pub fn eval_memo(p: &Program, c0: TermCache, t: &Term) -> Result<CostedOutcome, EvalError> {
    eval_memo_with_budget(p, c0, t, None)
}

/// Memoized evaluation; `budget` bounds the number of calls (updates plus
/// reads).
pub fn eval_memo_with_budget(
    p: &Program,
    c0: TermCache,
    t: &Term,
    budget: Option<u64>,
) -> Result<CostedOutcome, EvalError> {
    let mut engine = Engine {
        program: p,
        cache: Some(c0),
        steps: 0,
        firings: 0,
        reads: 0,
        step_budget: None,
        call_budget: budget,
    };
    let value = engine.run(t)?;
    Ok(CostedOutcome {
        cache: engine.cache.take().expect("memo engine"),
        value,
        cost: engine.firings,
        reads: engine.reads,
        steps: engine.steps,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum EquivalenceError {
    #[error("plain evaluation failed: {0}")]
    Plain(EvalError),
    #[error("memoized evaluation failed: {0}")]
    Memo(EvalError),
}

/// Whether plain and memoized evaluation (from the empty cache) agree on
/// `t`, each within `budget`.
pub fn equivalence_check(p: &Program, t: &Term, budget: u64) -> Result<bool, EquivalenceError> {
    let memo = eval_memo_with_budget(p, TermCache::new(), t, Some(budget)).map_err(EquivalenceError::Memo)?;
    let plain = eval_cbv(p, t, budget).map_err(EquivalenceError::Plain)?;
    Ok(plain.value == memo.value)
}
