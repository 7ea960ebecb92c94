//! Ramified simultaneous recursion over free algebras.
//!
//! A [`FunctionExpr`] is built from constructor functions and projections
//! with composition, case distinction and simultaneous recursion on the
//! first argument. [`eval_grsr`] gives the denotation directly; [`compile`]
//! turns an expression into an orthogonal program; [`check_tiers`] and
//! [`infer_tiers`] implement the tiering discipline.

mod compile;
mod parse;
mod tier;

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::term::{Symbol, Term, TermKind};

pub use compile::{compile, compile_in, compile_with_names, Compiled};
pub use parse::{parse_module, Definition, GrsrModule, SignatureSlot, DeclaredSignature};
pub use tier::{
    check_tiers, check_tiers_with_bound, default_t_max, explain_rejection, infer_tiers, TierDerivation,
    TierRejection, TierRule,
    TierSignature,
};

/// A named free algebra: a list of constructors with arities.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Algebra {
    pub name: String,
    pub constructors: Vec<(Symbol, usize)>,
}

impl Algebra {
    pub fn new(name: &str, constructors: &[(&str, usize)]) -> Result<Algebra, GrsrError> {
        let algebra = Algebra {
            name: name.to_string(),
            constructors: constructors.iter().map(|&(c, a)| (Symbol::new(c), a)).collect(),
        };
        if !algebra.constructors.iter().any(|&(_, a)| a == 0) {
            return Err(GrsrError::NoNullary { algebra: name.to_string() });
        }
        Ok(algebra)
    }

    /// The position of `c` among the constructors.
    pub fn position(&self, c: &Symbol) -> Option<usize> {
        self.constructors.iter().position(|(d, _)| d == c)
    }

    pub fn arity(&self, i: usize) -> usize {
        self.constructors[i].1
    }

    /// The unary numbers `zero/0, suc/1`.
    pub fn nat() -> Algebra {
        Algebra::new("N", &[("zero", 0), ("suc", 1)]).expect("has a nullary constructor")
    }
}

/// The functions of a simultaneous recursion: `rows[i][j]` handles
/// constructor `i` of the algebra for component `j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct RecGrid {
    pub algebra: Arc<Algebra>,
    pub rows: Vec<Vec<FunctionExpr>>,
}

impl RecGrid {
    pub fn components(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum FunctionExpr {
    /// `f_c(x̄) = c(x̄)`.
    Constructor { name: Symbol, arity: usize },
    /// `π^arity_index`, with 1-based `index`.
    Proj { arity: usize, index: usize },
    /// `outer ∘ (inner_1, ..., inner_n)`.
    Comp { outer: Arc<FunctionExpr>, inner: Vec<FunctionExpr> },
    /// Case distinction on the first argument; one branch per constructor,
    /// in algebra order.
    Case { algebra: Arc<Algebra>, branches: Vec<FunctionExpr> },
    /// Component `select` (1-based) of a simultaneous recursion.
    SimRec { grid: Arc<RecGrid>, select: usize },
    /// A definition referenced by name.
    Named { name: String, body: Arc<FunctionExpr> },
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum GrsrError {
    #[error("algebra `{algebra}` has no nullary constructor")]
    NoNullary { algebra: String },
    #[error("arity mismatch in `{expr}`: {reason}")]
    Arity { expr: String, reason: String },
    #[error("`{function}` expects {expected} argument(s), got {found}")]
    WrongArgCount {
        function: String,
        expected: usize,
        found: usize,
    },
    #[error("argument `{value}` of `{function}` is not in algebra `{algebra}`")]
    NotInAlgebra {
        function: String,
        value: String,
        algebra: String,
    },
    #[error("constructor `{name}` has arity {first} in one place and {second} in another")]
    ConstructorClash { name: Symbol, first: usize, second: usize },
}

fn arity_error(f: &FunctionExpr, reason: String) -> GrsrError {
    GrsrError::Arity {
        expr: f.to_string(),
        reason,
    }
}

impl FunctionExpr {
    pub fn constructor(name: &str, arity: usize) -> FunctionExpr {
        FunctionExpr::Constructor {
            name: Symbol::new(name),
            arity,
        }
    }

    pub fn proj(arity: usize, index: usize) -> FunctionExpr {
        FunctionExpr::Proj { arity, index }
    }

    pub fn comp(outer: FunctionExpr, inner: Vec<FunctionExpr>) -> FunctionExpr {
        FunctionExpr::Comp {
            outer: Arc::new(outer),
            inner,
        }
    }

    pub fn case(algebra: Arc<Algebra>, branches: Vec<FunctionExpr>) -> FunctionExpr {
        FunctionExpr::Case { algebra, branches }
    }

    pub fn simrec(algebra: Arc<Algebra>, rows: Vec<Vec<FunctionExpr>>, select: usize) -> FunctionExpr {
        FunctionExpr::SimRec {
            grid: Arc::new(RecGrid { algebra, rows }),
            select,
        }
    }

    pub fn named(name: &str, body: FunctionExpr) -> FunctionExpr {
        FunctionExpr::Named {
            name: name.to_string(),
            body: Arc::new(body),
        }
    }

    /// The expression with outer names removed.
    pub fn strip_names(&self) -> &FunctionExpr {
        let mut f = self;
        while let FunctionExpr::Named { body, .. } = f {
            f = body;
        }
        f
    }

    /// Checks arities throughout and returns the arity of the expression.
    pub fn arity(&self) -> Result<usize, GrsrError> {
        match self {
            FunctionExpr::Constructor { arity, .. } => Ok(*arity),
            FunctionExpr::Proj { arity, index } => {
                if *index == 0 || index > arity {
                    return Err(arity_error(self, format!("index {index} is outside 1..={arity}")));
                }
                Ok(*arity)
            }
            FunctionExpr::Comp { outer, inner } => {
                let k = outer.arity()?;
                if k != inner.len() {
                    return Err(arity_error(
                        self,
                        format!("outer function takes {k} argument(s) but {} are supplied", inner.len()),
                    ));
                }
                let mut m = None;
                for g in inner {
                    let a = g.arity()?;
                    if *m.get_or_insert(a) != a {
                        return Err(arity_error(self, "inner functions differ in arity".into()));
                    }
                }
                m.ok_or_else(|| arity_error(self, "composition needs at least one inner function".into()))
            }
            FunctionExpr::Case { algebra, branches } => {
                if branches.len() != algebra.constructors.len() {
                    return Err(arity_error(
                        self,
                        format!("{} branches for {} constructors", branches.len(), algebra.constructors.len()),
                    ));
                }
                let mut params = None;
                for (i, b) in branches.iter().enumerate() {
                    let a = b.arity()?;
                    let ar = algebra.arity(i);
                    if a < ar {
                        return Err(arity_error(self, format!("branch {} has arity {a} < {ar}", i + 1)));
                    }
                    if *params.get_or_insert(a - ar) != a - ar {
                        return Err(arity_error(self, "branches disagree on the number of parameters".into()));
                    }
                }
                Ok(1 + params.expect("algebras are non-empty"))
            }
            FunctionExpr::SimRec { grid, select } => {
                let n = grid.components();
                if grid.rows.len() != grid.algebra.constructors.len() {
                    return Err(arity_error(self, "one row per constructor is required".into()));
                }
                if n == 0 || grid.rows.iter().any(|r| r.len() != n) {
                    return Err(arity_error(self, "every row needs the same number of components".into()));
                }
                if *select == 0 || *select > n {
                    return Err(arity_error(self, format!("component {select} is outside 1..={n}")));
                }
                let mut params = None;
                for (i, row) in grid.rows.iter().enumerate() {
                    let ar = grid.algebra.arity(i);
                    for f in row {
                        let a = f.arity()?;
                        let fixed = ar + n * ar;
                        if a < fixed {
                            return Err(arity_error(self, format!("component function has arity {a} < {fixed}")));
                        }
                        if *params.get_or_insert(a - fixed) != a - fixed {
                            return Err(arity_error(self, "components disagree on the number of parameters".into()));
                        }
                    }
                }
                Ok(1 + params.expect("rows are non-empty"))
            }
            FunctionExpr::Named { body, .. } => body.arity(),
        }
    }

    /// Number of distinct recursion grids in the expression.
    pub fn simrec_count(&self) -> usize {
        let mut seen = std::collections::HashSet::new();
        let mut stack = vec![self];
        while let Some(f) = stack.pop() {
            match f {
                FunctionExpr::Constructor { .. } | FunctionExpr::Proj { .. } => {}
                FunctionExpr::Comp { outer, inner } => {
                    stack.push(outer);
                    stack.extend(inner);
                }
                FunctionExpr::Case { branches, .. } => stack.extend(branches),
                FunctionExpr::SimRec { grid, .. } => {
                    if seen.insert(Arc::as_ptr(grid) as usize) {
                        stack.extend(grid.rows.iter().flatten());
                    }
                }
                FunctionExpr::Named { body, .. } => stack.push(body),
            }
        }
        seen.len()
    }
}

fn write_grid(f: &mut fmt::Formatter<'_>, algebra: &Algebra, rows: &[Vec<FunctionExpr>]) -> fmt::Result {
    write!(f, " over {} {{", algebra.name)?;
    for ((c, _), row) in algebra.constructors.iter().zip(rows) {
        write!(f, " {c} =>")?;
        for (j, g) in row.iter().enumerate() {
            let sep = if j == 0 { " " } else { ", " };
            write!(f, "{sep}{g}")?;
        }
        f.write_str(" ;")?;
    }
    f.write_str(" }")
}

impl fmt::Display for FunctionExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FunctionExpr::Constructor { name, .. } => write!(f, "cons[{name}]"),
            FunctionExpr::Proj { arity, index } => write!(f, "(proj {arity} {index})"),
            FunctionExpr::Comp { outer, inner } => {
                write!(f, "(comp {outer}")?;
                for g in inner {
                    write!(f, " {g}")?;
                }
                f.write_str(")")
            }
            FunctionExpr::Case { algebra, branches } => {
                f.write_str("(case")?;
                write_grid(
                    f,
                    algebra,
                    &branches.iter().map(|b| vec![b.clone()]).collect::<Vec<_>>(),
                )?;
                f.write_str(")")
            }
            FunctionExpr::SimRec { grid, select } => {
                f.write_str("(rec")?;
                write_grid(f, &grid.algebra, &grid.rows)?;
                write!(f, " select {select})")
            }
            FunctionExpr::Named { name, .. } => f.write_str(name),
        }
    }
}

fn describe(f: &FunctionExpr) -> String {
    match f {
        FunctionExpr::Named { name, .. } => name.clone(),
        other => other.to_string(),
    }
}

/// Evaluates `f` on `args` by its defining equations. Recursion is
/// computed bottom-up over the distinct subterms of the recursion argument.
pub fn eval_grsr(f: &FunctionExpr, args: &[Term]) -> Result<Term, GrsrError> {
    let arity = f.arity()?;
    if arity != args.len() {
        return Err(GrsrError::WrongArgCount {
            function: describe(f),
            expected: arity,
            found: args.len(),
        });
    }
    eval_checked(f, args)
}

fn eval_checked(f: &FunctionExpr, args: &[Term]) -> Result<Term, GrsrError> {
    match f {
        FunctionExpr::Constructor { name, .. } => Ok(Term::app(name.clone(), args.to_vec())),
        FunctionExpr::Proj { index, .. } => Ok(args[index - 1].clone()),
        FunctionExpr::Comp { outer, inner } => {
            let mid = inner
                .iter()
                .map(|g| eval_checked(g, args))
                .collect::<Result<Vec<_>, _>>()?;
            eval_checked(outer, &mid)
        }
        FunctionExpr::Case { algebra, branches } => {
            let (i, kids) = split(f, algebra, &args[0])?;
            let mut branch_args = kids.to_vec();
            branch_args.extend_from_slice(&args[1..]);
            eval_checked(&branches[i], &branch_args)
        }
        FunctionExpr::SimRec { grid, select } => {
            let n = grid.components();
            let params = &args[1..];
            // Post-order over the distinct subterms of the recursion argument.
            let mut table: HashMap<Term, Vec<Term>> = HashMap::new();
            let mut stack = vec![(args[0].clone(), false)];
            while let Some((t, expanded)) = stack.pop() {
                if table.contains_key(&t) {
                    continue;
                }
                let (i, kids) = split(f, &grid.algebra, &t)?;
                if !expanded {
                    stack.push((t.clone(), true));
                    stack.extend(kids.iter().map(|k| (k.clone(), false)));
                    continue;
                }
                let mut call_args = kids.to_vec();
                for j in 0..n {
                    for k in kids {
                        call_args.push(table[k][j].clone());
                    }
                }
                call_args.extend_from_slice(params);
                let results = grid.rows[i]
                    .iter()
                    .map(|g| eval_checked(g, &call_args))
                    .collect::<Result<Vec<_>, _>>()?;
                table.insert(t, results);
            }
            Ok(table[&args[0]][select - 1].clone())
        }
        FunctionExpr::Named { body, .. } => eval_checked(body, args),
    }
}

fn split<'t>(f: &FunctionExpr, algebra: &Algebra, t: &'t Term) -> Result<(usize, &'t [Term]), GrsrError> {
    let not_in = || GrsrError::NotInAlgebra {
        function: describe(f),
        value: t.to_string(),
        algebra: algebra.name.clone(),
    };
    match t.kind() {
        TermKind::App(c, kids) => {
            let i = algebra.position(c).ok_or_else(not_in)?;
            if algebra.arity(i) != kids.len() {
                return Err(not_in());
            }
            Ok((i, kids))
        }
        TermKind::Var(_) => Err(not_in()),
    }
}
