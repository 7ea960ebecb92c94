//! Compilation of function expressions to orthogonal programs.
//!
//! Case distinctions, recursion components and named definitions become
//! operations; constructor functions, projections and compositions are
//! inlined into right-hand sides. Structurally identical sub-functions map
//! to the same operation. Left-hand sides only use patterns of depth one.

use std::collections::{HashMap, HashSet};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use super::{Algebra, FunctionExpr, GrsrError, RecGrid};
use crate::term::{Program, Rule, Signature, Symbol, Term};

/// A compiled function: the program and the operation computing it.
#[derive(Clone, Debug)]
pub struct Compiled {
    pub program: Program,
    pub entry: Symbol,
}

/// Compiles `f`, naming operations after the definitions it references.
pub fn compile(f: &FunctionExpr) -> Result<Compiled, GrsrError> {
    compile_with_names(f, &[])
}

/// Like [`compile`]; `defs` supplies further named definitions whose names
/// are preferred for the operations they denote.
pub fn compile_with_names(f: &FunctionExpr, defs: &[FunctionExpr]) -> Result<Compiled, GrsrError> {
    compile_in(f, defs, &[])
}

/// Like [`compile_with_names`], also declaring every constructor of
/// `algebras`, so that inputs the function never inspects still parse.
pub fn compile_in(f: &FunctionExpr, defs: &[FunctionExpr], algebras: &[Arc<Algebra>]) -> Result<Compiled, GrsrError> {
    f.arity()?;
    let mut c = Compiler::default();
    for a in algebras {
        c.declare_algebra(a)?;
    }
    for d in defs.iter().chain([f]) {
        c.collect_names(d);
    }
    let entry = c.entry(f)?;
    let program = Program::new(c.sig, c.rules).map_err(|e| GrsrError::Arity {
        expr: f.to_string(),
        reason: format!("compiled program is not orthogonal: {e}"),
    })?;
    Ok(Compiled { program, entry })
}

/// Structural key with names expanded.
fn key(f: &FunctionExpr) -> String {
    let mut out = String::new();
    write_key(f, &mut out);
    out
}

fn write_key(f: &FunctionExpr, out: &mut String) {
    match f {
        FunctionExpr::Constructor { name, arity } => out.push_str(&format!("c:{name}/{arity}")),
        FunctionExpr::Proj { arity, index } => out.push_str(&format!("p:{arity}:{index}")),
        FunctionExpr::Comp { outer, inner } => {
            out.push_str("o(");
            write_key(outer, out);
            for g in inner {
                out.push(',');
                write_key(g, out);
            }
            out.push(')');
        }
        FunctionExpr::Case { algebra, branches } => {
            out.push_str(&format!("case:{}(", algebra_key(algebra)));
            for b in branches {
                write_key(b, out);
                out.push(';');
            }
            out.push(')');
        }
        FunctionExpr::SimRec { grid, select } => {
            out.push_str(&format!("rec{select}:"));
            out.push_str(&grid_key(grid));
        }
        FunctionExpr::Named { body, .. } => write_key(body, out),
    }
}

fn algebra_key(a: &Algebra) -> String {
    let cs: Vec<String> = a.constructors.iter().map(|(c, n)| format!("{c}/{n}")).collect();
    format!("{}[{}]", a.name, cs.join(","))
}

fn grid_key(grid: &RecGrid) -> String {
    let mut out = format!("{}(", algebra_key(&grid.algebra));
    for row in &grid.rows {
        for g in row {
            write_key(g, &mut out);
            out.push(',');
        }
        out.push(';');
    }
    out.push(')');
    out
}

fn short_hash(s: &str) -> String {
    let digest = Sha256::digest(s.as_bytes());
    digest[..4].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Default)]
struct Compiler {
    /// Preferred operation names by structural key.
    names: HashMap<String, String>,
    ops: HashMap<String, Symbol>,
    used: HashSet<String>,
    sig: Signature,
    rules: Vec<Rule>,
    constructors: HashMap<Symbol, usize>,
}

impl Compiler {
    fn collect_names(&mut self, f: &FunctionExpr) {
        let mut stack = vec![f];
        let mut seen_grids = HashSet::new();
        while let Some(f) = stack.pop() {
            match f {
                FunctionExpr::Constructor { .. } | FunctionExpr::Proj { .. } => {}
                FunctionExpr::Comp { outer, inner } => {
                    stack.push(outer);
                    stack.extend(inner);
                }
                FunctionExpr::Case { branches, .. } => stack.extend(branches),
                FunctionExpr::SimRec { grid, .. } => {
                    if seen_grids.insert(Arc::as_ptr(grid) as usize) {
                        stack.extend(grid.rows.iter().flatten());
                    }
                }
                FunctionExpr::Named { name, body } => {
                    self.names.entry(self.op_key(f)).or_insert_with(|| name.clone());
                    stack.push(body);
                }
            }
        }
    }

    /// The key of the operation that a named or recursive function becomes.
    fn op_key(&self, f: &FunctionExpr) -> String {
        match f.strip_names() {
            inner @ (FunctionExpr::Case { .. } | FunctionExpr::SimRec { .. }) => key(inner),
            inner => format!("def:{}", key(inner)),
        }
    }

    fn fresh_name(&mut self, wanted: String) -> Symbol {
        let mut name = wanted.clone();
        let mut k = 2;
        while self.used.contains(&name) || self.constructors.contains_key(&Symbol::new(&name)) {
            name = format!("{wanted}_{k}");
            k += 1;
        }
        self.used.insert(name.clone());
        Symbol::new(&name)
    }

    fn declare_constructor(&mut self, c: &Symbol, arity: usize) -> Result<(), GrsrError> {
        match self.constructors.get(c) {
            Some(&a) if a != arity => {
                return Err(GrsrError::ConstructorClash {
                    name: c.clone(),
                    first: a,
                    second: arity,
                })
            }
            Some(_) => return Ok(()),
            None => {}
        }
        if self.used.contains(c.as_str()) {
            return Err(GrsrError::ConstructorClash {
                name: c.clone(),
                first: arity,
                second: arity,
            });
        }
        self.constructors.insert(c.clone(), arity);
        self.sig.add_constructor(c.clone(), arity).map_err(|_| GrsrError::ConstructorClash {
            name: c.clone(),
            first: arity,
            second: arity,
        })
    }

    fn declare_algebra(&mut self, a: &Algebra) -> Result<(), GrsrError> {
        for (c, n) in &a.constructors {
            self.declare_constructor(c, *n)?;
        }
        Ok(())
    }

    fn entry(&mut self, f: &FunctionExpr) -> Result<Symbol, GrsrError> {
        match f {
            FunctionExpr::Named { .. } | FunctionExpr::Case { .. } | FunctionExpr::SimRec { .. } => self.op_for(f),
            _ => {
                let arity = f.arity()?;
                let wanted = match f {
                    FunctionExpr::Constructor { name, .. } => format!("f_{name}"),
                    FunctionExpr::Proj { arity, index } => format!("pi_{arity}_{index}"),
                    _ => format!("comp_{}", short_hash(&key(f))),
                };
                let op = self.fresh_name(wanted);
                self.sig.add_operation(op.clone(), arity).expect("fresh name");
                let xs: Vec<Term> = (1..=arity).map(|i| Term::var(format!("x{i}").as_str())).collect();
                let rhs = self.call(f, xs.clone())?;
                self.rules.push(Rule::new(Term::app(op.clone(), xs), rhs));
                Ok(op)
            }
        }
    }

    /// The term computing `f(args)`.
    fn call(&mut self, f: &FunctionExpr, args: Vec<Term>) -> Result<Term, GrsrError> {
        match f {
            FunctionExpr::Constructor { name, arity } => {
                self.declare_constructor(name, *arity)?;
                Ok(Term::app(name.clone(), args))
            }
            FunctionExpr::Proj { index, .. } => Ok(args[index - 1].clone()),
            FunctionExpr::Comp { outer, inner } => {
                let mid = inner
                    .iter()
                    .map(|g| self.call(g, args.clone()))
                    .collect::<Result<Vec<_>, _>>()?;
                self.call(outer, mid)
            }
            _ => Ok(Term::app(self.op_for(f)?, args)),
        }
    }

    fn op_for(&mut self, f: &FunctionExpr) -> Result<Symbol, GrsrError> {
        let k = self.op_key(f);
        if let Some(op) = self.ops.get(&k) {
            return Ok(op.clone());
        }
        let body = f.strip_names();
        match body {
            FunctionExpr::Case { algebra, branches } => {
                let name = self
                    .names
                    .get(&k)
                    .cloned()
                    .unwrap_or_else(|| format!("case_{}", short_hash(&k)));
                let op = self.fresh_name(name);
                self.ops.insert(k, op.clone());
                let arity = body.arity()?;
                self.sig.add_operation(op.clone(), arity).expect("fresh name");
                self.declare_algebra(algebra)?;
                let params = params(arity - 1);
                for (i, b) in branches.iter().enumerate() {
                    let (c, ar) = &algebra.constructors[i];
                    let zs = children(*ar);
                    let mut lhs_args = vec![Term::app(c.clone(), zs.clone())];
                    lhs_args.extend(params.iter().cloned());
                    let mut call_args = zs;
                    call_args.extend(params.iter().cloned());
                    let rhs = self.call(b, call_args)?;
                    self.rules.push(Rule::new(Term::app(op.clone(), lhs_args), rhs));
                }
                Ok(op)
            }
            FunctionExpr::SimRec { grid, select } => {
                let n = grid.components();
                let arity = body.arity()?;
                let mut comps = Vec::with_capacity(n);
                for j in 1..=n {
                    let cj = FunctionExpr::SimRec {
                        grid: grid.clone(),
                        select: j,
                    };
                    let kj = key(&cj);
                    let name = self
                        .names
                        .get(&kj)
                        .cloned()
                        .unwrap_or_else(|| format!("rec_{}_{j}", short_hash(&grid_key(grid))));
                    let op = self.fresh_name(name);
                    self.sig.add_operation(op.clone(), arity).expect("fresh name");
                    self.ops.insert(kj, op.clone());
                    comps.push(op);
                }
                self.declare_algebra(&grid.algebra)?;
                let params = params(arity - 1);
                for (j, op) in comps.iter().enumerate() {
                    for (i, row) in grid.rows.iter().enumerate() {
                        let (c, ar) = &grid.algebra.constructors[i];
                        let zs = children(*ar);
                        let mut lhs_args = vec![Term::app(c.clone(), zs.clone())];
                        lhs_args.extend(params.iter().cloned());
                        let mut call_args = zs.clone();
                        for g in &comps {
                            for z in &zs {
                                let mut a = vec![z.clone()];
                                a.extend(params.iter().cloned());
                                call_args.push(Term::app(g.clone(), a));
                            }
                        }
                        call_args.extend(params.iter().cloned());
                        let rhs = self.call(&row[j], call_args)?;
                        self.rules.push(Rule::new(Term::app(op.clone(), lhs_args), rhs));
                    }
                }
                Ok(comps[select - 1].clone())
            }
            _ => {
                let FunctionExpr::Named { name, .. } = f else {
                    unreachable!("only named definitions and schemes become operations")
                };
                let op = self.fresh_name(name.clone());
                self.ops.insert(k, op.clone());
                let arity = body.arity()?;
                self.sig.add_operation(op.clone(), arity).expect("fresh name");
                let xs: Vec<Term> = (1..=arity).map(|i| Term::var(format!("x{i}").as_str())).collect();
                let rhs = self.call(body, xs.clone())?;
                self.rules.push(Rule::new(Term::app(op.clone(), xs), rhs));
                Ok(op)
            }
        }
    }
}

fn children(n: usize) -> Vec<Term> {
    (1..=n).map(|i| Term::var(format!("z{i}").as_str())).collect()
}

fn params(n: usize) -> Vec<Term> {
    (1..=n).map(|i| Term::var(format!("y{i}").as_str())).collect()
}
