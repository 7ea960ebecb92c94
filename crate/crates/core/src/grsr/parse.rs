//! Definition files for function expressions.
//!
//! ```text
//! algebra N = zero/0, suc/1 ;
//! def add : N@2 x N@1 -> N@1 =
//!   rec over N {
//!     zero => proj 1 1 ;
//!     suc  => comp cons[suc] (proj 3 2) ;
//!   } ;
//! def double = comp add (proj 1 1) (proj 1 1) ;
//! ```
//!
//! `rec over A { c => f1, ..., fn ; ... } select j` is component `j` of a
//! simultaneous recursion; `name select j` picks another component of the
//! recursion that definition `name` denotes. Tier annotations `@k` are
//! optional.

use std::collections::HashMap;
use std::sync::Arc;

use super::{compile_in, Algebra, Compiled, FunctionExpr, GrsrError, TierSignature};
use crate::parse::{Cursor, ParseError, Tok};
use crate::term::Symbol;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignatureSlot {
    pub algebra: String,
    pub tier: Option<u32>,
}

/// A declared type, possibly with tiers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DeclaredSignature {
    pub inputs: Vec<SignatureSlot>,
    pub output: SignatureSlot,
}

impl DeclaredSignature {
    /// The tier signature, when every slot carries a tier.
    pub fn tiers(&self) -> Option<TierSignature> {
        let inputs = self.inputs.iter().map(|s| s.tier).collect::<Option<Vec<_>>>()?;
        Some(TierSignature::new(inputs, self.output.tier?))
    }

    pub fn input_algebras(&self) -> Vec<&str> {
        self.inputs.iter().map(|s| s.algebra.as_str()).collect()
    }
}

#[derive(Clone, Debug)]
pub struct Definition {
    pub name: String,
    pub signature: Option<DeclaredSignature>,
    /// The definition as a named expression.
    pub expr: FunctionExpr,
}

#[derive(Clone, Debug, Default)]
pub struct GrsrModule {
    pub algebras: Vec<Arc<Algebra>>,
    pub defs: Vec<Definition>,
}

impl GrsrModule {
    pub fn def(&self, name: &str) -> Option<&Definition> {
        self.defs.iter().find(|d| d.name == name)
    }

    pub fn algebra(&self, name: &str) -> Option<&Arc<Algebra>> {
        self.algebras.iter().find(|a| a.name == name)
    }

    pub fn def_exprs(&self) -> Vec<FunctionExpr> {
        self.defs.iter().map(|d| d.expr.clone()).collect()
    }

    /// Compiles definition `name`, declaring every constructor of the
    /// module and naming operations after its definitions.
    pub fn compile(&self, name: &str) -> Option<Result<Compiled, GrsrError>> {
        let def = self.def(name)?;
        Some(compile_in(&def.expr, &self.def_exprs(), &self.algebras))
    }
}

const KEYWORDS: [&str; 8] = ["comp", "case", "rec", "select", "over", "def", "algebra", "cons"];

struct ModuleParser {
    cur: Cursor,
    algebras: Vec<Arc<Algebra>>,
    constructors: HashMap<String, usize>,
    defs: HashMap<String, Arc<FunctionExpr>>,
}

/// Parses a definition file.
pub fn parse_module(text: &str) -> Result<GrsrModule, ParseError> {
    let mut p = ModuleParser {
        cur: Cursor::new(text)?,
        algebras: Vec::new(),
        constructors: HashMap::new(),
        defs: HashMap::new(),
    };
    let mut module = GrsrModule::default();
    loop {
        if matches!(p.cur.peek(), Tok::Eof) {
            break;
        }
        if p.cur.is_keyword("algebra") {
            p.algebra()?;
        } else if p.cur.is_keyword("def") {
            module.defs.push(p.definition()?);
        } else {
            return Err(p.cur.unexpected("`algebra` or `def`"));
        }
    }
    module.algebras = p.algebras;
    Ok(module)
}

impl ModuleParser {
    fn algebra(&mut self) -> Result<(), ParseError> {
        self.cur.expect_keyword("algebra")?;
        let at = self.cur.error("");
        let name = self.cur.ident()?;
        if self.algebras.iter().any(|a| a.name == name) {
            return Err(ParseError {
                message: format!("algebra `{name}` is declared twice"),
                ..at
            });
        }
        self.cur.expect_punct("=")?;
        let mut ctors: Vec<(String, usize)> = Vec::new();
        loop {
            let at = self.cur.error("");
            let c = self.cur.ident()?;
            self.cur.expect_punct("/")?;
            let n = self.cur.number()? as usize;
            if let Some(&m) = self.constructors.get(&c) {
                if m != n {
                    return Err(ParseError {
                        message: format!("constructor `{c}` was declared with arity {m}"),
                        ..at
                    });
                }
            }
            self.constructors.insert(c.clone(), n);
            ctors.push((c, n));
            if self.cur.eat_punct(";") {
                break;
            }
            self.cur.expect_punct(",")?;
        }
        let refs: Vec<(&str, usize)> = ctors.iter().map(|(c, n)| (c.as_str(), *n)).collect();
        let algebra = Algebra::new(&name, &refs).map_err(|e| ParseError {
            message: e.to_string(),
            ..at
        })?;
        self.algebras.push(Arc::new(algebra));
        Ok(())
    }

    fn slot(&mut self) -> Result<SignatureSlot, ParseError> {
        let at = self.cur.error("");
        let algebra = self.cur.ident()?;
        if !self.algebras.iter().any(|a| a.name == algebra) {
            return Err(ParseError {
                message: format!("unknown algebra `{algebra}`"),
                ..at
            });
        }
        let tier = if self.cur.eat_punct("@") {
            Some(self.cur.number()? as u32)
        } else {
            None
        };
        Ok(SignatureSlot { algebra, tier })
    }

    fn signature(&mut self) -> Result<DeclaredSignature, ParseError> {
        let mut inputs = Vec::new();
        if !self.cur.is_punct("->") {
            inputs.push(self.slot()?);
            while self.cur.is_keyword("x") || self.cur.is_punct("*") || self.cur.is_punct("×") {
                self.cur.next();
                inputs.push(self.slot()?);
            }
        }
        self.cur.expect_punct("->")?;
        let output = self.slot()?;
        Ok(DeclaredSignature { inputs, output })
    }

    fn definition(&mut self) -> Result<Definition, ParseError> {
        self.cur.expect_keyword("def")?;
        let at = self.cur.error("");
        let name = self.cur.ident()?;
        if KEYWORDS.contains(&name.as_str()) || self.defs.contains_key(&name) {
            return Err(ParseError {
                message: format!("`{name}` cannot be (re)defined"),
                ..at
            });
        }
        let signature = if self.cur.eat_punct(":") {
            Some(self.signature()?)
        } else {
            None
        };
        self.cur.expect_punct("=")?;
        let body = self.fexpr()?;
        self.cur.expect_punct(";")?;
        let arity = body.arity().map_err(|e| ParseError {
            message: e.to_string(),
            ..at.clone()
        })?;
        if let Some(sig) = &signature {
            if sig.inputs.len() != arity {
                return Err(ParseError {
                    message: format!(
                        "`{name}` takes {arity} argument(s) but its signature lists {}",
                        sig.inputs.len()
                    ),
                    ..at
                });
            }
        }
        let body = Arc::new(body);
        self.defs.insert(name.clone(), body.clone());
        Ok(Definition {
            name: name.clone(),
            signature,
            expr: FunctionExpr::Named { name, body },
        })
    }

    fn algebra_ref(&mut self) -> Result<Arc<Algebra>, ParseError> {
        let at = self.cur.error("");
        let name = self.cur.ident()?;
        self.algebras.iter().find(|a| a.name == name).cloned().ok_or(ParseError {
            message: format!("unknown algebra `{name}`"),
            ..at
        })
    }

    /// Branches `c => f1, ..., fk ;` ordered as in the algebra.
    fn branches(&mut self, algebra: &Algebra, many: bool) -> Result<Vec<Vec<FunctionExpr>>, ParseError> {
        self.cur.expect_punct("{")?;
        let mut rows: Vec<Option<Vec<FunctionExpr>>> = vec![None; algebra.constructors.len()];
        while !self.cur.eat_punct("}") {
            let at = self.cur.error("");
            let c = self.cur.ident()?;
            let i = algebra.position(&Symbol::new(&c)).ok_or_else(|| ParseError {
                message: format!("`{c}` is not a constructor of `{}`", algebra.name),
                ..at.clone()
            })?;
            if rows[i].is_some() {
                return Err(ParseError {
                    message: format!("constructor `{c}` has two branches"),
                    ..at
                });
            }
            self.cur.expect_punct("=>")?;
            let mut row = vec![self.fexpr()?];
            while many && self.cur.eat_punct(",") {
                row.push(self.fexpr()?);
            }
            self.cur.expect_punct(";")?;
            rows[i] = Some(row);
        }
        rows.into_iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    self.cur.error(format!(
                        "no branch for constructor `{}` of `{}`",
                        algebra.constructors[i].0, algebra.name
                    ))
                })
            })
            .collect()
    }

    fn fexpr(&mut self) -> Result<FunctionExpr, ParseError> {
        if self.cur.is_keyword("comp") {
            self.cur.next();
            let outer = self.atom()?;
            let mut inner = Vec::new();
            while self.starts_atom() {
                inner.push(self.atom()?);
            }
            if inner.is_empty() {
                return Err(self.cur.unexpected("a function to compose with"));
            }
            return Ok(FunctionExpr::comp(outer, inner));
        }
        if self.cur.is_keyword("case") {
            self.cur.next();
            self.cur.expect_keyword("over")?;
            let algebra = self.algebra_ref()?;
            let rows = self.branches(&algebra, false)?;
            let branches = rows.into_iter().map(|mut r| r.remove(0)).collect();
            return Ok(FunctionExpr::case(algebra, branches));
        }
        if self.cur.is_keyword("rec") {
            self.cur.next();
            self.cur.expect_keyword("over")?;
            let algebra = self.algebra_ref()?;
            let rows = self.branches(&algebra, true)?;
            let select = self.select()?.unwrap_or(1);
            return Ok(FunctionExpr::simrec(algebra, rows, select));
        }
        let at = self.cur.error("");
        let f = self.atom()?;
        match self.select()? {
            None => Ok(f),
            Some(j) => match f.strip_names() {
                FunctionExpr::SimRec { grid, .. } => Ok(FunctionExpr::SimRec {
                    grid: grid.clone(),
                    select: j,
                }),
                _ => Err(ParseError {
                    message: "`select` applies only to a recursion".into(),
                    ..at
                }),
            },
        }
    }

    fn select(&mut self) -> Result<Option<usize>, ParseError> {
        if self.cur.is_keyword("select") {
            self.cur.next();
            Ok(Some(self.cur.number()? as usize))
        } else {
            Ok(None)
        }
    }

    fn starts_atom(&self) -> bool {
        match self.cur.peek() {
            Tok::Ident(s) => s == "cons" || s == "proj" || !KEYWORDS.contains(&s.as_str()),
            Tok::Punct("(") => true,
            _ => false,
        }
    }

    fn atom(&mut self) -> Result<FunctionExpr, ParseError> {
        if self.cur.eat_punct("(") {
            let f = self.fexpr()?;
            self.cur.expect_punct(")")?;
            return Ok(f);
        }
        let at = self.cur.error("");
        let name = self.cur.ident().map_err(|_| self.cur.unexpected("a function"))?;
        match name.as_str() {
            "cons" => {
                self.cur.expect_punct("[")?;
                let at = self.cur.error("");
                let c = self.cur.ident()?;
                self.cur.expect_punct("]")?;
                let arity = *self.constructors.get(&c).ok_or(ParseError {
                    message: format!("unknown constructor `{c}`"),
                    ..at
                })?;
                Ok(FunctionExpr::constructor(&c, arity))
            }
            "proj" => {
                let m = self.cur.number()? as usize;
                let n = self.cur.number()? as usize;
                if n == 0 || n > m {
                    return Err(ParseError {
                        message: format!("projection index {n} is outside 1..={m}"),
                        ..at
                    });
                }
                Ok(FunctionExpr::proj(m, n))
            }
            _ => match self.defs.get(&name) {
                Some(body) => Ok(FunctionExpr::Named {
                    name,
                    body: body.clone(),
                }),
                None => Err(ParseError {
                    message: format!("unknown definition `{name}`"),
                    ..at
                }),
            },
        }
    }
}
