//! Tier checking and inference.
//!
//! Every occurrence of a sub-function gets fresh tier variables for its
//! inputs and output. The typing rules contribute equalities (solved with
//! union-find) and, for each recursion, a strict inequality between the
//! recursion argument and the result. The least solution of the strict
//! inequalities is a longest-path computation over the class graph.

use std::collections::HashMap;
use std::fmt;

use super::{FunctionExpr, GrsrError};

/// Input tiers and output tier of a function.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TierSignature {
    pub inputs: Vec<u32>,
    pub output: u32,
}

impl TierSignature {
    pub fn new(inputs: Vec<u32>, output: u32) -> Self {
        TierSignature { inputs, output }
    }

    /// Renames tiers to `0..k` preserving their order.
    pub fn normalized(&self) -> TierSignature {
        let mut levels: Vec<u32> = self.inputs.iter().copied().chain([self.output]).collect();
        levels.sort_unstable();
        levels.dedup();
        let rank = |t: u32| levels.binary_search(&t).expect("tier present") as u32;
        TierSignature {
            inputs: self.inputs.iter().map(|&t| rank(t)).collect(),
            output: rank(self.output),
        }
    }

    pub fn max_tier(&self) -> u32 {
        self.inputs.iter().copied().chain([self.output]).max().unwrap_or(0)
    }

    /// Renders the signature with algebra names, e.g. `N@2 x N@1 -> N@1`.
    pub fn render(&self, input_algebras: &[&str], output_algebra: &str) -> String {
        let ins: Vec<String> = self
            .inputs
            .iter()
            .enumerate()
            .map(|(i, t)| format!("{}@{t}", input_algebras.get(i).copied().unwrap_or("")))
            .collect();
        format!("{} -> {output_algebra}@{}", ins.join(" x "), self.output)
    }
}

impl fmt::Display for TierSignature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render(&[], ""))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TierRule {
    Constructor,
    Projection,
    Composition,
    Case,
    Recursion,
}

/// A derivation tree: one node per sub-function occurrence, with names
/// resolved to the functions they stand for.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TierDerivation {
    pub rule: TierRule,
    pub expr: FunctionExpr,
    pub signature: TierSignature,
    pub premises: Vec<TierDerivation>,
}

impl TierDerivation {
    /// Re-checks every node against its typing rule.
    pub fn validate(&self) -> Result<(), String> {
        let sig = &self.signature;
        let fail = |why: &str| Err(format!("{} at `{}`: {why}", rule_name(self.rule), self.expr));
        let expr = self.expr.strip_names();
        match expr {
            FunctionExpr::Constructor { arity, .. } => {
                if self.rule != TierRule::Constructor || !self.premises.is_empty() {
                    return fail("wrong rule or premises");
                }
                if sig.inputs.len() != *arity || sig.inputs.iter().any(|&t| t != sig.output) {
                    return fail("constructor tiers must all be equal");
                }
            }
            FunctionExpr::Proj { arity, index } => {
                if self.rule != TierRule::Projection || !self.premises.is_empty() {
                    return fail("wrong rule or premises");
                }
                if sig.inputs.len() != *arity || sig.inputs[index - 1] != sig.output {
                    return fail("projection output must have the selected input's tier");
                }
            }
            FunctionExpr::Comp { outer, inner } => {
                if self.rule != TierRule::Composition || self.premises.len() != inner.len() + 1 {
                    return fail("wrong rule or premises");
                }
                let head = &self.premises[0];
                if head.expr.strip_names() != outer.strip_names() || head.signature.output != sig.output {
                    return fail("outer premise does not match");
                }
                if head.signature.inputs.len() != inner.len() {
                    return fail("outer premise has the wrong arity");
                }
                for (i, (g, d)) in inner.iter().zip(&self.premises[1..]).enumerate() {
                    if d.expr.strip_names() != g.strip_names()
                        || d.signature.inputs != sig.inputs
                        || d.signature.output != head.signature.inputs[i]
                    {
                        return fail("inner premise does not match");
                    }
                }
            }
            FunctionExpr::Case { algebra, branches } => {
                if self.rule != TierRule::Case || self.premises.len() != branches.len() || sig.inputs.is_empty() {
                    return fail("wrong rule or premises");
                }
                let p = sig.inputs[0];
                for (i, (b, d)) in branches.iter().zip(&self.premises).enumerate() {
                    let mut want = vec![p; algebra.arity(i)];
                    want.extend_from_slice(&sig.inputs[1..]);
                    if d.expr.strip_names() != b.strip_names() || d.signature != TierSignature::new(want, sig.output) {
                        return fail("branch premise does not match");
                    }
                }
            }
            FunctionExpr::SimRec { grid, .. } => {
                let n = grid.components();
                let cells: Vec<(usize, &FunctionExpr)> = grid
                    .rows
                    .iter()
                    .enumerate()
                    .flat_map(|(i, row)| row.iter().map(move |f| (i, f)))
                    .collect();
                if self.rule != TierRule::Recursion || self.premises.len() != cells.len() || sig.inputs.is_empty() {
                    return fail("wrong rule or premises");
                }
                let (p, m) = (sig.inputs[0], sig.output);
                if p <= m {
                    return fail("recursion argument tier must exceed the result tier");
                }
                for ((i, f), d) in cells.into_iter().zip(&self.premises) {
                    let ar = grid.algebra.arity(i);
                    let mut want = vec![p; ar];
                    want.extend(std::iter::repeat_n(m, n * ar));
                    want.extend_from_slice(&sig.inputs[1..]);
                    if d.expr.strip_names() != f.strip_names() || d.signature != TierSignature::new(want, m) {
                        return fail("component premise does not match");
                    }
                }
            }
            FunctionExpr::Named { .. } => unreachable!("names are stripped"),
        }
        self.premises.iter().try_for_each(TierDerivation::validate)
    }

    /// Number of nodes in the derivation.
    pub fn size(&self) -> usize {
        1 + self.premises.iter().map(TierDerivation::size).sum::<usize>()
    }
}

fn rule_name(r: TierRule) -> &'static str {
    match r {
        TierRule::Constructor => "constructor rule",
        TierRule::Projection => "projection rule",
        TierRule::Composition => "composition rule",
        TierRule::Case => "case rule",
        TierRule::Recursion => "recursion rule",
    }
}

/// Why no derivation exists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TierRejection(pub String);

impl fmt::Display for TierRejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

struct Occurrence {
    rule: TierRule,
    expr: FunctionExpr,
    inputs: Vec<usize>,
    output: usize,
    premises: Vec<usize>,
}

struct Strict {
    above: usize,
    below: usize,
    origin: String,
}

#[derive(Default)]
struct Constraints {
    parent: Vec<usize>,
    strict: Vec<Strict>,
    occurrences: Vec<Occurrence>,
}

impl Constraints {
    fn fresh(&mut self) -> usize {
        self.parent.push(self.parent.len());
        self.parent.len() - 1
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            self.parent[ra.max(rb)] = ra.min(rb);
        }
    }

    fn generate(&mut self, f: &FunctionExpr, inputs: Vec<usize>, output: usize, path: &str) -> usize {
        let (f, path) = match f {
            FunctionExpr::Named { name, .. } => (f.strip_names(), format!("{path} > {name}")),
            _ => (f, path.to_string()),
        };
        let (rule, premises) = match f {
            FunctionExpr::Constructor { .. } => {
                for &x in &inputs {
                    self.union(x, output);
                }
                (TierRule::Constructor, Vec::new())
            }
            FunctionExpr::Proj { index, .. } => {
                self.union(inputs[index - 1], output);
                (TierRule::Projection, Vec::new())
            }
            FunctionExpr::Comp { outer, inner } => {
                let mids: Vec<usize> = inner.iter().map(|_| self.fresh()).collect();
                let mut premises = vec![self.generate(outer, mids.clone(), output, &format!("{path} > outer"))];
                for (i, (g, &mid)) in inner.iter().zip(&mids).enumerate() {
                    premises.push(self.generate(g, inputs.clone(), mid, &format!("{path} > inner {}", i + 1)));
                }
                (TierRule::Composition, premises)
            }
            FunctionExpr::Case { algebra, branches } => {
                let p = inputs[0];
                let premises = branches
                    .iter()
                    .enumerate()
                    .map(|(i, b)| {
                        let mut ins = vec![p; algebra.arity(i)];
                        ins.extend_from_slice(&inputs[1..]);
                        let c = &algebra.constructors[i].0;
                        self.generate(b, ins, output, &format!("{path} > case {c}"))
                    })
                    .collect();
                (TierRule::Case, premises)
            }
            FunctionExpr::SimRec { grid, .. } => {
                let (p, m) = (inputs[0], output);
                let n = grid.components();
                self.strict.push(Strict {
                    above: p,
                    below: m,
                    origin: path.clone(),
                });
                let mut premises = Vec::new();
                for (i, row) in grid.rows.iter().enumerate() {
                    let ar = grid.algebra.arity(i);
                    let c = &grid.algebra.constructors[i].0;
                    for (j, g) in row.iter().enumerate() {
                        let mut ins = vec![p; ar];
                        ins.extend(std::iter::repeat_n(m, n * ar));
                        ins.extend_from_slice(&inputs[1..]);
                        premises.push(self.generate(g, ins, m, &format!("{path} > rec {c} #{}", j + 1)));
                    }
                }
                (TierRule::Recursion, premises)
            }
            FunctionExpr::Named { .. } => unreachable!("names are stripped"),
        };
        self.occurrences.push(Occurrence {
            rule,
            expr: f.clone(),
            inputs,
            output,
            premises,
        });
        self.occurrences.len() - 1
    }

    /// Least tiers for all classes subject to `fixed`, or the reason none
    /// exist within `t_max`.
    fn solve(&mut self, fixed: &HashMap<usize, u32>, t_max: u32) -> Result<Vec<u32>, TierRejection> {
        let n = self.parent.len();
        let class: Vec<usize> = (0..n).map(|x| self.find(x)).collect();
        // Edges below -> above; values propagate upwards.
        let mut succ: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut indegree = vec![0usize; n];
        for s in &self.strict {
            let (a, b) = (class[s.above], class[s.below]);
            if a == b {
                return Err(TierRejection(format!(
                    "recursion at `{}` needs its recursion argument above its result tier, \
                     but the typing rules force the two tiers to be equal",
                    s.origin
                )));
            }
            succ[b].push(a);
            indegree[a] += 1;
        }
        let mut value = vec![0u32; n];
        let mut queue: Vec<usize> = (0..n).filter(|&x| class[x] == x && indegree[x] == 0).collect();
        let mut visited = 0;
        let roots = (0..n).filter(|&x| class[x] == x).count();
        while let Some(x) = queue.pop() {
            visited += 1;
            if let Some(&v) = fixed.get(&x) {
                if value[x] > v {
                    return Err(TierRejection(format!(
                        "a tier fixed at {v} would have to be at least {}",
                        value[x]
                    )));
                }
                value[x] = v;
            } else if value[x] > t_max {
                return Err(TierRejection(format!(
                    "a tier would have to be {}, above the bound {t_max}",
                    value[x]
                )));
            }
            for &y in &succ[x] {
                value[y] = value[y].max(value[x] + 1);
                indegree[y] -= 1;
                if indegree[y] == 0 {
                    queue.push(y);
                }
            }
        }
        if visited < roots {
            let cyc: Vec<&str> = self
                .strict
                .iter()
                .filter(|s| indegree[class[s.above]] > 0 && indegree[class[s.below]] > 0)
                .map(|s| s.origin.as_str())
                .collect();
            return Err(TierRejection(format!(
                "recursions at {} require a cycle of strictly increasing tiers",
                cyc.join(", ")
            )));
        }
        Ok((0..n).map(|x| value[class[x]]).collect())
    }

    fn derivation(&self, at: usize, value: &[u32]) -> TierDerivation {
        let o = &self.occurrences[at];
        TierDerivation {
            rule: o.rule,
            expr: o.expr.clone(),
            signature: TierSignature::new(o.inputs.iter().map(|&x| value[x]).collect(), value[o.output]),
            premises: o.premises.iter().map(|&p| self.derivation(p, value)).collect(),
        }
    }
}

fn build(f: &FunctionExpr) -> Result<(Constraints, usize, Vec<usize>, usize), GrsrError> {
    let arity = f.arity()?;
    let mut cs = Constraints::default();
    let inputs: Vec<usize> = (0..arity).map(|_| cs.fresh()).collect();
    let output = cs.fresh();
    let name = match f {
        FunctionExpr::Named { name, .. } => name.clone(),
        _ => "function".to_string(),
    };
    let root = cs.generate(f.strip_names(), inputs.clone(), output, &name);
    Ok((cs, root, inputs, output))
}

/// `(number of distinct recursions) + 1`.
pub fn default_t_max(f: &FunctionExpr) -> u32 {
    f.simrec_count() as u32 + 1
}

/// A derivation of `f : sig`, with intermediate tiers bounded by the larger
/// of [`default_t_max`] and the largest tier in `sig`.
pub fn check_tiers(f: &FunctionExpr, sig: &TierSignature) -> Result<TierDerivation, TierRejection> {
    check_tiers_with_bound(f, sig, default_t_max(f).max(sig.max_tier()))
}

pub fn check_tiers_with_bound(
    f: &FunctionExpr,
    sig: &TierSignature,
    t_max: u32,
) -> Result<TierDerivation, TierRejection> {
    let (mut cs, root, inputs, output) = build(f).map_err(|e| TierRejection(e.to_string()))?;
    if inputs.len() != sig.inputs.len() {
        return Err(TierRejection(format!(
            "signature has {} inputs but the function takes {}",
            sig.inputs.len(),
            inputs.len()
        )));
    }
    let mut fixed: HashMap<usize, u32> = HashMap::new();
    let pairs = inputs.iter().zip(&sig.inputs).chain([(&output, &sig.output)]);
    for (&var, &tier) in pairs {
        let c = cs.find(var);
        if let Some(&other) = fixed.get(&c) {
            if other != tier {
                return Err(TierRejection(format!(
                    "the typing rules force tiers {other} and {tier} of the signature to be equal"
                )));
            }
        }
        fixed.insert(c, tier);
    }
    let value = cs.solve(&fixed, t_max)?;
    Ok(cs.derivation(root, &value))
}

/// Every signature with tiers in `0..=t_max` that admits a derivation, in
/// lexicographic order.
pub fn infer_tiers(f: &FunctionExpr, t_max: u32) -> Vec<TierSignature> {
    let Ok((mut cs, _, inputs, output)) = build(f) else {
        return Vec::new();
    };
    if cs.solve(&HashMap::new(), u32::MAX - 1).is_err() {
        return Vec::new();
    }
    let vars: Vec<usize> = inputs.iter().chain([&output]).copied().collect();
    let mut classes: Vec<usize> = vars.iter().map(|&v| cs.find(v)).collect();
    classes.sort_unstable();
    classes.dedup();
    let mut out = Vec::new();
    let mut assignment = vec![0u32; classes.len()];
    loop {
        let fixed: HashMap<usize, u32> = classes.iter().copied().zip(assignment.iter().copied()).collect();
        if let Ok(value) = cs.solve(&fixed, t_max) {
            out.push(TierSignature::new(
                inputs.iter().map(|&x| value[x]).collect(),
                value[output],
            ));
        }
        // Next assignment in base t_max+1.
        let mut i = 0;
        loop {
            if i == assignment.len() {
                out.sort();
                return out;
            }
            if assignment[i] < t_max {
                assignment[i] += 1;
                break;
            }
            assignment[i] = 0;
            i += 1;
        }
    }
}

/// The blocking constraint when `f` has no signature at all.
pub fn explain_rejection(f: &FunctionExpr) -> Option<TierRejection> {
    match build(f) {
        Err(e) => Some(TierRejection(e.to_string())),
        Ok((mut cs, ..)) => cs.solve(&HashMap::new(), u32::MAX - 1).err(),
    }
}
