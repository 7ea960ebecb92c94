//! Maximally shared heaps of constructor nodes.
//!
//! Locations are handed out by a counter, so a node's children always have
//! smaller locations than the node itself. This keeps the heap acyclic by
//! construction and lets unfolding run bottom-up in location order.

use std::collections::{HashMap, HashSet};
use std::fmt::{self, Write as _};

use num_bigint::BigUint;
use thiserror::Error;

use crate::term::{Symbol, Term, TermKind};

/// A heap address.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location(pub usize);

impl Location {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ℓ{}", self.0)
    }
}

impl fmt::Debug for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ℓ{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum HeapError {
    #[error("dangling location {0}")]
    Dangling(Location),
    #[error("`{0}` is not a value")]
    NotAValue(String),
    #[error("node {at} refers to {child}, which is not an earlier location")]
    NotTopological { at: Location, child: Location },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HeapNode {
    pub label: Symbol,
    pub children: Box<[Location]>,
}

/// A multi-rooted acyclic term graph over constructors, addressed by
/// locations, together with the reverse index `(label, children) -> location`.
#[derive(Clone, Debug, Default)]
pub struct Heap {
    nodes: Vec<HeapNode>,
    index: HashMap<HeapNode, Location>,
}

impl PartialEq for Heap {
    fn eq(&self, other: &Heap) -> bool {
        self.nodes == other.nodes
    }
}

impl Eq for Heap {}

impl Heap {
    pub fn new() -> Self {
        Heap::default()
    }

    /// Builds a heap from raw entries, bypassing `merge`. Entry `i` gets
    /// location `ℓi`; children must point at earlier entries. Duplicate
    /// entries are kept, so the result need not be maximally shared.
    pub fn from_nodes_unchecked(
        entries: impl IntoIterator<Item = (Symbol, Vec<Location>)>,
    ) -> Result<Heap, HeapError> {
        let mut heap = Heap::new();
        for (label, children) in entries {
            let at = Location(heap.nodes.len());
            if let Some(&child) = children.iter().find(|c| c.0 >= at.0) {
                return Err(HeapError::NotTopological { at, child });
            }
            let node = HeapNode {
                label,
                children: children.into_boxed_slice(),
            };
            heap.index.entry(node.clone()).or_insert(at);
            heap.nodes.push(node);
        }
        Ok(heap)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, loc: Location) -> bool {
        loc.0 < self.nodes.len()
    }

    pub fn node(&self, loc: Location) -> Result<&HeapNode, HeapError> {
        self.nodes.get(loc.0).ok_or(HeapError::Dangling(loc))
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Location, &HeapNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (Location(i), n))
    }

    /// The location holding `c(args)`, if present.
    pub fn lookup(&self, label: &Symbol, args: &[Location]) -> Option<Location> {
        let key = HeapNode {
            label: label.clone(),
            children: args.into(),
        };
        self.index.get(&key).copied()
    }

    /// Returns the location of `c(args)`, adding a node at the next free
    /// location if no such node exists yet.
    pub fn merge(&mut self, label: &Symbol, args: &[Location]) -> Result<Location, HeapError> {
        if let Some(&bad) = args.iter().find(|l| !self.contains(**l)) {
            return Err(HeapError::Dangling(bad));
        }
        let key = HeapNode {
            label: label.clone(),
            children: args.into(),
        };
        if let Some(&loc) = self.index.get(&key) {
            return Ok(loc);
        }
        let loc = Location(self.nodes.len());
        self.nodes.push(key.clone());
        self.index.insert(key, loc);
        Ok(loc)
    }

    /// Stores a value bottom-up through `merge`.
    pub fn store_value(&mut self, v: &Term) -> Result<Location, HeapError> {
        v.fold(|t, kids: Vec<Result<Location, HeapError>>| match t.kind() {
            TermKind::Var(x) => Err(HeapError::NotAValue(x.to_string())),
            TermKind::App(c, _) => {
                let kids = kids.into_iter().collect::<Result<Vec<_>, _>>()?;
                self.merge(c, &kids)
            }
        })
    }

    /// Locations reachable from `roots`, in increasing order.
    pub fn reachable(&self, roots: &[Location]) -> Result<Vec<Location>, HeapError> {
        let mut seen = HashSet::new();
        let mut stack: Vec<Location> = roots.to_vec();
        while let Some(l) = stack.pop() {
            if !seen.insert(l) {
                continue;
            }
            stack.extend(self.node(l)?.children.iter().copied());
        }
        let mut out: Vec<Location> = seen.into_iter().collect();
        out.sort();
        Ok(out)
    }

    /// Number of nodes of the sub-DAG reachable from `root`.
    pub fn dag_size(&self, root: Location) -> Result<usize, HeapError> {
        Ok(self.reachable(&[root])?.len())
    }

    /// The value stored at `loc`. Shared nodes become shared subterms, so
    /// the result takes memory proportional to the sub-DAG.
    pub fn unfold(&self, loc: Location) -> Result<Term, HeapError> {
        let order = self.reachable(&[loc])?;
        let mut built: HashMap<Location, Term> = HashMap::with_capacity(order.len());
        for l in order {
            let node = &self.nodes[l.0];
            let args = node.children.iter().map(|c| built[c].clone()).collect();
            built.insert(l, Term::app(node.label.clone(), args));
        }
        Ok(built.remove(&loc).expect("root is reachable"))
    }

    /// Size of the unfolding of `loc`, computed on the DAG.
    pub fn unfolded_size(&self, loc: Location) -> Result<BigUint, HeapError> {
        let order = self.reachable(&[loc])?;
        let mut sizes: HashMap<Location, BigUint> = HashMap::with_capacity(order.len());
        for l in order {
            let mut s = BigUint::from(1u32);
            for c in self.nodes[l.0].children.iter() {
                s += &sizes[c];
            }
            sizes.insert(l, s);
        }
        Ok(sizes.remove(&loc).expect("root is reachable"))
    }

    /// Whether no two locations carry the same label and children.
    pub fn is_maximally_shared(&self) -> bool {
        let mut seen = HashSet::with_capacity(self.nodes.len());
        self.nodes.iter().all(|n| seen.insert(n))
    }

    /// Graphviz rendering of the whole heap.
    pub fn to_dot(&self) -> String {
        let all: Vec<Location> = (0..self.nodes.len()).map(Location).collect();
        self.dot_of(&all)
    }

    /// Graphviz rendering of the sub-DAG reachable from `root`.
    pub fn to_dot_from(&self, root: Location) -> Result<String, HeapError> {
        Ok(self.dot_of(&self.reachable(&[root])?))
    }

    fn dot_of(&self, locs: &[Location]) -> String {
        let mut out = String::from("digraph heap {\n  node [shape=box];\n");
        for &l in locs {
            let n = &self.nodes[l.0];
            let _ = writeln!(out, "  n{} [label=\"{}: {}\"];", l.0, l, n.label);
        }
        for &l in locs {
            for (i, c) in self.nodes[l.0].children.iter().enumerate() {
                let _ = writeln!(out, "  n{} -> n{} [label=\"{}\"];", l.0, c.0, i + 1);
            }
        }
        out.push_str("}\n");
        out
    }
}
