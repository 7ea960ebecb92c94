//! Term graphs, canonical trees and matching of patterns against the heap.

use std::collections::BTreeMap;

use crate::heap::{Heap, Location};
use crate::term::{Symbol, Term, TermKind, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Label {
    Symbol(Symbol),
    Var(Var),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphNode {
    pub label: Label,
    pub successors: Vec<NodeId>,
}

/// A rooted term graph whose nodes are numbered `0..len`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TermGraph {
    nodes: Vec<GraphNode>,
    root: NodeId,
}

impl TermGraph {
    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: NodeId) -> &GraphNode {
        &self.nodes[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = (NodeId, &GraphNode)> {
        self.nodes.iter().enumerate().map(|(i, n)| (NodeId(i), n))
    }

    /// The first node labelled with `x`; the only one when the term is linear.
    pub fn var_node(&self, x: &Var) -> Option<NodeId> {
        self.nodes()
            .find(|(_, n)| n.label == Label::Var(x.clone()))
            .map(|(id, _)| id)
    }

    /// The term represented at `id`.
    pub fn unfold(&self, id: NodeId) -> Term {
        // Canonical trees are numbered in preorder, so children come after
        // their parent and a reverse sweep sees them first.
        let mut built: Vec<Option<Term>> = vec![None; self.nodes.len()];
        for i in (id.0..self.nodes.len()).rev() {
            let n = &self.nodes[i];
            let t = match &n.label {
                Label::Var(x) => Term::var(x.clone()),
                Label::Symbol(f) => Term::app(
                    f.clone(),
                    n.successors
                        .iter()
                        .map(|s| built[s.0].clone().expect("successor built"))
                        .collect(),
                ),
            };
            built[i] = Some(t);
        }
        built[id.0].take().expect("node built")
    }
}

/// The tree with a fresh node for every occurrence of a subterm of `t`,
/// numbered in preorder from the root.
pub fn canonical_tree(t: &Term) -> TermGraph {
    let mut nodes: Vec<GraphNode> = Vec::new();
    let mut stack: Vec<(&Term, Option<NodeId>)> = vec![(t, None)];
    while let Some((term, parent)) = stack.pop() {
        let id = NodeId(nodes.len());
        let label = match term.kind() {
            TermKind::Var(x) => Label::Var(x.clone()),
            TermKind::App(f, _) => Label::Symbol(f.clone()),
        };
        nodes.push(GraphNode {
            label,
            successors: Vec::with_capacity(term.args().len()),
        });
        if let Some(p) = parent {
            nodes[p.0].successors.push(id);
        }
        for a in term.args().iter().rev() {
            stack.push((a, Some(id)));
        }
    }
    TermGraph {
        nodes,
        root: NodeId(0),
    }
}

/// A map from pattern-tree nodes to heap locations.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Morphism(pub BTreeMap<NodeId, Location>);

impl Morphism {
    pub fn get(&self, id: NodeId) -> Option<Location> {
        self.0.get(&id).copied()
    }

    /// Maps `tree`'s root to `root`, and every symbol node to a heap node
    /// with the same label whose children are the images of its successors.
    pub fn is_homomorphism(&self, tree: &TermGraph, heap: &Heap, root: Location) -> bool {
        if self.get(tree.root()) != Some(root) {
            return false;
        }
        tree.nodes().all(|(id, n)| {
            let Some(loc) = self.get(id) else {
                return false;
            };
            match &n.label {
                Label::Var(_) => true,
                Label::Symbol(f) => match heap.node(loc) {
                    Ok(h) => {
                        &h.label == f
                            && h.children.len() == n.successors.len()
                            && n
                                .successors
                                .iter()
                                .zip(h.children.iter())
                                .all(|(s, c)| self.get(*s) == Some(*c))
                    }
                    Err(_) => false,
                },
            }
        })
    }
}

/// A successful graph match: the morphism and the reference substitution.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphMatch {
    pub morphism: Morphism,
    pub bindings: BTreeMap<Var, Location>,
}

/// Matches a precomputed canonical tree against the heap at `root`.
///
/// A repeated variable must map to one location; on a maximally shared heap
/// that is the same as binding equal values.
pub fn match_tree(tree: &TermGraph, heap: &Heap, root: Location) -> Option<GraphMatch> {
    let mut morphism = BTreeMap::new();
    let mut bindings: BTreeMap<Var, Location> = BTreeMap::new();
    let mut stack = vec![(tree.root(), root)];
    while let Some((id, loc)) = stack.pop() {
        morphism.insert(id, loc);
        let n = tree.node(id);
        match &n.label {
            Label::Var(x) => {
                if *bindings.entry(x.clone()).or_insert(loc) != loc {
                    return None;
                }
            }
            Label::Symbol(f) => {
                let h = heap.node(loc).ok()?;
                if &h.label != f || h.children.len() != n.successors.len() {
                    return None;
                }
                stack.extend(n.successors.iter().copied().zip(h.children.iter().copied()));
            }
        }
    }
    Some(GraphMatch {
        morphism: Morphism(morphism),
        bindings,
    })
}

/// Matches `pattern` against the value stored at `root`.
pub fn match_graph(pattern: &Term, heap: &Heap, root: Location) -> Option<GraphMatch> {
    match_tree(&canonical_tree(pattern), heap, root)
}
