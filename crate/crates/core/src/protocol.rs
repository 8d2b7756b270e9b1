//! The consensus protocol `x_i' = f_i(sum_j a_ij g_ij(x_j - x_i))`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::graph::Digraph;
use crate::nonlin::PiecewiseFn;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("expected {expected} node functions, got {got}")]
    NodeFnCount { expected: usize, got: usize },
    #[error("edge function g_{{{i},{j}}} given but there is no edge from {j} to {i}")]
    NotAnEdge { i: usize, j: usize },
}

/// Which special case of the general protocol a scenario falls into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    /// Every `g_ij` is the identity: `x' = f(-L x)`.
    Node,
    /// Every `f_i` is the identity and some `g_ij` is not.
    Edge,
    /// Nonlinear functions on both nodes and edges.
    Combined,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    graph: Digraph,
    node_fns: Vec<PiecewiseFn>,
    /// Keyed by `(i, j)`: the function agent `i` applies to `x_j - x_i`.
    /// Missing entries are the identity.
    edge_fns: BTreeMap<(usize, usize), PiecewiseFn>,
    identity: PiecewiseFn,
}

impl Protocol {
    pub fn new(
        graph: Digraph,
        node_fns: Vec<PiecewiseFn>,
        edge_fns: BTreeMap<(usize, usize), PiecewiseFn>,
    ) -> Result<Self, ProtocolError> {
        if node_fns.len() != graph.n() {
            return Err(ProtocolError::NodeFnCount {
                expected: graph.n(),
                got: node_fns.len(),
            });
        }
        for &(i, j) in edge_fns.keys() {
            if i >= graph.n() || j >= graph.n() || graph.weight(i, j) <= 0.0 {
                return Err(ProtocolError::NotAnEdge { i, j });
            }
        }
        Ok(Protocol {
            graph,
            node_fns,
            edge_fns,
            identity: PiecewiseFn::identity(),
        })
    }

    /// `x' = f(-L x)`.
    pub fn node(graph: Digraph, node_fns: Vec<PiecewiseFn>) -> Result<Self, ProtocolError> {
        Self::new(graph, node_fns, BTreeMap::new())
    }

    /// `x_i' = sum_j a_ij g_ij(x_j - x_i)`.
    pub fn edge(graph: Digraph, edge_fns: BTreeMap<(usize, usize), PiecewiseFn>) -> Result<Self, ProtocolError> {
        let n = graph.n();
        Self::new(graph, vec![PiecewiseFn::identity(); n], edge_fns)
    }

    /// Edge protocol with the same function on every edge.
    pub fn uniform_edge(graph: Digraph, g: PiecewiseFn) -> Result<Self, ProtocolError> {
        let edge_fns = graph
            .edges()
            .into_iter()
            .map(|(from, to, _)| ((to, from), g.clone()))
            .collect();
        Self::edge(graph, edge_fns)
    }

    pub fn graph(&self) -> &Digraph {
        &self.graph
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn node_fn(&self, i: usize) -> &PiecewiseFn {
        &self.node_fns[i]
    }

    pub fn node_fns(&self) -> &[PiecewiseFn] {
        &self.node_fns
    }

    /// `g_ij`, the identity unless set explicitly.
    pub fn edge_fn(&self, i: usize, j: usize) -> &PiecewiseFn {
        self.edge_fns.get(&(i, j)).unwrap_or(&self.identity)
    }

    /// Explicitly configured edge functions.
    pub fn explicit_edge_fns(&self) -> &BTreeMap<(usize, usize), PiecewiseFn> {
        &self.edge_fns
    }

    pub fn kind(&self) -> ProtocolKind {
        let edges_identity = self.edge_fns.values().all(PiecewiseFn::is_identity);
        let nodes_identity = self.node_fns.iter().all(PiecewiseFn::is_identity);
        if edges_identity {
            ProtocolKind::Node
        } else if nodes_identity {
            ProtocolKind::Edge
        } else {
            ProtocolKind::Combined
        }
    }

    /// Every function in the protocol: node functions first, then one entry
    /// per edge.
    pub fn all_fns(&self) -> impl Iterator<Item = &PiecewiseFn> {
        let edges = self.graph.edges();
        self.node_fns
            .iter()
            .chain(edges.into_iter().map(move |(from, to, _)| self.edge_fn(to, from)))
    }

    /// Inner sum of agent `i` with the functions' point values.
    pub fn inner_sum(&self, i: usize, x: &[f64]) -> f64 {
        self.graph
            .in_neighbors(i)
            .map(|(j, w)| w * self.edge_fn(i, j).eval(x[j] - x[i]))
            .sum()
    }

    /// Right-hand side `h(x)` evaluated pointwise.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n())
            .map(|i| self.node_fns[i].eval(self.inner_sum(i, x)))
            .collect()
    }

    /// Right-hand side with every function replaced by its boundary-layer
    /// approximation of width `eps`.
    pub fn eval_mollified(&self, eps: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self
                .graph
                .in_neighbors(i)
                .map(|(j, w)| {
                    let g = self.edge_fn(i, j);
                    let y = x[j] - x[i];
                    if g.is_identity() {
                        w * y
                    } else {
                        w * g.mollified(eps).eval(y)
                    }
                })
                .sum();
            let f = &self.node_fns[i];
            *o = if f.is_identity() { s } else { f.mollified(eps).eval(s) };
        }
    }
}
