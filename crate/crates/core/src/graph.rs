//! Weighted directed graphs and the structural facts the consensus results
//! depend on.
//!
//! Convention: `a[i][j] > 0` iff there is an edge from node `j` to node `i`,
//! i.e. agent `i` listens to agent `j`. Node indices are zero-based.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

/// Weights below this are dropped when building a graph.
pub const DEFAULT_WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph must have at least one node")]
    Empty,
    #[error("adjacency matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("node index {index} out of range for {n} nodes")]
    NodeOutOfRange { index: usize, n: usize },
    #[error("self-loop at node {0}")]
    SelfLoop(usize),
    #[error("edge weight {weight} from {from} to {to} must be finite and nonnegative")]
    BadWeight { from: usize, to: usize, weight: f64 },
    #[error("graph is not strongly connected")]
    NotStronglyConnected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Digraph {
    adjacency: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphFacts {
    /// Nodes with a directed path to every other node.
    pub roots: Vec<usize>,
    pub strongly_connected: bool,
    pub weakly_connected: bool,
    pub has_spanning_tree: bool,
    pub balanced: bool,
    pub is_undirected: bool,
    pub perron_left: Option<Vec<f64>>,
}

impl Digraph {
    pub fn from_adjacency(adjacency: DMatrix<f64>) -> Result<Self, GraphError> {
        Self::from_adjacency_with_tol(adjacency, DEFAULT_WEIGHT_TOL)
    }

    pub fn from_adjacency_with_tol(mut adjacency: DMatrix<f64>, weight_tol: f64) -> Result<Self, GraphError> {
        let (rows, cols) = adjacency.shape();
        if rows != cols {
            return Err(GraphError::NotSquare { rows, cols });
        }
        if rows == 0 {
            return Err(GraphError::Empty);
        }
        for i in 0..rows {
            for j in 0..cols {
                let w = adjacency[(i, j)];
                if !w.is_finite() || w < 0.0 {
                    return Err(GraphError::BadWeight {
                        from: j,
                        to: i,
                        weight: w,
                    });
                }
                if i == j && w > weight_tol {
                    return Err(GraphError::SelfLoop(i));
                }
                if w <= weight_tol {
                    adjacency[(i, j)] = 0.0;
                }
            }
        }
        Ok(Digraph { adjacency })
    }

    /// Builds a graph from `(from, to, weight)` triples. Repeated edges add up.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        if n == 0 {
            return Err(GraphError::Empty);
        }
        let mut a = DMatrix::zeros(n, n);
        for &(from, to, w) in edges {
            for index in [from, to] {
                if index >= n {
                    return Err(GraphError::NodeOutOfRange { index, n });
                }
            }
            if from == to {
                return Err(GraphError::SelfLoop(from));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(GraphError::BadWeight { from, to, weight: w });
            }
            a[(to, from)] += w;
        }
        Self::from_adjacency(a)
    }

    /// Undirected graph: every pair gets edges in both directions.
    pub fn undirected(n: usize, pairs: &[(usize, usize, f64)]) -> Result<Self, GraphError> {
        let edges: Vec<_> = pairs.iter().flat_map(|&(u, v, w)| [(u, v, w), (v, u, w)]).collect();
        Self::from_edges(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.adjacency.nrows()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    /// Weight `a_ij` of the edge from `j` to `i`.
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.adjacency[(to, from)] > 0.0
    }

    /// All edges as `(from, to, weight)`, ordered by receiving node.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let n = self.n();
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                let w = self.adjacency[(i, j)];
                if w > 0.0 {
                    out.push((j, i, w));
                }
            }
        }
        out
    }

    /// In-neighbours of `i` with weights.
    pub fn in_neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.n())
            .map(move |j| (j, self.adjacency[(i, j)]))
            .filter(|&(_, w)| w > 0.0)
    }

    pub fn laplacian(&self) -> DMatrix<f64> {
        let n = self.n();
        let mut l = -self.adjacency.clone();
        for i in 0..n {
            let deg: f64 = self.adjacency.row(i).iter().sum();
            l[(i, i)] = deg;
        }
        l
    }

    pub fn is_undirected(&self) -> bool {
        self.adjacency == self.adjacency.transpose()
    }

    fn out_adjacency(&self) -> Vec<Vec<usize>> {
        let n = self.n();
        let mut out = vec![Vec::new(); n];
        for (from, to, _) in self.edges() {
            out[from].push(to);
        }
        out
    }

    pub fn facts(&self) -> GraphFacts {
        let n = self.n();
        let out = self.out_adjacency();
        let comps = tarjan_scc(&out);
        let mut comp_of = vec![0; n];
        for (c, nodes) in comps.iter().enumerate() {
            for &v in nodes {
                comp_of[v] = c;
            }
        }
        let mut has_incoming = vec![false; comps.len()];
        for (from, targets) in out.iter().enumerate() {
            for &to in targets {
                if comp_of[from] != comp_of[to] {
                    has_incoming[comp_of[to]] = true;
                }
            }
        }
        let sources: Vec<usize> = (0..comps.len()).filter(|&c| !has_incoming[c]).collect();
        let roots = if sources.len() == 1 {
            let mut r = comps[sources[0]].clone();
            r.sort_unstable();
            r
        } else {
            Vec::new()
        };

        let strongly_connected = comps.len() == 1;
        let l = self.laplacian();
        let col_sums = l.row_sum();
        let scale = 1.0 + l.amax();
        let balanced = col_sums.iter().all(|v| v.abs() <= 1e-12 * scale);

        GraphFacts {
            has_spanning_tree: !roots.is_empty(),
            roots,
            strongly_connected,
            weakly_connected: self.weakly_connected(),
            balanced,
            is_undirected: self.is_undirected(),
            perron_left: if strongly_connected {
                self.perron_left_vector().ok()
            } else {
                None
            },
        }
    }

    fn weakly_connected(&self) -> bool {
        let n = self.n();
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for (u, s) in seen.iter_mut().enumerate() {
                if !*s && (self.adjacency[(v, u)] > 0.0 || self.adjacency[(u, v)] > 0.0) {
                    *s = true;
                    stack.push(u);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Positive left null vector of the Laplacian, scaled so its largest
    /// entry is one.
    pub fn perron_left_vector(&self) -> Result<Vec<f64>, GraphError> {
        let n = self.n();
        if tarjan_scc(&self.out_adjacency()).len() != 1 {
            return Err(GraphError::NotStronglyConnected);
        }
        if n == 1 {
            return Ok(vec![1.0]);
        }
        let l = self.laplacian();
        // sigma^T L = 0  <=>  L^T sigma = 0. Pin sigma_0 = 1 and drop the
        // first equation (all equations sum to zero).
        let m = n - 1;
        let mut a = DMatrix::zeros(m, m);
        let mut rhs = DVector::zeros(m);
        for (eq, j) in (1..n).enumerate() {
            for (unk, i) in (1..n).enumerate() {
                a[(eq, unk)] = l[(i, j)];
            }
            rhs[eq] = -l[(0, j)];
        }
        let sol = a.lu().solve(&rhs).ok_or(GraphError::NotStronglyConnected)?;
        let mut sigma = vec![1.0];
        sigma.extend(sol.iter().copied());
        let max = sigma.iter().cloned().fold(f64::MIN, f64::max);
        sigma.iter_mut().for_each(|v| *v /= max);
        if sigma.iter().any(|&v| v <= 0.0) {
            return Err(GraphError::NotStronglyConnected);
        }
        Ok(sigma)
    }
}

/// Strongly connected components by an iterative Tarjan walk. Components
/// come out in reverse topological order of the condensation.
pub fn tarjan_scc(out: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = out.len();
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut comps = Vec::new();
    let mut counter = 0;
    // (node, next child position)
    let mut call: Vec<(usize, usize)> = Vec::new();

    for start in 0..n {
        if index[start] != UNVISITED {
            continue;
        }
        call.push((start, 0));
        while let Some(&(v, child)) = call.last() {
            if child == 0 && index[v] == UNVISITED {
                index[v] = counter;
                low[v] = counter;
                counter += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            if let Some(&w) = out[v].get(child) {
                if let Some(top) = call.last_mut() {
                    top.1 += 1;
                }
                if index[w] == UNVISITED {
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                comps.push(comp);
            }
        }
    }
    comps
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn fig1a() -> Digraph {
        Digraph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
    }

    fn fig1b() -> Digraph {
        Digraph::from_edges(2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap()
    }

    fn triangle() -> Digraph {
        Digraph::undirected(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    fn cycle3() -> Digraph {
        Digraph::from_edges(3, &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    #[test]
    fn laplacian_examples() {
        assert_eq!(fig1a().laplacian(), dmatrix![0.0, 0.0; -1.0, 1.0]);
        assert_eq!(
            triangle().laplacian(),
            dmatrix![2.0, -1.0, -1.0; -1.0, 2.0, -1.0; -1.0, -1.0, 2.0]
        );
        let empty = Digraph::from_edges(3, &[]).unwrap();
        assert_eq!(empty.laplacian(), DMatrix::zeros(3, 3));
    }

    #[test]
    fn facts_examples() {
        let f = fig1a().facts();
        assert_eq!(f.roots, vec![0]);
        assert!(f.has_spanning_tree && !f.strongly_connected);
        assert!(f.perron_left.is_none());

        let f = fig1b().facts();
        assert_eq!(f.roots, vec![0, 1]);
        assert!(f.strongly_connected);

        let f = cycle3().facts();
        assert_eq!(f.roots, vec![0, 1, 2]);
        assert!(f.strongly_connected && f.balanced && !f.is_undirected);
    }

    #[test]
    fn two_sources_have_no_roots() {
        // 0 -> 2 <- 1
        let g = Digraph::from_edges(3, &[(0, 2, 1.0), (1, 2, 1.0)]).unwrap();
        let f = g.facts();
        assert!(f.roots.is_empty());
        assert!(!f.has_spanning_tree);
        assert!(f.weakly_connected);
        let g = Digraph::from_edges(3, &[(0, 1, 1.0)]).unwrap();
        assert!(!g.facts().weakly_connected);
    }

    #[test]
    fn perron_examples() {
        assert_eq!(triangle().perron_left_vector().unwrap(), vec![1.0, 1.0, 1.0]);
        assert_eq!(cycle3().perron_left_vector().unwrap(), vec![1.0, 1.0, 1.0]);
        // a12 = 2 (edge 2 -> 1), a21 = 1 (edge 1 -> 2)
        let g = Digraph::from_edges(2, &[(1, 0, 2.0), (0, 1, 1.0)]).unwrap();
        assert_eq!(g.laplacian(), dmatrix![2.0, -2.0; -1.0, 1.0]);
        let s = g.perron_left_vector().unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 1.0).abs() < 1e-15);
        assert_eq!(fig1a().perron_left_vector(), Err(GraphError::NotStronglyConnected));
    }

    #[test]
    fn construction_errors() {
        assert_eq!(Digraph::from_edges(2, &[(0, 0, 1.0)]), Err(GraphError::SelfLoop(0)));
        assert!(matches!(
            Digraph::from_edges(2, &[(0, 5, 1.0)]),
            Err(GraphError::NodeOutOfRange { index: 5, n: 2 })
        ));
        assert!(matches!(
            Digraph::from_edges(2, &[(0, 1, -1.0)]),
            Err(GraphError::BadWeight { .. })
        ));
        assert_eq!(Digraph::from_edges(0, &[]), Err(GraphError::Empty));
    }

    #[test]
    fn tiny_weights_are_dropped() {
        let g = Digraph::from_edges(2, &[(0, 1, 1e-14)]).unwrap();
        assert!(!g.has_edge(0, 1));
        assert!(g.edges().is_empty());
    }

    #[test]
    fn deep_path_does_not_overflow() {
        let n = 100_000;
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
        let mut out = vec![Vec::new(); n];
        for &(a, b, _) in &edges {
            out[a].push(b);
        }
        assert_eq!(tarjan_scc(&out).len(), n);
    }
}
