//! Exact Filippov set-valued maps for right-hand sides built from scalar
//! piecewise functions of linear combinations of the state.
//!
//! Every row `k` contributes `weight_k * phi_k(c_k . x + offset_k)` to the
//! sum of agent `target_k`. Near a point where some rows sit on a breakpoint,
//! the right-hand side is piecewise constant on the cones cut out by the
//! hyperplanes `c_k . d = 0`, and the Filippov set is the convex hull of the
//! one-sided values over the cones that are actually nonempty.

use thiserror::Error;

use crate::graph::Digraph;
use crate::lp::{lp_feasible, Constraint, LinearProgram, LpOutcome, Relation, VarBounds};
use crate::nonlin::{Interval, PiecewiseFn, BREAKPOINT_TOL};
use crate::protocol::{Protocol, ProtocolKind};

/// Largest state dimension handled by the exact construction.
pub const MAX_DIM: usize = 12;
/// Largest number of simultaneously active rows (2^16 sign patterns).
pub const MAX_ACTIVE: usize = 16;
/// Default tolerance for hull membership.
pub const HULL_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilippovError {
    #[error("state has dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("exact Filippov set out of budget: dimension {dim}, {active} active surfaces (limits {MAX_DIM} and {MAX_ACTIVE})")]
    BudgetExceeded { dim: usize, active: usize },
    #[error("agent {agent}: node function is discontinuous at a value reached through a discontinuous edge function")]
    NestedDiscontinuity { agent: usize },
    #[error("agent {agent}: node function is discontinuous on a surface that is not locally a hyperplane")]
    NonAffineSurface { agent: usize },
}

/// One scalar nonlinearity applied to an affine function of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub func: PiecewiseFn,
    pub coeffs: Vec<f64>,
    pub offset: f64,
    pub target: usize,
    pub weight: f64,
}

impl Row {
    pub fn arg(&self, x: &[f64]) -> f64 {
        dot(&self.coeffs, x) + self.offset
    }

    fn is_frozen(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }
}

/// `h_i(x) = outer_i(sum_{k: target_k = i} weight_k phi_k(c_k . x + offset_k))`,
/// with `outer_i` the identity when absent.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearArgumentStructure {
    n: usize,
    rows: Vec<Row>,
    outer: Vec<Option<PiecewiseFn>>,
}

impl LinearArgumentStructure {
    pub fn new(n: usize, rows: Vec<Row>, outer: Vec<Option<PiecewiseFn>>) -> Self {
        debug_assert_eq!(outer.len(), n);
        debug_assert!(rows.iter().all(|r| r.coeffs.len() == n && r.target < n));
        LinearArgumentStructure { n, rows, outer }
    }

    /// Node protocol `x' = f(-L x)`: one row per agent with `c = -L_i`.
    pub fn node(graph: &Digraph, fns: &[PiecewiseFn]) -> Self {
        let n = graph.n();
        let lap = graph.laplacian();
        let rows = (0..n)
            .map(|i| Row {
                func: fns[i].clone(),
                coeffs: (0..n).map(|j| -lap[(i, j)]).collect(),
                offset: 0.0,
                target: i,
                weight: 1.0,
            })
            .collect();
        LinearArgumentStructure::new(n, rows, vec![None; n])
    }

    /// Edge protocol: one row per edge `j -> i` with `c = e_j - e_i`.
    pub fn edge(protocol: &Protocol) -> Self {
        let n = protocol.n();
        let mut rows = Vec::new();
        for i in 0..n {
            rows.extend(edge_rows(protocol, i));
        }
        LinearArgumentStructure::new(n, rows, vec![None; n])
    }

    /// Structure describing the protocol on a neighbourhood of `x`.
    ///
    /// Pure node and edge protocols get their global structure. With
    /// nonlinearities on both levels, an agent whose edge functions have a
    /// jump at `x` keeps its edge rows and applies `f_i` on the outside;
    /// otherwise its inner sum is linearized at `x` and `f_i` becomes a
    /// single row.
    pub fn at(protocol: &Protocol, x: &[f64]) -> Result<Self, FilippovError> {
        check_dim(protocol.n(), x)?;
        match protocol.kind() {
            ProtocolKind::Node => Ok(Self::node(protocol.graph(), protocol.node_fns())),
            ProtocolKind::Edge => Ok(Self::edge(protocol)),
            ProtocolKind::Combined => Self::combined(protocol, x),
        }
    }

    fn combined(protocol: &Protocol, x: &[f64]) -> Result<Self, FilippovError> {
        let n = protocol.n();
        let graph = protocol.graph();
        let mut rows = Vec::new();
        let mut outer = vec![None; n];
        for i in 0..n {
            let f = protocol.node_fn(i);
            let inner = edge_rows(protocol, i);
            if f.is_identity() {
                rows.extend(inner);
                continue;
            }
            let inner_jumps = inner.iter().any(|r| r.func.jump_near(r.arg(x), BREAKPOINT_TOL));
            if inner_jumps {
                rows.extend(inner);
                outer[i] = Some(f.clone());
                continue;
            }
            let s: f64 = inner.iter().map(|r| r.weight * r.func.continuous_value(r.arg(x))).sum();
            let mut coeffs = vec![0.0; n];
            let mut affine = true;
            for (j, w) in graph.in_neighbors(i) {
                match local_slope(protocol.edge_fn(i, j), x[j] - x[i]) {
                    Some(slope) => {
                        coeffs[j] += w * slope;
                        coeffs[i] -= w * slope;
                    }
                    None => affine = false,
                }
            }
            if !affine {
                if f.nearest_breakpoint(s, BREAKPOINT_TOL).is_some() {
                    return Err(FilippovError::NonAffineSurface { agent: i });
                }
                // f_i is smooth near s: only the value matters here
                coeffs.iter_mut().for_each(|c| *c = 0.0);
            }
            rows.push(Row {
                func: f.clone(),
                offset: s - dot(&coeffs, x),
                coeffs,
                target: i,
                weight: 1.0,
            });
        }
        Ok(LinearArgumentStructure::new(n, rows, outer))
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> &[Row] {
        &self.rows
    }

    /// Pointwise value with the functions' point values.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut sums = vec![0.0; self.n];
        for r in &self.rows {
            sums[r.target] += r.weight * r.func.eval(r.arg(x));
        }
        self.apply_outer_pointwise(sums)
    }

    fn apply_outer_pointwise(&self, mut sums: Vec<f64>) -> Vec<f64> {
        for (s, f) in sums.iter_mut().zip(&self.outer) {
            if let Some(f) = f {
                *s = f.eval(*s);
            }
        }
        sums
    }

    /// Rows whose argument is within `tol` of a breakpoint.
    pub fn active_rows(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.func.nearest_breakpoint(r.arg(x), tol).is_some())
            .map(|(k, _)| k)
            .collect()
    }

    /// True if some direction `d` in the unit box has `sign_k c_k . d > 0`
    /// for every listed row (with the LP margin).
    pub fn pattern_feasible(&self, rows: &[usize], positive: &[bool]) -> bool {
        let constraints: Vec<Constraint> = rows
            .iter()
            .zip(positive)
            .map(|(&k, &pos)| {
                let s = if pos { 1.0 } else { -1.0 };
                let coeffs = self.rows[k].coeffs.iter().map(|c| s * c).collect();
                Constraint::new(coeffs, Relation::Gt, 0.0)
            })
            .collect();
        lp_feasible(&constraints, &vec![(-1.0, 1.0); self.n]).is_some()
    }

    /// Exact Filippov set at `x`.
    pub fn filippov_set(&self, x: &[f64]) -> Result<FilippovPolytope, FilippovError> {
        self.filippov_set_with_tol(x, BREAKPOINT_TOL)
    }

    /// Filippov set with rows counted as active within `tol` of a
    /// breakpoint.
    pub fn filippov_set_with_tol(&self, x: &[f64], tol: f64) -> Result<FilippovPolytope, FilippovError> {
        check_dim(self.n, x)?;
        let active = self.active_rows(x, tol);
        let (frozen, moving): (Vec<usize>, Vec<usize>) = active.into_iter().partition(|&k| self.rows[k].is_frozen());
        if self.n > MAX_DIM || moving.len() > MAX_ACTIVE {
            return Err(FilippovError::BudgetExceeded {
                dim: self.n,
                active: moving.len(),
            });
        }

        // Values every vertex shares.
        let mut base = vec![0.0; self.n];
        let mut limits = Vec::with_capacity(moving.len());
        for (k, r) in self.rows.iter().enumerate() {
            let y = r.arg(x);
            if moving.contains(&k) {
                let b = r.func.nearest_breakpoint(y, tol).unwrap();
                limits.push(r.func.limits_at_breakpoint(b));
            } else if frozen.contains(&k) {
                base[r.target] += r.weight * r.func.eval(y);
            } else {
                base[r.target] += r.weight * r.func.continuous_value(y);
            }
        }

        let m = moving.len();
        let mut vertices: Vec<Vec<f64>> = Vec::new();
        let mut signs = vec![false; m];
        for mask in 0u32..(1u32 << m) {
            for (bit, s) in signs.iter_mut().enumerate() {
                *s = mask & (1 << bit) != 0;
            }
            if m > 0 && !self.pattern_feasible(&moving, &signs) {
                continue;
            }
            let mut sums = base.clone();
            for ((&k, &pos), &(l, r)) in moving.iter().zip(&signs).zip(&limits) {
                let row = &self.rows[k];
                sums[row.target] += row.weight * if pos { r } else { l };
            }
            let v = self.apply_outer_limits(sums)?;
            if !vertices.contains(&v) {
                vertices.push(v);
            }
        }
        if vertices.is_empty() {
            // every row with nonzero coefficients leaves some open cone, so
            // this only happens through LP round-off; fall back to the value
            vertices.push(self.eval(x));
        }
        Ok(FilippovPolytope { dim: self.n, vertices })
    }

    fn apply_outer_limits(&self, mut sums: Vec<f64>) -> Result<Vec<f64>, FilippovError> {
        for (i, (s, f)) in sums.iter_mut().zip(&self.outer).enumerate() {
            if let Some(f) = f {
                if f.jump_near(*s, BREAKPOINT_TOL) {
                    return Err(FilippovError::NestedDiscontinuity { agent: i });
                }
                *s = f.continuous_value(*s);
            }
        }
        Ok(sums)
    }

    /// Product of the per-agent Filippov intervals, a box that contains the
    /// exact set. Only defined when no agent has an outer function.
    pub fn componentwise_bound(&self, x: &[f64]) -> Option<Vec<Interval>> {
        if self.outer.iter().any(Option::is_some) {
            return None;
        }
        let mut out = vec![Interval::point(0.0); self.n];
        for r in &self.rows {
            let y = r.arg(x);
            let part = if r.is_frozen() {
                Interval::point(r.func.eval(y))
            } else {
                r.func.scalar_filippov(y)
            };
            out[r.target] = out[r.target].add_scaled(r.weight, &part);
        }
        Some(out)
    }
}

fn edge_rows(protocol: &Protocol, i: usize) -> Vec<Row> {
    let n = protocol.n();
    protocol
        .graph()
        .in_neighbors(i)
        .map(|(j, w)| {
            let mut coeffs = vec![0.0; n];
            coeffs[j] = 1.0;
            coeffs[i] = -1.0;
            Row {
                func: protocol.edge_fn(i, j).clone(),
                coeffs,
                offset: 0.0,
                target: i,
                weight: w,
            }
        })
        .collect()
}

/// Slope of `f` at `y` when `f` is affine on a neighbourhood of `y`.
fn local_slope(f: &PiecewiseFn, y: f64) -> Option<f64> {
    let segs = f.segments();
    match f.nearest_breakpoint(y, BREAKPOINT_TOL) {
        Some(k) => {
            if f.jump_near(y, BREAKPOINT_TOL) {
                return None;
            }
            let b = f.breakpoints()[k];
            let left = segs[k].local_slope(b, BREAKPOINT_TOL)?;
            let right = segs[k + 1].local_slope(b, BREAKPOINT_TOL)?;
            (left == right).then_some(left)
        }
        None => segs[f.segment_index(y)].local_slope(y, BREAKPOINT_TOL),
    }
}

fn check_dim(expected: usize, x: &[f64]) -> Result<(), FilippovError> {
    if x.len() != expected {
        return Err(FilippovError::DimensionMismatch { expected, got: x.len() });
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

/// Filippov set of the protocol's right-hand side at `x`.
pub fn filippov_set(protocol: &Protocol, x: &[f64]) -> Result<FilippovPolytope, FilippovError> {
    LinearArgumentStructure::at(protocol, x)?.filippov_set(x)
}

/// Convex hull of finitely many vertices.
#[derive(Debug, Clone, PartialEq)]
pub struct FilippovPolytope {
    pub dim: usize,
    pub vertices: Vec<Vec<f64>>,
}

impl FilippovPolytope {
    pub fn new(dim: usize, vertices: Vec<Vec<f64>>) -> Self {
        debug_assert!(vertices.iter().all(|v| v.len() == dim));
        FilippovPolytope { dim, vertices }
    }

    pub fn is_singleton(&self) -> bool {
        self.vertices.len() == 1
    }

    /// L1 distance from `p` to the hull.
    pub fn hull_residual(&self, p: &[f64]) -> f64 {
        let m = self.vertices.len();
        let d = self.dim;
        // lambda (m), positive slack (d), negative slack (d)
        let mut lp = LinearProgram::new(m + 2 * d);
        lp.objective = (0..m + 2 * d).map(|k| if k < m { 0.0 } else { 1.0 }).collect();
        for i in 0..d {
            let mut row = vec![0.0; m + 2 * d];
            for (k, v) in self.vertices.iter().enumerate() {
                row[k] = v[i];
            }
            row[m + i] = 1.0;
            row[m + d + i] = -1.0;
            lp.constrain(row, Relation::Eq, p[i]);
        }
        let mut sum = vec![0.0; m + 2 * d];
        sum[..m].iter_mut().for_each(|c| *c = 1.0);
        lp.constrain(sum, Relation::Eq, 1.0);
        match lp.solve() {
            LpOutcome::Optimal { value, .. } => value.max(0.0),
            _ => f64::INFINITY,
        }
    }

    pub fn contains_within(&self, p: &[f64], tol: f64) -> bool {
        p.len() == self.dim && self.hull_residual(p) <= tol
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        self.contains_within(p, HULL_TOL)
    }

    /// Values `eta` with `eta * 1` in the hull: possible consensus
    /// velocities. `None` when no such `eta` exists.
    pub fn sliding_range(&self) -> Option<Interval> {
        let lo = self.extreme_consensus_velocity(1.0)?;
        let hi = self.extreme_consensus_velocity(-1.0)?;
        Some(Interval::new(lo, hi))
    }

    fn extreme_consensus_velocity(&self, direction: f64) -> Option<f64> {
        let m = self.vertices.len();
        let d = self.dim;
        // lambda (m), eta (free)
        let mut lp = LinearProgram::new(m + 1);
        lp.bounds[m] = VarBounds::FREE;
        lp.objective[m] = direction;
        for i in 0..d {
            let mut row: Vec<f64> = self.vertices.iter().map(|v| v[i]).collect();
            row.push(-1.0);
            lp.constrain(row, Relation::Eq, 0.0);
        }
        let mut sum = vec![1.0; m + 1];
        sum[m] = 0.0;
        lp.constrain(sum, Relation::Eq, 1.0);
        match lp.solve() {
            LpOutcome::Optimal { x, .. } => Some(x[m]),
            _ => None,
        }
    }

    /// Axis-aligned bounding box of the vertices.
    pub fn bounding_box(&self) -> Vec<Interval> {
        (0..self.dim)
            .map(|i| {
                let lo = self.vertices.iter().map(|v| v[i]).fold(f64::INFINITY, f64::min);
                let hi = self.vertices.iter().map(|v| v[i]).fold(f64::NEG_INFINITY, f64::max);
                Interval::new(lo, hi)
            })
            .collect()
    }
}
