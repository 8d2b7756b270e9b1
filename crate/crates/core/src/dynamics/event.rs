//! Forward Euler that respects the discontinuities.
//!
//! Every scalar nonlinearity with breakpoints is a *term* with a current
//! region (segment index), and the velocity uses the primitives of those
//! regions. A step that would carry a term's argument out of its region is
//! cut by bisection so the argument lands just past the breakpoint, and the
//! region is switched. On a surface, a region whose velocity points back out
//! of it is flipped; a term that flips more than `chatter_cap` times per
//! unit time is locked onto its surface. While terms are locked the velocity
//! is a point of the exact Filippov set tangent to all locked surfaces,
//! chosen by `sliding_selection` within the admissible consensus range.

use std::borrow::Cow;
use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use super::{divergence_bound, time_grid, RunStats, Scenario, Scheme, SimError, Trajectory};
use crate::filippov::LinearArgumentStructure;
use crate::lp::{LinearProgram, LpOutcome, Relation};
use crate::nonlin::{PiecewiseFn, Primitive};
use crate::protocol::{Protocol, ProtocolKind};

#[derive(Debug, Clone, Copy)]
enum Term {
    Node(usize),
    /// `g_ij(x_j - x_i)`
    Edge(usize, usize),
}

struct Engine<'a> {
    p: &'a Protocol,
    tol: f64,
    /// Distance from a surface within which a term counts as on it while
    /// sliding; sums of landed arguments can sit a few `tol` away.
    act_tol: f64,
    cap: f64,
    selection: f64,
    terms: Vec<Term>,
    node_term: Vec<Option<usize>>,
    /// Per agent: `(neighbour, weight, term)`.
    edges: Vec<Vec<(usize, f64, Option<usize>)>>,
    region: Vec<usize>,
    /// Breakpoint index a locked term is held at.
    locked: Vec<Option<usize>>,
    flips: Vec<VecDeque<f64>>,
    structure: Option<LinearArgumentStructure>,
    stats: RunStats,
}

impl<'a> Engine<'a> {
    fn new(s: &'a Scenario) -> Self {
        let p = &s.protocol;
        let n = p.n();
        let mut terms = Vec::new();
        let mut edges = Vec::with_capacity(n);
        for i in 0..n {
            let mut list = Vec::new();
            for (j, w) in p.graph().in_neighbors(i) {
                let term = (!p.edge_fn(i, j).breakpoints().is_empty()).then(|| {
                    terms.push(Term::Edge(i, j));
                    terms.len() - 1
                });
                list.push((j, w, term));
            }
            edges.push(list);
        }
        let mut node_term = vec![None; n];
        for (i, slot) in node_term.iter_mut().enumerate() {
            // agents without in-neighbours see the constant argument 0
            if !p.node_fn(i).breakpoints().is_empty() && !edges[i].is_empty() {
                terms.push(Term::Node(i));
                *slot = Some(terms.len() - 1);
            }
        }
        let structure = match p.kind() {
            ProtocolKind::Combined => None,
            _ => LinearArgumentStructure::at(p, &s.x0).ok(),
        };
        let m = terms.len();
        let cfg = &s.integrator;
        let mut eng = Engine {
            p,
            tol: cfg.boundary_tol,
            act_tol: 100.0 * cfg.boundary_tol,
            cap: cfg.chatter_cap,
            selection: cfg.sliding_selection,
            terms,
            node_term,
            edges,
            region: vec![0; m],
            locked: vec![None; m],
            flips: vec![VecDeque::new(); m],
            structure,
            stats: RunStats::default(),
        };
        // edge terms come first, so node arguments see settled edge regions
        for k in 0..m {
            let y = eng.arg(k, &s.x0);
            eng.region[k] = eng.func(k).segment_index(y);
        }
        eng
    }

    fn func(&self, k: usize) -> &'a PiecewiseFn {
        match self.terms[k] {
            Term::Node(i) => self.p.node_fn(i),
            Term::Edge(i, j) => self.p.edge_fn(i, j),
        }
    }

    fn region_prim(&self, f: &'a PiecewiseFn, term: Option<usize>, y: f64) -> &'a Primitive {
        match term {
            Some(k) => &f.segments()[self.region[k]],
            None => &f.segments()[f.segment_index(y)],
        }
    }

    fn inner_sum(&self, i: usize, x: &[f64]) -> f64 {
        self.edges[i]
            .iter()
            .map(|&(j, w, term)| {
                let y = x[j] - x[i];
                let g = self.p.edge_fn(i, j);
                w * match term {
                    Some(_) => self.region_prim(g, term, y).value(y),
                    None => g.eval(y),
                }
            })
            .sum()
    }

    fn velocity(&self, x: &[f64]) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let s = self.inner_sum(i, x);
                let f = self.p.node_fn(i);
                match self.node_term[i] {
                    Some(_) => self.region_prim(f, self.node_term[i], s).value(s),
                    None => f.eval(s),
                }
            })
            .collect()
    }

    fn arg(&self, k: usize, x: &[f64]) -> f64 {
        match self.terms[k] {
            Term::Node(i) => self.inner_sum(i, x),
            Term::Edge(i, j) => x[j] - x[i],
        }
    }

    /// Gradient of the term's argument.
    fn normal(&self, k: usize, x: &[f64]) -> Vec<f64> {
        let mut nrm = vec![0.0; x.len()];
        match self.terms[k] {
            Term::Edge(i, j) => {
                nrm[j] += 1.0;
                nrm[i] -= 1.0;
            }
            Term::Node(i) => {
                for &(j, w, term) in &self.edges[i] {
                    let y = x[j] - x[i];
                    let slope = prim_slope(self.region_prim(self.p.edge_fn(i, j), term, y), y);
                    nrm[j] += w * slope;
                    nrm[i] -= w * slope;
                }
            }
        }
        nrm
    }

    fn any_locked(&self) -> bool {
        self.locked.iter().any(Option::is_some)
    }

    /// Switches term `k` to the other side of breakpoint `bi`.
    fn flip(&mut self, k: usize, bi: usize, t: f64) {
        self.region[k] = if self.region[k] == bi { bi + 1 } else { bi };
        self.stats.flips += 1;
        let (l, r) = self.func(k).limits_at_breakpoint(bi);
        let hist = &mut self.flips[k];
        hist.push_back(t);
        while hist.front().is_some_and(|&s| s < t - 1.0) {
            hist.pop_front();
        }
        if hist.len() as f64 > self.cap && l != r {
            self.locked[k] = Some(bi);
            self.stats.locks += 1;
        }
    }

    /// Makes the regions of terms sitting on a surface agree with the
    /// direction the velocity takes their argument. Returns once every such
    /// term is consistent or some term got locked.
    fn resolve(&mut self, x: &[f64], t: f64) {
        let budget = 4 * (self.cap as usize + 2) * (self.terms.len() + 1);
        for _ in 0..budget {
            let v = self.velocity(x);
            let mut changed = false;
            for k in 0..self.terms.len() {
                if self.locked[k].is_some() {
                    continue;
                }
                let f = self.func(k);
                let y = self.arg(k, x);
                let Some(bi) = f.nearest_breakpoint(y, self.tol) else {
                    continue;
                };
                let b = f.breakpoints()[bi];
                let side = if y >= b { bi + 1 } else { bi };
                let (l, r) = f.limits_at_breakpoint(bi);
                if l == r || (self.region[k] != bi && self.region[k] != bi + 1) {
                    if self.region[k] != side {
                        self.region[k] = side;
                        changed = true;
                        break;
                    }
                    continue;
                }
                let nrm = self.normal(k, x);
                let rate = dot(&nrm, &v);
                let scale = 1e-12 * (1.0 + l1(&nrm) * linf(&v));
                let consistent = if self.region[k] == bi + 1 {
                    rate > scale
                } else {
                    rate < -scale
                };
                if !consistent {
                    self.flip(k, bi, t);
                    changed = true;
                    break;
                }
            }
            if !changed || self.any_locked() {
                return;
            }
        }
    }

    /// Point of the Filippov set tangent to every locked surface, or `None`
    /// if there is none.
    fn sliding_velocity(&self, x: &[f64]) -> Result<Option<Vec<f64>>, SimError> {
        let st = match &self.structure {
            Some(s) => Cow::Borrowed(s),
            None => Cow::Owned(LinearArgumentStructure::at(self.p, x)?),
        };
        let poly = st.filippov_set_with_tol(x, self.act_tol)?;
        let verts = &poly.vertices;
        let m = verts.len();
        let n = x.len();
        let mut lp = LinearProgram::new(m);
        lp.constrain(vec![1.0; m], Relation::Eq, 1.0);
        for k in (0..self.terms.len()).filter(|&k| self.locked[k].is_some()) {
            let nrm = self.normal(k, x);
            let row = verts.iter().map(|v| dot(&nrm, v)).collect();
            lp.constrain(row, Relation::Eq, 0.0);
        }
        let mean: Vec<f64> = verts.iter().map(|v| v.iter().sum::<f64>() / n as f64).collect();

        lp.objective = mean.clone();
        let LpOutcome::Optimal { value: lo, .. } = lp.solve() else {
            return Ok(None);
        };
        lp.objective = mean.iter().map(|c| -c).collect();
        let LpOutcome::Optimal { value: neg_hi, .. } = lp.solve() else {
            return Ok(None);
        };
        let hi = -neg_hi;
        let eta = lo + self.selection * (hi - lo).max(0.0);
        lp.objective = vec![0.0; m];
        lp.constrain(mean, Relation::Eq, eta);
        let LpOutcome::Optimal { x: lambda, .. } = lp.solve() else {
            return Ok(None);
        };
        let mut v = vec![0.0; n];
        for (l, vert) in lambda.iter().zip(verts) {
            for (vi, c) in v.iter_mut().zip(vert) {
                *vi += l * c;
            }
        }
        Ok(Some(v))
    }

    fn unlock_all(&mut self, x: &[f64]) {
        for k in 0..self.terms.len() {
            self.locked[k] = None;
            self.flips[k].clear();
            let y = self.arg(k, x);
            self.region[k] = self.func(k).segment_index(y);
        }
    }

    /// Pulls the state back onto the locked surfaces (least-norm correction).
    fn project(&self, x: &mut [f64]) {
        let locked: Vec<(usize, usize)> = (0..self.terms.len())
            .filter_map(|k| self.locked[k].map(|bi| (k, bi)))
            .collect();
        if locked.is_empty() {
            return;
        }
        let n = x.len();
        let mut nmat = DMatrix::zeros(locked.len(), n);
        let mut res = DVector::zeros(locked.len());
        for (row, &(k, bi)) in locked.iter().enumerate() {
            let nrm = self.normal(k, x);
            for (c, v) in nrm.iter().enumerate() {
                nmat[(row, c)] = *v;
            }
            res[row] = self.arg(k, x) - self.func(k).breakpoints()[bi];
        }
        if res.amax() == 0.0 {
            return;
        }
        if let Ok(pinv) = nmat.pseudo_inverse(1e-12) {
            let dx = pinv * res;
            for (xi, d) in x.iter_mut().zip(dx.iter()) {
                *xi -= d;
            }
        }
    }

    /// Fraction of the step at which term `k` has just passed `b` in
    /// direction `dir`, landing within `tol` beyond it.
    fn bisect(&self, k: usize, x: &[f64], v: &[f64], dt: f64, b: f64, dir: f64) -> f64 {
        let mut xt = x.to_vec();
        let mut phi = |tau: f64| {
            for ((o, xi), vi) in xt.iter_mut().zip(x).zip(v) {
                *o = xi + tau * dt * vi;
            }
            dir * (self.arg(k, &xt) - b)
        };
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let p = phi(mid);
            if p > self.tol {
                hi = mid;
            } else if p < 0.0 {
                lo = mid;
            } else {
                return mid;
            }
            if hi - lo < 1e-17 {
                break;
            }
        }
        hi
    }

    fn near_surface(&self, k: usize, x: &[f64]) -> Option<usize> {
        self.func(k).nearest_breakpoint(self.arg(k, x), self.act_tol)
    }

    /// While sliding, terms on a surface join the locked set when a
    /// Filippov velocity tangent to all of them exists; otherwise they are
    /// crossing and stay free.
    fn join_surfaces(&mut self, x: &[f64]) -> Result<(), SimError> {
        for k in 0..self.terms.len() {
            if self.locked[k].is_some() {
                continue;
            }
            let Some(bi) = self.near_surface(k, x) else {
                continue;
            };
            let (l, r) = self.func(k).limits_at_breakpoint(bi);
            if l == r {
                continue;
            }
            self.locked[k] = Some(bi);
            if self.sliding_velocity(x)?.is_some() {
                self.stats.locks += 1;
            } else {
                self.locked[k] = None;
            }
        }
        Ok(())
    }
}

fn prim_slope(p: &Primitive, y: f64) -> f64 {
    p.local_slope(y, 0.0).unwrap_or_else(|| {
        let d = 1e-7 * (1.0 + y.abs());
        (p.value(y + d) - p.value(y - d)) / (2.0 * d)
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn l1(a: &[f64]) -> f64 {
    a.iter().map(|v| v.abs()).sum()
}

fn linf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn simulate_event(s: &Scenario) -> Result<Trajectory, SimError> {
    let cfg = &s.integrator;
    let mut eng = Engine::new(s);
    let grid = time_grid(s.horizon, cfg.h);
    let bound = divergence_bound(&s.x0);
    let max_substeps = 200 * grid.len() + 100_000;

    let mut x = s.x0.clone();
    let mut t = 0.0;
    let mut states = Vec::with_capacity(grid.len());
    states.push(x.clone());
    let mut next = 1;
    let mut unlock_streak = 0;
    let m = eng.terms.len();

    while next < grid.len() {
        eng.stats.substeps += 1;
        if eng.stats.substeps > max_substeps {
            return Err(SimError::StepLimit { t });
        }
        let t_next = grid[next];
        if !eng.any_locked() {
            eng.resolve(&x, t);
        }
        if eng.any_locked() {
            eng.join_surfaces(&x)?;
        }
        let sliding = eng.any_locked();
        let v = if sliding {
            match eng.sliding_velocity(&x)? {
                Some(v) => {
                    unlock_streak = 0;
                    v
                }
                None => {
                    unlock_streak += 1;
                    if unlock_streak > 3 {
                        return Err(SimError::SlidingFailure { t });
                    }
                    eng.unlock_all(&x);
                    continue;
                }
            }
        } else {
            eng.velocity(&x)
        };
        let dt = t_next - t;
        let x1: Vec<f64> = x.iter().zip(&v).map(|(a, b)| a + dt * b).collect();

        // earliest exit of an unlocked term from its region
        let mut exit: Option<(f64, usize, usize)> = None;
        for k in 0..m {
            if eng.locked[k].is_some() || (sliding && eng.near_surface(k, &x).is_some()) {
                continue;
            }
            let f = eng.func(k);
            let bps = f.breakpoints();
            let r = eng.region[k];
            let y1 = eng.arg(k, &x1);
            let hit = if r < bps.len() && y1 > bps[r] + eng.tol {
                Some((eng.bisect(k, &x, &v, dt, bps[r], 1.0), r))
            } else if r > 0 && y1 < bps[r - 1] - eng.tol {
                Some((eng.bisect(k, &x, &v, dt, bps[r - 1], -1.0), r - 1))
            } else {
                None
            };
            if let Some((tau, bi)) = hit {
                if exit.is_none_or(|(best, _, _)| tau < best) {
                    exit = Some((tau, k, bi));
                }
            }
        }

        let reached_grid = match exit {
            Some((tau, k, bi)) => {
                for (xi, vi) in x.iter_mut().zip(&v) {
                    *xi += tau * dt * vi;
                }
                t += tau * dt;
                eng.flip(k, bi, t);
                false
            }
            None => {
                x = x1;
                t = t_next;
                true
            }
        };

        if eng.any_locked() {
            eng.project(&mut x);
        }
        if sliding {
            for k in 0..m {
                if eng.locked[k].is_none() && eng.near_surface(k, &x).is_none() {
                    let y = eng.arg(k, &x);
                    eng.region[k] = eng.func(k).segment_index(y);
                }
            }
        }
        if x.iter().any(|v| v.is_nan() || v.abs() > bound) {
            return Err(SimError::Divergence { t, bound });
        }
        if reached_grid {
            states.push(x.clone());
            next += 1;
        }
    }

    Ok(Trajectory::from_samples(
        Scheme::EventEuler,
        grid,
        states,
        cfg,
        s.horizon,
        eng.stats,
    ))
}
