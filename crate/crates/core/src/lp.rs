//! Small dense linear-programming solver.
//!
//! Two-phase tableau simplex with Bland's rule. Problems here have at most a
//! few dozen variables, so a dense tableau is plenty and the fixed pivot rule
//! keeps every answer reproducible.

use serde::Serialize;

/// Pivot and reduced-cost tolerance.
const PIVOT_TOL: f64 = 1e-12;
const COST_TOL: f64 = 1e-11;
/// Phase-one residual below which a problem counts as feasible.
pub const FEAS_TOL: f64 = 1e-9;
/// Margin that turns strict inequalities into closed ones.
pub const STRICT_MARGIN: f64 = 1e-6;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Relation {
    Le,
    Ge,
    Eq,
    /// Strict `>`; relaxed to `>= rhs + margin`.
    Gt,
    /// Strict `<`; relaxed to `<= rhs - margin`.
    Lt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub relation: Relation,
    pub rhs: f64,
}

impl Constraint {
    pub fn new(coeffs: Vec<f64>, relation: Relation, rhs: f64) -> Self {
        Constraint { coeffs, relation, rhs }
    }
}

/// Per-variable bounds; `None` means unbounded on that side.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarBounds {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
}

impl VarBounds {
    pub const NONNEG: VarBounds = VarBounds {
        lo: Some(0.0),
        hi: None,
    };
    pub const FREE: VarBounds = VarBounds { lo: None, hi: None };

    pub fn boxed(lo: f64, hi: f64) -> Self {
        VarBounds {
            lo: Some(lo),
            hi: Some(hi),
        }
    }
}

/// `minimize objective . x` subject to the constraints and bounds.
#[derive(Debug, Clone)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
    pub bounds: Vec<VarBounds>,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: Vec<f64>, value: f64 },
    Infeasible,
    Unbounded,
    IterationLimit,
}

impl LpOutcome {
    pub fn point(&self) -> Option<&[f64]> {
        match self {
            LpOutcome::Optimal { x, .. } => Some(x),
            _ => None,
        }
    }
}

impl LinearProgram {
    pub fn new(n_vars: usize) -> Self {
        LinearProgram {
            objective: vec![0.0; n_vars],
            constraints: Vec::new(),
            bounds: vec![VarBounds::NONNEG; n_vars],
            margin: STRICT_MARGIN,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn constrain(&mut self, coeffs: Vec<f64>, relation: Relation, rhs: f64) -> &mut Self {
        debug_assert_eq!(coeffs.len(), self.n_vars());
        self.constraints.push(Constraint::new(coeffs, relation, rhs));
        self
    }

    pub fn solve(&self) -> LpOutcome {
        StandardForm::build(self).solve()
    }
}

/// How an original variable is rebuilt from standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// x = shift + col
    Shifted { col: usize, shift: f64 },
    /// x = shift - col
    Mirrored { col: usize, shift: f64 },
    /// x = pos - neg
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    // rows of A x = b, x >= 0, b >= 0
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
    c0: f64,
    maps: Vec<VarMap>,
}

impl StandardForm {
    fn build(lp: &LinearProgram) -> Self {
        let mut maps = Vec::with_capacity(lp.n_vars());
        let mut ncols = 0;
        for bd in &lp.bounds {
            match (bd.lo, bd.hi) {
                (Some(lo), _) => {
                    maps.push(VarMap::Shifted { col: ncols, shift: lo });
                    ncols += 1;
                }
                (None, Some(hi)) => {
                    maps.push(VarMap::Mirrored { col: ncols, shift: hi });
                    ncols += 1;
                }
                (None, None) => {
                    maps.push(VarMap::Split {
                        pos: ncols,
                        neg: ncols + 1,
                    });
                    ncols += 2;
                }
            }
        }

        // (coeffs over structural columns, relation, rhs)
        let mut rows: Vec<(Vec<f64>, Relation, f64)> = Vec::new();
        let substitute = |coeffs: &[f64]| -> (Vec<f64>, f64) {
            let mut row = vec![0.0; ncols];
            let mut shift = 0.0;
            for (j, &a) in coeffs.iter().enumerate() {
                match maps[j] {
                    VarMap::Shifted { col, shift: s } => {
                        row[col] += a;
                        shift += a * s;
                    }
                    VarMap::Mirrored { col, shift: s } => {
                        row[col] -= a;
                        shift += a * s;
                    }
                    VarMap::Split { pos, neg } => {
                        row[pos] += a;
                        row[neg] -= a;
                    }
                }
            }
            (row, shift)
        };
        for con in &lp.constraints {
            let (row, shift) = substitute(&con.coeffs);
            let (rel, rhs) = match con.relation {
                Relation::Gt => (Relation::Ge, con.rhs + lp.margin),
                Relation::Lt => (Relation::Le, con.rhs - lp.margin),
                r => (r, con.rhs),
            };
            rows.push((row, rel, rhs - shift));
        }
        for (j, bd) in lp.bounds.iter().enumerate() {
            if let (Some(lo), Some(hi), VarMap::Shifted { col, .. }) = (bd.lo, bd.hi, maps[j]) {
                let mut row = vec![0.0; ncols];
                row[col] = 1.0;
                rows.push((row, Relation::Le, hi - lo));
            }
        }

        let n_slack = rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let total = ncols + n_slack;
        let mut a = Vec::with_capacity(rows.len());
        let mut b = Vec::with_capacity(rows.len());
        let mut slack = ncols;
        for (mut row, rel, mut rhs) in rows {
            row.resize(total, 0.0);
            match rel {
                Relation::Le => {
                    row[slack] = 1.0;
                    slack += 1;
                }
                Relation::Ge => {
                    row[slack] = -1.0;
                    slack += 1;
                }
                _ => {}
            }
            if rhs < 0.0 {
                row.iter_mut().for_each(|v| *v = -*v);
                rhs = -rhs;
            }
            a.push(row);
            b.push(rhs);
        }

        let (cost, c0) = substitute(&lp.objective);
        let mut c = cost;
        c.resize(total, 0.0);
        StandardForm { a, b, c, c0, maps }
    }

    fn solve(self) -> LpOutcome {
        let m = self.a.len();
        let n = self.c.len();
        // Tableau columns: structural+slack (n), artificials (m), rhs.
        let width = n + m + 1;
        let mut t = vec![vec![0.0; width]; m];
        for i in 0..m {
            t[i][..n].copy_from_slice(&self.a[i]);
            t[i][n + i] = 1.0;
            t[i][width - 1] = self.b[i];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();

        // Phase one: minimise the sum of artificials.
        let mut phase1 = vec![0.0; n + m];
        phase1[n..].iter_mut().for_each(|v| *v = 1.0);
        match simplex(&mut t, &mut basis, &phase1, n + m) {
            Pivoting::Done => {}
            Pivoting::Unbounded => unreachable!("phase one is bounded below"),
            Pivoting::Limit => return LpOutcome::IterationLimit,
        }
        let infeas: f64 = basis
            .iter()
            .enumerate()
            .filter(|(_, &v)| v >= n)
            .map(|(i, _)| t[i][width - 1])
            .sum();
        let scale = 1.0 + self.b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        if infeas > FEAS_TOL * scale {
            return LpOutcome::Infeasible;
        }

        // Drive remaining artificials out of the basis or drop their rows.
        let mut i = 0;
        while i < t.len() {
            if basis[i] >= n {
                if let Some(j) = (0..n).find(|&j| t[i][j].abs() > 1e-9) {
                    pivot(&mut t, &mut basis, i, j);
                    i += 1;
                } else {
                    t.remove(i);
                    basis.remove(i);
                }
            } else {
                i += 1;
            }
        }
        // Forbid artificials from re-entering.
        for row in t.iter_mut() {
            for v in &mut row[n..n + m] {
                *v = 0.0;
            }
        }

        let mut cost = self.c.clone();
        cost.resize(n + m, 0.0);
        match simplex(&mut t, &mut basis, &cost, n) {
            Pivoting::Done => {}
            Pivoting::Unbounded => return LpOutcome::Unbounded,
            Pivoting::Limit => return LpOutcome::IterationLimit,
        }

        let mut xs = vec![0.0; n];
        for (i, &bv) in basis.iter().enumerate() {
            if bv < n {
                xs[bv] = t[i][width - 1];
            }
        }
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                VarMap::Shifted { col, shift } => shift + xs[col],
                VarMap::Mirrored { col, shift } => shift - xs[col],
                VarMap::Split { pos, neg } => xs[pos] - xs[neg],
            })
            .collect();
        let value = self.c0 + self.c.iter().zip(&xs).map(|(c, x)| c * x).sum::<f64>();
        LpOutcome::Optimal { x, value }
    }
}

enum Pivoting {
    Done,
    Unbounded,
    Limit,
}

/// Primal simplex on a tableau already in canonical form for `basis`.
/// Only columns `< allowed` may enter.
fn simplex(t: &mut [Vec<f64>], basis: &mut [usize], cost: &[f64], allowed: usize) -> Pivoting {
    let width = t.first().map_or(0, |r| r.len());
    for _ in 0..MAX_PIVOTS {
        // Bland: lowest-index column with negative reduced cost.
        let entering = (0..allowed).find(|&j| {
            if basis.contains(&j) {
                return false;
            }
            let reduced = cost[j] - basis.iter().enumerate().map(|(i, &bv)| cost[bv] * t[i][j]).sum::<f64>();
            reduced < -COST_TOL
        });
        let Some(j) = entering else {
            return Pivoting::Done;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            let a = t[i][j];
            if a > PIVOT_TOL {
                let ratio = t[i][width - 1] / a;
                leave = match leave {
                    None => Some((i, ratio)),
                    Some((k, r)) => {
                        if ratio < r - 1e-12 || (ratio <= r + 1e-12 && basis[i] < basis[k]) {
                            Some((i, ratio))
                        } else {
                            Some((k, r))
                        }
                    }
                };
            }
        }
        let Some((i, _)) = leave else {
            return Pivoting::Unbounded;
        };
        pivot(t, basis, i, j);
    }
    Pivoting::Limit
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, c: usize) {
    let p = t[r][c];
    t[r].iter_mut().for_each(|v| *v /= p);
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i == r {
            continue;
        }
        let f = row[c];
        if f != 0.0 {
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= f * pv;
            }
            row[c] = 0.0;
        }
    }
    basis[r] = c;
}

/// Finds a point satisfying every constraint inside the box
/// `bounds[j].0 <= x_j <= bounds[j].1`. Strict inequalities are enforced with
/// margin [`STRICT_MARGIN`]. Returns `None` when the relaxed system is
/// infeasible.
pub fn lp_feasible(constraints: &[Constraint], bounds: &[(f64, f64)]) -> Option<Vec<f64>> {
    let mut lp = LinearProgram::new(bounds.len());
    lp.bounds = bounds.iter().map(|&(lo, hi)| VarBounds::boxed(lo, hi)).collect();
    lp.constraints = constraints.to_vec();
    match lp.solve() {
        LpOutcome::Optimal { x, .. } => Some(x),
        _ => None,
    }
}
