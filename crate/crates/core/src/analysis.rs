//! Which convergence results apply to a scenario, and what they predict.

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::dynamics::Scenario;
use crate::filippov::filippov_set;
use crate::graph::{Digraph, GraphError, GraphFacts};
use crate::nonlin::{FnPredicates, Interval, PiecewiseFn};
use crate::protocol::{Protocol, ProtocolKind};

/// Tolerance for the jump-symmetry check between paired edge functions.
pub const EDGE_SYMMETRY_TOL: f64 = 1e-12;
/// Smallest eigenvalue of the symmetric part still counted as semidefinite.
pub const PSD_TOL: f64 = -1e-9;
/// Sliding values below this magnitude count as zero.
pub const SLIDING_TOL: f64 = 1e-9;

/// Which of the three root conditions holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RootCondition {
    /// Some root has a node function continuous at the origin.
    #[serde(rename = "i")]
    ContinuousRoot,
    /// Exactly one root.
    #[serde(rename = "ii")]
    SingleRoot,
    /// Exactly two roots, both with jumps symmetric about the origin.
    #[serde(rename = "iii")]
    SymmetricPair,
}

impl RootCondition {
    pub fn label(&self) -> &'static str {
        match self {
            RootCondition::ContinuousRoot => "i",
            RootCondition::SingleRoot => "ii",
            RootCondition::SymmetricPair => "iii",
        }
    }
}

/// Strongest conclusion the report can draw, from strongest to weakest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Prediction {
    ConsensusGuaranteed,
    /// The disagreement `-L x` converges to zero; sliding consensus is not
    /// excluded.
    ErrorConvergenceGuaranteed,
    /// A nonzero common velocity lies in the Filippov set at consensus.
    SlidingPossible,
    NoGuarantee,
}

impl Prediction {
    pub fn name(&self) -> &'static str {
        match self {
            Prediction::ConsensusGuaranteed => "ConsensusGuaranteed",
            Prediction::ErrorConvergenceGuaranteed => "ErrorConvergenceGuaranteed",
            Prediction::SlidingPossible => "SlidingPossible",
            Prediction::NoGuarantee => "NoGuarantee",
        }
    }
}

impl fmt::Display for Prediction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "role", rename_all = "snake_case")]
pub enum FnRole {
    Node { i: usize },
    Edge { i: usize, j: usize },
}

impl fmt::Display for FnRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // 1-based, as in scenario files
        match self {
            FnRole::Node { i } => write!(f, "f_{}", i + 1),
            FnRole::Edge { i, j } => write!(f, "g_{},{}", i + 1, j + 1),
        }
    }
}

/// Sign-preservation verdict for one function of the protocol. Measurability
/// and local boundedness hold for every representable function.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FnVerdict {
    #[serde(flatten)]
    pub role: FnRole,
    pub predicates: FnPredicates,
}

impl FnVerdict {
    pub fn ok(&self) -> bool {
        self.predicates.sign_preserving
    }
}

/// Outcome of the Filippov set at a consensus state.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SlidingCheck {
    Range {
        lo: f64,
        hi: f64,
    },
    /// The set misses the consensus line.
    Empty,
    Unavailable {
        reason: String,
    },
}

impl SlidingCheck {
    pub fn has_nonzero(&self) -> bool {
        match self {
            SlidingCheck::Range { lo, hi } => lo.abs() > SLIDING_TOL || hi.abs() > SLIDING_TOL,
            _ => false,
        }
    }
}

/// `Sigma L = J + R` with `J` skew and `R` symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct PhSplit {
    pub sigma: Vec<f64>,
    pub j: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub psd_ok: bool,
}

impl Serialize for PhSplit {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let rows = |m: &DMatrix<f64>| -> Vec<Vec<f64>> {
            (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
        };
        let mut st = s.serialize_struct("PhSplit", 5)?;
        st.serialize_field("sigma", &self.sigma)?;
        st.serialize_field("j", &rows(&self.j))?;
        st.serialize_field("r", &rows(&self.r))?;
        st.serialize_field("min_eigenvalue", &self.min_eigenvalue)?;
        st.serialize_field("psd_ok", &self.psd_ok)?;
        st.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub kind: &'static str,
    pub verdicts: Vec<FnVerdict>,
    pub roots: Vec<usize>,
    /// Agents whose node function is continuous at the origin.
    pub continuity_set: Vec<usize>,
    pub graph: GraphFacts,
    /// Node protocol, all `f_i` sign-preserving, and a root condition.
    pub node_rule: Option<RootCondition>,
    /// Edge protocol on a connected undirected graph with
    /// `g_ij(0-) = -g_ji(0+)` on every edge.
    pub undirected_edge_rule: bool,
    /// Edge protocol with continuous `g_ij` and a spanning tree.
    pub continuous_edge_rule: bool,
    /// General protocol with continuous `g_ij` and a root condition.
    pub combined_rule: Option<RootCondition>,
    /// Node protocol on a strongly connected graph with nondecreasing
    /// sign-preserving `f_i`: the error `-L x` converges to zero.
    pub error_rule: bool,
    pub sliding: SlidingCheck,
    pub prediction: Prediction,
    pub ph_split: Option<PhSplit>,
}

impl AnalysisReport {
    pub fn all_sign_preserving(&self) -> bool {
        self.verdicts.iter().all(FnVerdict::ok)
    }

    /// `key = value` lines, indices 1-based.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let one_based = |v: &[usize]| {
            let items: Vec<String> = v.iter().map(|i| (i + 1).to_string()).collect();
            format!("[{}]", items.join(","))
        };
        let cond = |c: &Option<RootCondition>| c.map_or("none".to_string(), |c| format!("applies({})", c.label()));
        let mut s = String::new();
        let _ = writeln!(s, "kind = {}", self.kind);
        for v in &self.verdicts {
            let p = &v.predicates;
            let _ = writeln!(
                s,
                "sign_preserving.{} = {} (continuous_at_origin={} symmetric_jump_at_origin={} nondecreasing={} limits_at_0=[{:?},{:?}])",
                v.role,
                if v.ok() { "ok" } else { "violated" },
                p.continuous_at_origin,
                p.symmetric_jump_at_origin,
                p.nondecreasing,
                p.left_limit_0,
                p.right_limit_0,
            );
        }
        let _ = writeln!(s, "roots = {}", one_based(&self.roots));
        let _ = writeln!(s, "continuity_set = {}", one_based(&self.continuity_set));
        let _ = writeln!(s, "strongly_connected = {}", self.graph.strongly_connected);
        let _ = writeln!(s, "undirected = {}", self.graph.is_undirected);
        let _ = writeln!(s, "node_rule = {}", cond(&self.node_rule));
        let _ = writeln!(s, "undirected_edge_rule = {}", self.undirected_edge_rule);
        let _ = writeln!(s, "continuous_edge_rule = {}", self.continuous_edge_rule);
        let _ = writeln!(s, "combined_rule = {}", cond(&self.combined_rule));
        let _ = writeln!(s, "error_rule = {}", self.error_rule);
        match &self.sliding {
            SlidingCheck::Range { lo, hi } => {
                let _ = writeln!(s, "sliding_range = [{lo:?}, {hi:?}]");
            }
            SlidingCheck::Empty => {
                let _ = writeln!(s, "sliding_range = empty");
            }
            SlidingCheck::Unavailable { reason } => {
                let _ = writeln!(s, "sliding_range = unavailable ({reason})");
            }
        }
        if let Some(ph) = &self.ph_split {
            let _ = writeln!(s, "ph_split.sigma = {:?}", ph.sigma);
            let _ = writeln!(s, "ph_split.min_eigenvalue_r = {:?}", ph.min_eigenvalue);
            let _ = writeln!(s, "ph_split.psd_ok = {}", ph.psd_ok);
        }
        let _ = writeln!(s, "prediction = {}", self.prediction);
        s
    }
}

/// Checks the hypotheses of every convergence result against `s` and derives
/// a prediction. Depends only on the protocol; `x0` and the integrator are
/// ignored.
pub fn analyze(s: &Scenario) -> AnalysisReport {
    analyze_protocol(&s.protocol)
}

pub fn analyze_protocol(p: &Protocol) -> AnalysisReport {
    let n = p.n();
    let graph = p.graph();
    let facts = graph.facts();

    let mut verdicts: Vec<FnVerdict> = (0..n)
        .map(|i| FnVerdict {
            role: FnRole::Node { i },
            predicates: p.node_fn(i).check_predicates(),
        })
        .collect();
    for (from, to, _) in graph.edges() {
        verdicts.push(FnVerdict {
            role: FnRole::Edge { i: to, j: from },
            predicates: p.edge_fn(to, from).check_predicates(),
        });
    }
    let node_ok = verdicts[..n].iter().all(FnVerdict::ok);
    let edge_ok = verdicts[n..].iter().all(FnVerdict::ok);

    let continuity_set: Vec<usize> = (0..n)
        .filter(|&i| verdicts[i].predicates.continuous_at_origin)
        .collect();
    let node_identity = p.node_fns().iter().all(PiecewiseFn::is_identity);
    let edge_identity = p.explicit_edge_fns().values().all(PiecewiseFn::is_identity);
    let edges_continuous = p.explicit_edge_fns().values().all(|g| !g.has_jump());

    let root_condition = root_condition(&facts.roots, &continuity_set, &verdicts[..n]);

    let node_rule = if edge_identity && node_ok { root_condition } else { None };
    let undirected_edge_rule =
        node_identity && edge_ok && facts.is_undirected && facts.weakly_connected && edge_jumps_paired(p);
    let continuous_edge_rule = node_identity && edge_ok && edges_continuous && facts.has_spanning_tree;
    let combined_rule = if edges_continuous && node_ok && edge_ok {
        root_condition
    } else {
        None
    };
    let error_rule = edge_identity
        && facts.strongly_connected
        && node_ok
        && verdicts[..n].iter().all(|v| v.predicates.nondecreasing);

    let sliding = match filippov_set(p, &vec![0.0; n]) {
        Ok(poly) => match poly.sliding_range() {
            Some(Interval { lo, hi }) => SlidingCheck::Range { lo, hi },
            None => SlidingCheck::Empty,
        },
        Err(e) => SlidingCheck::Unavailable { reason: e.to_string() },
    };

    let prediction = if node_rule.is_some() || undirected_edge_rule || continuous_edge_rule || combined_rule.is_some() {
        Prediction::ConsensusGuaranteed
    } else if sliding.has_nonzero() {
        Prediction::SlidingPossible
    } else if error_rule {
        Prediction::ErrorConvergenceGuaranteed
    } else {
        Prediction::NoGuarantee
    };

    AnalysisReport {
        kind: match p.kind() {
            ProtocolKind::Node => "node",
            ProtocolKind::Edge => "edge",
            ProtocolKind::Combined => "combined",
        },
        roots: facts.roots.clone(),
        continuity_set,
        ph_split: ph_decompose(graph).ok(),
        graph: facts,
        verdicts,
        node_rule,
        undirected_edge_rule,
        continuous_edge_rule,
        combined_rule,
        error_rule,
        sliding,
        prediction,
    }
}

fn root_condition(roots: &[usize], continuity_set: &[usize], node_verdicts: &[FnVerdict]) -> Option<RootCondition> {
    if roots.iter().any(|r| continuity_set.contains(r)) {
        Some(RootCondition::ContinuousRoot)
    } else if roots.len() == 1 {
        Some(RootCondition::SingleRoot)
    } else if roots.len() == 2
        && roots
            .iter()
            .all(|&r| node_verdicts[r].predicates.symmetric_jump_at_origin)
    {
        Some(RootCondition::SymmetricPair)
    } else {
        None
    }
}

/// `g_ij(0-) = -g_ji(0+)` for every edge.
fn edge_jumps_paired(p: &Protocol) -> bool {
    p.graph().edges().into_iter().all(|(from, to, _)| {
        let (l, _) = p.edge_fn(to, from).one_sided_limits(0.0);
        let (_, r) = p.edge_fn(from, to).one_sided_limits(0.0);
        (l + r).abs() <= EDGE_SYMMETRY_TOL
    })
}

/// Splits `Sigma L` into skew and symmetric parts, with `Sigma` the diagonal
/// of the left null vector of `L` scaled so its smallest entry is one.
pub fn ph_decompose(g: &Digraph) -> Result<PhSplit, GraphError> {
    let mut sigma = g.perron_left_vector()?;
    let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    sigma.iter_mut().for_each(|v| *v /= min);
    let n = g.n();
    let l = g.laplacian();
    let sl = DMatrix::from_fn(n, n, |i, j| sigma[i] * l[(i, j)]);
    let t = sl.transpose();
    let j = (&sl - &t) * 0.5;
    let r = (&sl + &t) * 0.5;
    let min_eigenvalue = SymmetricEigen::new(r.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    Ok(PhSplit {
        sigma,
        j,
        r,
        min_eigenvalue,
        psd_ok: min_eigenvalue >= PSD_TOL,
    })
}
