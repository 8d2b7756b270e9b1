//! TOML scenario files.
//!
//! ```toml
//! x0 = [0.0, 1.0, 2.0]
//!
//! [graph]
//! n = 3
//! undirected = true
//! edges = [[1, 2, 1.0], [2, 3, 1.0], [1, 3, 1.0]]   # from, to, weight
//!
//! [node_fns]
//! all = { kind = "sign" }
//! 1 = { kind = "sat", lo = -1.0, hi = 1.0 }
//!
//! [edge_fns]
//! "2,1" = { kind = "relay", pos = 1.5, neg = -0.5 }   # g_21 acts on x_1 - x_2
//!
//! [sim]
//! scheme = "smoothed"
//! horizon = 10.0
//! h = 1e-3
//! ```
//!
//! Agents are numbered from 1. Missing functions default to the identity,
//! `all` sets every function of a section and numbered keys override it.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use toml::Spanned;

use crate::dynamics::{IntegratorConfig, Scenario, Scheme};
use crate::graph::Digraph;
use crate::nonlin::{FnError, PiecewiseFn, Primitive};
use crate::protocol::Protocol;

const DEFAULT_HORIZON: f64 = 10.0;

/// Parse or validation failure, with a 1-based position when one is known.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.line, self.column) {
            (Some(l), Some(c)) => write!(f, "line {l}, column {c}: {}", self.message),
            _ => f.write_str(&self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        #[source]
        source: ParseError,
    },
}

/// Function descriptor: a named preset or an explicit piecewise definition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FnSpec {
    // empty braces so extra keys are rejected
    Identity {},
    Sign {},
    /// `pos` above zero, `neg` below.
    Relay {
        pos: f64,
        neg: f64,
    },
    Sat {
        lo: f64,
        hi: f64,
    },
    Linear {
        slope: f64,
    },
    Deadzone {
        width: f64,
    },
    Power {
        coeff: f64,
        exponent: f64,
    },
    Quantizer {
        levels: usize,
        ratio: f64,
        scale: f64,
    },
    Piecewise {
        breakpoints: Vec<f64>,
        segments: Vec<Primitive>,
        point_values: Vec<f64>,
    },
}

impl FnSpec {
    pub fn build(&self) -> Result<PiecewiseFn, FnError> {
        match self {
            FnSpec::Identity {} => Ok(PiecewiseFn::identity()),
            FnSpec::Sign {} => Ok(PiecewiseFn::sign()),
            FnSpec::Relay { pos, neg } => PiecewiseFn::relay(*pos, *neg),
            FnSpec::Sat { lo, hi } => PiecewiseFn::sat(*lo, *hi),
            FnSpec::Linear { slope } => PiecewiseFn::smooth(Primitive::Affine {
                slope: *slope,
                offset: 0.0,
            }),
            FnSpec::Deadzone { width } => PiecewiseFn::deadzone(*width),
            FnSpec::Power { coeff, exponent } => PiecewiseFn::power(*coeff, *exponent),
            FnSpec::Quantizer { levels, ratio, scale } => PiecewiseFn::log_quantizer(*levels, *ratio, *scale),
            FnSpec::Piecewise {
                breakpoints,
                segments,
                point_values,
            } => PiecewiseFn::new(breakpoints.clone(), segments.clone(), point_values.clone()),
        }
    }

    /// Exact descriptor for `f`; presets where they match, else explicit.
    pub fn describe(f: &PiecewiseFn) -> FnSpec {
        if f.is_identity() {
            FnSpec::Identity {}
        } else if *f == PiecewiseFn::sign() {
            FnSpec::Sign {}
        } else {
            FnSpec::Piecewise {
                breakpoints: f.breakpoints().to_vec(),
                segments: f.segments().to_vec(),
                point_values: f.point_values().to_vec(),
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GraphSection {
    n: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    undirected: bool,
    #[serde(default)]
    edges: Vec<Spanned<(usize, usize, f64)>>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    scheme: Option<Scheme>,
    #[serde(skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    h: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    boundary_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    chatter_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consensus_tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    consensus_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    sliding_selection: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    every: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    x0: Spanned<Vec<f64>>,
    graph: Spanned<GraphSection>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    node_fns: BTreeMap<Spanned<String>, Spanned<FnSpec>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    edge_fns: BTreeMap<Spanned<String>, Spanned<FnSpec>>,
    #[serde(default)]
    sim: Option<Spanned<SimSection>>,
}

/// A parsed scenario plus the run options that are not part of the
/// dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioFile {
    pub scenario: Scenario,
    /// Seed for sampling-based checks; the simulation itself is
    /// deterministic.
    pub seed: u64,
    /// CSV thinning: keep every `every`-th sample.
    pub every: usize,
}

impl ScenarioFile {
    pub fn new(scenario: Scenario) -> Self {
        ScenarioFile {
            scenario,
            seed: 0,
            every: 1,
        }
    }

    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| {
            ParseError {
                line: None,
                column: None,
                message: e.message().to_string(),
            }
            .at(text, e.span())
        })?;
        build(text, raw)
    }

    pub fn load(path: &Path) -> Result<Self, LoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text).map_err(|source| LoadError::Parse {
            path: path.display().to_string(),
            source,
        })
    }

    /// Serializes to the file format; parsing the result gives back an
    /// identical value.
    pub fn to_toml(&self) -> String {
        let s = &self.scenario;
        let p = &s.protocol;
        let none = || 0..0;
        let edges = p
            .graph()
            .edges()
            .into_iter()
            .map(|(from, to, w)| Spanned::new(none(), (from + 1, to + 1, w)))
            .collect();
        let node_fns = (0..p.n())
            .filter(|&i| !p.node_fn(i).is_identity())
            .map(|i| {
                (
                    Spanned::new(none(), (i + 1).to_string()),
                    Spanned::new(none(), FnSpec::describe(p.node_fn(i))),
                )
            })
            .collect();
        let edge_fns = p
            .explicit_edge_fns()
            .iter()
            .map(|(&(i, j), g)| {
                (
                    Spanned::new(none(), format!("{},{}", i + 1, j + 1)),
                    Spanned::new(none(), FnSpec::describe(g)),
                )
            })
            .collect();
        let c = &s.integrator;
        let sim = SimSection {
            scheme: Some(c.scheme),
            horizon: Some(s.horizon),
            h: Some(c.h),
            epsilon: Some(c.epsilon),
            boundary_tol: Some(c.boundary_tol),
            chatter_cap: Some(c.chatter_cap),
            consensus_tol: Some(c.consensus_tol),
            consensus_window: c.consensus_window,
            sliding_selection: Some(c.sliding_selection),
            seed: Some(self.seed),
            every: Some(self.every),
        };
        let raw = RawFile {
            x0: Spanned::new(none(), s.x0.clone()),
            graph: Spanned::new(
                none(),
                GraphSection {
                    n: p.n(),
                    undirected: false,
                    edges,
                },
            ),
            node_fns,
            edge_fns,
            sim: Some(Spanned::new(none(), sim)),
        };
        toml::to_string(&raw).expect("scenario serializes")
    }
}

impl ParseError {
    fn msg(message: impl Into<String>) -> Self {
        ParseError {
            line: None,
            column: None,
            message: message.into(),
        }
    }

    fn at(mut self, text: &str, span: Option<Range<usize>>) -> Self {
        if let Some(span) = span {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let col = before.len() - before.rfind('\n').map_or(0, |k| k + 1) + 1;
            self.line = Some(line);
            self.column = Some(col);
        }
        self
    }
}

fn build(text: &str, raw: RawFile) -> Result<ScenarioFile, ParseError> {
    let err = |span: Range<usize>, m: String| ParseError::msg(m).at(text, Some(span));

    let graph_span = raw.graph.span();
    let gsec = raw.graph.into_inner();
    let n = gsec.n;
    if n == 0 {
        return Err(err(graph_span, "graph.n must be at least 1".into()));
    }
    let mut edges = Vec::new();
    for e in &gsec.edges {
        let (from, to, w) = *e.get_ref();
        if from == 0 || to == 0 || from > n || to > n {
            return Err(err(e.span(), format!("edge ({from}, {to}) out of range 1..={n}")));
        }
        edges.push((from - 1, to - 1, w));
        if gsec.undirected {
            edges.push((to - 1, from - 1, w));
        }
    }
    let graph = Digraph::from_edges(n, &edges).map_err(|e| err(graph_span.clone(), e.to_string()))?;

    let x0_span = raw.x0.span();
    let x0 = raw.x0.into_inner();
    if x0.len() != n {
        return Err(err(
            x0_span,
            format!("x0 has {} entries, graph has {n} nodes", x0.len()),
        ));
    }

    let mut node_fns = vec![PiecewiseFn::identity(); n];
    let mut indexed = Vec::new();
    for (key, spec) in &raw.node_fns {
        let f = spec.get_ref().build().map_err(|e| err(spec.span(), e.to_string()))?;
        if key.get_ref() == "all" {
            node_fns.iter_mut().for_each(|g| *g = f.clone());
            continue;
        }
        let i = parse_index(key.get_ref(), n).ok_or_else(|| {
            err(
                key.span(),
                format!("node_fns key {:?} is neither \"all\" nor 1..={n}", key.get_ref()),
            )
        })?;
        indexed.push((i, f));
    }
    for (i, f) in indexed {
        node_fns[i] = f;
    }

    let mut edge_fns = BTreeMap::new();
    let mut indexed = Vec::new();
    for (key, spec) in &raw.edge_fns {
        let g = spec.get_ref().build().map_err(|e| err(spec.span(), e.to_string()))?;
        if key.get_ref() == "all" {
            for (from, to, _) in graph.edges() {
                edge_fns.insert((to, from), g.clone());
            }
            continue;
        }
        let bad = || {
            err(
                key.span(),
                format!(
                    "edge_fns key {:?} must be \"all\" or \"i,j\" with an edge from j to i",
                    key.get_ref()
                ),
            )
        };
        let (a, b) = key.get_ref().split_once(',').ok_or_else(bad)?;
        let i = parse_index(a, n).ok_or_else(bad)?;
        let j = parse_index(b, n).ok_or_else(bad)?;
        if !graph.has_edge(j, i) {
            return Err(bad());
        }
        indexed.push(((i, j), g));
    }
    edge_fns.extend(indexed);

    let (sim, sim_span) = match raw.sim {
        Some(s) => {
            let span = s.span();
            (s.into_inner(), span)
        }
        None => (SimSection::default(), 0..0),
    };
    let d = IntegratorConfig::default();
    let integrator = IntegratorConfig {
        scheme: sim.scheme.unwrap_or(d.scheme),
        h: sim.h.unwrap_or(d.h),
        epsilon: sim.epsilon.unwrap_or(d.epsilon),
        boundary_tol: sim.boundary_tol.unwrap_or(d.boundary_tol),
        chatter_cap: sim.chatter_cap.unwrap_or(d.chatter_cap),
        consensus_tol: sim.consensus_tol.unwrap_or(d.consensus_tol),
        consensus_window: sim.consensus_window.or(d.consensus_window),
        sliding_selection: sim.sliding_selection.unwrap_or(d.sliding_selection),
    };
    let every = sim.every.unwrap_or(1);
    if every == 0 {
        return Err(err(sim_span, "sim.every must be at least 1".into()));
    }
    let protocol = Protocol::new(graph, node_fns, edge_fns).map_err(|e| ParseError::msg(e.to_string()))?;
    let scenario = Scenario::new(protocol, x0, sim.horizon.unwrap_or(DEFAULT_HORIZON), integrator)
        .map_err(|e| err(sim_span, e.to_string()))?;
    Ok(ScenarioFile {
        scenario,
        seed: sim.seed.unwrap_or(0),
        every,
    })
}

fn parse_index(s: &str, n: usize) -> Option<usize> {
    let k: usize = s.trim().parse().ok()?;
    (1..=n).contains(&k).then(|| k - 1)
}
