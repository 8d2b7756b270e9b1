//! Simulation of the differential inclusion `x' in F[h](x)`.
//!
//! Two schemes are available. [`Scheme::Smoothed`] replaces every jump by a
//! boundary layer of width `epsilon` and integrates the resulting ODE with
//! classical RK4. [`Scheme::EventEuler`] keeps the discontinuities, locates
//! crossings of the switching surfaces by bisection and, once a surface
//! chatters, slides along it with a velocity taken from the exact Filippov
//! set.

mod classify;
mod error;
mod event;

use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filippov::FilippovError;
use crate::nonlin::{Mollified, PiecewiseFn};
use crate::protocol::Protocol;

pub use classify::{classify, Classification};
pub use error::{simulate_error, ErrorTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Smoothed,
    EventEuler,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Smoothed => "smoothed",
            Scheme::EventEuler => "event_euler",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    /// Step size.
    pub h: f64,
    /// Boundary-layer width (smoothed scheme).
    pub epsilon: f64,
    /// Landing accuracy on switching surfaces (event scheme).
    pub boundary_tol: f64,
    /// Flips per unit time after which a surface is treated as sliding.
    pub chatter_cap: f64,
    pub consensus_tol: f64,
    /// Length of the final window used by [`classify`]; `None` means 10% of
    /// the horizon.
    pub consensus_window: Option<f64>,
    /// Where in the admissible range of consensus velocities a sliding step
    /// is placed: 0 is the slowest, 1 the fastest, 0.5 the midpoint.
    pub sliding_selection: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            scheme: Scheme::Smoothed,
            h: 1e-3,
            epsilon: 1e-2,
            boundary_tol: 1e-8,
            chatter_cap: 50.0,
            consensus_tol: 1e-4,
            consensus_window: None,
            sliding_selection: 0.5,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SimError::Config(format!("{name} must be positive, got {v}")))
            }
        };
        positive("h", self.h)?;
        positive("epsilon", self.epsilon)?;
        positive("boundary_tol", self.boundary_tol)?;
        positive("chatter_cap", self.chatter_cap)?;
        positive("consensus_tol", self.consensus_tol)?;
        if let Some(w) = self.consensus_window {
            positive("consensus_window", w)?;
        }
        if !(0.0..=1.0).contains(&self.sliding_selection) {
            return Err(SimError::Config(format!(
                "sliding_selection must lie in [0, 1], got {}",
                self.sliding_selection
            )));
        }
        Ok(())
    }

    pub fn window(&self, horizon: f64) -> f64 {
        self.consensus_window.unwrap_or(0.1 * horizon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub protocol: Protocol,
    pub x0: Vec<f64>,
    pub horizon: f64,
    pub integrator: IntegratorConfig,
}

impl Scenario {
    pub fn new(protocol: Protocol, x0: Vec<f64>, horizon: f64, integrator: IntegratorConfig) -> Result<Self, SimError> {
        let s = Scenario {
            protocol,
            x0,
            horizon,
            integrator,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.x0.len() != self.protocol.n() {
            return Err(SimError::Config(format!(
                "x0 has {} entries but the graph has {} nodes",
                self.x0.len(),
                self.protocol.n()
            )));
        }
        if self.x0.iter().any(|v| !v.is_finite()) {
            return Err(SimError::Config("x0 must be finite".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(SimError::Config(format!(
                "horizon must be positive, got {}",
                self.horizon
            )));
        }
        self.integrator.validate()
    }

    pub fn with_integrator(mut self, integrator: IntegratorConfig) -> Self {
        self.integrator = integrator;
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("state left the bound {bound:.3e} at t = {t}")]
    Divergence { t: f64, bound: f64 },
    #[error("step budget exhausted at t = {t} (Zeno-like switching)")]
    StepLimit { t: f64 },
    #[error("no sliding velocity on the locked surfaces at t = {t}")]
    SlidingFailure { t: f64 },
    #[error(transparent)]
    Filippov(#[from] FilippovError),
    #[error("error dynamics need a strongly connected graph")]
    NotStronglyConnected,
    #[error("error dynamics need identity edge functions")]
    EdgeFnsPresent,
}

/// Sampled solution with monitor channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `max_i x_i`
    pub v: Vec<f64>,
    /// `-min_i x_i`
    pub w: Vec<f64>,
    pub diameter: Vec<f64>,
    pub sum: Vec<f64>,
    pub classification: Classification,
    pub stats: RunStats,
}

/// Bookkeeping from the event scheme; zero for the smoothed scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunStats {
    pub flips: usize,
    pub locks: usize,
    pub substeps: usize,
}

impl Trajectory {
    pub(crate) fn from_samples(
        scheme: Scheme,
        times: Vec<f64>,
        states: Vec<Vec<f64>>,
        cfg: &IntegratorConfig,
        horizon: f64,
        stats: RunStats,
    ) -> Self {
        let mut v = Vec::with_capacity(states.len());
        let mut w = Vec::with_capacity(states.len());
        let mut diameter = Vec::with_capacity(states.len());
        let mut sum = Vec::with_capacity(states.len());
        for x in &states {
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            v.push(hi);
            w.push(-lo);
            diameter.push(hi - lo);
            sum.push(x.iter().sum());
        }
        let classification = classify(&times, &states, cfg, horizon);
        Trajectory {
            scheme,
            times,
            states,
            v,
            w,
            diameter,
            sum,
            classification,
            stats,
        }
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least one sample")
    }

    pub fn final_diameter(&self) -> f64 {
        *self.diameter.last().expect("trajectory has at least one sample")
    }

    /// One-line summary `classification=... value=... final_diameter=...`.
    pub fn summary(&self) -> String {
        let value = match self.classification {
            Classification::Consensus { value } => format!("{value}"),
            Classification::SlidingConsensus { rate } => format!("rate:{rate}"),
            _ => "none".to_string(),
        };
        format!(
            "classification={} value={} final_diameter={:e} scheme={}",
            self.classification.name(),
            value,
            self.final_diameter(),
            self.scheme
        )
    }

    /// CSV with header `t,x_1..x_n,V,W,diameter,sum`, keeping every
    /// `every`-th sample and always the last one.
    pub fn write_csv<W: Write>(&self, mut out: W, every: usize) -> io::Result<()> {
        let every = every.max(1);
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x_{i}")));
        header.extend(["V", "W", "diameter", "sum"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        let last = self.times.len().saturating_sub(1);
        for k in (0..self.times.len()).filter(|&k| k % every == 0 || k == last) {
            let mut row = vec![self.times[k]];
            row.extend_from_slice(&self.states[k]);
            row.extend([self.v[k], self.w[k], self.diameter[k], self.sum[k]]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Integrates the scenario with its configured scheme.
pub fn simulate(s: &Scenario) -> Result<Trajectory, SimError> {
    s.validate()?;
    match s.integrator.scheme {
        Scheme::Smoothed => {
            let rhs = MollifiedRhs::new(&s.protocol, s.integrator.epsilon);
            let (times, states) = integrate_rk4(
                |x, out| rhs.eval(x, out),
                &s.x0,
                s.horizon,
                s.integrator.h,
                divergence_bound(&s.x0),
            )?;
            Ok(Trajectory::from_samples(
                Scheme::Smoothed,
                times,
                states,
                &s.integrator,
                s.horizon,
                RunStats::default(),
            ))
        }
        Scheme::EventEuler => event::simulate_event(s),
    }
}

pub(crate) fn divergence_bound(x0: &[f64]) -> f64 {
    1e3 * (1.0 + x0.iter().fold(0.0f64, |m, v| m.max(v.abs())))
}

/// Sample times `0, h, 2h, ..., T`, the last step shortened to land on `T`.
pub(crate) fn time_grid(horizon: f64, h: f64) -> Vec<f64> {
    let steps = ((horizon / h) - 1e-9).ceil().max(1.0) as usize;
    (0..=steps)
        .map(|k| if k == steps { horizon } else { k as f64 * h })
        .collect()
}

pub(crate) fn integrate_rk4<F>(
    mut rhs: F,
    x0: &[f64],
    horizon: f64,
    h: f64,
    bound: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SimError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    let grid = time_grid(horizon, h);
    let mut states = Vec::with_capacity(grid.len());
    let mut x = x0.to_vec();
    states.push(x.clone());
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut tmp = vec![0.0; n];
    for w in grid.windows(2) {
        let dt = w[1] - w[0];
        rhs(&x, &mut k1);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k1[i];
        }
        rhs(&tmp, &mut k2);
        for i in 0..n {
            tmp[i] = x[i] + 0.5 * dt * k2[i];
        }
        rhs(&tmp, &mut k3);
        for i in 0..n {
            tmp[i] = x[i] + dt * k3[i];
        }
        rhs(&tmp, &mut k4);
        for i in 0..n {
            x[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        if x.iter().any(|v| v.is_nan() || v.abs() > bound) {
            return Err(SimError::Divergence { t: w[1], bound });
        }
        states.push(x.clone());
    }
    Ok((grid, states))
}

/// The protocol with every function replaced by its boundary-layer version.
pub(crate) struct MollifiedRhs<'a> {
    nodes: Vec<Option<Mollified<'a>>>,
    /// Per agent: `(neighbour, weight, edge function)`; `None` is identity.
    edges: Vec<Vec<(usize, f64, Option<Mollified<'a>>)>>,
}

impl<'a> MollifiedRhs<'a> {
    pub(crate) fn new(p: &'a Protocol, eps: f64) -> Self {
        let moll = |f: &'a PiecewiseFn| (!f.is_identity()).then(|| f.mollified(eps));
        let nodes = p.node_fns().iter().map(moll).collect();
        let edges = (0..p.n())
            .map(|i| {
                p.graph()
                    .in_neighbors(i)
                    .map(|(j, w)| (j, w, moll(p.edge_fn(i, j))))
                    .collect()
            })
            .collect();
        MollifiedRhs { nodes, edges }
    }

    pub(crate) fn node_only(fns: &'a [PiecewiseFn], eps: f64) -> Self {
        MollifiedRhs {
            nodes: fns
                .iter()
                .map(|f| (!f.is_identity()).then(|| f.mollified(eps)))
                .collect(),
            edges: Vec::new(),
        }
    }

    /// Node functions applied componentwise.
    pub(crate) fn apply_nodes(&self, y: &[f64], out: &mut [f64]) {
        for ((o, &v), f) in out.iter_mut().zip(y).zip(&self.nodes) {
            *o = f.as_ref().map_or(v, |f| f.eval(v));
        }
    }

    pub(crate) fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let s: f64 = self.edges[i]
                .iter()
                .map(|(j, w, g)| {
                    let y = x[*j] - x[i];
                    w * g.as_ref().map_or(y, |g| g.eval(y))
                })
                .sum();
            *o = self.nodes[i].as_ref().map_or(s, |f| f.eval(s));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Digraph;

    fn fig1a(f: PiecewiseFn) -> Protocol {
        let g = Digraph::from_edges(2, &[(0, 1, 1.0)]).unwrap();
        Protocol::node(g, vec![f; 2]).unwrap()
    }

    #[test]
    fn grid_lands_on_horizon() {
        let g = time_grid(1.0, 0.3);
        assert_eq!(g.len(), 5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(time_grid(1.0, 0.25).len(), 5);
        assert_eq!(time_grid(1.0, 1e-3).len(), 1001);
    }

    #[test]
    fn rk4_matches_exponential() {
        let (t, x) = integrate_rk4(|x, o| o[0] = -x[0], &[1.0], 2.0, 0.01, 1e3).unwrap();
        for (ti, xi) in t.iter().zip(&x) {
            assert!((xi[0] - (-ti).exp()).abs() < 1e-9);
        }
    }

    #[test]
    fn divergence_guard_trips() {
        let err = integrate_rk4(|x, o| o[0] = x[0] * x[0], &[1.0], 10.0, 0.01, 1e3).unwrap_err();
        assert!(matches!(err, SimError::Divergence { .. }));
    }

    #[test]
    fn saturation_example_is_stationary() {
        let p = fig1a(PiecewiseFn::sat(0.0, 1.0).unwrap());
        let s = Scenario::new(p, vec![0.0, 1.0], 10.0, IntegratorConfig::default()).unwrap();
        let traj = simulate(&s).unwrap();
        assert_eq!(traj.final_state(), &[0.0, 1.0]);
        assert_eq!(traj.classification, Classification::NonConsensus);
    }

    #[test]
    fn sign_on_directed_pair_reaches_root_value() {
        let p = fig1a(PiecewiseFn::sign());
        let s = Scenario::new(p, vec![0.0, 1.0], 5.0, IntegratorConfig::default()).unwrap();
        let traj = simulate(&s).unwrap();
        assert!(traj.states.iter().all(|x| x[0] == 0.0));
        match traj.classification {
            Classification::Consensus { value } => assert!(value.abs() < 1e-4),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn symmetric_pair_meets_in_the_middle() {
        let g = Digraph::undirected(2, &[(0, 1, 1.0)]).unwrap();
        let p = Protocol::node(g, vec![PiecewiseFn::sign(); 2]).unwrap();
        let s = Scenario::new(p, vec![0.0, 1.0], 2.0, IntegratorConfig::default()).unwrap();
        let traj = simulate(&s).unwrap();
        match traj.classification {
            Classification::Consensus { value } => assert!((value - 0.5).abs() < 1e-9),
            c => panic!("{c:?}"),
        }
        // finite time: at t = 0.5 the gap is already inside the layer
        let k = traj.times.iter().position(|&t| t >= 0.5).unwrap();
        assert!(traj.diameter[k] < 1e-2);
    }

    #[test]
    fn config_validation() {
        let bad = IntegratorConfig {
            h: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = IntegratorConfig {
            sliding_selection: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let p = fig1a(PiecewiseFn::sign());
        assert!(Scenario::new(p.clone(), vec![0.0], 1.0, IntegratorConfig::default()).is_err());
        assert!(Scenario::new(p, vec![0.0, 0.0], -1.0, IntegratorConfig::default()).is_err());
    }

    #[test]
    fn csv_layout_and_thinning() {
        let p = fig1a(PiecewiseFn::sign());
        let s = Scenario::new(p, vec![0.0, 1.0], 0.01, IntegratorConfig::default()).unwrap();
        let traj = simulate(&s).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf, 4).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x_1,x_2,V,W,diameter,sum");
        // samples 0, 4, 8 and the last (10)
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.0,0.0,1.0,1.0,"));
    }
}
