//! Error dynamics `z' in -L F[f](z)` for `z = -L x`.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use super::{divergence_bound, event, integrate_rk4, MollifiedRhs, Scenario, Scheme, SimError};
use crate::protocol::ProtocolKind;

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorTrajectory {
    pub scheme: Scheme,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `|z|_1`
    pub norm1: Vec<f64>,
    /// `sigma^T F(z)` with `F_i` the antiderivative of `f_i` from 0.
    pub v1: Vec<f64>,
    /// `|(I - L L^+) z|_inf`, distance of `z` from the image of `L`.
    pub im_residual: Vec<f64>,
    /// Positive left null vector of `L`, largest entry 1.
    pub sigma: Vec<f64>,
}

impl ErrorTrajectory {
    /// One-line summary of the final error and the largest image residual.
    pub fn summary(&self) -> String {
        let max_res = self.im_residual.iter().copied().fold(0.0, f64::max);
        format!(
            "norm1_final={:e} v1_final={:e} max_im_residual={:e} scheme={}",
            self.norm1.last().copied().unwrap_or(0.0),
            self.v1.last().copied().unwrap_or(0.0),
            max_res,
            self.scheme
        )
    }

    /// CSV with header `t,z_1..z_n,norm1,V1,im_residual`, thinned like
    /// [`super::Trajectory::write_csv`].
    pub fn write_csv<W: Write>(&self, mut out: W, every: usize) -> io::Result<()> {
        let every = every.max(1);
        let n = self.states.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("z_{i}")));
        header.extend(["norm1", "V1", "im_residual"].map(String::from));
        writeln!(out, "{}", header.join(","))?;
        let last = self.times.len().saturating_sub(1);
        for k in (0..self.times.len()).filter(|&k| k % every == 0 || k == last) {
            let mut row = vec![self.times[k]];
            row.extend_from_slice(&self.states[k]);
            row.extend([self.norm1[k], self.v1[k], self.im_residual[k]]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Simulates the error dynamics of a node protocol on a strongly connected
/// graph, starting from `z0 = -L x0`.
///
/// The smoothed scheme integrates `z' = -L f_eps(z)` directly. The event
/// scheme integrates `x` and maps each sample through `-L`.
pub fn simulate_error(s: &Scenario) -> Result<ErrorTrajectory, SimError> {
    s.validate()?;
    let p = &s.protocol;
    if p.kind() != ProtocolKind::Node {
        return Err(SimError::EdgeFnsPresent);
    }
    let graph = p.graph();
    let sigma = graph.perron_left_vector().map_err(|_| SimError::NotStronglyConnected)?;
    let lap = graph.laplacian();
    let minus_l = -&lap;
    let n = p.n();

    let (times, states) = match s.integrator.scheme {
        Scheme::Smoothed => {
            let z0: Vec<f64> = (&minus_l * DVector::from_column_slice(&s.x0)).as_slice().to_vec();
            let rhs = MollifiedRhs::node_only(p.node_fns(), s.integrator.epsilon);
            let mut fz = vec![0.0; n];
            integrate_rk4(
                |z, out| {
                    rhs.apply_nodes(z, &mut fz);
                    for (i, o) in out.iter_mut().enumerate() {
                        *o = (0..n).map(|j| minus_l[(i, j)] * fz[j]).sum();
                    }
                },
                &z0,
                s.horizon,
                s.integrator.h,
                divergence_bound(&z0),
            )?
        }
        Scheme::EventEuler => {
            let traj = event::simulate_event(s)?;
            let zs = traj
                .states
                .iter()
                .map(|x| (&minus_l * DVector::from_column_slice(x)).as_slice().to_vec())
                .collect();
            (traj.times, zs)
        }
    };

    let proj = image_complement_projector(&lap);
    let mut norm1 = Vec::with_capacity(states.len());
    let mut v1 = Vec::with_capacity(states.len());
    let mut im_residual = Vec::with_capacity(states.len());
    for z in &states {
        norm1.push(z.iter().map(|v| v.abs()).sum());
        v1.push(
            z.iter()
                .enumerate()
                .map(|(i, &zi)| sigma[i] * p.node_fn(i).integral_from_zero(zi))
                .sum(),
        );
        let r = &proj * DVector::from_column_slice(z);
        im_residual.push(r.amax());
    }
    Ok(ErrorTrajectory {
        scheme: s.integrator.scheme,
        times,
        states,
        norm1,
        v1,
        im_residual,
        sigma,
    })
}

/// `I - L L^+`.
fn image_complement_projector(lap: &DMatrix<f64>) -> DMatrix<f64> {
    let n = lap.nrows();
    let pinv = lap
        .clone()
        .pseudo_inverse(1e-10)
        .expect("pseudo-inverse with a nonnegative tolerance");
    DMatrix::identity(n, n) - lap * pinv
}
