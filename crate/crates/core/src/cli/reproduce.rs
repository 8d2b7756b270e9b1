//! Bundled worked examples and the outcome each one is expected to show.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use crate::analysis::{analyze, ph_decompose, Prediction, RootCondition};
use crate::dynamics::{simulate, simulate_error, Classification, ErrorTrajectory, Trajectory};
use crate::filippov::{filippov_set, FilippovPolytope};
use crate::scenario::ScenarioFile;

use super::CliError;

/// `(name, file contents)` of every bundled scenario.
pub const BUNDLED: &[(&str, &str)] = &[
    ("saturation_pair", include_str!("../../scenarios/saturation_pair.toml")),
    (
        "shifted_identity_pair",
        include_str!("../../scenarios/shifted_identity_pair.toml"),
    ),
    ("sign_triangle", include_str!("../../scenarios/sign_triangle.toml")),
    ("pipe_network", include_str!("../../scenarios/pipe_network.toml")),
    (
        "continuous_root_triangle",
        include_str!("../../scenarios/continuous_root_triangle.toml"),
    ),
    (
        "sign_leader_follower",
        include_str!("../../scenarios/sign_leader_follower.toml"),
    ),
    ("sign_two_cycle", include_str!("../../scenarios/sign_two_cycle.toml")),
    ("relay_two_cycle", include_str!("../../scenarios/relay_two_cycle.toml")),
    (
        "relay_edge_triangle",
        include_str!("../../scenarios/relay_edge_triangle.toml"),
    ),
    ("sign_edge_cycle", include_str!("../../scenarios/sign_edge_cycle.toml")),
    (
        "sign_triangle_error",
        include_str!("../../scenarios/sign_triangle_error.toml"),
    ),
];

/// Scenarios used by each example id, 1-based.
const EXAMPLES: [&[&str]; 10] = [
    &["saturation_pair"],
    &["shifted_identity_pair"],
    &["sign_triangle"],
    &["pipe_network"],
    &["continuous_root_triangle"],
    &["sign_leader_follower"],
    &["sign_two_cycle", "relay_two_cycle"],
    &["relay_edge_triangle"],
    &["sign_edge_cycle"],
    &["sign_triangle_error"],
];

pub fn bundled(name: &str) -> Option<ScenarioFile> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, text)| ScenarioFile::parse(text).expect("bundled scenarios parse"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub id: u8,
    pub scenarios: Vec<&'static str>,
    pub checks: Vec<Check>,
    pub artifacts: Vec<PathBuf>,
}

impl Report {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

struct Ctx {
    checks: Vec<Check>,
    artifacts: Vec<PathBuf>,
    out: Option<PathBuf>,
}

impl Ctx {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.checks.push(Check {
            name: name.to_string(),
            pass,
            detail,
        });
    }

    fn write(&mut self, file: &str, body: impl FnOnce(&mut Vec<u8>) -> io::Result<()>) -> Result<(), CliError> {
        let Some(dir) = &self.out else { return Ok(()) };
        let path = dir.join(file);
        let mut buf = Vec::new();
        body(&mut buf).map_err(|e| CliError::Output(path.display().to_string(), e))?;
        fs::write(&path, buf).map_err(|e| CliError::Output(path.display().to_string(), e))?;
        self.artifacts.push(path);
        Ok(())
    }

    fn trajectory(&mut self, name: &str, f: &ScenarioFile) -> Result<Trajectory, CliError> {
        let t = simulate(&f.scenario)?;
        self.write(&format!("{name}.csv"), |b| t.write_csv(b, f.every))?;
        Ok(t)
    }

    fn error_trajectory(&mut self, name: &str, f: &ScenarioFile) -> Result<ErrorTrajectory, CliError> {
        let e = simulate_error(&f.scenario)?;
        self.write(&format!("{name}_error.csv"), |b| e.write_csv(b, f.every))?;
        Ok(e)
    }
}

/// Runs example `id` (1..=10), writing artifacts under `out` when given.
pub fn run(id: u8, out: Option<&Path>) -> Result<Report, CliError> {
    let names = EXAMPLES
        .get(usize::from(id).wrapping_sub(1))
        .ok_or_else(|| CliError::Usage(format!("example id {id} is not in 1..=10")))?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| CliError::Output(dir.display().to_string(), e))?;
    }
    let mut cx = Ctx {
        checks: Vec::new(),
        artifacts: Vec::new(),
        out: out.map(Path::to_path_buf),
    };
    let files: Vec<ScenarioFile> = names.iter().map(|n| bundled(n).expect("registered scenario")).collect();
    for (name, f) in names.iter().zip(&files) {
        let text = f.to_toml();
        cx.write(&format!("{name}.toml"), |b| {
            b.extend_from_slice(text.as_bytes());
            Ok(())
        })?;
        let report = analyze(&f.scenario).to_text();
        cx.write(&format!("{name}_analysis.txt"), |b| {
            b.extend_from_slice(report.as_bytes());
            Ok(())
        })?;
    }
    let f = &files[0];
    let zero = vec![0.0; f.scenario.x0.len()];
    match id {
        1 => {
            let t = cx.trajectory(names[0], f)?;
            let dev = max_abs_diff(t.final_state(), &f.scenario.x0);
            cx.check("state never moves", dev < 1e-9, format!("max |x(T) - x0| = {dev:e}"));
            cx.check(
                "no consensus",
                t.classification == Classification::NonConsensus,
                t.classification.to_string(),
            );
            let r = analyze(&f.scenario);
            cx.check(
                "saturation flagged as not sign-preserving",
                !r.all_sign_preserving(),
                format!("prediction {}", r.prediction),
            );
        }
        2 => {
            let t = cx.trajectory(names[0], f)?;
            let err = t
                .times
                .iter()
                .zip(&t.states)
                .map(|(&s, x)| (x[1] - (1.0 + (-s).exp())).abs())
                .fold(0.0, f64::max);
            cx.check("follower tracks 1 + e^-t", err < 5e-3, format!("max error {err:e}"));
            let dev = max_abs_diff(t.final_state(), &[0.0, 1.0]);
            cx.check("stops at [0, 1]", dev < 1e-2, format!("|x(T) - [0,1]| = {dev:e}"));
        }
        3 => {
            let p = filippov_set(&f.scenario.protocol, &zero)?;
            let expected = signed_permutations();
            cx.check(
                "six vertices +-[1,1,-1] and permutations",
                same_vertex_set(&p, &expected),
                format!("{:?}", p.vertices),
            );
            range_check(&mut cx, &p, -1.0 / 3.0, 1.0 / 3.0);
            let t = cx.trajectory(names[0], f)?;
            let ok = matches!(t.classification, Classification::SlidingConsensus { rate } if (rate - 1.0 / 3.0).abs() < 1e-2);
            cx.check("slides at rate 1/3 when told to", ok, t.classification.to_string());
        }
        4 => {
            let e = cx.error_trajectory(names[0], f)?;
            let imbalance = e.states.iter().map(|z| z.iter().sum::<f64>().abs()).fold(0.0, f64::max);
            cx.check(
                "net inflow sums to zero",
                imbalance < 1e-9,
                format!("max |1'z| = {imbalance:e}"),
            );
            let last = *e.norm1.last().unwrap();
            cx.check("inflows vanish", last < 1e-3, format!("|z(T)|_1 = {last:e}"));
            monotone_check(&mut cx, "storage function nonincreasing", &e.v1, 1e-9);
            let r = analyze(&f.scenario);
            cx.check(
                "error convergence and consensus both certified",
                r.error_rule && r.prediction == Prediction::ConsensusGuaranteed,
                format!("error_rule={} prediction={}", r.error_rule, r.prediction),
            );
        }
        5 => {
            let r = analyze(&f.scenario);
            cx.check(
                "continuous root condition",
                r.node_rule == Some(RootCondition::ContinuousRoot),
                format!("{:?}", r.node_rule),
            );
            cx.check(
                "consensus guaranteed",
                r.prediction == Prediction::ConsensusGuaranteed,
                r.prediction.to_string(),
            );
            let p = filippov_set(&f.scenario.protocol, &zero)?;
            let first_zero = p.vertices.iter().all(|v| v[0] == 0.0);
            cx.check(
                "agent 1 has zero velocity at consensus",
                first_zero,
                format!("{:?}", p.vertices),
            );
            range_check(&mut cx, &p, 0.0, 0.0);
            let t = cx.trajectory(names[0], f)?;
            consensus_check(&mut cx, &t);
        }
        6 => {
            let t = cx.trajectory(names[0], f)?;
            let moved = t.states.iter().map(|x| x[0].abs()).fold(0.0, f64::max);
            cx.check("leader constant", moved == 0.0, format!("max |x_1| = {moved:e}"));
            let ok = matches!(t.classification, Classification::Consensus { value } if value.abs() < 1e-3);
            cx.check("consensus at 0", ok, t.classification.to_string());
            let r = analyze(&f.scenario);
            cx.check(
                "single root condition",
                r.node_rule == Some(RootCondition::SingleRoot),
                format!("{:?}", r.node_rule),
            );
        }
        7 => {
            let p = filippov_set(&files[0].scenario.protocol, &zero)?;
            range_check(&mut cx, &p, 0.0, 0.0);
            let r = analyze(&files[0].scenario);
            cx.check(
                "symmetric jumps: consensus guaranteed",
                r.node_rule == Some(RootCondition::SymmetricPair),
                format!("{:?}", r.node_rule),
            );
            let p = filippov_set(&files[1].scenario.protocol, &zero)?;
            range_check(&mut cx, &p, 0.5, 0.5);
            let r = analyze(&files[1].scenario);
            cx.check(
                "asymmetric jumps: sliding possible",
                r.prediction == Prediction::SlidingPossible,
                r.prediction.to_string(),
            );
            let t = cx.trajectory(names[1], &files[1])?;
            let slope = mean_slope(&t);
            cx.check(
                "mean state slope 1/2",
                (slope - 0.5).abs() < 0.01,
                format!("slope {slope}"),
            );
        }
        8 => {
            let p = filippov_set(&f.scenario.protocol, &zero)?;
            let ok = p.contains(&[1.0, 1.0, 1.0]);
            cx.check("1 is a Filippov velocity", ok, format!("{} vertices", p.vertices.len()));
            let r = analyze(&f.scenario);
            cx.check(
                "paired jumps do not cancel",
                !r.undirected_edge_rule && r.prediction == Prediction::SlidingPossible,
                r.prediction.to_string(),
            );
            let t = cx.trajectory(names[0], f)?;
            let ok = matches!(t.classification, Classification::SlidingConsensus { rate } if (rate - 1.0).abs() < 1e-2);
            cx.check("slides at rate 1", ok, t.classification.to_string());
        }
        9 => {
            let r = analyze(&f.scenario);
            cx.check(
                "no edge result applies",
                !r.undirected_edge_rule && !r.continuous_edge_rule && r.combined_rule.is_none(),
                format!(
                    "undirected_edge_rule={} continuous_edge_rule={}",
                    r.undirected_edge_rule, r.continuous_edge_rule
                ),
            );
            cx.check(
                "sliding possible",
                r.prediction == Prediction::SlidingPossible,
                r.prediction.to_string(),
            );
            let p = filippov_set(&f.scenario.protocol, &zero)?;
            cx.check(
                "same set as the node triangle",
                same_vertex_set(&p, &signed_permutations()),
                format!("{:?}", p.vertices),
            );
            let t = cx.trajectory(names[0], f)?;
            let ok = matches!(t.classification, Classification::SlidingConsensus { rate } if (rate - 1.0 / 3.0).abs() < 1e-2);
            cx.check("slides at rate 1/3 when told to", ok, t.classification.to_string());
        }
        10 => {
            let e = cx.error_trajectory(names[0], f)?;
            let last = *e.norm1.last().unwrap();
            cx.check("error vanishes", last < 1e-3, format!("|z(T)|_1 = {last:e}"));
            let gap =
                e.v1.iter()
                    .zip(&e.norm1)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
            cx.check("storage function is the 1-norm", gap < 1e-9, format!("max gap {gap:e}"));
            monotone_check(&mut cx, "1-norm nonincreasing", &e.v1, 1e-9);
            let ph = ph_decompose(f.scenario.protocol.graph()).map_err(|e| CliError::Usage(e.to_string()))?;
            cx.check(
                "symmetric part semidefinite",
                ph.psd_ok,
                format!("min eigenvalue {:e}", ph.min_eigenvalue),
            );
        }
        _ => unreachable!("id checked above"),
    }
    Ok(Report {
        id,
        scenarios: names.to_vec(),
        checks: cx.checks,
        artifacts: cx.artifacts,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn signed_permutations() -> Vec<Vec<f64>> {
    let base = [[1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0]];
    base.iter()
        .flat_map(|v| [v.to_vec(), v.iter().map(|c| -c).collect()])
        .collect()
}

/// Equal as sets, exact comparison.
fn same_vertex_set(p: &FilippovPolytope, expected: &[Vec<f64>]) -> bool {
    p.vertices.iter().all(|v| expected.contains(v)) && expected.iter().all(|v| p.vertices.contains(v))
}

fn range_check(cx: &mut Ctx, p: &FilippovPolytope, lo: f64, hi: f64) {
    let r = p.sliding_range();
    let ok = r.is_some_and(|r| (r.lo - lo).abs() < 1e-9 && (r.hi - hi).abs() < 1e-9);
    cx.check(
        &format!("sliding range [{lo:.4}, {hi:.4}]"),
        ok,
        r.map_or("empty".into(), |r| format!("[{:?}, {:?}]", r.lo, r.hi)),
    );
}

fn monotone_check(cx: &mut Ctx, name: &str, series: &[f64], slack: f64) {
    let rise = series.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    cx.check(name, rise <= slack, format!("largest increase {rise:e}"));
}

fn consensus_check(cx: &mut Ctx, t: &Trajectory) {
    cx.check(
        "consensus",
        matches!(t.classification, Classification::Consensus { .. }),
        t.summary(),
    );
}

/// Least-squares slope of the mean state over the whole run.
fn mean_slope(t: &Trajectory) -> f64 {
    let n = t.times.len() as f64;
    let m: Vec<f64> = t.sum.iter().map(|s| s / t.final_state().len() as f64).collect();
    let tm = t.times.iter().sum::<f64>() / n;
    let mm = m.iter().sum::<f64>() / n;
    let num: f64 = t.times.iter().zip(&m).map(|(a, b)| (a - tm) * (b - mm)).sum();
    let den: f64 = t.times.iter().map(|a| (a - tm) * (a - tm)).sum();
    num / den
}
