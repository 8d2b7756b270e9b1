//! Command-line front end.
//!
//! Exit codes: 0 success (or consensus guaranteed), 1 reproduction check
//! failed, 2 sliding possible, 3 no consensus guarantee, 64 usage or parse
//! error, 66 input missing or unreadable, 70 simulation or Filippov
//! failure, 73 output not writable.

pub mod reproduce;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{analyze, Prediction};
use crate::dynamics::{simulate, simulate_error, Classification, Scheme, SimError};
use crate::filippov::{filippov_set, FilippovError, FilippovPolytope};
use crate::scenario::{LoadError, ScenarioFile};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_SLIDING: i32 = 2;
pub const EXIT_NO_GUARANTEE: i32 = 3;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_NO_INPUT: i32 = 66;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_CANT_CREATE: i32 = 73;

/// Offset of the sampled points used by `filippov --samples`.
const SAMPLE_RADIUS: f64 = 1e-7;
const SAMPLE_TOL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "signcons", version, about = "Consensus under discontinuous protocols")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check which convergence results apply; the exit code encodes the
    /// prediction.
    Analyze {
        path: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Integrate a scenario and print a summary line.
    Simulate {
        path: PathBuf,
        /// CSV destination for the trajectory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Simulate the error z = -Lx instead of the state.
        #[arg(long)]
        error: bool,
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        json: bool,
    },
    /// Print the vertices of the Filippov set at a state and its sliding
    /// range.
    Filippov {
        path: PathBuf,
        /// Comma-separated state, e.g. `--at 0,0,0`; defaults to x0.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        at: Option<Vec<f64>>,
        /// Cross-check against this many sampled directions.
        #[arg(long, default_value_t = 0)]
        samples: usize,
        /// Seed for the sampled cross-check; defaults to the file's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        json: bool,
    },
    /// Run a bundled worked example (1..=10) and check its outcome.
    Reproduce {
        #[arg(value_parser = clap::value_parser!(u8).range(1..=10))]
        id: u8,
        /// Directory for scenario copies, reports and CSV files.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Simulate a scenario over a grid of step sizes and smoothing widths,
    /// in parallel.
    Sweep {
        path: PathBuf,
        #[arg(long, value_delimiter = ',')]
        h: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        epsilon: Vec<f64>,
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, Default, Args)]
pub struct Overrides {
    #[arg(long)]
    pub scheme: Option<Scheme>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

impl clap::ValueEnum for Scheme {
    fn value_variants<'a>() -> &'a [Self] {
        &[Scheme::Smoothed, Scheme::EventEuler]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(match self {
            Scheme::Smoothed => "smoothed",
            Scheme::EventEuler => "event_euler",
        }))
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("{0}")]
    Filippov(#[from] FilippovError),
    #[error("cannot write {0}: {1}")]
    Output(String, #[source] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Load(LoadError::Io { .. }) => EXIT_NO_INPUT,
            CliError::Load(LoadError::Parse { .. }) | CliError::Usage(_) => EXIT_USAGE,
            CliError::Sim(_) | CliError::Filippov(_) => EXIT_SOFTWARE,
            CliError::Output(..) => EXIT_CANT_CREATE,
        }
    }

    fn hint(&self) -> Option<&'static str> {
        match self {
            CliError::Filippov(FilippovError::BudgetExceeded { .. }) => Some(
                "hint: the exact set enumerates sign patterns of the surfaces through the point; \
                 move the point off some surfaces or reduce the graph",
            ),
            CliError::Filippov(FilippovError::NestedDiscontinuity { .. }) => {
                Some("hint: use continuous edge functions, or simulate with the smoothed scheme")
            }
            _ => None,
        }
    }
}

pub fn prediction_exit_code(p: Prediction) -> i32 {
    match p {
        Prediction::ConsensusGuaranteed => EXIT_OK,
        Prediction::SlidingPossible => EXIT_SLIDING,
        Prediction::ErrorConvergenceGuaranteed | Prediction::NoGuarantee => EXIT_NO_GUARANTEE,
    }
}

/// Parses `args` (program name first) and runs the command, returning the
/// exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(&cli.command, out) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            if let Some(h) = e.hint() {
                let _ = writeln!(err, "{h}");
            }
            e.exit_code()
        }
    }
}

pub fn execute(cmd: &Command, out: &mut dyn Write) -> Result<i32, CliError> {
    let w = |r: io::Result<()>| r.map_err(|e| CliError::Output("stdout".into(), e));
    match cmd {
        Command::Analyze { path, json } => {
            let f = ScenarioFile::load(path)?;
            let r = analyze(&f.scenario);
            if *json {
                w(writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&r).expect("report serializes")
                ))?;
            } else {
                w(write!(out, "{}", r.to_text()))?;
            }
            Ok(prediction_exit_code(r.prediction))
        }
        Command::Simulate {
            path,
            out: csv,
            error,
            overrides,
            json,
        } => {
            let mut f = ScenarioFile::load(path)?;
            apply(&mut f, overrides);
            if *error {
                let e = simulate_error(&f.scenario)?;
                if let Some(p) = csv {
                    write_file(p, |b| e.write_csv(b, f.every))?;
                }
                if *json {
                    let s = ErrorSummary {
                        scheme: e.scheme,
                        norm1_final: *e.norm1.last().unwrap(),
                        v1_final: *e.v1.last().unwrap(),
                        max_im_residual: e.im_residual.iter().copied().fold(0.0, f64::max),
                        sigma: e.sigma.clone(),
                    };
                    w(writeln!(
                        out,
                        "{}",
                        serde_json::to_string(&s).expect("summary serializes")
                    ))?;
                } else {
                    w(writeln!(out, "{}", e.summary()))?;
                }
            } else {
                let t = simulate(&f.scenario)?;
                if let Some(p) = csv {
                    write_file(p, |b| t.write_csv(b, f.every))?;
                }
                if *json {
                    let s = SimSummary {
                        classification: t.classification,
                        final_diameter: t.final_diameter(),
                        final_state: t.final_state().to_vec(),
                        scheme: t.scheme,
                    };
                    w(writeln!(
                        out,
                        "{}",
                        serde_json::to_string(&s).expect("summary serializes")
                    ))?;
                } else {
                    w(writeln!(out, "{}", t.summary()))?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Filippov {
            path,
            at,
            samples,
            seed,
            json,
        } => {
            let f = ScenarioFile::load(path)?;
            let p = &f.scenario.protocol;
            let x = at.clone().unwrap_or_else(|| f.scenario.x0.clone());
            if x.len() != p.n() {
                return Err(CliError::Usage(format!(
                    "--at has {} entries, the scenario has {} agents",
                    x.len(),
                    p.n()
                )));
            }
            let poly = filippov_set(p, &x)?;
            let range = poly.sliding_range();
            let cross = (*samples > 0).then(|| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(f.seed));
                sampled_agreement(p, &x, &poly, *samples, &mut rng)
            });
            if *json {
                let s = FilippovSummary {
                    at: x,
                    vertices: poly.vertices.clone(),
                    sliding_range: range.map(|r| [r.lo, r.hi]),
                    sampled_agreement: cross,
                };
                w(writeln!(
                    out,
                    "{}",
                    serde_json::to_string_pretty(&s).expect("summary serializes")
                ))?;
            } else {
                w(writeln!(out, "vertices = {}", poly.vertices.len()))?;
                for v in &poly.vertices {
                    let cells: Vec<String> = v.iter().map(|c| format!("{c:?}")).collect();
                    w(writeln!(out, "  [{}]", cells.join(", ")))?;
                }
                match range {
                    Some(r) => w(writeln!(out, "sliding_range = [{:?}, {:?}]", r.lo, r.hi))?,
                    None => w(writeln!(out, "sliding_range = empty"))?,
                }
                if let Some(ok) = cross {
                    w(writeln!(out, "sampled_agreement = {ok} ({samples} directions)"))?;
                }
            }
            Ok(if cross == Some(false) {
                EXIT_CHECK_FAILED
            } else {
                EXIT_OK
            })
        }
        Command::Reproduce { id, out: dir } => {
            let r = reproduce::run(*id, dir.as_deref())?;
            w(writeln!(out, "example {} ({})", r.id, r.scenarios.join(", ")))?;
            for c in &r.checks {
                w(writeln!(
                    out,
                    "{} {}: {}",
                    if c.pass { "PASS" } else { "FAIL" },
                    c.name,
                    c.detail
                ))?;
            }
            for a in &r.artifacts {
                w(writeln!(out, "wrote {}", a.display()))?;
            }
            Ok(if r.pass() { EXIT_OK } else { EXIT_CHECK_FAILED })
        }
        Command::Sweep {
            path,
            h,
            epsilon,
            scheme,
            json,
        } => {
            let f = ScenarioFile::load(path)?;
            let base = f.scenario.integrator;
            let hs = if h.is_empty() { vec![base.h] } else { h.clone() };
            let es = if epsilon.is_empty() {
                vec![base.epsilon]
            } else {
                epsilon.clone()
            };
            let grid: Vec<(f64, f64)> = hs.iter().flat_map(|&a| es.iter().map(move |&b| (a, b))).collect();
            let rows: Vec<SweepRow> = grid
                .par_iter()
                .map(|&(h, eps)| {
                    let mut f = f.clone();
                    apply(
                        &mut f,
                        &Overrides {
                            scheme: *scheme,
                            h: Some(h),
                            epsilon: Some(eps),
                        },
                    );
                    match simulate(&f.scenario) {
                        Ok(t) => SweepRow {
                            h,
                            epsilon: eps,
                            classification: Some(t.classification),
                            final_diameter: Some(t.final_diameter()),
                            error: None,
                        },
                        Err(e) => SweepRow {
                            h,
                            epsilon: eps,
                            classification: None,
                            final_diameter: None,
                            error: Some(e.to_string()),
                        },
                    }
                })
                .collect();
            for r in &rows {
                if *json {
                    w(writeln!(out, "{}", serde_json::to_string(r).expect("row serializes")))?;
                } else {
                    let outcome = match (&r.classification, &r.final_diameter, &r.error) {
                        (Some(c), Some(d), _) => format!("classification={} final_diameter={d:e}", c),
                        (_, _, Some(e)) => format!("error={e}"),
                        _ => unreachable!(),
                    };
                    w(writeln!(out, "h={:e} epsilon={:e} {outcome}", r.h, r.epsilon))?;
                }
            }
            Ok(if rows.iter().any(|r| r.error.is_some()) {
                EXIT_SOFTWARE
            } else {
                EXIT_OK
            })
        }
    }
}

fn apply(f: &mut ScenarioFile, o: &Overrides) {
    let c = &mut f.scenario.integrator;
    if let Some(s) = o.scheme {
        c.scheme = s;
    }
    if let Some(h) = o.h {
        c.h = h;
    }
    if let Some(e) = o.epsilon {
        c.epsilon = e;
    }
}

fn write_file(path: &Path, body: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>) -> Result<(), CliError> {
    let e = |err| CliError::Output(path.display().to_string(), err);
    let mut b = BufWriter::new(File::create(path).map_err(e)?);
    body(&mut b).map_err(e)?;
    b.flush().map_err(e)
}

/// Evaluates the right-hand side at `x + r d` for random unit-box directions
/// `d` and checks mutual hull containment with `poly`.
fn sampled_agreement(
    p: &crate::protocol::Protocol,
    x: &[f64],
    poly: &FilippovPolytope,
    samples: usize,
    rng: &mut ChaCha8Rng,
) -> bool {
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(samples);
    let mut y = vec![0.0; x.len()];
    for _ in 0..samples {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + SAMPLE_RADIUS * rng.random_range(-1.0..=1.0);
        }
        let v = p.eval(&y);
        if !pts.contains(&v) {
            pts.push(v);
        }
    }
    let sampled = FilippovPolytope::new(x.len(), pts);
    sampled.vertices.iter().all(|v| poly.contains_within(v, SAMPLE_TOL))
        && poly.vertices.iter().all(|v| sampled.contains_within(v, SAMPLE_TOL))
}

#[derive(Serialize)]
struct SimSummary {
    classification: Classification,
    final_diameter: f64,
    final_state: Vec<f64>,
    scheme: Scheme,
}

#[derive(Serialize)]
struct ErrorSummary {
    scheme: Scheme,
    norm1_final: f64,
    v1_final: f64,
    max_im_residual: f64,
    sigma: Vec<f64>,
}

#[derive(Serialize)]
struct FilippovSummary {
    at: Vec<f64>,
    vertices: Vec<Vec<f64>>,
    sliding_range: Option<[f64; 2]>,
    sampled_agreement: Option<bool>,
}

#[derive(Serialize)]
struct SweepRow {
    h: f64,
    epsilon: f64,
    classification: Option<Classification>,
    final_diameter: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}
