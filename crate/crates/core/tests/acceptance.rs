//! Acceptance criteria 1 to 10. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

mod common;

use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;

use rayon::prelude::*;

use signcons::analysis::ph_decompose;
use signcons::dynamics::{simulate, simulate_error, Classification, IntegratorConfig, Scenario, Scheme};
use signcons::filippov::{filippov_set, FilippovPolytope};
use signcons::graph::Digraph;
use signcons::nonlin::{PiecewiseFn, Primitive};
use signcons::protocol::Protocol;

use common::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, msg: String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg)
    }
}

fn triangle() -> Digraph {
    Digraph::undirected(3, &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)]).unwrap()
}

fn pair() -> Digraph {
    Digraph::undirected(2, &[(0, 1, 1.0)]).unwrap()
}

fn leader_follower() -> Digraph {
    Digraph::from_edges(2, &[(0, 1, 1.0)]).unwrap()
}

fn check_range(p: &FilippovPolytope, lo: f64, hi: f64) -> Result<(), String> {
    let r = p.sliding_range().ok_or("no sliding range")?;
    ensure(
        (r.lo - lo).abs() < 1e-9 && (r.hi - hi).abs() < 1e-9,
        format!("range [{}, {}], want [{lo}, {hi}]", r.lo, r.hi),
    )
}

fn nonincreasing(series: &[f64], slack: f64) -> bool {
    series.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn consensus_value(c: &Classification) -> Option<f64> {
    match c {
        Classification::Consensus { value } => Some(*value),
        _ => None,
    }
}

fn criterion_1() -> Outcome {
    let p = Protocol::node(triangle(), vec![PiecewiseFn::sign(); 3]).unwrap();
    let set = filippov_set(&p, &[0.0; 3]).map_err(|e| e.to_string())?;
    let mut expected = Vec::new();
    for v in [[1.0, 1.0, -1.0], [1.0, -1.0, 1.0], [-1.0, 1.0, 1.0]] {
        expected.push(v.to_vec());
        expected.push(v.iter().map(|c| -c).collect::<Vec<f64>>());
    }
    let same = set.vertices.len() == expected.len() && expected.iter().all(|e| set.vertices.contains(e));
    ensure(same, format!("vertices {:?}", set.vertices))?;
    check_range(&set, -1.0 / 3.0, 1.0 / 3.0)?;
    Ok("six vertices, sliding range [-1/3, 1/3]".into())
}

fn criterion_2() -> Outcome {
    let sym = Protocol::node(pair(), vec![PiecewiseFn::sign(); 2]).unwrap();
    check_range(&filippov_set(&sym, &[0.0; 2]).map_err(|e| e.to_string())?, 0.0, 0.0)?;
    let relay = Protocol::node(pair(), vec![PiecewiseFn::relay(2.0, -1.0).unwrap(); 2]).unwrap();
    check_range(&filippov_set(&relay, &[0.0; 2]).map_err(|e| e.to_string())?, 0.5, 0.5)?;
    let cfg = IntegratorConfig {
        scheme: Scheme::EventEuler,
        ..IntegratorConfig::default()
    };
    let s = Scenario::new(relay, vec![0.0, 1.0], 2.0, cfg).unwrap();
    let t = simulate(&s).map_err(|e| e.to_string())?;
    let n = t.times.len() as f64;
    let m: Vec<f64> = t.sum.iter().map(|v| v / 2.0).collect();
    let tm = t.times.iter().sum::<f64>() / n;
    let mm = m.iter().sum::<f64>() / n;
    let num: f64 = t.times.iter().zip(&m).map(|(a, b)| (a - tm) * (b - mm)).sum();
    let den: f64 = t.times.iter().map(|a| (a - tm) * (a - tm)).sum();
    let slope = num / den;
    ensure((slope - 0.5).abs() <= 0.01, format!("mean slope {slope}"))?;
    Ok(format!("ranges [0,0] and [1/2,1/2], mean slope {slope:.6}"))
}

fn criterion_3() -> Outcome {
    let p = Protocol::uniform_edge(triangle(), PiecewiseFn::relay(1.5, -0.5).unwrap()).unwrap();
    let set = filippov_set(&p, &[0.0; 3]).map_err(|e| e.to_string())?;
    ensure(set.contains(&[1.0, 1.0, 1.0]), format!("vertices {:?}", set.vertices))?;
    Ok(format!("1 in the hull of {} vertices", set.vertices.len()))
}

fn criterion_4() -> Outcome {
    let p = Protocol::node(leader_follower(), vec![PiecewiseFn::sat(0.0, 1.0).unwrap(); 2]).unwrap();
    let s = Scenario::new(p, vec![0.0, 1.0], 10.0, IntegratorConfig::default()).unwrap();
    let t = simulate(&s).map_err(|e| e.to_string())?;
    let dev = max_abs_diff(t.final_state(), &[0.0, 1.0]);
    ensure(dev < 1e-9, format!("final state moved by {dev:e}"))?;
    ensure(
        t.classification == Classification::NonConsensus,
        format!("classified {}", t.classification),
    )?;
    Ok(format!("|x(T) - x0| = {dev:e}, non-consensus"))
}

fn criterion_5() -> Outcome {
    let f = PiecewiseFn::new(
        vec![-1.0, 1.0],
        vec![
            Primitive::Affine {
                slope: 1.0,
                offset: 1.0,
            },
            Primitive::Affine {
                slope: 1.0,
                offset: 0.0,
            },
            Primitive::Affine {
                slope: 1.0,
                offset: -1.0,
            },
        ],
        vec![-1.0, 1.0],
    )
    .unwrap();
    let p = Protocol::node(leader_follower(), vec![f; 2]).unwrap();
    let cfg = IntegratorConfig {
        h: 1e-4,
        epsilon: 1e-3,
        ..IntegratorConfig::default()
    };
    let s = Scenario::new(p, vec![0.0, 2.0], 10.0, cfg).unwrap();
    let t = simulate(&s).map_err(|e| e.to_string())?;
    let err = t
        .times
        .iter()
        .zip(&t.states)
        .map(|(&s, x)| (x[1] - (1.0 + (-s).exp())).abs())
        .fold(0.0, f64::max);
    ensure(err < 5e-3, format!("max error {err:e}"))?;
    let dev = max_abs_diff(t.final_state(), &[0.0, 1.0]);
    ensure(dev < 1e-2, format!("final state off by {dev:e}"))?;
    Ok(format!("max error {err:e}, final offset {dev:e}"))
}

fn criterion_6() -> Outcome {
    let fails: Vec<String> = (0..50u64)
        .into_par_iter()
        .filter_map(|k| {
            let s = node_scenario(1000 + k, ROOT_CASES[k as usize % 3]);
            let t = match simulate(&s) {
                Ok(t) => t,
                Err(e) => return Some(format!("seed {}: {e}", 1000 + k)),
            };
            let slack = 2.0 * s.integrator.h * rhs_bound(&s);
            let lo = s.x0.iter().copied().fold(f64::INFINITY, f64::min) - 1e-2;
            let hi = s.x0.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 1e-2;
            let boxed = t.states.iter().flatten().all(|&v| lo <= v && v <= hi);
            let ok = consensus_value(&t.classification).is_some()
                && t.final_diameter() < 1e-3
                && nonincreasing(&t.v, slack)
                && nonincreasing(&t.w, slack)
                && boxed;
            (!ok).then(|| {
                format!(
                    "seed {}: {} diameter {:e} box {boxed}",
                    1000 + k,
                    t.classification,
                    t.final_diameter()
                )
            })
        })
        .collect();
    ensure(fails.is_empty(), fails.join("; "))?;
    Ok("50/50 reach consensus, V and W nonincreasing, box invariant".into())
}

fn criterion_7() -> Outcome {
    let fails: Vec<String> = (0..25u64)
        .into_par_iter()
        .filter_map(|k| {
            let odd = k % 2 == 0;
            let s = undirected_edge_scenario(2000 + k, odd);
            let t = match simulate(&s) {
                Ok(t) => t,
                Err(e) => return Some(format!("seed {}: {e}", 2000 + k)),
            };
            let Some(value) = consensus_value(&t.classification) else {
                return Some(format!("seed {}: {}", 2000 + k, t.classification));
            };
            if odd {
                let total: f64 = s.x0.iter().sum();
                let mean = total / s.x0.len() as f64;
                let drift = t.sum.iter().map(|v| (v - total).abs()).fold(0.0, f64::max);
                if (value - mean).abs() > 1e-3 || drift >= 1e-3 {
                    return Some(format!("seed {}: value {value} mean {mean} drift {drift:e}", 2000 + k));
                }
            }
            None
        })
        .collect();
    ensure(fails.is_empty(), fails.join("; "))?;
    Ok("25/25 reach consensus, odd cases keep the average".into())
}

fn criterion_8() -> Outcome {
    let p = Protocol::node(triangle(), vec![PiecewiseFn::sign(); 3]).unwrap();
    let s = Scenario::new(p, vec![0.0, 1.0, 2.0], 10.0, IntegratorConfig::default()).unwrap();
    let e = simulate_error(&s).map_err(|e| e.to_string())?;
    let last = *e.norm1.last().unwrap();
    ensure(last < 1e-3, format!("|z(T)|_1 = {last:e}"))?;
    let gap = max_abs_diff(&e.v1, &e.norm1);
    ensure(gap < 1e-9, format!("V1 differs from |z|_1 by {gap:e}"))?;
    ensure(nonincreasing(&e.v1, 1e-9), "V1 increases".into())?;
    let ph = ph_decompose(s.protocol.graph()).map_err(|e| e.to_string())?;
    ensure(ph.psd_ok, format!("min eigenvalue {:e}", ph.min_eigenvalue))?;
    Ok(format!("|z(T)|_1 = {last:e}, V1 = |z|_1, symmetric part psd"))
}

fn criterion_9() -> Outcome {
    let fails: Vec<String> = (0..20u64)
        .into_par_iter()
        .filter_map(|k| {
            let (p, x) = small_instance(3000 + k);
            let exact = match filippov_set(&p, &x) {
                Ok(s) => s,
                Err(e) => return Some(format!("seed {}: {e}", 3000 + k)),
            };
            let sampled = FilippovPolytope::new(x.len(), sampled_values(&p, &x, 10_000, 1e-7, &mut rng(k)));
            let inner = sampled.vertices.iter().all(|v| exact.contains_within(v, 1e-6));
            let outer = exact.vertices.iter().all(|v| sampled.contains_within(v, 1e-6));
            (!(inner && outer))
                .then(|| format!("seed {}: sampled in exact {inner}, exact in sampled {outer}", 3000 + k))
        })
        .collect();
    ensure(fails.is_empty(), fails.join("; "))?;
    Ok("20/20 exact sets match 10000-direction sampling".into())
}

fn criterion_10() -> Outcome {
    let diffs: Vec<Result<f64, String>> = (0..10u64)
        .into_par_iter()
        .map(|k| {
            let s = node_scenario(1000 + k, ROOT_CASES[k as usize % 3]);
            let fine = s.clone().with_integrator(IntegratorConfig {
                h: s.integrator.h / 8.0,
                epsilon: s.integrator.epsilon / 8.0,
                ..s.integrator
            });
            let a = simulate(&s).map_err(|e| e.to_string())?;
            let b = simulate(&fine).map_err(|e| e.to_string())?;
            match (consensus_value(&a.classification), consensus_value(&b.classification)) {
                (Some(u), Some(v)) => Ok((u - v).abs()),
                _ => Err(format!(
                    "seed {}: {} / {}",
                    1000 + k,
                    a.classification,
                    b.classification
                )),
            }
        })
        .collect();
    let mut worst: f64 = 0.0;
    for d in diffs {
        worst = worst.max(d?);
    }
    ensure(worst < 1e-3, format!("worst difference {worst:e}"))?;
    Ok(format!("worst difference {worst:e}"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("sign triangle Filippov set", criterion_1),
        ("asymmetric pair sliding", criterion_2),
        ("edge relay velocity 1", criterion_3),
        ("saturation pair stays put", criterion_4),
        ("shifted identity pair", criterion_5),
        ("random node protocols", criterion_6),
        ("random undirected edge protocols", criterion_7),
        ("error dynamics", criterion_8),
        ("exact vs sampled Filippov sets", criterion_9),
        ("refinement stability", criterion_10),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = panic::catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {} ({name}): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {} ({name}): {detail}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
