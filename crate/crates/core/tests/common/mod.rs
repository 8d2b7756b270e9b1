//! Random scenario generators and independent oracles shared by the
//! integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use signcons::dynamics::{IntegratorConfig, Scenario};
use signcons::graph::Digraph;
use signcons::nonlin::{PiecewiseFn, Primitive};
use signcons::protocol::Protocol;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootCase {
    ContinuousRoot,
    SingleRoot,
    SymmetricPair,
}

pub const ROOT_CASES: [RootCase; 3] = [RootCase::ContinuousRoot, RootCase::SingleRoot, RootCase::SymmetricPair];

fn weight(r: &mut ChaCha8Rng) -> f64 {
    r.random_range(1.0..2.0)
}

/// A sign-preserving function continuous at the origin with slope at least
/// one there.
pub fn continuous_fn(r: &mut ChaCha8Rng) -> PiecewiseFn {
    match r.random_range(0..3) {
        0 => {
            let c = r.random_range(0.5..1.5);
            PiecewiseFn::sat(-c, c).unwrap()
        }
        1 => PiecewiseFn::smooth(Primitive::Affine {
            slope: r.random_range(1.0..2.0),
            offset: 0.0,
        })
        .unwrap(),
        _ => PiecewiseFn::log_quantizer(r.random_range(1..4), r.random_range(0.3..0.7), r.random_range(0.5..1.5))
            .unwrap(),
    }
}

/// A relay with independent magnitudes on each side.
pub fn relay_fn(r: &mut ChaCha8Rng) -> PiecewiseFn {
    PiecewiseFn::relay(r.random_range(0.5..1.5), -r.random_range(0.5..1.5)).unwrap()
}

pub fn symmetric_relay(r: &mut ChaCha8Rng) -> PiecewiseFn {
    PiecewiseFn::sign().scaled(r.random_range(0.5..1.5)).unwrap()
}

pub fn any_sign_preserving(r: &mut ChaCha8Rng) -> PiecewiseFn {
    if r.random_bool(0.5) {
        continuous_fn(r)
    } else {
        relay_fn(r)
    }
}

/// Node protocol satisfying the requested root condition, with `n` in
/// `2..=5`, a directed spanning tree and every function sign-preserving.
///
/// The roots `0..k` form a directed cycle (or a 2-cycle), every other node
/// gets an edge from an earlier node, and extra edges never point into the
/// roots, so the root set is exactly `0..k`.
pub fn node_scenario(seed: u64, case: RootCase) -> Scenario {
    let r = &mut rng(seed);
    let n = r.random_range(2..=5usize);
    let k = match case {
        RootCase::SingleRoot => 1,
        RootCase::SymmetricPair => 2,
        RootCase::ContinuousRoot => r.random_range(1..=3usize.min(n)),
    };
    let mut edges = Vec::new();
    if k == 2 {
        edges.push((0, 1, weight(r)));
        edges.push((1, 0, weight(r)));
    } else if k > 2 {
        for i in 0..k {
            edges.push((i, (i + 1) % k, weight(r)));
        }
    }
    for v in k..n {
        let from = r.random_range(0..v);
        edges.push((from, v, weight(r)));
    }
    for _ in 0..r.random_range(0..=n) {
        let from = r.random_range(0..n);
        let to = r.random_range(k.max(1)..n.max(k + 1));
        if to < n && from != to && !edges.iter().any(|&(a, b, _)| a == from && b == to) {
            edges.push((from, to, weight(r)));
        }
    }
    let graph = Digraph::from_edges(n, &edges).unwrap();

    let mut fns: Vec<PiecewiseFn> = (0..n).map(|_| any_sign_preserving(r)).collect();
    match case {
        RootCase::ContinuousRoot => {
            let c = r.random_range(0..k);
            fns[c] = continuous_fn(r);
            for (i, f) in fns.iter_mut().enumerate().take(k) {
                if i != c && r.random_bool(0.7) {
                    *f = relay_fn(r);
                }
            }
        }
        RootCase::SingleRoot => {}
        RootCase::SymmetricPair => {
            fns[0] = symmetric_relay(r);
            fns[1] = symmetric_relay(r);
        }
    }
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    let p = Protocol::node(graph, fns).unwrap();
    Scenario::new(p, x0, 20.0, IntegratorConfig::default()).unwrap()
}

/// Random connected undirected graph on `n` nodes: a random spanning tree
/// plus extra edges.
pub fn undirected_pairs(r: &mut ChaCha8Rng, n: usize) -> Vec<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(r);
    let mut pairs = Vec::new();
    for v in 1..n {
        let u = order[r.random_range(0..v)];
        pairs.push((u, order[v], weight(r)));
    }
    for _ in 0..r.random_range(0..=n) {
        let a = r.random_range(0..n);
        let b = r.random_range(0..n);
        let dup = pairs.iter().any(|&(x, y, _)| (x, y) == (a, b) || (x, y) == (b, a));
        if a != b && !dup {
            pairs.push((a, b, weight(r)));
        }
    }
    pairs
}

/// Edge protocol on a connected undirected graph whose paired edge
/// functions satisfy `g_ij(0-) = -g_ji(0+)`. With `odd` every pair is
/// related by `g_ji(y) = -g_ij(-y)`, which preserves the sum of the states.
pub fn undirected_edge_scenario(seed: u64, odd: bool) -> Scenario {
    let r = &mut rng(seed);
    let n = r.random_range(2..=5usize);
    let pairs = undirected_pairs(r, n);
    let graph = Digraph::undirected(n, &pairs).unwrap();
    let mut edge_fns = BTreeMap::new();
    for &(a, b, _) in &pairs {
        let (up, down) = (r.random_range(0.5..1.5), r.random_range(0.5..1.5));
        let g_ab = PiecewiseFn::relay(up, -down).unwrap();
        let g_ba = if odd {
            g_ab.reflected()
        } else {
            // only the jump at the origin is tied to g_ab
            let tail = r.random_range(0.0..0.5);
            PiecewiseFn::new(
                vec![0.0, 1.0],
                vec![
                    Primitive::Constant { value: -up },
                    Primitive::Constant { value: down },
                    Primitive::Constant { value: down + tail },
                ],
                vec![0.0, down],
            )
            .unwrap()
        };
        edge_fns.insert((a, b), g_ab);
        edge_fns.insert((b, a), g_ba);
    }
    let p = Protocol::new(graph, vec![PiecewiseFn::identity(); n], edge_fns).unwrap();
    let x0: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
    Scenario::new(p, x0, 20.0, IntegratorConfig::default()).unwrap()
}

/// Largest `sup |f|` over the arguments a node or edge function can see
/// while states stay in the initial box.
pub fn rhs_bound(s: &Scenario) -> f64 {
    let p = &s.protocol;
    let lo = s.x0.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = s.x0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let d = hi - lo + 1e-2;
    (0..p.n())
        .map(|i| {
            let inner: f64 = p
                .graph()
                .in_neighbors(i)
                .map(|(j, w)| w * p.edge_fn(i, j).sup_abs(-d, d))
                .sum();
            p.node_fn(i).sup_abs(-inner, inner).max(inner)
        })
        .fold(0.0, f64::max)
}

/// Arbitrary function with at most two breakpoints, one of them at the
/// origin, built from constant and affine pieces. Not necessarily
/// sign-preserving.
pub fn random_piecewise(r: &mut ChaCha8Rng) -> PiecewiseFn {
    let mut bps = vec![0.0];
    if r.random_bool(0.5) {
        let b = r.random_range(0.2..1.0) * if r.random_bool(0.5) { 1.0 } else { -1.0 };
        bps.push(b);
        bps.sort_by(f64::total_cmp);
    }
    let segments = (0..=bps.len())
        .map(|_| {
            if r.random_bool(0.6) {
                Primitive::Constant {
                    value: r.random_range(-2.0..2.0),
                }
            } else {
                Primitive::Affine {
                    slope: r.random_range(-1.0..1.0),
                    offset: r.random_range(-2.0..2.0),
                }
            }
        })
        .collect();
    let pvs = bps.iter().map(|_| r.random_range(-2.0..2.0)).collect();
    PiecewiseFn::new(bps, segments, pvs).unwrap()
}

/// Small protocol (`n <= 3`, node or edge nonlinearities) and a state on
/// some of its switching surfaces.
pub fn small_instance(seed: u64) -> (Protocol, Vec<f64>) {
    let r = &mut rng(seed);
    let n = r.random_range(2..=3usize);
    let mut edges = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i != j && r.random_bool(0.6) {
                edges.push((i, j, r.random_range(0.5..1.5)));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, 1, 1.0));
    }
    let graph = Digraph::from_edges(n, &edges).unwrap();
    let p = if r.random_bool(0.5) {
        let fns = (0..n).map(|_| random_piecewise(r)).collect();
        Protocol::node(graph, fns).unwrap()
    } else {
        let mut edge_fns = BTreeMap::new();
        for (from, to, _) in graph.edges() {
            edge_fns.insert((to, from), random_piecewise(r));
        }
        Protocol::new(graph, vec![PiecewiseFn::identity(); n], edge_fns).unwrap()
    };
    let alpha = r.random_range(-1.0..1.0);
    let mut x = vec![alpha; n];
    if r.random_bool(0.3) {
        // off the consensus line: only some surfaces pass through x
        x[n - 1] += r.random_range(0.3..1.0);
    }
    (p, x)
}

/// Right-hand side values at `x + radius * d` for `count` directions `d`
/// drawn uniformly from the unit box, duplicates removed.
pub fn sampled_values(p: &Protocol, x: &[f64], count: usize, radius: f64, r: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut y = vec![0.0; x.len()];
    for _ in 0..count {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = xi + radius * r.random_range(-1.0..=1.0);
        }
        let v = p.eval(&y);
        if !out.iter().any(|u| u.iter().zip(&v).all(|(a, b)| (a - b).abs() < 1e-9)) {
            out.push(v);
        }
    }
    out
}
