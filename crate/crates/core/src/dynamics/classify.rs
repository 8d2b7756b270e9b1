use std::fmt;

use serde::Serialize;

use super::IntegratorConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Classification {
    /// Diameter and common value both settled; `value` is the final mean.
    Consensus {
        value: f64,
    },
    /// Agents agree but the common value keeps moving at `rate`.
    SlidingConsensus {
        rate: f64,
    },
    /// Diameter stays away from zero and has stopped decreasing.
    NonConsensus,
    Undetermined,
}

impl Classification {
    pub fn name(&self) -> &'static str {
        match self {
            Classification::Consensus { .. } => "Consensus",
            Classification::SlidingConsensus { .. } => "SlidingConsensus",
            Classification::NonConsensus => "NonConsensus",
            Classification::Undetermined => "Undetermined",
        }
    }
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Classification::Consensus { value } => write!(f, "Consensus({value})"),
            Classification::SlidingConsensus { rate } => write!(f, "SlidingConsensus(rate={rate})"),
            other => f.write_str(other.name()),
        }
    }
}

/// Classifies a sampled trajectory from its final window.
pub fn classify(times: &[f64], states: &[Vec<f64>], cfg: &IntegratorConfig, horizon: f64) -> Classification {
    let Some(&t_end) = times.last() else {
        return Classification::Undetermined;
    };
    let start = t_end - cfg.window(horizon);
    let first = times.partition_point(|&t| t < start - 1e-12);
    let idx: Vec<usize> = (first..times.len()).collect();
    if idx.len() < 2 {
        return Classification::Undetermined;
    }
    let tol = cfg.consensus_tol;
    let diam = |x: &[f64]| {
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        hi - lo
    };
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;

    let max_diam = idx.iter().map(|&k| diam(&states[k])).fold(0.0, f64::max);
    let means: Vec<f64> = idx.iter().map(|&k| mean(&states[k])).collect();
    if max_diam < tol {
        let hi = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = means.iter().copied().fold(f64::INFINITY, f64::min);
        if hi - lo < tol {
            return Classification::Consensus {
                value: *means.last().unwrap(),
            };
        }
        let ts: Vec<f64> = idx.iter().map(|&k| times[k]).collect();
        return Classification::SlidingConsensus {
            rate: least_squares_slope(&ts, &means),
        };
    }
    let d_start = diam(&states[first]);
    let d_end = diam(states.last().unwrap());
    if d_end >= tol && d_start - d_end <= tol {
        Classification::NonConsensus
    } else {
        Classification::Undetermined
    }
}

fn least_squares_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        num += (a - tm) * (b - ym);
        den += (a - tm) * (a - tm);
    }
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(f: impl Fn(f64) -> Vec<f64>, horizon: f64) -> Classification {
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * horizon / 100.0).collect();
        let states: Vec<Vec<f64>> = times.iter().map(|&t| f(t)).collect();
        classify(&times, &states, &IntegratorConfig::default(), horizon)
    }

    #[test]
    fn constant_consensus() {
        assert_eq!(
            run(|_| vec![5.0, 5.0, 5.0], 10.0),
            Classification::Consensus { value: 5.0 }
        );
    }

    #[test]
    fn sliding_rate_is_the_slope() {
        match run(|t| vec![t / 3.0; 3], 10.0) {
            Classification::SlidingConsensus { rate } => assert!((rate - 1.0 / 3.0).abs() < 1e-12),
            c => panic!("{c:?}"),
        }
    }

    #[test]
    fn stalled_gap_is_non_consensus() {
        assert_eq!(run(|_| vec![0.0, 1.0], 10.0), Classification::NonConsensus);
    }

    #[test]
    fn shrinking_gap_is_undetermined() {
        assert_eq!(run(|t| vec![0.0, 1.0 - 0.09 * t], 10.0), Classification::Undetermined);
        let empty: [f64; 0] = [];
        assert_eq!(
            classify(&empty, &[], &IntegratorConfig::default(), 1.0),
            Classification::Undetermined
        );
    }
}
