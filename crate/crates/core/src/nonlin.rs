//! Piecewise scalar functions built from a small set of closed-form
//! primitives.
//!
//! A [`PiecewiseFn`] is a finite list of breakpoints with one primitive per
//! open interval (including the two unbounded tails) and an explicit value at
//! every breakpoint. All primitives are continuous on the whole real line, so
//! the one-sided limits at a breakpoint are just the neighbouring primitives
//! evaluated there.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Arguments closer than this to a breakpoint are treated as sitting on it
/// when building Filippov sets.
pub const BREAKPOINT_TOL: f64 = 1e-9;

/// Tolerance used when comparing closed-form one-sided limits.
pub const LIMIT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FnError {
    #[error("breakpoints must be finite and strictly increasing")]
    Breakpoints,
    #[error("expected {expected} segments for {breakpoints} breakpoints, got {got}")]
    SegmentCount {
        breakpoints: usize,
        expected: usize,
        got: usize,
    },
    #[error("expected {expected} point values, got {got}")]
    PointValueCount { expected: usize, got: usize },
    #[error("invalid primitive: {0}")]
    Primitive(String),
    #[error("invalid preset parameters: {0}")]
    Preset(String),
}

/// Closed-form building block used on one open interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Primitive {
    Constant {
        value: f64,
    },
    Affine {
        slope: f64,
        offset: f64,
    },
    /// `clamp(y, lo, hi)`.
    Sat {
        lo: f64,
        hi: f64,
    },
    /// `sign(y) * coeff * |y|^exponent`.
    Power {
        coeff: f64,
        exponent: f64,
    },
}

impl Primitive {
    pub fn validate(&self) -> Result<(), FnError> {
        let ok = match *self {
            Primitive::Constant { value } => value.is_finite(),
            Primitive::Affine { slope, offset } => slope.is_finite() && offset.is_finite(),
            Primitive::Sat { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Primitive::Power { coeff, exponent } => coeff.is_finite() && exponent.is_finite() && exponent > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(FnError::Primitive(format!("{self:?}")))
        }
    }

    #[inline]
    pub fn value(&self, y: f64) -> f64 {
        match *self {
            Primitive::Constant { value } => value,
            Primitive::Affine { slope, offset } => slope * y + offset,
            Primitive::Sat { lo, hi } => y.clamp(lo, hi),
            Primitive::Power { coeff, exponent } => {
                if y == 0.0 {
                    0.0
                } else {
                    y.signum() * coeff * y.abs().powf(exponent)
                }
            }
        }
    }

    /// Antiderivative vanishing at the origin.
    fn antiderivative(&self, y: f64) -> f64 {
        match *self {
            Primitive::Constant { value } => value * y,
            Primitive::Affine { slope, offset } => 0.5 * slope * y * y + offset * y,
            Primitive::Sat { lo, hi } => {
                // G(s) = s^2/2 on [lo, hi], extended linearly with slope lo / hi.
                let inner = |s: f64| 0.5 * s * s;
                if y < lo {
                    inner(lo) + lo * (y - lo)
                } else if y > hi {
                    inner(hi) + hi * (y - hi)
                } else {
                    inner(y)
                }
            }
            Primitive::Power { coeff, exponent } => coeff * y.abs().powf(exponent + 1.0) / (exponent + 1.0),
        }
    }

    fn is_nondecreasing(&self) -> bool {
        match *self {
            Primitive::Constant { .. } | Primitive::Sat { .. } => true,
            Primitive::Affine { slope, .. } => slope >= 0.0,
            Primitive::Power { coeff, .. } => coeff >= 0.0,
        }
    }

    /// Slope at `y` if the primitive is affine on a neighbourhood of `y`.
    pub fn local_slope(&self, y: f64, tol: f64) -> Option<f64> {
        match *self {
            Primitive::Constant { .. } => Some(0.0),
            Primitive::Affine { slope, .. } => Some(slope),
            Primitive::Sat { lo, hi } => {
                if y < lo - tol || y > hi + tol {
                    Some(0.0)
                } else if y > lo + tol && y < hi - tol {
                    Some(1.0)
                } else {
                    None
                }
            }
            Primitive::Power { coeff, exponent } => {
                if exponent == 1.0 {
                    Some(coeff)
                } else {
                    None
                }
            }
        }
    }

    /// Points where the primitive vanishes or changes shape.
    fn special_points(&self) -> Vec<f64> {
        match *self {
            Primitive::Constant { .. } => vec![],
            Primitive::Affine { slope, offset } => {
                if slope != 0.0 {
                    vec![-offset / slope]
                } else {
                    vec![]
                }
            }
            Primitive::Sat { lo, hi } => vec![lo, hi, 0.0],
            Primitive::Power { .. } => vec![0.0],
        }
    }

    fn reflected(&self) -> Primitive {
        // y -> -p(-y)
        match *self {
            Primitive::Constant { value } => Primitive::Constant { value: -value },
            Primitive::Affine { slope, offset } => Primitive::Affine { slope, offset: -offset },
            Primitive::Sat { lo, hi } => Primitive::Sat { lo: -hi, hi: -lo },
            p @ Primitive::Power { .. } => p,
        }
    }

    fn scaled(&self, k: f64) -> Primitive {
        match *self {
            Primitive::Constant { value } => Primitive::Constant { value: k * value },
            Primitive::Affine { slope, offset } => Primitive::Affine {
                slope: k * slope,
                offset: k * offset,
            },
            Primitive::Sat { lo, hi } => Primitive::Sat { lo: k * lo, hi: k * hi },
            Primitive::Power { coeff, exponent } => Primitive::Power {
                coeff: k * coeff,
                exponent,
            },
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(a: f64, b: f64) -> Self {
        Interval {
            lo: a.min(b),
            hi: a.max(b),
        }
    }

    pub fn point(v: f64) -> Self {
        Interval { lo: v, hi: v }
    }

    pub fn is_singleton(&self) -> bool {
        self.lo == self.hi
    }

    pub fn contains(&self, v: f64, tol: f64) -> bool {
        v >= self.lo - tol && v <= self.hi + tol
    }

    /// Minkowski sum `self + k * other`.
    pub fn add_scaled(&self, k: f64, other: &Interval) -> Interval {
        let a = k * other.lo;
        let b = k * other.hi;
        Interval {
            lo: self.lo + a.min(b),
            hi: self.hi + a.max(b),
        }
    }
}

/// Scalar function given by breakpoints, per-interval primitives and point
/// values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseFn {
    breakpoints: Vec<f64>,
    segments: Vec<Primitive>,
    point_values: Vec<f64>,
}

/// Predicates that gate the convergence results.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FnPredicates {
    pub sign_preserving: bool,
    pub continuous_at_origin: bool,
    pub symmetric_jump_at_origin: bool,
    pub nondecreasing: bool,
    pub left_limit_0: f64,
    pub right_limit_0: f64,
}

impl PiecewiseFn {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Primitive>, point_values: Vec<f64>) -> Result<Self, FnError> {
        if breakpoints.iter().any(|b| !b.is_finite()) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(FnError::Breakpoints);
        }
        if segments.len() != breakpoints.len() + 1 {
            return Err(FnError::SegmentCount {
                breakpoints: breakpoints.len(),
                expected: breakpoints.len() + 1,
                got: segments.len(),
            });
        }
        if point_values.len() != breakpoints.len() {
            return Err(FnError::PointValueCount {
                expected: breakpoints.len(),
                got: point_values.len(),
            });
        }
        for s in &segments {
            s.validate()?;
        }
        if point_values.iter().any(|v| !v.is_finite()) {
            return Err(FnError::Primitive("non-finite point value".into()));
        }
        Ok(PiecewiseFn {
            breakpoints,
            segments,
            point_values,
        })
    }

    /// A single primitive on the whole line.
    pub fn smooth(p: Primitive) -> Result<Self, FnError> {
        Self::new(vec![], vec![p], vec![])
    }

    pub fn identity() -> Self {
        PiecewiseFn {
            breakpoints: vec![],
            segments: vec![Primitive::Affine {
                slope: 1.0,
                offset: 0.0,
            }],
            point_values: vec![],
        }
    }

    pub fn sign() -> Self {
        Self::relay(1.0, -1.0).expect("valid relay")
    }

    /// `pos` for y > 0, `neg` for y < 0, 0 at the origin.
    pub fn relay(pos: f64, neg: f64) -> Result<Self, FnError> {
        Self::new(
            vec![0.0],
            vec![Primitive::Constant { value: neg }, Primitive::Constant { value: pos }],
            vec![0.0],
        )
    }

    pub fn sat(lo: f64, hi: f64) -> Result<Self, FnError> {
        Self::smooth(Primitive::Sat { lo, hi })
    }

    /// Zero on `[-width, width]`, `y -/+ width` outside.
    pub fn deadzone(width: f64) -> Result<Self, FnError> {
        if !(width.is_finite() && width > 0.0) {
            return Err(FnError::Preset(format!("deadzone width {width}")));
        }
        Self::new(
            vec![-width, width],
            vec![
                Primitive::Affine {
                    slope: 1.0,
                    offset: width,
                },
                Primitive::Constant { value: 0.0 },
                Primitive::Affine {
                    slope: 1.0,
                    offset: -width,
                },
            ],
            vec![0.0, 0.0],
        )
    }

    pub fn power(coeff: f64, exponent: f64) -> Result<Self, FnError> {
        Self::smooth(Primitive::Power { coeff, exponent })
    }

    /// Logarithmic quantizer with `levels` levels `u_k = scale * ratio^k`.
    /// Inputs in `(u_{k+1}, u_k]` map to `u_k` (odd extension for negative
    /// inputs), inputs above `u_0` saturate at `u_0` and inputs below the
    /// smallest level pass through linearly, so the function is continuous
    /// at the origin and discontinuous at every other level.
    pub fn log_quantizer(levels: usize, ratio: f64, scale: f64) -> Result<Self, FnError> {
        if levels == 0 || !(ratio > 0.0 && ratio < 1.0) || !(scale > 0.0 && scale.is_finite()) {
            return Err(FnError::Preset(format!(
                "quantizer levels={levels} ratio={ratio} scale={scale}"
            )));
        }
        let us: Vec<f64> = (0..levels).map(|k| scale * ratio.powi(k as i32)).collect();
        let m = levels;
        let mut breakpoints: Vec<f64> = us.iter().map(|u| -u).collect();
        breakpoints.extend(us.iter().rev());
        let point_values = breakpoints.clone();

        let mut segments = vec![Primitive::Constant { value: -us[0] }];
        for u in &us[..m - 1] {
            segments.push(Primitive::Constant { value: -u });
        }
        segments.push(Primitive::Affine {
            slope: 1.0,
            offset: 0.0,
        });
        for u in us[..m - 1].iter().rev() {
            segments.push(Primitive::Constant { value: *u });
        }
        segments.push(Primitive::Constant { value: us[0] });
        Self::new(breakpoints, segments, point_values)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Primitive] {
        &self.segments
    }

    pub fn point_values(&self) -> &[f64] {
        &self.point_values
    }

    /// Index of the breakpoint equal to `y`, if any.
    fn breakpoint_index(&self, y: f64) -> Option<usize> {
        self.breakpoints.iter().position(|&b| b == y)
    }

    /// Index of the breakpoint within `tol` of `y`, if any.
    pub fn nearest_breakpoint(&self, y: f64, tol: f64) -> Option<usize> {
        self.breakpoints
            .iter()
            .enumerate()
            .filter(|(_, &b)| (b - y).abs() <= tol)
            .min_by(|a, b| (a.1 - y).abs().total_cmp(&(b.1 - y).abs()))
            .map(|(k, _)| k)
    }

    /// Segment containing `y` (ties go to the right).
    pub fn segment_index(&self, y: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= y)
    }

    pub fn eval(&self, y: f64) -> f64 {
        match self.breakpoint_index(y) {
            Some(k) => self.point_values[k],
            None => self.segments[self.segment_index(y)].value(y),
        }
    }

    /// Limits from the left and right at breakpoint `k`.
    pub fn limits_at_breakpoint(&self, k: usize) -> (f64, f64) {
        let b = self.breakpoints[k];
        (self.segments[k].value(b), self.segments[k + 1].value(b))
    }

    pub fn one_sided_limits(&self, y: f64) -> (f64, f64) {
        match self.breakpoint_index(y) {
            Some(k) => self.limits_at_breakpoint(k),
            None => {
                let v = self.segments[self.segment_index(y)].value(y);
                (v, v)
            }
        }
    }

    /// Filippov set of the scalar function: hull of the one-sided limits,
    /// point values ignored.
    pub fn scalar_filippov(&self, y: f64) -> Interval {
        match self.nearest_breakpoint(y, BREAKPOINT_TOL) {
            Some(k) => {
                let (l, r) = self.limits_at_breakpoint(k);
                Interval::new(l, r)
            }
            None => Interval::point(self.segments[self.segment_index(y)].value(y)),
        }
    }

    /// Value with removable discontinuities filled in by the limit. Used for
    /// rows that are not discontinuity-active.
    pub fn continuous_value(&self, y: f64) -> f64 {
        match self.breakpoint_index(y) {
            Some(k) => {
                let (l, r) = self.limits_at_breakpoint(k);
                if (l - r).abs() <= LIMIT_TOL * (1.0 + l.abs().max(r.abs())) {
                    l
                } else {
                    self.point_values[k]
                }
            }
            None => self.segments[self.segment_index(y)].value(y),
        }
    }

    /// True if the function has a jump at some breakpoint.
    pub fn has_jump(&self) -> bool {
        (0..self.breakpoints.len()).any(|k| {
            let (l, r) = self.limits_at_breakpoint(k);
            !limits_equal(l, r)
        })
    }

    /// True if some breakpoint within `tol` of `y` carries a jump.
    pub fn jump_near(&self, y: f64, tol: f64) -> bool {
        self.breakpoints.iter().enumerate().any(|(k, &b)| {
            if (b - y).abs() > tol {
                return false;
            }
            let (l, r) = self.limits_at_breakpoint(k);
            !limits_equal(l, r)
        })
    }

    pub fn is_identity(&self) -> bool {
        self.breakpoints.is_empty()
            && matches!(self.segments[0], Primitive::Affine { slope, offset } if slope == 1.0 && offset == 0.0)
    }

    /// Largest |f| over `[lo, hi]`, ignoring point values. Every primitive
    /// is monotone, so the extremes sit at interval or breakpoint ends.
    pub fn sup_abs(&self, lo: f64, hi: f64) -> f64 {
        let mut best: f64 = 0.0;
        let mut edges = vec![lo];
        edges.extend(self.breakpoints.iter().copied().filter(|&b| b > lo && b < hi));
        edges.push(hi);
        for w in edges.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let seg = &self.segments[self.segment_index(mid)];
            best = best.max(seg.value(w[0]).abs()).max(seg.value(w[1]).abs());
            if let Primitive::Sat { .. } = seg {
                best = best.max(seg.value(mid).abs());
            }
        }
        best
    }

    /// `F(y) = \int_0^y f(s) ds` in closed form.
    pub fn integral_from_zero(&self, y: f64) -> f64 {
        if y == 0.0 {
            return 0.0;
        }
        let (a, b, sign) = if y > 0.0 { (0.0, y, 1.0) } else { (y, 0.0, -1.0) };
        let mut edges = vec![a];
        edges.extend(self.breakpoints.iter().copied().filter(|&bp| bp > a && bp < b));
        edges.push(b);
        let total: f64 = edges
            .windows(2)
            .map(|w| {
                let seg = &self.segments[self.segment_index(0.5 * (w[0] + w[1]))];
                seg.antiderivative(w[1]) - seg.antiderivative(w[0])
            })
            .sum();
        sign * total
    }

    /// `y -> -f(-y)`.
    pub fn reflected(&self) -> PiecewiseFn {
        let breakpoints = self.breakpoints.iter().rev().map(|b| -b).collect();
        let segments = self.segments.iter().rev().map(Primitive::reflected).collect();
        let point_values = self.point_values.iter().rev().map(|v| -v).collect();
        PiecewiseFn {
            breakpoints,
            segments,
            point_values,
        }
    }

    /// `y -> k f(y)` for `k > 0`.
    pub fn scaled(&self, k: f64) -> Result<PiecewiseFn, FnError> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(FnError::Preset(format!("scale factor {k}")));
        }
        let f = self.without_sat();
        Ok(PiecewiseFn {
            breakpoints: f.breakpoints,
            segments: f.segments.iter().map(|s| s.scaled(k)).collect(),
            point_values: f.point_values.iter().map(|v| k * v).collect(),
        })
    }

    /// Same function with every saturation segment split into
    /// constant/affine pieces (extra breakpoints are continuous).
    fn without_sat(&self) -> PiecewiseFn {
        let mut bps = Vec::new();
        let mut segs = Vec::new();
        let mut pvs = Vec::new();
        for (i, seg) in self.segments.iter().enumerate() {
            let left = if i == 0 {
                f64::NEG_INFINITY
            } else {
                self.breakpoints[i - 1]
            };
            let right = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
            if i > 0 {
                bps.push(left);
                pvs.push(self.point_values[i - 1]);
            }
            match *seg {
                Primitive::Sat { lo, hi } => {
                    let low = Primitive::Constant { value: lo };
                    let mid = Primitive::Affine {
                        slope: 1.0,
                        offset: 0.0,
                    };
                    let high = Primitive::Constant { value: hi };
                    let mut pieces = vec![(f64::NEG_INFINITY, low)];
                    if lo < hi {
                        pieces.push((lo, mid));
                    }
                    pieces.push((hi, high));
                    let mut first = true;
                    for (j, &(start, prim)) in pieces.iter().enumerate() {
                        let end = pieces.get(j + 1).map(|p| p.0).unwrap_or(f64::INFINITY);
                        if end <= left || start >= right {
                            continue;
                        }
                        if !first {
                            bps.push(start);
                            pvs.push(prim.value(start));
                        }
                        segs.push(prim);
                        first = false;
                    }
                }
                other => segs.push(other),
            }
        }
        PiecewiseFn {
            breakpoints: bps,
            segments: segs,
            point_values: pvs,
        }
    }

    /// Boundary-layer version of the function, with every jump replaced by
    /// a linear ramp of width `w = min(eps, half the distance to the
    /// neighbouring breakpoints)`.
    ///
    /// At the origin the ramp covers `[-w, w]` and passes through `f(0)`.
    /// Elsewhere it sits on the side of `b` facing the origin: `[b - w, b]`
    /// for `b > 0`, `[b, b + w]` for `b < 0`, so the far side of `b` keeps
    /// its exact values up to the one-sided limit.
    pub fn mollified(&self, eps: f64) -> Mollified<'_> {
        let nb = self.breakpoints.len();
        let mut widths = Vec::with_capacity(nb);
        for k in 0..nb {
            let b = self.breakpoints[k];
            let mut w = if b == 0.0 { eps } else { eps.min(0.5 * b.abs()) };
            if k > 0 {
                w = w.min(0.5 * (self.breakpoints[k] - self.breakpoints[k - 1]));
            }
            if k + 1 < nb {
                w = w.min(0.5 * (self.breakpoints[k + 1] - self.breakpoints[k]));
            }
            widths.push(w);
        }
        Mollified { f: self, widths }
    }

    /// Sample points used by the sign-preservation check.
    fn verification_grid(&self) -> Vec<f64> {
        let mut pts = Vec::new();
        let offsets: Vec<f64> = (1..=9).map(|k| 10f64.powi(-k)).collect();
        for &d in &offsets {
            pts.push(d);
            pts.push(-d);
        }
        for w in self.breakpoints.windows(2) {
            pts.push(0.5 * (w[0] + w[1]));
        }
        let (first, last) = match (self.breakpoints.first(), self.breakpoints.last()) {
            (Some(&f), Some(&l)) => (f, l),
            _ => (0.0, 0.0),
        };
        for mag in [0.5, 1.0, 10.0, 100.0, 1e4] {
            pts.push(first - mag);
            pts.push(last + mag);
            pts.push(mag);
            pts.push(-mag);
        }
        for &b in &self.breakpoints {
            for &d in &offsets {
                pts.push(b - d);
                pts.push(b + d);
            }
        }
        for seg in &self.segments {
            for s in seg.special_points() {
                pts.push(s);
                for &d in &offsets[..3] {
                    pts.push(s - d);
                    pts.push(s + d);
                }
            }
        }
        pts.retain(|y| *y != 0.0 && y.is_finite());
        pts
    }

    pub fn check_predicates(&self) -> FnPredicates {
        let (left_limit_0, right_limit_0) = self.one_sided_limits(0.0);

        let origin_ok = self.eval(0.0) == 0.0;
        let grid_ok = self.verification_grid().iter().all(|&y| y * self.eval(y) > 0.0);
        let breakpoints_ok = self.breakpoints.iter().enumerate().all(|(k, &b)| {
            if b == 0.0 {
                return true;
            }
            let (l, r) = self.limits_at_breakpoint(k);
            b * l > 0.0 && b * r > 0.0 && b * self.point_values[k] > 0.0
        });
        let sign_preserving = origin_ok && grid_ok && breakpoints_ok;

        let continuous_at_origin = left_limit_0.abs() <= LIMIT_TOL && right_limit_0.abs() <= LIMIT_TOL;
        let symmetric_jump_at_origin = limits_equal(left_limit_0, -right_limit_0);

        let segments_monotone = self.segments.iter().all(Primitive::is_nondecreasing);
        let jumps_monotone = self.breakpoints.iter().enumerate().all(|(k, _)| {
            let (l, r) = self.limits_at_breakpoint(k);
            let p = self.point_values[k];
            l <= p && p <= r
        });

        FnPredicates {
            sign_preserving,
            continuous_at_origin,
            symmetric_jump_at_origin,
            nondecreasing: segments_monotone && jumps_monotone,
            left_limit_0,
            right_limit_0,
        }
    }
}

fn limits_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= LIMIT_TOL * (1.0 + a.abs().max(b.abs()))
}

/// Boundary-layer approximation of a [`PiecewiseFn`]; see
/// [`PiecewiseFn::mollified`].
#[derive(Debug, Clone)]
pub struct Mollified<'a> {
    f: &'a PiecewiseFn,
    widths: Vec<f64>,
}

impl Mollified<'_> {
    pub fn eval(&self, y: f64) -> f64 {
        let f = self.f;
        for (k, &b) in f.breakpoints.iter().enumerate() {
            let w = self.widths[k];
            if b == 0.0 {
                if y > -w && y < w {
                    let mid = f.point_values[k];
                    return if y < 0.0 {
                        let left = f.segments[k].value(-w);
                        left + (y + w) / w * (mid - left)
                    } else {
                        let right = f.segments[k + 1].value(w);
                        mid + y / w * (right - mid)
                    };
                }
            } else if b > 0.0 {
                if y > b - w && y < b {
                    let left = f.segments[k].value(b - w);
                    let right = f.segments[k + 1].value(b);
                    return left + (y - (b - w)) / w * (right - left);
                }
            } else if y >= b && y < b + w {
                let left = f.segments[k].value(b);
                let right = f.segments[k + 1].value(b + w);
                return left + (y - b) / w * (right - left);
            }
        }
        f.segments[f.segment_index(y)].value(y)
    }
}
