//! Planned paths made of lines, circular arcs and clothoids.
//!
//! A [`Path`] is parameterized by arc length `s`. Positions on clothoid
//! segments come from adaptive Simpson quadrature of the heading integral,
//! with positions cached at regularly spaced knots so a query only integrates
//! the short stretch from the nearest knot.
//!
//! The lateral offset `l` of a [`FrenetState`] is positive on the left of the
//! tangent, so that `dl/dt = v sin(theta_tilde)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Position and heading tolerance used when checking joints.
pub const JOINT_TOLERANCE: f64 = 1e-9;

/// Absolute tolerance of clothoid position quadrature.
const QUADRATURE_TOLERANCE: f64 = 1e-12;

/// Spacing of cached clothoid knots, in meters.
const KNOT_SPACING: f64 = 0.25;

/// `1 - c l` must stay above this for the projection to be regular.
const SINGULAR_MARGIN: f64 = 1e-9;

/// Equal-distance tolerance for ambiguous projections.
const AMBIGUITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PathError {
    #[error("path has no segments")]
    EmptyPath,
    #[error("segment {index}: {reason}")]
    InvalidSegment { index: usize, reason: String },
    #[error("segment {index} does not join its predecessor: position gap {position_gap:.3e} m, heading gap {heading_gap:.3e} rad")]
    ContinuityError {
        index: usize,
        position_gap: f64,
        heading_gap: f64,
    },
    #[error("abscissa {s} outside [0, {length}]")]
    OutOfRange { s: f64, length: f64 },
    #[error("pose is at or beyond the center of curvature at s = {s} (1 - c l = {margin:.3e})")]
    SingularProjection { s: f64, margin: f64 },
    #[error("projection is ambiguous: s = {s_a} and s = {s_b} are equally close")]
    AmbiguousProjection { s_a: f64, s_b: f64 },
    #[error("pose is not finite")]
    NonFinitePose,
}

/// Planar pose: position in meters, heading in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl Pose {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self { x, y, theta }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.theta.is_finite()
    }

    pub fn distance(&self, other: &Pose) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    /// Pose displaced by `offset` along the left normal of the heading.
    pub fn offset_left(&self, offset: f64) -> Pose {
        Pose {
            x: self.x - offset * self.theta.sin(),
            y: self.y + offset * self.theta.cos(),
            theta: self.theta,
        }
    }
}

/// Wraps an angle to `[-pi, pi)`.
pub fn wrap_angle(angle: f64) -> f64 {
    if (-PI..PI).contains(&angle) {
        return angle;
    }
    let wrapped = (angle + PI).rem_euclid(2.0 * PI) - PI;
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SegmentKind {
    Line,
    Arc,
    Clothoid,
}

/// One entry of a path specification file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub kind: SegmentKind,
    pub length: f64,
    #[serde(default)]
    pub curvature_start: f64,
    #[serde(default)]
    pub curvature_end: f64,
    /// Explicit start pose; when present it must match the end of the
    /// previous segment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Pose>,
}

impl SegmentSpec {
    pub fn line(length: f64) -> Self {
        Self {
            kind: SegmentKind::Line,
            length,
            curvature_start: 0.0,
            curvature_end: 0.0,
            start: None,
        }
    }

    pub fn arc(curvature: f64, length: f64) -> Self {
        Self {
            kind: SegmentKind::Arc,
            length,
            curvature_start: curvature,
            curvature_end: curvature,
            start: None,
        }
    }

    pub fn clothoid(curvature_start: f64, curvature_end: f64, length: f64) -> Self {
        Self {
            kind: SegmentKind::Clothoid,
            length,
            curvature_start,
            curvature_end,
            start: None,
        }
    }

    pub fn starting_at(mut self, pose: Pose) -> Self {
        self.start = Some(pose);
        self
    }
}

/// Path specification: a start pose and an ordered list of segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<Pose>,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone)]
pub struct PathSegment {
    pub kind: SegmentKind,
    pub length: f64,
    pub start: Pose,
    pub curvature_start: f64,
    pub curvature_end: f64,
    /// Clothoid only: positions at multiples of `knot_step`.
    knots: Vec<(f64, f64)>,
    knot_step: f64,
}

impl PathSegment {
    fn new(kind: SegmentKind, length: f64, start: Pose, c0: f64, c1: f64) -> Self {
        let mut segment = Self {
            kind,
            length,
            start,
            curvature_start: c0,
            curvature_end: c1,
            knots: Vec::new(),
            knot_step: length,
        };
        if kind == SegmentKind::Clothoid {
            let count = (length / KNOT_SPACING).ceil().max(1.0) as usize;
            segment.knot_step = length / count as f64;
            segment.knots.reserve(count + 1);
            segment.knots.push((start.x, start.y));
            let (mut x, mut y) = (start.x, start.y);
            for j in 0..count {
                let a = j as f64 * segment.knot_step;
                let b = if j + 1 == count {
                    length
                } else {
                    (j + 1) as f64 * segment.knot_step
                };
                let [dx, dy] = segment.integrate_direction(a, b);
                x += dx;
                y += dy;
                segment.knots.push((x, y));
            }
        }
        segment
    }

    pub fn curvature_slope(&self) -> f64 {
        (self.curvature_end - self.curvature_start) / self.length
    }

    pub fn curvature_at(&self, u: f64) -> f64 {
        self.curvature_start + self.curvature_slope() * u
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature_start.abs().max(self.curvature_end.abs())
    }

    fn heading_at(&self, u: f64) -> f64 {
        self.start.theta + self.curvature_start * u + 0.5 * self.curvature_slope() * u * u
    }

    fn integrate_direction(&self, a: f64, b: f64) -> [f64; 2] {
        let f = |u: f64| {
            let h = self.heading_at(u);
            [h.cos(), h.sin()]
        };
        adaptive_simpson(&f, a, b, QUADRATURE_TOLERANCE)
    }

    /// Pose at local abscissa `u` in `[0, length]`; heading is not wrapped.
    fn pose_local(&self, u: f64) -> Pose {
        let Pose { x, y, theta } = self.start;
        match self.kind {
            SegmentKind::Line => Pose::new(x + u * theta.cos(), y + u * theta.sin(), theta),
            SegmentKind::Arc => {
                let c = self.curvature_start;
                let half = 0.5 * c * u;
                // chord form, well conditioned for small turns
                let chord = if half.abs() < 1e-8 {
                    u
                } else {
                    2.0 * half.sin() / c
                };
                let mid = theta + half;
                Pose::new(x + chord * mid.cos(), y + chord * mid.sin(), theta + c * u)
            }
            SegmentKind::Clothoid => {
                let j = ((u / self.knot_step).floor() as usize).min(self.knots.len() - 2);
                let a = j as f64 * self.knot_step;
                let (kx, ky) = self.knots[j];
                let [dx, dy] = self.integrate_direction(a, u);
                Pose::new(kx + dx, ky + dy, self.heading_at(u))
            }
        }
    }

    fn end_pose(&self) -> Pose {
        match self.kind {
            SegmentKind::Clothoid => {
                let (x, y) = *self.knots.last().expect("clothoid knots");
                Pose::new(x, y, self.heading_at(self.length))
            }
            _ => self.pose_local(self.length),
        }
    }
}

/// Adaptive Simpson quadrature of a 2-vector integrand.
fn adaptive_simpson<F>(f: &F, a: f64, b: f64, tol: f64) -> [f64; 2]
where
    F: Fn(f64) -> [f64; 2],
{
    if b <= a {
        return [0.0, 0.0];
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    simpson_recurse(f, a, b, fa, fm, fb, whole, tol, 48)
}

fn simpson(a: f64, b: f64, fa: [f64; 2], fm: [f64; 2], fb: [f64; 2]) -> [f64; 2] {
    let w = (b - a) / 6.0;
    [
        w * (fa[0] + 4.0 * fm[0] + fb[0]),
        w * (fa[1] + 4.0 * fm[1] + fb[1]),
    ]
}

#[allow(clippy::too_many_arguments)]
fn simpson_recurse<F>(
    f: &F,
    a: f64,
    b: f64,
    fa: [f64; 2],
    fm: [f64; 2],
    fb: [f64; 2],
    whole: [f64; 2],
    tol: f64,
    depth: u32,
) -> [f64; 2]
where
    F: Fn(f64) -> [f64; 2],
{
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = [left[0] + right[0] - whole[0], left[1] + right[1] - whole[1]];
    if depth == 0 || err[0].abs().max(err[1].abs()) <= 15.0 * tol {
        return [
            left[0] + right[0] + err[0] / 15.0,
            left[1] + right[1] + err[1] / 15.0,
        ];
    }
    let l = simpson_recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1);
    let r = simpson_recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
    [l[0] + r[0], l[1] + r[1]]
}

/// Path-relative coordinates of a pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrenetState {
    /// Arc length of the closest path point.
    pub s: f64,
    /// Signed lateral offset, positive on the left of the tangent.
    pub l: f64,
    /// Heading error wrapped to `[-pi, pi)`.
    pub theta_tilde: f64,
}

impl FrenetState {
    /// Lateral offset in units of the turning radius.
    pub fn l_norm(&self, turning_radius: f64) -> f64 {
        self.l / turning_radius
    }

    pub fn is_finite(&self) -> bool {
        self.s.is_finite() && self.l.is_finite() && self.theta_tilde.is_finite()
    }
}

/// Immutable arc-length parameterized path.
#[derive(Debug, Clone)]
pub struct Path {
    segments: Vec<PathSegment>,
    cumulative_s: Vec<f64>,
    total_length: f64,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    s: f64,
    distance: f64,
}

impl Path {
    /// Builds a path, integrating each segment forward from the previous one
    /// and checking explicit start poses against the integrated joint.
    pub fn build(spec: &PathSpec) -> Result<Path, PathError> {
        if spec.segments.is_empty() {
            return Err(PathError::EmptyPath);
        }
        let mut segments: Vec<PathSegment> = Vec::with_capacity(spec.segments.len());
        let mut cumulative_s = Vec::with_capacity(spec.segments.len());
        let mut total = 0.0;
        for (index, seg) in spec.segments.iter().enumerate() {
            check_segment(index, seg)?;
            let start = match (segments.last(), seg.start, spec.start) {
                (Some(prev), explicit, _) => {
                    let joint = prev.end_pose();
                    if let Some(p) = explicit {
                        let position_gap = p.distance(&joint);
                        let heading_gap = wrap_angle(p.theta - joint.theta).abs();
                        if position_gap > JOINT_TOLERANCE || heading_gap > JOINT_TOLERANCE {
                            return Err(PathError::ContinuityError {
                                index,
                                position_gap,
                                heading_gap,
                            });
                        }
                    }
                    joint
                }
                (None, Some(p), _) | (None, None, Some(p)) => p,
                (None, None, None) => Pose::default(),
            };
            if !start.is_finite() {
                return Err(PathError::InvalidSegment {
                    index,
                    reason: "start pose is not finite".into(),
                });
            }
            cumulative_s.push(total);
            total += seg.length;
            segments.push(PathSegment::new(
                seg.kind,
                seg.length,
                start,
                seg.curvature_start,
                seg.curvature_end,
            ));
        }
        Ok(Path {
            segments,
            cumulative_s,
            total_length: total,
        })
    }

    pub fn from_segments(segments: Vec<SegmentSpec>) -> Result<Path, PathError> {
        Path::build(&PathSpec {
            start: None,
            segments,
        })
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn cumulative_s(&self) -> &[f64] {
        &self.cumulative_s
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.segments
            .iter()
            .map(PathSegment::max_abs_curvature)
            .fold(0.0, f64::max)
    }

    fn check_range(&self, s: f64) -> Result<(), PathError> {
        if s.is_finite() && (0.0..=self.total_length).contains(&s) {
            Ok(())
        } else {
            Err(PathError::OutOfRange {
                s,
                length: self.total_length,
            })
        }
    }

    /// Segment index and local abscissa; joints resolve to the right segment.
    fn locate(&self, s: f64) -> (usize, f64) {
        let s = s.clamp(0.0, self.total_length);
        let idx = self
            .cumulative_s
            .partition_point(|&c| c <= s)
            .saturating_sub(1);
        let u = (s - self.cumulative_s[idx]).min(self.segments[idx].length);
        (idx, u)
    }

    fn eval(&self, s: f64) -> Pose {
        let (idx, u) = self.locate(s);
        self.segments[idx].pose_local(u)
    }

    /// World pose of the path point at `s`; the heading is the tangent angle.
    pub fn pose_at(&self, s: f64) -> Result<Pose, PathError> {
        self.check_range(s)?;
        let mut pose = self.eval(s);
        pose.theta = wrap_angle(pose.theta);
        Ok(pose)
    }

    /// Curvature and its derivative with respect to arc length.
    ///
    /// At a joint the right-limit curvature is returned; where the curvature
    /// jumps the derivative is reported as zero.
    pub fn curvature(&self, s: f64) -> Result<(f64, f64), PathError> {
        self.check_range(s)?;
        let (idx, u) = self.locate(s);
        let seg = &self.segments[idx];
        let c = seg.curvature_at(u);
        let mut slope = seg.curvature_slope();
        if u == 0.0 && idx > 0 {
            let prev = &self.segments[idx - 1];
            if (prev.curvature_end - seg.curvature_start).abs() > JOINT_TOLERANCE {
                slope = 0.0;
            }
        }
        Ok((c, slope))
    }

    fn frenet_at(&self, pose: &Pose, s: f64) -> (FrenetState, f64) {
        let p = self.eval(s);
        let (sin, cos) = p.theta.sin_cos();
        let l = -(pose.x - p.x) * sin + (pose.y - p.y) * cos;
        let (idx, u) = self.locate(s);
        let c = self.segments[idx].curvature_at(u);
        (
            FrenetState {
                s,
                l,
                theta_tilde: wrap_angle(pose.theta - p.theta),
            },
            c,
        )
    }

    /// Tangential component of the pose relative to the path point at `s`.
    /// Positive when the pose lies ahead of the point.
    fn along(&self, pose: &Pose, s: f64) -> (f64, f64) {
        let p = self.eval(s);
        let dx = pose.x - p.x;
        let dy = pose.y - p.y;
        (dx * p.theta.cos() + dy * p.theta.sin(), dx.hypot(dy))
    }

    /// Local distance minima on `[a, b]` found by scanning at `step` and
    /// bisecting sign changes of the tangential component.
    fn minima_on(&self, pose: &Pose, a: f64, b: f64, step: f64) -> Vec<Candidate> {
        let n = ((b - a) / step).ceil().max(1.0) as usize;
        let samples: Vec<(f64, f64, f64)> = (0..=n)
            .map(|i| {
                let s = if i == n { b } else { a + i as f64 * step };
                let (g, d) = self.along(pose, s);
                (s, g, d)
            })
            .collect();

        let mut out = Vec::new();
        let (s0, g0, d0) = samples[0];
        if g0 <= 0.0 {
            out.push(Candidate {
                s: s0,
                distance: d0,
            });
        }
        let (sn, gn, dn) = samples[n];
        if gn >= 0.0 {
            out.push(Candidate {
                s: sn,
                distance: dn,
            });
        }
        for w in samples.windows(2) {
            let (sa, ga, _) = w[0];
            let (sb, gb, _) = w[1];
            if ga > 0.0 && gb <= 0.0 {
                let s = self.bisect(pose, sa, sb);
                let (_, d) = self.along(pose, s);
                out.push(Candidate { s, distance: d });
            }
        }
        // degenerate case: the tangential component vanishes everywhere
        let best = samples
            .iter()
            .min_by(|x, y| x.2.total_cmp(&y.2))
            .expect("non-empty scan");
        out.push(Candidate {
            s: best.0,
            distance: best.2,
        });
        out
    }

    fn bisect(&self, pose: &Pose, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..100 {
            if hi - lo <= 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if self.along(pose, mid).0 > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Projects a world pose onto the path.
    ///
    /// Without a hint the whole path is scanned at
    /// `min(R, total_length / 1000)` and every local minimum refined. With a
    /// hint only `[hint - R, hint + R]` is searched.
    pub fn frenet_project(
        &self,
        pose: &Pose,
        hint_s: Option<f64>,
        turning_radius: f64,
    ) -> Result<FrenetState, PathError> {
        if !pose.is_finite() {
            return Err(PathError::NonFinitePose);
        }
        let radius = turning_radius.abs();
        let candidates = match hint_s {
            Some(hint) => {
                self.check_range(hint)?;
                let a = (hint - radius).max(0.0);
                let b = (hint + radius).min(self.total_length);
                self.minima_on(pose, a, b, (radius / 16.0).max(1e-6))
            }
            None => {
                let step = radius.min(self.total_length / 1000.0).max(1e-6);
                self.minima_on(pose, 0.0, self.total_length, step)
            }
        };
        let best = candidates
            .iter()
            .copied()
            .min_by(|x, y| x.distance.total_cmp(&y.distance).then(x.s.total_cmp(&y.s)))
            .expect("at least one candidate");

        let (state, c) = self.frenet_at(pose, best.s);
        let margin = 1.0 - c * state.l;
        if margin <= SINGULAR_MARGIN {
            return Err(PathError::SingularProjection { s: best.s, margin });
        }
        if hint_s.is_none() {
            if let Some(other) = candidates.iter().find(|cand| {
                (cand.distance - best.distance).abs() <= AMBIGUITY_TOLERANCE
                    && (cand.s - best.s).abs() > radius
            }) {
                return Err(PathError::AmbiguousProjection {
                    s_a: best.s,
                    s_b: other.s,
                });
            }
        }
        Ok(state)
    }
}

fn check_segment(index: usize, seg: &SegmentSpec) -> Result<(), PathError> {
    let invalid = |reason: &str| PathError::InvalidSegment {
        index,
        reason: reason.to_string(),
    };
    if !(seg.length.is_finite() && seg.length > 0.0) {
        return Err(invalid("length must be positive"));
    }
    if !(seg.curvature_start.is_finite() && seg.curvature_end.is_finite()) {
        return Err(invalid("curvature must be finite"));
    }
    match seg.kind {
        SegmentKind::Line if seg.curvature_start != 0.0 || seg.curvature_end != 0.0 => {
            Err(invalid("line must have zero curvature"))
        }
        SegmentKind::Arc if seg.curvature_start != seg.curvature_end => {
            Err(invalid("arc must have constant curvature"))
        }
        SegmentKind::Arc if seg.curvature_start == 0.0 => {
            Err(invalid("arc curvature must be nonzero"))
        }
        _ => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_2;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn single_line() {
        let path = Path::from_segments(vec![SegmentSpec::line(10.0)]).unwrap();
        assert_eq!(path.total_length(), 10.0);
        let p = path.pose_at(5.0).unwrap();
        assert!(close(p.x, 5.0, 1e-15) && close(p.y, 0.0, 1e-15) && p.theta == 0.0);
        let p = path.pose_at(3.0).unwrap();
        assert_eq!((p.x, p.y, p.theta), (3.0, 0.0, 0.0));
    }

    #[test]
    fn half_and_quarter_circle() {
        let path = Path::from_segments(vec![SegmentSpec::arc(1.0, PI)]).unwrap();
        let p = path.pose_at(PI).unwrap();
        assert!(close(p.x, 0.0, 1e-12) && close(p.y, 2.0, 1e-12));
        // heading pi wraps to -pi
        assert!(close(wrap_angle(p.theta - PI), 0.0, 1e-12));
        let q = path.pose_at(FRAC_PI_2).unwrap();
        assert!(
            close(q.x, 1.0, 1e-12) && close(q.y, 1.0, 1e-12) && close(q.theta, FRAC_PI_2, 1e-12)
        );
    }

    #[test]
    fn joint_checks() {
        let line = SegmentSpec::line(5.0);
        let good = SegmentSpec::arc(0.5, PI).starting_at(Pose::new(5.0, 0.0, 0.0));
        assert!(Path::from_segments(vec![line.clone(), good]).is_ok());
        let bad = SegmentSpec::arc(0.5, PI).starting_at(Pose::new(5.0, 0.0, 0.1));
        assert!(matches!(
            Path::from_segments(vec![line, bad]),
            Err(PathError::ContinuityError { index: 1, .. })
        ));
        assert_eq!(
            Path::from_segments(vec![]).unwrap_err(),
            PathError::EmptyPath
        );
        assert!(matches!(
            Path::from_segments(vec![SegmentSpec::line(0.0)]),
            Err(PathError::InvalidSegment { .. })
        ));
        assert!(matches!(
            Path::from_segments(vec![SegmentSpec::arc(0.0, 1.0)]),
            Err(PathError::InvalidSegment { .. })
        ));
    }

    #[test]
    fn clothoid_end_matches_frozen_reference() {
        // integral of (cos, sin)(u^2 / 2) on [0, 1], 30-digit quadrature
        let path = Path::from_segments(vec![SegmentSpec::clothoid(0.0, 1.0, 1.0)]).unwrap();
        let p = path.pose_at(1.0).unwrap();
        assert!(close(p.x, 0.975_287_688_200_344_5, 1e-10));
        assert!(close(p.y, 0.163_714_047_375_700_6, 1e-10));
        assert!(close(p.theta, 0.5, 1e-15));
    }

    #[test]
    fn curvature_queries() {
        let line = Path::from_segments(vec![SegmentSpec::line(4.0)]).unwrap();
        assert_eq!(line.curvature(2.0).unwrap(), (0.0, 0.0));
        let arc = Path::from_segments(vec![SegmentSpec::arc(0.5, 3.0)]).unwrap();
        assert_eq!(arc.curvature(1.3).unwrap(), (0.5, 0.0));
        let clo = Path::from_segments(vec![SegmentSpec::clothoid(0.0, 1.0, 2.0)]).unwrap();
        assert_eq!(clo.curvature(1.0).unwrap(), (0.5, 0.5));
        assert!(matches!(
            clo.curvature(2.5),
            Err(PathError::OutOfRange { .. })
        ));
        assert!(matches!(
            clo.pose_at(-0.1),
            Err(PathError::OutOfRange { .. })
        ));
    }

    #[test]
    fn curvature_at_joints_is_right_limit() {
        let path = Path::from_segments(vec![
            SegmentSpec::line(1.0),
            SegmentSpec::arc(0.5, 1.0),
            SegmentSpec::clothoid(0.5, 0.0, 2.0),
        ])
        .unwrap();
        assert_eq!(path.curvature(1.0).unwrap(), (0.5, 0.0));
        assert_eq!(path.curvature(2.0).unwrap(), (0.5, -0.25));
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), -PI);
        assert_eq!(wrap_angle(-PI), -PI);
        assert!(close(wrap_angle(3.0 * PI + 0.25), -PI + 0.25, 1e-12));
        for k in -50..50 {
            let w = wrap_angle(k as f64 * 0.37);
            assert!((-PI..PI).contains(&w));
        }
    }

    #[test]
    fn project_on_line() {
        let path = Path::from_segments(vec![SegmentSpec::line(10.0)]).unwrap();
        let f = path
            .frenet_project(&Pose::new(3.0, 2.0, 0.0), None, 0.3)
            .unwrap();
        assert!(close(f.s, 3.0, 1e-9) && close(f.l, 2.0, 1e-12) && f.theta_tilde == 0.0);
        let f = path
            .frenet_project(&Pose::new(3.0, -2.0, PI / 4.0), None, 0.3)
            .unwrap();
        assert!(close(f.s, 3.0, 1e-9) && close(f.l, -2.0, 1e-12));
        assert!(close(f.theta_tilde, PI / 4.0, 1e-15));
    }

    #[test]
    fn center_of_curvature_is_singular() {
        let path = Path::from_segments(vec![SegmentSpec::arc(1.0, PI)]).unwrap();
        assert!(matches!(
            path.frenet_project(&Pose::new(0.0, 1.0, 0.0), None, 0.3),
            Err(PathError::SingularProjection { .. })
        ));
    }

    #[test]
    fn equidistant_points_are_ambiguous() {
        // U-turn: two parallel lines joined by a half circle of radius 1
        let path = Path::from_segments(vec![
            SegmentSpec::line(5.0),
            SegmentSpec::arc(1.0, PI),
            SegmentSpec::line(5.0),
        ])
        .unwrap();
        let r = path.frenet_project(&Pose::new(2.0, 1.0, 0.0), None, 0.3);
        assert!(
            matches!(r, Err(PathError::AmbiguousProjection { .. })),
            "{r:?}"
        );
    }

    #[test]
    fn hinted_projection_stays_local() {
        let path = Path::from_segments(vec![
            SegmentSpec::line(5.0),
            SegmentSpec::arc(1.0, PI),
            SegmentSpec::line(5.0),
        ])
        .unwrap();
        // slightly closer to the upper line, but the hint keeps the lower one
        let pose = Pose::new(2.0, 1.1, 0.0);
        let global = path.frenet_project(&pose, None, 0.3).unwrap();
        assert!(global.s > 5.0 + PI);
        let local = path.frenet_project(&pose, Some(2.0), 0.3).unwrap();
        assert!(close(local.s, 2.0, 1e-9) && close(local.l, 1.1, 1e-9));
    }
}
