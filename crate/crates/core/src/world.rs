//! Route geometry, lane markings, and the ground-truth centerline oracle.
//!
//! Everything here is evaluation-side: the controller never sees a
//! [`RouteGeometry`]. Routes are built from straights and circular arcs laid
//! end to end starting at the origin with heading 0 (+x).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lateral envelope around the centerline inside which [`locate`] answers.
pub const LOCATE_ENVELOPE_M: f64 = 50.0;

/// Default lane half width (3.5 m lane).
pub const LANE_HALF_WIDTH_M: f64 = 1.75;

/// Length of the virtual straight lead-in / run-out used when rendering past
/// the ends of a route.
pub const RENDER_EXTENSION_M: f64 = 120.0;

const KEY_MARGIN_M: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("unknown route id `{0}`")]
    UnknownRoute(String),
    #[error("position is {distance:.2} m from the centerline (envelope {LOCATE_ENVELOPE_M} m)")]
    OutOfEnvelope { distance: f64 },
    #[error("empty sampling range [{start}, {end}] with step {step}")]
    EmptyRange { start: f64, end: f64, step: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RouteId {
    A,
    B,
    C,
    #[serde(rename = "A_key")]
    AKey,
    #[serde(rename = "B_key")]
    BKey,
    #[serde(rename = "C_key")]
    CKey,
}

impl RouteId {
    pub const ALL: [RouteId; 6] = [
        RouteId::A,
        RouteId::B,
        RouteId::C,
        RouteId::AKey,
        RouteId::BKey,
        RouteId::CKey,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RouteId::A => "A",
            RouteId::B => "B",
            RouteId::C => "C",
            RouteId::AKey => "A_key",
            RouteId::BKey => "B_key",
            RouteId::CKey => "C_key",
        }
    }

    pub fn is_key(self) -> bool {
        matches!(self, RouteId::AKey | RouteId::BKey | RouteId::CKey)
    }

    /// The full route a key subset is cut from.
    pub fn parent(self) -> RouteId {
        match self {
            RouteId::A | RouteId::AKey => RouteId::A,
            RouteId::B | RouteId::BKey => RouteId::B,
            RouteId::C | RouteId::CKey => RouteId::C,
        }
    }
}

impl fmt::Display for RouteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RouteId {
    type Err = WorldError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RouteId::ALL
            .into_iter()
            .find(|id| id.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| WorldError::UnknownRoute(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Segment {
    Straight { length: f64 },
    /// Positive sweep turns left.
    Arc { radius: f64, sweep: f64 },
}

impl Segment {
    pub fn length(&self) -> f64 {
        match *self {
            Segment::Straight { length } => length,
            Segment::Arc { radius, sweep } => radius * sweep.abs(),
        }
    }
}

/// A segment anchored in the world frame.
#[derive(Debug, Clone, Copy)]
struct Placed {
    start: [f64; 2],
    heading: f64,
    s0: f64,
    length: f64,
    shape: Shape,
}

#[derive(Debug, Clone, Copy)]
enum Shape {
    Straight {
        dir: [f64; 2],
    },
    Arc {
        center: [f64; 2],
        radius: f64,
        /// +1 for left turns, -1 for right turns.
        turn: f64,
        /// Polar angle of the start point around `center`.
        phi0: f64,
        sweep_abs: f64,
        /// Unit vectors from `center` to the start and end points.
        radial0: [f64; 2],
        radial1: [f64; 2],
    },
}

/// Projection of a point onto one placed segment.
#[derive(Debug, Clone, Copy)]
struct Projection {
    s: f64,
    e: f64,
    distance: f64,
    tangent: f64,
}

impl Placed {
    fn new(start: [f64; 2], heading: f64, s0: f64, seg: Segment) -> Self {
        let shape = match seg {
            Segment::Straight { .. } => Shape::Straight {
                dir: [heading.cos(), heading.sin()],
            },
            Segment::Arc { radius, sweep } => {
                let turn = sweep.signum();
                let normal = heading + turn * FRAC_PI_2;
                let center = [
                    start[0] + radius * normal.cos(),
                    start[1] + radius * normal.sin(),
                ];
                let phi0 = (start[1] - center[1]).atan2(start[0] - center[0]);
                let phi1 = phi0 + sweep;
                Shape::Arc {
                    center,
                    radius,
                    turn,
                    phi0,
                    sweep_abs: sweep.abs(),
                    radial0: [phi0.cos(), phi0.sin()],
                    radial1: [phi1.cos(), phi1.sin()],
                }
            }
        };
        Placed {
            start,
            heading,
            s0,
            length: seg.length(),
            shape,
        }
    }

    /// Pose at local arc length `u` (extrapolates along the shape outside
    /// `[0, length]`).
    fn pose_at(&self, u: f64) -> ([f64; 2], f64) {
        match self.shape {
            Shape::Straight { dir } => (
                [self.start[0] + u * dir[0], self.start[1] + u * dir[1]],
                self.heading,
            ),
            Shape::Arc {
                center,
                radius,
                turn,
                phi0,
                ..
            } => {
                let phi = phi0 + turn * u / radius;
                (
                    [center[0] + radius * phi.cos(), center[1] + radius * phi.sin()],
                    wrap_angle(self.heading + turn * u / radius),
                )
            }
        }
    }

    fn project(&self, p: [f64; 2]) -> Projection {
        match self.shape {
            Shape::Straight { dir } => {
                let dx = p[0] - self.start[0];
                let dy = p[1] - self.start[1];
                let along = dx * dir[0] + dy * dir[1];
                let u = along.clamp(0.0, self.length);
                let fx = self.start[0] + u * dir[0];
                let fy = self.start[1] + u * dir[1];
                let cross = dir[0] * (p[1] - fy) - dir[1] * (p[0] - fx);
                let distance = if u == along {
                    cross.abs()
                } else {
                    (p[0] - fx).hypot(p[1] - fy)
                };
                Projection {
                    s: self.s0 + u,
                    e: distance.copysign(cross),
                    distance,
                    tangent: self.heading,
                }
            }
            Shape::Arc {
                center,
                radius,
                turn,
                phi0,
                sweep_abs,
                ..
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let rho = dx.hypot(dy);
                // Travel-direction angle from the start radius, in (-pi, pi].
                let rel = wrap_angle(turn * (dy.atan2(dx) - phi0));
                if (0.0..=sweep_abs).contains(&rel) {
                    let u = rel * radius;
                    Projection {
                        s: self.s0 + u,
                        e: turn * (radius - rho),
                        distance: (radius - rho).abs(),
                        tangent: wrap_angle(self.heading + turn * rel),
                    }
                } else {
                    // Outside the sweep: nearest point is an endpoint.
                    let (ps, _) = self.pose_at(0.0);
                    let (pe, _) = self.pose_at(self.length);
                    let ds = (p[0] - ps[0]).hypot(p[1] - ps[1]);
                    let de = (p[0] - pe[0]).hypot(p[1] - pe[1]);
                    let u = if ds <= de { 0.0 } else { self.length };
                    let (foot, tangent) = self.pose_at(u);
                    let cross = tangent.cos() * (p[1] - foot[1]) - tangent.sin() * (p[0] - foot[0]);
                    let distance = (p[0] - foot[0]).hypot(p[1] - foot[1]);
                    Projection {
                        s: self.s0 + u,
                        e: distance.copysign(cross),
                        distance,
                        tangent,
                    }
                }
            }
        }
    }

    /// Disc containing every point within `margin` of this segment.
    fn bounding_disc(&self, margin: f64) -> ([f64; 2], f64) {
        let (mid, _) = self.pose_at(self.length / 2.0);
        (mid, self.length / 2.0 + margin)
    }

    /// Unsigned distance to this segment if it is at most `limit`, using a
    /// cheap rejection test first.
    #[inline]
    fn distance_within(&self, p: [f64; 2], limit: f64) -> Option<f64> {
        match self.shape {
            Shape::Straight { dir } => {
                let dx = p[0] - self.start[0];
                let dy = p[1] - self.start[1];
                let cross = dir[0] * dy - dir[1] * dx;
                if cross.abs() > limit {
                    return None;
                }
                let along = dx * dir[0] + dy * dir[1];
                let d = if along < 0.0 {
                    (dx * dx + dy * dy).sqrt()
                } else if along > self.length {
                    let over = along - self.length;
                    (over * over + cross * cross).sqrt()
                } else {
                    cross.abs()
                };
                (d <= limit).then_some(d)
            }
            Shape::Arc {
                center,
                radius,
                turn,
                sweep_abs,
                radial0,
                radial1,
                ..
            } => {
                let dx = p[0] - center[0];
                let dy = p[1] - center[1];
                let rho2 = dx * dx + dy * dy;
                let lo = (radius - limit).max(0.0);
                let hi = radius + limit;
                if rho2 < lo * lo || rho2 > hi * hi {
                    return None;
                }
                // Sweep membership by half-planes; agrees with the polar test
                // in `project` without the atan2.
                let after_start = turn * (radial0[0] * dy - radial0[1] * dx) >= 0.0;
                let before_end = turn * (dx * radial1[1] - dy * radial1[0]) >= 0.0;
                let inside = if sweep_abs <= PI {
                    after_start && before_end
                } else {
                    after_start || before_end
                };
                let d = if inside {
                    (rho2.sqrt() - radius).abs()
                } else {
                    let (a, b) = (
                        [center[0] + radius * radial0[0], center[1] + radius * radial0[1]],
                        [center[0] + radius * radial1[0], center[1] + radius * radial1[1]],
                    );
                    let da = (p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2);
                    let db = (p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2);
                    da.min(db).sqrt()
                };
                (d <= limit).then_some(d)
            }
        }
    }
}

/// Fixed route geometry. Immutable once built.
#[derive(Debug, Clone)]
pub struct RouteGeometry {
    id: RouteId,
    segments: Vec<Segment>,
    lane_half_width: f64,
    key_interval: (f64, f64),
    total_length: f64,
    placed: Vec<Placed>,
    /// `placed` plus straight extensions before the start and after the end.
    extended: Vec<Placed>,
}

/// Nearest-point answer from [`locate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CenterlineQuery {
    pub s: f64,
    /// Signed cross-track error, positive left of the travel direction.
    pub cross_track_e: f64,
    pub heading_error: f64,
}

/// Left and right lane boundary polylines in the world frame.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Markings {
    pub s: Vec<f64>,
    pub center: Vec<[f64; 2]>,
    pub left: Vec<[f64; 2]>,
    pub right: Vec<[f64; 2]>,
}

impl RouteGeometry {
    /// Build a route from raw segments. Panics on non-positive widths or radii.
    pub fn from_segments(
        id: RouteId,
        segments: Vec<Segment>,
        lane_half_width: f64,
        key_interval: (f64, f64),
    ) -> Self {
        assert!(lane_half_width > 0.0, "lane half width must be positive");
        let mut placed = Vec::with_capacity(segments.len());
        let mut pos = [0.0, 0.0];
        let mut heading = 0.0;
        let mut s0 = 0.0;
        for &seg in &segments {
            if let Segment::Arc { radius, .. } = seg {
                assert!(radius > 0.0, "arc radius must be positive");
            }
            let p = Placed::new(pos, heading, s0, seg);
            let (end, end_heading) = p.pose_at(p.length);
            s0 += p.length;
            pos = end;
            heading = end_heading;
            placed.push(p);
        }
        let total_length = s0;
        assert!(
            key_interval.0 >= 0.0 && key_interval.1 <= total_length && key_interval.0 < key_interval.1,
            "key interval must lie within the route"
        );

        let mut extended = Vec::with_capacity(placed.len() + 2);
        let lead_dir = [placed[0].heading.cos(), placed[0].heading.sin()];
        extended.push(Placed::new(
            [
                -RENDER_EXTENSION_M * lead_dir[0],
                -RENDER_EXTENSION_M * lead_dir[1],
            ],
            placed[0].heading,
            -RENDER_EXTENSION_M,
            Segment::Straight {
                length: RENDER_EXTENSION_M,
            },
        ));
        extended.extend(placed.iter().copied());
        extended.push(Placed::new(
            pos,
            heading,
            total_length,
            Segment::Straight {
                length: RENDER_EXTENSION_M,
            },
        ));

        RouteGeometry {
            id,
            segments,
            lane_half_width,
            key_interval,
            total_length,
            placed,
            extended,
        }
    }

    pub fn id(&self) -> RouteId {
        self.id
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn lane_half_width(&self) -> f64 {
        self.lane_half_width
    }

    pub fn key_interval(&self) -> (f64, f64) {
        self.key_interval
    }

    pub fn total_length(&self) -> f64 {
        self.total_length
    }

    /// Arc-length window that is scored and must be traversed: the key
    /// interval for key subsets, the whole route otherwise.
    pub fn scoring_window(&self) -> (f64, f64) {
        if self.id.is_key() {
            self.key_interval
        } else {
            (0.0, self.total_length)
        }
    }

    /// Arc-length offset of each segment's start.
    pub fn segment_starts(&self) -> Vec<f64> {
        self.placed.iter().map(|p| p.s0).collect()
    }

    /// Centerline point and tangent heading at arc length `s`. Outside
    /// `[0, total_length]` the route is extended straight along its end tangents.
    pub fn pose_at(&self, s: f64) -> ([f64; 2], f64) {
        if s < 0.0 {
            return self.extended[0].pose_at(s + RENDER_EXTENSION_M);
        }
        if s > self.total_length {
            let last = self.extended.last().expect("extension present");
            return last.pose_at(s - self.total_length);
        }
        let idx = self
            .placed
            .iter()
            .rposition(|p| p.s0 <= s)
            .unwrap_or(0);
        let seg = &self.placed[idx];
        seg.pose_at((s - seg.s0).min(seg.length))
    }

    /// Unsigned distance from `p` to the (extended) centerline when it is at
    /// most `limit`. Used by the renderer.
    #[inline]
    pub fn centerline_distance_within(&self, p: [f64; 2], limit: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for seg in &self.extended {
            if let Some(d) = seg.distance_within(p, limit) {
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }

    /// Indices of rendered segments that may lie within `limit` of some
    /// point on the ground segment `a`-`b`. Feed them to
    /// [`Self::centerline_distance_among`] for every point of that segment.
    pub fn render_candidates(&self, a: [f64; 2], b: [f64; 2], limit: f64, out: &mut Vec<usize>) {
        out.clear();
        let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dy * dy;
        for (k, seg) in self.extended.iter().enumerate() {
            let (c, r) = seg.bounding_disc(limit);
            let t = if len2 > 0.0 {
                (((c[0] - a[0]) * dx + (c[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let (fx, fy) = (a[0] + t * dx, a[1] + t * dy);
            if (c[0] - fx).hypot(c[1] - fy) <= r {
                out.push(k);
            }
        }
    }

    /// [`Self::centerline_distance_within`] restricted to the segments in
    /// `candidates`.
    #[inline]
    pub fn centerline_distance_among(&self, candidates: &[usize], p: [f64; 2], limit: f64) -> Option<f64> {
        let mut best: Option<f64> = None;
        for &k in candidates {
            if let Some(d) = self.extended[k].distance_within(p, limit) {
                best = Some(best.map_or(d, |b: f64| b.min(d)));
            }
        }
        best
    }

    /// Centerline sampled every `step` metres for plotting.
    pub fn sample_centerline(&self, step: f64) -> Vec<[f64; 3]> {
        let n = (self.total_length / step).ceil().max(1.0) as usize;
        (0..=n)
            .map(|i| {
                let s = (i as f64 * step).min(self.total_length);
                let (p, _) = self.pose_at(s);
                [p[0], p[1], s]
            })
            .collect()
    }

    /// JSON dump of the segment list and a sampled centerline.
    pub fn to_json(&self, step: f64) -> serde_json::Value {
        serde_json::json!({
            "id": self.id,
            "lane_half_width": self.lane_half_width,
            "key_interval": [self.key_interval.0, self.key_interval.1],
            "scoring_window": [self.scoring_window().0, self.scoring_window().1],
            "total_length": self.total_length,
            "segments": self.segments,
            "centerline": self.sample_centerline(step),
        })
    }
}

/// Build one of the six fixed routes.
pub fn build_route(id: RouteId) -> RouteGeometry {
    let (segments, key_segment) = match id.parent() {
        RouteId::A => (
            vec![
                Segment::Straight { length: 40.0 },
                Segment::Arc {
                    radius: 20.0,
                    sweep: -FRAC_PI_2,
                },
                Segment::Straight { length: 150.0 },
            ],
            1,
        ),
        RouteId::B => (
            vec![
                Segment::Arc {
                    radius: 20.0,
                    sweep: FRAC_PI_2,
                },
                Segment::Straight { length: 30.0 },
                Segment::Arc {
                    radius: 50.0,
                    sweep: 120f64.to_radians(),
                },
            ],
            2,
        ),
        _ => (
            vec![
                Segment::Straight { length: 30.0 },
                Segment::Arc {
                    radius: 60.0,
                    sweep: -(150f64.to_radians()),
                },
            ],
            1,
        ),
    };
    let total: f64 = segments.iter().map(Segment::length).sum();
    let start: f64 = segments[..key_segment].iter().map(Segment::length).sum();
    let end = start + segments[key_segment].length();
    let key = (
        (start - KEY_MARGIN_M).max(0.0),
        (end + KEY_MARGIN_M).min(total),
    );
    RouteGeometry::from_segments(id, segments, LANE_HALF_WIDTH_M, key)
}

/// Parse a route id and build it.
pub fn build_route_named(name: &str) -> Result<RouteGeometry, WorldError> {
    Ok(build_route(name.parse()?))
}

/// Nearest centerline point, signed cross-track error and heading error.
///
/// Ties between segments resolve to the smallest arc length.
pub fn locate(
    route: &RouteGeometry,
    position: [f64; 2],
    heading: f64,
) -> Result<CenterlineQuery, WorldError> {
    let mut best: Option<Projection> = None;
    for seg in &route.placed {
        let p = seg.project(position);
        match best {
            Some(b) if b.distance <= p.distance => {}
            _ => best = Some(p),
        }
    }
    let best = best.expect("routes have at least one segment");
    if best.distance > LOCATE_ENVELOPE_M {
        return Err(WorldError::OutOfEnvelope {
            distance: best.distance,
        });
    }
    Ok(CenterlineQuery {
        s: best.s,
        cross_track_e: best.e,
        heading_error: wrap_angle(heading - best.tangent),
    })
}

/// Lane boundary polylines offset by the lane half width normal to the
/// centerline, sampled from `s_range.0` to `s_range.1` inclusive.
pub fn sample_markings(
    route: &RouteGeometry,
    s_range: (f64, f64),
    step: f64,
) -> Result<Markings, WorldError> {
    let (start, end) = s_range;
    if step.is_nan() || step <= 0.0 || end.is_nan() || start.is_nan() || end <= start {
        return Err(WorldError::EmptyRange { start, end, step });
    }
    let intervals = ((end - start) / step - 1e-9).ceil().max(1.0) as usize;
    let hw = route.lane_half_width;
    let mut out = Markings {
        s: Vec::with_capacity(intervals + 1),
        center: Vec::with_capacity(intervals + 1),
        left: Vec::with_capacity(intervals + 1),
        right: Vec::with_capacity(intervals + 1),
    };
    for i in 0..=intervals {
        let s = if i == intervals {
            end
        } else {
            start + i as f64 * step
        };
        let (c, h) = route.pose_at(s);
        let (nx, ny) = (-h.sin(), h.cos());
        out.s.push(s);
        out.center.push(c);
        out.left.push([c[0] + hw * nx, c[1] + hw * ny]);
        out.right.push([c[0] - hw * nx, c[1] - hw * ny]);
    }
    Ok(out)
}

/// Normalize an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn route_a_layout_and_length() {
        let r = build_route(RouteId::A);
        assert_eq!(r.segments()[0], Segment::Straight { length: 40.0 });
        assert_eq!(
            r.segments()[1],
            Segment::Arc {
                radius: 20.0,
                sweep: -FRAC_PI_2
            }
        );
        assert_eq!(r.segments()[2], Segment::Straight { length: 150.0 });
        assert_abs_diff_eq!(r.total_length(), 40.0 + 20.0 * FRAC_PI_2 + 150.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.total_length(), 221.416, epsilon = 1e-3);
        // 90 degree right turn: ends heading -pi/2.
        let (end, h) = r.pose_at(r.total_length());
        assert_abs_diff_eq!(h, -FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(end[0], 60.0, epsilon = 1e-9);
        assert_abs_diff_eq!(end[1], -170.0, epsilon = 1e-9);
    }

    #[test]
    fn route_c_starts_straight_and_key_variants() {
        let c = build_route(RouteId::C);
        assert!(matches!(c.segments()[0], Segment::Straight { .. }));
        let ck = build_route(RouteId::CKey);
        assert_eq!(ck.segments(), c.segments());
        assert_eq!(ck.key_interval(), c.key_interval());
        assert_eq!(c.scoring_window(), (0.0, c.total_length()));
        assert_eq!(ck.scoring_window(), ck.key_interval());
        let a = build_route(RouteId::AKey);
        assert_abs_diff_eq!(a.key_interval().0, 30.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a.key_interval().1, 40.0 + 10.0 * PI + 10.0, epsilon = 1e-12);
    }

    #[test]
    fn segments_are_c0_continuous() {
        for id in RouteId::ALL {
            let r = build_route(id);
            for s0 in r.segment_starts().into_iter().skip(1) {
                let (a, ha) = r.pose_at(s0 - 1e-9);
                let (b, hb) = r.pose_at(s0);
                assert!((a[0] - b[0]).hypot(a[1] - b[1]) < 1e-6, "{id} gap at {s0}");
                assert!(wrap_angle(ha - hb).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn unknown_route_is_an_error() {
        assert!(matches!(
            build_route_named("D"),
            Err(WorldError::UnknownRoute(_))
        ));
        assert_eq!(build_route_named("b_key").unwrap().id(), RouteId::BKey);
    }

    #[test]
    fn locate_on_centerline_and_left_offset() {
        let r = build_route(RouteId::A);
        let q = locate(&r, [12.0, 0.0], 0.0).unwrap();
        assert_eq!(q.cross_track_e, 0.0);
        assert_eq!(q.heading_error, 0.0);
        assert_abs_diff_eq!(q.s, 12.0);
        let q = locate(&r, [12.0, 1.0], 0.0).unwrap();
        assert_abs_diff_eq!(q.cross_track_e, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn locate_arc_midpoint_radial_offset() {
        let r = build_route(RouteId::A);
        let s_mid = 40.0 + 20.0 * PI / 4.0;
        let (c, h) = r.pose_at(s_mid);
        // Right turn: outward is to the left of travel.
        let out = [c[0] - 0.5 * h.sin(), c[1] + 0.5 * h.cos()];
        let q = locate(&r, out, h).unwrap();
        assert_abs_diff_eq!(q.cross_track_e.abs(), 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(q.s, s_mid, epsilon = 1e-9);

        // Dense numerical nearest-point search agrees.
        let (mut best_s, mut best_d) = (0.0, f64::MAX);
        let n = 400_000;
        for i in 0..=n {
            let s = r.total_length() * i as f64 / n as f64;
            let (p, _) = r.pose_at(s);
            let d = (p[0] - out[0]).hypot(p[1] - out[1]);
            if d < best_d {
                best_d = d;
                best_s = s;
            }
        }
        assert_abs_diff_eq!(best_d, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(best_s, q.s, epsilon = 1e-3);
    }

    #[test]
    fn locate_out_of_envelope() {
        let r = build_route(RouteId::A);
        assert!(matches!(
            locate(&r, [10.0, 60.0], 0.0),
            Err(WorldError::OutOfEnvelope { .. })
        ));
    }

    #[test]
    fn locate_tie_prefers_smallest_s() {
        // Two straights meeting at a corner-free junction: the junction point
        // is equidistant to both; the earlier segment wins.
        let r = build_route(RouteId::A);
        let q = locate(&r, [40.0, 0.0], 0.0).unwrap();
        assert_abs_diff_eq!(q.s, 40.0);
        let r = RouteGeometry::from_segments(
            RouteId::A,
            vec![
                Segment::Straight { length: 10.0 },
                Segment::Straight { length: 10.0 },
            ],
            1.75,
            (0.0, 20.0),
        );
        let q = locate(&r, [10.0, 3.0], 0.0).unwrap();
        assert_eq!(q.s, 10.0);
    }

    #[test]
    fn markings_straight_parallel() {
        let r = build_route(RouteId::A);
        let m = sample_markings(&r, (0.0, 40.0), 5.0).unwrap();
        assert_eq!(m.left.len(), 9);
        for (l, rt) in m.left.iter().zip(&m.right) {
            assert_abs_diff_eq!(l[1], 1.75);
            assert_abs_diff_eq!(rt[1], -1.75);
            assert_abs_diff_eq!(l[1] - rt[1], 2.0 * r.lane_half_width());
        }
    }

    #[test]
    fn markings_arc_offset_radii() {
        // Route B opens with a left arc r = 20: left boundary is the inner one.
        let r = build_route(RouteId::B);
        let center = [0.0, 20.0];
        let m = sample_markings(&r, (0.0, 20.0 * FRAC_PI_2), 1.0).unwrap();
        for (l, rt) in m.left.iter().zip(&m.right) {
            assert_abs_diff_eq!((l[0] - center[0]).hypot(l[1] - center[1]), 18.25, epsilon = 1e-9);
            assert_abs_diff_eq!((rt[0] - center[0]).hypot(rt[1] - center[1]), 21.75, epsilon = 1e-9);
        }
        // Route A turns right at r = 20: left boundary is the outer one.
        let a = build_route(RouteId::A);
        let (start, h) = a.pose_at(40.0);
        let c = [start[0] + 20.0 * h.sin(), start[1] - 20.0 * h.cos()];
        let m = sample_markings(&a, (45.0, 60.0), 1.0).unwrap();
        for l in &m.left {
            assert_abs_diff_eq!((l[0] - c[0]).hypot(l[1] - c[1]), 21.75, epsilon = 1e-9);
        }
    }

    #[test]
    fn markings_single_step_and_empty() {
        let r = build_route(RouteId::C);
        let m = sample_markings(&r, (10.0, 50.0), 40.0).unwrap();
        assert_eq!(m.left.len(), 2);
        assert_eq!(m.right.len(), 2);
        assert!(sample_markings(&r, (10.0, 10.0), 1.0).is_err());
        assert!(sample_markings(&r, (10.0, 20.0), 0.0).is_err());
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn render_distance_matches_locate_near_road() {
        let r = build_route(RouteId::B);
        for i in 0..200 {
            let s = 2.0 + i as f64 * 0.8;
            let (c, h) = r.pose_at(s);
            let off = ((i % 7) as f64 - 3.0) * 0.6;
            let p = [c[0] - off * h.sin(), c[1] + off * h.cos()];
            let q = locate(&r, p, h).unwrap();
            let d = r.centerline_distance_within(p, 2.5);
            assert_abs_diff_eq!(d.unwrap(), q.cross_track_e.abs(), epsilon = 1e-9);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn centerline_pose_locates_to_zero(idx in 0usize..6, frac in 0.001f64..0.999) {
                let r = build_route(RouteId::ALL[idx]);
                let s = frac * r.total_length();
                let (p, h) = r.pose_at(s);
                let q = locate(&r, p, h).unwrap();
                prop_assert!(q.cross_track_e.abs() < 1e-9);
                prop_assert!(q.heading_error.abs() < 1e-9);
            }

            #[test]
            fn mirrored_point_flips_sign(idx in 0usize..3, frac in 0.02f64..0.98, off in -3.0f64..3.0) {
                let r = build_route(RouteId::ALL[idx]);
                let s = frac * r.total_length();
                let (c, h) = r.pose_at(s);
                let (nx, ny) = (-h.sin(), h.cos());
                let a = locate(&r, [c[0] + off * nx, c[1] + off * ny], h).unwrap();
                let b = locate(&r, [c[0] - off * nx, c[1] - off * ny], h).unwrap();
                prop_assert!((a.cross_track_e + b.cross_track_e).abs() < 1e-6);
                prop_assert!((a.cross_track_e.abs() - off.abs()).abs() < 1e-6);
            }

            #[test]
            fn marking_points_at_half_width(idx in 0usize..3, a in 0.0f64..100.0, len in 1.0f64..60.0, step in 0.1f64..5.0) {
                let r = build_route(RouteId::ALL[idx]);
                let m = sample_markings(&r, (a, a + len), step).unwrap();
                for ((c, l), rt) in m.center.iter().zip(&m.left).zip(&m.right) {
                    prop_assert!(((l[0] - c[0]).hypot(l[1] - c[1]) - 1.75).abs() < 1e-9);
                    prop_assert!(((rt[0] - c[0]).hypot(rt[1] - c[1]) - 1.75).abs() < 1e-9);
                }
            }

            #[test]
            fn render_distance_matches_projection(idx in 0usize..3, frac in -0.2f64..1.2, off in -4.0f64..4.0, jx in -3.0f64..3.0) {
                let r = build_route(RouteId::ALL[idx]);
                let limit = 2.0;
                let (c, h) = r.pose_at((frac * r.total_length()).clamp(0.0, r.total_length()));
                let (px, py) = (c[0] - off * h.sin() + jx, c[1] + off * h.cos());
                let p = [px, py];
                let exact = r
                    .extended
                    .iter()
                    .map(|seg| seg.project(p).distance)
                    .fold(f64::INFINITY, f64::min);
                let all: Vec<usize> = (0..r.extended.len()).collect();
                let mut rows = Vec::new();
                r.render_candidates([px - 1.0, py], [px + 1.0, py], limit, &mut rows);
                for got in [r.centerline_distance_within(p, limit), r.centerline_distance_among(&rows, p, limit), r.centerline_distance_among(&all, p, limit)] {
                    match got {
                        Some(d) => prop_assert!((d - exact).abs() < 1e-9),
                        None => prop_assert!(exact > limit - 1e-9),
                    }
                }
            }
        }
    }
}
