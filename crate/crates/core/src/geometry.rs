//! Convex polygons in the plane.
//!
//! A [`ConvexPolygon`] is always stored in canonical form: counterclockwise,
//! strictly convex (collinear runs merged), starting at the vertex with the
//! smallest `(y, x)`. Every constructor funnels through [`validate`].

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point or vector in the plane.
pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn add(a: Point, b: Point) -> Point {
    [a[0] + b[0], a[1] + b[1]]
}

#[inline]
pub fn scale(s: f64, a: Point) -> Point {
    [s * a[0], s * a[1]]
}

#[inline]
pub fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

#[inline]
pub fn norm(a: Point) -> f64 {
    a[0].hypot(a[1])
}

/// `(1 - t) a + t b`
#[inline]
pub fn lerp(a: Point, b: Point, t: f64) -> Point {
    [(1.0 - t) * a[0] + t * b[0], (1.0 - t) * a[1] + t * b[1]]
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("vertex {0} is not finite")]
    NonFinite(usize),
    #[error("vertex sequence is not convex (turn {cross:e} at vertex {index})")]
    NotConvex { index: usize, cross: f64 },
    #[error("polygon is degenerate (area {area:e})")]
    Degenerate { area: f64 },
    #[error("combination parameter t = {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
}

/// Relative tolerances used by [`validate_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomTolerance {
    /// Cross products below `collinear * scale^2` count as collinear.
    pub collinear: f64,
    /// Areas below `area * scale^2` are degenerate.
    pub area: f64,
}

impl Default for GeomTolerance {
    fn default() -> Self {
        Self {
            collinear: 1e-12,
            area: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    vertices: Vec<Point>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Validate with the default tolerances.
pub fn validate(raw: &[Point]) -> Result<ConvexPolygon, GeometryError> {
    validate_with(raw, GeomTolerance::default())
}

/// Canonicalize a vertex sequence into a [`ConvexPolygon`].
///
/// Accepts either orientation. Duplicate and collinear vertices are dropped;
/// a reflex turn, a collinear backtrack or a sequence that winds more than
/// once is rejected as `NotConvex`.
pub fn validate_with(raw: &[Point], tol: GeomTolerance) -> Result<ConvexPolygon, GeometryError> {
    if raw.len() < 3 {
        return Err(GeometryError::TooFewVertices(raw.len()));
    }
    if let Some(i) = raw.iter().position(|v| !v[0].is_finite() || !v[1].is_finite()) {
        return Err(GeometryError::NonFinite(i));
    }

    let length_scale = bbox_diameter(raw);
    if length_scale == 0.0 {
        return Err(GeometryError::Degenerate { area: 0.0 });
    }
    let scale2 = length_scale * length_scale;

    let mut pts: Vec<Point> = Vec::with_capacity(raw.len());
    for &v in raw {
        if pts.last().is_none_or(|&l| norm(sub(v, l)) > tol.collinear * length_scale) {
            pts.push(v);
        }
    }
    while pts.len() > 1 && norm(sub(pts[0], pts[pts.len() - 1])) <= tol.collinear * length_scale {
        pts.pop();
    }

    let area = signed_area(&pts);
    if area.abs() <= tol.area * scale2 || pts.len() < 3 {
        return Err(GeometryError::Degenerate { area: area.abs() });
    }
    if area < 0.0 {
        pts.reverse();
    }

    // Merge collinear vertices until stable; reject reflex turns.
    loop {
        let n = pts.len();
        if n < 3 {
            return Err(GeometryError::Degenerate { area: 0.0 });
        }
        let mut removed = None;
        for i in 0..n {
            let prev = pts[(i + n - 1) % n];
            let next = pts[(i + 1) % n];
            let e0 = sub(pts[i], prev);
            let e1 = sub(next, pts[i]);
            let c = cross(e0, e1);
            if c.abs() <= tol.collinear * scale2 {
                if dot(e0, e1) < 0.0 {
                    return Err(GeometryError::NotConvex { index: i, cross: c });
                }
                removed = Some(i);
                break;
            }
            if c < 0.0 {
                return Err(GeometryError::NotConvex { index: i, cross: c });
            }
        }
        match removed {
            Some(i) => {
                pts.remove(i);
            }
            None => break,
        }
    }

    // All left turns but winding twice (a star) is still not convex.
    let n = pts.len();
    let turning: f64 = (0..n)
        .map(|i| {
            let e0 = sub(pts[i], pts[(i + n - 1) % n]);
            let e1 = sub(pts[(i + 1) % n], pts[i]);
            cross(e0, e1).atan2(dot(e0, e1))
        })
        .sum();
    if (turning - std::f64::consts::TAU).abs() > 1e-6 {
        return Err(GeometryError::NotConvex { index: 0, cross: turning });
    }

    let area = signed_area(&pts);
    if area <= tol.area * scale2 {
        return Err(GeometryError::Degenerate { area });
    }

    let start = (0..n)
        .min_by(|&a, &b| {
            let (pa, pb) = (pts[a], pts[b]);
            pa[1].total_cmp(&pb[1]).then(pa[0].total_cmp(&pb[0]))
        })
        .unwrap_or(0);
    pts.rotate_left(start);

    Ok(ConvexPolygon {
        vertices: pts,
        label: None,
    })
}

fn bbox_diameter(pts: &[Point]) -> f64 {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    norm(sub(hi, lo))
}

fn signed_area(pts: &[Point]) -> f64 {
    let n = pts.len();
    0.5 * (0..n).map(|i| cross(pts[i], pts[(i + 1) % n])).sum::<f64>()
}

/// Convex hull by Andrew's monotone chain; CCW, collinear points dropped.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if cross(sub(b, a), sub(p, b)) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// `(1 - t) A + t B`, the convex hull of all pairwise vertex combinations.
pub fn minkowski_combination(
    a: &ConvexPolygon,
    b: &ConvexPolygon,
    t: f64,
) -> Result<ConvexPolygon, GeometryError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::ParameterOutOfRange(t));
    }
    if t == 0.0 {
        return Ok(a.clone().without_label());
    }
    if t == 1.0 {
        return Ok(b.clone().without_label());
    }
    let mut sums = Vec::with_capacity(a.len() * b.len());
    for &va in a.vertices() {
        for &vb in b.vertices() {
            sums.push(add(scale(1.0 - t, va), scale(t, vb)));
        }
    }
    validate(&convex_hull(&sums))
}

/// Closed containment with a margin: every signed edge distance is `>= margin`.
pub fn contains(poly: &ConvexPolygon, x: Point, margin: f64) -> bool {
    poly.signed_distance(x) >= margin
}

impl ConvexPolygon {
    pub fn new(raw: &[Point]) -> Result<Self, GeometryError> {
        validate(raw)
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        validate(&[[x0, y0], [x1, y0], [x1, y1], [x0, y1]])
    }

    /// Square of the given side centred at `center`.
    pub fn square(side: f64, center: Point) -> Result<Self, GeometryError> {
        let s = 0.5 * side;
        Self::rectangle(center[0] - s, center[1] - s, center[0] + s, center[1] + s)
    }

    /// Regular `n`-gon with circumradius `radius`; the first vertex is at angle `phase`.
    pub fn regular(n: usize, radius: f64, center: Point, phase: f64) -> Result<Self, GeometryError> {
        let verts: Vec<Point> = (0..n)
            .map(|k| {
                let a = phase + std::f64::consts::TAU * k as f64 / n as f64;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            })
            .collect();
        validate(&verts)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    fn without_label(mut self) -> Self {
        self.label = None;
        self
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs in CCW order.
    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| norm(sub(b, a))).sum()
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        let mut d: f64 = 0.0;
        for i in 0..v.len() {
            for j in i + 1..v.len() {
                d = d.max(norm(sub(v[i], v[j])));
            }
        }
        d
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (p, q) = (self.vertices[i], self.vertices[(i + 1) % n]);
            let c = cross(p, q);
            a2 += c;
            cx += (p[0] + q[0]) * c;
            cy += (p[1] + q[1]) * c;
        }
        [cx / (3.0 * a2), cy / (3.0 * a2)]
    }

    /// Minimum signed distance to the edge lines; positive inside.
    pub fn signed_distance(&self, x: Point) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let e = sub(b, a);
                cross(e, sub(x, a)) / norm(e)
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
        for p in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn translated(&self, d: Point) -> Self {
        let v: Vec<Point> = self.vertices.iter().map(|&p| add(p, d)).collect();
        // Translation preserves convexity and orientation.
        Self {
            vertices: v,
            label: self.label.clone(),
        }
    }

    pub fn scaled(&self, s: f64) -> Result<Self, GeometryError> {
        let v: Vec<Point> = self.vertices.iter().map(|&p| scale(s, p)).collect();
        validate(&v)
    }

    /// Rotation about the origin by `angle` radians.
    pub fn rotated(&self, angle: f64) -> Result<Self, GeometryError> {
        let (s, c) = angle.sin_cos();
        let v: Vec<Point> = self
            .vertices
            .iter()
            .map(|p| [c * p[0] - s * p[1], s * p[0] + c * p[1]])
            .collect();
        validate(&v)
    }

    /// Same vertex set, ignoring start index.
    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        if self.len() != other.len() {
            return false;
        }
        let n = self.len();
        (0..n).any(|shift| {
            (0..n).all(|i| norm(sub(self.vertices[i], other.vertices[(i + shift) % n])) <= tol)
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_square() -> ConvexPolygon {
        validate(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap()
    }

    #[test]
    fn validate_unit_square() {
        let sq = unit_square();
        assert_eq!(sq.len(), 4);
        assert_eq!(sq.area(), 1.0);
        assert_eq!(sq.vertices()[0], [0.0, 0.0]);
    }

    #[test]
    fn reflex_vertex_is_rejected() {
        let err = validate(&[[0.0, 0.0], [1.0, 0.0], [0.5, 0.5], [1.0, 1.0], [0.0, 1.0]]).unwrap_err();
        assert!(matches!(err, GeometryError::NotConvex { .. }));
    }

    #[test]
    fn collinear_vertex_is_merged() {
        let tri = validate(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(tri.vertices(), &[[0.0, 0.0], [2.0, 0.0], [1.0, 1.0]]);
    }

    #[test]
    fn clockwise_input_is_reoriented() {
        let sq = validate(&[[0.0, 0.0], [0.0, 1.0], [1.0, 1.0], [1.0, 0.0]]).unwrap();
        assert_eq!(sq, unit_square());
        assert!(sq.area() > 0.0);
    }

    #[test]
    fn error_cases() {
        assert_eq!(validate(&[[0.0, 0.0], [1.0, 0.0]]), Err(GeometryError::TooFewVertices(2)));
        assert!(matches!(
            validate(&[[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]),
            Err(GeometryError::Degenerate { .. })
        ));
        assert!(matches!(
            validate(&[[0.0, 0.0], [f64::NAN, 0.0], [2.0, 1.0]]),
            Err(GeometryError::NonFinite(1))
        ));
        // Collinear backtrack.
        assert!(matches!(
            validate(&[[0.0, 0.0], [2.0, 0.0], [1.0, 0.0], [1.0, 1.0]]),
            Err(GeometryError::NotConvex { .. })
        ));
    }

    #[test]
    fn pentagram_is_not_convex() {
        let star: Vec<Point> = (0..5)
            .map(|k| {
                let a = std::f64::consts::TAU * (2 * k) as f64 / 5.0;
                [a.cos(), a.sin()]
            })
            .collect();
        assert!(matches!(validate(&star), Err(GeometryError::NotConvex { .. })));
    }

    #[test]
    fn validate_is_idempotent() {
        let hex = ConvexPolygon::regular(6, 1.0, [0.3, -0.2], 0.1).unwrap();
        assert_eq!(validate(hex.vertices()).unwrap(), hex);
    }

    #[test]
    fn minkowski_endpoints_and_self_combination() {
        let a = unit_square();
        let b = ConvexPolygon::regular(5, 0.7, [2.0, 1.0], 0.3).unwrap();
        assert_eq!(minkowski_combination(&a, &b, 0.0).unwrap(), a);
        assert_eq!(minkowski_combination(&a, &b, 1.0).unwrap(), b);
        assert!(minkowski_combination(&a, &a, 0.5).unwrap().approx_eq(&a, 1e-14));
        assert!(minkowski_combination(&a, &b, 1.5).is_err());
    }

    #[test]
    fn minkowski_translation_linearity() {
        let a = unit_square();
        let b = a.translated([2.0, 0.0]);
        let mid = minkowski_combination(&a, &b, 0.5).unwrap();
        assert!(mid.approx_eq(&a.translated([1.0, 0.0]), 1e-14));
    }

    #[test]
    fn square_and_rotated_square_give_octagon() {
        let s = ConvexPolygon::square(1.0, [0.0, 0.0]).unwrap();
        let r = s.rotated(std::f64::consts::FRAC_PI_4).unwrap();
        let oct = minkowski_combination(&s, &r, 0.5).unwrap();
        assert_eq!(oct.len(), 8);
    }

    #[test]
    fn containment_convention() {
        let sq = unit_square();
        assert!(contains(&sq, [0.5, 0.5], 0.0));
        assert!(!contains(&sq, [0.5, 0.5], 0.6));
        assert!(contains(&sq, [1.0, 0.5], 0.0));
        assert!(!contains(&sq, [1.0 + 1e-12, 0.5], 0.0));
    }

    #[test]
    fn shape_measures() {
        let sq = ConvexPolygon::square(2.0, [1.0, -1.0]).unwrap();
        assert_eq!(sq.area(), 4.0);
        assert_eq!(sq.perimeter(), 8.0);
        assert!((sq.diameter() - 8f64.sqrt()).abs() < 1e-15);
        assert_eq!(sq.centroid(), [1.0, -1.0]);
        assert_eq!(sq.signed_distance([1.0, -1.0]), 1.0);
    }
}
