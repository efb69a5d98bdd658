//! Exact planar geometry of domains bounded by circles and polygons.
//!
//! Every boundary loop is oriented with the domain on its left: outer loops
//! counter-clockwise, holes clockwise. The domain is the intersection of the
//! "left sides" of all loops.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::geom::{self, Point};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Loop {
    /// `outer = true`: domain inside the circle (traversed CCW);
    /// `outer = false`: hole, domain outside (traversed CW).
    Circle {
        center: Point,
        radius: f64,
        outer: bool,
    },
    /// Closed polygon, domain on the left of each edge.
    Polygon { vertices: Vec<Point> },
}

impl Loop {
    pub fn length(&self) -> f64 {
        match self {
            Loop::Circle { radius, .. } => TAU * radius,
            Loop::Polygon { vertices } => polygon_edges(vertices).map(|(a, b)| geom::dist(a, b)).sum(),
        }
    }

    /// Whether `x` lies on the domain side of this loop.
    pub fn on_domain_side(&self, x: Point) -> bool {
        match self {
            Loop::Circle {
                center,
                radius,
                outer,
            } => {
                let d = geom::dist(x, *center);
                if *outer {
                    d < *radius
                } else {
                    d > *radius
                }
            }
            Loop::Polygon { vertices } => {
                let inside = point_in_polygon(x, vertices);
                if signed_area(vertices) > 0.0 {
                    inside
                } else {
                    !inside
                }
            }
        }
    }

    pub fn distance(&self, x: Point) -> f64 {
        match self {
            Loop::Circle { center, radius, .. } => (geom::dist(x, *center) - radius).abs(),
            Loop::Polygon { vertices } => polygon_edges(vertices)
                .map(|(a, b)| geom::segment_distance(x, a, b))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Point at arc-length parameter `s ∈ [0, length)` along the loop orientation.
    pub fn point_at(&self, s: f64) -> Point {
        match self {
            Loop::Circle {
                center,
                radius,
                outer,
            } => {
                let t = s / radius;
                let th = if *outer { t } else { -t };
                [center[0] + radius * th.cos(), center[1] + radius * th.sin()]
            }
            Loop::Polygon { vertices } => {
                let mut rest = s.rem_euclid(self.length());
                for (a, b) in polygon_edges(vertices) {
                    let l = geom::dist(a, b);
                    if rest <= l {
                        return geom::add(a, geom::scale(geom::sub(b, a), rest / l));
                    }
                    rest -= l;
                }
                vertices[0]
            }
        }
    }
}

pub(crate) fn polygon_edges(v: &[Point]) -> impl Iterator<Item = (Point, Point)> + '_ {
    (0..v.len()).map(move |i| (v[i], v[(i + 1) % v.len()]))
}

pub fn signed_area(v: &[Point]) -> f64 {
    0.5 * polygon_edges(v).map(|(a, b)| geom::cross(a, b)).sum::<f64>()
}

pub fn point_in_polygon(x: Point, v: &[Point]) -> bool {
    let mut inside = false;
    for (a, b) in polygon_edges(v) {
        if (a[1] > x[1]) != (b[1] > x[1]) {
            let xc = a[0] + (x[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if x[0] < xc {
                inside = !inside;
            }
        }
    }
    inside
}

/// Result of intersecting a disk `B(c, r)` with the domain.
#[derive(Debug, Clone, PartialEq)]
pub struct BallClip {
    pub center: Point,
    pub radius: f64,
    /// `|B(c, r) ∩ M|`
    pub area: f64,
    /// Length of `∂B ∩ int(M)` (the relative perimeter of `B ∩ M`).
    pub inner_arc: f64,
    /// Length of `∂M ∩ B`.
    pub boundary_inside: f64,
    /// Angular intervals `(θ1, θ2)`, `θ1 < θ2`, of `∂B` lying in the domain.
    pub arcs: Vec<(f64, f64)>,
}

impl BallClip {
    pub fn full_perimeter(&self) -> f64 {
        self.inner_arc + self.boundary_inside
    }

    /// Distance from `x` to the relative boundary `∂B ∩ M` (the arcs).
    pub fn distance_to_arcs(&self, x: Point) -> f64 {
        let d = geom::sub(x, self.center);
        let rho = geom::norm(d);
        let mut best = f64::INFINITY;
        let theta = geom::wrap_angle(d[1].atan2(d[0]));
        for &(t1, t2) in &self.arcs {
            let inside = rho == 0.0 || angle_in(theta, t1, t2);
            if inside {
                best = best.min((rho - self.radius).abs());
            }
            for t in [t1, t2] {
                let p = [
                    self.center[0] + self.radius * t.cos(),
                    self.center[1] + self.radius * t.sin(),
                ];
                best = best.min(geom::dist(x, p));
            }
        }
        best
    }
}

fn angle_in(theta: f64, t1: f64, t2: f64) -> bool {
    // t1 in [0, 2π), t2 may exceed 2π
    (theta >= t1 && theta <= t2) || (theta + TAU >= t1 && theta + TAU <= t2)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    pub loops: Vec<Loop>,
}

impl Geometry {
    pub fn contains(&self, x: Point) -> bool {
        self.loops.iter().all(|l| l.on_domain_side(x))
    }

    pub fn distance_to_boundary(&self, x: Point) -> f64 {
        self.loops.iter().map(|l| l.distance(x)).fold(f64::INFINITY, f64::min)
    }

    pub fn area(&self) -> f64 {
        self.loops
            .iter()
            .map(|l| match l {
                Loop::Circle { radius, outer, .. } => {
                    let a = std::f64::consts::PI * radius * radius;
                    if *outer {
                        a
                    } else {
                        -a
                    }
                }
                Loop::Polygon { vertices } => signed_area(vertices),
            })
            .sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.loops.iter().map(Loop::length).sum()
    }

    /// `n` points evenly spaced by arc length over all loops, with the loop
    /// index of each.
    pub fn sample_boundary(&self, n: usize) -> Vec<(usize, Point)> {
        let total = self.perimeter();
        let step = total / n as f64;
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            let mut s = (k as f64 + 0.5) * step;
            for (li, l) in self.loops.iter().enumerate() {
                let len = l.length();
                if s < len || li + 1 == self.loops.len() {
                    out.push((li, l.point_at(s.min(len))));
                    break;
                }
                s -= len;
            }
        }
        out
    }

    /// Exact intersection of the disk `B(c, r)` with the domain.
    pub fn clip_ball(&self, c: Point, r: f64) -> BallClip {
        // Crossings of ∂B with every loop, as angles around c.
        let mut angles = Vec::new();
        for l in &self.loops {
            match l {
                Loop::Circle { center, radius, .. } => {
                    if let Some((a1, a2)) = circle_circle_angles(c, r, *center, *radius) {
                        angles.push(a1);
                        angles.push(a2);
                    }
                }
                Loop::Polygon { vertices } => {
                    for (a, b) in polygon_edges(vertices) {
                        for t in segment_circle_params(a, b, c, r) {
                            if (0.0..=1.0).contains(&t) {
                                let p = geom::add(a, geom::scale(geom::sub(b, a), t));
                                angles.push(geom::wrap_angle((p[1] - c[1]).atan2(p[0] - c[0])));
                            }
                        }
                    }
                }
            }
        }
        angles.sort_by(f64::total_cmp);
        angles.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

        let on_circle = |t: f64| [c[0] + r * t.cos(), c[1] + r * t.sin()];
        let mut arcs = Vec::new();
        if angles.is_empty() {
            if self.contains(on_circle(0.0)) {
                arcs.push((0.0, TAU));
            }
        } else {
            let k = angles.len();
            for i in 0..k {
                let t1 = angles[i];
                let t2 = if i + 1 < k { angles[i + 1] } else { angles[0] + TAU };
                if t2 - t1 <= 0.0 {
                    continue;
                }
                if self.contains(on_circle(0.5 * (t1 + t2))) {
                    arcs.push((t1, t2));
                }
            }
        }

        let mut area = 0.0;
        let mut inner_arc = 0.0;
        for &(t1, t2) in &arcs {
            inner_arc += r * (t2 - t1);
            area += arc_green(c, r, t1, t2);
        }

        let inside_ball = |p: Point| geom::dist(p, c) < r;
        let mut boundary_inside = 0.0;
        for l in &self.loops {
            match l {
                Loop::Circle {
                    center,
                    radius,
                    outer,
                } => {
                    let pieces: Vec<(f64, f64)> = match circle_circle_angles(*center, *radius, c, r) {
                        Some((a1, a2)) => {
                            let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
                            [(lo, hi), (hi, lo + TAU)]
                                .into_iter()
                                .filter(|&(s, e)| {
                                    let m = 0.5 * (s + e);
                                    inside_ball([center[0] + radius * m.cos(), center[1] + radius * m.sin()])
                                })
                                .collect()
                        }
                        None => {
                            if inside_ball([center[0] + radius, center[1]]) {
                                vec![(0.0, TAU)]
                            } else {
                                vec![]
                            }
                        }
                    };
                    for (s, e) in pieces {
                        boundary_inside += radius * (e - s);
                        let g = arc_green(*center, *radius, s, e);
                        area += if *outer { g } else { -g };
                    }
                }
                Loop::Polygon { vertices } => {
                    for (a, b) in polygon_edges(vertices) {
                        let ts = segment_circle_params(a, b, c, r);
                        let (lo, hi) = match ts.as_slice() {
                            [t0, t1] => (t0.max(0.0), t1.min(1.0)),
                            _ => continue,
                        };
                        if hi <= lo {
                            continue;
                        }
                        let p0 = geom::add(a, geom::scale(geom::sub(b, a), lo));
                        let p1 = geom::add(a, geom::scale(geom::sub(b, a), hi));
                        boundary_inside += geom::dist(p0, p1);
                        area += 0.5 * geom::cross(p0, p1);
                    }
                }
            }
        }

        BallClip {
            center: c,
            radius: r,
            area,
            inner_arc,
            boundary_inside,
            arcs,
        }
    }

    /// Smallest `r` with `|B(c, r) ∩ M| = target`, by bisection.
    pub fn radius_for_area(&self, c: Point, target: f64, abs_tol: f64) -> Option<(f64, BallClip)> {
        let total = self.area();
        if !(target > 0.0 && target < total) {
            return None;
        }
        let mut lo = 0.0;
        let mut hi = (target / std::f64::consts::PI).sqrt();
        // grow until the clipped area covers the target
        let mut clip = self.clip_ball(c, hi);
        let mut guard = 0;
        while clip.area < target {
            lo = hi;
            hi *= 2.0;
            clip = self.clip_ball(c, hi);
            guard += 1;
            if guard > 60 {
                return None;
            }
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let cm = self.clip_ball(c, mid);
            if cm.area < target {
                lo = mid;
            } else {
                hi = mid;
                clip = cm;
            }
            if (clip.area - target).abs() <= abs_tol || hi - lo <= 1e-15 * hi {
                break;
            }
        }
        Some((hi, clip))
    }
}

/// Green's-theorem contribution `½∮(x dy − y dx)` of a CCW arc.
fn arc_green(c: Point, r: f64, t1: f64, t2: f64) -> f64 {
    0.5 * (r * r * (t2 - t1) + r * c[0] * (t2.sin() - t1.sin()) - r * c[1] * (t2.cos() - t1.cos()))
}

/// Angles (around `c1`) of the intersection points of circles `(c1, r1)` and `(c2, r2)`.
fn circle_circle_angles(c1: Point, r1: f64, c2: Point, r2: f64) -> Option<(f64, f64)> {
    let d = geom::dist(c1, c2);
    if d == 0.0 || d >= r1 + r2 || d <= (r1 - r2).abs() {
        return None;
    }
    let a = (r1 * r1 - r2 * r2 + d * d) / (2.0 * d);
    let alpha = (a / r1).clamp(-1.0, 1.0).acos();
    let phi = (c2[1] - c1[1]).atan2(c2[0] - c1[0]);
    Some((geom::wrap_angle(phi - alpha), geom::wrap_angle(phi + alpha)))
}

/// Parameters `t` (ascending) where the line `a + t(b − a)` meets the circle.
fn segment_circle_params(a: Point, b: Point, c: Point, r: f64) -> Vec<f64> {
    let d = geom::sub(b, a);
    let f = geom::sub(a, c);
    let qa = geom::dot(d, d);
    let qb = 2.0 * geom::dot(f, d);
    let qc = geom::dot(f, f) - r * r;
    let disc = qb * qb - 4.0 * qa * qc;
    if qa == 0.0 || disc <= 0.0 {
        return vec![];
    }
    let s = disc.sqrt();
    vec![(-qb - s) / (2.0 * qa), (-qb + s) / (2.0 * qa)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn unit_disk() -> Geometry {
        Geometry {
            loops: vec![Loop::Circle {
                center: [0.0, 0.0],
                radius: 1.0,
                outer: true,
            }],
        }
    }

    fn square() -> Geometry {
        Geometry {
            loops: vec![Loop::Polygon {
                vertices: vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]],
            }],
        }
    }

    #[test]
    fn interior_ball_is_a_full_disk() {
        let c = unit_disk().clip_ball([0.1, 0.2], 0.3);
        assert!((c.area - PI * 0.09).abs() < 1e-14);
        assert!((c.inner_arc - 2.0 * PI * 0.3).abs() < 1e-14);
        assert_eq!(c.boundary_inside, 0.0);
    }

    #[test]
    fn half_disk_on_straight_edge() {
        let r = 0.4;
        let c = square().clip_ball([1.0, 0.0], r);
        assert!((c.area - 0.5 * PI * r * r).abs() < 1e-13);
        assert!((c.inner_arc - PI * r).abs() < 1e-13);
        assert!((c.boundary_inside - 2.0 * r).abs() < 1e-13);
    }

    #[test]
    fn ball_covering_domain() {
        let c = unit_disk().clip_ball([0.0, 0.0], 3.0);
        assert!((c.area - PI).abs() < 1e-13);
        assert_eq!(c.inner_arc, 0.0);
        assert!((c.boundary_inside - 2.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn annulus_area_and_hole() {
        let g = Geometry {
            loops: vec![
                Loop::Circle {
                    center: [0.0, 0.0],
                    radius: 1.0,
                    outer: true,
                },
                Loop::Circle {
                    center: [0.0, 0.0],
                    radius: 0.5,
                    outer: false,
                },
            ],
        };
        assert!((g.area() - 0.75 * PI).abs() < 1e-14);
        let c = g.clip_ball([0.0, 0.0], 0.8);
        assert!((c.area - PI * (0.64 - 0.25)).abs() < 1e-13);
        assert!(g.contains([0.7, 0.0]));
        assert!(!g.contains([0.2, 0.0]));
    }

    #[test]
    fn lens_area_matches_closed_form() {
        // two unit-radius circles at distance d: lens area 2 acos(d/2) - (d/2) sqrt(4 - d^2)
        let d: f64 = 0.7;
        let c = unit_disk().clip_ball([d, 0.0], 1.0);
        let lens = 2.0 * (d / 2.0).acos() - 0.5 * d * (4.0 - d * d).sqrt();
        assert!((c.area - lens).abs() < 1e-13);
    }

    #[test]
    fn radius_for_area_inverts_clip() {
        let g = unit_disk();
        let (r, clip) = g.radius_for_area([1.0, 0.0], 0.05, 1e-14).unwrap();
        assert!((clip.area - 0.05).abs() < 1e-12);
        assert!(r > (2.0 * 0.05 / PI).sqrt());
    }

    #[test]
    fn arc_distance() {
        let c = square().clip_ball([1.0, 0.0], 0.5);
        // flat center of the half-disk: distance to the arc is the radius
        assert!((c.distance_to_arcs([1.0, 0.0]) - 0.5).abs() < 1e-14);
        // below the edge the nearest arc point is an endpoint
        let d = c.distance_to_arcs([1.0, -0.3]);
        assert!((d - (0.25f64 + 0.09).sqrt()).abs() < 1e-12);
    }
}
