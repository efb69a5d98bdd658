//! Triangulated planar domains and their P1 finite-element operators.

mod generate;
pub mod geometry;
pub mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::linalg::CsrMatrix;
pub use geometry::{BallClip, Geometry, Loop};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    UnitDisk,
    Annulus { r_in: f64, r_out: f64 },
    /// Hole of radius `r_in` centered at `(offset, 0)`.
    EccentricAnnulus { r_in: f64, r_out: f64, offset: f64 },
    /// `[0, width] × [0, height]`
    Rectangle { width: f64, height: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    #[serde(flatten)]
    pub kind: DomainKind,
    /// Target edge length.
    pub h: f64,
}

impl DomainSpec {
    pub fn unit_disk(h: f64) -> Self {
        Self {
            kind: DomainKind::UnitDisk,
            h,
        }
    }

    pub fn annulus(r_in: f64, r_out: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Annulus { r_in, r_out },
            h,
        }
    }

    pub fn eccentric_annulus(r_in: f64, r_out: f64, offset: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::EccentricAnnulus { r_in, r_out, offset },
            h,
        }
    }

    pub fn rectangle(width: f64, height: f64, h: f64) -> Self {
        Self {
            kind: DomainKind::Rectangle { width, height },
            h,
        }
    }

    /// Smallest geometric length scale of the domain.
    pub fn feature_size(&self) -> f64 {
        match self.kind {
            DomainKind::UnitDisk => 1.0,
            DomainKind::Annulus { r_in, r_out } => r_in.min(r_out - r_in),
            DomainKind::EccentricAnnulus { r_in, r_out, offset } => {
                r_in.min(r_out - r_in - offset.abs())
            }
            DomainKind::Rectangle { width, height } => 0.5 * width.min(height),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidGeometry(format!("{name} must be positive, got {v}")))
            }
        };
        match self.kind {
            DomainKind::UnitDisk => {}
            DomainKind::Annulus { r_in, r_out } => {
                positive("r_in", r_in)?;
                positive("r_out", r_out)?;
                if r_in >= r_out {
                    return Err(Error::InvalidGeometry(format!(
                        "hole radius {r_in} not inside outer radius {r_out}"
                    )));
                }
            }
            DomainKind::EccentricAnnulus { r_in, r_out, offset } => {
                positive("r_in", r_in)?;
                positive("r_out", r_out)?;
                if !offset.is_finite() || r_in + offset.abs() >= r_out {
                    return Err(Error::InvalidGeometry(format!(
                        "hole (radius {r_in}, offset {offset}) not strictly inside radius {r_out}"
                    )));
                }
            }
            DomainKind::Rectangle { width, height } => {
                positive("width", width)?;
                positive("height", height)?;
            }
        }
        positive("h", self.h)?;
        if self.h >= self.feature_size() {
            return Err(Error::InvalidGeometry(format!(
                "edge length {} not below the smallest feature {}",
                self.h,
                self.feature_size()
            )));
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        let circle = |center: Point, radius: f64, outer: bool| Loop::Circle {
            center,
            radius,
            outer,
        };
        let loops = match self.kind {
            DomainKind::UnitDisk => vec![circle([0.0, 0.0], 1.0, true)],
            DomainKind::Annulus { r_in, r_out } => {
                vec![circle([0.0, 0.0], r_out, true), circle([0.0, 0.0], r_in, false)]
            }
            DomainKind::EccentricAnnulus { r_in, r_out, offset } => {
                vec![circle([0.0, 0.0], r_out, true), circle([offset, 0.0], r_in, false)]
            }
            DomainKind::Rectangle { width, height } => vec![Loop::Polygon {
                vertices: vec![[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]],
            }],
        };
        Geometry { loops }
    }
}

/// Point on the discrete boundary with its inner unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub component: usize,
    /// Arc length from the first node of the component's polyline.
    pub arc_length: f64,
    pub point: Point,
    pub normal: Point,
}

/// Relative distance slack under which two boundary feet count as tied in
/// strict projections.
pub const AMBIGUITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// Nearest point of `∂M`.
    Boundary,
    /// Nearest point of `M` (identity inside).
    Domain,
}

/// Triangulated domain with assembled operators. Immutable after construction.
#[derive(Debug, Clone)]
pub struct DomainMesh {
    pub nodes: Vec<Point>,
    pub triangles: Vec<[usize; 3]>,
    /// Ordered boundary loops (domain on the left), one per component.
    pub boundary_loops: Vec<Vec<usize>>,
    /// Boundary component of each node, if any.
    pub node_component: Vec<Option<usize>>,
    pub mass: CsrMatrix,
    pub stiffness: CsrMatrix,
    pub lumped_mass: Vec<f64>,
    pub area: f64,
    /// Signed curvature per node of `boundary_loops` (same layout),
    /// positive when the boundary bends towards the domain.
    pub boundary_curvature: Vec<Vec<f64>>,
    pub delta_m: f64,
    /// Radius around `∂M` in which the nearest-point projection is unique.
    pub projection_radius: f64,
    pub h: f64,
    /// Exact geometry when known, otherwise the boundary polygon.
    pub geometry: Geometry,
    /// The discrete boundary polygon.
    pub polygon: Geometry,
    pub spec: Option<DomainSpec>,
}

pub fn build_domain(spec: &DomainSpec) -> Result<DomainMesh> {
    spec.validate()?;
    let geometry = spec.geometry();
    let (nodes, triangles, loops) = generate::triangulate(&geometry, spec.h)?;
    let delta_m = 0.25 * spec.feature_size();
    DomainMesh::assemble(nodes, triangles, loops, spec.h, geometry, Some(*spec), Some(delta_m))
}

impl DomainMesh {
    /// Builds operators and boundary metadata from a raw triangulation.
    pub(crate) fn assemble(
        nodes: Vec<Point>,
        mut triangles: Vec<[usize; 3]>,
        boundary_loops: Vec<Vec<usize>>,
        h: f64,
        geometry: Geometry,
        spec: Option<DomainSpec>,
        delta_m: Option<f64>,
    ) -> Result<Self> {
        let n = nodes.len();
        for t in triangles.iter_mut() {
            let a = geom::orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]);
            if a < 0.0 {
                t.swap(1, 2);
            } else if a == 0.0 {
                return Err(Error::MeshFailure(format!("degenerate triangle {t:?}")));
            }
        }
        let mut node_component = vec![None; n];
        for (c, lp) in boundary_loops.iter().enumerate() {
            if lp.len() < 3 {
                return Err(Error::MeshFailure(format!("boundary loop {c} has {} nodes", lp.len())));
            }
            for &i in lp {
                node_component[i] = Some(c);
            }
        }

        let mut mtrip = Vec::with_capacity(9 * triangles.len());
        let mut ktrip = Vec::with_capacity(9 * triangles.len());
        for t in &triangles {
            let p = [nodes[t[0]], nodes[t[1]], nodes[t[2]]];
            let area = 0.5 * geom::orient(p[0], p[1], p[2]);
            // gradients of barycentric coordinates: ∇φ_i = rot(p_{i+2} - p_{i+1}) / (2A)
            let mut grads = [[0.0; 2]; 3];
            for i in 0..3 {
                let e = geom::sub(p[(i + 2) % 3], p[(i + 1) % 3]);
                grads[i] = [-e[1] / (2.0 * area), e[0] / (2.0 * area)];
            }
            for i in 0..3 {
                for j in 0..3 {
                    let m = if i == j { area / 6.0 } else { area / 12.0 };
                    mtrip.push((t[i], t[j], m));
                    ktrip.push((t[i], t[j], area * geom::dot(grads[i], grads[j])));
                }
            }
        }
        let mass = CsrMatrix::from_triplets(n, &mtrip);
        let stiffness = CsrMatrix::from_triplets(n, &ktrip);
        let lumped_mass = mass.row_sums();
        let area = lumped_mass.iter().sum();

        let boundary_curvature: Vec<Vec<f64>> = boundary_loops
            .iter()
            .map(|lp| {
                let k = lp.len();
                (0..k)
                    .map(|i| {
                        let a = nodes[lp[(i + k - 1) % k]];
                        let b = nodes[lp[i]];
                        let c = nodes[lp[(i + 1) % k]];
                        circumcurvature(a, b, c)
                    })
                    .collect()
            })
            .collect();

        let polygon = Geometry {
            loops: boundary_loops
                .iter()
                .map(|lp| Loop::Polygon {
                    vertices: lp.iter().map(|&i| nodes[i]).collect(),
                })
                .collect(),
        };

        let max_curv = boundary_curvature
            .iter()
            .flatten()
            .fold(0.0f64, |m, k| m.max(k.abs()));
        let mut min_gap = f64::INFINITY;
        for (a, la) in boundary_loops.iter().enumerate() {
            for lb in boundary_loops.iter().skip(a + 1) {
                for &i in la {
                    for &j in lb {
                        min_gap = min_gap.min(geom::dist(nodes[i], nodes[j]));
                    }
                }
            }
        }
        let mut projection_radius = if max_curv > 0.0 { 1.0 / max_curv } else { f64::INFINITY };
        projection_radius = projection_radius.min(0.5 * min_gap);
        if !projection_radius.is_finite() {
            let (lo, hi) = bounding_box(&nodes);
            projection_radius = 0.25 * (hi[0] - lo[0]).min(hi[1] - lo[1]);
        }
        let delta_m = delta_m.unwrap_or(0.25 * projection_radius);

        let mesh = Self {
            nodes,
            triangles,
            boundary_loops,
            node_component,
            mass,
            stiffness,
            lumped_mass,
            area,
            boundary_curvature,
            delta_m,
            projection_radius,
            h,
            geometry,
            polygon,
            spec,
        };
        Ok(mesh)
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_boundary(&self, i: usize) -> bool {
        self.node_component[i].is_some()
    }

    /// Interior node indices in increasing order.
    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes()).filter(|&i| !self.is_boundary(i)).collect()
    }

    pub fn diameter(&self) -> f64 {
        let b: Vec<Point> = self.boundary_loops.iter().flatten().map(|&i| self.nodes[i]).collect();
        let mut d: f64 = 0.0;
        for (k, p) in b.iter().enumerate() {
            for q in &b[k + 1..] {
                d = d.max(geom::dist(*p, *q));
            }
        }
        d
    }

    pub fn curvature_range(&self) -> (f64, f64) {
        let it = self.boundary_curvature.iter().flatten();
        let lo = it.clone().fold(f64::INFINITY, |m, &k| m.min(k));
        let hi = it.fold(f64::NEG_INFINITY, |m, &k| m.max(k));
        (lo, hi)
    }

    /// Polyline segments of component `c`: `(start node, end node, arc length at start)`.
    fn loop_segments(&self, c: usize) -> impl Iterator<Item = (Point, Point, f64)> + '_ {
        let lp = &self.boundary_loops[c];
        let k = lp.len();
        let mut s = 0.0;
        (0..k).map(move |i| {
            let a = self.nodes[lp[i]];
            let b = self.nodes[lp[(i + 1) % k]];
            let start = s;
            s += geom::dist(a, b);
            (a, b, start)
        })
    }

    pub fn loop_length(&self, c: usize) -> f64 {
        self.loop_segments(c).map(|(a, b, _)| geom::dist(a, b)).sum()
    }

    /// Point of component `c` at arc-length `s` along its polyline.
    pub fn boundary_point_at(&self, c: usize, s: f64) -> BoundaryPoint {
        let total = self.loop_length(c);
        let s = s.rem_euclid(total);
        let mut last = None;
        for (a, b, s0) in self.loop_segments(c) {
            let l = geom::dist(a, b);
            if s <= s0 + l {
                let t = if l > 0.0 { (s - s0) / l } else { 0.0 };
                return self.make_boundary_point(c, a, b, t, s0 + t * l);
            }
            last = Some((a, b, s0));
        }
        let (a, b, s0) = last.expect("loop has segments");
        self.make_boundary_point(c, a, b, 1.0, s0 + geom::dist(a, b))
    }

    fn make_boundary_point(&self, c: usize, a: Point, b: Point, t: f64, s: f64) -> BoundaryPoint {
        let e = geom::sub(b, a);
        let l = geom::norm(e);
        BoundaryPoint {
            component: c,
            arc_length: s,
            point: geom::add(a, geom::scale(e, t)),
            normal: [-e[1] / l, e[0] / l],
        }
    }

    /// `n` boundary points evenly spaced by arc length over all components.
    pub fn sample_boundary_points(&self, n: usize) -> Vec<BoundaryPoint> {
        let lengths: Vec<f64> = (0..self.boundary_loops.len()).map(|c| self.loop_length(c)).collect();
        let total: f64 = lengths.iter().sum();
        let step = total / n as f64;
        (0..n)
            .map(|k| {
                let mut s = k as f64 * step;
                let mut c = 0;
                while c + 1 < lengths.len() && s >= lengths[c] {
                    s -= lengths[c];
                    c += 1;
                }
                self.boundary_point_at(c, s)
            })
            .collect()
    }

    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.polygon.distance_to_boundary(p)
    }

    pub fn contains(&self, p: Point) -> bool {
        self.polygon.contains(p)
    }

    /// Nearest point of the discrete boundary. Ties go to the lowest component
    /// and then the lowest arc length. In strict mode, two candidates within
    /// `AMBIGUITY_TOL·√area` of the optimum and farther apart than `h` are
    /// reported as ambiguous.
    pub fn project_to_boundary(&self, p: Point, strict: bool) -> Result<BoundaryPoint> {
        let mut cands: Vec<(f64, BoundaryPoint)> = Vec::new();
        for c in 0..self.boundary_loops.len() {
            for (a, b, s0) in self.loop_segments(c) {
                let (q, t) = geom::closest_on_segment(p, a, b);
                let d = geom::dist(p, q);
                cands.push((d, self.make_boundary_point(c, a, b, t, s0 + t * geom::dist(a, b))));
            }
        }
        let dmin = cands.iter().map(|c| c.0).fold(f64::INFINITY, f64::min);
        let tie = dmin * (1.0 + 1e-9) + 1e-13;
        let mut best: Option<BoundaryPoint> = None;
        for (d, bp) in &cands {
            if *d <= tie {
                let better = match best {
                    None => true,
                    Some(b) => (bp.component, bp.arc_length) < (b.component, b.arc_length),
                };
                if better {
                    best = Some(*bp);
                }
            }
        }
        let best = best.ok_or_else(|| Error::MeshFailure("mesh has no boundary".into()))?;
        // vertex hits: use the averaged normal of the two incident segments
        let best = self.smooth_vertex_normal(best);
        if strict {
            let loose = dmin + AMBIGUITY_TOL * self.area.sqrt();
            for (d, bp) in &cands {
                if *d <= loose && geom::dist(bp.point, best.point) > self.h {
                    return Err(Error::AmbiguousProjection(best.point, bp.point));
                }
            }
        }
        Ok(best)
    }

    fn smooth_vertex_normal(&self, bp: BoundaryPoint) -> BoundaryPoint {
        let lp = &self.boundary_loops[bp.component];
        let k = lp.len();
        for i in 0..k {
            if geom::dist(self.nodes[lp[i]], bp.point) < 1e-14 {
                let a = self.nodes[lp[(i + k - 1) % k]];
                let c = self.nodes[lp[(i + 1) % k]];
                let e = geom::sub(c, a);
                let l = geom::norm(e);
                return BoundaryPoint {
                    normal: [-e[1] / l, e[0] / l],
                    ..bp
                };
            }
        }
        bp
    }

    /// Nearest-point projection onto `∂M` or onto `M`.
    pub fn project(&self, p: Point, mode: ProjectionMode, strict: bool) -> Result<Point> {
        match mode {
            ProjectionMode::Boundary => Ok(self.project_to_boundary(p, strict)?.point),
            ProjectionMode::Domain => {
                if self.contains(p) {
                    Ok(p)
                } else {
                    Ok(self.project_to_boundary(p, strict)?.point)
                }
            }
        }
    }

    /// Nodes inside `B(center, r)` and `r` such that `|B(center, r) ∩ M_h| = target_mass`,
    /// with `M_h` the triangulated domain.
    pub fn ball_indicator(&self, center: Point, target_mass: f64) -> Result<(Vec<bool>, f64)> {
        if !(target_mass > 0.0 && target_mass < self.area) {
            return Err(Error::MassOutOfRange {
                mass: target_mass,
                area: self.area,
            });
        }
        let (r, _) = self
            .polygon
            .radius_for_area(center, target_mass, 1e-9 * self.area)
            .ok_or(Error::MassOutOfRange {
                mass: target_mass,
                area: self.area,
            })?;
        let ind = self.nodes.iter().map(|&x| geom::dist(x, center) <= r).collect();
        Ok((ind, r))
    }

    /// `d_{M∖Ω}`: positive inside `Ω`, negative outside, magnitude the
    /// distance to the relative boundary `∂Ω ∩ int(M)`.
    pub fn signed_distance_to_complement(&self, region: &RegionShape) -> Result<Vec<f64>> {
        match region {
            RegionShape::Ball { center, radius } => {
                let clip = self.geometry.clip_ball(*center, *radius);
                if clip.area <= 0.0 || !self.nodes.iter().any(|&x| geom::dist(x, *center) < *radius) {
                    return Err(Error::EmptyRegion);
                }
                if clip.arcs.is_empty() {
                    return Err(Error::FullRegion);
                }
                Ok(self
                    .nodes
                    .iter()
                    .map(|&x| {
                        let d = clip.distance_to_arcs(x);
                        if geom::dist(x, *center) < *radius {
                            d
                        } else {
                            -d
                        }
                    })
                    .collect())
            }
            RegionShape::Nodes(ind) => {
                if ind.len() != self.n_nodes() {
                    return Err(Error::FieldLength {
                        expected: self.n_nodes(),
                        got: ind.len(),
                    });
                }
                if !ind.iter().any(|&b| b) {
                    return Err(Error::EmptyRegion);
                }
                if ind.iter().all(|&b| b) {
                    return Err(Error::FullRegion);
                }
                let segs = self.interface_segments(ind);
                Ok(self
                    .nodes
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let d = segs
                            .iter()
                            .map(|&(a, b)| geom::segment_distance(x, a, b))
                            .fold(f64::INFINITY, f64::min);
                        if ind[i] {
                            d
                        } else {
                            -d
                        }
                    })
                    .collect())
            }
        }
    }

    /// Marching-triangle interface of a nodal indicator (edge midpoints).
    pub fn interface_segments(&self, ind: &[bool]) -> Vec<(Point, Point)> {
        let mut segs = Vec::new();
        for t in &self.triangles {
            let mids: Vec<Point> = (0..3)
                .filter(|&e| ind[t[e]] != ind[t[(e + 1) % 3]])
                .map(|e| geom::scale(geom::add(self.nodes[t[e]], self.nodes[t[(e + 1) % 3]]), 0.5))
                .collect();
            if mids.len() == 2 {
                segs.push((mids[0], mids[1]));
            }
        }
        segs
    }
}

/// Region description accepted by the distance routines.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionShape {
    /// `B(center, radius) ∩ M`, using the exact domain geometry.
    Ball { center: Point, radius: f64 },
    /// Nodal indicator.
    Nodes(Vec<bool>),
}

fn circumcurvature(a: Point, b: Point, c: Point) -> f64 {
    let ab = geom::dist(a, b);
    let bc = geom::dist(b, c);
    let ca = geom::dist(c, a);
    let twice_area = geom::orient(a, b, c);
    // κ = 4·Area / (|ab||bc||ca|); left turns bend towards the domain
    2.0 * twice_area / (ab * bc * ca)
}

pub fn bounding_box(pts: &[Point]) -> (Point, Point) {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in pts {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    (lo, hi)
}
