//! Constrained Delaunay meshing of circle/polygon domains.

use spade::{ConstrainedDelaunayTriangulation, Point2, Triangulation};

use super::geometry::{Geometry, Loop};
use crate::error::{Error, Result};
use crate::geom::{self, Point};

const SMOOTHING_SWEEPS: usize = 4;
/// Minimal distance of lattice points to the boundary, in units of `h`.
const BOUNDARY_CLEARANCE: f64 = 0.7;

type Triangulated = (Vec<Point>, Vec<[usize; 3]>, Vec<Vec<usize>>);

fn discretize_loop(l: &Loop, h: f64) -> Vec<Point> {
    match l {
        Loop::Circle {
            center,
            radius,
            outer,
        } => {
            let n = ((std::f64::consts::TAU * radius / h).ceil() as usize).max(12);
            (0..n)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / n as f64;
                    let t = if *outer { t } else { -t };
                    [center[0] + radius * t.cos(), center[1] + radius * t.sin()]
                })
                .collect()
        }
        Loop::Polygon { vertices } => {
            let mut pts = Vec::new();
            for i in 0..vertices.len() {
                let a = vertices[i];
                let b = vertices[(i + 1) % vertices.len()];
                let n = ((geom::dist(a, b) / h).ceil() as usize).max(1);
                for k in 0..n {
                    let t = k as f64 / n as f64;
                    pts.push(geom::add(a, geom::scale(geom::sub(b, a), t)));
                }
            }
            pts
        }
    }
}

fn cdt(boundary: &[Vec<Point>], interior: &[Point]) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let mut tri = ConstrainedDelaunayTriangulation::<Point2<f64>>::new();
    let mut handles = Vec::new();
    for lp in boundary {
        let hs = lp
            .iter()
            .map(|p| tri.insert(Point2::new(p[0], p[1])))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::MeshFailure(format!("{e:?}")))?;
        handles.push(hs);
    }
    for p in interior {
        tri.insert(Point2::new(p[0], p[1]))
            .map_err(|e| Error::MeshFailure(format!("{e:?}")))?;
    }
    for hs in &handles {
        for i in 0..hs.len() {
            let (a, b) = (hs[i], hs[(i + 1) % hs.len()]);
            if !tri.can_add_constraint(a, b) {
                return Err(Error::MeshFailure("boundary constraint intersects another".into()));
            }
            tri.add_constraint(a, b);
        }
    }
    let nodes: Vec<Point> = tri
        .vertices()
        .map(|v| {
            let p = v.position();
            [p.x, p.y]
        })
        .collect();
    let tris = tri
        .inner_faces()
        .map(|f| {
            let v = f.vertices();
            [v[0].fix().index(), v[1].fix().index(), v[2].fix().index()]
        })
        .collect();
    Ok((nodes, tris))
}

/// Meshes `geometry` with target edge length `h`. Returns nodes (boundary
/// loops first, in loop order), CCW triangles and the boundary loops.
pub(super) fn triangulate(geometry: &Geometry, h: f64) -> Result<Triangulated> {
    let boundary: Vec<Vec<Point>> = geometry.loops.iter().map(|l| discretize_loop(l, h)).collect();
    let polygon = Geometry {
        loops: boundary
            .iter()
            .map(|v| Loop::Polygon { vertices: v.clone() })
            .collect(),
    };

    let all_b: Vec<Point> = boundary.iter().flatten().copied().collect();
    let (lo, hi) = super::bounding_box(&all_b);
    let dy = h * 3f64.sqrt() / 2.0;
    let mut interior = Vec::new();
    let mut row = 0usize;
    let mut y = lo[1] + 0.5 * dy;
    while y < hi[1] {
        let shift = if row.is_multiple_of(2) { 0.0 } else { 0.5 * h };
        let mut x = lo[0] + shift + 0.25 * h;
        while x < hi[0] {
            let p = [x, y];
            if polygon.contains(p) && polygon.distance_to_boundary(p) >= BOUNDARY_CLEARANCE * h {
                interior.push(p);
            }
            x += h;
        }
        y += dy;
        row += 1;
    }

    let n_b = all_b.len();
    let mut loops = Vec::new();
    let mut offset = 0;
    for lp in &boundary {
        loops.push((offset..offset + lp.len()).collect::<Vec<_>>());
        offset += lp.len();
    }

    let keep_inside = |nodes: &[Point], tris: Vec<[usize; 3]>| -> Vec<[usize; 3]> {
        tris.into_iter()
            .filter(|t| {
                let c = geom::scale(
                    geom::add(geom::add(nodes[t[0]], nodes[t[1]]), nodes[t[2]]),
                    1.0 / 3.0,
                );
                polygon.contains(c)
            })
            .collect()
    };

    let (mut nodes, mut tris) = cdt(&boundary, &interior)?;
    if nodes.len() != n_b + interior.len() {
        return Err(Error::MeshFailure("duplicate mesh vertices".into()));
    }
    tris = keep_inside(&nodes, tris);

    // Laplacian smoothing of the lattice nodes, then re-triangulate.
    for _ in 0..SMOOTHING_SWEEPS {
        let mut sum = vec![[0.0; 2]; nodes.len()];
        let mut cnt = vec![0usize; nodes.len()];
        for t in &tris {
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        sum[t[i]] = geom::add(sum[t[i]], nodes[t[j]]);
                        cnt[t[i]] += 1;
                    }
                }
            }
        }
        for i in n_b..nodes.len() {
            if cnt[i] > 0 {
                let p = geom::scale(sum[i], 1.0 / cnt[i] as f64);
                if polygon.contains(p) && polygon.distance_to_boundary(p) >= 0.4 * h {
                    nodes[i] = p;
                }
            }
        }
    }
    let interior: Vec<Point> = nodes[n_b..].to_vec();
    let (nodes, tris) = cdt(&boundary, &interior)?;
    let tris = keep_inside(&nodes, tris);

    // drop vertices no triangle references (should not happen for valid domains)
    let mut used = vec![false; nodes.len()];
    for t in &tris {
        for &i in t {
            used[i] = true;
        }
    }
    if used[..n_b].iter().any(|u| !u) {
        return Err(Error::MeshFailure("boundary vertex without triangle".into()));
    }
    let mut map = vec![usize::MAX; nodes.len()];
    let mut kept = Vec::with_capacity(nodes.len());
    for (i, p) in nodes.iter().enumerate() {
        if used[i] {
            map[i] = kept.len();
            kept.push(*p);
        }
    }
    let tris: Vec<[usize; 3]> = tris.iter().map(|t| [map[t[0]], map[t[1]], map[t[2]]]).collect();
    if tris.is_empty() {
        return Err(Error::MeshFailure("empty triangulation".into()));
    }
    Ok((kept, tris, loops))
}
