//! Plain-text mesh format.
//!
//! ```text
//! <n_nodes> <n_triangles>
//! x y boundary_flag component_id      (one line per node; component -1 if interior)
//! i j k                               (one line per triangle, 0-based)
//! ```
//!
//! Boundary loops are recovered from the edges that belong to a single
//! triangle. Imported meshes carry only their polygonal geometry.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::geometry::{Geometry, Loop};
use super::DomainMesh;
use crate::error::{Error, Result};
use crate::geom::Point;

pub fn write_mesh(mesh: &DomainMesh) -> String {
    let mut out = String::new();
    writeln!(out, "{} {}", mesh.n_nodes(), mesh.triangles.len()).unwrap();
    for (i, p) in mesh.nodes.iter().enumerate() {
        let (flag, comp) = match mesh.node_component[i] {
            Some(c) => (1, c as i64),
            None => (0, -1),
        };
        writeln!(out, "{:.17e} {:.17e} {} {}", p[0], p[1], flag, comp).unwrap();
    }
    for t in &mesh.triangles {
        writeln!(out, "{} {} {}", t[0], t[1], t[2]).unwrap();
    }
    out
}

pub fn read_mesh(text: &str, h: f64) -> Result<DomainMesh> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let parse_err = |line: usize, msg: &str| Error::MeshParse {
        line,
        msg: msg.to_string(),
    };
    let (ln, header) = lines.next().ok_or_else(|| parse_err(0, "empty file"))?;
    let hdr: Vec<usize> = header
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| parse_err(ln, "expected '<n_nodes> <n_triangles>'"))?;
    let [n_nodes, n_tris] = hdr[..] else {
        return Err(parse_err(ln, "expected '<n_nodes> <n_triangles>'"));
    };

    let mut nodes = Vec::with_capacity(n_nodes);
    let mut flags = Vec::with_capacity(n_nodes);
    for _ in 0..n_nodes {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing node lines"))?;
        let f: Vec<&str> = l.split_whitespace().collect();
        if f.len() != 4 {
            return Err(parse_err(ln, "expected 'x y boundary_flag component_id'"));
        }
        let x: f64 = f[0].parse().map_err(|_| parse_err(ln, "bad x"))?;
        let y: f64 = f[1].parse().map_err(|_| parse_err(ln, "bad y"))?;
        let b: u8 = f[2].parse().map_err(|_| parse_err(ln, "bad boundary flag"))?;
        let c: i64 = f[3].parse().map_err(|_| parse_err(ln, "bad component id"))?;
        nodes.push([x, y]);
        flags.push((b, c));
    }
    let mut tris = Vec::with_capacity(n_tris);
    for _ in 0..n_tris {
        let (ln, l) = lines.next().ok_or_else(|| parse_err(0, "missing triangle lines"))?;
        let t: Vec<usize> = l
            .split_whitespace()
            .map(str::parse)
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(ln, "bad triangle indices"))?;
        if t.len() != 3 || t.iter().any(|&i| i >= n_nodes) {
            return Err(parse_err(ln, "expected three node indices in range"));
        }
        tris.push([t[0], t[1], t[2]]);
    }

    let loops = boundary_loops(&nodes, &tris)?;
    // order components as declared in the file when possible
    let mut loops_with_id: Vec<(i64, Vec<usize>)> = loops
        .into_iter()
        .map(|lp| (flags[lp[0]].1, lp))
        .collect();
    loops_with_id.sort_by_key(|(c, _)| *c);
    let loops: Vec<Vec<usize>> = loops_with_id.into_iter().map(|(_, l)| l).collect();
    let geometry = Geometry {
        loops: loops
            .iter()
            .map(|lp| Loop::Polygon {
                vertices: lp.iter().map(|&i| nodes[i]).collect::<Vec<Point>>(),
            })
            .collect(),
    };
    DomainMesh::assemble(nodes, tris, loops, h, geometry, None, None)
}

/// Boundary loops with the domain on the left, from single-use edges.
fn boundary_loops(nodes: &[Point], tris: &[[usize; 3]]) -> Result<Vec<Vec<usize>>> {
    let mut count: HashMap<(usize, usize), usize> = HashMap::new();
    for t in tris {
        let ccw = crate::geom::orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) > 0.0;
        let t = if ccw { *t } else { [t[0], t[2], t[1]] };
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            *count.entry((a.min(b), a.max(b))).or_default() += 1;
        }
    }
    // directed boundary edges (a -> b) with the triangle on the left
    let mut next: HashMap<usize, usize> = HashMap::new();
    for t in tris {
        let ccw = crate::geom::orient(nodes[t[0]], nodes[t[1]], nodes[t[2]]) > 0.0;
        let t = if ccw { *t } else { [t[0], t[2], t[1]] };
        for e in 0..3 {
            let (a, b) = (t[e], t[(e + 1) % 3]);
            if count[&(a.min(b), a.max(b))] == 1 && next.insert(a, b).is_some() {
                return Err(Error::MeshFailure(format!("non-manifold boundary at node {a}")));
            }
        }
    }
    let mut starts: Vec<usize> = next.keys().copied().collect();
    starts.sort_unstable();
    let mut seen = std::collections::HashSet::new();
    let mut loops = Vec::new();
    for s in starts {
        if seen.contains(&s) {
            continue;
        }
        let mut lp = vec![s];
        seen.insert(s);
        let mut cur = next[&s];
        while cur != s {
            if !seen.insert(cur) {
                return Err(Error::MeshFailure("boundary is not a set of simple loops".into()));
            }
            lp.push(cur);
            cur = *next
                .get(&cur)
                .ok_or_else(|| Error::MeshFailure("open boundary chain".into()))?;
        }
        loops.push(lp);
    }
    Ok(loops)
}
