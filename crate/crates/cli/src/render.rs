//! CSV and SVG output for nodal fields.

use std::fmt::Write as _;
use std::path::Path;

use acmc_core::geom::Point;
use acmc_core::mesh::DomainMesh;

/// Colormap stops on `[0, 1]` (dark blue through teal to yellow).
const STOPS: [(f64, [u8; 3]); 5] = [
    (0.0, [68, 1, 84]),
    (0.25, [59, 82, 139]),
    (0.5, [33, 145, 140]),
    (0.75, [94, 201, 98]),
    (1.0, [253, 231, 37]),
];

const CANVAS: f64 = 600.0;
const MARGIN: f64 = 10.0;

/// Hex color of `v`, clamped to `[0, 1]`. NaN maps to the bottom of the scale.
pub fn color(v: f64) -> String {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let k = STOPS.windows(2).position(|w| v <= w[1].0).unwrap_or(STOPS.len() - 2);
    let ((a, ca), (b, cb)) = (STOPS[k], STOPS[k + 1]);
    let s = (v - a) / (b - a);
    let mix = |i: usize| (ca[i] as f64 + s * (cb[i] as f64 - ca[i] as f64)).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(0), mix(1), mix(2))
}

pub fn field_csv(mesh: &DomainMesh, values: &[f64]) -> String {
    let mut out = String::from("node,x,y,value\n");
    for (i, (p, v)) in mesh.nodes.iter().zip(values).enumerate() {
        writeln!(out, "{i},{},{},{}", p[0], p[1], v).unwrap();
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mark {
    pub point: Point,
    pub color: &'static str,
    pub label: &'static str,
}

/// One `<polygon>` per triangle filled with the mean nodal value, the
/// boundary loops as `<path>` and each mark as a `<circle>`.
pub fn field_svg(mesh: &DomainMesh, values: &[f64], marks: &[Mark]) -> String {
    let (lo, hi) = acmc_core::mesh::bounding_box(&mesh.nodes);
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(f64::MIN_POSITIVE);
    let scale = (CANVAS - 2.0 * MARGIN) / span;
    let width = (hi[0] - lo[0]) * scale + 2.0 * MARGIN;
    let height = (hi[1] - lo[1]) * scale + 2.0 * MARGIN;
    // y axis points up
    let map = |p: Point| (MARGIN + (p[0] - lo[0]) * scale, MARGIN + (hi[1] - p[1]) * scale);

    let mut out = String::new();
    writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#).unwrap();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    )
    .unwrap();
    writeln!(out, r#"<g id="field" stroke-width="0.3">"#).unwrap();
    for t in &mesh.triangles {
        let v = (values[t[0]] + values[t[1]] + values[t[2]]) / 3.0;
        let c = color(v);
        let pts: Vec<String> = t
            .iter()
            .map(|&i| {
                let (x, y) = map(mesh.nodes[i]);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        writeln!(out, r#"<polygon points="{}" fill="{c}" stroke="{c}"/>"#, pts.join(" ")).unwrap();
    }
    writeln!(out, "</g>").unwrap();
    writeln!(out, r#"<g id="boundary" fill="none" stroke="black" stroke-width="1.5">"#).unwrap();
    for lp in &mesh.boundary_loops {
        let mut d = String::new();
        for (k, &i) in lp.iter().enumerate() {
            let (x, y) = map(mesh.nodes[i]);
            write!(d, "{}{x:.2},{y:.2} ", if k == 0 { "M" } else { "L" }).unwrap();
        }
        d.push('Z');
        writeln!(out, r#"<path d="{d}"/>"#).unwrap();
    }
    writeln!(out, "</g>").unwrap();
    if !marks.is_empty() {
        writeln!(out, r#"<g id="marks" stroke="white" stroke-width="1">"#).unwrap();
        for m in marks {
            let (x, y) = map(m.point);
            writeln!(
                out,
                r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{}"><title>{}</title></circle>"#,
                m.color, m.label
            )
            .unwrap();
        }
        writeln!(out, "</g>").unwrap();
    }
    writeln!(out, "</svg>").unwrap();
    out
}

pub fn render_field_svg(mesh: &DomainMesh, values: &[f64], marks: &[Mark], path: &Path) -> std::io::Result<()> {
    std::fs::write(path, field_svg(mesh, values, marks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use acmc_core::mesh::{build_domain, DomainSpec};

    #[test]
    fn colormap_ends() {
        assert_eq!(color(0.0), "#440154");
        assert_eq!(color(1.0), "#fde725");
        assert_eq!(color(-3.0), color(0.0));
        assert_eq!(color(7.0), color(1.0));
    }

    #[test]
    fn zero_field_is_a_uniform_fill() {
        let mesh = build_domain(&DomainSpec::unit_disk(0.2)).unwrap();
        let svg = field_svg(&mesh, &vec![0.0; mesh.n_nodes()], &[]);
        let fills: Vec<&str> = svg
            .lines()
            .filter(|l| l.starts_with("<polygon"))
            .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
            .collect();
        assert_eq!(fills.len(), mesh.triangles.len());
        assert!(fills.iter().all(|&f| f == color(0.0)));
    }

    #[test]
    fn csv_has_one_row_per_node() {
        let mesh = build_domain(&DomainSpec::unit_disk(0.3)).unwrap();
        let csv = field_csv(&mesh, &vec![0.5; mesh.n_nodes()]);
        assert_eq!(csv.lines().count(), mesh.n_nodes() + 1);
    }
}
