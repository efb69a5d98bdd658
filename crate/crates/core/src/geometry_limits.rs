//! Sharp-interface limit functionals and small-volume isoperimetric profiles.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::BoundaryCondition;
use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::mesh::{DomainMesh, Loop};

/// Representation of a set of finite perimeter inside the domain.
#[derive(Debug, Clone, PartialEq)]
pub enum RegionRepr {
    /// `B(center, radius) ∩ M` with exact geometry.
    Ball { center: Point, radius: f64 },
    /// Fraction of each triangle covered by the set.
    Fractions(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorRegion {
    pub repr: RegionRepr,
    pub volume: f64,
    /// Length of `∂Ω ∩ int(M)`.
    pub relative_perimeter: f64,
    /// Length of `∂Ω`, including the part on `∂M`.
    pub full_perimeter: f64,
}

impl IndicatorRegion {
    /// Clipped ball, measured on the exact domain geometry.
    pub fn ball(mesh: &DomainMesh, center: Point, radius: f64) -> Result<Self> {
        let clip = mesh.geometry.clip_ball(center, radius);
        if clip.area <= 0.0 {
            return Err(Error::EmptyRegion);
        }
        if clip.area >= mesh.geometry.area() * (1.0 - 1e-12) {
            return Err(Error::FullRegion);
        }
        Ok(Self {
            repr: RegionRepr::Ball { center, radius },
            volume: clip.area,
            relative_perimeter: clip.inner_arc,
            full_perimeter: clip.full_perimeter(),
        })
    }

    /// Clipped ball of prescribed volume centered at `center`.
    pub fn ball_of_volume(mesh: &DomainMesh, center: Point, volume: f64) -> Result<Self> {
        let total = mesh.geometry.area();
        if !(volume > 0.0 && volume < total) {
            return Err(Error::MassOutOfRange {
                mass: volume,
                area: total,
            });
        }
        let (r, clip) = mesh
            .geometry
            .radius_for_area(center, volume, 1e-12 * total)
            .ok_or(Error::MassOutOfRange {
                mass: volume,
                area: total,
            })?;
        Ok(Self {
            repr: RegionRepr::Ball { center, radius: r },
            volume: clip.area,
            relative_perimeter: clip.inner_arc,
            full_perimeter: clip.full_perimeter(),
        })
    }

    /// Piecewise-constant set; perimeters are the total variation of the
    /// fractions across interior edges (plus boundary edges for the full one).
    pub fn from_fractions(mesh: &DomainMesh, fractions: Vec<f64>) -> Result<Self> {
        if fractions.len() != mesh.triangles.len() {
            return Err(Error::FieldLength {
                expected: mesh.triangles.len(),
                got: fractions.len(),
            });
        }
        let mut volume = 0.0;
        let mut edges: std::collections::HashMap<(usize, usize), Vec<usize>> = Default::default();
        for (k, t) in mesh.triangles.iter().enumerate() {
            volume += fractions[k] * triangle_area(mesh, t);
            for e in 0..3 {
                let (a, b) = (t[e], t[(e + 1) % 3]);
                edges.entry((a.min(b), a.max(b))).or_default().push(k);
            }
        }
        if volume <= 0.0 {
            return Err(Error::EmptyRegion);
        }
        if volume >= mesh.area * (1.0 - 1e-12) {
            return Err(Error::FullRegion);
        }
        let mut rel = 0.0;
        let mut bnd = 0.0;
        for ((a, b), tris) in &edges {
            let len = geom::dist(mesh.nodes[*a], mesh.nodes[*b]);
            match tris[..] {
                [s, t] => rel += (fractions[s] - fractions[t]).abs() * len,
                [s] => bnd += fractions[s] * len,
                _ => {}
            }
        }
        Ok(Self {
            repr: RegionRepr::Fractions(fractions),
            volume,
            relative_perimeter: rel,
            full_perimeter: rel + bnd,
        })
    }

    /// Superlevel set `{u > level}` of the piecewise-linear interpolant, with
    /// exact per-triangle areas and level-line lengths.
    pub fn superlevel(mesh: &DomainMesh, u: &[f64], level: f64) -> Result<Self> {
        if u.len() != mesh.n_nodes() {
            return Err(Error::FieldLength {
                expected: mesh.n_nodes(),
                got: u.len(),
            });
        }
        let mut fractions = Vec::with_capacity(mesh.triangles.len());
        let mut volume = 0.0;
        let mut rel = 0.0;
        for t in &mesh.triangles {
            let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
            let v = [u[t[0]] - level, u[t[1]] - level, u[t[2]] - level];
            let (a, seg) = clip_triangle_above(p, v);
            let area = 0.5 * geom::orient(p[0], p[1], p[2]);
            fractions.push(a / area);
            volume += a;
            rel += seg;
        }
        let mut bnd = 0.0;
        for lp in &mesh.boundary_loops {
            let k = lp.len();
            for j in 0..k {
                let (i0, i1) = (lp[j], lp[(j + 1) % k]);
                let (a, b) = (u[i0] - level, u[i1] - level);
                let len = geom::dist(mesh.nodes[i0], mesh.nodes[i1]);
                bnd += len * positive_fraction(a, b);
            }
        }
        if volume <= 0.0 {
            return Err(Error::EmptyRegion);
        }
        if volume >= mesh.area * (1.0 - 1e-12) {
            return Err(Error::FullRegion);
        }
        Ok(Self {
            repr: RegionRepr::Fractions(fractions),
            volume,
            relative_perimeter: rel,
            full_perimeter: rel + bnd,
        })
    }
}

fn triangle_area(mesh: &DomainMesh, t: &[usize; 3]) -> f64 {
    0.5 * geom::orient(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]])
}

/// Fraction of a segment on which a linear function with end values `a`, `b` is positive.
fn positive_fraction(a: f64, b: f64) -> f64 {
    match (a > 0.0, b > 0.0) {
        (true, true) => 1.0,
        (false, false) => 0.0,
        (true, false) => a / (a - b),
        (false, true) => b / (b - a),
    }
}

/// Area where a linear function with vertex values `v` is positive, and the
/// length of its zero level line inside the triangle.
fn clip_triangle_above(p: [Point; 3], v: [f64; 3]) -> (f64, f64) {
    let full = 0.5 * geom::orient(p[0], p[1], p[2]).abs();
    let pos: Vec<usize> = (0..3).filter(|&i| v[i] > 0.0).collect();
    let cut = |i: usize, j: usize| {
        let t = v[i] / (v[i] - v[j]);
        geom::add(p[i], geom::scale(geom::sub(p[j], p[i]), t))
    };
    match pos.len() {
        0 => (0.0, 0.0),
        3 => (full, 0.0),
        1 => {
            let i = pos[0];
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let (a, b) = (cut(i, j), cut(i, k));
            (0.5 * geom::orient(p[i], a, b).abs(), geom::dist(a, b))
        }
        _ => {
            let i = (0..3).find(|&i| v[i] <= 0.0).unwrap();
            let (j, k) = ((i + 1) % 3, (i + 2) % 3);
            let (a, b) = (cut(i, j), cut(i, k));
            (full - 0.5 * geom::orient(p[i], a, b).abs(), geom::dist(a, b))
        }
    }
}

/// `c₂ m^{1/2}` (full plane, `2√(πm)`) or `c₂⁺ m^{1/2}` (half plane, `√(2πm)`).
pub fn euclidean_profile(m: f64, half: bool) -> f64 {
    if half {
        (2.0 * PI * m).sqrt()
    } else {
        2.0 * (PI * m).sqrt()
    }
}

/// `σ·P(Ω; int M)` (Neumann) or `σ·P(Ω)` (Dirichlet).
pub fn limit_energy(region: &IndicatorRegion, sigma: f64, mode: BoundaryCondition) -> f64 {
    match mode {
        BoundaryCondition::Neumann => sigma * region.relative_perimeter,
        BoundaryCondition::Dirichlet => sigma * region.full_perimeter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileMethod {
    CandidateFamily,
    ExhaustiveSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProfileEstimate {
    pub m: f64,
    #[serde(rename = "I_M")]
    pub i_m: f64,
    #[serde(rename = "I_bar_M")]
    pub i_bar_m: f64,
    pub best_center: Point,
    /// Radius of the minimizing ball.
    pub best_radius: f64,
    pub method: ProfileMethod,
}

struct Candidate {
    center: Point,
    radius: f64,
    relative: f64,
    full: f64,
}

fn candidate(mesh: &DomainMesh, center: Point, m: f64) -> Option<Candidate> {
    let geo = &mesh.geometry;
    let r0 = (m / PI).sqrt();
    if geo.contains(center) && geo.distance_to_boundary(center) >= r0 {
        let p = 2.0 * PI * r0;
        return Some(Candidate {
            center,
            radius: r0,
            relative: p,
            full: p,
        });
    }
    let (r, clip) = geo.radius_for_area(center, m, 1e-12 * geo.area())?;
    Some(Candidate {
        center,
        radius: r,
        relative: clip.inner_arc,
        full: clip.full_perimeter(),
    })
}

/// Minimizes the mode's perimeter over clipped balls of volume `m`:
/// `n_centers` boundary centers for the relative profile, every mesh node for
/// the full profile.
pub fn estimate_profile(
    mesh: &DomainMesh,
    m: f64,
    mode: BoundaryCondition,
    n_centers: usize,
) -> Result<ProfileEstimate> {
    let total = mesh.geometry.area();
    if !(m > 0.0 && m < total) {
        return Err(Error::MassOutOfRange { mass: m, area: total });
    }
    if n_centers == 0 {
        return Err(Error::InvalidParameter("n_centers must be positive".into()));
    }
    let boundary: Vec<Candidate> = mesh
        .geometry
        .sample_boundary(n_centers)
        .par_iter()
        .filter_map(|&(_, p)| candidate(mesh, p, m))
        .collect();
    let interior: Vec<Candidate> = mesh
        .nodes
        .par_iter()
        .filter_map(|&p| candidate(mesh, p, m))
        .collect();

    let argmin = |cands: &[Candidate], key: fn(&Candidate) -> f64| -> Option<usize> {
        let mut best: Option<usize> = None;
        for (i, c) in cands.iter().enumerate() {
            if best.is_none_or(|b| key(c) < key(&cands[b])) {
                best = Some(i);
            }
        }
        best
    };
    let ib = argmin(&boundary, |c| c.relative).ok_or(Error::VolumeTooLarge(m))?;
    let ii = argmin(&interior, |c| c.full).ok_or(Error::VolumeTooLarge(m))?;
    let i_bar = interior[ii].full;
    let i_m = boundary[ib].relative.min(i_bar);
    let best = match mode {
        BoundaryCondition::Neumann if boundary[ib].relative <= i_bar => &boundary[ib],
        _ => &interior[ii],
    };
    let limit = 4.0 * mesh.delta_m;
    if best.radius >= limit {
        return Err(Error::VolumeTooLarge(m));
    }
    Ok(ProfileEstimate {
        m,
        i_m,
        i_bar_m: i_bar,
        best_center: best.center,
        best_radius: best.radius,
        method: ProfileMethod::CandidateFamily,
    })
}

/// Slack constants standing in for the non-numeric constants of the theory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSlack {
    /// Multiplies the curvature spread in `θ`.
    pub gamma_hat: f64,
    /// `τ(m) = dirichlet_slack · m`.
    pub dirichlet_slack: f64,
}

impl Default for ThresholdSlack {
    fn default() -> Self {
        Self {
            gamma_hat: 1.0,
            dirichlet_slack: 1.0,
        }
    }
}

/// Range of the boundary curvature (positive where `∂M` is convex).
/// Exact for circles; polygons from an exact specification are flat between
/// corners, imported polylines use the discrete curvature.
pub fn boundary_curvature_range(mesh: &DomainMesh) -> (f64, f64) {
    let exact = mesh.spec.is_some() && mesh.geometry.loops.len() == mesh.boundary_loops.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (c, l) in mesh.geometry.loops.iter().enumerate() {
        let vals: Vec<f64> = match (l, exact) {
            (Loop::Circle { radius, outer, .. }, _) => {
                vec![if *outer { 1.0 / radius } else { -1.0 / radius }]
            }
            (Loop::Polygon { .. }, true) => vec![0.0],
            (Loop::Polygon { .. }, false) => mesh.boundary_curvature[c].clone(),
        };
        for k in vals {
            lo = lo.min(k);
            hi = hi.max(k);
        }
    }
    (lo, hi)
}

/// `θ = σ γ̂ (max H − min H + 1)`
pub fn theta(mesh: &DomainMesh, sigma: f64, gamma_hat: f64) -> f64 {
    let (lo, hi) = boundary_curvature_range(mesh);
    sigma * gamma_hat * (hi - lo + 1.0)
}

/// `c_m = σ I_M(m) + θ m` (Neumann) or `σ Ī_M(m) + τ(m)` (Dirichlet).
pub fn sublevel_threshold(
    mesh: &DomainMesh,
    sigma: f64,
    profile: &ProfileEstimate,
    mode: BoundaryCondition,
    slack: ThresholdSlack,
) -> f64 {
    let m = profile.m;
    match mode {
        BoundaryCondition::Neumann => sigma * profile.i_m + theta(mesh, sigma, slack.gamma_hat) * m,
        BoundaryCondition::Dirichlet => sigma * profile.i_bar_m + slack.dirichlet_slack * m,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainSpec};

    #[test]
    fn euclidean_closed_forms() {
        assert!((euclidean_profile(PI, false) - 2.0 * PI).abs() < 1e-12);
        assert!((euclidean_profile(PI / 2.0, true) - PI).abs() < 1e-12);
        let r = euclidean_profile(0.3, true) / euclidean_profile(0.3, false);
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn limit_energies_of_half_disk_on_straight_edge() {
        let mesh = build_domain(&DomainSpec::rectangle(2.0, 1.0, 0.1)).unwrap();
        let r = 0.3;
        let reg = IndicatorRegion::ball(&mesh, [1.0, 0.0], r).unwrap();
        let sigma = 1.0 / 3.0;
        let en = limit_energy(&reg, sigma, BoundaryCondition::Neumann);
        let ed = limit_energy(&reg, sigma, BoundaryCondition::Dirichlet);
        assert!((en - sigma * PI * r).abs() < 1e-10);
        assert!((ed - sigma * (PI + 2.0) * r).abs() < 1e-10);
        let inner = IndicatorRegion::ball(&mesh, [1.0, 0.5], r).unwrap();
        for mode in [BoundaryCondition::Neumann, BoundaryCondition::Dirichlet] {
            assert!((limit_energy(&inner, sigma, mode) - sigma * 2.0 * PI * r).abs() < 1e-10);
        }
    }

    #[test]
    fn disk_profiles_near_euclidean() {
        let mesh = build_domain(&DomainSpec::unit_disk(0.05)).unwrap();
        let m = 0.01;
        let n = estimate_profile(&mesh, m, BoundaryCondition::Neumann, 64).unwrap();
        let half = euclidean_profile(m, true);
        assert!((n.i_m / half - 1.0).abs() < 0.05, "{}", n.i_m / half);
        assert!(n.i_m <= n.i_bar_m + 1e-12);
        let d = estimate_profile(&mesh, m, BoundaryCondition::Dirichlet, 64).unwrap();
        let full = euclidean_profile(m, false);
        assert!((d.i_bar_m / full - 1.0).abs() < 0.05);
        assert!(geom::norm(d.best_center) + d.best_radius < 1.0);
    }

    #[test]
    fn annulus_profile_prefers_the_convex_loop() {
        // The outer circle has curvature +1 towards the domain, the hole −2;
        // clipped half-balls are shorter where the boundary is convex.
        let mesh = build_domain(&DomainSpec::annulus(0.5, 1.0, 0.05)).unwrap();
        let est = estimate_profile(&mesh, 0.005, BoundaryCondition::Neumann, 128).unwrap();
        assert!((geom::norm(est.best_center) - 1.0).abs() < 1e-9, "{:?}", est.best_center);
        let outer = IndicatorRegion::ball_of_volume(&mesh, [1.0, 0.0], 0.005).unwrap();
        let inner = IndicatorRegion::ball_of_volume(&mesh, [0.5, 0.0], 0.005).unwrap();
        assert!(outer.relative_perimeter < inner.relative_perimeter);
    }

    #[test]
    fn too_large_volume_is_rejected() {
        let mesh = build_domain(&DomainSpec::annulus(0.5, 1.0, 0.05)).unwrap();
        assert!(matches!(
            estimate_profile(&mesh, 1.0, BoundaryCondition::Neumann, 32),
            Err(Error::VolumeTooLarge(_))
        ));
    }

    #[test]
    fn threshold_on_the_disk() {
        let mesh = build_domain(&DomainSpec::unit_disk(0.05)).unwrap();
        let sigma = 1.0 / 3.0;
        let m = 0.01;
        let p = estimate_profile(&mesh, m, BoundaryCondition::Neumann, 64).unwrap();
        let c = sublevel_threshold(&mesh, sigma, &p, BoundaryCondition::Neumann, ThresholdSlack::default());
        assert!((c - (sigma * p.i_m + sigma * m)).abs() < 1e-14);
        assert!(theta(&mesh, sigma, 1.0) >= 0.0);
    }

    #[test]
    fn threshold_ratio_tends_to_one() {
        let mesh = build_domain(&DomainSpec::unit_disk(0.05)).unwrap();
        let sigma = 1.0 / 3.0;
        let mut last = f64::INFINITY;
        for k in 0..5 {
            let m = 0.02 / 2f64.powi(k);
            let p = estimate_profile(&mesh, m, BoundaryCondition::Neumann, 64).unwrap();
            let c = sublevel_threshold(&mesh, sigma, &p, BoundaryCondition::Neumann, ThresholdSlack::default());
            let ratio = c / (sigma * p.i_m);
            assert!(ratio > 1.0 && ratio < last);
            last = ratio;
        }
        assert!(last < 1.03);
    }

    #[test]
    fn superlevel_of_linear_field() {
        let mesh = build_domain(&DomainSpec::rectangle(1.0, 1.0, 0.1)).unwrap();
        let u: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
        let reg = IndicatorRegion::superlevel(&mesh, &u, 0.3).unwrap();
        assert!((reg.volume - 0.7).abs() < 1e-12);
        assert!((reg.relative_perimeter - 1.0).abs() < 1e-12);
        assert!((reg.full_perimeter - 3.4).abs() < 1e-12);
    }

    #[test]
    fn fractions_total_variation() {
        let mesh = build_domain(&DomainSpec::rectangle(1.0, 1.0, 0.1)).unwrap();
        let fr: Vec<f64> = mesh
            .triangles
            .iter()
            .map(|t| {
                let cx = (mesh.nodes[t[0]][0] + mesh.nodes[t[1]][0] + mesh.nodes[t[2]][0]) / 3.0;
                if cx < 0.5 {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        let reg = IndicatorRegion::from_fractions(&mesh, fr).unwrap();
        assert!(reg.full_perimeter >= reg.relative_perimeter);
        assert!(reg.relative_perimeter >= 1.0 - 1e-9);
    }
}
