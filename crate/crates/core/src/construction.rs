//! Recovery sequences, photography maps, the boundary-layer map and the
//! barycenter projection.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::energy::{AllenCahn, BoundaryCondition, ScalarField};
use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::geometry_limits::{IndicatorRegion, RegionRepr};
use crate::mesh::{DomainMesh, ProjectionMode, RegionShape};
use crate::potential::{solve_profile, PotentialSpec, ProfileTable};

/// Relative mass tolerance of the recovery sequence (times the domain area).
pub const MASS_TOL: f64 = 1e-8;
const DELTA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecoveryParams {
    pub epsilon: f64,
    /// Shift `δ ∈ [0, η_ε]` applied to the signed distance.
    pub delta: f64,
    pub eta: f64,
    /// `|mass − target|` after the shift.
    pub mass_residual: f64,
}

/// Upper bounds on the small-mass / small-ε regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    /// `m ≤ m_fraction · area`
    pub m_fraction: f64,
    /// `ε ≤ eps_factor · √(m/π)`
    pub eps_factor: f64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            m_fraction: 0.02,
            eps_factor: 0.1,
        }
    }
}

impl Caps {
    pub fn epsilon_cap(&self, m: f64) -> f64 {
        self.eps_factor * (m / std::f64::consts::PI).sqrt()
    }

    pub fn validate(&self, area: f64, m: f64, epsilon: f64) -> Result<()> {
        if !(m > 0.0 && m < area) {
            return Err(Error::MassOutOfRange { mass: m, area });
        }
        if m > self.m_fraction * area {
            return Err(Error::CapViolation(format!(
                "m = {m} exceeds the mass cap {} · area = {}",
                self.m_fraction,
                self.m_fraction * area
            )));
        }
        let cap = self.epsilon_cap(m);
        if epsilon > cap {
            return Err(Error::CapViolation(format!(
                "epsilon = {epsilon} exceeds the cap {} · sqrt(m/pi) = {cap}",
                self.eps_factor
            )));
        }
        Ok(())
    }
}

fn region_shape(mesh: &DomainMesh, region: &IndicatorRegion) -> RegionShape {
    match &region.repr {
        RegionRepr::Ball { center, radius } => RegionShape::Ball {
            center: *center,
            radius: *radius,
        },
        RegionRepr::Fractions(fr) => {
            let mut acc = vec![(0.0, 0.0); mesh.n_nodes()];
            for (t, f) in mesh.triangles.iter().zip(fr) {
                for &i in t {
                    acc[i].0 += f;
                    acc[i].1 += 1.0;
                }
            }
            RegionShape::Nodes(acc.iter().map(|(s, n)| *n > 0.0 && s / n > 0.5).collect())
        }
    }
}

/// `u_ε = q̃_ε(d_{M∖Ω} + δ)` with `δ` chosen so that `∫u_ε = target_mass`.
pub fn recovery_sequence(
    mesh: &Arc<DomainMesh>,
    region: &IndicatorRegion,
    profile: &ProfileTable,
    target_mass: f64,
    bc: BoundaryCondition,
) -> Result<(ScalarField, RecoveryParams)> {
    if !(target_mass > 0.0 && target_mass < mesh.area) {
        return Err(Error::MassOutOfRange {
            mass: target_mass,
            area: mesh.area,
        });
    }
    let d = mesh.signed_distance_to_complement(&region_shape(mesh, region))?;
    let boundary_zero = bc == BoundaryCondition::Dirichlet;
    let build = |delta: f64| -> Vec<f64> {
        let mut u: Vec<f64> = d.iter().map(|&x| profile.eval(x + delta)).collect();
        if boundary_zero {
            for lp in &mesh.boundary_loops {
                for &i in lp {
                    u[i] = 0.0;
                }
            }
        }
        u
    };
    let mass_of = |u: &[f64]| crate::linalg::dot(&mesh.lumped_mass, u);
    let tol = MASS_TOL * mesh.area;
    let eta = profile.eta;

    let (mut lo, mut hi) = (0.0, eta);
    let m_lo = mass_of(&build(lo));
    let m_hi = mass_of(&build(hi));
    if m_lo > target_mass + tol {
        return Err(Error::MassUnreachable {
            target: target_mass,
            achieved: m_lo,
        });
    }
    if m_hi < target_mass - tol {
        return Err(Error::MassUnreachable {
            target: target_mass,
            achieved: m_hi,
        });
    }
    let mut best = (f64::INFINITY, 0.0, Vec::new());
    for (delta, u) in [(lo, build(lo)), (hi, build(hi))] {
        let r = (mass_of(&u) - target_mass).abs();
        if r < best.0 {
            best = (r, delta, u);
        }
    }
    while best.0 > tol && hi - lo > DELTA_TOL * eta {
        let mid = 0.5 * (lo + hi);
        let u = build(mid);
        let mm = mass_of(&u);
        let r = (mm - target_mass).abs();
        if r < best.0 {
            best = (r, mid, u);
        }
        if mm < target_mass {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (residual, delta, u) = best;
    if residual > tol {
        return Err(Error::MassUnreachable {
            target: target_mass,
            achieved: target_mass + residual,
        });
    }
    let field = ScalarField::new(mesh.clone(), u, bc)?;
    Ok((
        field,
        RecoveryParams {
            epsilon: profile.epsilon,
            delta,
            eta,
            mass_residual: residual,
        },
    ))
}

/// `h(t) = δ/2 + t²/(2δ)`: `h(0) = δ/2`, `h(δ) = δ`, `h′(0) = 0`, `h′(δ) = 1`.
fn collar_depth(t: f64, delta: f64) -> f64 {
    0.5 * delta + t * t / (2.0 * delta)
}

/// Pushes points of the collar `{dist < δ_M}` to depth at least `δ_M/2`.
pub fn boundary_layer(mesh: &DomainMesh, p: Point) -> Result<Point> {
    let delta = mesh.delta_m;
    let t = mesh.distance_to_boundary(p);
    if t >= delta && mesh.contains(p) {
        return Ok(p);
    }
    let foot = mesh.project_to_boundary(p, false)?;
    let dir = if t > 0.0 && mesh.contains(p) {
        geom::scale(geom::sub(p, foot.point), 1.0 / t)
    } else {
        foot.normal
    };
    let t = if mesh.contains(p) { t } else { 0.0 };
    Ok(geom::add(foot.point, geom::scale(dir, collar_depth(t.min(delta), delta))))
}

/// `β*(u) = ∫ x|u| / ∫ |u|`
pub fn barycenter(u: &ScalarField) -> Result<Point> {
    let mesh = u.mesh();
    let mut w = 0.0;
    let mut acc = [0.0; 2];
    for ((x, m), v) in mesh.nodes.iter().zip(&mesh.lumped_mass).zip(u.values()) {
        let a = m * v.abs();
        w += a;
        acc = geom::add(acc, geom::scale(*x, a));
    }
    if w <= 0.0 {
        return Err(Error::ZeroMass);
    }
    Ok(geom::scale(acc, 1.0 / w))
}

/// `π_∂M ∘ β*` (Neumann) or `π_M ∘ β*` (Dirichlet).
pub fn compose_b(u: &ScalarField, mode: BoundaryCondition, strict: bool) -> Result<Point> {
    let b = barycenter(u)?;
    let pm = match mode {
        BoundaryCondition::Neumann => ProjectionMode::Boundary,
        BoundaryCondition::Dirichlet => ProjectionMode::Domain,
    };
    u.mesh().project(b, pm, strict)
}

#[derive(Debug, Clone)]
pub struct PhotographOutput {
    pub field: ScalarField,
    /// `p` (Neumann) or `L(p)` (Dirichlet).
    pub source_point: Point,
    pub region: IndicatorRegion,
    pub energy_at_emission: f64,
    pub params: RecoveryParams,
}

/// Photography maps for fixed `(m, ε)`, sharing one profile table.
#[derive(Debug, Clone)]
pub struct Photographer {
    pub functional: AllenCahn,
    pub m: f64,
    pub profile: ProfileTable,
}

impl Photographer {
    pub fn new(
        mesh: Arc<DomainMesh>,
        pot: PotentialSpec,
        m: f64,
        epsilon: f64,
        caps: Caps,
        step_tol: f64,
    ) -> Result<Self> {
        caps.validate(mesh.area, m, epsilon)?;
        let profile = solve_profile(&pot, epsilon, step_tol)?;
        Ok(Self {
            functional: AllenCahn::new(mesh, pot, epsilon)?,
            m,
            profile,
        })
    }

    pub fn mesh(&self) -> &Arc<DomainMesh> {
        &self.functional.mesh
    }

    pub fn epsilon(&self) -> f64 {
        self.functional.epsilon
    }

    /// Recovery of the clipped ball of volume `m` centered at the boundary point `p`.
    pub fn neumann(&self, p: Point) -> Result<PhotographOutput> {
        let mesh = self.mesh();
        let region = IndicatorRegion::ball_of_volume(mesh, p, self.m)?;
        let (field, params) =
            recovery_sequence(mesh, &region, &self.profile, self.m, BoundaryCondition::Neumann)?;
        Ok(PhotographOutput {
            energy_at_emission: self.functional.energy(&field),
            field,
            source_point: p,
            region,
            params,
        })
    }

    /// Recovery of the interior ball of volume `m` centered at `L(p)`.
    pub fn dirichlet(&self, p: Point) -> Result<PhotographOutput> {
        let mesh = self.mesh();
        let q = boundary_layer(mesh, p)?;
        let radius = (self.m / std::f64::consts::PI).sqrt();
        let layer = self.profile.eta;
        let limit = 0.5 * mesh.delta_m;
        if radius + layer >= limit {
            return Err(Error::SupportTouchesBoundary {
                radius,
                layer,
                limit,
            });
        }
        let region = IndicatorRegion::ball(mesh, q, radius)?;
        let (field, params) =
            recovery_sequence(mesh, &region, &self.profile, self.m, BoundaryCondition::Dirichlet)?;
        Ok(PhotographOutput {
            energy_at_emission: self.functional.energy(&field),
            field,
            source_point: q,
            region,
            params,
        })
    }

    pub fn photograph(&self, p: Point, mode: BoundaryCondition) -> Result<PhotographOutput> {
        match mode {
            BoundaryCondition::Neumann => self.neumann(p),
            BoundaryCondition::Dirichlet => self.dirichlet(p),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainSpec};
    use crate::potential::make_quartic;
    use std::f64::consts::PI;

    fn disk(h: f64) -> Arc<DomainMesh> {
        Arc::new(build_domain(&DomainSpec::unit_disk(h)).unwrap())
    }

    #[test]
    fn caps_are_enforced() {
        let caps = Caps::default();
        assert!(caps.validate(PI, 0.01, 0.005).is_ok());
        assert!(matches!(caps.validate(PI, 0.1, 0.001), Err(Error::CapViolation(_))));
        assert!(matches!(caps.validate(PI, 0.01, 0.01), Err(Error::CapViolation(_))));
        assert!(matches!(caps.validate(PI, -1.0, 0.01), Err(Error::MassOutOfRange { .. })));
    }

    #[test]
    fn boundary_layer_depths() {
        let mesh = disk(0.05);
        let dm = mesh.delta_m;
        for k in 0..8 {
            let a = k as f64 * 0.7;
            let bp = mesh.project_to_boundary([a.cos(), a.sin()], false).unwrap().point;
            let l = boundary_layer(&mesh, bp).unwrap();
            let e = (mesh.distance_to_boundary(l) - 0.5 * dm).abs();
            assert!(e < mesh.h * mesh.h, "{k} {e}");
        }
        let deep = [0.2, -0.1];
        assert!(mesh.distance_to_boundary(deep) >= 2.0 * dm);
        assert_eq!(boundary_layer(&mesh, deep).unwrap(), deep);
    }

    #[test]
    fn boundary_layer_is_lipschitz_across_the_collar() {
        let mesh = disk(0.05);
        let n = 400;
        let mut prev = boundary_layer(&mesh, [0.999, 0.01]).unwrap();
        let step = 0.6 / n as f64;
        for k in 1..=n {
            let p = [0.999 - step * k as f64, 0.01];
            let l = boundary_layer(&mesh, p).unwrap();
            // h′ ≤ 1 on the collar, so the map is 1-Lipschitz along normals
            assert!(geom::dist(l, prev) <= 1.01 * step + 1e-12, "jump at {p:?}");
            prev = l;
        }
    }

    #[test]
    fn barycenters() {
        let mesh = disk(0.04);
        let c = [0.2, 0.1];
        let r = 0.3;
        let ind: Vec<f64> = mesh.nodes.iter().map(|&x| if geom::dist(x, c) <= r { 1.0 } else { 0.0 }).collect();
        let u = ScalarField::new(mesh.clone(), ind.clone(), BoundaryCondition::Neumann).unwrap();
        let b = barycenter(&u).unwrap();
        assert!(geom::dist(b, c) < 0.01);
        let u2 = ScalarField::new(mesh.clone(), ind.iter().map(|v| 2.0 * v).collect(), BoundaryCondition::Neumann).unwrap();
        assert!(geom::dist(barycenter(&u2).unwrap(), b) < 1e-14);
        let z = ScalarField::zeros(mesh.clone(), BoundaryCondition::Neumann);
        assert!(matches!(barycenter(&z), Err(Error::ZeroMass)));
    }

    #[test]
    fn half_disk_barycenter_on_straight_edge() {
        let mesh = Arc::new(build_domain(&DomainSpec::rectangle(2.0, 1.0, 0.02)).unwrap());
        let p = [1.0, 0.0];
        let r = 0.4;
        let ind: Vec<f64> = mesh.nodes.iter().map(|&x| if geom::dist(x, p) <= r { 1.0 } else { 0.0 }).collect();
        let u = ScalarField::new(mesh.clone(), ind, BoundaryCondition::Neumann).unwrap();
        let b = barycenter(&u).unwrap();
        let expect = 4.0 * r / (3.0 * PI);
        assert!((b[0] - 1.0).abs() < 0.01);
        assert!((b[1] - expect).abs() < 0.02, "{} vs {expect}", b[1]);
    }

    #[test]
    fn constant_field_projection_is_ambiguous() {
        let mesh = disk(0.05);
        let u = ScalarField::constant(mesh.clone(), 0.3, BoundaryCondition::Neumann).unwrap();
        assert!(matches!(
            compose_b(&u, BoundaryCondition::Neumann, true),
            Err(Error::AmbiguousProjection(..))
        ));
    }

    #[test]
    fn neumann_photograph_contracts() {
        let mesh = disk(0.03);
        let m = 0.01 * mesh.area;
        let eps = Caps::default().epsilon_cap(m);
        let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, Caps::default(), 1e-6).unwrap();
        let p = [0.0, 1.0];
        let out = ph.neumann(p).unwrap();
        assert!((out.field.mass() - m).abs() <= MASS_TOL * mesh.area);
        assert!(out.field.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let r_half = (2.0 * m / PI).sqrt();
        let b = barycenter(&out.field).unwrap();
        assert!(geom::dist(b, p) <= 2.0 * r_half);
        let bp = compose_b(&out.field, BoundaryCondition::Neumann, true).unwrap();
        assert!(geom::dist(bp, p) <= 0.2 * 2.0);
        let inside: f64 = mesh
            .nodes
            .iter()
            .zip(&mesh.lumped_mass)
            .zip(out.field.values())
            .filter(|((x, _), _)| geom::dist(**x, p) <= 3.0 * r_half)
            .map(|((_, w), v)| w * v)
            .sum();
        assert!(inside >= 0.99 * m);
    }

    #[test]
    fn dirichlet_photograph_contracts() {
        let mesh = disk(0.03);
        let m = 0.005 * mesh.area;
        let eps = 0.007;
        let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, Caps::default(), 1e-6).unwrap();
        for p in [[0.0, 1.0], [0.5, 0.5], [0.1, 0.0]] {
            let out = ph.dirichlet(p).unwrap();
            for lp in &mesh.boundary_loops {
                for &i in lp {
                    assert_eq!(out.field.values()[i], 0.0);
                }
            }
            assert!((out.field.mass() - m).abs() <= MASS_TOL * mesh.area);
            let b = compose_b(&out.field, BoundaryCondition::Dirichlet, false).unwrap();
            let r = (m / PI).sqrt();
            assert!(geom::dist(b, out.source_point) <= 2.0 * r);
        }
        let deep = [0.1, 0.0];
        assert_eq!(ph.dirichlet(deep).unwrap().source_point, deep);
    }

    #[test]
    fn dirichlet_support_condition() {
        let mesh = disk(0.05);
        let m = 0.02 * mesh.area;
        let eps = 0.0079;
        let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, Caps::default(), 1e-6).unwrap();
        assert!(matches!(ph.dirichlet([0.0, 0.99]), Err(Error::SupportTouchesBoundary { .. })));
    }

    #[test]
    fn recovery_converges_in_l1() {
        let mesh = disk(0.02);
        let m = 0.05;
        let region = IndicatorRegion::ball_of_volume(&mesh, [1.0, 0.0], m).unwrap();
        let RegionRepr::Ball { center, radius } = region.repr else { unreachable!() };
        let ind: Vec<f64> = mesh
            .nodes
            .iter()
            .map(|&x| if geom::dist(x, center) < radius { 1.0 } else { 0.0 })
            .collect();
        let mut last = f64::INFINITY;
        for eps in [0.08, 0.04, 0.02] {
            let prof = solve_profile(&make_quartic(), eps, 1e-6).unwrap();
            let (u, params) = recovery_sequence(&mesh, &region, &prof, m, BoundaryCondition::Neumann).unwrap();
            assert!(params.delta >= 0.0 && params.delta <= params.eta);
            let l1: f64 = mesh
                .lumped_mass
                .iter()
                .zip(u.values().iter().zip(&ind))
                .map(|(w, (a, b))| w * (a - b).abs())
                .sum();
            assert!(l1 < last, "{eps}: {l1}");
            last = l1;
        }
    }

    #[test]
    fn unshifted_recovery_has_a_mass_deficit() {
        let mesh = disk(0.03);
        let m = 0.05;
        let region = IndicatorRegion::ball_of_volume(&mesh, [0.0, 1.0], m).unwrap();
        let prof = solve_profile(&make_quartic(), 0.02, 1e-6).unwrap();
        let d = mesh.signed_distance_to_complement(&region_shape(&mesh, &region)).unwrap();
        let u0: Vec<f64> = d.iter().map(|&x| prof.eval(x)).collect();
        let m0 = crate::linalg::dot(&mesh.lumped_mass, &u0);
        assert!(region.volume - m0 >= 0.0);
    }
}
