//! Discrete Allen-Cahn energy, gradient, Hessian action and KKT residuals.
//!
//! ```text
//! E(u)  = (ε/2) uᵀKu + (1/ε) Σᵢ mᵢ W(uᵢ)
//! ∇E(u) = εKu + (1/ε) M_L W′(u)
//! ```
//!
//! with `K` the P1 stiffness matrix and `M_L = diag(mᵢ)` the lumped mass.
//! The mass constraint is `cᵀu = m` with `c = M_L 1` (equal to the row sums
//! of the consistent mass matrix, so the discrete mass is exactly `1ᵀM̂u`).
//! Dirichlet problems eliminate the boundary degrees of freedom.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom;
use crate::linalg::{self, CsrMatrix};
use crate::mesh::DomainMesh;
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

/// Nodal field on a shared mesh.
#[derive(Debug, Clone)]
pub struct ScalarField {
    mesh: Arc<DomainMesh>,
    values: Vec<f64>,
    bc: BoundaryCondition,
    mass: f64,
}

impl ScalarField {
    pub fn new(mesh: Arc<DomainMesh>, values: Vec<f64>, bc: BoundaryCondition) -> Result<Self> {
        if values.len() != mesh.n_nodes() {
            return Err(Error::FieldLength {
                expected: mesh.n_nodes(),
                got: values.len(),
            });
        }
        if bc == BoundaryCondition::Dirichlet {
            for lp in &mesh.boundary_loops {
                for &i in lp {
                    if values[i] != 0.0 {
                        return Err(Error::BoundaryTrace {
                            node: i,
                            value: values[i],
                        });
                    }
                }
            }
        }
        let mass = linalg::dot(&mesh.lumped_mass, &values);
        Ok(Self {
            mesh,
            values,
            bc,
            mass,
        })
    }

    pub fn constant(mesh: Arc<DomainMesh>, c: f64, bc: BoundaryCondition) -> Result<Self> {
        let n = mesh.n_nodes();
        Self::new(mesh, vec![c; n], bc)
    }

    pub fn zeros(mesh: Arc<DomainMesh>, bc: BoundaryCondition) -> Self {
        Self::constant(mesh, 0.0, bc).expect("zero field is admissible")
    }

    /// Same mesh and boundary condition, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::new(self.mesh.clone(), values, self.bc)
    }

    pub fn mesh(&self) -> &Arc<DomainMesh> {
        &self.mesh
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }

    /// `∫_M u = 1ᵀM̂u`
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// `∫_M |u|`
    pub fn l1_mass(&self) -> f64 {
        self.mesh
            .lumped_mass
            .iter()
            .zip(&self.values)
            .map(|(m, u)| m * u.abs())
            .sum()
    }

    /// Lumped `L²` distance to another field on the same mesh.
    pub fn l2_distance(&self, other: &ScalarField) -> f64 {
        self.mesh
            .lumped_mass
            .iter()
            .zip(self.values.iter().zip(&other.values))
            .map(|(m, (a, b))| m * (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    /// `H¹` distance (lumped `L²` part plus the stiffness seminorm).
    pub fn h1_distance(&self, other: &ScalarField) -> f64 {
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        let l2: f64 = self
            .mesh
            .lumped_mass
            .iter()
            .zip(&diff)
            .map(|(m, d)| m * d * d)
            .sum();
        (l2 + self.mesh.stiffness.quadratic_form(&diff)).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Indices of the unknowns for a boundary condition.
pub fn free_dofs(mesh: &DomainMesh, bc: BoundaryCondition) -> Vec<usize> {
    match bc {
        BoundaryCondition::Neumann => (0..mesh.n_nodes()).collect(),
        BoundaryCondition::Dirichlet => mesh.interior_nodes(),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EnergyReport {
    pub energy: f64,
    /// Unconstrained gradient `εKu + (1/ε)M_L W′(u)` (zero on Dirichlet nodes).
    #[serde(skip)]
    pub gradient: Vec<f64>,
    pub lambda: f64,
    /// Euclidean norm of `∇E(u) − λc` over the free nodes.
    pub kkt_residual: f64,
    pub mass_error: f64,
    pub bc: BoundaryCondition,
    /// Neumann only: largest averaged `|∂u/∂ν|` over boundary nodes.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_derivative: Option<f64>,
}

/// `E_ε` for a potential on a mesh.
#[derive(Debug, Clone)]
pub struct AllenCahn {
    pub mesh: Arc<DomainMesh>,
    pub pot: PotentialSpec,
    pub epsilon: f64,
}

impl AllenCahn {
    pub fn new(mesh: Arc<DomainMesh>, pot: PotentialSpec, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParameter(format!("epsilon must be positive, got {epsilon}")));
        }
        Ok(Self { mesh, pot, epsilon })
    }

    pub fn energy(&self, u: &ScalarField) -> f64 {
        self.energy_of(u.values())
    }

    pub fn energy_of(&self, u: &[f64]) -> f64 {
        let eps = self.epsilon;
        let grad = 0.5 * eps * self.mesh.stiffness.quadratic_form(u);
        let pot: f64 = self
            .mesh
            .lumped_mass
            .iter()
            .zip(u)
            .map(|(m, &x)| m * self.pot.w(x))
            .sum();
        grad + pot / eps
    }

    /// Unconstrained gradient; Dirichlet boundary entries are zeroed.
    pub fn gradient(&self, u: &ScalarField) -> Vec<f64> {
        let mut g = self.gradient_of(u.values());
        if u.bc() == BoundaryCondition::Dirichlet {
            self.mask_boundary(&mut g);
        }
        g
    }

    pub fn gradient_of(&self, u: &[f64]) -> Vec<f64> {
        let eps = self.epsilon;
        let mut g = self.mesh.stiffness.mul_vec(u);
        for ((gi, m), &x) in g.iter_mut().zip(&self.mesh.lumped_mass).zip(u) {
            *gi = eps * *gi + m * self.pot.dw(x) / eps;
        }
        g
    }

    fn mask_boundary(&self, v: &mut [f64]) {
        for lp in &self.mesh.boundary_loops {
            for &i in lp {
                v[i] = 0.0;
            }
        }
    }

    /// `λ = Σ gᵢ / Σ cᵢ` over the free nodes: the multiplier that makes the
    /// residual `∇E − λc` sum to zero, i.e. the least-squares multiplier in
    /// the `M_L⁻¹`-weighted norm.
    pub fn lagrange_multiplier(&self, u: &ScalarField) -> f64 {
        let g = self.gradient(u);
        self.multiplier_from_gradient(&g, u.bc())
    }

    fn multiplier_from_gradient(&self, g: &[f64], bc: BoundaryCondition) -> f64 {
        let dofs = free_dofs(&self.mesh, bc);
        let num: f64 = dofs.iter().map(|&i| g[i]).sum();
        let den: f64 = dofs.iter().map(|&i| self.mesh.lumped_mass[i]).sum();
        num / den
    }

    /// Residual vector `∇E(u) − λc` on the free nodes (zero elsewhere) and `λ`.
    pub fn residual(&self, u: &ScalarField) -> (Vec<f64>, f64) {
        let g = self.gradient(u);
        let lambda = self.multiplier_from_gradient(&g, u.bc());
        let mut r: Vec<f64> = g
            .iter()
            .zip(&self.mesh.lumped_mass)
            .map(|(gi, c)| gi - lambda * c)
            .collect();
        if u.bc() == BoundaryCondition::Dirichlet {
            self.mask_boundary(&mut r);
        }
        (r, lambda)
    }

    pub fn kkt_residual(&self, u: &ScalarField, m: f64) -> EnergyReport {
        let (r, lambda) = self.residual(u);
        let gradient = self.gradient(u);
        let normal_derivative = match u.bc() {
            BoundaryCondition::Neumann => Some(self.normal_derivative_norm(u)),
            BoundaryCondition::Dirichlet => None,
        };
        EnergyReport {
            energy: self.energy(u),
            gradient,
            lambda,
            kkt_residual: linalg::norm2(&r),
            mass_error: (u.mass() - m).abs(),
            bc: u.bc(),
            normal_derivative,
        }
    }

    /// Largest node-averaged `|∇u · ν|` over boundary nodes.
    pub fn normal_derivative_norm(&self, u: &ScalarField) -> f64 {
        let mesh = &self.mesh;
        let n = mesh.n_nodes();
        let mut acc = vec![[0.0; 2]; n];
        let mut wsum = vec![0.0; n];
        for t in &mesh.triangles {
            if !t.iter().any(|&i| mesh.is_boundary(i)) {
                continue;
            }
            let p = [mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]];
            let area = 0.5 * geom::orient(p[0], p[1], p[2]);
            let mut grad = [0.0; 2];
            for i in 0..3 {
                let e = geom::sub(p[(i + 2) % 3], p[(i + 1) % 3]);
                let gphi = [-e[1] / (2.0 * area), e[0] / (2.0 * area)];
                grad = geom::add(grad, geom::scale(gphi, u.values()[t[i]]));
            }
            for &i in t {
                if mesh.is_boundary(i) {
                    acc[i] = geom::add(acc[i], geom::scale(grad, area));
                    wsum[i] += area;
                }
            }
        }
        let mut worst: f64 = 0.0;
        for lp in &mesh.boundary_loops {
            let k = lp.len();
            for j in 0..k {
                let i = lp[j];
                let e = geom::sub(mesh.nodes[lp[(j + 1) % k]], mesh.nodes[lp[(j + k - 1) % k]]);
                let l = geom::norm(e);
                let nu = [-e[1] / l, e[0] / l];
                let g = geom::scale(acc[i], 1.0 / wsum[i]);
                worst = worst.max(geom::dot(g, nu).abs());
            }
        }
        worst
    }

    /// `εKv + (1/ε) M_L diag(W″(u)) v`, masked on Dirichlet nodes.
    pub fn hessian_apply(&self, u: &ScalarField, v: &[f64]) -> Vec<f64> {
        let eps = self.epsilon;
        let mut out = self.mesh.stiffness.mul_vec(v);
        for (i, o) in out.iter_mut().enumerate() {
            *o = eps * *o + self.mesh.lumped_mass[i] * self.pot.d2w(u.values()[i]) * v[i] / eps;
        }
        if u.bc() == BoundaryCondition::Dirichlet {
            self.mask_boundary(&mut out);
        }
        out
    }

    /// Assembled Hessian on all nodes.
    pub fn hessian_matrix(&self, u: &[f64]) -> CsrMatrix {
        let eps = self.epsilon;
        let diag: Vec<f64> = self
            .mesh
            .lumped_mass
            .iter()
            .zip(u)
            .map(|(m, &x)| m * self.pot.d2w(x) / eps)
            .collect();
        self.mesh
            .stiffness
            .linear_combination(eps, &CsrMatrix::diagonal(&diag), 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainSpec};
    use crate::potential::make_quartic;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn disk(h: f64) -> Arc<DomainMesh> {
        Arc::new(build_domain(&DomainSpec::unit_disk(h)).unwrap())
    }

    fn random_field(mesh: &Arc<DomainMesh>, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..mesh.n_nodes()).map(|_| rng.gen_range(-0.3..1.3)).collect()
    }

    #[test]
    fn constant_energies() {
        let mesh = disk(0.05);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 1.0).unwrap();
        let zero = ScalarField::zeros(mesh.clone(), BoundaryCondition::Neumann);
        assert_eq!(ac.energy(&zero), 0.0);
        let half = ScalarField::constant(mesh.clone(), 0.5, BoundaryCondition::Neumann).unwrap();
        let e = ac.energy(&half);
        assert!((e - PI / 16.0).abs() < 0.01 * PI / 16.0);
    }

    #[test]
    fn multipliers_of_constants() {
        let mesh = disk(0.06);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 1.0).unwrap();
        let lam = |c: f64| {
            let u = ScalarField::constant(mesh.clone(), c, BoundaryCondition::Neumann).unwrap();
            ac.lagrange_multiplier(&u)
        };
        assert!(lam(0.5).abs() < 1e-12);
        assert_eq!(lam(0.0), 0.0);
        assert!((lam(0.25) - 0.1875).abs() < 1e-12);
    }

    #[test]
    fn constants_are_exact_critical_points() {
        let mesh = disk(0.06);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.3).unwrap();
        for c in [0.5, 0.13, 0.9] {
            let u = ScalarField::constant(mesh.clone(), c, BoundaryCondition::Neumann).unwrap();
            let rep = ac.kkt_residual(&u, c * mesh.area);
            assert!(rep.kkt_residual <= 1e-10, "{c}: {}", rep.kkt_residual);
            assert!(rep.mass_error <= 1e-12);
            assert!(rep.normal_derivative.unwrap() < 1e-10);
        }
    }

    #[test]
    fn dirichlet_trace_is_enforced() {
        let mesh = disk(0.1);
        let err = ScalarField::constant(mesh.clone(), 0.3, BoundaryCondition::Dirichlet).unwrap_err();
        assert!(matches!(err, Error::BoundaryTrace { .. }));
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mesh = disk(0.08);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.2).unwrap();
        let u = random_field(&mesh, 1);
        let v = random_field(&mesh, 2);
        let g = ac.gradient_of(&u);
        let exact = linalg::dot(&g, &v);
        let err = |t: f64| {
            let up: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + t * b).collect();
            let um: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - t * b).collect();
            ((ac.energy_of(&up) - ac.energy_of(&um)) / (2.0 * t) - exact).abs()
        };
        let (e1, e2) = (err(1e-3), err(1e-4));
        assert!(e1 < 1e-4 * exact.abs().max(1.0));
        // quadratic decay: a tenfold smaller step gives ~100x smaller error
        assert!(e2 < e1 / 30.0, "{e1} {e2}");
    }

    #[test]
    fn hessian_symmetry_and_finite_differences() {
        let mesh = disk(0.08);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.2).unwrap();
        let u = ScalarField::new(mesh.clone(), random_field(&mesh, 3), BoundaryCondition::Neumann).unwrap();
        let v = random_field(&mesh, 4);
        let w = random_field(&mesh, 5);
        let hv = ac.hessian_apply(&u, &v);
        let hw = ac.hessian_apply(&u, &w);
        let (a, b) = (linalg::dot(&hv, &w), linalg::dot(&v, &hw));
        assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()));

        let t = 1e-5;
        let ut: Vec<f64> = u.values().iter().zip(&v).map(|(a, b)| a + t * b).collect();
        let g0 = ac.gradient_of(u.values());
        let g1 = ac.gradient_of(&ut);
        let fd: Vec<f64> = g1.iter().zip(&g0).map(|(a, b)| (a - b) / t).collect();
        let diff: Vec<f64> = fd.iter().zip(&hv).map(|(a, b)| a - b).collect();
        assert!(linalg::norm2(&diff) <= 1e-3 * linalg::norm2(&hv));

        let hm = ac.hessian_matrix(u.values()).mul_vec(&v);
        let diff: Vec<f64> = hm.iter().zip(&hv).map(|(a, b)| a - b).collect();
        assert!(linalg::norm2(&diff) <= 1e-12 * linalg::norm2(&hv));
    }

    #[test]
    fn hessian_on_constants_is_diagonal() {
        let mesh = disk(0.08);
        let eps = 0.7;
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), eps).unwrap();
        let c = 0.3;
        let u = ScalarField::constant(mesh.clone(), c, BoundaryCondition::Neumann).unwrap();
        let v = vec![1.0; mesh.n_nodes()];
        let hv = ac.hessian_apply(&u, &v);
        let k = make_quartic().d2w(c) / eps;
        for (i, x) in hv.iter().enumerate() {
            assert!((x - k * mesh.lumped_mass[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn multiplier_makes_residual_orthogonal_to_constants() {
        let mesh = disk(0.08);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.2).unwrap();
        let u = ScalarField::new(mesh.clone(), random_field(&mesh, 6), BoundaryCondition::Neumann).unwrap();
        let (r, _) = ac.residual(&u);
        let s: f64 = r.iter().sum();
        let scale: f64 = r.iter().map(|x| x.abs()).sum();
        assert!(s.abs() <= 1e-10 * scale);
    }

    #[test]
    fn energy_invariant_under_node_permutation() {
        let mesh = disk(0.1);
        let n = mesh.n_nodes();
        let u = random_field(&mesh, 7);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.3).unwrap();
        let e = ac.energy_of(&u);

        // reverse the node numbering
        let perm: Vec<usize> = (0..n).rev().collect();
        let nodes = perm.iter().map(|&old| mesh.nodes[old]).collect();
        let mut inv = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inv[old] = new;
        }
        let tris = mesh.triangles.iter().map(|t| [inv[t[0]], inv[t[1]], inv[t[2]]]).collect();
        let loops = mesh
            .boundary_loops
            .iter()
            .map(|lp| lp.iter().map(|&i| inv[i]).collect())
            .collect();
        let pm = DomainMesh::assemble(nodes, tris, loops, mesh.h, mesh.geometry.clone(), None, Some(mesh.delta_m)).unwrap();
        let pu: Vec<f64> = perm.iter().map(|&old| u[old]).collect();
        let pac = AllenCahn::new(Arc::new(pm), make_quartic(), 0.3).unwrap();
        assert!((pac.energy_of(&pu) - e).abs() <= 1e-12 * e);
    }

    #[test]
    fn dirichlet_residual_ignores_boundary() {
        let mesh = disk(0.1);
        let ac = AllenCahn::new(mesh.clone(), make_quartic(), 0.3).unwrap();
        let mut vals = random_field(&mesh, 8);
        for lp in &mesh.boundary_loops {
            for &i in lp {
                vals[i] = 0.0;
            }
        }
        let u = ScalarField::new(mesh.clone(), vals, BoundaryCondition::Dirichlet).unwrap();
        let (r, _) = ac.residual(&u);
        for lp in &mesh.boundary_loops {
            for &i in lp {
                assert_eq!(r[i], 0.0);
            }
        }
        let interior_sum: f64 = mesh.interior_nodes().iter().map(|&i| r[i]).sum();
        assert!(interior_sum.abs() < 1e-10);
        let rep = ac.kkt_residual(&u, 0.1);
        assert!(rep.energy >= 0.0 && rep.kkt_residual >= 0.0);
        let json = serde_json::to_value(&rep).unwrap();
        for key in ["energy", "lambda", "kkt_residual", "mass_error", "bc"] {
            assert!(json.get(key).is_some(), "missing {key}");
        }
    }
}
