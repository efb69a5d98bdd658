//! Mass-preserving gradient flow, constrained Newton refinement, Morse
//! indices and the multistart pipeline.

mod multistart;

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use multistart::{
    category_target, concentration_check, dedup, field_concentrated, multistart, seed_points,
    DedupTolerances, MultistartReport, SeedFailure,
};

use crate::construction::{barycenter, Caps};
use crate::energy::{free_dofs, AllenCahn, BoundaryCondition, ScalarField};
use crate::error::{Error, Result};
use crate::geom::Point;
use crate::geometry_limits::ThresholdSlack;
use crate::linalg::{self, CsrMatrix, Inertia, LdltFactor};
use crate::mesh::{DomainMesh, ProjectionMode};
use crate::potential::PotentialSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub m: f64,
    pub bc: BoundaryCondition,
    /// Flow time step; `None` uses `ε`.
    pub dt: Option<f64>,
    pub flow_max_steps: usize,
    /// Relative energy decrease per step below which the flow stops.
    pub stall_tol: f64,
    /// KKT residual at which the flow hands over to Newton.
    pub flow_residual_tol: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Flow/Newton alternations before giving up on a seed.
    pub refine_rounds: usize,
    /// Defaults to `0.2·√m`.
    pub dedup_l2_tol: Option<f64>,
    /// Defaults to `0.05·c_m`.
    pub dedup_energy_tol: Option<f64>,
    /// Defaults to `0.5·√m`.
    pub dedup_barycenter_tol: Option<f64>,
    pub n_seeds: usize,
    pub gamma_hat: f64,
    pub dirichlet_slack: f64,
    pub mu_hat: f64,
    pub alpha: f64,
    /// Threshold on `ε·gap` (the smallest `|eigenvalue|` of the constrained
    /// pencil in units of the reaction scale `1/ε`) below which a record
    /// counts as degenerate.
    pub degeneracy_tol: f64,
    pub caps: Caps,
    pub profile_step_tol: f64,
    /// Boundary centers used by the isoperimetric estimate.
    pub profile_centers: usize,
    pub seed: u64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            m: 0.05,
            bc: BoundaryCondition::Neumann,
            dt: None,
            flow_max_steps: 3000,
            stall_tol: 1e-10,
            flow_residual_tol: 1e-6,
            newton_tol: 1e-9,
            newton_max_iter: 30,
            refine_rounds: 4,
            dedup_l2_tol: None,
            dedup_energy_tol: None,
            dedup_barycenter_tol: None,
            n_seeds: 16,
            gamma_hat: 1.0,
            dirichlet_slack: 1.0,
            mu_hat: 3.0,
            alpha: 0.1,
            degeneracy_tol: 1e-2,
            caps: Caps::default(),
            profile_step_tol: 1e-6,
            profile_centers: 128,
            seed: 0,
        }
    }
}

impl SolveConfig {
    pub fn new(epsilon: f64, m: f64, bc: BoundaryCondition) -> Self {
        Self {
            epsilon,
            m,
            bc,
            ..Self::default()
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or(self.epsilon)
    }

    pub fn slack(&self) -> ThresholdSlack {
        ThresholdSlack {
            gamma_hat: self.gamma_hat,
            dirichlet_slack: self.dirichlet_slack,
        }
    }

    pub fn validate(&self, area: f64) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")))
            }
        };
        positive("epsilon", self.epsilon)?;
        positive("m", self.m)?;
        positive("dt", self.dt())?;
        positive("stall_tol", self.stall_tol)?;
        positive("flow_residual_tol", self.flow_residual_tol)?;
        positive("newton_tol", self.newton_tol)?;
        positive("mu_hat", self.mu_hat)?;
        positive("alpha", self.alpha)?;
        positive("gamma_hat", self.gamma_hat)?;
        positive("degeneracy_tol", self.degeneracy_tol)?;
        positive("profile_step_tol", self.profile_step_tol)?;
        if self.dirichlet_slack < 0.0 || !self.dirichlet_slack.is_finite() {
            return Err(Error::InvalidParameter("dirichlet_slack must be nonnegative".into()));
        }
        for (name, v) in [
            ("dedup_l2_tol", self.dedup_l2_tol),
            ("dedup_energy_tol", self.dedup_energy_tol),
            ("dedup_barycenter_tol", self.dedup_barycenter_tol),
        ] {
            if let Some(v) = v {
                positive(name, v)?;
            }
        }
        if self.newton_max_iter == 0 || self.flow_max_steps == 0 || self.refine_rounds == 0 {
            return Err(Error::InvalidParameter("iteration limits must be positive".into()));
        }
        if self.m >= area {
            return Err(Error::MassOutOfRange { mass: self.m, area });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowStop {
    Residual,
    Stall,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowTrace {
    /// Energy after every accepted step (the first entry is the initial energy).
    pub energies: Vec<f64>,
    /// Uniform shift applied to the free values of the start to hit `m`.
    pub mass_correction: f64,
    /// Largest `|mass(uⁿ⁺¹) − mass(uⁿ)|` over accepted steps.
    pub max_mass_drift: f64,
    pub steps: usize,
    pub halvings: usize,
    pub final_dt: f64,
    pub stop: FlowStop,
}

impl FlowTrace {
    pub fn energy_nonincreasing(&self) -> bool {
        self.energies.windows(2).all(|w| w[1] <= w[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NewtonTrace {
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalPointRecord {
    #[serde(skip)]
    pub field: ScalarField,
    pub energy: f64,
    pub lambda: f64,
    pub kkt_residual: f64,
    pub mass_error: f64,
    pub morse_index: usize,
    pub nondegenerate: bool,
    pub gap: f64,
    pub barycenter: Point,
    pub projected_point: Point,
    /// `∫ |u|` outside `B(projected_point, μ̂√m)` is at most `α m`.
    pub concentrated: bool,
    pub seed_provenance: String,
    pub newton: NewtonTrace,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowTrace>,
}

/// Stabilization constant `S ≥ max|W″|/2` over `[−0.1, 1.1]`.
fn stabilization(pot: &PotentialSpec) -> f64 {
    let wmax = (0..=120)
        .map(|k| pot.d2w(-0.1 + 1.2 * k as f64 / 120.0).abs())
        .fold(0.0f64, f64::max);
    (0.5 * wmax).max(1.0)
}

/// Flow, Newton and Morse computations for one functional and configuration.
#[derive(Debug, Clone)]
pub struct Solver {
    pub functional: AllenCahn,
    pub cfg: SolveConfig,
    dofs: Vec<usize>,
    c: Vec<f64>,
}

impl Solver {
    pub fn new(mesh: Arc<DomainMesh>, pot: PotentialSpec, cfg: SolveConfig) -> Result<Self> {
        cfg.validate(mesh.area)?;
        let dofs = free_dofs(&mesh, cfg.bc);
        let c = dofs.iter().map(|&i| mesh.lumped_mass[i]).collect();
        Ok(Self {
            functional: AllenCahn::new(mesh, pot, cfg.epsilon)?,
            cfg,
            dofs,
            c,
        })
    }

    pub fn mesh(&self) -> &Arc<DomainMesh> {
        &self.functional.mesh
    }

    fn restrict(&self, v: &[f64]) -> Vec<f64> {
        self.dofs.iter().map(|&i| v[i]).collect()
    }

    fn extend(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.mesh().n_nodes()];
        for (k, &i) in self.dofs.iter().enumerate() {
            out[i] = v[k];
        }
        out
    }

    fn check_field(&self, u: &ScalarField) -> Result<()> {
        if u.bc() != self.cfg.bc {
            return Err(Error::InvalidParameter(format!(
                "field boundary condition {:?} does not match the configuration {:?}",
                u.bc(),
                self.cfg.bc
            )));
        }
        if !Arc::ptr_eq(u.mesh(), self.mesh()) && u.mesh().n_nodes() != self.mesh().n_nodes() {
            return Err(Error::FieldLength {
                expected: self.mesh().n_nodes(),
                got: u.mesh().n_nodes(),
            });
        }
        Ok(())
    }

    fn flow_matrix(&self, dt: f64, s: f64) -> Result<LdltFactor> {
        let mesh = self.mesh();
        let eps = self.cfg.epsilon;
        let diag: Vec<f64> = mesh.lumped_mass.iter().map(|m| m * (1.0 / dt + s / eps)).collect();
        let a = mesh.stiffness.linear_combination(eps, &CsrMatrix::diagonal(&diag), 1.0);
        let a = a.principal_submatrix(&self.dofs);
        LdltFactor::factor(&a).map_err(|e| Error::LinearSolveFailure(e.to_string()))
    }

    /// Semi-implicit stabilized flow
    /// `(M/dt + εK + (S/ε)M) uⁿ⁺¹ = M uⁿ/dt + (S/ε)M uⁿ − (1/ε)M W′(uⁿ) + λc`
    /// with `λ` fixing `cᵀuⁿ⁺¹ = m`. Steps that raise the energy are retried
    /// with half the time step.
    pub fn flow(&self, u0: &ScalarField) -> Result<(ScalarField, FlowTrace)> {
        self.check_field(u0)?;
        let mesh = self.mesh();
        let area = mesh.area;
        if (u0.mass() - self.cfg.m).abs() > 1e-8 * area {
            return Err(Error::InvalidParameter(format!(
                "initial mass {} differs from m = {}",
                u0.mass(),
                self.cfg.m
            )));
        }
        let eps = self.cfg.epsilon;
        let pot = self.functional.pot;
        let s = stabilization(&pot);
        let m = self.cfg.m;
        let dt_min = 1e-12 * self.cfg.dt();
        let mut dt = self.cfg.dt();
        let mut fac = self.flow_matrix(dt, s)?;
        let mut w1 = fac.solve(&self.c);

        // the start is moved onto the constraint by a uniform shift, so that
        // the per-step drift measures the scheme alone
        let mut u = self.restrict(u0.values());
        let correction = (m - linalg::dot(&self.c, &u)) / self.c.iter().sum::<f64>();
        for x in u.iter_mut() {
            *x += correction;
        }
        let mut full = self.extend(&u);
        let mut e = self.functional.energy_of(&full);
        let mut trace = FlowTrace {
            energies: vec![e],
            mass_correction: correction,
            max_mass_drift: 0.0,
            steps: 0,
            halvings: 0,
            final_dt: dt,
            stop: FlowStop::MaxSteps,
        };
        if self.residual_norm(&full) <= self.cfg.flow_residual_tol {
            trace.stop = FlowStop::Residual;
            return Ok((u0.with_values(full)?, trace));
        }
        let mass_of = |v: &[f64]| linalg::dot(&self.c, v);
        let mut mass = mass_of(&u);
        while trace.steps < self.cfg.flow_max_steps {
            let coef = 1.0 / dt + s / eps;
            let rhs: Vec<f64> = u
                .iter()
                .zip(&self.c)
                .map(|(&x, &ci)| ci * (coef * x - pot.dw(x) / eps))
                .collect();
            let w0 = fac.solve(&rhs);
            let lambda = (m - mass_of(&w0)) / mass_of(&w1);
            let un: Vec<f64> = w0.iter().zip(&w1).map(|(a, b)| a + lambda * b).collect();
            let fulln = self.extend(&un);
            let en = self.functional.energy_of(&fulln);
            if en > e + 1e-14 * e.abs().max(1.0) {
                dt *= 0.5;
                trace.halvings += 1;
                if dt < dt_min {
                    return Err(Error::StepCollapse(dt));
                }
                fac = self.flow_matrix(dt, s)?;
                w1 = fac.solve(&self.c);
                continue;
            }
            if en > e {
                // an increase at roundoff level: nothing left to gain
                trace.stop = FlowStop::Stall;
                break;
            }
            let massn = mass_of(&un);
            trace.max_mass_drift = trace.max_mass_drift.max((massn - mass).abs());
            trace.steps += 1;
            let decrease = e - en;
            trace.energies.push(en);
            u = un;
            full = fulln;
            mass = massn;
            e = en;
            if decrease <= self.cfg.stall_tol * e.abs().max(1.0) {
                trace.stop = FlowStop::Stall;
                break;
            }
            if trace.steps.is_multiple_of(10) && self.residual_norm(&full) <= self.cfg.flow_residual_tol {
                trace.stop = FlowStop::Residual;
                break;
            }
        }
        trace.final_dt = dt;
        Ok((u0.with_values(full)?, trace))
    }

    /// `∇E − λc` on the free nodes, with `λ = 1ᵀ∇E / 1ᵀc`.
    fn residual_free(&self, full: &[f64]) -> (Vec<f64>, f64) {
        let g = self.functional.gradient_of(full);
        let gf = self.restrict(&g);
        let lambda = gf.iter().sum::<f64>() / self.c.iter().sum::<f64>();
        let r = gf.iter().zip(&self.c).map(|(g, c)| g - lambda * c).collect();
        (r, lambda)
    }

    fn residual_norm(&self, full: &[f64]) -> f64 {
        linalg::norm2(&self.residual_free(full).0)
    }

    fn hessian_free(&self, full: &[f64]) -> CsrMatrix {
        self.functional.hessian_matrix(full).principal_submatrix(&self.dofs)
    }

    /// Newton's method on the bordered system
    /// `[[H, c], [cᵀ, 0]] [δu; −δλ] = [−(∇E − λc); m − cᵀu]`.
    /// A singular matrix at the starting point is reported as `SingularKkt`.
    pub fn newton(&self, u: &ScalarField) -> Result<(ScalarField, NewtonTrace)> {
        self.check_field(u)?;
        let m = self.cfg.m;
        let mut full = u.values().to_vec();
        // Steps are accepted on the M_L⁻¹-weighted residual, along which both
        // the Newton and the damped directions descend near a minimizer;
        // convergence is declared on the Euclidean residual.
        let norms = |full: &[f64]| -> (f64, f64) {
            let (r, _) = self.residual_free(full);
            let mass = linalg::dot(&self.c, &self.restrict(full));
            let weighted = r.iter().zip(&self.c).map(|(x, c)| x * x / c).sum::<f64>().sqrt();
            (linalg::norm2(&r).hypot(m - mass), weighted.hypot(m - mass))
        };
        let (mut res, mut merit_now) = norms(&full);
        let mut trace = NewtonTrace {
            residuals: vec![res],
            iterations: 0,
        };
        // Levenberg-Marquardt shift μ·M_L, raised on rejected steps so that
        // soft directions are damped before stiff ones
        let mu0 = 1e-4 / self.cfg.epsilon;
        let mut mu = 0.0;
        while res > self.cfg.newton_tol {
            if trace.iterations >= self.cfg.newton_max_iter {
                return Err(Error::DidNotConverge {
                    residual: res,
                    iterations: trace.iterations,
                });
            }
            let h = self.hessian_free(&full);
            let g = self.restrict(&self.functional.gradient_of(&full));
            let lambda = g.iter().sum::<f64>() / self.c.iter().sum::<f64>();
            let uf = self.restrict(&full);
            let mut rhs: Vec<f64> = g.iter().zip(&self.c).map(|(g, c)| -(g - lambda * c)).collect();
            rhs.push(m - linalg::dot(&self.c, &uf));

            let mut accepted = None;
            for _ in 0..40 {
                let fac = if mu > 0.0 {
                    let shifted = h.linear_combination(1.0, &CsrMatrix::diagonal(&self.c), mu);
                    LdltFactor::factor_bordered(&shifted, &self.c)
                } else {
                    LdltFactor::factor_bordered(&h, &self.c)
                };
                let fac = match fac {
                    Ok(f) => f,
                    Err(e) if trace.iterations == 0 && mu == 0.0 => return Err(e),
                    Err(_) => {
                        mu = if mu == 0.0 { mu0 } else { 10.0 * mu };
                        continue;
                    }
                };
                let sol = fac.solve(&rhs);
                let cand: Vec<f64> = uf.iter().zip(&sol).map(|(a, b)| a + b).collect();
                let cfull = self.extend(&cand);
                let (r, w) = norms(&cfull);
                if w.is_finite() && w < merit_now {
                    accepted = Some((cfull, r, w));
                    mu = if mu <= mu0 { 0.0 } else { 0.1 * mu };
                    break;
                }
                mu = if mu == 0.0 { mu0 } else { 10.0 * mu };
            }
            trace.iterations += 1;
            match accepted {
                Some((f, r, w)) => {
                    full = f;
                    res = r;
                    merit_now = w;
                    trace.residuals.push(r);
                }
                None => {
                    return Err(Error::DidNotConverge {
                        residual: res,
                        iterations: trace.iterations,
                    })
                }
            }
        }
        Ok((u.with_values(full)?, trace))
    }

    /// Number of negative eigenvalues of the Hessian on `{cᵀv = 0}` (free
    /// nodes only), and the smallest `|ν|` of the constrained pencil `(H, M_L)`.
    pub fn morse_index(&self, u: &ScalarField) -> Result<(usize, f64, Inertia)> {
        self.check_field(u)?;
        let h = self.hessian_free(u.values());
        let fac = LdltFactor::factor_bordered_lenient(&h, Some(&self.c))
            .map_err(|e| Error::FactorizationFailure(e.to_string()))?;
        let inertia = fac.inertia();
        if inertia.negative == 0 {
            return Err(Error::FactorizationFailure(
                "bordered matrix has no negative pivot".into(),
            ));
        }
        let index = inertia.negative - 1;
        let gap = if inertia.zero > 0 {
            0.0
        } else {
            self.smallest_eigenvalue(&h, &fac)
        };
        Ok((index, gap, inertia))
    }

    /// Inverse iteration on the constrained pencil through the bordered factor.
    fn smallest_eigenvalue(&self, h: &CsrMatrix, fac: &LdltFactor) -> f64 {
        let n = self.dofs.len();
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut y: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mnorm = |v: &[f64]| v.iter().zip(&self.c).map(|(a, c)| c * a * a).sum::<f64>().sqrt();
        let mut nu = f64::INFINITY;
        for _ in 0..200 {
            let mut rhs: Vec<f64> = y.iter().zip(&self.c).map(|(a, c)| a * c).collect();
            rhs.push(0.0);
            let mut x = fac.solve(&rhs);
            x.truncate(n);
            let nx = mnorm(&x);
            if !(nx.is_finite() && nx > 0.0) {
                return 0.0;
            }
            for v in x.iter_mut() {
                *v /= nx;
            }
            let hx = h.mul_vec(&x);
            let nu_new = linalg::dot(&x, &hx);
            y = x;
            let done = (nu_new - nu).abs() <= 1e-10 * nu_new.abs();
            nu = nu_new;
            if done {
                break;
            }
        }
        nu.abs()
    }

    /// Newton refinement followed by the Morse computation.
    pub fn refine(&self, u: &ScalarField, provenance: &str) -> Result<CriticalPointRecord> {
        let (v, newton) = self.newton(u)?;
        self.record(v, newton, None, provenance)
    }

    fn record(
        &self,
        field: ScalarField,
        newton: NewtonTrace,
        flow: Option<FlowTrace>,
        provenance: &str,
    ) -> Result<CriticalPointRecord> {
        let rep = self.functional.kkt_residual(&field, self.cfg.m);
        let (morse_index, gap, inertia) = self.morse_index(&field)?;
        let b = barycenter(&field)?;
        let mode = match self.cfg.bc {
            BoundaryCondition::Neumann => ProjectionMode::Boundary,
            BoundaryCondition::Dirichlet => ProjectionMode::Domain,
        };
        let projected = self.mesh().project(b, mode, false)?;
        let concentrated = field_concentrated(&field, projected, self.cfg.m, self.cfg.mu_hat, self.cfg.alpha);
        Ok(CriticalPointRecord {
            concentrated,
            energy: rep.energy,
            lambda: rep.lambda,
            kkt_residual: rep.kkt_residual,
            mass_error: rep.mass_error,
            morse_index,
            nondegenerate: inertia.zero == 0 && gap * self.cfg.epsilon > self.cfg.degeneracy_tol,
            gap,
            barycenter: b,
            projected_point: projected,
            seed_provenance: provenance.to_string(),
            newton,
            flow,
            field,
        })
    }

    /// Flow, then Newton, then Morse data. When Newton does not converge the
    /// flow is resumed from where it stopped, up to `refine_rounds` times.
    pub fn solve_from(&self, u0: &ScalarField, provenance: &str) -> Result<CriticalPointRecord> {
        let (mut u, mut flow) = self.flow(u0)?;
        let mut round = 1;
        loop {
            match self.newton(&u) {
                Ok((v, newton)) => return self.record(v, newton, Some(flow), provenance),
                Err(Error::DidNotConverge { .. }) if round < self.cfg.refine_rounds => {
                    let (next, more) = self.flow(&u)?;
                    flow.energies.extend_from_slice(&more.energies[1..]);
                    flow.max_mass_drift = flow.max_mass_drift.max(more.max_mass_drift);
                    flow.steps += more.steps;
                    flow.halvings += more.halvings;
                    flow.final_dt = more.final_dt;
                    flow.stop = more.stop;
                    u = next;
                    round += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_domain, DomainSpec};
    use crate::potential::make_quartic;

    fn disk(h: f64) -> Arc<DomainMesh> {
        Arc::new(build_domain(&DomainSpec::unit_disk(h)).unwrap())
    }

    fn noisy_half(mesh: &Arc<DomainMesh>, amp: f64, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<f64> = (0..mesh.n_nodes()).map(|_| amp * rng.gen_range(-1.0..1.0)).collect();
        let mean = linalg::dot(&mesh.lumped_mass, &v) / mesh.area;
        for x in v.iter_mut() {
            *x += 0.5 - mean;
        }
        ScalarField::new(mesh.clone(), v, BoundaryCondition::Neumann).unwrap()
    }

    #[test]
    fn constant_is_a_fixed_point_of_the_flow() {
        let mesh = disk(0.08);
        let m = 0.1 * mesh.area;
        let solver = Solver::new(mesh.clone(), make_quartic(), SolveConfig::new(0.05, m, BoundaryCondition::Neumann)).unwrap();
        let u0 = ScalarField::constant(mesh.clone(), m / mesh.area, BoundaryCondition::Neumann).unwrap();
        let (u, trace) = solver.flow(&u0).unwrap();
        assert!(u.values().iter().all(|&x| (x - 0.1).abs() < 1e-14));
        assert_eq!(trace.steps, 0);
        assert_eq!(trace.stop, FlowStop::Residual);
    }

    #[test]
    fn flow_conserves_mass_and_decreases_energy() {
        let mesh = disk(0.08);
        let u0 = noisy_half(&mesh, 0.3, 1);
        let mut cfg = SolveConfig::new(0.1, u0.mass(), BoundaryCondition::Neumann);
        cfg.flow_max_steps = 1000;
        cfg.stall_tol = 1e-300;
        cfg.flow_residual_tol = 1e-300;
        let solver = Solver::new(mesh.clone(), make_quartic(), cfg).unwrap();
        let (u, trace) = solver.flow(&u0).unwrap();
        assert!(trace.steps >= 100);
        assert!(trace.max_mass_drift <= 1e-10 * mesh.area);
        assert!(trace.energy_nonincreasing());
        assert!((u.mass() - u0.mass()).abs() <= 1e-10 * mesh.area);
    }

    #[test]
    fn newton_recovers_the_half_constant() {
        let mesh = disk(0.08);
        let u0 = noisy_half(&mesh, 1e-3, 2);
        let cfg = SolveConfig::new(1.0, 0.5 * mesh.area, BoundaryCondition::Neumann);
        let solver = Solver::new(mesh.clone(), make_quartic(), cfg).unwrap();
        let rec = solver.refine(&u0, "noise").unwrap();
        assert!(rec.kkt_residual <= 1e-9);
        assert!(rec.lambda.abs() < 1e-9);
        assert!(rec.field.values().iter().all(|v| (v - 0.5).abs() < 1e-8));
        assert_eq!(rec.morse_index, 0);
        let r = &rec.newton.residuals;
        if r.len() >= 3 {
            let k = r.len();
            assert!(r[k - 1] / r[k - 2] <= 0.1);
        }
    }

    #[test]
    fn half_constant_morse_index_depends_on_epsilon() {
        let mesh = disk(0.1);
        let u = ScalarField::constant(mesh.clone(), 0.5, BoundaryCondition::Neumann).unwrap();
        let idx = |eps: f64| {
            let s = Solver::new(mesh.clone(), make_quartic(), SolveConfig::new(eps, 0.5 * mesh.area, BoundaryCondition::Neumann)).unwrap();
            s.morse_index(&u).unwrap()
        };
        let (i1, gap1, _) = idx(1.0);
        assert_eq!(i1, 0);
        // smallest eigenvalue ε·μ₁ − 1/ε with μ₁ ≈ 3.39
        assert!((gap1 - (3.39 - 1.0)).abs() < 0.1, "{gap1}");
        assert!(idx(0.3).0 >= 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = SolveConfig::new(-1.0, 0.1, BoundaryCondition::Neumann);
        assert!(cfg.validate(1.0).is_err());
        cfg.epsilon = 0.1;
        assert!(cfg.validate(1.0).is_ok());
        cfg.m = 2.0;
        assert!(matches!(cfg.validate(1.0), Err(Error::MassOutOfRange { .. })));
    }

    #[test]
    fn dirichlet_flow_keeps_zero_trace() {
        let mesh = disk(0.08);
        let mut v = vec![0.0; mesh.n_nodes()];
        for (i, x) in mesh.nodes.iter().enumerate() {
            if !mesh.is_boundary(i) && crate::geom::norm(*x) < 0.4 {
                v[i] = 1.0;
            }
        }
        let u0 = ScalarField::new(mesh.clone(), v, BoundaryCondition::Dirichlet).unwrap();
        let mut cfg = SolveConfig::new(0.1, u0.mass(), BoundaryCondition::Dirichlet);
        cfg.flow_max_steps = 200;
        let solver = Solver::new(mesh.clone(), make_quartic(), cfg).unwrap();
        let (u, trace) = solver.flow(&u0).unwrap();
        for lp in &mesh.boundary_loops {
            for &i in lp {
                assert_eq!(u.values()[i], 0.0);
            }
        }
        assert!(trace.energy_nonincreasing());
        assert!(trace.max_mass_drift <= 1e-10 * mesh.area);
    }
}
