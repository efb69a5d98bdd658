//! Acceptance suite: one check per criterion, each with its own wall-clock
//! budget. Criterion 11 inspects the flow traces collected by 8 and 9 when
//! they ran in the same session, plus a flow of its own.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::construction::{compose_b, recovery_sequence, Caps, Photographer};
use crate::energy::{AllenCahn, BoundaryCondition, ScalarField};
use crate::error::Result;
use crate::geom;
use crate::geometry_limits::{estimate_profile, sublevel_threshold, IndicatorRegion, ThresholdSlack};
use crate::mesh::{build_domain, DomainMesh, DomainSpec};
use crate::potential::{compute_sigma, make_quartic, solve_profile};
use crate::solver::{multistart, seed_points, FlowTrace, SolveConfig, Solver};

pub const SIGMA_TOL: f64 = 1e-6;
pub const SLOPE_REL_TOL: f64 = 0.01;
pub const PROFILE_RATIO_BAND: (f64, f64) = (0.9, 1.1);
pub const GAMMA_FINAL_GAP: f64 = 0.10;
pub const NEWTON_TOL: f64 = 1e-9;
pub const LAMBDA_TOL: f64 = 1e-9;
pub const MASS_DRIFT_TOL: f64 = 1e-10;
pub const CLOSENESS_FRACTION: f64 = 0.2;

const PROFILE_STEP_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub elapsed_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_s: Option<f64>,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {:<28} {:>8.2}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.elapsed_s,
            self.detail
        )
    }
}

pub const CRITERIA: [(usize, &str, Option<u64>); 11] = [
    (1, "surface tension", Some(1)),
    (2, "profile ODE", Some(1)),
    (3, "euclidean asymptotics", Some(30)),
    (4, "gamma-limsup", Some(60)),
    (5, "sublevel containment", Some(60)),
    (6, "exact constant solution", Some(10)),
    (7, "morse index oracle", Some(30)),
    (8, "neumann multiplicity", Some(600)),
    (9, "dirichlet multiplicity", Some(1200)),
    (10, "homotopy closeness", Some(60)),
    (11, "conservation invariants", None),
];

/// Domain, mass and epsilon of the multiplicity experiments.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub domain: DomainSpec,
    /// Mass as a fraction of the area; `None` means the absolute `mass`.
    pub mass_fraction: Option<f64>,
    pub mass: f64,
    pub bc: BoundaryCondition,
    pub n_seeds: usize,
}

impl Scenario {
    pub fn neumann_annulus() -> Self {
        Self {
            domain: DomainSpec::eccentric_annulus(0.4, 1.0, 0.25, 0.03),
            mass_fraction: Some(0.01),
            mass: 0.0,
            bc: BoundaryCondition::Neumann,
            n_seeds: 32,
        }
    }

    pub fn dirichlet_disk() -> Self {
        Self {
            domain: DomainSpec::unit_disk(0.03),
            mass_fraction: Some(0.005),
            mass: 0.0,
            bc: BoundaryCondition::Dirichlet,
            n_seeds: 16,
        }
    }

    /// Wide enough that a bump of the disk's size clears the collar.
    pub fn dirichlet_annulus() -> Self {
        Self {
            domain: DomainSpec::eccentric_annulus(1.0, 2.2, 0.1, 0.03),
            mass_fraction: None,
            mass: 0.005 * PI,
            bc: BoundaryCondition::Dirichlet,
            n_seeds: 16,
        }
    }

    pub fn config(&self, mesh: &DomainMesh) -> SolveConfig {
        let m = self.mass_fraction.map_or(self.mass, |f| f * mesh.area);
        let caps = Caps::default();
        let mut cfg = SolveConfig::new(caps.epsilon_cap(m), m, self.bc);
        cfg.n_seeds = self.n_seeds;
        cfg
    }
}

/// Runs the requested criteria in order, sharing flow traces with 11.
pub fn run(ids: &[usize]) -> Vec<CriterionResult> {
    let mut flows: Vec<(String, f64, FlowTrace)> = Vec::new();
    let mut out = Vec::new();
    for &(id, name, budget) in CRITERIA.iter() {
        if !ids.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = match id {
            1 => surface_tension(),
            2 => profile_ode(),
            3 => euclidean_asymptotics(),
            4 => gamma_limsup(),
            5 => sublevel_containment(),
            6 => exact_constant(),
            7 => morse_oracle(),
            8 => neumann_multiplicity(&mut flows),
            9 => dirichlet_multiplicity(&mut flows),
            10 => homotopy_closeness(),
            _ => conservation(&flows),
        };
        let elapsed = start.elapsed();
        let (mut passed, mut detail) = match outcome {
            Ok(v) => v,
            Err(e) => (false, format!("error: {e}")),
        };
        if let Some(b) = budget {
            if elapsed > Duration::from_secs(b) {
                passed = false;
                detail.push_str(&format!("; over budget of {b} s"));
            }
        }
        out.push(CriterionResult {
            id,
            name,
            passed,
            detail,
            elapsed_s: elapsed.as_secs_f64(),
            budget_s: budget.map(|b| b as f64),
        });
    }
    out
}

pub fn run_all() -> Vec<CriterionResult> {
    run(&(1..=11).collect::<Vec<_>>())
}

type Outcome = Result<(bool, String)>;

fn disk(h: f64) -> Result<Arc<DomainMesh>> {
    Ok(Arc::new(build_domain(&DomainSpec::unit_disk(h))?))
}

fn surface_tension() -> Outcome {
    let sigma = compute_sigma(&make_quartic(), 1e-12)?;
    let err = (sigma - 1.0 / 3.0).abs();
    Ok((err <= SIGMA_TOL, format!("sigma = {sigma:.12}, |sigma - 1/3| = {err:.2e}")))
}

fn profile_ode() -> Outcome {
    let pot = make_quartic();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut etas = Vec::new();
    for eps in [0.1, 0.05, 0.025] {
        let p = solve_profile(&pot, eps, PROFILE_STEP_TOL)?;
        let tau = p.t[1];
        let slope = (p.eval(tau) - p.eval(0.0)) / tau;
        let rel = (slope * eps.powf(0.25) - 1.0).abs();
        ok &= rel <= SLOPE_REL_TOL;
        parts.push(format!("eps {eps}: slope err {rel:.1e}, eta {:.5}", p.eta));
        etas.push(p.eta);
    }
    let decreasing = etas.windows(2).all(|w| w[1] < w[0]);
    Ok((ok && decreasing, parts.join("; ")))
}

fn euclidean_asymptotics() -> Outcome {
    let mesh = disk(0.02)?;
    let mut ok = true;
    let mut parts = Vec::new();
    let (mut prev_rel, mut prev_full) = (f64::INFINITY, f64::INFINITY);
    let (lo, hi) = PROFILE_RATIO_BAND;
    for m in [1e-2, 5e-3, 2.5e-3] {
        let est = estimate_profile(&mesh, m, BoundaryCondition::Neumann, 256)?;
        let r_rel = est.i_m / (2.0 * PI * m).sqrt();
        let r_full = est.i_bar_m / (2.0 * (PI * m).sqrt());
        let (d_rel, d_full) = ((r_rel - 1.0).abs(), (r_full - 1.0).abs());
        ok &= (lo..=hi).contains(&r_rel) && (lo..=hi).contains(&r_full);
        // deviation may not grow as m decreases along the sequence
        ok &= d_rel <= prev_rel + 1e-12 && d_full <= prev_full + 1e-12;
        prev_rel = d_rel;
        prev_full = d_full;
        parts.push(format!("m {m}: {r_rel:.4} / {r_full:.4}"));
    }
    Ok((ok, parts.join("; ")))
}

fn gamma_limsup() -> Outcome {
    let mesh = disk(0.01)?;
    let pot = make_quartic();
    let sigma = compute_sigma(&pot, 1e-12)?;
    let m = 0.05;
    let region = IndicatorRegion::ball_of_volume(&mesh, [1.0, 0.0], m)?;
    let limit = sigma * region.relative_perimeter;
    let mut gaps = Vec::new();
    let mut layer_gaps = Vec::new();
    for eps in [0.08, 0.04, 0.02] {
        let profile = solve_profile(&pot, eps, PROFILE_STEP_TOL)?;
        let (u, _) = recovery_sequence(&mesh, &region, &profile, m, BoundaryCondition::Neumann)?;
        let e = AllenCahn::new(mesh.clone(), pot, eps)?.energy(&u);
        gaps.push(e - limit);
        layer_gaps.push(e - pot.layer_tension() * region.relative_perimeter);
    }
    let small = GAMMA_FINAL_GAP * limit;
    let positive_or_small = gaps.iter().all(|&g| g >= -small);
    let decreasing = gaps.windows(2).all(|w| w[1] < w[0]);
    let final_ok = gaps[2].abs() <= small;
    let fmt = |v: &[f64]| v.iter().map(|g| format!("{g:+.4}")).collect::<Vec<_>>().join(", ");
    Ok((
        positive_or_small && decreasing && final_ok,
        format!(
            "limit {limit:.4}, E - limit: [{}]; against the 1D layer tension {:.4}: [{}]",
            fmt(&gaps),
            pot.layer_tension() * region.relative_perimeter,
            fmt(&layer_gaps)
        ),
    ))
}

/// Widened epsilon cap: ε = 0.01 exceeds the default `0.1 √(m/π)` at m = 0.01.
fn containment_caps() -> Caps {
    Caps {
        m_fraction: Caps::default().m_fraction,
        eps_factor: 0.2,
    }
}

fn sublevel_containment() -> Outcome {
    let mesh = disk(0.01)?;
    let pot = make_quartic();
    let (m, eps) = (0.01, 0.01);
    let sigma = compute_sigma(&pot, 1e-12)?;
    let profile = estimate_profile(&mesh, m, BoundaryCondition::Neumann, 256)?;
    let c_m = sublevel_threshold(&mesh, sigma, &profile, BoundaryCondition::Neumann, ThresholdSlack::default());
    let ph = Photographer::new(mesh.clone(), pot, m, eps, containment_caps(), PROFILE_STEP_TOL)?;
    let mut worst: f64 = 0.0;
    for (_, p) in mesh.geometry.sample_boundary(16) {
        worst = worst.max(ph.neumann(p)?.energy_at_emission);
    }
    Ok((worst <= c_m, format!("max emission {worst:.5} vs c_m {c_m:.5}")))
}

fn exact_constant() -> Outcome {
    let mesh = disk(0.05)?;
    let m = 0.5 * mesh.area;
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut v: Vec<f64> = (0..mesh.n_nodes()).map(|_| 0.5 + 0.05 * rng.gen_range(-1.0..1.0)).collect();
    let shift = 0.5 - crate::linalg::dot(&mesh.lumped_mass, &v) / mesh.area;
    v.iter_mut().for_each(|x| *x += shift);
    let u0 = ScalarField::new(mesh.clone(), v, BoundaryCondition::Neumann)?;
    let mut cfg = SolveConfig::new(0.3, m, BoundaryCondition::Neumann);
    cfg.newton_tol = NEWTON_TOL;
    let solver = Solver::new(mesh.clone(), make_quartic(), cfg)?;
    let rec = solver.refine(&u0, "half + noise")?;
    let dev = rec.field.values().iter().map(|x| (x - 0.5).abs()).fold(0.0, f64::max);
    let ok = rec.kkt_residual <= NEWTON_TOL && rec.lambda.abs() <= LAMBDA_TOL && dev <= 1e-8;
    Ok((
        ok,
        format!(
            "{} iterations, residual {:.1e}, lambda {:.1e}, max |u - 1/2| {dev:.1e}",
            rec.newton.iterations, rec.kkt_residual, rec.lambda
        ),
    ))
}

/// Eigenvalues of `M_L^{-1/2} K M_L^{-1/2}`, ascending.
fn neumann_spectrum(mesh: &DomainMesh) -> Vec<f64> {
    let n = mesh.n_nodes();
    let s: Vec<f64> = mesh.lumped_mass.iter().map(|m| 1.0 / m.sqrt()).collect();
    let mut a = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in mesh.stiffness.row(i) {
            a[(i, j)] = s[i] * v * s[j];
        }
    }
    let mut mu: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    mu.sort_by(f64::total_cmp);
    mu
}

fn morse_oracle() -> Outcome {
    let mesh = disk(0.06)?;
    let mu = neumann_spectrum(&mesh);
    let m = 0.5 * mesh.area;
    let u = ScalarField::constant(mesh.clone(), 0.5, BoundaryCondition::Neumann)?;
    let mut ok = true;
    let mut parts = Vec::new();
    let mut indices = Vec::new();
    for eps in [1.0, 0.3, 0.15] {
        let solver = Solver::new(mesh.clone(), make_quartic(), SolveConfig::new(eps, m, BoundaryCondition::Neumann))?;
        let (index, _, _) = solver.morse_index(&u)?;
        let expected = mu[1..].iter().filter(|&&x| x < 1.0 / (eps * eps)).count();
        ok &= index == expected;
        indices.push(index);
        parts.push(format!("eps {eps}: {index} vs {expected}"));
    }
    ok &= indices[0] == 0 && indices[1] >= 1;
    Ok((ok, format!("mu_1 = {:.4}; {}", mu[1], parts.join("; "))))
}

fn collect_flows(label: &str, area: f64, records: &[crate::solver::CriticalPointRecord], flows: &mut Vec<(String, f64, FlowTrace)>) {
    for r in records {
        if let Some(f) = &r.flow {
            flows.push((format!("{label} {}", r.seed_provenance), area, f.clone()));
        }
    }
}

fn neumann_multiplicity(flows: &mut Vec<(String, f64, FlowTrace)>) -> Outcome {
    let sc = Scenario::neumann_annulus();
    let mesh = Arc::new(build_domain(&sc.domain)?);
    let cfg = sc.config(&mesh);
    let rep = multistart(mesh.clone(), make_quartic(), &cfg)?;
    collect_flows("neumann annulus", mesh.area, &rep.records, flows);
    let qualified = rep.n_qualified();
    let target = rep.cat_target;
    let constant = rep.constant.as_ref().map(|r| r.energy);
    let above = constant.is_some_and(|e| e > rep.c_m);
    Ok((
        qualified >= target && above,
        format!(
            "{qualified} qualified low-energy records (target {target}) of {} converged, c_m {:.4}, constant energy {}",
            rep.n_converged,
            rep.c_m,
            constant.map_or("missing".into(), |e| format!("{e:.4}"))
        ),
    ))
}

fn dirichlet_multiplicity(flows: &mut Vec<(String, f64, FlowTrace)>) -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (label, sc) in [("disk", Scenario::dirichlet_disk()), ("annulus", Scenario::dirichlet_annulus())] {
        let start = Instant::now();
        let mesh = Arc::new(build_domain(&sc.domain)?);
        let cfg = sc.config(&mesh);
        let rep = multistart(mesh.clone(), make_quartic(), &cfg)?;
        collect_flows(label, mesh.area, &rep.records, flows);
        let n = rep.n_distinct_low();
        let elapsed = start.elapsed();
        ok &= n >= rep.cat_target && elapsed <= Duration::from_secs(600);
        parts.push(format!(
            "{label}: {n} distinct low-energy (target {}), {} failures, {:.1} s",
            rep.cat_target,
            rep.failures.len(),
            elapsed.as_secs_f64()
        ));
    }
    Ok((ok, parts.join("; ")))
}

fn homotopy_closeness() -> Outcome {
    let pot = make_quartic();
    let mesh = disk(0.01)?;
    let (m, eps) = (0.01, 0.01);
    let ph = Photographer::new(mesh.clone(), pot, m, eps, containment_caps(), PROFILE_STEP_TOL)?;
    let bound_n = CLOSENESS_FRACTION * mesh.diameter();
    let mut worst_n: f64 = 0.0;
    for (_, p) in mesh.geometry.sample_boundary(16) {
        let b = compose_b(&ph.neumann(p)?.field, BoundaryCondition::Neumann, false)?;
        worst_n = worst_n.max(geom::dist(b, p));
    }

    let sc = Scenario::dirichlet_disk();
    let dmesh = Arc::new(build_domain(&sc.domain)?);
    let cfg = sc.config(&dmesh);
    let dph = Photographer::new(dmesh.clone(), pot, cfg.m, cfg.epsilon, cfg.caps, PROFILE_STEP_TOL)?;
    let bound_d = (CLOSENESS_FRACTION * dmesh.diameter()).max(dmesh.delta_m);
    let mut worst_d: f64 = 0.0;
    for p in seed_points(&dmesh, &cfg) {
        let b = compose_b(&dph.dirichlet(p)?.field, BoundaryCondition::Dirichlet, false)?;
        worst_d = worst_d.max(geom::dist(b, p));
    }
    Ok((
        worst_n <= bound_n && worst_d <= bound_d,
        format!("neumann max {worst_n:.4} (bound {bound_n:.3}); dirichlet max {worst_d:.4} (bound {bound_d:.3})"),
    ))
}

/// Relative error of the central difference of `E` along `dir`.
fn fd_errors(f: &AllenCahn, u: &[f64], dir: &[f64], steps: &[f64]) -> Vec<f64> {
    let g = f.gradient_of(u);
    let exact = crate::linalg::dot(&g, dir);
    steps
        .iter()
        .map(|&t| {
            let plus: Vec<f64> = u.iter().zip(dir).map(|(a, b)| a + t * b).collect();
            let minus: Vec<f64> = u.iter().zip(dir).map(|(a, b)| a - t * b).collect();
            let fd = (f.energy_of(&plus) - f.energy_of(&minus)) / (2.0 * t);
            (fd - exact).abs()
        })
        .collect()
}

fn conservation(collected: &[(String, f64, FlowTrace)]) -> Outcome {
    let pot = make_quartic();
    let mesh = disk(0.05)?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let u: Vec<f64> = mesh
        .nodes
        .iter()
        .map(|p| 0.4 + 0.3 * (3.0 * p[0]).sin() * p[1] + 0.05 * rng.gen_range(-1.0..1.0))
        .collect();
    let field = ScalarField::new(mesh.clone(), u.clone(), BoundaryCondition::Neumann)?;
    let mut cfg = SolveConfig::new(0.1, field.mass(), BoundaryCondition::Neumann);
    cfg.flow_max_steps = 500;
    let (_, own) = Solver::new(mesh.clone(), pot, cfg)?.flow(&field)?;

    let mut flows: Vec<(&str, f64, &FlowTrace)> = vec![("own", mesh.area, &own)];
    flows.extend(collected.iter().map(|(l, a, f)| (l.as_str(), *a, f)));
    let mut worst_drift: f64 = 0.0;
    let mut bad = Vec::new();
    for (label, area, f) in &flows {
        let rel = f.max_mass_drift / area;
        worst_drift = worst_drift.max(rel);
        if rel > MASS_DRIFT_TOL || !f.energy_nonincreasing() {
            bad.push(label.to_string());
        }
    }

    let functional = AllenCahn::new(mesh.clone(), pot, 0.1)?;
    let dir: Vec<f64> = (0..mesh.n_nodes()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let errs = fd_errors(&functional, &u, &dir, &[1e-2, 5e-3, 2.5e-3]);
    let orders: Vec<f64> = errs.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let quadratic = orders.iter().all(|&p| p > 1.8);

    let ok = bad.is_empty() && quadratic;
    let mut detail = format!(
        "{} flows, worst drift {worst_drift:.1e} x area, fd orders [{}]",
        flows.len(),
        orders.iter().map(|p| format!("{p:.2}")).collect::<Vec<_>>().join(", ")
    );
    if !bad.is_empty() {
        detail.push_str(&format!(", violations: {}", bad.join(" | ")));
    }
    Ok((ok, detail))
}
