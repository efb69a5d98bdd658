use std::sync::Arc;

use acmc_core::construction::{Caps, Photographer};
use acmc_core::energy::{BoundaryCondition, ScalarField};
use acmc_core::error::Error;
use acmc_core::geom;
use acmc_core::geometry_limits::{estimate_profile, sublevel_threshold, ThresholdSlack};
use acmc_core::mesh::{build_domain, DomainMesh, DomainSpec};
use acmc_core::potential::make_quartic;
use acmc_core::solver::{
    concentration_check, dedup, field_concentrated, multistart, CriticalPointRecord, SolveConfig, Solver,
};

fn mesh(spec: DomainSpec) -> Arc<DomainMesh> {
    Arc::new(build_domain(&spec).unwrap())
}

fn disk_setup(h: f64, m: f64) -> (Arc<DomainMesh>, SolveConfig, Photographer, Solver) {
    let mesh = mesh(DomainSpec::unit_disk(h));
    let eps = Caps::default().epsilon_cap(m);
    let cfg = SolveConfig::new(eps, m, BoundaryCondition::Neumann);
    let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, cfg.caps, cfg.profile_step_tol).unwrap();
    let solver = Solver::new(mesh.clone(), make_quartic(), cfg.clone()).unwrap();
    (mesh, cfg, ph, solver)
}

fn assert_contract(rec: &CriticalPointRecord, cfg: &SolveConfig, area: f64) {
    assert!(rec.kkt_residual <= cfg.newton_tol, "residual {:e}", rec.kkt_residual);
    assert!(rec.mass_error.abs() <= 1e-10 * area, "mass error {:e}", rec.mass_error);
    assert!(rec.energy >= 0.0);
}

#[test]
fn antipodal_bumps_stay_distinct() {
    let (mesh, cfg, ph, solver) = disk_setup(0.02, 0.01);
    let recs: Vec<CriticalPointRecord> = [[1.0, 0.0], [-1.0, 0.0]]
        .iter()
        .map(|&p| solver.solve_from(&ph.neumann(p).unwrap().field, "antipodal").unwrap())
        .collect();
    for r in &recs {
        assert_contract(r, &cfg, mesh.area);
        assert!(r.concentrated);
        if r.nondegenerate {
            assert_eq!(r.morse_index, 0);
        }
    }
    let profile = estimate_profile(&mesh, cfg.m, cfg.bc, cfg.profile_centers).unwrap();
    let c_m = sublevel_threshold(&mesh, make_quartic().sigma, &profile, cfg.bc, ThresholdSlack::default());
    let tol = cfg.dedup_tolerances(c_m);
    assert_eq!(dedup(recs.clone(), tol).len(), 2);
    assert_eq!(dedup(vec![recs[0].clone(), recs[0].clone()], tol).len(), 1);
    assert!(dedup(Vec::new(), tol).is_empty());
    // flow only lowers the emission energy, which is already below c_m
    assert!(recs.iter().all(|r| r.energy <= c_m));
}

#[test]
fn concentration_examples() {
    let (mesh, cfg, ph, _) = disk_setup(0.03, 0.01);
    let p = [0.0, 1.0];
    let out = ph.neumann(p).unwrap();
    assert!(field_concentrated(&out.field, p, cfg.m, 3.0, 0.1));
    let flat = ScalarField::constant(mesh.clone(), cfg.m / mesh.area, BoundaryCondition::Neumann).unwrap();
    assert!(!field_concentrated(&flat, p, cfg.m, 3.0, 0.1));
    assert!(field_concentrated(&flat, p, cfg.m, 3.0, 1.0));
}

#[test]
fn dirichlet_records_keep_zero_trace() {
    let mesh = mesh(DomainSpec::unit_disk(0.03));
    let m = 0.005 * mesh.area;
    let mut cfg = SolveConfig::new(Caps::default().epsilon_cap(m), m, BoundaryCondition::Dirichlet);
    cfg.n_seeds = 4;
    let rep = multistart(mesh.clone(), make_quartic(), &cfg).unwrap();
    assert!(rep.n_distinct_low() >= 1);
    assert!(rep.constant.is_none());
    for r in &rep.records {
        assert_contract(r, &cfg, mesh.area);
        for lp in &mesh.boundary_loops {
            assert!(lp.iter().all(|&i| r.field.values()[i] == 0.0));
        }
        assert!(concentration_check(r, &cfg));
    }
}

#[test]
fn multistart_is_deterministic() {
    let mesh = mesh(DomainSpec::eccentric_annulus(0.4, 1.0, 0.25, 0.05));
    let m = 0.01 * mesh.area;
    let mut cfg = SolveConfig::new(Caps::default().epsilon_cap(m), m, BoundaryCondition::Neumann);
    cfg.n_seeds = 6;
    let a = multistart(mesh.clone(), make_quartic(), &cfg).unwrap();
    let b = multistart(mesh.clone(), make_quartic(), &cfg).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!(x.field.values(), y.field.values());
    }
}

#[test]
fn seeds_reach_every_boundary_loop() {
    let mesh = mesh(DomainSpec::eccentric_annulus(0.4, 1.0, 0.25, 0.05));
    let m = 0.01 * mesh.area;
    let mut cfg = SolveConfig::new(Caps::default().epsilon_cap(m), m, BoundaryCondition::Neumann);
    cfg.n_seeds = 8;
    let rep = multistart(mesh.clone(), make_quartic(), &cfg).unwrap();
    assert_eq!(rep.cat_target, 4);
    let near = |r: &CriticalPointRecord, c: [f64; 2], radius: f64| (geom::dist(r.projected_point, c) - radius).abs() < 0.05;
    assert!(rep.low_energy().any(|r| near(r, [0.0, 0.0], 1.0)));
    assert!(rep.low_energy().any(|r| near(r, [0.25, 0.0], 0.4)));
    let constant = rep.constant.expect("constant seed converges");
    assert!(constant.field.values().iter().all(|&v| (v - m / mesh.area).abs() < 1e-10));
}

/// The rotational family of boundary bumps on a concentric annulus leaves a
/// soft mode once the layer is resolved: either the refinement fails or the
/// record is flagged as degenerate.
#[test]
fn concentric_annulus_is_degenerate() {
    let mesh = mesh(DomainSpec::annulus(0.5, 1.0, 0.02));
    let m = 0.08 * mesh.area;
    let eps = 0.04;
    let caps = Caps {
        m_fraction: 0.5,
        eps_factor: 10.0,
    };
    let mut cfg = SolveConfig::new(eps, m, BoundaryCondition::Neumann);
    cfg.caps = caps;
    let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, caps, cfg.profile_step_tol).unwrap();
    let solver = Solver::new(mesh.clone(), make_quartic(), cfg).unwrap();
    let out = ph.neumann([1.0, 0.0]).unwrap();
    match solver.solve_from(&out.field, "outer") {
        Ok(rec) => {
            assert!(!rec.nondegenerate, "gap {}", rec.gap);
            assert!(rec.gap * eps < 1e-2);
        }
        Err(e) => assert!(matches!(e, Error::SingularKkt { .. } | Error::DidNotConverge { .. }), "{e}"),
    }
}
