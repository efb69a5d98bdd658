use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use acmc_core::construction::{recovery_sequence, Caps, Photographer};
use acmc_core::energy::{AllenCahn, BoundaryCondition};
use acmc_core::geom;
use acmc_core::geometry_limits::IndicatorRegion;
use acmc_core::mesh::{build_domain, io, DomainMesh, DomainSpec};
use acmc_core::potential::{make_quartic, solve_profile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SAMPLES: usize = 1_000_000;

fn disk(h: f64) -> Arc<DomainMesh> {
    Arc::new(build_domain(&DomainSpec::unit_disk(h)).unwrap())
}

/// Fraction of `n` samples satisfying `hit`, with its standard error.
fn frequency(n: usize, mut hit: impl FnMut() -> bool) -> (f64, f64) {
    let k = (0..n).filter(|_| hit()).count();
    let p = k as f64 / n as f64;
    (p, (p * (1.0 - p) / n as f64).sqrt())
}

#[test]
fn clipped_ball_matches_monte_carlo() {
    let mesh = disk(0.1);
    let geo = &mesh.geometry;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (c, r) in [([0.95, 0.1], 0.3), ([0.0, -1.0], 0.2), ([0.5, 0.5], 0.6)] {
        let clip = geo.clip_ball(c, r);

        let side = 2.0 * r;
        let (p, se) = frequency(SAMPLES, || {
            let x = [c[0] - r + side * rng.gen::<f64>(), c[1] - r + side * rng.gen::<f64>()];
            geom::dist(x, c) < r && geo.contains(x)
        });
        let area = p * side * side;
        assert!((area - clip.area).abs() <= 3.0 * se * side * side + 1e-12, "area {area} vs {}", clip.area);

        let (p, se) = frequency(SAMPLES, || {
            let t = TAU * rng.gen::<f64>();
            geo.contains([c[0] + r * t.cos(), c[1] + r * t.sin()])
        });
        assert!((p * TAU * r - clip.inner_arc).abs() <= 3.0 * se * TAU * r + 1e-12);

        let (p, se) = frequency(SAMPLES, || {
            let t = TAU * rng.gen::<f64>();
            geom::dist([t.cos(), t.sin()], c) < r
        });
        assert!((p * TAU - clip.boundary_inside).abs() <= 3.0 * se * TAU + 1e-12);
    }
}

/// Lipschitz in L². In H¹ the kinks of the clamped profile at both ends of
/// the layer contribute a `√s` term, so only a Hölder modulus is asserted.
#[test]
fn photographs_depend_continuously_on_the_point() {
    let mesh = disk(0.02);
    let (m, eps) = (0.3, 0.15);
    // shifts below the bump radius and the layer width
    let caps = Caps {
        m_fraction: 0.1,
        eps_factor: 1.0,
    };
    let ph = Photographer::new(mesh.clone(), make_quartic(), m, eps, caps, 1e-6).unwrap();
    let base = ph.neumann([1.0, 0.0]).unwrap().field;
    let steps = [0.2f64, 0.1, 0.05];
    let (mut l2, mut h1) = (Vec::new(), Vec::new());
    for s in steps {
        let f = ph.neumann([s.cos(), s.sin()]).unwrap().field;
        l2.push(base.l2_distance(&f));
        h1.push(base.h1_distance(&f));
    }
    let slope = |d: &[f64]| (d[0] / d[2]).ln() / (steps[0] / steps[2]).ln();
    assert!(h1.windows(2).all(|w| w[1] < w[0]), "{h1:?}");
    assert!(slope(&l2) >= 0.9, "L2 slope {}, {l2:?}", slope(&l2));
    assert!(slope(&h1) >= 0.5, "H1 slope {}, {h1:?}", slope(&h1));
}

#[test]
fn recovery_energy_approaches_the_layer_limit() {
    let mesh = disk(0.01);
    let pot = make_quartic();
    let m = 0.05;
    let region = IndicatorRegion::ball_of_volume(&mesh, [1.0, 0.0], m).unwrap();
    let limit = pot.layer_tension() * region.relative_perimeter;
    let profile = solve_profile(&pot, 0.01, 1e-6).unwrap();
    let (u, params) = recovery_sequence(&mesh, &region, &profile, m, BoundaryCondition::Neumann).unwrap();
    assert!(params.delta >= 0.0 && params.delta <= params.eta);
    let e = AllenCahn::new(mesh.clone(), pot, 0.01).unwrap().energy(&u);
    assert!((e - limit).abs() <= 0.1 * limit, "energy {e} vs {limit}");
}

#[test]
fn mesh_file_round_trip_keeps_the_operators() {
    let mesh = build_domain(&DomainSpec::eccentric_annulus(0.4, 1.0, 0.25, 0.1)).unwrap();
    let text = io::write_mesh(&mesh);
    let back = io::read_mesh(&text, mesh.h).unwrap();
    assert_eq!(back.n_nodes(), mesh.n_nodes());
    assert!((back.area - mesh.area).abs() < 1e-12);
    let ones = vec![1.0; mesh.n_nodes()];
    assert!((back.mass.quadratic_form(&ones) - mesh.area).abs() < 1e-10 * mesh.area);
    assert_eq!(back.boundary_loops.len(), 2);
    let x: Vec<f64> = mesh.nodes.iter().map(|p| p[0]).collect();
    assert!((back.stiffness.quadratic_form(&x) - back.area).abs() < 1e-8 * back.area);
}

#[test]
fn annulus_curvature_signs() {
    let mesh = build_domain(&DomainSpec::annulus(0.5, 1.0, 0.05)).unwrap();
    let (lo, hi) = mesh.curvature_range();
    // convex outer circle, concave hole
    assert!((hi - 1.0).abs() < 0.05, "{hi}");
    assert!((lo + 2.0).abs() < 0.1, "{lo}");
    assert!((mesh.area - 0.75 * PI).abs() < 0.01 * 0.75 * PI);
}
