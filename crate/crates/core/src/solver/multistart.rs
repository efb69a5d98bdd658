use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::{CriticalPointRecord, SolveConfig, Solver};
use crate::construction::Photographer;
use crate::energy::{BoundaryCondition, ScalarField};
use crate::error::{Error, Result};
use crate::geom::{self, Point};
use crate::geometry_limits::{estimate_profile, sublevel_threshold, ProfileEstimate};
use crate::mesh::DomainMesh;
use crate::potential::{compute_sigma, PotentialSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DedupTolerances {
    pub l2: f64,
    pub energy: f64,
    pub barycenter: f64,
}

impl SolveConfig {
    pub fn dedup_tolerances(&self, c_m: f64) -> DedupTolerances {
        let sm = self.m.sqrt();
        DedupTolerances {
            l2: self.dedup_l2_tol.unwrap_or(0.2 * sm),
            energy: self.dedup_energy_tol.unwrap_or(0.05 * c_m),
            barycenter: self.dedup_barycenter_tol.unwrap_or(0.5 * sm),
        }
    }
}

/// Greedy clustering of records sorted by energy. A record joins the first
/// cluster whose representative is within all three tolerances; the
/// representative is the member with the smallest KKT residual.
pub fn dedup(mut records: Vec<CriticalPointRecord>, tol: DedupTolerances) -> Vec<CriticalPointRecord> {
    records.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    let mut reps: Vec<CriticalPointRecord> = Vec::new();
    for rec in records {
        let hit = reps.iter().position(|r| {
            r.field.l2_distance(&rec.field) <= tol.l2
                && (r.energy - rec.energy).abs() <= tol.energy
                && geom::dist(r.barycenter, rec.barycenter) <= tol.barycenter
        });
        match hit {
            Some(k) => {
                if rec.kkt_residual < reps[k].kkt_residual {
                    reps[k] = rec;
                }
            }
            None => reps.push(rec),
        }
    }
    reps
}

/// `∫_{M∖B(p, μ̂√m)} |u| ≤ α m`
pub fn field_concentrated(u: &ScalarField, p: Point, m: f64, mu_hat: f64, alpha: f64) -> bool {
    let r = mu_hat * m.sqrt();
    let mesh = u.mesh();
    let outside: f64 = mesh
        .nodes
        .iter()
        .zip(&mesh.lumped_mass)
        .zip(u.values())
        .filter(|((x, _), _)| geom::dist(**x, p) > r)
        .map(|((_, w), v)| w * v.abs())
        .sum();
    outside <= alpha * m
}

/// Concentration of a record around its projected barycenter.
pub fn concentration_check(rec: &CriticalPointRecord, cfg: &SolveConfig) -> bool {
    field_concentrated(&rec.field, rec.projected_point, cfg.m, cfg.mu_hat, cfg.alpha)
}

/// Lusternik-Schnirelmann category bound for the multiplicity experiment:
/// `cat(∂M)` (two per boundary circle) or `cat(M)` (1 for a disk-like
/// domain, 2 with holes).
pub fn category_target(mesh: &DomainMesh, bc: BoundaryCondition) -> usize {
    let loops = mesh.boundary_loops.len();
    match bc {
        BoundaryCondition::Neumann => 2 * loops,
        BoundaryCondition::Dirichlet => {
            if loops > 1 {
                2
            } else {
                1
            }
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedFailure {
    pub seed_provenance: String,
    pub error: String,
    /// Newton stopped on a singular KKT matrix.
    pub degenerate: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultistartReport {
    pub sigma: f64,
    pub c_m: f64,
    pub profile: ProfileEstimate,
    pub cat_target: usize,
    /// Emission energy of every photograph seed, in seed order.
    pub emission_energies: Vec<f64>,
    /// Deduplicated records sorted by energy.
    pub records: Vec<CriticalPointRecord>,
    /// The record reached from the constant seed (Neumann only).
    pub constant: Option<CriticalPointRecord>,
    pub n_converged: usize,
    pub failures: Vec<SeedFailure>,
}

impl MultistartReport {
    /// Distinct records with energy at most `c_m`.
    pub fn low_energy(&self) -> impl Iterator<Item = &CriticalPointRecord> {
        self.records.iter().filter(move |r| r.energy <= self.c_m)
    }

    pub fn n_distinct_low(&self) -> usize {
        self.low_energy().count()
    }

    /// Low-energy records that are stable minimizers and concentrated.
    pub fn n_qualified(&self) -> usize {
        self.low_energy()
            .filter(|r| r.morse_index == 0 && r.concentrated)
            .count()
    }
}

/// Seed points: boundary samples (Neumann) or uniform interior samples
/// drawn with the configured seed (Dirichlet).
pub fn seed_points(mesh: &DomainMesh, cfg: &SolveConfig) -> Vec<Point> {
    match cfg.bc {
        BoundaryCondition::Neumann => mesh
            .geometry
            .sample_boundary(cfg.n_seeds)
            .into_iter()
            .map(|(_, p)| p)
            .collect(),
        BoundaryCondition::Dirichlet => {
            let all: Vec<Point> = mesh.nodes.clone();
            let (lo, hi) = crate::mesh::bounding_box(&all);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut out = Vec::with_capacity(cfg.n_seeds);
            while out.len() < cfg.n_seeds {
                let p = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
                if mesh.contains(p) {
                    out.push(p);
                }
            }
            out
        }
    }
}

/// Photography seeds (plus the constant seed for Neumann) flowed, refined,
/// analysed and deduplicated.
pub fn multistart(mesh: Arc<DomainMesh>, pot: PotentialSpec, cfg: &SolveConfig) -> Result<MultistartReport> {
    let solver = Solver::new(mesh.clone(), pot, cfg.clone())?;
    let photographer = Photographer::new(mesh.clone(), pot, cfg.m, cfg.epsilon, cfg.caps, cfg.profile_step_tol)?;
    let sigma = compute_sigma(&pot, 1e-10)?;
    let profile = estimate_profile(&mesh, cfg.m, cfg.bc, cfg.profile_centers)?;
    let c_m = sublevel_threshold(&mesh, sigma, &profile, cfg.bc, cfg.slack());

    let seeds = seed_points(&mesh, cfg);
    let tag = match cfg.bc {
        BoundaryCondition::Neumann => "boundary",
        BoundaryCondition::Dirichlet => "interior",
    };
    let outcomes: Vec<(String, Option<f64>, Result<CriticalPointRecord>)> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &p)| {
            let prov = format!("{tag}[{k}] ({:.6}, {:.6})", p[0], p[1]);
            match photographer.photograph(p, cfg.bc) {
                Ok(ph) => {
                    let e = ph.energy_at_emission;
                    (prov.clone(), Some(e), solver.solve_from(&ph.field, &prov))
                }
                Err(e) => (prov, None, Err(e)),
            }
        })
        .collect();

    let constant = match cfg.bc {
        BoundaryCondition::Neumann => {
            let u0 = ScalarField::constant(mesh.clone(), cfg.m / mesh.area, BoundaryCondition::Neumann)?;
            Some(solver.solve_from(&u0, "constant"))
        }
        BoundaryCondition::Dirichlet => None,
    };

    let mut emission_energies = Vec::new();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (prov, e, res) in outcomes {
        if let Some(e) = e {
            emission_energies.push(e);
        }
        match res {
            Ok(r) => records.push(r),
            Err(err) => failures.push(SeedFailure {
                seed_provenance: prov,
                degenerate: matches!(err, Error::SingularKkt { .. }),
                error: err.to_string(),
            }),
        }
    }
    let constant = match constant {
        Some(Ok(r)) => {
            records.push(r.clone());
            Some(r)
        }
        Some(Err(err)) => {
            failures.push(SeedFailure {
                seed_provenance: "constant".into(),
                degenerate: matches!(err, Error::SingularKkt { .. }),
                error: err.to_string(),
            });
            None
        }
        None => None,
    };
    let n_converged = records.len();
    let records = dedup(records, cfg.dedup_tolerances(c_m));
    Ok(MultistartReport {
        sigma,
        c_m,
        profile,
        cat_target: category_target(&mesh, cfg.bc),
        emission_energies,
        records,
        constant,
        n_converged,
        failures,
    })
}
