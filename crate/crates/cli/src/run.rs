//! Subcommand execution and artifact writing.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use acmc_core::acceptance;
use acmc_core::construction::{barycenter, boundary_layer, compose_b, recovery_sequence, Photographer};
use acmc_core::energy::{AllenCahn, BoundaryCondition, ScalarField};
use acmc_core::geom::Point;
use acmc_core::geometry_limits::{
    estimate_profile, euclidean_profile, limit_energy, sublevel_threshold, IndicatorRegion,
};
use acmc_core::mesh::DomainMesh;
use acmc_core::potential::{check_assumptions, compute_sigma, solve_profile};
use acmc_core::solver::{multistart, seed_points, CriticalPointRecord, Solver};
use anyhow::Context as _;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ConfigError, ExperimentConfig, Resolved};
use crate::render::{self, Mark};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    Profile,
    Isoperimetric,
    Photograph,
    GammaCheck,
    Solve,
    Multiplicity,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Profile => "profile",
            Command::Isoperimetric => "isoperimetric",
            Command::Photograph => "photograph",
            Command::GammaCheck => "gamma-check",
            Command::Solve => "solve",
            Command::Multiplicity => "multiplicity",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub format: Format,
    /// Acceptance criteria for `check`; empty runs all.
    pub criteria: Vec<usize>,
}

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<anyhow::Error> for RunError {
    fn from(e: anyhow::Error) -> Self {
        RunError::Runtime(e)
    }
}

impl From<acmc_core::Error> for RunError {
    fn from(e: acmc_core::Error) -> Self {
        RunError::Runtime(e.into())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Runtime(e.into())
    }
}

#[derive(Debug)]
pub struct Outcome {
    /// `false` when `check` saw a failed criterion.
    pub passed: bool,
    pub stdout: String,
    pub out_dir: PathBuf,
}

#[derive(Serialize)]
struct RunReport<'a> {
    command: &'static str,
    version: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    config: Option<&'a ExperimentConfig>,
    payload: Value,
}

#[derive(Default)]
struct Timer {
    stages: Vec<(String, f64)>,
}

impl Timer {
    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.stages.push((name.to_string(), start.elapsed().as_secs_f64()));
        out
    }

    fn to_json(&self) -> Value {
        Value::Array(
            self.stages
                .iter()
                .map(|(n, s)| json!({ "stage": n, "seconds": s }))
                .collect(),
        )
    }
}

/// A field to be written as `fields/<name>.{csv,svg}`.
struct FieldOut {
    name: String,
    values: Vec<f64>,
    marks: Vec<Mark>,
}

/// What a subcommand produces before anything is written.
struct Artifacts {
    payload: Value,
    summary: Table,
    fields: Vec<FieldOut>,
    passed: bool,
}

#[derive(Default)]
struct Table {
    header: Vec<&'static str>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }
}

/// Shortest round-trip representation, as in the JSON report.
fn num(x: f64) -> String {
    serde_json::Number::from_f64(x).map_or_else(|| x.to_string(), |n| n.to_string())
}

/// Parses, validates and runs one subcommand, writing every artifact.
pub fn execute(cmd: Command, opts: &Options) -> Result<Outcome, RunError> {
    let mut timer = Timer::default();
    let (config, resolved) = match (&opts.config, cmd) {
        (Some(path), _) => {
            let mut cfg = ExperimentConfig::load(path)?;
            if let Some(seed) = opts.seed {
                cfg.solver.seed = Some(seed);
            }
            let base = path.parent().unwrap_or(Path::new("."));
            let res = cfg.resolve(base)?;
            (Some(cfg), Some(res))
        }
        (None, Command::Check) => (None, None),
        (None, _) => {
            return Err(ConfigError {
                field: None,
                message: format!("`{}` needs --config", cmd.name()),
            }
            .into())
        }
    };

    let out_dir = opts
        .out
        .clone()
        .or_else(|| config.as_ref().and_then(|c| c.output.dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));

    let mut mesh = None;
    let art = match (cmd, &resolved) {
        (Command::Check, _) => check(&opts.criteria, &mut timer),
        (Command::Profile, Some(res)) => profile(res, &mut timer)?,
        (_, Some(res)) => {
            let mesh = mesh.insert(Arc::new(timer.stage("mesh", || res.source.build())?));
            match cmd {
                Command::Isoperimetric => isoperimetric(res, mesh, &mut timer)?,
                Command::Photograph => photograph(res, mesh, &mut timer)?,
                Command::GammaCheck => gamma_check(res, mesh, &mut timer)?,
                Command::Solve => solve(res, mesh, &mut timer)?,
                Command::Multiplicity => multiplicity(res, mesh, &mut timer)?,
                Command::Profile | Command::Check => unreachable!(),
            }
        }
        (_, None) => unreachable!("config is required"),
    };

    std::fs::create_dir_all(&out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let report = RunReport {
        command: cmd.name(),
        version: env!("CARGO_PKG_VERSION"),
        config: config.as_ref(),
        payload: art.payload.clone(),
    };
    let mut text = serde_json::to_string_pretty(&report).context("serializing the report")?;
    text.push('\n');
    std::fs::write(out_dir.join("report.json"), text)?;
    let timing = json!({ "command": cmd.name(), "stages": timer.to_json() });
    std::fs::write(out_dir.join("timing.json"), format!("{}\n", serde_json::to_string_pretty(&timing).unwrap()))?;
    std::fs::write(out_dir.join("summary.csv"), art.summary.to_csv())?;

    let write_fields = resolved.as_ref().is_some_and(|r| r.write_fields);
    if let (true, Some(mesh)) = (write_fields && !art.fields.is_empty(), &mesh) {
        let dir = out_dir.join("fields");
        std::fs::create_dir_all(&dir)?;
        for f in &art.fields {
            std::fs::write(dir.join(format!("{}.csv", f.name)), render::field_csv(mesh, &f.values))?;
            render::render_field_svg(mesh, &f.values, &f.marks, &dir.join(format!("{}.svg", f.name)))?;
        }
    }

    let stdout = match opts.format {
        Format::Json => format!("{}\n", serde_json::to_string_pretty(&art.payload).unwrap()),
        Format::Csv => art.summary.to_csv(),
    };
    Ok(Outcome {
        passed: art.passed,
        stdout,
        out_dir,
    })
}

fn check(ids: &[usize], timer: &mut Timer) -> Artifacts {
    let ids: Vec<usize> = if ids.is_empty() {
        acceptance::CRITERIA.iter().map(|c| c.0).collect()
    } else {
        ids.to_vec()
    };
    let results = timer.stage("acceptance", || acceptance::run(&ids));
    let mut summary = Table::new(&["id", "name", "passed", "detail"]);
    for r in &results {
        summary.push(vec![
            r.id.to_string(),
            r.name.to_string(),
            r.passed.to_string(),
            format!("\"{}\"", r.detail.replace('"', "'")),
        ]);
    }
    let lines: Vec<String> = results.iter().map(|r| r.line()).collect();
    // elapsed times stay out of the report
    let verdicts: Vec<Value> = results
        .iter()
        .map(|r| json!({ "id": r.id, "name": r.name, "passed": r.passed, "detail": r.detail }))
        .collect();
    let passed = results.iter().all(|r| r.passed);
    for l in &lines {
        eprintln!("{l}");
    }
    Artifacts {
        payload: json!({ "criteria": verdicts, "passed": passed }),
        summary,
        fields: Vec::new(),
        passed,
    }
}

fn profile(res: &Resolved, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let pot = res.potential;
    let sigma = compute_sigma(&pot, 1e-13)?;
    let assumptions = check_assumptions(&pot);
    let mut rows = Vec::new();
    let mut summary = Table::new(&["epsilon", "eta", "sigma"]);
    let mut tables = Vec::new();
    for &eps in &res.epsilons {
        let table = timer.stage(&format!("profile eps={eps}"), || solve_profile(&pot, eps, res.solve.profile_step_tol))?;
        summary.push(vec![num(eps), num(table.eta), num(sigma)]);
        rows.push(json!({
            "epsilon": eps,
            "eta": table.eta,
            "layer_mass": table.layer_mass(),
            "n_points": table.len(),
        }));
        tables.push(table.to_csv());
    }
    Ok(Artifacts {
        payload: json!({
            "potential": pot,
            "sigma": sigma,
            "layer_tension": pot.layer_tension(),
            "assumptions": assumptions,
            "profiles": rows,
            "tables": tables,
        }),
        summary,
        fields: Vec::new(),
        passed: true,
    })
}

fn isoperimetric(res: &Resolved, mesh: &Arc<DomainMesh>, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let mut summary = Table::new(&["m", "I_M", "I_bar_M", "best_cx", "best_cy", "euclid_half", "euclid_full"]);
    let mut rows = Vec::new();
    for &m in &res.masses {
        let est = timer.stage(&format!("profile m={m}"), || {
            estimate_profile(mesh, m, res.solve.bc, res.solve.profile_centers)
        })?;
        let (half, full) = (euclidean_profile(m, true), euclidean_profile(m, false));
        summary.push(vec![
            num(m),
            num(est.i_m),
            num(est.i_bar_m),
            num(est.best_center[0]),
            num(est.best_center[1]),
            num(half),
            num(full),
        ]);
        rows.push(json!({
            "estimate": est,
            "euclid_half": half,
            "euclid_full": full,
            "ratio_half": est.i_m / half,
            "ratio_full": est.i_bar_m / full,
        }));
    }
    Ok(Artifacts {
        payload: json!({ "mode": res.solve.bc, "rows": rows }),
        summary,
        fields: Vec::new(),
        passed: true,
    })
}

fn threshold(res: &Resolved, mesh: &DomainMesh) -> Result<f64, RunError> {
    let cfg = &res.solve;
    let est = estimate_profile(mesh, cfg.m, cfg.bc, cfg.profile_centers)?;
    Ok(sublevel_threshold(mesh, res.potential.sigma, &est, cfg.bc, cfg.slack()))
}

/// Configured points, or the multistart seed points.
fn points(res: &Resolved, mesh: &DomainMesh) -> Vec<Point> {
    match &res.points {
        Some(p) => p.clone(),
        None => seed_points(mesh, &res.solve),
    }
}

fn marks_for(u: &ScalarField, bc: BoundaryCondition) -> Vec<Mark> {
    let mut marks = Vec::new();
    if let Ok(b) = barycenter(u) {
        marks.push(Mark {
            point: b,
            color: "red",
            label: "barycenter",
        });
    }
    if let Ok(p) = compose_b(u, bc, false) {
        marks.push(Mark {
            point: p,
            color: "white",
            label: "projected point",
        });
    }
    marks
}

fn photograph(res: &Resolved, mesh: &Arc<DomainMesh>, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let cfg = &res.solve;
    let ph = timer.stage("profile table", || {
        Photographer::new(mesh.clone(), res.potential, cfg.m, cfg.epsilon, cfg.caps, cfg.profile_step_tol)
    })?;
    let c_m = timer.stage("threshold", || threshold(res, mesh))?;
    let mut summary = Table::new(&["index", "px", "py", "energy", "c_m", "below"]);
    let mut rows = Vec::new();
    let mut fields = Vec::new();
    let pts = points(res, mesh);
    let outputs = timer.stage("photographs", || {
        pts.iter().map(|&p| ph.photograph(p, cfg.bc)).collect::<Result<Vec<_>, _>>()
    })?;
    for (k, (p, out)) in pts.iter().zip(outputs).enumerate() {
        let e = out.energy_at_emission;
        summary.push(vec![k.to_string(), num(p[0]), num(p[1]), num(e), num(c_m), (e <= c_m).to_string()]);
        rows.push(json!({
            "point": p,
            "source_point": out.source_point,
            "energy_at_emission": e,
            "below_threshold": e <= c_m,
            "mass": out.field.mass(),
            "params": out.params,
            "barycenter": barycenter(&out.field).ok(),
            "projected_point": compose_b(&out.field, cfg.bc, false).ok(),
        }));
        fields.push(FieldOut {
            name: format!("photograph_{k:03}"),
            marks: marks_for(&out.field, cfg.bc),
            values: out.field.into_values(),
        });
    }
    Ok(Artifacts {
        payload: json!({
            "mode": cfg.bc,
            "m": cfg.m,
            "epsilon": cfg.epsilon,
            "eta": ph.profile.eta,
            "c_m": c_m,
            "photographs": rows,
        }),
        summary,
        fields,
        passed: true,
    })
}

fn gamma_check(res: &Resolved, mesh: &Arc<DomainMesh>, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let cfg = &res.solve;
    let pot = res.potential;
    let p = match &res.points {
        Some(p) if !p.is_empty() => p[0],
        _ => mesh.geometry.sample_boundary(1)[0].1,
    };
    let region = match cfg.bc {
        BoundaryCondition::Neumann => IndicatorRegion::ball_of_volume(mesh, p, cfg.m)?,
        BoundaryCondition::Dirichlet => {
            IndicatorRegion::ball(mesh, boundary_layer(mesh, p)?, (cfg.m / std::f64::consts::PI).sqrt())?
        }
    };
    let limit = limit_energy(&region, pot.sigma, cfg.bc);
    let layer_limit = limit_energy(&region, pot.layer_tension(), cfg.bc);
    let mut summary = Table::new(&["epsilon", "energy", "sigma_perimeter", "layer_limit", "gap"]);
    let mut rows = Vec::new();
    for &eps in &res.epsilons {
        let (u, params) = timer.stage(&format!("recovery eps={eps}"), || -> acmc_core::Result<_> {
            let table = solve_profile(&pot, eps, cfg.profile_step_tol)?;
            recovery_sequence(mesh, &region, &table, cfg.m, cfg.bc)
        })?;
        let e = AllenCahn::new(mesh.clone(), pot, eps)?.energy(&u);
        summary.push(vec![num(eps), num(e), num(limit), num(layer_limit), num(e - limit)]);
        rows.push(json!({ "epsilon": eps, "energy": e, "gap": e - limit, "layer_gap": e - layer_limit, "params": params }));
    }
    Ok(Artifacts {
        payload: json!({
            "mode": cfg.bc,
            "m": cfg.m,
            "center": p,
            "relative_perimeter": region.relative_perimeter,
            "full_perimeter": region.full_perimeter,
            "sigma_perimeter": limit,
            "layer_limit": layer_limit,
            "sweep": rows,
        }),
        summary,
        fields: Vec::new(),
        passed: true,
    })
}

fn record_row(k: usize, r: &CriticalPointRecord) -> Vec<String> {
    vec![
        k.to_string(),
        num(r.energy),
        num(r.lambda),
        num(r.kkt_residual),
        r.morse_index.to_string(),
        num(r.gap),
        r.nondegenerate.to_string(),
        r.concentrated.to_string(),
        num(r.barycenter[0]),
        num(r.barycenter[1]),
        num(r.projected_point[0]),
        num(r.projected_point[1]),
        format!("\"{}\"", r.seed_provenance),
    ]
}

const RECORD_HEADER: [&str; 13] = [
    "index",
    "energy",
    "lambda",
    "kkt_residual",
    "morse_index",
    "gap",
    "nondegenerate",
    "concentrated",
    "bx",
    "by",
    "px",
    "py",
    "seed",
];

fn record_field(name: String, r: &CriticalPointRecord, bc: BoundaryCondition) -> FieldOut {
    let mut marks = marks_for(&r.field, bc);
    marks.retain(|m| m.label == "barycenter");
    marks.push(Mark {
        point: r.projected_point,
        color: "white",
        label: "projected point",
    });
    FieldOut {
        name,
        values: r.field.values().to_vec(),
        marks,
    }
}

fn solve(res: &Resolved, mesh: &Arc<DomainMesh>, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let cfg = &res.solve;
    let ph = Photographer::new(mesh.clone(), res.potential, cfg.m, cfg.epsilon, cfg.caps, cfg.profile_step_tol)?;
    let solver = Solver::new(mesh.clone(), res.potential, cfg.clone())?;
    let pts = match &res.points {
        Some(p) => p.clone(),
        None => points(res, mesh).into_iter().take(1).collect(),
    };
    let mut records = Vec::new();
    let mut summary = Table::new(&RECORD_HEADER);
    let mut fields = Vec::new();
    for (k, &p) in pts.iter().enumerate() {
        let rec = timer.stage(&format!("seed {k}"), || -> acmc_core::Result<_> {
            let seed = ph.photograph(p, cfg.bc)?;
            solver.solve_from(&seed.field, &format!("point[{k}] ({:.6}, {:.6})", p[0], p[1]))
        })?;
        summary.push(record_row(k, &rec));
        fields.push(record_field(format!("solve_{k:03}"), &rec, cfg.bc));
        records.push(rec);
    }
    Ok(Artifacts {
        payload: json!({ "mode": cfg.bc, "m": cfg.m, "epsilon": cfg.epsilon, "records": records }),
        summary,
        fields,
        passed: true,
    })
}

fn multiplicity(res: &Resolved, mesh: &Arc<DomainMesh>, timer: &mut Timer) -> Result<Artifacts, RunError> {
    let cfg = &res.solve;
    let rep = timer.stage("multistart", || multistart(mesh.clone(), res.potential, cfg))?;
    let n_distinct = rep.n_distinct_low();
    let n_qualified = rep.n_qualified();
    let passed = n_distinct >= rep.cat_target;
    let mut summary = Table::new(&RECORD_HEADER);
    let mut fields = Vec::new();
    for (k, r) in rep.records.iter().enumerate() {
        summary.push(record_row(k, r));
        fields.push(record_field(format!("record_{k:03}"), r, cfg.bc));
    }
    Ok(Artifacts {
        payload: json!({
            "mode": cfg.bc,
            "m": cfg.m,
            "epsilon": cfg.epsilon,
            "report": rep,
            "summary": {
                "n_distinct": n_distinct,
                "n_qualified": n_qualified,
                "c_m": rep.c_m,
                "cat_target": rep.cat_target,
                "passed": passed,
            },
        }),
        summary,
        fields,
        passed: true,
    })
}
