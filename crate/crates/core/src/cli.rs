//! Command dispatch: each command turns a validated [`RunConfig`] into a JSON report and CSV artifacts.

use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};

use crate::acceptance::{run_all, AcceptanceOptions};
use crate::config::{FamilyKind, RunConfig};
use crate::error::{Error, Result};
use crate::measure::tower_measure;
use crate::oracle::{birkhoff_average, ulam_matrix};
use crate::profile::{Profile, Smooth};
use crate::recurrence::{analyze_map, critical_orbit, AnalyzeOptions};
use crate::response::{goodlemma_check, response_fd, response_oracle_conjugation, response_parts, ruelle_from_parts, susceptibility_partial};
use crate::tce::{alpha_resummed, horizontality_defect, horizontalize, tce_residual};
use crate::tower::{auto_params, build_tower, Tower};
use crate::transfer::{fixed_point, integrate_nu, make_context, FixedPoint, OperatorContext, TransferOptions};
use crate::unimodal::{family_velocity, DeformationFamily, DeformationKind};

pub const COMMANDS: [&str; 9] =
    ["analyze-map", "build-tower", "alpha", "horizontality", "density", "response", "validate", "oracle", "susceptibility"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    AnalyzeMap,
    BuildTower,
    Alpha,
    Horizontality,
    Density,
    Response,
    Validate,
    OracleDensity,
    OracleAverage,
    Susceptibility,
}

impl Command {
    /// Resolves a command name; `oracle` needs `density` or `average` as its mode.
    pub fn parse(name: &str, mode: Option<&str>) -> Option<Command> {
        Some(match (name, mode) {
            ("analyze-map", None) => Command::AnalyzeMap,
            ("build-tower", None) => Command::BuildTower,
            ("alpha", None) => Command::Alpha,
            ("horizontality", None) => Command::Horizontality,
            ("density", None) => Command::Density,
            ("response", None) => Command::Response,
            ("validate", None) => Command::Validate,
            ("oracle", Some("density")) => Command::OracleDensity,
            ("oracle", Some("average")) => Command::OracleAverage,
            ("susceptibility", None) => Command::Susceptibility,
            _ => return None,
        })
    }
}

/// A finished run. `passed` is false when a validation check failed.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: Value,
    pub csv: Vec<(String, String)>,
    pub passed: bool,
}

impl Outcome {
    fn ok(report: Value) -> Self {
        Outcome { report, csv: Vec::new(), passed: true }
    }

    fn with_csv(mut self, name: &str, body: String) -> Self {
        self.csv.push((name.into(), body));
        self
    }
}

/// Exit code for a library error: 2 for numerical failures, 1 otherwise.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Convergence(_) | Error::Insufficient(_) | Error::Degenerate(_) | Error::NotMonotone(_) => 2,
        _ => 1,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::OutOfRange(_) => "out_of_range",
        Error::Boundary(_) => "boundary",
        Error::NotMonotone(_) => "not_monotone",
        Error::Domain(_) => "domain",
        Error::Degenerate(_) => "degenerate",
        Error::Tower(_) => "tower",
        Error::Convergence(_) => "convergence",
        Error::Insufficient(_) => "insufficient",
        Error::Config(_) => "config",
    }
}

fn csv_table<R: Serialize>(header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    let io = |e: csv::Error| Error::Config(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Config(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializable report")
}

pub fn tower_for(cfg: &RunConfig) -> Result<Tower> {
    let map = cfg.map();
    let orbit = critical_orbit(&map, cfg.tower.horizon.max(cfg.operator.m + 10));
    let params = match cfg.explicit_tower_params() {
        Some(p) => p,
        None => auto_params(&map, &orbit, cfg.tower.h0, cfg.operator.m + 2, cfg.tower.levels)?,
    };
    build_tower(&map, &orbit, params)
}

pub fn context_for(cfg: &RunConfig) -> Result<OperatorContext> {
    let o = &cfg.operator;
    make_context(&tower_for(cfg)?, TransferOptions { lambda: o.lambda, m: o.m, grid0: o.grid0, quad_order: o.quad_order })
}

fn solve(cfg: &RunConfig) -> Result<(OperatorContext, FixedPoint)> {
    let ctx = context_for(cfg)?;
    let fp = fixed_point(&ctx, cfg.operator.tol, cfg.operator.max_iter)?;
    Ok((ctx, fp))
}

fn family_for(cfg: &RunConfig) -> Result<DeformationFamily> {
    cfg.family()?.ok_or_else(|| Error::Config("this command needs family.kind = additive or conjugation".into()))
}

fn additive_x(family: &DeformationFamily) -> Result<&Profile> {
    match &family.kind {
        DeformationKind::Additive { x } => Ok(x),
        DeformationKind::Conjugation { .. } => Err(Error::Config("this command needs family.kind = additive".into())),
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Outcome> {
    match command {
        Command::AnalyzeMap => analyze(cfg),
        Command::BuildTower => tower_cmd(cfg),
        Command::Alpha => alpha_cmd(cfg),
        Command::Horizontality => horizontality_cmd(cfg),
        Command::Density => density_cmd(cfg),
        Command::Response => response_cmd(cfg),
        Command::Validate => validate_cmd(cfg),
        Command::OracleDensity => oracle_density(cfg),
        Command::OracleAverage => oracle_average(cfg),
        Command::Susceptibility => susceptibility_cmd(cfg),
    }
}

fn analyze(cfg: &RunConfig) -> Result<Outcome> {
    let map = cfg.map();
    let opts = AnalyzeOptions { horizon: cfg.tower.horizon, h0: Some(cfg.tower.h0), ..AnalyzeOptions::default() };
    let report = analyze_map(&map, &opts)?;
    let orbit = critical_orbit(&map, cfg.tower.horizon);
    let rows = (0..=orbit.n).map(|k| (k, orbit.c[k], orbit.log_d[k]));
    let csv = csv_table(&["k", "c_k", "log_abs_derivative"], rows)?;
    Ok(Outcome::ok(to_value(&report)).with_csv("critical_orbit.csv", csv))
}

fn tower_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let t = tower_for(cfg)?;
    let m = t.m_max();
    let levels = (1..=m).map(|k| (k, t.c[k], t.b[k].0, t.b[k].1, t.d_plus.get(k).copied(), t.d_minus.get(k).copied()));
    let levels = csv_table(&["k", "c_k", "b_lo", "b_hi", "d_plus", "d_minus"], levels)?;
    let falls = t.all_fall_intervals();
    let rows = falls.iter().map(|f| (f.j, f.plus.map(|p| p.0), f.plus.map(|p| p.1), f.minus.map(|p| p.0), f.minus.map(|p| p.1)));
    let falls_csv = csv_table(&["j", "plus_lo", "plus_hi", "minus_lo", "minus_hi"], rows)?;
    let report = json!({ "tower": to_value(&t), "fall_intervals": to_value(&falls) });
    Ok(Outcome::ok(report).with_csv("levels.csv", levels).with_csv("fall_intervals.csv", falls_csv))
}

fn alpha_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let family = family_for(cfg)?;
    let map = cfg.map();
    let orbit = critical_orbit(&map, cfg.tower.horizon);
    let params = match cfg.explicit_tower_params() {
        Some(p) => crate::tower::TowerParams { m_max: cfg.alpha_horizon.min(orbit.n - 1), ..p },
        None => auto_params(&map, &orbit, cfg.tower.h0, cfg.alpha_horizon.min(orbit.n - 1).min(150), cfg.tower.levels)?,
    };
    let tower = build_tower(&map, &orbit, params)?;
    let v = |y: f64| family_velocity(&family, 0.0, y);
    let defect = horizontality_defect(&map, &v, 400)?;
    let mut rows = Vec::new();
    for &x in &cfg.alpha_points {
        let a = alpha_resummed(&tower, &v, x, cfg.alpha_horizon)?;
        rows.push((x, a.value, a.tail_bound, a.n_groups, to_value(&a.mode).as_str().unwrap_or("").to_string(), a.converged));
    }
    let alpha = |x: f64| alpha_resummed(&tower, &v, x, cfg.alpha_horizon).map(|a| a.value).unwrap_or(f64::NAN);
    let residual = tce_residual(&map, &v, &alpha, 1000);
    let csv = csv_table(&["x", "alpha", "tail_bound", "groups", "mode", "converged"], rows)?;
    Ok(Outcome::ok(json!({ "horizontality": to_value(&defect), "tce_residual": residual })).with_csv("alpha.csv", csv))
}

fn horizontality_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let map = cfg.map();
    let x = &cfg.family.profile;
    let v = |y: f64| x.value(map.eval(y));
    let before = horizontality_defect(&map, &v, 400)?;
    let corrected = horizontalize(&map, x, &cfg.family.corrector, 400)?;
    Ok(Outcome::ok(json!({ "raw": to_value(&before), "horizontalized": to_value(&corrected) })))
}

fn density_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let (ctx, fp) = solve(cfg)?;
    let n = cfg.density_points;
    let rows: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let x = -1.0 + 2.0 * (i as f64 + 0.5) / n as f64;
            (x, fp.density(&ctx, x))
        })
        .collect();
    let report = json!({
        "kappa": fp.kappa,
        "gap": fp.gap,
        "iterations": fp.iterations,
        "clipped": fp.clipped,
        "residual": fp.residual,
        "mass": integrate_nu(&ctx, &fp.phi),
        "lambda": ctx.lambda,
        "diagnostics": to_value(&ctx.diagnostics),
    });
    Ok(Outcome::ok(report).with_csv("density.csv", csv_table(&["x", "density"], rows)?))
}

fn response_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let family = family_for(cfg)?;
    let a = &cfg.observable;
    let (ctx, fp) = solve(cfg)?;
    if let DeformationKind::Conjugation { .. } = family.kind {
        let measure = tower_measure(&ctx, &fp.phi, 0..=ctx.m);
        let oracle = response_oracle_conjugation(&family, &measure, a)?;
        let fd = if cfg.response_fd { Some(response_fd(&family, &|x| a.value(x), cfg.fd)?) } else { None };
        return Ok(Outcome::ok(json!({ "oracle_conjugation": oracle, "fd_estimate": to_value(&fd) })));
    }
    let parts = response_parts(&ctx, &fp, &family, cfg.resolvent)?;
    let mut report = parts.evaluate(a);
    let (lhs, rhs) = ruelle_from_parts(&ctx, &fp, &family, &parts, a)?;
    report.ruelle_lhs = Some(lhs);
    report.ruelle_rhs = Some(rhs);
    if cfg.response_fd {
        report.fd_estimate = Some(response_fd(&family, &|x| a.value(x), cfg.fd)?);
    }
    let k_max = ctx.tower.m_max();
    let table = goodlemma_check(&ctx.tower, &family, 1..=k_max)?;
    let rows = table.iter().map(|r| (r.k, r.max_ratio, r.implied_constant, r.samples));
    let csv = csv_table(&["k", "max_ratio", "implied_constant", "samples"], rows)?;
    Ok(Outcome::ok(to_value(&report)).with_csv("goodlemma.csv", csv))
}

fn validate_cmd(cfg: &RunConfig) -> Result<Outcome> {
    let opts = AcceptanceOptions { fd_orbits: cfg.fd.n_orbits, fd_iter: cfg.fd.n_iter, seed: cfg.fd.seed };
    let reports = run_all(&cfg.validate_criteria, &opts)?;
    let passed = reports.iter().all(|r| r.passed);
    let rows = reports.iter().map(|r| (r.id, r.title.clone(), r.passed, r.seconds));
    let csv = csv_table(&["criterion", "title", "passed", "seconds"], rows)?;
    let report = json!({ "passed": passed, "criteria": to_value(&reports) });
    Ok(Outcome { passed, ..Outcome::ok(report).with_csv("validate.csv", csv) })
}

fn oracle_density(cfg: &RunConfig) -> Result<Outcome> {
    let model = ulam_matrix(&cfg.map(), cfg.oracle_bins, cfg.oracle_samples)?;
    let rows = (0..model.n_bins).map(|i| (model.edges[i], model.edges[i + 1], model.density[i]));
    let csv = csv_table(&["x_lo", "x_hi", "density"], rows)?;
    let report = json!({ "n_bins": model.n_bins, "iterations": model.iterations, "mass": model.mass() });
    Ok(Outcome::ok(report).with_csv("oracle_density.csv", csv))
}

fn oracle_average(cfg: &RunConfig) -> Result<Outcome> {
    let a = &cfg.observable;
    let fd = &cfg.fd;
    let est = birkhoff_average(&cfg.map(), &|x| a.value(x), fd.n_orbits, fd.n_iter, fd.burn_in, fd.seed)?;
    Ok(Outcome::ok(to_value(&est)))
}

fn susceptibility_cmd(cfg: &RunConfig) -> Result<Outcome> {
    if cfg.family.kind != FamilyKind::Additive {
        return Err(Error::Config("susceptibility needs family.kind = additive".into()));
    }
    let family = family_for(cfg)?;
    let x = additive_x(&family)?;
    let (ctx, fp) = solve(cfg)?;
    let measure = tower_measure(&ctx, &fp.phi, 0..=ctx.m);
    let mut rows = Vec::new();
    for &z in &cfg.susceptibility_z {
        let sums = susceptibility_partial(&ctx.map, &measure, x, &cfg.observable, z, cfg.susceptibility_n)?;
        rows.extend(sums.into_iter().enumerate().map(|(i, s)| (z, i + 1, s)));
    }
    let last: Vec<Value> = cfg
        .susceptibility_z
        .iter()
        .map(|z| {
            let s = rows.iter().filter(|r| r.0 == *z).map(|r| r.2).next_back();
            json!({ "z": z, "last_partial_sum": s })
        })
        .collect();
    Ok(Outcome::ok(json!({ "n": cfg.susceptibility_n, "partial_sums": last })).with_csv("susceptibility.csv", csv_table(&["z", "N", "S_N"], rows)?))
}

/// Writes the report and CSV artifacts into `dir`.
pub fn write_artifacts(outcome: &Outcome, dir: &Path, command: &str) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(&outcome.report).expect("serializable report");
    std::fs::write(dir.join(format!("{command}.json")), json + "\n")?;
    for (name, body) in &outcome.csv {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}
