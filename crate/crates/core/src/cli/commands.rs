//! Task implementations behind the command-line entry point.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use super::config::{RunConfig, Task};
use super::record::{eigenvalue_entries, R0Summary, ResultRecord};
use crate::contour::check_solvability;
use crate::error::Error;
use crate::linalg::{op_norm, sigma_min};
use crate::rootsolve::{estimate_r0, RootSolution};
use crate::spectral::{eigendecompose, sigma_min_landscape};
use crate::transfer::Continuation;
use crate::verify::{run_verification, VerifyOptions};
use crate::C64;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INADMISSIBLE: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

/// Failure of a command, carrying its exit status.
#[derive(Debug)]
pub struct CommandError {
    pub code: i32,
    pub message: String,
}

impl CommandError {
    fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    fn io(path: &Path, err: std::io::Error) -> Self {
        Self::config(format!("{}: {err}", path.display()))
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::NotAdmissible { .. } | Error::NoAdmissibleContour | Error::TailBoundFailure { .. } => EXIT_INADMISSIBLE,
        Error::InvalidInstance(_) | Error::Geometry(_) | Error::DimensionMismatch { .. } => EXIT_CONFIG,
        _ => EXIT_SOLVER,
    }
}

impl From<Error> for CommandError {
    fn from(err: Error) -> Self {
        Self {
            code: exit_code(&err),
            message: err.to_string(),
        }
    }
}

pub type CommandResult<T = ()> = std::result::Result<T, CommandError>;

/// Reads and parses a configuration file; parse errors carry line and column.
pub fn load_config(path: &Path) -> CommandResult<(RunConfig, String)> {
    let text = fs::read_to_string(path).map_err(|e| CommandError::io(path, e))?;
    let cfg = RunConfig::from_json(&text).map_err(|e| CommandError::config(format!("{}: {e}", path.display())))?;
    Ok((cfg, text))
}

pub struct RunContext {
    pub config: RunConfig,
    pub config_text: String,
    pub out_dir: PathBuf,
}

impl RunContext {
    pub fn new(config_path: &Path, out_dir: Option<PathBuf>) -> CommandResult<Self> {
        let (config, config_text) = load_config(config_path)?;
        let out_dir = out_dir
            .or_else(|| config.output.dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        Ok(Self {
            config,
            config_text,
            out_dir,
        })
    }

    fn write(&self, name: &str, contents: &str) -> CommandResult<PathBuf> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CommandError::io(&self.out_dir, e))?;
        let path = self.out_dir.join(name);
        fs::write(&path, contents).map_err(|e| CommandError::io(&path, e))?;
        info!("wrote {}", path.display());
        Ok(path)
    }

    fn write_record(&self, name: &str, record: &ResultRecord) -> CommandResult<PathBuf> {
        let text = record.to_json().map_err(|e| CommandError::config(e.to_string()))?;
        self.write(name, &text)
    }
}

/// Runs `task`, returning the exit status.
pub fn run(ctx: &RunContext, task: Task) -> i32 {
    if ctx.config.task != task {
        warn!(
            "config declares task `{}`, running `{}` as requested",
            ctx.config.task.name(),
            task.name()
        );
    }
    let result = match task {
        Task::Solve => cmd_solve(ctx),
        Task::Verify => cmd_verify(ctx),
        Task::Scan => cmd_scan(ctx),
        Task::R0 => cmd_r0(ctx),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

fn record_root(record: &mut ResultRecord, root: &RootSolution) -> CommandResult {
    let eig = eigendecompose(&root.h1)?;
    record.certificate = Some(root.certificate);
    record.eigenvalues = eigenvalue_entries(&eig);
    record.residuals.insert("fixed_point".into(), root.final_residual);
    record.residuals.insert("root_vector_chains".into(), eig.max_residual());
    record.metric("iterations", root.iterations as f64);
    record.metric("x_norm", op_norm(&root.x));
    record.metric("scale", root.scale);
    record.metric("root_vector_condition", eig.condition);
    if let Some(q) = root.max_contraction_ratio() {
        record.metric("max_contraction_ratio", q);
    }
    if let Some(q) = root.certificate.contraction_factor() {
        record.metric("contraction_factor", q);
    }
    record.x = (0..root.x.nrows())
        .map(|i| (0..root.x.ncols()).map(|j| root.x[(i, j)]).collect())
        .collect();
    Ok(())
}

fn write_landscape(ctx: &RunContext, cont: &Continuation) -> CommandResult {
    let n = ctx.config.output.landscape;
    if n == 0 {
        return Ok(());
    }
    let land = sigma_min_landscape(cont, n);
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CommandError::config(e.to_string());
    w.write_record(["re", "im", "sigma_min"]).map_err(csv_err)?;
    for iy in 0..land.ny {
        for ix in 0..land.nx {
            if let Some(v) = land.values[iy * land.nx + ix] {
                let z = land.point(ix, iy);
                w.write_record([fmt(z.re), fmt(z.im), fmt(v)]).map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CommandError::config(e.to_string()))?;
    ctx.write("sigma_min.csv", &String::from_utf8_lossy(&bytes))?;
    Ok(())
}

pub fn cmd_solve(ctx: &RunContext) -> CommandResult<i32> {
    let cfg = &ctx.config;
    let (instance, contour) = cfg.instance_and_contour()?;
    let cont = Continuation::new(&instance, &contour)?;
    let mut record = ResultRecord::new("solve", &ctx.config_text);
    record.certificate = Some(cont.certificate);
    let root = cont.solve(&cfg.solver_options())?;
    record_root(&mut record, &root)?;
    record.metric("epsilon", cfg.instance.epsilon);
    write_landscape(ctx, &cont)?;
    record.finish();
    ctx.write_record("result.json", &record)?;
    Ok(EXIT_OK)
}

pub fn cmd_verify(ctx: &RunContext) -> CommandResult<i32> {
    let cfg = &ctx.config;
    let (instance, contour) = cfg.instance_and_contour()?;
    let opts = cfg.verify.clone().unwrap_or_else(VerifyOptions::default);
    let ver = run_verification(&instance, &contour, &cfg.solver_options(), &opts);
    let mut record = ResultRecord::new("verify", &ctx.config_text);
    if let Some(root) = &ver.root {
        record_root(&mut record, root)?;
    } else if let Ok(cert) = check_solvability(&instance, &contour) {
        record.certificate = Some(cert);
    }
    record.checks = ver.checks.clone();
    for c in &ver.checks {
        println!(
            "{:<28} {}  defect {:>12.4e}  tol {:>10.3e}{}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.defect,
            c.tolerance,
            c.detail.as_ref().map(|d| format!("  ({d})")).unwrap_or_default()
        );
    }
    if let Ok(cont) = Continuation::new(&instance, &contour) {
        write_landscape(ctx, &cont)?;
    }
    record.finish();
    ctx.write_record("verify.json", &record)?;
    let admissible = ver.get("admissible").is_some_and(|c| c.passed);
    Ok(if !admissible {
        eprintln!("error: contour not admissible (the strict bound V0 < d0^2/4 fails)");
        EXIT_INADMISSIBLE
    } else if ver.passed() {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    })
}

#[derive(Debug, Clone)]
pub struct ScanPoint {
    pub epsilon: f64,
    pub outcome: std::result::Result<Vec<(C64, f64)>, (String, i32)>,
}

fn status_name(err: &Error) -> String {
    match exit_code(err) {
        EXIT_INADMISSIBLE => "inadmissible".into(),
        EXIT_CONFIG => "config_error".into(),
        _ => "solver_failure".into(),
    }
}

/// Eigenvalues with `sigma_min(M1(z))` residuals for each coupling scale.
pub fn scan_points(cfg: &RunConfig, epsilons: &[f64]) -> CommandResult<Vec<ScanPoint>> {
    let tuned = cfg.tuned_instance()?;
    let solver = cfg.solver_options();
    Ok(epsilons
        .par_iter()
        .map(|&eps| {
            let run = || -> crate::error::Result<Vec<(C64, f64)>> {
                let inst = tuned.scaled(eps);
                let contour = cfg.build_contour(&inst)?;
                let cont = Continuation::new(&inst, &contour)?;
                let root = cont.solve(&solver)?;
                let eig = eigendecompose(&root.h1)?;
                Ok(eig
                    .eigenvalues()
                    .into_iter()
                    .map(|z| (z, sigma_min(&cont.m1_on_rule(z))))
                    .collect())
            };
            ScanPoint {
                epsilon: eps,
                outcome: run().map_err(|e| (format!("{}: {e}", status_name(&e)), exit_code(&e))),
            }
        })
        .collect())
}

/// Greedy nearest-neighbour assignment of `next` to the slots of `prev`.
pub fn match_trajectories(prev: &[C64], next: &[C64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, p) in prev.iter().enumerate() {
        for (j, q) in next.iter().enumerate() {
            pairs.push(((p - q).norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let mut slot_of = vec![usize::MAX; next.len()];
    let mut taken = vec![false; prev.len()];
    for (_, i, j) in pairs {
        if !taken[i] && slot_of[j] == usize::MAX {
            taken[i] = true;
            slot_of[j] = i;
        }
    }
    for (j, q) in next.iter().enumerate() {
        let own = (q - prev[slot_of[j]]).norm();
        if prev.iter().enumerate().any(|(i, p)| i != slot_of[j] && (q - p).norm() < own) {
            warn!("trajectory collision near {q}: nearest-neighbour assignment is ambiguous");
        }
    }
    slot_of
}

pub fn cmd_scan(ctx: &RunContext) -> CommandResult<i32> {
    let cfg = &ctx.config;
    let epsilons = cfg.epsilons()?;
    let points = scan_points(cfg, &epsilons)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CommandError::config(e.to_string());
    w.write_record(["epsilon", "j", "re", "im", "residual", "status"]).map_err(csv_err)?;
    let mut prev: Option<Vec<C64>> = None;
    let mut successes = 0;
    let mut first_error = None;
    for p in &points {
        match &p.outcome {
            Ok(values) => {
                successes += 1;
                let ordered: Vec<(C64, f64)> = match &prev {
                    None => {
                        let mut v = values.clone();
                        v.sort_by(|a, b| (a.0.re, a.0.im).partial_cmp(&(b.0.re, b.0.im)).unwrap_or(std::cmp::Ordering::Equal));
                        v
                    }
                    Some(prev) => {
                        let zs: Vec<C64> = values.iter().map(|v| v.0).collect();
                        let slots = match_trajectories(prev, &zs);
                        let mut v = vec![values[0]; values.len()];
                        for (j, &s) in slots.iter().enumerate() {
                            v[s] = values[j];
                        }
                        v
                    }
                };
                for (j, (z, r)) in ordered.iter().enumerate() {
                    w.write_record([fmt(p.epsilon), j.to_string(), fmt(z.re), fmt(z.im), fmt(*r), "ok".into()])
                        .map_err(csv_err)?;
                }
                prev = Some(ordered.iter().map(|v| v.0).collect());
            }
            Err((msg, code)) => {
                warn!("epsilon {}: {msg}", p.epsilon);
                first_error.get_or_insert(*code);
                let status = msg.split(':').next().unwrap_or("failure").to_string();
                w.write_record([fmt(p.epsilon), String::new(), String::new(), String::new(), String::new(), status])
                    .map_err(csv_err)?;
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CommandError::config(e.to_string()))?;
    ctx.write("scan.csv", &String::from_utf8_lossy(&bytes))?;
    let mut record = ResultRecord::new("scan", &ctx.config_text);
    record.metric("epsilons", epsilons.len() as f64);
    record.metric("succeeded", successes as f64);
    record.finish();
    ctx.write_record("scan.json", &record)?;
    Ok(if successes > 0 {
        EXIT_OK
    } else {
        eprintln!("error: no coupling scale on the grid succeeded");
        first_error.unwrap_or(EXIT_SOLVER)
    })
}

pub fn cmd_r0(ctx: &RunContext) -> CommandResult<i32> {
    let cfg = &ctx.config;
    let family = cfg.family()?;
    let instance = cfg.tuned_instance()?.scaled(cfg.instance.epsilon);
    let est = estimate_r0(&instance, cfg.half_plane()?, &family)?;
    let mut record = ResultRecord::new("r0", &ctx.config_text);
    record.certificate = check_solvability(&instance, &est.argmin_contour).ok();
    record.r0 = Some(R0Summary {
        r0: est.r0,
        argmin: est.argmin,
        evaluated: est.evaluated,
    });
    record.metric("r0", est.r0);
    record.finish();
    ctx.write_record("r0.json", &record)?;
    println!("r0 = {:.16e} (depth {}, span [{}, {}])", est.r0, est.argmin.depth, est.argmin.x_lo, est.argmin.x_hi);
    Ok(EXIT_OK)
}
