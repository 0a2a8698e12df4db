use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use caginalp_core::coupled_solver::{
    check_conservation, measure_main_estimate, solve_system, SolutionPair, SystemConfig,
};
use caginalp_core::io::{
    format_float, read_trajectory_file, write_atomic, write_trajectory_file, FrameNorms, RunManifest,
};
use caginalp_core::mesh::{integral, mean, norm_lp_omega};
use caginalp_core::nonlinearity::check_hypotheses;
use caginalp_core::phase_solver::{measure_energy_inequality, IterationRecord};
use caginalp_core::verification::run_acceptance_suite;
use caginalp_core::{Grid, Trajectory};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Command outcome classes, mapped to process exit codes.
#[derive(Debug)]
pub enum Failure {
    Config(anyhow::Error),
    Solver(anyhow::Error),
    Acceptance(usize),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Solver(_) => 3,
            Failure::Acceptance(_) => 4,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(e) => write!(f, "configuration error: {e:#}"),
            Failure::Solver(e) => write!(f, "solver failure: {e:#}"),
            Failure::Acceptance(n) => write!(f, "{n} acceptance check(s) failed"),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn config_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Config(e.into())
}

fn solver_err(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Solver(e.into())
}

pub const MANIFEST: &str = "manifest.json";
pub const U_FILE: &str = "u.csv";
pub const PHI_FILE: &str = "phi.csv";

/// Everything in the manifest besides the fixed header fields.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunLedgers {
    pub grid: Grid,
    pub dt: f64,
    pub steps: usize,
    pub latent_heat: f64,
    pub seed: Option<u64>,
    pub frame_norms: FrameNorms,
    pub system: serde_json::Value,
    pub conservation: serde_json::Value,
    pub main_estimate: serde_json::Value,
    pub energy: serde_json::Value,
    pub config: RunConfig,
}

fn prepare_out(dir: &Path, force: bool) -> Outcome {
    if dir.join(MANIFEST).exists() && !force {
        return Err(config_err(anyhow!("{} already holds a run; choose another --out or pass --force", dir.display())));
    }
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display())).map_err(config_err)
}

pub fn frame_norms(u: &Trajectory, phi: &Trajectory, latent_heat: f64) -> anyhow::Result<FrameNorms> {
    let mut n = FrameNorms::default();
    for (k, (uf, pf)) in u.frames().iter().zip(phi.frames()).enumerate() {
        n.t.push(u.time(k));
        n.u_l2.push(norm_lp_omega(uf, 2.0)?);
        n.phi_l2.push(norm_lp_omega(pf, 2.0)?);
        n.u_mean.push(mean(uf));
        n.phi_mean.push(mean(pf));
        n.conserved.push(integral(uf) + latent_heat * integral(pf));
    }
    Ok(n)
}

fn to_json<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).unwrap_or(serde_json::Value::Null)
}

fn ledgers(cfg: &RunConfig, sys: &SystemConfig, pair: &SolutionPair) -> anyhow::Result<RunLedgers> {
    let energy = measure_energy_inequality(&pair.phi, &pair.u, &sys.phi0, &sys.nonlinearity);
    Ok(RunLedgers {
        grid: (**sys.f.grid()).clone(),
        dt: sys.dt(),
        steps: sys.steps(),
        latent_heat: sys.latent_heat,
        seed: cfg.seed,
        frame_norms: frame_norms(&pair.u, &pair.phi, sys.latent_heat)?,
        system: to_json(&pair.ledger),
        conservation: to_json(&check_conservation(pair, sys)?),
        main_estimate: to_json(&measure_main_estimate(pair, sys)?),
        energy: match energy {
            Ok(e) => to_json(&e),
            Err(e) => serde_json::json!({ "error": e.to_string() }),
        },
        config: cfg.clone(),
    })
}

pub fn solve(cfg: &RunConfig, force: bool) -> Outcome {
    let sys = cfg.system().map_err(config_err)?;
    let out = &cfg.output.dir;
    prepare_out(out, force)?;
    info!("solving with {} on {} nodes, {} steps", cfg.solver.method, sys.u0.len(), sys.steps());
    let pair = solve_system(&sys, cfg.solver.method).map_err(solver_err)?;
    let ledgers = ledgers(cfg, &sys, &pair).map_err(solver_err)?;
    let manifest = RunManifest {
        config_hash: cfg.hash(),
        method: pair.method.to_string(),
        iterations: pair.iterations,
        residual: pair.residual,
        ledgers: serde_json::to_value(&ledgers).map_err(solver_err)?,
    };
    let write = || -> anyhow::Result<()> {
        write_trajectory_file(&out.join(U_FILE), &pair.u)?;
        write_trajectory_file(&out.join(PHI_FILE), &pair.phi)?;
        manifest.write(&out.join(MANIFEST))?;
        Ok(())
    };
    write().map_err(solver_err)?;
    println!("wrote {}", out.display());
    Ok(())
}

pub fn check_hypotheses_cmd(cfg: &RunConfig) -> Outcome {
    let nl = cfg.nonlinearity().map_err(config_err)?;
    let reports = check_hypotheses(&nl, &cfg.hypothesis_options()).map_err(config_err)?;
    let out = &cfg.output.dir;
    fs::create_dir_all(out).map_err(config_err)?;
    let path = out.join("hypotheses.json");
    write_atomic(&path, serde_json::to_string_pretty(&reports).map_err(solver_err)?.as_bytes()).map_err(solver_err)?;
    for r in &reports {
        let est = r.constant_estimate.map_or("-".to_string(), |c| format!("{c:.6}"));
        println!("{:<10} {:<12} {est}", r.hypothesis, format!("{:?}", r.verdict).to_lowercase());
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn verify(cfg: &RunConfig) -> Outcome {
    let spec = cfg.corpus().map_err(config_err)?;
    let rows = run_acceptance_suite(&spec);
    let out = &cfg.output.dir;
    fs::create_dir_all(out).map_err(config_err)?;
    let path = out.join("suite.json");
    write_atomic(&path, serde_json::to_string_pretty(&rows).map_err(solver_err)?.as_bytes()).map_err(solver_err)?;
    let failed = rows.iter().filter(|r| !r.pass).count();
    for r in rows.iter().filter(|r| !r.pass) {
        warn!("criterion {} failed on {}: measured {:?}, bound {:?}", r.criterion, r.case_id, r.measured, r.bound);
    }
    println!("{} checks, {} failed; wrote {}", rows.len(), failed, path.display());
    if failed > 0 {
        Err(Failure::Acceptance(failed))
    } else {
        Ok(())
    }
}

/// Reads a run directory and writes `timeseries.csv` and `residuals.csv`.
pub fn plotdata(run_dir: &Path) -> Outcome {
    let manifest_path = run_dir.join(MANIFEST);
    if !manifest_path.exists() {
        return Err(config_err(anyhow!("{} is not a run directory (no {MANIFEST})", run_dir.display())));
    }
    let manifest = RunManifest::read(&manifest_path).map_err(config_err)?;
    let ledgers: RunLedgers = serde_json::from_value(manifest.ledgers.clone()).map_err(config_err)?;
    let grid = std::sync::Arc::new(ledgers.grid.clone());
    let u = read_trajectory_file(&run_dir.join(U_FILE), &grid).map_err(config_err)?;
    let phi = read_trajectory_file(&run_dir.join(PHI_FILE), &grid).map_err(config_err)?;
    let norms = frame_norms(&u, &phi, ledgers.latent_heat).map_err(solver_err)?;
    if norms != ledgers.frame_norms {
        warn!("norms recomputed from the snapshots differ from the manifest");
    }

    let mut ts = String::from("t,u_l2,phi_l2,u_mean,phi_mean,conserved,drift\n");
    let c0 = norms.conserved.first().copied().unwrap_or(0.0);
    for k in 0..norms.t.len() {
        let row = [
            norms.t[k],
            norms.u_l2[k],
            norms.phi_l2[k],
            norms.u_mean[k],
            norms.phi_mean[k],
            norms.conserved[k],
            norms.conserved[k] - c0,
        ];
        writeln!(ts, "{}", row.map(format_float).join(",")).expect("string write");
    }
    let mut res = String::from("lambda,iter,residual,omega,accepted\n");
    let history: Vec<IterationRecord> = ledgers
        .system
        .pointer("/outer/history")
        .and_then(|h| serde_json::from_value(h.clone()).ok())
        .unwrap_or_default();
    for h in history {
        writeln!(
            res,
            "{},{},{},{},{}",
            format_float(h.lambda),
            h.iter,
            format_float(h.residual),
            format_float(h.omega),
            h.accepted
        )
        .expect("string write");
    }
    let write = || -> anyhow::Result<()> {
        write_atomic(&run_dir.join("timeseries.csv"), ts.as_bytes())?;
        write_atomic(&run_dir.join("residuals.csv"), res.as_bytes())?;
        Ok(())
    };
    write().map_err(solver_err)?;
    println!("wrote {}", run_dir.join("timeseries.csv").display());
    Ok(())
}

pub fn default_run_dir(cfg_out: Option<PathBuf>, positional: Option<PathBuf>) -> PathBuf {
    positional.or(cfg_out).unwrap_or_else(|| PathBuf::from("run"))
}
