use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_with_status, linearized_evolve, EvolutionConfig, LinearizedOptions, RunStatus, Trajectory};
use crate::lab::config::RunConfig;
use crate::lab::data::make_initial_data;
use crate::lab::io::{self, diagnostics_csv, norm_reports_csv, write_file, Manifest, RunDir};
use crate::lab::report::{decay_report, DecayReport};
use crate::normal_form::{track_linearized_energy, track_lnl_energy, EnergyOptions, EnergySeries};
use crate::norms::{lp_norm, norm_report};
use crate::spectral::{derivative, linear_propagate, RealField};
use crate::vector_fields::{lnl_residual, ResidualSeries};

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub initial: RealField,
    pub trajectory: Trajectory,
    pub report: DecayReport,
    pub manifest: Manifest,
}

impl RunOutcome {
    pub fn aborted(&self) -> bool {
        self.trajectory.status != RunStatus::Completed
    }
}

/// Evolution settings of `cfg` with its tail abort switched on.
pub fn evolution_config(cfg: &RunConfig) -> EvolutionConfig {
    let mut evo = cfg.evolution.clone();
    evo.tail_threshold = Some(cfg.verify.tail_threshold);
    evo
}

/// Builds the initial data, evolves it and reports the decay quantities.
pub fn run(cfg: &RunConfig) -> Result<RunOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let initial = make_initial_data(cfg.grid()?, &cfg.data, cfg.seed)?.with_time(cfg.evolution.t_start);
    let evo = evolution_config(cfg);
    let trajectory = evolve_with_status(&initial, &evo)?;
    let aborted = trajectory.status != RunStatus::Completed;
    let report = decay_report(&trajectory.snapshots, &evo, &cfg.verify, aborted)?;
    let mut manifest = Manifest::new(cfg, trajectory.status, trajectory.snapshots.len(), 0.0);
    manifest.excluded_times = report.excluded.clone();
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    Ok(RunOutcome {
        initial,
        trajectory,
        report,
        manifest,
    })
}

/// Writes config echo, snapshots, reports and manifest under `dir`.
pub fn persist(outcome: &RunOutcome, cfg: &RunConfig, dir: &Path) -> Result<()> {
    let d = RunDir(dir.to_path_buf());
    write_file(&d.config(), cfg.to_text())?;
    for (i, u) in outcome.trajectory.snapshots.iter().enumerate() {
        io::write_snapshot(&d.snapshot(i), u)?;
    }
    write_file(&d.report_csv(), outcome.report.to_csv())?;
    write_file(&d.report_jsonl(), outcome.report.to_jsonl())?;
    write_file(&d.diagnostics(), diagnostics_csv(&outcome.trajectory))?;
    let norms = outcome
        .trajectory
        .snapshots
        .iter()
        .map(|u| norm_report(u, &[1.0, 2.0, f64::INFINITY]))
        .collect::<Result<Vec<_>>>()?;
    write_file(&d.norms(), norm_reports_csv(&norms))?;
    if let Ok(res) = lnl_residual(&outcome.trajectory) {
        write_file(&d.residual(), res.to_csv())?;
    }
    io::write_manifest(&d, &outcome.manifest)
}

/// [`run`] followed by [`persist`] into `cfg.output_dir`. Aborted runs are
/// persisted before the abort is returned as an error.
pub fn simulate(cfg: &RunConfig) -> Result<RunOutcome> {
    let outcome = run(cfg)?;
    persist(&outcome, cfg, &cfg.output_dir)?;
    match outcome.trajectory.clone().into_result() {
        Ok(_) => Ok(outcome),
        Err(e) => Err(e),
    }
}

/// Report recomputed from a persisted run.
pub fn decay_report_for_run(dir: &Path) -> Result<DecayReport> {
    let (cfg, traj) = io::load_run(dir)?;
    let aborted = traj.status != RunStatus::Completed;
    let report = decay_report(&traj.snapshots, &traj.config, &cfg.verify, aborted)?;
    let d = RunDir(dir.to_path_buf());
    write_file(&d.report_csv(), report.to_csv())?;
    write_file(&d.report_jsonl(), report.to_jsonl())?;
    Ok(report)
}

/// Residual of the `L^NL` equation along a persisted run.
pub fn residual_for_run(dir: &Path) -> Result<ResidualSeries> {
    let (_, traj) = io::load_run(dir)?;
    lnl_residual(&traj)
}

/// Corrected energy along a persisted run: of `L^NL u` along the full flow,
/// or of the perturbation `∂ₓ u0` along the linearized flow.
pub fn energy_for_run(dir: &Path, linearized: bool) -> Result<EnergySeries> {
    let (cfg, traj) = io::load_run(dir)?;
    let opts = EnergyOptions {
        coefficient: cfg.verify.energy_coefficient,
        k_c: cfg.verify.k_c,
    };
    let series = if linearized {
        let z0 = traj.snapshots[0].clone();
        let times: Vec<f64> = traj.times().into_iter().filter(|&t| t > 0.0).collect();
        if times.is_empty() {
            return Err(Error::InsufficientData("run has no snapshot at positive time".into()));
        }
        let lin = linearized_evolve(
            &z0,
            &traj,
            &LinearizedOptions {
                dt: traj.config.dt,
                snapshot_times: times,
            },
        )?;
        track_linearized_energy(&lin, &traj, &opts, cfg.verify.energy_grid)?
    } else {
        track_lnl_energy(&traj, &opts, cfg.verify.energy_grid)?
    };
    write_file(&RunDir(dir.to_path_buf()).energy(linearized), series.to_csv())?;
    Ok(series)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearReport {
    pub report: DecayReport,
    /// `(t, t^{1/5} ||u||_inf / ||u0||_{L^1})`.
    pub dispersive: Vec<(f64, f64)>,
    /// `(t, t^{1/5} ||u_x||_inf)`, the bound without a logarithm.
    pub derivative_sup: Vec<(f64, f64)>,
}

impl LinearReport {
    pub fn dispersive_csv(&self) -> String {
        let mut s = String::from("t,dispersive_ratio,derivative_sup\n");
        for ((t, a), (_, b)) in self.dispersive.iter().zip(&self.derivative_sup) {
            s.push_str(&format!("{t:?},{a:?},{b:?}\n"));
        }
        s
    }
}

/// Free flow of the configured data, evaluated exactly at each snapshot time.
pub fn verify_linear(cfg: &RunConfig) -> Result<LinearReport> {
    cfg.validate()?;
    let u0 = make_initial_data(cfg.grid()?, &cfg.data, cfg.seed)?;
    let l1 = lp_norm(&u0, 1.0)?;
    let mut evo = evolution_config(cfg);
    evo.nonlinear_scale = 0.0;
    let snapshots: Vec<RealField> = evo
        .snapshot_times
        .iter()
        .map(|&t| linear_propagate(&u0, t - evo.t_start).with_time(t))
        .collect();
    let report = decay_report(&snapshots, &evo, &cfg.verify, false)?;
    let mut dispersive = Vec::new();
    let mut derivative_sup = Vec::new();
    for u in snapshots.iter().filter(|u| u.time() > 0.0) {
        let t = u.time();
        dispersive.push((t, t.powf(0.2) * u.max_abs() / l1));
        derivative_sup.push((t, t.powf(0.2) * derivative(u, 1)?.max_abs()));
    }
    Ok(LinearReport {
        report,
        dispersive,
        derivative_sup,
    })
}

pub fn persist_linear(report: &LinearReport, dir: &Path) -> Result<()> {
    write_file(&dir.join("linear_report.csv"), report.report.to_csv())?;
    write_file(&dir.join("linear_report.jsonl"), report.report.to_jsonl())?;
    write_file(&dir.join("dispersive.csv"), report.dispersive_csv())
}
