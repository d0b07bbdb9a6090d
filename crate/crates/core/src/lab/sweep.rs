use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{evolve_with_status, RunStatus};
use crate::lab::config::RunConfig;
use crate::lab::data::make_initial_data;
use crate::lab::run::evolution_config;
use crate::norms::{tail_mass, weighted_sup};

/// Environment variable capping the number of concurrent sweep runs.
pub const THREADS_ENV: &str = "DISPERSA_THREADS";

/// Marker written when fewer than two runs break down inside their window.
pub const NOT_OBSERVABLE: &str = "scaling not observable at desk scale";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub epsilon: f64,
    pub breakdown_time: Option<f64>,
    /// Median of `C_0 / epsilon` over the early window.
    pub early_median: f64,
    pub max_ratio: f64,
    pub t_end: f64,
    pub status: RunStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub m: u32,
    pub entries: Vec<SweepEntry>,
    /// Slope of `log t*` against `log epsilon`.
    pub fitted_exponent: Option<f64>,
    pub fit_rms: Option<f64>,
    pub predicted_exponent: f64,
    pub marker: Option<String>,
}

/// Exponent of the lifespan bound: `-5/3` for `m = 1`, `-5` for `m = 2`
/// (the latter standing in for the exponential lifespan over a short range).
pub fn predicted_exponent(m: u32) -> f64 {
    if m == 1 {
        -5.0 / 3.0
    } else {
        -5.0
    }
}

/// First time at which `C_0` exceeds `theta` times its median over the
/// leading `early_fraction` of the series.
pub fn breakdown_time(series: &[(f64, f64)], theta: f64, early_fraction: f64) -> Option<(f64, f64)> {
    if series.is_empty() {
        return None;
    }
    let early = ((series.len() as f64 * early_fraction).ceil() as usize).clamp(1, series.len());
    let mut head: Vec<f64> = series[..early].iter().map(|p| p.1).collect();
    head.sort_by(|a, b| a.total_cmp(b));
    let median = if early % 2 == 1 {
        head[early / 2]
    } else {
        0.5 * (head[early / 2 - 1] + head[early / 2])
    };
    let t = series[early..].iter().find(|p| p.1 > theta * median).map(|p| p.0);
    Some((t.unwrap_or(f64::NAN), median))
}

/// Least-squares slope of `log y` on `log x` and the RMS residual.
pub fn log_log_fit(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let pts: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0 / n, a.1 + p.1 / n));
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>() / sxx;
    let rms = (pts.iter().map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2)).sum::<f64>() / n).sqrt();
    Some((slope, rms))
}

fn sweep_one(base: &RunConfig, epsilon: f64) -> Result<SweepEntry> {
    let mut cfg = base.clone();
    cfg.data.epsilon = epsilon;
    cfg.validate()?;
    let u0 = make_initial_data(cfg.grid()?, &cfg.data, cfg.seed)?.with_time(cfg.evolution.t_start);
    let evo = evolution_config(&cfg);
    let traj = evolve_with_status(&u0, &evo)?;
    let series = traj
        .snapshots
        .iter()
        .filter(|u| u.time() > 0.0 && tail_mass(u) <= cfg.verify.tail_threshold)
        .map(|u| Ok((u.time(), weighted_sup(u, u.time(), 0.125, 0.375, None)? / epsilon)))
        .collect::<Result<Vec<_>>>()?;
    let (mut breakdown, median) = match breakdown_time(&series, cfg.verify.theta, cfg.verify.early_fraction) {
        Some((t, med)) => ((!t.is_nan()).then_some(t), med),
        None => (None, f64::NAN),
    };
    if let RunStatus::BlowUp { last_time } = traj.status {
        breakdown = breakdown.or(Some(last_time));
    }
    Ok(SweepEntry {
        epsilon,
        breakdown_time: breakdown,
        early_median: median,
        max_ratio: series.iter().map(|p| p.1).fold(0.0, f64::max),
        t_end: cfg.evolution.t_end,
        status: traj.status,
    })
}

/// Worker count from [`THREADS_ENV`], else the available parallelism.
pub fn sweep_threads() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(Error::InvalidParameter(format!("{THREADS_ENV}={v:?} must be a positive integer"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

/// Runs `base` once per epsilon and fits the breakdown times.
pub fn sweep(base: &RunConfig, epsilons: &[f64]) -> Result<SweepResult> {
    if epsilons.is_empty() || epsilons.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("epsilons must be a nonempty list of positive values".into()));
    }
    let (lo, hi) = epsilons.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
    if epsilons.len() < 3 || hi < 4.0 * lo {
        return Err(Error::InvalidParameter(
            "a sweep needs at least three epsilons spanning a factor of four".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(sweep_threads()?)
        .build()
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let entries = pool.install(|| epsilons.par_iter().map(|&e| sweep_one(base, e)).collect::<Result<Vec<_>>>())?;
    let points: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.breakdown_time.map(|t| (e.epsilon, t - base.evolution.t_start)))
        .filter(|p| p.1 > 0.0)
        .collect();
    let fit = log_log_fit(&points);
    Ok(SweepResult {
        m: base.evolution.m,
        entries,
        fitted_exponent: fit.map(|f| f.0),
        fit_rms: fit.map(|f| f.1),
        predicted_exponent: predicted_exponent(base.evolution.m),
        marker: fit.is_none().then(|| NOT_OBSERVABLE.to_string()),
    })
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epsilon,breakdown_time,early_median,max_ratio,t_end,status\n");
        for e in &self.entries {
            let status = match e.status {
                RunStatus::Completed => "completed",
                RunStatus::BlowUp { .. } => "blow_up",
                RunStatus::TailOverflow { .. } => "tail_overflow",
            };
            let bt = e.breakdown_time.map_or_else(String::new, |t| format!("{t:?}"));
            let _ = writeln!(
                s,
                "{:?},{bt},{:?},{:?},{:?},{status}",
                e.epsilon, e.early_median, e.max_ratio, e.t_end
            );
        }
        s
    }
}
