use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::evolution::{default_dealias, EvolutionConfig};
use crate::norms::RegionThresholds;
use crate::spectral::Grid1D;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Family {
    Gaussian,
    WavePacket,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSpec {
    pub family: Family,
    pub epsilon: f64,
    pub width: f64,
    pub center: f64,
    /// Carrier frequency of the wave packet.
    pub k0: f64,
    pub zero_mean: bool,
    /// Relative amplitude of a seeded smooth perturbation.
    pub noise: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySpec {
    pub k_s: f64,
    pub k_c: f64,
    pub band_ratio: f64,
    pub tail_threshold: f64,
    /// Breakdown threshold over the early-window median of `C_0`.
    pub theta: f64,
    /// Leading fraction of the snapshots forming the early window.
    pub early_fraction: f64,
    /// Number of `rho_L_R` columns.
    pub bands: usize,
    pub energy_coefficient: f64,
    /// Point count for the O(N²) energy diagnostics, if coarsened.
    pub energy_grid: Option<usize>,
}

impl Default for VerifySpec {
    fn default() -> Self {
        VerifySpec {
            k_s: 4.0,
            k_c: 1.0,
            band_ratio: std::f64::consts::SQRT_2,
            tail_threshold: 1e-6,
            theta: 3.0,
            early_fraction: 0.2,
            bands: 8,
            energy_coefficient: 0.1,
            energy_grid: None,
        }
    }
}

impl VerifySpec {
    pub fn thresholds(&self) -> RegionThresholds {
        RegionThresholds {
            k_s: self.k_s,
            band_ratio: self.band_ratio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid_n: usize,
    pub grid_length: f64,
    pub evolution: EvolutionConfig,
    pub data: DataSpec,
    pub verify: VerifySpec,
    pub output_dir: PathBuf,
    pub seed: u64,
}

/// Box length that keeps data of dominant frequency `xi_eff` inside the box
/// until `t_end`, from the group speed `5 xi^4`.
pub fn recommended_length(xi_eff: f64, t_end: f64) -> f64 {
    8.0 * 5.0 * xi_eff.powi(4) * t_end
}

fn parse_value<T: std::str::FromStr>(origin: &str, line: usize, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Parse {
        origin: origin.to_string(),
        line,
        message: format!("invalid value {v:?} for {key}"),
    })
}

fn parse_bool(origin: &str, line: usize, key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Parse {
            origin: origin.to_string(),
            line,
            message: format!("invalid boolean {v:?} for {key}"),
        }),
    }
}

fn parse_list(origin: &str, line: usize, key: &str, v: &str) -> Result<Vec<f64>> {
    v.split(',')
        .map(|s| parse_value(origin, line, key, s.trim()))
        .collect()
}

impl RunConfig {
    pub fn grid(&self) -> Result<Grid1D> {
        Grid1D::new(self.grid_n, self.grid_length)
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text, &path.display().to_string())
    }

    /// Parses `section.key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig {
            grid_n: 4096,
            grid_length: 400.0,
            evolution: EvolutionConfig::new(1, 1.0, 0.01, 0.0, 1.0),
            data: DataSpec {
                family: Family::Gaussian,
                epsilon: 0.05,
                width: 1.0,
                center: 0.0,
                k0: 1.0,
                zero_mean: false,
                noise: 0.0,
            },
            verify: VerifySpec::default(),
            output_dir: PathBuf::from("run"),
            seed: 0,
        };
        let mut every: Option<f64> = None;
        let mut log_count: Option<usize> = None;
        let mut times: Option<Vec<f64>> = None;
        let mut dealias: Option<f64> = None;
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
                origin: origin.to_string(),
                line,
                message: format!("expected `section.key = value`, found {body:?}"),
            })?;
            let (key, v) = (key.trim(), value.trim());
            let ev = &mut cfg.evolution;
            match key {
                "grid.n" => cfg.grid_n = parse_value(origin, line, key, v)?,
                "grid.length" => cfg.grid_length = parse_value(origin, line, key, v)?,
                "evolution.m" => ev.m = parse_value(origin, line, key, v)?,
                "evolution.sign" => ev.sign = parse_value(origin, line, key, v)?,
                "evolution.dt" => ev.dt = parse_value(origin, line, key, v)?,
                "evolution.t_start" => ev.t_start = parse_value(origin, line, key, v)?,
                "evolution.t_end" => ev.t_end = parse_value(origin, line, key, v)?,
                "evolution.snapshot_every" => every = Some(parse_value(origin, line, key, v)?),
                "evolution.log_snapshots" => log_count = Some(parse_value(origin, line, key, v)?),
                "evolution.snapshot_times" => times = Some(parse_list(origin, line, key, v)?),
                "evolution.dealias_fraction" => dealias = Some(parse_value(origin, line, key, v)?),
                "evolution.nonlinear_scale" => ev.nonlinear_scale = parse_value(origin, line, key, v)?,
                "data.family" => {
                    cfg.data.family = match v.to_ascii_lowercase().as_str() {
                        "gaussian" => Family::Gaussian,
                        "wave_packet" | "packet" => Family::WavePacket,
                        _ => {
                            return Err(Error::Parse {
                                origin: origin.to_string(),
                                line,
                                message: format!("unknown data family {v:?}"),
                            })
                        }
                    }
                }
                "data.epsilon" => cfg.data.epsilon = parse_value(origin, line, key, v)?,
                "data.width" => cfg.data.width = parse_value(origin, line, key, v)?,
                "data.center" => cfg.data.center = parse_value(origin, line, key, v)?,
                "data.k0" => cfg.data.k0 = parse_value(origin, line, key, v)?,
                "data.zero_mean" => cfg.data.zero_mean = parse_bool(origin, line, key, v)?,
                "data.noise" => cfg.data.noise = parse_value(origin, line, key, v)?,
                "verify.k_s" => cfg.verify.k_s = parse_value(origin, line, key, v)?,
                "verify.k_c" => cfg.verify.k_c = parse_value(origin, line, key, v)?,
                "verify.band_ratio" => cfg.verify.band_ratio = parse_value(origin, line, key, v)?,
                "verify.tail_threshold" => cfg.verify.tail_threshold = parse_value(origin, line, key, v)?,
                "verify.theta" => cfg.verify.theta = parse_value(origin, line, key, v)?,
                "verify.early_fraction" => cfg.verify.early_fraction = parse_value(origin, line, key, v)?,
                "verify.bands" => cfg.verify.bands = parse_value(origin, line, key, v)?,
                "verify.energy_coefficient" => cfg.verify.energy_coefficient = parse_value(origin, line, key, v)?,
                "verify.energy_grid" => cfg.verify.energy_grid = Some(parse_value(origin, line, key, v)?),
                "output.dir" => cfg.output_dir = PathBuf::from(v),
                "run.seed" => cfg.seed = parse_value(origin, line, key, v)?,
                _ => {
                    return Err(Error::Parse {
                        origin: origin.to_string(),
                        line,
                        message: format!("unknown key {key:?}"),
                    })
                }
            }
        }
        let ev = &mut cfg.evolution;
        ev.dealias_fraction = dealias.unwrap_or_else(|| default_dealias(ev.m));
        ev.snapshot_times = match (times, every, log_count) {
            (Some(t), None, None) => t,
            (None, Some(e), None) => {
                if !(e > 0.0) {
                    return Err(Error::InvalidParameter("snapshot_every must be positive".into()));
                }
                ev.clone().with_snapshot_every(e).snapshot_times
            }
            (None, None, Some(c)) => log_times(ev.t_start, ev.t_end, c)?,
            (None, None, None) => vec![ev.t_start, ev.t_end],
            _ => {
                return Err(Error::InvalidParameter(
                    "give only one of snapshot_times, snapshot_every, log_snapshots".into(),
                ))
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let grid = self.grid()?;
        self.evolution.validate()?;
        let bad = |m: String| Err(Error::InvalidParameter(m));
        let d = &self.data;
        if !(d.epsilon > 0.0 && d.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be positive", d.epsilon));
        }
        if d.center.abs() >= grid.length() / 8.0 {
            return bad(format!("center {} must satisfy |c| < L/8", d.center));
        }
        if !(d.width.is_finite()) {
            return bad(format!("width {} must be finite", d.width));
        }
        if !(d.noise >= 0.0) {
            return bad(format!("noise {} must be nonnegative", d.noise));
        }
        let v = &self.verify;
        if !(v.tail_threshold > 0.0) {
            return bad("tail threshold must be positive".into());
        }
        if !(v.theta > 1.0) {
            return bad(format!("theta {} must exceed 1", v.theta));
        }
        if !(v.early_fraction > 0.0 && v.early_fraction < 1.0) {
            return bad("early_fraction must lie in (0, 1)".into());
        }
        if !(v.k_c > 0.0 && v.k_s > 0.0 && v.band_ratio > 1.0) {
            return bad("k_s, k_c must be positive and band_ratio above 1".into());
        }
        if let Some(n) = v.energy_grid {
            if n > grid.n() || Grid1D::new(n, grid.length()).is_err() {
                return bad(format!("energy grid {n} must be a power of two no larger than grid.n"));
            }
        }
        Ok(())
    }

    /// Canonical text form; parsing it reproduces the configuration.
    pub fn to_text(&self) -> String {
        let ev = &self.evolution;
        let d = &self.data;
        let v = &self.verify;
        let join = |xs: &[f64]| xs.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "grid.n = {}", self.grid_n);
        let _ = writeln!(s, "grid.length = {:?}", self.grid_length);
        let _ = writeln!(s, "evolution.m = {}", ev.m);
        let _ = writeln!(s, "evolution.sign = {:?}", ev.sign);
        let _ = writeln!(s, "evolution.dt = {:?}", ev.dt);
        let _ = writeln!(s, "evolution.t_start = {:?}", ev.t_start);
        let _ = writeln!(s, "evolution.t_end = {:?}", ev.t_end);
        let _ = writeln!(s, "evolution.snapshot_times = {}", join(&ev.snapshot_times));
        let _ = writeln!(s, "evolution.dealias_fraction = {:?}", ev.dealias_fraction);
        let _ = writeln!(s, "evolution.nonlinear_scale = {:?}", ev.nonlinear_scale);
        let family = match d.family {
            Family::Gaussian => "gaussian",
            Family::WavePacket => "wave_packet",
        };
        let _ = writeln!(s, "data.family = {family}");
        let _ = writeln!(s, "data.epsilon = {:?}", d.epsilon);
        let _ = writeln!(s, "data.width = {:?}", d.width);
        let _ = writeln!(s, "data.center = {:?}", d.center);
        let _ = writeln!(s, "data.k0 = {:?}", d.k0);
        let _ = writeln!(s, "data.zero_mean = {}", d.zero_mean);
        let _ = writeln!(s, "data.noise = {:?}", d.noise);
        let _ = writeln!(s, "verify.k_s = {:?}", v.k_s);
        let _ = writeln!(s, "verify.k_c = {:?}", v.k_c);
        let _ = writeln!(s, "verify.band_ratio = {:?}", v.band_ratio);
        let _ = writeln!(s, "verify.tail_threshold = {:?}", v.tail_threshold);
        let _ = writeln!(s, "verify.theta = {:?}", v.theta);
        let _ = writeln!(s, "verify.early_fraction = {:?}", v.early_fraction);
        let _ = writeln!(s, "verify.bands = {}", v.bands);
        let _ = writeln!(s, "verify.energy_coefficient = {:?}", v.energy_coefficient);
        if let Some(n) = v.energy_grid {
            let _ = writeln!(s, "verify.energy_grid = {n}");
        }
        let _ = writeln!(s, "output.dir = {}", self.output_dir.display());
        let _ = writeln!(s, "run.seed = {}", self.seed);
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// `count` times geometrically spaced on `[t_start, t_end]`, `t_start > 0`.
pub fn log_times(t_start: f64, t_end: f64, count: usize) -> Result<Vec<f64>> {
    if !(t_start > 0.0) || count < 2 {
        return Err(Error::InvalidParameter(
            "log snapshots need t_start > 0 and at least two points".into(),
        ));
    }
    let ratio = (t_end / t_start).ln() / (count - 1) as f64;
    let mut out: Vec<f64> = (0..count).map(|i| t_start * (ratio * i as f64).exp()).collect();
    out[0] = t_start;
    out[count - 1] = t_end;
    Ok(out)
}
