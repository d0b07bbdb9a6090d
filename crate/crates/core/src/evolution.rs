//! Integrating-factor RK4 for `u_t - u_xxxxx = sign * u^m u_x` and for the
//! linearized flow `z_t - z_xxxxx = sign * u^m z_x` along a stored background.
//!
//! The state is advanced in Fourier space with the exact factor
//! `exp(i xi^5 h)`; only the nonlinear term is stepped. Products are formed
//! in physical space from dealiased inputs and dealiased again.

use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::Fft;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::tail_mass;
use crate::spectral::{self, fft_plans, Grid1D, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Integrator {
    IfRk4,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    /// Power of the nonlinearity, 1 or 2.
    pub m: u32,
    /// `+1` or `-1`.
    pub sign: f64,
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    pub snapshot_times: Vec<f64>,
    pub dealias_fraction: f64,
    pub integrator: Integrator,
    /// Multiplies the nonlinearity; 0 turns the solver into the free flow.
    pub nonlinear_scale: f64,
    /// Abort when the tail mass of a snapshot exceeds this fraction.
    pub tail_threshold: Option<f64>,
}

/// Largest allowed `dt * max|u|^m * xi_cut`.
pub const NONLINEAR_CFL: f64 = 0.5;

pub fn default_dealias(m: u32) -> f64 {
    if m == 1 {
        2.0 / 3.0
    } else {
        0.5
    }
}

impl EvolutionConfig {
    pub fn new(m: u32, sign: f64, dt: f64, t_start: f64, t_end: f64) -> Self {
        EvolutionConfig {
            m,
            sign,
            dt,
            t_start,
            t_end,
            snapshot_times: vec![t_start, t_end],
            dealias_fraction: default_dealias(m),
            integrator: Integrator::IfRk4,
            nonlinear_scale: 1.0,
            tail_threshold: None,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> Self {
        self.snapshot_times = times;
        self
    }

    /// Evenly spaced snapshots every `every` time units, both ends included.
    pub fn with_snapshot_every(mut self, every: f64) -> Self {
        let count = ((self.t_end - self.t_start) / every - 1e-9).ceil().max(1.0) as usize;
        self.snapshot_times = (0..=count)
            .map(|i| (self.t_start + i as f64 * every).min(self.t_end))
            .collect();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.m != 1 && self.m != 2 {
            return bad(format!("power m = {} must be 1 or 2", self.m));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return bad(format!("sign {} must be +1 or -1", self.sign));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt = {} must be positive", self.dt));
        }
        if !(self.t_start >= 0.0 && self.t_start < self.t_end && self.t_end.is_finite()) {
            return bad(format!("need 0 <= t_start < t_end, got [{}, {}]", self.t_start, self.t_end));
        }
        if self.snapshot_times.is_empty() {
            return bad("at least one snapshot time is required".into());
        }
        if self.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return bad("snapshot times must increase strictly".into());
        }
        if self.snapshot_times.iter().any(|&t| t < self.t_start || t > self.t_end) {
            return bad("snapshot times must lie in [t_start, t_end]".into());
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return bad(format!("dealias fraction {} must lie in (0, 1]", self.dealias_fraction));
        }
        if !self.nonlinear_scale.is_finite() {
            return bad("nonlinear scale must be finite".into());
        }
        if let Some(th) = self.tail_threshold {
            if !(th > 0.0) {
                return bad(format!("tail threshold {th} must be positive"));
            }
        }
        Ok(())
    }

    /// Checks the nonlinear time-step contract against the initial data.
    pub fn check_step_contract(&self, u0: &RealField) -> Result<()> {
        let cut = self.dealias_fraction * u0.grid().nyquist();
        let rate = self.nonlinear_scale.abs() * u0.max_abs().powi(self.m as i32) * cut;
        if self.dt * rate > NONLINEAR_CFL {
            return Err(Error::InvalidParameter(format!(
                "dt = {} exceeds the nonlinear step limit {:.3e}",
                self.dt,
                NONLINEAR_CFL / rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub time: f64,
    pub mass: f64,
    pub l2: f64,
    pub hamiltonian: f64,
    pub tail_mass: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RunStatus {
    Completed,
    BlowUp { last_time: f64 },
    TailOverflow { time: f64, tail: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub config: EvolutionConfig,
    pub snapshots: Vec<RealField>,
    pub diagnostics: Vec<Diagnostics>,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn grid(&self) -> Grid1D {
        self.snapshots[0].grid()
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }

    pub fn last(&self) -> &RealField {
        self.snapshots.last().expect("trajectory holds at least one snapshot")
    }

    /// Converts an aborted run into its error.
    pub fn into_result(self) -> Result<Trajectory> {
        match self.status {
            RunStatus::Completed => Ok(self),
            RunStatus::BlowUp { last_time } => Err(Error::BlowUp { last_time }),
            RunStatus::TailOverflow { time, tail } => Err(Error::TailOverflow {
                time,
                tail,
                threshold: self.config.tail_threshold.unwrap_or(0.0),
            }),
        }
    }

    /// Field at time `t` by linear interpolation in the interaction picture:
    /// both neighbouring snapshots are carried to `t` by the free flow and
    /// blended.
    pub fn interpolate(&self, t: f64) -> Result<RealField> {
        let c = self.interpolate_raw(t)?;
        Ok(RealField::from_parts(self.grid(), spectral::raw_inverse(&c), t))
    }

    pub(crate) fn interpolate_raw(&self, t: f64) -> Result<Vec<Complex64>> {
        let times = self.times();
        let (start, end) = (times[0], times[times.len() - 1]);
        let slack = 1e-12 * end.abs().max(1.0);
        if !(t >= start - slack && t <= end + slack) {
            return Err(Error::OutsideBackground { time: t, start, end });
        }
        let i = times.partition_point(|&s| s <= t).clamp(1, times.len().max(2) - 1) - 1;
        let grid = self.grid();
        let xi5: Vec<f64> = grid.wavenumbers().iter().map(|k| k.powi(5)).collect();
        let a = spectral::raw_forward(self.snapshots[i].values());
        if times.len() == 1 {
            return Ok(a);
        }
        let b = spectral::raw_forward(self.snapshots[i + 1].values());
        let (ta, tb) = (times[i], times[i + 1]);
        let theta = (t - ta) / (tb - ta);
        Ok((0..grid.n())
            .map(|k| {
                let fa = Complex64::from_polar(1.0, xi5[k] * (t - ta));
                let fb = Complex64::from_polar(1.0, xi5[k] * (t - tb));
                a[k] * fa * (1.0 - theta) + b[k] * fb * theta
            })
            .collect())
    }
}

/// Precomputed symbols and FFT plans for one grid.
struct Engine {
    n: usize,
    xi5: Vec<f64>,
    ik: Vec<Complex64>,
    keep: Vec<bool>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
    factors: HashMap<u64, (Vec<Complex64>, Vec<Complex64>)>,
}

impl Engine {
    fn new(grid: Grid1D, dealias_fraction: f64) -> Engine {
        let n = grid.n();
        let cut = dealias_fraction * grid.nyquist() * (1.0 + 1e-14);
        let xis = grid.wavenumbers();
        let (fwd, inv) = fft_plans(n);
        Engine {
            n,
            xi5: xis.iter().map(|k| k.powi(5)).collect(),
            ik: xis
                .iter()
                .enumerate()
                .map(|(k, &xi)| {
                    if k == n / 2 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(0.0, xi)
                    }
                })
                .collect(),
            keep: xis.iter().map(|xi| xi.abs() <= cut).collect(),
            fwd,
            inv,
            buf: vec![Complex64::new(0.0, 0.0); n],
            factors: HashMap::new(),
        }
    }

    /// `(exp(i xi^5 h), exp(i xi^5 h / 2))`.
    fn factors(&mut self, h: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let xi5 = &self.xi5;
        self.factors
            .entry(h.to_bits())
            .or_insert_with(|| {
                (
                    xi5.iter().map(|&w| Complex64::from_polar(1.0, w * h)).collect(),
                    xi5.iter().map(|&w| Complex64::from_polar(1.0, 0.5 * w * h)).collect(),
                )
            })
            .clone()
    }

    /// Physical values of `v` and of its derivative, from dealiased `v`.
    fn field_and_derivative(&mut self, v: &[Complex64]) -> (Vec<f64>, Vec<f64>) {
        let scale = 1.0 / self.n as f64;
        for k in 0..self.n {
            self.buf[k] = if self.keep[k] {
                v[k] + Complex64::i() * self.ik[k] * v[k]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
        self.inv.process(&mut self.buf);
        (
            self.buf.iter().map(|c| c.re * scale).collect(),
            self.buf.iter().map(|c| c.im * scale).collect(),
        )
    }

    /// Dealiased transform of real samples.
    fn project(&mut self, values: &[f64], out: &mut [Complex64]) {
        for (b, &v) in self.buf.iter_mut().zip(values) {
            *b = Complex64::new(v, 0.0);
        }
        self.fwd.process(&mut self.buf);
        for k in 0..self.n {
            out[k] = if self.keep[k] {
                self.buf[k]
            } else {
                Complex64::new(0.0, 0.0)
            };
        }
    }

    /// `coef * u^m u_x` in Fourier space.
    fn nonlinear(&mut self, v: &[Complex64], m: u32, coef: f64, out: &mut [Complex64]) {
        let (u, ux) = self.field_and_derivative(v);
        let prod: Vec<f64> = u
            .iter()
            .zip(&ux)
            .map(|(&a, &b)| coef * if m == 1 { a } else { a * a } * b)
            .collect();
        self.project(&prod, out);
    }

    /// `a * z_x` in Fourier space for a physical coefficient field `a`.
    fn transport(&mut self, z: &[Complex64], a: &[f64], out: &mut [Complex64]) {
        let (_, zx) = self.field_and_derivative(z);
        let prod: Vec<f64> = a.iter().zip(&zx).map(|(a, b)| a * b).collect();
        self.project(&prod, out);
    }
}

/// One IF-RK4 step of size `h` for a right-hand side `rhs(stage_time, v, out)`.
fn if_rk4(
    v: &mut [Complex64],
    t: f64,
    h: f64,
    e: &[Complex64],
    e2: &[Complex64],
    mut rhs: impl FnMut(f64, &[Complex64], &mut [Complex64]),
) {
    let n = v.len();
    let zero = Complex64::new(0.0, 0.0);
    let (mut k1, mut k2, mut k3, mut k4) = (vec![zero; n], vec![zero; n], vec![zero; n], vec![zero; n]);
    let mut w = vec![zero; n];
    rhs(t, v, &mut k1);
    for k in 0..n {
        w[k] = e2[k] * (v[k] + k1[k] * (0.5 * h));
    }
    rhs(t + 0.5 * h, &w, &mut k2);
    for k in 0..n {
        w[k] = e2[k] * v[k] + k2[k] * (0.5 * h);
    }
    rhs(t + 0.5 * h, &w, &mut k3);
    for k in 0..n {
        w[k] = e[k] * v[k] + e2[k] * k3[k] * h;
    }
    rhs(t + h, &w, &mut k4);
    for k in 0..n {
        v[k] = e[k] * v[k] + (e[k] * k1[k] + (k2[k] + k3[k]) * e2[k] * 2.0 + k4[k]) * (h / 6.0);
    }
}

/// Sub-steps `(count, size)` covering an interval with steps no longer than `dt`.
fn partition(span: f64, dt: f64) -> (usize, f64) {
    let count = (span / dt - 1e-9).ceil().max(1.0) as usize;
    (count, span / count as f64)
}

/// Pseudospectral `sign * u^m u_x` with the default dealiasing for `m`.
pub fn nonlinearity(u: &RealField, m: u32, sign: f64) -> RealField {
    let mut engine = Engine::new(u.grid(), default_dealias(m));
    let v = spectral::raw_forward(u.values());
    let mut out = vec![Complex64::new(0.0, 0.0); v.len()];
    engine.nonlinear(&v, m, sign, &mut out);
    RealField::from_parts(u.grid(), spectral::raw_inverse(&out), u.time())
}

/// `∫ u_xx^2 / 2 + sign u^{m+2} / ((m+1)(m+2)) dx`.
pub fn hamiltonian(u: &RealField, m: u32, sign: f64) -> f64 {
    let uxx = spectral::derivative(u, 2).expect("order 2 is valid");
    let c = sign / ((m + 1) * (m + 2)) as f64;
    let dx = u.grid().dx();
    dx * u
        .values()
        .iter()
        .zip(uxx.values())
        .map(|(&a, &b)| 0.5 * b * b + c * a.powi(m as i32 + 2))
        .sum::<f64>()
}

/// Diagnostics of one snapshot under `cfg`.
pub fn snapshot_diagnostics(u: &RealField, cfg: &EvolutionConfig) -> Diagnostics {
    Diagnostics {
        time: u.time(),
        mass: u.integral(),
        l2: u.l2_norm(),
        hamiltonian: hamiltonian(u, cfg.m, cfg.sign * cfg.nonlinear_scale),
        tail_mass: tail_mass(u),
    }
}

/// Advances `u` by one step of `cfg.dt`.
pub fn step(u: &RealField, cfg: &EvolutionConfig) -> Result<RealField> {
    cfg.validate()?;
    let mut engine = Engine::new(u.grid(), cfg.dealias_fraction);
    let mut v = spectral::raw_forward(u.values());
    advance(&mut engine, &mut v, u.time(), 1, cfg.dt, cfg)?;
    Ok(RealField::from_parts(u.grid(), spectral::raw_inverse(&v), u.time() + cfg.dt))
}

fn advance(engine: &mut Engine, v: &mut [Complex64], t0: f64, count: usize, h: f64, cfg: &EvolutionConfig) -> Result<()> {
    let (e, e2) = engine.factors(h);
    let coef = cfg.sign * cfg.nonlinear_scale;
    let mut t = t0;
    for _ in 0..count {
        if coef == 0.0 {
            for (a, f) in v.iter_mut().zip(&e) {
                *a *= f;
            }
        } else {
            if_rk4(v, t, h, &e, &e2, |_, w, out| engine.nonlinear(w, cfg.m, coef, out));
        }
        if !v.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
            return Err(Error::BlowUp { last_time: t });
        }
        t += h;
    }
    Ok(())
}

/// Runs to `t_end`, recording snapshots and diagnostics. Aborted runs keep
/// every snapshot taken before the failure and report it in `status`.
pub fn evolve_with_status(u0: &RealField, cfg: &EvolutionConfig) -> Result<Trajectory> {
    cfg.validate()?;
    cfg.check_step_contract(u0)?;
    let grid = u0.grid();
    let mut engine = Engine::new(grid, cfg.dealias_fraction);
    let mut v = spectral::raw_forward(u0.values());
    let mut t = cfg.t_start;
    let mut traj = Trajectory {
        config: cfg.clone(),
        snapshots: Vec::new(),
        diagnostics: Vec::new(),
        status: RunStatus::Completed,
    };
    for &target in &cfg.snapshot_times {
        if target > t {
            let (count, h) = partition(target - t, cfg.dt);
            if let Err(Error::BlowUp { .. }) = advance(&mut engine, &mut v, t, count, h, cfg) {
                traj.status = RunStatus::BlowUp {
                    last_time: traj.snapshots.last().map_or(t, |s| s.time()),
                };
                break;
            }
            t = target;
        }
        let u = RealField::from_parts(grid, spectral::raw_inverse(&v), t);
        let d = snapshot_diagnostics(&u, cfg);
        traj.snapshots.push(u);
        traj.diagnostics.push(d);
        if let Some(th) = cfg.tail_threshold {
            if d.tail_mass > th {
                traj.status = RunStatus::TailOverflow {
                    time: t,
                    tail: d.tail_mass,
                };
                break;
            }
        }
    }
    if traj.snapshots.is_empty() {
        return Err(Error::BlowUp { last_time: t });
    }
    Ok(traj)
}

/// [`evolve_with_status`] with aborted runs turned into errors.
pub fn evolve(u0: &RealField, cfg: &EvolutionConfig) -> Result<Trajectory> {
    evolve_with_status(u0, cfg)?.into_result()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedOptions {
    pub dt: f64,
    pub snapshot_times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearizedTrajectory {
    pub m: u32,
    pub sign: f64,
    pub snapshots: Vec<RealField>,
}

impl LinearizedTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time()).collect()
    }
}

/// Maximum background snapshot spacing in units of the background step.
pub const MAX_SNAPSHOT_SPACING: f64 = 10.0;

/// Integrates `z_t - z_xxxxx = sign u^m z_x` from `z0.time()` with `u`
/// interpolated from the background snapshots.
pub fn linearized_evolve(z0: &RealField, bg: &Trajectory, opts: &LinearizedOptions) -> Result<LinearizedTrajectory> {
    let grid = bg.grid();
    if z0.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if !(opts.dt > 0.0) {
        return Err(Error::InvalidParameter(format!("dt = {} must be positive", opts.dt)));
    }
    let times = bg.times();
    let widest = times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if widest > MAX_SNAPSHOT_SPACING * bg.config.dt * (1.0 + 1e-9) {
        return Err(Error::InvalidParameter(format!(
            "background snapshot spacing {widest} exceeds {MAX_SNAPSHOT_SPACING} steps"
        )));
    }
    let (start, end) = (times[0], times[times.len() - 1]);
    for &t in std::iter::once(&z0.time()).chain(&opts.snapshot_times) {
        if t < start - 1e-12 || t > end + 1e-12 {
            return Err(Error::OutsideBackground { time: t, start, end });
        }
    }
    if opts.snapshot_times.windows(2).any(|w| w[1] <= w[0]) || opts.snapshot_times.first().is_some_and(|&t| t < z0.time()) {
        return Err(Error::InvalidParameter("snapshot times must increase from z0.time()".into()));
    }
    let m = bg.config.m;
    let coef = bg.config.sign * bg.config.nonlinear_scale;
    let mut engine = Engine::new(grid, bg.config.dealias_fraction);
    let mut cache: Option<(f64, Vec<f64>)> = None;
    let mut coefficient = |t: f64, engine: &mut Engine| -> Result<Vec<f64>> {
        if let Some((ct, a)) = &cache {
            if *ct == t {
                return Ok(a.clone());
            }
        }
        let uhat = bg.interpolate_raw(t)?;
        let (u, _) = engine.field_and_derivative(&uhat);
        let a: Vec<f64> = u.iter().map(|&x| coef * x.powi(m as i32)).collect();
        cache = Some((t, a.clone()));
        Ok(a)
    };
    let mut v = spectral::raw_forward(z0.values());
    let mut t = z0.time();
    let mut snapshots = Vec::with_capacity(opts.snapshot_times.len());
    for &target in &opts.snapshot_times {
        if target > t {
            let (count, h) = partition(target - t, opts.dt);
            let (e, e2) = engine.factors(h);
            for _ in 0..count {
                let stages = [t, t + 0.5 * h, (t + h).min(end)];
                let coeffs: Vec<Vec<f64>> = stages
                    .iter()
                    .map(|&s| coefficient(s, &mut engine))
                    .collect::<Result<_>>()?;
                if_rk4(&mut v, t, h, &e, &e2, |s, w, out| {
                    let idx = if s == t {
                        0
                    } else if s == t + 0.5 * h {
                        1
                    } else {
                        2
                    };
                    engine.transport(w, &coeffs[idx], out)
                });
                t += h;
            }
            t = target;
        }
        snapshots.push(RealField::from_parts(grid, spectral::raw_inverse(&v), t));
    }
    Ok(LinearizedTrajectory {
        m,
        sign: bg.config.sign,
        snapshots,
    })
}
