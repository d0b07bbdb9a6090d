//! Quadratic normal form for the transport term of the linearized flow.
//!
//! The bilinear multiplier `B` has symbol `1 / (ξ² + ξη + η²)` and is summed
//! directly over mode pairs. It enters the cubic correction of the energy of
//! `y = |D|^{1/2} z`.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{LinearizedTrajectory, Trajectory};
use crate::spectral::{
    forward_transform, fractional_derivative, hilbert_transform, inverse_transform, lp_project, antiderivative, Grid1D,
    LpKind, RealField, SpectralField,
};
use crate::vector_fields::{apply_lnl, OperatorParams};

/// Both sides of `((ξ+η)⁵ - ξ⁵ - η⁵) / (ξ² + ξη + η²) = 5ξη(ξ+η)`.
pub fn symbol_identity(xi: f64, eta: f64) -> Result<(f64, f64)> {
    if xi == 0.0 && eta == 0.0 {
        return Err(Error::InvalidParameter("the symbol is singular at (0, 0)".into()));
    }
    let lhs = ((xi + eta).powi(5) - xi.powi(5) - eta.powi(5)) / (xi * xi + xi * eta + eta * eta);
    Ok((lhs, 5.0 * xi * eta * (xi + eta)))
}

pub fn normal_form_symbol(xi: f64, eta: f64) -> f64 {
    1.0 / (xi * xi + xi * eta + eta * eta)
}

#[derive(Clone)]
pub struct BilinearSpec {
    symbol: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    /// Modes with `|ξ|` below this are excluded from the sum.
    pub hi_cutoff: f64,
}

impl fmt::Debug for BilinearSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BilinearSpec").field("hi_cutoff", &self.hi_cutoff).finish()
    }
}

impl BilinearSpec {
    pub fn new(symbol: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, hi_cutoff: f64) -> Result<Self> {
        if !(hi_cutoff >= 0.0 && hi_cutoff.is_finite()) {
            return Err(Error::InvalidParameter(format!("cutoff {hi_cutoff} must be nonnegative")));
        }
        Ok(BilinearSpec {
            symbol: Arc::new(symbol),
            hi_cutoff,
        })
    }

    /// `1 / (ξ² + ξη + η²)` restricted to `|ξ|, |η| ≥ hi_cutoff > 0`.
    pub fn normal_form(hi_cutoff: f64) -> Result<Self> {
        if !(hi_cutoff > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "normal-form cutoff {hi_cutoff} must be positive"
            )));
        }
        Self::new(normal_form_symbol, hi_cutoff)
    }

    pub fn eval(&self, xi: f64, eta: f64) -> f64 {
        (self.symbol)(xi, eta)
    }
}

/// Output coefficient at `ζ` is `Δξ/√(2π) Σ_{ξ+η=ζ} B(ξ,η) f̂(ξ) ĝ(η)`, summed
/// over retained non-Nyquist modes whose sum stays on the grid.
pub fn bilinear_apply(f: &RealField, g: &RealField, spec: &BilinearSpec) -> Result<RealField> {
    if f.grid() != g.grid() {
        return Err(Error::GridMismatch);
    }
    let grid = f.grid();
    let fs = forward_transform(f);
    let gs = forward_transform(g);
    let out = bilinear_coefficients(grid, fs.coefficients(), gs.coefficients(), spec);
    inverse_transform(&SpectralField::new(grid, out, f.time())?)
}

fn bilinear_coefficients(grid: Grid1D, fc: &[Complex64], gc: &[Complex64], spec: &BilinearSpec) -> Vec<Complex64> {
    let n = grid.n() as i64;
    let half = n / 2;
    let dxi = grid.dxi();
    let cut = spec.hi_cutoff * (1.0 - 1e-12);
    let slot = |k: i64| (if k < 0 { k + n } else { k }) as usize;
    let retained: Vec<i64> = (-half + 1..half).filter(|&k| (k as f64 * dxi).abs() >= cut).collect();
    let pref = dxi / (2.0 * std::f64::consts::PI).sqrt();
    (0..n)
        .into_par_iter()
        .map(|s| {
            let zeta = if s < half { s } else { s - n };
            if zeta == -half {
                return Complex64::new(0.0, 0.0);
            }
            let mut acc = Complex64::new(0.0, 0.0);
            for &p in &retained {
                let q = zeta - p;
                if q <= -half || q >= half || ((q as f64) * dxi).abs() < cut {
                    continue;
                }
                let b = spec.eval(p as f64 * dxi, q as f64 * dxi);
                acc += fc[slot(p)] * gc[slot(q)] * b;
            }
            acc * pref
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyOptions {
    /// Factor in front of the cubic term.
    pub coefficient: f64,
    /// High-pass threshold is `k_c t^{-1/5}`.
    pub k_c: f64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        EnergyOptions {
            coefficient: 0.1,
            k_c: 1.0,
        }
    }
}

/// Cubic part `c ∫ |D|^{-1/2} y_hi · B(∂ₓ⁻¹ a_hi, H |D|^{-1/2} y_hi)`, where
/// `a` is the transport coefficient (`sign u^m`).
pub fn energy_correction(y: &RealField, a: &RealField, t: f64, opts: &EnergyOptions) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("energy time t = {t} must be positive")));
    }
    if y.grid() != a.grid() {
        return Err(Error::GridMismatch);
    }
    if opts.coefficient == 0.0 {
        return Ok(0.0);
    }
    let n_c = opts.k_c * t.powf(-0.2);
    let y_hi = lp_project(y, n_c, LpKind::Ge)?;
    let a_hi = lp_project(a, n_c, LpKind::Ge)?;
    let v = fractional_derivative(&y_hi, -0.5)?;
    let hv = hilbert_transform(&v);
    let w = antiderivative(&a_hi)?;
    let spec = BilinearSpec::normal_form(0.5 * n_c)?;
    let b = bilinear_apply(&w, &hv, &spec)?;
    Ok(opts.coefficient * v.inner(&b)?)
}

/// `½‖y‖² + energy_correction`.
pub fn corrected_energy(y: &RealField, a: &RealField, t: f64, opts: &EnergyOptions) -> Result<f64> {
    let plain = 0.5 * y.l2_norm().powi(2);
    Ok(plain + energy_correction(y, a, t, opts)?)
}

/// Keeps the modes representable on `n` points of the same box.
pub fn coarsen(f: &RealField, n: usize) -> Result<RealField> {
    let grid = f.grid();
    if n == grid.n() {
        return Ok(f.clone());
    }
    if n > grid.n() {
        return Err(Error::InvalidParameter(format!("cannot coarsen {} points to {n}", grid.n())));
    }
    let coarse = Grid1D::new(n, grid.length())?;
    let spec = forward_transform(f);
    let c = spec.coefficients();
    let (big, half) = (grid.n(), n / 2);
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 1..half {
        out[k] = c[k];
        out[n - k] = c[big - k];
    }
    out[0] = c[0];
    inverse_transform(&SpectralField::new(coarse, out, f.time())?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySeries {
    pub times: Vec<f64>,
    pub e_corrected: Vec<f64>,
    pub e_plain: Vec<f64>,
    pub ratio: Vec<f64>,
    /// `(E_i - E_{i-1}) / ((t_i - t_{i-1}) ‖y_i‖²)`, zero on the first row.
    pub drift_rate: Vec<f64>,
    /// `‖y‖_{L²}` per row.
    pub y_norm: Vec<f64>,
}

impl EnergySeries {
    fn from_rows(rows: Vec<(f64, f64, f64)>) -> EnergySeries {
        let mut s = EnergySeries {
            times: Vec::new(),
            e_corrected: Vec::new(),
            e_plain: Vec::new(),
            ratio: Vec::new(),
            drift_rate: Vec::new(),
            y_norm: Vec::new(),
        };
        for (i, &(t, e, p)) in rows.iter().enumerate() {
            s.times.push(t);
            s.e_corrected.push(e);
            s.e_plain.push(p);
            s.ratio.push(if p > 0.0 { e / p } else { 1.0 });
            s.y_norm.push((2.0 * p).sqrt());
            let rate = if i == 0 || p == 0.0 {
                0.0
            } else {
                (e - rows[i - 1].1) / ((t - rows[i - 1].0) * 2.0 * p)
            };
            s.drift_rate.push(rate);
        }
        s
    }

    fn drift(v: &[f64]) -> f64 {
        match v.first() {
            Some(&e0) if e0 != 0.0 => v.iter().map(|e| (e - e0).abs()).fold(0.0, f64::max) / e0.abs(),
            _ => 0.0,
        }
    }

    /// `max |E(t) - E(t_0)| / E(t_0)`.
    pub fn corrected_drift(&self) -> f64 {
        Self::drift(&self.e_corrected)
    }

    pub fn plain_drift(&self) -> f64 {
        Self::drift(&self.e_plain)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E,E_plain,ratio,drift_rate\n");
        for i in 0..self.times.len() {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                self.times[i], self.e_corrected[i], self.e_plain[i], self.ratio[i], self.drift_rate[i]
            ));
        }
        out
    }
}

/// Transport coefficient `sign scale u^m` of a background snapshot.
fn coefficient_field(u: &RealField, bg: &Trajectory) -> RealField {
    let c = bg.config.sign * bg.config.nonlinear_scale;
    let m = bg.config.m as i32;
    u.map(|v| c * v.powi(m))
}

/// Energy of `y = |D|^{1/2} z` along a linearized run, optionally on a coarser
/// copy of the grid with `coarse_n` points.
pub fn track_linearized_energy(
    lin: &LinearizedTrajectory,
    bg: &Trajectory,
    opts: &EnergyOptions,
    coarse_n: Option<usize>,
) -> Result<EnergySeries> {
    let rows = lin
        .snapshots
        .iter()
        .map(|z| {
            let t = z.time();
            let u = bg.interpolate(t)?;
            let a = coefficient_field(&u, bg);
            let y = fractional_derivative(z, 0.5)?;
            let (y, a) = match coarse_n {
                Some(n) => (coarsen(&y, n)?, coarsen(&a, n)?),
                None => (y, a),
            };
            let plain = 0.5 * y.l2_norm().powi(2);
            Ok((t, plain + energy_correction(&y, &a, t, opts)?, plain))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergySeries::from_rows(rows))
}

/// Energy of `z = |D|^{1/2} L^NL u` along a nonlinear run (snapshots with
/// `t > 0`).
pub fn track_lnl_energy(traj: &Trajectory, opts: &EnergyOptions, coarse_n: Option<usize>) -> Result<EnergySeries> {
    let cfg = &traj.config;
    let sign = cfg.sign * cfg.nonlinear_scale;
    let rows = traj
        .snapshots
        .iter()
        .filter(|u| u.time() > 0.0)
        .map(|u| {
            let t = u.time();
            let z = fractional_derivative(&apply_lnl(u, &OperatorParams { t, m: cfg.m, sign })?, 0.5)?;
            let a = coefficient_field(u, traj);
            let (z, a) = match coarse_n {
                Some(n) => (coarsen(&z, n)?, coarsen(&a, n)?),
                None => (z, a),
            };
            let plain = 0.5 * z.l2_norm().powi(2);
            Ok((t, plain + energy_correction(&z, &a, t, opts)?, plain))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EnergySeries::from_rows(rows))
}
