//! Weighted operators built from `x` and `5t ∂ₓ⁴`, and their identities
//! along the free and nonlinear flows.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::Trajectory;
use crate::spectral::{self, antiderivative, derivative, linear_propagate, require_mean_zero, RealField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatorParams {
    pub t: f64,
    pub m: u32,
    pub sign: f64,
}

impl OperatorParams {
    pub fn new(t: f64, m: u32, sign: f64) -> Result<Self> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::InvalidParameter(format!("operator time t = {t} must be positive")));
        }
        if m != 1 && m != 2 {
            return Err(Error::InvalidParameter(format!("power m = {m} must be 1 or 2")));
        }
        if sign != 1.0 && sign != -1.0 {
            return Err(Error::InvalidParameter(format!("sign {sign} must be +1 or -1")));
        }
        Ok(OperatorParams { t, m, sign })
    }

    /// Coefficient of `t u^{m+1}` in `L^NL`.
    pub fn power_coefficient(&self) -> f64 {
        self.sign * 5.0 / (self.m + 1) as f64
    }

    /// Constant `c_m` in `Λu = L^NL u + c_m ∂ₓ⁻¹u`.
    pub fn lambda_constant(&self) -> f64 {
        if self.m == 1 {
            3.0
        } else {
            1.0
        }
    }

    /// Coefficient of `u^{m+1}` in the forcing of the equation for `L^NL u`.
    pub fn forcing_coefficient(&self) -> f64 {
        self.sign * (4 - self.m) as f64 / (self.m + 1) as f64
    }
}

/// `x u + 5t ∂ₓ⁴u`.
pub fn apply_l(u: &RealField, t: f64) -> Result<RealField> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("t = {t} must be nonnegative")));
    }
    let weighted = u.map_with_x(|x, v| x * v);
    if t == 0.0 {
        return Ok(weighted);
    }
    weighted.add(&derivative(u, 4)?.scale(5.0 * t))
}

/// Relative L² defect of `L(t) S(t) u0 = S(t)(x u0)`.
pub fn commutation_check(u0: &RealField, t: f64) -> Result<f64> {
    let xu = u0.map_with_x(|x, v| x * v);
    let lhs = apply_l(&linear_propagate(u0, t), t)?;
    let rhs = linear_propagate(&xu, t);
    let scale = xu.l2_norm();
    if scale == 0.0 {
        return Ok(0.0);
    }
    Ok(lhs.sub(&rhs)?.l2_norm() / scale)
}

/// `x u + 5t u_4x + sign 5/(m+1) t u^{m+1}`.
pub fn apply_lnl(u: &RealField, p: &OperatorParams) -> Result<RealField> {
    let c = p.power_coefficient() * p.t;
    let power = p.m as i32 + 1;
    apply_l(u, p.t)?.zip_with(u, |a, v| a + c * v.powi(power))
}

/// `L^NL u + c_m ∂ₓ⁻¹u`; `u` must have zero mean.
pub fn lambda_field(u: &RealField, p: &OperatorParams) -> Result<RealField> {
    require_mean_zero(u)?;
    apply_lnl(u, p)?.add(&antiderivative(u)?.scale(p.lambda_constant()))
}

/// The snapshot at time `t` mapped to the unit-time frame:
/// `ũ(y) = t^{4/(5m)} u(t, y t^{1/5})`, sampled on a box of length `L t^{-1/5}`.
pub fn rescale(u: &RealField, t: f64, m: u32) -> Result<RealField> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("rescaling time t = {t} must be positive")));
    }
    let grid = u.grid().scaled(t.powf(-0.2))?;
    let amp = t.powf(4.0 / (5.0 * m as f64));
    RealField::new(grid, u.values().iter().map(|v| amp * v).collect(), 1.0)
}

/// Relative defect of `L^NL_1 ũ = t^{(4-m)/(5m)} (L^NL_t u)(t, x t^{1/5})`.
pub fn scaling_consistency(u: &RealField, p: &OperatorParams) -> Result<f64> {
    let lhs = apply_lnl(&rescale(u, p.t, p.m)?, &OperatorParams { t: 1.0, ..*p })?;
    let factor = p.t.powf((4.0 - p.m as f64) / (5.0 * p.m as f64));
    let rhs = apply_lnl(u, p)?;
    let diff: f64 = lhs
        .values()
        .iter()
        .zip(rhs.values())
        .map(|(a, b)| (a - factor * b).powi(2))
        .sum();
    let norm: f64 = rhs.values().iter().map(|b| (factor * b).powi(2)).sum();
    Ok((diff / norm).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSeries {
    pub times: Vec<f64>,
    pub residual: Vec<f64>,
    pub fitted_coefficient: Vec<f64>,
    /// Least-squares coefficient over all interior snapshots together.
    pub global_coefficient: f64,
}

impl ResidualSeries {
    pub fn max_residual(&self) -> f64 {
        self.residual.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,residual,fitted_coefficient\n");
        for i in 0..self.times.len() {
            out.push_str(&format!("{},{},{}\n", self.times[i], self.residual[i], self.fitted_coefficient[i]));
        }
        out
    }
}

/// Per-snapshot pieces of `w_t - w_5x - sign u^m w_x` for `w = L^NL u`.
struct Defect {
    t: f64,
    defect: Vec<f64>,
    power: Vec<f64>,
    w_norm2: f64,
}

fn three_point_weights(a: f64, b: f64, c: f64) -> (f64, f64, f64) {
    let (h1, h2) = (b - a, c - b);
    (-h2 / (h1 * (h1 + h2)), (h2 - h1) / (h1 * h2), h1 / (h2 * (h1 + h2)))
}

type FieldMap = fn(&RealField, &OperatorParams) -> Result<RealField>;

fn defects(traj: &Trajectory, power: u32, field: FieldMap, project_mean: bool) -> Result<Vec<Defect>> {
    let snaps = &traj.snapshots;
    if snaps.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "residual needs at least 3 snapshots, got {}",
            snaps.len()
        )));
    }
    let m = traj.config.m;
    let sign = traj.config.sign * traj.config.nonlinear_scale;
    let params = |t: f64| OperatorParams { t, m, sign };
    let ws: Vec<RealField> = snaps
        .par_iter()
        .map(|u| field(u, &params(u.time())))
        .collect::<Result<_>>()?;
    let xi5: Vec<f64> = traj.grid().wavenumbers().iter().map(|k| k.powi(5)).collect();
    (1..snaps.len() - 1)
        .into_par_iter()
        .map(|i| {
            let (ta, tb, tc) = (snaps[i - 1].time(), snaps[i].time(), snaps[i + 1].time());
            let (ca, cb, cc) = three_point_weights(ta, tb, tc);
            let (fa, fb, fc) = (
                spectral::raw_forward(ws[i - 1].values()),
                spectral::raw_forward(ws[i].values()),
                spectral::raw_forward(ws[i + 1].values()),
            );
            // d/dt of e^{-i xi^5 (s - tb)} w(s) at s = tb equals w_t - w_5x.
            let dt_hat: Vec<Complex64> = (0..xi5.len())
                .map(|k| {
                    fa[k] * Complex64::from_polar(ca, -xi5[k] * (ta - tb))
                        + fb[k] * cb
                        + fc[k] * Complex64::from_polar(cc, -xi5[k] * (tc - tb))
                })
                .collect();
            let w_t = spectral::raw_inverse(&dt_hat);
            let wx = derivative(&ws[i], 1)?;
            let u = snaps[i].values();
            let mut defect: Vec<f64> = w_t
                .iter()
                .zip(wx.values())
                .zip(u)
                .map(|((d, wx), u)| d - sign * u.powi(m as i32) * wx)
                .collect();
            if project_mean {
                let mean = defect.iter().sum::<f64>() / defect.len() as f64;
                defect.iter_mut().for_each(|d| *d -= mean);
            }
            Ok(Defect {
                t: tb,
                defect,
                power: u.iter().map(|v| v.powi(power as i32)).collect(),
                w_norm2: ws[i].values().iter().map(|v| v * v).sum(),
            })
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `‖w_t - w_5x - sign u^m w_x - c u^power‖ / ‖w‖` per interior snapshot.
pub fn residual_with_coefficient(traj: &Trajectory, coefficient: f64, power: u32) -> Result<ResidualSeries> {
    series_from(defects(traj, power, apply_lnl, false)?, coefficient)
}

fn series_from(ds: Vec<Defect>, coefficient: f64) -> Result<ResidualSeries> {
    let mut series = ResidualSeries {
        times: Vec::with_capacity(ds.len()),
        residual: Vec::with_capacity(ds.len()),
        fitted_coefficient: Vec::with_capacity(ds.len()),
        global_coefficient: 0.0,
    };
    let (mut num, mut den) = (0.0, 0.0);
    for d in &ds {
        let pp = dot(&d.power, &d.power);
        let dp = dot(&d.defect, &d.power);
        num += dp;
        den += pp;
        let r2: f64 = d
            .defect
            .iter()
            .zip(&d.power)
            .map(|(a, b)| (a - coefficient * b).powi(2))
            .sum();
        series.times.push(d.t);
        series.residual.push(if d.w_norm2 > 0.0 { (r2 / d.w_norm2).sqrt() } else { 0.0 });
        series.fitted_coefficient.push(if pp > 0.0 { dp / pp } else { 0.0 });
    }
    series.global_coefficient = if den > 0.0 { num / den } else { 0.0 };
    Ok(series)
}

/// `‖w_t - w_5x - sign u^m w_x‖ / ‖w‖` for `w = Λu`, constants removed.
/// The trajectory must have zero mean.
pub fn lambda_residual(traj: &Trajectory) -> Result<ResidualSeries> {
    series_from(defects(traj, traj.config.m + 1, lambda_field, true)?, 0.0)
}

/// Residual of the forced linearized equation satisfied by `L^NL u`, with the
/// forcing `sign (4-m)/(m+1) u^{m+1}`.
pub fn lnl_residual(traj: &Trajectory) -> Result<ResidualSeries> {
    let cfg = &traj.config;
    let sign = cfg.sign * cfg.nonlinear_scale;
    let coefficient = sign * (4 - cfg.m) as f64 / (cfg.m + 1) as f64;
    residual_with_coefficient(traj, coefficient, cfg.m + 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Grid1D;
    use std::f64::consts::PI;

    #[test]
    fn l_on_cosine() {
        let g = Grid1D::new(16, 2.0 * PI).unwrap();
        let u = RealField::from_fn(g, 0.0, f64::cos);
        let lu = apply_l(&u, 1.0).unwrap();
        let expect = RealField::from_fn(g, 0.0, |x| x * x.cos() + 5.0 * x.cos());
        assert!(lu.sub(&expect).unwrap().max_abs() < 1e-11);
        let l0 = apply_l(&u, 0.0).unwrap();
        assert_eq!(l0, u.map_with_x(|x, v| x * v));
    }

    #[test]
    fn lnl_minus_l_is_power_term() {
        let g = Grid1D::new(64, 20.0).unwrap();
        let u = RealField::from_fn(g, 0.0, |x| (-x * x).exp());
        for (m, s) in [(1, 1.0), (2, -1.0)] {
            let p = OperatorParams::new(0.7, m, s).unwrap();
            let d = apply_lnl(&u, &p).unwrap().sub(&apply_l(&u, 0.7).unwrap()).unwrap();
            let expect = u.map(|v| s * 5.0 / (m + 1) as f64 * 0.7 * v.powi(m as i32 + 1));
            assert!(d.sub(&expect).unwrap().max_abs() < 1e-14);
        }
        assert_eq!(apply_lnl(&RealField::zeros(g, 0.0), &OperatorParams::new(1.0, 1, 1.0).unwrap()).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn lambda_needs_zero_mean() {
        let g = Grid1D::new(64, 2.0 * PI).unwrap();
        let p = OperatorParams::new(1.0, 1, 1.0).unwrap();
        let s = RealField::from_fn(g, 0.0, f64::sin);
        let diff = lambda_field(&s, &p).unwrap().sub(&apply_lnl(&s, &p).unwrap()).unwrap();
        let expect = RealField::from_fn(g, 0.0, |x| -3.0 * x.cos());
        assert!(diff.sub(&expect).unwrap().max_abs() < 1e-13);
        let c = RealField::from_fn(g, 0.0, |_| 1.0);
        assert!(matches!(lambda_field(&c, &p), Err(Error::NotMeanZero { .. })));
    }

    #[test]
    fn forcing_constants() {
        assert_eq!(OperatorParams::new(1.0, 1, 1.0).unwrap().forcing_coefficient(), 1.5);
        assert!((OperatorParams::new(1.0, 2, 1.0).unwrap().forcing_coefficient() - 2.0 / 3.0).abs() < 1e-16);
        assert!(OperatorParams::new(0.0, 1, 1.0).is_err());
    }

    #[test]
    fn three_point_weights_exact_on_quadratics() {
        let (a, b, c) = three_point_weights(0.1, 0.4, 0.5);
        let f = |t: f64| 3.0 * t * t - t + 2.0;
        let d = a * f(0.1) + b * f(0.4) + c * f(0.5);
        assert!((d - (6.0 * 0.4 - 1.0)).abs() < 1e-12);
    }
}
