//! The fifth-order Airy kernel
//!
//! ```text
//! A(x) = ∫ exp(i (η^5 + η x)) dη
//! ```
//!
//! and the convolution form of the free flow
//! `u(t) = (2π)^{-1} t^{-1/5} A(t^{-1/5} ·) * u0`.
//!
//! The production evaluator deforms the half-line integral `∫_0^∞` into the
//! sector `0 < arg η < π/5`, where `exp(i η^5)` decays, and takes `A = 2 Re`.
//! For `x > 0` the path climbs the imaginary axis to height `ρ/√2`,
//! `ρ = (x/5)^{1/4}`, runs horizontally to the complex saddle `ρ e^{iπ/4}` and
//! leaves along the ray of angle `π/10`. The imaginary-axis piece is purely
//! imaginary and drops out of `2 Re`. For `x < 0` the path follows the real
//! axis to the real saddle `ρ` and then the same ray. Every straight piece is
//! integrated with composite 20-point Gauss-Legendre, doubling the panel
//! count until successive sums agree.
//!
//! [`filon`] holds an independent evaluator that works on the real axis.

pub mod filon;

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norms::bracket;
use crate::quadrature::gl20;
use crate::spectral::{raw_forward, raw_inverse, RealField};

/// Default table half-range.
pub const DEFAULT_X_MAX: f64 = 500.0;

/// Absolute error target of a single kernel evaluation.
pub const ABS_TARGET: f64 = 1e-9;

/// Constant `c` in `u(t) = c t^{-1/5} A(t^{-1/5} ·) * u0`. The value is the one
/// recovered by [`calibrate_prefactor`].
pub const PROPAGATOR_PREFACTOR: f64 = 1.0 / (2.0 * PI);

const TABLE_MAGIC: &[u8; 4] = b"QAK1";
const REL_TOL: f64 = 1e-13;
const MAX_PANELS: usize = 1 << 15;
const VALLEY: f64 = PI / 10.0;
const RAY_DECAY: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelMethod {
    ContourQuad,
    FilonOracle,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub value: f64,
    pub est_error: f64,
}

/// `A(x)` by contour quadrature for `|x| <= 500`.
pub fn airy5(x: f64) -> Result<f64> {
    airy5_within(x, DEFAULT_X_MAX).map(|v| v.value)
}

/// `A(x)` with its error estimate for `|x| <= x_max`.
pub fn airy5_within(x: f64, x_max: f64) -> Result<KernelValue> {
    if !(x.abs() <= x_max) {
        return Err(Error::KernelRange { x, x_max });
    }
    let v = contour(x);
    if v.est_error > ABS_TARGET {
        return Err(Error::Quadrature {
            x,
            achieved: v.est_error,
        });
    }
    Ok(v)
}

fn phase(eta: Complex64, x: f64) -> Complex64 {
    let e2 = eta * eta;
    e2 * e2 * eta + eta * x
}

fn integrand(eta: Complex64, x: f64) -> Complex64 {
    (Complex64::i() * phase(eta, x)).exp()
}

fn segment_sum(a: Complex64, b: Complex64, x: f64, panels: usize) -> Complex64 {
    let (nodes, weights) = gl20();
    let d = b - a;
    let h = 1.0 / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let lo = p as f64 * h;
        let mut part = Complex64::new(0.0, 0.0);
        for (t, w) in nodes.iter().zip(weights) {
            part += integrand(a + d * (lo + 0.5 * h * (t + 1.0)), x) * *w;
        }
        acc += part;
    }
    acc * d * (0.5 * h)
}

/// Straight-segment integral and its doubling error estimate.
fn integrate_segment(a: Complex64, b: Complex64, x: f64) -> (Complex64, f64) {
    const PROBES: usize = 64;
    let d = b - a;
    let (mut tv_re, mut tv_im, mut peak) = (0.0, 0.0, 0.0f64);
    let mut prev = phase(a, x);
    for k in 0..=PROBES {
        let p = phase(a + d * (k as f64 / PROBES as f64), x);
        tv_re += (p.re - prev.re).abs();
        tv_im += (p.im - prev.im).abs();
        peak = peak.max((-p.im).exp());
        prev = p;
    }
    let scale = peak * d.norm();
    let mut panels = ((tv_re / 3.0 + tv_im / 20.0).ceil() as usize).max(2);
    let mut q = segment_sum(a, b, x, panels);
    loop {
        let q2 = segment_sum(a, b, x, 2 * panels);
        let err = (q2 - q).norm();
        if err <= REL_TOL * scale || 2 * panels >= MAX_PANELS {
            return (q2, err);
        }
        panels *= 2;
        q = q2;
    }
}

/// Length of the valley ray from `start` after which the integrand has decayed
/// by `exp(-RAY_DECAY)`.
fn ray_length(start: Complex64, x: f64) -> f64 {
    let dir = Complex64::from_polar(1.0, VALLEY);
    let base = phase(start, x).im;
    let mut r = 0.25;
    while phase(start + dir * r, x).im - base < RAY_DECAY {
        r *= 1.5;
    }
    r
}

fn contour(x: f64) -> KernelValue {
    let dir = Complex64::from_polar(1.0, VALLEY);
    let rho = (x.abs() / 5.0).powf(0.25);
    let mut pieces: Vec<(Complex64, Complex64)> = Vec::with_capacity(2);
    let ray_start = if x > 0.0 {
        let y0 = rho / 2f64.sqrt();
        let saddle = Complex64::new(y0, y0);
        pieces.push((Complex64::new(0.0, y0), saddle));
        saddle
    } else if x < 0.0 {
        pieces.push((Complex64::new(0.0, 0.0), Complex64::new(rho, 0.0)));
        Complex64::new(rho, 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    };
    pieces.push((ray_start, ray_start + dir * ray_length(ray_start, x)));
    let (mut total, mut err) = (Complex64::new(0.0, 0.0), 0.0);
    for (a, b) in pieces {
        let (q, e) = integrate_segment(a, b, x);
        total += q;
        err += e;
    }
    KernelValue {
        value: 2.0 * total.re,
        est_error: 2.0 * err,
    }
}

/// Sampled kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable {
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
    pub method: KernelMethod,
    pub est_error: Vec<f64>,
}

impl KernelTable {
    pub fn from_samples(xs: Vec<f64>, values: Vec<f64>, method: KernelMethod, est_error: Vec<f64>) -> Result<Self> {
        if xs.len() != values.len() || xs.len() != est_error.len() {
            return Err(Error::InvalidParameter("table columns differ in length".into()));
        }
        if values.iter().chain(&xs).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("table holds non-finite samples".into()));
        }
        if est_error.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::InvalidParameter("error estimates must be nonnegative".into()));
        }
        if xs.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("abscissae must increase".into()));
        }
        Ok(KernelTable {
            xs,
            values,
            method,
            est_error,
        })
    }

    /// Samples `x_min, x_min + dx, ...` up to `x_max`, evaluated in parallel.
    pub fn build(x_min: f64, x_max: f64, dx: f64, method: KernelMethod) -> Result<Self> {
        if !(dx > 0.0 && x_max > x_min) {
            return Err(Error::InvalidParameter("need dx > 0 and x_max > x_min".into()));
        }
        let count = ((x_max - x_min) / dx + 1e-9).floor() as usize + 1;
        let xs: Vec<f64> = (0..count).map(|i| x_min + i as f64 * dx).collect();
        let reach = x_min.abs().max(x_max.abs());
        let samples: Vec<KernelValue> = xs
            .par_iter()
            .map(|&x| match method {
                KernelMethod::ContourQuad => airy5_within(x, reach),
                KernelMethod::FilonOracle => {
                    let a = filon::airy5_filon(x);
                    Ok(KernelValue {
                        value: a.re,
                        est_error: a.im.abs(),
                    })
                }
            })
            .collect::<Result<_>>()?;
        KernelTable::from_samples(
            xs,
            samples.iter().map(|s| s.value).collect(),
            method,
            samples.iter().map(|s| s.est_error).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    /// Common spacing if the abscissae are uniform.
    pub fn step(&self) -> Option<f64> {
        if self.xs.len() < 2 {
            return None;
        }
        let h = (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64;
        let uniform = self
            .xs
            .windows(2)
            .all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h);
        uniform.then_some(h)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.xs[0], self.xs[self.xs.len() - 1])
    }

    /// Eight-point Lagrange interpolation on a uniform table.
    pub fn interpolate(&self, x: f64) -> Result<f64> {
        let h = self
            .step()
            .ok_or_else(|| Error::InvalidParameter("interpolation needs a uniform table".into()))?;
        let (lo, hi) = self.range();
        if !(x >= lo - 1e-9 * h && x <= hi + 1e-9 * h) || self.len() < 8 {
            return Err(Error::KernelRange {
                x,
                x_max: lo.abs().min(hi.abs()),
            });
        }
        let pos = (x - lo) / h;
        let start = (pos.floor() as isize - 3).clamp(0, self.len() as isize - 8) as usize;
        let mut acc = 0.0;
        for i in 0..8 {
            let mut w = 1.0;
            let xi = (start + i) as f64;
            for j in 0..8 {
                if j != i {
                    w *= (pos - (start + j) as f64) / (xi - (start + j) as f64);
                }
            }
            acc += w * self.values[start + i];
        }
        Ok(acc)
    }

    /// Binary form: `QAK1`, u64 count, then `(x, value, err)` f64 triples, little-endian.
    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let mut buf = Vec::with_capacity(12 + 24 * self.len());
        buf.extend_from_slice(TABLE_MAGIC);
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for i in 0..self.len() {
            for v in [self.xs[i], self.values[i], self.est_error[i]] {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        w.write_all(&buf).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
    }

    /// Reads a binary table; the file does not record the method, so the
    /// result is tagged as a contour table.
    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io(path, e))?;
        let bad = |message: &str| Error::Format {
            path: path.to_path_buf(),
            message: message.into(),
        };
        if bytes.len() < 12 || &bytes[..4] != TABLE_MAGIC {
            return Err(bad("missing QAK1 header"));
        }
        let count = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
        if bytes.len() != 12 + 24 * count {
            return Err(bad("length does not match sample count"));
        }
        let f = |k: usize| f64::from_le_bytes(bytes[12 + 8 * k..20 + 8 * k].try_into().unwrap());
        let xs = (0..count).map(|i| f(3 * i)).collect();
        let values = (0..count).map(|i| f(3 * i + 1)).collect();
        let est = (0..count).map(|i| f(3 * i + 2)).collect();
        KernelTable::from_samples(xs, values, KernelMethod::ContourQuad, est).map_err(|e| bad(&e.to_string()))
    }
}

/// Centred fourth-order fourth difference, `(-1, 12, -39, 56, -39, 12, -1) / (6 h^4)`.
pub fn fourth_difference(v: &[f64], i: usize, h: f64) -> f64 {
    const C: [f64; 7] = [-1.0, 12.0, -39.0, 56.0, -39.0, 12.0, -1.0];
    let s: f64 = C.iter().enumerate().map(|(k, c)| c * v[i + k - 3]).sum();
    s / (6.0 * h.powi(4))
}

/// `max |5 A'''' + x A|` over interior samples of a uniform table.
pub fn airy5_ode_residual(table: &KernelTable) -> Result<f64> {
    if table.len() < 9 {
        return Err(Error::InsufficientData(format!(
            "{} samples, the residual needs at least 9",
            table.len()
        )));
    }
    let h = table
        .step()
        .ok_or_else(|| Error::InvalidParameter("residual needs a uniform table".into()))?;
    Ok((3..table.len() - 3)
        .map(|i| (5.0 * fourth_difference(&table.values, i, h) + table.xs[i] * table.values[i]).abs())
        .fold(0.0, f64::max))
}

/// Least-squares fit `log|A| + (3/8) log<x> = log K - c x^p` on the envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub log_k: f64,
    pub c: f64,
    pub p: f64,
    pub rms_residual: f64,
    /// `c` with the exponent pinned at `5/4`.
    pub c_at_five_quarters: f64,
    pub rms_at_five_quarters: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticReport {
    /// `sup_{x <= 0} <x>^{3/8} |A(x)|`.
    pub left_sup: f64,
    pub left_sup_at: f64,
    pub right: Option<TailFit>,
    /// Set when the right tail has too few usable samples.
    pub partial: bool,
    pub x_range: (f64, f64),
}

impl AsymptoticReport {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("x_min".to_string(), self.x_range.0),
            ("x_max".to_string(), self.x_range.1),
            ("left_sup".to_string(), self.left_sup),
            ("left_sup_at".to_string(), self.left_sup_at),
            ("partial".to_string(), if self.partial { 1.0 } else { 0.0 }),
        ];
        if let Some(f) = &self.right {
            rows.extend([
                ("right_log_k".to_string(), f.log_k),
                ("right_c".to_string(), f.c),
                ("right_p".to_string(), f.p),
                ("right_rms".to_string(), f.rms_residual),
                ("right_c_p125".to_string(), f.c_at_five_quarters),
                ("right_rms_p125".to_string(), f.rms_at_five_quarters),
                ("right_samples".to_string(), f.samples as f64),
            ]);
        }
        rows
    }
}

/// Values below this are treated as lost to underflow.
const NOISE_FLOOR: f64 = 1e-280;
const MIN_TAIL_SAMPLES: usize = 5;

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let rms = (xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - icpt - slope * x).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    (icpt, slope, rms)
}

pub fn asymptotic_check(table: &KernelTable) -> AsymptoticReport {
    let (mut left_sup, mut left_sup_at) = (0.0, 0.0);
    for (&x, &a) in table.xs.iter().zip(&table.values) {
        if x <= 0.0 {
            let v = bracket(x, 1.0).powf(0.375) * a.abs();
            if v > left_sup {
                left_sup = v;
                left_sup_at = x;
            }
        }
    }
    let mut px = Vec::new();
    let mut py = Vec::new();
    for i in 1..table.len().saturating_sub(1) {
        let x = table.xs[i];
        let a = table.values[i].abs();
        if x >= 2.0 && a > NOISE_FLOOR && a >= table.values[i - 1].abs() && a >= table.values[i + 1].abs() {
            px.push(x);
            py.push(a.ln() + 0.375 * bracket(x, 1.0).ln());
        }
    }
    let right = (px.len() >= MIN_TAIL_SAMPLES).then(|| {
        let fit_at = |p: f64| {
            let xp: Vec<f64> = px.iter().map(|x| x.powf(p)).collect();
            linear_fit(&xp, &py)
        };
        let (mut lo, mut hi) = (0.5, 2.5);
        let golden = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let a = hi - golden * (hi - lo);
            let b = lo + golden * (hi - lo);
            if fit_at(a).2 < fit_at(b).2 {
                hi = b;
            } else {
                lo = a;
            }
        }
        let p = 0.5 * (lo + hi);
        let (log_k, slope, rms) = fit_at(p);
        let (_, slope125, rms125) = fit_at(1.25);
        TailFit {
            log_k,
            c: -slope,
            p,
            rms_residual: rms,
            c_at_five_quarters: -slope125,
            rms_at_five_quarters: rms125,
            samples: px.len(),
        }
    });
    AsymptoticReport {
        left_sup,
        left_sup_at,
        partial: right.is_none(),
        right,
        x_range: if table.is_empty() { (0.0, 0.0) } else { table.range() },
    }
}

fn convolve_with_kernel(u0: &RealField, t: f64, table: &KernelTable, prefactor: f64) -> Result<RealField> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    let grid = u0.grid();
    let n = grid.n();
    let s = t.powf(-0.2);
    let (lo, hi) = table.range();
    let needed = s * 0.5 * grid.length();
    if needed > hi || -needed < lo {
        return Err(Error::KernelRange {
            x: needed,
            x_max: hi.min(-lo),
        });
    }
    let dx = grid.dx();
    let kernel: Vec<f64> = (0..n)
        .map(|m| {
            let z = if m < n / 2 { m as f64 } else { m as f64 - n as f64 } * dx;
            table.interpolate(s * z).map(|a| prefactor * s * a)
        })
        .collect::<Result<_>>()?;
    let kf = raw_forward(&kernel);
    let mut uf = raw_forward(u0.values());
    for (a, b) in uf.iter_mut().zip(&kf) {
        *a *= b * dx;
    }
    RealField::new(grid, raw_inverse(&uf), u0.time() + t)
}

/// Free flow by periodic convolution with the rescaled sampled kernel.
pub fn kernel_propagate(u0: &RealField, t: f64, table: &KernelTable) -> Result<RealField> {
    convolve_with_kernel(u0, t, table, PROPAGATOR_PREFACTOR)
}

/// Least-squares constant `c` matching `c t^{-1/5} A(t^{-1/5}·) * u0` to the
/// multiplier propagator on a Gaussian-windowed tone.
pub fn calibrate_prefactor(table: &KernelTable, grid: crate::spectral::Grid1D, t: f64) -> Result<f64> {
    let w = 0.05 * grid.length();
    let u0 = RealField::from_fn(grid, 0.0, |x| (0.5 * x).cos() * (-(x / w).powi(2)).exp());
    let v = convolve_with_kernel(&u0, t, table, 1.0)?;
    let target = crate::spectral::linear_propagate(&u0, t);
    Ok(v.inner(&target)? / v.inner(&v)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_at_origin_matches_closed_form() {
        // 2 Γ(6/5) cos(π/10)
        let exact = 2.0 * 0.918_168_742_399_760_6 * (PI / 10.0).cos();
        assert!((airy5(0.0).unwrap() - exact).abs() < 1e-12);
    }

    #[test]
    fn continuity_through_origin() {
        let a = airy5(-1e-6).unwrap();
        let b = airy5(1e-6).unwrap();
        assert!((a - b).abs() < 1e-5);
    }

    #[test]
    fn range_is_enforced() {
        assert!(matches!(airy5(600.0), Err(Error::KernelRange { .. })));
    }

    #[test]
    fn right_tail_is_small() {
        assert!(airy5(20.0).unwrap().abs() < 1e-3 * airy5(0.0).unwrap());
    }

    #[test]
    fn constant_table_is_flagged() {
        let xs: Vec<f64> = (0..41).map(|i| -1.0 + 0.05 * i as f64).collect();
        let t = KernelTable::from_samples(xs, vec![2.0; 41], KernelMethod::ContourQuad, vec![0.0; 41]).unwrap();
        let r = airy5_ode_residual(&t).unwrap();
        assert!((r - 2.0 * 0.85).abs() < 1e-12);
    }

    #[test]
    fn short_table_is_rejected() {
        let t = KernelTable::from_samples(vec![0.0, 1.0], vec![1.0, 1.0], KernelMethod::ContourQuad, vec![0.0; 2])
            .unwrap();
        assert!(airy5_ode_residual(&t).is_err());
    }

    #[test]
    fn synthetic_left_envelope() {
        let xs: Vec<f64> = (0..401).map(|i| -200.0 + i as f64).collect();
        let values = xs.iter().map(|&x| bracket(x, 1.0).powf(-0.375)).collect();
        let t = KernelTable::from_samples(xs, values, KernelMethod::ContourQuad, vec![0.0; 401]).unwrap();
        let r = asymptotic_check(&t);
        assert!((r.left_sup - 1.0).abs() < 1e-14);
        assert!(r.partial);
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        let xs: Vec<f64> = (0..50).map(|i| 0.1 * i as f64).collect();
        let values = xs.iter().map(|x| x.powi(7) - 3.0 * x).collect();
        let t = KernelTable::from_samples(xs, values, KernelMethod::ContourQuad, vec![0.0; 50]).unwrap();
        for x in [0.0, 0.03, 1.234, 4.9] {
            assert!((t.interpolate(x).unwrap() - (x.powi(7) - 3.0 * x)).abs() < 1e-9);
        }
        assert!(t.interpolate(5.0).is_err());
    }
}
