//! Norms, weights and spatial regions.
//!
//! All integrals are Riemann sums on the grid. Frequency-side norms use the
//! Parseval constant of [`crate::spectral`], so `sobolev_norm(f, 0.0)` equals
//! `lp_norm(f, 2.0)` up to rounding.

use std::f64::consts::{E, SQRT_2};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectral::{self, forward_transform, Grid1D, LpKind, RealField};

/// `<x> = (x^2 + t^(2/5))^(1/2)`.
pub fn japanese_bracket(x: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be nonnegative")));
    }
    Ok(bracket(x, t))
}

pub(crate) fn bracket(x: f64, t: f64) -> f64 {
    (x * x + t.powf(0.4)).sqrt()
}

/// Riemann-sum `L^p` norm; `p = f64::INFINITY` gives the maximum.
pub fn lp_norm(f: &RealField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::InvalidParameter(format!("exponent p = {p} must be at least 1")));
    }
    if p.is_infinite() {
        return Ok(f.max_abs());
    }
    if p == 2.0 {
        return Ok(f.l2_norm());
    }
    let peak = f.max_abs();
    if peak == 0.0 {
        return Ok(0.0);
    }
    let s: f64 = f.values().iter().map(|v| (v.abs() / peak).powf(p)).sum();
    Ok(peak * (f.grid().dx() * s).powf(1.0 / p))
}

/// Homogeneous Sobolev seminorm `|| |D|^s f ||_{L^2}`.
pub fn sobolev_norm(f: &RealField, s: f64) -> Result<f64> {
    if !s.is_finite() {
        return Err(Error::InvalidParameter(format!("order {s} is not finite")));
    }
    if s < 0.0 {
        spectral::require_mean_zero(f)?;
    }
    let grid = f.grid();
    let spec = forward_transform(f);
    let sum: f64 = spec
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let xi = grid.wavenumber(k).abs();
            let w = if s == 0.0 {
                1.0
            } else if xi == 0.0 {
                0.0
            } else {
                xi.powf(2.0 * s)
            };
            w * c.norm_sqr()
        })
        .sum();
    Ok((grid.dxi() * sum).sqrt())
}

/// Per-shell Besov contributions `2^(-j/2) ||P_j f||_{L^2}` over the
/// representable dyadic range.
pub fn besov_shells(f: &RealField) -> Vec<(i32, f64)> {
    let grid = f.grid();
    let spec = forward_transform(f);
    let power: Vec<(f64, f64)> = spec
        .coefficients()
        .iter()
        .enumerate()
        .map(|(k, c)| (grid.wavenumber(k), c.norm_sqr()))
        .collect();
    spectral::representable_shells(&grid)
        .map(|j| {
            let n = 2f64.powi(j);
            let sum: f64 = power
                .iter()
                .filter(|(xi, _)| xi.abs() > 0.5 * n && xi.abs() < 2.0 * n)
                .map(|&(xi, p)| spectral::lp_symbol(xi, n, LpKind::At).powi(2) * p)
                .sum();
            (j, 2f64.powf(-0.5 * j as f64) * (grid.dxi() * sum).sqrt())
        })
        .collect()
}

/// Homogeneous `B^{-1/2}_{2,inf}` norm.
pub fn besov_norm(f: &RealField) -> f64 {
    besov_shells(f).iter().fold(0.0, |m, &(_, v)| m.max(v))
}

/// Squared-mass fraction of `f` in the outer half of the box, `|x| > L/4`.
pub fn tail_mass(f: &RealField) -> f64 {
    let grid = f.grid();
    let quarter = 0.25 * grid.length();
    let (mut outer, mut total) = (0.0, 0.0);
    for (j, v) in f.values().iter().enumerate() {
        let w = v * v;
        total += w;
        if grid.x(j).abs() > quarter {
            outer += w;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        outer / total
    }
}

/// Thresholds that make the region split concrete.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionThresholds {
    /// Self-similar region is `|x| <= k_s t^(1/5)`.
    pub k_s: f64,
    /// Dyadic bands are `[R / band_ratio, R * band_ratio)`.
    pub band_ratio: f64,
}

impl Default for RegionThresholds {
    fn default() -> Self {
        RegionThresholds {
            k_s: 4.0,
            band_ratio: SQRT_2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionLabel {
    SelfSimilar,
    Elliptic,
    Hyperbolic,
    Dyadic,
    DyadicElliptic,
    DyadicHyperbolic,
}

impl fmt::Display for RegionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegionLabel::SelfSimilar => "SELF_SIMILAR",
            RegionLabel::Elliptic => "ELLIPTIC",
            RegionLabel::Hyperbolic => "HYPERBOLIC",
            RegionLabel::Dyadic => "DYADIC",
            RegionLabel::DyadicElliptic => "DYADIC_E",
            RegionLabel::DyadicHyperbolic => "DYADIC_H",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionMask {
    pub grid: Grid1D,
    pub indicator: Vec<bool>,
    pub label: RegionLabel,
    pub t: f64,
    /// Dyadic scale `R` for the banded labels.
    pub r: Option<f64>,
}

impl RegionMask {
    pub fn full(grid: Grid1D, t: f64) -> RegionMask {
        RegionMask {
            grid,
            indicator: vec![true; grid.n()],
            label: RegionLabel::SelfSimilar,
            t,
            r: None,
        }
    }

    pub fn count(&self) -> usize {
        self.indicator.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        self.count() == 0
    }

    /// Whether the mask is one of the dyadic bands.
    pub fn is_dyadic(&self) -> bool {
        matches!(
            self.label,
            RegionLabel::Dyadic | RegionLabel::DyadicElliptic | RegionLabel::DyadicHyperbolic
        )
    }
}

/// Self-similar, elliptic and hyperbolic regions followed by the dyadic bands
/// `A_R`, `A_R ∩ E`, `A_R ∩ H` for `R = band_ratio^(2m) t^(1/5)`, `m = 0, 1, ...`
/// up to the box edge.
pub fn region_masks(grid: Grid1D, t: f64, th: RegionThresholds) -> Result<Vec<RegionMask>> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    if !(th.k_s > 0.0 && th.band_ratio > 1.0) {
        return Err(Error::InvalidParameter(
            "k_s must be positive and band_ratio above 1".into(),
        ));
    }
    let scale = t.powf(0.2);
    let cut = th.k_s * scale;
    let xs = grid.xs();
    let simple = |label, pred: &dyn Fn(f64) -> bool| RegionMask {
        grid,
        indicator: xs.iter().map(|&x| pred(x)).collect(),
        label,
        t,
        r: None,
    };
    let mut out = vec![
        simple(RegionLabel::SelfSimilar, &|x| x.abs() <= cut),
        simple(RegionLabel::Elliptic, &|x| x > cut),
        simple(RegionLabel::Hyperbolic, &|x| -x > cut),
    ];
    let brackets: Vec<f64> = xs.iter().map(|&x| bracket(x, t)).collect();
    let top = brackets.iter().fold(0.0f64, |m, &b| m.max(b));
    let b = th.band_ratio;
    let mut m = 0;
    loop {
        let r = b.powi(2 * m) * scale;
        if r / b > top {
            break;
        }
        let band: Vec<bool> = brackets.iter().map(|&w| w >= r / b && w < r * b).collect();
        for (label, side) in [
            (RegionLabel::Dyadic, 0i8),
            (RegionLabel::DyadicElliptic, 1),
            (RegionLabel::DyadicHyperbolic, -1),
        ] {
            let indicator = band
                .iter()
                .zip(&xs)
                .map(|(&inb, &x)| {
                    inb && match side {
                        1 => x > cut,
                        -1 => -x > cut,
                        _ => true,
                    }
                })
                .collect();
            out.push(RegionMask {
                grid,
                indicator,
                label,
                t,
                r: Some(r),
            });
        }
        m += 1;
    }
    Ok(out)
}

/// `sup t^alpha <x>^beta |f(x)|` over the mask (or the whole grid).
pub fn weighted_sup(f: &RealField, t: f64, alpha: f64, beta: f64, mask: Option<&RegionMask>) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    let grid = f.grid();
    if let Some(m) = mask {
        if m.grid != grid {
            return Err(Error::GridMismatch);
        }
        if m.is_empty() {
            return Err(Error::EmptyRegion);
        }
    }
    let tw = t.powf(alpha);
    let mut best = 0.0f64;
    for (j, v) in f.values().iter().enumerate() {
        if mask.map_or(true, |m| m.indicator[j]) {
            best = best.max(tw * bracket(grid.x(j), t).powf(beta) * v.abs());
        }
    }
    Ok(best)
}

/// Outcome of a supremum over a region that may have no admissible points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RegionSup {
    Value(f64),
    EmptyRegion,
}

impl RegionSup {
    pub fn value(self) -> Option<f64> {
        match self {
            RegionSup::Value(v) => Some(v),
            RegionSup::EmptyRegion => None,
        }
    }
}

/// `sup t^(k/4) <x>^(1-k/4) |d^k f| / log(t^(-1/5) <x>)` over the elliptic
/// points `x > k_s t^(1/5)` where the logarithm is at least one.
pub fn elliptic_log_sup(f: &RealField, t: f64, k: u32, k_s: f64) -> Result<RegionSup> {
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("time {t} must be positive")));
    }
    let grid = f.grid();
    let scale = t.powf(0.2);
    let admissible: Vec<usize> = (0..grid.n())
        .filter(|&j| {
            let x = grid.x(j);
            x > k_s * scale && bracket(x, t) / scale >= E
        })
        .collect();
    if admissible.is_empty() {
        return Ok(RegionSup::EmptyRegion);
    }
    let d = spectral::derivative(f, k)?;
    let kq = k as f64 / 4.0;
    let tw = t.powf(kq);
    let best = admissible.iter().fold(0.0f64, |m, &j| {
        let w = bracket(grid.x(j), t);
        m.max(tw * w.powf(1.0 - kq) * d.values()[j].abs() / (w / scale).ln())
    });
    Ok(RegionSup::Value(best))
}

pub fn localized_l2(f: &RealField, mask: &RegionMask) -> Result<f64> {
    if mask.grid != f.grid() {
        return Err(Error::GridMismatch);
    }
    let s: f64 = f
        .values()
        .iter()
        .zip(&mask.indicator)
        .filter(|(_, &b)| b)
        .map(|(v, _)| v * v)
        .sum();
    Ok((f.grid().dx() * s).sqrt())
}

/// Centred periodic Hardy-Littlewood maximal function over window radii
/// `0, dx, ..., L/2`.
pub fn maximal_function(f: &RealField) -> RealField {
    let n = f.grid().n();
    let abs: Vec<f64> = f.values().iter().map(|v| v.abs()).collect();
    let mut prefix = vec![0.0; 3 * n + 1];
    for i in 0..3 * n {
        prefix[i + 1] = prefix[i] + abs[i % n];
    }
    let full_mean = prefix[n] / n as f64;
    let values: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|j| {
            let c = j + n;
            let mut best = full_mean.max(abs[j]);
            for m in 1..n / 2 {
                let avg = (prefix[c + m + 1] - prefix[c - m]) / (2 * m + 1) as f64;
                best = best.max(avg);
            }
            best
        })
        .collect();
    RealField::from_parts(f.grid(), values, f.time())
}

/// Snapshot of the standard norms of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormReport {
    pub time: f64,
    /// `(p, ||f||_p)`; `p = inf` is the maximum.
    pub lp: Vec<(f64, f64)>,
    pub hs_half: f64,
    pub besov: f64,
    pub shells: Vec<(i32, f64)>,
}

impl NormReport {
    /// Rows `(t, key, value)` with keys `p=..`, `hs_half`, `besov`, `shell=j`.
    pub fn rows(&self) -> Vec<(f64, String, f64)> {
        let mut rows: Vec<(f64, String, f64)> = self
            .lp
            .iter()
            .map(|&(p, v)| (self.time, format!("p={p}"), v))
            .collect();
        rows.push((self.time, "hs_half".into(), self.hs_half));
        rows.push((self.time, "besov".into(), self.besov));
        rows.extend(self.shells.iter().map(|&(j, v)| (self.time, format!("shell={j}"), v)));
        rows
    }
}

pub fn norm_report(f: &RealField, ps: &[f64]) -> Result<NormReport> {
    let lp = ps.iter().map(|&p| Ok((p, lp_norm(f, p)?))).collect::<Result<Vec<_>>>()?;
    let shells = besov_shells(f);
    Ok(NormReport {
        time: f.time(),
        lp,
        hs_half: sobolev_norm(f, 0.5)?,
        besov: shells.iter().fold(0.0, |m, &(_, v)| m.max(v)),
        shells,
    })
}
