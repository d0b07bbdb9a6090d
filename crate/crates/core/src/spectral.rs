//! Discrete Fourier calculus on a centred periodic box.
//!
//! A [`Grid1D`] with `n` points and length `L` samples `x_j = -L/2 + j L/n` and
//! carries the frequencies `xi_k = 2 pi k / L`, `k` in `[-n/2, n/2)`, stored in
//! FFT order. Coefficients follow the unitary continuous convention
//!
//! ```text
//! F(xi_k) = dx / sqrt(2 pi) * sum_j f(x_j) exp(-i xi_k x_j)
//! ```
//!
//! so Parseval reads `dx * sum |f|^2 = (2 pi / L) * sum |F|^2`.
//!
//! The Nyquist mode `k = -n/2` is its own conjugate partner. Multipliers act
//! on it through the real part of their symbol, which keeps real fields real;
//! odd symbols such as `i xi` therefore annihilate it.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-10;
const MEAN_ZERO_TOL: f64 = 1e-10;

/// Uniform periodic grid centred at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n: usize,
    length: f64,
}

impl Grid1D {
    pub fn new(n: usize, length: f64) -> Result<Self> {
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "n = {n} must be a power of two and at least 16"
            )));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidGrid(format!("length {length} must be positive")));
        }
        Ok(Grid1D { n, length })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    /// Frequency spacing `2 pi / L`.
    pub fn dxi(&self) -> f64 {
        2.0 * PI / self.length
    }

    /// Magnitude of the Nyquist frequency, `pi n / L`.
    pub fn nyquist(&self) -> f64 {
        PI * self.n as f64 / self.length
    }

    pub fn x(&self, j: usize) -> f64 {
        -0.5 * self.length + j as f64 * self.dx()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.x(j)).collect()
    }

    /// Frequency of FFT slot `k`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        let signed = if k < self.n / 2 {
            k as i64
        } else {
            k as i64 - self.n as i64
        };
        signed as f64 * self.dxi()
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.wavenumber(k)).collect()
    }

    pub fn nyquist_index(&self) -> usize {
        self.n / 2
    }

    /// Same point count on a box scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Grid1D> {
        Grid1D::new(self.n, self.length * factor)
    }
}

/// Real samples of a field at a given time.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid1D,
    values: Vec<f64>,
    time: f64,
}

impl RealField {
    pub fn new(grid: Grid1D, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidParameter(format!(
                "{} values supplied for a grid of {} points",
                values.len(),
                grid.n()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter(format!("value at index {j} is not finite")));
        }
        if !time.is_finite() {
            return Err(Error::InvalidParameter(format!("time {time} is not finite")));
        }
        Ok(RealField { grid, values, time })
    }

    pub(crate) fn from_parts(grid: Grid1D, values: Vec<f64>, time: f64) -> Self {
        debug_assert_eq!(values.len(), grid.n());
        RealField { grid, values, time }
    }

    pub fn from_fn(grid: Grid1D, time: f64, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.n()).map(|j| f(grid.x(j))).collect();
        RealField { grid, values, time }
    }

    pub fn zeros(grid: Grid1D, time: f64) -> Self {
        RealField {
            grid,
            values: vec![0.0; grid.n()],
            time,
        }
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealField {
        RealField::from_parts(self.grid, self.values.iter().map(|&v| f(v)).collect(), self.time)
    }

    /// Pointwise `f(x_j, v_j)`.
    pub fn map_with_x(&self, f: impl Fn(f64, f64) -> f64) -> RealField {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(j, &v)| f(self.grid.x(j), v))
            .collect();
        RealField::from_parts(self.grid, values, self.time)
    }

    pub fn scale(&self, c: f64) -> RealField {
        self.map(|v| c * v)
    }

    pub fn zip_with(&self, other: &RealField, f: impl Fn(f64, f64) -> f64) -> Result<RealField> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(RealField::from_parts(self.grid, values, self.time))
    }

    pub fn add(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &RealField) -> Result<RealField> {
        self.zip_with(other, |a, b| a * b)
    }

    /// `dx * sum f`.
    pub fn integral(&self) -> f64 {
        self.grid.dx() * self.values.iter().sum::<f64>()
    }

    /// `dx * sum f g`.
    pub fn inner(&self, other: &RealField) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(self.grid.dx() * self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>())
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.dx() * self.values.iter().map(|v| v * v).sum::<f64>()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fourier coefficients in FFT order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid1D,
    coefficients: Vec<Complex64>,
    time: f64,
}

impl SpectralField {
    pub fn new(grid: Grid1D, coefficients: Vec<Complex64>, time: f64) -> Result<Self> {
        if coefficients.len() != grid.n() {
            return Err(Error::InvalidParameter(format!(
                "{} coefficients supplied for a grid of {} points",
                coefficients.len(),
                grid.n()
            )));
        }
        Ok(SpectralField {
            grid,
            coefficients,
            time,
        })
    }

    pub fn grid(&self) -> Grid1D {
        self.grid
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    /// Largest violation of `F(-xi) = conj F(xi)`.
    pub fn hermitian_deviation(&self) -> f64 {
        let n = self.grid.n();
        let c = &self.coefficients;
        let mut dev = c[0].im.abs().max(c[n / 2].im.abs());
        for k in 1..n / 2 {
            dev = dev.max((c[n - k] - c[k].conj()).norm());
        }
        dev
    }

    /// `(2 pi / L) * sum |F|^2`, equal to the squared L2 norm of the field.
    pub fn energy(&self) -> f64 {
        self.grid.dxi() * self.coefficients.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// Diagonal Fourier multiplier.
#[derive(Clone)]
pub struct Multiplier {
    symbol: Arc<dyn Fn(f64) -> Complex64 + Send + Sync>,
    label: String,
}

impl fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Multiplier").field("label", &self.label).finish()
    }
}

/// Littlewood-Paley projector family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LpKind {
    /// `P_N`, symbol `psi(xi/N) - psi(2 xi/N)`.
    At,
    /// `P_{<=N}`, symbol `psi(xi/N)`.
    Le,
    /// `P_{<N}`, symbol `psi(2 xi/N)`.
    Lt,
    /// `P_{>=N}`, symbol `1 - psi(2 xi/N)`.
    Ge,
    /// `P_{>N}`, symbol `1 - psi(xi/N)`.
    Gt,
}

impl Multiplier {
    pub fn new(label: impl Into<String>, symbol: impl Fn(f64) -> Complex64 + Send + Sync + 'static) -> Self {
        Multiplier {
            symbol: Arc::new(symbol),
            label: label.into(),
        }
    }

    pub fn real(label: impl Into<String>, symbol: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Multiplier::new(label, move |xi| Complex64::new(symbol(xi), 0.0))
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn eval(&self, xi: f64) -> Complex64 {
        (self.symbol)(xi)
    }

    pub fn identity() -> Self {
        Multiplier::real("1", |_| 1.0)
    }

    /// `(i xi)^k`.
    pub fn derivative(k: u32) -> Self {
        let phase = Complex64::i().powu(k);
        Multiplier::new(format!("(i xi)^{k}"), move |xi| phase * xi.powi(k as i32))
    }

    /// `|xi|^s`, with value 0 at `xi = 0` unless `s = 0`.
    pub fn fractional(s: f64) -> Self {
        Multiplier::real(format!("|xi|^{s}"), move |xi| {
            if s == 0.0 {
                1.0
            } else if xi == 0.0 {
                0.0
            } else {
                xi.abs().powf(s)
            }
        })
    }

    /// `-i sgn(xi)`.
    pub fn hilbert() -> Self {
        Multiplier::new("-i sgn(xi)", |xi| {
            if xi == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -xi.signum())
            }
        })
    }

    /// `1 / (i xi)` with the zero mode sent to zero.
    pub fn antiderivative() -> Self {
        Multiplier::new("1/(i xi)", |xi| {
            if xi == 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::new(0.0, -1.0 / xi)
            }
        })
    }

    /// Free propagator `exp(i xi^5 dt)` of `u_t = u_xxxxx`.
    pub fn propagator(dt: f64) -> Self {
        Multiplier::new(format!("exp(i xi^5 {dt})"), move |xi| {
            Complex64::from_polar(1.0, xi.powi(5) * dt)
        })
    }

    pub fn littlewood_paley(n: f64, kind: LpKind) -> Result<Self> {
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::InvalidParameter(format!("LP scale {n} must be positive")));
        }
        let label = format!("{kind:?}({n})");
        Ok(Multiplier::real(label, move |xi| lp_symbol(xi, n, kind)))
    }

    /// Pointwise product of symbols.
    pub fn compose(&self, other: &Multiplier) -> Multiplier {
        let (a, b) = (self.symbol.clone(), other.symbol.clone());
        Multiplier {
            symbol: Arc::new(move |xi| a(xi) * b(xi)),
            label: format!("{} * {}", self.label, other.label),
        }
    }
}

/// Even bump equal to 1 on `[-1, 1]` and 0 outside `[-2, 2]`.
///
/// The transition uses the smooth step `g(2 - |xi|) / (g(2 - |xi|) + g(|xi| - 1))`
/// with `g(s) = exp(-1/s)`, which is flat to all orders at both ends.
pub fn bump(xi: f64) -> f64 {
    let a = xi.abs();
    if a <= 1.0 {
        1.0
    } else if a >= 2.0 {
        0.0
    } else {
        let g = |s: f64| (-1.0 / s).exp();
        let lo = g(2.0 - a);
        let hi = g(a - 1.0);
        lo / (lo + hi)
    }
}

pub fn lp_symbol(xi: f64, n: f64, kind: LpKind) -> f64 {
    match kind {
        LpKind::Le => bump(xi / n),
        LpKind::At => bump(xi / n) - bump(2.0 * xi / n),
        LpKind::Lt => bump(2.0 * xi / n),
        LpKind::Ge => 1.0 - bump(2.0 * xi / n),
        LpKind::Gt => 1.0 - bump(xi / n),
    }
}

/// Dyadic exponents `j` whose shell `P_{2^j}` fits between the box frequency
/// and the Nyquist frequency.
pub fn representable_shells(grid: &Grid1D) -> std::ops::RangeInclusive<i32> {
    let lo = (2.0 * grid.dxi()).log2().ceil() as i32;
    let hi = (0.5 * grid.nyquist()).log2().floor() as i32;
    lo..=hi
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Forward and inverse FFT plans for size `n`, cached per thread.
pub(crate) fn fft_plans(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Unnormalised DFT `sum_j f_j exp(-2 pi i j k / n)`.
pub(crate) fn raw_forward(values: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let (fwd, _) = fft_plans(values.len());
    fwd.process(&mut buf);
    buf
}

/// Inverse of [`raw_forward`], real part only.
pub(crate) fn raw_inverse(coeffs: &[Complex64]) -> Vec<f64> {
    let mut buf = coeffs.to_vec();
    let (_, inv) = fft_plans(coeffs.len());
    inv.process(&mut buf);
    let scale = 1.0 / coeffs.len() as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

/// Symbol values on the FFT slots, Nyquist slot reduced to its real part.
pub(crate) fn symbol_table(grid: &Grid1D, m: &Multiplier) -> Result<Vec<Complex64>> {
    let nyq = grid.nyquist_index();
    (0..grid.n())
        .map(|k| {
            let xi = grid.wavenumber(k);
            let v = m.eval(xi);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::NonFiniteSymbol { xi });
            }
            Ok(if k == nyq { Complex64::new(v.re, 0.0) } else { v })
        })
        .collect()
}

fn sign_flip(k: usize) -> f64 {
    if k % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

pub fn forward_transform(f: &RealField) -> SpectralField {
    let grid = f.grid();
    let scale = grid.dx() / (2.0 * PI).sqrt();
    let mut c = raw_forward(f.values());
    for (k, v) in c.iter_mut().enumerate() {
        *v *= scale * sign_flip(k);
    }
    SpectralField {
        grid,
        coefficients: c,
        time: f.time(),
    }
}

pub fn inverse_transform(spec: &SpectralField) -> Result<RealField> {
    let grid = spec.grid();
    let scale_max = spec.coefficients.iter().fold(0.0f64, |m, c| m.max(c.norm()));
    let deviation = spec.hermitian_deviation();
    if deviation > SYMMETRY_TOL * scale_max {
        return Err(Error::SymmetryViolation { deviation });
    }
    let scale = (2.0 * PI).sqrt() / grid.dx();
    let raw: Vec<Complex64> = spec
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &c)| c * (scale * sign_flip(k)))
        .collect();
    Ok(RealField::from_parts(grid, raw_inverse(&raw), spec.time()))
}

pub fn apply_multiplier(spec: &SpectralField, m: &Multiplier) -> Result<SpectralField> {
    let table = symbol_table(&spec.grid, m)?;
    let coefficients = spec.coefficients.iter().zip(&table).map(|(c, s)| c * s).collect();
    Ok(SpectralField {
        grid: spec.grid,
        coefficients,
        time: spec.time,
    })
}

/// Apply a multiplier to a real field.
pub fn apply_real(f: &RealField, m: &Multiplier) -> Result<RealField> {
    let table = symbol_table(&f.grid(), m)?;
    let mut c = raw_forward(f.values());
    for (v, s) in c.iter_mut().zip(&table) {
        *v *= s;
    }
    Ok(RealField::from_parts(f.grid(), raw_inverse(&c), f.time()))
}

pub fn derivative(f: &RealField, k: u32) -> Result<RealField> {
    if k > 5 {
        return Err(Error::InvalidParameter(format!("derivative order {k} exceeds 5")));
    }
    if k == 0 {
        return Ok(f.clone());
    }
    apply_real(f, &Multiplier::derivative(k))
}

/// Magnitude of the zero mode relative to the field's L2 norm.
pub fn relative_mean(f: &RealField) -> f64 {
    let norm = f.l2_norm();
    if norm == 0.0 {
        return 0.0;
    }
    f.integral().abs() / (f.grid().length().sqrt() * norm)
}

pub(crate) fn require_mean_zero(f: &RealField) -> Result<()> {
    let rel = relative_mean(f);
    if rel > MEAN_ZERO_TOL {
        return Err(Error::NotMeanZero { mean: rel });
    }
    Ok(())
}

pub fn fractional_derivative(f: &RealField, s: f64) -> Result<RealField> {
    if !s.is_finite() {
        return Err(Error::InvalidParameter(format!("order {s} is not finite")));
    }
    if s == 0.0 {
        return Ok(f.clone());
    }
    if s < 0.0 {
        require_mean_zero(f)?;
    }
    apply_real(f, &Multiplier::fractional(s))
}

pub fn hilbert_transform(f: &RealField) -> RealField {
    apply_real(f, &Multiplier::hilbert()).expect("Hilbert symbol is finite")
}

/// Zero-mean antiderivative.
pub fn antiderivative(f: &RealField) -> Result<RealField> {
    require_mean_zero(f)?;
    apply_real(f, &Multiplier::antiderivative())
}

pub fn lp_project(f: &RealField, n: f64, kind: LpKind) -> Result<RealField> {
    apply_real(f, &Multiplier::littlewood_paley(n, kind)?)
}

pub fn linear_propagate(f: &RealField, dt: f64) -> RealField {
    if dt == 0.0 {
        return f.clone();
    }
    apply_real(f, &Multiplier::propagator(dt))
        .expect("unimodular symbol is finite")
        .with_time(f.time() + dt)
}

pub fn dealias(spec: &SpectralField, keep_fraction: f64) -> Result<SpectralField> {
    if !(keep_fraction > 0.0 && keep_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "keep fraction {keep_fraction} must lie in (0, 1]"
        )));
    }
    let cutoff = keep_fraction * spec.grid.nyquist();
    let coefficients = spec
        .coefficients
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            if spec.grid.wavenumber(k).abs() > cutoff * (1.0 + 1e-14) {
                Complex64::new(0.0, 0.0)
            } else {
                c
            }
        })
        .collect();
    Ok(SpectralField {
        grid: spec.grid,
        coefficients,
        time: spec.time,
    })
}
