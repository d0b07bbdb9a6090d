//! Real-axis evaluation of `A(x)`, independent of the contour path.
//!
//! The integral is cut at `|η| = 10^4`. The core `[-η_c, η_c]` is summed with
//! dense Gauss-Legendre panels. On the tails the phase `s = φ(η)` is monotone;
//! geometric panels in `η` are mapped to `s`, the amplitude `1/φ'` is
//! interpolated by a Chebyshev polynomial in `s`, and the oscillatory factor is
//! integrated exactly through the moments `∫ τ^k e^{ihτ} dτ`. Panels with
//! little phase change are summed directly instead. The left tail is the
//! complex conjugate of the right one.

use num_complex::Complex64;

use crate::quadrature::gl16;

const CUTOFF: f64 = 1e4;
const PANEL_RATIO: f64 = 1.05;
const CHEB_DEGREE: usize = 12;
const FILON_MIN_PHASE: f64 = 60.0;

fn phi(eta: f64, x: f64) -> f64 {
    eta.powi(5) + x * eta
}

fn dphi(eta: f64, x: f64) -> f64 {
    5.0 * eta.powi(4) + x
}

/// `φ(b) - φ(a)` without cancellation.
fn phase_gap(a: f64, b: f64, x: f64) -> f64 {
    let (a2, b2) = (a * a, b * b);
    (b - a) * (b2 * b2 + b2 * b * a + b2 * a2 + b * a2 * a + a2 * a2 + x)
}

/// `A(x)` as a complex number; the imaginary part measures the asymmetry of
/// the core sum.
pub fn airy5_filon(x: f64) -> Complex64 {
    let rho = (x.abs() / 5.0).powf(0.25);
    let eta_c = 1.5 * rho + 1.0;
    core(x, eta_c) + 2.0 * tail(x, eta_c).re
}

fn core(x: f64, eta_c: f64) -> Complex64 {
    let (nodes, weights) = gl16();
    let max_rate = dphi(eta_c, x).abs().max(x.abs()) + 1.0;
    let panels = ((2.0 * eta_c * max_rate).ceil() as usize).max(16);
    let h = 2.0 * eta_c / panels as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = -eta_c + (p as f64 + 0.5) * h;
        let mut part = Complex64::new(0.0, 0.0);
        for (t, w) in nodes.iter().zip(weights) {
            part += Complex64::from_polar(1.0, phi(mid + 0.5 * h * t, x)) * *w;
        }
        acc += part;
    }
    acc * (0.5 * h)
}

/// `∫_{η_c}^{CUTOFF} e^{iφ} dη`.
fn tail(x: f64, eta_c: f64) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    let mut start_phase = Complex64::from_polar(1.0, phi(eta_c, x));
    let mut a = eta_c;
    while a < CUTOFF {
        let b = (a * PANEL_RATIO).min(CUTOFF);
        let gap = phase_gap(a, b, x);
        let local = if gap < FILON_MIN_PHASE {
            direct_panel(a, b, x, gap)
        } else {
            filon_panel(a, b, x, gap)
        };
        acc += start_phase * local;
        start_phase *= Complex64::from_polar(1.0, gap);
        a = b;
    }
    acc
}

/// `∫_a^b e^{i(φ(η) - φ(a))} dη` by Gauss-Legendre sub-panels.
fn direct_panel(a: f64, b: f64, x: f64, gap: f64) -> Complex64 {
    let (nodes, weights) = gl16();
    let sub = (gap / 1.5).ceil().max(1.0) as usize;
    let h = (b - a) / sub as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for p in 0..sub {
        let mid = a + (p as f64 + 0.5) * h;
        for (t, w) in nodes.iter().zip(weights) {
            acc += Complex64::from_polar(1.0, phase_gap(a, mid + 0.5 * h * t, x)) * *w;
        }
    }
    acc * (0.5 * h)
}

/// Solves `φ(η) - φ(a) = σ` on `[a, b]`; Newton from the right end converges
/// monotonically because `φ` is convex and increasing there.
fn invert(a: f64, b: f64, x: f64, sigma: f64) -> f64 {
    let mut eta = b;
    for _ in 0..100 {
        let step = (phase_gap(a, eta, x) - sigma) / dphi(eta, x);
        eta -= step;
        if step.abs() <= 1e-15 * eta {
            break;
        }
    }
    eta
}

/// `∫_a^b e^{i(φ(η) - φ(a))} dη = ∫_0^gap e^{iσ} / φ'(η(σ)) dσ` with the
/// amplitude interpolated in `σ` and the moments integrated exactly.
fn filon_panel(a: f64, b: f64, x: f64, gap: f64) -> Complex64 {
    let n = CHEB_DEGREE + 1;
    let half = 0.5 * gap;
    let nodes: Vec<f64> = (0..n)
        .map(|j| (std::f64::consts::PI * (j as f64 + 0.5) / n as f64).cos())
        .collect();
    let g: Vec<f64> = nodes
        .iter()
        .map(|&tau| 1.0 / dphi(invert(a, b, x, half * (1.0 + tau)), x))
        .collect();
    let cheb: Vec<f64> = (0..n)
        .map(|k| {
            let s: f64 = nodes
                .iter()
                .zip(&g)
                .enumerate()
                .map(|(j, (_, gj))| gj * (std::f64::consts::PI * k as f64 * (j as f64 + 0.5) / n as f64).cos())
                .sum();
            if k == 0 {
                s / n as f64
            } else {
                2.0 * s / n as f64
            }
        })
        .collect();
    let mut mono = vec![0.0; n];
    let mut t_prev = vec![0.0; n];
    let mut t_cur = vec![0.0; n];
    t_prev[0] = 1.0;
    t_cur[1] = 1.0;
    mono[0] += cheb[0];
    for (m, c) in mono.iter_mut().zip(&t_cur) {
        *m += cheb[1] * c;
    }
    for &ck in cheb.iter().skip(2) {
        let mut t_next = vec![0.0; n];
        for i in 0..n {
            let shifted = if i > 0 { 2.0 * t_cur[i - 1] } else { 0.0 };
            t_next[i] = shifted - t_prev[i];
        }
        for (m, c) in mono.iter_mut().zip(&t_next) {
            *m += ck * c;
        }
        t_prev = t_cur;
        t_cur = t_next;
    }
    let h = half;
    let ih = Complex64::new(0.0, h);
    let (ep, em) = (Complex64::from_polar(1.0, h), Complex64::from_polar(1.0, -h));
    let mut mu = Complex64::new(2.0 * h.sin() / h, 0.0);
    let mut acc = mu * mono[0];
    for (k, &mk) in mono.iter().enumerate().skip(1) {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        mu = (ep - em * sign) / ih - mu * (k as f64) / ih;
        acc += mu * mk;
    }
    acc * half * Complex64::from_polar(1.0, half)
}
