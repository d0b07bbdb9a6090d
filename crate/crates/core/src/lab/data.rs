use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::lab::config::{DataSpec, Family};
use crate::norms::{besov_norm, sobolev_norm};
use crate::spectral::{Grid1D, RealField};

/// Size of the initial data: `||u||_B + || |D|^{1/2} (x u) ||_{L^2}`.
pub fn data_norm(u: &RealField) -> Result<f64> {
    Ok(besov_norm(u) + sobolev_norm(&u.map_with_x(|x, v| x * v), 0.5)?)
}

fn profile(grid: Grid1D, spec: &DataSpec, seed: u64) -> RealField {
    let (c, w) = (spec.center, spec.width);
    let envelope = move |x: f64| (-((x - c) / w).powi(2)).exp();
    let mut p = match spec.family {
        Family::Gaussian => RealField::from_fn(grid, 0.0, envelope),
        Family::WavePacket => RealField::from_fn(grid, 0.0, |x| (spec.k0 * (x - c)).cos() * envelope(x)),
    };
    if spec.noise > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let modes: Vec<(f64, f64, f64)> = (1..=8)
            .map(|k| (k as f64 / w, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let scale = spec.noise / (modes.len() as f64).sqrt();
        p = p.map_with_x(|x, v| {
            let s: f64 = modes
                .iter()
                .map(|&(k, a, b)| a * (k * (x - c)).cos() + b * (k * (x - c)).sin())
                .sum();
            v + scale * s * envelope(x)
        });
    }
    if spec.zero_mean {
        let lobe = RealField::from_fn(grid, 0.0, |x| (-((x - c) / (3.0 * w)).powi(2)).exp());
        let lambda = p.integral() / lobe.integral();
        p = p.sub(&lobe.scale(lambda)).expect("same grid");
    }
    p
}

/// Initial data of the requested family, scaled so that [`data_norm`] equals
/// `spec.epsilon`.
pub fn make_initial_data(grid: Grid1D, spec: &DataSpec, seed: u64) -> Result<RealField> {
    let w = spec.width;
    let lobe = if spec.zero_mean { 3.0 * w } else { w };
    if !(w >= 2.0 * grid.dx()) || lobe >= grid.length() / 8.0 {
        return Err(Error::InvalidParameter(format!(
            "width {w} must lie between 2 dx = {} and L/8 (L/24 with zero mean)",
            2.0 * grid.dx()
        )));
    }
    if spec.family == Family::WavePacket && spec.k0.abs() >= 0.5 * grid.nyquist() {
        return Err(Error::InvalidParameter(format!("carrier {} is not resolved", spec.k0)));
    }
    let p = profile(grid, spec, seed);
    let size = data_norm(&p)?;
    if !(size > 0.0 && size.is_finite()) {
        return Err(Error::InvalidParameter("initial profile vanishes".into()));
    }
    Ok(p.scale(spec.epsilon / size))
}
