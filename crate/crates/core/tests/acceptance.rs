//! End-to-end acceptance suite. Each test prints one `criterion N` line to
//! stderr (uncaptured) before asserting.

use std::f64::consts::PI;
use std::io::Write;

use dispersa::evolution::{evolve, linearized_evolve, EvolutionConfig, LinearizedOptions, Trajectory};
use dispersa::kernel::{airy5, airy5_ode_residual, KernelMethod, KernelTable};
use dispersa::lab::config::{DataSpec, Family, RunConfig};
use dispersa::lab::data::make_initial_data;
use dispersa::lab::report::decay_report;
use dispersa::lab::run::{run, verify_linear};
use dispersa::lab::sweep::{sweep, NOT_OBSERVABLE};
use dispersa::lab::VerifySpec;
use dispersa::normal_form::{bilinear_apply, normal_form_symbol, symbol_identity, track_linearized_energy, BilinearSpec, EnergyOptions};
use dispersa::norms::{lp_norm, sobolev_norm};
use dispersa::spectral::{
    antiderivative, derivative, forward_transform, fractional_derivative, hilbert_transform, inverse_transform,
    linear_propagate, lp_project, lp_symbol, representable_shells, Grid1D, LpKind, RealField,
};
use dispersa::vector_fields::{commutation_check, lnl_residual, residual_with_coefficient};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn verdict(n: u32, name: &str, pass: bool, detail: String) {
    let line = format!(
        "criterion {n:>2} [{}] {name}: {detail}\n",
        if pass { "PASS" } else { "FAIL" }
    );
    let _ = std::io::stderr().write_all(line.as_bytes());
    assert!(pass, "{line}");
}

fn spread(values: &[f64]) -> f64 {
    let (lo, hi) = values.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &v| (a.min(v), b.max(v)));
    hi / lo - 1.0
}

fn max_diff(a: &RealField, b: &RealField) -> f64 {
    a.sub(b).unwrap().max_abs()
}

#[test]
fn criterion_01_spectral_exactness() {
    const TONE_TOL: f64 = 1e-12;
    const ROUND_TRIP_TOL: f64 = 1e-12;
    const PARTITION_TOL: f64 = 1e-10;
    let grid = Grid1D::new(64, 2.0 * PI).unwrap();
    // Roundoff in every mode is amplified by the symbol, so errors are taken
    // relative to the largest symbol magnitude on the grid.
    let top = 31.0f64;
    let mut tone_err = 0.0f64;
    for k in 1..=8 {
        let kf = k as f64;
        let c = RealField::from_fn(grid, 0.0, |x| (kf * x).cos());
        for order in 1..=5u32 {
            let expect = RealField::from_fn(grid, 0.0, |x| kf.powi(order as i32) * (kf * x + order as f64 * PI / 2.0).cos());
            tone_err = tone_err.max(max_diff(&derivative(&c, order).unwrap(), &expect) / top.powi(order as i32));
        }
        let sin = RealField::from_fn(grid, 0.0, |x| (kf * x).sin());
        tone_err = tone_err.max(max_diff(&hilbert_transform(&c), &sin));
        let half = RealField::from_fn(grid, 0.0, |x| kf.sqrt() * (kf * x).cos());
        tone_err = tone_err.max(max_diff(&fractional_derivative(&c, 0.5).unwrap(), &half) / top.sqrt());
        tone_err = tone_err.max(max_diff(&antiderivative(&c).unwrap(), &sin.scale(1.0 / kf)));
        let moved = RealField::from_fn(grid, 0.0, |x| (kf * x + kf.powi(5) * 0.3).cos());
        tone_err = tone_err.max(max_diff(&linear_propagate(&c, 0.3), &moved));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let big = Grid1D::new(1024, 50.0).unwrap();
    let f = RealField::new(big, (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect(), 0.0).unwrap();
    let round_trip = max_diff(&inverse_transform(&forward_transform(&f)).unwrap(), &f);
    let mut symbol_err = 0.0f64;
    for _ in 0..10_000 {
        let xi: f64 = rng.gen_range(-3.0..3.0f64).exp2().powi(3) * if rng.gen() { 1.0 } else { -1.0 };
        let total: f64 = (-40..=40).map(|j| lp_symbol(xi, 2f64.powi(j), LpKind::At)).sum();
        symbol_err = symbol_err.max((total - 1.0).abs());
    }
    let shells: Vec<i32> = representable_shells(&big).collect();
    let (lo, hi) = (2f64.powi(shells[0]), 2f64.powi(*shells.last().unwrap()));
    let mut sum = lp_project(&f, lo, LpKind::Lt).unwrap().add(&lp_project(&f, hi, LpKind::Gt).unwrap()).unwrap();
    for &j in &shells {
        sum = sum.add(&lp_project(&f, 2f64.powi(j), LpKind::At).unwrap()).unwrap();
    }
    let field_err = max_diff(&sum, &f);
    let pass = tone_err < TONE_TOL && round_trip < ROUND_TRIP_TOL && symbol_err < PARTITION_TOL && field_err < PARTITION_TOL;
    verdict(
        1,
        "spectral exactness",
        pass,
        format!("tones {tone_err:.1e}, round trip {round_trip:.1e}, partition {symbol_err:.1e} / {field_err:.1e}"),
    );
}

#[test]
fn criterion_02_kernel() {
    const ORIGIN_TOL: f64 = 1e-8;
    const AGREEMENT_TOL: f64 = 1e-7;
    const RESIDUAL_TOL: f64 = 1e-3;
    const MIN_ORDER: f64 = 3.5;
    let closed = 2.0 * statrs::function::gamma::gamma(1.2) * (PI / 10.0).cos();
    let origin = (airy5(0.0).unwrap() - closed).abs();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let probes: Vec<f64> = (0..100).map(|_| rng.gen_range(-40.0..15.0)).collect();
    let agreement = probes
        .iter()
        .map(|&x| {
            let a = KernelTable::build(x, x + 1.0, 2.0, KernelMethod::ContourQuad).unwrap();
            let b = KernelTable::build(x, x + 1.0, 2.0, KernelMethod::FilonOracle).unwrap();
            (a.values[0] - b.values[0]).abs()
        })
        .fold(0.0, f64::max);
    let coarse = airy5_ode_residual(&KernelTable::build(-20.0, 20.0, 0.1, KernelMethod::ContourQuad).unwrap()).unwrap();
    let fine = airy5_ode_residual(&KernelTable::build(-20.0, 20.0, 0.05, KernelMethod::ContourQuad).unwrap()).unwrap();
    let order = (coarse / fine).log2();
    let pass = origin < ORIGIN_TOL && agreement < AGREEMENT_TOL && fine < RESIDUAL_TOL && order > MIN_ORDER;
    verdict(
        2,
        "kernel correctness",
        pass,
        format!("A(0) error {origin:.1e}, contour vs Filon {agreement:.1e}, ODE residual {fine:.2e}, order {order:.2}"),
    );
}

#[test]
fn criterion_03_linear_decay_rate() {
    const VARIATION: f64 = 0.2;
    let grid = Grid1D::new(65536, 65536.0).unwrap();
    let bump = RealField::from_fn(grid, 0.0, |x| (-(x / 2.0).powi(2)).exp());
    let u0 = bump.scale(1.0 / lp_norm(&bump, 1.0).unwrap());
    let ratios: Vec<f64> = [1e3f64, 2e3, 4e3, 7e3, 1e4]
        .iter()
        .map(|&t| t.powf(0.2) * linear_propagate(&u0, t).max_abs())
        .collect();
    let v = spread(&ratios);
    verdict(3, "t^(1/5) decay of the free flow", v < VARIATION, format!("variation {v:.3} over t in [1e3, 1e4], ratios {ratios:.4?}"));
}

fn linear_config() -> RunConfig {
    RunConfig::parse(
        "grid.n = 2097152\n grid.length = 1048576\n evolution.t_start = 1\n evolution.t_end = 1000\n \
         evolution.log_snapshots = 7\n data.epsilon = 0.05\n data.width = 2\n verify.bands = 14\n",
        "criterion 4",
    )
    .unwrap()
}

#[test]
fn criterion_04_linear_shape() {
    const BOUND: f64 = 10.0;
    const VARIATION: f64 = 0.25;
    const MIN_BANDS: usize = 5;
    let cfg = linear_config();
    let eps = cfg.data.epsilon;
    let rep = verify_linear(&cfg).unwrap().report;
    let mut worst_bound = 0.0f64;
    let mut worst_var = 0.0f64;
    for k in 0..4 {
        let rows: Vec<_> = rep.rows.iter().filter(|r| r.k == k).collect();
        let late: Vec<_> = rows.iter().filter(|r| r.t >= 100.0 * (1.0 - 1e-12)).collect();
        let c: Vec<f64> = late.iter().map(|r| r.c_k).collect();
        let e: Vec<f64> = late.iter().map(|r| r.c_k_elliptic.unwrap()).collect();
        worst_var = worst_var.max(spread(&c)).max(spread(&e));
        for r in &rows {
            worst_bound = worst_bound.max(r.c_k / eps).max(r.c_k_elliptic.unwrap_or(0.0) / eps);
            for v in r.rho_l.iter().chain(&r.rho_k).flatten() {
                worst_bound = worst_bound.max(v / eps);
            }
        }
    }
    let bands = rep.rows.iter().map(|r| r.rho_l.iter().flatten().count()).min().unwrap_or(0);
    let pass = rep.excluded.is_empty() && worst_bound < BOUND && worst_var < VARIATION && bands >= MIN_BANDS;
    verdict(
        4,
        "linear decay constants",
        pass,
        format!("max constant/eps {worst_bound:.3}, last-decade variation {worst_var:.3}, bands {bands}"),
    );
}

#[test]
fn criterion_05_commutation() {
    const TOL: f64 = 1e-8;
    let grid = Grid1D::new(16384, 8192.0).unwrap();
    let mut worst = 0.0f64;
    for w in [3.0, 3.5, 4.0, 4.5, 5.0] {
        let u0 = RealField::from_fn(grid, 0.0, |x| (-((x - w) / w).powi(2)).exp());
        for t in [0.1, 0.5, 1.0, 2.0, 5.0] {
            worst = worst.max(commutation_check(&u0, t).unwrap());
        }
    }
    verdict(5, "commutation of L with the free flow", worst < TOL, format!("max relative error {worst:.2e}"));
}

fn conservation_run(m: u32, dt: f64) -> Trajectory {
    let grid = Grid1D::new(8192, 400.0).unwrap();
    let spec = DataSpec {
        family: Family::Gaussian,
        epsilon: 0.05,
        width: 1.0,
        center: 0.0,
        k0: 1.0,
        zero_mean: false,
        noise: 0.0,
    };
    let u0 = make_initial_data(grid, &spec, 0).unwrap();
    evolve(&u0, &EvolutionConfig::new(m, 1.0, dt, 0.0, 50.0).with_snapshot_every(10.0)).unwrap()
}

#[test]
fn criterion_06_conservation() {
    const MASS_TOL: f64 = 1e-10;
    const L2_TOL: f64 = 1e-8;
    const H_TOL: f64 = 1e-6;
    let mut detail = Vec::new();
    let mut pass = true;
    for (m, dt) in [(1, 0.0025), (2, 0.005)] {
        let traj = conservation_run(m, dt);
        let d0 = traj.diagnostics[0];
        let (mut mass, mut l2, mut h) = (0.0f64, 0.0f64, 0.0f64);
        for d in &traj.diagnostics {
            mass = mass.max((d.mass - d0.mass).abs());
            l2 = l2.max(((d.l2 - d0.l2) / d0.l2).abs());
            h = h.max(((d.hamiltonian - d0.hamiltonian) / d0.hamiltonian).abs());
        }
        pass &= traj.last().time() == 50.0 && mass < MASS_TOL && l2 < L2_TOL && h < H_TOL;
        detail.push(format!("m={m}: mass {mass:.1e}, L2 {l2:.1e}, H {h:.1e}"));
    }
    verdict(6, "conservation to t = 50", pass, detail.join("; "));
}

#[test]
fn criterion_07_symbol_identity() {
    const TOL: f64 = 1e-10;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        let (xi, eta) = (rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3));
        let (lhs, rhs) = symbol_identity(xi, eta).unwrap();
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    verdict(7, "normal-form symbol identity", worst < TOL, format!("max relative deviation {worst:.1e} over 1e6 pairs"));
}

#[test]
fn criterion_08_bilinear_oracle() {
    const TOL: f64 = 1e-12;
    let mut worst = 0.0f64;
    for (n, len, cut, seed) in [(64usize, 2.0 * PI, 0.5, 1u64), (128, 30.0, 0.4, 2), (256, 40.0, 0.6, 3)] {
        let grid = Grid1D::new(n, len).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut field = || {
            let modes: Vec<(f64, f64, f64)> = (1..n / 4)
                .map(|k| (k as f64 * grid.dxi(), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            RealField::from_fn(grid, 0.0, |x| modes.iter().map(|&(w, a, b)| a * (w * x).cos() + b * (w * x).sin()).sum())
        };
        let (f, g) = (field(), field());
        let got = bilinear_apply(&f, &g, &BilinearSpec::normal_form(cut).unwrap()).unwrap();
        let xs = grid.xs();
        let norm = grid.dx() / (2.0 * PI).sqrt();
        let coeffs = |h: &RealField| -> Vec<(f64, Complex64)> {
            (-(n as i64) / 2 + 1..n as i64 / 2)
                .map(|k| {
                    let xi = k as f64 * grid.dxi();
                    let s: Complex64 = xs.iter().zip(h.values()).map(|(&x, &v)| Complex64::from_polar(v, -xi * x)).sum();
                    (xi, s * norm)
                })
                .collect()
        };
        let (fc, gc) = (coeffs(&f), coeffs(&g));
        let w = grid.dxi() / (2.0 * PI).sqrt();
        let mut brute = vec![0.0; n];
        for &(p, a) in fc.iter().filter(|c| c.0.abs() >= cut) {
            for &(q, b) in gc.iter().filter(|c| c.0.abs() >= cut) {
                let h = a * b * normal_form_symbol(p, q) * w * w;
                for (j, &x) in xs.iter().enumerate() {
                    brute[j] += (h * Complex64::from_polar(1.0, (p + q) * x)).re;
                }
            }
        }
        let scale = brute.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let err = got.values().iter().zip(&brute).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        worst = worst.max(err);
    }
    verdict(8, "bilinear operator against brute-force sums", worst < TOL, format!("max relative deviation {worst:.1e}"));
}

fn window(eps: f64) -> f64 {
    0.1 * eps.powf(-5.0 / 3.0)
}

fn nonlinear_config(eps: f64) -> RunConfig {
    RunConfig::parse(
        &format!(
            "grid.n = 2048\n grid.length = 2048\n evolution.dt = 0.01\n evolution.t_end = {}\n \
             evolution.snapshot_every = 0.05\n data.epsilon = {eps}\n data.width = 8\n",
            window(eps)
        ),
        "nonlinear window",
    )
    .unwrap()
}

#[test]
fn criterion_09_corrected_energy() {
    const ENERGY_BAND: (f64, f64) = (0.8, 1.2);
    const NORM_BAND: (f64, f64) = (0.8, 1.25);
    let eps = 0.05;
    let cfg = nonlinear_config(eps);
    let u0 = make_initial_data(cfg.grid().unwrap(), &cfg.data, 0).unwrap();
    let bg = evolve(&u0, &cfg.evolution.clone().with_snapshot_every(0.1)).unwrap();
    let t_end = window(eps);
    let z0 = bg.interpolate(1.0).unwrap();
    let times = (0..=14).map(|i| 1.0 + (t_end - 1.0) * i as f64 / 14.0).collect();
    let lin = linearized_evolve(&z0, &bg, &LinearizedOptions { dt: 0.01, snapshot_times: times }).unwrap();
    let series = track_linearized_energy(&lin, &bg, &EnergyOptions::default(), None).unwrap();
    let (elo, ehi) = series.ratio.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let h0 = sobolev_norm(&lin.snapshots[0], 0.5).unwrap();
    let norms: Vec<f64> = lin.snapshots.iter().map(|z| sobolev_norm(z, 0.5).unwrap() / h0).collect();
    let (nlo, nhi) = norms.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    let (dc, dp) = (series.corrected_drift(), series.plain_drift());
    let pass = elo >= ENERGY_BAND.0 && ehi <= ENERGY_BAND.1 && nlo >= NORM_BAND.0 && nhi <= NORM_BAND.1 && dc <= dp;
    verdict(
        9,
        "corrected energy along the linearized flow",
        pass,
        format!("E/plain in [{elo:.6}, {ehi:.6}], H^1/2 ratio in [{nlo:.6}, {nhi:.6}], drift corrected {dc:.3e} vs plain {dp:.3e}"),
    );
}

struct WindowRun {
    besov: f64,
    lnl: f64,
    c: [f64; 4],
    residual: f64,
    excluded: usize,
}

fn window_run(eps: f64) -> WindowRun {
    let cfg = nonlinear_config(eps);
    let out = run(&cfg).unwrap();
    let mut c = [0.0f64; 4];
    let (mut besov, mut lnl) = (0.0f64, 0.0f64);
    for r in &out.report.rows {
        besov = besov.max(r.besov / eps);
        lnl = lnl.max(r.lnl_sobolev / eps);
        c[r.k as usize] = c[r.k as usize].max(r.c_k / eps);
    }
    WindowRun {
        besov,
        lnl,
        c,
        residual: lnl_residual(&out.trajectory).unwrap().max_residual(),
        excluded: out.report.excluded.len(),
    }
}

#[test]
fn criterion_10_nonlinear_norms() {
    const BESOV_BOUND: f64 = 3.0;
    const LNL_BOUND: f64 = 5.0;
    const HALVING_RATIO: f64 = 2.0;
    let a = window_run(0.1);
    let b = window_run(0.05);
    let ratio = |x: f64, y: f64| x.max(y) / x.min(y);
    let pass = a.excluded + b.excluded == 0
        && a.besov.max(b.besov) <= BESOV_BOUND
        && a.lnl.max(b.lnl) <= LNL_BOUND
        && ratio(a.besov, b.besov) < HALVING_RATIO
        && ratio(a.lnl, b.lnl) < HALVING_RATIO;
    verdict(
        10,
        "Besov and weighted Sobolev bounds",
        pass,
        format!(
            "besov/eps {:.4} | {:.4}, lnl/eps {:.4} | {:.4} (eps 0.1 | 0.05)",
            a.besov, b.besov, a.lnl, b.lnl
        ),
    );
}

#[test]
fn criterion_11_pointwise_bounds() {
    const BOUND: f64 = 10.0;
    const RESIDUAL_TOL: f64 = 1e-3;
    const FIT_TOL: f64 = 1e-4;
    const DISCRIMINATION: f64 = 10.0;
    let runs = [window_run(0.1), window_run(0.05)];
    let c_max = runs.iter().flat_map(|r| r.c).fold(0.0f64, f64::max);
    let residual = runs.iter().map(|r| r.residual).fold(0.0f64, f64::max);
    let grid = Grid1D::new(4096, 800.0).unwrap();
    let u0 = RealField::from_fn(grid, 1.0, |x| 0.8 * (-(x / 5.0).powi(2)).exp());
    let times = (0..=100).map(|i| 1.0 + 0.005 * i as f64).collect();
    let mkw = evolve(&u0, &EvolutionConfig::new(2, 1.0, 0.005, 1.0, 1.5).with_snapshots(times)).unwrap();
    let right = residual_with_coefficient(&mkw, 2.0 / 3.0, 3).unwrap().max_residual();
    let wrong = [(-1.5, 2), (1.5, 2), (-2.0 / 3.0, 3)]
        .iter()
        .map(|&(c, p)| residual_with_coefficient(&mkw, c, p).unwrap().max_residual())
        .fold(f64::INFINITY, f64::min);
    let fit = lnl_residual(&mkw).unwrap().global_coefficient;
    let pass = c_max <= BOUND
        && residual < RESIDUAL_TOL
        && right < RESIDUAL_TOL
        && wrong >= DISCRIMINATION * right
        && (fit - 2.0 / 3.0).abs() < FIT_TOL;
    verdict(
        11,
        "pointwise bounds and the L^NL equation",
        pass,
        format!(
            "max C_k/eps {c_max:.4}, KW residual {residual:.1e}, mKW residual {right:.1e}, discrimination {:.0}, fit {fit:.6}",
            wrong / right
        ),
    );
}

#[test]
fn criterion_12_time_scale_sweep() {
    const BAND: f64 = 0.5;
    let mut base = RunConfig::parse(
        "grid.n = 2048\n grid.length = 2048\n evolution.dt = 0.01\n evolution.t_end = 50\n \
         evolution.snapshot_every = 0.5\n data.width = 8\n",
        "sweep",
    )
    .unwrap();
    base.verify = VerifySpec::default();
    let res = sweep(&base, &[0.4, 0.2, 0.1]).unwrap();
    let detected = res.entries.iter().filter(|e| e.breakdown_time.is_some()).count();
    let (pass, detail) = match res.fitted_exponent {
        Some(p) if detected >= 2 => (
            (p - res.predicted_exponent).abs() <= BAND,
            format!("fitted exponent {p:.3} (predicted {:.3}), rms {:.2e}", res.predicted_exponent, res.fit_rms.unwrap()),
        ),
        _ => (
            res.marker.as_deref() == Some(NOT_OBSERVABLE),
            format!(
                "{NOT_OBSERVABLE}; max C_0/eps {:?}",
                res.entries.iter().map(|e| (e.epsilon, (e.max_ratio * 1e4).round() / 1e4)).collect::<Vec<_>>()
            ),
        ),
    };
    verdict(12, "lifespan sweep (soft)", pass, detail);
}

#[test]
fn decay_report_is_reproducible() {
    let cfg = nonlinear_config(0.1);
    let a = run(&cfg).unwrap().report.to_csv();
    let b = run(&cfg).unwrap().report.to_csv();
    assert_eq!(a, b);
    let evo = cfg.evolution.clone();
    let u0 = make_initial_data(cfg.grid().unwrap(), &cfg.data, 0).unwrap();
    let rep = decay_report(&[u0], &evo, &cfg.verify, false).unwrap();
    assert!(rep.rows.is_empty());
}
