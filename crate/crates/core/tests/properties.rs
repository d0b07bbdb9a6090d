use dispersa::evolution::{evolve, linearized_evolve, EvolutionConfig, LinearizedOptions};
use dispersa::lab::config::{DataSpec, Family, RunConfig};
use dispersa::lab::data::{data_norm, make_initial_data};
use dispersa::lab::io::{decode_snapshot, encode_snapshot};
use dispersa::lab::report::{DecayReport, DecayRow, RowStatus};
use dispersa::lab::sweep::breakdown_time;
use dispersa::normal_form::{corrected_energy, symbol_identity, EnergyOptions};
use dispersa::norms::{besov_norm, lp_norm, norm_report, region_masks, sobolev_norm, weighted_sup, RegionLabel, RegionThresholds};
use dispersa::spectral::{apply_real, forward_transform, inverse_transform, lp_project, Grid1D, LpKind, Multiplier, RealField};
use dispersa::vector_fields::{apply_l, apply_lnl, OperatorParams};
use proptest::prelude::*;
use std::path::Path;

/// Random trigonometric field without Nyquist content.
fn field(n: usize, length: f64, modes: &[(f64, f64)]) -> RealField {
    let grid = Grid1D::new(n, length).unwrap();
    let kmax = (n / 2 - 1).min(modes.len());
    RealField::from_fn(grid, 0.0, |x| {
        modes[..kmax]
            .iter()
            .enumerate()
            .map(|(k, &(a, b))| {
                let w = (k + 1) as f64 * grid.dxi();
                a * (w * x).cos() + b * (w * x).sin()
            })
            .sum()
    })
}

fn modes() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1..40)
}

fn field_strategy() -> impl Strategy<Value = RealField> {
    (4u32..9, 5.0f64..200.0, modes()).prop_map(|(p, len, m)| field(1 << p, len, &m))
}

fn field_pair() -> impl Strategy<Value = (RealField, RealField)> {
    (4u32..9, 5.0f64..200.0, modes(), modes()).prop_map(|(p, len, a, b)| (field(1 << p, len, &a), field(1 << p, len, &b)))
}

fn rel(a: &RealField, b: &RealField) -> f64 {
    a.sub(b).unwrap().l2_norm() / b.l2_norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_and_parseval(f in field_strategy()) {
        let spec = forward_transform(&f);
        prop_assert!(rel(&inverse_transform(&spec).unwrap(), &f) < 1e-12);
        prop_assert!(spec.hermitian_deviation() <= 1e-12 * f.max_abs().max(1.0) * f.grid().length());
        let e = f.l2_norm().powi(2);
        prop_assert!((spec.energy() - e).abs() <= 1e-12 * e);
    }

    #[test]
    fn multiplier_composition(f in field_strategy(), s in 0.1f64..2.0, dt in 0.0f64..1.0, k in 1u32..4) {
        let (a, b) = (Multiplier::fractional(s), Multiplier::propagator(dt).compose(&Multiplier::derivative(k)));
        let two = apply_real(&apply_real(&f, &a).unwrap(), &b).unwrap();
        let one = apply_real(&f, &a.compose(&b)).unwrap();
        prop_assert!(rel(&two, &one) < 1e-10);
    }

    #[test]
    fn lp_telescoping(f in field_strategy(), j in -2i32..4) {
        let n = 2f64.powi(j);
        let le = lp_project(&f, n, LpKind::Le).unwrap();
        let split = lp_project(&f, n, LpKind::Lt).unwrap().add(&lp_project(&f, n, LpKind::At).unwrap()).unwrap();
        prop_assert!(le.sub(&split).unwrap().max_abs() <= 1e-13 * f.max_abs().max(1.0));
        let whole = le.add(&lp_project(&f, n, LpKind::Gt).unwrap()).unwrap();
        prop_assert!(whole.sub(&f).unwrap().max_abs() <= 1e-13 * f.max_abs().max(1.0));
    }

    #[test]
    fn norms_are_homogeneous(f in field_strategy(), c in -5.0f64..5.0, t in 0.1f64..10.0) {
        prop_assume!(c.abs() > 1e-3);
        let g = f.scale(c);
        let floor = 1e-13 * c.abs() * f.l2_norm().max(f.max_abs());
        let close = |a: f64, b: f64| (a - c.abs() * b).abs() <= 1e-12 * c.abs() * b + floor;
        prop_assert!(close(lp_norm(&g, 1.0).unwrap(), lp_norm(&f, 1.0).unwrap()));
        prop_assert!(close(lp_norm(&g, 2.0).unwrap(), lp_norm(&f, 2.0).unwrap()));
        prop_assert!(close(lp_norm(&g, f64::INFINITY).unwrap(), lp_norm(&f, f64::INFINITY).unwrap()));
        prop_assert!(close(sobolev_norm(&g, 0.5).unwrap(), sobolev_norm(&f, 0.5).unwrap()));
        prop_assert!(close(besov_norm(&g), besov_norm(&f)));
        prop_assert!(close(weighted_sup(&g, t, 0.125, 0.375, None).unwrap(), weighted_sup(&f, t, 0.125, 0.375, None).unwrap()));
        let r = norm_report(&f, &[1.0, 2.0, f64::INFINITY]).unwrap();
        prop_assert!(r.rows().iter().all(|(_, _, v)| v.is_finite() && *v >= 0.0));
    }

    #[test]
    fn regions_partition_and_cover(p in 4u32..11, len in 10.0f64..2000.0, t in 0.01f64..1000.0, k_s in 1.0f64..6.0) {
        let grid = Grid1D::new(1 << p, len).unwrap();
        let masks = region_masks(grid, t, RegionThresholds { k_s, band_ratio: std::f64::consts::SQRT_2 }).unwrap();
        for j in 0..grid.n() {
            let simple = masks.iter().filter(|m| !m.is_dyadic() && m.indicator[j]).count();
            prop_assert_eq!(simple, 1);
            let self_similar = masks[0].indicator[j];
            let dyadic = masks.iter().filter(|m| m.label == RegionLabel::Dyadic && m.indicator[j]).count();
            prop_assert!(self_similar || dyadic >= 1);
            prop_assert!(dyadic <= 1);
        }
    }

    #[test]
    fn l_is_linear_and_lnl_affine((f, g) in field_pair(), t in 0.1f64..5.0, c in -2.0f64..2.0) {
        let lhs = apply_l(&f.scale(c).add(&g).unwrap(), t).unwrap();
        let rhs = apply_l(&f, t).unwrap().scale(c).add(&apply_l(&g, t).unwrap()).unwrap();
        prop_assert!(lhs.sub(&rhs).unwrap().max_abs() <= 1e-10 * rhs.max_abs().max(1.0));
        for (m, sign) in [(1u32, 1.0), (2, -1.0)] {
            let p = OperatorParams::new(t, m, sign).unwrap();
            let diff = apply_lnl(&f, &p).unwrap().sub(&apply_l(&f, t).unwrap()).unwrap();
            let expect = f.map(|v| p.power_coefficient() * t * v.powi(m as i32 + 1));
            prop_assert!(diff.sub(&expect).unwrap().max_abs() <= 1e-12 * (1.0 + expect.max_abs()) * (1.0 + apply_l(&f, t).unwrap().max_abs()));
        }
    }

    #[test]
    fn symbol_identity_everywhere(xi in -1e4f64..1e4, eta in -1e4f64..1e4) {
        prop_assume!(xi.abs() + eta.abs() > 1e-6);
        let (lhs, rhs) = symbol_identity(xi, eta).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs());
    }

    #[test]
    fn low_frequency_energy_is_plain(f in field_strategy(), t in 0.5f64..4.0) {
        let grid = f.grid();
        let cut = 0.5 * t.powf(-0.2);
        let low = lp_project(&f, cut, LpKind::Lt).unwrap();
        let plain = 0.5 * f.l2_norm().powi(2);
        let e = corrected_energy(&f, &low.scale(0.1), t, &EnergyOptions::default()).unwrap();
        prop_assert!((e - plain).abs() <= 1e-12 * plain.max(1e-300), "grid {:?}", grid);
    }

    #[test]
    fn snapshot_bytes_round_trip(f in field_strategy(), time in 0.0f64..100.0) {
        let u = f.with_time(time);
        prop_assert_eq!(decode_snapshot(&encode_snapshot(&u), Path::new("mem")).unwrap(), u);
    }

    #[test]
    fn flat_series_never_breaks(level in 1e-6f64..10.0, len in 1usize..60, theta in 1.5f64..5.0) {
        let series: Vec<(f64, f64)> = (0..len).map(|i| (i as f64 + 1.0, level)).collect();
        let (t, median) = breakdown_time(&series, theta, 0.2).unwrap();
        prop_assert!(t.is_nan());
        prop_assert_eq!(median, level);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn initial_data_is_normalised(eps in 1e-3f64..0.5, width in 1.0f64..10.0, zero_mean in any::<bool>(), packet in any::<bool>(), seed in 0u64..100) {
        let grid = Grid1D::new(2048, 1024.0).unwrap();
        let spec = DataSpec {
            family: if packet { Family::WavePacket } else { Family::Gaussian },
            epsilon: eps,
            width,
            center: 1.0,
            k0: 0.7,
            zero_mean,
            noise: 0.1,
        };
        let u = make_initial_data(grid, &spec, seed).unwrap();
        prop_assert!((data_norm(&u).unwrap() - eps).abs() <= 1e-10 * eps);
        if zero_mean {
            prop_assert!(u.integral().abs() < 1e-12);
        }
    }

    #[test]
    fn config_text_round_trips(p in 4u32..14, len in 10.0f64..1e4, m in 1u32..3, dt in 1e-4f64..0.05, t_end in 0.1f64..10.0, eps in 1e-3f64..1.0, seed in any::<u64>()) {
        let text = format!(
            "grid.n = {}\ngrid.length = {len}\nevolution.m = {m}\nevolution.dt = {dt}\nevolution.t_end = {t_end}\n\
             evolution.snapshot_every = {}\ndata.epsilon = {eps}\nrun.seed = {seed}\n",
            1u64 << p,
            t_end / 4.0
        );
        let cfg = RunConfig::parse(&text, "prop").unwrap();
        let again = RunConfig::parse(&cfg.to_text(), "echo").unwrap();
        prop_assert_eq!(again.hash(), cfg.hash());
        prop_assert_eq!(again, cfg);
    }

    #[test]
    fn report_csv_round_trips(rows in prop::collection::vec((0.01f64..100.0, 0u32..4, prop::collection::vec(prop::option::of(0.0f64..10.0), 3), prop::option::of(0.0f64..1.0), any::<bool>()), 0..12)) {
        let report = DecayReport {
            bands: 3,
            rows: rows
                .into_iter()
                .map(|(t, k, rho, e, aborted)| DecayRow {
                    t,
                    k,
                    c_k: t.sqrt(),
                    c_k_elliptic: e,
                    besov: 1.0 / t,
                    lnl_sobolev: t * 3.0,
                    rho_l: rho,
                    rho_k: Vec::new(),
                    tail_mass: 1e-9 * t,
                    status: if aborted { RowStatus::Aborted } else { RowStatus::Ok },
                })
                .collect(),
            excluded: Vec::new(),
        };
        prop_assert_eq!(DecayReport::from_csv(&report.to_csv()).unwrap(), report.clone());
        prop_assert_eq!(DecayReport::from_jsonl(&report.to_jsonl(), 3).unwrap(), report);
    }

    #[test]
    fn evolution_is_deterministic_and_ordered(amp in 0.01f64..0.5, width in 2.0f64..6.0, m in 1u32..3) {
        let grid = Grid1D::new(256, 80.0).unwrap();
        let u0 = RealField::from_fn(grid, 0.0, |x| amp * (-(x / width).powi(2)).exp());
        let cfg = EvolutionConfig::new(m, 1.0, 0.01, 0.0, 0.3).with_snapshot_every(0.1);
        let a = evolve(&u0, &cfg).unwrap();
        let b = evolve(&u0, &cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.diagnostics.len(), a.snapshots.len());
        prop_assert!(a.times().windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn linearized_flow_is_linear(c in -3.0f64..3.0, shift in -5.0f64..5.0) {
        let grid = Grid1D::new(256, 80.0).unwrap();
        let u0 = RealField::from_fn(grid, 0.0, |x| 0.3 * (-(x / 4.0).powi(2)).exp());
        let bg = evolve(&u0, &EvolutionConfig::new(1, 1.0, 0.01, 0.0, 0.3).with_snapshot_every(0.05)).unwrap();
        let za = RealField::from_fn(grid, 0.0, |x| (-((x - shift) / 3.0).powi(2)).exp());
        let zb = RealField::from_fn(grid, 0.0, |x| (x / 3.0).sin() * (-(x / 5.0).powi(2)).exp());
        let opts = LinearizedOptions { dt: 0.01, snapshot_times: vec![0.1, 0.3] };
        let lin = |z: &RealField| linearized_evolve(z, &bg, &opts).unwrap().snapshots.last().unwrap().clone();
        let combined = lin(&za.scale(c).add(&zb).unwrap());
        let separate = lin(&za).scale(c).add(&lin(&zb)).unwrap();
        prop_assert!(combined.sub(&separate).unwrap().max_abs() <= 1e-10 * separate.max_abs().max(1.0));
    }
}
