mod common;

use std::f64::consts::PI;

use epw::analysis::*;
use epw::spectral::*;
use epw::symbol::ElasticParams;
use epw::Error;
use proptest::prelude::*;
use rand::Rng;

/// Standard normal sample by Box-Muller.
fn normal(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn times() -> Vec<f64> {
    (0..=30).map(|i| 5.0 + i as f64).collect()
}

proptest! {
    #[test]
    fn exact_power_laws_are_recovered(beta in -3.0f64..0.5, c in 1e-3f64..1e3) {
        let t = times();
        let v: Vec<f64> = t.iter().map(|t| c * (1.0 + t).powf(beta)).collect();
        let fit = fit_power_law(&t, &v, (5.0, 35.0)).unwrap();
        prop_assert!((fit.exponent - beta).abs() <= 1e-10);
        prop_assert_eq!(fit.samples, 31);
    }

    #[test]
    fn exact_exponential_rates_are_recovered(rate in -2.0f64..0.0, c in 1e-3f64..1e3) {
        let t: Vec<f64> = (0..20).map(|i| 0.5 * i as f64).collect();
        let v: Vec<f64> = t.iter().map(|t| c * (rate * t).exp()).collect();
        let fit = fit_exponential_rate(&t, &v, (0.0, 10.0)).unwrap();
        prop_assert!((fit.exponent - rate).abs() <= 1e-10);
    }
}

#[test]
fn noisy_fits_are_unbiased_with_honest_errors() {
    let mut rng = common::rng(21);
    let t = times();
    let trials = 400;
    let mut covered = 0;
    let mut mean = 0.0;
    for _ in 0..trials {
        let v: Vec<f64> = t.iter().map(|t| (1.0 + t).powf(-0.75) * (0.02 * normal(&mut rng)).exp()).collect();
        let fit = fit_power_law(&t, &v, (5.0, 35.0)).unwrap();
        mean += fit.exponent / trials as f64;
        if (fit.exponent + 0.75).abs() <= 2.0 * fit.stderr {
            covered += 1;
        }
    }
    assert!((mean + 0.75).abs() < 0.01, "mean {mean}");
    let frac = covered as f64 / trials as f64;
    assert!((0.9..=0.99).contains(&frac), "coverage {frac}");
}

#[test]
fn fit_rejects_thin_or_degenerate_windows() {
    let t = times();
    let v: Vec<f64> = t.iter().map(|t| 1.0 / t).collect();
    assert!(matches!(fit_power_law(&t, &v, (5.0, 10.0)), Err(Error::Domain(_))));
    assert!(fit_power_law(&t, &v, (100.0, 200.0)).is_err());
    let zeros = vec![0.0; t.len()];
    let e = fit_power_law(&t, &zeros, (5.0, 35.0)).unwrap_err();
    assert!(e.to_string().contains("degenerate data"));
    assert!(matches!(fit_power_law(&t, &v[..5], (5.0, 35.0)), Err(Error::SizeMismatch { .. })));
}

#[test]
fn low_band_powers_follow_heat_scaling() {
    let r = |n, d| Lp::ratio(n, d);
    assert!((low_band_exponent(Kernel::K1, Lp::int(2), Lp::int(1), 0, 0).unwrap() + 0.25).abs() < 1e-15);
    assert!((low_band_exponent(Kernel::K1, Lp::int(2), Lp::int(1), 1, 0).unwrap() + 0.75).abs() < 1e-15);
    assert!((low_band_exponent(Kernel::K1, Lp::int(2), Lp::int(1), 0, 1).unwrap() + 0.75).abs() < 1e-15);
    assert!((low_band_exponent(Kernel::K0, Lp::int(2), Lp::int(1), 0, 0).unwrap() + 0.75).abs() < 1e-15);
    // q = p: no dispersive gain, only the derivative count.
    for p in [r(3, 2), Lp::int(2), Lp::int(7)] {
        assert!((low_band_exponent(Kernel::K1, p, p, 2, 0).unwrap()).abs() < 1e-15);
    }
}

#[test]
fn kernel_probe_domain_errors() {
    let params = ElasticParams::new(1.0, 0.0, 1.0).unwrap();
    let grid = Grid::new(16.0, 16).unwrap();
    let data = gaussian_field(&grid, [8.0; 3], 1.0, [1.0, 0.0, 0.0]);
    let base = KernelProbe {
        kernel: Kernel::K1,
        band: Band::Low,
        p: Lp::int(2),
        q: Lp::int(1),
        alpha: 0,
        ell: 0,
        c0: 1.0,
        c1: 5.0,
        period: 1.0,
    };
    let t = [1.0, 2.0];
    let run = |p: KernelProbe| probe_kernel_estimate(&params, &data, &p, &t, (0.0, 3.0), 4);
    assert!(matches!(run(KernelProbe { p: Lp::int(1), q: Lp::int(1), ..base.clone() }), Err(Error::Domain(_))));
    assert!(run(KernelProbe { p: Lp::Infinity, q: Lp::Infinity, ..base.clone() }).is_err());
    assert!(run(KernelProbe { p: Lp::int(2), q: Lp::int(3), ..base.clone() }).is_err());
    assert!(run(KernelProbe { ell: 2, ..base.clone() }).is_err());
    assert!(run(KernelProbe { c0: 5.0, c1: 1.0, ..base.clone() }).is_err());
}

#[test]
fn q_probe_stays_bounded_across_periods() {
    let params = ElasticParams::new(1.0, 0.0, 1.0).unwrap();
    let grid = Grid::new(32.0, 16).unwrap();
    let data = gaussian_field(&grid, [16.0; 3], 1.5, [0.0, 1.0, 0.0]);
    let t: Vec<f64> = (0..10).map(|i| 0.1 * i as f64).collect();
    let mut ratios = Vec::new();
    for period in [0.5, 1.0, 2.0] {
        for band in [Band::Low, Band::Middle] {
            let probe = KernelProbe {
                kernel: Kernel::Q,
                band,
                p: Lp::int(2),
                q: Lp::int(2),
                alpha: 0,
                ell: 0,
                c0: 1.0,
                c1: 5.0,
                period,
            };
            let r = probe_kernel_estimate(&params, &data, &probe, &t, (0.0, 1.0), 16).unwrap();
            assert!(r.power_fit.is_none() && r.rate_fit.is_none());
            assert!(r.bound_ratio.is_finite() && r.bound_ratio > 0.0, "T = {period}, {band:?}");
            ratios.push(r.bound_ratio);
        }
    }
    assert!(ratios.iter().all(|r| *r < 1e3), "{ratios:?}");
}

#[test]
fn middle_band_decays_exponentially() {
    let params = ElasticParams::new(1.0, 0.0, 1.0).unwrap();
    let grid = Grid::new(32.0, 32).unwrap();
    let data = gaussian_field(&grid, [16.0; 3], 0.7, [1.0, 1.0, 0.0]);
    let t: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64).collect();
    for kernel in [Kernel::K0, Kernel::K1] {
        let probe = KernelProbe {
            kernel,
            band: Band::Middle,
            p: Lp::int(2),
            q: Lp::int(1),
            alpha: 0,
            ell: 0,
            c0: 1.0,
            c1: 4.0,
            period: 1.0,
        };
        let r = probe_kernel_estimate(&params, &data, &probe, &t, (1.0, 10.0), 16).unwrap();
        // Modes with |xi| >= c0/2 decay at least like exp(-nu c0^2 t / 8).
        assert!(r.rate_fit.unwrap().exponent < -0.1, "{kernel:?}: {:?}", r.rate_fit);
    }
}

#[test]
fn regularity_ranges() {
    let p0 = Lp::ratio(5, 2);
    assert_eq!(critical_exponent(p0), Some(Lp::int(15)));
    assert_eq!(critical_exponent(Lp::int(3)), None);
    assert_eq!(critical_exponent(Lp::int(4)), Some(Lp::Infinity));
    for (k, p) in regularity_defaults() {
        regularity_range_check(k, p, p0).unwrap();
    }
    assert!(regularity_range_check(1, Lp::ratio(3, 2), p0).is_err());
    assert!(regularity_range_check(2, Lp::int(15), p0).is_ok());
    assert!(regularity_range_check(2, Lp::int(16), p0).is_err());
    assert!(regularity_range_check(3, Lp::int(3), p0).is_err());
    assert!(regularity_range_check(4, Lp::int(2), p0).is_err());
}

#[test]
fn norms_of_a_tone() {
    let grid = Grid::new(2.0 * PI, 32).unwrap();
    let k = 3.0;
    let phys = PhysicalField::from_fn(grid, |x| [(k * x[1]).sin(), 0.0, 0.0]);
    let mut u = to_spectral(&phys).unwrap();
    u.zero_mean();
    let vol = grid.l().powi(3);
    let l2 = norm(&u, NormSpec::new(0, Lp::int(2), Target::U).unwrap()).unwrap();
    assert!((l2 - (vol / 2.0).sqrt()).abs() < 1e-12 * l2);
    let linf = norm(&u, NormSpec::new(1, Lp::Infinity, Target::U).unwrap()).unwrap();
    assert!((linf - k).abs() < 1e-12);
    // |grad^3 u| = k^3 |cos| with a single nonzero index combination.
    let g3 = norm(&u, NormSpec::new(3, Lp::int(2), Target::U).unwrap()).unwrap();
    assert!((g3 - k.powi(3) * (vol / 2.0).sqrt()).abs() < 1e-10 * g3);
    assert!(NormSpec::new(4, Lp::int(2), Target::U).is_err());
    assert!(NormSpec::new(1, Lp::int(1), Target::U).is_err());
}

#[test]
fn decay_report_on_synthetic_series() {
    let t: Vec<f64> = (0..=40).map(|i| i as f64).collect();
    let table = x2_table();
    let series: [Vec<f64>; 8] =
        std::array::from_fn(|i| t.iter().map(|t| (1.0 + t).powf(-rational_f64(table[i].1))).collect());
    let report = decay_report(&t, &series, (5.0, 35.0), 30.0);
    assert!(report.window_truncated);
    let asserted: Vec<&str> = report.entries.iter().filter(|e| e.asserted).map(|e| e.norm_id.as_str()).collect();
    assert_eq!(asserted.len(), 6);
    assert!(!asserted.iter().any(|id| id.starts_with("grad1_u")));
    for e in &report.entries {
        let fit = e.fit.unwrap();
        assert!((fit.exponent - e.x2_target.unwrap()).abs() < 1e-10, "{}", e.norm_id);
        if !e.asserted {
            assert!(e.note.contains("stability target"));
            assert!(e.stability_target.unwrap() != e.x2_target.unwrap());
        }
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 9);
    let json: serde_json::Value = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 8);
}
