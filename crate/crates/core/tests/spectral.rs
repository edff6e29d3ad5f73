mod common;

use std::f64::consts::PI;

use epw::spectral::*;
use epw::Error;
use nalgebra::Matrix3;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use rand::Rng;

fn random_physical(grid: Grid, seed: u64) -> PhysicalField {
    let mut rng = common::rng(seed);
    let mut f = PhysicalField::zeros(grid);
    for c in f.comps.iter_mut() {
        c.iter_mut().for_each(|x| *x = rng.random::<f64>() - 0.5);
    }
    f
}

fn riemann_l2_sq(f: &PhysicalField) -> f64 {
    f.comps.iter().flat_map(|c| c.iter()).map(|x| x * x).sum::<f64>() * f.grid.cell_volume()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn parseval_and_round_trip(seed in any::<u64>(), n in prop::sample::select(vec![16usize, 20, 24]), l in 3.0f64..40.0) {
        let grid = Grid::new(l, n).unwrap();
        let phys = random_physical(grid, seed);
        let spec = to_spectral(&phys).unwrap();
        let lhs = riemann_l2_sq(&phys);
        let rhs = spec.l2_norm().powi(2);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs);
        prop_assert!(spec.hermitian_defect() <= 1e-14);
        let back = to_physical(&spec);
        for (a, b) in back.comps.iter().zip(&phys.comps) {
            for (x, y) in a.iter().zip(b) {
                prop_assert!((x - y).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn multipliers_compose(seed in any::<u64>(), a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let grid = Grid::new(2.0 * PI, 16).unwrap();
        let mut f = to_spectral(&random_physical(grid, seed)).unwrap();
        f.zero_mean();
        let m1 = |_: [i64; 3], xi: [f64; 3]| {
            Matrix3::from_fn(|i, j| C::new(a * xi[i] * xi[j], if i == j { b } else { 0.0 }))
        };
        let m2 = |_: [i64; 3], xi: [f64; 3]| {
            Matrix3::from_fn(|i, j| C::new(if i == j { 1.0 + xi[0] * xi[0] } else { 0.0 }, b * (i as f64 - j as f64)))
        };
        let two = apply_multiplier(&apply_multiplier(&f, m1).unwrap(), m2).unwrap();
        let one = apply_multiplier(&f, |k, xi| m2(k, xi) * m1(k, xi)).unwrap();
        prop_assert!(two.sub(&one).max_abs() <= 1e-12 * one.max_abs().max(1e-300));
    }

    #[test]
    fn riesz_parts_are_curl_and_divergence_free(seed in any::<u64>()) {
        let grid = Grid::new(2.0 * PI, 16).unwrap();
        let f = to_spectral(&random_physical(grid, seed)).unwrap();
        let one = C::new(1.0, 0.0);
        let zero = C::new(0.0, 0.0);
        let r1 = apply_riesz_multiplier(&f, |_| [one, zero]);
        let r2 = apply_riesz_multiplier(&f, |_| [zero, one]);
        let scale = f.max_abs();
        for idx in 1..grid.len() {
            let k = grid.mode(idx).map(|x| C::new(x as f64, 0.0));
            let a = r1.at(idx);
            let curl = [k[1] * a[2] - k[2] * a[1], k[2] * a[0] - k[0] * a[2], k[0] * a[1] - k[1] * a[0]];
            prop_assert!(curl.iter().all(|z| z.norm() <= 1e-12 * scale * 16.0));
            let b = r2.at(idx);
            let div = k[0] * b[0] + k[1] * b[1] + k[2] * b[2];
            prop_assert!(div.norm() <= 1e-12 * scale * 16.0);
            prop_assert!((a + b - f.at(idx)).norm() <= 1e-14 * scale);
        }
    }

    #[test]
    fn cutoff_masks_partition_unity(c0 in 0.1f64..2.0, ratio in 1.01f64..6.0) {
        let grid = Grid::new(8.0 * PI, 16).unwrap();
        let m = cutoff_masks(&grid, c0, c0 * ratio).unwrap();
        for idx in 0..grid.len() {
            let (l, mid, h) = (m.chi_l[idx], m.chi_m[idx], m.chi_h[idx]);
            prop_assert!((0.0..=1.0).contains(&l) && (0.0..=1.0).contains(&h));
            prop_assert!(mid >= -1e-15 && mid <= 1.0 + 1e-15);
            prop_assert!((l + mid + h - 1.0).abs() <= 1e-15);
        }
    }
}

#[test]
fn dealiasing_keeps_exactly_the_resolved_modes() {
    let grid = Grid::new(2.0 * PI, 24).unwrap();
    let mask = dealias_mask(&grid);
    for k in [[8, 0, 0], [0, -8, 3], [9, 0, 0], [0, 0, -9], [-12, 1, 1], [5, 5, 5]] {
        let idx = grid.index_of(k);
        let kept = k.iter().all(|&a: &i64| 3 * a.abs() <= 24);
        assert_eq!(mask[idx], if kept { 1.0 } else { 0.0 }, "{k:?}");
        let mut f = SpectralField::zeros(grid);
        f.comp_mut(0)[idx] = C::new(1.0, 0.0);
        let g = f.masked(&mask);
        assert_eq!(g.max_abs(), if kept { 1.0 } else { 0.0 });
    }
}

#[test]
fn third_derivative_of_a_tone() {
    let grid = Grid::new(4.0 * PI, 32).unwrap();
    let kx = 3.0 * 2.0 * PI / grid.l();
    let phys = PhysicalField::from_fn(grid, |x| [(kx * x[0]).sin(), 0.0, 0.0]);
    let f = to_spectral(&phys).unwrap();
    let table = DerivativeTable::new(&grid);
    let d = table.apply(f.comp(0), orders_of(&[0, 0, 0]));
    let back = inverse_real_many(&grid, &[&d]);
    for (idx, v) in back[0].iter().enumerate() {
        let x = grid.position(idx)[0];
        assert!((v + kx.powi(3) * (kx * x).cos()).abs() <= 1e-12, "{v} at {x}");
    }
}

#[test]
fn analytic_gaussian_matches_sampled_transform() {
    let grid = Grid::new(24.0, 48).unwrap();
    let c = [11.0, 12.5, 13.0];
    let w = 1.5;
    let analytic = gaussian_field(&grid, c, w, [0.0, 1.0, 0.0]);
    let phys = PhysicalField::from_fn(grid, |x| {
        let mut r2 = 0.0;
        for a in 0..3 {
            // Nearest periodic image; the tails beyond it are below 1e-13.
            let mut d = x[a] - c[a];
            d -= grid.l() * (d / grid.l()).round();
            r2 += d * d;
        }
        [0.0, (-0.5 * r2 / (w * w)).exp(), 0.0]
    });
    let mut sampled = to_spectral(&phys).unwrap();
    sampled.zero_mean();
    let err = analytic.sub(&sampled).max_abs();
    assert!(err <= 1e-12 * analytic.max_abs(), "{err}");
}

#[test]
fn snapshots_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::new(5.0, 16).unwrap();
    let f = to_spectral(&random_physical(grid, 4)).unwrap();
    let p = dir.path().join("f.epwf");
    save_field(&p, &f).unwrap();
    let g = load_field(&p).unwrap();
    assert_eq!(g.grid(), f.grid());
    assert_eq!(g.sub(&f).max_abs(), 0.0);

    let mut bytes = std::fs::read(&p).unwrap();
    bytes[0] = b'X';
    std::fs::write(&p, &bytes).unwrap();
    assert!(load_field(&p).is_err());
    std::fs::write(&p, &bytes[..10]).unwrap();
    assert!(load_field(&p).is_err());
}

#[test]
fn invalid_grids_and_cutoffs() {
    assert!(matches!(Grid::new(1.0, 15), Err(Error::Config(_))));
    assert!(Grid::new(1.0, 8).is_err());
    assert!(Grid::new(-1.0, 16).is_err());
    let grid = Grid::new(1.0, 16).unwrap();
    assert!(cutoff_masks(&grid, 2.0, 1.0).is_err());
    assert!(cutoff_masks(&grid, 0.0, 1.0).is_err());
}

#[test]
fn nonfinite_multiplier_is_reported() {
    let grid = Grid::new(1.0, 16).unwrap();
    let f = SpectralField::zeros(grid);
    let r = apply_multiplier(&f, |k, _| {
        if k == [1, 0, 0] {
            Matrix3::from_element(C::new(f64::NAN, 0.0))
        } else {
            Matrix3::identity()
        }
    });
    assert!(matches!(r, Err(Error::NonFiniteMultiplier { mode: [1, 0, 0] })));
}
