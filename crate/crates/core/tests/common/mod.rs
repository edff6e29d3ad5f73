//! Independent reference computations shared by the integration tests.
//! Nothing here calls into the closed-form symbol code of the library.
#![allow(dead_code)]

use nalgebra::{Matrix6, Vector6};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type M6 = Matrix6<C64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn log_uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp()
}

pub fn random_direction(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let v: [f64; 3] = std::array::from_fn(|_| 2.0 * rng.random::<f64>() - 1.0);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.1 && n <= 1.0 {
            return v.map(|x| x / n);
        }
    }
}

pub fn scaled(dir: [f64; 3], r: f64) -> [f64; 3] {
    dir.map(|x| x * r)
}

/// The generator assembled entry by entry from the system coefficients.
pub fn generator(mu: f64, lambda: f64, nu: f64, xi: [f64; 3]) -> M6 {
    let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
    let mut a = M6::zeros();
    for i in 0..3 {
        a[(i, 3 + i)] = C64::new(1.0, 0.0);
        a[(3 + i, 3 + i)] = C64::new(-nu * r2, 0.0);
        for k in 0..3 {
            let d = if i == k { 1.0 } else { 0.0 };
            a[(3 + i, k)] = C64::new(-mu * r2 * d - (lambda + mu) * xi[i] * xi[k], 0.0);
        }
    }
    a
}

/// `diag(s I3, I3)`; conjugating with it balances the generator.
pub fn energy_scaling(s: f64) -> (M6, M6) {
    let mut d = M6::identity();
    let mut di = M6::identity();
    for i in 0..3 {
        d[(i, i)] = C64::new(s, 0.0);
        di[(i, i)] = C64::new(1.0 / s, 0.0);
    }
    (d, di)
}

fn norm1(a: &M6) -> f64 {
    (0..6).map(|j| (0..6).map(|i| a[(i, j)].norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// Matrix exponential by Pade(13) scaling and squaring.
pub fn expm(a: &M6) -> M6 {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = norm1(a);
    let s = if n > THETA13 { (n / THETA13).log2().ceil() as i32 } else { 0 };
    let a = a / C64::new(2f64.powi(s), 0.0);
    let id = M6::identity();
    let a2 = a * a;
    let a4 = a2 * a2;
    let a6 = a4 * a2;
    let c = |x: f64| C64::new(x, 0.0);
    let u_inner = a6 * (a6 * c(B[13]) + a4 * c(B[11]) + a2 * c(B[9]))
        + a6 * c(B[7])
        + a4 * c(B[5])
        + a2 * c(B[3])
        + id * c(B[1]);
    let u = a * u_inner;
    let v = a6 * (a6 * c(B[12]) + a4 * c(B[10]) + a2 * c(B[8]))
        + a6 * c(B[6])
        + a4 * c(B[4])
        + a2 * c(B[2])
        + id * c(B[0]);
    let mut r = (v - u).lu().solve(&(v + u)).expect("Pade denominator invertible");
    for _ in 0..s {
        r = r * r;
    }
    r
}

/// `exp(t A)` computed in the balanced basis `(|xi| u, v)` and mapped back.
pub fn expm_balanced(mu: f64, lambda: f64, nu: f64, xi: [f64; 3], t: f64) -> M6 {
    let r = (xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2]).sqrt();
    let a = generator(mu, lambda, nu, xi) * C64::new(t, 0.0);
    if r == 0.0 {
        return expm(&a);
    }
    let (d, di) = energy_scaling(r);
    di * expm(&(d * a * di)) * d
}

pub fn inverse(a: &M6) -> M6 {
    a.lu().try_inverse().expect("matrix invertible")
}

/// Max-entry relative difference `max|a - b| / max|b|`.
pub fn rel_diff(a: &M6, b: &M6) -> f64 {
    let num = (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let den = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    num / den.max(f64::MIN_POSITIVE)
}

/// Relative difference after balancing both matrices with `diag(s I, I)`.
pub fn rel_diff_balanced(a: &M6, b: &M6, s: f64) -> f64 {
    let (d, di) = energy_scaling(s);
    rel_diff(&(d * a * di), &(d * b * di))
}

/// Adaptive classical RK4 with step doubling for `z' = A z`.
pub fn rk4_linear(a: &M6, z0: Vector6<C64>, t_end: f64, rtol: f64) -> Vector6<C64> {
    let f = |z: &Vector6<C64>| a * z;
    let step = |z: &Vector6<C64>, h: f64| {
        let hc = C64::new(h, 0.0);
        let k1 = f(z);
        let k2 = f(&(z + k1 * (hc * 0.5)));
        let k3 = f(&(z + k2 * (hc * 0.5)));
        let k4 = f(&(z + k3 * hc));
        z + (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * (hc / 6.0)
    };
    let mut z = z0;
    let mut t = 0.0;
    let scale = z0.iter().map(|x| x.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut h = (t_end / 16.0).min(0.5 / norm1(a).max(1e-12));
    while t < t_end {
        h = h.min(t_end - t);
        let full = step(&z, h);
        let half = step(&step(&z, 0.5 * h), 0.5 * h);
        let err = (full - half).iter().map(|x| x.norm()).fold(0.0, f64::max) / 15.0;
        if err <= rtol * scale || h < 1e-12 {
            z = half + (half - full) / C64::new(15.0, 0.0);
            t += h;
            let grow = if err == 0.0 { 2.0 } else { (0.9 * (rtol * scale / err).powf(0.2)).min(2.0) };
            h *= grow.max(0.2);
        } else {
            h *= (0.9 * (rtol * scale / err).powf(0.2)).max(0.1);
        }
    }
    z
}

/// Least-squares slope of `ys` against `xs`.
pub fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}
