//! Periodic box discretization, transforms, and Fourier multipliers.
//!
//! Conventions (fixed, relied on by the snapshot format and the tests):
//!
//! * Modes are stored in FFT order along each axis: index `i` carries the
//!   integer wavenumber `k = i` for `i < N/2` and `k = i - N` otherwise, so
//!   `k` ranges over `[-N/2, N/2)`. A 3-D mode `(i1, i2, i3)` lives at flat
//!   index `(i1 * N + i2) * N + i3` (third axis fastest). Physical samples
//!   `x = (i1, i2, i3) * L / N` use the same flat layout.
//! * `xi_k = (2 pi / L) k`.
//! * Forward transform: `c_k = N^-3 sum_x f(x) exp(-i xi_k . x)`, so that
//!   `f(x) = sum_k c_k exp(i xi_k . x)` and Parseval reads
//!   `int |f|^2 dx = L^3 sum_k |c_k|^2`. The continuous transform
//!   `(2 pi)^{-3/2} int exp(-i x . xi) f dx` of a box-supported `f` equals
//!   `(2 pi)^{-3/2} L^3 c_k` at `xi = xi_k`.
//! * Odd powers of `i xi_a` are taken as zero on the Nyquist index
//!   `k_a = -N/2`, which keeps derivatives of real fields real.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{Matrix3, Vector3};
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::symbol::C64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    n: usize,
    l: f64,
}

impl Grid {
    pub fn new(l: f64, n: usize) -> Result<Self> {
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Config(format!("box length L = {l} must be positive")));
        }
        if n % 2 != 0 || !(16..=512).contains(&n) {
            return Err(Error::Config(format!("N = {n} must be even and in [16, 512]")));
        }
        Ok(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn l(&self) -> f64 {
        self.l
    }
    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(3)
    }
    /// Number of lattice modes (and physical samples), `N^3`.
    pub fn len(&self) -> usize {
        self.n * self.n * self.n
    }
    pub fn is_empty(&self) -> bool {
        false
    }
    /// Lattice spacing in frequency, `2 pi / L`.
    pub fn dk(&self) -> f64 {
        2.0 * PI / self.l
    }

    /// Integer wavenumber of axis index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    pub fn split(&self, idx: usize) -> [usize; 3] {
        let n = self.n;
        [idx / (n * n), (idx / n) % n, idx % n]
    }

    pub fn mode(&self, idx: usize) -> [i64; 3] {
        let [a, b, c] = self.split(idx);
        [self.wavenumber(a), self.wavenumber(b), self.wavenumber(c)]
    }

    pub fn xi(&self, idx: usize) -> [f64; 3] {
        let k = self.mode(idx);
        let dk = self.dk();
        [k[0] as f64 * dk, k[1] as f64 * dk, k[2] as f64 * dk]
    }

    /// Integer `|k|^2`; `|xi| = dk * sqrt(k2)`.
    pub fn k2(&self, idx: usize) -> i64 {
        let k = self.mode(idx);
        k[0] * k[0] + k[1] * k[1] + k[2] * k[2]
    }

    pub fn max_k2(&self) -> i64 {
        let h = (self.n / 2) as i64;
        3 * h * h
    }

    pub fn xi_norm_of_k2(&self, k2: i64) -> f64 {
        self.dk() * (k2 as f64).sqrt()
    }

    pub fn index_of(&self, k: [i64; 3]) -> usize {
        let n = self.n as i64;
        let w = |x: i64| x.rem_euclid(n) as usize;
        (w(k[0]) * self.n + w(k[1])) * self.n + w(k[2])
    }

    /// Flat index of `-k` (mod N).
    pub fn conj_index(&self, idx: usize) -> usize {
        let n = self.n;
        let [a, b, c] = self.split(idx);
        let f = |x: usize| (n - x) % n;
        (f(a) * n + f(b)) * n + f(c)
    }

    /// Physical coordinates of sample `idx`.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let [a, b, c] = self.split(idx);
        let dx = self.dx();
        [a as f64 * dx, b as f64 * dx, c as f64 * dx]
    }

    /// `|xi|` per flat mode index.
    pub fn xi_norms(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.xi_norm_of_k2(self.k2(i))).collect()
    }

    fn axis_xi(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.wavenumber(i) as f64 * self.dk()).collect()
    }

    pub fn max_wrap_time(&self, speed: f64) -> f64 {
        self.l / (2.0 * speed)
    }
}

/// Cached complex 3-D FFT plans per size.
pub struct Fft3 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Fft3 {
    pub fn for_size(n: usize) -> Arc<Fft3> {
        static CACHE: OnceLock<Mutex<HashMap<usize, Arc<Fft3>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("fft plan cache poisoned");
        map.entry(n)
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                Arc::new(Fft3 {
                    n,
                    forward: planner.plan_fft_forward(n),
                    inverse: planner.plan_fft_inverse(n),
                })
            })
            .clone()
    }

    /// Unnormalized in-place 3-D transform (`exp(-i..)` forward, `exp(+i..)` inverse).
    pub fn process(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        assert_eq!(data.len(), n * n * n);
        let fft = if inverse { &self.inverse } else { &self.forward };
        let mut scratch = vec![C64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        fft.process_with_scratch(data, &mut scratch);
        let mut lines = vec![C64::new(0.0, 0.0); n * n];
        // Axis 2 (stride N) inside each slab.
        for slab in data.chunks_mut(n * n) {
            for i2 in 0..n {
                for i3 in 0..n {
                    lines[i3 * n + i2] = slab[i2 * n + i3];
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for i2 in 0..n {
                for i3 in 0..n {
                    slab[i2 * n + i3] = lines[i3 * n + i2];
                }
            }
        }
        // Axis 1 (stride N^2), one (i1, i3) plane per i2.
        for i2 in 0..n {
            for i1 in 0..n {
                let row = &data[i1 * n * n + i2 * n..i1 * n * n + i2 * n + n];
                for (i3, v) in row.iter().enumerate() {
                    lines[i3 * n + i1] = *v;
                }
            }
            fft.process_with_scratch(&mut lines, &mut scratch);
            for i1 in 0..n {
                let row = &mut data[i1 * n * n + i2 * n..i1 * n * n + i2 * n + n];
                for (i3, v) in row.iter_mut().enumerate() {
                    *v = lines[i3 * n + i1];
                }
            }
        }
    }
}

/// Inverse transform of Hermitian coefficient arrays to real samples,
/// two arrays per complex FFT.
pub fn inverse_real_many(grid: &Grid, coeffs: &[&[C64]]) -> Vec<Vec<f64>> {
    let plan = Fft3::for_size(grid.n);
    let mut out = Vec::with_capacity(coeffs.len());
    for pair in coeffs.chunks(2) {
        let mut buf: Vec<C64> = match pair {
            [a, b] => a.iter().zip(b.iter()).map(|(x, y)| x + C64::i() * y).collect(),
            [a] => a.to_vec(),
            _ => unreachable!(),
        };
        plan.process(&mut buf, true);
        out.push(buf.iter().map(|z| z.re).collect());
        if pair.len() == 2 {
            out.push(buf.iter().map(|z| z.im).collect());
        }
    }
    out
}

/// Normalized forward transform of real sample arrays, two per complex FFT.
pub fn forward_real_many(grid: &Grid, samples: &[&[f64]]) -> Vec<Vec<C64>> {
    let plan = Fft3::for_size(grid.n);
    let scale = 1.0 / grid.len() as f64;
    let mut out = Vec::with_capacity(samples.len());
    for pair in samples.chunks(2) {
        match pair {
            [a, b] => {
                let mut buf: Vec<C64> =
                    a.iter().zip(b.iter()).map(|(&x, &y)| C64::new(x, y)).collect();
                plan.process(&mut buf, false);
                let mut ca = vec![C64::new(0.0, 0.0); buf.len()];
                let mut cb = vec![C64::new(0.0, 0.0); buf.len()];
                for idx in 0..buf.len() {
                    let z = buf[idx];
                    let w = buf[grid.conj_index(idx)].conj();
                    ca[idx] = (z + w) * (0.5 * scale);
                    cb[idx] = (z - w) * C64::new(0.0, -0.5 * scale);
                }
                out.push(ca);
                out.push(cb);
            }
            [a] => {
                let mut buf: Vec<C64> = a.iter().map(|&x| C64::new(x, 0.0)).collect();
                plan.process(&mut buf, false);
                buf.iter_mut().for_each(|z| *z *= scale);
                out.push(buf);
            }
            _ => unreachable!(),
        }
    }
    out
}

/// Real samples of a 3-component field.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalField {
    pub grid: Grid,
    pub comps: [Vec<f64>; 3],
}

impl PhysicalField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![0.0; grid.len()];
        Self { grid, comps: [z.clone(), z.clone(), z] }
    }

    pub fn from_fn(grid: Grid, f: impl Fn([f64; 3]) -> [f64; 3]) -> Self {
        let mut out = Self::zeros(grid);
        for idx in 0..grid.len() {
            let v = f(grid.position(idx));
            for c in 0..3 {
                out.comps[c][idx] = v[c];
            }
        }
        out
    }
}

/// Fourier coefficients of a real 3-component field.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    comps: [Vec<C64>; 3],
}

impl SpectralField {
    pub fn zeros(grid: Grid) -> Self {
        let z = vec![C64::new(0.0, 0.0); grid.len()];
        Self { grid, comps: [z.clone(), z.clone(), z] }
    }

    pub fn from_components(grid: Grid, comps: [Vec<C64>; 3]) -> Result<Self> {
        for c in &comps {
            if c.len() != grid.len() {
                return Err(Error::SizeMismatch { expected: grid.len(), got: c.len() });
            }
        }
        Ok(Self { grid, comps })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn comp(&self, c: usize) -> &[C64] {
        &self.comps[c]
    }
    pub fn comp_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.comps[c]
    }
    pub fn comps(&self) -> &[Vec<C64>; 3] {
        &self.comps
    }
    pub fn into_components(self) -> [Vec<C64>; 3] {
        self.comps
    }

    pub fn at(&self, idx: usize) -> Vector3<C64> {
        Vector3::new(self.comps[0][idx], self.comps[1][idx], self.comps[2][idx])
    }

    pub fn set(&mut self, idx: usize, v: Vector3<C64>) {
        for c in 0..3 {
            self.comps[c][idx] = v[c];
        }
    }

    pub fn zero_mean(&mut self) {
        for c in &mut self.comps {
            c[0] = C64::new(0.0, 0.0);
        }
    }

    pub fn check_grid(&self, other: &SpectralField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: f64, other: &SpectralField) {
        for c in 0..3 {
            for (x, y) in self.comps[c].iter_mut().zip(&other.comps[c]) {
                *x += y * a;
            }
        }
    }

    pub fn scaled(&self, a: f64) -> SpectralField {
        let mut out = self.clone();
        for c in &mut out.comps {
            c.iter_mut().for_each(|z| *z *= a);
        }
        out
    }

    pub fn sub(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn add(&self, other: &SpectralField) -> SpectralField {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().all(|c| c.iter().all(|z| z.re.is_finite() && z.im.is_finite()))
    }

    pub fn max_abs(&self) -> f64 {
        self.comps.iter().flat_map(|c| c.iter()).map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Physical-space L2 norm via Parseval.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.comps.iter().flat_map(|c| c.iter()).map(|z| z.norm_sqr()).sum();
        (self.grid.l.powi(3) * s).sqrt()
    }

    /// `max |c(-k) - conj(c(k))| / max |c|`.
    pub fn hermitian_defect(&self) -> f64 {
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst: f64 = 0.0;
        for c in &self.comps {
            for idx in 0..c.len() {
                worst = worst.max((c[self.grid.conj_index(idx)] - c[idx].conj()).norm());
            }
        }
        worst / scale
    }

    /// Multiply every component by a per-mode scalar weight.
    pub fn masked(&self, mask: &[f64]) -> SpectralField {
        let mut out = self.clone();
        for c in &mut out.comps {
            for (z, m) in c.iter_mut().zip(mask) {
                *z *= *m;
            }
        }
        out
    }
}

/// Periodized Gaussian `exp(-|x - c|^2 / (2 w^2)) d` built directly from its
/// Fourier coefficients, with the zero mode removed.
pub fn gaussian_field(grid: &Grid, center: [f64; 3], width: f64, direction: [f64; 3]) -> SpectralField {
    let amp = (2.0 * PI * width * width).powf(1.5) / grid.l.powi(3);
    let mut out = SpectralField::zeros(*grid);
    for idx in 1..grid.len() {
        let xi = grid.xi(idx);
        let r2 = xi[0] * xi[0] + xi[1] * xi[1] + xi[2] * xi[2];
        let phase = -(xi[0] * center[0] + xi[1] * center[1] + xi[2] * center[2]);
        let c = C64::from_polar(amp * (-0.5 * width * width * r2).exp(), phase);
        for (a, d) in direction.iter().enumerate() {
            out.comps[a][idx] = c * *d;
        }
    }
    out
}

/// Raw forward transform; the zero mode is kept.
pub fn to_spectral(field: &PhysicalField) -> Result<SpectralField> {
    for c in &field.comps {
        if c.len() != field.grid.len() {
            return Err(Error::SizeMismatch { expected: field.grid.len(), got: c.len() });
        }
    }
    let mut out = forward_real_many(&field.grid, &[&field.comps[0], &field.comps[1], &field.comps[2]]);
    let c2 = out.pop().unwrap();
    let c1 = out.pop().unwrap();
    let c0 = out.pop().unwrap();
    SpectralField::from_components(field.grid, [c0, c1, c2])
}

pub fn to_physical(field: &SpectralField) -> PhysicalField {
    let mut out = inverse_real_many(&field.grid, &[field.comp(0), field.comp(1), field.comp(2)]);
    let c2 = out.pop().unwrap();
    let c1 = out.pop().unwrap();
    let c0 = out.pop().unwrap();
    PhysicalField { grid: field.grid, comps: [c0, c1, c2] }
}

/// Per-axis factors of `prod_a (i xi_a)^{n_a}`.
pub struct DerivativeTable {
    n: usize,
    /// `powers[a][order][i]`, order in 0..=3.
    powers: Vec<Vec<C64>>,
}

impl DerivativeTable {
    pub fn new(grid: &Grid) -> Self {
        let xi = grid.axis_xi();
        let n = grid.n;
        let mut powers = Vec::with_capacity(4);
        for order in 0..=3u32 {
            let v = (0..n)
                .map(|i| {
                    if order % 2 == 1 && i == n / 2 {
                        C64::new(0.0, 0.0)
                    } else {
                        C64::new(0.0, xi[i]).powu(order)
                    }
                })
                .collect();
            powers.push(v);
        }
        Self { n, powers }
    }

    /// Multiplier for derivative counts `orders = [n_1, n_2, n_3]`.
    pub fn factor(&self, idx: usize, orders: [u8; 3]) -> C64 {
        let n = self.n;
        let (a, b, c) = (idx / (n * n), (idx / n) % n, idx % n);
        self.powers[orders[0] as usize][a]
            * self.powers[orders[1] as usize][b]
            * self.powers[orders[2] as usize][c]
    }

    pub fn apply(&self, coeffs: &[C64], orders: [u8; 3]) -> Vec<C64> {
        if orders == [0, 0, 0] {
            return coeffs.to_vec();
        }
        let n = self.n;
        let (p0, p1, p2) = (
            &self.powers[orders[0] as usize],
            &self.powers[orders[1] as usize],
            &self.powers[orders[2] as usize],
        );
        let mut out = vec![C64::new(0.0, 0.0); coeffs.len()];
        for a in 0..n {
            for b in 0..n {
                let f = p0[a] * p1[b];
                let base = (a * n + b) * n;
                for c in 0..n {
                    out[base + c] = coeffs[base + c] * f * p2[c];
                }
            }
        }
        out
    }
}

/// Derivative counts for a list of axis indices, e.g. `[0, 0, 2] -> [2, 0, 1]`.
pub fn orders_of(axes: &[usize]) -> [u8; 3] {
    let mut o = [0u8; 3];
    for &a in axes {
        o[a] += 1;
    }
    o
}

/// Tabulate `f(|xi|)` for every integer `|k|^2` occurring on the grid.
pub fn radial_table<T>(grid: &Grid, f: impl Fn(f64) -> T) -> Vec<T> {
    (0..=grid.max_k2()).map(|k2| f(grid.xi_norm_of_k2(k2))).collect()
}

/// Per-mode 3x3 matrix multiplier; the zero mode is mapped to 0.
pub fn apply_multiplier(
    f: &SpectralField,
    m: impl Fn([i64; 3], [f64; 3]) -> Matrix3<C64>,
) -> Result<SpectralField> {
    let grid = f.grid;
    let mut out = SpectralField::zeros(grid);
    for idx in 1..grid.len() {
        let mat = m(grid.mode(idx), grid.xi(idx));
        if mat.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFiniteMultiplier { mode: grid.mode(idx) });
        }
        out.set(idx, mat * f.at(idx));
    }
    Ok(out)
}

/// Apply `c1 R1 + c2 R2` where the coefficients depend only on the integer
/// `|k|^2` of each mode; the zero mode is mapped to 0.
pub fn apply_riesz_multiplier(f: &SpectralField, coef: impl Fn(i64) -> [C64; 2]) -> SpectralField {
    let grid = f.grid;
    let mut out = SpectralField::zeros(grid);
    for idx in 1..grid.len() {
        let k = grid.mode(idx);
        let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
        let [c1, c2] = coef(k2);
        let (u1, u2) = riesz_split(k, k2, f.at(idx));
        out.set(idx, u1 * c1 + u2 * c2);
    }
    out
}

/// `(R1 u, R2 u)` at integer mode `k` with `|k|^2 = k2 > 0`.
#[inline]
pub fn riesz_split(k: [i64; 3], k2: i64, u: Vector3<C64>) -> (Vector3<C64>, Vector3<C64>) {
    let kv = Vector3::new(k[0] as f64, k[1] as f64, k[2] as f64);
    let dot = u[0] * kv[0] + u[1] * kv[1] + u[2] * kv[2];
    let u1 = kv.map(|x| C64::new(x, 0.0)) * (dot / k2 as f64);
    (u1, u - u1)
}

/// Smooth frequency partition `chi_L + chi_M + chi_H = 1`.
#[derive(Debug, Clone)]
pub struct CutoffMasks {
    pub c0: f64,
    pub c1: f64,
    pub chi_l: Vec<f64>,
    pub chi_m: Vec<f64>,
    pub chi_h: Vec<f64>,
}

/// `3 s^2 - 2 s^3` on `[0, 1]`, clamped outside.
pub fn blend(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

pub fn chi_low(r: f64, c0: f64) -> f64 {
    if r <= 0.5 * c0 {
        1.0
    } else if r >= c0 {
        0.0
    } else {
        1.0 - blend((r - 0.5 * c0) / (0.5 * c0))
    }
}

pub fn chi_high(r: f64, c1: f64) -> f64 {
    if r <= c1 {
        0.0
    } else if r >= 2.0 * c1 {
        1.0
    } else {
        blend((r - c1) / c1)
    }
}

pub fn cutoff_masks(grid: &Grid, c0: f64, c1: f64) -> Result<CutoffMasks> {
    if !(c0 > 0.0 && c0 < c1 && c1.is_finite()) {
        return Err(Error::Config(format!("cutoffs need 0 < c0 < c1, got c0 = {c0}, c1 = {c1}")));
    }
    let radii = grid.xi_norms();
    let chi_l: Vec<f64> = radii.iter().map(|&r| chi_low(r, c0)).collect();
    let chi_h: Vec<f64> = radii.iter().map(|&r| chi_high(r, c1)).collect();
    let chi_m = chi_l.iter().zip(&chi_h).map(|(l, h)| 1.0 - l - h).collect();
    Ok(CutoffMasks { c0, c1, chi_l, chi_m, chi_h })
}

/// Two-thirds rule: weight 0 on modes with any `|k_a| > N/3`.
pub fn dealias_mask(grid: &Grid) -> Vec<f64> {
    let n = grid.n as i64;
    (0..grid.len())
        .map(|idx| {
            let k = grid.mode(idx);
            if k.iter().any(|&ka| 3 * ka.abs() > n) {
                0.0
            } else {
                1.0
            }
        })
        .collect()
}

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"EPWF";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Write `comps` in the binary snapshot format: magic, version, N, L,
/// component count, then per component the N^3 coefficients in flat mode
/// order as little-endian `(re, im)` f64 pairs.
pub fn write_snapshot<W: Write>(mut w: W, grid: &Grid, comps: &[&[C64]]) -> Result<()> {
    w.write_all(SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&(grid.n as u32).to_le_bytes())?;
    w.write_all(&grid.l.to_le_bytes())?;
    w.write_all(&(comps.len() as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(grid.len() * 16);
    for c in comps {
        if c.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: c.len() });
        }
        buf.clear();
        for z in c.iter() {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_snapshot<R: Read>(mut r: R) -> Result<(Grid, Vec<Vec<C64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != SNAPSHOT_MAGIC {
        return Err(Error::Format("bad snapshot magic".into()));
    }
    let mut u4 = [0u8; 4];
    let mut u8b = [0u8; 8];
    r.read_exact(&mut u4)?;
    let version = u32::from_le_bytes(u4);
    if version != SNAPSHOT_VERSION {
        return Err(Error::Format(format!("unsupported snapshot version {version}")));
    }
    r.read_exact(&mut u4)?;
    let n = u32::from_le_bytes(u4) as usize;
    r.read_exact(&mut u8b)?;
    let l = f64::from_le_bytes(u8b);
    r.read_exact(&mut u4)?;
    let ncomp = u32::from_le_bytes(u4) as usize;
    let grid = Grid::new(l, n)?;
    let mut raw = vec![0u8; grid.len() * 16];
    let mut comps = Vec::with_capacity(ncomp);
    for _ in 0..ncomp {
        r.read_exact(&mut raw)?;
        let c = raw
            .chunks_exact(16)
            .map(|b| {
                C64::new(
                    f64::from_le_bytes(b[..8].try_into().unwrap()),
                    f64::from_le_bytes(b[8..].try_into().unwrap()),
                )
            })
            .collect();
        comps.push(c);
    }
    Ok((grid, comps))
}

pub fn save_field(path: &Path, field: &SpectralField) -> Result<()> {
    let f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_snapshot(f, &field.grid, &[field.comp(0), field.comp(1), field.comp(2)])
}

pub fn load_field(path: &Path) -> Result<SpectralField> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let (grid, mut comps) = read_snapshot(f)?;
    if comps.len() != 3 {
        return Err(Error::Format(format!("expected 3 components, found {}", comps.len())));
    }
    let c2 = comps.pop().unwrap();
    let c1 = comps.pop().unwrap();
    let c0 = comps.pop().unwrap();
    SpectralField::from_components(grid, [c0, c1, c2])
}
