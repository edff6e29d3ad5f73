//! Norms, decay-exponent tables and fits, and kernel estimate probes.

use std::fmt;
use std::str::FromStr;

use num_rational::Rational64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::periodic::PeriodicSolution;
use crate::spectral::{
    apply_riesz_multiplier, cutoff_masks, inverse_real_many, orders_of, radial_table,
    DerivativeTable, Grid, SpectralField,
};
use crate::symbol::{BranchSymbol, ElasticParams, BRANCHES, C64};

/// Lebesgue exponent `p`, finite rational or infinite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Lp {
    Finite(Rational64),
    Infinity,
}

impl Lp {
    pub fn int(p: i64) -> Self {
        Lp::Finite(Rational64::from_integer(p))
    }
    pub fn ratio(n: i64, d: i64) -> Self {
        Lp::Finite(Rational64::new(n, d))
    }
    pub fn value(&self) -> f64 {
        match self {
            Lp::Finite(r) => *r.numer() as f64 / *r.denom() as f64,
            Lp::Infinity => f64::INFINITY,
        }
    }
    /// `1/p` as a rational (0 for infinity).
    pub fn reciprocal(&self) -> Rational64 {
        match self {
            Lp::Finite(r) => r.recip(),
            Lp::Infinity => Rational64::from_integer(0),
        }
    }
}

impl fmt::Display for Lp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Lp::Finite(r) if *r.denom() == 1 => write!(f, "{}", r.numer()),
            Lp::Finite(r) => write!(f, "{}/{}", r.numer(), r.denom()),
            Lp::Infinity => write!(f, "inf"),
        }
    }
}

impl FromStr for Lp {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "inf" || s == "infinity" {
            return Ok(Lp::Infinity);
        }
        let bad = || Error::Config(format!("cannot parse Lebesgue exponent {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => {
                let (n, d) = (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?);
                if d == 0 {
                    return Err(bad());
                }
                Ok(Lp::ratio(n, d))
            }
            None => Ok(Lp::int(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl Serialize for Lp {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Lp {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(p) => Ok(Lp::int(p)),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The displacement `u`.
    U,
    /// The velocity `v = du/dt`.
    V,
}

/// `||grad^k w||_p` with `w` the displacement or the velocity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct NormSpec {
    pub k: u8,
    pub p: Lp,
    pub target: Target,
}

impl NormSpec {
    pub fn new(k: u8, p: Lp, target: Target) -> Result<Self> {
        let s = Self { k, p, target };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k > 3 {
            return Err(Error::Domain(format!("derivative order {} exceeds 3", self.k)));
        }
        if let Lp::Finite(r) = self.p {
            if r <= Rational64::from_integer(1) {
                return Err(Error::Domain(format!(
                    "Lebesgue exponent p = {} must exceed 1 (use the flagged L1 routine for forcing)",
                    self.p
                )));
            }
        }
        Ok(())
    }

    /// Stable identifier such as `grad3_u_L5/2`.
    pub fn id(&self) -> String {
        let t = match self.target {
            Target::U => "u",
            Target::V => "v",
        };
        match self.k {
            0 => format!("{t}_L{}", self.p),
            k => format!("grad{k}_{t}_L{}", self.p),
        }
    }
}

/// Sorted axis tuples of length `k` with their multiplicities `k!/prod(n_a!)`.
pub fn multi_indices(k: u8) -> Vec<(Vec<usize>, f64)> {
    let mut out = Vec::new();
    fn rec(k: usize, start: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for a in start..3 {
            cur.push(a);
            rec(k, a, cur, out);
            cur.pop();
        }
    }
    let mut raw = Vec::new();
    rec(k as usize, 0, &mut Vec::new(), &mut raw);
    let fact = |n: usize| (1..=n).product::<usize>() as f64;
    for idx in raw {
        let o = orders_of(&idx);
        let mult = fact(k as usize) / (fact(o[0] as usize) * fact(o[1] as usize) * fact(o[2] as usize));
        out.push((idx, mult));
    }
    out
}

/// Pointwise Euclidean magnitude of the full tensor `grad^k f`.
pub fn derivative_magnitude(field: &SpectralField, k: u8) -> Vec<f64> {
    let grid = *field.grid();
    let table = DerivativeTable::new(&grid);
    let mut coeffs = Vec::new();
    let mut weights = Vec::new();
    for (axes, mult) in multi_indices(k) {
        for c in 0..3 {
            coeffs.push(table.apply(field.comp(c), orders_of(&axes)));
            weights.push(mult);
        }
    }
    magnitude_of(&grid, &coeffs, &weights)
}

/// Pointwise magnitude of `|xi|^alpha` applied to each component.
pub fn fractional_magnitude(field: &SpectralField, alpha: f64) -> Vec<f64> {
    let grid = *field.grid();
    let radial = radial_table(&grid, |r| if r == 0.0 { 0.0 } else { r.powf(alpha) });
    let coeffs: Vec<Vec<C64>> = (0..3)
        .map(|c| {
            field.comp(c).iter().enumerate().map(|(i, z)| z * radial[grid.k2(i) as usize]).collect()
        })
        .collect();
    magnitude_of(&grid, &coeffs, &[1.0; 3])
}

fn magnitude_of(grid: &Grid, coeffs: &[Vec<C64>], weights: &[f64]) -> Vec<f64> {
    let refs: Vec<&[C64]> = coeffs.iter().map(|c| c.as_slice()).collect();
    let phys = inverse_real_many(grid, &refs);
    let mut sq = vec![0.0; grid.len()];
    for (f, w) in phys.iter().zip(weights) {
        sq.par_iter_mut().zip(f.par_iter()).for_each(|(s, x)| *s += w * x * x);
    }
    sq.par_iter_mut().for_each(|s| *s = s.sqrt());
    sq
}

/// Riemann-sum `L^p` norm of nonnegative samples (max for `p = inf`).
pub fn lp_of_samples(grid: &Grid, samples: &[f64], p: Lp) -> f64 {
    match p {
        Lp::Infinity => samples.iter().cloned().fold(0.0, f64::max),
        Lp::Finite(_) => {
            let pv = p.value();
            let s: f64 = if pv == 2.0 {
                samples.iter().map(|x| x * x).sum()
            } else {
                samples.iter().map(|x| x.powf(pv)).sum()
            };
            (s * grid.cell_volume()).powf(1.0 / pv)
        }
    }
}

pub fn norm(field: &SpectralField, spec: NormSpec) -> Result<f64> {
    spec.validate()?;
    Ok(lp_of_samples(field.grid(), &derivative_magnitude(field, spec.k), spec.p))
}

/// `L^1` norm of `grad^k f`; only used on forcing data where the
/// existence theory asks for it. Grid sums are a rough proxy for `L^1`.
pub fn l1_norm_flagged(field: &SpectralField, k: u8) -> f64 {
    lp_of_samples(field.grid(), &derivative_magnitude(field, k), Lp::int(1))
}

/// The finite-grid convergence norm of the periodic solver at one node:
/// `sum_{q in {p0, 2}} (||grad^3 u||_q + ||grad v||_q + ||v||_q) + ||grad u||_2`.
pub fn x1_proxy(u: &SpectralField, v: &SpectralField, p0: Lp) -> f64 {
    let grid = u.grid();
    let (d3u, dv, v0, d1u) = (
        derivative_magnitude(u, 3),
        derivative_magnitude(v, 1),
        derivative_magnitude(v, 0),
        derivative_magnitude(u, 1),
    );
    let mut qs = vec![Lp::int(2)];
    if p0 != Lp::int(2) {
        qs.push(p0);
    }
    let mut total = lp_of_samples(grid, &d1u, Lp::int(2));
    for q in qs {
        total += lp_of_samples(grid, &d3u, q) + lp_of_samples(grid, &dv, q) + lp_of_samples(grid, &v0, q);
    }
    total
}

/// The eight quantities of the stability norm, with their weights `w` in
/// `(1 + t)^w ||.||`.
pub fn x2_table() -> [(NormSpec, Rational64); 8] {
    let r = Rational64::new;
    let s = |k, p, target| NormSpec { k, p, target };
    let five_halves = Lp::ratio(5, 2);
    [
        (s(1, Lp::int(2), Target::U), r(3, 4)),
        (s(3, Lp::int(2), Target::U), r(7, 4)),
        (s(3, five_halves, Target::U), r(2, 1)),
        (s(1, Lp::Infinity, Target::U), r(2, 1)),
        (s(1, Lp::int(2), Target::V), r(5, 4)),
        (s(0, Lp::int(2), Target::V), r(3, 4)),
        (s(1, five_halves, Target::V), r(3, 2)),
        (s(0, five_halves, Target::V), r(1, 1)),
    ]
}

/// Values of the eight stability-norm quantities, in `x2_table` order.
pub fn x2_norms(u: &SpectralField, v: &SpectralField) -> [f64; 8] {
    let grid = u.grid();
    let d1u = derivative_magnitude(u, 1);
    let d3u = derivative_magnitude(u, 3);
    let d1v = derivative_magnitude(v, 1);
    let d0v = derivative_magnitude(v, 0);
    let two = Lp::int(2);
    let fh = Lp::ratio(5, 2);
    [
        lp_of_samples(grid, &d1u, two),
        lp_of_samples(grid, &d3u, two),
        lp_of_samples(grid, &d3u, fh),
        lp_of_samples(grid, &d1u, Lp::Infinity),
        lp_of_samples(grid, &d1v, two),
        lp_of_samples(grid, &d0v, two),
        lp_of_samples(grid, &d1v, fh),
        lp_of_samples(grid, &d0v, fh),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExponentSource {
    /// Pointwise-in-time decay estimates of the stability theorem.
    StabilityTheorem,
    /// Weights of the stability contraction norm.
    X2,
}

fn covered_table() -> String {
    "stability theorem: grad^3 u at q in {2, 5/2}; grad u at q in {2, inf}; grad^a v (a in {0,1}) at q in {2, 5/2}. \
     X2: grad u L2, grad^3 u L2 and L5/2, grad u Linf, grad v L2 and L5/2, v L2 and L5/2"
        .to_string()
}

/// Decay power of `spec` (negative for decay) as a rational.
pub fn theoretical_exponent(spec: NormSpec, source: ExponentSource) -> Result<Rational64> {
    let uncovered = || Error::Domain(format!("{} not covered; covered: {}", spec.id(), covered_table()));
    match source {
        ExponentSource::X2 => x2_table()
            .iter()
            .find(|(s, _)| *s == spec)
            .map(|(_, w)| -*w)
            .ok_or_else(uncovered),
        ExponentSource::StabilityTheorem => {
            let two = Lp::int(2);
            let fh = Lp::ratio(5, 2);
            let base = |q: Lp| {
                let iq = q.reciprocal();
                -Rational64::new(3, 2) * (Rational64::from_integer(1) - iq) + iq
            };
            match (spec.target, spec.k, spec.p) {
                (Target::U, 3, q) if q == two || q == fh => Ok(base(q) - Rational64::new(3, 2)),
                (Target::U, 1, q) if q == two || q == Lp::Infinity => Ok(base(q)),
                (Target::V, a @ (0 | 1), q) if q == two || q == fh => {
                    Ok(base(q) - Rational64::new(a as i64 + 1, 2))
                }
                _ => Err(uncovered()),
            }
        }
    }
}

/// Stability-theorem decay power of `||grad^alpha v||_q` for fractional
/// `0 <= alpha <= 1`, `q in {2, 5/2}`.
pub fn fractional_velocity_exponent(alpha: Rational64, q: Lp) -> Result<Rational64> {
    if alpha < Rational64::from_integer(0) || alpha > Rational64::from_integer(1) {
        return Err(Error::Domain(format!("alpha = {alpha} outside [0, 1]")));
    }
    if q != Lp::int(2) && q != Lp::ratio(5, 2) {
        return Err(Error::Domain(format!("q = {q} not in {{2, 5/2}}")));
    }
    let iq = q.reciprocal();
    Ok(-Rational64::new(3, 2) * (Rational64::from_integer(1) - iq) + iq
        - (alpha + Rational64::from_integer(1)) / Rational64::from_integer(2))
}

pub fn rational_f64(r: Rational64) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fit {
    pub exponent: f64,
    pub stderr: f64,
    pub samples: usize,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> Fit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let icpt = my - slope * mx;
    let sse: f64 = xs.iter().zip(ys).map(|(x, y)| (y - icpt - slope * x).powi(2)).sum();
    let stderr = if xs.len() > 2 { (sse / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    Fit { exponent: slope, stderr, samples: xs.len() }
}

fn window_samples(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<(Vec<f64>, Vec<f64>)> {
    if times.len() != values.len() {
        return Err(Error::SizeMismatch { expected: times.len(), got: values.len() });
    }
    let (t0, t1) = window;
    let picked: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(t, _)| **t >= t0 - 1e-12 && **t <= t1 + 1e-12)
        .map(|(t, v)| (*t, *v))
        .collect();
    if picked.is_empty() {
        return Err(Error::Domain(format!("empty fit window [{t0}, {t1}]")));
    }
    if picked.len() < 8 {
        return Err(Error::Domain(format!(
            "fit window [{t0}, {t1}] holds {} samples, need at least 8",
            picked.len()
        )));
    }
    if picked.iter().any(|(_, v)| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("degenerate data: zero or non-finite norm in fit window".into()));
    }
    Ok(picked.into_iter().unzip())
}

/// Least-squares slope of `log(value)` against `log(1 + t)` over `window`.
pub fn fit_power_law(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<Fit> {
    let (ts, vs) = window_samples(times, values, window)?;
    let xs: Vec<f64> = ts.iter().map(|t| (1.0 + t).ln()).collect();
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    Ok(least_squares(&xs, &ys))
}

/// Least-squares slope of `log(value)` against `t` (exponential rate).
pub fn fit_exponential_rate(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<Fit> {
    let (ts, vs) = window_samples(times, values, window)?;
    let ys: Vec<f64> = vs.iter().map(|v| v.ln()).collect();
    Ok(least_squares(&ts, &ys))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Kernel {
    K0,
    K1,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Band {
    Low,
    Middle,
    High,
}

/// Configuration of one kernel probe.
#[derive(Debug, Clone)]
pub struct KernelProbe {
    pub kernel: Kernel,
    pub band: Band,
    /// Target `L^p` of the output.
    pub p: Lp,
    /// Data exponent `q` of the right-hand side.
    pub q: Lp,
    /// Spatial derivative order.
    pub alpha: u8,
    /// Time derivative order (0 or 1).
    pub ell: u8,
    pub c0: f64,
    pub c1: f64,
    /// Period, used by the Q kernel.
    pub period: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProbeResult {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// `||grad^alpha data||_q` (grid proxy; flagged L1 rule when q = 1).
    pub data_norm: f64,
    /// Low-band prediction of the decay power (K0/K1 low band only).
    pub predicted_power: Option<f64>,
    pub power_fit: Option<Fit>,
    pub rate_fit: Option<Fit>,
    /// Max over times of `value / data_norm`.
    pub bound_ratio: f64,
}

/// Low-band decay power of `||d_t^ell grad^alpha K_{k,L}(t) * g||_p` against
/// `||g||_q`.
pub fn low_band_exponent(kernel: Kernel, p: Lp, q: Lp, alpha: u8, ell: u8) -> Result<f64> {
    check_pq(p, q)?;
    let d = rational_f64(q.reciprocal() - p.reciprocal());
    let shift = match kernel {
        Kernel::K0 => 0.5,
        Kernel::K1 => 1.0,
        Kernel::Q => return Err(Error::Domain("Q has no pointwise-in-time low-band power".into())),
    };
    Ok(-1.5 * d - d + shift - (ell as f64 + alpha as f64) / 2.0)
}

fn check_pq(p: Lp, q: Lp) -> Result<()> {
    let one = Lp::int(1);
    if p == one && q == one {
        return Err(Error::Domain("(p, q) = (1, 1) is excluded by the low-band kernel estimate".into()));
    }
    if p == Lp::Infinity && q == Lp::Infinity {
        return Err(Error::Domain("(p, q) = (inf, inf) is excluded by the low-band kernel estimate".into()));
    }
    if q.value() < 1.0 || q.value() > p.value() {
        return Err(Error::Domain(format!("need 1 <= q <= p, got q = {q}, p = {p}")));
    }
    Ok(())
}

/// Apply `d_t^ell grad^alpha (band-localized kernel)(t) *` to `data` and
/// return the `L^p` norm of the result.
fn kernel_norm_at(
    params: &ElasticParams,
    data: &SpectralField,
    band_mask: &[f64],
    probe: &KernelProbe,
    t: f64,
) -> Result<f64> {
    let grid = *data.grid();
    let row = probe.ell as usize;
    let coefs: Vec<[C64; 2]> = radial_table(&grid, |r| {
        let mut c = [C64::new(0.0, 0.0); 2];
        if r == 0.0 {
            return Ok(c);
        }
        for b in BRANCHES {
            let s = BranchSymbol::new(params, b, r);
            c[b.index()] = match probe.kernel {
                Kernel::K0 => s.propagator(t)[(row, 0)],
                Kernel::K1 => s.propagator(t)[(row, 1)],
                Kernel::Q => s.q_matrix(t, probe.period)?[(row, 1)],
            };
        }
        Ok(c)
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let localized = data.masked(band_mask);
    let out = apply_riesz_multiplier(&localized, |k2| coefs[k2 as usize]);
    Ok(lp_of_samples(&grid, &derivative_magnitude(&out, probe.alpha), probe.p))
}

/// Evaluate a kernel probe over `times`. For K0/K1 the result is the norm
/// at each time, with a power fit (low band) or exponential-rate fit
/// (middle/high band). For Q each entry is `int_0^T ||...Q(t - s)...||_p ds`
/// (trapezoid with `quad_nodes` intervals) and only the bound ratio is
/// meaningful.
pub fn probe_kernel_estimate(
    params: &ElasticParams,
    data: &SpectralField,
    probe: &KernelProbe,
    times: &[f64],
    fit_window: (f64, f64),
    quad_nodes: usize,
) -> Result<ProbeResult> {
    check_pq(probe.p, probe.q)?;
    if probe.ell > 1 {
        return Err(Error::Domain("time derivative order above 1 is not supported".into()));
    }
    let masks = cutoff_masks(data.grid(), probe.c0, probe.c1)?;
    let mask = match probe.band {
        Band::Low => &masks.chi_l,
        Band::Middle => &masks.chi_m,
        Band::High => &masks.chi_h,
    };
    let mag = derivative_magnitude(data, probe.alpha);
    let data_norm = lp_of_samples(data.grid(), &mag, probe.q);
    let mut values = Vec::with_capacity(times.len());
    for &t in times {
        let v = match probe.kernel {
            Kernel::K0 | Kernel::K1 => kernel_norm_at(params, data, mask, probe, t)?,
            Kernel::Q => {
                let h = probe.period / quad_nodes as f64;
                let mut acc = 0.0;
                for m in 0..=quad_nodes {
                    let w = if m == 0 || m == quad_nodes { 0.5 } else { 1.0 };
                    acc += w * kernel_norm_at(params, data, mask, probe, t - m as f64 * h)?;
                }
                acc * h
            }
        };
        values.push(v);
    }
    let bound_ratio = values.iter().map(|v| v / data_norm).fold(0.0, f64::max);
    let (mut predicted_power, mut power_fit, mut rate_fit) = (None, None, None);
    match (probe.kernel, probe.band) {
        (Kernel::Q, _) => {}
        (k, Band::Low) => {
            predicted_power = Some(low_band_exponent(k, probe.p, probe.q, probe.alpha, probe.ell)?);
            power_fit = Some(fit_power_law(times, &values, fit_window)?);
        }
        _ => rate_fit = Some(fit_exponential_rate(times, &values, fit_window)?),
    }
    Ok(ProbeResult { times: times.to_vec(), values, data_norm, predicted_power, power_fit, rate_fit, bound_ratio })
}

/// `3 p0 / (3 - p0)` for `p0 < 3`, infinite for `p0 > 3`, and `None` at
/// `p0 = 3` (every finite exponent is admissible there).
pub fn critical_exponent(p0: Lp) -> Option<Lp> {
    match p0 {
        Lp::Infinity => Some(Lp::Infinity),
        Lp::Finite(r) => {
            let three = Rational64::from_integer(3);
            if r < three {
                Some(Lp::Finite(three * r / (three - r)))
            } else if r > three {
                Some(Lp::Infinity)
            } else {
                None
            }
        }
    }
}

/// Check `p` against the regularity ranges for derivative order `k`.
pub fn regularity_range_check(k: u8, p: Lp, p0: Lp) -> Result<()> {
    let pv = p.value();
    let ok = match k {
        1 => pv > 1.5,
        2 => {
            pv > 1.0
                && match critical_exponent(p0) {
                    Some(star) => pv <= star.value(),
                    None => pv.is_finite(),
                }
        }
        3 => pv > 1.0 && pv <= p0.value(),
        _ => false,
    };
    if ok {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "p = {p} outside the regularity range for derivative order {k} (p0 = {p0}): \
             order 1 needs 3/2 < p <= inf, order 2 needs 1 < p <= p0*, order 3 needs 1 < p <= p0"
        )))
    }
}

/// The exponents used by the stability argument for the periodic orbit.
pub fn regularity_defaults() -> Vec<(u8, Lp)> {
    vec![
        (1, Lp::int(2)),
        (1, Lp::int(4)),
        (1, Lp::Infinity),
        (2, Lp::ratio(10, 9)),
        (2, Lp::int(2)),
        (2, Lp::int(10)),
        (3, Lp::ratio(5, 4)),
        (3, Lp::int(2)),
        (3, Lp::ratio(5, 2)),
    ]
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityRow {
    pub k: u8,
    pub p: Lp,
    /// Max over period nodes of `||grad^k u_per||_p`.
    pub max_value: f64,
    /// `max_value / forcing_norm` (the constant C), NaN for zero forcing.
    pub constant: f64,
}

/// Max-over-period regularity norms of a periodic solution.
pub fn probe_regularity(
    sol: &PeriodicSolution,
    entries: &[(u8, Lp)],
    p0: Lp,
    forcing_norm: f64,
) -> Result<Vec<RegularityRow>> {
    for &(k, p) in entries {
        regularity_range_check(k, p, p0)?;
    }
    let mut rows: Vec<RegularityRow> = entries
        .iter()
        .map(|&(k, p)| RegularityRow { k, p, max_value: 0.0, constant: f64::NAN })
        .collect();
    let mut orders: Vec<u8> = entries.iter().map(|e| e.0).collect();
    orders.sort_unstable();
    orders.dedup();
    for m in 0..sol.intervals() {
        for &k in &orders {
            let mag = derivative_magnitude(&sol.u[m], k);
            for row in rows.iter_mut().filter(|r| r.k == k) {
                row.max_value = row.max_value.max(lp_of_samples(&sol.grid, &mag, row.p));
            }
        }
    }
    if forcing_norm > 0.0 {
        for row in &mut rows {
            row.constant = row.max_value / forcing_norm;
        }
    }
    Ok(rows)
}

/// Decay report for one norm.
#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub norm_id: String,
    pub fit: Option<Fit>,
    pub stability_target: Option<f64>,
    pub x2_target: Option<f64>,
    /// `|fit - target|` against the asserted target, if any.
    pub margin: Option<f64>,
    pub asserted: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub window: (f64, f64),
    pub window_truncated: bool,
    pub entries: Vec<DecayEntry>,
}

impl DecayReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "norm_id,exponent,stderr,samples,stability_target,x2_target,margin,asserted,note\n",
        );
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                e.norm_id,
                opt(e.fit.map(|f| f.exponent)),
                opt(e.fit.map(|f| f.stderr)),
                e.fit.map(|f| f.samples).unwrap_or(0),
                opt(e.stability_target),
                opt(e.x2_target),
                opt(e.margin),
                e.asserted,
                e.note.replace(',', ";"),
            ));
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Build a decay report from stability-norm time series (columns in
/// `x2_table` order). The two `grad u` entries are reported against both
/// candidate targets and never asserted.
pub fn decay_report(
    times: &[f64],
    series: &[Vec<f64>; 8],
    window: (f64, f64),
    horizon: f64,
) -> DecayReport {
    let mut entries = Vec::new();
    for (i, (spec, _)) in x2_table().iter().enumerate() {
        let stability = theoretical_exponent(*spec, ExponentSource::StabilityTheorem).ok().map(rational_f64);
        let x2 = theoretical_exponent(*spec, ExponentSource::X2).ok().map(rational_f64);
        let asserted = !(spec.k == 1 && spec.target == Target::U);
        let (fit, note) = match fit_power_law(times, &series[i], window) {
            Ok(f) => (Some(f), String::new()),
            Err(e) => (None, format!("fit skipped: {e}")),
        };
        let margin = if asserted { fit.zip(x2).map(|(f, t)| (f.exponent - t).abs()) } else { None };
        let note = if !asserted && note.is_empty() {
            match (fit, stability, x2) {
                (Some(f), Some(a), Some(b)) => format!(
                    "not asserted; distance to stability target {:.3}, to X2 target {:.3}",
                    (f.exponent - a).abs(),
                    (f.exponent - b).abs()
                ),
                _ => "not asserted".into(),
            }
        } else {
            note
        };
        entries.push(DecayEntry { norm_id: spec.id(), fit, stability_target: stability, x2_target: x2, margin, asserted, note });
    }
    DecayReport { window, window_truncated: window.1 > horizon, entries }
}
