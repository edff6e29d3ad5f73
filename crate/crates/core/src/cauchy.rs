//! Cauchy problem and perturbations of a periodic orbit, integrated per mode
//! with an exponential (ETD) scheme that treats the linear part exactly.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::analysis::{x2_norms, x2_table};
use crate::error::{Error, Result};
use crate::nonlinear::{FieldDerivatives, Nonlinearity};
use crate::periodic::{ForcingSpec, PeriodicSolution};
use crate::spectral::{radial_table, riesz_split, save_field, Grid, SpectralField};
use crate::symbol::{BranchSymbol, ElasticParams, Mat2C, BRANCHES, C64};

#[derive(Debug, Clone)]
pub struct StateVector {
    pub u: SpectralField,
    pub v: SpectralField,
    pub time: f64,
}

impl StateVector {
    pub fn new(u: SpectralField, v: SpectralField, time: f64) -> Result<Self> {
        u.check_grid(&v)?;
        Ok(Self { u, v, time })
    }

    pub fn grid(&self) -> &Grid {
        self.u.grid()
    }

    fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Apply per-branch 2x2 matrices `(u, v) -> M (u, v)` mode by mode, plus an
/// optional source response `(c_u, c_v) S`. Coefficients are indexed by `|k|^2`.
fn map_modes(
    u: &SpectralField,
    v: &SpectralField,
    mats: &[[Mat2C; 2]],
    source: Option<(&SpectralField, &[[[f64; 2]; 2]])>,
) -> (SpectralField, SpectralField) {
    let grid = *u.grid();
    let out: Vec<(Vector3<C64>, Vector3<C64>)> = (0..grid.len())
        .into_par_iter()
        .map(|idx| {
            let zero = Vector3::zeros();
            if idx == 0 {
                return (zero, zero);
            }
            let k = grid.mode(idx);
            let k2 = k[0] * k[0] + k[1] * k[1] + k[2] * k[2];
            let (u1, u2) = riesz_split(k, k2, u.at(idx));
            let (v1, v2) = riesz_split(k, k2, v.at(idx));
            let s = source.map(|(f, c)| (riesz_split(k, k2, f.at(idx)), &c[k2 as usize]));
            let m = &mats[k2 as usize];
            let mut nu = u1 * m[0][(0, 0)] + v1 * m[0][(0, 1)] + u2 * m[1][(0, 0)] + v2 * m[1][(0, 1)];
            let mut nv = u1 * m[0][(1, 0)] + v1 * m[0][(1, 1)] + u2 * m[1][(1, 0)] + v2 * m[1][(1, 1)];
            if let Some(((s1, s2), c)) = s {
                nu += s1 * C64::new(c[0][0], 0.0) + s2 * C64::new(c[1][0], 0.0);
                nv += s1 * C64::new(c[0][1], 0.0) + s2 * C64::new(c[1][1], 0.0);
            }
            (nu, nv)
        })
        .collect();
    let mut nu = SpectralField::zeros(grid);
    let mut nv = SpectralField::zeros(grid);
    for (idx, (a, b)) in out.into_iter().enumerate() {
        nu.set(idx, a);
        nv.set(idx, b);
    }
    (nu, nv)
}

fn propagator_table(params: &ElasticParams, grid: &Grid, t: f64) -> Vec<[Mat2C; 2]> {
    radial_table(grid, |r| BRANCHES.map(|b| BranchSymbol::new(params, b, r).propagator(t)))
}

/// `u(t) = K0(t) f0 + K1(t) f1`, `v(t) = dK0/dt f0 + dK1/dt f1`.
pub fn linear_solution(params: &ElasticParams, f0: &SpectralField, f1: &SpectralField, t: f64) -> Result<StateVector> {
    f0.check_grid(f1)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("time t = {t} must be finite and nonnegative")));
    }
    let mut a = f0.clone();
    let mut b = f1.clone();
    a.zero_mean();
    b.zero_mean();
    let mats = propagator_table(params, f0.grid(), t);
    let (u, v) = map_modes(&a, &b, &mats, None);
    StateVector::new(u, v, t)
}

/// Two-stage exponential Runge-Kutta step (Cox-Matthews ETD2RK):
///
/// ```text
///   a       = E z_n + h phi1(hA) s(t_n, z_n)
///   z_{n+1} = a + h phi2(hA) (s(t_n + h, a) - s(t_n, z_n))
/// ```
///
/// with `E = exp(hA)` and the source entering the velocity equation.
pub struct EtdStepper {
    params: ElasticParams,
    dt: f64,
    prop: Vec<[Mat2C; 2]>,
    /// Per `|k|^2` and branch: `(u, v)` response of `h phi1(hA)` to a unit source.
    phi1: Vec<[[f64; 2]; 2]>,
    phi2: Vec<[[f64; 2]; 2]>,
}

impl EtdStepper {
    pub fn new(params: ElasticParams, grid: &Grid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("time step dt = {dt} must be positive")));
        }
        let cols = radial_table(grid, |r| BRANCHES.map(|b| BranchSymbol::new(&params, b, r).phi_columns(dt)));
        let phi1 = cols.iter().map(|c| [c[0].0, c[1].0]).collect();
        let phi2 = cols.iter().map(|c| [c[0].1, c[1].1]).collect();
        Ok(Self { prop: propagator_table(&params, grid, dt), params, dt, phi1, phi2 })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn params(&self) -> &ElasticParams {
        &self.params
    }

    pub fn step(
        &self,
        state: &StateVector,
        source: &mut dyn FnMut(f64, &SpectralField, &SpectralField) -> Result<SpectralField>,
    ) -> Result<StateVector> {
        let t = state.time;
        let s0 = source(t, &state.u, &state.v)?;
        let (au, av) = map_modes(&state.u, &state.v, &self.prop, Some((&s0, &self.phi1)));
        let s1 = source(t + self.dt, &au, &av)?;
        let ds = s1.sub(&s0);
        let ident = vec![[Mat2C::identity(); 2]; self.prop.len()];
        let (u, v) = map_modes(&au, &av, &ident, Some((&ds, &self.phi2)));
        let next = StateVector { u, v, time: t + self.dt };
        if !next.is_finite() {
            return Err(Error::Divergence {
                at: format!("t = {}", next.time),
                detail: "non-finite state after exponential step".into(),
            });
        }
        Ok(next)
    }
}

/// One ETD2RK step of size `dt` with a freshly built stepper.
pub fn etd_step(
    params: ElasticParams,
    state: &StateVector,
    dt: f64,
    source: &mut dyn FnMut(f64, &SpectralField, &SpectralField) -> Result<SpectralField>,
) -> Result<StateVector> {
    EtdStepper::new(params, state.grid(), dt)?.step(state, source)
}

/// Norm samples along a trajectory; columns follow `x2_table` order.
#[derive(Debug, Clone, Default)]
pub struct TrajectoryLog {
    pub times: Vec<f64>,
    pub norms: Vec<[f64; 8]>,
    pub snapshots: Vec<PathBuf>,
    pub notes: Vec<String>,
}

impl TrajectoryLog {
    pub fn norm_ids() -> Vec<String> {
        x2_table().iter().map(|(s, _)| s.id()).collect()
    }

    pub fn push(&mut self, t: f64, norms: [f64; 8]) {
        self.times.push(t);
        self.norms.push(norms);
    }

    /// Time series of column `i`.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.norms.iter().map(|n| n[i]).collect()
    }

    pub fn all_series(&self) -> [Vec<f64>; 8] {
        std::array::from_fn(|i| self.series(i))
    }

    /// Max over samples of the largest column.
    pub fn max_norm(&self) -> f64 {
        self.norms.iter().flat_map(|n| n.iter()).cloned().fold(0.0, f64::max)
    }

    /// Long-format CSV: `t,norm_id,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "t,norm_id,value")?;
        let ids = Self::norm_ids();
        for (t, row) in self.times.iter().zip(&self.norms) {
            for (id, v) in ids.iter().zip(row) {
                writeln!(f, "{t},{id},{v:e}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulationSettings {
    pub t_end: f64,
    pub dt: f64,
    /// Record norms every this many steps (and at t = 0).
    pub sample_every: usize,
    /// Abort when a norm exceeds this multiple of the initial data norm
    /// (or of 1 when the initial data vanish).
    pub blowup_factor: f64,
    /// Write snapshots at every sample into this directory.
    pub snapshot_dir: Option<PathBuf>,
    /// Maximum number of periodic-orbit nodes whose derivatives are cached.
    pub cache_nodes: usize,
}

impl Default for SimulationSettings {
    fn default() -> Self {
        Self { t_end: 10.0, dt: 1.0 / 256.0, sample_every: 16, blowup_factor: 1e6, snapshot_dir: None, cache_nodes: 16 }
    }
}

impl SimulationSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end = {} must be positive", self.t_end)));
        }
        if !(self.dt > 0.0 && self.dt <= self.t_end) {
            return Err(Error::Config(format!("dt = {} must lie in (0, t_end]", self.dt)));
        }
        if self.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !(self.blowup_factor > 1.0) {
            return Err(Error::Config("blowup_factor must exceed 1".into()));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil() as usize
    }
}

/// Time at which waves launched from one point meet their periodic images.
pub fn wrap_horizon(params: &ElasticParams, grid: &Grid) -> f64 {
    grid.l() / (2.0 * params.alpha1().max(params.alpha2()))
}

fn run(
    stepper: &EtdStepper,
    init: StateVector,
    settings: &SimulationSettings,
    horizon: f64,
    source: &mut dyn FnMut(f64, &SpectralField, &SpectralField) -> Result<SpectralField>,
) -> Result<(TrajectoryLog, StateVector)> {
    let mut log = TrajectoryLog::default();
    if settings.t_end > horizon {
        log.notes.push(format!(
            "t_end = {} exceeds the wrap-around horizon {horizon:.3}; late samples are contaminated by periodic images",
            settings.t_end
        ));
    }
    let first = x2_norms(&init.u, &init.v);
    let scale = first.iter().cloned().fold(0.0, f64::max);
    let bound = settings.blowup_factor * if scale > 0.0 { scale } else { 1.0 };
    let record = |log: &mut TrajectoryLog, s: &StateVector, norms: [f64; 8]| -> Result<()> {
        if let Some((i, v)) = norms.iter().enumerate().find(|(_, v)| !v.is_finite() || **v > bound) {
            return Err(Error::Divergence {
                at: format!("t = {}", s.time),
                detail: format!("{} = {v:e} exceeds blow-up bound {bound:e}", TrajectoryLog::norm_ids()[i]),
            });
        }
        log.push(s.time, norms);
        if let Some(dir) = &settings.snapshot_dir {
            std::fs::create_dir_all(dir)?;
            let n = log.times.len() - 1;
            for (name, f) in [("u", &s.u), ("v", &s.v)] {
                let p = dir.join(format!("{name}_{n:05}.epwf"));
                save_field(&p, f)?;
                log.snapshots.push(p);
            }
        }
        Ok(())
    };
    record(&mut log, &init, first)?;
    let mut state = init;
    let steps = settings.steps();
    for n in 1..=steps {
        state = stepper.step(&state, source)?;
        if n % settings.sample_every == 0 || n == steps {
            let norms = x2_norms(&state.u, &state.v);
            record(&mut log, &state, norms)?;
        }
    }
    Ok((log, state))
}

/// Evolve the perturbation `ut = u - uper` with source
/// `G(ut) = F(ut) + B(ut, uper) + B(uper, ut)` from `(f0, f1)` at `t = 0`.
pub fn simulate_perturbation(
    params: ElasticParams,
    nl: &Nonlinearity,
    f0: &SpectralField,
    f1: &SpectralField,
    uper: &PeriodicSolution,
    settings: &SimulationSettings,
) -> Result<TrajectoryLog> {
    settings.validate()?;
    f0.check_grid(f1)?;
    if *f0.grid() != uper.grid {
        return Err(Error::GridMismatch);
    }
    let stepper = EtdStepper::new(params, f0.grid(), settings.dt)?;
    let mut cache: Vec<(usize, FieldDerivatives)> = Vec::new();
    let mut source = |t: f64, u: &SpectralField, _v: &SpectralField| -> Result<SpectralField> {
        if nl.form().is_zero() {
            return Ok(SpectralField::zeros(*u.grid()));
        }
        let derivs = match uper.node_of(t) {
            Some(m) => {
                if let Some((_, d)) = cache.iter().find(|(n, _)| *n == m) {
                    return nl.eval_g_with(u, d);
                }
                let d = nl.derivatives(&uper.u[m])?;
                if cache.len() < settings.cache_nodes {
                    cache.push((m, d.clone()));
                }
                d
            }
            None => nl.derivatives(&uper.u_at(t))?,
        };
        nl.eval_g_with(u, &derivs)
    };
    let mut a = f0.clone();
    let mut b = f1.clone();
    a.zero_mean();
    b.zero_mean();
    let init = StateVector::new(a, b, 0.0)?;
    let horizon = wrap_horizon(&params, f0.grid());
    Ok(run(&stepper, init, settings, horizon, &mut source)?.0)
}

/// Evolve the full problem `u_tt - ... = F(u) + g(t)` from `(f0, f1)`.
pub fn simulate_cauchy(
    params: ElasticParams,
    nl: &Nonlinearity,
    f0: &SpectralField,
    f1: &SpectralField,
    forcing: Option<&ForcingSpec>,
    settings: &SimulationSettings,
) -> Result<(TrajectoryLog, StateVector)> {
    settings.validate()?;
    f0.check_grid(f1)?;
    let grid = *f0.grid();
    let stepper = EtdStepper::new(params, &grid, settings.dt)?;
    let g = forcing.map(|f| f.spatial(&grid)).transpose()?;
    let mut source = |t: f64, u: &SpectralField, _v: &SpectralField| -> Result<SpectralField> {
        let mut s = nl.eval_f(u)?;
        if let (Some(f), Some(g)) = (forcing, &g) {
            s.axpy(f.waveform.eval(t, f.period), g);
        }
        Ok(s)
    };
    let mut a = f0.clone();
    let mut b = f1.clone();
    a.zero_mean();
    b.zero_mean();
    let init = StateVector::new(a, b, 0.0)?;
    let horizon = wrap_horizon(&params, &grid);
    run(&stepper, init, settings, horizon, &mut source)
}
