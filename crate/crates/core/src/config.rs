//! TOML run configuration. Every table is optional; unknown keys are errors.
//!
//! ```toml
//! scenario = "measure-decay"
//! seed = 7
//! output = "out"
//!
//! [params]
//! mu = 1.0
//! lambda = 0.0
//! nu = 1.0
//!
//! [grid]
//! length = 201.06192982974676   # L, defaults to 64 pi
//! n = 64
//!
//! [forcing]
//! period = 1.0
//! amplitude = 2.0
//! direction = [1.0, 0.0, 0.0]
//! profile = { kind = "gaussian", center = [100.5, 100.5, 100.5], width = 4.0 }
//! waveform = { kind = "sin" }
//!
//! [nonlinearity]
//! kind = "table"
//! terms = [{ i = 1, grad = [1, 1], hess = [1, 1, 1], weight = 1.0 }]
//!
//! [solver]
//! tol = 1e-10
//! max_iter = 20
//! n_t = 64
//! dt = 0.0625
//! c0 = 1.0
//! c1 = 5.66
//! p0 = "5/2"
//!
//! [simulation]
//! t_end = 35.5
//! sample_every = 4
//! blowup_factor = 1e6
//! data_amplitude = 0.01
//! data_width = 1.0
//! fit_start = 5.0
//! snapshots = false
//! probe_samples = 1000
//! ```

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::Lp;
use crate::error::{Error, Result};
use crate::nonlinear::{QuadraticForm, QuadraticTerm};
use crate::periodic::{ForcingSpec, Profile, SolverSettings, Waveform};
use crate::spectral::Grid;
use crate::symbol::{ElasticParams, BRANCHES};

pub const SCENARIOS: [&str; 6] = [
    "verify-symbols",
    "solve-periodic",
    "simulate-cauchy",
    "measure-decay",
    "probe-kernels",
    "probe-regularity",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParamsConfig {
    pub mu: f64,
    pub lambda: f64,
    pub nu: f64,
}

impl Default for ParamsConfig {
    fn default() -> Self {
        Self { mu: 1.0, lambda: 0.0, nu: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridConfig {
    pub length: f64,
    pub n: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self { length: 64.0 * PI, n: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForcingConfig {
    pub period: f64,
    pub amplitude: f64,
    pub direction: [f64; 3],
    /// Defaults to a width-4 Gaussian at the box center.
    pub profile: Option<Profile>,
    pub waveform: Waveform,
}

impl Default for ForcingConfig {
    fn default() -> Self {
        Self { period: 1.0, amplitude: 2.0, direction: [1.0, 0.0, 0.0], profile: None, waveform: Waveform::Sin }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NonlinearityConfig {
    /// `F_i = sum_{j,k} (d_j u_k)(d_j d_k u_i)`.
    #[default]
    Standard,
    /// No nonlinearity (linear problem).
    Zero,
    Table { terms: Vec<QuadraticTerm> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub n_t: usize,
    /// Cauchy time step; defaults to `T / 16`.
    pub dt: Option<f64>,
    /// Band cutoffs; default to half the smaller and twice the larger
    /// confluence radius.
    pub c0: Option<f64>,
    pub c1: Option<f64>,
    pub p0: Lp,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { tol: 1e-10, max_iter: 20, n_t: 64, dt: None, c0: None, c1: None, p0: Lp::ratio(5, 2) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationConfig {
    /// Defaults to half the wrap-around horizon, `L / (4 max alpha)`.
    pub t_end: Option<f64>,
    pub sample_every: usize,
    pub blowup_factor: f64,
    /// Initial velocity is `data_amplitude` times a Gaussian of this width
    /// at the box center; the initial displacement is zero.
    pub data_amplitude: f64,
    pub data_width: f64,
    pub fit_start: f64,
    pub snapshots: bool,
    /// Random frequencies drawn by verify-symbols.
    pub probe_samples: usize,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            t_end: None,
            sample_every: 4,
            blowup_factor: 1e6,
            data_amplitude: 1e-2,
            data_width: 1.0,
            fit_start: 5.0,
            snapshots: false,
            probe_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: String,
    pub seed: u64,
    pub output: PathBuf,
    pub params: ParamsConfig,
    pub grid: GridConfig,
    pub forcing: ForcingConfig,
    pub nonlinearity: NonlinearityConfig,
    pub solver: SolverConfig,
    pub simulation: SimulationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            scenario: "verify-symbols".into(),
            seed: 0,
            output: PathBuf::from("out"),
            params: ParamsConfig::default(),
            grid: GridConfig::default(),
            forcing: ForcingConfig::default(),
            nonlinearity: NonlinearityConfig::default(),
            solver: SolverConfig::default(),
            simulation: SimulationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks every constraint without doing any field work.
    pub fn validate(&self) -> Result<()> {
        self.elastic()?;
        self.grid()?;
        self.forcing()?.validate()?;
        self.quadratic_form()?;
        self.solver_settings()?.validate()?;
        let (c0, c1) = self.cutoffs()?;
        if !(c0 > 0.0 && c0 < c1 && c1.is_finite()) {
            return Err(Error::Config(format!("cutoffs need 0 < c0 < c1, got c0 = {c0}, c1 = {c1}")));
        }
        let dt = self.dt();
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt = {dt} must be positive")));
        }
        let s = &self.simulation;
        if let Some(t) = s.t_end {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::Config(format!("t_end = {t} must be positive")));
            }
        }
        if s.sample_every == 0 {
            return Err(Error::Config("sample_every must be at least 1".into()));
        }
        if !(s.blowup_factor > 1.0) {
            return Err(Error::Config("blowup_factor must exceed 1".into()));
        }
        if !s.data_amplitude.is_finite() {
            return Err(Error::Config("data_amplitude must be finite".into()));
        }
        if !(s.data_width > 0.0 && s.data_width.is_finite()) {
            return Err(Error::Config("data_width must be positive".into()));
        }
        if !(s.fit_start >= 0.0) {
            return Err(Error::Config("fit_start must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn elastic(&self) -> Result<ElasticParams> {
        let p = &self.params;
        ElasticParams::new(p.mu, p.lambda, p.nu)
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.length, self.grid.n)
    }

    pub fn center(&self) -> [f64; 3] {
        [self.grid.length / 2.0; 3]
    }

    pub fn forcing(&self) -> Result<ForcingSpec> {
        let f = &self.forcing;
        let spec = ForcingSpec {
            period: f.period,
            amplitude: f.amplitude,
            profile: f.profile.clone().unwrap_or(Profile::Gaussian { center: self.center(), width: 4.0 }),
            direction: f.direction,
            waveform: f.waveform.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn quadratic_form(&self) -> Result<QuadraticForm> {
        match &self.nonlinearity {
            NonlinearityConfig::Standard => Ok(QuadraticForm::standard()),
            NonlinearityConfig::Zero => Ok(QuadraticForm::zero()),
            NonlinearityConfig::Table { terms } => QuadraticForm::new(terms.clone()),
        }
    }

    pub fn solver_settings(&self) -> Result<SolverSettings> {
        let s = &self.solver;
        let out = SolverSettings { tol: s.tol, max_iter: s.max_iter, intervals: s.n_t, p0: s.p0 };
        out.validate()?;
        Ok(out)
    }

    pub fn dt(&self) -> f64 {
        self.solver.dt.unwrap_or(self.forcing.period / 16.0)
    }

    pub fn cutoffs(&self) -> Result<(f64, f64)> {
        let p = self.elastic()?;
        let radii = BRANCHES.map(|b| p.confluence_radius(b));
        let c0 = self.solver.c0.unwrap_or(radii[0].min(radii[1]) / 2.0);
        let c1 = self.solver.c1.unwrap_or(2.0 * radii[0].max(radii[1]));
        Ok((c0, c1))
    }

    pub fn t_end(&self) -> Result<f64> {
        let p = self.elastic()?;
        Ok(self.simulation.t_end.unwrap_or(self.grid.length / (4.0 * p.alpha1().max(p.alpha2()))))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let c = RunConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cutoffs().unwrap(), (1.0, 4.0 * 2f64.sqrt()));
        assert_eq!(c.dt(), 1.0 / 16.0);
    }

    #[test]
    fn round_trip_and_unknown_keys() {
        let c = RunConfig::default();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
        let bad = "[solver]\ntolerance = 1e-8\n";
        assert!(matches!(RunConfig::from_toml(bad), Err(Error::Config(_))));
        let bad = "colour = 3\n";
        assert!(RunConfig::from_toml(bad).is_err());
    }

    #[test]
    fn parses_full_example() {
        let text = r#"
scenario = "probe-kernels"
seed = 3
[params]
mu = 2.0
lambda = 1.0
[grid]
length = 50.0
n = 32
[forcing]
waveform = { kind = "fourier", cos = [0.5], sin = [1.0] }
[nonlinearity]
kind = "table"
terms = [{ i = 1, grad = [1, 2], hess = [2, 1, 1], weight = 0.5 }]
[solver]
p0 = 3
c0 = 0.5
c1 = 9.0
"#;
        let c = RunConfig::from_toml(text).unwrap();
        c.validate().unwrap();
        assert_eq!(c.solver.p0, Lp::int(3));
        assert_eq!(c.quadratic_form().unwrap().terms().len(), 1);
    }

    #[test]
    fn constraint_violations() {
        let mut c = RunConfig::default();
        c.grid.n = 63;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.solver.c0 = Some(5.0);
        c.solver.c1 = Some(4.0);
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.params.nu = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.solver.p0 = Lp::ratio(3, 2);
        assert!(c.validate().is_err());
    }
}
