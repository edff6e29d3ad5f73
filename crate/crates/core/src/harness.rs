//! Scenario dispatch, artifact writing and the run manifest.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::Matrix6;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{
    decay_report, probe_kernel_estimate, probe_regularity, regularity_defaults, x1_proxy, Band, Kernel,
    KernelProbe, Lp,
};
use crate::cauchy::{simulate_cauchy, simulate_perturbation, wrap_horizon, SimulationSettings};
use crate::config::{RunConfig, SCENARIOS};
use crate::error::{Error, Result};
use crate::nonlinear::Nonlinearity;
use crate::periodic::{solution_norm, solve_periodic, PeriodicSolution};
use crate::spectral::{gaussian_field, save_field, SpectralField};
use crate::symbol::{assemble_symbol, char_roots, projections, propagator, resolvent_factor, C64};

/// One emitted file.
#[derive(Debug, Clone, Serialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

/// Result of a scenario that ran to completion.
#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub scenario: String,
    /// False when the scenario's own checks failed (exit status 1).
    pub passed: bool,
    pub summary: serde_json::Value,
    pub files: Vec<Artifact>,
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn write(&mut self, name: &str, contents: &str) -> Result<()> {
        let p = self.dir.join(name);
        std::fs::write(&p, contents)?;
        self.files.push(p);
        Ok(())
    }

    fn field(&mut self, name: &str, f: &SpectralField) -> Result<()> {
        let p = self.dir.join(name);
        save_field(&p, f)?;
        self.files.push(p);
        Ok(())
    }

    fn artifacts(&self) -> Result<Vec<Artifact>> {
        let mut out: Vec<Artifact> = Vec::new();
        for p in &self.files {
            let bytes = std::fs::read(p)?;
            let rel = p.strip_prefix(&self.dir).unwrap_or(p).to_string_lossy().into_owned();
            if let Some(a) = out.iter_mut().find(|a| a.path == rel) {
                *a = Artifact { path: rel, sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 };
            } else {
                out.push(Artifact { path: rel, sha256: hex::encode(Sha256::digest(&bytes)), bytes: bytes.len() as u64 });
            }
        }
        Ok(out)
    }
}

pub fn config_hash(config: &RunConfig) -> String {
    hex::encode(Sha256::digest(config.to_toml().as_bytes()))
}

/// Validates the config and runs its scenario, writing artifacts into `out`.
pub fn run_scenario(config: &RunConfig, out: &Path) -> Result<ScenarioReport> {
    if !SCENARIOS.contains(&config.scenario.as_str()) {
        return Err(Error::UnknownScenario(config.scenario.clone()));
    }
    config.validate()?;
    let mut o = Outputs::new(out)?;
    let (passed, summary) = match config.scenario.as_str() {
        "verify-symbols" => verify_symbols(config, &mut o)?,
        "solve-periodic" => solve(config, &mut o)?,
        "simulate-cauchy" => cauchy(config, &mut o)?,
        "measure-decay" => measure_decay(config, &mut o)?,
        "probe-kernels" => probe_kernels(config, &mut o)?,
        "probe-regularity" => regularity(config, &mut o)?,
        _ => unreachable!(),
    };
    o.write("summary.json", &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    Ok(ScenarioReport { scenario: config.scenario.clone(), passed, summary, files: o.artifacts()? })
}

/// Runs a scenario and always leaves a manifest (and `error.json` on
/// failure) behind. Returns the process exit status.
pub fn execute(config: &RunConfig, out: &Path) -> i32 {
    let result = run_scenario(config, out);
    let (status, files, code, error) = match &result {
        Ok(r) => (if r.passed { "passed" } else { "failed" }, r.files.clone(), i32::from(!r.passed), None),
        Err(e) => {
            let err = json!({ "error": e.kind(), "message": e.to_string(), "scenario": config.scenario });
            eprintln!("{err}");
            (
                "error",
                Vec::new(),
                e.exit_code(),
                Some(serde_json::to_string_pretty(&err).expect("error serializes")),
            )
        }
    };
    let mut files = files;
    if std::fs::create_dir_all(out).is_ok() {
        if let Some(err) = error {
            let p = out.join("error.json");
            if std::fs::write(&p, &err).is_ok() {
                files.push(Artifact {
                    path: "error.json".into(),
                    sha256: hex::encode(Sha256::digest(err.as_bytes())),
                    bytes: err.len() as u64,
                });
            }
        }
        let manifest = json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "scenario": config.scenario,
            "seed": config.seed,
            "config_sha256": config_hash(config),
            "config": config,
            "status": status,
            "exit_code": code,
            "files": files,
        });
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        if let Err(e) = std::fs::write(out.join("manifest.json"), text) {
            eprintln!("{}", json!({ "error": "io", "message": format!("cannot write manifest: {e}") }));
            return code.max(1);
        }
    }
    code
}

fn max_abs(m: &Matrix6<C64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Conjugation by `diag(r I, I)`, which makes all blocks O(1).
fn balanced(m: &Matrix6<C64>, r: f64) -> Matrix6<C64> {
    let mut b = *m;
    for i in 0..3 {
        for j in 3..6 {
            b[(i, j)] *= r;
            b[(j, i)] /= r;
        }
    }
    b
}

fn rel_balanced(a: &Matrix6<C64>, b: &Matrix6<C64>, r: f64) -> f64 {
    let (a, b) = (balanced(a, r), balanced(b, r));
    max_abs(&(a - b)) / max_abs(&b).max(f64::MIN_POSITIVE)
}

fn random_xi(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> ([f64; 3], f64) {
    let r = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();
    let theta = (2.0 * rng.random::<f64>() - 1.0).acos();
    let phi = 2.0 * PI * rng.random::<f64>();
    ([r * theta.sin() * phi.cos(), r * theta.sin() * phi.sin(), r * theta.cos()], r)
}

const IDENTITY_TOL: f64 = 1e-8;

fn verify_symbols(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let params = cfg.elastic()?;
    let n = cfg.simulation.probe_samples.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = [0.0f64; 7];
    for _ in 0..n {
        let (xi, r) = random_xi(&mut rng, 1e-6, 1e6);
        let ps = projections(&params, &xi)?;
        let mut sum = Matrix6::<C64>::zeros();
        let mut recon = Matrix6::<C64>::zeros();
        for j in 0..2 {
            for s in 0..2 {
                let p = balanced(&ps.p[j][s], r);
                worst[0] = worst[0].max(max_abs(&(p * p - p)));
                for jj in 0..2 {
                    for ss in 0..2 {
                        if (j, s) != (jj, ss) {
                            worst[1] = worst[1].max(max_abs(&(p * balanced(&ps.p[jj][ss], r))));
                        }
                    }
                }
                sum += p;
                recon += ps.p[j][s] * ps.roots.sigma[j][s];
            }
            if let Some(nil) = ps.nilpotent[j] {
                recon += nil;
            }
        }
        worst[2] = worst[2].max(max_abs(&(sum - Matrix6::identity())));
        worst[3] = worst[3].max(max_abs(&(recon - assemble_symbol(&params, &xi).entries)) / (1.0 + r * r));
        let roots = char_roots(&params, r);
        for (j, b) in crate::symbol::BRANCHES.iter().enumerate() {
            let [sp, sm] = roots.sigma[j];
            let (damp, stiff) = (params.nu() * r * r, params.alpha_sq(*b) * r * r);
            worst[4] = worst[4].max((sp + sm + damp).norm() / (1.0 + damp));
            worst[4] = worst[4].max((sp * sm - stiff).norm() / (stiff + damp * damp).max(f64::MIN_POSITIVE));
        }
        // Semigroup and resolvent checks where exp(t A) is representable.
        let (xi, r) = random_xi(&mut rng, 1e-3, 1e2);
        let (t, s) = (5.0 * rng.random::<f64>(), 5.0 * rng.random::<f64>());
        let whole = propagator(&params, &xi, t + s).entries;
        let parts = propagator(&params, &xi, t).entries * propagator(&params, &xi, s).entries;
        worst[5] = worst[5].max(rel_balanced(&parts, &whole, r));
        let period = cfg.forcing.period;
        let res = resolvent_factor(&params, &xi, period)?.entries;
        let e_t = propagator(&params, &xi, period).entries;
        let prod = (Matrix6::identity() - e_t) * res;
        worst[6] = worst[6].max(max_abs(&(balanced(&prod, r) - Matrix6::identity())));
    }
    let names = [
        "projector_idempotence",
        "projector_annihilation",
        "projector_partition",
        "spectral_reconstruction",
        "root_vieta",
        "propagator_semigroup",
        "resolvent_inverse",
    ];
    let mut csv = String::from("check,samples,max_violation,tolerance,pass\n");
    for (name, w) in names.iter().zip(worst) {
        let _ = writeln!(csv, "{name},{n},{w:e},{IDENTITY_TOL:e},{}", w < IDENTITY_TOL);
    }
    o.write("verify_symbols.csv", &csv)?;
    let max = worst.iter().cloned().fold(0.0, f64::max);
    let passed = max < IDENTITY_TOL;
    let checks: serde_json::Map<String, serde_json::Value> =
        names.iter().zip(worst).map(|(k, v)| (k.to_string(), json!(v))).collect();
    Ok((passed, json!({ "samples": n, "max_violation": max, "tolerance": IDENTITY_TOL, "checks": checks })))
}

fn periodic_orbit(cfg: &RunConfig, nl: &Nonlinearity, o: &mut Outputs) -> Result<(PeriodicSolution, f64)> {
    let grid = cfg.grid()?;
    let forcing = cfg.forcing()?;
    let settings = cfg.solver_settings()?;
    let sol = if forcing.amplitude == 0.0 {
        PeriodicSolution::zeros(grid, forcing.period, settings.intervals)
    } else {
        solve_periodic(cfg.elastic()?, nl, &forcing, &settings)?
    };
    let path = o.dir.join("iterations.csv");
    sol.write_log_csv(&path)?;
    o.files.push(path);
    Ok((sol, forcing.norm(&grid, settings.p0)?))
}

fn solve(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let nl = Nonlinearity::new(cfg.grid()?, cfg.quadratic_form()?);
    let (sol, gnorm) = periodic_orbit(cfg, &nl, o)?;
    let p0 = cfg.solver.p0;
    let mut csv = String::from("node,t,x1_proxy,u_l2,v_l2\n");
    for m in 0..=sol.intervals() {
        let _ = writeln!(
            csv,
            "{m},{},{:e},{:e},{:e}",
            sol.time(m),
            x1_proxy(&sol.u[m], &sol.v[m], p0),
            sol.u[m].l2_norm(),
            sol.v[m].l2_norm()
        );
    }
    o.write("nodes.csv", &csv)?;
    o.field("u_t0.epwf", &sol.u[0])?;
    o.field("v_t0.epwf", &sol.v[0])?;
    if cfg.simulation.snapshots {
        for p in sol.write_snapshots(&o.dir.join("snapshots"))? {
            o.files.push(p);
        }
    }
    let norm = solution_norm(&sol, p0);
    let max_ratio = sol.log.iter().skip(1).map(|r| r.ratio).fold(0.0, f64::max);
    Ok((
        true,
        json!({
            "iterations": sol.log.len(),
            "max_contraction_ratio": max_ratio,
            "periodicity_defect": sol.periodicity_defect(),
            "solution_norm": norm,
            "forcing_norm": gnorm,
            "solution_to_forcing": if gnorm > 0.0 { norm / gnorm } else { f64::NAN },
        }),
    ))
}

fn initial_data(cfg: &RunConfig) -> Result<(SpectralField, SpectralField)> {
    let grid = cfg.grid()?;
    let s = &cfg.simulation;
    let f1 = gaussian_field(&grid, cfg.center(), s.data_width, [1.0, 0.0, 0.0]).scaled(s.data_amplitude);
    Ok((SpectralField::zeros(grid), f1))
}

fn sim_settings(cfg: &RunConfig, o: &Outputs) -> Result<SimulationSettings> {
    let s = &cfg.simulation;
    Ok(SimulationSettings {
        t_end: cfg.t_end()?,
        dt: cfg.dt(),
        sample_every: s.sample_every,
        blowup_factor: s.blowup_factor,
        snapshot_dir: s.snapshots.then(|| o.dir.join("snapshots")),
        cache_nodes: 16,
    })
}

fn snapshot_files(o: &mut Outputs, settings: &SimulationSettings) -> Result<()> {
    if let Some(dir) = &settings.snapshot_dir {
        let mut names: Vec<PathBuf> = std::fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        names.sort();
        o.files.extend(names);
    }
    Ok(())
}

fn cauchy(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let grid = cfg.grid()?;
    let nl = Nonlinearity::new(grid, cfg.quadratic_form()?);
    let (f0, f1) = initial_data(cfg)?;
    let forcing = cfg.forcing()?;
    let settings = sim_settings(cfg, o)?;
    let g = (forcing.amplitude != 0.0).then_some(&forcing);
    let (log, end) = simulate_cauchy(cfg.elastic()?, &nl, &f0, &f1, g, &settings)?;
    let path = o.dir.join("trajectory.csv");
    log.write_csv(&path)?;
    o.files.push(path);
    o.field("u_final.epwf", &end.u)?;
    o.field("v_final.epwf", &end.v)?;
    snapshot_files(o, &settings)?;
    Ok((true, json!({ "samples": log.times.len(), "t_final": end.time, "max_norm": log.max_norm(), "notes": log.notes })))
}

fn measure_decay(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let grid = cfg.grid()?;
    let params = cfg.elastic()?;
    let nl = Nonlinearity::new(grid, cfg.quadratic_form()?);
    let (sol, _) = periodic_orbit(cfg, &nl, o)?;
    let (f0, f1) = initial_data(cfg)?;
    let settings = sim_settings(cfg, o)?;
    let log = simulate_perturbation(params, &nl, &f0, &f1, &sol, &settings)?;
    let path = o.dir.join("trajectory.csv");
    log.write_csv(&path)?;
    o.files.push(path);
    snapshot_files(o, &settings)?;
    let window = (cfg.simulation.fit_start, settings.t_end);
    let report = decay_report(&log.times, &log.all_series(), window, wrap_horizon(&params, &grid));
    o.write("decay.csv", &report.to_csv())?;
    o.write("decay.json", &report.to_json())?;
    Ok((true, json!({ "orbit_iterations": sol.log.len(), "max_norm": log.max_norm(), "notes": log.notes, "report": report })))
}

fn probe_kernels(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let grid = cfg.grid()?;
    let params = cfg.elastic()?;
    let (c0, c1) = cfg.cutoffs()?;
    let data = gaussian_field(&grid, cfg.center(), cfg.simulation.data_width, [1.0, 0.0, 0.0]);
    let t_end = cfg.t_end()?;
    let t0 = cfg.simulation.fit_start;
    let late: Vec<f64> = (0..=30).map(|i| t0 + (t_end - t0) * i as f64 / 30.0).collect();
    let early: Vec<f64> = (1..=40).map(|i| 0.5 * i as f64).collect();
    let mut table = String::from("kernel,band,alpha,ell,p,q,predicted,fitted_power,fitted_rate,bound_ratio,note\n");
    let mut series = String::from("kernel,band,alpha,ell,t,value\n");
    let mut cases = Vec::new();
    for kernel in [Kernel::K0, Kernel::K1] {
        for (alpha, ell) in [(0, 0), (1, 0), (0, 1)] {
            cases.push((kernel, Band::Low, alpha, ell));
        }
        cases.push((kernel, Band::Middle, 0, 0));
        cases.push((kernel, Band::High, 0, 0));
    }
    cases.push((Kernel::Q, Band::Low, 0, 0));
    let mut rows = 0;
    for (kernel, band, alpha, ell) in cases {
        let probe = KernelProbe {
            kernel,
            band,
            p: Lp::int(2),
            q: Lp::int(1),
            alpha,
            ell,
            c0,
            c1,
            period: cfg.forcing.period,
        };
        let (times, window) = match band {
            Band::Low => (&late, (t0, t_end)),
            _ => (&early, (0.5, 20.0)),
        };
        let opt = |x: Option<f64>| x.map(|v| format!("{v}")).unwrap_or_default();
        match probe_kernel_estimate(&params, &data, &probe, times, window, 16) {
            Ok(r) => {
                let _ = writeln!(
                    table,
                    "{kernel:?},{band:?},{alpha},{ell},2,1,{},{},{},{:e},",
                    opt(r.predicted_power),
                    opt(r.power_fit.map(|f| f.exponent)),
                    opt(r.rate_fit.map(|f| f.exponent)),
                    r.bound_ratio
                );
                for (t, v) in r.times.iter().zip(&r.values) {
                    let _ = writeln!(series, "{kernel:?},{band:?},{alpha},{ell},{t},{v:e}");
                }
            }
            Err(e) => {
                let _ = writeln!(table, "{kernel:?},{band:?},{alpha},{ell},2,1,,,,,{}", e.to_string().replace(',', ";"));
            }
        }
        rows += 1;
    }
    o.write("probes.csv", &table)?;
    o.write("probe_series.csv", &series)?;
    Ok((true, json!({ "probes": rows, "c0": c0, "c1": c1 })))
}

fn regularity(cfg: &RunConfig, o: &mut Outputs) -> Result<(bool, serde_json::Value)> {
    let nl = Nonlinearity::new(cfg.grid()?, cfg.quadratic_form()?);
    let (sol, gnorm) = periodic_orbit(cfg, &nl, o)?;
    let rows = probe_regularity(&sol, &regularity_defaults(), cfg.solver.p0, gnorm)?;
    let mut csv = String::from("k,p,max_value,constant\n");
    for r in &rows {
        let _ = writeln!(csv, "{},{},{:e},{:e}", r.k, r.p, r.max_value, r.constant);
    }
    o.write("regularity.csv", &csv)?;
    Ok((true, json!({ "forcing_norm": gnorm, "rows": rows })))
}
