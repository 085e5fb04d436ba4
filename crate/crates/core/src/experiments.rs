//! Config-driven runs, parameter scans and file output.
//!
//! A config is a TOML file with the sections `model`, `noise`, `solver`,
//! `ensemble`, `scan` and `output`. Unknown keys are rejected. Physical
//! parameters are given in units of `J0`: energies and rates as multiples of
//! `J0`, times as multiples of `1/J0`.
//!
//! ```toml
//! [model]
//! name = "model_a"
//! omega = 5.0
//! omega_z = 5.0
//!
//! [noise]
//! kind = "gaussian"
//! gamma = 1.0
//!
//! [solver]
//! method = "auxiliary"
//! t_end = 3.141592653589793
//!
//! [ensemble]
//! n_traj = 2000
//! base_seed = 42
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ensemble::{averaged_kernel_run, run_ensemble, EnsembleResult, Metrics};
use crate::models::{Branch, ModelKind, ModelSpec, Profile};
use crate::noise::{NoiseKind, NoiseSpec};
use crate::solver::{default_steps, run_trajectory, Method, SolverConfig, TrajectoryResult};
use crate::{Error, Result, C64};

/// Column headers of the trajectory CSV.
pub const TRAJECTORY_COLUMNS: [&str; 5] = ["t", "abs_psi0", "re_psi0", "im_psi0", "residual_abs"];

/// Column headers of the ensemble CSV.
pub const ENSEMBLE_COLUMNS: [&str; 6] = ["t", "mean_abs_psi0", "stderr_abs", "mean_pop0", "stderr_pop", "purity"];

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProfileSection {
    #[serde(default)]
    pub offset: f64,
    #[serde(default)]
    pub slope: f64,
    #[serde(default)]
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: String,
    #[serde(default = "one")]
    pub j0: f64,
    pub passage_time: Option<f64>,
    pub omega: Option<f64>,
    pub omega_z: Option<f64>,
    pub branch: Option<String>,
    /// `[re, im]` amplitude on `|ud>` (model B).
    pub init_mu: Option<[f64; 2]>,
    /// `[re, im]` amplitude on `|du>` (model B).
    pub init_nu: Option<[f64; 2]>,
    pub a: Option<ProfileSection>,
    pub b: Option<ProfileSection>,
    pub omega_profile: Option<ProfileSection>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    #[serde(default = "none_kind")]
    pub kind: String,
    /// Noise strength `J / J0`.
    pub strength: Option<f64>,
    /// White-noise intensity `Gamma / J0`.
    pub gamma: Option<f64>,
    /// Shot rate `W / J0`.
    pub rate: Option<f64>,
    pub amplitude: Option<f64>,
    pub frequency: Option<f64>,
    /// Seed of a single-trajectory run.
    pub seed: Option<u64>,
    /// Free-form noise label, copied to the summary.
    pub j_label: Option<String>,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self {
            kind: none_kind(),
            strength: None,
            gamma: None,
            rate: None,
            amplitude: None,
            frequency: None,
            seed: None,
            j_label: None,
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub t_end: Option<f64>,
    pub include_geometric_term: Option<bool>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_traj: usize,
    #[serde(default)]
    pub base_seed: u64,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub parameter: Option<String>,
    #[serde(default)]
    pub values: Vec<f64>,
    /// Target for `|psi0(T)|` in time scans and speedup reports.
    pub target: Option<f64>,
    /// Noise intensity `Gamma / J0` of the noisy arm of a speedup report.
    pub saturating_gamma: Option<f64>,
    /// Free-form labels copied to the summary, one per value.
    #[serde(default)]
    pub j_labels: Vec<String>,
}

#[derive(Clone, Debug, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub solver: SolverSection,
    pub ensemble: Option<EnsembleSection>,
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub output: OutputSection,
}

fn one() -> f64 {
    1.0
}

fn none_kind() -> String {
    "none".into()
}

fn config_err(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.into(),
        reason: reason.into(),
    }
}

fn profile(p: &Option<ProfileSection>, j0: f64) -> Profile {
    let p = p.clone().unwrap_or_default();
    Profile {
        offset: p.offset,
        slope: p.slope * j0,
        amplitude: p.amplitude,
        frequency: p.frequency * j0,
        phase: p.phase,
    }
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub steps: Option<usize>,
    pub traj: Option<usize>,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| {
            let key = e
                .message()
                .split('`')
                .nth(1)
                .map(str::to_string)
                .unwrap_or_else(|| "config".into());
            config_err(&key, e.message().trim().to_string())
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.noise.seed = Some(seed);
            if let Some(e) = &mut self.ensemble {
                e.base_seed = seed;
            }
        }
        if let Some(steps) = o.steps {
            self.solver.steps = Some(steps);
        }
        if let Some(n) = o.traj {
            match &mut self.ensemble {
                Some(e) => e.n_traj = n,
                None => {
                    self.ensemble = Some(EnsembleSection {
                        n_traj: n,
                        base_seed: self.noise.seed.unwrap_or(0),
                    })
                }
            }
        }
        if let Some(d) = &o.out_dir {
            self.output.dir = Some(d.clone());
        }
    }

    pub fn model_spec(&self) -> Result<ModelSpec> {
        let m = &self.model;
        let j0 = m.j0;
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| config_err(key, "required for this model"));
        let mut spec = match m.name.as_str() {
            "linear_sweep" => ModelSpec::linear_sweep(need(m.passage_time, "model.passage_time")? / j0),
            "model_b" => ModelSpec::model_b(need(m.passage_time, "model.passage_time")? / j0),
            "model_a" => ModelSpec::model_a(need(m.omega, "model.omega")? * j0, need(m.omega_z, "model.omega_z")?),
            "generic_tls" => ModelSpec::generic(profile(&m.a, j0), profile(&m.b, j0), profile(&m.omega_profile, j0)),
            other => return Err(config_err("model.name", format!("unknown model `{other}`"))),
        }
        .with_j0(j0);
        spec.initial_branch = match m.branch.as_deref() {
            None | Some("E0") => Branch::E0,
            Some("E1") => Branch::E1,
            Some(other) => return Err(config_err("model.branch", format!("unknown branch `{other}`"))),
        };
        if m.init_mu.is_some() || m.init_nu.is_some() {
            if spec.kind != ModelKind::ModelB {
                return Err(config_err("model.init_mu", "initial amplitudes apply to model_b only"));
            }
            let c = |v: Option<[f64; 2]>| v.map_or(C64::from(0.0), |[re, im]| C64::new(re, im));
            spec = spec.with_model_b_init(c(m.init_mu), c(m.init_nu));
        }
        spec.validate().map_err(|e| config_err("model", e.to_string()))?;
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec> {
        let n = &self.noise;
        let j0 = self.model.j0;
        let gamma = match (n.strength, n.gamma) {
            (Some(_), Some(_)) => return Err(config_err("noise.gamma", "give either strength or gamma")),
            (Some(j), None) => Some(j * j),
            (None, g) => g,
        };
        let spec = match n.kind.as_str() {
            "none" => NoiseSpec::none(),
            "gaussian" => {
                let g = gamma.ok_or_else(|| config_err("noise.gamma", "required for gaussian noise"))?;
                NoiseSpec::gaussian_gamma(g * j0, j0)
            }
            "shot" => {
                let g = gamma.ok_or_else(|| config_err("noise.gamma", "required for shot noise"))?;
                let w = n.rate.ok_or_else(|| config_err("noise.rate", "required for shot noise"))?;
                NoiseSpec::shot((g.max(0.0) * j0 * j0).sqrt(), w * j0, j0)
            }
            "deterministic" => {
                let a = n.amplitude.ok_or_else(|| config_err("noise.amplitude", "required"))?;
                let f = n.frequency.ok_or_else(|| config_err("noise.frequency", "required"))?;
                NoiseSpec::deterministic(a * j0, f * j0)
            }
            other => return Err(config_err("noise.kind", format!("unknown noise kind `{other}`"))),
        }
        .with_seed(n.seed.unwrap_or(0));
        spec.validate().map_err(|e| config_err("noise", e.to_string()))?;
        Ok(spec)
    }

    pub fn method(&self) -> Result<Method> {
        match self.solver.method.as_deref() {
            None => Ok(Method::AuxiliaryOde),
            Some("averaged") => Ok(Method::VolterraQuadrature),
            Some(s) => Method::parse(s).ok_or_else(|| config_err("solver.method", format!("unknown method `{s}`"))),
        }
    }

    /// True when the solver section asks for the noise-averaged kernel.
    pub fn averaged(&self) -> bool {
        self.solver.method.as_deref() == Some("averaged")
    }

    pub fn t_end(&self, model: &ModelSpec) -> Result<f64> {
        match (self.solver.t_end, model.default_t_end()) {
            (Some(t), _) => Ok(t / self.model.j0),
            (None, Some(t)) => Ok(t),
            (None, None) => Err(config_err("solver.t_end", "required for models without a passage time")),
        }
    }

    pub fn solver_config(&self, model: &ModelSpec, noise: &NoiseSpec) -> Result<SolverConfig> {
        let t_end = self.t_end(model)?;
        let steps = match self.solver.steps {
            Some(s) => s,
            None => default_steps(model, noise, t_end)?,
        };
        let cfg = SolverConfig::new(t_end, steps, self.method()?)
            .with_geometric_term(self.solver.include_geometric_term.unwrap_or(true));
        cfg.validate().map_err(|e| config_err("solver.steps", e.to_string()))?;
        Ok(cfg)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output.dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Fixed-width scientific notation with 9 significant digits,
/// e.g. `1.00000000e+00`, right-aligned in 15 columns.
pub fn format_number(x: f64) -> String {
    let s = format!("{x:.8e}");
    let body = match s.split_once('e') {
        Some((mant, exp)) => {
            let e: i32 = exp.parse().unwrap_or(0);
            let sign = if e < 0 { '-' } else { '+' };
            format!("{mant}e{sign}{:02}", e.abs())
        }
        None => s,
    };
    format!("{body:>15}")
}

fn write_rows(path: &Path, columns: &[&str], rows: impl Iterator<Item = Vec<f64>>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = std::io::BufWriter::new(fs::File::create(path)?);
    let header: Vec<String> = columns.iter().map(|c| format!("{c:>15}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.into_iter().map(format_number).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_trajectory_csv(path: &Path, r: &TrajectoryResult) -> Result<()> {
    write_rows(
        path,
        &TRAJECTORY_COLUMNS,
        (0..r.grid.len()).map(|i| {
            let z = r.psi0[i];
            vec![r.grid.t(i), z.norm(), z.re, z.im, r.residual[i].norm()]
        }),
    )
}

pub fn write_ensemble_csv(path: &Path, e: &EnsembleResult) -> Result<()> {
    write_rows(
        path,
        &ENSEMBLE_COLUMNS,
        (0..e.grid.len()).map(|i| {
            vec![
                e.grid.t(i),
                e.mean_abs_psi0[i],
                e.stderr_abs[i],
                e.mean_pop0[i],
                e.stderr_pop[i],
                e.purity[i],
            ]
        }),
    )
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.into()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

fn metrics_json(m: &Metrics) -> serde_json::Value {
    serde_json::json!({
        "min_abs_psi0": m.min_abs_psi0,
        "final_abs_psi0": m.final_abs_psi0,
        "final_fidelity": m.final_fidelity,
        "time_of_min": m.time_of_min,
    })
}

fn noise_json(spec: &NoiseSpec, section: &NoiseSection) -> serde_json::Value {
    let kind = match spec.kind {
        NoiseKind::None => "none",
        NoiseKind::GaussianWhite { .. } => "gaussian",
        NoiseKind::ShotNoise { .. } => "shot",
        NoiseKind::Deterministic { .. } => "deterministic",
    };
    serde_json::json!({
        "kind": kind,
        "gamma": spec.gamma(),
        "j_label": section.j_label,
    })
}

/// Outcome of [`run`].
#[derive(Clone, Debug)]
pub struct RunReport {
    pub trajectory: TrajectoryResult,
    pub ensemble: Option<EnsembleResult>,
    pub files: Vec<PathBuf>,
}

/// Single trajectory (and ensemble, if configured) with CSV and summary
/// output in `out_dir`.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunReport> {
    let model = cfg.model_spec()?;
    let noise = cfg.noise_spec()?;
    let solver = cfg.solver_config(&model, &noise)?;
    let trajectory = if cfg.averaged() {
        averaged_kernel_run(&model, &noise, &solver)?
    } else {
        run_trajectory(&model, &noise, &solver, noise.seed)?
    };
    let mut files = vec![out_dir.join("trajectory.csv")];
    write_trajectory_csv(&files[0], &trajectory)?;
    let ensemble = match &cfg.ensemble {
        Some(e) => {
            let res = run_ensemble(&model, &noise, &solver, e.n_traj, e.base_seed)?;
            let path = out_dir.join("ensemble.csv");
            write_ensemble_csv(&path, &res)?;
            files.push(path);
            Some(res)
        }
        None => None,
    };
    let summary = serde_json::json!({
        "command": "run",
        "model": model.name(),
        "noise": noise_json(&noise, &cfg.noise),
        "solver": {
            "method": if cfg.averaged() { "averaged" } else { solver.method.name() },
            "steps": solver.steps,
            "t_end": solver.t_end,
        },
        "seed": noise.seed,
        "trajectory": metrics_json(&trajectory.metrics()),
        "ensemble": ensemble.as_ref().map(|e| serde_json::json!({
            "n_traj": e.n_traj,
            "base_seed": e.base_seed,
            "metrics": metrics_json(&e.metrics()),
            "final_purity": e.purity.last(),
        })),
    });
    let path = out_dir.join("summary.json");
    write_json(&path, &summary)?;
    files.push(path);
    Ok(RunReport {
        trajectory,
        ensemble,
        files,
    })
}

fn with_passage_time(base: &ModelSpec, t: f64) -> Result<ModelSpec> {
    match base.kind {
        ModelKind::LinearSweep | ModelKind::ModelB => {
            let mut m = base.clone();
            m.passage_time = Some(t);
            Ok(m)
        }
        _ => Err(Error::Unsupported(format!("model `{}` has no passage time", base.name()))),
    }
}

/// Final-time metrics of `base` with passage time `t`; an ensemble mean when
/// `ensemble = Some((n_traj, base_seed))`, else one trajectory.
pub fn passage_metrics(
    base: &ModelSpec,
    t: f64,
    noise: &NoiseSpec,
    method: Method,
    ensemble: Option<(usize, u64)>,
) -> Result<Metrics> {
    let model = with_passage_time(base, t)?;
    let steps = default_steps(&model, noise, t)?;
    let cfg = SolverConfig::new(t, steps, method);
    match ensemble {
        Some((n, seed)) if !noise.is_none() => Ok(run_ensemble(&model, noise, &cfg, n, seed)?.metrics()),
        _ => Ok(run_trajectory(&model, noise, &cfg, noise.seed)?.metrics()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeScanPoint {
    pub passage_time: f64,
    pub final_abs_psi0: f64,
    pub final_fidelity: f64,
    pub min_abs_psi0: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimeScanReport {
    pub target: f64,
    pub points: Vec<TimeScanPoint>,
    /// Smallest listed passage time whose final `|psi0|` reaches the target.
    pub first_listed: Option<f64>,
    /// The same threshold refined by bisection below `first_listed`.
    pub threshold: Option<f64>,
}

/// Smallest `t` with `f(t) >= target`: the first listed value that passes,
/// refined by bisection against the value before it.
pub fn passage_threshold(
    times: &[f64],
    target: f64,
    mut f: impl FnMut(f64) -> Result<f64>,
) -> Result<(Option<f64>, Option<f64>)> {
    let mut prev: Option<f64> = None;
    for &t in times {
        if f(t)? >= target {
            let Some(mut lo) = prev else {
                return Ok((Some(t), Some(t)));
            };
            let mut hi = t;
            while (hi - lo) > 1e-3 * hi {
                let mid = 0.5 * (lo + hi);
                if f(mid)? >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((Some(t), Some(hi)));
        }
        prev = Some(t);
    }
    Ok((None, None))
}

fn check_values(values: &[f64], key: &str) -> Result<()> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(config_err(key, "values must be finite and non-empty"));
    }
    Ok(())
}

/// Final `|psi0|` over a list of passage times and the threshold time for
/// `target`.
pub fn scan_passage_time(
    base: &ModelSpec,
    times: &[f64],
    target: f64,
    noise: &NoiseSpec,
    method: Method,
    ensemble: Option<(usize, u64)>,
) -> Result<TimeScanReport> {
    check_values(times, "scan.values")?;
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let m = passage_metrics(base, t, noise, method, ensemble)?;
        points.push(TimeScanPoint {
            passage_time: t,
            final_abs_psi0: m.final_abs_psi0,
            final_fidelity: m.final_fidelity,
            min_abs_psi0: m.min_abs_psi0,
        });
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (first_listed, threshold) = passage_threshold(&sorted, target, |t| {
        Ok(passage_metrics(base, t, noise, method, ensemble)?.final_abs_psi0)
    })?;
    Ok(TimeScanReport {
        target,
        points,
        first_listed,
        threshold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseScanPoint {
    pub gamma: f64,
    pub min_mean_abs_psi0: f64,
    pub stderr_at_min: f64,
    pub time_of_min: f64,
    pub final_mean_abs_psi0: f64,
    pub final_stderr: f64,
    pub final_purity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseScanReport {
    pub points: Vec<NoiseScanPoint>,
    /// Indices `i` where the minimum drops below the one at `i - 1` by more
    /// than two combined standard errors.
    pub violations: Vec<usize>,
    /// Indices `i` where the minimum rises above the one at `i - 1` by at
    /// least two combined standard errors.
    pub resolved_increases: Vec<usize>,
    /// First `Gamma` with minimum `>= 0.95`.
    pub saturation_gamma: Option<f64>,
}

impl NoiseScanPoint {
    fn from_ensemble(gamma: f64, e: &EnsembleResult) -> Self {
        let m = e.metrics();
        let imin = e.grid.index_of(m.time_of_min).unwrap_or(0);
        Self {
            gamma,
            min_mean_abs_psi0: m.min_abs_psi0,
            stderr_at_min: e.stderr_abs[imin],
            time_of_min: m.time_of_min,
            final_mean_abs_psi0: m.final_abs_psi0,
            final_stderr: *e.stderr_abs.last().unwrap_or(&0.0),
            final_purity: *e.purity.last().unwrap_or(&1.0),
        }
    }
}

/// Ensembles over a list of `Gamma` values (absolute units), each on its own
/// default grid unless `steps` is given.
pub fn scan_noise(
    model: &ModelSpec,
    t_end: f64,
    gammas: &[f64],
    n_traj: usize,
    base_seed: u64,
    method: Method,
    steps: Option<usize>,
) -> Result<(NoiseScanReport, Vec<EnsembleResult>)> {
    check_values(gammas, "scan.values")?;
    if gammas.windows(2).any(|w| w[1] < w[0]) {
        return Err(config_err("scan.values", "noise values must be sorted ascending"));
    }
    let mut points = Vec::with_capacity(gammas.len());
    let mut runs = Vec::with_capacity(gammas.len());
    for &g in gammas {
        let noise = NoiseSpec::gaussian_gamma(g, model.j0);
        let s = match steps {
            Some(s) => s,
            None => default_steps(model, &noise, t_end)?,
        };
        let e = run_ensemble(model, &noise, &SolverConfig::new(t_end, s, method), n_traj, base_seed)?;
        points.push(NoiseScanPoint::from_ensemble(g, &e));
        runs.push(e);
    }
    let mut violations = Vec::new();
    let mut resolved_increases = Vec::new();
    for i in 1..points.len() {
        let (a, b) = (&points[i - 1], &points[i]);
        let se = (a.stderr_at_min.powi(2) + b.stderr_at_min.powi(2)).sqrt();
        let diff = b.min_mean_abs_psi0 - a.min_mean_abs_psi0;
        if diff < -2.0 * se {
            violations.push(i);
        }
        if diff >= 2.0 * se {
            resolved_increases.push(i);
        }
    }
    let saturation_gamma = points.iter().find(|p| p.min_mean_abs_psi0 >= 0.95).map(|p| p.gamma);
    Ok((
        NoiseScanReport {
            points,
            violations,
            resolved_increases,
            saturation_gamma,
        },
        runs,
    ))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SpeedupReport {
    pub target: f64,
    pub gamma: f64,
    pub t_free: Option<f64>,
    pub t_noisy: Option<f64>,
    /// `t_free / t_noisy`, when both are reachable in the scanned range.
    pub ratio: Option<f64>,
}

/// Smallest passage times reaching `target` without noise and with `noise`
/// (ensemble mean over `n_traj` trajectories), searched over `times`.
pub fn speedup_report(
    base: &ModelSpec,
    target: f64,
    noise: &NoiseSpec,
    times: &[f64],
    n_traj: usize,
    base_seed: u64,
) -> Result<SpeedupReport> {
    if !(target > 0.0 && target < 1.0) {
        return Err(config_err("scan.target", "must lie in (0, 1)"));
    }
    check_values(times, "scan.values")?;
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let method = Method::AuxiliaryOde;
    let free = NoiseSpec::none();
    let (_, t_free) = passage_threshold(&sorted, target, |t| {
        Ok(passage_metrics(base, t, &free, method, None)?.final_abs_psi0)
    })?;
    let (_, t_noisy) = passage_threshold(&sorted, target, |t| {
        Ok(passage_metrics(base, t, noise, method, Some((n_traj, base_seed)))?.final_abs_psi0)
    })?;
    let ratio = match (t_free, t_noisy) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    Ok(SpeedupReport {
        target,
        gamma: noise.gamma(),
        t_free,
        t_noisy,
        ratio,
    })
}

fn scan_section(cfg: &ExperimentConfig) -> Result<&ScanSection> {
    cfg.scan.as_ref().ok_or_else(|| config_err("scan", "section required for this command"))
}

fn ensemble_args(cfg: &ExperimentConfig) -> Option<(usize, u64)> {
    cfg.ensemble.as_ref().map(|e| (e.n_traj, e.base_seed))
}

/// `scan-time`: passage-time scan with per-point trajectory CSVs.
pub fn run_scan_time(cfg: &ExperimentConfig, out_dir: &Path) -> Result<TimeScanReport> {
    let model = cfg.model_spec()?;
    let noise = cfg.noise_spec()?;
    let scan = scan_section(cfg)?;
    let j0 = model.j0;
    let times: Vec<f64> = scan.values.iter().map(|t| t / j0).collect();
    let target = scan.target.unwrap_or(0.95);
    let method = cfg.method()?;
    let report = scan_passage_time(&model, &times, target, &noise, method, ensemble_args(cfg))?;
    for (i, &t) in times.iter().enumerate() {
        let m = with_passage_time(&model, t)?;
        let steps = default_steps(&m, &noise, t)?;
        let r = run_trajectory(&m, &noise, &SolverConfig::new(t, steps, method), noise.seed)?;
        write_trajectory_csv(&out_dir.join(format!("trajectory_{i:02}.csv")), &r)?;
    }
    write_rows(
        &out_dir.join("scan_time.csv"),
        &["passage_time", "final_abs_psi0", "final_fidelity", "min_abs_psi0"],
        report
            .points
            .iter()
            .map(|p| vec![p.passage_time, p.final_abs_psi0, p.final_fidelity, p.min_abs_psi0]),
    )?;
    write_json(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "command": "scan-time",
            "model": model.name(),
            "noise": noise_json(&noise, &cfg.noise),
            "report": report,
        }),
    )?;
    Ok(report)
}

/// `scan-noise`: ensembles over `Gamma`, one ensemble CSV per point.
pub fn run_scan_noise(cfg: &ExperimentConfig, out_dir: &Path) -> Result<NoiseScanReport> {
    let model = cfg.model_spec()?;
    let scan = scan_section(cfg)?;
    let (n_traj, seed) = ensemble_args(cfg).unwrap_or((1, 0));
    let gammas: Vec<f64> = scan.values.iter().map(|g| g * model.j0).collect();
    let t_end = cfg.t_end(&model)?;
    let (report, runs) = scan_noise(&model, t_end, &gammas, n_traj, seed, cfg.method()?, cfg.solver.steps)?;
    for (i, e) in runs.iter().enumerate() {
        write_ensemble_csv(&out_dir.join(format!("ensemble_{i:02}.csv")), e)?;
    }
    write_rows(
        &out_dir.join("scan_noise.csv"),
        &["gamma", "min_mean_abs_psi0", "stderr_at_min", "final_mean_abs_psi0", "final_stderr", "final_purity"],
        report.points.iter().map(|p| {
            vec![
                p.gamma,
                p.min_mean_abs_psi0,
                p.stderr_at_min,
                p.final_mean_abs_psi0,
                p.final_stderr,
                p.final_purity,
            ]
        }),
    )?;
    write_json(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "command": "scan-noise",
            "model": model.name(),
            "n_traj": n_traj,
            "base_seed": seed,
            "j_labels": scan.j_labels,
            "report": report,
        }),
    )?;
    Ok(report)
}

/// `speedup`: passage-time ratio without and with saturating noise.
pub fn run_speedup(cfg: &ExperimentConfig, out_dir: &Path) -> Result<SpeedupReport> {
    let model = cfg.model_spec()?;
    let scan = scan_section(cfg)?;
    let j0 = model.j0;
    let noise = match scan.saturating_gamma {
        Some(g) => NoiseSpec::gaussian_gamma(g * j0, j0),
        None => cfg.noise_spec()?,
    };
    let (n_traj, seed) = ensemble_args(cfg).unwrap_or((1, 0));
    let times: Vec<f64> = scan.values.iter().map(|t| t / j0).collect();
    let report = speedup_report(&model, scan.target.unwrap_or(0.99), &noise, &times, n_traj, seed)?;
    write_json(
        &out_dir.join("summary.json"),
        &serde_json::json!({
            "command": "speedup",
            "model": model.name(),
            "n_traj": n_traj,
            "base_seed": seed,
            "report": report,
        }),
    )?;
    Ok(report)
}
