//! Config-driven sweeps: grid expansion, a scoped worker pool, results in
//! grid order and tidy CSV tables.

use std::fs;
use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_scaling, predict_tp, write_fits_csv, ScalingFit};
use crate::dynamics::{
    csv_err, evolve, trotter_evolve, write_coefficients_csv, write_trace_csv, CoefficientRow, Driver,
    EvolutionConfig, Integrator, TracePoint, TrotterCostReport, DEFAULT_DENSE_CAP, DEFAULT_DT, DEFAULT_TAU,
};
use crate::error::{CdError, CdResult};
use crate::paths::{g_of_xi, xi_of_g, BoundaryVectors, IsingPathSpec, Longitudinal, MpsPathSpec, PathSpec};
use crate::schedule::ScheduleKind;

fn config_err<T>(msg: impl Into<String>) -> CdResult<T> { Err(CdError::Config(msg.into())) }

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingParams {
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default = "two")]
    pub h_x: f64,
    #[serde(default = "one")]
    pub h_z: f64,
    #[serde(default)]
    pub longitudinal: Longitudinal,
}

fn one() -> f64 { 1.0 }
fn two() -> f64 { 2.0 }

impl Default for IsingParams {
    fn default() -> Self { Self { j: 1.0, h_x: 2.0, h_z: 1.0, longitudinal: Longitudinal::Held } }
}

/// MPS family given by correlation lengths `xi` or directly by `g`. When both
/// are present they must agree, which is how a resolved config looks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<Vec<f64>>,
    #[serde(default)]
    pub boundary: BoundaryVectors,
    #[serde(default = "default_kernel_gap_tol")]
    pub kernel_gap_tol: f64,
}

fn default_kernel_gap_tol() -> f64 { MpsPathSpec::new(2, -0.5).kernel_gap_tol }

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathFamily {
    Ising(IsingParams),
    Mps(MpsParams),
}

/// One member of a path family; `g`/`xi` are set for MPS paths.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct PathVariant {
    pub g: Option<f64>,
    pub xi: Option<f64>,
}

impl PathFamily {
    pub fn variants(&self) -> CdResult<Vec<PathVariant>> {
        match self {
            PathFamily::Ising(_) => Ok(vec![PathVariant { g: None, xi: None }]),
            PathFamily::Mps(p) => {
                let pairs: Vec<(f64, f64)> = match (&p.xi, &p.g) {
                    (None, None) => return config_err("MPS path needs `xi` or `g`"),
                    (Some(xi), None) => xi.iter().map(|&x| Ok((x, g_of_xi(x)?))).collect::<CdResult<_>>()?,
                    (None, Some(g)) => g.iter().map(|&g| Ok((xi_of_g(g)?, g))).collect::<CdResult<_>>()?,
                    (Some(xi), Some(g)) => {
                        if xi.len() != g.len() {
                            return config_err("`xi` and `g` lists differ in length");
                        }
                        for (&x, &g) in xi.iter().zip(g) {
                            let want = g_of_xi(x)?;
                            if (want - g).abs() > 1e-9 {
                                return config_err(format!("g = {g} does not match xi = {x} (expected {want})"));
                            }
                        }
                        xi.iter().copied().zip(g.iter().copied()).collect()
                    }
                };
                if pairs.is_empty() {
                    return config_err("MPS parameter grid is empty");
                }
                Ok(pairs.into_iter().map(|(xi, g)| PathVariant { g: Some(g), xi: Some(xi) }).collect())
            }
        }
    }

    /// Same family with both `xi` and `g` filled in.
    pub fn resolved(&self) -> CdResult<Self> {
        match self {
            PathFamily::Ising(_) => Ok(self.clone()),
            PathFamily::Mps(p) => {
                let v = self.variants()?;
                Ok(PathFamily::Mps(MpsParams {
                    xi: Some(v.iter().filter_map(|v| v.xi).collect()),
                    g: Some(v.iter().filter_map(|v| v.g).collect()),
                    ..p.clone()
                }))
            }
        }
    }

    /// `size` is the number of sites (spins, or qudits for MPS).
    pub fn spec(&self, variant: &PathVariant, size: usize) -> PathSpec {
        match self {
            PathFamily::Ising(p) => PathSpec::Ising(IsingPathSpec {
                n: size,
                j: p.j,
                h_x: p.h_x,
                h_z: p.h_z,
                longitudinal: p.longitudinal,
            }),
            PathFamily::Mps(p) => PathSpec::Mps(MpsPathSpec {
                n_p: size,
                g: variant.g.unwrap_or(f64::NAN),
                kernel_gap_tol: p.kernel_gap_tol,
                boundary: p.boundary.clone(),
            }),
        }
    }

    fn qubits(&self, size: usize) -> usize {
        match self {
            PathFamily::Ising(_) => size,
            PathFamily::Mps(_) => 2 * size,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            PathFamily::Ising(_) => "ising",
            PathFamily::Mps(_) => "mps",
        }
    }
}

/// Integration settings shared by every grid point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionSettings {
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
}

fn default_dt() -> f64 { DEFAULT_DT }
fn default_tau() -> f64 { DEFAULT_TAU }
fn default_schedule() -> ScheduleKind { ScheduleKind::Sin2Sin2 }
fn default_tol() -> f64 { 1e-10 }
fn default_dense_cap() -> usize { DEFAULT_DENSE_CAP }

impl Default for EvolutionSettings {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            integrator: Integrator::Midpoint,
            schedule: default_schedule(),
            tol: default_tol(),
            dense_cap: DEFAULT_DENSE_CAP,
        }
    }
}

impl EvolutionSettings {
    pub fn config(&self, driver: &Driver, total_time: f64) -> EvolutionConfig {
        EvolutionConfig {
            driver: driver.clone(),
            integrator: self.integrator,
            schedule: self.schedule,
            total_time,
            dt: self.dt,
            tol: self.tol,
            dense_cap: self.dense_cap,
            record_coefficients: false,
        }
    }
}

/// Full grid `path variants × sizes × total_times × drivers`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub path: PathFamily,
    pub sizes: Vec<usize>,
    pub total_times: Vec<f64>,
    pub drivers: Vec<Driver>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterSweep {
    #[serde(flatten)]
    pub sweep: Sweep,
    #[serde(default = "default_tau")]
    pub tau: f64,
}

/// One driver over `sizes × total_times`, fitted per total time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSweep {
    pub path: PathFamily,
    pub sizes: Vec<usize>,
    pub total_times: Vec<f64>,
    #[serde(default = "default_driver")]
    pub driver: Driver,
}

fn default_driver() -> Driver { Driver::Adiabatic }

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictSweep {
    #[serde(flatten)]
    pub scaling: ScalingSweep,
    /// target fidelities
    pub targets: Vec<f64>,
    /// sizes to predict, in sites
    pub predict_sizes: Vec<usize>,
    /// also locate `T_p` by simulating at each predicted size
    #[serde(default)]
    pub direct_search: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DumpSpec {
    pub path: PathFamily,
    pub size: usize,
    pub total_time: f64,
    pub driver: Driver,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Experiment {
    IsingBench(Sweep),
    MpsBench(Sweep),
    TrotterCost(TrotterSweep),
    Scaling(ScalingSweep),
    PredictTp(PredictSweep),
    DumpCoefficients(DumpSpec),
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::IsingBench(_) => "ising-bench",
            Experiment::MpsBench(_) => "mps-bench",
            Experiment::TrotterCost(_) => "trotter-cost",
            Experiment::Scaling(_) => "scaling",
            Experiment::PredictTp(_) => "predict-tp",
            Experiment::DumpCoefficients(_) => "dump-coefficients",
        }
    }
}

pub const EXPERIMENTS: [&str; 6] = ["ising-bench", "mps-bench", "trotter-cost", "scaling", "predict-tp", "dump-coefficients"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub experiment: Experiment,
    #[serde(default)]
    pub evolution: EvolutionSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
}

fn default_workers() -> usize { 1 }

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self { experiment, evolution: EvolutionSettings::default(), output_dir: None, workers: 1 }
    }

    /// Parses JSON. A missing `experiment` key is taken from `name`; a present
    /// one must equal it.
    pub fn from_json(text: &str, name: Option<&str>) -> CdResult<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CdError::Config(format!("config is not valid JSON: {e}")))?;
        let obj = value.as_object_mut().ok_or_else(|| CdError::Config("config must be a JSON object".into()))?;
        match (obj.get("experiment").and_then(|v| v.as_str()), name) {
            (Some(found), Some(want)) if found != want => {
                return config_err(format!("config is for `{found}` but `{want}` was requested"));
            }
            (None, Some(want)) => {
                obj.insert("experiment".into(), want.into());
            }
            (None, None) => return config_err("config has no `experiment`"),
            _ => {}
        }
        let cfg: Self = serde_json::from_value(value).map_err(|e| CdError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, name: Option<&str>) -> CdResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CdError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text, name)
    }

    pub fn to_json(&self) -> CdResult<String> { Ok(serde_json::to_string_pretty(self)?) }

    pub fn validate(&self) -> CdResult<()> {
        if self.workers == 0 {
            return config_err("workers must be at least 1");
        }
        let ev = &self.evolution;
        if !(ev.dt > 0.0 && ev.dt.is_finite()) || !(ev.tol > 0.0) {
            return config_err("evolution dt and tol must be positive");
        }
        let check_times = |ts: &[f64]| {
            if ts.is_empty() {
                return config_err("total_times is empty");
            }
            match ts.iter().find(|&&t| !(t >= ev.dt && t.is_finite())) {
                Some(t) => config_err(format!("total time {t} must be finite and at least dt = {}", ev.dt)),
                None => Ok(()),
            }
        };
        let check_sizes = |path: &PathFamily, sizes: &[usize]| {
            if sizes.is_empty() {
                return config_err("sizes is empty");
            }
            let min = match path {
                PathFamily::Ising(_) => 1,
                PathFamily::Mps(_) => 2,
            };
            match sizes.iter().find(|&&n| n < min) {
                Some(n) => config_err(format!("size {n} is below the minimum {min} for the {} path", path.name())),
                None => Ok(()),
            }
        };
        let check_drivers = |drivers: &[Driver]| {
            if drivers.is_empty() {
                return config_err("drivers is empty");
            }
            for d in drivers {
                if let Driver::Cd(cd) = d {
                    cd.validate().map_err(|e| CdError::Config(format!("driver {}: {e}", d.label())))?;
                }
            }
            Ok(())
        };
        let single_variant = |path: &PathFamily| match path.variants()?.len() {
            1 => Ok(()),
            k => config_err(format!("this experiment takes one path parameter, got {k}")),
        };
        match &self.experiment {
            Experiment::IsingBench(s) | Experiment::MpsBench(s) => {
                let want = if matches!(self.experiment, Experiment::IsingBench(_)) { "ising" } else { "mps" };
                if s.path.name() != want {
                    return config_err(format!("{} needs an {want} path", self.experiment.name()));
                }
                s.path.variants()?;
                check_sizes(&s.path, &s.sizes)?;
                check_times(&s.total_times)?;
                check_drivers(&s.drivers)
            }
            Experiment::TrotterCost(t) => {
                t.sweep.path.variants()?;
                check_sizes(&t.sweep.path, &t.sweep.sizes)?;
                check_times(&t.sweep.total_times)?;
                check_drivers(&t.sweep.drivers)?;
                match t.sweep.total_times.iter().find(|&&big_t| !(t.tau > 0.0 && t.tau <= big_t)) {
                    Some(big_t) => config_err(format!("tau = {} must lie in (0, T = {big_t}]", t.tau)),
                    None => Ok(()),
                }
            }
            Experiment::Scaling(s) => check_scaling(s, &check_sizes, &check_times, &check_drivers, &single_variant),
            Experiment::PredictTp(p) => {
                check_scaling(&p.scaling, &check_sizes, &check_times, &check_drivers, &single_variant)?;
                if p.targets.is_empty() || p.predict_sizes.is_empty() {
                    return config_err("targets and predict_sizes must be non-empty");
                }
                if let Some(f) = p.targets.iter().find(|&&f| !(f > 0.0 && f < 1.0)) {
                    return config_err(format!("target fidelity {f} is outside (0, 1)"));
                }
                check_sizes(&p.scaling.path, &p.predict_sizes)
            }
            Experiment::DumpCoefficients(d) => {
                single_variant(&d.path)?;
                check_sizes(&d.path, &[d.size])?;
                check_times(&[d.total_time])?;
                check_drivers(std::slice::from_ref(&d.driver))
            }
        }
    }

    /// Copy with MPS `g` values filled in from `xi` (and vice versa).
    pub fn resolved(&self) -> CdResult<Self> {
        let mut out = self.clone();
        match &mut out.experiment {
            Experiment::IsingBench(s) | Experiment::MpsBench(s) => s.path = s.path.resolved()?,
            Experiment::TrotterCost(t) => t.sweep.path = t.sweep.path.resolved()?,
            Experiment::Scaling(s) => s.path = s.path.resolved()?,
            Experiment::PredictTp(p) => p.scaling.path = p.scaling.path.resolved()?,
            Experiment::DumpCoefficients(d) => d.path = d.path.resolved()?,
        }
        Ok(out)
    }
}

fn check_scaling(
    s: &ScalingSweep,
    sizes: &dyn Fn(&PathFamily, &[usize]) -> CdResult<()>,
    times: &dyn Fn(&[f64]) -> CdResult<()>,
    drivers: &dyn Fn(&[Driver]) -> CdResult<()>,
    single: &dyn Fn(&PathFamily) -> CdResult<()>,
) -> CdResult<()> {
    single(&s.path)?;
    sizes(&s.path, &s.sizes)?;
    if s.sizes.len() < 3 {
        return config_err("a scaling fit needs at least 3 sizes");
    }
    times(&s.total_times)?;
    drivers(std::slice::from_ref(&s.driver))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointStatus {
    Ok,
    Failed,
}

/// One grid point. `path` and `evolution` are the fully resolved inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub path: PathSpec,
    pub size: usize,
    pub n_qubits: usize,
    pub g: Option<f64>,
    pub xi: Option<f64>,
    pub driver_label: String,
    pub evolution: EvolutionConfig,
    pub status: PointStatus,
    pub error: Option<String>,
    pub fidelity: Option<f64>,
    pub infidelity: Option<f64>,
    pub steps: Option<usize>,
    pub matvecs: Option<usize>,
    pub max_norm_drift: Option<f64>,
    pub trotter: Option<TrotterCostReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub size: usize,
    pub n_qubits: usize,
    pub f_target: f64,
    pub t_p: Option<f64>,
    pub non_monotone: bool,
    pub nonpositive_g: bool,
    pub error: Option<String>,
    /// `T` at which the simulated fidelity reaches the target
    pub t_direct: Option<f64>,
    pub direct_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResults {
    pub config: ExperimentConfig,
    pub points: Vec<PointRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fits: Vec<ScalingFit>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub predictions: Vec<PredictionRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TracePoint>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub coefficients: Vec<CoefficientRow>,
}

impl RunResults {
    pub fn n_failed(&self) -> usize {
        self.points.iter().filter(|p| p.status == PointStatus::Failed).count()
            + self.predictions.iter().filter(|p| p.error.is_some() || p.direct_error.is_some()).count()
    }

    pub fn load(path: &Path) -> CdResult<Self> { Ok(serde_json::from_str(&fs::read_to_string(path)?)?) }
}

#[derive(Copy, Clone, Debug)]
enum Job {
    Evolve,
    Trotter(f64),
}

#[derive(Clone, Debug)]
struct GridPoint {
    spec: PathSpec,
    size: usize,
    n_qubits: usize,
    variant: PathVariant,
    evolution: EvolutionConfig,
}

fn expand(path: &PathFamily, sizes: &[usize], times: &[f64], drivers: &[Driver], ev: &EvolutionSettings) -> CdResult<Vec<GridPoint>> {
    let mut out = Vec::new();
    for variant in path.variants()? {
        for &size in sizes {
            for &t in times {
                for d in drivers {
                    out.push(GridPoint {
                        spec: path.spec(&variant, size),
                        size,
                        n_qubits: path.qubits(size),
                        variant,
                        evolution: ev.config(d, t),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Runs `f` over `items` on up to `workers` threads; results come back in
/// input order. A panic inside `f` becomes an error string for that item.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R, String> + Sync) -> Vec<Result<R, String>> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<Result<R, String>>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= items.len() {
                    break;
                }
                let r = catch_unwind(AssertUnwindSafe(|| f(&items[i]))).unwrap_or_else(|p| {
                    let msg = p
                        .downcast_ref::<String>()
                        .cloned()
                        .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                        .unwrap_or_else(|| "unknown panic".into());
                    Err(format!("panicked: {msg}"))
                });
                *slots[i].lock().unwrap_or_else(|e| e.into_inner()) = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap_or_else(|e| e.into_inner()).unwrap_or_else(|| Err("not run".into())))
        .collect()
}

fn run_point(point: &GridPoint, job: Job) -> CdResult<(f64, Option<usize>, Option<usize>, Option<f64>, Option<TrotterCostReport>)> {
    let path = point.spec.build()?;
    match job {
        Job::Evolve => {
            let r = evolve(path.as_ref(), &point.evolution)?;
            Ok((r.fidelity, Some(r.steps), Some(r.matvecs), Some(r.max_norm_drift), None))
        }
        Job::Trotter(tau) => {
            let (_, report) = trotter_evolve(path.as_ref(), &point.evolution, tau)?;
            Ok((report.fidelity_trotter, Some(report.n_steps), None, None, Some(report)))
        }
    }
}

fn run_grid(points: &[GridPoint], job: Job, workers: usize, offset: usize) -> Vec<PointRecord> {
    let out = parallel_map(points, workers, |p| {
        let label = p.evolution.driver.label();
        info!("start {} size={} T={} {label}", p.spec_name(), p.size, p.evolution.total_time);
        let r = run_point(p, job).map_err(|e| e.to_string());
        match &r {
            Ok((f, ..)) => info!("done  {} size={} T={} {label}: F = {f:.6e}", p.spec_name(), p.size, p.evolution.total_time),
            Err(e) => warn!("failed {} size={} T={} {label}: {e}", p.spec_name(), p.size, p.evolution.total_time),
        }
        r
    });
    points
        .iter()
        .zip(out)
        .enumerate()
        .map(|(i, (p, r))| {
            let mut rec = blank_record(p, offset + i);
            match r {
                Ok((f, steps, matvecs, drift, trotter)) => {
                    rec.fidelity = Some(f);
                    rec.infidelity = Some(1.0 - f);
                    rec.steps = steps;
                    rec.matvecs = matvecs;
                    rec.max_norm_drift = drift;
                    rec.trotter = trotter;
                }
                Err(e) => {
                    rec.status = PointStatus::Failed;
                    rec.error = Some(e);
                }
            }
            rec
        })
        .collect()
}

impl GridPoint {
    fn spec_name(&self) -> &'static str {
        match self.spec {
            PathSpec::Ising(_) => "ising",
            PathSpec::Mps(_) => "mps",
        }
    }
}

/// Fits `−ln F` against the qubit count per total time, skipping times with
/// fewer than 3 successful sizes. Fidelities above 1 by rounding are clamped.
fn fits_from(points: &[PointRecord], times: &[f64]) -> Vec<ScalingFit> {
    let mut fits = Vec::new();
    for &t in times {
        let samples: Vec<(usize, f64)> = points
            .iter()
            .filter(|p| p.evolution.total_time == t)
            .filter_map(|p| p.fidelity.map(|f| (p.n_qubits, f.min(1.0))))
            .collect();
        match fit_scaling(&samples, t) {
            Ok(f) => fits.push(f),
            Err(e) => warn!("no fit at T = {t}: {e}"),
        }
    }
    fits
}

/// First `T` on the grid where the simulated fidelity reaches `target`, refined
/// by bisection in `ln T` to relative width `1e-3`.
fn direct_tp(point: &GridPoint, times: &[f64], target: f64) -> CdResult<f64> {
    let path = point.spec.build()?;
    let fid = |t: f64| -> CdResult<f64> {
        let mut cfg = point.evolution.clone();
        cfg.total_time = t;
        Ok(evolve(path.as_ref(), &cfg)?.fidelity)
    };
    let mut prev: Option<f64> = None;
    for &t in times {
        if fid(t)? >= target {
            let Some(mut lo) = prev else {
                return Err(CdError::OutOfRange(format!("fidelity already reaches {target} at the first grid time {t}")));
            };
            let mut hi = t;
            while hi / lo - 1.0 > 1e-3 {
                let mid = (lo * hi).sqrt();
                if fid(mid)? >= target {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            return Ok((lo * hi).sqrt());
        }
        prev = Some(t);
    }
    Err(CdError::OutOfRange(format!("fidelity stays below {target} up to T = {}", times[times.len() - 1])))
}

/// Runs every grid point and assembles the results in grid order. Only config
/// problems are returned as errors; point failures are recorded per point.
pub fn run(config: &ExperimentConfig) -> CdResult<RunResults> {
    config.validate()?;
    let cfg = config.resolved()?;
    let ev = &cfg.evolution;
    let workers = cfg.workers;
    let mut results = RunResults {
        config: cfg.clone(),
        points: Vec::new(),
        fits: Vec::new(),
        predictions: Vec::new(),
        trace: Vec::new(),
        coefficients: Vec::new(),
    };
    match &cfg.experiment {
        Experiment::IsingBench(s) | Experiment::MpsBench(s) => {
            let grid = expand(&s.path, &s.sizes, &s.total_times, &s.drivers, ev)?;
            results.points = run_grid(&grid, Job::Evolve, workers, 0);
        }
        Experiment::TrotterCost(t) => {
            let s = &t.sweep;
            let grid = expand(&s.path, &s.sizes, &s.total_times, &s.drivers, ev)?;
            results.points = run_grid(&grid, Job::Trotter(t.tau), workers, 0);
        }
        Experiment::Scaling(s) => {
            let grid = expand(&s.path, &s.sizes, &s.total_times, std::slice::from_ref(&s.driver), ev)?;
            results.points = run_grid(&grid, Job::Evolve, workers, 0);
            results.fits = fits_from(&results.points, &s.total_times);
        }
        Experiment::PredictTp(p) => {
            let s = &p.scaling;
            let grid = expand(&s.path, &s.sizes, &s.total_times, std::slice::from_ref(&s.driver), ev)?;
            results.points = run_grid(&grid, Job::Evolve, workers, 0);
            results.fits = fits_from(&results.points, &s.total_times);
            let variant = s.path.variants()?[0];
            let mut jobs = Vec::new();
            for &size in &p.predict_sizes {
                for &f in &p.targets {
                    let point = GridPoint {
                        spec: s.path.spec(&variant, size),
                        size,
                        n_qubits: s.path.qubits(size),
                        variant,
                        evolution: ev.config(&s.driver, s.total_times[0]),
                    };
                    jobs.push((point, f));
                }
            }
            let fits = &results.fits;
            let direct = p.direct_search;
            let times = &s.total_times;
            let preds = parallel_map(&jobs, workers, |(point, f)| {
                let (mut rec, pred) = match predict_tp(fits, point.n_qubits, *f) {
                    Ok(pr) => (
                        PredictionRecord {
                            size: point.size,
                            n_qubits: point.n_qubits,
                            f_target: *f,
                            t_p: Some(pr.t_p),
                            non_monotone: pr.non_monotone,
                            nonpositive_g: pr.nonpositive_g,
                            error: None,
                            t_direct: None,
                            direct_error: None,
                        },
                        true,
                    ),
                    Err(e) => (
                        PredictionRecord {
                            size: point.size,
                            n_qubits: point.n_qubits,
                            f_target: *f,
                            t_p: None,
                            non_monotone: false,
                            nonpositive_g: false,
                            error: Some(e.to_string()),
                            t_direct: None,
                            direct_error: None,
                        },
                        false,
                    ),
                };
                if direct && pred {
                    match direct_tp(point, times, *f) {
                        Ok(t) => rec.t_direct = Some(t),
                        Err(e) => rec.direct_error = Some(e.to_string()),
                    }
                }
                Ok(rec)
            });
            results.predictions = preds.into_iter().map(|r| r.expect("prediction jobs do not fail")).collect();
        }
        Experiment::DumpCoefficients(d) => {
            let variant = d.path.variants()?[0];
            let mut evolution = ev.config(&d.driver, d.total_time);
            evolution.record_coefficients = true;
            let point = GridPoint {
                spec: d.path.spec(&variant, d.size),
                size: d.size,
                n_qubits: d.path.qubits(d.size),
                variant,
                evolution,
            };
            let out = parallel_map(std::slice::from_ref(&point), 1, |p| {
                let path = p.spec.build().map_err(|e| e.to_string())?;
                evolve(path.as_ref(), &p.evolution).map_err(|e| e.to_string())
            });
            let mut rec = blank_record(&point, 0);
            match out.into_iter().next().expect("one job") {
                Ok(r) => {
                    rec.fidelity = Some(r.fidelity);
                    rec.infidelity = Some(1.0 - r.fidelity);
                    rec.steps = Some(r.steps);
                    rec.matvecs = Some(r.matvecs);
                    rec.max_norm_drift = Some(r.max_norm_drift);
                    results.trace = r.trace;
                    results.coefficients = r.coefficients.unwrap_or_default();
                }
                Err(e) => {
                    rec.status = PointStatus::Failed;
                    rec.error = Some(e);
                }
            }
            results.points = vec![rec];
        }
    }
    Ok(results)
}

fn blank_record(p: &GridPoint, index: usize) -> PointRecord {
    PointRecord {
        index,
        path: p.spec.clone(),
        size: p.size,
        n_qubits: p.n_qubits,
        g: p.variant.g,
        xi: p.variant.xi,
        driver_label: p.evolution.driver.label(),
        evolution: p.evolution.clone(),
        status: PointStatus::Ok,
        error: None,
        fidelity: None,
        infidelity: None,
        steps: None,
        matvecs: None,
        max_norm_drift: None,
        trotter: None,
    }
}

fn num(v: f64) -> String { format!("{v:.17e}") }

fn opt(v: Option<f64>) -> String { v.map(num).unwrap_or_default() }

fn path_name(p: &PathSpec) -> &'static str {
    match p {
        PathSpec::Ising(_) => "ising",
        PathSpec::Mps(_) => "mps",
    }
}

fn write_table(path: &Path, header: &[&str], rows: Vec<Vec<String>>) -> CdResult<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const INFIDELITY_VS_T: &str = "infidelity_vs_T.csv";
pub const INFIDELITY_VS_XI: &str = "infidelity_vs_xi.csv";
pub const KAPPA_VS_T: &str = "kappa_vs_T.csv";
pub const TP_VS_N: &str = "tp_vs_N.csv";
pub const FIDELITY_VS_CNOT: &str = "fidelity_vs_cnot.csv";

/// Writes the five tidy tables into `dir`; tables with no matching results get
/// only their header. Returns the written paths.
pub fn emit_plotdata(results: &RunResults, dir: &Path) -> CdResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let ok = || results.points.iter().filter(|p| p.status == PointStatus::Ok);
    let evolved = || ok().filter(|p| p.trotter.is_none());
    let driver = |p: &PointRecord| p.driver_label.clone();
    let mut written = Vec::new();

    let path = dir.join(INFIDELITY_VS_T);
    write_table(
        &path,
        &["path", "size", "n_qubits", "g", "xi", "driver", "T", "fidelity", "infidelity"],
        evolved()
            .map(|p| {
                vec![
                    path_name(&p.path).into(),
                    p.size.to_string(),
                    p.n_qubits.to_string(),
                    opt(p.g),
                    opt(p.xi),
                    driver(p),
                    num(p.evolution.total_time),
                    opt(p.fidelity),
                    opt(p.infidelity),
                ]
            })
            .collect(),
    )?;
    written.push(path);

    let path = dir.join(INFIDELITY_VS_XI);
    let mut rows: Vec<&PointRecord> = evolved().filter(|p| p.xi.is_some()).collect();
    rows.sort_by(|a, b| {
        (a.size, a.driver_label.as_str())
            .cmp(&(b.size, b.driver_label.as_str()))
            .then(a.evolution.total_time.total_cmp(&b.evolution.total_time))
            .then(a.xi.unwrap_or(0.0).total_cmp(&b.xi.unwrap_or(0.0)))
    });
    write_table(
        &path,
        &["xi", "g", "size", "n_qubits", "driver", "T", "infidelity"],
        rows.into_iter()
            .map(|p| {
                vec![
                    opt(p.xi),
                    opt(p.g),
                    p.size.to_string(),
                    p.n_qubits.to_string(),
                    driver(p),
                    num(p.evolution.total_time),
                    opt(p.infidelity),
                ]
            })
            .collect(),
    )?;
    written.push(path);

    let fit_driver = match &results.config.experiment {
        Experiment::Scaling(s) => s.driver.label(),
        Experiment::PredictTp(p) => p.scaling.driver.label(),
        _ => String::new(),
    };
    let path = dir.join(KAPPA_VS_T);
    write_table(
        &path,
        &["driver", "T", "kappa", "c", "residual"],
        results
            .fits
            .iter()
            .map(|f| vec![fit_driver.clone(), num(f.t), num(f.kappa), num(f.c), num(f.residual)])
            .collect(),
    )?;
    written.push(path);

    let path = dir.join(TP_VS_N);
    write_table(
        &path,
        &["size", "n_qubits", "f_target", "T_p", "T_direct", "rel_error", "non_monotone"],
        results
            .predictions
            .iter()
            .map(|p| {
                let rel = p.t_p.zip(p.t_direct).map(|(a, b)| (a - b).abs() / b);
                vec![
                    p.size.to_string(),
                    p.n_qubits.to_string(),
                    num(p.f_target),
                    opt(p.t_p),
                    opt(p.t_direct),
                    opt(rel),
                    p.non_monotone.to_string(),
                ]
            })
            .collect(),
    )?;
    written.push(path);

    let path = dir.join(FIDELITY_VS_CNOT);
    write_table(
        &path,
        &["path", "size", "n_qubits", "g", "xi", "driver", "T", "tau", "n_steps", "total_cnot", "fidelity_trotter"],
        ok().filter_map(|p| p.trotter.as_ref().map(|t| (p, t)))
            .map(|(p, t)| {
                vec![
                    path_name(&p.path).into(),
                    p.size.to_string(),
                    p.n_qubits.to_string(),
                    opt(p.g),
                    opt(p.xi),
                    driver(p),
                    num(p.evolution.total_time),
                    num(t.tau),
                    t.n_steps.to_string(),
                    t.total_cnot.to_string(),
                    num(t.fidelity_trotter),
                ]
            })
            .collect(),
    )?;
    written.push(path);
    Ok(written)
}

/// Writes `results.json`, the tidy tables, `fits.csv` for fitting experiments
/// and `trace.csv`/`coefficients.csv` for coefficient dumps.
pub fn write_outputs(results: &RunResults, dir: &Path) -> CdResult<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let path = dir.join("results.json");
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, results)?;
    f.write_all(b"\n")?;
    written.push(path);
    written.extend(emit_plotdata(results, dir)?);
    match &results.config.experiment {
        Experiment::Scaling(_) | Experiment::PredictTp(_) => {
            let path = dir.join("fits.csv");
            write_fits_csv(fs::File::create(&path)?, &results.fits)?;
            written.push(path);
        }
        Experiment::DumpCoefficients(_) => {
            let path = dir.join("trace.csv");
            write_trace_csv(fs::File::create(&path)?, &results.trace)?;
            written.push(path);
            let path = dir.join("coefficients.csv");
            write_coefficients_csv(fs::File::create(&path)?, &results.coefficients)?;
            written.push(path);
        }
        _ => {}
    }
    Ok(written)
}

/// Checks that `dir` can be created and written to.
pub fn ensure_writable(dir: &Path) -> CdResult<()> {
    fs::create_dir_all(dir).map_err(|e| CdError::Config(format!("{}: {e}", dir.display())))?;
    let probe = dir.join(".cdforge-write-probe");
    fs::write(&probe, b"").map_err(|e| CdError::Config(format!("{} is not writable: {e}", dir.display())))?;
    fs::remove_file(&probe)?;
    Ok(())
}

/// Fixed-width summary with one line per grid point and prediction.
pub fn summary_table(results: &RunResults) -> String {
    let mut s = format!(
        "{:>5} {:>5} {:>7} {:>9} {:<18} {:>10} {:>12}  {}\n",
        "#", "path", "qubits", "T", "driver", "fidelity", "infidelity", "status"
    );
    for p in &results.points {
        let status = match &p.error {
            None => "ok".to_string(),
            Some(e) => format!("FAILED: {e}"),
        };
        s += &format!(
            "{:>5} {:>5} {:>7} {:>9.4} {:<18} {:>10} {:>12}  {}\n",
            p.index,
            path_name(&p.path),
            p.n_qubits,
            p.evolution.total_time,
            p.driver_label,
            p.fidelity.map(|f| format!("{f:.6}")).unwrap_or_else(|| "-".into()),
            p.infidelity.map(|f| format!("{f:.3e}")).unwrap_or_else(|| "-".into()),
            status
        );
    }
    for f in &results.fits {
        s += &format!("fit T={:<8} kappa={:.5e} c={:.5e} residual={:.3e}\n", f.t, f.kappa, f.c, f.residual);
    }
    for p in &results.predictions {
        s += &format!(
            "predict qubits={} F={}: T_p={} direct={}{}\n",
            p.n_qubits,
            p.f_target,
            p.t_p.map(|t| format!("{t:.5}")).unwrap_or_else(|| "-".into()),
            p.t_direct.map(|t| format!("{t:.5}")).unwrap_or_else(|| "-".into()),
            p.error.as_ref().or(p.direct_error.as_ref()).map(|e| format!("  ({e})")).unwrap_or_default()
        );
    }
    s
}
