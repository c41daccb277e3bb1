//! Time evolution under `H(s(t))` or `H_CD = H(s) + ṡA(s)`: exact state-vector
//! propagation with a per-step Krylov exponential, and a first-order product
//! formula with CNOT accounting.

use std::collections::BTreeMap;
use std::io::Write;

use log::{debug, warn};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{exact_agp, AnsatzMode, AnsatzTermSet, DEFAULT_WINDOW_CAP};
use crate::error::{domain, CdError, CdResult};
use crate::linalg::{self, expm_krylov, KrylovOptions};
use crate::operator::{materialize_capped, LocalOperator, OperatorSum, SiteWindow};
use crate::paths::HamiltonianPath;
use crate::schedule::{ScheduleKind, SchedulePlan};
use crate::state::{fidelity, StateVector};
use crate::variational::{optimize_global, optimize_local, AnsatzSpec, RegionPlan};

pub const DEFAULT_DT: f64 = 0.05;
pub const DEFAULT_TAU: f64 = 0.05;
pub const DEFAULT_DENSE_CAP: usize = 1 << 16;

/// How the gauge potential is obtained at each step.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgpKind {
    Nc,
    Wnc,
    /// spectral AGP of the dense Hamiltonian
    Exact,
}

#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    #[default]
    Global,
    Local(RegionPlan),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CdSpec {
    pub agp: AgpKind,
    #[serde(default = "default_order")]
    pub order: usize,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default = "default_window_cap")]
    pub window_cap: usize,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
}

fn default_order() -> usize { 1 }
fn default_window_cap() -> usize { DEFAULT_WINDOW_CAP }
fn default_gap_tol() -> f64 { 1e-10 }

impl CdSpec {
    pub fn variational(agp: AgpKind, order: usize) -> Self {
        Self { agp, order, optimizer: Optimizer::Global, window_cap: DEFAULT_WINDOW_CAP, gap_tol: default_gap_tol() }
    }

    pub fn nc(order: usize) -> Self { Self::variational(AgpKind::Nc, order) }

    pub fn wnc(order: usize) -> Self { Self::variational(AgpKind::Wnc, order) }

    pub fn wnc_local(order: usize, plan: RegionPlan) -> Self {
        Self { optimizer: Optimizer::Local(plan), ..Self::wnc(order) }
    }

    pub fn exact() -> Self { Self::variational(AgpKind::Exact, 0) }

    fn ansatz(&self) -> Option<AnsatzSpec> {
        let mode = match self.agp {
            AgpKind::Nc => AnsatzMode::Nc,
            AgpKind::Wnc => AnsatzMode::Wnc,
            AgpKind::Exact => return None,
        };
        Some(AnsatzSpec { mode, order: self.order, window_cap: self.window_cap })
    }

    pub fn validate(&self) -> CdResult<()> {
        match (self.agp, &self.optimizer) {
            (AgpKind::Exact, Optimizer::Local(_)) => domain("the exact AGP has no local optimizer"),
            (AgpKind::Nc, Optimizer::Local(_)) => {
                domain("local optimization needs one coefficient per term; use the WNC ansatz")
            }
            (AgpKind::Exact, _) => Ok(()),
            _ if self.order == 0 => domain("ansatz order must be at least 1"),
            (_, Optimizer::Local(plan)) => RegionPlan::new(plan.window, plan.stride).map(|_| ()),
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Driver {
    Adiabatic,
    Cd(CdSpec),
}

impl Driver {
    /// Short label used in tables, e.g. `WNC l=1 local`.
    pub fn label(&self) -> String {
        match self {
            Driver::Adiabatic => "adiabatic".into(),
            Driver::Cd(cd) => match (cd.agp, &cd.optimizer) {
                (AgpKind::Exact, _) => "exact".into(),
                (AgpKind::Nc, _) => format!("NC l={}", cd.order),
                (AgpKind::Wnc, Optimizer::Global) => format!("WNC l={} global", cd.order),
                (AgpKind::Wnc, Optimizer::Local(_)) => format!("WNC l={} local", cd.order),
            },
        }
    }
}

/// Time-stepping rule for [`evolve`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Integrator {
    /// one exponential per step at the midpoint, second order
    #[default]
    Midpoint,
    /// two exponentials per step at the Gauss points, fourth order
    Magnus4,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub driver: Driver,
    #[serde(default)]
    pub integrator: Integrator,
    #[serde(default = "default_schedule")]
    pub schedule: ScheduleKind,
    pub total_time: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_dense_cap")]
    pub dense_cap: usize,
    #[serde(default)]
    pub record_coefficients: bool,
}

fn default_schedule() -> ScheduleKind { ScheduleKind::Sin2Sin2 }
fn default_dt() -> f64 { DEFAULT_DT }
fn default_tol() -> f64 { 1e-10 }
fn default_dense_cap() -> usize { DEFAULT_DENSE_CAP }

impl EvolutionConfig {
    pub fn new(driver: Driver, total_time: f64) -> Self {
        Self {
            driver,
            integrator: Integrator::Midpoint,
            schedule: default_schedule(),
            total_time,
            dt: DEFAULT_DT,
            tol: default_tol(),
            dense_cap: DEFAULT_DENSE_CAP,
            record_coefficients: false,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }

    pub fn validate(&self) -> CdResult<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return domain(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.total_time >= self.dt) || !self.total_time.is_finite() {
            return domain(format!("total time {} is shorter than dt = {}", self.total_time, self.dt));
        }
        if !(self.tol > 0.0) {
            return domain(format!("integrator tolerance must be positive, got {}", self.tol));
        }
        if let Driver::Cd(cd) = &self.driver {
            cd.validate()?;
        }
        Ok(())
    }

    pub fn plan(&self) -> CdResult<SchedulePlan> { SchedulePlan::new(self.schedule, self.total_time) }
}

fn check_dim(path: &dyn HamiltonianPath, cap: usize) -> CdResult<usize> {
    let dim = (path.local_dim() as u128).pow(path.n_sites() as u32);
    if dim > cap as u128 {
        return Err(CdError::Resource(format!(
            "state dimension {}^{} exceeds the cap of {cap}",
            path.local_dim(),
            path.n_sites()
        )));
    }
    Ok(dim as usize)
}

/// Gauge potential at one value of `s`.
#[derive(Clone, Debug)]
pub struct AgpSolution {
    /// `A(s)` as a sum of local terms
    pub operator: OperatorSum,
    /// `S` at the chosen coefficients
    pub action: f64,
    /// term set and coefficients, absent for the exact AGP
    pub ansatz: Option<(AnsatzTermSet, Vec<f64>)>,
}

/// `A(s)` for the requested construction.
pub fn solve_agp(path: &dyn HamiltonianPath, cd: &CdSpec, s: f64, dense_cap: usize) -> CdResult<AgpSolution> {
    let Some(spec) = cd.ansatz() else {
        return exact_solution(path, cd.gap_tol, s, dense_cap);
    };
    let opt = match &cd.optimizer {
        Optimizer::Global => optimize_global(path, s, &spec)?,
        Optimizer::Local(plan) => optimize_local(path, s, &spec, plan)?,
    };
    Ok(AgpSolution { operator: opt.operator()?, action: opt.action, ansatz: Some((opt.set, opt.alpha)) })
}

fn exact_solution(path: &dyn HamiltonianPath, gap_tol: f64, s: f64, dense_cap: usize) -> CdResult<AgpSolution> {
    let h = materialize_capped(&path.terms(s)?, dense_cap)?;
    let dh = materialize_capped(&path.dterms(s)?, dense_cap)?;
    let a = exact_agp(&h, &dh, gap_tol)?;
    let i = C64::new(0.0, 1.0);
    let r: DMatrix<C64> = &dh + (&a * &h - &h * &a) * i;
    let action = r.norm_squared() / h.nrows() as f64;
    let n = path.n_sites();
    let term = LocalOperator::new(SiteWindow::new(0, n)?, path.local_dim(), a)?.mark_hermitian()?;
    Ok(AgpSolution { operator: OperatorSum::from_terms(n, path.local_dim(), vec![term])?, action, ansatz: None })
}

/// `H(s(t))` followed by the assembled ansatz scaled by `ṡ(t)`.
pub fn build_hcd(
    path: &dyn HamiltonianPath,
    set: &AnsatzTermSet,
    alpha: &[f64],
    t: f64,
    plan: &SchedulePlan,
) -> CdResult<OperatorSum> {
    let (s, s_dot) = plan.eval(t)?;
    let a = crate::ansatz::assemble(set, alpha)?;
    hcd_terms(path.terms(s)?, &a, s_dot)
}

fn hcd_terms(mut h: OperatorSum, a: &OperatorSum, s_dot: f64) -> CdResult<OperatorSum> {
    h.extend(&a.scaled_real(s_dot))?;
    Ok(h)
}

/// Pieces merged and embedded into windows of the largest width present,
/// which keeps the per-matvec cost at a few dense blocks.
fn propagator_form(sum: &OperatorSum) -> CdResult<OperatorSum> {
    let merged = sum.merged_by_window();
    merged.coarsened(merged.max_width().max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    /// end of the step
    pub t: f64,
    pub s: f64,
    /// `|⟨ψ(1)|φ(t)⟩|²`
    pub fidelity: f64,
    /// action at the step's midpoint coefficients; `None` without CD
    pub action: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub t: f64,
    pub s: f64,
    pub group: usize,
    pub alpha: f64,
}

#[derive(Clone, Debug)]
pub struct EvolutionResult {
    pub final_state: StateVector,
    pub fidelity: f64,
    pub trace: Vec<TracePoint>,
    pub coefficients: Option<Vec<CoefficientRow>>,
    pub steps: usize,
    /// `T / steps`
    pub dt: f64,
    pub matvecs: usize,
    /// largest `|‖φ‖ − 1|` seen before renormalization
    pub max_norm_drift: f64,
}

/// Evaluation points and weights of the fourth-order commutator-free Magnus
/// step: `exp(−i·dt·(a₁H(t₁) + a₂H(t₂)))·exp(−i·dt·(a₂H(t₁) + a₁H(t₂)))`, the
/// right factor applied first.
const CFM4_NODES: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];
const CFM4_WEIGHTS: [f64; 2] = [0.25 - 0.288_675_134_594_812_9, 0.25 + 0.288_675_134_594_812_9];

/// `H_CD(t)` and the action of its gauge potential.
fn hcd_at(
    path: &dyn HamiltonianPath,
    cfg: &EvolutionConfig,
    plan: &SchedulePlan,
    t: f64,
    log: &mut Option<Vec<CoefficientRow>>,
) -> CdResult<(OperatorSum, Option<f64>)> {
    let (s, s_dot) = plan.eval(t)?;
    let h = path.terms(s)?;
    let Driver::Cd(cd) = &cfg.driver else { return Ok((h, None)) };
    let agp = solve_agp(path, cd, s, cfg.dense_cap)?;
    if let (Some(log), Some((_, alpha))) = (log.as_mut(), &agp.ansatz) {
        log.extend(alpha.iter().enumerate().map(|(group, &alpha)| CoefficientRow { t, s, group, alpha }));
    }
    Ok((hcd_terms(h, &agp.operator, s_dot)?, Some(agp.action)))
}

fn krylov_step(gen: &OperatorSum, psi: &[C64], dt: f64, opts: &KrylovOptions, step: usize) -> CdResult<(Vec<C64>, usize)> {
    let op = propagator_form(gen)?;
    let apply = |x: &[C64], y: &mut [C64]| {
        y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        op.apply_into(C64::new(1.0, 0.0), x, y);
    };
    let (next, stats) = expm_krylov(&apply, psi, dt, opts).map_err(|e| match e {
        CdError::Integrator { msg, .. } => CdError::Integrator { step, msg },
        other => other,
    })?;
    Ok((next, stats.matvecs))
}

/// Piecewise propagation over `ceil(T/dt)` equal steps. With the midpoint
/// rule `H_CD` is frozen at the step midpoint; with the Magnus rule it is
/// sampled at the two Gauss points. Each exponential is applied by Krylov.
pub fn evolve(path: &dyn HamiltonianPath, cfg: &EvolutionConfig) -> CdResult<EvolutionResult> {
    cfg.validate()?;
    check_dim(path, cfg.dense_cap)?;
    let plan = cfg.plan()?;
    let target = path.target_state()?;
    let mut psi = path.initial_state()?.into_amplitudes();
    let n_steps = (cfg.total_time / cfg.dt - 1e-9).ceil().max(1.0) as usize;
    let dt = cfg.total_time / n_steps as f64;
    let opts = KrylovOptions { tol: cfg.tol, ..KrylovOptions::default() };
    let mut trace = Vec::with_capacity(n_steps);
    let mut coefficients = cfg.record_coefficients.then(Vec::new);
    let mut matvecs = 0;
    let mut max_norm_drift: f64 = 0.0;
    for k in 0..n_steps {
        let t0 = k as f64 * dt;
        let (next, action) = match cfg.integrator {
            Integrator::Midpoint => {
                let (hcd, action) = hcd_at(path, cfg, &plan, t0 + 0.5 * dt, &mut coefficients)?;
                let (next, mv) = krylov_step(&hcd, &psi, dt, &opts, k)?;
                matvecs += mv;
                (next, action)
            }
            Integrator::Magnus4 => {
                let (h1, a1) = hcd_at(path, cfg, &plan, t0 + CFM4_NODES[0] * dt, &mut coefficients)?;
                let (h2, a2) = hcd_at(path, cfg, &plan, t0 + CFM4_NODES[1] * dt, &mut coefficients)?;
                let [w1, w2] = CFM4_WEIGHTS;
                let mut first = h1.scaled_real(w2);
                first.extend(&h2.scaled_real(w1))?;
                let mut second = h1.scaled_real(w1);
                second.extend(&h2.scaled_real(w2))?;
                let (mid, mv1) = krylov_step(&first, &psi, dt, &opts, k)?;
                let (next, mv2) = krylov_step(&second, &mid, dt, &opts, k)?;
                matvecs += mv1 + mv2;
                (next, a1.zip(a2).map(|(x, y)| 0.5 * (x + y)))
            }
        };
        let nrm = linalg::norm(&next);
        let drift = (nrm - 1.0).abs();
        if drift > 1e-9 {
            warn!("step {k}: norm drifted by {drift:e} before renormalization");
        }
        max_norm_drift = max_norm_drift.max(drift);
        psi = next.into_iter().map(|z| z / nrm).collect();
        let t_end = (k + 1) as f64 * dt;
        let state = StateVector::new(psi.clone(), path.local_dim(), path.n_sites())?;
        trace.push(TracePoint { t: t_end, s: plan.eval(t_end)?.0, fidelity: fidelity(&target, &state)?, action });
    }
    let final_state = StateVector::new(psi, path.local_dim(), path.n_sites())?;
    let fid = fidelity(&target, &final_state)?;
    debug!("{} over T = {}: {} steps, {} matvecs, 1−F = {:e}", cfg.driver.label(), cfg.total_time, n_steps, matvecs, 1.0 - fid);
    Ok(EvolutionResult { final_state, fidelity: fid, trace, coefficients, steps: n_steps, dt, matvecs, max_norm_drift })
}

/// `ceil((4^m − 3m − 1)/4)` CNOTs for a generic `m`-qubit unitary.
pub fn cnot_cost(m: usize) -> CdResult<u64> {
    if m == 0 || m > 31 {
        return domain(format!("support of {m} qubits is outside the supported range 1..=31"));
    }
    let num = 4u64.pow(m as u32) - 3 * m as u64 - 1;
    Ok(num.div_ceil(4))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrotterCostReport {
    pub n_steps: usize,
    pub tau: f64,
    /// support size in qubits → number of applied unitaries
    pub support_histogram: BTreeMap<usize, u64>,
    pub total_cnot: u64,
    pub fidelity_trotter: f64,
    pub ordering: String,
}

pub const TROTTER_ORDERING: &str = "per step at s(k·tau): Hamiltonian terms by ascending window, then CD terms by ascending window";

/// First-order product formula `Π_k Π_j exp(−iτ h_j[s(kτ)])` with the CD terms
/// `exp(−iτ ṡ α_η A_η)` appended after the Hamiltonian terms of each step.
pub fn trotter_evolve(path: &dyn HamiltonianPath, cfg: &EvolutionConfig, tau: f64) -> CdResult<(StateVector, TrotterCostReport)> {
    cfg.validate()?;
    if !(tau > 0.0) || tau > cfg.total_time {
        return domain(format!("Trotter step {tau} must lie in (0, T = {}]", cfg.total_time));
    }
    check_dim(path, cfg.dense_cap)?;
    let plan = cfg.plan()?;
    let n = path.n_sites();
    let qps = path.qubits_per_site();
    let mut psi = path.initial_state()?.into_amplitudes();
    let n_steps = (cfg.total_time / tau - 1e-9).ceil().max(1.0) as usize;
    let tau = cfg.total_time / n_steps as f64;
    let mut hist: BTreeMap<usize, u64> = BTreeMap::new();
    let mut total_cnot = 0u64;
    let mut scratch = vec![C64::new(0.0, 0.0); psi.len()];
    let mut apply = |gen: &LocalOperator, psi: &mut Vec<C64>, scale: f64| -> CdResult<()> {
        if gen.max_norm() == 0.0 || scale == 0.0 {
            return Ok(());
        }
        let u = linalg::expm_hermitian(gen.matrix(), tau * scale);
        let u = LocalOperator::new(gen.window(), gen.local_dim(), u)?;
        scratch.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
        crate::operator::apply_local_into(&u, n, C64::new(1.0, 0.0), psi, &mut scratch);
        std::mem::swap(psi, &mut scratch);
        let m = gen.window().width() * qps;
        *hist.entry(m).or_default() += 1;
        total_cnot += cnot_cost(m)?;
        Ok(())
    };
    for k in 1..=n_steps {
        let (s, s_dot) = plan.eval(k as f64 * tau)?;
        let mut h = path.terms(s)?.into_terms();
        h.sort_by_key(|t| t.window());
        for t in &h {
            apply(t, &mut psi, 1.0)?;
        }
        let Driver::Cd(cd) = &cfg.driver else { continue };
        if s_dot == 0.0 {
            continue;
        }
        let agp = solve_agp(path, cd, s, cfg.dense_cap)?;
        let mut gens: Vec<(LocalOperator, f64)> = match &agp.ansatz {
            Some((set, alpha)) => set
                .terms()
                .iter()
                .zip(set.tying())
                .map(|(t, &g)| (t.operator().clone(), s_dot * alpha[g]))
                .filter(|(_, c)| *c != 0.0)
                .collect(),
            None => agp.operator.terms().iter().map(|t| (t.clone(), s_dot)).collect(),
        };
        gens.sort_by_key(|(t, _)| t.window());
        for (t, c) in &gens {
            apply(t, &mut psi, *c)?;
        }
    }
    let nrm = linalg::norm(&psi);
    if (nrm - 1.0).abs() > 1e-9 {
        warn!("product formula lost unitarity: ‖φ‖ = {nrm}");
    }
    let state = StateVector::new(psi.into_iter().map(|z| z / nrm).collect(), path.local_dim(), n)?;
    let fid = fidelity(&path.target_state()?, &state)?;
    Ok((
        state,
        TrotterCostReport {
            n_steps,
            tau,
            support_histogram: hist,
            total_cnot,
            fidelity_trotter: fid,
            ordering: TROTTER_ORDERING.into(),
        },
    ))
}

fn fmt_opt(v: Option<f64>) -> String { v.map(|x| format!("{x:.17e}")).unwrap_or_default() }

/// `t,s,fidelity,action` rows; `action` is empty without CD.
pub fn write_trace_csv<W: Write>(out: W, trace: &[TracePoint]) -> CdResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "fidelity", "action"]).map_err(csv_err)?;
    for p in trace {
        w.write_record([format!("{:.17e}", p.t), format!("{:.17e}", p.s), format!("{:.17e}", p.fidelity), fmt_opt(p.action)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `t,s,group,alpha` rows.
pub fn write_coefficients_csv<W: Write>(out: W, rows: &[CoefficientRow]) -> CdResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "group", "alpha"]).map_err(csv_err)?;
    for r in rows {
        w.write_record([format!("{:.17e}", r.t), format!("{:.17e}", r.s), r.group.to_string(), format!("{:.17e}", r.alpha)])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> CdError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CdError::Io(io),
        other => CdError::Config(format!("csv: {other:?}")),
    }
}
