//! Acceptance checks. Prints one `PASS`/`FAIL` line per criterion and always
//! exits successfully; a failing criterion is reported, not raised.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use cdforge::analysis::{fit_scaling, predict_tp};
use cdforge::ansatz::{enumerate_terms, nc_terms, AnsatzMode, DEFAULT_WINDOW_CAP};
use cdforge::dynamics::{cnot_cost, evolve, trotter_evolve, CdSpec, Driver, EvolutionConfig, Integrator};
use cdforge::experiment::{run, write_outputs, Experiment, ExperimentConfig, PathFamily, Sweep};
use cdforge::operator::{commutator, embed, hs_inner, LocalOperator, OperatorSum, SiteWindow};
use cdforge::paths::{
    g_of_xi, mps_parent_terms, mps_state, mps_tensors, HamiltonianPath, IsingPath, IsingPathSpec, Longitudinal, MpsPath,
    MpsPathSpec,
};
use cdforge::schedule::{ScheduleKind, SchedulePlan};
use cdforge::variational::{build_gram, optimize_global, AnsatzSpec, RegionPlan};
use common::*;
use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

type Outcome = Result<(bool, String), String>;

fn err<E: std::fmt::Display>(e: E) -> String { e.to_string() }

struct Tally {
    pass: usize,
    fail: usize,
    /// criterion ids named on the command line; empty runs all
    only: Vec<String>,
}

impl Tally {
    fn check(&mut self, id: &str, name: &str, f: impl FnOnce() -> Outcome) {
        if !self.only.is_empty() && !self.only.iter().any(|o| o == id) {
            return;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (ok, detail) = match outcome {
            Ok((ok, d)) => (ok, d),
            Err(e) => (false, format!("error: {e}")),
        };
        if ok {
            self.pass += 1;
        } else {
            self.fail += 1;
        }
        println!("{} [{id}] {name} ({secs:.1}s): {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

fn info(line: String) { println!("      {line}"); }

fn infidelity_vs(state: &[C64], target: &[C64]) -> f64 { 1.0 - overlap2(state, target) }

// 1 -------------------------------------------------------------------------

fn single_qubit() -> Outcome {
    let (hx, hz) = (2.0, 1.0);
    let spec = IsingPathSpec { n: 1, j: 0.0, h_x: hx, h_z: hz, longitudinal: Longitudinal::Ramped };
    let path = IsingPath::new(spec).map_err(err)?;
    let ansatz = AnsatzSpec::new(AnsatzMode::Wnc, 1);
    let mut worst_coef = 0.0_f64;
    for k in 0..20 {
        let s = k as f64 / 19.0;
        let opt = optimize_global(&path, s, &ansatz).map_err(err)?;
        let a = dense_sum(&opt.operator().map_err(err)?);
        let y_coef = hs(&sy(), &a).re;
        let want = hx * hz / (2.0 * ((1.0 - s).powi(2) * hz * hz + s * s * hx * hx));
        worst_coef = worst_coef.max((y_coef - want).abs());
    }
    let (h1, _) = ising_dense(1, 0.0, hx, hz, true, 1.0);
    let (_, _, target) = ground(&h1);
    let mut worst_inf = 0.0_f64;
    let mut per_t = Vec::new();
    for t in [0.1, 0.5, 2.0] {
        let cfg = EvolutionConfig::new(Driver::Cd(CdSpec::wnc(1)), t).with_dt(t / 1000.0);
        let r = evolve(&path, &cfg).map_err(err)?;
        let inf = infidelity_vs(r.final_state.amplitudes(), &target);
        per_t.push(format!("T={t}: {inf:.2e}"));
        worst_inf = worst_inf.max(inf);
    }
    Ok((
        worst_coef < 1e-10 && worst_inf < 1e-8,
        format!("max |coef - formula| = {worst_coef:.2e} (tol 1e-10); 1-F {} (tol 1e-8)", per_t.join(", ")),
    ))
}

// 2 -------------------------------------------------------------------------

fn exact_agp_oracle() -> Outcome {
    let path = IsingPath::new(IsingPathSpec::new(3)).map_err(err)?;
    let (h1, _) = ising_dense(3, 1.0, 2.0, 1.0, false, 1.0);
    let (_, _, target) = ground(&h1);
    let run = |cfg: EvolutionConfig| -> Result<f64, String> {
        let r = evolve(&path, &cfg).map_err(err)?;
        Ok(infidelity_vs(r.final_state.amplitudes(), &target))
    };
    let base = EvolutionConfig::new(Driver::Cd(CdSpec::exact()), 0.5);
    let mid = run(base.clone())?;
    let magnus = run(base.clone().with_integrator(Integrator::Magnus4))?;
    let fine = run(base.clone().with_dt(0.0125))?;
    info(format!("exact AGP, T=0.5: magnus4 dt=0.05 1-F = {magnus:.2e}; midpoint dt=0.0125 1-F = {fine:.2e}"));
    Ok((mid < 1e-6, format!("midpoint dt=0.05: 1-F = {mid:.2e} (tol 1e-6)")))
}

// 3 -------------------------------------------------------------------------

fn frustration_free() -> Outcome {
    let mut worst_energy = 0.0_f64;
    let mut worst_state = 0.0_f64;
    let mut worst_overlap = 0.0_f64;
    let mut min_gap = f64::INFINITY;
    for n_p in [3, 4, 5] {
        for g in [-0.13085, -0.50465] {
            let spec = MpsPathSpec::new(n_p, g);
            for s in [0.0, 0.25, 0.5, 0.75, 1.0] {
                let psi = mps_contract(&mps_tensors(g), n_p, s);
                let lib = mps_state(&spec, s).map_err(err)?;
                worst_state = worst_state.max(1.0 - overlap2(&psi, lib.amplitudes()));
                let terms = mps_parent_terms(&spec, s).map_err(err)?;
                let mut e = 0.0;
                for t in terms.terms() {
                    let hpsi = dense(t, n_p) * DMatrix::from_column_slice(psi.len(), 1, &psi);
                    e += psi.iter().zip(hpsi.iter()).map(|(a, b)| (a.conj() * b).re).sum::<f64>();
                }
                worst_energy = worst_energy.max(e.abs());
                if n_p <= 4 {
                    let (e0, e1, v) = ground(&dense_sum(&terms));
                    worst_energy = worst_energy.max(e0.abs());
                    min_gap = min_gap.min(e1);
                    worst_overlap = worst_overlap.max(1.0 - overlap2(&v, &psi));
                }
            }
        }
    }
    Ok((
        worst_energy < 1e-10 && worst_overlap <= 1e-10 && min_gap > 1e-6 && worst_state < 1e-12,
        format!(
            "max |<H>| = {worst_energy:.2e} (tol 1e-10); min second eigenvalue {min_gap:.3e}; \
             max 1-overlap ground/MPS = {worst_overlap:.2e} (tol 1e-10); library vs contraction 1-overlap {worst_state:.1e}"
        ),
    ))
}

// 4 -------------------------------------------------------------------------

fn nested_dense(h: &DMatrix<C64>, dh: &DMatrix<C64>, k: usize) -> DMatrix<C64> {
    let mut x = dh.clone();
    for _ in 0..(2 * k - 1) {
        x = comm(h, &x);
    }
    x * c(0.0, 1.0)
}

fn nc_grouping() -> Outcome {
    let n = 4;
    let path = IsingPath::new(IsingPathSpec::new(n)).map_err(err)?;
    let mut worst = 0.0_f64;
    for s in [0.3, 0.8] {
        let (hd, dhd) = ising_dense(n, 1.0, 2.0, 1.0, false, s);
        let h = path.terms(s).map_err(err)?;
        let dh = path.dterms(s).map_err(err)?;
        let wnc = enumerate_terms(&h, &dh, 2, DEFAULT_WINDOW_CAP).map_err(err)?;
        let nc = nc_terms(&h, &dh, 2, DEFAULT_WINDOW_CAP).map_err(err)?;
        let nc_groups = nc.group_operators().map_err(err)?;
        for k in 1..=2 {
            let oracle = nested_dense(&hd, &dhd, k);
            let mut sum = DMatrix::zeros(1 << n, 1 << n);
            for t in wnc.terms().iter().filter(|t| t.order() == k) {
                sum += dense(t.operator(), n);
            }
            worst = worst.max(max_diff(&sum, &oracle));
            worst = worst.max(max_diff(&dense_sum(&nc_groups[k - 1]), &oracle));
        }
    }
    Ok((worst < 1e-9, format!("max entry deviation {worst:.2e} over k in {{1,2}}, two s values (tol 1e-9)")))
}

// 5 -------------------------------------------------------------------------

/// Gram matrix and right-hand side from full-space traces.
fn dense_gram(
    set: &cdforge::ansatz::AnsatzTermSet,
    h: &DMatrix<C64>,
    dh: &DMatrix<C64>,
) -> (DMatrix<f64>, Vec<f64>) {
    let n = set.n_sites();
    let dim = h.nrows();
    let mut groups = vec![DMatrix::<C64>::zeros(dim, dim); set.group_count()];
    for (t, &g) in set.terms().iter().zip(set.tying()) {
        groups[g] += dense(t.operator(), n);
    }
    let cs: Vec<DMatrix<C64>> = groups.iter().map(|a| (a * h - h * a) * c(0.0, 1.0)).collect();
    let m = cs.len();
    let g = DMatrix::from_fn(m, m, |i, j| hs(&cs[i], &cs[j]).re);
    let b = cs.iter().map(|ci| -hs(ci, dh).re).collect();
    (g, b)
}

fn gram_deviation(set: &cdforge::ansatz::AnsatzTermSet, h: &OperatorSum, dh: &OperatorSum, hd: &DMatrix<C64>, dhd: &DMatrix<C64>) -> Result<(f64, f64), String> {
    let gram = build_gram(set, h, dh).map_err(err)?;
    let (g, b) = dense_gram(set, hd, dhd);
    let dg = (gram.g() - &g).amax();
    let db = gram.b().iter().zip(&b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
    Ok((dg.max(db), g.amax().max(b.iter().fold(0.0_f64, |m, x| m.max(x.abs())))))
}

fn psd_margin(g: &DMatrix<f64>) -> (f64, f64) {
    let asym = (g - g.transpose()).amax() / g.amax().max(1e-300);
    let eig = SymmetricEigen::new(g.clone()).eigenvalues;
    (asym, eig.min() / eig.max().max(1e-300))
}

fn gram_oracle() -> Outcome {
    let mut worst = 0.0_f64;
    let mut scale = 0.0_f64;
    let ising = IsingPath::new(IsingPathSpec::new(4)).map_err(err)?;
    for s in [0.3, 0.7] {
        let (hd, dhd) = ising_dense(4, 1.0, 2.0, 1.0, false, s);
        let h = ising.terms(s).map_err(err)?;
        let dh = ising.dterms(s).map_err(err)?;
        for (mode, order) in [(AnsatzMode::Wnc, 1), (AnsatzMode::Wnc, 2), (AnsatzMode::Nc, 2)] {
            let set = AnsatzSpec::new(mode, order).build(&h, &dh).map_err(err)?;
            let (d, sc) = gram_deviation(&set, &h, &dh, &hd, &dhd)?;
            worst = worst.max(d);
            scale = scale.max(sc);
        }
    }
    for n_p in [3, 4] {
        let path = MpsPath::new(MpsPathSpec::new(n_p, -0.13085)).map_err(err)?;
        let s = 0.5;
        let h = path.terms(s).map_err(err)?;
        let dh = path.dterms(s).map_err(err)?;
        let (hd, dhd) = (dense_sum(&h), dense_sum(&dh));
        for (mode, order) in [(AnsatzMode::Wnc, 1), (AnsatzMode::Nc, 2)] {
            let set = AnsatzSpec::new(mode, order).build(&h, &dh).map_err(err)?;
            let (d, sc) = gram_deviation(&set, &h, &dh, &hd, &dhd)?;
            worst = worst.max(d);
            scale = scale.max(sc);
        }
    }
    // symmetric PSD on the benchmark systems
    let mut worst_asym = 0.0_f64;
    let mut worst_ratio = f64::INFINITY;
    let mut systems = 0;
    let big_ising = IsingPath::new(IsingPathSpec::new(15)).map_err(err)?;
    let big_mps = MpsPath::new(MpsPathSpec::new(6, g_of_xi(3.8).map_err(err)?)).map_err(err)?;
    let cases: [(&dyn HamiltonianPath, Vec<(AnsatzMode, usize)>); 2] = [
        (&big_ising, vec![(AnsatzMode::Wnc, 1), (AnsatzMode::Nc, 1), (AnsatzMode::Nc, 2), (AnsatzMode::Nc, 3)]),
        (&big_mps, vec![(AnsatzMode::Wnc, 1), (AnsatzMode::Nc, 1), (AnsatzMode::Nc, 2)]),
    ];
    for (path, specs) in cases {
        for s in [0.25, 0.5, 0.75] {
            let h = path.terms(s).map_err(err)?;
            let dh = path.dterms(s).map_err(err)?;
            for &(mode, order) in &specs {
                let set = AnsatzSpec::new(mode, order).build(&h, &dh).map_err(err)?;
                let gram = build_gram(&set, &h, &dh).map_err(err)?;
                let (asym, ratio) = psd_margin(gram.g());
                worst_asym = worst_asym.max(asym);
                worst_ratio = worst_ratio.min(ratio);
                systems += 1;
            }
        }
    }
    Ok((
        worst <= 1e-10 * scale.max(1.0) && worst_asym <= 1e-10 && worst_ratio >= -1e-10,
        format!(
            "max |windowed - dense| = {worst:.2e} = {:.1e} of the largest entry {scale:.2e} (tol 1e-10 relative); \
             {systems} benchmark systems: max relative asymmetry {worst_asym:.1e}, min lambda/lambda_max {worst_ratio:.2e}",
            worst / scale.max(1.0)
        ),
    ))
}

// 6 -------------------------------------------------------------------------

fn ising_end_matter() -> Outcome {
    let path = IsingPath::new(IsingPathSpec::new(15)).map_err(err)?;
    let times = [0.5, 1.0, 2.0, 4.0, 8.0];
    let local = RegionPlan::new(3, 1).map_err(err)?;
    let drivers = [
        Driver::Adiabatic,
        Driver::Cd(CdSpec::nc(1)),
        Driver::Cd(CdSpec::nc(2)),
        Driver::Cd(CdSpec::nc(3)),
        Driver::Cd(CdSpec::wnc(1)),
        Driver::Cd(CdSpec::wnc_local(1, local)),
    ];
    let mut inf = vec![[0.0; 5]; drivers.len()];
    for (d, driver) in drivers.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            inf[d][k] = 1.0 - evolve(&path, &EvolutionConfig::new(driver.clone(), t)).map_err(err)?.fidelity;
        }
        info(format!("{:<16} {}", driver.label(), inf[d].iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")));
    }
    let mut broken = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let [ad, nc1, nc2, nc3, wg, wl] = [0, 1, 2, 3, 4, 5].map(|d| inf[d][k]);
        if !(ad > nc1 && nc1 > nc2 && nc2 >= nc3) {
            broken.push(format!("T={t}: adiabatic>NC1>NC2>=NC3"));
        }
        if wg > 2.0 * nc3 {
            broken.push(format!("T={t}: WNC global <= 2 NC3"));
        }
        if (wl / wg).log10().abs() > 0.5 {
            broken.push(format!("T={t}: |log10 local/global| = {:.2}", (wl / wg).log10().abs()));
        }
    }
    let ok = broken.is_empty();
    Ok((ok, if ok { "all orderings hold at T = 0.5, 1, 2, 4, 8".into() } else { format!("violated: {}", broken.join("; ")) }))
}

// 7 -------------------------------------------------------------------------

fn mps_speedup() -> Outcome {
    let path = MpsPath::new(MpsPathSpec::new(6, g_of_xi(3.8).map_err(err)?)).map_err(err)?;
    let times = [2.0, 4.0, 6.0, 8.0];
    let drivers = [Driver::Adiabatic, Driver::Cd(CdSpec::nc(1)), Driver::Cd(CdSpec::wnc(1)), Driver::Cd(CdSpec::nc(2))];
    let mut inf = vec![[0.0; 4]; drivers.len()];
    for (d, driver) in drivers.iter().enumerate() {
        for (k, &t) in times.iter().enumerate() {
            inf[d][k] = 1.0 - evolve(&path, &EvolutionConfig::new(driver.clone(), t)).map_err(err)?.fidelity;
        }
        info(format!("{:<16} {}", driver.label(), inf[d].iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(" ")));
    }
    let mut broken = Vec::new();
    let mut wnc_beats_nc2 = 0;
    for (k, t) in times.iter().enumerate() {
        let (ad, nc1, wnc, nc2) = (inf[0][k], inf[1][k], inf[2][k], inf[3][k]);
        if !(wnc < nc1 && nc1 < ad) {
            broken.push(format!("T={t}: WNC1<NC1<adiabatic"));
        }
        if wnc <= nc2 {
            wnc_beats_nc2 += 1;
        }
    }
    let share_ok = wnc_beats_nc2 * 4 >= 3 * times.len();
    let ok = broken.is_empty() && share_ok;
    Ok((
        ok,
        format!(
            "WNC1<NC1<adiabatic {}; WNC1<=NC2 at {wnc_beats_nc2}/{} points (need >= 75%)",
            if broken.is_empty() { "at every T".to_string() } else { format!("violated: {}", broken.join("; ")) },
            times.len()
        ),
    ))
}

// 8 -------------------------------------------------------------------------

/// Cheapest CNOT count over `times` whose fidelity reaches `target`.
fn cheapest(path: &MpsPath, driver: &Driver, times: &[f64], target: &[C64], f_min: f64) -> Result<Option<(u64, f64, f64)>, String> {
    let mut best: Option<(u64, f64, f64)> = None;
    let mut rows = Vec::new();
    for &t in times {
        let (state, report) = trotter_evolve(path, &EvolutionConfig::new(driver.clone(), t), 0.05).map_err(err)?;
        let f = overlap2(state.amplitudes(), target);
        rows.push(format!("T={t}: {} CNOT F={f:.4}", report.total_cnot));
        if f >= f_min && best.is_none_or(|b| report.total_cnot < b.0) {
            best = Some((report.total_cnot, f, t));
        }
    }
    info(format!("{:<10} {}", driver.label(), rows.join(", ")));
    Ok(best)
}

fn trotter_cost_check() -> Outcome {
    let g = g_of_xi(3.8).map_err(err)?;
    let path = MpsPath::new(MpsPathSpec::new(3, g)).map_err(err)?;
    let target = mps_contract(&mps_tensors(g), 3, 1.0);
    let wnc = cheapest(&path, &Driver::Cd(CdSpec::wnc(1)), &[0.05, 0.1, 0.2, 0.3, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0], &target, 0.90)?;
    let ad = cheapest(&path, &Driver::Adiabatic, &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0], &target, 0.90)?;
    for t in [2.0, 8.0] {
        let exact = evolve(&path, &EvolutionConfig::new(Driver::Cd(CdSpec::wnc(1)), t)).map_err(err)?;
        info(format!("WNC l=1 without Trotterization, T={t}: F={:.4}", overlap2(exact.final_state.amplitudes(), &target)));
    }
    let describe = |b: Option<(u64, f64, f64)>| match b {
        Some((n, f, t)) => format!("{n} CNOT (T={t}, F={f:.4})"),
        None => "never on the grid".into(),
    };
    let ok = match (wnc, ad) {
        (Some((nw, _, _)), Some((na, _, _))) => nw <= 2000 && na >= 3 * nw,
        (Some((nw, _, _)), None) => nw <= 2000,
        _ => false,
    };
    Ok((
        ok,
        format!("F>=0.90 first reached by WNC1 at {}, adiabatic at {} (need WNC1 <= 2000 and adiabatic >= 3x)", describe(wnc), describe(ad)),
    ))
}

// 9 -------------------------------------------------------------------------

fn cnot_literals() -> Outcome {
    let got: Vec<u64> = (1..=4).map(cnot_cost).collect::<Result<_, _>>().map_err(err)?;
    Ok((got == [0, 3, 14, 61], format!("cnot_cost(1..=4) = {got:?}, expected [0, 3, 14, 61]")))
}

// 10 ------------------------------------------------------------------------

fn scaling_machinery() -> Outcome {
    // synthetic exponential data
    let mut synth_err = 0.0_f64;
    for (kappa, c0) in [(0.137, 0.021), (0.02, 0.05), (1.3, 0.0)] {
        let samples: Vec<(usize, f64)> = [6, 8, 10, 12, 14].iter().map(|&n| (n, (-kappa * n as f64 - c0).exp())).collect();
        let f = fit_scaling(&samples, 1.0).map_err(err)?;
        synth_err = synth_err.max((f.kappa - kappa).abs()).max((f.c - c0).abs()).max(f.residual);
    }
    // simulated adiabatic data
    let times = [2.0, 3.0, 4.0, 6.0, 8.0, 11.0, 16.0];
    let mut fits = Vec::new();
    let mut worst_res = 0.0_f64;
    for &t in &times {
        let mut samples = Vec::new();
        for n in [6, 8, 10, 12] {
            let path = IsingPath::new(IsingPathSpec::new(n)).map_err(err)?;
            samples.push((n, evolve(&path, &EvolutionConfig::new(Driver::Adiabatic, t)).map_err(err)?.fidelity));
        }
        let fit = fit_scaling(&samples, t).map_err(err)?;
        info(format!("T={t:<4} kappa={:.4e} c={:.4e} residual={:.2e}", fit.kappa, fit.c, fit.residual));
        worst_res = worst_res.max(fit.residual);
        fits.push(fit);
    }
    let pred = predict_tp(&fits, 14, 0.5).map_err(err)?;
    // direct search at N=14: bracket on the grid, then bisect in ln T
    let path = IsingPath::new(IsingPathSpec::new(14)).map_err(err)?;
    let fid = |t: f64| -> Result<f64, String> { Ok(evolve(&path, &EvolutionConfig::new(Driver::Adiabatic, t)).map_err(err)?.fidelity) };
    let mut bracket = None;
    let mut prev = None;
    for &t in &times {
        if fid(t)? >= 0.5 {
            bracket = prev.map(|p| (p, t));
            break;
        }
        prev = Some(t);
    }
    let Some((mut lo, mut hi)) = bracket else {
        return Ok((false, "direct search found no bracket on the time grid".into()));
    };
    while hi / lo - 1.0 > 1e-4 {
        let mid = (lo * hi).sqrt();
        if fid(mid)? >= 0.5 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let direct = (lo * hi).sqrt();
    let rel = (pred.t_p - direct).abs() / direct;
    Ok((
        synth_err < 1e-12 && worst_res < 0.05 && rel <= 0.10,
        format!(
            "synthetic max error {synth_err:.1e}; max fit residual {worst_res:.3e} (tol 0.05); \
             N=14 F=0.5: predicted T_p={:.4}, direct {direct:.4}, rel error {:.2}% (tol 10%)",
            pred.t_p,
            100.0 * rel
        ),
    ))
}

// 11 ------------------------------------------------------------------------

fn properties() -> Outcome {
    let n = 5;
    let mut r = rng(7);
    let mut worst = 0.0_f64;
    let zero = || DMatrix::<C64>::zeros(1 << n, 1 << n);
    let comm_lib = |a: &LocalOperator, b: &LocalOperator| -> Result<DMatrix<C64>, String> {
        Ok(commutator(a, b).map_err(err)?.map(|x| dense(&x, n)).unwrap_or_else(zero))
    };
    for _ in 0..30 {
        let ops: Vec<LocalOperator> = (0..3)
            .map(|_| {
                let w = random_window(&mut r, n, 3);
                random_hermitian(&mut r, w, 2)
            })
            .collect();
        let (a, b, cc) = (&ops[0], &ops[1], &ops[2]);
        // antisymmetry and agreement with the dense commutator
        let ab = comm_lib(a, b)?;
        worst = worst.max(max_diff(&ab, &(-comm_lib(b, a)?)));
        worst = worst.max(max_diff(&ab, &comm(&dense(a, n), &dense(b, n))));
        // Hermiticity of i[A, B]
        if let Some(x) = commutator(a, b).map_err(err)? {
            worst = worst.max(x.scaled(c(0.0, 1.0)).hermitian_residual());
        }
        // Jacobi
        let nest = |x: &LocalOperator, y: &LocalOperator, z: &LocalOperator| -> Result<DMatrix<C64>, String> {
            match commutator(y, z).map_err(err)? {
                Some(yz) => comm_lib(x, &yz),
                None => Ok(zero()),
            }
        };
        let jac = nest(a, b, cc)? + nest(b, cc, a)? + nest(cc, a, b)?;
        worst = worst.max(jac.iter().fold(0.0, |m, z| m.max(z.norm())));
        // inner product: linearity, conjugate symmetry, embedding invariance
        let beta = c(0.7, -1.3);
        let w = b.window().hull(&cc.window());
        let mut mix = embed(b, w).map_err(err)?.scaled(beta);
        mix.add_assign_embedded(cc, c(1.0, 0.0)).map_err(err)?;
        let lhs = hs_inner(a, &mix).map_err(err)?;
        let rhs = beta * hs_inner(a, b).map_err(err)? + hs_inner(a, cc).map_err(err)?;
        worst = worst.max((lhs - rhs).norm());
        worst = worst.max((hs_inner(a, b).map_err(err)? - hs_inner(b, a).map_err(err)?.conj()).norm());
        let full = SiteWindow::new(0, n).map_err(err)?;
        let e = hs_inner(&embed(a, full).map_err(err)?, &embed(b, full).map_err(err)?).map_err(err)?;
        worst = worst.max((e - hs_inner(a, b).map_err(err)?).norm());
    }
    // schedules
    let mut schedule_ok = true;
    for kind in [ScheduleKind::Sin2, ScheduleKind::Sin2Sin2] {
        for t in [0.1, 1.0, 7.5, 40.0] {
            let plan = SchedulePlan::new(kind, t).map_err(err)?;
            schedule_ok &= plan.eval(0.0).map_err(err)? == (0.0, 0.0) && plan.eval(t).map_err(err)? == (1.0, 0.0);
            let mut prev = 0.0;
            for k in 1..=100 {
                let (s, ds) = plan.eval(t * k as f64 / 100.0).map_err(err)?;
                schedule_ok &= s >= prev && ds >= 0.0;
                prev = s;
            }
        }
    }
    // determinism: the same config twice gives byte-identical outputs
    let mut cfg = ExperimentConfig::new(Experiment::IsingBench(Sweep {
        path: PathFamily::Ising(Default::default()),
        sizes: vec![4, 5],
        total_times: vec![0.5, 1.0],
        drivers: vec![Driver::Adiabatic, Driver::Cd(CdSpec::wnc(1)), Driver::Cd(CdSpec::nc(2))],
    }));
    cfg.workers = 2;
    let dirs = [tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?];
    let mut files = Vec::new();
    for d in &dirs {
        let res = run(&cfg).map_err(err)?;
        write_outputs(&res, d.path()).map_err(err)?;
        let mut names: Vec<_> = std::fs::read_dir(d.path()).map_err(err)?.map(|e| e.map(|e| e.file_name())).collect::<Result<_, _>>().map_err(err)?;
        names.sort();
        let bytes: Vec<Vec<u8>> = names.iter().map(|f| std::fs::read(d.path().join(f))).collect::<Result<_, _>>().map_err(err)?;
        files.push((names, bytes));
    }
    let identical = files[0] == files[1];
    Ok((
        worst < 1e-11 && schedule_ok && identical,
        format!(
            "algebra max deviation {worst:.1e} (tol 1e-11); schedule invariants {}; reruns byte-identical: {identical} ({} files)",
            if schedule_ok { "hold" } else { "broken" },
            files[0].0.len()
        ),
    ))
}

fn main() {
    let only = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut tally = Tally { pass: 0, fail: 0, only };
    tally.check("1", "single-qubit exactness", single_qubit);
    tally.check("2", "transitionless oracle with the exact AGP", exact_agp_oracle);
    tally.check("3", "frustration-free parent Hamiltonian with unique ground state", frustration_free);
    tally.check("4", "grouped nested commutators equal dense ad_H powers", nc_grouping);
    tally.check("5", "Gram system equals dense traces; symmetric PSD", gram_oracle);
    tally.check("6", "Ising N=15 infidelity orderings", ising_end_matter);
    tally.check("7", "MPS N_p=6 speedup ordering", mps_speedup);
    tally.check("8", "Trotter CNOT budget", trotter_cost_check);
    tally.check("9", "CNOT formula", cnot_literals);
    tally.check("10", "scaling fits and T_p prediction", scaling_machinery);
    tally.check("11", "property suites and determinism", properties);
    println!("acceptance: {} passed, {} failed", tally.pass, tally.fail);
}
