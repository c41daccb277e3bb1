//! Variational coefficients from the Hilbert–Schmidt action
//! `S(α) = ‖∂H + i[A(α), H]‖²`, globally or by averaging over local regions.

use std::collections::HashMap;

use log::{debug, warn};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::ansatz::{ad, assemble, enumerate_terms, nc_terms, AnsatzMode, AnsatzTermSet, TermOrigin, DEFAULT_WINDOW_CAP};
use crate::error::{domain, CdError, CdResult};
use crate::operator::{OperatorSum, SiteWindow};
use crate::paths::HamiltonianPath;

pub const DEFAULT_RCOND: f64 = 1e-10;

/// `G α = b` in normalized-trace units, with `G_{gg'} = ⟨C_g, C_g'⟩`,
/// `b_g = −⟨C_g, ∂H⟩` and `C_g = i[A_g, H]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GramSystem {
    g: DMatrix<f64>,
    b: DVector<f64>,
    dh_norm2: f64,
    rcond: f64,
}

impl GramSystem {
    /// Checks symmetry and positive semidefiniteness within `1e-10` relative.
    pub fn new(g: DMatrix<f64>, b: DVector<f64>, dh_norm2: f64, rcond: f64) -> CdResult<Self> {
        let n = b.len();
        if g.nrows() != n || g.ncols() != n {
            return domain(format!("G is {}x{} but b has {n} entries", g.nrows(), g.ncols()));
        }
        let scale = g.amax();
        let asym = (&g - g.transpose()).amax();
        if asym > 1e-10 * scale {
            return domain(format!("G is not symmetric (residual {asym:e})"));
        }
        if n > 0 {
            let eig = SymmetricEigen::new(g.clone()).eigenvalues;
            let (lo, hi) = (eig.min(), eig.max());
            if lo < -1e-10 * hi.max(0.0) - 1e-300 {
                return domain(format!("G is not positive semidefinite (λ_min = {lo:e}, λ_max = {hi:e})"));
            }
        }
        Ok(Self { g, b, dh_norm2, rcond })
    }

    pub fn g(&self) -> &DMatrix<f64> { &self.g }

    pub fn b(&self) -> &DVector<f64> { &self.b }

    pub fn dh_norm2(&self) -> f64 { self.dh_norm2 }

    pub fn rcond(&self) -> f64 { self.rcond }

    pub fn with_rcond(mut self, rcond: f64) -> Self {
        self.rcond = rcond;
        self
    }

    pub fn len(&self) -> usize { self.b.len() }

    pub fn is_empty(&self) -> bool { self.b.is_empty() }
}

fn real_part(z: C64, scale: f64, what: &str) -> CdResult<f64> {
    if z.im.abs() > 1e-10 * scale.max(1.0) {
        return Err(CdError::Structural(format!("{what} has imaginary part {:e}", z.im)));
    }
    Ok(z.re)
}

/// `C_g = i[A_g, H]` for every coefficient group, merged by window.
pub fn group_commutators(set: &AnsatzTermSet, h: &OperatorSum) -> CdResult<Vec<OperatorSum>> {
    let h = h.merged_by_window();
    set.group_operators()?
        .iter()
        .map(|a| {
            let mut c = ad(&h, a)?;
            c.scale_mut(C64::new(0.0, -1.0));
            Ok(c)
        })
        .collect()
}

pub fn build_gram(set: &AnsatzTermSet, h: &OperatorSum, dh: &OperatorSum) -> CdResult<GramSystem> {
    for (name, sum) in [("H", h), ("∂H", dh)] {
        if sum.n_sites() != set.n_sites() || sum.local_dim() != set.local_dim() {
            return domain(format!(
                "{name} is on {} sites (d={}) but the ansatz on {} (d={})",
                sum.n_sites(),
                sum.local_dim(),
                set.n_sites(),
                set.local_dim()
            ));
        }
    }
    let dh = dh.merged_by_window();
    let c = group_commutators(set, h)?;
    let n = c.len();
    let dh_norm2 = dh.norm2()?;
    let mut g = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let norms: Vec<f64> = c.iter().map(|ci| ci.norm2()).collect::<CdResult<_>>()?;
    for i in 0..n {
        g[(i, i)] = norms[i];
        for j in (i + 1)..n {
            let v = real_part(c[i].inner(&c[j])?, (norms[i] * norms[j]).sqrt(), "G entry")?;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
        b[i] = -real_part(c[i].inner(&dh)?, (norms[i] * dh_norm2).sqrt(), "b entry")?;
    }
    GramSystem::new(g, b, dh_norm2, DEFAULT_RCOND)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub alpha: Vec<f64>,
    /// `‖Gα − b‖₂`
    pub residual: f64,
    /// eigenvalues of `G` kept above the cutoff
    pub rank: usize,
}

/// Minimum-norm least-squares solution of `Gα = b`, discarding eigenvalues
/// below `rcond·λ_max`.
pub fn solve(gram: &GramSystem) -> CdResult<Solution> {
    let n = gram.len();
    if n == 0 {
        return Ok(Solution { alpha: Vec::new(), residual: 0.0, rank: 0 });
    }
    let eig = SymmetricEigen::new(gram.g.clone());
    let lmax = eig.eigenvalues.max().max(0.0);
    let cutoff = gram.rcond * lmax;
    let mut alpha = DVector::<f64>::zeros(n);
    let mut rank = 0;
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam > cutoff && lam > 0.0 {
            let v = eig.eigenvectors.column(k);
            alpha += v * (v.dot(&gram.b) / lam);
            rank += 1;
        }
    }
    let b_norm = gram.b.norm();
    if rank == 0 && b_norm > 0.0 {
        return Err(CdError::DegenerateSystem { b_norm });
    }
    let residual = (&gram.g * &alpha - &gram.b).norm();
    Ok(Solution { alpha: alpha.iter().copied().collect(), residual, rank })
}

/// `S(α) = ‖∂H‖² − 2αᵀb + αᵀGα`.
pub fn action_value(gram: &GramSystem, alpha: &[f64]) -> CdResult<f64> {
    if alpha.len() != gram.len() {
        return domain(format!("expected {} coefficients, got {}", gram.len(), alpha.len()));
    }
    let a = DVector::from_column_slice(alpha);
    Ok(gram.dh_norm2 - 2.0 * a.dot(&gram.b) + a.dot(&(&gram.g * &a)))
}

/// `S(α)` evaluated directly as `‖∂H + i[A(α), H]‖²`.
pub fn action_direct(set: &AnsatzTermSet, alpha: &[f64], h: &OperatorSum, dh: &OperatorSum) -> CdResult<f64> {
    let a = assemble(set, alpha)?.merged_by_window();
    let mut r = ad(&h.merged_by_window(), &a)?.scaled(C64::new(0.0, -1.0));
    r.extend(dh)?;
    r.merged_by_window().norm2()
}

/// Contiguous regions of `window` sites starting every `stride` sites.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionPlan {
    #[serde(default = "default_region_window")]
    pub window: usize,
    #[serde(default = "default_region_stride")]
    pub stride: usize,
}

fn default_region_window() -> usize { 3 }
fn default_region_stride() -> usize { 1 }

impl Default for RegionPlan {
    fn default() -> Self { Self { window: default_region_window(), stride: default_region_stride() } }
}

impl RegionPlan {
    pub fn new(window: usize, stride: usize) -> CdResult<Self> {
        if window == 0 || stride == 0 {
            return domain(format!("region window {window} and stride {stride} must be positive"));
        }
        Ok(Self { window, stride })
    }

    /// Regions covering `[0, n_sites)`; the last one is truncated at the chain end.
    pub fn regions(&self, n_sites: usize) -> CdResult<Vec<SiteWindow>> {
        if self.window == 0 || self.stride == 0 {
            return domain("region window and stride must be positive");
        }
        if self.stride > self.window {
            return domain(format!("stride {} leaves gaps between regions of width {}", self.stride, self.window));
        }
        let mut out = Vec::new();
        let mut lo = 0;
        loop {
            let hi = (lo + self.window).min(n_sites);
            out.push(SiteWindow::new(lo, hi)?);
            if hi == n_sites {
                break;
            }
            lo += self.stride;
        }
        Ok(out)
    }
}

/// Which ansatz to build and how large its terms may get.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnsatzSpec {
    pub mode: AnsatzMode,
    pub order: usize,
    #[serde(default = "default_window_cap")]
    pub window_cap: usize,
}

fn default_window_cap() -> usize { DEFAULT_WINDOW_CAP }

impl AnsatzSpec {
    pub fn new(mode: AnsatzMode, order: usize) -> Self { Self { mode, order, window_cap: DEFAULT_WINDOW_CAP } }

    pub fn build(&self, h: &OperatorSum, dh: &OperatorSum) -> CdResult<AnsatzTermSet> {
        match self.mode {
            AnsatzMode::Wnc => enumerate_terms(h, dh, self.order, self.window_cap),
            AnsatzMode::Nc => nc_terms(h, dh, self.order, self.window_cap),
        }
    }
}

/// Optimized coefficients together with the term set they refer to.
#[derive(Clone, Debug)]
pub struct Optimized {
    pub set: AnsatzTermSet,
    pub alpha: Vec<f64>,
    /// `S(α)` over the whole chain
    pub action: f64,
    /// `S(0) = ‖∂H‖²`
    pub action_zero: f64,
}

impl Optimized {
    pub fn operator(&self) -> CdResult<OperatorSum> { assemble(&self.set, &self.alpha) }
}

/// One Gram solve over the whole chain.
pub fn optimize_global_terms(h: &OperatorSum, dh: &OperatorSum, spec: &AnsatzSpec) -> CdResult<Optimized> {
    let set = spec.build(h, dh)?;
    let gram = build_gram(&set, h, dh)?;
    let sol = solve(&gram)?;
    debug!("global solve: {} groups, rank {}, residual {:e}", gram.len(), sol.rank, sol.residual);
    let action = action_value(&gram, &sol.alpha)?;
    Ok(Optimized { set, action, action_zero: gram.dh_norm2(), alpha: sol.alpha })
}

pub fn optimize_global(path: &dyn HamiltonianPath, s: f64, spec: &AnsatzSpec) -> CdResult<Optimized> {
    optimize_global_terms(&path.terms(s)?, &path.dterms(s)?, spec)
}

/// Terms of `sum` whose window lies inside `region`, with their indices.
fn restrict(sum: &OperatorSum, region: SiteWindow) -> CdResult<(OperatorSum, Vec<usize>)> {
    let mut out = OperatorSum::new(sum.n_sites(), sum.local_dim());
    let mut idx = Vec::new();
    for (j, t) in sum.terms().iter().enumerate() {
        if region.contains(&t.window()) {
            out.push(t.clone())?;
            idx.push(j);
        }
    }
    Ok((out, idx))
}

/// WNC coefficients from independent solves on each region, averaged where
/// regions share a term.
pub fn optimize_local_terms(h: &OperatorSum, dh: &OperatorSum, spec: &AnsatzSpec, plan: &RegionPlan) -> CdResult<Optimized> {
    if spec.mode != AnsatzMode::Wnc {
        return domain("local optimization assigns one coefficient per term and needs the WNC ansatz");
    }
    if h.len() != dh.len() {
        return Err(CdError::Structural(format!("{} terms in H but {} in ∂H", h.len(), dh.len())));
    }
    let set = spec.build(h, dh)?;
    let key_of: HashMap<&TermOrigin, usize> = set.terms().iter().enumerate().map(|(i, t)| (t.origin(), i)).collect();
    let mut sum = vec![0.0; set.group_count()];
    let mut count = vec![0usize; set.group_count()];
    for region in plan.regions(h.n_sites())? {
        let (h_b, idx) = restrict(h, region)?;
        let dh_b = OperatorSum::from_terms(dh.n_sites(), dh.local_dim(), idx.iter().map(|&j| dh.terms()[j].clone()).collect())?;
        let local = spec.build(&h_b, &dh_b)?;
        if local.is_empty() {
            warn!("region {region} supports no ansatz terms; skipped");
            continue;
        }
        let sol = solve(&build_gram(&local, &h_b, &dh_b)?)?;
        for (t, a) in local.terms().iter().zip(&sol.alpha) {
            let TermOrigin::Tuple(tuple) = t.origin() else { unreachable!("WNC terms carry index tuples") };
            let global: Vec<usize> = tuple.iter().map(|&j| idx[j]).collect();
            match key_of.get(&TermOrigin::Tuple(global)) {
                Some(&g) => {
                    sum[g] += a;
                    count[g] += 1;
                }
                None => debug!("region {region}: term {tuple:?} has no global counterpart"),
            }
        }
    }
    let unassigned = count.iter().filter(|&&c| c == 0).count();
    if unassigned > 0 {
        warn!("{unassigned} terms lie in no region and keep coefficient 0");
    }
    let alpha: Vec<f64> = sum.iter().zip(&count).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let action = action_direct(&set, &alpha, h, dh)?;
    let action_zero = dh.merged_by_window().norm2()?;
    Ok(Optimized { set, alpha, action, action_zero })
}

pub fn optimize_local(path: &dyn HamiltonianPath, s: f64, spec: &AnsatzSpec, plan: &RegionPlan) -> CdResult<Optimized> {
    optimize_local_terms(&path.terms(s)?, &path.dterms(s)?, spec, plan)
}
