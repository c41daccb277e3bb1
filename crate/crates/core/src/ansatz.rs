//! Nested-commutator ansätze for the adiabatic gauge potential.
//!
//! A WNC term of order `k` is `i·[h_{j_{2k-1}}, [⋯, [h_{j_1}, ∂h_{j_0}]]]`
//! with `2k−1` nested commutators, each taken only with a Hamiltonian term
//! overlapping the accumulated window. The NC ansatz ties all order-`k` terms
//! to one coefficient; summing them gives `i·ad_H^{2k−1}(∂H)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, CdError, CdResult};
use crate::linalg::eigh;
use crate::operator::{commutator, LocalOperator, OperatorSum, SiteWindow};

/// Default bound on the window width of any ansatz term.
pub const DEFAULT_WINDOW_CAP: usize = 6;

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnsatzMode {
    /// one coefficient per order
    Nc,
    /// one coefficient per term
    Wnc,
}

/// Where a term came from.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TermOrigin {
    /// Index tuple `(j_0, j_1, …, j_{2k−1})` into the path term lists.
    Tuple(Vec<usize>),
    /// All order-`k` nested commutators supported exactly on `window`, summed.
    Merged { order: usize, window: SiteWindow },
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzTerm {
    operator: LocalOperator,
    order: usize,
    origin: TermOrigin,
}

impl AnsatzTerm {
    pub fn operator(&self) -> &LocalOperator { &self.operator }

    pub fn order(&self) -> usize { self.order }

    pub fn origin(&self) -> &TermOrigin { &self.origin }

    pub fn window(&self) -> SiteWindow { self.operator.window() }
}

/// Terms plus the map from term index to coefficient group.
#[derive(Clone, Debug, PartialEq)]
pub struct AnsatzTermSet {
    terms: Vec<AnsatzTerm>,
    tying: Vec<usize>,
    n_groups: usize,
    mode: AnsatzMode,
    max_order: usize,
    n_sites: usize,
    local_dim: usize,
}

impl AnsatzTermSet {
    pub fn terms(&self) -> &[AnsatzTerm] { &self.terms }

    /// Group id of each term.
    pub fn tying(&self) -> &[usize] { &self.tying }

    pub fn group_count(&self) -> usize { self.n_groups }

    pub fn mode(&self) -> AnsatzMode { self.mode }

    pub fn max_order(&self) -> usize { self.max_order }

    pub fn n_sites(&self) -> usize { self.n_sites }

    pub fn local_dim(&self) -> usize { self.local_dim }

    pub fn len(&self) -> usize { self.terms.len() }

    pub fn is_empty(&self) -> bool { self.terms.is_empty() }

    /// Sum of the operators in each group, merged by window.
    pub fn group_operators(&self) -> CdResult<Vec<OperatorSum>> {
        let mut groups = vec![OperatorSum::new(self.n_sites, self.local_dim); self.n_groups];
        for (t, &g) in self.terms.iter().zip(&self.tying) {
            groups[g].push(t.operator.clone())?;
        }
        Ok(groups.into_iter().map(|g| g.merged_by_window()).collect())
    }
}

fn check_inputs(h: &OperatorSum, dh: &OperatorSum, order: usize) -> CdResult<()> {
    if order == 0 {
        return domain("ansatz order must be at least 1");
    }
    if h.n_sites() != dh.n_sites() || h.local_dim() != dh.local_dim() {
        return domain(format!(
            "H on {} sites (d={}) but ∂H on {} sites (d={})",
            h.n_sites(),
            h.local_dim(),
            dh.n_sites(),
            dh.local_dim()
        ));
    }
    Ok(())
}

fn cap_check(window: SiteWindow, cap: usize) -> CdResult<()> {
    if window.width() > cap {
        return Err(CdError::Resource(format!(
            "nested commutator on {window} exceeds the window cap of {cap} sites"
        )));
    }
    Ok(())
}

/// Multiplies an anti-Hermitian nested commutator by `i`.
fn hermitian_term(op: LocalOperator) -> LocalOperator {
    op.scaled(C64::new(0.0, 1.0)).symmetrized()
}

/// WNC terms up to `order`, breadth first, in `(order, tuple)` order.
pub fn enumerate_terms(h: &OperatorSum, dh: &OperatorSum, order: usize, window_cap: usize) -> CdResult<AnsatzTermSet> {
    check_inputs(h, dh, order)?;
    let mut frontier: Vec<(Vec<usize>, LocalOperator)> = dh
        .terms()
        .iter()
        .enumerate()
        .filter(|(_, t)| t.max_norm() > 0.0)
        .map(|(j, t)| (vec![j], t.clone()))
        .collect();
    let mut terms = Vec::new();
    for level in 1..=(2 * order - 1) {
        let mut next = Vec::new();
        for (tuple, acc) in &frontier {
            for (j, hj) in h.terms().iter().enumerate() {
                if !hj.window().overlaps(&acc.window()) {
                    continue;
                }
                if let Some(c) = commutator(hj, acc)? {
                    cap_check(c.window(), window_cap)?;
                    let mut t = tuple.clone();
                    t.push(j);
                    next.push((t, c));
                }
            }
        }
        frontier = next;
        if level % 2 == 1 {
            let k = level.div_ceil(2);
            for (tuple, op) in &frontier {
                terms.push(AnsatzTerm {
                    operator: hermitian_term(op.clone()),
                    order: k,
                    origin: TermOrigin::Tuple(tuple.clone()),
                });
            }
        }
    }
    let n = terms.len();
    Ok(AnsatzTermSet {
        terms,
        tying: (0..n).collect(),
        n_groups: n,
        mode: AnsatzMode::Wnc,
        max_order: order,
        n_sites: h.n_sites(),
        local_dim: h.local_dim(),
    })
}

/// Same terms, tied into one group per order.
pub fn tie_nc(set: &AnsatzTermSet) -> CdResult<AnsatzTermSet> {
    if set.mode != AnsatzMode::Wnc {
        return domain("tie_nc expects a WNC term set");
    }
    Ok(AnsatzTermSet {
        tying: set.terms.iter().map(|t| t.order - 1).collect(),
        n_groups: set.max_order,
        mode: AnsatzMode::Nc,
        ..set.clone()
    })
}

/// NC ansatz with the order-`k` group stored as `i·ad_H^{2k−1}(∂H)` split by
/// window, rather than as the (exponentially many) individual tuples.
pub fn nc_terms(h: &OperatorSum, dh: &OperatorSum, order: usize, window_cap: usize) -> CdResult<AnsatzTermSet> {
    check_inputs(h, dh, order)?;
    let h = h.merged_by_window();
    let mut x = dh.merged_by_window();
    let mut terms = Vec::new();
    let mut tying = Vec::new();
    for level in 1..=(2 * order - 1) {
        x = ad(&h, &x)?;
        if level % 2 == 1 {
            let k = level.div_ceil(2);
            for piece in x.terms() {
                cap_check(piece.window(), window_cap)?;
                terms.push(AnsatzTerm {
                    operator: hermitian_term(piece.clone()),
                    order: k,
                    origin: TermOrigin::Merged { order: k, window: piece.window() },
                });
                tying.push(k - 1);
            }
        }
    }
    Ok(AnsatzTermSet {
        terms,
        tying,
        n_groups: order,
        mode: AnsatzMode::Nc,
        max_order: order,
        n_sites: h.n_sites(),
        local_dim: h.local_dim(),
    })
}

/// `[H, X]` for operator sums, merged by window.
pub fn ad(h: &OperatorSum, x: &OperatorSum) -> CdResult<OperatorSum> {
    let mut acc: BTreeMap<SiteWindow, LocalOperator> = BTreeMap::new();
    for p in x.terms() {
        for hj in h.terms() {
            if let Some(c) = commutator(hj, p)? {
                match acc.get_mut(&c.window()) {
                    Some(a) => a.add_assign_embedded(&c, C64::new(1.0, 0.0))?,
                    None => {
                        acc.insert(c.window(), c);
                    }
                }
            }
        }
    }
    OperatorSum::from_terms(x.n_sites(), x.local_dim(), acc.into_values().collect())
}

/// `Σ_η α_{g(η)} A_η`.
pub fn assemble(set: &AnsatzTermSet, alpha: &[f64]) -> CdResult<OperatorSum> {
    if alpha.len() != set.n_groups {
        return domain(format!("expected {} coefficients, got {}", set.n_groups, alpha.len()));
    }
    let mut out = OperatorSum::new(set.n_sites, set.local_dim);
    for (t, &g) in set.terms.iter().zip(&set.tying) {
        if alpha[g] != 0.0 {
            out.push(t.operator.scaled_real(alpha[g]))?;
        }
    }
    Ok(out)
}

/// Exact gauge potential `⟨m|A|n⟩ = i⟨m|∂H|n⟩/(E_n − E_m)`, zero on pairs
/// closer than `gap_tol`.
pub fn exact_agp(h: &DMatrix<C64>, dh: &DMatrix<C64>, gap_tol: f64) -> CdResult<DMatrix<C64>> {
    for (name, m) in [("H", h), ("∂H", dh)] {
        if !m.is_square() || m.nrows() != h.nrows() {
            return domain(format!("{name} has shape {}x{}", m.nrows(), m.ncols()));
        }
        let scale = m.iter().fold(0.0_f64, |a, z| a.max(z.norm())).max(1.0);
        let res = (m - m.adjoint()).iter().fold(0.0_f64, |a, z| a.max(z.norm()));
        if res > 1e-10 * scale {
            return domain(format!("{name} is not Hermitian (residual {res:e})"));
        }
    }
    let (e, v) = eigh(h);
    let dh_eig = v.adjoint() * dh * &v;
    let n = e.len();
    let a_eig = DMatrix::from_fn(n, n, |m, k| {
        let gap = e[k] - e[m];
        if gap.abs() > gap_tol {
            C64::new(0.0, 1.0) * dh_eig[(m, k)] / gap
        } else {
            C64::new(0.0, 0.0)
        }
    });
    let a = &v * a_eig * v.adjoint();
    Ok((&a + a.adjoint()) * C64::new(0.5, 0.0))
}
