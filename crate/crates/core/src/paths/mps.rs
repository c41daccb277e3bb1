//! The D=2 MPS family with physical qudits d=4 (pairs of qubits), its
//! interpolation from entangled pairs, and the frustration-free parent
//! Hamiltonian built from kernel projectors of reduced density matrices.
//!
//! Each qudit `v` carries two virtual qubits `(α_v, β_v)`; `β_v` and
//! `α_{v+1}` start in `|Φ⁺⟩`. The two dangling virtual qubits at the chain
//! ends are fixed by boundary vectors (default `|0⟩`). The state at `s` is
//! `⊗_v Q_v(s)` applied to that virtual configuration with
//! `Q_v(s) = s·Q_v + (1−s)·𝟙` and `Q_v[i, 2α+β] = A^i_{αβ}(g)`.

use std::sync::OnceLock;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::HamiltonianPath;
use crate::error::{domain, CdError, CdResult};
use crate::linalg::eigh;
use crate::operator::{apply_local_into, LocalOperator, OperatorSum, SiteWindow, DEFAULT_DENSE_CAP};
use crate::state::StateVector;

const D_PHYS: usize = 4;
const D_BOND: usize = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryVectors {
    pub left: [f64; 2],
    pub right: [f64; 2],
}

impl Default for BoundaryVectors {
    fn default() -> Self { Self { left: [1.0, 0.0], right: [1.0, 0.0] } }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MpsPathSpec {
    /// number of qudits; the chain has `2·n_p` qubits
    pub n_p: usize,
    pub g: f64,
    #[serde(default = "default_gap_tol")]
    pub kernel_gap_tol: f64,
    #[serde(default)]
    pub boundary: BoundaryVectors,
}

fn default_gap_tol() -> f64 { 1e-8 }

impl MpsPathSpec {
    pub fn new(n_p: usize, g: f64) -> Self {
        Self { n_p, g, kernel_gap_tol: default_gap_tol(), boundary: BoundaryVectors::default() }
    }

    pub fn validate(&self) -> CdResult<()> {
        if self.n_p < 2 {
            return domain(format!("MPS path needs at least 2 qudits, got {}", self.n_p));
        }
        if !(self.g > -1.0 && self.g < 0.0) {
            return domain(format!("g must lie in (-1, 0), got {}", self.g));
        }
        if D_PHYS.checked_pow(self.n_p as u32).is_none_or(|d| d > DEFAULT_DENSE_CAP) {
            return Err(CdError::Resource(format!(
                "4^{} amplitudes exceed the dense cap {DEFAULT_DENSE_CAP}",
                self.n_p
            )));
        }
        Ok(())
    }
}

/// MPS tensors `A^i(g)` as 2×2 matrices indexed `[α][β]`.
pub fn mps_tensors(g: f64) -> [[[f64; 2]; 2]; 4] {
    [
        [[0.0, 0.0], [1.0, 1.0]],
        [[0.0, 0.0], [1.0, g]],
        [[g, g], [0.0, 0.0]],
        [[1.0, g], [0.0, 0.0]],
    ]
}

/// `Q(s) = s·Q + (1−s)·𝟙` as a 4×4 map from virtual pair `(α, β)` to qudit `i`.
fn interpolated_map(g: f64, s: f64) -> DMatrix<C64> {
    let a = mps_tensors(g);
    DMatrix::from_fn(D_PHYS, D_PHYS, |i, col| {
        let (alpha, beta) = (col / 2, col % 2);
        let id = if i == col { 1.0 - s } else { 0.0 };
        C64::new(s * a[i][alpha][beta] + id, 0.0)
    })
}

/// Correlation length `ξ = |ln((1−g)/(1+g))|⁻¹` for `g ∈ (−1, 0)`.
pub fn xi_of_g(g: f64) -> CdResult<f64> {
    if !(g > -1.0 && g < 0.0) {
        return domain(format!("g must lie in (-1, 0), got {g}"));
    }
    Ok(1.0 / ((1.0 - g) / (1.0 + g)).ln().abs())
}

/// Inverse of [`xi_of_g`] on the `g < 0` branch.
pub fn g_of_xi(xi: f64) -> CdResult<f64> {
    if !(xi > 0.0) || !xi.is_finite() {
        return domain(format!("correlation length must be positive, got {xi}"));
    }
    let r = (1.0 / xi).exp();
    Ok((1.0 - r) / (1.0 + r))
}

/// Normalized state `|ψ(s)⟩` on `n_p` qudits.
pub fn mps_state(spec: &MpsPathSpec, s: f64) -> CdResult<StateVector> {
    spec.validate()?;
    let n = spec.n_p;
    let dim = D_PHYS.pow(n as u32);
    // virtual configuration: qudit v holds (α_v, β_v) as index 2α_v + β_v
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    let bl = spec.boundary.left;
    let br = spec.boundary.right;
    // bond bits b_v = β_v = α_{v+1} for v = 0..n-2; α_0 and β_{n-1} free
    let n_bonds = n - 1;
    for bonds in 0..(1usize << n_bonds) {
        let bit = |v: usize| (bonds >> (n_bonds - 1 - v)) & 1;
        for a0 in 0..D_BOND {
            for bl_end in 0..D_BOND {
                let w = bl[a0] * br[bl_end];
                if w == 0.0 {
                    continue;
                }
                let mut index = 0;
                for v in 0..n {
                    let alpha = if v == 0 { a0 } else { bit(v - 1) };
                    let beta = if v == n - 1 { bl_end } else { bit(v) };
                    index = index * D_PHYS + 2 * alpha + beta;
                }
                amps[index] += C64::new(w, 0.0);
            }
        }
    }
    let q = LocalOperator::on_site(0, D_PHYS, interpolated_map(spec.g, s))?;
    for v in 0..n {
        let qv = LocalOperator::on_site(v, D_PHYS, q.matrix().clone())?;
        let mut out = vec![C64::new(0.0, 0.0); dim];
        apply_local_into(&qv, n, C64::new(1.0, 0.0), &amps, &mut out);
        amps = out;
    }
    let mut state = StateVector::new(amps, D_PHYS, n)?;
    let nrm = state.norm();
    if !(nrm > 1e-12) {
        return Err(CdError::Singularity(format!("state at s = {s} has norm {nrm:e}")));
    }
    state.normalize()?;
    Ok(state)
}

/// Reduced density matrix of `psi` on the qudit window `w`.
fn reduced_density(psi: &StateVector, w: SiteWindow) -> DMatrix<C64> {
    let n = psi.n_sites();
    let left = D_PHYS.pow(w.lo() as u32);
    let mid = D_PHYS.pow(w.width() as u32);
    let right = D_PHYS.pow((n - w.hi()) as u32);
    let amps = psi.amplitudes();
    let mut rho = DMatrix::<C64>::zeros(mid, mid);
    for l in 0..left {
        for a in 0..mid {
            let ra = &amps[(l * mid + a) * right..(l * mid + a + 1) * right];
            for b in 0..=a {
                let rb = &amps[(l * mid + b) * right..(l * mid + b + 1) * right];
                let v = ra.iter().zip(rb).fold(C64::new(0.0, 0.0), |acc, (x, y)| acc + x * y.conj());
                rho[(a, b)] += v;
                if a != b {
                    rho[(b, a)] += v.conj();
                }
            }
        }
    }
    rho
}

/// Projector onto the `kernel_dim` lowest eigenvectors of `rho`, with a gap
/// check against the next eigenvalue.
fn kernel_projector(rho: &DMatrix<C64>, kernel_dim: usize, gap_tol: f64) -> CdResult<DMatrix<C64>> {
    let (vals, vecs) = eigh(rho);
    if kernel_dim < vals.len() && vals[kernel_dim] - vals[kernel_dim - 1] < gap_tol {
        return Err(CdError::DegenerateKernel { kernel_dim, eigenvalues: vals });
    }
    let k = vecs.columns(0, kernel_dim);
    Ok(&k * k.adjoint())
}

/// Number of virtual bonds cut by the window `w` on an `n`-qudit chain.
fn cut_bonds(w: SiteWindow, n: usize) -> usize {
    usize::from(w.lo() > 0) + usize::from(w.hi() < n)
}

/// Parent Hamiltonian terms at `s`: boundary single-qudit kernel projectors
/// and one two-qudit kernel projector per edge, sorted by window.
pub fn mps_parent_terms(spec: &MpsPathSpec, s: f64) -> CdResult<OperatorSum> {
    let psi = mps_state(spec, s)?;
    parent_terms_of(&psi, spec.kernel_gap_tol)
}

pub(crate) fn parent_terms_of(psi: &StateVector, gap_tol: f64) -> CdResult<OperatorSum> {
    let n = psi.n_sites();
    let mut windows = vec![SiteWindow::site(0), SiteWindow::site(n - 1)];
    for v in 0..n - 1 {
        windows.push(SiteWindow::new(v, v + 2)?);
    }
    windows.sort();
    // a real state has real reduced densities and real kernel projectors;
    // the complex eigensolver leaves roundoff in the imaginary parts
    let real = psi.amplitudes().iter().all(|z| z.im == 0.0);
    let mut sum = OperatorSum::new(n, D_PHYS);
    for w in windows {
        let rho = reduced_density(psi, w);
        let rank = D_BOND.pow(cut_bonds(w, n) as u32);
        let kernel_dim = rho.nrows() - rank;
        let mut proj = kernel_projector(&rho, kernel_dim, gap_tol)?;
        if real {
            proj.iter_mut().for_each(|z| z.im = 0.0);
        }
        sum.push(LocalOperator::new(w, D_PHYS, proj)?.symmetrized())?;
    }
    Ok(sum)
}

#[derive(Debug)]
pub struct MpsPath {
    spec: MpsPathSpec,
    target: OnceLock<StateVector>,
}

impl MpsPath {
    pub fn new(spec: MpsPathSpec) -> CdResult<Self> {
        spec.validate()?;
        Ok(Self { spec, target: OnceLock::new() })
    }

    pub fn spec(&self) -> &MpsPathSpec { &self.spec }

    pub fn state(&self, s: f64) -> CdResult<StateVector> { mps_state(&self.spec, s) }
}

impl HamiltonianPath for MpsPath {
    fn n_sites(&self) -> usize { self.spec.n_p }

    fn local_dim(&self) -> usize { D_PHYS }

    fn qubits_per_site(&self) -> usize { 2 }

    fn terms(&self, s: f64) -> CdResult<OperatorSum> { mps_parent_terms(&self.spec, s) }

    fn initial_state(&self) -> CdResult<StateVector> { mps_state(&self.spec, 0.0) }

    fn target_state(&self) -> CdResult<StateVector> {
        if let Some(t) = self.target.get() {
            return Ok(t.clone());
        }
        let t = mps_state(&self.spec, 1.0)?;
        Ok(self.target.get_or_init(|| t).clone())
    }
}
