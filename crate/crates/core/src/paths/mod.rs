//! Hamiltonian paths `H(s) = Σ_j h_j(s)` together with their initial and
//! target states.

mod ising;
mod mps;

pub use ising::{ising_dterms, ising_terms, IsingPath, IsingPathSpec, Longitudinal};
pub use mps::{g_of_xi, mps_parent_terms, mps_state, mps_tensors, xi_of_g, BoundaryVectors, MpsPath, MpsPathSpec};

use serde::{Deserialize, Serialize};

use crate::error::{CdError, CdResult};
use crate::operator::{LocalOperator, OperatorSum};
use crate::state::StateVector;

/// Finite-difference step for `∂_s h_j`.
pub const DEFAULT_DS: f64 = 0.01;

pub trait HamiltonianPath: Send + Sync {
    fn n_sites(&self) -> usize;

    fn local_dim(&self) -> usize;

    /// Physical qubits per site, used for gate counting.
    fn qubits_per_site(&self) -> usize;

    /// Local terms `h_j(s)` in canonical order.
    fn terms(&self, s: f64) -> CdResult<OperatorSum>;

    /// `∂_s h_j(s)` in the same order and on the same windows as [`terms`].
    ///
    /// [`terms`]: HamiltonianPath::terms
    fn dterms(&self, s: f64) -> CdResult<OperatorSum> {
        dterms_fd(self, s, DEFAULT_DS)
    }

    /// Ground state of `H(0)`.
    fn initial_state(&self) -> CdResult<StateVector>;

    /// Ground state of `H(1)`.
    fn target_state(&self) -> CdResult<StateVector>;
}

/// Term-wise central difference `(h_j(s+Δs) − h_j(s−Δs)) / 2Δs`.
pub fn dterms_fd<P: HamiltonianPath + ?Sized>(path: &P, s: f64, ds: f64) -> CdResult<OperatorSum> {
    if !(ds > 0.0) {
        return Err(CdError::Domain(format!("finite-difference step must be positive, got {ds}")));
    }
    let plus = path.terms(s + ds)?;
    let minus = path.terms(s - ds)?;
    if plus.len() != minus.len() {
        return Err(CdError::Structural(format!(
            "term count changes across s ± Δs: {} vs {}",
            plus.len(),
            minus.len()
        )));
    }
    let mut out = OperatorSum::new(plus.n_sites(), plus.local_dim());
    for (p, m) in plus.terms().iter().zip(minus.terms()) {
        if p.window() != m.window() {
            return Err(CdError::Structural(format!(
                "term window changes across s ± Δs: {} vs {}",
                p.window(),
                m.window()
            )));
        }
        let diff = (p.matrix() - m.matrix()) / num_complex::Complex64::new(2.0 * ds, 0.0);
        out.push(LocalOperator::new(p.window(), p.local_dim(), diff)?.symmetrized())?;
    }
    Ok(out)
}

/// Serializable choice of path, used by configs and the experiment runner.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PathSpec {
    Ising(IsingPathSpec),
    Mps(MpsPathSpec),
}

impl PathSpec {
    pub fn build(&self) -> CdResult<Box<dyn HamiltonianPath>> {
        Ok(match self {
            PathSpec::Ising(spec) => Box::new(IsingPath::new(spec.clone())?),
            PathSpec::Mps(spec) => Box::new(MpsPath::new(spec.clone())?),
        })
    }
}
