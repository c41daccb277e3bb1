use num_complex::Complex64 as C64;

use crate::error::{domain, CdError, CdResult};
use crate::linalg;

/// Amplitudes of a pure state on `n_sites` sites of dimension `local_dim`,
/// site 0 most significant.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<C64>,
    local_dim: usize,
    n_sites: usize,
}

impl StateVector {
    pub fn new(amplitudes: Vec<C64>, local_dim: usize, n_sites: usize) -> CdResult<Self> {
        let dim = u32::try_from(n_sites)
            .ok()
            .and_then(|n| local_dim.checked_pow(n))
            .ok_or_else(|| CdError::Resource(format!("{local_dim}^{n_sites} overflows")))?;
        if amplitudes.len() != dim {
            return domain(format!("expected {dim} amplitudes, got {}", amplitudes.len()));
        }
        Ok(Self { amplitudes, local_dim, n_sites })
    }

    pub fn basis(index: usize, local_dim: usize, n_sites: usize) -> CdResult<Self> {
        let dim = local_dim.pow(n_sites as u32);
        if index >= dim {
            return domain(format!("basis index {index} out of range {dim}"));
        }
        let mut amps = vec![C64::new(0.0, 0.0); dim];
        amps[index] = C64::new(1.0, 0.0);
        Self::new(amps, local_dim, n_sites)
    }

    pub fn amplitudes(&self) -> &[C64] { &self.amplitudes }

    pub fn into_amplitudes(self) -> Vec<C64> { self.amplitudes }

    pub fn local_dim(&self) -> usize { self.local_dim }

    pub fn n_sites(&self) -> usize { self.n_sites }

    pub fn dim(&self) -> usize { self.amplitudes.len() }

    pub fn norm(&self) -> f64 { linalg::norm(&self.amplitudes) }

    pub fn normalize(&mut self) -> CdResult<f64> {
        let n = self.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(CdError::Singularity(format!("cannot normalize state with norm {n}")));
        }
        for z in self.amplitudes.iter_mut() {
            *z /= n;
        }
        Ok(n)
    }

    pub fn inner(&self, other: &StateVector) -> CdResult<C64> {
        if self.dim() != other.dim() {
            return domain(format!("state dimensions differ: {} vs {}", self.dim(), other.dim()));
        }
        Ok(linalg::dot(&self.amplitudes, &other.amplitudes))
    }
}

/// `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> CdResult<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn self_fidelity_and_orthogonality() {
        let a = StateVector::basis(0, 2, 3).unwrap();
        let b = StateVector::basis(5, 2, 3).unwrap();
        assert_eq!(fidelity(&a, &a).unwrap(), 1.0);
        assert_eq!(fidelity(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let a = StateVector::basis(0, 2, 3).unwrap();
        let b = StateVector::basis(0, 2, 2).unwrap();
        assert!(fidelity(&a, &b).is_err());
        assert!(StateVector::new(vec![C64::new(1.0, 0.0); 3], 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn phase_invariance(theta in 0.0..std::f64::consts::TAU, re in prop::collection::vec(-1.0..1.0f64, 8), im in prop::collection::vec(-1.0..1.0f64, 8)) {
            let amps: Vec<C64> = re.iter().zip(&im).map(|(&r, &i)| C64::new(r, i)).collect();
            let mut psi = StateVector::new(amps, 2, 3).unwrap();
            prop_assume!(psi.norm() > 1e-3);
            psi.normalize().unwrap();
            prop_assert!((psi.norm() - 1.0).abs() < 1e-12);
            let ph = C64::from_polar(1.0, theta);
            let rotated = StateVector::new(psi.amplitudes().iter().map(|z| z * ph).collect(), 2, 3).unwrap();
            prop_assert!((fidelity(&rotated, &psi).unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
