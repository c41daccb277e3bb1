use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use super::HamiltonianPath;
use crate::error::{domain, CdResult};
use crate::linalg::{self, GroundStateOptions};
use crate::operator::{pauli, LocalOperator, OperatorSum, SiteWindow};
use crate::state::StateVector;

/// What the longitudinal field does along the path.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Longitudinal {
    /// `h_z ΣZ` stays on: `H(s) = (1−s)H(0) + s·H(1)` with
    /// `H(1) = h_z ΣZ + h_x ΣX + J ΣZZ`
    #[default]
    Held,
    /// `(1−s)h_z ΣZ`, ending at the transverse-field chain `h_x ΣX + J ΣZZ`
    Ramped,
}

/// Ising chain driven from `H(0) = h_z ΣZ` by switching on `h_x ΣX + J ΣZZ`
/// linearly in `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsingPathSpec {
    pub n: usize,
    #[serde(default = "default_j")]
    pub j: f64,
    #[serde(default = "default_hx")]
    pub h_x: f64,
    #[serde(default = "default_hz")]
    pub h_z: f64,
    #[serde(default)]
    pub longitudinal: Longitudinal,
}

fn default_j() -> f64 { 1.0 }
fn default_hx() -> f64 { 2.0 }
fn default_hz() -> f64 { 1.0 }

impl IsingPathSpec {
    pub fn new(n: usize) -> Self {
        Self { n, j: default_j(), h_x: default_hx(), h_z: default_hz(), longitudinal: Longitudinal::Held }
    }

    pub fn ramped(n: usize) -> Self { Self { longitudinal: Longitudinal::Ramped, ..Self::new(n) } }

    fn z_field(&self, s: f64) -> (f64, f64) {
        match self.longitudinal {
            Longitudinal::Held => (self.h_z, 0.0),
            Longitudinal::Ramped => ((1.0 - s) * self.h_z, -self.h_z),
        }
    }
}

/// Terms of `H(s) = c(s)·ΣZ_j + s(h_x ΣX_j + J ΣZ_jZ_{j+1})` with `c = h_z`
/// (held) or `(1−s)h_z` (ramped): the `N` single-site terms first, then the
/// `N−1` bonds.
pub fn ising_terms(spec: &IsingPathSpec, s: f64) -> CdResult<OperatorSum> {
    let x = pauli::x();
    let z = pauli::z();
    let zz = z.kronecker(&z);
    let mut sum = OperatorSum::new(spec.n, 2);
    for j in 0..spec.n {
        let m = &z * C64::new(spec.z_field(s).0, 0.0) + &x * C64::new(s * spec.h_x, 0.0);
        sum.push(LocalOperator::on_site(j, 2, m)?.mark_hermitian()?)?;
    }
    for j in 0..spec.n.saturating_sub(1) {
        let m = &zz * C64::new(s * spec.j, 0.0);
        sum.push(LocalOperator::new(SiteWindow::new(j, j + 2)?, 2, m)?.mark_hermitian()?)?;
    }
    Ok(sum)
}

/// Analytic `∂_s h_j`, same layout as [`ising_terms`].
pub fn ising_dterms(spec: &IsingPathSpec) -> CdResult<OperatorSum> {
    let x = pauli::x();
    let z = pauli::z();
    let zz = z.kronecker(&z);
    let mut sum = OperatorSum::new(spec.n, 2);
    for j in 0..spec.n {
        let m = &z * C64::new(spec.z_field(0.0).1, 0.0) + &x * C64::new(spec.h_x, 0.0);
        sum.push(LocalOperator::on_site(j, 2, m)?.mark_hermitian()?)?;
    }
    for j in 0..spec.n.saturating_sub(1) {
        let m = &zz * C64::new(spec.j, 0.0);
        sum.push(LocalOperator::new(SiteWindow::new(j, j + 2)?, 2, m)?.mark_hermitian()?)?;
    }
    Ok(sum)
}

#[derive(Debug)]
pub struct IsingPath {
    spec: IsingPathSpec,
    target: OnceLock<StateVector>,
}

impl IsingPath {
    pub fn new(spec: IsingPathSpec) -> CdResult<Self> {
        if spec.n == 0 {
            return domain("Ising chain needs at least one site");
        }
        if spec.n > 26 {
            return domain(format!("Ising chain of {} sites is beyond state-vector scale", spec.n));
        }
        Ok(Self { spec, target: OnceLock::new() })
    }

    pub fn spec(&self) -> &IsingPathSpec { &self.spec }
}

impl HamiltonianPath for IsingPath {
    fn n_sites(&self) -> usize { self.spec.n }

    fn local_dim(&self) -> usize { 2 }

    fn qubits_per_site(&self) -> usize { 1 }

    fn terms(&self, s: f64) -> CdResult<OperatorSum> { ising_terms(&self.spec, s) }

    fn dterms(&self, _s: f64) -> CdResult<OperatorSum> { ising_dterms(&self.spec) }

    fn initial_state(&self) -> CdResult<StateVector> {
        // H(0) = h_z ΣZ is diagonal; Z|0> = |0>
        let dim = 1usize << self.spec.n;
        if self.spec.h_z > 0.0 {
            StateVector::basis(dim - 1, 2, self.spec.n)
        } else if self.spec.h_z < 0.0 {
            StateVector::basis(0, 2, self.spec.n)
        } else {
            domain("h_z = 0 leaves H(0) without a unique ground state")
        }
    }

    fn target_state(&self) -> CdResult<StateVector> {
        if let Some(t) = self.target.get() {
            return Ok(t.clone());
        }
        let h1 = self.terms(1.0)?.merged_by_window();
        let dim = 1usize << self.spec.n;
        let apply = |x: &[C64], y: &mut [C64]| {
            y.iter_mut().for_each(|z| *z = C64::new(0.0, 0.0));
            h1.apply_into(C64::new(1.0, 0.0), x, y);
        };
        let (_, v) = linalg::ground_state(apply, dim, &GroundStateOptions::default())?;
        let state = StateVector::new(v, 2, self.spec.n)?;
        Ok(self.target.get_or_init(|| state).clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::eigh;
    use crate::operator::materialize;
    use crate::paths::dterms_fd;

    fn kron_all(ms: &[nalgebra::DMatrix<C64>]) -> nalgebra::DMatrix<C64> {
        ms.iter().skip(1).fold(ms[0].clone(), |acc, m| acc.kronecker(m))
    }

    #[test]
    fn initial_hamiltonian_is_diagonal() {
        let h = materialize(&ising_terms(&IsingPathSpec::new(3), 0.0).unwrap()).unwrap();
        for r in 0..8 {
            for c in 0..8 {
                if r != c {
                    assert_eq!(h[(r, c)], C64::new(0.0, 0.0));
                }
            }
        }
    }

    fn two_site_dense(hz: f64) -> nalgebra::DMatrix<C64> {
        let (i, x, z) = (pauli::i2(), pauli::x(), pauli::z());
        let c = |v: f64| C64::new(v, 0.0);
        (kron_all(&[z.clone(), i.clone()]) + kron_all(&[i.clone(), z.clone()])) * c(hz)
            + (kron_all(&[x.clone(), i.clone()]) + kron_all(&[i.clone(), x.clone()])) * c(2.0)
            + kron_all(&[z.clone(), z.clone()])
    }

    #[test]
    fn final_hamiltonian_two_sites_matches_dense() {
        let h = materialize(&ising_terms(&IsingPathSpec::new(2), 1.0).unwrap()).unwrap();
        assert!((h - two_site_dense(1.0)).iter().all(|v| v.norm() < 1e-14));
        let h = materialize(&ising_terms(&IsingPathSpec::ramped(2), 1.0).unwrap()).unwrap();
        assert!((h - two_site_dense(0.0)).iter().all(|v| v.norm() < 1e-14));
    }

    #[test]
    fn half_way_terms() {
        let zz = pauli::z().kronecker(&pauli::z()) * C64::new(0.5, 0.0);
        for (spec, zc) in [(IsingPathSpec::ramped(2), 0.5), (IsingPathSpec::new(2), 1.0)] {
            let terms = ising_terms(&spec, 0.5).unwrap();
            assert_eq!(terms.len(), 3);
            let single = pauli::z() * C64::new(zc, 0.0) + pauli::x() * C64::new(1.0, 0.0);
            assert_eq!(terms.terms()[0].matrix(), &single);
            assert_eq!(terms.terms()[1].matrix(), &single);
            assert_eq!(terms.terms()[2].matrix(), &zz);
        }
    }

    #[test]
    fn interpolates_between_endpoints() {
        for spec in [IsingPathSpec::new(3), IsingPathSpec::ramped(3)] {
            let h = |s| materialize(&ising_terms(&spec, s).unwrap()).unwrap();
            let mix = h(0.0) * C64::new(0.7, 0.0) + h(1.0) * C64::new(0.3, 0.0);
            assert!((h(0.3) - mix).iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn spectrum_matches_independent_dense_build() {
        let spec = IsingPathSpec::new(3);
        let h = materialize(&ising_terms(&spec, 1.0).unwrap()).unwrap();
        let (i, x, z) = (pauli::i2(), pauli::x(), pauli::z());
        let mut oracle = nalgebra::DMatrix::<C64>::zeros(8, 8);
        for j in 0..3 {
            let mut xs = vec![i.clone(); 3];
            xs[j] = x.clone();
            oracle += kron_all(&xs) * C64::new(2.0, 0.0);
            xs[j] = z.clone();
            oracle += kron_all(&xs);
        }
        for j in 0..2 {
            let mut zz = vec![i.clone(); 3];
            zz[j] = z.clone();
            zz[j + 1] = z.clone();
            oracle += kron_all(&zz);
        }
        let (a, _) = eigh(&h);
        let (b, _) = eigh(&oracle);
        for (u, v) in a.iter().zip(&b) {
            assert!((u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn analytic_derivative_equals_finite_difference() {
        for spec in [IsingPathSpec::new(4), IsingPathSpec::ramped(4)] {
            let path = IsingPath::new(spec).unwrap();
            let fd = dterms_fd(&path, 0.37, 0.01).unwrap();
            let an = path.dterms(0.37).unwrap();
            for (a, b) in fd.terms().iter().zip(an.terms()) {
                assert_eq!(a.window(), b.window());
                assert!((a.matrix() - b.matrix()).iter().all(|v| v.norm() < 1e-12));
            }
        }
    }

    #[test]
    fn target_is_ground_state_of_final_hamiltonian() {
        let path = IsingPath::new(IsingPathSpec::new(4)).unwrap();
        let h = materialize(&path.terms(1.0).unwrap()).unwrap();
        let (vals, vecs) = eigh(&h);
        let t = path.target_state().unwrap();
        let gs: Vec<C64> = vecs.column(0).iter().cloned().collect();
        assert!((linalg::dot(&gs, t.amplitudes()).norm() - 1.0).abs() < 1e-10);
        let e = linalg::dot(t.amplitudes(), &path.terms(1.0).unwrap().apply(t.amplitudes())).re;
        assert!((e - vals[0]).abs() < 1e-10);
    }

    #[test]
    fn initial_state_energy_is_ground_energy() {
        let path = IsingPath::new(IsingPathSpec::new(3)).unwrap();
        let h0 = path.terms(0.0).unwrap();
        let psi = path.initial_state().unwrap();
        let e = linalg::dot(psi.amplitudes(), &h0.apply(psi.amplitudes())).re;
        let (vals, _) = eigh(&materialize(&h0).unwrap());
        assert!((e - vals[0]).abs() < 1e-14);
    }
}
