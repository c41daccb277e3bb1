//! Dense reference constructions shared by the integration tests. Everything
//! here is built from Kronecker products and full-space traces.

#![allow(dead_code)]

use cdforge::operator::{LocalOperator, SiteWindow};
use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn c(re: f64, im: f64) -> C64 { C64::new(re, im) }

pub fn id(n: usize) -> DMatrix<C64> { DMatrix::identity(n, n) }

pub fn sx() -> DMatrix<C64> { DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.0, 0.0)]) }

pub fn sy() -> DMatrix<C64> { DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -1.0), c(0.0, 1.0), c(0.0, 0.0)]) }

pub fn sz() -> DMatrix<C64> { DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0)]) }

/// `I ⊗ m ⊗ I` with `m` starting at site `lo` of an `n`-site chain.
pub fn on_sites(m: &DMatrix<C64>, lo: usize, d: usize, n: usize) -> DMatrix<C64> {
    let w = (m.nrows() as f64).log(d as f64).round() as usize;
    id(d.pow(lo as u32)).kronecker(m).kronecker(&id(d.pow((n - lo - w) as u32)))
}

pub fn dense(op: &LocalOperator, n: usize) -> DMatrix<C64> {
    on_sites(op.matrix(), op.window().lo(), op.local_dim(), n)
}

pub fn comm(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> { a * b - b * a }

pub fn max_diff(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 { (a - b).iter().fold(0.0, |m, z| m.max(z.norm())) }

/// Normalized trace inner product `Tr(a†b)/dim`.
pub fn hs(a: &DMatrix<C64>, b: &DMatrix<C64>) -> C64 { (a.adjoint() * b).trace() / a.nrows() as f64 }

/// Ising chain `c_z(s) ΣZ + s(h_x ΣX + J ΣZZ)` with `c_z = h_z` (held) or
/// `(1−s)h_z` (ramped), and its `s`-derivative.
pub fn ising_dense(n: usize, j: f64, hx: f64, hz: f64, ramped: bool, s: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let dim = 1 << n;
    let mut z = DMatrix::zeros(dim, dim);
    let mut x = DMatrix::zeros(dim, dim);
    let mut zz = DMatrix::zeros(dim, dim);
    for k in 0..n {
        z += on_sites(&sz(), k, 2, n);
        x += on_sites(&sx(), k, 2, n);
        if k + 1 < n {
            zz += on_sites(&sz().kronecker(&sz()), k, 2, n);
        }
    }
    let drive = x * c(hx, 0.0) + zz * c(j, 0.0);
    let (cz, dcz) = if ramped { ((1.0 - s) * hz, -hz) } else { (hz, 0.0) };
    (&z * c(cz, 0.0) + &drive * c(s, 0.0), z * c(dcz, 0.0) + drive)
}

/// Eigenvector of the lowest eigenvalue of a Hermitian matrix, with the
/// first two eigenvalues.
pub fn ground(h: &DMatrix<C64>) -> (f64, f64, Vec<C64>) {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let mut idx: Vec<usize> = (0..h.nrows()).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let v = eig.eigenvectors.column(idx[0]).iter().copied().collect();
    let second = if idx.len() > 1 { eig.eigenvalues[idx[1]] } else { f64::INFINITY };
    (eig.eigenvalues[idx[0]], second, v)
}

pub fn overlap2(a: &[C64], b: &[C64]) -> f64 {
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    a.iter().zip(b).fold(c(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y).norm_sqr() / (na * nb)
}

pub fn rng(seed: u64) -> ChaCha8Rng { ChaCha8Rng::seed_from_u64(seed) }

pub fn random_matrix(rng: &mut ChaCha8Rng, dim: usize) -> DMatrix<C64> {
    DMatrix::from_fn(dim, dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, window: SiteWindow, d: usize) -> LocalOperator {
    let m = random_matrix(rng, d.pow(window.width() as u32));
    LocalOperator::new(window, d, (&m + m.adjoint()) * c(0.5, 0.0)).unwrap()
}

pub fn random_window(rng: &mut ChaCha8Rng, n: usize, max_width: usize) -> SiteWindow {
    let w = rng.random_range(1..=max_width.min(n));
    let lo = rng.random_range(0..=n - w);
    SiteWindow::new(lo, lo + w).unwrap()
}

pub fn dense_sum(sum: &cdforge::operator::OperatorSum) -> DMatrix<C64> {
    let n = sum.n_sites();
    let dim = sum.local_dim().pow(n as u32);
    sum.terms().iter().fold(DMatrix::zeros(dim, dim), |acc, t| acc + dense(t, n))
}

/// `⟨l| B^{i_1} ⋯ B^{i_n} |r⟩` with `B^i[α][β] = s·A^i_{αβ} + (1−s)·δ_{i,2α+β}`
/// and `|l⟩ = |r⟩ = |0⟩`, normalized. Index order: first qudit most significant.
pub fn mps_contract(a: &[[[f64; 2]; 2]; 4], n_p: usize, s: f64) -> Vec<C64> {
    let b: Vec<nalgebra::Matrix2<f64>> = (0..4)
        .map(|i| {
            nalgebra::Matrix2::from_fn(|al, be| s * a[i][al][be] + if i == 2 * al + be { 1.0 - s } else { 0.0 })
        })
        .collect();
    let dim = 4usize.pow(n_p as u32);
    let mut amps: Vec<C64> = (0..dim)
        .map(|idx| {
            let mut m = nalgebra::Matrix2::identity();
            for v in 0..n_p {
                let i = (idx / 4usize.pow((n_p - 1 - v) as u32)) % 4;
                m *= b[i];
            }
            c(m[(0, 0)], 0.0)
        })
        .collect();
    let nrm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    amps.iter_mut().for_each(|z| *z /= nrm);
    amps
}
