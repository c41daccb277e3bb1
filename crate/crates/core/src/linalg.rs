//! Dense Hermitian eigensolves, Lanczos ground states, and Krylov-subspace
//! propagation `exp(-i·dt·H)·v` for operators available only as a matvec.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CdError, CdResult};

const C_ZERO: C64 = C64::new(0.0, 0.0);

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
pub fn eigh(m: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::<C64>::zeros(m.nrows(), m.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// `exp(-i·tau·M)` for Hermitian `M`.
pub fn expm_hermitian(m: &DMatrix<C64>, tau: f64) -> DMatrix<C64> {
    let (vals, vecs) = eigh(m);
    let phases: Vec<C64> = vals.iter().map(|&e| C64::from_polar(1.0, -tau * e)).collect();
    let mut scaled = vecs.clone();
    for (k, ph) in phases.iter().enumerate() {
        for z in scaled.column_mut(k).iter_mut() {
            *z *= ph;
        }
    }
    scaled * vecs.adjoint()
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).fold(C_ZERO, |acc, (x, y)| acc + x.conj() * y)
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn axpy(alpha: C64, x: &[C64], y: &mut [C64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn scale(alpha: f64, x: &mut [C64]) {
    for z in x.iter_mut() {
        *z *= alpha;
    }
}

/// Orthonormal Lanczos basis with tridiagonal coefficients.
struct Lanczos {
    basis: Vec<Vec<C64>>,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    breakdown: bool,
}

impl Lanczos {
    fn start(v: &[C64]) -> Self {
        let mut v0 = v.to_vec();
        let n = norm(&v0);
        scale(1.0 / n, &mut v0);
        Self { basis: vec![v0], alpha: Vec::new(), beta: Vec::new(), breakdown: false }
    }

    /// Adds one Krylov direction (full reorthogonalization, applied twice).
    fn step<F>(&mut self, apply: &F)
    where
        F: Fn(&[C64], &mut [C64]),
    {
        let j = self.alpha.len();
        let vj = &self.basis[j];
        let mut w = vec![C_ZERO; vj.len()];
        apply(vj, &mut w);
        let a = dot(vj, &w).re;
        self.alpha.push(a);
        for _ in 0..2 {
            for q in &self.basis {
                let c = dot(q, &w);
                axpy(-c, q, &mut w);
            }
        }
        let b = norm(&w);
        self.beta.push(b);
        if b < 1e-14 * (1.0 + a.abs()) {
            self.breakdown = true;
            return;
        }
        scale(1.0 / b, &mut w);
        self.basis.push(w);
    }

    fn tridiagonal(&self) -> DMatrix<f64> {
        let m = self.alpha.len();
        let mut t = DMatrix::<f64>::zeros(m, m);
        for k in 0..m {
            t[(k, k)] = self.alpha[k];
            if k + 1 < m {
                t[(k, k + 1)] = self.beta[k];
                t[(k + 1, k)] = self.beta[k];
            }
        }
        t
    }

    fn combine(&self, coeffs: &[C64]) -> Vec<C64> {
        let mut out = vec![C_ZERO; self.basis[0].len()];
        for (c, q) in coeffs.iter().zip(&self.basis) {
            axpy(*c, q, &mut out);
        }
        out
    }
}

fn sorted_sym_eigen(t: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(t);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let mut vecs = DMatrix::<f64>::zeros(eig.eigenvectors.nrows(), eig.eigenvectors.ncols());
    for (dst, &src) in order.iter().enumerate() {
        vecs.set_column(dst, &eig.eigenvectors.column(src));
    }
    (vals, vecs)
}

/// Tuning for [`ground_state`].
#[derive(Clone, Debug)]
pub struct GroundStateOptions {
    pub tol: f64,
    pub basis_size: usize,
    pub max_restarts: usize,
    pub seed: u64,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self { tol: 1e-10, basis_size: 60, max_restarts: 200, seed: 0x5eed }
    }
}

/// Lowest eigenpair of a Hermitian operator given as a matvec, by restarted
/// Lanczos. The start vector is a seeded pseudorandom real vector, so results
/// are deterministic.
pub fn ground_state<F>(apply: F, dim: usize, opts: &GroundStateOptions) -> CdResult<(f64, Vec<C64>)>
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, 0.0)).collect();
    if dim == 1 {
        let mut w = vec![C_ZERO; 1];
        apply(&[C64::new(1.0, 0.0)], &mut w);
        return Ok((w[0].re, vec![C64::new(1.0, 0.0)]));
    }
    let mut last_res = f64::INFINITY;
    for _ in 0..opts.max_restarts {
        let mut lz = Lanczos::start(&v);
        let size = opts.basis_size.min(dim);
        while lz.alpha.len() < size && !lz.breakdown {
            lz.step(&apply);
        }
        let (_, vecs) = sorted_sym_eigen(lz.tridiagonal());
        let coeffs: Vec<C64> = vecs.column(0).iter().map(|&c| C64::new(c, 0.0)).collect();
        let mut x = lz.combine(&coeffs);
        let nx = norm(&x);
        scale(1.0 / nx, &mut x);
        let mut hx = vec![C_ZERO; dim];
        apply(&x, &mut hx);
        let e = dot(&x, &hx).re;
        axpy(C64::new(-e, 0.0), &x, &mut hx);
        last_res = norm(&hx);
        if last_res < opts.tol || lz.breakdown {
            return Ok((e, x));
        }
        v = x;
    }
    Err(CdError::Integrator {
        step: 0,
        msg: format!("Lanczos ground state did not converge (residual {last_res:e})"),
    })
}

/// Tuning for [`expm_krylov`].
#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub tol: f64,
    pub max_dim: usize,
    pub max_splits: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self { Self { tol: 1e-10, max_dim: 40, max_splits: 12 } }
}

/// Statistics from one propagation.
#[derive(Clone, Debug, Default)]
pub struct KrylovStats {
    pub matvecs: usize,
    pub substeps: usize,
    pub error_estimate: f64,
}

/// `exp(-i·dt·H)·v` for Hermitian `H` given as a matvec.
///
/// Each substep grows a Lanczos basis until the a-posteriori estimate
/// `β_m·|e_mᵀ exp(-i·dt·T_m)·e_1|·‖v‖` drops below `tol`. If `max_dim` is reached
/// first the step is halved, up to `max_splits` times.
pub fn expm_krylov<F>(apply: &F, v: &[C64], dt: f64, opts: &KrylovOptions) -> CdResult<(Vec<C64>, KrylovStats)>
where
    F: Fn(&[C64], &mut [C64]),
{
    let mut stats = KrylovStats::default();
    let mut state = v.to_vec();
    let mut remaining = vec![(dt, 0usize)];
    while let Some((h, depth)) = remaining.pop() {
        match krylov_substep(apply, &state, h, opts, &mut stats) {
            Some(next) => {
                state = next;
                stats.substeps += 1;
            }
            None => {
                if depth >= opts.max_splits {
                    return Err(CdError::Integrator {
                        step: 0,
                        msg: format!("Krylov propagation did not converge for dt = {h:e}"),
                    });
                }
                remaining.push((h / 2.0, depth + 1));
                remaining.push((h / 2.0, depth + 1));
            }
        }
    }
    Ok((state, stats))
}

fn krylov_substep<F>(apply: &F, v: &[C64], dt: f64, opts: &KrylovOptions, stats: &mut KrylovStats) -> Option<Vec<C64>>
where
    F: Fn(&[C64], &mut [C64]),
{
    let vnorm = norm(v);
    if vnorm == 0.0 {
        return Some(v.to_vec());
    }
    let mut lz = Lanczos::start(v);
    let max_dim = opts.max_dim.min(v.len());
    loop {
        lz.step(apply);
        stats.matvecs += 1;
        let m = lz.alpha.len();
        let (vals, vecs) = sorted_sym_eigen(lz.tridiagonal());
        // y = Q exp(-i dt Λ) Qᵀ e1
        let y: Vec<C64> = (0..m)
            .map(|r| {
                (0..m).fold(C_ZERO, |acc, k| {
                    acc + vecs[(r, k)] * vecs[(0, k)] * C64::from_polar(1.0, -dt * vals[k])
                })
            })
            .collect();
        let err = if lz.breakdown { 0.0 } else { lz.beta[m - 1] * y[m - 1].norm() * vnorm };
        if err < opts.tol || lz.breakdown || m >= max_dim {
            if err >= opts.tol && !lz.breakdown {
                return None;
            }
            stats.error_estimate = stats.error_estimate.max(err);
            let coeffs: Vec<C64> = y.iter().map(|c| c * vnorm).collect();
            return Some(lz.combine(&coeffs));
        }
    }
}
