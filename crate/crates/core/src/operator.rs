//! Geometrically local operators on an open 1D chain of uniform local
//! dimension.
//!
//! Every operator lives on a contiguous [`SiteWindow`] and is stored as a dense
//! matrix over that window only. Site `lo` is the most significant factor of
//! the Kronecker product, so an operator `X` on `[1, 2)` embedded into `[0, 2)`
//! is `I ⊗ X`.
//!
//! Products between operators on different windows are evaluated on the
//! window hull by contracting only over the shared sites, which keeps the cost
//! at `d^(2|hull| + |overlap|)` instead of the naive `d^(3|hull|)`.

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{domain, CdError, CdResult};

/// Relative max-norm threshold below which a commutator is treated as zero.
pub const ZERO_TOL: f64 = 1e-12;

/// Default dimension cap for dense materialization of a whole chain.
pub const DEFAULT_DENSE_CAP: usize = 1 << 16;

const C_ZERO: C64 = C64::new(0.0, 0.0);
const C_ONE: C64 = C64::new(1.0, 0.0);

/// Half-open interval of sites `[lo, hi)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SiteWindow {
    lo: usize,
    hi: usize,
}

impl SiteWindow {
    pub fn new(lo: usize, hi: usize) -> CdResult<Self> {
        if hi <= lo {
            return domain(format!("empty site window [{lo}, {hi})"));
        }
        Ok(Self { lo, hi })
    }

    pub fn site(j: usize) -> Self { Self { lo: j, hi: j + 1 } }

    pub fn lo(&self) -> usize { self.lo }

    pub fn hi(&self) -> usize { self.hi }

    pub fn width(&self) -> usize { self.hi - self.lo }

    pub fn contains(&self, other: &SiteWindow) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn contains_site(&self, j: usize) -> bool { self.lo <= j && j < self.hi }

    pub fn overlaps(&self, other: &SiteWindow) -> bool {
        self.lo < other.hi && other.lo < self.hi
    }

    pub fn intersection(&self, other: &SiteWindow) -> Option<SiteWindow> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo < hi).then_some(SiteWindow { lo, hi })
    }

    /// Smallest window containing both (the interval hull).
    pub fn hull(&self, other: &SiteWindow) -> SiteWindow {
        SiteWindow { lo: self.lo.min(other.lo), hi: self.hi.max(other.hi) }
    }
}

impl fmt::Display for SiteWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.lo, self.hi)
    }
}

/// Dense operator supported on a site window.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    window: SiteWindow,
    local_dim: usize,
    matrix: DMatrix<C64>,
    hermitian: bool,
}

impl LocalOperator {
    pub fn new(window: SiteWindow, local_dim: usize, matrix: DMatrix<C64>) -> CdResult<Self> {
        if local_dim < 2 {
            return domain(format!("local dimension must be at least 2, got {local_dim}"));
        }
        let dim = checked_pow(local_dim, window.width())?;
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return domain(format!(
                "matrix is {}x{} but window {window} with d={local_dim} needs {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        Ok(Self { window, local_dim, matrix, hermitian: false })
    }

    /// Single-site operator.
    pub fn on_site(site: usize, local_dim: usize, matrix: DMatrix<C64>) -> CdResult<Self> {
        Self::new(SiteWindow::site(site), local_dim, matrix)
    }

    pub fn zeros(window: SiteWindow, local_dim: usize) -> CdResult<Self> {
        let dim = checked_pow(local_dim, window.width())?;
        Self::new(window, local_dim, DMatrix::zeros(dim, dim))
    }

    pub fn identity(window: SiteWindow, local_dim: usize) -> CdResult<Self> {
        let dim = checked_pow(local_dim, window.width())?;
        let mut op = Self::new(window, local_dim, DMatrix::identity(dim, dim))?;
        op.hermitian = true;
        Ok(op)
    }

    /// Tensor product of operators on adjacent windows, `self` on the left.
    pub fn kron(&self, right: &LocalOperator) -> CdResult<Self> {
        if self.local_dim != right.local_dim {
            return domain("kron of operators with different local dimensions");
        }
        if self.window.hi != right.window.lo {
            return domain(format!(
                "kron needs adjacent windows, got {} and {}",
                self.window, right.window
            ));
        }
        let window = SiteWindow { lo: self.window.lo, hi: right.window.hi };
        let mut op = Self::new(window, self.local_dim, self.matrix.kronecker(&right.matrix))?;
        op.hermitian = self.hermitian && right.hermitian;
        Ok(op)
    }

    pub fn window(&self) -> SiteWindow { self.window }

    pub fn local_dim(&self) -> usize { self.local_dim }

    pub fn dim(&self) -> usize { self.matrix.nrows() }

    pub fn matrix(&self) -> &DMatrix<C64> { &self.matrix }

    pub fn into_matrix(self) -> DMatrix<C64> { self.matrix }

    pub fn is_marked_hermitian(&self) -> bool { self.hermitian }

    pub fn max_norm(&self) -> f64 { max_abs(self.matrix.as_slice()) }

    /// Max-norm of `M - M†`.
    pub fn hermitian_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0_f64;
        for c in 0..n {
            for r in 0..=c {
                let d = self.matrix[(r, c)] - self.matrix[(c, r)].conj();
                worst = worst.max(d.norm());
            }
        }
        worst
    }

    /// Sets the Hermitian flag after checking `‖M − M†‖_max < 1e-12·‖M‖_max`.
    pub fn mark_hermitian(mut self) -> CdResult<Self> {
        let scale = self.max_norm();
        let res = self.hermitian_residual();
        if res > 1e-12 * scale.max(f64::MIN_POSITIVE) && res > 0.0 {
            return domain(format!(
                "operator on {} is not Hermitian (residual {res:e}, scale {scale:e})",
                self.window
            ));
        }
        self.hermitian = true;
        Ok(self)
    }

    /// Replaces `M` by `(M + M†)/2` and sets the Hermitian flag.
    pub fn symmetrized(mut self) -> Self {
        let adj = self.matrix.adjoint();
        self.matrix = (&self.matrix + adj) * C64::new(0.5, 0.0);
        self.hermitian = true;
        self
    }

    pub fn scaled(&self, factor: C64) -> Self {
        let mut out = self.clone();
        out.matrix *= factor;
        out.hermitian = self.hermitian && factor.im == 0.0;
        out
    }

    pub fn scaled_real(&self, factor: f64) -> Self { self.scaled(C64::new(factor, 0.0)) }

    pub fn adjoint(&self) -> Self {
        Self {
            window: self.window,
            local_dim: self.local_dim,
            matrix: self.matrix.adjoint(),
            hermitian: self.hermitian,
        }
    }

    /// Normalized trace `Tr(M)/d^width`.
    pub fn normalized_trace(&self) -> C64 {
        self.matrix.trace() / self.dim() as f64
    }

    /// Adds `other` (embedded into this window) in place.
    pub fn add_assign_embedded(&mut self, other: &LocalOperator, factor: C64) -> CdResult<()> {
        if other.window == self.window {
            if other.local_dim != self.local_dim {
                return domain("local dimension mismatch in addition");
            }
            self.matrix.zip_apply(&other.matrix, |a, b| *a += factor * b);
        } else {
            let e = embed(other, self.window)?;
            self.matrix.zip_apply(&e.matrix, |a, b| *a += factor * b);
        }
        self.hermitian = self.hermitian && other.hermitian && factor.im == 0.0;
        Ok(())
    }

    /// Partial trace over every site of this window outside `keep`.
    ///
    /// Returned unnormalized (a plain trace over the traced-out sites).
    pub fn partial_trace(&self, keep: SiteWindow) -> CdResult<DMatrix<C64>> {
        if !self.window.contains(&keep) {
            return domain(format!("partial trace keeps {keep} outside window {}", self.window));
        }
        let d = self.local_dim;
        let left = d.pow((keep.lo - self.window.lo) as u32);
        let mid = d.pow(keep.width() as u32);
        let right = d.pow((self.window.hi - keep.hi) as u32);
        let full = self.dim();
        let m = self.matrix.as_slice();
        let mut out = DMatrix::<C64>::zeros(mid, mid);
        for a in 0..mid {
            for b in 0..mid {
                let mut acc = C_ZERO;
                for l in 0..left {
                    for r in 0..right {
                        let row = (l * mid + a) * right + r;
                        let col = (l * mid + b) * right + r;
                        acc += m[col * full + row];
                    }
                }
                out[(a, b)] = acc;
            }
        }
        Ok(out)
    }
}

fn checked_pow(d: usize, w: usize) -> CdResult<usize> {
    u32::try_from(w)
        .ok()
        .and_then(|w| d.checked_pow(w))
        .ok_or_else(|| CdError::Resource(format!("dimension {d}^{w} overflows")))
}

pub(crate) fn max_abs(xs: &[C64]) -> f64 {
    xs.iter().fold(0.0_f64, |m, z| m.max(z.norm_sqr())).sqrt()
}

/// Embeds `op` into `target`: `I ⊗ op ⊗ I` with site ordering preserved.
pub fn embed(op: &LocalOperator, target: SiteWindow) -> CdResult<LocalOperator> {
    if !target.contains(&op.window) {
        return domain(format!("target {target} does not contain window {}", op.window));
    }
    if target == op.window {
        return Ok(op.clone());
    }
    let d = op.local_dim;
    let left = checked_pow(d, op.window.lo - target.lo)?;
    let right = checked_pow(d, target.hi - op.window.hi)?;
    let inner = op.dim();
    let dim = left * inner * right;
    let src = op.matrix.as_slice();
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    {
        let dst = out.as_mut_slice();
        for l in 0..left {
            for b in 0..inner {
                for a in 0..inner {
                    let v = src[b * inner + a];
                    if v == C_ZERO {
                        continue;
                    }
                    for r in 0..right {
                        let row = (l * inner + a) * right + r;
                        let col = (l * inner + b) * right + r;
                        dst[col * dim + row] = v;
                    }
                }
            }
        }
    }
    Ok(LocalOperator { window: target, local_dim: d, matrix: out, hermitian: op.hermitian })
}

/// Index bookkeeping for products of two window operators on their hull.
struct HullIndex {
    dim: usize,
    overlap_dim: usize,
    /// per hull index: index on window a / window b
    on_a: Vec<usize>,
    on_b: Vec<usize>,
    /// per hull index: digits on a-only / b-only sites, and on sites in neither
    a_only: Vec<usize>,
    b_only: Vec<usize>,
    outside: Vec<usize>,
    /// (a_only, overlap) -> index on a ; (overlap, b_only) -> index on b
    a_from: Vec<usize>,
    b_from: Vec<usize>,
    b_only_dim: usize,
}

impl HullIndex {
    fn new(wa: SiteWindow, wb: SiteWindow, d: usize) -> CdResult<Self> {
        let hull = wa.hull(&wb);
        let n = hull.width();
        let dim = checked_pow(d, n)?;
        let sites: Vec<usize> = (hull.lo..hull.hi).collect();
        let in_a: Vec<bool> = sites.iter().map(|&j| wa.contains_site(j)).collect();
        let in_b: Vec<bool> = sites.iter().map(|&j| wb.contains_site(j)).collect();
        let n_a_only = (0..n).filter(|&p| in_a[p] && !in_b[p]).count();
        let n_b_only = (0..n).filter(|&p| in_b[p] && !in_a[p]).count();
        let n_overlap = (0..n).filter(|&p| in_a[p] && in_b[p]).count();
        let a_only_dim = d.pow(n_a_only as u32);
        let b_only_dim = d.pow(n_b_only as u32);
        let overlap_dim = d.pow(n_overlap as u32);

        let mut on_a = vec![0; dim];
        let mut on_b = vec![0; dim];
        let mut a_only = vec![0; dim];
        let mut b_only = vec![0; dim];
        let mut outside = vec![0; dim];
        let mut digits = vec![0usize; n];
        for x in 0..dim {
            let mut rem = x;
            for p in (0..n).rev() {
                digits[p] = rem % d;
                rem /= d;
            }
            let (mut ia, mut ib, mut ao, mut bo, mut out) = (0, 0, 0, 0, 0);
            for p in 0..n {
                let q = digits[p];
                if in_a[p] {
                    ia = ia * d + q;
                }
                if in_b[p] {
                    ib = ib * d + q;
                }
                match (in_a[p], in_b[p]) {
                    (true, false) => ao = ao * d + q,
                    (false, true) => bo = bo * d + q,
                    (false, false) => out = out * d + q,
                    (true, true) => {}
                }
            }
            on_a[x] = ia;
            on_b[x] = ib;
            a_only[x] = ao;
            b_only[x] = bo;
            outside[x] = out;
        }

        // Windows are intervals, so on a the a-only sites lie on one side of
        // the overlap (or both sides when b is nested inside a). Build the
        // composition tables by enumerating digit strings of a and b directly.
        let wa_sites: Vec<usize> = (wa.lo..wa.hi).collect();
        let wb_sites: Vec<usize> = (wb.lo..wb.hi).collect();
        let mut a_from = vec![0; a_only_dim * overlap_dim];
        let mut b_from = vec![0; overlap_dim * b_only_dim];
        let mut da = vec![0usize; wa_sites.len()];
        for ia in 0..d.pow(wa_sites.len() as u32) {
            let mut rem = ia;
            for p in (0..wa_sites.len()).rev() {
                da[p] = rem % d;
                rem /= d;
            }
            let (mut ao, mut ov) = (0, 0);
            for (p, &j) in wa_sites.iter().enumerate() {
                if wb.contains_site(j) {
                    ov = ov * d + da[p];
                } else {
                    ao = ao * d + da[p];
                }
            }
            a_from[ao * overlap_dim + ov] = ia;
        }
        let mut db = vec![0usize; wb_sites.len()];
        for ib in 0..d.pow(wb_sites.len() as u32) {
            let mut rem = ib;
            for p in (0..wb_sites.len()).rev() {
                db[p] = rem % d;
                rem /= d;
            }
            let (mut bo, mut ov) = (0, 0);
            for (p, &j) in wb_sites.iter().enumerate() {
                if wa.contains_site(j) {
                    ov = ov * d + db[p];
                } else {
                    bo = bo * d + db[p];
                }
            }
            b_from[ov * b_only_dim + bo] = ib;
        }

        Ok(Self {
            dim,
            overlap_dim,
            on_a,
            on_b,
            a_only,
            b_only,
            outside,
            a_from,
            b_from,
            b_only_dim,
        })
    }
}

/// `Some(0)` for a real matrix, `Some(1)` for a purely imaginary one.
fn phase_class(m: &[C64]) -> Option<u8> {
    if m.iter().all(|z| z.im == 0.0) {
        Some(0)
    } else if m.iter().all(|z| z.re == 0.0) {
        Some(1)
    } else {
        None
    }
}

/// Writes `alpha·(A⊗I)(B⊗I) + beta·(B⊗I)(A⊗I)` on the hull of the two windows.
///
/// When `alpha`, `beta` are real and each operand is purely real or purely
/// imaginary, the products run in real arithmetic and the common phase is
/// applied afterwards.
fn hull_products(a: &LocalOperator, b: &LocalOperator, alpha: C64, beta: C64) -> CdResult<LocalOperator> {
    let d = a.local_dim;
    let hull = a.window.hull(&b.window);
    let dim = checked_pow(d, hull.width())?;
    let am = a.matrix.as_slice();
    let bm = b.matrix.as_slice();
    let classes = if alpha.im == 0.0 && beta.im == 0.0 { phase_class(am).zip(phase_class(bm)) } else { None };
    let out = match classes {
        Some((pa, pb)) => {
            let part = |m: &[C64], p: u8| m.iter().map(|z| if p == 0 { z.re } else { z.im }).collect::<Vec<f64>>();
            let mut re = vec![0.0; dim * dim];
            products_into(a, b, &part(am, pa), &part(bm, pb), alpha.re, beta.re, &mut re)?;
            // i^(pa+pb)
            let phase = match pa + pb {
                0 => |v: f64| C64::new(v, 0.0),
                1 => |v: f64| C64::new(0.0, v),
                _ => |v: f64| C64::new(-v, 0.0),
            };
            DMatrix::from_iterator(dim, dim, re.into_iter().map(phase))
        }
        None => {
            let mut out = DMatrix::<C64>::zeros(dim, dim);
            products_into(a, b, am, bm, alpha, beta, out.as_mut_slice())?;
            out
        }
    };
    LocalOperator::new(hull, d, out)
}

/// Dispatches on how the two windows sit relative to each other.
fn products_into<T: Scalar>(
    a: &LocalOperator,
    b: &LocalOperator,
    am: &[T],
    bm: &[T],
    alpha: T,
    beta: T,
    dst: &mut [T],
) -> CdResult<()> {
    let d = a.local_dim;
    let (wa, wb) = (a.window, b.window);
    let Some(o) = wa.intersection(&wb) else {
        let ix = HullIndex::new(wa, wb, d)?;
        hull_kernel(&ix, am, bm, a.dim(), b.dim(), alpha, beta, dst);
        return Ok(());
    };
    let dd = |w: usize| d.pow(w as u32);
    if wa.contains(&wb) || wb.contains(&wa) {
        // outer X, inner Y; AB and BA map onto XY and YX
        let (outer, xm, ym, c_xy, c_yx) = if wa.contains(&wb) { (wa, am, bm, alpha, beta) } else { (wb, bm, am, beta, alpha) };
        let dl = dd(o.lo - outer.lo);
        let dr = dd(outer.hi - o.hi);
        nested_kernel(xm, ym, dl, dd(o.width()), dr, c_xy, c_yx, dst);
    } else {
        let (lm, rm, c_lr, c_rl, left, right) =
            if wa.lo < wb.lo { (am, bm, alpha, beta, wa, wb) } else { (bm, am, beta, alpha, wb, wa) };
        let dl = dd(o.lo - left.lo);
        let dr = dd(right.hi - o.hi);
        partial_kernel(lm, rm, dl, dd(o.width()), dr, c_lr, c_rl, dst);
    }
    Ok(())
}

/// `c_xy·X(I⊗Y⊗I) + c_yx·(I⊗Y⊗I)X` where `X` spans `(l, o, r)` and `Y` acts on `o`.
#[allow(clippy::too_many_arguments)]
fn nested_kernel<T: Scalar>(x: &[T], y: &[T], dl: usize, dob: usize, dr: usize, c_xy: T, c_yx: T, dst: &mut [T]) {
    let dim = dl * dob * dr;
    for c in 0..dim {
        let (lp, op, rp) = (c / (dob * dr), (c / dr) % dob, c % dr);
        let col = &mut dst[c * dim..(c + 1) * dim];
        if c_xy != T::ZERO {
            for o2 in 0..dob {
                let coef = c_xy * y[op * dob + o2];
                if coef == T::ZERO {
                    continue;
                }
                let xc = ((lp * dob + o2) * dr + rp) * dim;
                for (z, &v) in col.iter_mut().zip(&x[xc..xc + dim]) {
                    T::acc(z, coef * v);
                }
            }
        }
        if c_yx != T::ZERO {
            let xcol = &x[c * dim..(c + 1) * dim];
            for l in 0..dl {
                let base = l * dob * dr;
                for o2 in 0..dob {
                    let src = &xcol[base + o2 * dr..base + (o2 + 1) * dr];
                    for o in 0..dob {
                        let coef = c_yx * y[o2 * dob + o];
                        if coef == T::ZERO {
                            continue;
                        }
                        for (z, &v) in col[base + o * dr..base + (o + 1) * dr].iter_mut().zip(src) {
                            T::acc(z, coef * v);
                        }
                    }
                }
            }
        }
    }
}

/// `c_lr·(L⊗I)(I⊗R) + c_rl·(I⊗R)(L⊗I)` with `L` on `(l, o)` and `R` on `(o, r)`.
#[allow(clippy::too_many_arguments)]
fn partial_kernel<T: Scalar>(lm: &[T], rm: &[T], dl: usize, dob: usize, dr: usize, c_lr: T, c_rl: T, dst: &mut [T]) {
    let dim = dl * dob * dr;
    let (nl, nr) = (dl * dob, dob * dr);
    // per-column coefficient tables: rc[o2][r] and lc[l][o2]
    let mut rc = vec![T::ZERO; dob * dr];
    let mut lc = vec![T::ZERO; dl * dob];
    let mut lv = vec![T::ZERO; dob];
    for c in 0..dim {
        let (lp, op, rp) = (c / (dob * dr), (c / dr) % dob, c % dr);
        let col = &mut dst[c * dim..(c + 1) * dim];
        if c_lr != T::ZERO {
            // out[(l,o), r] += Σ_o2 L[(l,o),(l',o2)] R[(o2,r),(o',r')]
            let rcol = &rm[(op * dr + rp) * nr..(op * dr + rp + 1) * nr];
            let mut any = false;
            for (v, &r) in rc.iter_mut().zip(rcol) {
                *v = c_lr * r;
                any |= *v != T::ZERO;
            }
            if any {
                let lcols = &lm[lp * dob * nl..(lp + 1) * dob * nl];
                for i in 0..nl {
                    let mut nz = false;
                    for (o2, v) in lv.iter_mut().enumerate() {
                        *v = lcols[o2 * nl + i];
                        nz |= *v != T::ZERO;
                    }
                    if !nz {
                        continue;
                    }
                    for (r, z) in col[i * dr..(i + 1) * dr].iter_mut().enumerate() {
                        let mut acc = T::ZERO;
                        for (o2, &l) in lv.iter().enumerate() {
                            acc = acc + l * rc[o2 * dr + r];
                        }
                        T::acc(z, acc);
                    }
                }
            }
        }
        if c_rl != T::ZERO {
            // out[l, (o,r)] += Σ_o2 L[(l,o2),(l',o')] R[(o,r),(o2,r')]
            let lcol = &lm[(lp * dob + op) * nl..(lp * dob + op + 1) * nl];
            let mut any = false;
            for (v, &l) in lc.iter_mut().zip(lcol) {
                *v = c_rl * l;
                any |= *v != T::ZERO;
            }
            if any {
                for l in 0..dl {
                    let coeffs = &lc[l * dob..(l + 1) * dob];
                    if coeffs.iter().all(|&v| v == T::ZERO) {
                        continue;
                    }
                    for (j, z) in col[l * nr..(l + 1) * nr].iter_mut().enumerate() {
                        let mut acc = T::ZERO;
                        for (o2, &cf) in coeffs.iter().enumerate() {
                            acc = acc + cf * rm[(o2 * dr + rp) * nr + j];
                        }
                        T::acc(z, acc);
                    }
                }
            }
        }
    }
}

trait Scalar: Copy + PartialEq + std::ops::Mul<Output = Self> + std::ops::Add<Output = Self> {
    const ZERO: Self;

    fn acc(z: &mut Self, v: Self);
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;

    #[inline(always)]
    fn acc(z: &mut Self, v: Self) { *z += v; }
}

impl Scalar for C64 {
    const ZERO: Self = C_ZERO;

    #[inline(always)]
    fn acc(z: &mut Self, v: Self) { *z += v; }
}

/// Column-major product kernel behind [`hull_products`].
#[allow(clippy::too_many_arguments)]
fn hull_kernel<T: Scalar>(ix: &HullIndex, am: &[T], bm: &[T], da: usize, db: usize, alpha: T, beta: T, dst: &mut [T]) {
    let dim = ix.dim;
    let od = ix.overlap_dim;
    let bod = ix.b_only_dim;
    let aod = ix.a_from.len() / od;
    // rows sharing a column's digits outside both windows; all rows when the
    // windows overlap, since their hull is then their union
    let n_outside = dim / (od * aod * bod);
    let mut rows_by_outside = vec![Vec::new(); n_outside];
    for r in 0..dim {
        rows_by_outside[ix.outside[r]].push(r);
    }
    let mut bvals = vec![T::ZERO; bod];
    let mut avals = vec![T::ZERO; aod];
    for c in 0..dim {
        let rows = &rows_by_outside[ix.outside[c]];
        let ca = ix.on_a[c];
        let cb = ix.on_b[c];
        let c_ao = ix.a_only[c];
        let c_bo = ix.b_only[c];
        let col = &mut dst[c * dim..(c + 1) * dim];
        for o in 0..od {
            if alpha != T::ZERO {
                // (A B)[r,c] = Σ_o A[r_a, (c_ao, o)] B[(o, r_bo), c_b]
                let ma = ix.a_from[c_ao * od + o];
                let acol = &am[ma * da..(ma + 1) * da];
                let mut any = false;
                for (bo, v) in bvals.iter_mut().enumerate() {
                    *v = alpha * bm[cb * db + ix.b_from[o * bod + bo]];
                    any |= *v != T::ZERO;
                }
                if any {
                    for &r in rows {
                        T::acc(&mut col[r], acol[ix.on_a[r]] * bvals[ix.b_only[r]]);
                    }
                }
            }
            if beta != T::ZERO {
                // (B A)[r,c] = Σ_o B[r_b, (o, c_bo)] A[(r_ao, o), c_a]
                let mb = ix.b_from[o * bod + c_bo];
                let bcol = &bm[mb * db..(mb + 1) * db];
                let mut any = false;
                for (ao, v) in avals.iter_mut().enumerate() {
                    *v = beta * am[ca * da + ix.a_from[ao * od + o]];
                    any |= *v != T::ZERO;
                }
                if any {
                    for &r in rows {
                        T::acc(&mut col[r], bcol[ix.on_b[r]] * avals[ix.a_only[r]]);
                    }
                }
            }
        }
    }
}

/// Operator product `a·b` on the hull of both windows.
pub fn product(a: &LocalOperator, b: &LocalOperator) -> CdResult<LocalOperator> {
    if a.local_dim != b.local_dim {
        return domain("product of operators with different local dimensions");
    }
    hull_products(a, b, C_ONE, C_ZERO)
}

/// `[a, b] = ab − ba` on the union window, or `None` when it vanishes.
///
/// Disjoint windows return `None` without any arithmetic. Otherwise the result
/// is dropped when its max-norm falls below `1e-12·‖a‖·‖b‖`.
pub fn commutator(a: &LocalOperator, b: &LocalOperator) -> CdResult<Option<LocalOperator>> {
    if a.local_dim != b.local_dim {
        return domain(format!(
            "commutator of operators with local dimensions {} and {}",
            a.local_dim, b.local_dim
        ));
    }
    if !a.window.overlaps(&b.window) {
        return Ok(None);
    }
    let out = hull_products(a, b, C_ONE, -C_ONE)?;
    let scale = a.max_norm() * b.max_norm();
    if out.max_norm() < ZERO_TOL * scale || scale == 0.0 {
        return Ok(None);
    }
    Ok(Some(out))
}

/// Normalized Hilbert–Schmidt inner product `Tr(a†b)/d^|W_a ∪ W_b|`.
///
/// Conjugate-linear in `a`. Only the overlap is contracted: with `O` the shared
/// sites, `Tr(a†b) ∝ Tr_O(ptr(a)† ptr(b))` where `ptr` traces out the
/// non-shared sites of each operand.
pub fn hs_inner(a: &LocalOperator, b: &LocalOperator) -> CdResult<C64> {
    if a.local_dim != b.local_dim {
        return domain("inner product of operators with different local dimensions");
    }
    let d = a.local_dim as f64;
    match a.window.intersection(&b.window) {
        None => Ok(a.normalized_trace().conj() * b.normalized_trace()),
        Some(o) => {
            let union_width = a.window.width() + b.window.width() - o.width();
            let norm = d.powi(union_width as i32);
            if a.window == b.window {
                let s = a
                    .matrix
                    .as_slice()
                    .iter()
                    .zip(b.matrix.as_slice())
                    .fold(C_ZERO, |acc, (x, y)| acc + x.conj() * y);
                return Ok(s / norm);
            }
            let pa = if a.window == o { a.matrix.clone() } else { a.partial_trace(o)? };
            let pb = if b.window == o { b.matrix.clone() } else { b.partial_trace(o)? };
            let s = pa
                .as_slice()
                .iter()
                .zip(pb.as_slice())
                .fold(C_ZERO, |acc, (x, y)| acc + x.conj() * y);
            Ok(s / norm)
        }
    }
}

/// Applies `op` (embedded in an `n_sites` chain) to `input`, accumulating
/// `factor · op·input` into `output`.
pub fn apply_local_into(
    op: &LocalOperator,
    n_sites: usize,
    factor: C64,
    input: &[C64],
    output: &mut [C64],
) {
    let d = op.local_dim;
    let w = op.window;
    let dm = op.dim();
    let left = d.pow(w.lo as u32);
    let right = d.pow((n_sites - w.hi) as u32);
    let m = op.matrix.as_slice();
    debug_assert_eq!(input.len(), left * dm * right);
    for b in 0..dm {
        for a in 0..dm {
            let v = m[b * dm + a];
            if v == C_ZERO {
                continue;
            }
            let v = v * factor;
            for l in 0..left {
                let base = l * dm * right;
                let src = &input[base + b * right..base + (b + 1) * right];
                let dst = &mut output[base + a * right..base + (a + 1) * right];
                for (y, x) in dst.iter_mut().zip(src) {
                    *y += v * x;
                }
            }
        }
    }
}

/// Ordered sum of local operators on an `n_sites` chain.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorSum {
    terms: Vec<LocalOperator>,
    n_sites: usize,
    local_dim: usize,
}

impl OperatorSum {
    pub fn new(n_sites: usize, local_dim: usize) -> Self {
        Self { terms: Vec::new(), n_sites, local_dim }
    }

    pub fn from_terms(n_sites: usize, local_dim: usize, terms: Vec<LocalOperator>) -> CdResult<Self> {
        let mut sum = Self::new(n_sites, local_dim);
        for t in terms {
            sum.push(t)?;
        }
        Ok(sum)
    }

    pub fn push(&mut self, term: LocalOperator) -> CdResult<()> {
        if term.local_dim != self.local_dim {
            return domain(format!(
                "term has local dimension {} but the sum has {}",
                term.local_dim, self.local_dim
            ));
        }
        if term.window.hi > self.n_sites {
            return domain(format!(
                "term window {} exceeds chain of {} sites",
                term.window, self.n_sites
            ));
        }
        self.terms.push(term);
        Ok(())
    }

    pub fn extend(&mut self, other: &OperatorSum) -> CdResult<()> {
        if other.n_sites != self.n_sites {
            return domain("cannot concatenate sums on chains of different length");
        }
        for t in &other.terms {
            self.push(t.clone())?;
        }
        Ok(())
    }

    pub fn terms(&self) -> &[LocalOperator] { &self.terms }

    pub fn into_terms(self) -> Vec<LocalOperator> { self.terms }

    pub fn len(&self) -> usize { self.terms.len() }

    pub fn is_empty(&self) -> bool { self.terms.is_empty() }

    pub fn n_sites(&self) -> usize { self.n_sites }

    pub fn local_dim(&self) -> usize { self.local_dim }

    pub fn hilbert_dim(&self) -> CdResult<usize> { checked_pow(self.local_dim, self.n_sites) }

    pub fn scaled(&self, factor: C64) -> Self {
        Self {
            terms: self.terms.iter().map(|t| t.scaled(factor)).collect(),
            n_sites: self.n_sites,
            local_dim: self.local_dim,
        }
    }

    /// In-place counterpart of [`OperatorSum::scaled`].
    pub fn scale_mut(&mut self, factor: C64) {
        for t in &mut self.terms {
            t.matrix *= factor;
            t.hermitian = t.hermitian && factor.im == 0.0;
        }
    }

    pub fn scaled_real(&self, factor: f64) -> Self {
        Self {
            terms: self.terms.iter().map(|t| t.scaled_real(factor)).collect(),
            n_sites: self.n_sites,
            local_dim: self.local_dim,
        }
    }

    /// Sums terms that share a window. Output is sorted by `(lo, hi)`;
    /// terms are accumulated in their original order.
    pub fn merged_by_window(&self) -> Self {
        let mut by_window: BTreeMap<SiteWindow, LocalOperator> = BTreeMap::new();
        for t in &self.terms {
            match by_window.get_mut(&t.window) {
                Some(acc) => {
                    acc.matrix += &t.matrix;
                    acc.hermitian = acc.hermitian && t.hermitian;
                }
                None => {
                    by_window.insert(t.window, t.clone());
                }
            }
        }
        Self {
            terms: by_window.into_values().collect(),
            n_sites: self.n_sites,
            local_dim: self.local_dim,
        }
    }

    /// Embeds every term of width at most `width` into the window
    /// `[lo, lo + width)` (shifted left at the chain end) and merges. Wider
    /// terms keep their window. Fewer, larger terms make `apply` cheaper when
    /// there are many overlapping pieces.
    pub fn coarsened(&self, width: usize) -> CdResult<Self> {
        let width = width.min(self.n_sites);
        let mut out = Self::new(self.n_sites, self.local_dim);
        for t in &self.terms {
            if t.window.width() >= width {
                out.terms.push(t.clone());
                continue;
            }
            let lo = t.window.lo.min(self.n_sites - width);
            out.terms.push(embed(t, SiteWindow::new(lo, lo + width)?)?);
        }
        Ok(out.merged_by_window())
    }

    /// Largest window width among the terms (0 when empty).
    pub fn max_width(&self) -> usize {
        self.terms.iter().map(|t| t.window.width()).max().unwrap_or(0)
    }

    /// `factor · Σ_j term_j · input`, accumulated into `output`.
    pub fn apply_into(&self, factor: C64, input: &[C64], output: &mut [C64]) {
        for t in &self.terms {
            apply_local_into(t, self.n_sites, factor, input, output);
        }
    }

    pub fn apply(&self, input: &[C64]) -> Vec<C64> {
        let mut out = vec![C_ZERO; input.len()];
        self.apply_into(C_ONE, input, &mut out);
        out
    }

    /// `⟨self, other⟩` in normalized trace units, accumulated pairwise in
    /// ascending term order.
    pub fn inner(&self, other: &OperatorSum) -> CdResult<C64> {
        let mut acc = C_ZERO;
        for a in &self.terms {
            for b in &other.terms {
                acc += hs_inner(a, b)?;
            }
        }
        Ok(acc)
    }

    /// `⟨self, self⟩`, visiting each unordered pair of terms once.
    pub fn norm2(&self) -> CdResult<f64> {
        let mut acc = 0.0;
        for (i, a) in self.terms.iter().enumerate() {
            acc += hs_inner(a, a)?.re;
            for b in &self.terms[i + 1..] {
                acc += 2.0 * hs_inner(a, b)?.re;
            }
        }
        Ok(acc)
    }

    /// Largest Hermitian residual over all terms.
    pub fn hermitian_residual(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.hermitian_residual()))
    }
}

/// Dense matrix of the full sum on `[0, n_sites)`.
pub fn materialize(sum: &OperatorSum) -> CdResult<DMatrix<C64>> {
    materialize_capped(sum, DEFAULT_DENSE_CAP)
}

pub fn materialize_capped(sum: &OperatorSum, cap: usize) -> CdResult<DMatrix<C64>> {
    let dim = sum.hilbert_dim()?;
    if dim > cap {
        return Err(CdError::Resource(format!(
            "dense materialization of dimension {dim} exceeds cap {cap}"
        )));
    }
    let full = SiteWindow::new(0, sum.n_sites)?;
    let mut out = DMatrix::<C64>::zeros(dim, dim);
    for t in &sum.terms {
        let e = embed(t, full)?;
        out += e.matrix();
    }
    Ok(out)
}

/// Pauli matrices and helpers for qubit chains.
pub mod pauli {
    use super::*;

    pub fn i2() -> DMatrix<C64> { DMatrix::identity(2, 2) }

    pub fn x() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[C_ZERO, C_ONE, C_ONE, C_ZERO])
    }

    pub fn y() -> DMatrix<C64> {
        let i = C64::new(0.0, 1.0);
        DMatrix::from_row_slice(2, 2, &[C_ZERO, -i, i, C_ZERO])
    }

    pub fn z() -> DMatrix<C64> {
        DMatrix::from_row_slice(2, 2, &[C_ONE, C_ZERO, C_ZERO, -C_ONE])
    }

    pub fn by_label(c: char) -> Option<DMatrix<C64>> {
        match c {
            'I' => Some(i2()),
            'X' => Some(x()),
            'Y' => Some(y()),
            'Z' => Some(z()),
            _ => None,
        }
    }

    /// Pauli string such as `"ZY"` starting at site `lo`.
    pub fn string(lo: usize, labels: &str) -> CdResult<LocalOperator> {
        let mut m = DMatrix::<C64>::identity(1, 1);
        for c in labels.chars() {
            let p = by_label(c).ok_or_else(|| CdError::Domain(format!("unknown Pauli label {c:?}")))?;
            m = m.kronecker(&p);
        }
        let w = SiteWindow::new(lo, lo + labels.len())?;
        LocalOperator::new(w, 2, m)?.mark_hermitian()
    }
}
