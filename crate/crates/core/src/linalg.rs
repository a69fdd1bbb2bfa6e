//! Dense complex linear-algebra helpers shared by every module.
//!
//! Everything here works on `nalgebra::DMatrix<Complex64>`. Rank decisions go
//! through [`RankPolicy`] so that the gap audit is applied uniformly.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Result, SloccError};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Relative singular-value threshold with an audit band around it.
///
/// A singular value `s` is kept when `s > tol * s_max`. The decision is
/// flagged unstable when some singular value lies in
/// `[tol * s_max / 10, 10 * tol * s_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankPolicy {
    pub tol: f64,
    pub audit: bool,
}

impl RankPolicy {
    pub fn new(tol: f64) -> Self {
        Self { tol, audit: true }
    }

    pub fn unaudited(tol: f64) -> Self {
        Self { tol, audit: false }
    }

    /// Rank of a descending singular-value list.
    pub fn rank_of(&self, sv: &[f64], context: &str) -> Result<usize> {
        let smax = sv.first().copied().unwrap_or(0.0);
        if smax <= f64::MIN_POSITIVE {
            return Ok(0);
        }
        let thr = self.tol * smax;
        if self.audit {
            if let Some(&s) = sv.iter().find(|&&s| s > thr / 10.0 && s <= thr * 10.0) {
                return Err(SloccError::RankDecisionUnstable {
                    context: context.to_string(),
                    ratio: s / smax,
                    tol: self.tol,
                });
            }
        }
        Ok(sv.iter().filter(|&&s| s > thr).count())
    }
}

impl Default for RankPolicy {
    fn default() -> Self {
        Self::new(1e-9)
    }
}

/// Full SVD `a = U diag(s) V^H` with descending singular values; `U` is
/// `m x m` and `V` is `n x n`.
pub struct FullSvd {
    pub u: CMat,
    pub s: Vec<f64>,
    pub v: CMat,
}

fn to_faer(a: &CMat) -> faer::Mat<Complex64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

fn from_faer(a: faer::MatRef<'_, Complex64>) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)])
}

pub fn full_svd(a: &CMat) -> FullSvd {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return FullSvd { u: CMat::identity(m, m), s: Vec::new(), v: CMat::identity(n, n) };
    }
    // Normalizing first helps faer converge on badly scaled input.
    let scale = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 || !scale.is_finite() {
        return FullSvd { u: CMat::identity(m, m), s: vec![if scale == 0.0 { 0.0 } else { f64::NAN }; m.min(n)], v: CMat::identity(n, n) };
    }
    let scaled = a / Complex64::from(scale);
    let Ok(svd) = to_faer(&scaled).svd() else {
        return nalgebra_svd(&scaled, scale);
    };
    let k = m.min(n);
    let s = (0..k).map(|i| svd.S()[i].re * scale).collect();
    FullSvd { u: from_faer(svd.U()), s, v: from_faer(svd.V()) }
}

/// Fallback when faer does not converge: nalgebra's SVD, completed to square
/// unitaries.
fn nalgebra_svd(a: &CMat, scale: f64) -> FullSvd {
    let (m, n) = a.shape();
    let svd = a.clone().svd(true, true);
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let u_thin = svd.u.expect("requested U");
    let v_thin = svd.v_t.expect("requested V").adjoint();
    let u_sorted = CMat::from_fn(m, idx.len(), |r, c| u_thin[(r, idx[c])]);
    let v_sorted = CMat::from_fn(n, idx.len(), |r, c| v_thin[(r, idx[c])]);
    let s = idx.iter().map(|&i| svd.singular_values[i] * scale).collect();
    FullSvd { u: complete_unitary(&u_sorted), s, v: complete_unitary(&v_sorted) }
}

/// Extend orthonormal columns to a square unitary.
fn complete_unitary(q: &CMat) -> CMat {
    let (m, k) = q.shape();
    if k == m {
        return q.clone();
    }
    let mut cols: Vec<CVec> = q.column_iter().map(|c| c.into_owned()).collect();
    for e in 0..m {
        let mut v = CVec::from_fn(m, |i, _| if i == e { ONE } else { ZERO });
        for c in &cols {
            let proj = c.dotc(&v);
            v -= c * proj;
        }
        let nv = v.norm();
        if nv > 1e-8 {
            cols.push(v / Complex64::from(nv));
        }
        if cols.len() == m {
            break;
        }
    }
    hstack(m, &cols)
}

/// Descending singular values.
pub fn singular_values(a: &CMat) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    to_faer(a).singular_values().expect("SVD converges")
}

/// Eigenvalues of a square matrix.
pub fn eigenvalues(a: &CMat) -> Vec<Complex64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    // Entries far below rounding level can derail the iteration (all-zero
    // output has been observed); they are dropped, and the trace is checked.
    let big = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let cleaned = a.map(|z| if z.norm() <= 1e-40 * big { ZERO } else { z });
    let trace: Complex64 = (0..a.nrows()).map(|i| cleaned[(i, i)]).sum();
    if let Ok(ev) = to_faer(&cleaned).eigenvalues() {
        let sum: Complex64 = ev.iter().sum();
        if (sum - trace).norm() <= 1e-8 * big * a.nrows() as f64 {
            return ev;
        }
    }
    nalgebra::Schur::new(cleaned).eigenvalues().map(|v| v.iter().copied().collect()).expect("complex Schur has eigenvalues")
}

pub fn rank(a: &CMat, policy: RankPolicy, context: &str) -> Result<usize> {
    policy.rank_of(&singular_values(a), context)
}

/// Orthonormal basis (columns) of the right null space of `a`.
pub fn null_space(a: &CMat, policy: RankPolicy, context: &str) -> Result<CMat> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return Ok(CMat::identity(n, n));
    }
    let svd = full_svd(a);
    let r = policy.rank_of(&svd.s, context)?;
    Ok(svd.v.columns(r, n - r).into_owned())
}

/// The `k` right singular vectors with the smallest singular values.
pub fn smallest_right_vectors(a: &CMat, k: usize) -> CMat {
    let n = a.ncols();
    let svd = full_svd(a);
    svd.v.columns(n - k, k).into_owned()
}

/// Orthonormal basis of the column span of `a`.
pub fn column_span(a: &CMat, policy: RankPolicy, context: &str) -> Result<CMat> {
    if a.ncols() == 0 {
        return Ok(CMat::zeros(a.nrows(), 0));
    }
    let svd = full_svd(a);
    let r = policy.rank_of(&svd.s, context)?;
    Ok(svd.u.columns(0, r).into_owned())
}

/// Orthonormal basis of the orthogonal complement of the column span of `a`
/// (`a` assumed to have full column rank numerically).
pub fn complement(a: &CMat) -> CMat {
    let m = a.nrows();
    let r = a.ncols();
    if r == 0 {
        return CMat::identity(m, m);
    }
    let svd = full_svd(a);
    svd.u.columns(r, m - r).into_owned()
}

pub fn fro(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn rel_diff(a: &CMat, b: &CMat) -> f64 {
    let d = fro(&(a - b));
    let s = fro(b).max(fro(a));
    if s == 0.0 {
        0.0
    } else {
        d / s
    }
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn inverse(a: &CMat) -> Result<CMat> {
    if a.nrows() != a.ncols() {
        return Err(SloccError::ShapeMismatch(format!(
            "cannot invert a {}x{} matrix",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(a.clone());
    }
    a.clone()
        .try_inverse()
        .ok_or_else(|| SloccError::NotInvertible("matrix is singular".into()))
}

/// `sigma_max / sigma_min`; infinite for singular input.
pub fn condition_number(a: &CMat) -> f64 {
    let s = singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Minimum-norm least-squares solution of `a x = b` via a truncated SVD.
pub fn lstsq(a: &CMat, b: &CMat, rcond: f64) -> CMat {
    let (m, n) = a.shape();
    if n == 0 {
        return CMat::zeros(0, b.ncols());
    }
    if m == 0 {
        return CMat::zeros(n, b.ncols());
    }
    let svd = full_svd(a);
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let r = svd.s.iter().filter(|&&x| x > rcond * smax).count();
    let ur = svd.u.columns(0, r);
    let vr = svd.v.columns(0, r);
    let mut coeffs = ur.adjoint() * b;
    for i in 0..r {
        let inv = Complex64::from(1.0 / svd.s[i]);
        coeffs.row_mut(i).iter_mut().for_each(|z| *z *= inv);
    }
    vr * coeffs
}

pub fn pinv(a: &CMat, rcond: f64) -> CMat {
    let m = a.nrows();
    lstsq(a, &CMat::identity(m, m), rcond)
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, m: usize, n: usize) -> CMat {
    CMat::from_fn(m, n, |_, _| complex_gaussian(rng))
}

/// Haar-distributed unitary via QR of a Gaussian matrix with phase fix.
pub fn random_unitary<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CMat {
    let g = gaussian_matrix(rng, n, n);
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        let d = r[(j, j)];
        let ph = if d.norm() > 0.0 { d / d.norm() } else { ONE };
        let mut col = q.column_mut(j);
        col *= ph;
    }
    q
}

/// Column-major vectorization.
pub fn vec_col(a: &CMat) -> CVec {
    CVec::from_iterator(a.len(), a.iter().copied())
}

pub fn unvec_col(v: &[Complex64], m: usize, n: usize) -> CMat {
    CMat::from_column_slice(m, n, v)
}

/// Embed a list of column vectors as a matrix.
pub fn hstack(rows: usize, cols: &[CVec]) -> CMat {
    let mut out = CMat::zeros(rows, cols.len());
    for (j, v) in cols.iter().enumerate() {
        out.set_column(j, v);
    }
    out
}

pub fn block_diag(blocks: &[CMat]) -> CMat {
    let m: usize = blocks.iter().map(|b| b.nrows()).sum();
    let n: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMat::zeros(m, n);
    let (mut r, mut c0) = (0, 0);
    for b in blocks {
        out.view_mut((r, c0), b.shape()).copy_from(b);
        r += b.nrows();
        c0 += b.ncols();
    }
    out
}
