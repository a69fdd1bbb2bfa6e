//! Kronecker-product detection by matrix realignment.
//!
//! For `P` of shape `LM x LM` split into `L x L` blocks of size `M x M`, the
//! realigned matrix `R(P)` has one row per block: block `(a, b)` vectorized
//! column-major lands in row `b L + a`. With column-major `vec` throughout,
//! `R(A (x) B) = vec(A) vec(B)^T`, so `P` is a Kronecker product exactly when
//! `R(P)` has rank one.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Result, SloccError};
use crate::linalg::{self, CMat, ONE};
use crate::tensor::INVERTIBILITY_TOL;

/// Default acceptance threshold on `sigma_2 / sigma_1`.
pub const DEFAULT_KRON_TOL: f64 = 1e-8;

pub fn realign(p: &CMat, grouping: (usize, usize)) -> Result<CMat> {
    let (l, m) = grouping;
    if p.shape() != (l * m, l * m) {
        return Err(SloccError::ShapeMismatch(format!(
            "realign: matrix {:?} does not match grouping ({l},{m})",
            p.shape()
        )));
    }
    let mut r = CMat::zeros(l * l, m * m);
    for a in 0..l {
        for b in 0..l {
            let row = b * l + a;
            for j in 0..m {
                for i in 0..m {
                    r[(row, j * m + i)] = p[(a * m + i, b * m + j)];
                }
            }
        }
    }
    Ok(r)
}

/// Inverse of [`realign`].
pub fn unrealign(r: &CMat, grouping: (usize, usize)) -> Result<CMat> {
    let (l, m) = grouping;
    if r.shape() != (l * l, m * m) {
        return Err(SloccError::ShapeMismatch(format!(
            "unrealign: matrix {:?} does not match grouping ({l},{m})",
            r.shape()
        )));
    }
    let mut p = CMat::zeros(l * m, l * m);
    for a in 0..l {
        for b in 0..l {
            for j in 0..m {
                for i in 0..m {
                    p[(a * m + i, b * m + j)] = r[(b * l + a, j * m + i)];
                }
            }
        }
    }
    Ok(p)
}

/// `sigma_2 / sigma_1` of the realignment (0 when it has a single row or column).
pub fn kron_gap(p: &CMat, grouping: (usize, usize)) -> Result<f64> {
    let s = linalg::singular_values(&realign(p, grouping)?);
    Ok(gap_of(&s))
}

fn gap_of(s: &[f64]) -> f64 {
    match (s.first(), s.get(1)) {
        (Some(&s1), Some(&s2)) if s1 > 0.0 => s2 / s1,
        _ => 0.0,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RealignmentReport {
    #[serde(skip)]
    pub realigned: CMat,
    pub singular_values: Vec<f64>,
    pub kron_rank: usize,
    #[serde(skip)]
    pub factors: Option<(CMat, CMat)>,
    pub residual: Option<f64>,
}

/// Leading-triple factors, normalized so that `|A|_F = |B|_F` and the first
/// significant entry of `A` (row-major scan) is real positive.
fn leading_factors(r: &CMat, grouping: (usize, usize)) -> (CMat, CMat, Vec<f64>) {
    let (l, m) = grouping;
    let svd = linalg::full_svd(r);
    let s1 = svd.s[0];
    let u1: Vec<Complex64> = svd.u.column(0).iter().copied().collect();
    let v1: Vec<Complex64> = svd.v.column(0).iter().map(|z| z.conj()).collect();
    let scale = Complex64::from(s1.sqrt());
    let mut a = linalg::unvec_col(&u1, l, l) * scale;
    let mut b = linalg::unvec_col(&v1, m, m) * scale;
    let amax = a.iter().map(|z| z.norm()).fold(0.0, f64::max);
    'scan: for i in 0..l {
        for j in 0..l {
            let z = a[(i, j)];
            if z.norm() > 1e-6 * amax {
                let ph = z / z.norm();
                a *= ph.conj();
                b *= ph;
                break 'scan;
            }
        }
    }
    (a, b, svd.s)
}

pub fn report(p: &CMat, grouping: (usize, usize), tol: f64) -> Result<RealignmentReport> {
    let realigned = realign(p, grouping)?;
    let (a, b, s) = leading_factors(&realigned, grouping);
    let kron_rank = linalg::RankPolicy::unaudited(tol).rank_of(&s, "realignment")?.max(1);
    let (factors, residual) = if kron_rank == 1 {
        let res = linalg::rel_diff(&linalg::kron(&a, &b), p);
        (Some((a, b)), Some(res))
    } else {
        (None, None)
    };
    Ok(RealignmentReport { realigned, singular_values: s, kron_rank, factors, residual })
}

#[derive(Debug, Clone)]
pub enum KronFactorization {
    Product { a: CMat, b: CMat, residual: f64, gap: f64 },
    NotAProduct { gap: f64 },
}

impl KronFactorization {
    pub fn factors(&self) -> Option<(&CMat, &CMat)> {
        match self {
            Self::Product { a, b, .. } => Some((a, b)),
            Self::NotAProduct { .. } => None,
        }
    }

    pub fn gap(&self) -> f64 {
        match self {
            Self::Product { gap, .. } | Self::NotAProduct { gap } => *gap,
        }
    }
}

/// Factor an invertible `P = A (x) B` of the given grouping.
pub fn kron_factor(p: &CMat, grouping: (usize, usize), tol: f64) -> Result<KronFactorization> {
    let cond = linalg::condition_number(p);
    if !(cond.is_finite() && 1.0 / cond > INVERTIBILITY_TOL) {
        return Err(SloccError::NotInvertible(format!("kron_factor input (cond {cond:.3e})")));
    }
    let realigned = realign(p, grouping)?;
    let (a, b, s) = leading_factors(&realigned, grouping);
    let gap = gap_of(&s);
    if gap <= tol {
        let residual = linalg::rel_diff(&linalg::kron(&a, &b), p);
        Ok(KronFactorization::Product { a, b, residual, gap })
    } else {
        Ok(KronFactorization::NotAProduct { gap })
    }
}

/// Best Frobenius-norm Kronecker approximation. `residual` is the relative
/// error `sqrt(1 - s_1^2 / sum s_k^2)`.
pub fn nearest_kron(p: &CMat, grouping: (usize, usize)) -> Result<(CMat, CMat, f64)> {
    let realigned = realign(p, grouping)?;
    if linalg::fro(&realigned) == 0.0 {
        return Err(SloccError::ShapeMismatch("nearest_kron of a zero matrix".into()));
    }
    let (a, b, s) = leading_factors(&realigned, grouping);
    let total: f64 = s.iter().map(|x| x * x).sum();
    let residual = (1.0 - s[0] * s[0] / total).max(0.0).sqrt();
    Ok((a, b, residual))
}

/// The two-qubit SWAP gate.
pub fn swap_gate() -> CMat {
    let mut s = CMat::zeros(4, 4);
    for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
        s[(i, j)] = ONE;
    }
    s
}
