//! Standard forms of matrix pairs under `(T, P, Q)`.
//!
//! A pair `(Gamma_1, Gamma_2)` is read as the pencil `Gamma_2 - lambda Gamma_1`:
//! an eigenvalue `lambda` is a point where that pencil drops rank, with
//! `lambda = inf` where `Gamma_1` does. The standard form is the Kronecker
//! canonical form with the residual `2 x 2` mixing freedom spent by a Moebius
//! normalization of the eigenvalues (see [`gauge`]).
//!
//! Canonical blocks, as `(Gamma_1, Gamma_2)` pairs:
//!
//! ```text
//! L_eps      ([I_eps | 0], [0 | I_eps])          eps x (eps+1)
//! L_eta^T    ([I_eta ; 0], [0 ; I_eta])          (eta+1) x eta
//! finite     (I_k, J_k(lambda))                  k x k, ones above the diagonal
//! infinite   (N_k, I_k)                          k x k
//! ```
//!
//! Blocks are laid out as `L_eps` (ascending), then the eigenvalue clusters
//! in order, then `L_eta^T` (ascending).

mod commutant;
pub mod gauge;
mod kcf;

pub use commutant::{commutant_basis, commutant_of_matrix, commutant_of_pair, CommutantDescriptor};
pub use gauge::{gauge_fix, gauge_fix_all, moebius_to_mixing, quantize, StandardForm, Transforms};
pub use kcf::{jordan_chains, kcf, kcf_pair, KcfOptions, KcfResult};

/// `kcf` followed by `gauge_fix`.
pub fn standard_form(pencil: &MatrixPencil, opts: &KcfOptions) -> Result<(StandardForm, Transforms)> {
    let pre = kcf(pencil, opts)?;
    gauge_fix(pencil, &pre, opts)
}

use num_complex::Complex64;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, CMat, RankPolicy, ONE};
use crate::tensor::MatrixPencil;

/// A point of the extended complex plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Eigenvalue {
    Finite(Complex64),
    Infinite,
}

impl Eigenvalue {
    /// Homogeneous coordinates `[x : y]` with `lambda = x / y`.
    pub fn homogeneous(&self) -> (Complex64, Complex64) {
        match *self {
            Eigenvalue::Finite(z) => (z, ONE),
            Eigenvalue::Infinite => (ONE, Complex64::new(0.0, 0.0)),
        }
    }

    pub fn from_homogeneous(x: Complex64, y: Complex64) -> Self {
        if y.norm() <= 1e-14 * x.norm() {
            Eigenvalue::Infinite
        } else {
            Eigenvalue::Finite(x / y)
        }
    }

    /// Chordal distance on the Riemann sphere (at most 1).
    pub fn chordal(&self, other: &Eigenvalue) -> f64 {
        match (self, other) {
            (Eigenvalue::Infinite, Eigenvalue::Infinite) => 0.0,
            (Eigenvalue::Finite(z), Eigenvalue::Infinite) | (Eigenvalue::Infinite, Eigenvalue::Finite(z)) => {
                1.0 / (1.0 + z.norm_sqr()).sqrt()
            }
            (Eigenvalue::Finite(a), Eigenvalue::Finite(b)) => {
                (a - b).norm() / ((1.0 + a.norm_sqr()) * (1.0 + b.norm_sqr())).sqrt()
            }
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, Eigenvalue::Infinite)
    }

    /// Apply the Moebius map `z -> (m00 z + m01) / (m10 z + m11)`.
    pub fn moebius(&self, m: &CMat) -> Eigenvalue {
        let (x, y) = self.homogeneous();
        Eigenvalue::from_homogeneous(m[(0, 0)] * x + m[(0, 1)] * y, m[(1, 0)] * x + m[(1, 1)] * y)
    }
}

/// Jordan blocks of one eigenvalue, sizes in descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCluster {
    pub value: Eigenvalue,
    pub blocks: Vec<usize>,
}

impl EigenCluster {
    pub fn multiplicity(&self) -> usize {
        self.blocks.iter().sum()
    }
}

/// Discrete Kronecker data plus eigenvalue locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KroneckerStructure {
    pub minimal_col: Vec<usize>,
    pub minimal_row: Vec<usize>,
    pub clusters: Vec<EigenCluster>,
}

impl KroneckerStructure {
    pub fn shape(&self) -> (usize, usize) {
        let reg: usize = self.clusters.iter().map(|c| c.multiplicity()).sum();
        let rows = self.minimal_col.iter().sum::<usize>() + self.minimal_row.iter().map(|e| e + 1).sum::<usize>() + reg;
        let cols = self.minimal_col.iter().map(|e| e + 1).sum::<usize>() + self.minimal_row.iter().sum::<usize>() + reg;
        (rows, cols)
    }

    /// The canonical pair for this structure in the standard block layout.
    pub fn canonical_pair(&self) -> (CMat, CMat) {
        let mut first = Vec::new();
        let mut second = Vec::new();
        for &e in &self.minimal_col {
            let (a, b) = l_block(e);
            first.push(a);
            second.push(b);
        }
        for cl in &self.clusters {
            for &k in &cl.blocks {
                let (a, b) = match cl.value {
                    Eigenvalue::Infinite => (shift(k), CMat::identity(k, k)),
                    Eigenvalue::Finite(z) => (CMat::identity(k, k), CMat::identity(k, k) * z + shift(k)),
                };
                first.push(a);
                second.push(b);
            }
        }
        for &e in &self.minimal_row {
            let (a, b) = l_block(e);
            first.push(a.transpose());
            second.push(b.transpose());
        }
        (linalg::block_diag(&first), linalg::block_diag(&second))
    }
}

/// `k x k` matrix with ones on the superdiagonal.
pub fn shift(k: usize) -> CMat {
    CMat::from_fn(k, k, |i, j| if j == i + 1 { ONE } else { Complex64::new(0.0, 0.0) })
}

fn l_block(eps: usize) -> (CMat, CMat) {
    let a = CMat::from_fn(eps, eps + 1, |i, j| if i == j { ONE } else { Complex64::new(0.0, 0.0) });
    let b = CMat::from_fn(eps, eps + 1, |i, j| if j == i + 1 { ONE } else { Complex64::new(0.0, 0.0) });
    (a, b)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RankProfile {
    pub rank_gamma1: usize,
    pub rank_gamma2: usize,
    pub generic_rank: usize,
    pub sampled: Vec<usize>,
}

/// Fixed, generic-looking sample points `(mu, lambda)` for `mu G1 + lambda G2`.
pub(crate) const GENERIC_SAMPLES: [(f64, f64, f64, f64); 4] = [
    (1.0, 0.0, 0.6180339887, 0.3141592654),
    (0.4318, -0.9, 1.0, 0.0),
    (-1.3, 0.2718281828, 0.8, -0.5772156649),
    (0.6893, 0.7346, -0.2, 1.3719),
];

pub fn rank_profile(pencil: &MatrixPencil, tol: f64) -> Result<RankProfile> {
    let policy = RankPolicy::new(tol);
    let rank_gamma1 = linalg::rank(&pencil.gamma1, policy, "rank of Gamma_1")?;
    let rank_gamma2 = linalg::rank(&pencil.gamma2, policy, "rank of Gamma_2")?;
    let sampled = GENERIC_SAMPLES
        .iter()
        .map(|&(a, b, x, y)| {
            let m = &pencil.gamma1 * Complex64::new(a, b) + &pencil.gamma2 * Complex64::new(x, y);
            linalg::rank(&m, policy, "generic pencil rank")
        })
        .collect::<Result<Vec<_>>>()?;
    let generic_rank = sampled.iter().copied().max().unwrap_or(0);
    Ok(RankProfile { rank_gamma1, rank_gamma2, generic_rank, sampled })
}
