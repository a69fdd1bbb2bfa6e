//! Linear stabilizer of a canonical pair.
//!
//! The pairs `(X, Y)` with `X E = E Y` and `X J = J Y` form an algebra
//! containing `(I, I)`; its invertible elements map the canonical pair to
//! itself. For a square regular pair with `E = I` this is the commutant
//! `{S : [S, J] = 0}` with `X = Y = S`.

use super::gauge::StandardForm;
use crate::linalg::{self, CMat, RankPolicy, ONE, ZERO};

/// Entries below this magnitude are zeroed in the reduced basis.
const CLEAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct CommutantDescriptor {
    /// Basis pairs `(X_k, Y_k)`.
    pub basis: Vec<(CMat, CMat)>,
    pub dimension: usize,
    pub notes: Vec<String>,
}

impl CommutantDescriptor {
    /// `sum_k c_k (X_k, Y_k)`.
    pub fn element(&self, coords: &[num_complex::Complex64]) -> (CMat, CMat) {
        let (m, n) = match self.basis.first() {
            Some((x, y)) => (x.nrows(), y.nrows()),
            None => (0, 0),
        };
        let mut x = CMat::zeros(m, m);
        let mut y = CMat::zeros(n, n);
        for (c, (bx, by)) in coords.iter().zip(&self.basis) {
            x += bx * *c;
            y += by * *c;
        }
        (x, y)
    }

    /// Coordinates of the identity pair.
    pub fn identity_coords(&self) -> Vec<num_complex::Complex64> {
        let (m, n) = match self.basis.first() {
            Some((x, y)) => (x.nrows(), y.nrows()),
            None => return Vec::new(),
        };
        let target = CMat::from_column_slice(m * m + n * n, 1, stacked(&CMat::identity(m, m), &CMat::identity(n, n)).as_slice());
        let basis = CMat::from_columns(&self.basis.iter().map(|(x, y)| stacked(x, y)).collect::<Vec<_>>());
        linalg::lstsq(&basis, &target, 1e-12).column(0).iter().copied().collect()
    }

    /// The same algebra in another frame: `(L^{-1} X L, R Y R^{-1})`.
    pub fn conjugated(&self, l: &CMat, l_inv: &CMat, r: &CMat, r_inv: &CMat) -> CommutantDescriptor {
        CommutantDescriptor {
            basis: self.basis.iter().map(|(x, y)| (l_inv * x * l, r * y * r_inv)).collect(),
            dimension: self.dimension,
            notes: self.notes.clone(),
        }
    }
}

fn stacked(x: &CMat, y: &CMat) -> nalgebra::DVector<num_complex::Complex64> {
    nalgebra::DVector::from_iterator(x.len() + y.len(), x.iter().chain(y.iter()).copied())
}

/// Stabilizer algebra of the standard form's canonical pair.
pub fn commutant_basis(sf: &StandardForm) -> CommutantDescriptor {
    let mut d = commutant_of_pair(&sf.canonical.0, &sf.canonical.1);
    for (k, cl) in sf.structure.clusters.iter().enumerate() {
        let free: usize = cl.blocks.iter().map(|&a| cl.blocks.iter().map(|&b| a.min(b)).sum::<usize>()).sum();
        d.notes.push(format!("cluster {k}: blocks {:?}, {free} Toeplitz parameters", cl.blocks));
    }
    if !sf.structure.minimal_col.is_empty() || !sf.structure.minimal_row.is_empty() {
        d.notes.push(format!(
            "singular part: L blocks {:?}, L^T blocks {:?}, coupled numerically",
            sf.structure.minimal_col, sf.structure.minimal_row
        ));
    }
    d
}

/// `{(X, Y) : X e = e Y, X j = j Y}` as a reduced-row-echelon basis.
pub fn commutant_of_pair(e: &CMat, j: &CMat) -> CommutantDescriptor {
    let (m, n) = e.shape();
    let nx = m * m;
    let ny = n * n;
    let neq = m * n;
    let mut sys = CMat::zeros(2 * neq, nx + ny);
    for (half, c) in [e, j].into_iter().enumerate() {
        let base = half * neq;
        // vec(X C) = (C^T (x) I_m) vec X ; vec(C Y) = (I_n (x) C) vec Y (column-major).
        for col in 0..n {
            for row in 0..m {
                let eq = base + col * m + row;
                for t in 0..m {
                    sys[(eq, t * m + row)] += c[(t, col)];
                }
                for t in 0..n {
                    sys[(eq, nx + col * n + t)] -= c[(row, t)];
                }
            }
        }
    }
    let scale = linalg::fro(e).max(linalg::fro(j)).max(1.0);
    let null = linalg::null_space(&(sys / num_complex::Complex64::from(scale)), RankPolicy::unaudited(1e-10), "commutant")
        .expect("unaudited rank decisions do not fail");
    let rows = rref(&null.transpose());
    let basis = rows
        .row_iter()
        .map(|r| {
            let v: Vec<_> = r.iter().map(|z| clean(*z)).collect();
            (CMat::from_column_slice(m, m, &v[..nx]), CMat::from_column_slice(n, n, &v[nx..]))
        })
        .collect::<Vec<_>>();
    CommutantDescriptor { dimension: basis.len(), basis, notes: Vec::new() }
}

/// Commutant `{S : S j = j S}` of a square matrix.
pub fn commutant_of_matrix(j: &CMat) -> CommutantDescriptor {
    let n = j.nrows();
    commutant_of_pair(&CMat::identity(n, n), j)
}

fn clean(z: num_complex::Complex64) -> num_complex::Complex64 {
    let re = if z.re.abs() < CLEAN_TOL { 0.0 } else { z.re };
    let im = if z.im.abs() < CLEAN_TOL { 0.0 } else { z.im };
    num_complex::Complex64::new(re, im)
}

/// Reduced row echelon form with partial pivoting (rows assumed independent).
fn rref(a: &CMat) -> CMat {
    let mut a = a.clone();
    let (rows, cols) = a.shape();
    let mut r = 0;
    for c in 0..cols {
        if r == rows {
            break;
        }
        let (piv, mag) = (r..rows).map(|i| (i, a[(i, c)].norm())).max_by(|x, y| x.1.total_cmp(&y.1)).expect("rows remain");
        if mag < 1e-9 {
            continue;
        }
        a.swap_rows(r, piv);
        let p = a[(r, c)];
        for k in 0..cols {
            a[(r, k)] /= p;
        }
        for i in 0..rows {
            if i != r {
                let f = a[(i, c)];
                if f != ZERO {
                    for k in 0..cols {
                        let v = a[(r, k)];
                        a[(i, k)] -= f * v;
                    }
                }
            }
        }
        a[(r, c)] = ONE;
        r += 1;
    }
    a
}
