//! Search over the stabilizer of a canonical pair for Kronecker-factorizable
//! connecting operators.
//!
//! Two states with equal standard forms are connected by `P = S P_cand` and
//! `Q = Q_cand R^{-1}`, where `(S, R)` ranges over the invertible elements of
//! the stabilizer algebra (expressed in the frame of the candidates). They are
//! SLOCC-equivalent exactly when some choice makes both `P` and `Q` Kronecker
//! products. Membership of `P` and of `Q^{-1} = R Q_cand^{-1}` in the product
//! variety is tested by realignment, and both depend linearly on the
//! stabilizer coordinates.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::pencil::CommutantDescriptor;
use crate::realign::{kron_gap, nearest_kron};
use crate::tensor::{apply_except, apply_unchecked, StateTensor};

/// Smallest `sigma_min / sigma_max` for an orbit element to count as invertible.
pub const ORBIT_INVERTIBILITY_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchBudget {
    pub max_iterations: usize,
    pub restarts: usize,
    pub step_tolerance: f64,
    pub seed: u64,
    /// Acceptance bound on the summed realignment gaps.
    pub accept_tol: f64,
}

impl Default for SearchBudget {
    fn default() -> Self {
        Self::fast()
    }
}

impl SearchBudget {
    pub fn fast() -> Self {
        Self { max_iterations: 500, restarts: 50, step_tolerance: 1e-14, seed: 0, accept_tol: 1e-8 }
    }

    pub fn thorough() -> Self {
        Self { max_iterations: 2000, restarts: 200, ..Self::fast() }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn is_valid(&self) -> bool {
        self.max_iterations > 0 && self.restarts > 0 && self.step_tolerance > 0.0 && self.accept_tol > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SearchVerdict {
    Found,
    NotFoundWithinBudget,
}

/// A point of the stabilizer algebra.
#[derive(Debug, Clone)]
pub struct OrbitElement {
    pub x: CMat,
    pub y: CMat,
    pub invertible: bool,
    /// The smaller of the two inverse condition numbers.
    pub inverse_condition: f64,
}

#[derive(Debug, Clone)]
pub struct SearchOutcome {
    pub verdict: SearchVerdict,
    /// The stabilizer pair `(S, R)` reached.
    pub s: Option<(CMat, CMat)>,
    /// `((A, B), (C, D))` with `P = A (x) B` and `Q = C (x) D`.
    pub factored: Option<((CMat, CMat), (CMat, CMat))>,
    /// Summed realignment gaps at the returned (or best) point.
    pub residual: f64,
    /// Which phase decided (0 direct, 1 analytic, 2 numerical).
    pub phase: u8,
    pub iterations: usize,
    /// Best coordinates seen, usable as a starting point elsewhere.
    pub best_coords: Vec<Complex64>,
}

/// `sum_k c_k (X_k, Y_k)`, flagged when either component is numerically singular.
pub fn stabilizer_orbit_element(coords: &[Complex64], descriptor: &CommutantDescriptor) -> OrbitElement {
    let (x, y) = descriptor.element(coords);
    let ic = inverse_condition(&x).min(inverse_condition(&y));
    OrbitElement { x, y, invertible: ic > ORBIT_INVERTIBILITY_TOL, inverse_condition: ic }
}

fn inverse_condition(a: &CMat) -> f64 {
    if a.is_empty() {
        return 1.0;
    }
    let s = linalg::singular_values(a);
    match (s.first(), s.last()) {
        (Some(&hi), Some(&lo)) if hi > 0.0 => lo / hi,
        _ => 0.0,
    }
}

/// The linear family `c -> (S(c) P_cand, R(c) Q_cand^{-1})`.
struct Family {
    p_basis: Vec<CMat>,
    qi_basis: Vec<CMat>,
    rows: (usize, usize),
    cols: (usize, usize),
    /// Weighted stacked basis and its pseudo-inverse for the projection step.
    pinv: CMat,
    w_p: f64,
    w_q: f64,
}

impl Family {
    fn new(p_cand: &CMat, q_cand_inv: &CMat, descriptor: &CommutantDescriptor, rows: (usize, usize), cols: (usize, usize)) -> Self {
        let p_basis: Vec<CMat> = descriptor.basis.iter().map(|(s, _)| s * p_cand).collect();
        let qi_basis: Vec<CMat> = descriptor.basis.iter().map(|(_, r)| r * q_cand_inv).collect();
        let w_p = 1.0 / linalg::fro(p_cand).max(f64::MIN_POSITIVE);
        let w_q = 1.0 / linalg::fro(q_cand_inv).max(f64::MIN_POSITIVE);
        let np = p_cand.len();
        let nq = q_cand_inv.len();
        let mut stacked = CMat::zeros(np + nq, p_basis.len());
        for (k, (pb, qb)) in p_basis.iter().zip(&qi_basis).enumerate() {
            for (i, z) in pb.iter().enumerate() {
                stacked[(i, k)] = z * w_p;
            }
            for (i, z) in qb.iter().enumerate() {
                stacked[(np + i, k)] = z * w_q;
            }
        }
        let pinv = linalg::pinv(&stacked, 1e-12);
        Self { p_basis, qi_basis, rows, cols, pinv, w_p, w_q }
    }

    fn eval(&self, c: &[Complex64]) -> (CMat, CMat) {
        let mut p = CMat::zeros(self.p_basis[0].nrows(), self.p_basis[0].ncols());
        let mut q = CMat::zeros(self.qi_basis[0].nrows(), self.qi_basis[0].ncols());
        for ((pb, qb), ck) in self.p_basis.iter().zip(&self.qi_basis).zip(c) {
            p += pb * *ck;
            q += qb * *ck;
        }
        (p, q)
    }

    fn gap(&self, c: &[Complex64]) -> f64 {
        let (p, qi) = self.eval(c);
        if linalg::fro(&p) == 0.0 || linalg::fro(&qi) == 0.0 {
            return f64::INFINITY;
        }
        kron_gap(&p, self.rows).unwrap_or(f64::INFINITY) + kron_gap(&qi, self.cols).unwrap_or(f64::INFINITY)
    }

    /// One alternating-projection step: nearest products, then back onto the family.
    fn project(&self, c: &[Complex64]) -> Option<Vec<Complex64>> {
        let (p, qi) = self.eval(c);
        let (a, b, _) = nearest_kron(&p, self.rows).ok()?;
        let (cq, dq, _) = nearest_kron(&qi, self.cols).ok()?;
        let kp = linalg::kron(&a, &b);
        let kq = linalg::kron(&cq, &dq);
        let mut target = CMat::zeros(kp.len() + kq.len(), 1);
        for (i, z) in kp.iter().enumerate() {
            target[(i, 0)] = z * self.w_p;
        }
        for (i, z) in kq.iter().enumerate() {
            target[(kp.len() + i, 0)] = z * self.w_q;
        }
        let next = &self.pinv * target;
        let mut v: Vec<Complex64> = next.iter().copied().collect();
        normalize(&mut v);
        Some(v)
    }
}

fn normalize(v: &mut [Complex64]) {
    let n = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|z| *z /= n);
    }
}

/// Search the orbit for factorizable `(P, Q)`.
///
/// `descriptor` must be expressed in the candidates' frame: its pairs act
/// as `S P_cand` and `R Q_cand^{-1}`.
pub fn search_factorizable(
    p_cand: &CMat,
    q_cand: &CMat,
    descriptor: &CommutantDescriptor,
    shapes: ((usize, usize), (usize, usize)),
    budget: &SearchBudget,
) -> Result<SearchOutcome> {
    let q_inv = linalg::inverse(q_cand)?;
    let (rows, cols) = shapes;
    let family = Family::new(p_cand, &q_inv, descriptor, rows, cols);
    let id = descriptor.identity_coords();

    // Phase 0: the candidates themselves.
    let g0 = family.gap(&id);
    if g0 <= budget.accept_tol {
        return Ok(found(&family, descriptor, &id, g0, 0, 0));
    }
    let mut best = (g0, id.clone());

    // Phase 1: exhaustive for one- and two-dimensional algebras.
    match descriptor.dimension {
        0 | 1 => return Ok(not_found(best, 1, 0)),
        2 => {
            let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
            for c in pencil_line_roots(&family, &mut rng) {
                let el = stabilizer_orbit_element(&c, descriptor);
                if !el.invertible {
                    continue;
                }
                let g = family.gap(&c);
                if g <= budget.accept_tol {
                    return Ok(found(&family, descriptor, &c, g, 1, 0));
                }
                if g < best.0 {
                    best = (g, c);
                }
            }
            return Ok(not_found(best, 1, 0));
        }
        _ => {}
    }

    // Phase 2: alternating projections from seeded starting points.
    let mut iterations = 0;
    for r in 0..budget.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(budget.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(r as u64 + 1)));
        let mut c: Vec<Complex64> = if r == 0 {
            id.clone()
        } else {
            let spread = if r % 2 == 1 { 0.3 } else { 3.0 };
            id.iter().map(|z| z + linalg::complex_gaussian(&mut rng) * spread).collect()
        };
        normalize(&mut c);
        let mut g = family.gap(&c);
        for _ in 0..budget.max_iterations {
            iterations += 1;
            let Some(next) = family.project(&c) else { break };
            let step: f64 = next.iter().zip(&c).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>().sqrt();
            c = next;
            g = family.gap(&c);
            if g <= budget.accept_tol || step <= budget.step_tolerance {
                break;
            }
        }
        if g <= budget.accept_tol && stabilizer_orbit_element(&c, descriptor).invertible {
            let mut out = found(&family, descriptor, &c, g, 2, iterations);
            out.iterations = iterations;
            return Ok(out);
        }
        if g < best.0 {
            best = (g, c);
        }
    }
    Ok(not_found(best, 2, iterations))
}

fn found(family: &Family, descriptor: &CommutantDescriptor, c: &[Complex64], gap: f64, phase: u8, iterations: usize) -> SearchOutcome {
    let el = stabilizer_orbit_element(c, descriptor);
    let (p, qi) = family.eval(c);
    let factored = (|| {
        let (a, b, _) = nearest_kron(&p, family.rows).ok()?;
        let (ci, di, _) = nearest_kron(&qi, family.cols).ok()?;
        Some(((a, b), (linalg::inverse(&ci).ok()?, linalg::inverse(&di).ok()?)))
    })();
    SearchOutcome {
        verdict: if factored.is_some() { SearchVerdict::Found } else { SearchVerdict::NotFoundWithinBudget },
        s: Some((el.x, el.y)),
        factored,
        residual: gap,
        phase,
        iterations,
        best_coords: c.to_vec(),
    }
}

fn not_found(best: (f64, Vec<Complex64>), phase: u8, iterations: usize) -> SearchOutcome {
    SearchOutcome {
        verdict: SearchVerdict::NotFoundWithinBudget,
        s: None,
        factored: None,
        residual: best.0,
        phase,
        iterations,
        best_coords: best.1,
    }
}

/// For a two-dimensional family `c = (1, z)` (and `(0, 1)`), the common
/// roots of all `2 x 2` minors of both realignments. A random combination of
/// the minors is a quadratic in `z` whose roots contain every common root.
fn pencil_line_roots(family: &Family, rng: &mut ChaCha8Rng) -> Vec<Vec<Complex64>> {
    let mut coef = [ZERO; 3];
    let mut add = |m0: &CMat, m1: &CMat, grouping: (usize, usize), coef: &mut [Complex64; 3]| {
        let (Ok(a), Ok(b)) = (crate::realign::realign(m0, grouping), crate::realign::realign(m1, grouping)) else {
            return;
        };
        let s = linalg::fro(&a).max(linalg::fro(&b)).max(f64::MIN_POSITIVE);
        let (a, b) = (a / Complex64::from(s), b / Complex64::from(s));
        let (r, c) = a.shape();
        for i in 0..r {
            for j in i + 1..r {
                for k in 0..c {
                    for l in k + 1..c {
                        let w = linalg::complex_gaussian(rng);
                        coef[0] += w * (a[(i, k)] * a[(j, l)] - a[(i, l)] * a[(j, k)]);
                        coef[1] += w
                            * (a[(i, k)] * b[(j, l)] + b[(i, k)] * a[(j, l)] - a[(i, l)] * b[(j, k)] - b[(i, l)] * a[(j, k)]);
                        coef[2] += w * (b[(i, k)] * b[(j, l)] - b[(i, l)] * b[(j, k)]);
                    }
                }
            }
        }
    };
    add(&family.p_basis[0], &family.p_basis[1], family.rows, &mut coef);
    add(&family.qi_basis[0], &family.qi_basis[1], family.cols, &mut coef);
    let mut out = vec![vec![ZERO, ONE]];
    let scale = coef.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        // Every point of the line is a common root.
        out.push(vec![ONE, linalg::complex_gaussian(rng)]);
        return out;
    }
    let [c0, c1, c2] = coef.map(|z| z / scale);
    if c2.norm() > 1e-12 {
        let disc = (c1 * c1 - c0 * c2 * 4.0).sqrt();
        for root in [(-c1 + disc) / (c2 * 2.0), (-c1 - disc) / (c2 * 2.0)] {
            out.push(vec![ONE, root]);
        }
    } else if c1.norm() > 1e-12 {
        out.push(vec![ONE, -c0 / c1]);
    }
    out
}

/// Damped Gauss-Newton (Levenberg-Marquardt) on
/// `(A_1 (x) ... (x) A_k) source = target`, starting from `init`.
/// Returns the operators and the relative residual.
pub fn refine_local_ops(source: &StateTensor, target: &StateTensor, init: &[CMat], iterations: usize) -> (Vec<CMat>, f64) {
    let dims = source.dims().to_vec();
    let tnorm = target.norm().max(f64::MIN_POSITIVE);
    let residual_of = |ops: &[CMat]| -> (Vec<Complex64>, f64) {
        let r: Vec<Complex64> =
            apply_unchecked(source, ops).iter().zip(target.amplitudes()).map(|(a, b)| a - b).collect();
        let n = r.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        (r, n / tnorm)
    };
    let mut ops = init.to_vec();
    balance(&mut ops);
    let (mut r, mut res) = residual_of(&ops);
    if !res.is_finite() {
        return (ops, f64::INFINITY);
    }
    let nparams: usize = dims.iter().map(|d| d * d).sum();
    let len = r.len();
    let strides: Vec<usize> = (0..dims.len()).map(|k| dims[k + 1..].iter().product()).collect();
    let mut mu = -1.0;
    let mut mu_cap = f64::INFINITY;
    for _ in 0..iterations {
        if res <= 1e-15 {
            break;
        }
        // Jacobian with respect to the entries of each operator.
        let mut jac = CMat::zeros(len, nparams);
        let mut col0 = 0;
        for k in 0..dims.len() {
            let z = apply_except(source, &ops, k);
            let zs = z.amplitudes();
            let d = dims[k];
            for flat in 0..len {
                let ik = (flat / strides[k]) % d;
                let base = flat - ik * strides[k];
                for b in 0..d {
                    // Column-major vec of A_k: entry (ik, b).
                    jac[(flat, col0 + b * d + ik)] = zs[base + b * strides[k]];
                }
            }
            col0 += d * d;
        }
        let jh = jac.adjoint();
        let jtj = &jh * &jac;
        let rv = CMat::from_column_slice(len, 1, &r);
        let grad = &jh * rv;
        if mu < 0.0 {
            mu = 1e-3 * (0..nparams).map(|i| jtj[(i, i)].re).fold(0.0, f64::max);
            mu_cap = mu * 1e12;
        }
        let mut improved = false;
        for _ in 0..12 {
            #[allow(clippy::neg_cmp_op_on_partial_ord)]
            if !(mu <= mu_cap) || !grad.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
                break;
            }
            let mut lhs = jtj.clone();
            for i in 0..nparams {
                lhs[(i, i)] += Complex64::from(mu);
            }
            let step = linalg::lstsq(&lhs, &grad, 1e-14);
            let mut trial = ops.clone();
            let mut off = 0;
            for (k, op) in trial.iter_mut().enumerate() {
                let d = dims[k];
                for b in 0..d {
                    for a in 0..d {
                        op[(a, b)] -= step[(off + b * d + a, 0)];
                    }
                }
                off += d * d;
            }
            let (_, res2) = residual_of(&trial);
            if res2 < res {
                ops = trial;
                mu = (mu / 3.0).max(1e-15);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
        balance(&mut ops);
        let (r2, res2) = residual_of(&ops);
        r = r2;
        res = res2;
    }
    (ops, res)
}

/// Equalize Frobenius norms across factors without changing their product.
fn balance(ops: &mut [CMat]) {
    let norms: Vec<f64> = ops.iter().map(linalg::fro).collect();
    if norms.iter().any(|&n| n == 0.0 || !n.is_finite()) {
        return;
    }
    let g = (norms.iter().map(|n| n.ln()).sum::<f64>() / norms.len() as f64).exp();
    for (op, n) in ops.iter_mut().zip(norms) {
        *op *= Complex64::from(g / n);
    }
}
