//! Numerical Kronecker canonical form with explicit transforms.
//!
//! 1. Right minimal indices from the null spaces of the block-Toeplitz
//!    matrices of `Gamma_2 - lambda Gamma_1`; the coefficient vectors of a
//!    minimal polynomial basis split off the `L_eps` blocks.
//! 2. The same on the transpose for the `L_eta^T` blocks.
//! 3. The square regular remainder is reduced through the single matrix
//!    `M = (B - alpha A)^{-1} A`, whose Jordan structure at `mu` is the
//!    pencil's at `lambda = alpha + 1/mu` (`mu = 0` is `lambda = inf`).
//! 4. The block-triangular result is decoupled by generalized Sylvester
//!    equations.

use num_complex::Complex64;

use super::{EigenCluster, Eigenvalue, KroneckerStructure, GENERIC_SAMPLES};
use crate::error::{Result, SloccError};
use crate::linalg::{self, CMat, CVec, RankPolicy, ONE, ZERO};
use crate::tensor::MatrixPencil;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KcfOptions {
    /// Relative singular-value threshold for every rank decision.
    pub tol: f64,
    /// Eigenvalues of `M` closer than this (relative to `|M|`) are merged
    /// unconditionally.
    pub merge_radius: f64,
    /// Wider single-linkage radius for candidate defective clusters; a
    /// candidate is kept only if its restriction is numerically nilpotent
    /// around its mean.
    pub defect_radius: f64,
}

impl Default for KcfOptions {
    fn default() -> Self {
        Self { tol: 1e-9, merge_radius: 1e-6, defect_radius: 1e-2 }
    }
}

impl KcfOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

/// `P (Gamma_1, Gamma_2) Q = canonical` with `structure` describing the blocks.
#[derive(Debug, Clone)]
pub struct KcfResult {
    pub structure: KroneckerStructure,
    pub canonical: (CMat, CMat),
    pub p: CMat,
    pub q: CMat,
    pub residual: f64,
}

pub fn kcf(pencil: &MatrixPencil, opts: &KcfOptions) -> Result<KcfResult> {
    kcf_pair(&pencil.gamma1, &pencil.gamma2, opts, None)
}

/// Kronecker canonical form of `(a, b)`.
///
/// With `targets`, the eigenvalue clusters are snapped to (and ordered as)
/// the given points; the number of clusters must match.
pub fn kcf_pair(a: &CMat, b: &CMat, opts: &KcfOptions, targets: Option<&[Eigenvalue]>) -> Result<KcfResult> {
    let (m, n) = a.shape();
    let policy = RankPolicy::new(opts.tol);
    let scale = (linalg::fro(a).powi(2) + linalg::fro(b).powi(2)).sqrt();
    if scale == 0.0 {
        let structure = KroneckerStructure { minimal_col: vec![0; n], minimal_row: vec![0; m], clusters: vec![] };
        let canonical = structure.canonical_pair();
        return Ok(KcfResult { structure, canonical, p: CMat::identity(m, m), q: CMat::identity(n, n), residual: 0.0 });
    }
    let inv_scale = Complex64::from(1.0 / scale);
    let (a0, b0) = (a * inv_scale, b * inv_scale);
    let r = normal_rank(&a0, &b0, policy)?;

    // Right singular part.
    let right = minimal_chains(&a0, &b0, n - r, policy, "right minimal indices")?;
    let mut q_r = Vec::new();
    let mut y_r = Vec::new();
    for chain in &right {
        for (j, x) in chain.iter().enumerate() {
            q_r.push(x.clone());
            if j + 1 < chain.len() {
                y_r.push(&a0 * x);
            }
        }
    }
    let q_r = linalg::hstack(n, &q_r);
    let y_r = linalg::hstack(m, &y_r);
    let (m_r, n_r) = (y_r.ncols(), q_r.ncols());
    let q1 = hcat(&q_r, &linalg::complement(&q_r));
    let p1 = linalg::inverse(&hcat(&y_r, &linalg::complement(&y_r)))
        .map_err(|_| SloccError::Reconstruction("right singular chains are dependent".into()))?;
    let mut p_acc = p1;
    let mut q_acc = q1;

    // Left singular part of the remainder.
    let (ac, bc) = (&p_acc * &a0 * &q_acc, &p_acc * &b0 * &q_acc);
    let rest_a = ac.view((m_r, n_r), (m - m_r, n - n_r)).into_owned();
    let rest_b = bc.view((m_r, n_r), (m - m_r, n - n_r)).into_owned();
    let (mp, np) = rest_a.shape();
    let left = minimal_chains(&rest_a.transpose(), &rest_b.transpose(), m - r, policy, "left minimal indices")?;
    let mut z_l = Vec::new();
    let mut u_l = Vec::new();
    for chain in &left {
        for (j, z) in chain.iter().enumerate() {
            z_l.push(z.clone());
            if j + 1 < chain.len() {
                u_l.push(rest_a.transpose() * z);
            }
        }
    }
    // Rows of P2 (resp. Q2^{-1}) stored as columns here.
    let z_l = linalg::hstack(mp, &z_l);
    let u_l = linalg::hstack(np, &u_l);
    let (m_l, n_l) = (z_l.ncols(), u_l.ncols());
    let p2 = hcat(&linalg::complement(&z_l.map(|z| z.conj())).map(|z| z.conj()), &z_l).transpose();
    let q2 = linalg::inverse(&hcat(&linalg::complement(&u_l.map(|z| z.conj())).map(|z| z.conj()), &u_l).transpose())
        .map_err(|_| SloccError::Reconstruction("left singular chains are dependent".into()))?;
    p_acc = embed(&p2, m_r, m) * p_acc;
    q_acc *= embed(&q2, n_r, n);

    // Regular part.
    let reg_rows = mp - m_l;
    let reg_cols = np - n_l;
    if reg_rows != reg_cols {
        return Err(SloccError::Reconstruction(format!(
            "regular part is {reg_rows}x{reg_cols} after removing singular blocks"
        )));
    }
    let (ac, bc) = (&p_acc * &a0 * &q_acc, &p_acc * &b0 * &q_acc);
    let reg_a = ac.view((m_r, n_r), (reg_rows, reg_cols)).into_owned();
    let reg_b = bc.view((m_r, n_r), (reg_rows, reg_cols)).into_owned();
    let (p3, q3, clusters) = weierstrass(&reg_a, &reg_b, opts, targets)?;
    p_acc = embed(&p3, m_r, m) * p_acc;
    q_acc *= embed(&q3, n_r, n);

    // Decouple: first the right singular block from everything below it,
    // then the regular block from the left singular block.
    for (row0, col0) in [(m_r, n_r), (m_r + reg_rows, n_r + reg_cols)] {
        if row0 == 0 && col0 == 0 || row0 == m && col0 == n {
            continue;
        }
        let top = if row0 == m_r { 0 } else { m_r };
        let lft = if col0 == n_r { 0 } else { n_r };
        let (ac, bc) = (&p_acc * &a0 * &q_acc, &p_acc * &b0 * &q_acc);
        let (x, y) = decouple(&ac, &bc, top, lft, row0, col0)?;
        let mut pe = CMat::identity(m, m);
        pe.view_mut((top, row0), x.shape()).copy_from(&x);
        let mut qe = CMat::identity(n, n);
        qe.view_mut((lft, col0), y.shape()).copy_from(&y);
        p_acc = pe * p_acc;
        q_acc *= qe;
    }

    let structure = KroneckerStructure {
        minimal_col: right.iter().map(|c| c.len() - 1).collect(),
        minimal_row: left.iter().map(|c| c.len() - 1).collect(),
        clusters,
    };
    let canonical = structure.canonical_pair();
    let (p, q, residual) = refine_transforms(a, b, p_acc * inv_scale, q_acc, &canonical, REFINE_STEPS);
    // Rounding alone leaves about eps |P| |(a, b)| |Q| / |target|; long Jordan
    // chains of a small nilpotent make that floor large.
    let na = (linalg::fro(a).powi(2) + linalg::fro(b).powi(2)).sqrt();
    let nt = (linalg::fro(&canonical.0).powi(2) + linalg::fro(&canonical.1).powi(2)).sqrt();
    let floor = f64::EPSILON * linalg::fro(&p) * na * linalg::fro(&q) / nt.max(f64::MIN_POSITIVE);
    // Negated so that a NaN residual fails.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(residual <= RECONSTRUCTION_GATE.max(FLOOR_FACTOR * floor)) {
        return Err(SloccError::Reconstruction(format!("canonical form residual {residual:.3e}")));
    }
    Ok(KcfResult { structure, canonical, p, q, residual })
}

/// Gauss-Newton steps applied to the accumulated transforms.
pub(crate) const REFINE_STEPS: usize = 3;
/// Largest accepted reconstruction residual, unless the rounding floor of
/// the transforms is higher; then `FLOOR_FACTOR` times that floor.
const RECONSTRUCTION_GATE: f64 = 1e-6;
const FLOOR_FACTOR: f64 = 1e3;

/// Improve `(p, q)` so that `(p a q, p b q)` matches `target`, by
/// minimum-norm linearized corrections. Steps that do not reduce the
/// residual are discarded.
pub(crate) fn refine_transforms(
    a: &CMat,
    b: &CMat,
    mut p: CMat,
    mut q: CMat,
    target: &(CMat, CMat),
    steps: usize,
) -> (CMat, CMat, f64) {
    let mut best = pair_residual(a, b, &p, &q, target);
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return (p, q, best);
    }
    for _ in 0..steps {
        if best <= 1e-15 {
            break;
        }
        let nx = m * m;
        let neq = m * n;
        let mut sys = CMat::zeros(2 * neq, nx + n * n);
        let mut rhs = CMat::zeros(2 * neq, 1);
        for (half, (g, t)) in [(a, &target.0), (b, &target.1)].into_iter().enumerate() {
            let gq = g * &q;
            let pg = &p * g;
            let r = t - &p * &gq;
            let base = half * neq;
            // vec(dP G) = (G^T (x) I) vec dP ; vec(F dQ) = (I (x) F) vec dQ.
            for col in 0..n {
                for row in 0..m {
                    let eq = base + col * m + row;
                    for k in 0..m {
                        sys[(eq, k * m + row)] = gq[(k, col)];
                    }
                    for k in 0..n {
                        sys[(eq, nx + col * n + k)] = pg[(row, k)];
                    }
                    rhs[(eq, 0)] = r[(row, col)];
                }
            }
        }
        let sol = linalg::lstsq(&sys, &rhs, 1e-12);
        let dp = CMat::from_column_slice(m, m, &sol.as_slice()[..nx]);
        let dq = CMat::from_column_slice(n, n, &sol.as_slice()[nx..]);
        // Backtrack when the second-order term spoils the full step.
        let mut accepted = false;
        for h in [1.0, 0.5, 0.25, 0.125] {
            let h = Complex64::from(h);
            let (p2, q2) = (&p + &dp * h, &q + &dq * h);
            let res = pair_residual(a, b, &p2, &q2, target);
            if res < best {
                p = p2;
                q = q2;
                best = res;
                accepted = true;
                break;
            }
        }
        if !accepted {
            break;
        }
    }
    (p, q, best)
}

/// Relative Frobenius error of `(P a Q, P b Q)` against `target`.
pub(crate) fn pair_residual(a: &CMat, b: &CMat, p: &CMat, q: &CMat, target: &(CMat, CMat)) -> f64 {
    let ea = linalg::fro(&(p * a * q - &target.0));
    let eb = linalg::fro(&(p * b * q - &target.1));
    let nt = (linalg::fro(&target.0).powi(2) + linalg::fro(&target.1).powi(2)).sqrt();
    if nt == 0.0 {
        (ea * ea + eb * eb).sqrt()
    } else {
        (ea * ea + eb * eb).sqrt() / nt
    }
}

fn hcat(a: &CMat, b: &CMat) -> CMat {
    let mut out = CMat::zeros(a.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut((0, a.ncols()), b.shape()).copy_from(b);
    out
}

/// `diag(I_offset, block, I_rest)` of total size `total`.
fn embed(block: &CMat, offset: usize, total: usize) -> CMat {
    let mut out = CMat::identity(total, total);
    out.view_mut((offset, offset), block.shape()).copy_from(block);
    out
}

/// Largest rank over the generic samples. A sample close to an eigenvalue
/// can be ambiguous; that only matters if its larger reading would exceed
/// the rank decided elsewhere.
fn normal_rank(a: &CMat, b: &CMat, policy: RankPolicy) -> Result<usize> {
    let mut best = 0;
    let mut unstable: Option<(usize, SloccError)> = None;
    for &(x, y, u, v) in &GENERIC_SAMPLES {
        let sv = linalg::singular_values(&(a * Complex64::new(x, y) + b * Complex64::new(u, v)));
        match policy.rank_of(&sv, "normal rank") {
            Ok(r) => best = best.max(r),
            Err(e) => {
                let upper = sv.iter().filter(|&&s| s > policy.tol * sv[0] / 10.0).count();
                if unstable.as_ref().is_none_or(|(u, _)| upper > *u) {
                    unstable = Some((upper, e));
                }
            }
        }
    }
    match unstable {
        Some((upper, e)) if upper > best => Err(e),
        _ => Ok(best),
    }
}

/// Minimal polynomial basis of the right null space of `b - lambda a`, as
/// coefficient chains `x_0 .. x_eps` (ascending `eps`).
fn minimal_chains(a: &CMat, b: &CMat, count: usize, policy: RankPolicy, context: &str) -> Result<Vec<Vec<CVec>>> {
    let (m, n) = a.shape();
    let mut found: Vec<Vec<CVec>> = Vec::new();
    let mut degree = 0;
    while found.len() < count {
        if degree > m {
            return Err(SloccError::Reconstruction(format!("{context}: only {} of {count} found", found.len())));
        }
        let d = degree;
        // Coefficients of lambda^0 .. lambda^(d+1) in (b - lambda a) x(lambda).
        let mut w = CMat::zeros((d + 2) * m, (d + 1) * n);
        for j in 0..=d {
            w.view_mut((j * m, j * n), (m, n)).copy_from(b);
            w.view_mut(((j + 1) * m, j * n), (m, n)).copy_from(&(-a));
        }
        let null = linalg::null_space(&w, policy, context)?;
        let shifted: usize = found.iter().map(|c| d + 2 - c.len()).sum();
        let fresh = null.ncols() as isize - shifted as isize;
        if fresh < 0 {
            return Err(SloccError::Reconstruction(format!("{context}: inconsistent null-space growth")));
        }
        if fresh > 0 {
            let fresh = fresh as usize;
            let mut shifts = Vec::new();
            for chain in &found {
                for t in 0..=(d + 1 - chain.len()) {
                    let mut v = CVec::zeros((d + 1) * n);
                    for (j, x) in chain.iter().enumerate() {
                        v.rows_mut((t + j) * n, n).copy_from(x);
                    }
                    shifts.push(v);
                }
            }
            let projected = if shifts.is_empty() {
                null
            } else {
                let s = linalg::hstack((d + 1) * n, &shifts);
                let qs = linalg::column_span(&s, RankPolicy::unaudited(1e-10), context)?;
                &null - &qs * (qs.adjoint() * &null)
            };
            let svd = linalg::full_svd(&projected);
            if svd.s.len() < fresh || svd.s[fresh - 1] < 1e-6 {
                return Err(SloccError::Reconstruction(format!("{context}: degenerate new null vectors")));
            }
            for k in 0..fresh {
                let v = svd.u.column(k);
                found.push((0..=d).map(|j| v.rows(j * n, n).into_owned()).collect());
            }
        }
        degree += 1;
    }
    Ok(found)
}

/// Solve `K Y + X M = -F` (both halves) for the off-diagonal block at
/// rows `top..row0`, cols `col0..` and apply nothing; returns `(X, Y)`.
fn decouple(ac: &CMat, bc: &CMat, top: usize, lft: usize, row0: usize, col0: usize) -> Result<(CMat, CMat)> {
    let (m, n) = ac.shape();
    let (mk, nk) = (row0 - top, col0 - lft);
    let (mm, nm) = (m - row0, n - col0);
    if mk == 0 && nk == 0 || mm == 0 && nm == 0 {
        return Ok((CMat::zeros(mk, mm), CMat::zeros(nk, nm)));
    }
    let blocks = |x: &CMat| {
        (
            x.view((top, lft), (mk, nk)).into_owned(),
            x.view((row0, col0), (mm, nm)).into_owned(),
            x.view((top, col0), (mk, nm)).into_owned(),
        )
    };
    let (k1, m1, f1) = blocks(ac);
    let (k2, m2, f2) = blocks(bc);
    let fnorm = linalg::fro(&f1) + linalg::fro(&f2);
    if fnorm == 0.0 {
        return Ok((CMat::zeros(mk, mm), CMat::zeros(nk, nm)));
    }
    let nx = mk * mm;
    let ny = nk * nm;
    let neq = mk * nm;
    let mut sys = CMat::zeros(2 * neq, nx + ny);
    let mut rhs = CMat::zeros(2 * neq, 1);
    for (half, (k, mx, f)) in [(&k1, &m1, &f1), (&k2, &m2, &f2)].into_iter().enumerate() {
        let base = half * neq;
        // vec(X M) = (M^T (x) I) vec(X); vec(K Y) = (I (x) K) vec(Y), column-major.
        for col in 0..nm {
            for row in 0..mk {
                let eq = base + col * mk + row;
                for t in 0..mm {
                    sys[(eq, t * mk + row)] += mx[(t, col)];
                }
                for t in 0..nk {
                    sys[(eq, nx + col * nk + t)] += k[(row, t)];
                }
                rhs[(eq, 0)] = -f[(row, col)];
            }
        }
    }
    let sol = linalg::lstsq(&sys, &rhs, 1e-12);
    let resid = linalg::fro(&(&sys * &sol - &rhs)) / fnorm;
    if resid > 1e-8 {
        return Err(SloccError::Reconstruction(format!("block decoupling residual {resid:.3e}")));
    }
    let x = CMat::from_column_slice(mk, mm, &sol.as_slice()[..nx]);
    let y = CMat::from_column_slice(nk, nm, &sol.as_slice()[nx..]);
    Ok((x, y))
}

const ALPHA_CANDIDATES: [(f64, f64); 6] =
    [(0.3719, 0.8127), (-1.1301, 0.2939), (0.7137, -1.4219), (2.3011, 1.1037), (-0.4513, -0.6047), (0.0871, 3.1173)];

/// Weierstrass form of a square regular pencil `(a, b)`: returns `(P, Q,
/// clusters)` with `P (a, b) Q` canonical for the clusters.
fn weierstrass(
    a: &CMat,
    b: &CMat,
    opts: &KcfOptions,
    targets: Option<&[Eigenvalue]>,
) -> Result<(CMat, CMat, Vec<EigenCluster>)> {
    let r = a.nrows();
    if r == 0 {
        if targets.is_some_and(|t| !t.is_empty()) {
            return Err(SloccError::Reconstruction("eigenvalue targets for an empty regular part".into()));
        }
        return Ok((CMat::zeros(0, 0), CMat::zeros(0, 0), Vec::new()));
    }
    let na = linalg::fro(a);
    let nb = linalg::fro(b);
    let s = if na > 0.0 { (nb / na).clamp(1e-2, 1e2) } else { 1.0 };
    let mut best: Option<(f64, Complex64)> = None;
    for &(x, y) in &ALPHA_CANDIDATES {
        let alpha = Complex64::new(x, y) * s;
        let sv = linalg::singular_values(&(b - a * alpha));
        let q = sv.last().copied().unwrap_or(0.0) / sv[0].max(f64::MIN_POSITIVE);
        if best.is_none_or(|(bq, _)| q > bq) {
            best = Some((q, alpha));
        }
    }
    let (quality, alpha) = best.expect("candidates are non-empty");
    if quality < 1e-12 {
        return Err(SloccError::Reconstruction("regular part looks singular".into()));
    }
    let g = b - a * alpha;
    let ginv = linalg::inverse(&g)?;
    let mmat = &ginv * a;
    // Reference scale for `M`: a bound that does not shrink with its spectrum.
    let norm_m = (linalg::singular_values(&ginv)[0] * (na * na + nb * nb).sqrt()).max(f64::MIN_POSITIVE);
    let mu_of = |ev: &Eigenvalue| match ev {
        Eigenvalue::Infinite => ZERO,
        Eigenvalue::Finite(z) => ONE / (z - alpha),
    };

    let eigs = linalg::eigenvalues(&mmat);
    let mut groups = cluster_eigenvalues(&mmat, &eigs, norm_m, opts)?;

    // Mean of each group, snapped to a target or to infinity.
    let mut means: Vec<Complex64> =
        groups.iter().map(|g| g.iter().map(|&i| eigs[i]).sum::<Complex64>() / (g.len() as f64)).collect();
    let mut order: Vec<usize> = (0..groups.len()).collect();
    match targets {
        Some(t) => {
            if t.len() != groups.len() {
                return Err(SloccError::Reconstruction(format!(
                    "expected {} eigenvalue clusters, found {}",
                    t.len(),
                    groups.len()
                )));
            }
            let mut assigned = vec![usize::MAX; t.len()];
            for (gi, mean) in means.iter().enumerate() {
                let ev = eigen_of(*mean, alpha, norm_m, opts.merge_radius);
                let (ti, dist) = t
                    .iter()
                    .enumerate()
                    .filter(|(ti, _)| assigned[*ti] == usize::MAX)
                    .map(|(ti, tv)| (ti, tv.chordal(&ev)))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("targets remain");
                if dist > 1e-3 {
                    return Err(SloccError::Reconstruction(format!("eigenvalue drifted {dist:.2e} from its target")));
                }
                assigned[ti] = gi;
            }
            order = assigned;
            for (ti, &gi) in order.iter().enumerate() {
                means[gi] = mu_of(&t[ti]);
            }
        }
        None => {
            for mean in means.iter_mut() {
                if mean.norm() <= opts.merge_radius * norm_m {
                    *mean = ZERO;
                }
            }
            order.sort_by(|&i, &j| {
                let (ei, ej) = (eigen_of(means[i], alpha, norm_m, 0.0), eigen_of(means[j], alpha, norm_m, 0.0));
                match (ei, ej) {
                    (Eigenvalue::Infinite, Eigenvalue::Infinite) => std::cmp::Ordering::Equal,
                    (Eigenvalue::Infinite, _) => std::cmp::Ordering::Less,
                    (_, Eigenvalue::Infinite) => std::cmp::Ordering::Greater,
                    (Eigenvalue::Finite(x), Eigenvalue::Finite(y)) => x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)),
                }
            });
        }
    }
    groups = order.iter().map(|&i| groups[i].clone()).collect();
    let means: Vec<Complex64> = order.iter().map(|&i| means[i]).collect();

    // Generalized eigenspaces.
    let mut vcols = Vec::new();
    for (grp, mean) in groups.iter().zip(&means) {
        let k = grp.len();
        let shifted = &mmat - CMat::identity(r, r) * *mean;
        let mut pow = CMat::identity(r, r);
        for _ in 0..k {
            pow = &pow * &shifted;
        }
        vcols.push(linalg::smallest_right_vectors(&pow, k));
    }
    let v = {
        let mut out = CMat::zeros(r, r);
        let mut c0 = 0;
        for blk in &vcols {
            out.view_mut((0, c0), blk.shape()).copy_from(blk);
            c0 += blk.ncols();
        }
        out
    };
    let vinv = linalg::inverse(&v).map_err(|_| SloccError::Reconstruction("eigenspaces are dependent".into()))?;
    let mblock = &vinv * &mmat * &v;

    // In this basis the pencil is `(mblock, I + alpha mblock)`, block diagonal
    // by cluster. Each cluster is reduced directly: for a finite value with
    // `a` invertible through `a^{-1} b - lambda`, for infinity through `b^{-1} a`.
    // Working with these nilpotents (rather than one of `M`) keeps the chain
    // vectors balanced when `alpha` is far from the eigenvalue.
    let p_tmp = linalg::inverse(&(&g * &v))?;
    let mut pb = Vec::new();
    let mut qb = Vec::new();
    let mut clusters = Vec::new();
    let mut c0 = 0;
    for (grp, mean) in groups.iter().zip(&means) {
        let k = grp.len();
        let id = CMat::identity(k, k);
        let mk = mblock.view((c0, c0), (k, k)).into_owned();
        let bk = &id + &mk * alpha;
        let (value, nil, lead) = if *mean == ZERO {
            let binv = linalg::inverse(&bk)?;
            (Eigenvalue::Infinite, &binv * &mk, bk)
        } else {
            let minv = linalg::inverse(&mk)?;
            let nil = &minv - &id * (ONE / mean);
            (Eigenvalue::Finite(alpha + ONE / mean), nil, mk.clone())
        };
        let ranks = jordan_ranks(&(&mk - &id * *mean), norm_m, opts.tol)?;
        let (chain, sizes) = chains_with_ranks(&nil, &ranks)?;
        pb.push(linalg::inverse(&(&lead * &chain))?);
        qb.push(chain);
        clusters.push(EigenCluster { value, blocks: sizes });
        c0 += k;
    }
    let p = linalg::block_diag(&pb) * p_tmp;
    let q = &v * linalg::block_diag(&qb);
    Ok((p, q, clusters))
}

fn eigen_of(mu: Complex64, alpha: Complex64, norm_m: f64, radius: f64) -> Eigenvalue {
    if mu.norm() <= radius * norm_m || mu == ZERO {
        Eigenvalue::Infinite
    } else {
        Eigenvalue::Finite(alpha + ONE / mu)
    }
}


/// Group eigenvalue indices: single linkage at the defect radius, each
/// candidate kept only if it passes the nilpotency check; rejected
/// candidates are split at the merge radius.
fn cluster_eigenvalues(mmat: &CMat, eigs: &[Complex64], norm_m: f64, opts: &KcfOptions) -> Result<Vec<Vec<usize>>> {
    let loose = single_linkage(eigs, &(0..eigs.len()).collect::<Vec<_>>(), opts.defect_radius * norm_m);
    let mut out = Vec::new();
    for grp in loose {
        if grp.len() == 1 || is_defective_cluster(mmat, eigs, &grp, norm_m) {
            out.push(grp);
        } else {
            out.extend(single_linkage(eigs, &grp, opts.merge_radius * norm_m));
        }
    }
    out.sort_by_key(|g| g[0]);
    Ok(out)
}

fn single_linkage(eigs: &[Complex64], members: &[usize], radius: f64) -> Vec<Vec<usize>> {
    let mut label: Vec<usize> = (0..members.len()).collect();
    fn find(label: &mut [usize], i: usize) -> usize {
        let mut i = i;
        while label[i] != i {
            label[i] = label[label[i]];
            i = label[i];
        }
        i
    }
    for i in 0..members.len() {
        for j in i + 1..members.len() {
            if (eigs[members[i]] - eigs[members[j]]).norm() <= radius {
                let (ri, rj) = (find(&mut label, i), find(&mut label, j));
                if ri != rj {
                    label[ri.max(rj)] = ri.min(rj);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of = std::collections::BTreeMap::new();
    for (i, &member) in members.iter().enumerate() {
        let root = find(&mut label, i);
        let gi = *root_of.entry(root).or_insert_with(|| {
            groups.push(Vec::new());
            groups.len() - 1
        });
        groups[gi].push(member);
    }
    groups
}

const ASSUMED_BACKWARD_ERROR: f64 = 1e-12;

fn is_defective_cluster(mmat: &CMat, eigs: &[Complex64], grp: &[usize], norm_m: f64) -> bool {
    let r = mmat.nrows();
    let k = grp.len();
    let mean = grp.iter().map(|&i| eigs[i]).sum::<Complex64>() / (k as f64);
    let shifted = mmat - CMat::identity(r, r) * mean;
    let mut pow = CMat::identity(r, r);
    for _ in 0..k {
        pow = &pow * &shifted;
    }
    let basis = linalg::smallest_right_vectors(&pow, k);
    let restricted = basis.adjoint() * mmat * &basis;
    let invariance = linalg::fro(&(mmat * &basis - &basis * &restricted)) / norm_m;
    let nil = restricted - CMat::identity(k, k) * mean;
    let mut p = CMat::identity(k, k);
    for _ in 0..k {
        p = &p * &nil;
    }
    // A nilpotent matrix perturbed by `delta` has `|nil^k| <= k delta |nil|^(k-1)`.
    // `delta` is a generous backward error for `M`, well below the rank tolerance.
    let delta = ASSUMED_BACKWARD_ERROR * norm_m;
    let bound = k as f64 * delta * (linalg::fro(&nil) + delta).powi(k as i32 - 1);
    invariance <= 1e-7 && linalg::fro(&p) <= bound
}

/// Jordan chains of a numerically nilpotent `nil`: returns `S` with
/// `nil S ~ S (N_{k1} (+) N_{k2} (+) ...)`, sizes descending.
pub fn jordan_chains(nil: &CMat, scale: f64, tol: f64) -> Result<(CMat, Vec<usize>)> {
    let ranks = jordan_ranks(nil, scale, tol)?;
    chains_with_ranks(nil, &ranks)
}

/// `rank(nil^j)` for `j = 0, 1, ...` down to zero, thresholded at
/// `tol * scale^j`. Rank drops of a nilpotent's powers never increase, so a
/// thresholded rank below the previous drop allows is raised to the bound.
fn jordan_ranks(nil: &CMat, scale: f64, tol: f64) -> Result<Vec<usize>> {
    let s = nil.nrows();
    let scale = scale.max(f64::MIN_POSITIVE);
    let mut ranks = vec![s];
    let mut pow = CMat::identity(s, s);
    while *ranks.last().expect("nonempty") > 0 {
        if ranks.len() > s + 1 {
            return Err(SloccError::Reconstruction("cluster is not nilpotent".into()));
        }
        pow = &pow * nil;
        let thr = tol * scale.powi(ranks.len() as i32);
        let rk = linalg::singular_values(&pow).iter().filter(|&&x| x > thr).count();
        let last = *ranks.last().expect("nonempty");
        if rk >= last && rk > 0 {
            return Err(SloccError::Reconstruction("cluster is not nilpotent".into()));
        }
        let floor = match ranks.len() {
            1 => 0,
            n => last.saturating_sub(ranks[n - 2] - last),
        };
        ranks.push(rk.max(floor));
    }
    Ok(ranks)
}

/// Chain basis of `nil` for a known rank sequence of its powers.
fn chains_with_ranks(nil: &CMat, ranks: &[usize]) -> Result<(CMat, Vec<usize>)> {
    let s = nil.nrows();
    if s == 0 {
        return Ok((CMat::zeros(0, 0), Vec::new()));
    }
    let mut kernels = vec![CMat::zeros(s, 0)];
    let mut pow = CMat::identity(s, s);
    let mut powers = vec![pow.clone()];
    for &rk in &ranks[1..] {
        pow = &pow * nil;
        let svd = linalg::full_svd(&pow);
        kernels.push(svd.v.columns(rk, s - rk).into_owned());
        powers.push(pow.clone());
    }
    let top = ranks.len() - 1;
    let at = |j: usize| if j < ranks.len() { ranks[j] } else { 0 };
    let mut heads: Vec<(usize, CVec)> = Vec::new();
    for j in (1..=top).rev() {
        let count = (at(j - 1) - at(j)) as isize - (at(j) - at(j + 1)) as isize;
        if count < 0 {
            return Err(SloccError::Reconstruction("inconsistent Jordan rank sequence".into()));
        }
        if count == 0 {
            continue;
        }
        let mut span_cols: Vec<CVec> = kernels[j - 1].column_iter().map(|c| c.into_owned()).collect();
        for (len, w) in &heads {
            span_cols.push(&powers[len - j] * w);
        }
        let kj = &kernels[j];
        let projected = if span_cols.is_empty() {
            kj.clone()
        } else {
            let h = linalg::column_span(&linalg::hstack(s, &span_cols), RankPolicy::unaudited(1e-10), "jordan")?;
            kj - &h * (h.adjoint() * kj)
        };
        let svd = linalg::full_svd(&projected);
        for t in 0..count as usize {
            heads.push((j, svd.u.column(t).into_owned()));
        }
    }
    heads.sort_by_key(|x| std::cmp::Reverse(x.0));
    let mut cols = Vec::with_capacity(s);
    let mut sizes = Vec::new();
    for (len, v) in &heads {
        for t in (0..*len).rev() {
            cols.push(&powers[t] * v);
        }
        sizes.push(*len);
    }
    if cols.len() != s {
        return Err(SloccError::Reconstruction("Jordan chains do not span the cluster".into()));
    }
    Ok((linalg::hstack(s, &cols), sizes))
}
