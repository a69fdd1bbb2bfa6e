//! Family labels and certified equivalence tests.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Result, SloccError};
use crate::linalg::{self, CMat};
use crate::pencil::gauge::PARAM_QUANTUM;
use crate::pencil::{commutant_basis, gauge_fix_all, kcf, KcfOptions, StandardForm, Transforms};
use crate::realign::nearest_kron;
use crate::search::{refine_local_ops, search_factorizable, stabilizer_orbit_element, SearchBudget, SearchVerdict};
use crate::tensor::{apply_local_ops, random_local_ops, to_matrix_pair, LocalOperatorTuple, MatrixPencil, StateTensor};

pub const DEFAULT_TOL: f64 = 1e-9;
pub const DEFAULT_CERT_TOL: f64 = 1e-8;
/// Levenberg-Marquardt steps used to polish a certificate.
const POLISH_STEPS: usize = 30;
/// Condition bound of the random local tuples used to re-gauge.
const REGAUGE_COND: f64 = 10.0;
/// Orbit-search restarts and refinement starts of the short first pass.
const QUICK_RESTARTS: usize = 4;
/// Iteration cap of the short first pass.
const QUICK_ITERATIONS: usize = 500;

/// What identifies an entanglement family.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyLabel {
    pub dims: Vec<usize>,
    pub structure_key: String,
    /// Parameters on the quantization grid, as `[re, im]`.
    pub params: Vec<[f64; 2]>,
    #[serde(skip)]
    pub exact_params: Vec<Complex64>,
    /// The slices were transposed so that rows never outnumber columns.
    pub transposed: bool,
}

impl FamilyLabel {
    fn from_form(dims: &[usize], sf: &StandardForm, transposed: bool) -> Self {
        Self {
            dims: dims.to_vec(),
            structure_key: sf.structure_key(),
            params: sf.quantized_params(),
            exact_params: sf.params.clone(),
            transposed,
        }
    }

    /// Byte-stable label text: structure key with quantized parameters.
    pub fn key(&self) -> String {
        let mut doc: serde_json::Value = serde_json::from_str(&self.structure_key).expect("structure key is JSON");
        doc["params"] = serde_json::to_value(&self.params).expect("params serialize");
        serde_json::to_string(&doc).expect("label serializes")
    }
}

impl PartialEq for FamilyLabel {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.transposed == other.transposed
            && self.structure_key == other.structure_key
            && self.exact_params.len() == other.exact_params.len()
            && self.exact_params.iter().zip(&other.exact_params).all(|(a, b)| (a - b).norm() <= PARAM_QUANTUM)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Genuineness {
    pub genuine: bool,
    pub explanation: String,
}

/// The necessary dimension condition: with the larger grouped dimension
/// called `LM`, every party can take part only if `LM <= 2 NH`.
pub fn genuine_check(dims: &[usize]) -> Genuineness {
    let (a, b) = grouped_dims(dims);
    let (big, small) = (a.max(b), a.min(b));
    let genuine = big <= 2 * small;
    let rel = if genuine { "<=" } else { ">" };
    Genuineness {
        genuine,
        explanation: format!(
            "grouped dimensions {big} and {small}: {big} {rel} 2*{small}; all parties can participate only if the larger grouped dimension is at most twice the smaller"
        ),
    }
}

fn grouped_dims(dims: &[usize]) -> (usize, usize) {
    if dims.len() == 5 {
        (dims[1] * dims[2], dims[3] * dims[4])
    } else {
        (dims[1], dims[2])
    }
}

/// Dimension condition plus entanglement across every cut of the grouped
/// tripartite picture `2 | LM | NH`.
pub fn state_genuineness(state: &StateTensor, tol: f64) -> Genuineness {
    let dims = genuine_check(state.dims());
    if !dims.genuine {
        return dims;
    }
    let (r, c) = grouped_dims(state.dims());
    let amps = state.amplitudes();
    // Flat index = (i * r + a) * c + b.
    let cuts = [
        ("the first party", CMat::from_fn(2, r * c, |i, j| amps[i * r * c + j])),
        ("the row group", CMat::from_fn(r, 2 * c, |a, j| amps[((j / c) * r + a) * c + j % c])),
        ("the column group", CMat::from_fn(c, 2 * r, |b, j| amps[((j / r) * r + j % r) * c + b])),
    ];
    for (name, m) in cuts {
        let s = linalg::singular_values(&m);
        if s.len() < 2 || s[1] <= tol * s[0] {
            return Genuineness {
                genuine: false,
                explanation: format!("{}; but the state is a product across {name}", dims.explanation),
            };
        }
    }
    Genuineness { genuine: true, explanation: format!("{}; entangled across every grouped cut", dims.explanation) }
}

#[derive(Debug, Clone)]
pub struct Classification {
    pub label: FamilyLabel,
    pub standard_form: StandardForm,
    pub transforms: Transforms,
    pub pencil: MatrixPencil,
    pub genuine: Genuineness,
}

pub fn classify(state: &StateTensor, tol: f64) -> Result<Classification> {
    Ok(classify_alternatives(state, tol)?.swap_remove(0))
}

/// Every gauge-fixed form reaching the label (they differ only in the
/// transforms); the first is the one `classify` returns.
pub fn classify_alternatives(state: &StateTensor, tol: f64) -> Result<Vec<Classification>> {
    let pencil = to_matrix_pair(state);
    let opts = KcfOptions::with_tol(tol);
    let pre = kcf(&pencil, &opts)?;
    let genuine = state_genuineness(state, tol);
    Ok(gauge_fix_all(&pencil, &pre, &opts)?
        .into_iter()
        .map(|(sf, tr)| Classification {
            label: FamilyLabel::from_form(state.dims(), &sf, pencil.transposed),
            standard_form: sf,
            transforms: tr,
            pencil: pencil.clone(),
            genuine: genuine.clone(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Equivalent,
    Inequivalent,
    SameFamilyUndecided,
}

#[derive(Debug, Clone, Serialize)]
pub struct SearchSummary {
    /// Phase that produced the certificate: 0 direct, 1 analytic, 2 orbit
    /// search, 3 joint refinement; `None` when undecided.
    pub phase: Option<u8>,
    pub gauge_alternatives: usize,
    pub orbit_dimension: usize,
    pub best_gap: f64,
    pub best_residual: f64,
    /// Found by the reversed or a re-gauged search, then re-verified.
    pub indirect: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub label_a: FamilyLabel,
    pub label_b: FamilyLabel,
    pub search: Option<SearchSummary>,
}

#[derive(Debug, Clone)]
pub struct EquivalenceCertificate {
    pub verdict: Verdict,
    /// `A1 ... A5` with `(A1 x ... x A5) psi = psi'`.
    pub operators: Option<LocalOperatorTuple>,
    pub residual: Option<f64>,
    pub diagnostics: Diagnostics,
}

#[derive(Serialize)]
struct OperatorDocument {
    party: usize,
    rows: usize,
    cols: usize,
    /// Row-major `[re, im]` pairs.
    entries: Vec<Vec<[f64; 2]>>,
}

#[derive(Serialize)]
struct CertificateDocument<'a> {
    verdict: Verdict,
    residual: Option<f64>,
    operators: Option<Vec<OperatorDocument>>,
    diagnostics: &'a Diagnostics,
}

impl EquivalenceCertificate {
    pub fn to_json(&self) -> String {
        let operators = self.operators.as_ref().map(|ops| {
            ops.ops()
                .iter()
                .enumerate()
                .map(|(k, m)| OperatorDocument {
                    party: k + 1,
                    rows: m.nrows(),
                    cols: m.ncols(),
                    entries: (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect(),
                })
                .collect()
        });
        let doc = CertificateDocument { verdict: self.verdict, residual: self.residual, operators, diagnostics: &self.diagnostics };
        serde_json::to_string_pretty(&doc).expect("certificate serializes")
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CompareOptions {
    pub tol: f64,
    pub cert_tol: f64,
    pub budget: SearchBudget,
}

impl Default for CompareOptions {
    fn default() -> Self {
        Self { tol: DEFAULT_TOL, cert_tol: DEFAULT_CERT_TOL, budget: SearchBudget::default() }
    }
}

/// One way of connecting the two standard forms.
struct Connection {
    t: CMat,
    p_cand: CMat,
    q_cand: CMat,
    descriptor: crate::pencil::CommutantDescriptor,
}

/// Decide SLOCC equivalence of `a` and `b`.
///
/// When the search from `a` to `b` stays undecided, the search from `b` to
/// `a` is tried and its inverted certificate re-verified: the two directions
/// start from different gauge transforms and rarely fail together.
pub fn compare(a: &StateTensor, b: &StateTensor, opts: &CompareOptions) -> Result<EquivalenceCertificate> {
    if a.dims() != b.dims() {
        return Err(SloccError::DimsMismatch(a.dims().to_vec(), b.dims().to_vec()));
    }
    let mut forward = compare_directed(a, b, opts)?;
    if forward.verdict != Verdict::SameFamilyUndecided {
        return Ok(forward);
    }
    // The fallbacks below only contribute candidates to verify, so their
    // numerical failures are not fatal.
    let mut found = compare_directed(b, a, opts)
        .ok()
        .and_then(|back| Some((back.operators.as_ref()?.inverse().ok()?, back.diagnostics.search)));
    // Re-gauge: search towards `R b` for seeded random local `R`. This moves
    // the connecting `T` across the continuous Moebius stabilizer that the
    // orbit search cannot reach when fewer than three eigenvalues are fixed.
    for r in 0..regauge_attempts(&opts.budget) {
        if found.as_ref().is_some_and(|(ops, _)| verify(a, b, ops.ops().to_vec(), opts.cert_tol).is_some()) {
            break;
        }
        let seed = opts.budget.seed.wrapping_mul(0x9e37_79b9).wrapping_add(r as u64);
        let rot = random_local_ops(a.dims(), seed, REGAUGE_COND);
        let Ok(cert) = apply_local_ops(b, &rot).and_then(|moved| compare_directed(a, &moved, opts)) else { continue };
        if let Some(ops) = cert.operators {
            found = Some((rot.inverse()?.compose_after(&ops)?, cert.diagnostics.search));
        }
    }
    if let Some((ops, search)) = found {
        if let Some((ops, res)) = verify(a, b, ops.ops().to_vec(), opts.cert_tol) {
            forward.verdict = Verdict::Equivalent;
            forward.operators = Some(LocalOperatorTuple::new(ops)?);
            forward.residual = Some(res);
            if let (Some(f), Some(s)) = (forward.diagnostics.search.as_mut(), search) {
                f.phase = s.phase;
                f.indirect = true;
                f.best_residual = res;
            }
        }
    }
    Ok(forward)
}

fn compare_directed(a: &StateTensor, b: &StateTensor, opts: &CompareOptions) -> Result<EquivalenceCertificate> {
    let ca = classify(a, opts.tol)?;
    let cbs = classify_alternatives(b, opts.tol)?;
    let mut diagnostics = Diagnostics { label_a: ca.label.clone(), label_b: cbs[0].label.clone(), search: None };
    if ca.label != cbs[0].label {
        return Ok(EquivalenceCertificate { verdict: Verdict::Inequivalent, operators: None, residual: None, diagnostics });
    }

    let base = commutant_basis(&ca.standard_form);
    let pencil = &ca.pencil;
    let shapes = (pencil.row_grouping.dims, pencil.col_grouping.dims);
    let mut connections = Vec::new();
    for cb in &cbs {
        let tb = &cb.transforms;
        let (p_inv, q_inv) = (linalg::inverse(&tb.p0)?, linalg::inverse(&tb.q0)?);
        connections.push(Connection {
            t: linalg::inverse(&tb.t0)? * &ca.transforms.t0,
            p_cand: &p_inv * &ca.transforms.p0,
            q_cand: &ca.transforms.q0 * &q_inv,
            descriptor: base.conjugated(&tb.p0, &p_inv, &tb.q0, &q_inv),
        });
    }
    let mut summary = SearchSummary {
        phase: None,
        gauge_alternatives: connections.len(),
        orbit_dimension: base.dimension,
        best_gap: f64::INFINITY,
        best_residual: f64::INFINITY,
        indirect: false,
    };
    let mut best_ops: Option<(Vec<CMat>, f64)> = None;

    let finish = |ops: Vec<CMat>, residual: f64, phase: u8, mut summary: SearchSummary, mut diagnostics: Diagnostics| {
        summary.phase = Some(phase);
        summary.best_residual = residual;
        diagnostics.search = Some(summary);
        EquivalenceCertificate {
            verdict: Verdict::Equivalent,
            operators: Some(LocalOperatorTuple::new(ops).expect("verified operators are invertible")),
            residual: Some(residual),
            diagnostics,
        }
    };

    // A short pass first: most failures of the orbit search come from a
    // wrong `T` (continuous Moebius stabilizers), which joint refinement
    // repairs cheaply. The full budget is spent only if that fails.
    let quick = SearchBudget {
        restarts: opts.budget.restarts.min(QUICK_RESTARTS),
        max_iterations: opts.budget.max_iterations.min(QUICK_ITERATIONS),
        ..opts.budget
    };
    let stages = [(quick, QUICK_RESTARTS.min(opts.budget.restarts)), (opts.budget, opts.budget.restarts)];
    let mut rng = ChaCha8Rng::seed_from_u64(opts.budget.seed ^ 0x00c0_ffee);
    let refine_steps = opts.budget.max_iterations.clamp(20, 200);
    for (budget, refinements) in stages {
        let mut starts: Vec<(usize, Vec<Complex64>)> = Vec::new();
        for (ci, conn) in connections.iter().enumerate() {
            let out = search_factorizable(&conn.p_cand, &conn.q_cand, &conn.descriptor, shapes, &budget)?;
            summary.best_gap = summary.best_gap.min(out.residual);
            starts.push((ci, out.best_coords.clone()));
            if out.verdict == SearchVerdict::Found {
                if let Some(((pa, pb), (qc, qd))) = &out.factored {
                    let ops = assemble(pencil, &conn.t, (pa, pb), (qc, qd));
                    if let Some((ops, res)) = verify(a, b, ops, opts.cert_tol) {
                        return Ok(finish(ops, res, out.phase, summary, diagnostics));
                    }
                }
            }
        }

        // Joint refinement of all factors from orbit points: corrects `T`
        // as well, which the orbit search keeps fixed.
        for r in 0..refinements.max(starts.len()) {
            let (ci, coords) = if r < starts.len() {
                starts[r].clone()
            } else {
                let ci = r % connections.len();
                let id = connections[ci].descriptor.identity_coords();
                let spread = [0.1, 1.0, 10.0][r % 3];
                (ci, id.iter().map(|z| z + linalg::complex_gaussian(&mut rng) * spread).collect())
            };
            let conn = &connections[ci];
            let el = stabilizer_orbit_element(&coords, &conn.descriptor);
            if !el.invertible {
                continue;
            }
            let Ok(q) = linalg::inverse(&el.y).map(|yi| &conn.q_cand * yi) else { continue };
            let p = &el.x * &conn.p_cand;
            let Some(init) = nearest_ops(pencil, &conn.t, &p, &q) else { continue };
            let (ops, res) = refine_local_ops(a, b, &init, refine_steps);
            if best_ops.as_ref().is_none_or(|(_, br)| res < *br) {
                best_ops = Some((ops.clone(), res));
            }
            if let Some((ops, res)) = verify(a, b, ops, opts.cert_tol) {
                return Ok(finish(ops, res, 3, summary, diagnostics));
            }
        }
    }
    summary.best_residual = best_ops.map(|(_, r)| r).unwrap_or(f64::INFINITY);
    diagnostics.search = Some(summary);
    Ok(EquivalenceCertificate { verdict: Verdict::SameFamilyUndecided, operators: None, residual: None, diagnostics })
}

/// Re-gauged searches allowed after both directions stay undecided.
fn regauge_attempts(budget: &SearchBudget) -> usize {
    (budget.restarts / 10).max(1)
}

/// Polish and check a candidate tuple by re-application.
fn verify(a: &StateTensor, b: &StateTensor, ops: Vec<CMat>, cert_tol: f64) -> Option<(Vec<CMat>, f64)> {
    let direct = residual_of(a, b, &ops);
    let (ops, res) = if direct.is_some_and(|r| r <= 1e-13) {
        (ops, direct.expect("checked"))
    } else {
        let (fit, _) = refine_local_ops(a, b, &ops, POLISH_STEPS);
        let r = residual_of(a, b, &fit)?;
        (fit, r)
    };
    (res <= cert_tol).then_some((ops, res))
}

fn residual_of(a: &StateTensor, b: &StateTensor, ops: &[CMat]) -> Option<f64> {
    let tuple = LocalOperatorTuple::new(ops.to_vec()).ok()?;
    let img = apply_local_ops(a, &tuple).ok()?;
    let d: f64 = img.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    Some(d / b.norm())
}

/// Party operators from `T`, `P = A (x) B` and `Q = C (x) D` in the stored
/// orientation: `P` is the product over the row group and `Q^T` over the
/// column group. Unit factors of absent parties become scalars on `A1`.
fn assemble(pencil: &MatrixPencil, t: &CMat, p: (&CMat, &CMat), q: (&CMat, &CMat)) -> Vec<CMat> {
    let parties = [pencil.row_grouping.parties, pencil.col_grouping.parties]
        .iter()
        .flat_map(|g| [g.0, g.1])
        .flatten()
        .max()
        .expect("at least one party")
        + 1;
    let mut ops: Vec<Option<CMat>> = vec![None; parties];
    let mut a1 = t.clone();
    let place = |party: Option<usize>, m: CMat, ops: &mut Vec<Option<CMat>>, a1: &mut CMat| match party {
        Some(k) => ops[k] = Some(m),
        None => *a1 *= m[(0, 0)],
    };
    place(pencil.row_grouping.parties.0, p.0.clone(), &mut ops, &mut a1);
    place(pencil.row_grouping.parties.1, p.1.clone(), &mut ops, &mut a1);
    place(pencil.col_grouping.parties.0, q.0.transpose(), &mut ops, &mut a1);
    place(pencil.col_grouping.parties.1, q.1.transpose(), &mut ops, &mut a1);
    ops[0] = Some(a1);
    ops.into_iter().map(|o| o.expect("every party is assigned")).collect()
}

/// Starting tuple from the nearest Kronecker factors of `P` and `Q`.
fn nearest_ops(pencil: &MatrixPencil, t: &CMat, p: &CMat, q: &CMat) -> Option<Vec<CMat>> {
    let (pa, pb, _) = nearest_kron(p, pencil.row_grouping.dims).ok()?;
    let (qa, qb, _) = nearest_kron(q, pencil.col_grouping.dims).ok()?;
    Some(assemble(pencil, t, (&pa, &pb), (&qa, &qb)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::ONE;

    #[test]
    fn dimension_condition() {
        assert!(genuine_check(&[2, 2, 2, 2, 2]).genuine);
        assert!(!genuine_check(&[2, 4, 4, 2, 2]).genuine);
        assert!(genuine_check(&[2, 2, 4, 2, 2]).genuine);
        assert!(genuine_check(&[2, 2, 2]).genuine);
        assert!(!genuine_check(&[2, 5, 2]).genuine);
    }

    #[test]
    fn product_states_are_not_genuine() {
        let prod = StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5])]).unwrap();
        let g = state_genuineness(&prod, 1e-9);
        assert!(!g.genuine);
        assert!(g.explanation.contains("product"));
        let ghz = StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5]), (ONE, vec![2; 5])]).unwrap();
        assert!(state_genuineness(&ghz, 1e-9).genuine);
    }

    #[test]
    fn assembled_operators_act_like_the_pencil_transform() {
        let psi = crate::tensor::random_state(&[2, 2, 2, 2, 2], 11).unwrap();
        let ops = crate::tensor::random_local_ops(&[2, 2, 2, 2, 2], 12, 5.0);
        let o = ops.ops();
        let pen = to_matrix_pair(&psi);
        let p = linalg::kron(&o[1], &o[2]);
        let q = linalg::kron(&o[3], &o[4]).transpose();
        let back = assemble(&pen, &o[0], (&o[1], &o[2]), (&o[3].transpose(), &o[4].transpose()));
        let img = apply_local_ops(&psi, &LocalOperatorTuple::new(back).unwrap()).unwrap();
        let expect = to_matrix_pair(&apply_local_ops(&psi, &ops).unwrap());
        let direct = pen.transformed(&o[0], &p, &q);
        assert!(linalg::rel_diff(&direct.gamma1, &expect.gamma1) < 1e-12);
        assert!(linalg::rel_diff(&to_matrix_pair(&img).gamma2, &expect.gamma2) < 1e-12);
    }
}
