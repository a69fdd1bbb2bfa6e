//! Pure-state coefficient tensors, local operators and the matrix-pair view.
//!
//! A state of shape `2 x L x M x N x H` stores its amplitudes row-major over
//! the multi-index `(i, l, m, n, h)`. File formats and ket labels are 1-based;
//! storage is 0-based.

use std::collections::BTreeMap;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SloccError};
use crate::linalg::{self, CMat, ZERO};

/// Smallest admissible `sigma_min / sigma_max` for a local operator.
pub const INVERTIBILITY_TOL: f64 = 1e-13;

#[derive(Debug, Clone, PartialEq)]
pub struct StateTensor {
    dims: Vec<usize>,
    amplitudes: Vec<Complex64>,
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if !(dims.len() == 3 || dims.len() == 5) || dims[0] != 2 || dims.contains(&0) {
        return Err(SloccError::InvalidDims(dims.to_vec()));
    }
    Ok(())
}

impl StateTensor {
    pub fn new(dims: Vec<usize>, amplitudes: Vec<Complex64>) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        if amplitudes.len() != len {
            return Err(SloccError::ShapeMismatch(format!(
                "{} amplitudes for dims {:?} (expected {len})",
                amplitudes.len(),
                dims
            )));
        }
        if amplitudes.iter().all(|a| a.norm() == 0.0) {
            return Err(SloccError::ZeroState);
        }
        Ok(Self { dims, amplitudes })
    }

    /// Superposition of 1-based basis kets with the given coefficients.
    pub fn from_kets(dims: Vec<usize>, kets: &[(Complex64, Vec<usize>)]) -> Result<Self> {
        check_dims(&dims)?;
        let len: usize = dims.iter().product();
        let mut amps = vec![ZERO; len];
        for (coef, idx) in kets {
            let flat = flat_index_1based(&dims, idx)?;
            amps[flat] += coef;
        }
        Self::new(dims, amps)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn parties(&self) -> usize {
        self.dims.len()
    }

    /// Amplitude at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> Complex64 {
        self.amplitudes[flat_index(&self.dims, idx)]
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn relative_distance(&self, other: &StateTensor) -> f64 {
        let d: f64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        d / other.norm().max(self.norm())
    }

    /// Mode-`k` unfolding: `dims[k] x (product of the other dims)`, remaining
    /// indices in their original row-major order.
    pub fn unfold(&self, k: usize) -> CMat {
        unfold(&self.dims, &self.amplitudes, k)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: StateDocument =
            serde_json::from_str(text).map_err(|e| SloccError::Malformed(e.to_string()))?;
        doc.into_state()
    }

    pub fn to_document(&self) -> StateDocument {
        let mut entries = Vec::new();
        for (flat, a) in self.amplitudes.iter().enumerate() {
            if a.re.to_bits() != 0 || a.im.to_bits() != 0 {
                entries.push(Entry {
                    idx: multi_index(&self.dims, flat).iter().map(|i| i + 1).collect(),
                    re: a.re,
                    im: a.im,
                });
            }
        }
        StateDocument { dims: self.dims.clone(), entries: Some(entries), dense: None }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_document()).expect("state document serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }
}

fn flat_index(dims: &[usize], idx: &[usize]) -> usize {
    idx.iter().zip(dims).fold(0, |acc, (&i, &d)| acc * d + i)
}

fn flat_index_1based(dims: &[usize], idx: &[usize]) -> Result<usize> {
    if idx.len() != dims.len() || idx.iter().zip(dims).any(|(&i, &d)| i == 0 || i > d) {
        return Err(SloccError::IndexOutOfRange { idx: idx.to_vec(), dims: dims.to_vec() });
    }
    let zero_based: Vec<usize> = idx.iter().map(|i| i - 1).collect();
    Ok(flat_index(dims, &zero_based))
}

fn multi_index(dims: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0; dims.len()];
    for k in (0..dims.len()).rev() {
        idx[k] = flat % dims[k];
        flat /= dims[k];
    }
    idx
}

fn unfold(dims: &[usize], amps: &[Complex64], k: usize) -> CMat {
    let dk = dims[k];
    let inner: usize = dims[k + 1..].iter().product();
    let outer: usize = dims[..k].iter().product();
    CMat::from_fn(dk, outer * inner, |r, col| {
        let (o, i) = (col / inner, col % inner);
        amps[(o * dk + r) * inner + i]
    })
}

fn fold(dims: &[usize], mat: &CMat, k: usize) -> Vec<Complex64> {
    let dk = dims[k];
    let inner: usize = dims[k + 1..].iter().product();
    let outer: usize = dims[..k].iter().product();
    let mut amps = vec![ZERO; dk * inner * outer];
    for o in 0..outer {
        for r in 0..dk {
            for i in 0..inner {
                amps[(o * dk + r) * inner + i] = mat[(r, o * inner + i)];
            }
        }
    }
    amps
}

/// JSON state document, sparse (`entries`) or dense (`dense`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateDocument {
    pub dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entries: Option<Vec<Entry>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dense: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Entry {
    pub idx: Vec<usize>,
    pub re: f64,
    #[serde(default)]
    pub im: f64,
}

impl StateDocument {
    pub fn into_state(self) -> Result<StateTensor> {
        check_dims(&self.dims)?;
        let len: usize = self.dims.iter().product();
        let amps = match (self.entries, self.dense) {
            (Some(_), Some(_)) => {
                return Err(SloccError::Malformed("both \"entries\" and \"dense\" given".into()))
            }
            (None, None) => {
                return Err(SloccError::Malformed("missing \"entries\" or \"dense\"".into()))
            }
            (Some(entries), None) => {
                let mut seen = BTreeMap::new();
                let mut amps = vec![ZERO; len];
                for e in entries {
                    let flat = flat_index_1based(&self.dims, &e.idx)?;
                    if seen.insert(flat, ()).is_some() {
                        return Err(SloccError::DuplicateIndex(e.idx));
                    }
                    amps[flat] = Complex64::new(e.re, e.im);
                }
                amps
            }
            (None, Some(dense)) => {
                if dense.len() != 2 * len {
                    return Err(SloccError::Malformed(format!(
                        "\"dense\" has {} reals, expected {} (re,im pairs)",
                        dense.len(),
                        2 * len
                    )));
                }
                dense.chunks(2).map(|p| Complex64::new(p[0], p[1])).collect()
            }
        };
        StateTensor::new(self.dims, amps)
    }
}

/// One invertible operator per party.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalOperatorTuple {
    ops: Vec<CMat>,
    conds: Vec<f64>,
}

impl LocalOperatorTuple {
    pub fn new(ops: Vec<CMat>) -> Result<Self> {
        let mut conds = Vec::with_capacity(ops.len());
        for (k, op) in ops.iter().enumerate() {
            if op.nrows() != op.ncols() || op.nrows() == 0 {
                return Err(SloccError::ShapeMismatch(format!(
                    "operator {} is {}x{}, expected square",
                    k + 1,
                    op.nrows(),
                    op.ncols()
                )));
            }
            let cond = linalg::condition_number(op);
            if !(cond.is_finite() && 1.0 / cond > INVERTIBILITY_TOL) {
                return Err(SloccError::NotInvertible(format!("operator {} (cond {cond:.3e})", k + 1)));
            }
            conds.push(cond);
        }
        Ok(Self { ops, conds })
    }

    pub fn identity(dims: &[usize]) -> Self {
        let ops = dims.iter().map(|&d| CMat::identity(d, d)).collect();
        Self { ops, conds: vec![1.0; dims.len()] }
    }

    pub fn ops(&self) -> &[CMat] {
        &self.ops
    }

    pub fn condition_numbers(&self) -> &[f64] {
        &self.conds
    }

    pub fn dims(&self) -> Vec<usize> {
        self.ops.iter().map(|o| o.nrows()).collect()
    }

    pub fn inverse(&self) -> Result<Self> {
        Self::new(self.ops.iter().map(linalg::inverse).collect::<Result<_>>()?)
    }

    /// `self` after `first`: the tuple whose action equals applying `first`
    /// and then `self`.
    pub fn compose_after(&self, first: &LocalOperatorTuple) -> Result<Self> {
        if self.dims() != first.dims() {
            return Err(SloccError::ShapeMismatch("operator tuples of different shapes".into()));
        }
        Self::new(self.ops.iter().zip(&first.ops).map(|(a, b)| a * b).collect())
    }
}

/// `(A1 x A2 x ... ) psi`: contract each operator with its party index.
pub fn apply_local_ops(state: &StateTensor, ops: &LocalOperatorTuple) -> Result<StateTensor> {
    if ops.dims() != state.dims {
        return Err(SloccError::ShapeMismatch(format!(
            "operator shapes {:?} do not match state dims {:?}",
            ops.dims(),
            state.dims
        )));
    }
    Ok(StateTensor { dims: state.dims.clone(), amplitudes: apply_unchecked(state, ops.ops()) })
}

/// Operator action without invertibility requirements (used by fitting code).
pub(crate) fn apply_unchecked(state: &StateTensor, ops: &[CMat]) -> Vec<Complex64> {
    let dims = &state.dims;
    let mut amps = state.amplitudes.clone();
    for (k, op) in ops.iter().enumerate() {
        let m = op * unfold(dims, &amps, k);
        amps = fold(dims, &m, k);
    }
    amps
}

/// Apply operators to all parties except `skip`, returned as a raw tensor.
pub(crate) fn apply_except(state: &StateTensor, ops: &[CMat], skip: usize) -> StateTensor {
    let dims = &state.dims;
    let mut amps = state.amplitudes.clone();
    for (k, op) in ops.iter().enumerate() {
        if k == skip {
            continue;
        }
        let m = op * unfold(dims, &amps, k);
        amps = fold(dims, &m, k);
    }
    StateTensor { dims: dims.clone(), amplitudes: amps }
}

/// The two grouped party factors on one side of the matrix pair. A `None`
/// party is a trivial unit factor (tripartite states).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grouping {
    pub dims: (usize, usize),
    pub parties: (Option<usize>, Option<usize>),
}

impl Grouping {
    pub fn size(&self) -> usize {
        self.dims.0 * self.dims.1
    }
}

/// The pair `(Gamma_1, Gamma_2)` of `LM x NH` slices.
///
/// When `LM > NH` the slices are stored transposed (`transposed == true`) so
/// that rows never outnumber columns; the groupings then describe the stored
/// orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPencil {
    pub gamma1: CMat,
    pub gamma2: CMat,
    pub row_grouping: Grouping,
    pub col_grouping: Grouping,
    pub transposed: bool,
}

impl MatrixPencil {
    /// A bare pencil with trivial groupings.
    pub fn from_pair(gamma1: CMat, gamma2: CMat) -> Result<Self> {
        if gamma1.shape() != gamma2.shape() {
            return Err(SloccError::ShapeMismatch(format!(
                "pencil halves {:?} and {:?}",
                gamma1.shape(),
                gamma2.shape()
            )));
        }
        let (m, n) = gamma1.shape();
        Ok(Self {
            gamma1,
            gamma2,
            row_grouping: Grouping { dims: (1, m), parties: (None, None) },
            col_grouping: Grouping { dims: (n, 1), parties: (None, None) },
            transposed: false,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.gamma1.shape()
    }

    pub fn is_zero(&self) -> bool {
        linalg::fro(&self.gamma1) == 0.0 && linalg::fro(&self.gamma2) == 0.0
    }

    pub fn halves(&self) -> [&CMat; 2] {
        [&self.gamma1, &self.gamma2]
    }

    pub fn frobenius(&self) -> f64 {
        (linalg::fro(&self.gamma1).powi(2) + linalg::fro(&self.gamma2).powi(2)).sqrt()
    }

    /// `(P Gamma_1 Q, P Gamma_2 Q)` mixed by `T`; groupings are kept.
    pub fn transformed(&self, t: &CMat, p: &CMat, q: &CMat) -> Self {
        let a = p * &self.gamma1 * q;
        let b = p * &self.gamma2 * q;
        let (g1, g2) = mix(t, &a, &b);
        Self { gamma1: g1, gamma2: g2, ..self.clone() }
    }
}

/// `(T11 A + T12 B, T21 A + T22 B)`.
pub fn mix(t: &CMat, a: &CMat, b: &CMat) -> (CMat, CMat) {
    (a * t[(0, 0)] + b * t[(0, 1)], a * t[(1, 0)] + b * t[(1, 1)])
}

/// Grouping of a state into its matrix pair, row index `(l-1)M + m` and
/// column index `(n-1)H + h` (1-based). Tripartite states use the slices
/// directly.
pub fn to_matrix_pair(state: &StateTensor) -> MatrixPencil {
    let d = &state.dims;
    let (rows, cols) = if d.len() == 5 {
        (
            Grouping { dims: (d[1], d[2]), parties: (Some(1), Some(2)) },
            Grouping { dims: (d[3], d[4]), parties: (Some(3), Some(4)) },
        )
    } else {
        (
            Grouping { dims: (1, d[1]), parties: (None, Some(1)) },
            Grouping { dims: (d[2], 1), parties: (Some(2), None) },
        )
    };
    let (r, cn) = (rows.size(), cols.size());
    let slice = |i: usize| CMat::from_fn(r, cn, |a, b| state.amplitudes[(i * r + a) * cn + b]);
    let (g1, g2) = (slice(0), slice(1));
    if r > cn {
        MatrixPencil {
            gamma1: g1.transpose(),
            gamma2: g2.transpose(),
            row_grouping: cols,
            col_grouping: rows,
            transposed: true,
        }
    } else {
        MatrixPencil { gamma1: g1, gamma2: g2, row_grouping: rows, col_grouping: cols, transposed: false }
    }
}

/// Inverse of [`to_matrix_pair`] for an untransposed or transposed pencil
/// with the given state dims.
pub fn from_matrix_pair(dims: Vec<usize>, pencil: &MatrixPencil) -> Result<StateTensor> {
    let (g1, g2) = if pencil.transposed {
        (pencil.gamma1.transpose(), pencil.gamma2.transpose())
    } else {
        (pencil.gamma1.clone(), pencil.gamma2.clone())
    };
    let len: usize = dims.iter().product();
    if 2 * g1.len() != len {
        return Err(SloccError::ShapeMismatch(format!(
            "pencil {:?} does not fit dims {:?}",
            g1.shape(),
            dims
        )));
    }
    let (r, cn) = g1.shape();
    let mut amps = vec![ZERO; len];
    for (i, g) in [g1, g2].iter().enumerate() {
        for a in 0..r {
            for b in 0..cn {
                amps[(i * r + a) * cn + b] = g[(a, b)];
            }
        }
    }
    StateTensor::new(dims, amps)
}

pub fn random_state(dims: &[usize], seed: u64) -> Result<StateTensor> {
    check_dims(dims)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = dims.iter().product();
    let amps = (0..len).map(|_| linalg::complex_gaussian(&mut rng)).collect();
    StateTensor::new(dims.to_vec(), amps)
}

/// `U diag(sigma) V` with Haar unitaries and `sigma` uniform in
/// `[1, cond_bound]`, so the condition number never exceeds `cond_bound`.
pub fn random_invertible(dim: usize, seed: u64, cond_bound: f64) -> CMat {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_invertible_with(&mut rng, dim, cond_bound)
}

pub fn random_invertible_with<R: Rng + ?Sized>(rng: &mut R, dim: usize, cond_bound: f64) -> CMat {
    let u = linalg::random_unitary(rng, dim);
    let v = linalg::random_unitary(rng, dim);
    let sigma = CMat::from_diagonal(&nalgebra::DVector::from_fn(dim, |_, _| {
        Complex64::from(rng.random_range(1.0..=cond_bound.max(1.0)))
    }));
    u * sigma * v
}

pub fn random_local_ops(dims: &[usize], seed: u64, cond_bound: f64) -> LocalOperatorTuple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5ec0_1dc0_ffee_u64);
    let ops = dims.iter().map(|&d| random_invertible_with(&mut rng, d, cond_bound)).collect();
    LocalOperatorTuple::new(ops).expect("bounded-condition operators are invertible")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, ONE};

    fn ghz5() -> StateTensor {
        StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5]), (ONE, vec![2; 5])]).unwrap()
    }

    #[test]
    fn sparse_document_ghz3() {
        let doc = r#"{"dims":[2,2,2],"entries":[{"idx":[1,1,1],"re":1,"im":0},{"idx":[2,2,2],"re":1,"im":0}]}"#;
        let s = StateTensor::from_json(doc).unwrap();
        assert_eq!(s.amplitudes().len(), 8);
        assert_eq!(s.amplitudes().iter().filter(|a| **a == ONE).count(), 2);
        assert_eq!(s.get(&[1, 1, 1]), ONE);
    }

    #[test]
    fn zero_state_rejected() {
        let doc = r#"{"dims":[2,2,2],"entries":[{"idx":[1,1,1],"re":0,"im":0}]}"#;
        assert!(matches!(StateTensor::from_json(doc), Err(SloccError::ZeroState)));
    }

    #[test]
    fn document_errors() {
        let dup = r#"{"dims":[2,2,2],"entries":[{"idx":[1,1,1],"re":1},{"idx":[1,1,1],"re":2}]}"#;
        assert!(matches!(StateTensor::from_json(dup), Err(SloccError::DuplicateIndex(_))));
        let oob = r#"{"dims":[2,2,2],"entries":[{"idx":[3,1,1],"re":1}]}"#;
        assert!(matches!(StateTensor::from_json(oob), Err(SloccError::IndexOutOfRange { .. })));
        let zero_idx = r#"{"dims":[2,2,2],"entries":[{"idx":[0,1,1],"re":1}]}"#;
        assert!(matches!(StateTensor::from_json(zero_idx), Err(SloccError::IndexOutOfRange { .. })));
        let dims = r#"{"dims":[3,2,2],"entries":[{"idx":[1,1,1],"re":1}]}"#;
        assert!(matches!(StateTensor::from_json(dims), Err(SloccError::InvalidDims(_))));
        assert!(matches!(StateTensor::from_json("{"), Err(SloccError::Malformed(_))));
        let short = r#"{"dims":[2,2,2],"dense":[1,0]}"#;
        assert!(matches!(StateTensor::from_json(short), Err(SloccError::Malformed(_))));
    }

    #[test]
    fn dense_round_trip_is_bit_exact() {
        let s = random_state(&[2, 2, 2, 2, 2], 11).unwrap();
        let dense: Vec<f64> = s.amplitudes().iter().flat_map(|a| [a.re, a.im]).collect();
        let doc = serde_json::json!({"dims": [2,2,2,2,2], "dense": dense}).to_string();
        let loaded = StateTensor::from_json(&doc).unwrap();
        let back = StateTensor::from_json(&loaded.to_json()).unwrap();
        for (a, b) in back.amplitudes().iter().zip(s.amplitudes()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn writer_sorts_entries() {
        let s = StateTensor::from_kets(vec![2, 2, 2], &[(ONE, vec![2, 2, 2]), (ONE, vec![1, 2, 1])]).unwrap();
        let doc = s.to_document();
        let idx: Vec<_> = doc.entries.unwrap().into_iter().map(|e| e.idx).collect();
        assert_eq!(idx, vec![vec![1, 2, 1], vec![2, 2, 2]]);
    }

    #[test]
    fn identity_ops_leave_state() {
        let s = random_state(&[2, 2, 3], 4).unwrap();
        let out = apply_local_ops(&s, &LocalOperatorTuple::identity(s.dims())).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn qubit_swap_relabels_ghz5() {
        let x = CMat::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO]);
        let mut ops = LocalOperatorTuple::identity(&[2; 5]).ops().to_vec();
        ops[0] = x;
        let out = apply_local_ops(&ghz5(), &LocalOperatorTuple::new(ops).unwrap()).unwrap();
        let expect = StateTensor::from_kets(
            vec![2; 5],
            &[(ONE, vec![2, 1, 1, 1, 1]), (ONE, vec![1, 2, 2, 2, 2])],
        )
        .unwrap();
        assert_eq!(out, expect);
    }

    #[test]
    fn inverse_tuple_restores_state() {
        for seed in 0..5 {
            let s = random_state(&[2, 2, 3, 2, 2], seed).unwrap();
            let ops = random_local_ops(s.dims(), seed + 100, 50.0);
            let there = apply_local_ops(&s, &ops).unwrap();
            let back = apply_local_ops(&there, &ops.inverse().unwrap()).unwrap();
            assert!(back.relative_distance(&s) <= 1e-10);
        }
    }

    #[test]
    fn composition_law() {
        let s = random_state(&[2, 2, 2, 2, 2], 3).unwrap();
        let o1 = random_local_ops(s.dims(), 1, 10.0);
        let o2 = random_local_ops(s.dims(), 2, 10.0);
        let twice = apply_local_ops(&apply_local_ops(&s, &o1).unwrap(), &o2).unwrap();
        let once = apply_local_ops(&s, &o2.compose_after(&o1).unwrap()).unwrap();
        assert!(twice.relative_distance(&once) < 1e-12);
    }

    #[test]
    fn pencil_layout_ghz_and_w() {
        let p = to_matrix_pair(&ghz5());
        assert_eq!(p.shape(), (4, 4));
        assert!(!p.transposed);
        let mut e11 = CMat::zeros(4, 4);
        e11[(0, 0)] = ONE;
        let mut e44 = CMat::zeros(4, 4);
        e44[(3, 3)] = ONE;
        assert_eq!(p.gamma1, e11);
        assert_eq!(p.gamma2, e44);

        let w = StateTensor::from_kets(
            vec![2; 5],
            &[(ONE, vec![1, 1, 1, 1, 1]), (ONE, vec![1, 2, 2, 2, 2]), (ONE, vec![2, 1, 1, 2, 2])],
        )
        .unwrap();
        let p = to_matrix_pair(&w);
        assert_eq!(p.gamma1, &e11 + &e44);
        let mut e14 = CMat::zeros(4, 4);
        e14[(0, 3)] = ONE;
        assert_eq!(p.gamma2, e14);
    }

    #[test]
    fn pencil_layout_exhaustive() {
        let s = random_state(&[2, 2, 2, 2, 2], 8).unwrap();
        let p = to_matrix_pair(&s);
        for i in 0..2 {
            for l in 0..2 {
                for m in 0..2 {
                    for n in 0..2 {
                        for h in 0..2 {
                            let g = if i == 0 { &p.gamma1 } else { &p.gamma2 };
                            assert_eq!(g[(l * 2 + m, n * 2 + h)], s.get(&[i, l, m, n, h]));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn tripartite_slices_match_unit_grouping() {
        let s = random_state(&[2, 2, 2], 5).unwrap();
        let p = to_matrix_pair(&s);
        assert_eq!(p.row_grouping.dims, (1, 2));
        assert_eq!(p.col_grouping.dims, (2, 1));
        for m in 0..2 {
            for n in 0..2 {
                assert_eq!(p.gamma1[(m, n)], s.get(&[0, m, n]));
                assert_eq!(p.gamma2[(m, n)], s.get(&[1, m, n]));
            }
        }
    }

    #[test]
    fn tall_grouping_is_transposed() {
        let s = random_state(&[2, 4, 4, 2, 2], 5).unwrap();
        let p = to_matrix_pair(&s);
        assert!(p.transposed);
        assert_eq!(p.shape(), (4, 16));
        assert_eq!(p.row_grouping.parties, (Some(3), Some(4)));
        let back = from_matrix_pair(s.dims().to_vec(), &p).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn pencil_action_matches_local_ops() {
        for dims in [[2, 2, 2, 3, 2], [2, 2, 3, 2, 2]] {
            let s = random_state(&dims, 21).unwrap();
            let ops = random_local_ops(s.dims(), 22, 20.0);
            let a = ops.ops();
            let lhs = to_matrix_pair(&apply_local_ops(&s, &ops).unwrap());
            let pencil = to_matrix_pair(&s);
            let (r, cl) = if pencil.transposed { ((3, 4), (1, 2)) } else { ((1, 2), (3, 4)) };
            let p = a[r.0].kronecker(&a[r.1]);
            let q = a[cl.0].kronecker(&a[cl.1]).transpose();
            let rhs = pencil.transformed(&a[0], &p, &q);
            assert!(linalg::rel_diff(&lhs.gamma1, &rhs.gamma1) < 1e-12);
            assert!(linalg::rel_diff(&lhs.gamma2, &rhs.gamma2) < 1e-12);
        }
    }

    #[test]
    fn random_generators_are_seeded() {
        let a = random_state(&[2; 5], 7).unwrap();
        assert_eq!(a, random_state(&[2; 5], 7).unwrap());
        assert_ne!(random_state(&[2; 5], 1).unwrap(), random_state(&[2; 5], 2).unwrap());
        assert!(random_state(&[2, 3, 3], 1).is_ok());
    }

    #[test]
    fn random_invertible_respects_bound() {
        let one = random_invertible(1, 9, 10.0);
        assert!(one[(0, 0)].norm() > 0.0);
        let m = random_invertible(4, 3, 100.0);
        assert!(linalg::condition_number(&m) <= 100.0 * (1.0 + 1e-9));
        let m2 = random_invertible(2, 5, 2.0);
        assert!(m2.determinant().norm() > 0.0);
        assert_eq!(m, random_invertible(4, 3, 100.0));
        let _ = c(0.0, 0.0);
    }
}
