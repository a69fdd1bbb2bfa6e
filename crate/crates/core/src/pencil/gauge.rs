//! Moebius gauge fixing of the eigenvalue locations.
//!
//! Mixing the two halves by `T` moves every eigenvalue by one Moebius map.
//! Clusters are ordered by Jordan structure (partition descending, then
//! multiplicity descending); the first one to three clusters are sent to
//! `inf`, `0`, `1`, and the images of the rest are the continuous
//! parameters. Where equal structures leave a choice, every admissible slot
//! assignment is tried and the one with the lexicographically smallest
//! parameter list wins.

use std::cmp::Ordering;

use num_complex::Complex64;
use serde::Serialize;

use super::kcf::{kcf_pair, refine_transforms, KcfOptions, KcfResult, REFINE_STEPS};
use super::{EigenCluster, Eigenvalue, KroneckerStructure};
use crate::error::Result;
use crate::linalg::{self, CMat, ONE, ZERO};
use crate::tensor::{mix, MatrixPencil};

/// Relative tolerance under which two parameter coordinates count as equal
/// when ranking gauges.
pub const PARAM_TIE_TOL: f64 = 1e-7;
/// Grid on which parameters are quantized for labels.
pub const PARAM_QUANTUM: f64 = 1e-6;

/// Gauge-fixed canonical form.
#[derive(Debug, Clone)]
pub struct StandardForm {
    /// Clusters in canonical order: the fixed points `inf`, `0`, `1` (as many
    /// as there are clusters, up to three), then the parameter clusters.
    pub structure: KroneckerStructure,
    pub fixed_points: usize,
    /// Exact parameter values, one per cluster after the fixed points.
    pub params: Vec<Complex64>,
    pub canonical: (CMat, CMat),
    pub shape: (usize, usize),
    pub effective_shape: (usize, usize),
}

/// `T0`-mix of `(P0 Gamma_i Q0)` equals the canonical pair.
#[derive(Debug, Clone)]
pub struct Transforms {
    pub t0: CMat,
    pub p0: CMat,
    pub q0: CMat,
    pub residual: f64,
}

#[derive(Serialize)]
struct KeyDocument<'a> {
    minimal_col: &'a [usize],
    minimal_row: &'a [usize],
    inf_blocks: Vec<usize>,
    finite_blocks: Vec<(usize, String, String)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    params: Option<Vec<[f64; 2]>>,
}

impl StandardForm {
    fn key_document(&self, with_params: bool) -> KeyDocument<'_> {
        let mut inf_blocks = Vec::new();
        let mut finite_blocks = Vec::new();
        for (k, cl) in self.structure.clusters.iter().enumerate() {
            let (re, im) = match (k, cl.value) {
                (_, Eigenvalue::Infinite) => {
                    inf_blocks.extend_from_slice(&cl.blocks);
                    continue;
                }
                (k, _) if k < self.fixed_points => {
                    let v = if k == 1 { "0" } else { "1" };
                    (v.to_string(), "0".to_string())
                }
                (k, _) => {
                    let p = k - self.fixed_points;
                    (format!("p{p}:re"), format!("p{p}:im"))
                }
            };
            for &b in &cl.blocks {
                finite_blocks.push((b, re.clone(), im.clone()));
            }
        }
        KeyDocument {
            minimal_col: &self.structure.minimal_col,
            minimal_row: &self.structure.minimal_row,
            inf_blocks,
            finite_blocks,
            params: with_params.then(|| self.quantized_params()),
        }
    }

    /// Discrete part of the label as a byte-stable JSON string.
    pub fn structure_key(&self) -> String {
        serde_json::to_string(&self.key_document(false)).expect("key serializes")
    }

    /// Full JSON form: structure plus quantized parameters.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.key_document(true)).expect("key serializes")
    }

    pub fn quantized_params(&self) -> Vec<[f64; 2]> {
        self.params.iter().map(|p| [quantize(p.re), quantize(p.im)]).collect()
    }
}

pub fn quantize(x: f64) -> f64 {
    let q = (x / PARAM_QUANTUM).round() * PARAM_QUANTUM;
    // Shortest decimal on the grid, and no negative zero.
    let q: f64 = format!("{q:.6}").parse().expect("formatted float parses");
    if q == 0.0 {
        0.0
    } else {
        q
    }
}

/// The mixing `T` whose action on eigenvalues is the Moebius map `m`
/// (homogeneous `[x : y] -> m [x : y]`), normalized to `|T|_F = sqrt 2` with
/// the first nonzero entry (row-major) real positive.
pub fn moebius_to_mixing(m: &CMat) -> Result<CMat> {
    let k = linalg::inverse(m)?;
    let mut g = CMat::from_row_slice(2, 2, &[k[(0, 0)], -k[(1, 0)], -k[(0, 1)], k[(1, 1)]]);
    let lead = g.transpose().iter().copied().find(|z| z.norm() > 1e-12 * linalg::fro(&g)).unwrap_or(ONE);
    let s = Complex64::from(std::f64::consts::SQRT_2 / linalg::fro(&g)) * lead.conj() / lead.norm();
    g *= s;
    Ok(g)
}

fn ell(p: &Eigenvalue) -> (Complex64, Complex64) {
    // Linear form vanishing at p: l(x, y) = y_p x - x_p y.
    let (x, y) = p.homogeneous();
    (y, -x)
}

/// Moebius matrix sending the given points to `inf`, `0`, `1` in order.
fn normalizing_map(points: &[Eigenvalue]) -> CMat {
    match points {
        [] => CMat::identity(2, 2),
        [Eigenvalue::Infinite] => CMat::identity(2, 2),
        // A rotation of the sphere: columns are orthogonal and of equal length.
        [Eigenvalue::Finite(z)] => CMat::from_row_slice(2, 2, &[z.conj(), ONE, ONE, -z]),
        [p1, p2] => {
            // Rows of unit length keep the map well conditioned.
            let (a1, b1) = ell(p1);
            let (a2, b2) = ell(p2);
            let (n1, n2) = ((a1.norm_sqr() + b1.norm_sqr()).sqrt(), (a2.norm_sqr() + b2.norm_sqr()).sqrt());
            CMat::from_row_slice(2, 2, &[a2 / n2, b2 / n2, -a1 / n1, -b1 / n1])
        }
        [p1, p2, p3, ..] => {
            let (a1, b1) = ell(p1);
            let (a2, b2) = ell(p2);
            let (x3, y3) = p3.homogeneous();
            let s1 = a1 * x3 + b1 * y3;
            let s2 = a2 * x3 + b2 * y3;
            CMat::from_row_slice(2, 2, &[a2 * s1, b2 * s1, a1 * s2, b1 * s2])
        }
    }
}

fn is_scalar_map(m: &CMat) -> bool {
    let s = linalg::fro(m);
    let d = (m[(0, 0)] + m[(1, 1)]) * 0.5;
    (m[(0, 1)].norm() + m[(1, 0)].norm() + (m[(0, 0)] - d).norm() + (m[(1, 1)] - d).norm()) <= 1e-12 * s
}

fn structure_order(a: &EigenCluster, b: &EigenCluster) -> Ordering {
    b.blocks.cmp(&a.blocks).then(b.multiplicity().cmp(&a.multiplicity()))
}

fn fuzzy_cmp(a: f64, b: f64) -> Ordering {
    let scale = 1.0f64.max(a.abs()).max(b.abs());
    if (a - b).abs() <= PARAM_TIE_TOL * scale {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

fn param_cmp(a: &Complex64, b: &Complex64) -> Ordering {
    fuzzy_cmp(a.re, b.re).then_with(|| fuzzy_cmp(a.im, b.im))
}

struct Candidate {
    map: CMat,
    params: Vec<Complex64>,
    /// Source cluster of each gauge-fixed cluster, in output order.
    order: Vec<usize>,
}

/// Every slot assignment compatible with the structure ordering.
fn candidates(clusters: &[EigenCluster]) -> Vec<Candidate> {
    let mut sorted: Vec<usize> = (0..clusters.len()).collect();
    sorted.sort_by(|&i, &j| structure_order(&clusters[i], &clusters[j]));
    let slots = clusters.len().min(3);
    // Tie groups in sorted order.
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for &i in &sorted {
        match groups.last_mut() {
            Some(g) if structure_order(&clusters[g[0]], &clusters[i]) == Ordering::Equal => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    let mut out = Vec::new();
    let mut chosen = Vec::new();
    fill_slots(clusters, &groups, 0, slots, &mut chosen, &mut out);
    out
}

fn fill_slots(
    clusters: &[EigenCluster],
    groups: &[Vec<usize>],
    g: usize,
    slots: usize,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Candidate>,
) {
    if chosen.len() == slots || g == groups.len() {
        out.push(finish_candidate(clusters, groups, chosen));
        return;
    }
    let before: usize = groups[..g].iter().map(|x| x.len()).sum();
    let take = (slots - before).min(groups[g].len());
    // All ordered selections of `take` members of this group.
    let members = &groups[g];
    let mut used = vec![false; members.len()];
    select(clusters, groups, g, slots, members, take, &mut used, chosen, out);
}

#[allow(clippy::too_many_arguments)]
fn select(
    clusters: &[EigenCluster],
    groups: &[Vec<usize>],
    g: usize,
    slots: usize,
    members: &[usize],
    take: usize,
    used: &mut Vec<bool>,
    chosen: &mut Vec<usize>,
    out: &mut Vec<Candidate>,
) {
    let before: usize = groups[..g].iter().map(|x| x.len()).sum();
    if chosen.len() == before + take {
        fill_slots(clusters, groups, g + 1, slots, chosen, out);
        return;
    }
    for k in 0..members.len() {
        if used[k] {
            continue;
        }
        used[k] = true;
        chosen.push(members[k]);
        select(clusters, groups, g, slots, members, take, used, chosen, out);
        chosen.pop();
        used[k] = false;
    }
}

fn finish_candidate(clusters: &[EigenCluster], groups: &[Vec<usize>], chosen: &[usize]) -> Candidate {
    let points: Vec<Eigenvalue> = chosen.iter().map(|&i| clusters[i].value).collect();
    let map = normalizing_map(&points);
    let mut rest: Vec<(usize, Complex64)> = groups
        .iter()
        .flatten()
        .filter(|i| !chosen.contains(i))
        .map(|&i| {
            let v = match clusters[i].value.moebius(&map) {
                Eigenvalue::Finite(z) => z,
                // Distinct points stay distinct, so only a fixed slot maps to inf.
                Eigenvalue::Infinite => Complex64::new(f64::INFINITY, 0.0),
            };
            (i, v)
        })
        .collect();
    rest.sort_by(|(i, a), (j, b)| structure_order(&clusters[*i], &clusters[*j]).then_with(|| param_cmp(a, b)));
    let order = chosen.iter().copied().chain(rest.iter().map(|(i, _)| *i)).collect();
    Candidate { map, params: rest.into_iter().map(|(_, v)| v).collect(), order }
}

fn params_cmp(a: &[Complex64], b: &[Complex64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match param_cmp(x, y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    Ordering::Equal
}

/// Build the gauge-fixed form for one slot assignment.
fn realize(pencil: &MatrixPencil, pre: &KcfResult, cand: &Candidate, opts: &KcfOptions) -> Result<(StandardForm, Transforms)> {
    let slots = pre.structure.clusters.len().min(3);
    let t0 = moebius_to_mixing(&cand.map)?;
    let fixed = [Eigenvalue::Infinite, Eigenvalue::Finite(ZERO), Eigenvalue::Finite(ONE)];
    let targets: Vec<Eigenvalue> =
        fixed[..slots].iter().copied().chain(cand.params.iter().map(|&z| Eigenvalue::Finite(z))).collect();
    let structure = KroneckerStructure {
        minimal_col: pre.structure.minimal_col.clone(),
        minimal_row: pre.structure.minimal_row.clone(),
        clusters: cand
            .order
            .iter()
            .zip(&targets)
            .map(|(&i, &value)| EigenCluster { value, blocks: pre.structure.clusters[i].blocks.clone() })
            .collect(),
    };
    let canonical = structure.canonical_pair();
    // The pre-gauge canonical pair is block diagonal, so after mixing each
    // block is reduced on its own and moved to its place in the new layout.
    let src = block_layout(&pre.structure, &(0..pre.structure.clusters.len()).collect::<Vec<_>>());
    let dst = block_layout(&pre.structure, &cand.order);
    let (m, n) = pre.canonical.0.shape();
    let mut pm = CMat::zeros(m, m);
    let mut qm = CMat::zeros(n, n);
    for (key, &(r0, c0, rows, cols)) in &src {
        let &(nr0, nc0, _, _) = &dst[key];
        let e = pre.canonical.0.view((r0, c0), (rows, cols)).into_owned();
        let j = pre.canonical.1.view((r0, c0), (rows, cols)).into_owned();
        let (a, b) = mix(&t0, &e, &j);
        let target = match key.0 {
            BlockKind::Jordan(ci) => cand.order.iter().position(|&i| i == ci).map(|k| vec![targets[k]]),
            _ => Some(Vec::new()),
        };
        let res = kcf_pair(&a, &b, opts, target.as_deref())?;
        pm.view_mut((nr0, r0), (rows, rows)).copy_from(&res.p);
        qm.view_mut((c0, nc0), (cols, cols)).copy_from(&res.q);
    }
    let (ma, mb) = mix(&t0, &pencil.gamma1, &pencil.gamma2);
    let (p0, q0, residual) = refine_transforms(&ma, &mb, pm * &pre.p, &pre.q * qm, &canonical, REFINE_STEPS);
    let shape = pencil.shape();
    let zero_rows = structure.minimal_row.iter().filter(|&&e| e == 0).count();
    let zero_cols = structure.minimal_col.iter().filter(|&&e| e == 0).count();
    let sf = StandardForm {
        fixed_points: slots,
        params: cand.params.clone(),
        canonical,
        shape,
        effective_shape: (shape.0 - zero_rows, shape.1 - zero_cols),
        structure,
    };
    Ok((sf, Transforms { t0, p0, q0, residual }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BlockKind {
    Col,
    Jordan(usize),
    Row,
}

/// Offsets `(row, col, rows, cols)` of every canonical block, keyed by kind
/// and index within its group, with clusters laid out in `order`.
fn block_layout(s: &KroneckerStructure, order: &[usize]) -> std::collections::BTreeMap<(BlockKind, usize), (usize, usize, usize, usize)> {
    let mut out = std::collections::BTreeMap::new();
    let (mut r, mut c) = (0, 0);
    for (i, &e) in s.minimal_col.iter().enumerate() {
        out.insert((BlockKind::Col, i), (r, c, e, e + 1));
        r += e;
        c += e + 1;
    }
    for &ci in order {
        for (i, &k) in s.clusters[ci].blocks.iter().enumerate() {
            out.insert((BlockKind::Jordan(ci), i), (r, c, k, k));
            r += k;
            c += k;
        }
    }
    for (i, &e) in s.minimal_row.iter().enumerate() {
        out.insert((BlockKind::Row, i), (r, c, e + 1, e));
        r += e + 1;
        c += e;
    }
    out
}

fn ranked(pre: &KcfResult) -> Vec<Candidate> {
    let mut cands = candidates(&pre.structure.clusters);
    let best = cands
        .iter()
        .map(|c| c.params.clone())
        .min_by(|a, b| params_cmp(a, b))
        .unwrap_or_default();
    cands.retain(|c| params_cmp(&c.params, &best) == Ordering::Equal);
    // Stable: the identity map (if optimal) comes first.
    cands.sort_by_key(|c| !is_scalar_map(&c.map));
    cands
}

/// Standard form from a pre-gauge Kronecker form of `pencil`.
pub fn gauge_fix(pencil: &MatrixPencil, pre: &KcfResult, opts: &KcfOptions) -> Result<(StandardForm, Transforms)> {
    let cands = ranked(pre);
    realize(pencil, pre, &cands[0], opts)
}

/// All tie-optimal gauges; the first is the one [`gauge_fix`] returns.
pub fn gauge_fix_all(pencil: &MatrixPencil, pre: &KcfResult, opts: &KcfOptions) -> Result<Vec<(StandardForm, Transforms)>> {
    ranked(pre).iter().map(|c| realize(pencil, pre, c, opts)).collect()
}
