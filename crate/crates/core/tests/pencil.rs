use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use slocc_core::linalg::{self, c, CMat, ONE, ZERO};
use slocc_core::pencil::{
    gauge_fix, kcf, kcf_pair, shift, standard_form, EigenCluster, Eigenvalue, KcfOptions, KroneckerStructure,
};
use slocc_core::tensor::{mix, random_invertible_with, to_matrix_pair, MatrixPencil, StateTensor};

const RECON_TOL: f64 = 1e-8;

fn pencil(a: CMat, b: CMat) -> MatrixPencil {
    MatrixPencil::from_pair(a, b).unwrap()
}

fn diag(v: &[Complex64]) -> CMat {
    CMat::from_diagonal(&linalg::CVec::from_column_slice(v))
}

#[test]
fn diagonal_pencil_has_two_simple_blocks() {
    let (a, b) = (c(2.0, 0.0), c(-1.0, 0.5));
    let r = kcf(&pencil(CMat::identity(2, 2), diag(&[a, b])), &KcfOptions::default()).unwrap();
    assert!(r.structure.minimal_col.is_empty() && r.structure.minimal_row.is_empty());
    assert_eq!(r.structure.clusters.len(), 2);
    let mut vals: Vec<Complex64> = r
        .structure
        .clusters
        .iter()
        .map(|cl| match cl.value {
            Eigenvalue::Finite(z) => z,
            Eigenvalue::Infinite => panic!("no infinite eigenvalue expected"),
        })
        .collect();
    vals.sort_by(|x, y| x.re.total_cmp(&y.re));
    assert!((vals[0] - b).norm() < 1e-12 && (vals[1] - a).norm() < 1e-12);
    assert!(r.residual <= RECON_TOL);
}

#[test]
fn ghz5_pencil() {
    let ghz = StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5]), (ONE, vec![2; 5])]).unwrap();
    let p = to_matrix_pair(&ghz);
    let r = kcf(&p, &KcfOptions::default()).unwrap();
    assert_eq!(r.structure.minimal_col, vec![0, 0]);
    assert_eq!(r.structure.minimal_row, vec![0, 0]);
    let vals: Vec<_> = r.structure.clusters.iter().map(|c| (c.value, c.blocks.clone())).collect();
    assert_eq!(vals.len(), 2);
    assert!(vals.contains(&(Eigenvalue::Infinite, vec![1])));
    assert!(vals.iter().any(|(v, b)| b == &vec![1] && v.chordal(&Eigenvalue::Finite(ZERO)) < 1e-12));
    assert!(r.residual <= RECON_TOL);
}

#[test]
fn nilpotent_first_half_is_infinite_block() {
    let r = kcf(&pencil(shift(2), CMat::identity(2, 2)), &KcfOptions::default()).unwrap();
    assert_eq!(r.structure.clusters, vec![EigenCluster { value: Eigenvalue::Infinite, blocks: vec![2] }]);
    assert!(r.residual <= RECON_TOL);
}

fn random_structure(rng: &mut ChaCha8Rng, max: usize) -> KroneckerStructure {
    loop {
        let mut s = KroneckerStructure::default();
        for _ in 0..rng.random_range(0..3) {
            s.minimal_col.push(rng.random_range(0..3));
        }
        for _ in 0..rng.random_range(0..3) {
            s.minimal_row.push(rng.random_range(0..3));
        }
        s.minimal_col.sort();
        s.minimal_row.sort();
        let points = [c(0.0, 0.0), c(1.0, 0.0), c(-0.7, 1.3), c(2.5, -0.4)];
        for (k, &z) in points.iter().enumerate().take(rng.random_range(0..4)) {
            let mut blocks: Vec<usize> = (0..rng.random_range(1..3)).map(|_| rng.random_range(1..4)).collect();
            blocks.sort_by(|a, b| b.cmp(a));
            let value = if k == 0 && rng.random_bool(0.5) { Eigenvalue::Infinite } else { Eigenvalue::Finite(z) };
            s.clusters.push(EigenCluster { value, blocks });
        }
        let (m, n) = s.shape();
        if m <= max && n <= max && m + n > 0 && m >= 1 && n >= 1 {
            return s;
        }
    }
}

fn sorted_key(s: &KroneckerStructure) -> (Vec<usize>, Vec<usize>, Vec<Vec<usize>>) {
    let mut blocks: Vec<Vec<usize>> = s.clusters.iter().map(|c| c.blocks.clone()).collect();
    blocks.sort();
    (s.minimal_col.clone(), s.minimal_row.clone(), blocks)
}

#[test]
fn recovers_planted_structures() {
    let (iters, cond, maxd) = (200, 10.0, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let opts = KcfOptions::default();
    for _ in 0..iters {
        let s = random_structure(&mut rng, maxd);
        let (e, j) = s.canonical_pair();
        let (m, n) = s.shape();
        let p = random_invertible_with(&mut rng, m, cond);
        let q = random_invertible_with(&mut rng, n, cond);
        let t = random_invertible_with(&mut rng, 2, cond);
        let (a, b) = mix(&t, &(&p * &e * &q), &(&p * &j * &q));
        let r = kcf_pair(&a, &b, &opts, None).unwrap_or_else(|err| panic!("{s:?}: {err}"));
        assert_eq!(sorted_key(&r.structure), sorted_key(&s), "planted {s:?}");
        assert!(r.residual <= RECON_TOL, "residual {}", r.residual);
        let pen = pencil(a, b);
        let (sf, tr) = gauge_fix(&pen, &kcf(&pen, &opts).unwrap(), &opts).unwrap_or_else(|err| panic!("{s:?}: {err}"));
        assert!(tr.residual <= RECON_TOL, "gauge residual {} for {s:?} kcf residual {}", tr.residual, r.residual);
        let (sf0, _) = standard_form(&pencil(e.clone(), j.clone()), &opts).unwrap();
        assert_eq!(sf.structure_key(), sf0.structure_key());
        for (x, y) in sf.params.iter().zip(&sf0.params) {
            assert!((x - y).norm() <= 1e-6, "params {x} vs {y}");
        }
    }
}
