use proptest::prelude::*;
use slocc_core::catalog::Catalog;
use slocc_core::classify::{classify, compare, CompareOptions, Verdict};
use slocc_core::linalg;
use slocc_core::tensor::{
    apply_local_ops, from_matrix_pair, mix, random_invertible, random_local_ops, random_state, to_matrix_pair,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn labels_are_ilo_invariant(id in 1usize..=32, seed in any::<u64>()) {
        let rep = Catalog::shipped().representative(id).unwrap();
        let img = apply_local_ops(&rep, &random_local_ops(&[2; 5], seed, 100.0)).unwrap();
        prop_assert_eq!(classify(&img, 1e-9).unwrap().label, classify(&rep, 1e-9).unwrap().label);
    }

    #[test]
    fn compare_verdicts_are_symmetric(i in 1usize..=32, j in 1usize..=32, seed in any::<u64>()) {
        let cat = Catalog::shipped();
        let a = cat.representative(i).unwrap();
        let b = apply_local_ops(&cat.representative(j).unwrap(), &random_local_ops(&[2; 5], seed, 10.0)).unwrap();
        let opts = CompareOptions::default();
        let (ab, ba) = (compare(&a, &b, &opts).unwrap(), compare(&b, &a, &opts).unwrap());
        prop_assert_eq!(ab.verdict, ba.verdict);
        prop_assert_eq!(ab.verdict == Verdict::Equivalent, i == j);
        for (cert, (x, y)) in [(&ab, (&a, &b)), (&ba, (&b, &a))] {
            if let Some(ops) = &cert.operators {
                prop_assert!(apply_local_ops(x, ops).unwrap().relative_distance(y) <= 1e-8);
            }
        }
    }

    #[test]
    fn inverse_operators_undo_application(seed in any::<u64>()) {
        let psi = random_state(&[2; 5], seed).unwrap();
        let ops = random_local_ops(&[2; 5], seed ^ 1, 100.0);
        let back = apply_local_ops(&apply_local_ops(&psi, &ops).unwrap(), &ops.inverse().unwrap()).unwrap();
        prop_assert!(back.relative_distance(&psi) <= 1e-10);
    }

    #[test]
    fn pencil_roundtrip(seed in any::<u64>(), three in any::<bool>()) {
        let dims = if three { vec![2, 3, 2] } else { vec![2, 2, 3, 2, 2] };
        let psi = random_state(&dims, seed).unwrap();
        let back = from_matrix_pair(dims, &to_matrix_pair(&psi)).unwrap();
        prop_assert_eq!(back.amplitudes(), psi.amplitudes());
    }

    #[test]
    fn mixing_composes(seed in any::<u64>()) {
        let (s, t) = (random_invertible(2, seed, 10.0), random_invertible(2, seed ^ 7, 10.0));
        let (a, b) = (random_invertible(3, seed ^ 11, 10.0), random_invertible(3, seed ^ 13, 10.0));
        let (x1, x2) = mix(&t, &a, &b);
        let (y1, y2) = mix(&s, &x1, &x2);
        let (z1, z2) = mix(&(&s * &t), &a, &b);
        prop_assert!(linalg::rel_diff(&y1, &z1) <= 1e-12 && linalg::rel_diff(&y2, &z2) <= 1e-12);
    }
}
