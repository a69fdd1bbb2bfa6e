//! Consistency suites behind `slocc selftest`.

use slocc_core::catalog::{Catalog, Origin, DIMS};
use slocc_core::classify::{classify, compare, CompareOptions, Verdict};
use slocc_core::linalg;
use slocc_core::realign::{kron_factor, swap_gate, KronFactorization, DEFAULT_KRON_TOL};
use slocc_core::tensor::{random_invertible, random_local_ops};
use slocc_core::{apply_local_ops, SloccError};

use crate::EXIT_OK;

/// Exit code when any suite fails.
const EXIT_SUITE_FAILED: u8 = 1;

const ILO_SEEDS: u64 = 20;
const ILO_COND: f64 = 100.0;
const REALIGN_PAIRS: u64 = 100;

struct SuiteResult {
    name: &'static str,
    passed: usize,
    total: usize,
}

impl SuiteResult {
    fn ok(&self) -> bool {
        self.passed == self.total
    }
}

fn catalog_consistency(cat: &Catalog, tol: f64) -> Result<SuiteResult, SloccError> {
    let mut passed = 0;
    for e in &cat.entries {
        let c = classify(&e.representative()?, tol)?;
        passed += usize::from(c.label.key() == e.label);
    }
    Ok(SuiteResult { name: "catalog self-consistency", passed, total: cat.entries.len() })
}

fn pairwise_inequivalence(cat: &Catalog, tol: f64) -> Result<SuiteResult, SloccError> {
    let reps = cat.entries.iter().map(|e| e.representative()).collect::<Result<Vec<_>, _>>()?;
    let opts = CompareOptions { tol, ..CompareOptions::default() };
    let (mut passed, mut total) = (0, 0);
    for i in 0..reps.len() {
        for j in i + 1..reps.len() {
            total += 1;
            passed += usize::from(compare(&reps[i], &reps[j], &opts)?.verdict == Verdict::Inequivalent);
        }
    }
    Ok(SuiteResult { name: "pairwise inequivalence", passed, total })
}

fn ilo_invariance(cat: &Catalog, tol: f64, seed: u64) -> Result<SuiteResult, SloccError> {
    let (mut passed, mut total) = (0, 0);
    for e in cat.entries.iter().filter(|e| e.origin == Origin::Listed) {
        let rep = e.representative()?;
        let label = classify(&rep, tol)?.label;
        for s in 0..ILO_SEEDS {
            total += 1;
            let ops = random_local_ops(&DIMS, seed.wrapping_mul(7919).wrapping_add(s), ILO_COND);
            let img = apply_local_ops(&rep, &ops)?;
            passed += usize::from(classify(&img, tol).is_ok_and(|c| c.label == label));
        }
    }
    Ok(SuiteResult { name: "ILO invariance", passed, total })
}

fn realignment(seed: u64) -> SuiteResult {
    let (mut passed, mut total) = (0, 0);
    for (k, &(l, m)) in [(2, 2), (2, 3), (3, 3), (2, 4)].iter().enumerate() {
        for s in 0..REALIGN_PAIRS {
            total += 1;
            let base = seed.wrapping_mul(104_729).wrapping_add(1000 * k as u64 + s);
            let a = random_invertible(l, 2 * base, 10.0);
            let b = random_invertible(m, 2 * base + 1, 10.0);
            let p = linalg::kron(&a, &b);
            let ok = match kron_factor(&p, (l, m), DEFAULT_KRON_TOL) {
                Ok(KronFactorization::Product { a, b, .. }) => linalg::rel_diff(&linalg::kron(&a, &b), &p) <= 1e-10,
                _ => false,
            };
            passed += usize::from(ok);
        }
    }
    total += 1;
    passed += usize::from(matches!(
        kron_factor(&swap_gate(), (2, 2), DEFAULT_KRON_TOL),
        Ok(KronFactorization::NotAProduct { .. })
    ));
    SuiteResult { name: "realignment", passed, total }
}

pub fn run(tol: f64, seed: u64, json: bool) -> Result<u8, SloccError> {
    let cat = Catalog::shipped();
    let suites = vec![
        catalog_consistency(&cat, tol)?,
        pairwise_inequivalence(&cat, tol)?,
        ilo_invariance(&cat, tol, seed)?,
        realignment(seed),
    ];
    if json {
        let doc: Vec<_> = suites
            .iter()
            .map(|s| serde_json::json!({"suite": s.name, "passed": s.passed, "total": s.total, "ok": s.ok()}))
            .collect();
        println!("{}", serde_json::to_string_pretty(&doc)?);
    } else {
        for s in &suites {
            println!("{:<26} {:>4}/{:<4} {}", s.name, s.passed, s.total, if s.ok() { "PASS" } else { "FAIL" });
        }
    }
    Ok(if suites.iter().all(SuiteResult::ok) { EXIT_OK } else { EXIT_SUITE_FAILED })
}
