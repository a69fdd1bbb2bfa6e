use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use slocc_core::catalog::Catalog;
use slocc_core::linalg::ONE;
use slocc_core::tensor::random_local_ops;
use slocc_core::{apply_local_ops, StateTensor};
use tempfile::TempDir;

fn slocc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_slocc")).args(args).env_remove("SLOCC_SEED").output().expect("run slocc")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Fixtures {
    dir: TempDir,
}

impl Fixtures {
    fn new() -> Self {
        let f = Fixtures { dir: tempfile::tempdir().expect("temp dir") };
        let cat = Catalog::shipped();
        let ghz = StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5]), (ONE, vec![2; 5])]).unwrap();
        f.save("ghz5.json", &ghz);
        f.save("w5.json", &cat.representative(2).unwrap());
        f.save("product.json", &StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5])]).unwrap());
        let rep = cat.representative(5).unwrap();
        f.save("rep.json", &rep);
        f.save("rep_ilo.json", &apply_local_ops(&rep, &random_local_ops(&[2; 5], 3, 100.0)).unwrap());
        let hard = cat.representative(16).unwrap();
        f.save("hard.json", &hard);
        f.save("hard_ilo.json", &apply_local_ops(&hard, &random_local_ops(&[2; 5], 8, 100.0)).unwrap());
        let w3 = StateTensor::from_kets(vec![2, 2, 2], &[(ONE, vec![1, 1, 2]), (ONE, vec![1, 2, 1]), (ONE, vec![2, 1, 1])]);
        f.save("w3.json", &w3.unwrap());
        let near = StateTensor::from_kets(vec![2; 5], &[(ONE, vec![1; 5]), (ONE * 3e-9, vec![2; 5])]).unwrap();
        f.save("near.json", &near);
        std::fs::write(f.path("bad.json"), r#"{"dims": [2, 2, 2, 2, 2], "entires": []}"#).unwrap();
        f
    }

    fn save(&self, name: &str, s: &StateTensor) {
        s.save(self.path(name)).unwrap();
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn arg(&self, name: &str) -> String {
        path_str(&self.path(name))
    }
}

fn path_str(p: &Path) -> String {
    p.to_str().expect("utf-8 path").to_string()
}

#[test]
fn classify_ghz_reports_catalog_slot_one() {
    let f = Fixtures::new();
    let out = slocc(&["classify", &f.arg("ghz5.json")]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("catalog id: 1\n"), "{text}");
    assert!(text.contains("genuine: true"), "{text}");
}

#[test]
fn classify_product_is_not_genuine() {
    let f = Fixtures::new();
    let out = slocc(&["classify", &f.arg("product.json")]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("genuine: false"), "{text}");
    assert!(text.contains("catalog id: none"), "{text}");
}

#[test]
fn malformed_input_names_the_field() {
    let f = Fixtures::new();
    let out = slocc(&["classify", &f.arg("bad.json")]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("entires"));
}

#[test]
fn missing_file_is_an_input_error() {
    let f = Fixtures::new();
    assert_eq!(code(&slocc(&["classify", &f.arg("absent.json")])), 2);
}

#[test]
fn unstable_rank_decision_exits_three() {
    let f = Fixtures::new();
    let out = slocc(&["classify", &f.arg("near.json")]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("rank decision unstable"));
}

#[test]
fn compare_exit_codes() {
    let f = Fixtures::new();
    assert_eq!(code(&slocc(&["compare", &f.arg("ghz5.json"), &f.arg("w5.json")])), 1);
    assert_eq!(code(&slocc(&["compare", &f.arg("ghz5.json"), &f.arg("ghz5.json")])), 0);
    assert_eq!(code(&slocc(&["compare", &f.arg("ghz5.json"), &f.arg("w3.json")])), 5);
    assert_eq!(code(&slocc(&["compare", &f.arg("ghz5.json"), &f.arg("bad.json")])), 2);
}

#[test]
fn starved_budget_leaves_a_hard_pair_undecided() {
    let f = Fixtures::new();
    let out = slocc(&["--restarts", "1", "--iters", "1", "compare", &f.arg("hard.json"), &f.arg("hard_ilo.json")]);
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("SameFamilyUndecided"));
}

#[test]
fn compare_certificate_reproduces_the_image() {
    let f = Fixtures::new();
    let out = slocc(&["--format", "json", "compare", &f.arg("rep.json"), &f.arg("rep_ilo.json")]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["verdict"], "Equivalent");
    assert!(doc["residual"].as_f64().unwrap() <= 1e-8);
    assert_eq!(doc["operators"].as_array().unwrap().len(), 5);
}

#[test]
fn catalog_listing_and_unknown_system() {
    let out = slocc(&["catalog", "--system", "22222", "--format", "json"]);
    assert_eq!(code(&out), 0);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["entries"].as_array().unwrap().len(), 32);
    let human = stdout(&slocc(&["catalog"]));
    assert!(human.contains("split: 2x2x2: 2, 2x2x3: 2, 2x2x4: 1, 2x3x3: 6, 2x3x4: 5, 2x4x4: 16"), "{human}");
    assert_eq!(code(&slocc(&["catalog", "--system", "999"])), 2);
}

#[test]
fn catalog_build_matches_the_shipped_asset() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("catalog.json");
    assert_eq!(code(&slocc(&["catalog", "build", "--out", &path_str(&path)])), 0);
    let written = std::fs::read_to_string(&path).unwrap();
    assert_eq!(written.trim_end(), Catalog::shipped().to_json());
}

#[test]
fn json_output_is_byte_deterministic() {
    let f = Fixtures::new();
    let args = ["--format", "json", "compare", &f.arg("rep.json"), &f.arg("rep_ilo.json")];
    assert_eq!(slocc(&args).stdout, slocc(&args).stdout);
    let classify = ["--format", "json", "classify", &f.arg("w5.json")];
    assert_eq!(slocc(&classify).stdout, slocc(&classify).stdout);
}

#[test]
fn invalid_flags_exit_two() {
    let f = Fixtures::new();
    assert_eq!(code(&slocc(&["--tol", "2", "classify", &f.arg("ghz5.json")])), 2);
    assert_eq!(code(&slocc(&["--restarts", "0", "classify", &f.arg("ghz5.json")])), 2);
    assert_eq!(code(&slocc(&["--format", "yaml", "catalog"])), 2);
}

#[test]
fn seed_comes_from_the_environment() {
    let f = Fixtures::new();
    let out = Command::new(env!("CARGO_BIN_EXE_slocc"))
        .args(["compare", &f.arg("rep.json"), &f.arg("rep_ilo.json")])
        .env("SLOCC_SEED", "17")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let bad = Command::new(env!("CARGO_BIN_EXE_slocc")).args(["catalog"]).env("SLOCC_SEED", "x").output().unwrap();
    assert_eq!(code(&bad), 2);
}

#[test]
fn selftest_passes() {
    let out = slocc(&["selftest", "--seed", "0"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
}
