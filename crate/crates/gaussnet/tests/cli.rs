use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gaussnet::atom::{atom_on_cube, BudgetRule};
use gaussnet::cli::RunConfig;
use gaussnet::wavelet::{build_meyer, synthesize, CoefficientTree, WaveletIndex};
use gaussnet::GaussianSum;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn gaussnet(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gaussnet"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn bundled_configs_validate() {
    for e in std::fs::read_dir(configs()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let c = RunConfig::load(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
        }
    }
}

#[test]
fn malformed_json_exits_2_with_offset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.json", "{\"version\": 1,\n  \"n\": [}");
    let o = gaussnet(&["approximate"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("byte offset 21 (line 2, column 7)"), "{err}");
}

#[test]
fn unknown_target_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"version": 1, "target": {"name": "square-wave"}}"#);
    let o = gaussnet(&["analyze"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_key_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"version": 1, "budget": 10}"#);
    let o = gaussnet(&["verify"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}

#[test]
fn aliasing_spacing_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["verify"], &configs().join("verify_aliasing.json"), dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("aliasing"));
}

#[test]
fn study_with_one_budget_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "n_list": [512], "synthetic": {"levels": [-2, 0]}}"#,
    );
    let o = gaussnet(&["study"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn default_verify_passes_and_k6_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["verify"], &configs().join("verify.json"), &dir.path().join("a"));
    assert_eq!(o.status.code(), Some(0));
    let table = std::fs::read_to_string(dir.path().join("a/verify.csv")).unwrap();
    assert_eq!(table.lines().count(), 6);
    assert!(!table.contains("false"));

    let o = gaussnet(&["verify"], &configs().join("verify_k6.json"), &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(1));
    let table = std::fs::read_to_string(dir.path().join("b/verify.csv")).unwrap();
    assert!(table.lines().any(|l| l.starts_with("truncated k=6,false")));
}

#[test]
fn single_wavelet_fixture_matches_the_atom() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["approximate"], &configs().join("approximate_single.json"), dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let sum = GaussianSum::from_json(&std::fs::read_to_string(dir.path().join("sum.json")).unwrap()).unwrap();
    let w = build_meyer(1, 512).unwrap();
    let rule = BudgetRule::default_for(&w).unwrap();
    let idx = WaveletIndex::new(0, vec![0], vec![1]).unwrap();
    let atom = atom_on_cube(&w, &idx, 301, &rule, None).unwrap();
    assert!(sum.len() <= 301);
    assert_eq!(sum, atom);
    let csv = std::fs::read_to_string(dir.path().join("allocation.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "j,k0,e0,cost,budget");
    assert!(csv.lines().nth(1).unwrap().ends_with(",301"));
}

#[test]
fn budget_override_applies() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["approximate", "--n", "101"], &configs().join("approximate_single.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["requested"], 101);
    assert!(report["terms"].as_u64().unwrap() <= 101);
}

fn load_tree(dir: &Path) -> CoefficientTree {
    CoefficientTree::from_json(&std::fs::read_to_string(dir.join("tree.json")).unwrap()).unwrap()
}

#[test]
fn analyzed_bump_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["analyze"], &configs().join("analyze_bump.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let t = load_tree(dir.path());
    let w = build_meyer(1, 512).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..=400 {
        let x = -4.0 + 0.02 * i as f64;
        worst = worst.max((synthesize(&t, &w, &[x]).unwrap() - (-x * x).exp()).abs());
    }
    assert!(worst < 1e-4, "{worst}");
}

#[test]
fn analyzed_cusp_concentrates() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["analyze"], &configs().join("analyze_cusp.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("analysis.json")).unwrap()).unwrap();
    assert!(summary["concentration_ratio"].as_f64().unwrap() > 0.5);
}

#[test]
fn analyzed_wavelet_is_a_unit_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let o = gaussnet(&["analyze"], &configs().join("analyze_wavelet.json"), dir.path());
    assert_eq!(o.status.code(), Some(0));
    let t = load_tree(dir.path());
    let target = WaveletIndex::new(-1, vec![1], vec![1]).unwrap();
    for (idx, f) in t.iter() {
        if *idx == target {
            assert!((f - 1.0).abs() < 1e-6, "{f}");
        } else {
            assert!(f.abs() < 1e-4, "{idx:?} {f}");
        }
    }
}

#[test]
fn sample_grid_matches_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let n = 4801;
    let values: Vec<f64> = (0..n)
        .map(|i| {
            let x = -6.0 + 12.0 * i as f64 / (n - 1) as f64;
            (-x * x).exp()
        })
        .collect();
    let grid = serde_json::json!({"lo": [-6.0], "hi": [6.0], "nodes": [n], "values": values});
    write(dir.path(), "bump.json", &grid.to_string());
    let cfg = write(
        dir.path(),
        "c.json",
        r#"{"version": 1, "target": {"name": "samples", "path": "bump.json"}, "analysis": {"levels": [-2, 3]}}"#,
    );
    let o = gaussnet(&["analyze"], &cfg, &dir.path().join("s"));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cfg = write(
        dir.path(),
        "b.json",
        r#"{"version": 1, "target": {"name": "gaussian-bump"}, "analysis": {"levels": [-2, 3]}}"#,
    );
    let o = gaussnet(&["analyze"], &cfg, &dir.path().join("b"));
    assert_eq!(o.status.code(), Some(0));
    let a = load_tree(&dir.path().join("s"));
    let b = load_tree(&dir.path().join("b"));
    for (idx, f) in b.iter() {
        let g = a.get(idx).unwrap_or(0.0);
        // multilinear interpolation error is about h^2 / 8 times the curvature
        assert!((f - g).abs() < 1e-5, "{idx:?}: {f} vs {g}");
    }
}
