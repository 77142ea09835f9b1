use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn nlfrac(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_nlfrac")).args(args).output().unwrap()
}

fn run_in(dir: &Path, args: &[&str]) -> std::process::Output {
    let mut all = vec!["--out", dir.to_str().unwrap(), "--override", "grid.n_points=129"];
    all.extend_from_slice(args);
    nlfrac(&all)
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn same_seed_gives_identical_files() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let out = run_in(d.path(), &["--mode", "dn", "--seed", "11", "--override", "noise=1e-3"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let files = manifest(a.path())["files"].as_array().unwrap().clone();
    assert!(!files.is_empty());
    for f in &files {
        let name = f["name"].as_str().unwrap();
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap()
        );
    }
    let c = tempfile::tempdir().unwrap();
    run_in(c.path(), &["--mode", "dn", "--seed", "12", "--override", "noise=1e-3"]);
    assert_ne!(
        std::fs::read(a.path().join("dn_probe0.csv")).unwrap(),
        std::fs::read(c.path().join("dn_probe0.csv")).unwrap()
    );
}

#[test]
fn manifest_checksums_match_files() {
    let d = tempfile::tempdir().unwrap();
    let out = run_in(d.path(), &["--mode", "forward"]);
    assert!(out.status.success());
    let m = manifest(d.path());
    assert_eq!(m["mode"], "forward");
    for f in m["files"].as_array().unwrap() {
        let bytes = std::fs::read(d.path().join(f["name"].as_str().unwrap())).unwrap();
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
        assert_eq!(f["sha256"].as_str().unwrap(), nlfrac::config::sha256_hex(&bytes));
    }
}

#[test]
fn zero_coefficients_reduce_to_the_linear_problem() {
    let d = tempfile::tempdir().unwrap();
    let config = d.path().join("zero.toml");
    std::fs::write(
        &config,
        "mode = \"forward\"\n[coefficients]\nb = \"0\"\nd = \"0\"\na = {}\n",
    )
    .unwrap();
    let out = run_in(d.path(), &["--config", config.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.path().join("forward.csv")).unwrap();
    let mut rows = 0;
    for line in csv.lines().skip(1) {
        let cols: Vec<f64> = line.split(',').map(|v| v.parse().unwrap()).collect();
        assert!((cols[2] - cols[3]).abs() <= 1e-12, "{line}");
        rows += 1;
    }
    assert!(rows > 0);
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    let bad_order = run_in(d.path(), &["--mode", "forward", "--override", "orders.t=0.75"]);
    assert_eq!(bad_order.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad_order.stderr).contains("orders"));
    assert_eq!(run_in(d.path(), &["--mode", "nonsense"]).status.code(), Some(2));
    assert_eq!(
        run_in(d.path(), &["--mode", "dn", "--seed", "18446744073709551615"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run_in(d.path(), &["--mode", "forward", "--override", "grid.bogus=1"])
            .status
            .code(),
        Some(2)
    );
    let diverge = run_in(
        d.path(),
        &[
            "--mode",
            "forward",
            "--override",
            "probes=[{f=\"16*((x - 1.5)*(2.5 - x))^2\", amplitude=1e4}]",
        ],
    );
    assert_eq!(
        diverge.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&diverge.stderr)
    );
}
