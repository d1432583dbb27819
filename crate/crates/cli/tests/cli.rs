use std::path::Path;
use std::process::{Command, Output};

fn prrbc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prrbc")).args(args).output().expect("spawn")
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_lists_subcommands() {
    let out = prrbc(&["--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    for cmd in ["offline-train", "solve-fe", "solve-prrbc", "solve-two-level", "bench"] {
        assert!(text.contains(cmd), "{cmd}");
    }
}

#[test]
fn invalid_spec_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"material": {"nu": 0.7}}"#).unwrap();
    let out = prrbc(&["offline-train", "--spec", spec.to_str().unwrap(), "--out", dir.path().join("lib").to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("material.nu"));
    assert!(!dir.path().join("lib").exists());
}

#[test]
fn train_then_solve_on_a_coarse_bridge() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let spec = d.join("spec.json");
    std::fs::write(&spec, r#"{"geometry": {"nx_per_length": 6, "ny": 3}}"#).unwrap();
    let lib = d.join("lib.bin");
    let out = prrbc(&["offline-train", "--spec", spec.to_str().unwrap(), "--out", lib.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(lib.exists());

    let common = ["--spec", spec.to_str().unwrap(), "--library", lib.to_str().unwrap()];
    let fr = d.join("freq");
    let mut args = vec!["solve-prrbc"];
    args.extend(common);
    args.extend(["--omega", "300", "--check-fe", "--out", fr.to_str().unwrap()]);
    let out = prrbc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&fr.join("prrbc.json"));
    assert!(v["fe_h1_relative_error"].as_f64().unwrap() <= 1e-2);
    assert!(fr.join("prrbc_field.csv").exists());

    let tl = d.join("tl");
    let mut args = vec!["solve-two-level"];
    args.extend(common);
    args.extend(["--out", tl.to_str().unwrap()]);
    let out = prrbc(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v = read_json(&tl.join("two_level.json"));
    assert!(v["converged"].as_bool().unwrap());
    assert!(v["n_basis"].as_u64().unwrap() >= 1);
    let qoi = std::fs::read_to_string(tl.join("qoi.csv")).unwrap();
    assert!(qoi.starts_with("t,q0,q1,q2\n"));
}
