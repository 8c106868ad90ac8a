use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use sha2::{Digest, Sha256};

fn stocm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stocm"))
        .args(args)
        .current_dir(dir)
        .env_remove("STOCM_OUTPUT_DIR")
        .output()
        .expect("stocm runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn derive_prints_the_linear_model() {
    let dir = tempfile::tempdir().unwrap();
    let o = stocm(&["derive"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    for line in ["a^3       -1/12", "a σ       1/6·φ2", "a^2 σ     1/18·φ1 + 1/96·φ3"] {
        assert!(text.contains(line), "{text}");
    }
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad_orders = stocm(&["derive", "--order-a", "2", "--order-sigma", "2"], dir.path());
    assert_eq!(bad_orders.status.code(), Some(2));
    assert!(stderr(&bad_orders).contains("must exceed"));
    assert_eq!(stocm(&["verify", "bogus"], dir.path()).status.code(), Some(2));
    assert_eq!(stocm(&["kernels", "--chain", "3,-1"], dir.path()).status.code(), Some(2));
    let tiny_dt = stocm(&["simulate", "--system", "hierarchy", "--dt", "1", "--chain", "8"], dir.path());
    assert_eq!(tiny_dt.status.code(), Some(2), "{}", stderr(&tiny_dt));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let text = stdout(&stocm(&["simulate", "--help"], dir.path()));
    assert!(text.contains("[default: 10000]"), "{text}");
    assert!(text.contains("[default: 0.001]"), "{text}");
}

#[test]
fn derive_then_reduce_gives_the_headline_constants() {
    let dir = tempfile::tempdir().unwrap();
    let d = stocm(&["derive", "--order-a", "6", "--order-sigma", "3", "--modes", "3", "--out", "m.json"], dir.path());
    assert!(d.status.success(), "{}", stderr(&d));
    let r = stocm(&["reduce", "m.json", "--out", "w.json"], dir.path());
    assert!(r.status.success(), "{}", stderr(&r));
    let text = stdout(&r);
    assert!(text.contains("0.016538  = 1205/72864"), "{text}");
    assert!(text.contains("0.071436"), "{text}");
    assert!(text.contains("0.029993"), "{text}");

    let w = json(&dir.path().join("w.json"));
    assert_eq!(w["kind"], "weak_model");
    assert_eq!(w["stochastic_resonance"]["exact"], "1205/72864");

    // The reduce command also accepts its own output for simulation.
    let s = stocm(
        &["simulate", "--system", "weak", "--model", "w.json", "--trajectories", "4", "--horizon", "1", "--dt", "0.01", "--record-every", "50"],
        dir.path(),
    );
    assert!(s.status.success(), "{}", stderr(&s));
    assert_eq!(stdout(&s).lines().next(), Some("trajectory,t,a"));
}

#[test]
fn schema_errors_name_the_location() {
    let dir = tempfile::tempdir().unwrap();
    let d = stocm(&["derive", "--order-a", "6", "--order-sigma", "3", "--modes", "3", "--out", "m.json"], dir.path());
    assert!(d.status.success());
    let mut doc = json(&dir.path().join("m.json"));
    doc["evolution"]["entries"][0]["expr"]["terms"][0]["coeff"] = Value::from("one half");
    fs::write(dir.path().join("bad.json"), doc.to_string()).unwrap();
    let r = stocm(&["reduce", "bad.json"], dir.path());
    assert_eq!(r.status.code(), Some(1));
    let err = stderr(&r);
    assert!(err.contains("evolution.entries[0]"), "{err}");

    doc["schema_version"] = Value::from(99);
    fs::write(dir.path().join("future.json"), doc.to_string()).unwrap();
    let r = stocm(&["reduce", "future.json"], dir.path());
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("99"), "{}", stderr(&r));
}

#[test]
fn linear_models_have_nothing_to_reduce() {
    let dir = tempfile::tempdir().unwrap();
    assert!(stocm(&["derive", "--out", "lin.json"], dir.path()).status.success());
    let r = stocm(&["reduce", "lin.json"], dir.path());
    assert_eq!(r.status.code(), Some(1));
    assert!(stderr(&r).contains("no quadratic terms"), "{}", stderr(&r));
}

#[test]
fn outputs_land_in_the_output_dir_with_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = Command::new(env!("CARGO_BIN_EXE_stocm"))
        .args(["kernels", "--chain", "3,8", "--format", "json"])
        .current_dir(dir.path())
        .env("STOCM_OUTPUT_DIR", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let body = fs::read(out.join("kernels.json")).unwrap();
    let manifest = json(&out.join("kernels.manifest.json"));
    assert_eq!(manifest["kind"], "run_manifest");
    assert_eq!(manifest["command"], "kernels");
    assert_eq!(manifest["outputs"][0]["file"], "kernels.json");
    let digest: String = Sha256::digest(&body).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(manifest["outputs"][0]["sha256"], digest.as_str());

    let k: Value = serde_json::from_slice(&body).unwrap();
    assert_eq!(k["L"]["exact"][1][1], "1/44");
    assert_eq!(k["G0"]["exact"][1][1], "968");
}

#[test]
fn coeffs_for_a_large_cutoff() {
    let dir = tempfile::tempdir().unwrap();
    let o = stocm(&["coeffs", "--K", "10"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    for v in ["0.016563", "0.071843", "0.030368"] {
        assert!(text.contains(v), "{text}");
    }
}

#[test]
fn hierarchy_verification_suites() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        ["verify", "decorrelation", "--chain", "8,3", "--s", "1"],
        ["verify", "covariance", "--chain", "3,8", "--s", "0"],
    ] {
        let mut full = args.to_vec();
        full.extend(["--trajectories", "2000", "--horizon", "20", "--out", "r.json"]);
        let o = stocm(&full, dir.path());
        let report = json(&dir.path().join("r.json"));
        assert_eq!(report["pass"], o.status.success());
        assert!(o.status.success(), "{}", stdout(&o));
        assert!(!report["checks"].as_array().unwrap().is_empty());
    }
}
