use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_isskit"));
    for k in ["ISSKIT_REL_TOL", "ISSKIT_ABS_TOL", "ISSKIT_BLOWUP_THRESHOLD"] {
        c.env_remove(k);
    }
    c
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn run(name: &str, out: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(scenario(name)).arg("--out").arg(out).args(extra).output().unwrap()
}

#[test]
fn reports_are_byte_stable_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for d in [&a, &b] {
        assert_eq!(run("etc_integrator.json", d, &[]).status.code(), Some(0));
    }
    for f in ["report.json", "events.csv", "trajectory.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    run("etc_integrator.json", &c, &["--seed", "5"]);
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(c.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["seed"], 5);
    assert_ne!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(c.join("report.json")).unwrap());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run("sgc2_holds.json", &dir.path().join("ok"), &[]).status.code(), Some(0));
    assert_eq!(run("sgc2_violated.json", &dir.path().join("bad"), &[]).status.code(), Some(1));
    assert_eq!(run("network_certify_strong_coupling.json", &dir.path().join("hv"), &[]).status.code(), Some(2));
    let m = run("malformed.json", &dir.path().join("m"), &[]);
    assert_eq!(m.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&m.stderr).contains("/payload/x0/1"));
    assert_eq!(bin().arg("frobnicate").output().unwrap().status.code(), Some(3));
    assert_eq!(bin().args(["run", "/nonexistent.json"]).output().unwrap().status.code(), Some(3));
    assert_eq!(bin().arg("list-builtins").output().unwrap().status.code(), Some(0));
}

#[test]
fn falsification_witnesses_replay() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bern");
    assert_eq!(run("iss_probe_bernoulli.json", &out, &[]).status.code(), Some(1));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let ws = report["witnesses"].as_array().unwrap();
    assert!(!ws.is_empty());
    for w in ws {
        let o = bin().arg("replay").arg(out.join(w.as_str().unwrap())).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    }
    // a report is not a witness
    assert_eq!(bin().arg("replay").arg(out.join("report.json")).output().unwrap().status.code(), Some(3));
}

#[test]
fn tampered_and_stale_witnesses() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sgc");
    run("sgc2_violated.json", &out, &[]);
    let path = out.join("witness_sgc2.json");
    let mut w: serde_json::Value = serde_json::from_slice(&std::fs::read(&path).unwrap()).unwrap();

    w["check"]["gains"]["g12"]["c"] = serde_json::json!(0.1);
    let tampered = dir.path().join("tampered.json");
    std::fs::write(&tampered, serde_json::to_vec(&w).unwrap()).unwrap();
    assert_eq!(bin().arg("replay").arg(&tampered).output().unwrap().status.code(), Some(1));

    w["schema"] = serde_json::json!("isskit.witness/0");
    let stale = dir.path().join("stale.json");
    std::fs::write(&stale, serde_json::to_vec(&w).unwrap()).unwrap();
    let o = bin().arg("replay").arg(&stale).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("schema"));
}

#[test]
fn env_overrides_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let o = bin()
        .env("ISSKIT_REL_TOL", "1e-10")
        .arg("run")
        .arg(scenario("simulate_linear.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(r["overrides"]["rel_tol"].as_f64(), Some(1e-10));
    let bad = bin().env("ISSKIT_ABS_TOL", "-1").arg("run").arg(scenario("simulate_linear.json")).arg("--out").arg(&out).output().unwrap();
    assert_eq!(bad.status.code(), Some(3));
}

#[test]
fn csv_outputs_have_headers() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("net");
    assert_eq!(run("network_sim_line.json", &out, &[]).status.code(), Some(0));
    let traj = std::fs::read_to_string(out.join("trajectory.csv")).unwrap();
    let header = traj.lines().next().unwrap();
    assert!(header.starts_with("t,x_1,x_2,") && header.ends_with(",x_50"));
    let comp = std::fs::read_to_string(out.join("composite.csv")).unwrap();
    assert_eq!(comp.lines().next(), Some("t,V"));
}
