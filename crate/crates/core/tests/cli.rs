use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "tests", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_comblab")).args(args).env_remove("COMBLAB_SEED").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn validate_exit_codes() {
    assert_eq!(code(&run(&["validate", &fixture("identity_channel.json")])), 0);
    let bad = run(&["validate", &fixture("future_to_past.json")]);
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("level 2 violated"));
    assert_eq!(code(&run(&["validate", &fixture("truncated.json")])), 2);
    assert_eq!(code(&run(&["validate", "/nonexistent.json"])), 2);
}

#[test]
fn distances() {
    let d = |a: &str, b: &str, mode: &str| {
        let o = run(&["--json", "distance", &fixture(a), &fixture(b), "--mode", mode]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        json(&o)["value"].as_f64().unwrap()
    };
    assert!(d("identity_channel.json", "identity_channel.json", "op").abs() < 1e-7);
    assert!(d("identity_channel.json", "identity_channel.json", "disc").abs() < 1e-7);
    assert!((d("bell_phi.json", "bell_psi.json", "disc") - 1.0).abs() < 1e-7);
    assert!((d("rho.json", "sigma.json", "disc") - 1.0).abs() < 1e-7);
    assert!((d("rho.json", "tau.json", "disc") - 1.0 / 3.0).abs() < 1e-7);
    assert!((d("tau.json", "sigma.json", "disc") - 1.0 / 3.0).abs() < 1e-7);
}

fn demo_file(dir: &tempfile::TempDir, name: &str) -> String {
    let path = dir.path().join(format!("{}.json", name.replace(':', "_")));
    let p = path.to_string_lossy().into_owned();
    assert_eq!(code(&run(&["demo", name, "--out", &p])), 0);
    p
}

#[test]
fn conceal_demos() {
    let dir = tempfile::tempdir().unwrap();
    for (name, eps) in [("epr", Some(0.0)), ("plaintext", Some(1.0)), ("theta:0.3", Some(0.3f64.sin().powi(2))), ("coin2round", None)] {
        let o = run(&["--json", "--seed", "4", "conceal", &demo_file(&dir, name)]);
        assert_eq!(code(&o), 0, "{name}: {}", stdout(&o));
        let v = json(&o);
        let cheat = &v["cheat"];
        let (e, d, b) = (cheat["epsilon"].as_f64().unwrap(), cheat["delta"].as_f64().unwrap(), cheat["bound"].as_f64().unwrap());
        if let Some(x) = eps {
            assert!((e - x).abs() < 1e-6, "{name}: ε = {e}");
        }
        assert!(d <= b + 1e-4);
        assert_eq!(v["verdict"]["pass"], true);
    }
}

#[test]
fn skip_cheat_reports_concealment_only() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["--json", "conceal", "--skip-cheat", &demo_file(&dir, "plaintext")]);
    assert_eq!(code(&o), 0);
    let v = json(&o);
    assert!(v["cheat"].is_null());
    assert!((v["concealment"]["epsilon"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn reports_are_byte_identical_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let p = demo_file(&dir, "theta:0.6");
    let out = |tag: &str, seed: Option<&str>, env: Option<&str>| {
        let o = dir.path().join(tag).to_string_lossy().into_owned();
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_comblab"));
        cmd.env_remove("COMBLAB_SEED");
        if let Some(e) = env {
            cmd.env("COMBLAB_SEED", e);
        }
        let mut args = vec!["conceal", &p, "--out", &o];
        if let Some(s) = seed {
            args.extend(["--seed", s]);
        }
        assert_eq!(cmd.args(&args).output().unwrap().status.code(), Some(0));
        std::fs::read_to_string(&o).unwrap()
    };
    let (a, b) = (out("a", Some("9"), None), out("b", Some("9"), None));
    assert_eq!(a, b);
    let seed = |s: &str| serde_json::from_str::<serde_json::Value>(s).unwrap()["seed"].as_u64().unwrap();
    assert_eq!(seed(&out("c", None, Some("12"))), 12);
    assert_eq!(seed(&out("d", Some("5"), Some("12"))), 5);
}

#[test]
fn demos() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["validate", &demo_file(&dir, "coin2round")]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let epr = std::fs::read_to_string(demo_file(&dir, "epr")).unwrap();
    assert!(epr.contains("\"kind\": \"protocol\""));
    let bad = run(&["demo", "nope"]);
    assert_eq!(code(&bad), 2);
    assert!(String::from_utf8_lossy(&bad.stderr).contains("coin2round"));
}
