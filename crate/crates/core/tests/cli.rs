//! End-to-end runs of the `eei` binary: exit codes, file inputs, formats.

use std::path::PathBuf;
use std::process::{Command, Output};

fn eei(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eei"))
        .args(args)
        .env_remove("EEI_SEED")
        .output()
        .expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("eei-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn stdout_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).expect("report is JSON")
}

#[test]
fn construct_l_scalar_certificate() {
    let x = scratch("x.json");
    let w = scratch("w.json");
    std::fs::write(&x, r#"{"dim": 1, "rows": [[1.0]]}"#).unwrap();
    std::fs::write(&w, r#"{"dim": 1, "rows": [[3.0]]}"#).unwrap();
    let o = eei(&[
        "construct-l",
        "--x",
        x.to_str().unwrap(),
        "--w",
        w.to_str().unwrap(),
        "--mu",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v = stdout_json(&o);
    let rep = &v["report"];
    assert_eq!(
        rep["result"]["multiplier"]["rows"][0][0].as_f64().unwrap(),
        0.25
    );
    for key in ["zero_product_residual", "markov_residual"] {
        assert!(rep["result"][key].as_f64().unwrap() <= 1e-8);
    }
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["seed"], 42);
    assert_eq!(v["config"]["command"]["name"], "construct-l");
}

#[test]
fn bad_mu_exits_two_with_diagnostic() {
    let o = eei(&["construct-l", "--x", "1", "--w", "3", "--mu", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("mu must exceed 1"), "{err}");
    assert_eq!(err.lines().count(), 1);
    assert!(o.stdout.is_empty());
}

#[test]
fn malformed_inputs_exit_two() {
    let bad = scratch("bad.json");
    std::fs::write(&bad, "{not json").unwrap();
    let asym = scratch("asym.json");
    std::fs::write(&asym, r#"{"dim": 2, "rows": [[1.0, 0.5], [0.0, 1.0]]}"#).unwrap();
    for m in [
        bad.to_str().unwrap(),
        asym.to_str().unwrap(),
        "/nonexistent/m.json",
    ] {
        let o = eei(&["lmmse-bound", "--x", m, "--r", "1"]);
        assert_eq!(o.status.code(), Some(2), "{m}");
        assert!(String::from_utf8_lossy(&o.stderr).starts_with("error:"));
    }
    assert_eq!(
        eei(&["verify-epi", "--density", "cauchy"]).status.code(),
        Some(2)
    );
    assert_eq!(eei(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(eei(&["construct-l", "--x", "1"]).status.code(), Some(2));
}

#[test]
fn verify_eei_uniform_passes() {
    let o = eei(&[
        "verify-eei",
        "--density",
        "uniform",
        "--mu",
        "2",
        "--w",
        "1",
        "--r",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let rep = &stdout_json(&o)["report"];
    assert!(rep["margin"].as_f64().unwrap() > 0.0);
    assert!(rep["passed"].as_bool().unwrap());
    assert!(rep.get("elapsed_ms").is_none());
}

#[test]
fn failed_check_exits_one() {
    // a uniform input is not stationary
    let o = eei(&[
        "variational-check",
        "--mu",
        "2",
        "--density",
        "uniform",
        "--grid-points",
        "801",
        "--pairs",
        "2",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!stdout_json(&o)["report"]["passed"].as_bool().unwrap());
    // receiver 1 noisier than receiver 2
    let o = eei(&["broadcast-design", "--z1", "2", "--z2", "0.5", "--r", "0.3"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn matrix_files_mix_with_scalars() {
    let r = scratch("r2.json");
    std::fs::write(&r, r#"{"dim": 2, "rows": [[1.0, 0.2], [0.2, 0.5]]}"#).unwrap();
    let o = eei(&[
        "optimum",
        "--w",
        "1",
        "--v",
        "3",
        "--r",
        r.to_str().unwrap(),
        "--mu",
        "2",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let rep = &stdout_json(&o)["report"];
    assert_eq!(rep["n"], 2);
    assert_eq!(rep["result"]["s_x_star"]["dim"], 2);
}

#[test]
fn output_file_and_formats() {
    let path = scratch("out.csv");
    let o = eei(&[
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
        "search",
        "--w",
        "1",
        "--v",
        "4",
        "--r",
        "10",
        "--mu",
        "2",
        "--trials",
        "500",
    ]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("# eei "));
    assert_eq!(
        lines[1],
        "command,n,mu,lhs,rhs,margin,tol,trials,seed,elapsed_ms"
    );
    let cols: Vec<&str> = lines[2].split(',').collect();
    assert_eq!(cols.len(), 10);
    assert_eq!(cols[0], "search");
    assert_eq!(cols[7], "500");
    assert_eq!(cols[8], "42");
    assert_eq!(cols[9], "");

    let o = eei(&[
        "--format",
        "text",
        "--timing",
        "broadcast-design",
        "--z1",
        "0.5",
        "--z2",
        "2",
        "--r",
        "0.5",
    ]);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("status: PASS"));
    assert!(text.contains("elapsed_ms: "));
}

#[test]
fn seed_comes_from_environment() {
    let run = |env: Option<&str>, extra: &[&str]| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_eei"));
        c.env_remove("EEI_SEED");
        if let Some(s) = env {
            c.env("EEI_SEED", s);
        }
        let mut args = vec![
            "search", "--w", "1", "--v", "4", "--r", "2", "--mu", "2", "--trials", "300",
        ];
        args.extend_from_slice(extra);
        c.args(args).output().unwrap()
    };
    let from_env = stdout_json(&run(Some("9"), &[]));
    assert_eq!(from_env["seed"], 9);
    let from_flag = stdout_json(&run(None, &["--seed", "9"]));
    assert_eq!(from_env["report"], from_flag["report"]);
    // the flag wins over the environment
    assert_eq!(stdout_json(&run(Some("9"), &["--seed", "5"]))["seed"], 5);
}
