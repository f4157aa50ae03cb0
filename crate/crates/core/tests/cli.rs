use std::path::Path;
use std::process::{Command, Output};

fn clblk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clblk"))
        .args(args)
        .env_remove("CLBLK_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn limits_prints_theta_and_large_block_constant() {
    let o = clblk(&["limits", "--c0", "1", "--c1", "1", "--alpha", "1", "--gamma", "1"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let value = |name: &str| -> f64 {
        let line = out.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert_eq!(value("theta"), 0.5);
    assert!((value("ic_large_constant") - 1.0 / 24.0).abs() < 1e-15);

    let o = clblk(&["limits", "--format", "json", "--functional", "length", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["index_source"], "closed_form");
    assert!((v["nu_ic"].as_f64().unwrap() + v["nu_bc"].as_f64().unwrap()).abs() < 1e-15);
}

#[test]
fn decompose_closes_the_identity() {
    let o = clblk(&[
        "decompose", "--model", "mma1:1,1,1", "--n", "6", "--seed", "7", "--r", "2", "--w", "0.1", "--functional",
        "indicator",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["residual_identity"].as_f64(), Some(0.0));
    assert_eq!(v["m"].as_u64(), Some(3));
}

#[test]
fn verify_quick_succeeds() {
    let o = clblk(&["verify", "--quick"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_two_with_prefix() {
    for args in [
        vec!["limits", "--bogus"],
        vec!["frobnicate"],
        vec!["decompose", "--model", "mma1:1,1,1", "--n", "100", "--r", "5"],
        vec!["decompose", "--model", "wat", "--n", "100", "--r", "5", "--w", "0.1"],
        vec!["rates", "--model", "mma1:1,1,1", "--grid", "1000", "--r", "1", "--w", "0.1"],
    ] {
        let o = clblk(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}: {}", stderr(&o));
        let err = stderr(&o);
        assert!(err.starts_with("error:"), "{args:?}: {err}");
        assert_eq!(err.lines().count(), 1, "{args:?}: {err}");
    }
}

#[test]
fn runtime_failures_exit_one() {
    let o = clblk(&["decompose", "--series", "/nonexistent/file.bin", "--r", "4", "--u", "2"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error:io:"));
}

#[test]
fn help_lists_every_flag() {
    let o = clblk(&["rates", "--help"]);
    let out = stdout(&o);
    for flag in ["--model", "--grid", "--r", "--w", "--replicates", "--seed", "--targets", "--out", "--format", "--threads"] {
        assert!(out.contains(flag), "missing {flag}");
    }
}

fn rates_into(dir: &Path, name: &str, threads: &str) -> (Output, Vec<u8>) {
    let out = dir.join(name);
    let o = Command::new(env!("CARGO_BIN_EXE_clblk"))
        .args([
            "rates",
            "--model",
            "mma1:1,1,1",
            "--grid",
            "2000,8000",
            "--r",
            "n^0.3",
            "--w",
            "n^-0.5",
            "--replicates",
            "5",
            "--seed",
            "3",
            "--targets",
            "ic_norm,bc_norm,scaled_gap",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("CLBLK_THREADS", threads)
        .output()
        .unwrap();
    (o, std::fs::read(&out).unwrap())
}

#[test]
fn rates_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (a, ta) = rates_into(dir.path(), "a.csv", "1");
    let (_, tb) = rates_into(dir.path(), "b.csv", "3");
    assert!(a.status.code().is_some());
    assert_eq!(ta, tb);
    assert!(String::from_utf8(ta).unwrap().starts_with("model,alpha,c0,c1,n,r,w,replicates,target,mean,sd,se\n"));
    let va = std::fs::read(dir.path().join("a.verdict.json")).unwrap();
    let vb = std::fs::read(dir.path().join("b.verdict.json")).unwrap();
    assert_eq!(va, vb);
}

#[test]
fn simulate_then_decompose_from_file() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("s.bin");
    let txt = dir.path().join("s.txt");
    for p in [&bin, &txt] {
        let o = clblk(&["simulate", "--model", "mma1:1,2,1", "--n", "3000", "--seed", "5", "--out", p.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let a = clblk(&["decompose", "--series", bin.to_str().unwrap(), "--r", "10", "--u", "30"]);
    let b = clblk(&["decompose", "--series", txt.to_str().unwrap(), "--r", "10", "--u", "30"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(stdout(&a), stdout(&b));
    let v: serde_json::Value = serde_json::from_str(&stdout(&a)).unwrap();
    assert_eq!(v["w_source"], "empirical");
    assert_eq!(v["residual_identity"].as_f64(), Some(0.0));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(
        &cfg,
        "# small run\nmodel = mma1:1,1,1\ngrid = 2000\nr = 5\nw = 0.02\nreplicates = 3\nseed = 1\ntargets = ic_norm\n",
    )
    .unwrap();
    let o = clblk(&["rates", "--config", cfg.to_str().unwrap(), "--replicates", "4"]);
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    assert!(row.contains(",4,ic_norm,"), "{row}");

    std::fs::write(&cfg, "model = mma1:1,1,1\nunknown_key = 1\n").unwrap();
    let o = clblk(&["rates", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}
