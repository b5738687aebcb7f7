use std::process::Command;

fn tenrank() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tenrank"))
}

#[test]
fn simulate_then_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("m1.tfms");
    let out = tenrank()
        .args(["simulate", "--model", "M1", "--d1", "12", "--d2", "12", "-T", "200", "--seed", "4", "--out"])
        .arg(&data)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json = dir.path().join("report.json");
    let out = tenrank()
        .arg("estimate")
        .arg(&data)
        .args(["-e", "IC2-TIPUP", "-e", "ER1-TIPUP", "--json"])
        .arg(&json)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("IC2-TIPUP") && text.contains("lag diagnostic"));
    let rep: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(rep["schema_version"], 1);
    assert_eq!(rep["estimators"].as_array().unwrap().len(), 2);
    assert_eq!(rep["tau"][0]["rows"].as_array().unwrap().len(), 4);
}

#[test]
fn csv_round_trip_through_cli() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("x.csv");
    let st = tenrank()
        .args(["simulate", "--d1", "6", "--d2", "6", "-T", "60", "--model", "M0", "--format", "csv-wide", "--out"])
        .arg(&csv)
        .status()
        .unwrap();
    assert!(st.success());
    let diag = dir.path().join("tau.csv");
    let out = tenrank().arg("diagnose").arg(&csv).args(["--h-max", "3", "--csv"]).arg(&diag).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let lines = std::fs::read_to_string(&diag).unwrap().lines().count();
    assert_eq!(lines, 1 + 2 * 3 * 2 * 5);
}

#[test]
fn experiment_and_tune_c() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.toml");
    let res = dir.path().join("res.csv");
    std::fs::write(
        &cfg,
        "version = 1\nreplications = 3\nseed = 5\n[[cells]]\nmodel = \"M1\"\ndims = [[10, 10]]\nt = [80]\n\
         [[estimators]]\nmethod = \"TIPUP\"\ncriterion = \"ER\"\nvariant = 1\n",
    )
    .unwrap();
    let out = tenrank().arg("experiment").arg(&cfg).arg("--csv").arg(&res).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&res).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);
    assert!(text.starts_with("model,d1,d2,t,estimator,stage,replications,proportion_correct"));

    let data = dir.path().join("d.tfms");
    assert!(tenrank().args(["simulate", "--d1", "24", "--d2", "24", "-T", "150", "--out"]).arg(&data).status().unwrap().success());
    let prefix = dir.path().join("tune");
    let out = tenrank().arg("tune-c").arg(&data).arg("--csv-prefix").arg(&prefix).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stab = std::fs::read_to_string(dir.path().join("tune_stability.csv")).unwrap();
    assert_eq!(stab.lines().count(), 1 + 2 * 81);
    for line in stab.lines().skip(1) {
        let s: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert!(s >= 0.0);
    }
    let out = tenrank().arg("tune-c").arg(&data).args(["--c-count", "1", "--c-min", "0.5", "--c-max", "0.5"]).output().unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = tenrank().args(["estimate", "/definitely/not/here.tfms"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "t,i1,value\n1,1,1\n1,1,2\n").unwrap();
    assert_eq!(tenrank().arg("estimate").arg(&bad).status().unwrap().code(), Some(2));
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "version = 9\n").unwrap();
    assert_eq!(tenrank().arg("experiment").arg(&cfg).status().unwrap().code(), Some(2));
    let nonfinite = dir.path().join("inf.csv");
    std::fs::write(&nonfinite, "# dims: 3\nt,a,b,c\n1,1,2,3\n2,4,5,1e308\n3,1e308,1e308,1e308\n4,0,0,0\n").unwrap();
    let code = tenrank().arg("estimate").arg(&nonfinite).args(["--no-demean"]).status().unwrap().code();
    assert_eq!(code, Some(3));
}
