use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn rcid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rcid"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn small_fleet(dir: &Path) -> PathBuf {
    let cfg = dir.join("fleet.json");
    std::fs::write(
        &cfg,
        r#"{"homes": 3, "seasons": [{"name": "winter", "days": 10}]}"#,
    )
    .unwrap();
    let out = dir.join("fleet");
    let o = rcid(&[
        "synth",
        "--config",
        s(&cfg),
        "--out",
        s(&out),
        "--seed",
        "7",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn synth_ingest_fit_and_transfer() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = small_fleet(dir.path());
    assert!(fleet.join("manifest.json").is_file());
    assert!(fleet.join("metadata.csv").is_file());
    let trace = fleet.join("traces/home000_winter.csv");
    let controls = fleet.join("traces/home000_winter_controls.csv");

    let normalized = dir.path().join("norm.csv");
    let o = rcid(&[
        "ingest",
        s(&trace),
        "--home-id",
        "home000",
        "--out",
        s(&normalized),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&normalized).unwrap();
    assert!(text.starts_with("timestamp,"));
    assert_eq!(text.lines().count(), 10 * 288 + 1);

    let model = dir.path().join("onercone.json");
    let o = rcid(&[
        "fit",
        s(&trace),
        "--model",
        "onercone",
        "--controls",
        s(&controls),
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&model).unwrap()).unwrap();
    assert_eq!(v["kind"], "onercone");

    let config = dir.path().join("fit.json");
    std::fs::write(&config, r#"{"order": 2, "training": {"epochs": 5}}"#).unwrap();
    let bnn = dir.path().join("bnn.json");
    let o = rcid(&[
        "fit",
        s(&trace),
        "--model",
        "bnn_rc",
        "--days",
        "3",
        "--controls",
        s(&controls),
        "--config",
        s(&config),
        "--out",
        s(&bnn),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&bnn).unwrap()).unwrap();
    assert_eq!(v["model"]["means"].as_array().unwrap().len(), 12);

    let other = fleet.join("traces/home001_winter.csv");
    let moved = dir.path().join("moved.json");
    let o = rcid(&[
        "transfer",
        "--model",
        s(&bnn),
        s(&other),
        "--days",
        "1",
        "--config",
        s(&config),
        "--out",
        s(&moved),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(moved.is_file());
}

#[test]
fn coeffs_and_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params.json");
    std::fs::write(
        &params,
        r#"{"order": 2, "resistances": [1.0, 0.8], "capacitances": [15000.0, 1500.0], "q_heat": 25.0, "q_cool": 15.0}"#,
    )
    .unwrap();
    let o = rcid(&["coeffs", "--params", s(&params)]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["order"], 2);
    assert_eq!(v["s"].as_array().unwrap().len(), 3);

    let inputs = dir.path().join("u.csv");
    let mut text = String::from("t_out,k_heat,k_cool\n");
    for t in 0..50 {
        text.push_str(&format!("40,{},0\n", u8::from(t % 4 == 0)));
    }
    std::fs::write(&inputs, text).unwrap();
    let o = rcid(&[
        "simulate",
        "--params",
        s(&params),
        "--inputs",
        s(&inputs),
        "--t-in",
        "65",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "t_in");
    assert_eq!(lines.len(), 51);
    assert_eq!(lines[1].parse::<f64>().unwrap(), 65.0);
}

#[test]
fn cluster_and_library() {
    let dir = tempfile::tempdir().unwrap();
    let fleet = small_fleet(dir.path());
    let clustering = dir.path().join("clustering.json");
    let o = rcid(&[
        "cluster",
        s(&fleet.join("metadata.csv")),
        "--k",
        "2",
        "--out",
        s(&clustering),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rcid(&["cluster", s(&fleet.join("metadata.csv")), "--k-max", "3"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let trace = fleet.join("traces/home000_winter.csv");
    let model = dir.path().join("p.json");
    let o = rcid(&[
        "fit",
        s(&trace),
        "--model",
        "persistence",
        "--out",
        s(&model),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let store = dir.path().join("lib");
    for cluster in ["0", "1"] {
        let o = rcid(&[
            "library",
            "--store",
            s(&store),
            "put",
            "--cluster",
            cluster,
            "--season",
            "winter",
            "--model",
            s(&model),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let o = rcid(&["library", "--store", s(&store), "list"]);
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), 2);
    let o = rcid(&[
        "library",
        "--store",
        s(&store),
        "get",
        "--cluster",
        "1",
        "--season",
        "winter",
        "--kind",
        "persistence",
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(o.stdout, std::fs::read(&model).unwrap());
    let o = rcid(&[
        "library",
        "--store",
        s(&store),
        "lookup",
        "--clustering",
        s(&clustering),
        "--floor-area",
        "2000",
        "--year-built",
        "1990",
        "--season",
        "winter",
        "--kind",
        "persistence",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = rcid(&[
        "library",
        "--store",
        s(&store),
        "get",
        "--cluster",
        "5",
        "--season",
        "winter",
        "--kind",
        "persistence",
    ]);
    assert_eq!(code(&o), 2);
}

#[test]
fn experiment_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    std::fs::write(
        &cfg,
        r#"{
            "fleet": {"synthetic": {"homes": 2, "seasons": [{"name": "winter", "days": 12}]}},
            "models": ["onercone", "persistence"],
            "train_days": 7,
            "test_days": 3
        }"#,
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = rcid(&["experiment", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let records = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), 1 + 2 * 2);
    assert!(out.join("summary.json").is_file());
    assert!(String::from_utf8(o.stdout).unwrap().contains("persistence"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rcid(&["frobnicate"])), 1);
    assert_eq!(code(&rcid(&["fit", "x.csv", "--model", "lstm"])), 1);
    assert_eq!(code(&rcid(&["synth"])), 1);

    let missing = dir.path().join("missing.csv");
    assert_eq!(code(&rcid(&["ingest", s(&missing)])), 2);

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "not,a,trace\n1,2,3\n").unwrap();
    assert_eq!(code(&rcid(&["ingest", s(&bad)])), 2);

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"homes": 0}"#).unwrap();
    let out = dir.path().join("o");
    assert_eq!(
        code(&rcid(&["synth", "--config", s(&cfg), "--out", s(&out)])),
        1
    );
    assert_eq!(code(&rcid(&["--help"])), 0);
}
