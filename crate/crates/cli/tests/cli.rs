use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pmuplace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmuplace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["k", "objective_nats", "objective_bits", "normalized_gain"]);
    r.records()
        .map(|rec| rec.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn place_is_deterministic_and_csv_matches_json() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let js = dir.path().join(format!("{tag}.json"));
        let cs = dir.path().join(format!("{tag}.csv"));
        let out = pmuplace(&[
            "place",
            "--case",
            "ieee14",
            "--k",
            "4",
            "--out-json",
            js.to_str().unwrap(),
            "--out-csv",
            cs.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        (std::fs::read(js).unwrap(), cs)
    };
    let (a, csv_a) = run("a");
    let (b, csv_b) = run("b");
    assert_eq!(a, b);
    assert_eq!(std::fs::read(&csv_a).unwrap(), std::fs::read(csv_b).unwrap());

    let report: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(report["order"][0], 4);
    let rows = read_csv(&csv_a);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0, 0.0]);
    let steps = report["steps"].as_array().unwrap();
    for (row, step) in rows[1..].iter().zip(steps) {
        assert_eq!(row[0], step["k"].as_f64().unwrap());
        assert_eq!(row[1], step["objective_nats"].as_f64().unwrap());
        assert_eq!(row[2], step["objective_bits"].as_f64().unwrap());
        assert_eq!(row[3], step["normalized_gain"].as_f64().unwrap());
        assert!(row[3] > 0.0 && row[3] <= 1.0);
    }
    for w in rows.windows(2) {
        assert!(w[1][1] >= w[0][1]);
    }
}

#[test]
fn zero_budget_gives_an_empty_placement() {
    let report = json(&pmuplace(&["place", "--case", "ieee14", "--k", "0"]));
    assert_eq!(report["order"].as_array().unwrap().len(), 0);
    assert_eq!(report["value"].as_f64().unwrap(), 0.0);
}

#[test]
fn eval_agrees_with_place() {
    let place = json(&pmuplace(&["place", "--case", "ieee14", "--k", "4"]));
    let mut set: Vec<u64> = place["order"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).collect();
    set.sort_unstable();
    let ids = set.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
    let eval = json(&pmuplace(&["eval", "--case", "ieee14", "--set", &ids]));
    let a = place["value"].as_f64().unwrap();
    let b = eval["objective_nats"].as_f64().unwrap();
    assert!((a - b).abs() <= 1e-9 * a, "{a} vs {b}");
    assert_eq!(eval["set"].as_array().unwrap().len(), 4);
}

#[test]
fn bus_three_has_the_widest_prior() {
    let eval = json(&pmuplace(&["eval", "--case", "ieee14", "--set", "4"]));
    let prior = eval["slots"][0]["prior_std_deg"].as_object().unwrap();
    let (widest, _) = prior
        .iter()
        .max_by(|a, b| a.1.as_f64().unwrap().total_cmp(&b.1.as_f64().unwrap()))
        .unwrap();
    assert_eq!(widest, "3");
    assert_eq!(prior["1"].as_f64().unwrap(), 0.0);
    let post = eval["slots"][0]["posterior_std_deg"].as_object().unwrap();
    assert!(post["4"].as_f64().unwrap() < prior["4"].as_f64().unwrap());
}

#[test]
fn bits_are_nats_over_ln2() {
    let nats = json(&pmuplace(&["eval", "--case", "ieee14", "--set", "2,6"]));
    let bits = json(&pmuplace(&["eval", "--case", "ieee14", "--set", "2,6", "--unit", "bits"]));
    let n = nats["value"].as_f64().unwrap();
    let b = bits["value"].as_f64().unwrap();
    assert!((b - n / std::f64::consts::LN_2).abs() <= 1e-12 * b);
}

#[test]
fn exit_codes() {
    assert_eq!(pmuplace(&["eval", "--case", "ieee14", "--set", "99"]).status.code(), Some(1));
    assert_eq!(pmuplace(&["place", "--case", "nowhere"]).status.code(), Some(1));
    assert_eq!(pmuplace(&["place", "--case", "ieee14", "--availability", "2"]).status.code(), Some(1));
    let tight = pmuplace(&["place", "--case", "ieee14", "--k", "3", "--solver", "exhaustive", "--failure-mode", "exact"]);
    assert_eq!(tight.status.code(), Some(0));
}

#[test]
fn exhaustive_cap_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"case": "ieee14", "k": 3, "solver": "exhaustive", "exhaustive_cap": 10}"#).unwrap();
    let out = pmuplace(&["place", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_overrides_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"k": 2, "objective": "f2"}"#).unwrap();
    let report = json(&pmuplace(&["place", "--case", "ieee14", "--k", "5", "--config", cfg.to_str().unwrap()]));
    assert_eq!(report["order"].as_array().unwrap().len(), 2);
    assert_eq!(report["config"]["objective"], "f2");
}

#[test]
fn verify_passes_and_negation_fails() {
    let ok = pmuplace(&["verify", "--case", "ieee14", "--trials", "100", "--k", "3"]);
    let report = json(&ok);
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 5);

    let bad = pmuplace(&["verify", "--case", "ieee14", "--trials", "100", "--k", "3", "--negate"]);
    assert_eq!(bad.status.code(), Some(3));
    let report: Value = serde_json::from_slice(&bad.stdout).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn large_case_falls_back_to_monte_carlo() {
    let out = pmuplace(&["place", "--case", "ieee57", "--k", "5", "--mc-samples", "200"]);
    let report = json(&out);
    assert!(report["failure_mode"]["monte_carlo"].is_object(), "{}", report["failure_mode"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Monte Carlo"));
}

#[test]
fn sweep_reports_greedy_against_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let cs = dir.path().join("s.csv");
    let report = json(&pmuplace(&[
        "sweep",
        "--case",
        "ieee14",
        "--k",
        "1",
        "--k-max",
        "3",
        "--solver",
        "exhaustive",
        "--out-csv",
        cs.to_str().unwrap(),
    ]));
    let ratio = report["approximation"]["min_ratio"].as_f64().unwrap();
    assert!(ratio >= 1.0 - (-1.0f64).exp() && ratio <= 1.0 + 1e-12);
    assert_eq!(report["optimal"].as_array().unwrap().len(), 3);
    assert_eq!(read_csv(&cs).len(), 3);
}

#[test]
fn json_case_files_load() {
    let dir = tempfile::tempdir().unwrap();
    let case = dir.path().join("tri.json");
    std::fs::write(
        &case,
        r#"{"base_mva": 100, "slack": 1,
            "buses": [{"id": 1, "p_inj_mw": 0}, {"id": 2, "p_inj_mw": 50}, {"id": 3, "p_inj_mw": -50}],
            "branches": [{"from": 1, "to": 2, "x_pu": 0.1}, {"from": 2, "to": 3, "x_pu": 0.2}]}"#,
    )
    .unwrap();
    let report = json(&pmuplace(&["place", "--case", case.to_str().unwrap(), "--k", "1"]));
    assert_eq!(report["buses"], 3);
}
