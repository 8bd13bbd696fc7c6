use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_latentgraph"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, body: &str) {
    std::fs::write(dir.join(name), body).unwrap();
}

fn read_json(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join(name)).unwrap()).unwrap()
}

fn cov_file(dir: &Path, name: &str, m: &[Vec<f64>], q: usize) {
    let d = m.len();
    let labels: Vec<String> = (1..=d).map(|j| format!("b{j}")).collect();
    write(
        dir,
        name,
        &json!({"dim": d, "q": q, "labels": labels, "matrix": m, "divisor": "q-1"}).to_string(),
    );
}

fn sigma4() -> Vec<Vec<f64>> {
    vec![
        vec![0.4083, 0.0, 0.0, 0.0],
        vec![0.0, 0.456510, -0.451965, 0.265170],
        vec![0.0, -0.451965, 0.837030, -0.491090],
        vec![0.0, 0.265170, -0.491090, 0.524365],
    ]
}

fn spec(q: usize, replicates: usize) -> String {
    json!({
        "margins": [
            {"family": "gamma", "link": "log", "beta": [0.6], "dispersion": 0.5},
            {"family": "poisson", "link": "log", "beta": [0.6]}
        ],
        "q": q,
        "replicates": replicates,
        "random_components": {"family": "gaussian", "scatter": [[0.8166, 0.0], [0.0, 0.91302]]}
    })
    .to_string()
}

#[test]
fn malformed_json_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.json", "{ not json");
    let out = run(dir.path(), &["simulate", "--spec", "bad.json", "--out", "x.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn unknown_flag_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    assert_eq!(run(dir.path(), &["test", "--bogus"]).status.code(), Some(2));
}

#[test]
fn tiny_simulation_has_one_row_per_margin_and_cluster() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.json", &spec(2, 1));
    ok(dir.path(), &["simulate", "--spec", "spec.json", "--out", "d.csv"]);
    let data = std::fs::read_to_string(dir.path().join("d.csv")).unwrap();
    let lines: Vec<&str> = data.lines().collect();
    assert_eq!(lines[0], "margin,cluster,y,x1");
    assert_eq!(lines.len(), 1 + 4);
    let truth = std::fs::read_to_string(dir.path().join("d.truth.csv")).unwrap();
    assert_eq!(truth.lines().count(), 1 + 2);
}

#[test]
fn covariance_of_predictions_is_their_sample_covariance() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "pred.csv",
        "cluster,b1,b2,v1,v2\n1,1,2,0.1,0.1\n2,-1,0,0.1,0.1\n3,0,1,0.1,0.1\n4,2,-1,0.1,0.1\n",
    );
    ok(dir.path(), &["estimate-cov", "--input", "pred.csv", "--out", "c.json"]);
    let c = read_json(dir.path(), "c.json");
    // means (0.5, 0.5); centered (0.5,1.5), (-1.5,-0.5), (-0.5,0.5), (1.5,-1.5)
    let want = [[5.0 / 3.0, -1.0 / 3.0], [-1.0 / 3.0, 5.0 / 3.0]];
    for i in 0..2 {
        for j in 0..2 {
            let got = c["matrix"][i][j].as_f64().unwrap();
            assert!((got - want[i][j]).abs() < 1e-12, "{i},{j}: {got}");
        }
    }
    assert_eq!(c["q"], 4);
    ok(dir.path(), &["estimate-cov", "--input", "pred.csv", "--divisor", "q", "--out", "c4.json"]);
    let c4 = read_json(dir.path(), "c4.json");
    assert!((c4["matrix"][0][0].as_f64().unwrap() - 1.25).abs() < 1e-12);
}

#[test]
fn block_diagonal_covariance_gives_pvalue_one() {
    let dir = TempDir::new().unwrap();
    cov_file(dir.path(), "c.json", &[vec![1.0, 0.0, 0.3], vec![0.0, 2.0, 0.0], vec![0.3, 0.0, 1.5]], 50);
    for extra in [&["--method", "gaussian"][..], &["--method", "elliptical", "--kappa", "0.4"][..]] {
        let mut args = vec!["test", "--cov", "c.json", "--blocks", "1,1", "--coords", "1,2", "--condition", "none", "--out", "t.json"];
        args.extend_from_slice(extra);
        ok(dir.path(), &args);
        let t = read_json(dir.path(), "t.json");
        assert!((t["pvalue"].as_f64().unwrap() - 1.0).abs() < 1e-12, "{t}");
    }
}

#[test]
fn elliptical_test_needs_a_kurtosis_source() {
    let dir = TempDir::new().unwrap();
    cov_file(dir.path(), "c.json", &sigma4(), 100);
    let out = run(dir.path(), &["test", "--cov", "c.json", "--blocks", "1,1", "--method", "elliptical"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn elliptical_ml_refuses_large_grids() {
    let dir = TempDir::new().unwrap();
    let mut body = String::from("cluster,b1,b2,b3,b4,b5,v1,v2,v3,v4,v5\n");
    for j in 1..=30 {
        let b: Vec<String> = (0..5).map(|k| format!("{}", ((j * 7 + k * 13) % 11) as f64 / 5.0 - 1.0)).collect();
        body.push_str(&format!("{j},{},0.1,0.1,0.1,0.1,0.1\n", b.join(",")));
    }
    write(dir.path(), "pred.csv", &body);
    let out = run(dir.path(), &["estimate-cov", "--input", "pred.csv", "--method", "ml-elliptical"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("grid"));
}

#[test]
fn diagonal_covariance_gives_an_edgeless_graph() {
    let dir = TempDir::new().unwrap();
    cov_file(dir.path(), "c.json", &[vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.5]], 200);
    let dot = ok(dir.path(), &["graph", "--cov", "c.json"]);
    assert!(dot.starts_with("graph G {"));
    assert!(!dot.contains("--"), "{dot}");
    assert!(dot.contains("\"B1[3]\";"));
}

#[test]
fn partial_correlation_pattern_is_recovered_as_graph_edges() {
    let dir = TempDir::new().unwrap();
    cov_file(dir.path(), "c.json", &sigma4(), 2000);
    ok(dir.path(), &["graph", "--cov", "c.json", "--dot", "g.dot", "--out", "g.json"]);
    let dot = std::fs::read_to_string(dir.path().join("g.dot")).unwrap();
    let edges: Vec<&str> = dot.lines().filter(|l| l.contains("--")).map(str::trim).collect();
    // coordinates 2 and 4 are uncorrelated given 3 although their covariance is not zero
    assert_eq!(edges, ["\"B1[2]\" -- \"B1[3]\";", "\"B1[3]\" -- \"B1[4]\";"]);
    let g = read_json(dir.path(), "g.json");
    assert!((g["pvalues"][0][2].as_f64().unwrap() - 1.0).abs() < 1e-12);
}

#[test]
fn moral_fixture_matches_golden_file() {
    let dir = TempDir::new().unwrap();
    let dot = ok(dir.path(), &["graph", "--fixture", "figure2", "--moral"]);
    assert_eq!(dot, include_str!("../../core/tests/golden/figure2_moral.dot"));
    let plain = ok(dir.path(), &["graph", "--fixture", "figure2"]);
    assert!(plain.starts_with("digraph G {"));
    assert!(plain.contains("\"B1[1]\" -> \"Y[1]\";"));
}

#[test]
fn study_with_a_single_replicate_runs() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "s.json",
        &json!({
            "models": [{"name": "g", "type": "elliptical", "spec": {"family": "gaussian", "scatter": sigma4()}}],
            "hypothesis": {"blocks": [[1], [3]], "condition": "rest"},
            "q_schedule": [20],
            "n_sims": 1
        })
        .to_string(),
    );
    ok(dir.path(), &["power-study", "--config", "s.json", "--out", "r.csv", "--pvalues", "p.csv"]);
    let rates = std::fs::read_to_string(dir.path().join("r.csv")).unwrap();
    let lines: Vec<&str> = rates.lines().collect();
    assert_eq!(lines[0], "model,grid_value,q,method,n_sims,n_ok,rejections,rate,ks_pvalue");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("g,,20,gaussian,1,1,"));
    assert!(lines[1].ends_with(','));
}

#[test]
fn study_rejects_a_grid_leaving_the_positive_definite_cone() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "s.json",
        &json!({
            "models": [{"name": "g", "type": "elliptical", "spec": {"family": "gaussian", "scatter": [[1.0, 0.0], [0.0, 1.0]]}}],
            "hypothesis": {"blocks": [[1], [2]], "condition": "none"},
            "grid": [0.0, 1.5],
            "grid_entry": [1, 2],
            "q_schedule": [20],
            "n_sims": 5
        })
        .to_string(),
    );
    let out = run(dir.path(), &["power-study", "--config", "s.json", "--out", "r.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("r.csv").exists());
}

#[test]
fn uniformity_statistic_on_a_regular_grid() {
    let dir = TempDir::new().unwrap();
    let body: String = std::iter::once("pvalue\n".to_string())
        .chain((1..=10).map(|k| format!("{}\n", k as f64 / 10.0)))
        .collect();
    write(dir.path(), "p.csv", &body);
    ok(dir.path(), &["uniformity", "--input", "p.csv", "--out", "ks.json", "--svg", "qq.svg"]);
    let ks = read_json(dir.path(), "ks.json");
    assert!((ks["statistic"].as_f64().unwrap() - 0.1).abs() < 1e-12);
    assert_eq!(ks["n"], 10);
    let svg = std::fs::read_to_string(dir.path().join("qq.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn uniformity_of_nothing_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p.csv", "pvalue\n");
    let out = run(dir.path(), &["uniformity", "--input", "p.csv"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn predicted_components_feed_the_test() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.json", &spec(150, 20));
    ok(dir.path(), &["--seed", "4", "simulate", "--spec", "spec.json", "--out", "d.csv"]);
    ok(dir.path(), &["predict", "--data", "d.csv", "--margins", "spec.json", "--out", "p.csv"]);
    ok(dir.path(), &["estimate-cov", "--input", "p.csv", "--out", "c.json"]);
    let c = read_json(dir.path(), "c.json");
    assert_eq!(c["q"], 150);
    let v = c["matrix"][0][0].as_f64().unwrap();
    assert!(v > 0.5 && v < 1.1, "{v}");
    ok(dir.path(), &["test", "--cov", "c.json", "--blocks", "1,1", "--method", "elliptical", "--data", "p.csv", "--out", "t.json"]);
    let t = read_json(dir.path(), "t.json");
    let p = t["pvalue"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    assert!(t["kappa"].is_number());
}

#[test]
fn seed_flag_and_environment_agree() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "spec.json", &spec(10, 3));
    ok(dir.path(), &["--seed", "9", "simulate", "--spec", "spec.json", "--out", "a.csv"]);
    let out = Command::new(env!("CARGO_BIN_EXE_latentgraph"))
        .current_dir(dir.path())
        .env("LATENTGRAPH_SEED", "9")
        .args(["simulate", "--spec", "spec.json", "--out", "b.csv"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert_eq!(a, b);
    ok(dir.path(), &["--seed", "10", "simulate", "--spec", "spec.json", "--out", "c.csv"]);
    assert_ne!(a, std::fs::read(dir.path().join("c.csv")).unwrap());
}
