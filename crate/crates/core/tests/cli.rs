use serde_json::Value;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn hgcover(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgcover")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = hgcover(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Scratch {
    dir: tempfile::TempDir,
}

impl Scratch {
    fn new() -> Self {
        Scratch { dir: tempfile::tempdir().unwrap() }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

#[test]
fn threshold_prints_known_values() {
    assert_eq!(ok(&["family", "threshold", "--eps", "0.1", "--s", "2", "--p", "0.4"]).trim(), "278");
    assert_eq!(ok(&["family", "threshold", "--eps", "1/2", "--s", "3", "--p", "1/3"]).trim(), "7");
}

#[test]
fn family_shift_and_check() {
    let dir = Scratch::new();
    let fam = dir.write("fam.json", r#"{"n": 3, "members": [2, 6]}"#);
    let shifted = dir.path("shifted.json");
    ok(&["family", "shift", "--input", s(&fam), "--i", "0", "--j", "1", "-o", s(&shifted)]);
    assert_eq!(read(&shifted)["members"], serde_json::json!([1, 5]));
    let closed = dir.path("closed.json");
    ok(&["family", "shift", "--input", s(&fam), "--closure", "-o", s(&closed)]);
    assert_eq!(read(&closed)["members"], serde_json::json!([1, 3]));
    let check: Value = serde_json::from_str(&ok(&["family", "check", "--input", s(&closed), "--s", "2", "--t", "1"])).unwrap();
    assert_eq!(check["holds"], true);
}

#[test]
fn game_layers_reduce_solve_round_trip() {
    let dir = Scratch::new();
    let game = dir.path("game.json");
    let plant = dir.path("plant.json");
    ok(&[
        "game", "gen", "--y-count", "2", "--z-count", "1", "--degree", "1", "--ry", "2", "--rz", "1", "--seed", "4",
        "--labeling-out", s(&plant), "-o", s(&game),
    ]);
    assert_eq!(ok(&["game", "validate", "--input", s(&game)]).trim(), "[]");
    let eval: Value = serde_json::from_str(&ok(&["game", "eval", "--input", s(&game), "--labeling", s(&plant)])).unwrap();
    assert_eq!(eval["fraction"], serde_json::json!({"num": 1, "den": 1}));

    let summary: Value = serde_json::from_str(&ok(&["layers", "build", "--game", s(&game), "--l", "2", "--pairs"])).unwrap();
    assert_eq!(summary["layers"].as_array().unwrap().len(), 2);
    assert!(summary["pairs"].is_array());

    let lifted = dir.path("lifted.json");
    ok(&["layers", "lift", "--game", s(&game), "--l", "2", "--labeling", s(&plant), "-o", s(&lifted)]);
    let decoded: Value = serde_json::from_str(&ok(&[
        "layers", "decode", "--game", s(&game), "--l", "2", "--labeling", s(&lifted), "--i", "1", "--j", "2",
    ]))
    .unwrap();
    assert_eq!(decoded["fraction"], serde_json::json!({"num": 1, "den": 1}));

    let hg = dir.path("hg.json");
    ok(&["reduce", "build", "--game", s(&game), "--l", "2", "--eps", "0.1", "-o", s(&hg)]);
    assert_eq!(read(&hg)["vertex_count"], 10);

    let witness = dir.path("witness.json");
    ok(&["reduce", "witness", "--game", s(&game), "--l", "2", "--eps", "0.1", "--labeling", s(&plant), "-o", s(&witness)]);
    assert_eq!(read(&witness)["weight"], serde_json::json!({"num": 9, "den": 19}));
    let check: Value = serde_json::from_str(&ok(&[
        "reduce", "check", "--game", s(&game), "--l", "2", "--eps", "0.1", "--set", s(&witness), "--decode",
    ]))
    .unwrap();
    assert_eq!(check["independent"], true);
    assert_eq!(check["decoding"]["expected_fraction"], serde_json::json!({"num": 1, "den": 1}));
    let implicit: Value = serde_json::from_str(&ok(&[
        "reduce", "check", "--game", s(&game), "--l", "2", "--eps", "0.1", "--mode", "implicit", "--set", s(&witness),
    ]))
    .unwrap();
    assert_eq!(implicit["independent"], true);

    let exact: Value = serde_json::from_str(&ok(&["solve", "exact", "--input", s(&hg)])).unwrap();
    assert_eq!(exact["optimal"], true);
    let greedy: Value = serde_json::from_str(&ok(&["solve", "greedy", "--input", s(&hg)])).unwrap();
    assert!(greedy["cover"]["vertices"].is_array());
}

#[test]
fn density_query_from_file() {
    let dir = Scratch::new();
    let game = dir.path("game.json");
    ok(&["game", "gen", "--y-count", "2", "--z-count", "2", "--degree", "1", "--ry", "2", "--rz", "1", "-o", s(&game)]);
    let query = dir.write(
        "query.json",
        r#"{"delta": {"num": 1, "den": 1}, "layer_indices": [1, 2], "sets": [[0, 1, 2, 3], [0, 1, 2, 3]]}"#,
    );
    let report: Value =
        serde_json::from_str(&ok(&["layers", "density", "--game", s(&game), "--l", "2", "--query", s(&query)])).unwrap();
    assert_eq!(report["chosen"]["density"], serde_json::json!({"num": 1, "den": 1}));
}

#[test]
fn exact_on_complete_three_uniform() {
    let dir = Scratch::new();
    let one = r#"{"num": 1, "den": 1}"#;
    let h = dir.write(
        "k4.json",
        &format!(
            r#"{{"vertex_count": 4, "weights": [{one}, {one}, {one}, {one}], "edges": [[0,1,2],[0,1,3],[0,2,3],[1,2,3]]}}"#
        ),
    );
    let exact: Value = serde_json::from_str(&ok(&["solve", "exact", "--input", s(&h)])).unwrap();
    assert_eq!(exact["cover"]["weight"], serde_json::json!({"num": 2, "den": 1}));
    let is: Value = serde_json::from_str(&ok(&["solve", "exact", "--input", s(&h), "--independent"])).unwrap();
    assert_eq!(is["weight"], serde_json::json!({"num": 2, "den": 1}));
}

#[test]
fn malformed_input_names_path_and_field() {
    let dir = Scratch::new();
    let bad = dir.write("bad.json", r#"{"ry": 2, "rz": 1, "y_count": 1, "z_count": 1, "constraints": [{"y": 0, "z": "x", "table": [0, 0]}]}"#);
    let out = hgcover(&["game", "validate", "--input", s(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json") && err.contains("constraints[0].z"), "{err}");
}

#[test]
fn exit_codes_separate_domain_and_resource_errors() {
    let domain = hgcover(&["pipeline", "--k", "3", "--eps", "1"]);
    assert_eq!(domain.status.code(), Some(1));
    let dir = Scratch::new();
    let game = dir.path("game.json");
    ok(&["game", "gen", "--y-count", "2", "--z-count", "1", "--degree", "1", "--ry", "2", "--rz", "1", "-o", s(&game)]);
    let resource = hgcover(&["reduce", "build", "--game", s(&game), "--l", "2", "--eps", "0.1", "--max-edges", "5"]);
    assert_eq!(resource.status.code(), Some(2));
    let budget = hgcover(&["layers", "build", "--game", s(&game), "--l", "3", "--max-layer-size", "1"]);
    assert_eq!(budget.status.code(), Some(2));
    let usage = hgcover(&["family", "threshold"]);
    assert_eq!(usage.status.code(), Some(1));
}

#[test]
fn pipeline_reports_witness_and_config_file() {
    let dir = Scratch::new();
    let config = dir.write("config.json", r#"{"k": 3, "epsilon": {"num": 1, "den": 10}, "seed": 7}"#);
    let json = dir.path("report.json");
    let text = dir.path("report.txt");
    ok(&["pipeline", "--config", s(&config), "--json-out", s(&json), "--text-out", s(&text)]);
    let report = read(&json);
    assert_eq!(report["scale"], "desk scale, no hardness claim");
    assert_eq!(report["planted"]["witness"]["weight"], serde_json::json!({"num": 9, "den": 19}));
    assert_eq!(report["seeds"]["planted"], 7);
    assert!(std::fs::read_to_string(&text).unwrap().contains("desk scale"));
}
