use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use opfact::correlations::{self, PVMModel};
use opfact::io::SpaceJson;
use opfact::linalg::{self, c};
use opfact::products;
use opfact::spaces::ConcreteOperatorSpace;
use opfact::{ComplexMatrix, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tempfile::TempDir;

fn opfact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_opfact")).args(args).output().expect("binary runs")
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(out: &Output) -> Value {
    let text = String::from_utf8(out.stdout.clone()).unwrap();
    serde_json::from_str(text.trim()).unwrap_or_else(|e| panic!("bad report {text:?}: {e}"))
}

fn space_json(sp: &ConcreteOperatorSpace) -> Value {
    serde_json::to_value(SpaceJson::from_space(sp)).unwrap()
}

#[test]
fn group_norm_of_e_plus_generator_is_two() {
    let dir = TempDir::new().unwrap();
    let pres = write(&dir, "z2.txt", "gens 1\nrel a1 a1 = e\n");
    let out = opfact(&["norm", "--kind", "group", "--pres", s(&pres), "--elem", "e+a1", "-L", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert!((r["result"]["lower"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert!((r["result"]["upper"].as_f64().unwrap() - 2.0).abs() < 1e-9);
    assert_eq!(r["seed"], 0);
    assert_eq!(r["config"]["length"], 4);
    assert!(r["versions"]["opfact"].is_string());
}

#[test]
fn haagerup_elementary_tensor_is_exact() {
    let dir = TempDir::new().unwrap();
    let m2 = ConcreteOperatorSpace::matrix_algebra(2);
    let a = [c(1.0, 0.0), c(0.5, -0.2), c(0.0, 0.3), c(-0.7, 0.0)];
    let b = [c(0.2, 0.1), c(1.0, 0.0), c(-0.4, 0.0), c(0.3, 0.6)];
    let coeffs: Vec<Vec<C64>> = a.iter().map(|x| b.iter().map(|y| x * y).collect()).collect();
    let prob = json!({ "s": space_json(&m2), "t": space_json(&m2), "element": [[coeffs]] });
    let input = write(&dir, "z.json", &prob.to_string());
    let out = opfact(&["norm", "--kind", "haagerup", "--in", s(&input), "--restarts", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    let (lo, up) = (r["result"]["lower"].as_f64().unwrap(), r["result"]["upper"].as_f64().unwrap());
    assert!(lo > 0.0 && (up - lo) <= 1e-6 * up, "[{lo}, {up}]");
    assert_eq!(r["result"]["witness"]["factor_shapes"].as_array().unwrap().len(), 2);
}

#[test]
fn missing_file_is_an_input_error() {
    let out = opfact(&["norm", "--kind", "matrix", "--in", "/nonexistent/problem.json"]);
    assert_eq!(out.status.code(), Some(2));
    let out = opfact(&["norm", "--kind", "group", "--pres", "/nonexistent/z2.txt", "--elem", "e"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_kind_is_an_input_error() {
    let out = opfact(&["check", "--kind", "nonsense", "--in", "/dev/null"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unitality_of_identity_and_matrix_unit() {
    let dir = TempDir::new().unwrap();
    let one = [[1.0, 0.0], [0.0, 1.0]];
    let e12 = [[0.0, 1.0], [0.0, 0.0]];
    let mat = |m: [[f64; 2]; 2]| json!(m.iter().map(|r| r.iter().map(|&v| [v, 0.0]).collect::<Vec<_>>()).collect::<Vec<_>>());
    let prob = json!({ "space": { "d": 2, "basis": [mat(one), mat(e12)], "unit_index": 0, "is_system": false } });
    let input = write(&dir, "space.json", &prob.to_string());
    let out = opfact(&["check", "--kind", "unitality", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(report(&out)["result"]["passed"], true);
}

#[test]
fn anticommutator_degeneracy_is_a_violation() {
    let dir = TempDir::new().unwrap();
    let prob = json!({ "space": space_json(&products::pauli_space()), "product": { "builtin": "anticommutator" } });
    let input = write(&dir, "pauli.json", &prob.to_string());
    let out = opfact(&["check", "--kind", "degeneracy", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(1));
    let r = report(&out);
    assert_eq!(r["status"], "violation");
    assert!(r["result"]["detail"]["witness"].is_object());
}

#[test]
fn empty_space_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "empty.json", r#"{"space":{"d":2,"basis":[],"unit_index":null,"is_system":false}}"#);
    let out = opfact(&["check", "--kind", "linf", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn corner_of_a_built_model_is_synchronous() {
    let dir = TempDir::new().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = PVMModel::random(&mut rng, 2, 2, 2, 2);
    let input = write(&dir, "model.json", &serde_json::to_string(&model).unwrap());
    let out = opfact(&["corr", "--kind", "build-corner", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["synchronous"], true);
    let table = write(&dir, "table.json", &r["result"]["table"].to_string());
    let out = opfact(&["corr", "--kind", "synchronous", "--in", s(&table)]);
    assert_eq!(out.status.code(), Some(0));

    // corner of the model's own table, written as CSV
    let t = correlations::correlation_from_model(&model).unwrap();
    let table = write(&dir, "model_table.json", &serde_json::to_string(&t).unwrap());
    let csv = dir.path().join("corner.csv");
    let out = opfact(&["corr", "--kind", "corner", "--in", s(&table), "--format", "csv", "--out", s(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("x,y,a,b,p\n"));
    // two inputs fold to one, leaving 1 x 1 x 2 x 2 entries
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn cuntz_state_has_no_trace() {
    let dir = TempDir::new().unwrap();
    let phi = correlations::cuntz_vector_state(2, &[c(1.0, 0.0), c(0.0, 0.5)]).unwrap();
    let prob = json!({ "product": { "builtin": "cuntz", "n": 2 }, "state": phi });
    let input = write(&dir, "cuntz.json", &prob.to_string());
    let out = opfact(&["corr", "--kind", "trace", "--in", s(&input), "-L", "2", "--samples", "4"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&out);
    assert_eq!(r["result"]["pass"], false);
    assert_eq!(r["result"]["violation"]["certified"], true);
}

#[test]
fn malformed_table_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "bad.json", r#"{"n": 2, "k": 2, "p": "oops"}"#);
    let out = opfact(&["corr", "--kind", "synchronous", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
    // well formed but not a probability table
    let input = write(&dir, "neg.json", &json!({"n": 1, "k": 1, "p": [[[[2.0]]]]}).to_string());
    let out = opfact(&["corr", "--kind", "corner", "--in", s(&input)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_runs_give_identical_reports() {
    let dir = TempDir::new().unwrap();
    let pres = write(&dir, "s3.txt", opfact::groups::presets::S3);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = opfact(&["norm", "--kind", "group", "--pres", s(&pres), "--elem", "e+a1-0.5*a2", "-L", "3", "--seed", "11", "--out", s(&out)]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).starts_with("norm[group]"));
        std::fs::read(&out).unwrap()
    };
    let (a, b) = (run("a.jsonl"), run("b.jsonl"));
    assert!(!a.is_empty());
    assert_eq!(a, b);
}

#[test]
fn reports_append_as_json_lines() {
    let dir = TempDir::new().unwrap();
    let m2 = ConcreteOperatorSpace::matrix_algebra(2);
    let x: ComplexMatrix = linalg::random_matrix(&mut ChaCha8Rng::seed_from_u64(1), 2, 2);
    let coeffs = m2.coordinates(&x).unwrap();
    let prob = json!({ "space": space_json(&m2), "element": [[coeffs]] });
    let input = write(&dir, "x.json", &prob.to_string());
    let out = dir.path().join("runs.jsonl");
    for _ in 0..2 {
        assert_eq!(opfact(&["norm", "--kind", "matrix", "--in", s(&input), "--out", s(&out)]).status.code(), Some(0));
    }
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let r: Value = serde_json::from_str(lines[0]).unwrap();
    let v = r["result"]["upper"].as_f64().unwrap();
    assert!((v - linalg::spectral_norm(&x).unwrap()).abs() < 1e-9);
}
