use std::path::{Path, PathBuf};
use std::process::Command;

use opgeom::field::{
    apply_gauge, gauge_to_json, operator_to_json, parse_operator, Chart, GaugeTransform, PolyMatrixField,
};
use opgeom::kernel::Mat;
use opgeom::random::{random_operator, random_unipotent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const EXAMPLE: &str = r#"{
  "n": 2, "m": 2,
  "chart": {"lo": [0.1, 0.1], "hi": [1, 1]},
  "A": [
    [[[{"exp": [0, 0], "c": 1}], []], [[], []]],
    [[[], [{"exp": [0, 0], "c": 1}]], [[{"exp": [0, 0], "c": 1}], []]]
  ],
  "B": [[[], [{"exp": [1, 0], "c": 1}]], [[{"exp": [1, 0], "c": -1}], [{"exp": [0, 1], "c": 1}]]]
}"#;

struct Run {
    code: i32,
    stdout: String,
    stderr: String,
}

fn opgeom(args: &[&str]) -> Run {
    let out = Command::new(env!("CARGO_BIN_EXE_opgeom")).args(args).output().unwrap();
    Run {
        code: out.status.code().unwrap(),
        stdout: String::from_utf8(out.stdout).unwrap(),
        stderr: String::from_utf8(out.stderr).unwrap(),
    }
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn invariants_at_a_point() {
    let dir = tempfile::tempdir().unwrap();
    let op = write(dir.path(), "op.json", EXAMPLE);
    let r = opgeom(&["invariants", s(&op), "--point", "0.4,0.6"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let p = &v["points"][0];
    assert_eq!(p["regularity"]["general"], true);
    assert!((p["invariants"]["Tr(σ̃₂²)"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((p["operator_invariants"]["Tr(σ₀)"].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn malformed_and_irregular_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", "{\"n\": 2,");
    assert_eq!(opgeom(&["invariants", s(&bad)]).code, 2);
    let wrong_point = write(dir.path(), "op.json", EXAMPLE);
    assert_eq!(opgeom(&["invariants", s(&wrong_point), "--point", "0.1"]).code, 2);

    // traceless constant symbol: χ = 0
    let traceless = r#"{"n": 2, "m": 2, "chart": {"lo": [0, 0], "hi": [1, 1]},
      "A": [[[[{"exp": [0, 0], "c": 1}], []], [[], [{"exp": [0, 0], "c": -1}]]],
            [[[], [{"exp": [0, 0], "c": 1}]], [[{"exp": [0, 0], "c": 1}], []]]],
      "B": [[[], []], [[], []]]}"#;
    let op = write(dir.path(), "traceless.json", traceless);
    let r = opgeom(&["invariants", s(&op), "--point", "0.5,0.5"]);
    assert_eq!(r.code, 3);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["points"][0]["regularity"]["chi_nonzero"], false);
    assert_eq!(opgeom(&["model", s(&op), "--grid", "3"]).code, 3);
}

#[test]
fn regularity_and_connection_reports() {
    let dir = tempfile::tempdir().unwrap();
    let op = write(dir.path(), "op.json", EXAMPLE);
    let r = opgeom(&["regularity", s(&op), "--grid", "3"]);
    assert_eq!(r.code, 0, "{}", r.stdout);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["regular"], 9);
    let r = opgeom(&["connection", s(&op), "--point", "0.3,0.7"]);
    assert_eq!(r.code, 0);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v[0]["omega"].as_array().unwrap().len(), 2);
    assert!(v[0]["gram_ratio"].as_f64().unwrap() > 0.0);
}

#[test]
fn model_equiv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let op = random_operator(&mut rng, 2, 3, Chart::new(vec![-0.5; 2], vec![0.5; 2]).unwrap());
    let g = random_unipotent(&mut rng, 2, 3, 0.5);
    let op_path = write(dir.path(), "op.json", &operator_to_json(&op).unwrap());
    let g_path = write(dir.path(), "g.json", &gauge_to_json(&g).unwrap());
    let gauged = dir.path().join("gauged.json");
    assert_eq!(opgeom(&["gauge", s(&op_path), s(&g_path), "--out", s(&gauged)]).code, 0);
    let read_back = parse_operator(&std::fs::read_to_string(&gauged).unwrap()).unwrap();
    assert!(read_back.max_coeff_diff(&apply_gauge(&op, &g).unwrap()) <= 1e-12);

    let m1 = dir.path().join("m1.json");
    let m1_again = dir.path().join("m1b.json");
    let m2 = dir.path().join("m2.json");
    assert_eq!(opgeom(&["model", s(&op_path), "--grid", "6", "--out", s(&m1)]).code, 0);
    assert_eq!(
        opgeom(&[
            "model",
            s(&op_path),
            "--grid",
            "6",
            "--sequential",
            "--out",
            s(&m1_again)
        ])
        .code,
        0
    );
    assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m1_again).unwrap());
    let r = opgeom(&[
        "model",
        s(&gauged),
        "--grid",
        "6",
        "--selection",
        s(&m1),
        "--out",
        s(&m2),
    ]);
    assert_eq!(r.code, 0, "{}", r.stderr);

    let r = opgeom(&["equiv", s(&m1), s(&m1)]);
    assert_eq!(r.code, 0);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["distance"], 0.0);
    assert_eq!(opgeom(&["equiv", s(&m1), s(&m2)]).code, 0);

    // B += 0.1 E₁₁
    let mut perturbed = op.clone();
    let mut e11 = Mat::zeros(3, 3);
    e11[(0, 0)] = 0.1;
    perturbed.b = perturbed.b.add(&PolyMatrixField::constant(&e11, 2));
    let p_path = write(dir.path(), "p.json", &operator_to_json(&perturbed).unwrap());
    let m3 = dir.path().join("m3.json");
    assert_eq!(
        opgeom(&[
            "model",
            s(&p_path),
            "--grid",
            "6",
            "--selection",
            s(&m1),
            "--out",
            s(&m3)
        ])
        .code,
        0
    );
    let code = opgeom(&["equiv", s(&m1), s(&m3)]).code;
    assert!(code == 1 || code == 4, "exit {code}");

    // same tables moved far away in the first coordinate: hulls do not meet
    let mut shifted: Value = serde_json::from_str(&std::fs::read_to_string(&m1).unwrap()).unwrap();
    let bump = |v: &mut Value| *v = Value::from(v.as_f64().unwrap() + 1e3);
    for sample in shifted["samples"].as_array_mut().unwrap() {
        bump(&mut sample["a"][0]);
    }
    bump(&mut shifted["hull"]["lo"][0]);
    bump(&mut shifted["hull"]["hi"][0]);
    let m4 = write(dir.path(), "m4.json", &shifted.to_string());
    let r = opgeom(&["equiv", s(&m1), s(&m4)]);
    assert_eq!(r.code, 4, "{}", r.stdout);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    assert_eq!(v["inconclusive"], true);
}

#[test]
fn gauge_and_audit() {
    let dir = tempfile::tempdir().unwrap();
    let op = write(dir.path(), "op.json", EXAMPLE);
    let id = write(
        dir.path(),
        "id.json",
        &gauge_to_json(&GaugeTransform::identity(2, 2)).unwrap(),
    );
    let r = opgeom(&["gauge", s(&op), s(&id)]);
    assert_eq!(r.code, 0);
    assert_eq!(parse_operator(&r.stdout).unwrap(), parse_operator(EXAMPLE).unwrap());

    let r = opgeom(&["audit", s(&op), s(&id), "--grid", "3"]);
    assert_eq!(r.code, 0);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    for key in ["frame_sigma", "omega", "sigma0", "invariants", "ch"] {
        assert_eq!(v[key], 0.0, "{key}");
    }

    let bad = r#"{"P": [[[{"exp":[0,0],"c":1}], [{"exp":[1,0],"c":1}]], [[], [{"exp":[0,0],"c":1}]]],
                  "P_inv": [[[{"exp":[0,0],"c":1}], [{"exp":[1,0],"c":1}]], [[], [{"exp":[0,0],"c":1}]]]}"#;
    let bad = write(dir.path(), "bad.json", bad);
    assert_eq!(opgeom(&["gauge", s(&op), s(&bad)]).code, 2);
}

#[test]
fn codim_table_and_determinism() {
    let r = opgeom(&["codim", "2", "2", "20"]);
    assert_eq!(r.code, 0);
    let v: Value = serde_json::from_str(&r.stdout).unwrap();
    let trials = v["trials"].as_array().unwrap();
    assert_eq!(trials.len(), 20);
    assert!(trials.iter().all(|t| t["expected"] == 1 && t["numeric"] == 1));
    assert_eq!(
        opgeom(&["codim", "3", "3", "5", "--seed", "4"]).stdout,
        opgeom(&["codim", "3", "3", "5", "--seed", "4"]).stdout
    );
}

#[test]
fn tolerance_flag() {
    let dir = tempfile::tempdir().unwrap();
    let op = write(dir.path(), "op.json", EXAMPLE);
    let m = dir.path().join("m.json");
    assert_eq!(
        opgeom(&["model", s(&op), "--grid", "3", "--tol", "1e-4", "--out", s(&m)]).code,
        0
    );
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&m).unwrap()).unwrap();
    assert_eq!(v["tolerances"]["equiv"], 1e-4);
    assert_eq!(opgeom(&["model", s(&op), "--tol", "bogus=1"]).code, 2);
}
