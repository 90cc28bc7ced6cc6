use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn youngflow(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_youngflow"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn run_ok(dir: &Path, args: &[&str]) -> Value {
    let out = youngflow(dir, args);
    assert_eq!(code(&out), 0, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// Output of a command that may legitimately report a failed check.
fn run_report(dir: &Path, args: &[&str]) -> Value {
    let out = youngflow(dir, args);
    assert!(
        matches!(code(&out), 0 | 1),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let doc: Value = serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    assert_eq!(doc["pass"].as_bool().unwrap_or(true), code(&out) == 0, "{args:?}");
    doc
}

fn schema_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas")
}

fn assert_valid(schema: &str, doc: &Value) {
    let raw = fs::read_to_string(schema_dir().join(format!("{schema}.schema.json"))).expect("schema file");
    let validator = jsonschema::validator_for(&serde_json::from_str(&raw).unwrap()).expect("schema compiles");
    let errors: Vec<String> = validator
        .iter_errors(doc)
        .map(|e| format!("{e} at {}", e.instance_path()))
        .collect();
    assert!(errors.is_empty(), "{schema}: {errors:?}\n{doc:#}");
}

/// Writes the drivers shared by the tests into a fresh directory.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run_ok(
        p,
        &[
            "gen", "fbm", "--hurst", "0.75", "--n", "513", "--seed", "3", "-o", "x.csv",
        ],
    );
    run_ok(
        p,
        &[
            "gen", "fbm", "--hurst", "0.75", "--n", "513", "--seed", "4", "-o", "u.csv",
        ],
    );
    run_ok(p, &["gen", "linear", "--n", "5", "-o", "monotone.csv"]);
    run_ok(p, &["gen", "sine", "--n", "513", "--frequency", "3", "-o", "sine.csv"]);
    dir
}

#[test]
fn gen_writes_requested_rows_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let doc = run_ok(
        dir.path(),
        &[
            "gen", "fbm", "--hurst", "0.75", "--n", "1024", "--seed", "7", "-o", "path.csv",
        ],
    );
    assert_valid("gen", &doc);
    assert_eq!(doc["rows"], 1024);
    let csv = fs::read_to_string(dir.path().join("path.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x1"));
    assert_eq!(lines.count(), 1024);
    let sidecar: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("path.json")).unwrap()).unwrap();
    assert_valid("gen", &sidecar);
    assert_eq!(sidecar["spec"]["seed"], 7);
    assert_eq!(sidecar["spec"]["hurst"], 0.75);
}

#[test]
fn pvar_of_monotone_path_prints_one() {
    let dir = workspace();
    let out = youngflow(dir.path(), &["pvar", "--p", "1.5", "--path", "monotone.csv"]);
    assert_eq!(code(&out), 0);
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "1.0");
    let doc = run_ok(dir.path(), &["pvar", "--p", "1.5", "--path", "monotone.csv", "--json"]);
    assert_valid("pvar", &doc);
    assert_eq!(doc["optimal_partition"], serde_json::json!([0, 4]));
}

#[test]
fn every_subcommand_output_matches_its_schema() {
    let dir = workspace();
    let p = dir.path();
    for (src, dst) in [("sine.csv", "z.csv"), ("u.csv", "f.csv")] {
        let text = fs::read_to_string(p.join(src)).unwrap().replacen("t,x1", "t,z", 1);
        fs::write(p.join(dst), text).unwrap();
    }
    let cases: &[(&str, &[&str])] = &[
        ("integrate", &["integrate", "--z", "z.csv", "--x", "x.csv"]),
        (
            "integrate",
            &[
                "integrate",
                "--z",
                "z.csv",
                "--x",
                "x.csv",
                "--p",
                "1.4",
                "--q",
                "1.0",
                "--tag",
                "right",
            ],
        ),
        (
            "solve",
            &["solve", "--field", "scaling", "--path", "x.csv", "--y0", "0.5"],
        ),
        (
            "flow",
            &[
                "flow", "--field", "rotation", "--dim", "2", "--path", "x.csv", "--points", "1,0;0,2", "-o", "flow",
            ],
        ),
        (
            "check-ito",
            &[
                "check", "ito", "--g", "square", "--rate", "scaling", "--z", "x.csv", "--x", "u.csv",
            ],
        ),
        (
            "check-chain",
            &["check", "chain", "--g", "square", "--path", "x.csv", "--levels", "4"],
        ),
        (
            "check-substitution",
            &["check", "substitution", "--g", "z.csv", "--f", "f.csv", "--z", "x.csv"],
        ),
        (
            "check-conserved",
            &[
                "check",
                "conserved",
                "--obs",
                "norm-squared",
                "--field",
                "rotation",
                "--dim",
                "2",
            ],
        ),
        (
            "check-conserved",
            &[
                "check",
                "conserved",
                "--obs",
                "norm-squared",
                "--field",
                "rotation",
                "--dim",
                "2",
                "--path",
                "x.csv",
                "--y0",
                "1,0",
            ],
        ),
        (
            "check-symmetry",
            &[
                "check",
                "symmetry",
                "--map",
                "scaling",
                "--map-param",
                "2",
                "--field",
                "scaling",
            ],
        ),
        (
            "check-symmetry",
            &[
                "check",
                "symmetry",
                "--map",
                "rotation",
                "--map-param",
                "0.4",
                "--field",
                "rotation",
                "--dim",
                "2",
                "--path",
                "x.csv",
                "--y0",
                "0,1",
            ],
        ),
        (
            "check-infinitesimal",
            &[
                "check",
                "infinitesimal",
                "--g",
                "rotation",
                "--field",
                "rotation",
                "--dim",
                "2",
            ],
        ),
        (
            "compose",
            &[
                "compose", "--f", "scaling", "--u", "u.csv", "--g", "scaling", "--x", "x.csv", "--y0", "1", "-o",
                "comp",
            ],
        ),
        (
            "pde-solve",
            &[
                "pde",
                "solve",
                "--hamiltonian",
                "transport-k",
                "--path",
                "x.csv",
                "--seed-count",
                "41",
                "--every",
                "64",
                "-o",
                "pde",
            ],
        ),
        (
            "pde-residual",
            &[
                "pde",
                "residual",
                "--hamiltonian",
                "transport-k",
                "--path",
                "x.csv",
                "--seed-count",
                "41",
                "--levels",
                "3",
            ],
        ),
        (
            "pde-caustic",
            &[
                "pde",
                "caustic",
                "--hamiltonian",
                "burgers-half-p-squared",
                "--path",
                "x.csv",
                "--seed-count",
                "21",
            ],
        ),
    ];
    for (schema, args) in cases {
        let doc = run_report(p, args);
        assert_valid(schema, &doc);
        assert_eq!(doc["command"].as_str().unwrap().replace(' ', "-"), *schema);
    }
    let index: Value = serde_json::from_str(&fs::read_to_string(p.join("flow/index.json")).unwrap()).unwrap();
    assert_valid("flow", &index);
    assert_eq!(index["files"].as_array().unwrap().len(), 2);
    let index: Value = serde_json::from_str(&fs::read_to_string(p.join("pde/index.json")).unwrap()).unwrap();
    assert_valid("pde-solve", &index);
    let slice = fs::read_to_string(p.join("pde/slice_00001.csv")).unwrap();
    assert_eq!(slice.lines().next(), Some("x1,u,du1"));
    assert_eq!(slice.lines().count(), 22);
    assert!(p.join("comp/z_comp.csv").exists() && p.join("comp/z_dir.csv").exists());
}

#[test]
fn identical_invocations_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let runs: &[&[&str]] = &[
        &[
            "gen", "fbm", "--hurst", "0.8", "--n", "257", "--seed", "9", "-o", "x.csv",
        ],
        &[
            "check", "symmetry", "--map", "scaling", "--field", "scaling", "--seed", "2", "--count", "64",
        ],
        &[
            "flow",
            "--field",
            "rotation",
            "--dim",
            "2",
            "--path",
            "x.csv",
            "--points",
            "1,0;0.5,0.5",
            "-o",
            "flow",
        ],
        &[
            "pde",
            "solve",
            "--hamiltonian",
            "transport-k",
            "--path",
            "x.csv",
            "--seed-count",
            "21",
            "--every",
            "32",
            "-o",
            "pde",
        ],
    ];
    for args in runs {
        let oa = youngflow(a.path(), args);
        let ob = youngflow(b.path(), args);
        assert_eq!(code(&oa), 0, "{}", String::from_utf8_lossy(&oa.stderr));
        assert_eq!(oa.stdout, ob.stdout, "{args:?}");
    }
    for file in [
        "x.csv",
        "x.json",
        "flow/point_000.csv",
        "flow/point_001.csv",
        "flow/index.json",
        "pde/index.json",
        "pde/slice_00008.csv",
    ] {
        assert_eq!(
            fs::read(a.path().join(file)).unwrap(),
            fs::read(b.path().join(file)).unwrap(),
            "{file}"
        );
    }
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = workspace();
    let args = [
        "pde",
        "solve",
        "--hamiltonian",
        "transport-k",
        "--path",
        "x.csv",
        "--seed-count",
        "41",
        "--every",
        "128",
        "-o",
        "pde",
    ];
    let outputs: Vec<Vec<u8>> = ["1", "4"]
        .iter()
        .map(|n| {
            let out = Command::new(env!("CARGO_BIN_EXE_youngflow"))
                .current_dir(dir.path())
                .env("YOUNGFLOW_THREADS", n)
                .args(args)
                .output()
                .unwrap();
            assert_eq!(code(&out), 0);
            out.stdout
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn failed_checks_exit_one() {
    let dir = workspace();
    let out = youngflow(
        dir.path(),
        &[
            "check",
            "conserved",
            "--obs",
            "coordinate1",
            "--field",
            "rotation",
            "--dim",
            "2",
        ],
    );
    assert_eq!(code(&out), 1);
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_valid("check-conserved", &doc);
    assert_eq!(doc["pass"], false);
    assert!(String::from_utf8_lossy(&out.stderr).contains("max residual"));

    let out = youngflow(
        dir.path(),
        &["check", "chain", "--g", "exp", "--path", "x.csv", "--tol", "1e-12"],
    );
    assert_eq!(code(&out), 1);
}

#[test]
fn usage_errors_exit_two_and_name_the_value() {
    let dir = workspace();
    let cases: &[(&[&str], &str)] = &[
        (&["solve", "--field", "nope", "--path", "x.csv"], "nope"),
        (&["pvar", "--p", "1", "--path", "missing.csv"], "missing.csv"),
        (
            &["--levels", "0", "check", "chain", "--g", "square", "--path", "x.csv"],
            "levels",
        ),
        (
            &["--tol", "-1", "check", "chain", "--g", "square", "--path", "x.csv"],
            "-1",
        ),
        (&["gen", "fbm", "--hurst", "0.4", "-o", "bad.csv"], "0.4"),
        (
            &[
                "solve", "--field", "rotation", "--dim", "2", "--path", "x.csv", "--y0", "1,2,3",
            ],
            "y0",
        ),
        (&["pvar", "--path", "x.csv"], "--p"),
        (&["frobnicate"], "frobnicate"),
    ];
    for (args, needle) in cases {
        let out = youngflow(dir.path(), args);
        assert_eq!(code(&out), 2, "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{args:?}: {err}");
    }
}

#[test]
fn numeric_failures_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        dir.path(),
        &["gen", "linear", "--n", "3", "--horizon", "1e200", "-o", "huge.csv"],
    );
    let out = youngflow(dir.path(), &["solve", "--field", "scaling", "--path", "huge.csv"]);
    assert_eq!(code(&out), 3);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-finite"));
}

#[test]
fn config_file_fills_in_missing_flags() {
    let dir = workspace();
    fs::write(
        dir.path().join("run.cfg"),
        "# chain check\ng = square\nlevels = 3\ntol = 10\n",
    )
    .unwrap();
    let doc = run_ok(
        dir.path(),
        &["--config", "run.cfg", "check", "chain", "--path", "x.csv"],
    );
    assert_eq!(doc["report"]["levels"].as_array().unwrap().len(), 3);
    assert_eq!(doc["tol"], 10.0);
    let doc = run_ok(
        dir.path(),
        &[
            "--config", "run.cfg", "--levels", "2", "check", "chain", "--path", "x.csv",
        ],
    );
    assert_eq!(doc["report"]["levels"].as_array().unwrap().len(), 2);
}
