//! Acceptance gate for the binary plus behavior tests of its exit-code and
//! report contract. The byte-identity criterion prints the same
//! `acceptance NN pass|FAIL` line as the library-side gates.

use std::path::Path;
use std::process::{Command, Output};

fn check(number: u8, ok: bool, detail: &str) {
    let verdict = if ok { "pass" } else { "FAIL" };
    println!("acceptance {number:02} {verdict}  {detail}");
    assert!(ok, "acceptance criterion {number:02} failed: {detail}");
}

/// The binary with a scrubbed environment, so an ambient seed override never
/// leaks into a test.
fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_margin-decomp"));
    cmd.env_remove("MARGIN_DECOMP_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary spawns")
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout_json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("stdout is one JSON document")
}

const DATASET_CSV: &str = "f1,f2,y\n0.8,0.1,1\n-0.6,0.2,-1\n0.5,-0.4,1\n-0.9,-0.1,-1\n\
                           0.4,0.7,1\n-0.3,-0.5,-1\n0.7,0.3,1\n-0.5,0.6,-1\n\
                           0.2,-0.8,1\n-0.4,0.1,-1\n0.9,0.5,1\n-0.8,-0.6,-1\n";
const MEMBERS_CSV: &str = "point_id,member_1,member_2,member_3,label\n\
                           a,0.4,1.2,-0.3,1\nb,-0.8,0.1,-1.4,-1\nc,2.0,0.0,0.6,1\n";
const MEMBERS_NO_LABEL_CSV: &str = "point_id,member_1,member_2\na,0.4,1.2\nb,-0.8,0.1\n";

fn write_fixture(dir: &Path, name: &str, contents: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, contents).expect("fixture written");
    path
}

// ─────────────────────────────────────────────────────────────────────────────
// The acceptance criterion: reproducible bytes
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn criterion_10_diagnose_output_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let spec = [
        "diagnose",
        "--synthetic",
        "two_gaussians:n=2000,sep=2",
        "--loss",
        "logistic",
        "--models",
        "50",
        "--seed",
        "42",
    ];

    // Verbatim invocation, report on stdout.
    let base = run(bin().args(spec));
    assert_eq!(
        exit_code(&base),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&base.stderr)
    );

    // Same computation, different thread count and sink, run twice.
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for path in [&a, &b] {
        let out = run(bin().args(spec).args(["--threads", "4", "--out"]).arg(path));
        assert_eq!(exit_code(&out), 0);
    }
    let a = std::fs::read(&a).unwrap();
    let b = std::fs::read(&b).unwrap();

    let identical = base.stdout == a && a == b;
    check(
        10,
        identical,
        &format!(
            "{} report bytes identical across reruns, thread counts, and sinks",
            base.stdout.len()
        ),
    );
}

// ─────────────────────────────────────────────────────────────────────────────
// Exit-code contract
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn configuration_mistakes_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_fixture(dir.path(), "data.csv", DATASET_CSV);
    let members = write_fixture(dir.path(), "members.csv", MEMBERS_CSV);

    let unknown = run(bin().args(["verify", "--loss", "hinge"]));
    assert_eq!(exit_code(&unknown), 2);
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("unknown loss"));

    let additive = run(bin()
        .args([
            "ensemble",
            "--loss",
            "exponential",
            "--combiner",
            "additive",
            "--members",
        ])
        .arg(&members));
    assert_eq!(exit_code(&additive), 2);
    assert!(String::from_utf8_lossy(&additive.stderr).contains("not gradient-symmetric"));

    let noiseless = run(bin()
        .args([
            "diagnose",
            "--loss",
            "logistic",
            "--require-noise",
            "--models",
            "2",
        ])
        .args(["--iterations", "20", "--data"])
        .arg(&data));
    assert_eq!(exit_code(&noiseless), 2);
    assert!(String::from_utf8_lossy(&noiseless.stderr).contains("posterior"));

    let both_sources = run(bin()
        .args([
            "diagnose",
            "--loss",
            "logistic",
            "--synthetic",
            "two_gaussians:n=10,sep=1",
        ])
        .arg("--data")
        .arg(&data));
    assert_eq!(exit_code(&both_sources), 2);

    let no_source = run(bin().args(["diagnose", "--loss", "logistic"]));
    assert_eq!(exit_code(&no_source), 2);

    let bad_env = run(bin()
        .args(["verify", "--loss", "logistic", "--suite", "symmetry"])
        .env("MARGIN_DECOMP_SEED", "not-a-number"));
    assert_eq!(exit_code(&bad_env), 2);
    assert!(String::from_utf8_lossy(&bad_env.stderr).contains("MARGIN_DECOMP_SEED"));

    let unlabeled = write_fixture(dir.path(), "unlabeled.csv", MEMBERS_NO_LABEL_CSV);
    let no_labels = run(bin()
        .args(["ensemble", "--loss", "logistic", "--members"])
        .arg(&unlabeled));
    assert_eq!(exit_code(&no_labels), 2);
    assert!(String::from_utf8_lossy(&no_labels.stderr).contains("label"));
}

#[test]
fn failed_gates_exit_1_and_mark_the_check() {
    // A multiplier this small pushes real rounding noise past the gates
    // without touching the computation, forcing the failure path.
    let out = run(bin().args(["verify", "--loss", "logistic", "--tol", "1e-16"]));
    assert_eq!(exit_code(&out), 1);
    let report = stdout_json(&out);
    let checks = report["checks"].as_array().unwrap();
    assert!(checks
        .iter()
        .any(|c| c["passed"] == serde_json::Value::Bool(false)));
}

#[test]
fn asymmetric_loss_verifies_cleanly_with_notice() {
    let out = run(bin().args(["verify", "--loss", "exponential", "--suite", "symmetry"]));
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    assert_eq!(
        report["loss"]["gradient_symmetric"],
        serde_json::Value::Bool(false)
    );
    let notes = report["notes"].as_array().unwrap();
    assert!(notes
        .iter()
        .any(|n| n.as_str().unwrap().contains("not gradient-symmetric")));
}

// ─────────────────────────────────────────────────────────────────────────────
// Report contract
// ─────────────────────────────────────────────────────────────────────────────

#[test]
fn reports_round_trip_without_losing_a_bit() {
    let dir = tempfile::tempdir().unwrap();
    let members = write_fixture(dir.path(), "members.csv", MEMBERS_CSV);
    let out = run(bin()
        .args([
            "ensemble",
            "--loss",
            "logistic",
            "--combiner",
            "mean",
            "--members",
        ])
        .arg(&members));
    assert_eq!(exit_code(&out), 0);

    let first = stdout_json(&out);
    let reserialized = serde_json::to_string_pretty(&first).unwrap();
    let second: serde_json::Value = serde_json::from_str(&reserialized).unwrap();
    assert_eq!(first, second);

    // Residuals survive the text round trip bit-exactly.
    for report in [&first, &second] {
        assert!(report["ensembles"][0]["residual"].is_f64());
    }
    let r1 = first["ensembles"][0]["residual"].as_f64().unwrap();
    let r2 = second["ensembles"][0]["residual"].as_f64().unwrap();
    assert_eq!(r1.to_bits(), r2.to_bits());
}

#[test]
fn seed_env_var_supplies_the_default() {
    let dir = tempfile::tempdir().unwrap();
    let members = write_fixture(dir.path(), "members.csv", MEMBERS_CSV);
    let mut base = bin();
    base.args(["ensemble", "--loss", "logistic", "--members"])
        .arg(&members);

    let from_env = run(base.env("MARGIN_DECOMP_SEED", "7"));
    assert_eq!(exit_code(&from_env), 0);
    assert_eq!(stdout_json(&from_env)["seed"], serde_json::json!(7));

    let mut overridden = bin();
    overridden
        .args(["ensemble", "--loss", "logistic", "--seed", "9", "--members"])
        .arg(&members)
        .env("MARGIN_DECOMP_SEED", "7");
    let out = run(&mut overridden);
    assert_eq!(exit_code(&out), 0);
    assert_eq!(stdout_json(&out)["seed"], serde_json::json!(9));
}

#[test]
fn single_model_ensembles_have_exactly_zero_variance() {
    let out = run(bin().args([
        "diagnose",
        "--synthetic",
        "two_gaussians:n=60,sep=1",
        "--loss",
        "logistic",
        "--models",
        "1",
        "--iterations",
        "60",
    ]));
    assert_eq!(exit_code(&out), 0);
    let report = stdout_json(&out);
    let decs = report["decompositions"].as_array().unwrap();
    let margin = decs.iter().find(|d| d["id"] == "margin_variance").unwrap();
    assert_eq!(
        margin["components"]["margin_variance"].as_f64().unwrap(),
        0.0
    );
}

#[test]
fn per_point_csv_uses_the_long_format() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("per_point.csv");
    let out = run(bin()
        .args([
            "diagnose",
            "--synthetic",
            "two_gaussians:n=40,sep=1",
            "--loss",
            "squared",
            "--models",
            "3",
            "--iterations",
            "40",
            "--per-point-csv",
        ])
        .arg(&csv_path));
    assert_eq!(
        exit_code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    let mut reader = csv::Reader::from_path(&csv_path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        &csv::StringRecord::from(vec!["decomposition", "point", "component", "value"])
    );
    let mut rows = 0usize;
    let mut saw_noise = false;
    for record in reader.records() {
        let record = record.unwrap();
        rows += 1;
        saw_noise |= record.get(2) == Some("noise");
        record
            .get(3)
            .unwrap()
            .parse::<f64>()
            .expect("numeric value");
    }
    assert!(rows > 0 && saw_noise);

    // The CSV flag alone must not bloat the JSON report with rows.
    let report = stdout_json(&out);
    assert!(report["decompositions"][0].get("per_point").is_none());
}
