use serde_json::Value;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coverage"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn json(bytes: &[u8]) -> Value {
    serde_json::from_slice(bytes).expect("valid JSON")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn example4_golden_values() {
    let out = run(&["reproduce-example4"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out.stdout);
    assert_eq!(v["q_hat"].as_f64(), Some(1434.0 / 2568.0));
    assert_eq!(v["profile"]["n"], 2568);
    assert_eq!(v["profile"]["observed_total"], 2549);
    assert_eq!(v["esty"]["ci_low"].as_f64(), Some(0.5326503545897556));
    assert_eq!(v["esty"]["ci_high"].as_f64(), Some(0.5841720753167865));
    assert_eq!(v["f1_only"]["ci_low"].as_f64(), Some(0.5392052264364516));
    assert_eq!(v["f1_only"]["ci_high"].as_f64(), Some(0.5776172034700905));
    assert_eq!(v["published"]["ci_high"].as_f64(), Some(0.5777));
}

#[test]
fn raw_and_profile_inputs_agree() {
    let dir = tempfile::tempdir().unwrap();
    let raw = write(dir.path(), "raw.txt", "# species counts\n1\n1\n2\n3\n\n1\n");
    let profile = write(dir.path(), "profile.tsv", "1\t3\n2\t1\n3\t1\n");
    let a = json(&run(&["estimate", "--input", &raw]).stdout);
    let b = json(&run(&["estimate", "--input", &profile]).stdout);
    assert_eq!(a["estimate"], b["estimate"]);
    assert_eq!(a["profile"]["n"], 8);
    assert_eq!(a["estimate"]["q_hat"].as_f64(), Some(3.0 / 8.0));
}

#[test]
fn all_singletons_collapse_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let input = write(dir.path(), "s.txt", "1\n1\n1\n");
    let out = run(&["estimate", "--input", &input]);
    assert_eq!(out.status.code(), Some(0));
    let e = &json(&out.stdout)["estimate"];
    assert_eq!(e["degenerate"], true);
    assert_eq!(e["ci_low"], e["ci_high"]);
    assert!(!e["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn bad_input_reports_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let empty = write(dir.path(), "empty.txt", "# nothing\n");
    let out = run(&["estimate", "--input", &empty]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());
    assert_eq!(json(&out.stderr)["error"]["exit_code"], 2);

    let negative = write(dir.path(), "neg.txt", "3\n-1\n");
    let err = json(&run(&["estimate", "--input", &negative]).stderr);
    assert!(err["error"]["message"].as_str().unwrap().contains("line 2"));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(
        run(&["simulate", "--family", "nope", "--n", "10"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(run(&["estimate"]).status.code(), Some(1));
    let out = run(&[
        "simulate",
        "--family",
        "pareto:b=2",
        "--n",
        "100",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(json(&out.stderr)["error"]["problems"].is_array());
}

#[test]
fn simulate_json_is_reproducible_and_path_independent() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for name in ["a.json", "b.json"] {
        let path = dir.path().join(name).to_string_lossy().into_owned();
        let args = [
            "simulate",
            "--family",
            "uniform:k=50",
            "--n",
            "300",
            "--replicates",
            "40",
            "--seed",
            "11",
            "--out",
            &path,
        ];
        assert_eq!(run(&args).status.code(), Some(0));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let v = json(&outputs[0]);
    assert_eq!(v["batch"]["records"].as_array().unwrap().len(), 40);
    assert!(v["checks"]["ks_z_expected"]["statistic"].is_number());
}

#[test]
fn simulate_csv_writes_companion() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.csv").to_string_lossy().into_owned();
    let args = [
        "simulate",
        "--family",
        "pareto:b=3",
        "--n",
        "1e4",
        "--replicates",
        "30",
        "--coupled",
        "--format",
        "csv",
        "--out",
        &path,
    ];
    assert_eq!(run(&args).status.code(), Some(0));
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert!(reader.headers().unwrap().iter().any(|h| h == "zeta"));
    assert_eq!(reader.records().count(), 30);
    let companion = json(&std::fs::read(dir.path().join("run.gof.json")).unwrap());
    assert!(companion["checks"]["coupling"]["mean_abs_gap"].is_number());
}

#[test]
fn conditions_csv_has_lindeberg_columns() {
    let out = run(&[
        "conditions",
        "--family",
        "pareto:b=2",
        "--n-grid",
        "1000,10000",
        "--epsilons",
        "0.1,1",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let mut reader = csv::Reader::from_reader(&out.stdout[..]);
    let headers = reader.headers().unwrap().clone();
    assert!(headers.iter().any(|h| h == "lindeberg_eps_0.1"));
    assert!(headers.iter().any(|h| h == "lindeberg_eps_1"));
    assert_eq!(reader.records().count(), 2);
}
