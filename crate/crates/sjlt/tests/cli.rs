//! End-to-end tests of the `sjlt` binary: flags, exit codes, file formats,
//! and output determinism.

use std::path::Path;
use std::process::{Command, Output};

fn sjlt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sjlt"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write_csv(path: &Path, rows: &[Vec<f64>]) {
    let mut text = String::new();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn plan_prints_reference_parameters() {
    let out = sjlt(&[
        "plan", "--n", "1048576", "--eps", "0.2", "--delta", "0.01",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("d: 434"), "{text}");
    assert!(text.contains("k: 1733"), "{text}");
    assert!(text.contains("mode: sparse"), "{text}");
    assert!(text.contains("estimated_bits:"), "{text}");
}

#[test]
fn plan_reports_fallback_mode() {
    let out = sjlt(&["plan", "--n", "256", "--eps", "0.2", "--delta", "0.01"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("mode: achlioptas_fallback"));
}

#[test]
fn plan_missing_eps_is_usage_error() {
    let out = sjlt(&["plan", "--n", "1024", "--delta", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn plan_invalid_eps_names_the_precondition() {
    let out = sjlt(&["plan", "--n", "1024", "--eps", "1.5", "--delta", "0.01"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr).into_owned();
    assert!(err.contains("eps"), "{err}");
}

#[test]
fn plan_pointset_mode() {
    let out = sjlt(&[
        "plan", "--n", "1048576", "--eps", "0.2", "--points", "1000", "--fail", "0.5",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.contains("delta: 5e-7"), "{text}");
    assert!(text.contains("union bound"), "{text}");
}

#[test]
fn embed_roundtrip_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("points.csv");
    write_csv(
        &input,
        &[
            vec![1.0, 2.0, 3.0, 4.0, 5.0],
            vec![0.0, 0.0, 0.0, 0.0, 0.0],
            vec![-1.0, 0.5, 0.25, -0.125, 2.0],
        ],
    );
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    for output in [&out_a, &out_b] {
        let run = sjlt(&[
            "embed",
            "--input",
            input.to_str().unwrap(),
            "--output",
            output.to_str().unwrap(),
            "--target",
            "l2",
            "--eps",
            "0.5",
            "--delta",
            "0.05",
            "--seed",
            "3",
        ]);
        assert_eq!(run.status.code(), Some(0), "{:?}", run);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical output");

    // The zero input row embeds to the zero row.
    let text = String::from_utf8(a).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[1]
        .split(',')
        .all(|v| v.trim().parse::<f64>().unwrap() == 0.0));

    // Sidecar plan record parses and carries an exact bit total.
    let sidecar = dir.path().join("a.csv.plan.json");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    let bits = &record["bit_report"];
    assert_eq!(
        bits["total"].as_u64().unwrap(),
        bits["signs"].as_u64().unwrap()
            + bits["rows"].as_u64().unwrap()
            + bits["fallback"].as_u64().unwrap()
    );
    assert_eq!(record["plan"]["q"].as_u64().unwrap(), 2);
}

#[test]
fn embed_binary_file_roundtrip() {
    use sjlt::cli::vecfile::{Encoding, VectorFile};
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.sjlt");
    let dim = 600;
    let rows: Vec<Vec<f64>> = (0..5)
        .map(|i| (0..dim).map(|j| ((i * dim + j) as f64).sin()).collect())
        .collect();
    VectorFile::from_rows(&rows, dim, Encoding::F64le)
        .write(&input)
        .unwrap();
    let output = dir.path().join("out.sjlt");
    let run = sjlt(&[
        "embed",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--target",
        "l1",
        "--eps",
        "0.5",
        "--delta",
        "0.05",
        "--seed",
        "11",
    ]);
    assert_eq!(run.status.code(), Some(0), "{:?}", run);
    let embedded = VectorFile::read(&output).unwrap();
    assert_eq!(embedded.count(), 5);
    assert_eq!(embedded.encoding, Encoding::F64le);
    // n = 1024 at these parameters forces the dense l1 matrix (k = n).
    let sidecar = dir.path().join("out.sjlt.plan.json");
    let record: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&sidecar).unwrap()).unwrap();
    assert_eq!(record["plan"]["n"].as_u64().unwrap(), 1024);
    assert_eq!(record["plan"]["mode"].as_str().unwrap(), "dense_l1");
    assert_eq!(embedded.dim as u64, record["plan"]["d"].as_u64().unwrap());
}

#[test]
fn embed_refuses_no_reduction_with_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("small.csv");
    write_csv(&input, &[(0..50).map(|i| i as f64).collect()]);
    let run = sjlt(&[
        "embed",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("never.csv").to_str().unwrap(),
        "--target",
        "l1",
        "--eps",
        "0.1",
        "--delta",
        "0.05",
    ]);
    assert_eq!(run.status.code(), Some(3), "{:?}", run);
    let err = String::from_utf8_lossy(&run.stderr).into_owned();
    assert!(err.contains("proportional"), "{err}");
}

#[test]
fn embed_malformed_file_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("ragged.csv");
    std::fs::write(&input, "1.0,2.0\n3.0\n").unwrap();
    let run = sjlt(&[
        "embed",
        "--input",
        input.to_str().unwrap(),
        "--output",
        dir.path().join("out.csv").to_str().unwrap(),
        "--target",
        "l2",
        "--eps",
        "0.5",
        "--delta",
        "0.05",
    ]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn verify_negcorr_exits_zero() {
    let run = sjlt(&["verify", "negcorr", "--n", "8", "--k", "3"]);
    assert_eq!(run.status.code(), Some(0), "{:?}", run);
    let text = stdout(&run);
    assert!(text.contains("\"passed\":true"), "{text}");
    assert!(text.contains("negative_correlation"), "{text}");
}

#[test]
fn verify_unknown_suite_is_usage_error() {
    let run = sjlt(&["verify", "nonsense"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn verify_moments_precondition_violation_exits_2() {
    // Flat vector: (n/k) alpha^2 = 1/k > 1/10 for k < 10.
    let run = sjlt(&["verify", "moments", "--n", "256", "--k", "8", "--trials", "100"]);
    assert_eq!(run.status.code(), Some(2), "{:?}", run);
    let err = String::from_utf8_lossy(&run.stderr).into_owned();
    assert!(err.contains("1/10"), "{err}");
}

#[test]
fn verify_small_suites_are_deterministic() {
    // Identical flags and seed give identical reports; only the elapsed
    // wall-time field may differ between runs.
    fn strip_elapsed(text: &str) -> Vec<serde_json::Value> {
        text.lines()
            .map(|line| {
                let mut v: serde_json::Value = serde_json::from_str(line).unwrap();
                v.as_object_mut().unwrap().remove("elapsed").unwrap();
                v
            })
            .collect()
    }
    let args = [
        "verify", "bernstein", "--trials", "2000", "--seed", "7", "--n", "256", "--k", "64",
    ];
    let a = sjlt(&args);
    let b = sjlt(&args);
    assert_eq!(a.status.code(), Some(0), "{:?}", a);
    assert_eq!(strip_elapsed(&stdout(&a)), strip_elapsed(&stdout(&b)));
}

#[test]
fn bench_emits_fixed_csv_header() {
    let run = sjlt(&[
        "bench", "--n", "256,512", "--eps", "0.5", "--vectors", "2",
    ]);
    assert_eq!(run.status.code(), Some(0), "{:?}", run);
    let text = stdout(&run);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n,d,k,mode,time_us,bits"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells.len(), 6);
        // Bits column is the exact total for the built embedding.
        assert!(cells[5].parse::<u64>().unwrap() > 0);
    }
}

#[test]
fn threads_env_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.csv");
    write_csv(&input, &[vec![1.0, 2.0, 3.0]]);
    let run = Command::new(env!("CARGO_BIN_EXE_sjlt"))
        .env("SJLT_THREADS", "abc")
        .args(["plan", "--n", "1024", "--eps", "0.5", "--delta", "0.05"])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));

    let run = Command::new(env!("CARGO_BIN_EXE_sjlt"))
        .env("SJLT_THREADS", "2")
        .args([
            "embed",
            "--input",
            input.to_str().unwrap(),
            "--output",
            dir.path().join("out.csv").to_str().unwrap(),
            "--target",
            "l2",
            "--eps",
            "0.5",
            "--delta",
            "0.05",
        ])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
}
