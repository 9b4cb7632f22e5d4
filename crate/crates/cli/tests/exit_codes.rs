//! Runs the real binary and checks process exit codes.

mod common;

use common::*;
use sslc::matrix::DenseMatrix;

fn code(cmd: &mut std::process::Command) -> (i32, String, String) {
    let out = cmd.output().unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn success_and_inspect() {
    let f = Fixture::planted(24, 16, 2, 1);
    let out = f.path("out");
    let (c, _, err) = code(bin().args(["compress", "--weights", p(&f.weights), "--calib", p(&f.calib), "--out", p(&out), "--rank", "2"]));
    assert_eq!(c, 0, "{err}");
    let (c, stdout, _) = code(bin().args(["inspect", p(&out)]));
    assert_eq!(c, 0);
    let manifest: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(manifest["format_version"], 1);
    assert_eq!(manifest["tensors"][0]["name"], "w");
}

#[test]
fn validation_errors_exit_2() {
    let f = Fixture::planted(24, 16, 2, 1);
    let out = f.path("out");
    let compress = ["compress", "--weights", p(&f.weights), "--calib", p(&f.calib), "--out", p(&out)];
    // Rank share larger than the budget.
    let (c, _, err) = code(bin().args(compress).args(["--rank", "30"]));
    assert_eq!(c, 2, "{err}");
    assert!(err.contains("tensor `w`"), "{err}");
    // Bad flag value.
    assert_eq!(code(bin().args(compress).args(["--remaining", "abc"])).0, 2);
    // Unknown command.
    assert_eq!(code(bin().arg("frobnicate")).0, 2);
    // Bad thread count.
    assert_eq!(code(bin().args(compress).env("SLRC_THREADS", "0")).0, 2);
    // Unsupported manifest version.
    let manifest = f.weights.join("manifest.json");
    let text = std::fs::read_to_string(&manifest).unwrap().replace("\"format_version\": 1", "\"format_version\": 9");
    std::fs::write(&manifest, text).unwrap();
    assert_eq!(code(bin().args(["inspect", p(&f.weights)])).0, 2);
    assert_eq!(code(bin().args(compress)).0, 2);
}

#[test]
fn io_errors_exit_4() {
    let f = Fixture::planted(24, 16, 2, 1);
    let missing = f.path("missing");
    let (c, _, err) = code(bin().args(["compress", "--weights", p(&missing), "--calib", p(&f.calib), "--out", p(&f.path("o"))]));
    assert_eq!(c, 4, "{err}");
    assert_eq!(code(bin().args(["inspect", p(&missing)])).0, 4);
}

#[test]
fn numerical_failure_exits_3() {
    // Weights near the f32 limit with near-zero calibration norms: folding
    // the inverse scaling into the factors overflows f32 storage.
    let root = tempfile::tempdir().unwrap();
    let w = f32_exact(&DenseMatrix::from_fn(16, 12, |i, j| {
        let sign = if (i * 5 + j * 3) % 7 < 3 { -1.0 } else { 1.0 };
        sign * 3.0e38 * (1.0 - 0.01 * ((i + 2 * j) % 5) as f64)
    }));
    let (weights, calib) = (root.path().join("w"), root.path().join("c"));
    write_weights(&weights, &[tensor("w", w)]);
    write_calib(&calib, &[("w", vec![0.0; 12])]);
    let (c, _, err) = code(bin().args([
        "compress",
        "--weights",
        p(&weights),
        "--calib",
        p(&calib),
        "--out",
        p(&root.path().join("o")),
        "--rank",
        "2",
    ]));
    assert_eq!(c, 3, "{err}");
    assert!(err.contains("numerical failure") && err.contains("tensor `w`"), "{err}");
}

#[test]
fn thread_count_does_not_change_output() {
    let root = tempfile::tempdir().unwrap();
    let (weights, calib) = (root.path().join("w"), root.path().join("c"));
    let names = ["d", "a", "c", "b"];
    let tensors: Vec<_> = names.iter().enumerate().map(|(k, n)| tensor(n, planted(32, 24, 2, k as u64))).collect();
    write_weights(&weights, &tensors);
    let norms: Vec<(&str, Vec<f64>)> = names.iter().map(|n| (*n, spread_norms(24))).collect();
    write_calib(&calib, &norms);
    let run = |threads: &str, out: &str| {
        let out = root.path().join(out);
        let (c, _, err) = code(
            bin()
                .args(["compress", "--weights", p(&weights), "--calib", p(&calib), "--out", p(&out), "--iters", "6"])
                .env("SLRC_THREADS", threads),
        );
        assert_eq!(c, 0, "{err}");
        out
    };
    let (one, four) = (run("1", "one"), run("4", "four"));
    for f in ["manifest.json", "tensors.bin"] {
        assert!(std::fs::read(one.join(f)).unwrap() == std::fs::read(four.join(f)).unwrap(), "{f}");
    }
}
