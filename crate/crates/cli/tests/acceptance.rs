//! Acceptance check for the command-line surface: every subcommand, re-run
//! with identical flags, must reproduce its outputs byte for byte. The
//! whole command sequence runs twice in two fresh directories (so the flag
//! strings are literally identical), and every file either run produced is
//! compared against its twin, along with the captured stdout of each step.

use std::fs;
use std::path::{Path, PathBuf};

use foldmat::binning::Binning;
use foldmat::io;
use foldmat::response::ResponseMatrixSet;
use tempfile::TempDir;

/// Runs one command in `dir`, asserting success, and returns its stdout.
fn run(dir: &Path, args: &[&str]) -> Vec<u8> {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_foldmat"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("the CLI binary should run");
    assert!(
        out.status.success(),
        "command {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

/// Writes the fixed inputs the command sequence needs: binning documents, a
/// single-bin bundle (matrix R = [[1]], observed count 4) and hypothesis
/// files for it.
fn write_fixtures(dir: &Path) {
    let (reco, truth) = foldmat::mockexp::default_binnings();
    io::write_binning(&dir.join("reco.yaml"), &reco).unwrap();
    io::write_binning(&dir.join("truth.yaml"), &truth).unwrap();

    let unit = Binning::new(vec!["x".into()], vec![vec![0.0, 1.0]]).unwrap();
    io::write_binning(&dir.join("unit.yaml"), &unit).unwrap();
    let set = ResponseMatrixSet::from_parts(
        1,
        1,
        vec![0],
        vec![1000],
        vec![vec![1.0]],
        serde_json::json!({}),
    )
    .unwrap();
    io::write_matrix_set(&dir.join("unit_set.json"), &set).unwrap();
    fs::write(dir.join("unit_data.json"), "[4]\n").unwrap();
    io::write_bundle_manifest(
        &dir.join("bundle.json"),
        &io::BundleManifest {
            reco_binning: "unit.yaml".into(),
            truth_binning: "unit.yaml".into(),
            matrix_set: "unit_set.json".into(),
            data: "unit_data.json".into(),
            background_templates: vec![],
        },
    )
    .unwrap();
    fs::write(dir.join("mu.json"), "[4.0]\n").unwrap();
    fs::write(dir.join("template.json"), "[1.0]\n").unwrap();
}

/// Runs every subcommand once in `dir` and returns the stdout of each.
fn run_sequence(dir: &Path) -> Vec<Vec<u8>> {
    let commands: &[&[&str]] = &[
        &["mock", "--model", "A", "--n", "2000", "--seed", "11", "--out", "sim.csv"],
        &["mock", "--model", "B", "--n", "400", "--seed", "12", "--out", "other.csv"],
        &[
            "build", "--reco-binning", "reco.yaml", "--truth-binning", "truth.yaml",
            "--events", "sim.csv", "--stat-toys", "3", "--seed", "13", "--out", "set.json",
        ],
        &[
            "compat", "--a", "sim.csv", "--b", "other.csv", "--reco-binning", "reco.yaml",
            "--truth-binning", "truth.yaml", "--samples", "300", "--seed", "14",
            "--out", "compat.json", "--hist-out", "compat_hist.csv",
        ],
        &["validate", "--bundle", "bundle.json"],
        &[
            "loglik", "--bundle", "bundle.json", "--truth", "mu.json",
            "--fold-table", "fold.csv",
        ],
        &[
            "fit", "--bundle", "bundle.json", "--templates", "template.json",
            "--seed", "15", "--out", "fit.json",
        ],
        &[
            "pvalue", "--bundle", "bundle.json", "--truth", "mu.json",
            "--replicas", "200", "--seed", "16", "--out", "pvalue.json",
        ],
        &[
            "scan", "--bundle", "bundle.json", "--templates", "template.json",
            "--grid", "2:6:5", "--replicas", "150", "--seed", "17", "--out", "scan.csv",
        ],
        &[
            "posterior", "--bundle", "bundle.json", "--templates", "template.json",
            "--samples", "300", "--burn", "50", "--step-scales", "1.5",
            "--seed", "18", "--out", "chain.csv",
        ],
    ];
    commands.iter().map(|args| run(dir, args)).collect()
}

/// All regular files under `dir`, as paths relative to it, sorted.
fn file_listing(dir: &Path) -> Vec<PathBuf> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|entry| entry.unwrap())
        .filter(|entry| entry.file_type().unwrap().is_file())
        .map(|entry| entry.path().strip_prefix(dir).unwrap().to_path_buf())
        .collect();
    files.sort();
    files
}

#[test]
fn acceptance_11_identical_flags_reproduce_identical_bytes() {
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    write_fixtures(first.path());
    write_fixtures(second.path());

    let stdout_first = run_sequence(first.path());
    let stdout_second = run_sequence(second.path());
    for (k, (a, b)) in stdout_first.iter().zip(&stdout_second).enumerate() {
        assert_eq!(a, b, "stdout of command {k} differs between runs");
    }

    let listing = file_listing(first.path());
    assert_eq!(listing, file_listing(second.path()), "file sets differ");
    let n_outputs = listing.len();
    for rel in &listing {
        let a = fs::read(first.path().join(rel)).unwrap();
        let b = fs::read(second.path().join(rel)).unwrap();
        assert_eq!(a, b, "{} differs between runs", rel.display());
    }
    println!(
        "ACCEPTANCE 11: PASS — {} commands re-run with identical flags produced \
         byte-identical stdout and {n_outputs} byte-identical files",
        stdout_first.len()
    );
}
