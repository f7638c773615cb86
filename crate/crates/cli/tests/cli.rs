use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sindy_delay_cli::model_file::ModelFile;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sindy-delay"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn small_toy(dir: &Path) {
    ok(&[
        "generate",
        "--n-samples",
        "200",
        "--dt",
        "0.25",
        "--gamma",
        "0.02",
        "-o",
        p(dir),
    ]);
}

#[test]
fn simulate_rescoring_reproduces_sweep_error() {
    let root = tempfile::tempdir().unwrap();
    let (gen, sw, sim) = (
        root.path().join("gen"),
        root.path().join("sweep"),
        root.path().join("sim"),
    );
    small_toy(&gen);
    let input = gen.join("observed.csv");
    ok(&[
        "sweep",
        "--input",
        p(&input),
        "--radius",
        "5",
        "--grid-step",
        "0.25",
        "-o",
        p(&sw),
    ]);
    let model = ModelFile::parse(&fs::read_to_string(sw.join("model.json")).unwrap()).unwrap();
    let expected = model.scoring.as_ref().unwrap().error;
    ok(&[
        "simulate",
        "--model",
        p(&sw.join("model.json")),
        "--observations",
        p(&input),
        "-o",
        p(&sim),
    ]);
    let score: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(sim.join("score.json")).unwrap()).unwrap();
    assert_eq!(
        score["error"].as_f64().unwrap().to_bits(),
        expected.to_bits()
    );
    assert!(sim.join("trajectory.csv").exists());
}

#[test]
fn model_file_round_trips_byte_for_byte() {
    let root = tempfile::tempdir().unwrap();
    let gen = root.path().join("gen");
    small_toy(&gen);
    let fit = root.path().join("fit");
    ok(&[
        "fit",
        "--input",
        p(&gen.join("observed.csv")),
        "--radius",
        "5",
        "--tau",
        "7",
        "-o",
        p(&fit),
    ]);
    let text = fs::read_to_string(fit.join("model.json")).unwrap();
    let file = ModelFile::parse(&text).unwrap();
    assert_eq!(file.to_json(), text);
    assert_eq!(file.delays, vec![7.0]);
    assert!(fit.join("trace_tau=7.csv").exists());
}

#[test]
fn manifest_lists_output_hashes() {
    let root = tempfile::tempdir().unwrap();
    let gen = root.path().join("gen");
    small_toy(&gen);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(gen.join("manifest.json")).unwrap()).unwrap();
    for name in ["truth.csv", "observed.csv"] {
        let bytes = fs::read(gen.join(name)).unwrap();
        assert_eq!(
            manifest["outputs"][name],
            sindy_delay_cli::output::sha256_hex(&bytes)
        );
    }
    assert_eq!(manifest["seed"], 42);
    assert_eq!(manifest["config"]["toy"]["n_samples"], 200);
}

#[test]
fn malformed_model_names_the_field_and_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    let bad = root.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"library": {"d": 1, "M": "three", "cross_policy": "exclude-mixed", "delayed": true}}"#,
    )
    .unwrap();
    let out_dir = root.path().join("out");
    let out = run(&[
        "simulate",
        "--model",
        p(&bad),
        "--constant",
        "1",
        "--horizon",
        "5",
        "--h",
        "0.1",
        "-o",
        p(&out_dir),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("library.M"), "{err}");
    assert!(!out_dir.exists());
}

#[test]
fn empty_bio_grid_is_rejected_before_work() {
    let root = tempfile::tempdir().unwrap();
    let out_dir = root.path().join("out");
    let out = run(&[
        "biofit",
        "--synthesize",
        "--zinc",
        "2",
        "--grid-step",
        "-5",
        "-o",
        p(&out_dir),
    ]);
    assert!(!out.status.success());
    assert!(!out_dir.exists());
}

#[test]
fn unwritable_output_leaves_no_partial_files() {
    let root = tempfile::tempdir().unwrap();
    let blocker = root.path().join("blocker");
    fs::write(&blocker, "not a directory").unwrap();
    let out = run(&[
        "generate",
        "--n-samples",
        "50",
        "--dt",
        "0.25",
        "-o",
        p(&blocker.join("sub")),
    ]);
    assert!(!out.status.success());
    assert_eq!(fs::read_to_string(&blocker).unwrap(), "not a directory");
}

#[test]
fn missing_input_is_a_usage_error() {
    let out = run(&["sweep"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--input"));
}

#[test]
fn slope_reads_csv_and_fixtures() {
    let root = tempfile::tempdir().unwrap();
    let csv = root.path().join("pairs.csv");
    fs::write(&csv, "zinc_mm,tau_dca\n1,2\n2,4\n3,6\n").unwrap();
    let out = ok(&["slope", "--input", p(&csv)]);
    assert!(out.contains("2.0000000000000000e0"), "{out}");
    let out = ok(&["slope"]);
    assert!(out.contains("3.70666666666666"), "{out}");
}

#[test]
fn batch_biofit_writes_per_concentration_outputs() {
    let root = tempfile::tempdir().unwrap();
    let out_dir = root.path().join("bio");
    ok(&[
        "biofit",
        "--synthesize",
        "--zinc",
        "1.75,2",
        "--grid-max",
        "80",
        "-o",
        p(&out_dir),
    ]);
    for z in ["1.75", "2"] {
        for name in [
            "bio_model.json",
            "surface.csv",
            "trace_f.csv",
            "trace_g.csv",
            "data/wt.csv",
        ] {
            assert!(
                out_dir.join(format!("zinc={z}")).join(name).exists(),
                "{z}/{name}"
            );
        }
    }
    let table = fs::read_to_string(out_dir.join("delays_vs_zinc.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "zinc_mm,tau_wt,tau_dca,error");
    assert!(lines[2].starts_with("2,30,70,"), "{table}");
    assert!(lines[3].starts_with("# slope"));
}

#[test]
fn bio_data_directory_round_trip() {
    let root = tempfile::tempdir().unwrap();
    let synth = root.path().join("synth");
    ok(&[
        "biofit",
        "--synthesize",
        "--zinc",
        "2",
        "--grid-max",
        "80",
        "-o",
        p(&synth),
    ]);
    let refit = root.path().join("refit");
    ok(&[
        "biofit",
        "--data-dir",
        p(&synth.join("data")),
        "--zinc",
        "2",
        "--grid-max",
        "80",
        "-o",
        p(&refit),
    ]);
    let a: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(synth.join("bio_model.json")).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(refit.join("bio_model.json")).unwrap()).unwrap();
    assert_eq!(a["f_coeffs"], b["f_coeffs"]);
    assert_eq!(a["g_coeffs"], b["g_coeffs"]);
    assert_eq!(
        (b["tau_wt"].as_f64(), b["tau_dca"].as_f64()),
        (Some(30.0), Some(70.0))
    );
}
