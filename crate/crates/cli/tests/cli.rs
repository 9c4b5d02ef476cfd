use std::path::Path;
use std::process::Command;

use mta_cli::{run_command, EXIT_FORMAT, EXIT_OK, EXIT_USAGE};
use mta_core::bundle::{write_bundle, BundleMeta};
use mta_core::synthetic::{generate_trial, SceneConfig};
use mta_core::{ClassEmbeddings, EmbeddingSet};
use serde_json::Value;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("mta").chain(args.iter().copied());
    let code = run_command(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn records(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn trivial_bundle(dir: &Path) {
    let views = EmbeddingSet::<f64>::from_rows(&[[0.1, 0.9, 0.0, 0.2]]).unwrap();
    let classes = ClassEmbeddings::<f64>::from_rows(&[[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]], 100.0).unwrap();
    write_bundle(&views, &[classes], &BundleMeta::default(), dir).unwrap();
}

fn scene_bundle(dir: &Path, trial: u64, sets: usize) {
    let cfg = SceneConfig {
        seed: 11,
        dim: 16,
        n_views: 24,
        ..Default::default()
    };
    let scene = generate_trial(&cfg, trial).unwrap();
    let class_sets: Vec<_> = (0..sets as u64)
        .map(|s| generate_trial(&SceneConfig { seed: 11 + 100 * s, ..cfg.clone() }, trial).unwrap().classes)
        .collect();
    let class_sets = if sets == 1 { vec![scene.classes] } else { class_sets };
    let meta = BundleMeta {
        label: Some(scene.label),
        ..Default::default()
    };
    write_bundle(&scene.views, &class_sets, &meta, dir).unwrap();
}

#[test]
fn zeroshot_on_single_view_bundle() {
    let dir = tempfile::tempdir().unwrap();
    trivial_bundle(dir.path());
    let (code, out, _) = run(&["run", "--method", "zeroshot", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = &records(&out)[0];
    assert_eq!(r["predicted_class"], 1);
    assert_eq!(r["class_name"], "class_1");
    assert_eq!(r["method"], "zeroshot");
}

#[test]
fn mta_run_echoes_default_hyperparameters() {
    let dir = tempfile::tempdir().unwrap();
    scene_bundle(dir.path(), 0, 1);
    let (code, out, _) = run(&["run", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = &records(&out)[0];
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["params"]["lambda"], 4.0);
    assert_eq!(r["params"]["lambda_y"], 0.2);
    assert_eq!(r["params"]["rho"], 0.3);
    let y: Vec<f64> = r["inlierness"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert_eq!(y.len(), 24);
    assert!((y.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(!r["trace"]["objectives"].as_array().unwrap().is_empty());
    assert!(r["wall_time_ms"].as_f64().unwrap() >= 0.0);
    assert!(r["label"].is_u64());
}

#[test]
fn jobs_preserve_order_and_numbers() {
    let root = tempfile::tempdir().unwrap();
    let mut paths = Vec::new();
    for t in 0..6 {
        let p = root.path().join(format!("s{t}"));
        scene_bundle(&p, t, 1);
        paths.push(p.to_str().unwrap().to_owned());
    }
    let strip = |out: &str| -> Vec<Value> {
        records(out)
            .into_iter()
            .map(|mut r| {
                r.as_object_mut().unwrap().remove("wall_time_ms");
                r
            })
            .collect()
    };
    let mut args = vec!["run", "--jobs", "1"];
    args.extend(paths.iter().map(String::as_str));
    let (_, serial, _) = run(&args);
    args[2] = "4";
    let (_, parallel, _) = run(&args);
    let (a, b) = (strip(&serial), strip(&parallel));
    assert_eq!(a, b);
    for (r, p) in a.iter().zip(&paths) {
        assert_eq!(r["bundle"], p.as_str());
    }
}

#[test]
fn ensemble_reports_votes() {
    let dir = tempfile::tempdir().unwrap();
    scene_bundle(dir.path(), 1, 3);
    let (code, out, _) = run(&["run", "--ensemble", "--method", "mean", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = &records(&out)[0];
    let votes: u64 = r["votes"].as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(votes, 3);
}

#[test]
fn format_errors_exit_3_and_keep_going() {
    let root = tempfile::tempdir().unwrap();
    let good = root.path().join("good");
    scene_bundle(&good, 0, 1);
    let bad = root.path().join("bad");
    scene_bundle(&bad, 0, 1);
    let views = bad.join("views.f32");
    let bytes = std::fs::read(&views).unwrap();
    std::fs::write(&views, &bytes[..bytes.len() - 4]).unwrap();
    let (code, out, _) = run(&["run", bad.to_str().unwrap(), good.to_str().unwrap()]);
    assert_eq!(code, EXIT_FORMAT);
    let rs = records(&out);
    assert_eq!(rs[0]["record"], "error");
    assert!(rs[0]["error"].as_str().unwrap().contains("bytes"));
    assert_eq!(rs[1]["record"], "prediction");
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["run"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--method", "median", "x"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--lambda-y", "0", "x"]).0, EXIT_USAGE);
    assert_eq!(run(&["run", "--fraction", "0", "x"]).0, EXIT_USAGE);
    assert_eq!(run(&["bench", "--trials", "0"]).0, EXIT_USAGE);
    assert_eq!(run(&["bench", "--classes", "1"]).0, EXIT_USAGE);
    assert_eq!(run(&["frobnicate"]).0, EXIT_USAGE);
    assert_eq!(run(&["--help"]).0, EXIT_OK);
}

#[test]
fn bench_records_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bench.jsonl");
    let (code, out, _) = run(&[
        "bench", "--trials", "5", "--views", "12", "--dim", "8", "--methods", "mta,mean", "-o",
        file.to_str().unwrap(),
    ]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let rs = records(&std::fs::read_to_string(&file).unwrap());
    assert_eq!(rs.len(), 2);
    for r in &rs {
        assert_eq!(r["schema_version"], 1);
        let acc = r["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert!(r.get("wall_time_s").is_none());
    }
}

#[test]
fn verify_random_instances() {
    let (code, out, _) = run(&["verify", "--random", "2", "--grid-resolution", "40", "--diagonal", "kept"]);
    assert_eq!(code, EXIT_OK);
    let rs = records(&out);
    assert_eq!(rs.len(), 2);
    for r in &rs {
        assert_eq!(r["record"], "verify");
        assert!(r["grid"]["min_objective"].is_f64());
    }
}

#[test]
fn verify_bundle_without_grid() {
    let dir = tempfile::tempdir().unwrap();
    scene_bundle(dir.path(), 2, 1);
    let (code, out, _) = run(&["verify", "--diagonal", "kept", dir.path().to_str().unwrap()]);
    assert_eq!(code, EXIT_OK);
    let r = &records(&out)[0];
    assert!(r["grid"].is_null());
    assert!(r["gradient_norm"].as_f64().unwrap() >= 0.0);
}

#[test]
fn bench_binary_is_byte_deterministic() {
    let bin = env!("CARGO_BIN_EXE_mta");
    let go = |jobs: &str| {
        let o = Command::new(bin)
            .args(["bench", "--trials", "10", "--seed", "7", "--views", "16", "--dim", "16", "--jobs", jobs])
            .output()
            .unwrap();
        assert!(o.status.success());
        o.stdout
    };
    let a = go("1");
    assert!(!a.is_empty());
    assert_eq!(a, go("1"));
    assert_eq!(a, go("3"));
}

#[test]
fn mta_threads_env_is_honoured() {
    let bin = env!("CARGO_BIN_EXE_mta");
    let o = Command::new(bin)
        .args(["bench", "--trials", "2", "--views", "8", "--dim", "8"])
        .env("MTA_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}
