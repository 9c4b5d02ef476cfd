mod support;

use std::fs;

use mta_core::affinity::{text_affinity, vision_affinity};
use mta_core::bundle::{read_bundle, read_bundle_raw, write_bundle, BundleMeta, FORMAT_NAME};
use mta_core::embedding::softmax_predictions;
use mta_core::linalg::dist;
use mta_core::predict::predict_mta;
use mta_core::synthetic::{generate_trial, SceneConfig};
use mta_core::{
    mta_solve, ClassEmbeddings32, DiagonalMode, EmbeddingSet32, Hyperparams, Matrix, MtaSolution64,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use support::{random_instance, random_sized, rng};

fn min_eigenvalue(m: &Matrix<f64>) -> f64 {
    let n = m.rows();
    let a = DMatrix::from_row_slice(n, n, m.as_slice());
    a.symmetric_eigen().eigenvalues.min()
}

#[test]
fn kept_diagonal_affinities_are_psd() {
    let mut r = rng(100);
    for _ in 0..200 {
        let inst = random_sized(&mut r, (2, 40), (2, 32), (2, 12));
        let preds = softmax_predictions(&inst.views, &inst.classes).unwrap();
        let w = text_affinity(&preds, DiagonalMode::Kept);
        assert!(min_eigenvalue(w.matrix()) >= -1e-8);
        let v = vision_affinity(&inst.views, DiagonalMode::Kept);
        assert!(min_eigenvalue(v.matrix()) >= -1e-8);
    }
}

#[test]
fn zeroed_diagonal_is_generally_indefinite() {
    let mut r = rng(101);
    let inst = random_instance(&mut r, 16, 8, 4);
    let preds = softmax_predictions(&inst.views, &inst.classes).unwrap();
    let w = text_affinity(&preds, DiagonalMode::Zeroed);
    // zero trace and nonzero entries force a negative eigenvalue
    assert!(min_eigenvalue(w.matrix()) < 0.0);
}

#[test]
fn planted_scene_keeps_inliers() {
    let mut r = rng(102);
    let d = 16;
    let center = support::unit(support::gaussian(&mut r, d));
    let far = support::unit(support::gaussian(&mut r, d));
    let mut rows = Vec::new();
    for p in 0..20 {
        let base = if p < 16 { &center } else { &far };
        let v: Vec<f64> = base
            .iter()
            .zip(support::gaussian(&mut r, d))
            .map(|(c, g)| c + 0.15 * g / (d as f64).sqrt())
            .collect();
        rows.extend(support::unit(v));
    }
    let views = mta_core::EmbeddingSet::new(Matrix::from_vec(20, d, rows).unwrap(), 0).unwrap();
    let classes = mta_core::ClassEmbeddings::new(
        Matrix::from_vec(2, d, [center.clone(), far.clone()].concat()).unwrap(),
        100.0,
        vec![],
    )
    .unwrap();
    let sol = mta_solve(&views, &classes, &Hyperparams::default()).unwrap();
    let inlier_mass: f64 = sol.y.as_slice()[..16].iter().sum();
    assert!(inlier_mass >= 0.8, "{inlier_mass}");
    let inliers = views.subset(&(0..16).collect::<Vec<_>>()).unwrap().mean();
    assert!(dist(sol.mode.as_slice(), &inliers) < dist(sol.mode.as_slice(), &views.mean()));
}

#[test]
fn f32_solver_agrees_with_f64() {
    let cfg = SceneConfig {
        seed: 3,
        dim: 32,
        n_views: 32,
        ..Default::default()
    };
    let params = Hyperparams {
        diagonal: DiagonalMode::Kept,
        ..Default::default()
    };
    let mut agree = 0;
    for t in 0..20 {
        let scene = generate_trial(&cfg, t).unwrap();
        let views32 = EmbeddingSet32::new(scene.views.views().cast(), 0).unwrap();
        let classes32 = ClassEmbeddings32::new(scene.classes.classes().cast(), 100.0, vec![]).unwrap();
        let a = predict_mta(&scene.views, &scene.classes, &params).unwrap();
        let b = predict_mta(&views32, &classes32, &params).unwrap();
        let y = b.inlierness.unwrap();
        let s: f32 = y.iter().sum();
        assert!((s - 1.0).abs() < 1e-5);
        agree += (a.predicted_class == b.predicted_class) as usize;
    }
    assert!(agree >= 19, "{agree}/20");
}

#[test]
fn bundle_written_by_hand_is_readable() {
    // the layout an external extractor produces: a TOML header plus raw
    // little-endian f32 matrices
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("header.toml"),
        format!(
            "format = \"{FORMAT_NAME}\"\nversion = 1\nn_views = 3\nn_classes = 2\ndim = 2\n\
             prompt_sets = 1\nclass_names = [\"cat\", \"dog\"]\nlabel = 1\n\n[metadata]\nmodel = \"ViT-B/16\"\n"
        ),
    )
    .unwrap();
    let f32s = |v: &[f32]| v.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>();
    fs::write(dir.path().join("views.f32"), f32s(&[0.0, 2.0, 0.1, 1.0, 3.0, 4.0])).unwrap();
    fs::write(dir.path().join("classes_000.f32"), f32s(&[1.0, 0.0, 0.0, 1.0])).unwrap();

    let sample = read_bundle::<f64>(dir.path()).unwrap();
    assert_eq!(sample.header.temperature, 100.0);
    assert_eq!(sample.header.label, Some(1));
    assert_eq!(sample.header.metadata["model"], "ViT-B/16");
    assert_eq!(sample.views.view(0), &[0.0, 1.0]);
    assert!((sample.views.view(2)[0] - 0.6).abs() < 1e-7);
    assert_eq!(sample.class_sets[0].class_names(), &["cat", "dog"]);
    let report = predict_mta(&sample.views, &sample.class_sets[0], &Hyperparams::default()).unwrap();
    assert_eq!(report.class_name, "dog");
}

#[test]
fn bundle_round_trip_preserves_solution() {
    let scene = generate_trial(&SceneConfig::default(), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_bundle(&scene.views, std::slice::from_ref(&scene.classes), &BundleMeta::default(), dir.path()).unwrap();
    let raw = read_bundle_raw(dir.path()).unwrap();
    assert_eq!(raw.header.n_views, 64);
    let a = read_bundle::<f64>(dir.path()).unwrap();
    let b = read_bundle::<f64>(dir.path()).unwrap();
    let params = Hyperparams::default();
    let sa: MtaSolution64 = mta_solve(&a.views, &a.class_sets[0], &params).unwrap();
    let sb = mta_solve(&b.views, &b.class_sets[0], &params).unwrap();
    assert_eq!(sa.mode, sb.mode);
    assert_eq!(sa.y, sb.y);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn iterates_stay_in_the_views_bounding_box(seed in any::<u64>(), n in 2usize..24, d in 2usize..12, k in 2usize..6) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n, d, k);
        let params = Hyperparams { record_iterates: true, ..Default::default() };
        let sol = mta_solve(&inst.views, &inst.classes, &params).unwrap();
        for m in &sol.trace.m_iterates {
            for (a, &v) in m.as_slice().iter().enumerate() {
                let col = inst.views.views().iter_rows().map(|row| row[a]);
                let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
        }
        for rec in &sol.trace.outer {
            prop_assert!(rec.u_trace.iter().all(|&u| u <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn solve_is_deterministic(seed in any::<u64>(), n in 1usize..20, d in 2usize..10) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n, d, 3);
        let a = mta_solve(&inst.views, &inst.classes, &Hyperparams::default()).unwrap();
        let b = mta_solve(&inst.views, &inst.classes, &Hyperparams::default()).unwrap();
        prop_assert_eq!(a.mode, b.mode);
        prop_assert_eq!(a.y, b.y);
    }

    #[test]
    fn kept_diagonal_converged_solutions_are_fixed_points(seed in any::<u64>(), n in 2usize..24, d in 2usize..12) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n, d, 4);
        let params = Hyperparams { diagonal: DiagonalMode::Kept, ..Default::default() };
        let sol = mta_solve(&inst.views, &inst.classes, &params).unwrap();
        if sol.trace.converged {
            let rep = mta_core::oracle::stationarity_oracle(&inst.views, &inst.classes, &sol, &params).unwrap();
            prop_assert!(rep.y_residual < 10.0 * params.epsilon);
        }
    }
}
