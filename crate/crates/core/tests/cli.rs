mod common;

use std::fs;

use common::*;
use wsol_eval::geometry::{BinaryMask, ScoreMap};

fn report(args: &[&str]) -> serde_json::Value {
    let out = run(args);
    assert!(out.status.success(), "{}", stderr(&out));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn perfect_blobs_score_one_under_both_box_metrics() {
    let ds = perfect_box_dataset();
    for metric in ["maxboxacc", "maxboxaccv2"] {
        let r = report(&[
            "evaluate",
            "--manifest",
            s(&ds.manifest()),
            "--scoremaps",
            s(&ds.maps()),
            "--metric",
            metric,
        ]);
        assert_eq!(r["value"], 1.0, "{metric}");
        assert_eq!(r["n_images"], 3);
        assert_eq!(r["metric"], metric);
        assert_eq!(r["config"]["connectivity"], 8);
        assert_eq!(r["config"]["normalization"], "minmax");
        assert_eq!(r["config"]["resize_order"], "calibrate-first");
        assert_eq!(r["config"]["grid_spacing"], 0.001);
    }
    let v2 = report(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "maxboxaccv2",
    ]);
    let deltas: Vec<f64> = v2["per_delta"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["delta"].as_f64().unwrap())
        .collect();
    assert_eq!(deltas, vec![0.3, 0.5, 0.7]);
}

#[test]
fn worked_mask_fixture_gives_five_sixths() {
    let ds = worked_mask_dataset();
    let r = report(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "pxap",
        "--exact-thresholds",
    ]);
    assert_eq!(r["value"].as_f64().unwrap(), 5.0 / 6.0);
    assert_eq!(r["config"]["thresholds"], "Exact");
}

#[test]
fn kind_mismatch_exits_2() {
    let ds = worked_mask_dataset();
    let out = run(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "maxboxacc",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("needs boxes"), "{}", stderr(&out));

    let boxes = perfect_box_dataset();
    let out = run(&[
        "evaluate",
        "--manifest",
        s(&boxes.manifest()),
        "--scoremaps",
        s(&boxes.maps()),
        "--metric",
        "pxap",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_scoremap_names_the_image() {
    let ds = perfect_box_dataset();
    fs::remove_file(ds.maps().join("b.wsm")).unwrap();
    let out = run(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "maxboxacc",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("'b'"), "{}", stderr(&out));
}

#[test]
fn uncalibrated_maps_without_normalization_exit_1() {
    let mut ds = Dataset::new("test");
    let b = bbox(0, 0, 2, 2);
    ds.add_boxes("x", 4, 4, &[b], Some(&ScoreMap::new(4, 4, vec![3.0; 16]).unwrap()));
    let out = run(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "maxboxacc",
        "--normalize",
        "none",
    ]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn bad_flags_exit_2() {
    let ds = perfect_box_dataset();
    let (manifest, maps) = (ds.manifest(), ds.maps());
    let base = ["evaluate", "--manifest", s(&manifest), "--scoremaps", s(&maps)];
    for extra in [
        &["--metric", "maxboxacc", "--delta", "0.3,0.5"][..],
        &["--metric", "maxboxacc", "--connectivity", "6"],
        &["--metric", "maxboxacc", "--grid", "0"],
        &["--metric", "nope"],
        &["--metric", "maxboxacc", "--threads", "0"],
    ] {
        let out = cli().args(base).args(extra).output().unwrap();
        assert_eq!(out.status.code(), Some(2), "{extra:?}: {}", stderr(&out));
    }
}

#[test]
fn boxacc_curve_of_perfect_fixture() {
    let ds = perfect_box_dataset();
    let csv = ds.path("curve.csv");
    let out = run(&[
        "curve",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--kind",
        "boxacc",
        "--output",
        s(&csv),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("delta,tau,acc"));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 1001);
    for r in &rows {
        assert_eq!(r[0], 0.5);
        if r[1] > 0.0 {
            assert_eq!(r[2], 1.0, "tau {}", r[1]);
        }
    }
}

#[test]
fn pr_curve_has_full_recall_at_zero() {
    let ds = worked_mask_dataset();
    let out = run(&[
        "curve",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--kind",
        "pr",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tau,precision,recall"));
    let rows: Vec<&str> = lines.collect();
    let last_point = rows[rows.len() - 2];
    assert_eq!(last_point, "0.000000,0.500000,1.000000");
    assert!(rows[rows.len() - 1].starts_with("#pxap,"));
}

/// Re-derives MaxBoxAcc from the CSV: the highest accuracy and the first
/// threshold reaching it.
fn max_from_csv(text: &str, delta: f64) -> (f64, f64) {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect::<Vec<_>>())
        .filter(|r| r[0] == delta)
        .fold(
            (f64::MIN, 0.0),
            |best, r| if r[2] > best.0 { (r[2], r[1]) } else { best },
        )
}

#[test]
fn curve_reloaded_matches_evaluate() {
    let mut rng = rng(11);
    let mut ds = Dataset::new("test");
    for i in 0..12 {
        let (h, w) = (rng_range(&mut rng, 10, 20), rng_range(&mut rng, 10, 20));
        let map = blob_map(&mut rng, h, w, 3);
        let b = random_box(&mut rng, h, w, 3, 8);
        ds.add_boxes(&format!("img{i}"), h, w, &[b], Some(&map));
    }
    for (metric, kind) in [("maxboxacc", "boxacc"), ("maxboxaccv2", "boxaccv2")] {
        let r = report(&[
            "evaluate",
            "--manifest",
            s(&ds.manifest()),
            "--scoremaps",
            s(&ds.maps()),
            "--metric",
            metric,
        ]);
        let out = run(&[
            "curve",
            "--manifest",
            s(&ds.manifest()),
            "--scoremaps",
            s(&ds.maps()),
            "--kind",
            kind,
        ]);
        let text = stdout(&out);
        for op in r["per_delta"].as_array().unwrap() {
            let delta = op["delta"].as_f64().unwrap();
            let (value, tau) = max_from_csv(&text, delta);
            assert!((value - op["value"].as_f64().unwrap()).abs() < 1e-6, "{metric} {delta}");
            assert!((tau - op["tau"].as_f64().unwrap()).abs() < 1e-6, "{metric} {delta}");
        }
    }
}

fn rng_range(rng: &mut rand_chacha::ChaCha8Rng, lo: usize, hi: usize) -> usize {
    use rand::Rng;
    rng.random_range(lo..hi)
}

#[test]
fn evaluate_output_flag_writes_the_curve() {
    let ds = worked_mask_dataset();
    let csv = ds.path("pr.csv");
    let out = run(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "pxap",
        "--grid",
        "0.5",
        "--output",
        s(&csv),
    ]);
    assert!(out.status.success());
    assert_eq!(
        fs::read_to_string(csv).unwrap(),
        "tau,precision,recall\n1.000000,1.000000,0.500000\n0.500000,0.500000,0.500000\n0.000000,0.500000,1.000000\n#pxap,0.750000\n"
    );
}

#[test]
fn resized_and_png_maps_are_accepted() {
    let mut ds = Dataset::new("test");
    // Stored at half resolution; the manifest frame is 8x8.
    let small = box_map(4, 4, &bbox(1, 1, 3, 3));
    ds.add_boxes("half", 8, 8, &[bbox(2, 2, 6, 6)], Some(&small));
    // An 8-bit PNG map.
    let png = image::GrayImage::from_fn(8, 8, |x, y| {
        image::Luma([if (2..6).contains(&x) && (2..6).contains(&y) {
            255
        } else {
            0
        }])
    });
    png.save(ds.maps().join("png.png")).unwrap();
    ds.add_boxes("png", 8, 8, &[bbox(2, 2, 6, 6)], None);
    for order in ["calibrate-first", "resize-first"] {
        let r = report(&[
            "evaluate",
            "--manifest",
            s(&ds.manifest()),
            "--scoremaps",
            s(&ds.maps()),
            "--metric",
            "maxboxacc",
            "--resize-order",
            order,
        ]);
        assert_eq!(r["value"], 1.0, "{order}");
    }
}

#[test]
fn ignore_regions_via_manifest() {
    let mut ds = Dataset::new("test");
    let mask = BinaryMask::from_u8(2, 2, &[1, 0, 1, 0]).unwrap();
    let ignore = BinaryMask::from_u8(2, 2, &[0, 1, 0, 0]).unwrap();
    let map = ScoreMap::from_rows(&[[0.9, 0.95], [0.4, 0.1]]).unwrap();
    ds.add_mask("m", &mask, Some(&ignore), Some(&map));
    let r = report(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&ds.maps()),
        "--metric",
        "pxap",
        "--exact-thresholds",
    ]);
    // Without the ignored 0.95 pixel both foreground pixels outrank the background one.
    assert_eq!(r["value"], 1.0);
}

#[test]
fn sample_hparams_is_reproducible() {
    let a = run(&["sample-hparams", "--method", "CAM", "--n", "30", "--seed", "1"]);
    let b = run(&["sample-hparams", "--method", "cam", "--n", "30", "--seed", "1"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 30);
    let c = run(&["sample-hparams", "--method", "CAM", "--n", "30", "--seed", "2"]);
    assert_ne!(a.stdout, c.stdout);
    let spg = run(&["sample-hparams", "--method", "SPG", "--n", "30", "--seed", "17"]);
    let first: serde_json::Value = serde_json::from_str(stdout(&spg).lines().next().unwrap()).unwrap();
    assert_eq!(first["method"], "SPG");
    assert_eq!(first["trial_id"], 0);
    assert!(first["values"]["threshold_low_b1"].as_f64() <= first["values"]["threshold_high_b1"].as_f64());
    assert_eq!(run(&["sample-hparams", "--method", "GradCAM"]).status.code(), Some(2));
}

#[test]
fn rank_transfer_and_select_best() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    fs::write(
        &a,
        "trial_id,final_loss,metric_value\n0,0.5,0.6\n1,0.4,0.7\n2,3.0,0.9\n3,0.2,0.1\n",
    )
    .unwrap();
    fs::write(
        &b,
        "trial_id,final_loss,metric_value\n3,0.2,0.3\n2,0.1,0.2\n1,0.4,0.8\n0,0.5,0.75\n",
    )
    .unwrap();
    let same = run(&["rank-transfer", s(&a), s(&a)]);
    assert_eq!(stdout(&same), "kendall_tau,1.000000000000\nn_trials,4\n");
    let conv = run(&["rank-transfer", s(&a), s(&b), "--converged-only"]);
    assert!(stdout(&conv).starts_with("kendall_tau,"));
    assert!(stdout(&conv).ends_with("n_trials,3\n"));
    let best = run(&["select-best", s(&a)]);
    assert_eq!(
        stdout(&best),
        "non_converged_ratio,0.250000\nbest_trial_id,1\nbest_metric_value,0.7\n"
    );
    let missing = run(&["rank-transfer", s(&a), s(&dir.path().join("none.csv"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn lemma_summary() {
    let out = run(&["lemma", "--max-cues", "4"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.lines().any(|l| l.starts_with("0 disagreements")), "{text}");
    assert!(!text.contains("counterexample"));
    assert_eq!(run(&["lemma", "--max-cues", "1"]).status.code(), Some(2));
}

#[test]
fn center_baseline_writes_one_map_per_entry() {
    let ds = perfect_box_dataset();
    let out_dir = ds.path("center");
    let out = run(&[
        "center-baseline",
        "--manifest",
        s(&ds.manifest()),
        "--output",
        s(&out_dir),
        "--sigma",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for (id, h, w) in [("a", 10, 12), ("b", 8, 8), ("c", 16, 9)] {
        let map = wsol_eval::dataset::load_scoremap(out_dir.join(format!("{id}.wsm")), Some((h, w))).unwrap();
        assert_eq!(map.max(), 1.0);
    }
    // The written maps evaluate like any other.
    let r = report(&[
        "evaluate",
        "--manifest",
        s(&ds.manifest()),
        "--scoremaps",
        s(&out_dir),
        "--metric",
        "maxboxacc",
    ]);
    assert!((0.0..=1.0).contains(&r["value"].as_f64().unwrap()));
    let bad = run(&[
        "center-baseline",
        "--manifest",
        s(&ds.manifest()),
        "--output",
        s(&out_dir),
        "--sigma",
        "0",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn check_splits_reports_overlap() {
    let mut test = Dataset::new("test");
    test.add_boxes("shared", 4, 4, &[bbox(0, 0, 2, 2)], None);
    test.add_boxes("own", 4, 4, &[bbox(0, 0, 2, 2)], None);
    let mut full = Dataset::new("train-fullsup");
    full.add_boxes("other", 4, 4, &[bbox(0, 0, 2, 2)], None);
    let clean = run(&["check-splits", s(&test.manifest()), s(&full.manifest())]);
    assert!(clean.status.success());
    assert_eq!(stdout(&clean), "0 shared image ids\n");
    full.add_boxes("shared", 4, 4, &[bbox(0, 0, 2, 2)], None);
    let leaky = run(&["check-splits", s(&test.manifest()), s(&full.manifest())]);
    assert_eq!(leaky.status.code(), Some(2));
    assert_eq!(stdout(&leaky), "shared in train-fullsup,test\n1 shared image ids\n");
}
