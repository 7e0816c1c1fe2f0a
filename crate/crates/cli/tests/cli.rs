use dals::io::{self, FieldFile};
use dals::{BinaryMask, ProbabilityMap, ScalarField};
use std::path::Path;
use std::process::{Command, Output};

fn dals(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dals")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn square(size: usize, lo: usize, hi: usize) -> BinaryMask {
    BinaryMask::from_fn(size, size, |r, c| (lo..hi).contains(&r) && (lo..hi).contains(&c)).unwrap()
}

#[test]
fn eval_on_identical_masks() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.dals");
    io::write_field(&f, &FieldFile::mask(&square(16, 4, 10)).unwrap()).unwrap();
    let out = dals(&["eval", "--pred", p(&f), "--gt", p(&f)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(stdout(&out), "dice=1.000000 hausdorff=0.000000 boundf=1.000000\n");
}

#[test]
fn segment_rejects_an_empty_probability_map() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("i.dals");
    let prob = dir.path().join("p.dals");
    io::write_field(
        &img,
        &FieldFile::scalar(&ScalarField::filled(16, 16, 0.5).unwrap()).unwrap(),
    )
    .unwrap();
    let zeros = ProbabilityMap::new(ScalarField::filled(16, 16, 0.0).unwrap());
    io::write_field(&prob, &FieldFile::probability(&zeros).unwrap()).unwrap();
    let out = dals(&[
        "segment",
        "--image",
        p(&img),
        "--prob",
        p(&prob),
        "--out",
        p(&dir.path().join("o")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr(&out);
    assert!(err.starts_with("error: degenerate_mask: "), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn malformed_field_files_fail_with_format_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.dals");
    std::fs::write(
        &bad,
        b"NOPE\x01\x00\x00\x00\x03\x01\x00\x00\x00\x01\x00\x00\x00\x00\x00\x00\x00",
    )
    .unwrap();
    let out = dals(&["eval", "--pred", p(&bad), "--gt", p(&bad)]);
    assert_eq!(out.status.code(), Some(6));
    assert!(stderr(&out).starts_with("error: bad_magic: "));

    let good = dir.path().join("m.dals");
    io::write_field(&good, &FieldFile::mask(&square(8, 2, 5)).unwrap()).unwrap();
    let mut bytes = std::fs::read(&good).unwrap();
    bytes.pop();
    std::fs::write(&bad, bytes).unwrap();
    let out = dals(&["eval", "--pred", p(&bad), "--gt", p(&good)]);
    assert_eq!(out.status.code(), Some(6));
    assert!(stderr(&out).starts_with("error: truncated_payload: "));
}

#[test]
fn invalid_flags_are_usage_errors() {
    let out = dals(&["phantom", "--preset", "kidney-us", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("m.dals");
    io::write_field(&f, &FieldFile::mask(&square(16, 4, 10)).unwrap()).unwrap();
    let out = dals(&[
        "segment",
        "--image",
        p(&f),
        "--prob",
        p(&f),
        "--out",
        "o",
        "--window",
        "20",
    ]);
    assert_eq!(out.status.code(), Some(8));
    assert!(stderr(&out).starts_with("error: invalid_parameter: "));
}

#[test]
fn lambda_writes_both_maps() {
    let dir = tempfile::tempdir().unwrap();
    let prob = dir.path().join("p.dals");
    let values = vec![0.0, 0.5, 1.0, 0.25];
    let pm = ProbabilityMap::new(ScalarField::new(2, 2, values).unwrap());
    io::write_field(&prob, &FieldFile::probability(&pm).unwrap()).unwrap();
    let out_dir = dir.path().join("l");
    let out = dals(&["lambda", "--prob", p(&prob), "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let l1 = io::read_field(out_dir.join("lambda1.dals")).unwrap();
    let l2 = io::read_field(out_dir.join("lambda2.dals")).unwrap();
    let e = std::f32::consts::E;
    assert_eq!(l1.data()[1], e);
    assert_eq!(l2.data()[1], e);
    assert_eq!(l1.data()[0], l2.data()[2]);
    assert_eq!(l1.data()[0], (2.0f64).exp() as f32);
}

fn run_pipeline(root: &Path, preset: &str, count: &str) -> String {
    let corpus = root.join("corpus");
    let preds = root.join("pred");
    let out = dals(&[
        "phantom",
        "--preset",
        preset,
        "--count",
        count,
        "--seed",
        "0",
        "--out",
        p(&corpus),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = io::read_manifest(corpus.join("manifest.csv")).unwrap();
    assert_eq!(manifest.len().to_string(), count);
    for r in &manifest {
        let out = dals(&[
            "segment",
            "--image",
            p(&corpus.join(&r.image)),
            "--prob",
            p(&corpus.join(&r.prob)),
            "--out",
            p(&preds.join(&r.id)),
            "--overlay",
        ]);
        assert!(out.status.success(), "{}", stderr(&out));
        for name in ["y_out.dals", "mask.dals", "phi.dals", "energy.csv", "overlay.png"] {
            assert!(preds.join(&r.id).join(name).is_file(), "missing {name}");
        }
    }
    let out = dals(&[
        "eval-batch",
        "--manifest",
        p(&corpus.join("manifest.csv")),
        "--pred-dir",
        p(&preds),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(preds.join("metrics.csv").is_file());
    stdout(&out)
}

#[test]
fn liver_ct_pipeline_reaches_target_dice() {
    let dir = tempfile::tempdir().unwrap();
    let summary = run_pipeline(dir.path(), "liver-ct", "10");
    let dice_line = summary.lines().find(|l| l.starts_with("dice ")).unwrap();
    let mean: f64 = dice_line
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("mean="))
        .unwrap()
        .parse()
        .unwrap();
    assert!(mean >= 0.95, "{summary}");
    assert!(dice_line.ends_with("n=10"));
    let trace = std::fs::read_to_string(dir.path().join("pred/liver-ct-000000/energy.csv")).unwrap();
    assert!(trace.starts_with("iteration,energy\n0,"));
}

#[test]
fn cli_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sa = run_pipeline(a.path(), "liver-mr", "3");
    let sb = run_pipeline(b.path(), "liver-mr", "3");
    assert_eq!(sa, sb);
    for id in ["liver-mr-000000", "liver-mr-000002"] {
        for name in ["phi.dals", "energy.csv", "overlay.png"] {
            let fa = std::fs::read(a.path().join("pred").join(id).join(name)).unwrap();
            let fb = std::fs::read(b.path().join("pred").join(id).join(name)).unwrap();
            assert!(fa == fb, "{id}/{name} differs");
        }
    }
    let ma = std::fs::read(a.path().join("corpus/manifest.csv")).unwrap();
    assert_eq!(ma, std::fs::read(b.path().join("corpus/manifest.csv")).unwrap());
}

#[test]
fn eval_batch_reports_empty_predictions_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let gt = square(16, 4, 10);
    let records: Vec<_> = ["a", "b", "c"]
        .iter()
        .map(|id| io::ManifestRecord {
            id: id.to_string(),
            seed: 0,
            preset: "custom".into(),
            image: format!("{id}_gt.dals").into(),
            gt: format!("{id}_gt.dals").into(),
            prob: format!("{id}_gt.dals").into(),
        })
        .collect();
    for r in &records {
        io::write_field(dir.path().join(&r.gt), &FieldFile::mask(&gt).unwrap()).unwrap();
    }
    io::write_manifest(dir.path().join("manifest.csv"), &records).unwrap();
    let preds = dir.path().join("pred");
    std::fs::create_dir(&preds).unwrap();
    io::write_field(preds.join("a.dals"), &FieldFile::mask(&gt).unwrap()).unwrap();
    io::write_field(preds.join("b.dals"), &FieldFile::mask(&square(16, 5, 11)).unwrap()).unwrap();
    io::write_field(
        preds.join("c.dals"),
        &FieldFile::mask(&BinaryMask::empty(16, 16).unwrap()).unwrap(),
    )
    .unwrap();

    let out = dals(&[
        "eval-batch",
        "--manifest",
        p(&dir.path().join("manifest.csv")),
        "--pred-dir",
        p(&preds),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let csv = std::fs::read_to_string(preds.join("metrics.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "id,dice,hausdorff,boundf");
    assert_eq!(rows[1], "a,1.0,0.0,1.0");
    assert_eq!(rows[3], "c,0.0,NaN,0.0");
    let summary = stdout(&out);
    assert!(
        summary.contains("hausdorff mean=0.707107 ci95=") && summary.contains("n=2"),
        "{summary}"
    );
    assert!(
        summary.lines().any(|l| l.starts_with("dice ") && l.ends_with("n=3")),
        "{summary}"
    );
}
