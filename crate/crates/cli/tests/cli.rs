use std::path::{Path, PathBuf};
use std::process::Command;

use gapcast::codec::Tick;
use gapcast::data::{load_csv, save_csv, CsvSchema, SeriesRecord};
use gapcast::synthetic::{generate, SyntheticConfig};

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_gapcast"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn tiny() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/tiny.csv")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_series(dir: &Path, name: &str, series: &[SeriesRecord]) -> PathBuf {
    let path = dir.join(name);
    save_csv(&path, series, &CsvSchema::default()).unwrap();
    path
}

/// L=30 with 10 available ticks and blocks (4,7), (13,5), (20,5), (28,3).
fn ten_four_series() -> SeriesRecord {
    let missing = |t: usize| (4..=10).contains(&t) || (13..=17).contains(&t) || (20..=24).contains(&t) || t >= 28;
    SeriesRecord {
        id: "gapped".into(),
        first_tick: 1,
        ticks: (1..=30)
            .map(|t| {
                if missing(t) {
                    Tick::missing()
                } else {
                    Tick::observed(vec![1.0], vec![t as f64])
                }
            })
            .collect(),
    }
}

#[test]
fn encode_inspect_gapped_window() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_series(dir.path(), "gapped.csv", &[ten_four_series()]);
    let (code, out, _) = run(&["encode-inspect", "--input", p(&csv), "--set", "in_len=30"]);
    assert_eq!(code, 0);
    assert!(out.contains("available: 10"), "{out}");
    assert!(out.contains("blocks: 4"), "{out}");
    let first_block = out.lines().find(|l| l.contains("(start=")).unwrap();
    assert_eq!(first_block.trim(), "(start=4,width=7)");
    assert!(out.contains("encoder steps: 10 + 4 = 14"), "{out}");
}

#[test]
fn encode_inspect_fully_observed_and_out_of_range() {
    let (code, out, _) = run(&["encode-inspect", "--input", p(&tiny()), "--window", "0"]);
    assert_eq!(code, 0);
    assert!(out.contains("blocks: (none)"), "{out}");
    let (code, _, err) = run(&["encode-inspect", "--input", p(&tiny()), "--window", "101"]);
    assert_eq!(code, 2, "{err}");
}

#[test]
fn mask_reproducible_and_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for out in [&a, &b] {
        let (code, _, err) = run(&["mask", "--input", p(&tiny()), "--output", p(out), "--set", "mask.widths=3..6", "--set", "mask.seed=9"]);
        assert_eq!(code, 0, "{err}");
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert!(dir.path().join("a.csv.config.txt").exists());
    assert!(dir.path().join("a.csv.report.txt").exists());

    let c = dir.path().join("c.csv");
    let (code, _, _) = run(&["mask", "--input", p(&tiny()), "--output", p(&c), "--set", "mask.q0=0"]);
    assert_eq!(code, 0);
    let schema = CsvSchema {
        x_columns: vec!["price".into()],
        ..CsvSchema::default()
    };
    let original = load_csv(tiny(), &schema).unwrap();
    let unmasked = load_csv(&c, &CsvSchema::default()).unwrap();
    assert_eq!(original, unmasked);
}

#[test]
fn mask_long_series_is_about_half_missing() {
    let dir = tempfile::tempdir().unwrap();
    let series = generate(&SyntheticConfig {
        series: 1,
        length: 1941,
        ..SyntheticConfig::default()
    })
    .unwrap();
    let csv = write_series(dir.path(), "long.csv", &series);
    let out = dir.path().join("masked.csv");
    let (code, stdout, _) = run(&["mask", "--input", p(&csv), "--output", p(&out), "--set", "mask.widths=30..40"]);
    assert_eq!(code, 0);
    let masked = load_csv(&out, &CsvSchema::default()).unwrap();
    let f = masked[0].missing_fraction();
    assert!((0.35..=0.65).contains(&f), "missing fraction {f}\n{stdout}");
}

#[test]
fn train_writes_checkpoint_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let run_dir = dir.path().join("demi");
    let (code, out, err) = run(&["train", "--input", p(&tiny()), "--out-dir", p(&run_dir), "--set", "epochs=3"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("final loss"), "{out}");
    let ckpt = std::fs::read_to_string(run_dir.join("model.ckpt")).unwrap();
    assert!(ckpt.starts_with("gapcast-checkpoint v1\n"));
    assert_eq!(std::fs::read_to_string(run_dir.join("loss_trace.csv")).unwrap().lines().count(), 4);
    assert!(std::fs::read_to_string(run_dir.join("config.txt")).unwrap().contains("epochs = 3"));

    let degd = dir.path().join("degd");
    let (code, _, err) = run(&["train", "--input", p(&tiny()), "--out-dir", p(&degd), "--set", "epochs=1", "--set", "variant=degd"]);
    assert_eq!(code, 0, "{err}");
    assert!(std::fs::read_to_string(degd.join("model.ckpt")).unwrap().contains("tensor dec.l0.decay_w"));

    let forecast = dir.path().join("f.csv");
    let (code, _, err) = run(&[
        "forecast",
        "--checkpoint",
        p(&run_dir.join("model.ckpt")),
        "--scaling",
        p(&run_dir.join("scaling.txt")),
        "--input",
        p(&tiny()),
        "--output",
        p(&forecast),
    ]);
    assert_eq!(code, 0, "{err}");
    let text = std::fs::read_to_string(&forecast).unwrap();
    assert!(text.starts_with("series_id,tick,y_forecast,y_actual\nshop1,111,"));
    assert_eq!(text.lines().count(), 1 + 2 * 10);
}

#[test]
fn train_training_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut ckpts = Vec::new();
    for name in ["a", "b"] {
        let d = dir.path().join(name);
        let (code, _, _) = run(&["train", "--input", p(&tiny()), "--out-dir", p(&d), "--set", "epochs=2", "--set", "seed=5"]);
        assert_eq!(code, 0);
        ckpts.push(std::fs::read(d.join("model.ckpt")).unwrap());
    }
    assert_eq!(ckpts[0], ckpts[1]);
}

#[test]
fn usage_and_data_exit_codes() {
    let (code, _, _) = run(&["train", "--input", p(&tiny())]);
    assert_eq!(code, 2);
    let dir = tempfile::tempdir().unwrap();
    let (code, _, _) = run(&["train", "--input", p(&tiny()), "--out-dir", p(dir.path()), "--set", "bogus=1"]);
    assert_eq!(code, 2);
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "series_id,tick,y,x\na,1.5,1,1\n").unwrap();
    let (code, _, _) = run(&["train", "--input", p(&bad), "--out-dir", p(dir.path())]);
    assert_eq!(code, 3);
}

#[test]
fn divergence_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _, err) = run(&[
        "train",
        "--input",
        p(&tiny()),
        "--out-dir",
        p(dir.path()),
        "--set",
        "epochs=20",
        "--set",
        "lr=1e308",
        "--set",
        "optimizer=rmsprop",
    ]);
    assert_eq!(code, 4, "{err}");
}

fn bench_args<'a>(out: &'a str, extra: &[&'a str]) -> Vec<&'a str> {
    let mut v = vec![
        "benchmark",
        "--synthetic",
        "--out-dir",
        out,
        "--set",
        "synthetic.series=2",
        "--set",
        "synthetic.length=160",
        "--set",
        "in_len=12",
        "--set",
        "out_len=4",
        "--set",
        "test_len=20",
        "--set",
        "mask.widths=4..6",
        "--set",
        "epochs=2",
    ];
    v.extend_from_slice(extra);
    v
}

#[test]
fn benchmark_full_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("all");
    let (code, stdout, err) = run(&bench_args(p(&out), &["--set", "methods=DEMI,DEGD,BEDXM,BEDXL,GRUD_FULL"]));
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("pairwise"));
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(json["methods"].as_array().unwrap().len(), 5);
    assert_eq!(json["pairwise"].as_array().unwrap().len(), 2 * 10);
    for row in json["pairwise"].as_array().unwrap() {
        assert!(row.get("significant").is_some());
    }
    for f in ["report.txt", "per_series.csv", "config.txt"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn benchmark_single_method_has_no_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    let (code, stdout, err) = run(&bench_args(p(&out), &["--set", "methods=DEMI"]));
    assert_eq!(code, 0, "{err}");
    assert!(!stdout.contains("pairwise"));
}

#[test]
fn benchmark_mismatched_seeds_is_protocol_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bad");
    let (code, _, err) = run(&bench_args(
        p(&out),
        &["--set", "methods=DEMI,COPY_PREVIOUS", "--set", "method_seed.COPY_PREVIOUS=77"],
    ));
    assert_eq!(code, 2);
    assert!(err.contains("protocol"), "{err}");
}
