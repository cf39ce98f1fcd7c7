use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn climd(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_climd"))
        .args(args)
        .current_dir(cwd)
        .env("CLIMD_THREADS", "2")
        .output()
        .expect("spawn climd")
}

fn write_labels(path: &Path, counts: &[usize]) {
    let mut text = String::from("sample_id,label\n");
    for (c, &n) in counts.iter().enumerate() {
        for i in 0..n {
            text += &format!("c{c}_{i},{c}\n");
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn fit_reports_alpha_and_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&dir.path().join("labels.csv"), &[100, 50, 10]);
    let out = climd(&["fit", "--labels", "labels.csv", "--out", "fit"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("alpha_hat = 5.889556"));
    let text = fs::read_to_string(dir.path().join("fit/distribution.csv")).unwrap();
    assert!(text.contains("# alpha_hat=5.889555519686648"));
    assert!(dir.path().join("fit/manifest.json").exists());
}

#[test]
fn balanced_labels_flag_degenerate_fit() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&dir.path().join("labels.csv"), &[40, 40, 40]);
    let out = climd(&["fit", "--labels", "labels.csv", "--out", "fit"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("degenerate"));
    let text = fs::read_to_string(dir.path().join("fit/distribution.csv")).unwrap();
    assert!(text.contains("# status=degenerate_balanced"));
}

#[test]
fn missing_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = climd(&["fit", "--labels", "absent.csv", "--out", "fit"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(!dir.path().join("fit").exists());
}

#[test]
fn figure2_rows_grow_to_full_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = climd(&["figure2", "--out", "f"], dir.path());
    assert!(out.status.success());
    let text = fs::read_to_string(dir.path().join("f/figure2.csv")).unwrap();
    let rows: Vec<Vec<u64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 10);
    assert!(rows[0][1..].iter().all(|&v| v == 10));
    for row in &rows {
        assert_eq!(row[1..].iter().sum::<u64>(), 100 * row[0]);
    }
}

#[test]
fn pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = climd(&["pipeline", "--n", "200", "--seed", "7", "--out", out], dir.path());
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    for name in ["traces.jsonl", "difficulty.csv", "distribution.csv", "schedule.csv", "schedule_summary.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs");
    }
    let summary = fs::read_to_string(dir.path().join("a/schedule_summary.csv")).unwrap();
    let last: u64 = summary.lines().last().unwrap().split(',').skip(1).map(|v| v.parse::<u64>().unwrap()).sum();
    assert_eq!(last, 200);
}

#[test]
fn corrupt_trace_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let o = climd(&["pipeline", "--n", "60", "--out", "ok"], dir.path());
    assert!(o.status.success());
    let text = fs::read_to_string(dir.path().join("ok/traces.jsonl")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines[2] = "{\"sample_id\": broken";
    fs::write(dir.path().join("bad.jsonl"), lines.join("\n")).unwrap();
    let o = climd(&["pipeline", "--traces", "bad.jsonl", "--out", "bad"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.jsonl:3"));
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn eval_scores_hand_example() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("pred.csv"),
        "sample_id,truth,predicted\na,0,0\nb,0,1\nc,1,1\nd,2,2\ne,2,0\n",
    )
    .unwrap();
    let o = climd(&["eval", "--predictions", "pred.csv", "--out", "ev"], dir.path());
    assert!(o.status.success());
    let metrics = fs::read_to_string(dir.path().join("ev/metrics.csv")).unwrap();
    let value = |key: &str| -> f64 {
        let line = metrics.lines().find(|l| l.starts_with(key)).unwrap();
        line.split(',').nth(1).unwrap().parse().unwrap()
    };
    assert!((value("accuracy") - 0.6).abs() < 1e-12);
    assert!((value("weighted_f1") - 0.6).abs() < 1e-12);
    assert!((value("macro_f1") - 11.0 / 18.0).abs() < 1e-12);
}

#[test]
fn bad_arguments_exit_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    write_labels(&dir.path().join("labels.csv"), &[5, 3]);
    let o = climd(&["fit", "--labels", "labels.csv", "--gamma=-1"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}
