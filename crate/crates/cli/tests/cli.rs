use std::path::Path;
use std::process::{Command, Output};

fn sprec(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sprec"))
        .current_dir(dir)
        .env("RUST_BACKTRACE", "0")
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = sprec(dir, args);
    assert!(
        out.status.success(),
        "sprec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn cells(line: &str) -> Vec<&str> {
    line.split(',').collect()
}

const SMALL: [&str; 8] = ["--p", "6", "--n", "40", "--replications", "3", "--grid-size", "5"];

#[test]
fn toy_signs_give_the_identity() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("toy.csv"), "1,0\n-1,0\n0,1\n0,-1\n").unwrap();
    ok(dir.path(), &["estimate", "--input", "toy.csv", "--method", "sglasso", "--lambda", "0"]);
    let csv = read(dir.path(), "estimate.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "x1,x2");
    assert_eq!(cells(lines[1]), ["1.0000000000000000e0", "0.0000000000000000e0"]);
    assert_eq!(cells(lines[2]), ["0.0000000000000000e0", "1.0000000000000000e0"]);
    let meta: serde_json::Value = serde_json::from_str(&read(dir.path(), "estimate.json")).unwrap();
    assert_eq!(meta["method"], "sglasso");
    assert_eq!(meta["converged"], true);
    assert_eq!(meta["is_pd"], true);
    assert_eq!(meta["norms"]["frobenius"].as_f64().unwrap(), 2f64.sqrt());
}

#[test]
fn malformed_cell_is_located() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.csv"), "1,2\n3,4\n5,abc\n").unwrap();
    let out = sprec(dir.path(), &["estimate", "--input", "bad.csv", "--method", "sclime", "--lambda", "0.1"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(3,2)") && err.contains("abc"), "{err}");
}

#[test]
fn validation_selects_lambda_and_checks_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let rows = |seed: u64, p: usize| -> String {
        let mut s = String::new();
        let mut x = seed;
        for _ in 0..30 {
            let row: Vec<String> = (0..p)
                .map(|_| {
                    x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    format!("{}", (x >> 11) as f64 / (1u64 << 53) as f64 - 0.5)
                })
                .collect();
            s.push_str(&row.join(","));
            s.push('\n');
        }
        s
    };
    std::fs::write(d.join("train.csv"), rows(1, 4)).unwrap();
    std::fs::write(d.join("valid.csv"), rows(2, 4)).unwrap();
    std::fs::write(d.join("wide.csv"), rows(3, 5)).unwrap();
    ok(
        d,
        &[
            "estimate", "--input", "train.csv", "--validation", "valid.csv", "--method", "clime", "--grid-size", "7",
            "--output", "sel",
        ],
    );
    let meta: serde_json::Value = serde_json::from_str(&read(d, "sel.json")).unwrap();
    let grid = meta["selection"]["grid"].as_array().unwrap();
    assert_eq!(grid.len(), 7);
    assert!(grid.contains(&meta["lambda"]));
    assert_eq!(read(d, "sel.csv").lines().count(), 5);

    let out = sprec(d, &["estimate", "--input", "train.csv", "--validation", "wide.csv", "--method", "clime"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("columns"));
    let out = sprec(d, &["estimate", "--input", "train.csv", "--method", "clime"]);
    assert!(!out.status.success());
}

#[test]
fn precision_table_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut args = vec!["--seed", "11", "--out-dir", "a", "simulate", "precision"];
    args.extend(SMALL);
    ok(d, &args);
    args[3] = "b";
    let mut with_threads = vec!["--threads", "1"];
    with_threads.extend(&args);
    ok(d, &with_threads);
    let a = read(d, "a/precision.csv");
    assert_eq!(a, read(d, "b/precision.csv"));
    let lines: Vec<&str> = a.lines().collect();
    assert_eq!(lines[0], "method,metric,p,mean,sd,excluded");
    assert_eq!(lines.len(), 1 + 4 * 3);
    assert!(lines[1].starts_with("SCLIME,frobenius,6,"));
    args[3] = "c";
    args[1] = "12";
    ok(d, &args);
    assert_ne!(a, read(d, "c/precision.csv"));
}

#[test]
fn single_replication_has_zero_sd() {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["simulate", "precision", "--p", "5", "--n", "30", "--replications", "1", "--grid-size", "4"]);
    for line in read(dir.path(), "precision.csv").lines().skip(1) {
        assert_eq!(cells(line)[4], "0.0000000000000000e0", "{line}");
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("exp.toml"),
        "dims = [7]\nn = 50\nreplications = 2\nmethods = [\"sclime\", \"clime\"]\n[grid]\nsize = 3\n[law]\nkind = \"student_t\"\n",
    )
    .unwrap();
    ok(d, &["simulate", "precision", "--config", "exp.toml", "--p", "5", "--output", "run"]);
    let csv = read(d, "run.csv");
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(csv.lines().skip(1).all(|l| cells(l)[2] == "5"));
    let resolved = read(d, "run.config.toml");
    assert!(resolved.contains("n = 50") && resolved.contains("student_t") && resolved.contains("dims = [5]"));

    std::fs::write(d.join("lda.toml"), "experiment = \"lda\"\n").unwrap();
    assert!(!sprec(d, &["simulate", "precision", "--config", "lda.toml"]).status.success());
    assert!(!sprec(d, &["simulate", "precision", "--set", "nonsense=1"]).status.success());
}

#[test]
fn roc_output_ignores_the_chart_flag() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let base = ["--p", "8", "--n", "50", "--replications", "2", "--grid-size", "4"];
    let mut plain = vec!["--out-dir", "plain", "simulate", "graph-roc"];
    plain.extend(base);
    ok(d, &plain);
    let mut chart = vec!["--out-dir", "chart", "simulate", "graph-roc", "--svg"];
    chart.extend(base);
    ok(d, &chart);
    let csv = read(d, "plain/graph_roc.csv");
    assert_eq!(csv, read(d, "chart/graph_roc.csv"));
    assert!(!d.join("plain/graph_roc.svg").exists());
    assert!(read(d, "chart/graph_roc.svg").starts_with("<svg"));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "method,lambda,fpr,tpr");
    assert_eq!(lines.len(), 1 + 4 * 4);
    for line in &lines[1..] {
        let c = cells(line);
        let rate = |s: &str| s.parse::<f64>().unwrap();
        assert!((0.0..=1.0).contains(&rate(c[2])) && (0.0..=1.0).contains(&rate(c[3])));
    }
}

#[test]
fn lda_table_has_three_metrics() {
    let dir = tempfile::tempdir().unwrap();
    ok(
        dir.path(),
        &["simulate", "lda", "--p", "6", "--lda-s", "3", "--n", "60", "--replications", "2", "--grid-size", "3"],
    );
    let csv = read(dir.path(), "lda.csv");
    let metrics: Vec<&str> = csv.lines().skip(1).take(3).map(|l| cells(l)[1]).collect();
    assert_eq!(metrics, ["specificity", "sensitivity", "mcc"]);
}

#[test]
fn contamination_replaces_ceil_nr_entries_per_column() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut text = String::from("u,v,w\n");
    for i in 0..20 {
        text.push_str(&format!("{}.5,{}.25,-{}.125\n", i, i + 1, i));
    }
    std::fs::write(d.join("data.csv"), text).unwrap();
    let args = ["--seed", "9", "contaminate", "--input", "data.csv", "--rate", "0.12", "--magnitude", "50"];
    ok(d, &args);
    let first = read(d, "contaminated.csv");
    ok(d, &args);
    assert_eq!(first, read(d, "contaminated.csv"));
    assert!(first.starts_with("u,v,w\n"));
    for col in 0..3 {
        let hits = first
            .lines()
            .skip(1)
            .filter(|l| cells(l)[col].parse::<f64>().unwrap().abs() == 50.0)
            .count();
        assert_eq!(hits, 3, "column {col}");
    }
}
