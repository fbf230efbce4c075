use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use headstart::infersim::read_head;
use headstart::matrixio::read_matrix;

fn headstart(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_headstart"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = headstart(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

fn toy_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "tax.tsv", "A\tR\nB\tR\na1\tA\na2\tA\n");
    write(p, "src.tsv", "0\tfirst leaf\ta1\n1\tother branch\tB\n");
    write(p, "tgt.tsv", "0\tsecond leaf\ta2\n1\tinner\tA\n");
    dir
}

fn assert_matrix(path: &Path, want: &[&[f64]]) {
    let m = read_matrix(path).unwrap();
    assert_eq!(m.rows(), want.len());
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            assert!((m.get(i, j) - w).abs() < 1e-12, "({i},{j}): {} vs {w}", m.get(i, j));
        }
    }
}

#[test]
fn sim_wordnet_matches_hand_values() {
    let dir = toy_dir();
    let p = dir.path();
    let stdout = ok(
        p,
        &["sim", "wordnet", "--taxonomy", "tax.tsv", "--source-labels", "src.tsv", "--target-labels", "tgt.tsv", "--out", "s.txt"],
    );
    // depths: R 1, A B 2, a1 a2 3
    assert_matrix(&p.join("s.txt"), &[&[4.0 / 6.0, 2.0 / 5.0], &[4.0 / 5.0, 2.0 / 4.0]]);
    assert!(stdout.lines().next().unwrap().starts_with("second leaf: first leaf (0.6667)"));
}

#[test]
fn sim_word2vec_self_similarity_is_one() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "emb.txt", "3 2\ncat 1 0\ndog 0.5 0.5\nfish -1 0.2\n");
    write(p, "labels.tsv", "0\tcat\n1\tdog, fish\n2\tfish\n");
    ok(
        p,
        &["sim", "word2vec", "--embeddings", "emb.txt", "--source-labels", "labels.tsv", "--target-labels", "labels.tsv", "--out", "s.txt"],
    );
    let m = read_matrix(p.join("s.txt")).unwrap();
    for i in 0..3 {
        assert!((m.get(i, i) - 1.0).abs() < 1e-12);
    }
    assert_eq!(m.get(0, 2), 0.0);
}

#[test]
fn sim_inference_from_predictions() {
    let dir = toy_dir();
    let p = dir.path();
    write(p, "preds.csv", "sample_id,target_class,predicted_source\na,0,0\nb,0,0\nc,0,1\nd,1,1\n");
    ok(
        p,
        &["sim", "inference", "--predictions", "preds.csv", "--source-labels", "src.tsv", "--target-labels", "tgt.tsv", "--out", "s.txt"],
    );
    assert_matrix(&p.join("s.txt"), &[&[0.8, 0.4], &[0.0, 2.0 / 3.0]]);
}

#[test]
fn init_k1_copies_source_rows() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "head.txt", "3 3\n1 2 0.5\n-1 0.25 0\n3 -3 1\n");
    write(p, "sim.txt", "2 3\n0 0 1\n0.9 0 0\n");
    let stdout = ok(p, &["init", "--sim", "sim.txt", "--source-head", "head.txt", "--k", "1", "--out", "out.txt"]);
    let out = read_head(p.join("out.txt")).unwrap();
    let src = read_head(p.join("head.txt")).unwrap();
    assert_eq!(out.weights().row(0), src.weights().row(2));
    assert_eq!(out.bias()[0], src.bias()[2]);
    assert_eq!(out.weights().row(1), src.weights().row(0));
    assert!(stdout.contains("source 2 sim 1.0000 coef 1.0000"));
}

#[test]
fn init_per_type_k_needs_types() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "head.txt", "2 3\n1 0 2\n0 1 0\n");
    write(p, "sim.txt", "1 2\n0.5 0.5\n");
    let out = headstart(p, &["init", "--sim", "sim.txt", "--source-head", "head.txt", "--k-inclusive", "2", "--out", "o.txt"]);
    assert_eq!(out.status.code(), Some(2));
    write(p, "types.tsv", "0\tinclusive\n");
    ok(p, &["init", "--sim", "sim.txt", "--source-head", "head.txt", "--k-inclusive", "2", "--types", "types.tsv", "--out", "o.txt"]);
    let h = read_head(p.join("o.txt")).unwrap();
    assert_eq!(h.weights().row(0), &[0.5, 0.5]);
    assert_eq!(h.bias()[0], 1.0);
}

#[test]
fn random_init_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "head.txt", "2 4\n1 0 0 0\n0 1 0 0\n");
    for out in ["a.txt", "b.txt"] {
        ok(p, &["init", "--random", "--n-targets", "5", "--source-head", "head.txt", "--seed", "7", "--out", out]);
    }
    ok(p, &["init", "--random", "--n-targets", "5", "--source-head", "head.txt", "--seed", "8", "--out", "c.txt"]);
    let a = fs::read(p.join("a.txt")).unwrap();
    assert_eq!(a, fs::read(p.join("b.txt")).unwrap());
    assert_ne!(a, fs::read(p.join("c.txt")).unwrap());
    assert_eq!(read_head(p.join("a.txt")).unwrap().classes(), 5);
}

#[test]
fn train_with_zero_epochs_writes_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    write(p, "head.txt", "2 3\n1 0 0\n0 1 0\n");
    write(p, "feat.txt", "3 2\n0 1 0\n1 0 1\n1 0.2 0.9\n");
    ok(p, &["train", "--head", "head.txt", "--features", "feat.txt", "--epochs", "0", "--out", "h.csv"]);
    let csv = fs::read_to_string(p.join("h.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("0,"));
    let eval = ok(p, &["eval", "--head", "head.txt", "--features", "feat.txt"]);
    assert!(eval.starts_with("macro_f1\t1\n"));
}

#[test]
fn exit_codes_separate_usage_and_data_errors() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(headstart(p, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(headstart(p, &["init", "--source-head", "h.txt"]).status.code(), Some(2));
    assert_eq!(headstart(p, &["--help"]).status.code(), Some(0));
    let missing = headstart(p, &["eval", "--head", "nope.txt", "--features", "nope.txt"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.txt"));
    write(p, "bad.txt", "2 2\n1 x\n0 1\n");
    write(p, "feat.txt", "1 1\n1 0\n");
    assert_eq!(headstart(p, &["eval", "--head", "bad.txt", "--features", "feat.txt"]).status.code(), Some(1));
}

#[test]
fn generated_task_chains_through_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(p, &["experiment", "generate", "--m-sources", "12", "--n-targets", "6", "--samples-per-class", "8", "--out", "t"]);
    ok(p, &["types", "--taxonomy", "t/taxonomy.tsv", "--source-labels", "t/source_labels.tsv", "--target-labels", "t/target_labels.tsv", "--out", "types.tsv"]);
    assert_eq!(fs::read(p.join("types.tsv")).unwrap(), fs::read(p.join("t/types.tsv")).unwrap());
    ok(p, &["sim", "wordnet", "--taxonomy", "t/taxonomy.tsv", "--source-labels", "t/source_labels.tsv", "--target-labels", "t/target_labels.tsv", "--out", "s.txt"]);
    ok(p, &["init", "--sim", "s.txt", "--source-head", "t/source_head.txt", "--types", "types.tsv", "--k-inclusive", "3", "--out", "h.txt"]);
    ok(p, &["train", "--head", "h.txt", "--features", "t/train.txt", "--eval-features", "t/test.txt", "--epochs", "1", "--out", "hist.csv"]);
    assert!(fs::read_to_string(p.join("hist.csv")).unwrap().starts_with("step,loss,macro_f1,f1_class_0"));
}

#[test]
fn reduce_reports_every_count_for_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        p,
        &[
            "experiment", "reduce", "--seeds", "1", "--m-sources", "9", "--n-targets", "3", "--dim", "32",
            "--samples-per-class", "100", "--epochs", "1", "--counts", "100,50,25,10,5,2,1", "--out", "r",
        ],
    );
    let csv = fs::read_to_string(p.join("r/reduce.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "images_per_class,method,first,best,first_sd,best_sd");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 28);
    for m in ["random", "inference", "wordnet", "word2vec"] {
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(1) == Some(m)).count(), 7);
    }
    let table = fs::read_to_string(p.join("r/reduce.txt")).unwrap();
    assert_eq!(table.lines().count(), 2 + 7);
}

#[test]
fn compare_reports_mean_and_spread() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let stdout = ok(
        p,
        &["experiment", "compare", "--seeds", "3", "--m-sources", "9", "--n-targets", "3", "--samples-per-class", "10", "--epochs", "1", "--out", "c"],
    );
    assert!(stdout.starts_with("method"));
    let runs = fs::read_to_string(p.join("c/compare_runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 3 * 4);
    let summary = fs::read_to_string(p.join("c/compare.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "method,first,first_sd,best,best_sd,chance");
    assert_eq!(summary.lines().count(), 5);
}
