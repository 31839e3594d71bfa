//! Black-box tests for the command-line binary: the full toy pipeline,
//! config-file fallback, provenance sidecars, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_matchkit"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn run_ok(command: &mut Command) -> Output {
    let output = command.output().unwrap();
    assert!(
        output.status.success(),
        "command failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

#[test]
fn full_pipeline_on_bundled_data() {
    let dir = tempfile::tempdir().unwrap();
    let index = dir.path().join("toy.idx");
    let bm25 = dir.path().join("bm25.run");
    let dense = dir.path().join("dense.run");
    let model = dir.path().join("knrm.json");
    let reranked = dir.path().join("reranked.run");
    let ensembled = dir.path().join("ensembled.run");
    let report = dir.path().join("report.tsv");

    run_ok(bin().args(["index", "--corpus"]).arg(data("corpus.tsv")).arg("--out").arg(&index));
    run_ok(
        bin()
            .args(["retrieve", "--index"])
            .arg(&index)
            .arg("--queries")
            .arg(data("queries.tsv"))
            .args(["--k", "10", "--out"])
            .arg(&bm25),
    );
    run_ok(
        bin()
            .args(["dense-retrieve", "--corpus"])
            .arg(data("corpus.tsv"))
            .arg("--queries")
            .arg(data("queries.tsv"))
            .arg("--embeddings")
            .arg(data("embeddings.vec"))
            .args(["--k", "10", "--out"])
            .arg(&dense),
    );

    let triples = dir.path().join("triples.tsv");
    std::fs::write(
        &triples,
        "q1\td01\td05\nq2\td05\td01\nq3\td09\td13\nq4\td13\td09\nq5\td17\td01\n",
    )
    .unwrap();
    run_ok(
        bin()
            .args(["train", "--corpus"])
            .arg(data("corpus.tsv"))
            .arg("--queries")
            .arg(data("queries.tsv"))
            .arg("--embeddings")
            .arg(data("embeddings.vec"))
            .arg("--triples")
            .arg(&triples)
            .arg("--valid-run")
            .arg(&bm25)
            .arg("--qrels")
            .arg(data("qrels.txt"))
            .args(["--epochs", "3", "--model-out"])
            .arg(&model),
    );
    run_ok(
        bin()
            .args(["rerank", "--model"])
            .arg(&model)
            .arg("--run")
            .arg(&bm25)
            .arg("--corpus")
            .arg(data("corpus.tsv"))
            .arg("--queries")
            .arg(data("queries.tsv"))
            .arg("--out")
            .arg(&reranked),
    );
    run_ok(
        bin()
            .arg("ensemble")
            .arg(format!("--run=bm25={}", bm25.display()))
            .arg(format!("--run=dense={}", dense.display()))
            .arg("--qrels")
            .arg(data("qrels.txt"))
            .arg("--out")
            .arg(&ensembled),
    );
    run_ok(
        bin()
            .args(["eval", "--run"])
            .arg(&reranked)
            .arg("--qrels")
            .arg(data("qrels.txt"))
            .arg("--out")
            .arg(&report),
    );

    // every artifact exists; run artifacts carry a .meta sidecar
    for artifact in [&index, &bm25, &dense, &model, &reranked, &ensembled] {
        assert!(artifact.exists());
        let meta = artifact.with_extension(format!(
            "{}.meta",
            artifact.extension().unwrap().to_string_lossy()
        ));
        let text = std::fs::read_to_string(&meta).unwrap();
        assert!(text.contains("tool_version="), "{meta:?} lacks provenance");
        assert!(text.contains("config_hash="), "{meta:?} lacks a config hash");
        assert!(text.contains("seed="), "{meta:?} lacks the seed");
    }
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.starts_with("# tool_version="));
    assert!(report_text.contains("ndcg_cut_10\tall\t"));
}

#[test]
fn eval_matches_frozen_reference_via_cli() {
    let output = run_ok(
        bin()
            .args(["eval", "--run"])
            .arg(data("fixture_run.txt"))
            .arg("--qrels")
            .arg(data("qrels.txt"))
            .args(["--ndcg-gain", "linear"]),
    );
    let stdout = String::from_utf8(output.stdout).unwrap();
    for line in [
        "ndcg_cut_10\tall\t0.676279",
        "map\tall\t0.683333",
        "recip_rank_10\tall\t0.766667",
        "P_10\tall\t0.360000",
    ] {
        assert!(stdout.contains(line), "missing `{line}` in:\n{stdout}");
    }
}

#[test]
fn config_file_supplies_missing_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("task.cfg");
    std::fs::write(
        &config,
        format!("# toy task\ncorpus = {}\n", data("corpus.tsv").display()),
    )
    .unwrap();
    let out = dir.path().join("cfg.idx");
    run_ok(bin().arg("--config").arg(&config).arg("index").arg("--out").arg(&out));
    assert!(out.exists());
}

#[test]
fn output_dir_resolves_relative_outputs() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(
        bin()
            .arg("--output-dir")
            .arg(dir.path())
            .args(["index", "--corpus"])
            .arg(data("corpus.tsv"))
            .args(["--out", "nested.idx"]),
    );
    assert!(dir.path().join("nested.idx").exists());
    assert!(dir.path().join("nested.idx.meta").exists());
}

#[test]
fn exit_codes_by_error_category() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("never.idx");

    // missing required input -> config error (2)
    let output = bin().arg("index").arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(2));

    // unreadable input path -> i/o error (3)
    let output = bin()
        .args(["index", "--corpus", "/nonexistent/corpus.tsv", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(3));

    // malformed corpus -> parse error (4)
    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "only_one_field\n").unwrap();
    let output = bin().args(["index", "--corpus"]).arg(&bad).arg("--out").arg(&out).output().unwrap();
    assert_eq!(output.status.code(), Some(4));

    // invalid parameter -> usage error (2)
    let index = dir.path().join("ok.idx");
    run_ok(bin().args(["index", "--corpus"]).arg(data("corpus.tsv")).arg("--out").arg(&index));
    let output = bin()
        .args(["retrieve", "--index"])
        .arg(&index)
        .arg("--queries")
        .arg(data("queries.tsv"))
        .args(["--k", "0", "--out"])
        .arg(dir.path().join("never.run"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));

    // corrupted index -> format error (4)
    let mut bytes = std::fs::read(&index).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0xff;
    let corrupt = dir.path().join("corrupt.idx");
    std::fs::write(&corrupt, &bytes).unwrap();
    let output = bin()
        .args(["retrieve", "--index"])
        .arg(&corrupt)
        .arg("--queries")
        .arg(data("queries.tsv"))
        .arg("--out")
        .arg(dir.path().join("never.run"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(4));
}
