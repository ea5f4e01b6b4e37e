//! End-to-end tests of the `helm` binary: exit-code contract, artifact
//! layout, and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

use helm::cli::RunConfig;
use helm::synthetic::synthetic_corpus;
use helm::{LossKind, ModelConfig, Objective, Vocabulary};

const BIN: &str = env!("CARGO_BIN_EXE_helm");

fn helm(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("HELM_THREADS")
        .output()
        .expect("spawn helm")
}

fn write_corpus(path: &Path, n: usize, seed: u64) {
    let vocab = Vocabulary::codon();
    let corpus = synthetic_corpus(n, 6, 3, seed);
    let mut out = String::new();
    for (i, seq) in corpus.sequences.iter().enumerate() {
        let rna = vocab.decode(seq).unwrap();
        out.push_str(&format!("{{\"id\":\"s{i}\",\"sequence\":\"{rna}\"}}\n"));
    }
    std::fs::write(path, out).unwrap();
}

fn write_run_config(dir: &Path, objective: Objective, loss: LossKind) -> std::path::PathBuf {
    let corpus = dir.join("corpus.jsonl");
    write_corpus(&corpus, 24, 5);
    let mut model = ModelConfig::tiny(objective, loss);
    model.epochs = 2;
    let rc = RunConfig {
        model,
        corpus,
        out: dir.join("run_out"),
    };
    let path = dir.join("run.json");
    std::fs::write(&path, serde_json::to_string_pretty(&rc).unwrap()).unwrap();
    path
}

#[test]
fn help_is_success_and_bad_flag_is_config_error() {
    assert_eq!(helm(&["--help"]).status.code(), Some(0));
    assert_eq!(helm(&["train"]).status.code(), Some(2), "missing --config");
    assert_eq!(helm(&["--definitely-not-a-flag"]).status.code(), Some(2));
}

#[test]
fn helm_threads_must_be_a_positive_integer() {
    let out = Command::new(BIN)
        .args(["grad-check", "--trials", "1"])
        .env("HELM_THREADS", "abc")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value =
        serde_json::from_slice(&out.stderr).expect("stderr must be a JSON error object");
    assert_eq!(err["kind"], "config");
    assert!(err["error"].as_str().unwrap().contains("HELM_THREADS"));
}

#[test]
fn missing_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let rc = RunConfig {
        model: ModelConfig::tiny(Objective::Mlm, LossKind::Hxe),
        corpus: dir.path().join("nope.jsonl"),
        out: dir.path().join("out"),
    };
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, serde_json::to_string(&rc).unwrap()).unwrap();
    let out = helm(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "data");
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.json");
    std::fs::write(&cfg, "{\"model\": {\"layers\": \"two\"}}").unwrap();
    let out = helm(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "config");
}

#[test]
fn train_writes_artifacts_and_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run_config(dir.path(), Objective::Mlm, LossKind::Hxe);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let r = helm(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
        for f in ["model.ckpt", "train_report.json", "train_log.csv", "resolved_config.json"] {
            assert!(out.join(f).exists(), "missing {f}");
        }
    }
    let a = std::fs::read(out_a.join("model.ckpt")).unwrap();
    let b = std::fs::read(out_b.join("model.ckpt")).unwrap();
    assert_eq!(a, b, "same seed must give byte-identical checkpoints");

    // The training log has the documented CSV header.
    let log = std::fs::read_to_string(out_a.join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,lr,loss\n"));

    // resolved_config.json round-trips as a RunConfig.
    let resolved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("resolved_config.json")).unwrap())
            .unwrap();
    assert_eq!(resolved["model"]["seed"], 7);
}

#[test]
fn generate_and_eval_pipeline_from_a_trained_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_run_config(dir.path(), Objective::Clm, LossKind::Xe);
    let out = dir.path().join("train_out");
    let r = helm(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let ckpt = out.join("model.ckpt");
    let corpus = dir.path().join("corpus.jsonl");

    // generate: N samples, each valid RNA.
    let gen_out = dir.path().join("gen");
    let r = helm(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--out",
        gen_out.to_str().unwrap(),
        "--num",
        "4",
        "--temperature",
        "0.9",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let samples = std::fs::read_to_string(gen_out.join("samples.jsonl")).unwrap();
    assert_eq!(samples.lines().count(), 4);
    for line in samples.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let rna = v["sequence"].as_str().unwrap();
        assert!(rna.bytes().all(|b| matches!(b, b'A' | b'C' | b'G' | b'U')));
    }

    // eval-entropy on the training corpus.
    let ent_out = dir.path().join("ent");
    let r = helm(&[
        "eval-entropy",
        "--input",
        corpus.to_str().unwrap(),
        "--out",
        ent_out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let ent: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ent_out.join("entropy.json")).unwrap())
            .unwrap();
    assert!(ent["top5Average"].as_f64().unwrap() >= 0.0);
    assert!(ent_out.join("entropy.csv").exists());

    // eval-fbd of a corpus against itself is zero.
    let fbd_out = dir.path().join("fbd");
    let r = helm(&[
        "eval-fbd",
        "--real",
        corpus.to_str().unwrap(),
        "--generated",
        corpus.to_str().unwrap(),
        "--out",
        fbd_out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let fbd: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(fbd_out.join("fbd.json")).unwrap()).unwrap();
    assert!(fbd["fbd"].as_f64().unwrap().abs() < 1e-6);

    // eval-confusion writes the report and the codon wheel.
    let conf_out = dir.path().join("conf");
    let r = helm(&[
        "eval-confusion",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        corpus.to_str().unwrap(),
        "--out",
        conf_out.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let conf: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(conf_out.join("confusion.json")).unwrap())
            .unwrap();
    let mass = conf["synMassOnError"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mass));
    let wheel = std::fs::read_to_string(conf_out.join("wheel.csv")).unwrap();
    assert!(wheel.starts_with("aminoAcid,codon,meanProb,model"));
}

#[test]
fn grad_check_prints_json_and_respects_tolerance() {
    let out = helm(&["grad-check", "--kind", "hxe", "--alpha", "0.2", "--trials", "25"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["maxRelErr"].as_f64().unwrap() < 1e-4);
    assert_eq!(v["trials"], 25);
}

#[test]
fn tokenize_jsonl_round_trip_counts() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus.jsonl");
    write_corpus(&corpus, 10, 1);
    let output = dir.path().join("tokens.jsonl");
    let r = helm(&[
        "tokenize",
        "--input",
        corpus.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let text = std::fs::read_to_string(&output).unwrap();
    assert_eq!(text.lines().count(), 10);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["scheme"], "codon");
    assert_eq!(first["ids"].as_array().unwrap().len(), 6);
}

#[test]
fn curate_writes_stats_and_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("oas.tsv");
    std::fs::write(&input, include_str!("fixtures/oas_fixture.tsv")).unwrap();
    let out = dir.path().join("cur");
    let r = helm(&[
        "curate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threshold",
        "0.5",
        "--strict",
    ]);
    assert_eq!(r.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&r.stderr));
    let stats: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("stats.json")).unwrap()).unwrap();
    assert_eq!(stats["inputRecords"], 12);
    assert_eq!(stats["outputRecords"], 4);
    let corpus = std::fs::read_to_string(out.join("corpus.jsonl")).unwrap();
    assert_eq!(corpus.lines().count(), 4);
    assert!(out.join("rejections.csv").exists());

    // A threshold outside (0, 1] is a config error.
    let r = helm(&[
        "curate",
        "--input",
        input.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--threshold",
        "1.5",
    ]);
    assert_eq!(r.status.code(), Some(2));
}
