//! Command-line entry point: one binary, one subcommand per pipeline.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure. Failures additionally print a machine-readable JSON object to
//! stderr: `{"error": "...", "kind": "config"|"data"|"numeric"}`.
//! `HELM_THREADS` caps worker threads; the default of 1 keeps every pipeline
//! bit-deterministic (all current kernels are single-threaded regardless).

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::analysis::{
    codon_usage_entropy, fbd_report, kmeans, silhouette, synonym_confusion, synonymous_variants,
    train_probe, Embedder, KmerCountEmbedder, ModelEmbedder, ProbeConfig,
};
use crate::curation::{curate, parse_records, ColumnMap, FilterRules};
use crate::hierarchy::{build_standard_tree, LambdaWeights};
use crate::loss::{grad_check, LossKind};
use crate::model::{
    load_checkpoint, save_checkpoint, train, ModelConfig, ModelState, Objective,
};
use crate::tokenizer::{
    read_jsonl_corpus, write_jsonl_corpus, CorpusRecord, FastaReader, Scheme, TokenSequence,
    Vocabulary,
};

const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }

    fn label(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug)]
struct CliError {
    kind: ErrorKind,
    message: String,
}

fn config_err(message: impl ToString) -> CliError {
    CliError {
        kind: ErrorKind::Config,
        message: message.to_string(),
    }
}

fn data_err(message: impl ToString) -> CliError {
    CliError {
        kind: ErrorKind::Data,
        message: message.to_string(),
    }
}

fn numeric_err(message: impl ToString) -> CliError {
    CliError {
        kind: ErrorKind::Numeric,
        message: message.to_string(),
    }
}

fn model_err(e: crate::model::ModelError) -> CliError {
    use crate::model::ModelError as M;
    match e {
        M::BadConfig(_) | M::WrongObjective(_) => config_err(e),
        M::NonFiniteLoss { .. } => numeric_err(e),
        _ => data_err(e),
    }
}

/// Hierarchy-aware language modeling toolkit for mRNA sequences.
#[derive(Debug, Parser)]
#[command(name = "helm", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Tokenize FASTA or JSONL sequences into token-id JSONL.
    Tokenize(TokenizeArgs),
    /// Train a model from a JSON run configuration.
    Train(TrainArgs),
    /// Sample sequences from a trained causal checkpoint.
    Generate(GenerateArgs),
    /// Codon-usage entropy report over a corpus.
    EvalEntropy(EvalEntropyArgs),
    /// Synonymous-variant clustering with k-means + silhouette.
    EvalCluster(EvalClusterArgs),
    /// Fréchet distance between real and generated corpora.
    EvalFbd(EvalFbdArgs),
    /// Synonym-confusion metric and codon-wheel table.
    EvalConfusion(EvalConfusionArgs),
    /// Train the frozen-feature regression probe.
    Probe(ProbeArgs),
    /// Finite-difference verification of the loss gradients.
    GradCheck(GradCheckArgs),
    /// Filter, deduplicate, and balance an OAS-style TSV.
    Curate(CurateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SchemeArg {
    Codon,
    Nucleotide,
    Kmer6,
}

#[derive(Debug, Args)]
struct TokenizeArgs {
    /// Input path; `.fasta`/`.fa` parsed as FASTA, otherwise JSONL.
    #[arg(long)]
    input: PathBuf,
    /// Output JSONL of token ids.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = SchemeArg::Codon)]
    scheme: SchemeArg,
    /// Window offset for the 6-mer scheme (1..=6).
    #[arg(long, default_value_t = 3)]
    stride: usize,
    /// Map unknown chunks to UNK instead of failing.
    #[arg(long)]
    lenient: bool,
}

/// Run configuration for `train`: the full model config plus file paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub corpus: PathBuf,
    pub out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// Path to a RunConfig JSON document.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Optional file holding an RNA prefix (plain text).
    #[arg(long)]
    prefix: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    temperature: f64,
    /// Number of samples.
    #[arg(long, default_value_t = 5)]
    num: usize,
    /// Maximum new tokens per sample (default: up to the context length).
    #[arg(long)]
    max_new: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct EvalEntropyArgs {
    /// JSONL corpus of raw sequences.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvalClusterArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Number of held-out sequences to expand into variants (also k).
    #[arg(long, default_value_t = 20)]
    n_seqs: usize,
    /// Synonymous variants per sequence.
    #[arg(long, default_value_t = 50)]
    variants: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EmbedderArg {
    /// Amino-acid 3-mer counts, dimension 8000.
    Aa3mer,
    /// Amino-acid 3-mer counts hashed to 256 dimensions.
    Aa3merHashed,
    /// The trained model's mean-pooled embedding (needs --checkpoint).
    Model,
}

#[derive(Debug, Args)]
struct EvalFbdArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    generated: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EmbedderArg::Aa3merHashed)]
    embedder: EmbedderArg,
    /// Checkpoint for the model embedder.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalConfusionArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct ProbeArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// JSONL corpus; every record must carry a numeric `label`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Xe,
    Hxe,
}

#[derive(Debug, Args)]
struct GradCheckArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Hxe)]
    kind: KindArg,
    #[arg(long, default_value_t = 0.2)]
    alpha: f64,
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional directory for the JSON report.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CurateArgs {
    /// OAS-style TSV input.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Dedup Jaccard threshold in (0, 1].
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fail on malformed rows instead of skipping them.
    #[arg(long)]
    strict: bool,
    /// Optional JSON file overriding the TSV column names.
    #[arg(long)]
    columns: Option<PathBuf>,
}

/// Parses `std::env::args`, runs the subcommand, and returns the exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version print to stdout with success.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = thread_cap() {
        return report(e);
    }
    let result = match cli.command {
        Command::Tokenize(a) => cmd_tokenize(a),
        Command::Train(a) => cmd_train(a),
        Command::Generate(a) => cmd_generate(a),
        Command::EvalEntropy(a) => cmd_eval_entropy(a),
        Command::EvalCluster(a) => cmd_eval_cluster(a),
        Command::EvalFbd(a) => cmd_eval_fbd(a),
        Command::EvalConfusion(a) => cmd_eval_confusion(a),
        Command::Probe(a) => cmd_probe(a),
        Command::GradCheck(a) => cmd_grad_check(a),
        Command::Curate(a) => cmd_curate(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report(e),
    }
}

fn report(e: CliError) -> i32 {
    eprintln!(
        "{}",
        json!({"error": e.message, "kind": e.kind.label()})
    );
    e.kind.exit_code()
}

/// `HELM_THREADS` must be a positive integer when set; default 1.
fn thread_cap() -> Result<usize, CliError> {
    match std::env::var("HELM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .ok_or_else(|| config_err(format!("HELM_THREADS={v:?} is not a positive integer"))),
    }
}

fn ensure_out_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| data_err(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| data_err(e))?;
    fs::write(path, text + "\n").map_err(|e| data_err(format!("{}: {e}", path.display())))
}

/// Every run records the exact options it resolved to.
fn write_resolved_config(dir: &Path, value: serde_json::Value) -> Result<(), CliError> {
    write_json(&dir.join("resolved_config.json"), &value)
}

fn is_fasta(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("fasta") | Some("fa") | Some("fna")
    )
}

/// Reads raw sequences from FASTA or CorpusRecord JSONL.
fn read_sequences(path: &Path, lenient: bool) -> Result<Vec<CorpusRecord>, CliError> {
    if is_fasta(path) {
        let file = fs::File::open(path)
            .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
        let mut reader = FastaReader::new(BufReader::new(file));
        if lenient {
            reader = reader.lenient();
        }
        let mut out = Vec::new();
        for (i, rec) in reader.enumerate() {
            let rec = rec.map_err(|e| data_err(format!("record {}: {e}", i + 1)))?;
            out.push(CorpusRecord {
                id: rec.id,
                sequence: rec.sequence,
                label: None,
            });
        }
        Ok(out)
    } else {
        read_jsonl_corpus(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
    }
}

/// Encodes a raw corpus with the codon vocabulary.
fn encode_codon_corpus(
    records: &[CorpusRecord],
    strict: bool,
) -> Result<Vec<TokenSequence>, CliError> {
    let vocab = Vocabulary::codon();
    records
        .iter()
        .map(|r| {
            let normalized = crate::tokenizer::normalize(&r.sequence, strict)
                .map_err(|e| data_err(format!("record {:?}: {e}", r.id)))?;
            vocab
                .encode(&normalized, strict)
                .map_err(|e| data_err(format!("record {:?}: {e}", r.id)))
        })
        .collect()
}

fn load_state(path: &Path) -> Result<ModelState, CliError> {
    load_checkpoint(path).map_err(|e| data_err(format!("{}: {e}", path.display())))
}

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
struct TokenizedRecord<'a> {
    id: &'a str,
    scheme: Scheme,
    ids: &'a [u32],
    source_length: usize,
}

fn cmd_tokenize(a: TokenizeArgs) -> Result<(), CliError> {
    let vocab = match a.scheme {
        SchemeArg::Codon => Vocabulary::codon(),
        SchemeArg::Nucleotide => Vocabulary::nucleotide(),
        SchemeArg::Kmer6 => Vocabulary::kmer6(a.stride).map_err(config_err)?,
    };
    let records = read_sequences(&a.input, a.lenient)?;
    let mut lines = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        let normalized = crate::tokenizer::normalize(&rec.sequence, !a.lenient)
            .map_err(|e| data_err(format!("record {} ({:?}): {e}", i + 1, rec.id)))?;
        let seq = vocab
            .encode(&normalized, !a.lenient)
            .map_err(|e| data_err(format!("record {} ({:?}): {e}", i + 1, rec.id)))?;
        lines.push(
            serde_json::to_string(&TokenizedRecord {
                id: &rec.id,
                scheme: seq.scheme,
                ids: &seq.ids,
                source_length: seq.source_length,
            })
            .map_err(data_err)?,
        );
    }
    fs::write(&a.output, lines.join("\n") + "\n")
        .map_err(|e| data_err(format!("{}: {e}", a.output.display())))?;
    println!("tokenized {} records -> {}", records.len(), a.output.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<(), CliError> {
    let text = fs::read_to_string(&a.config)
        .map_err(|e| config_err(format!("{}: {e}", a.config.display())))?;
    let mut run: RunConfig = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", a.config.display())))?;
    if let Some(seed) = a.seed {
        run.model.seed = seed;
    }
    if let Some(out) = a.out {
        run.out = out;
    }
    run.model.validate().map_err(config_err)?;
    if !run.corpus.exists() {
        return Err(data_err(format!(
            "corpus path {} does not exist",
            run.corpus.display()
        )));
    }
    ensure_out_dir(&run.out)?;
    let records = read_sequences(&run.corpus, false)?;
    let corpus = encode_codon_corpus(&records, true)?;
    let (state, report) = train(&run.model, &corpus).map_err(model_err)?;
    save_checkpoint(&state, &run.out.join("model.ckpt")).map_err(model_err)?;
    write_json(&run.out.join("train_report.json"), &report)?;
    report
        .write_csv(&run.out.join("train_log.csv"))
        .map_err(model_err)?;
    write_resolved_config(&run.out, serde_json::to_value(&run).map_err(data_err)?)?;
    println!(
        "trained {} steps, final loss {:.6} -> {}",
        report.steps,
        report.final_loss,
        run.out.display()
    );
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), CliError> {
    if !(a.temperature > 0.0) {
        return Err(config_err(format!(
            "temperature {} must be > 0",
            a.temperature
        )));
    }
    let state = load_state(&a.checkpoint)?;
    if state.config.objective != Objective::Clm {
        return Err(config_err("generate requires a causal (CLM) checkpoint"));
    }
    ensure_out_dir(&a.out)?;
    let vocab = Vocabulary::codon();
    let prefix_ids: Vec<u32> = match &a.prefix {
        None => vec![state.config.bos_id()],
        Some(path) => {
            let raw = fs::read_to_string(path)
                .map_err(|e| data_err(format!("{}: {e}", path.display())))?;
            let normalized =
                crate::tokenizer::normalize(&raw, true).map_err(data_err)?;
            let seq = vocab.encode(&normalized, true).map_err(data_err)?;
            let mut ids = vec![state.config.bos_id()];
            ids.extend(&seq.ids);
            ids
        }
    };
    let max_new = a
        .max_new
        .unwrap_or(state.config.context_length - prefix_ids.len());
    let mut records = Vec::with_capacity(a.num);
    for i in 0..a.num {
        let sample = state
            .sample(&prefix_ids, a.temperature, max_new, a.seed.wrapping_add(i as u64))
            .map_err(model_err)?;
        // Keep only codon ids so the output is always decodable RNA.
        let codon_only = TokenSequence::from_codon_ids(
            sample.ids.iter().copied().filter(|&t| t < 64).collect(),
        );
        let sequence = vocab.decode(&codon_only).map_err(data_err)?;
        records.push(CorpusRecord {
            id: format!("sample-{i}"),
            sequence,
            label: None,
        });
    }
    write_jsonl_corpus(&a.out.join("samples.jsonl"), &records).map_err(data_err)?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "generate",
            "checkpoint": a.checkpoint,
            "prefix": a.prefix,
            "temperature": a.temperature,
            "num": a.num,
            "maxNew": max_new,
            "seed": a.seed,
        }),
    )?;
    println!("wrote {} samples -> {}", records.len(), a.out.display());
    Ok(())
}

fn cmd_eval_entropy(a: EvalEntropyArgs) -> Result<(), CliError> {
    let records = read_sequences(&a.input, false)?;
    let corpus = encode_codon_corpus(&records, true)?;
    let report = codon_usage_entropy(&corpus).map_err(data_err)?;
    ensure_out_dir(&a.out)?;
    write_json(&a.out.join("entropy.json"), &report)?;
    let mut csv = String::from("aminoAcid,name,occurrences,entropyBits\n");
    for row in &report.per_amino_acid {
        csv.push_str(&format!(
            "{},{},{},{:.8}\n",
            row.amino_acid, row.name, row.occurrences, row.entropy_bits
        ));
    }
    fs::write(a.out.join("entropy.csv"), csv).map_err(data_err)?;
    write_resolved_config(
        &a.out,
        json!({"subcommand": "eval-entropy", "input": a.input}),
    )?;
    println!("top-5 average entropy: {:.6} bits", report.top5_average);
    Ok(())
}

fn cmd_eval_cluster(a: EvalClusterArgs) -> Result<(), CliError> {
    let state = load_state(&a.checkpoint)?;
    let records = read_sequences(&a.input, false)?;
    let corpus = encode_codon_corpus(&records, true)?;
    if corpus.len() < a.n_seqs {
        return Err(config_err(format!(
            "corpus has {} sequences, --n-seqs is {}",
            corpus.len(),
            a.n_seqs
        )));
    }
    let mut points = Vec::with_capacity(a.n_seqs * a.variants);
    let mut labels = Vec::with_capacity(a.n_seqs * a.variants);
    for (i, seq) in corpus.iter().take(a.n_seqs).enumerate() {
        let variants =
            synonymous_variants(seq, a.variants, a.seed.wrapping_add(i as u64)).map_err(data_err)?;
        for v in &variants {
            let mut ids = v.ids.clone();
            ids.truncate(state.config.context_length);
            points.push(state.embed(&ids).map_err(model_err)?);
            labels.push(i);
        }
    }
    let assignment = kmeans(&points, a.n_seqs, a.seed, 100).map_err(data_err)?;
    let score = silhouette(&points, &assignment.labels).map_err(data_err)?;
    ensure_out_dir(&a.out)?;
    write_json(
        &a.out.join("cluster.json"),
        &json!({
            "k": a.n_seqs,
            "variantsPerSequence": a.variants,
            "silhouette": score,
            "inertia": assignment.inertia,
        }),
    )?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "eval-cluster",
            "checkpoint": a.checkpoint,
            "input": a.input,
            "nSeqs": a.n_seqs,
            "variants": a.variants,
            "seed": a.seed,
        }),
    )?;
    println!("mean silhouette: {score:.6}");
    let _ = labels;
    Ok(())
}

fn cmd_eval_fbd(a: EvalFbdArgs) -> Result<(), CliError> {
    let real = encode_codon_corpus(&read_sequences(&a.real, false)?, true)?;
    let generated = encode_codon_corpus(&read_sequences(&a.generated, false)?, true)?;
    let state;
    let embedder: Box<dyn Embedder> = match a.embedder {
        EmbedderArg::Aa3mer => Box::new(KmerCountEmbedder { hashed: false }),
        EmbedderArg::Aa3merHashed => Box::new(KmerCountEmbedder { hashed: true }),
        EmbedderArg::Model => {
            let path = a
                .checkpoint
                .as_ref()
                .ok_or_else(|| config_err("--embedder model requires --checkpoint"))?;
            state = load_state(path)?;
            Box::new(ModelEmbedder { state: &state })
        }
    };
    let fbd = fbd_report(&real, &generated, embedder.as_ref()).map_err(data_err)?;
    ensure_out_dir(&a.out)?;
    write_json(
        &a.out.join("fbd.json"),
        &json!({"fbd": fbd, "embedder": embedder.name()}),
    )?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "eval-fbd",
            "real": a.real,
            "generated": a.generated,
            "embedder": embedder.name(),
            "checkpoint": a.checkpoint,
        }),
    )?;
    println!("fbd: {fbd:.6}");
    Ok(())
}

fn cmd_eval_confusion(a: EvalConfusionArgs) -> Result<(), CliError> {
    let state = load_state(&a.checkpoint)?;
    let records = read_sequences(&a.input, false)?;
    let corpus = encode_codon_corpus(&records, true)?;
    let report = synonym_confusion(&state, &corpus, a.seed).map_err(data_err)?;
    ensure_out_dir(&a.out)?;
    write_json(&a.out.join("confusion.json"), &report)?;
    let label = format!(
        "{:?}-{:?}",
        state.config.loss, state.config.objective
    )
    .to_lowercase();
    report
        .write_wheel_csv(&a.out.join("wheel.csv"), &label)
        .map_err(|e| data_err(e.to_string()))?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "eval-confusion",
            "checkpoint": a.checkpoint,
            "input": a.input,
            "seed": a.seed,
        }),
    )?;
    println!(
        "synMassOnError: {:.6} ({} errors / {} supervised)",
        report.syn_mass_on_error, report.error_positions, report.supervised_positions
    );
    Ok(())
}

fn cmd_probe(a: ProbeArgs) -> Result<(), CliError> {
    let state = load_state(&a.checkpoint)?;
    let records = read_sequences(&a.input, false)?;
    let labeled: Vec<&CorpusRecord> = records.iter().filter(|r| r.label.is_some()).collect();
    if labeled.len() < records.len() {
        return Err(data_err(format!(
            "{} of {} records lack a numeric label",
            records.len() - labeled.len(),
            records.len()
        )));
    }
    let corpus = encode_codon_corpus(&records, true)?;
    let mut features = Vec::with_capacity(corpus.len());
    let mut labels = Vec::with_capacity(corpus.len());
    for (seq, rec) in corpus.iter().zip(&records) {
        let mut ids = seq.ids.clone();
        ids.truncate(state.config.context_length);
        features.push(state.hidden_states(&ids).map_err(model_err)?);
        labels.push(rec.label.unwrap());
    }
    let cfg = ProbeConfig {
        seed: a.seed,
        epochs: a.epochs,
        ..ProbeConfig::default()
    };
    let (_, rho) = train_probe(&features, &labels, &cfg).map_err(data_err)?;
    ensure_out_dir(&a.out)?;
    write_json(
        &a.out.join("probe.json"),
        &json!({"validationSpearman": rho, "items": labels.len()}),
    )?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "probe",
            "checkpoint": a.checkpoint,
            "input": a.input,
            "seed": a.seed,
            "epochs": a.epochs,
        }),
    )?;
    println!("validation Spearman: {rho:.6}");
    Ok(())
}

fn cmd_grad_check(a: GradCheckArgs) -> Result<(), CliError> {
    if a.trials == 0 {
        return Err(config_err("--trials must be >= 1"));
    }
    if a.alpha < 0.0 {
        return Err(config_err("--alpha must be >= 0"));
    }
    let tree = build_standard_tree();
    let weights = LambdaWeights::for_tree(&tree, a.alpha).map_err(config_err)?;
    let kind = match a.kind {
        KindArg::Xe => LossKind::Xe,
        KindArg::Hxe => LossKind::Hxe,
    };
    let report = grad_check(kind, &tree, &weights, a.trials, a.seed);
    let value = serde_json::to_value(&report).map_err(data_err)?;
    println!("{value}");
    if let Some(out) = &a.out {
        ensure_out_dir(out)?;
        write_json(&out.join("grad_check.json"), &value)?;
        write_resolved_config(
            out,
            json!({
                "subcommand": "grad-check",
                "kind": format!("{kind:?}").to_lowercase(),
                "alpha": a.alpha,
                "trials": a.trials,
                "seed": a.seed,
            }),
        )?;
    }
    if report.max_rel_err >= GRAD_CHECK_TOLERANCE {
        return Err(numeric_err(format!(
            "maxRelErr {} exceeds tolerance {GRAD_CHECK_TOLERANCE}",
            report.max_rel_err
        )));
    }
    Ok(())
}

fn cmd_curate(a: CurateArgs) -> Result<(), CliError> {
    let columns: ColumnMap = match &a.columns {
        None => ColumnMap::default(),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| config_err(format!("{}: {e}", path.display())))?
        }
    };
    let file = fs::File::open(&a.input)
        .map_err(|e| data_err(format!("{}: {e}", a.input.display())))?;
    let (records, skipped) =
        parse_records(BufReader::new(file), &columns, a.strict).map_err(data_err)?;
    let (out_records, mut stats) =
        curate(records, &FilterRules::default(), a.threshold, a.seed).map_err(|e| match e {
            crate::curation::CurationError::BadParameter(_) => config_err(e),
            other => data_err(other),
        })?;
    stats.malformed_skipped = skipped;
    ensure_out_dir(&a.out)?;
    let corpus: Vec<CorpusRecord> = out_records
        .iter()
        .enumerate()
        .map(|(i, r)| CorpusRecord {
            id: format!("curated-{i}"),
            sequence: r.sequence.clone(),
            label: None,
        })
        .collect();
    write_jsonl_corpus(&a.out.join("corpus.jsonl"), &corpus).map_err(data_err)?;
    write_json(&a.out.join("stats.json"), &stats)?;
    let mut csv = String::from("rule,rejections\n");
    for (rule, count) in &stats.rejections_per_rule {
        csv.push_str(&format!("{rule},{count}\n"));
    }
    fs::write(a.out.join("rejections.csv"), csv).map_err(data_err)?;
    write_resolved_config(
        &a.out,
        json!({
            "subcommand": "curate",
            "input": a.input,
            "threshold": a.threshold,
            "seed": a.seed,
            "strict": a.strict,
            "columns": a.columns,
        }),
    )?;
    println!(
        "curated {} -> {} records ({} skipped as malformed)",
        stats.input_records, stats.output_records, skipped
    );
    Ok(())
}
