//! Batch CLI for the two-stage retrieval pipeline: index a corpus, run
//! first-stage retrieval (sparse or dense), train and apply kernel
//! rerankers, ensemble run files, and evaluate against qrels.
//!
//! Every command is a pure function of (inputs, config, seed): rerunning
//! it produces byte-identical outputs. Run files and binary artifacts get
//! a `.meta` provenance sidecar (tool version, config hash, seed); report
//! TSVs carry the same provenance as `#` comment lines.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use matchkit::dense::{build_dense, dense_retrieve, encode_avg, load_embeddings, DenseMetric};
use matchkit::eval::{evaluate, parse_qrels, write_report, MetricSpec, NdcgGain};
use matchkit::fewshot::{selective_train, synthesize_weak_pairs, write_selection_history,
    SelectiveConfig};
use matchkit::index::{build_index, load_index, save_index, FieldPolicy};
use matchkit::kernel::{
    load_model, load_pointwise_labels, load_triples, rerank, save_model, train, Embeddings,
    KernelBank, KnrmModel, ConvKnrmModel, LossConfig, Model, OptimizerConfig, TokenizedCollection,
    TrainSet, TrainingConfig, ValidationSet,
};
use matchkit::ltr::{
    assemble_features, coordinate_ascent, ensemble_score, ranknet_train, save_ranker,
    write_features_file, CandidatePolicy, CoordinateAscentConfig, RankNetConfig,
};
use matchkit::run::parse_run;
use matchkit::sparse::{batch_retrieve, SdmParams, SparseScorerConfig};
use matchkit::text::{load_corpus_vec, load_queries, CorpusFormat, TokenizerConfig};
use matchkit::{Error, Real, Result};

const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser)]
#[command(name = "matchkit", version, about = "Two-stage retrieval pipeline")]
struct Cli {
    /// Flat key=value config file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every randomized step.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Upper bound on worker threads (all commands currently run
    /// single-threaded; the cap is validated and recorded).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FieldPolicyArg {
    TitleAndBody,
    BodyOnly,
}

impl From<FieldPolicyArg> for FieldPolicy {
    fn from(value: FieldPolicyArg) -> Self {
        match value {
            FieldPolicyArg::TitleAndBody => FieldPolicy::TitleAndBody,
            FieldPolicyArg::BodyOnly => FieldPolicy::BodyOnly,
        }
    }
}

#[derive(Args)]
struct TokenizerArgs {
    /// Keep original letter case.
    #[arg(long)]
    no_lowercase: bool,
    /// Keep stopwords.
    #[arg(long)]
    keep_stopwords: bool,
    /// Skip Porter stemming.
    #[arg(long)]
    no_stem: bool,
}

impl TokenizerArgs {
    fn build(&self) -> TokenizerConfig {
        let mut config = TokenizerConfig::standard();
        config.lowercase = !self.no_lowercase;
        config.remove_stopwords = !self.keep_stopwords;
        config.stem = !self.no_stem;
        config
    }

    fn describe(&self) -> String {
        format!(
            "lowercase={} stopwords={} stem={}",
            !self.no_lowercase, !self.keep_stopwords, !self.no_stem
        )
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ScorerArg {
    Bm25,
    LmDirichlet,
    LmJm,
    Tfidf,
    Cosine,
    CoordinateMatch,
    BooleanAnd,
    BooleanOr,
    Sdm,
}

#[derive(Subcommand)]
enum Command {
    /// Build an inverted index from a corpus file.
    Index {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// tsv (doc_id<TAB>title<TAB>body) or jsonl ({id, title, contents}).
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long, value_enum, default_value_t = FieldPolicyArg::TitleAndBody)]
        field_policy: FieldPolicyArg,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// First-stage sparse retrieval over an index.
    Retrieve {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ScorerArg::Bm25)]
        scorer: ScorerArg,
        #[arg(long, default_value_t = 0.9)]
        k1: Real,
        #[arg(long, default_value_t = 0.4)]
        b: Real,
        #[arg(long, default_value_t = 2000.0)]
        mu: Real,
        #[arg(long, default_value_t = 0.4)]
        lambda: Real,
        #[arg(long, default_value_t = 8)]
        window: usize,
        /// Retrieval depth.
        #[arg(long, default_value_t = 100)]
        k: usize,
        /// Run tag; defaults to the scorer name.
        #[arg(long)]
        tag: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// First-stage dense retrieval with averaged word embeddings.
    DenseRetrieve {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long, default_value = "cosine")]
        metric: String,
        #[arg(long, value_enum, default_value_t = FieldPolicyArg::TitleAndBody)]
        field_policy: FieldPolicyArg,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a kernel reranker on labeled triples or pointwise labels.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// query_id<TAB>pos_doc_id<TAB>neg_doc_id pairs file.
        #[arg(long, conflicts_with = "pointwise")]
        triples: Option<PathBuf>,
        /// query_id<TAB>doc_id<TAB>label (0/1) file.
        #[arg(long)]
        pointwise: Option<PathBuf>,
        /// Validation first-stage run to rerank for early stopping.
        #[arg(long)]
        valid_run: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long, default_value = "knrm")]
        arch: String,
        #[arg(long, default_value_t = 3)]
        num_filters: usize,
        #[arg(long, default_value = "1,2,3")]
        ngram_sizes: String,
        #[arg(long, default_value_t = 1e-3)]
        lr: Real,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        #[arg(long, default_value_t = 5)]
        patience: usize,
        #[arg(long, default_value = "hinge")]
        loss: String,
        #[arg(long, default_value = "adam")]
        optimizer: String,
        /// Also update the word embeddings.
        #[arg(long)]
        train_embeddings: bool,
        #[arg(long, default_value_t = 100)]
        rerank_depth: usize,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
        #[arg(long, value_enum, default_value_t = FieldPolicyArg::TitleAndBody)]
        field_policy: FieldPolicyArg,
        #[arg(long)]
        model_out: PathBuf,
        /// Per-epoch loss/validation TSV.
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// Synthesize weak triples from titles and train under validation
    /// feedback (accept/reject with rollback).
    WeakTrain {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        valid_run: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        negatives: usize,
        #[arg(long, default_value_t = 10)]
        pool_depth: usize,
        #[arg(long, default_value_t = 0.2)]
        alpha: Real,
        #[arg(long, default_value_t = 1)]
        rounds: usize,
        #[arg(long, default_value_t = 0.1)]
        lr: Real,
        #[arg(long, default_value_t = 4)]
        batch_size: usize,
        #[arg(long, default_value_t = 100)]
        rerank_depth: usize,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
        #[arg(long, value_enum, default_value_t = FieldPolicyArg::BodyOnly)]
        field_policy: FieldPolicyArg,
        #[arg(long)]
        model_out: PathBuf,
        #[arg(long)]
        history_out: Option<PathBuf>,
    },
    /// Rescore the top of a first-stage run with a trained model.
    Rerank {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long, default_value = "tsv")]
        format: String,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        depth: usize,
        #[arg(long, default_value = "rerank")]
        tag: String,
        #[command(flatten)]
        tokenizer: TokenizerArgs,
        #[arg(long, value_enum, default_value_t = FieldPolicyArg::TitleAndBody)]
        field_policy: FieldPolicyArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Combine several run files with a trained linear ranker.
    Ensemble {
        /// Repeatable `name=path` run inputs (feature order follows flag
        /// order).
        #[arg(long = "run", required = true)]
        runs: Vec<String>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long, default_value = "coordinate-ascent")]
        method: String,
        #[arg(long, default_value = "union")]
        candidates: String,
        #[arg(long, default_value_t = 5)]
        restarts: usize,
        #[arg(long, default_value_t = 1e-3)]
        lr: Real,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long)]
        ranker_out: Option<PathBuf>,
        #[arg(long)]
        features_out: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a run file against qrels.
    Eval {
        #[arg(long)]
        run: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        /// Comma-separated metric names (ndcg_cut_K, map, recip_rank[_K], P_K).
        #[arg(long, default_value = "ndcg_cut_10,map,recip_rank_10,P_10")]
        metrics: String,
        /// NDCG gain: exponential (2^rel - 1) or linear (rel).
        #[arg(long, default_value = "exponential")]
        ndcg_gain: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flat key=value config file; `#` comments and blank lines ignored.
fn load_config(path: Option<&Path>) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let Some(path) = path else { return Ok(out) };
    let path_str = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(&path_str, e))?;
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(&path_str, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| {
            Error::parse(&path_str, idx + 1, "expected key=value")
        })?;
        out.insert(key.trim().to_string(), value.trim().to_string());
    }
    Ok(out)
}

struct Ctx {
    config: BTreeMap<String, String>,
    seed: u64,
    output_dir: Option<PathBuf>,
}

impl Ctx {
    /// Flag value if given, else config-file value, else error.
    fn path(&self, flag: &Option<PathBuf>, key: &str) -> Result<PathBuf> {
        if let Some(p) = flag {
            return Ok(p.clone());
        }
        if let Some(v) = self.config.get(key) {
            return Ok(PathBuf::from(v));
        }
        Err(Error::Config(format!(
            "missing input `{key}`: pass --{} or set `{key}` in the config file",
            key.replace('_', "-")
        )))
    }

    fn out_path(&self, path: &Path) -> PathBuf {
        match (&self.output_dir, path.is_relative()) {
            (Some(dir), true) => dir.join(path),
            _ => path.to_path_buf(),
        }
    }
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Hash of the semantically meaningful settings for one command.
fn config_hash(command: &str, settings: &[(&str, String)]) -> u64 {
    let mut canon = String::from(command);
    for (key, value) in settings {
        canon.push('\n');
        canon.push_str(key);
        canon.push('=');
        canon.push_str(value);
    }
    fnv1a64(canon.as_bytes())
}

fn write_sidecar(out: &Path, command: &str, hash: u64, seed: u64) -> Result<()> {
    let meta = out.with_extension(match out.extension() {
        Some(ext) => format!("{}.meta", ext.to_string_lossy()),
        None => "meta".to_string(),
    });
    let path_str = meta.display().to_string();
    let mut file = File::create(&meta).map_err(|e| Error::io(&path_str, e))?;
    write!(
        file,
        "tool_version={TOOL_VERSION}\ncommand={command}\nconfig_hash={hash:016x}\nseed={seed}\n"
    )
    .map_err(|e| Error::io(&path_str, e))?;
    Ok(())
}

fn corpus_format(name: &str) -> Result<CorpusFormat> {
    CorpusFormat::from_str(name)
}

fn parse_loss(name: &str) -> Result<LossConfig> {
    match name {
        "hinge" => Ok(LossConfig::PairwiseHinge { margin: 1.0 }),
        "bce" => Ok(LossConfig::PointwiseBce),
        other => Err(Error::Config(format!("unknown loss `{other}` (hinge|bce)"))),
    }
}

fn parse_optimizer(name: &str, lr: Real) -> Result<OptimizerConfig> {
    match name {
        "adam" => Ok(OptimizerConfig::adam(lr)),
        "sgd" => Ok(OptimizerConfig::Sgd { lr }),
        other => Err(Error::Config(format!("unknown optimizer `{other}` (adam|sgd)"))),
    }
}

fn init_model(
    arch: &str,
    embeddings_path: &Path,
    num_filters: usize,
    ngram_sizes: &str,
    seed: u64,
) -> Result<Model> {
    let store = load_embeddings::<Real>(embeddings_path)?;
    let embeddings = Embeddings::from_store(&store);
    match arch {
        "knrm" => Ok(Model::Knrm(KnrmModel::new(embeddings, KernelBank::standard()))),
        "convknrm" => {
            let sizes: Vec<usize> = ngram_sizes
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse()
                        .map_err(|_| Error::Config(format!("bad n-gram size `{s}`")))
                })
                .collect::<Result<_>>()?;
            let mut model =
                ConvKnrmModel::new(embeddings, KernelBank::standard(), sizes, num_filters)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            model.randomize_filters(&mut rng, 0.1);
            Ok(Model::ConvKnrm(model))
        }
        other => Err(Error::Config(format!("unknown arch `{other}` (knrm|convknrm)"))),
    }
}

fn run_command(cli: Cli) -> Result<()> {
    if cli.threads == 0 {
        return Err(Error::Config("--threads must be >= 1".into()));
    }
    let ctx = Ctx {
        config: load_config(cli.config.as_deref())?,
        seed: cli.seed,
        output_dir: cli.output_dir.clone(),
    };

    match cli.command {
        Command::Index { corpus, format, field_policy, tokenizer, out } => {
            let corpus = ctx.path(&corpus, "corpus")?;
            let docs = load_corpus_vec(&corpus, corpus_format(&format)?)?;
            let index = build_index(
                docs.into_iter().map(Ok),
                tokenizer.build(),
                field_policy.into(),
            )?;
            let out = ctx.out_path(&out);
            save_index(&index, &out)?;
            let hash = config_hash(
                "index",
                &[
                    ("corpus", corpus.display().to_string()),
                    ("format", format),
                    ("field_policy", (field_policy == FieldPolicyArg::BodyOnly).to_string()),
                    ("tokenizer", tokenizer.describe()),
                ],
            );
            write_sidecar(&out, "index", hash, ctx.seed)?;
            eprintln!("indexed {} documents -> {}", index.num_docs(), out.display());
        }

        Command::Retrieve {
            index, queries, scorer, k1, b, mu, lambda, window, k, tag, out,
        } => {
            let index_path = ctx.path(&index, "index")?;
            let queries_path = ctx.path(&queries, "queries")?;
            let index = load_index(&index_path)?;
            let queries = load_queries(&queries_path)?;
            let (config, name) = match scorer {
                ScorerArg::Bm25 => (SparseScorerConfig::Bm25 { k1, b }, "bm25"),
                ScorerArg::LmDirichlet => (SparseScorerConfig::LmDirichlet { mu }, "lm-dirichlet"),
                ScorerArg::LmJm => (SparseScorerConfig::LmJm { lambda }, "lm-jm"),
                ScorerArg::Tfidf => (SparseScorerConfig::TfIdf, "tfidf"),
                ScorerArg::Cosine => (SparseScorerConfig::Cosine, "cosine"),
                ScorerArg::CoordinateMatch => {
                    (SparseScorerConfig::CoordinateMatch, "coordinate-match")
                }
                ScorerArg::BooleanAnd => (SparseScorerConfig::BooleanAnd, "boolean-and"),
                ScorerArg::BooleanOr => (SparseScorerConfig::BooleanOr, "boolean-or"),
                ScorerArg::Sdm => (
                    SparseScorerConfig::Sdm(SdmParams {
                        window,
                        mu,
                        ..SdmParams::default()
                    }),
                    "sdm",
                ),
            };
            let tag = tag.unwrap_or_else(|| name.to_string());
            let run = batch_retrieve(&queries, &index, &config, k, &tag)?;
            let out = ctx.out_path(&out);
            run.write_file(&out)?;
            let hash = config_hash(
                "retrieve",
                &[
                    ("index", index_path.display().to_string()),
                    ("queries", queries_path.display().to_string()),
                    ("scorer", format!("{name} k1={k1} b={b} mu={mu} lambda={lambda} window={window}")),
                    ("k", k.to_string()),
                    ("tag", tag.clone()),
                ],
            );
            write_sidecar(&out, "retrieve", hash, ctx.seed)?;
            eprintln!("retrieved {} queries -> {}", run.lists.len(), out.display());
        }

        Command::DenseRetrieve {
            corpus, format, queries, embeddings, metric, field_policy, tokenizer, k, out,
        } => {
            let corpus_path = ctx.path(&corpus, "corpus")?;
            let queries_path = ctx.path(&queries, "queries")?;
            let embeddings_path = ctx.path(&embeddings, "embeddings")?;
            let docs = load_corpus_vec(&corpus_path, corpus_format(&format)?)?;
            let queries = load_queries(&queries_path)?;
            let store = load_embeddings::<Real>(&embeddings_path)?;
            let dense_metric = match metric.as_str() {
                "cosine" => DenseMetric::Cosine,
                "dot" => DenseMetric::Dot,
                other => {
                    return Err(Error::Config(format!("unknown metric `{other}` (cosine|dot)")))
                }
            };
            let tok = tokenizer.build();
            let matrix = build_dense(&docs, &store, &tok, field_policy.into(), dense_metric);
            let mut run = matchkit::run::TrecRun::new(format!("dense-{metric}"));
            for query in &queries {
                let tokens = matchkit::text::tokenize(&query.text, &tok);
                let vector = encode_avg(&tokens, &store);
                run.lists.push(dense_retrieve(&query.query_id, &vector, &matrix, k)?);
            }
            let out = ctx.out_path(&out);
            run.write_file(&out)?;
            let hash = config_hash(
                "dense-retrieve",
                &[
                    ("corpus", corpus_path.display().to_string()),
                    ("queries", queries_path.display().to_string()),
                    ("embeddings", embeddings_path.display().to_string()),
                    ("metric", metric),
                    ("field_policy", (field_policy == FieldPolicyArg::BodyOnly).to_string()),
                    ("tokenizer", tokenizer.describe()),
                    ("k", k.to_string()),
                ],
            );
            write_sidecar(&out, "dense-retrieve", hash, ctx.seed)?;
            eprintln!("retrieved {} queries -> {}", run.lists.len(), out.display());
        }

        Command::Train {
            corpus, format, queries, embeddings, triples, pointwise, valid_run, qrels, arch,
            num_filters, ngram_sizes, lr, epochs, batch_size, patience, loss, optimizer,
            train_embeddings, rerank_depth, tokenizer, field_policy, model_out, history_out,
        } => {
            let corpus_path = ctx.path(&corpus, "corpus")?;
            let queries_path = ctx.path(&queries, "queries")?;
            let embeddings_path = ctx.path(&embeddings, "embeddings")?;
            let valid_run_path = ctx.path(&valid_run, "valid_run")?;
            let qrels_path = ctx.path(&qrels, "qrels")?;

            let docs = load_corpus_vec(&corpus_path, corpus_format(&format)?)?;
            let query_list = load_queries(&queries_path)?;
            let tok = tokenizer.build();
            let collection =
                TokenizedCollection::build(&docs, &query_list, &tok, field_policy.into());

            let train_data = match (&triples, &pointwise) {
                (Some(path), None) => TrainSet::Pairwise(load_triples(path, &collection)?),
                (None, Some(path)) => {
                    TrainSet::Pointwise(load_pointwise_labels(path, &collection)?)
                }
                _ => {
                    return Err(Error::Config(
                        "pass exactly one of --triples or --pointwise".into(),
                    ))
                }
            };

            let mut model =
                init_model(&arch, &embeddings_path, num_filters, &ngram_sizes, ctx.seed)?;
            let valid = ValidationSet {
                collection: collection.clone(),
                run: parse_run(&valid_run_path)?,
                depth: rerank_depth,
            };
            let qrels = parse_qrels(&qrels_path)?;
            let mut config = TrainingConfig {
                loss: parse_loss(&loss)?,
                optimizer: parse_optimizer(&optimizer, lr)?,
                batch_size,
                epochs,
                seed: ctx.seed,
                patience,
                ..TrainingConfig::default()
            };
            config.trainable.embeddings = train_embeddings;
            let history = train(&mut model, &train_data, &valid, &qrels, &config)?;

            let model_out = ctx.out_path(&model_out);
            save_model(&model, &model_out)?;
            let hash = config_hash(
                "train",
                &[
                    ("corpus", corpus_path.display().to_string()),
                    ("queries", queries_path.display().to_string()),
                    ("embeddings", embeddings_path.display().to_string()),
                    ("arch", arch.clone()),
                    ("loss", loss.clone()),
                    ("optimizer", format!("{optimizer} lr={lr}")),
                    ("epochs", epochs.to_string()),
                    ("batch_size", batch_size.to_string()),
                    ("patience", patience.to_string()),
                    ("train_embeddings", train_embeddings.to_string()),
                    ("rerank_depth", rerank_depth.to_string()),
                    ("tokenizer", tokenizer.describe()),
                ],
            );
            write_sidecar(&model_out, "train", hash, ctx.seed)?;
            if let Some(history_out) = history_out {
                let history_out = ctx.out_path(&history_out);
                let path_str = history_out.display().to_string();
                let mut file =
                    File::create(&history_out).map_err(|e| Error::io(&path_str, e))?;
                writeln!(file, "# tool_version={TOOL_VERSION} config_hash={hash:016x} seed={}", ctx.seed)
                    .map_err(|e| Error::io(&path_str, e))?;
                writeln!(file, "epoch\tmean_loss\tvalid_ndcg10")
                    .map_err(|e| Error::io(&path_str, e))?;
                for epoch in &history.epochs {
                    writeln!(
                        file,
                        "{}\t{:.6}\t{:.6}",
                        epoch.epoch, epoch.mean_loss, epoch.valid_ndcg10
                    )
                    .map_err(|e| Error::io(&path_str, e))?;
                }
            }
            eprintln!(
                "trained {arch}: best epoch {} valid ndcg@10 {:.4} -> {}",
                history.best_epoch,
                history.best_valid_ndcg10,
                model_out.display()
            );
        }

        Command::WeakTrain {
            corpus, format, queries, embeddings, valid_run, qrels, negatives, pool_depth, alpha,
            rounds, lr, batch_size, rerank_depth, tokenizer, field_policy, model_out, history_out,
        } => {
            let corpus_path = ctx.path(&corpus, "corpus")?;
            let queries_path = ctx.path(&queries, "queries")?;
            let embeddings_path = ctx.path(&embeddings, "embeddings")?;
            let valid_run_path = ctx.path(&valid_run, "valid_run")?;
            let qrels_path = ctx.path(&qrels, "qrels")?;

            let docs = load_corpus_vec(&corpus_path, corpus_format(&format)?)?;
            let query_list = load_queries(&queries_path)?;
            let tok = tokenizer.build();
            // weak synthesis retrieves titles against document bodies
            let index =
                build_index(docs.iter().cloned().map(Ok), tok.clone(), FieldPolicy::BodyOnly)?;
            let mut weak =
                synthesize_weak_pairs(&docs, &index, negatives, pool_depth, ctx.seed)?;

            let collection =
                TokenizedCollection::build(&docs, &query_list, &tok, field_policy.into());
            let valid = ValidationSet {
                collection: collection.clone(),
                run: parse_run(&valid_run_path)?,
                depth: rerank_depth,
            };
            let qrels = parse_qrels(&qrels_path)?;
            let mut model =
                init_model("knrm", &embeddings_path, 0, "", ctx.seed)?;
            let mut config = SelectiveConfig {
                alpha,
                rounds,
                ..SelectiveConfig::default()
            };
            config.training.seed = ctx.seed;
            config.training.batch_size = batch_size;
            config.training.optimizer = OptimizerConfig::Sgd { lr };
            let history =
                selective_train(&mut model, &mut weak, &collection, &valid, &qrels, &config)?;

            let model_out = ctx.out_path(&model_out);
            save_model(&model, &model_out)?;
            let hash = config_hash(
                "weak-train",
                &[
                    ("corpus", corpus_path.display().to_string()),
                    ("queries", queries_path.display().to_string()),
                    ("embeddings", embeddings_path.display().to_string()),
                    ("negatives", negatives.to_string()),
                    ("pool_depth", pool_depth.to_string()),
                    ("alpha", alpha.to_string()),
                    ("rounds", rounds.to_string()),
                    ("lr", lr.to_string()),
                    ("batch_size", batch_size.to_string()),
                    ("rerank_depth", rerank_depth.to_string()),
                    ("tokenizer", tokenizer.describe()),
                ],
            );
            write_sidecar(&model_out, "weak-train", hash, ctx.seed)?;
            if let Some(history_out) = history_out {
                let history_out = ctx.out_path(&history_out);
                let path_str = history_out.display().to_string();
                let file = File::create(&history_out).map_err(|e| Error::io(&path_str, e))?;
                write_selection_history(&history, file)?;
            }
            let kept = history.iter().filter(|r| r.kept).count();
            eprintln!(
                "weak-trained on {} triples: kept {kept}/{} steps -> {}",
                weak.len(),
                history.len(),
                model_out.display()
            );
        }

        Command::Rerank {
            model, run, corpus, format, queries, depth, tag, tokenizer, field_policy, out,
        } => {
            let model_path = ctx.path(&model, "model")?;
            let run_path = ctx.path(&run, "run")?;
            let corpus_path = ctx.path(&corpus, "corpus")?;
            let queries_path = ctx.path(&queries, "queries")?;
            let model = load_model(&model_path)?;
            let first_stage = parse_run(&run_path)?;
            let docs = load_corpus_vec(&corpus_path, corpus_format(&format)?)?;
            let query_list = load_queries(&queries_path)?;
            let collection = TokenizedCollection::build(
                &docs,
                &query_list,
                &tokenizer.build(),
                field_policy.into(),
            );
            let reranked = rerank(&model, &first_stage, &collection, depth, &tag)?;
            let out = ctx.out_path(&out);
            reranked.write_file(&out)?;
            let hash = config_hash(
                "rerank",
                &[
                    ("model", model_path.display().to_string()),
                    ("run", run_path.display().to_string()),
                    ("corpus", corpus_path.display().to_string()),
                    ("queries", queries_path.display().to_string()),
                    ("depth", depth.to_string()),
                    ("tag", tag.clone()),
                    ("tokenizer", tokenizer.describe()),
                ],
            );
            write_sidecar(&out, "rerank", hash, ctx.seed)?;
            eprintln!("reranked {} queries -> {}", reranked.lists.len(), out.display());
        }

        Command::Ensemble {
            runs, qrels, method, candidates, restarts, lr, epochs, ranker_out, features_out, out,
        } => {
            let qrels_path = ctx.path(&qrels, "qrels")?;
            let mut named = Vec::new();
            for spec in &runs {
                let (name, path) = spec.split_once('=').ok_or_else(|| {
                    Error::Config(format!("bad --run `{spec}`: expected name=path"))
                })?;
                named.push((name.to_string(), parse_run(path)?));
            }
            let named_refs: Vec<(String, &matchkit::run::TrecRun)> =
                named.iter().map(|(n, r)| (n.clone(), r)).collect();
            let policy = match candidates.as_str() {
                "union" => CandidatePolicy::Union,
                "intersection" => CandidatePolicy::Intersection,
                other => {
                    return Err(Error::Config(format!(
                        "unknown candidate policy `{other}` (union|intersection)"
                    )))
                }
            };
            let features = assemble_features(&named_refs, policy)?;
            let qrels = parse_qrels(&qrels_path)?;
            let ranker = match method.as_str() {
                "coordinate-ascent" => {
                    let config = CoordinateAscentConfig {
                        restarts,
                        seed: ctx.seed,
                        ..CoordinateAscentConfig::default()
                    };
                    coordinate_ascent(&features, &qrels, &config)?.0
                }
                "ranknet" => {
                    let config = RankNetConfig {
                        lr,
                        epochs,
                        seed: ctx.seed,
                    };
                    ranknet_train(&features, &qrels, &config)?.0
                }
                other => {
                    return Err(Error::Config(format!(
                        "unknown method `{other}` (coordinate-ascent|ranknet)"
                    )))
                }
            };
            let run = ensemble_score(&ranker, &features)?;
            let out = ctx.out_path(&out);
            run.write_file(&out)?;
            let hash = config_hash(
                "ensemble",
                &[
                    ("runs", runs.join(",")),
                    ("qrels", qrels_path.display().to_string()),
                    ("method", method.clone()),
                    ("candidates", candidates.clone()),
                    ("restarts", restarts.to_string()),
                    ("lr", lr.to_string()),
                    ("epochs", epochs.to_string()),
                ],
            );
            write_sidecar(&out, "ensemble", hash, ctx.seed)?;
            if let Some(ranker_out) = ranker_out {
                let ranker_out = ctx.out_path(&ranker_out);
                save_ranker(&ranker, &ranker_out)?;
                write_sidecar(&ranker_out, "ensemble", hash, ctx.seed)?;
            }
            if let Some(features_out) = features_out {
                write_features_file(&features, ctx.out_path(&features_out))?;
            }
            eprintln!(
                "ensembled {} runs with {method}: weights {:?} -> {}",
                named.len(),
                ranker.weights,
                out.display()
            );
        }

        Command::Eval { run, qrels, metrics, ndcg_gain, out } => {
            let run_path = ctx.path(&run, "run")?;
            let qrels_path = ctx.path(&qrels, "qrels")?;
            let gain = match ndcg_gain.as_str() {
                "exponential" => NdcgGain::Exponential,
                "linear" => NdcgGain::Linear,
                other => {
                    return Err(Error::Config(format!(
                        "unknown ndcg gain `{other}` (exponential|linear)"
                    )))
                }
            };
            let specs: Vec<MetricSpec> = metrics
                .split(',')
                .map(|name| {
                    let mut spec = MetricSpec::parse(name.trim())?;
                    if let MetricSpec::Ndcg { gain: g, .. } = &mut spec {
                        *g = gain;
                    }
                    Ok(spec)
                })
                .collect::<Result<_>>()?;
            let run = parse_run(&run_path)?;
            let qrels = parse_qrels(&qrels_path)?;
            let reports = evaluate(&run, &qrels, &specs)?;
            let hash = config_hash(
                "eval",
                &[
                    ("run", run_path.display().to_string()),
                    ("qrels", qrels_path.display().to_string()),
                    ("metrics", metrics.clone()),
                    ("ndcg_gain", ndcg_gain.clone()),
                ],
            );
            let header = format!(
                "# tool_version={TOOL_VERSION} config_hash={hash:016x} seed={}\n",
                ctx.seed
            );
            match out {
                Some(out) => {
                    let out = ctx.out_path(&out);
                    let path_str = out.display().to_string();
                    let mut file = File::create(&out).map_err(|e| Error::io(&path_str, e))?;
                    file.write_all(header.as_bytes())
                        .map_err(|e| Error::io(&path_str, e))?;
                    write_report(&reports, file).map_err(|e| Error::io(&path_str, e))?;
                }
                None => {
                    let stdout = std::io::stdout();
                    let mut lock = stdout.lock();
                    lock.write_all(header.as_bytes())
                        .map_err(|e| Error::io("<stdout>", e))?;
                    write_report(&reports, lock).map_err(|e| Error::io("<stdout>", e))?;
                }
            }
        }
    }
    Ok(())
}

/// Exit codes by error category: 2 config/usage, 3 I/O, 4 format/version,
/// 5 data/validation.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidParam(_) => 2,
        Error::Io { .. } => 3,
        Error::Parse { .. }
        | Error::Json(_)
        | Error::IndexVersion { .. }
        | Error::IndexCorrupt(_)
        | Error::IndexChecksum
        | Error::ModelVersion { .. } => 4,
        _ => 5,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run_command(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
