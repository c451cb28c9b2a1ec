//! Command-line front end: `train`, `predict`, `eval` and `serve`.
//!
//! Every flag can also be set through an environment variable named
//! `NERFORGE_` followed by the flag name in upper case, for example
//! `NERFORGE_MODEL` or `NERFORGE_PORT`.

use std::fs;
use std::io::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use nerforge::corpus::EntitySpan;
use nerforge::eval::{score_flat, score_nested};
use nerforge::model::ModelBundle;
use nerforge::trainer::train_with;

use crate::api::{recognize, InputFormat, OutputFormat, RecognizeRequest, Recognized};
use crate::config::{read_documents, Columns, CorpusFormat, ServeFile, TrainFile};
use crate::server::{router, serve, ServerConfig, DEFAULT_MAX_BODY_BYTES};
use crate::store::ModelStore;

#[derive(Debug, Parser)]
#[command(name = "nerforge", version, about = "Flat and nested named entity recognition")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file (TOML).
    #[arg(long, global = true, env = "NERFORGE_CONFIG")]
    pub config: Option<PathBuf>,
    /// Model checkpoint; `serve` accepts several.
    #[arg(long, global = true, env = "NERFORGE_MODEL", value_delimiter = ',')]
    pub model: Vec<PathBuf>,
    /// Seed for initialization and batch sampling. Inference is
    /// deterministic and ignores it.
    #[arg(long, global = true, env = "NERFORGE_SEED")]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a configuration file.
    Train(TrainArgs),
    /// Annotate a file with a trained model.
    Predict(PredictArgs),
    /// Score predictions against gold annotations.
    Eval(EvalArgs),
    /// Serve models over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Where to write the best checkpoint.
    #[arg(long, env = "NERFORGE_OUT")]
    pub out: PathBuf,
    /// Per-epoch history as JSON lines.
    #[arg(long, env = "NERFORGE_HISTORY")]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Input file.
    pub path: PathBuf,
    #[arg(long, env = "NERFORGE_TAGSET")]
    pub tagset: Option<String>,
    #[arg(long, value_enum, default_value_t = InputFormat::Plain, env = "NERFORGE_INPUT")]
    pub input: InputFormat,
    #[arg(long, value_enum, default_value_t = OutputFormat::Conll, env = "NERFORGE_OUTPUT")]
    pub output: OutputFormat,
    /// Output file; standard output when absent.
    #[arg(long, env = "NERFORGE_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    /// Read both files in the nested format.
    #[arg(long)]
    pub nested: bool,
    /// Column order of flat files.
    #[arg(long, value_enum, default_value_t = ColumnsArg::TokenLabel)]
    pub columns: ColumnsArg,
    /// Corpus name used in the report.
    #[arg(long, default_value = "eval")]
    pub corpus: String,
    /// Also write the report as JSON lines.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ColumnsArg {
    TokenLabel,
    LabelToken,
}

impl From<ColumnsArg> for Columns {
    fn from(c: ColumnsArg) -> Self {
        match c {
            ColumnsArg::TokenLabel => Columns::TokenLabel,
            ColumnsArg::LabelToken => Columns::LabelToken,
        }
    }
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "NERFORGE_HOST")]
    pub host: Option<String>,
    #[arg(long, env = "NERFORGE_PORT")]
    pub port: Option<u16>,
    /// Request size limit in bytes.
    #[arg(long, env = "NERFORGE_MAX_BODY_BYTES")]
    pub max_body_bytes: Option<usize>,
    /// Directory with a built web client to serve at `/`.
    #[arg(long, env = "NERFORGE_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(args) => train(&cli.global, args),
        Command::Predict(args) => predict(&cli.global, args),
        Command::Eval(args) => eval(args),
        Command::Serve(args) => serve_command(&cli.global, args),
    }
}

fn train(global: &GlobalArgs, args: TrainArgs) -> anyhow::Result<()> {
    let path = global.config.as_deref().ok_or_else(|| anyhow!("train needs --config"))?;
    let (file, base) = TrainFile::load(path)?;
    let mut config = file.train.clone();
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let model = file.build_model(&base, global.seed)?;
    let (train_corpora, dev_corpora) = file.corpora(&base)?;
    let outcome = train_with(&config, model, &train_corpora, &dev_corpora, |e| {
        tracing::info!(epoch = e.epoch, frozen = e.frozen, loss = e.loss, macro_f1 = e.macro_f1, "epoch done");
    })?;
    outcome.best.save(&args.out)?;
    if let Some(history) = &args.history {
        fs::write(history, outcome.history.to_jsonl()).with_context(|| format!("writing {}", history.display()))?;
    }
    let best = &outcome.history.epochs[outcome.best_epoch - 1];
    println!(
        "best epoch {} macro F1 {:.4}, saved {}",
        outcome.best_epoch,
        best.macro_f1,
        args.out.display()
    );
    Ok(())
}

fn single_model(global: &GlobalArgs) -> anyhow::Result<&Path> {
    match global.model.as_slice() {
        [one] => Ok(one),
        [] => bail!("--model is required"),
        _ => bail!("exactly one --model is expected"),
    }
}

fn predict(global: &GlobalArgs, args: PredictArgs) -> anyhow::Result<()> {
    let model = ModelBundle::load(single_model(global)?)?;
    let data = fs::read_to_string(&args.path).with_context(|| format!("reading {}", args.path.display()))?;
    let request = RecognizeRequest {
        data,
        model: model.name.clone(),
        tagset: args.tagset,
        input: args.input,
        output: args.output,
    };
    let text = match recognize(&model, &request)? {
        Recognized::Json(response) => serde_json::to_string_pretty(&response)? + "\n",
        Recognized::Text(text) => text,
    };
    match &args.out {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn sentence_spans(path: &Path, nested: bool, columns: Columns) -> anyhow::Result<(Vec<Vec<String>>, Vec<Vec<EntitySpan>>)> {
    let format = if nested { CorpusFormat::Nested } else { CorpusFormat::Conll };
    let docs = read_documents(path, format, columns)?;
    let sentences: Vec<_> = docs.iter().flat_map(|d| &d.sentences).collect();
    let tokens = sentences
        .iter()
        .map(|s| s.words().into_iter().map(str::to_string).collect())
        .collect();
    let spans = sentences
        .iter()
        .map(|s| if nested { s.nested_spans.clone() } else { s.flat_spans.clone() })
        .collect();
    Ok((tokens, spans))
}

fn eval(args: EvalArgs) -> anyhow::Result<()> {
    let columns = Columns::from(args.columns);
    let (gold_tokens, gold) = sentence_spans(&args.gold, args.nested, columns)?;
    let (pred_tokens, pred) = sentence_spans(&args.pred, args.nested, columns)?;
    if gold_tokens != pred_tokens {
        bail!(
            "gold and prediction files are not aligned ({} vs {} sentences, or differing tokens)",
            gold_tokens.len(),
            pred_tokens.len()
        );
    }
    let report = if args.nested {
        score_nested(&gold, &pred)?
    } else {
        score_flat(&gold, &pred)?
    };
    print!("{}", report.table(&args.corpus));
    if let Some(path) = &args.jsonl {
        fs::write(path, report.to_jsonl(&args.corpus)).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn serve_command(global: &GlobalArgs, args: ServeArgs) -> anyhow::Result<()> {
    let file = match &global.config {
        Some(path) => ServeFile::load(path)?,
        None => ServeFile::default(),
    };
    let models = if global.model.is_empty() { file.models } else { global.model.clone() };
    let host = args.host.or(file.host).unwrap_or_else(|| "127.0.0.1".to_string());
    let port = args.port.or(file.port).unwrap_or(8000);
    let mut server = ServerConfig {
        max_body_bytes: args.max_body_bytes.or(file.max_body_bytes).unwrap_or(DEFAULT_MAX_BODY_BYTES),
        ..ServerConfig::default()
    };
    if let Some(dir) = args.static_dir.or(file.static_dir) {
        server = server
            .with_static_dir(&dir)
            .with_context(|| format!("reading index.html from {}", dir.display()))?;
    }
    let store = Arc::new(ModelStore::open(models)?);
    for info in store.snapshot().listing() {
        tracing::info!(name = %info.name, kind = %info.kind, tagsets = ?info.tagsets, "model loaded");
    }
    let addr: SocketAddr = format!("{host}:{port}").parse().with_context(|| format!("bad address {host}:{port}"))?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr).await?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        serve(listener, router(store, server)).await?;
        anyhow::Ok(())
    })
}
