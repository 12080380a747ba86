//! Command-line driver: `train`, `eval`, `roofline` and `inspect`.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 capacity error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use gflda::corpus::load_uci_bow;
use gflda::engine::{self, Mode, TrainConfig};
use gflda::eval::{self, RooflineStep, StepKind};
use gflda::model::{check_conservation, PhiWidth, Snapshot};
use gflda::real::Precision;
use gflda::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_CAPACITY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "gflda", version, about = "Sparsity-aware parallel Gibbs sampling for LDA")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a topic model and write a snapshot and a metrics CSV.
    Train(Box<TrainArgs>),
    /// Evaluate a snapshot against a corpus.
    Eval(EvalArgs),
    /// Print the arithmetic intensity of each sampling step.
    Roofline(RooflineArgs),
    /// Describe a snapshot file.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// UCI bag-of-words docword file.
    #[arg(long)]
    pub docword: PathBuf,
    /// Vocabulary file, one word per line.
    #[arg(long)]
    pub vocab: PathBuf,
    /// Number of topics K (below 65536).
    #[arg(long)]
    pub topics: usize,
    /// Number of sampling iterations.
    #[arg(long)]
    pub iters: usize,
    /// Worker threads G.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
    /// Chunks per worker M, or "auto" to derive it from --memory-budget (1 without a budget).
    #[arg(long, default_value = "auto", value_parser = parse_auto)]
    pub chunks_per_worker: Auto,
    /// Document-topic prior [default: 50/K].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Topic-word prior.
    #[arg(long, default_value_t = 0.01)]
    pub beta: f64,
    /// Seed for every random stream.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Count update mode: deferred or exact (exact needs --workers 1).
    #[arg(long, default_value = "deferred")]
    pub mode: String,
    /// Fan-out of the partial-sum trees.
    #[arg(long, default_value_t = 32)]
    pub fanout: usize,
    /// Bits per topic-word count: 16 or 32.
    #[arg(long, default_value_t = 32)]
    pub phi_width: u64,
    /// Memory budget in bytes per worker; drives the automatic chunks-per-worker choice.
    #[arg(long)]
    pub memory_budget: Option<u64>,
    /// Floating-point precision of the sampler: 32 or 64.
    #[arg(long, default_value = "32")]
    pub precision: String,
    /// Token sampler: sparse or dense.
    #[arg(long, default_value = "sparse")]
    pub sampler: String,
    /// Snapshot output path.
    #[arg(long, default_value = "model.snap")]
    pub snapshot: PathBuf,
    /// Metrics CSV output path.
    #[arg(long, default_value = "metrics.csv")]
    pub metrics: PathBuf,
    /// Evaluate the log-likelihood every N iterations (0 disables).
    #[arg(long, default_value_t = 1)]
    pub eval_every: usize,
    /// Directory for streamed chunks when M > 1 [default: a temporary directory].
    #[arg(long)]
    pub chunk_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Snapshot written by `train`.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// UCI bag-of-words docword file.
    #[arg(long)]
    pub docword: PathBuf,
    /// Vocabulary file.
    #[arg(long)]
    pub vocab: PathBuf,
}

#[derive(Debug, Args)]
pub struct RooflineArgs {
    /// Bytes per integer.
    #[arg(long, default_value_t = 4.0)]
    pub int_width: f64,
    /// Bytes per float.
    #[arg(long, default_value_t = 4.0)]
    pub float_width: f64,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    /// Snapshot file.
    #[arg(long)]
    pub snapshot: PathBuf,
    /// Vocabulary file; when given, the top words of each topic are listed.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Words listed per topic.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

/// A count or `auto`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Auto(pub Option<usize>);

fn parse_auto(s: &str) -> Result<Auto, String> {
    if s == "auto" {
        return Ok(Auto(None));
    }
    s.parse::<usize>()
        .map(|m| Auto(Some(m)))
        .map_err(|_| format!("expected a positive integer or \"auto\", got {s:?}"))
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config(_) => EXIT_USAGE,
            Error::Capacity(_) => EXIT_CAPACITY,
            _ => EXIT_DATA,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

/// Parses `args` (program name first) and runs the command, writing normal
/// output to `out` and diagnostics to `err`. Returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Roofline(a) => cmd_roofline(&a, out),
        Command::Inspect(a) => cmd_inspect(&a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run_with(args, &mut std::io::stdout().lock(), &mut std::io::stderr().lock())
}

fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

/// Builds the training configuration from flags, without touching data.
pub fn train_config(a: &TrainArgs) -> Result<TrainConfig, Failure> {
    let mut cfg = TrainConfig::new(a.topics, a.iters);
    cfg.alpha = a.alpha;
    cfg.beta = a.beta;
    cfg.workers = a.workers;
    cfg.chunks_per_worker = a.chunks_per_worker.0;
    cfg.seed = a.seed;
    cfg.mode = a.mode.parse::<Mode>()?;
    cfg.fanout = a.fanout;
    cfg.phi_width = PhiWidth::from_bits(a.phi_width).map_err(|e| Failure::usage(e.to_string()))?;
    cfg.memory_budget = a.memory_budget;
    cfg.precision = a.precision.parse::<Precision>().map_err(Failure::usage)?;
    cfg.sampler = a.sampler.clone();
    cfg.eval_every = a.eval_every;
    cfg.chunk_dir = a.chunk_dir.clone();
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_train(a: &TrainArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let cfg = train_config(a)?;
    let corpus = load_uci_bow(&a.docword, &a.vocab)?;
    let result = engine::train(&corpus, &cfg)?;

    let alpha = cfg.alpha();
    let final_loglik = eval::loglik_per_token(&result.theta, &result.phi, &corpus, alpha, cfg.beta)?;
    let metadata: Vec<(String, String)> = [
        ("docword", a.docword.display().to_string()),
        ("vocab", a.vocab.display().to_string()),
        ("topics", cfg.topics.to_string()),
        ("iters", cfg.iterations.to_string()),
        ("workers", cfg.workers.to_string()),
        ("chunks_per_worker", result.chunks_per_worker.to_string()),
        ("alpha", format!("{alpha:e}")),
        ("beta", format!("{:e}", cfg.beta)),
        ("seed", cfg.seed.to_string()),
        ("mode", cfg.mode.to_string()),
        ("fanout", cfg.fanout.to_string()),
        ("phi_width", cfg.phi_width.bits().to_string()),
        (
            "memory_budget",
            a.memory_budget.map_or("none".into(), |b| b.to_string()),
        ),
        ("precision", a.precision.clone()),
        ("sampler", cfg.sampler.clone()),
        ("eval_every", cfg.eval_every.to_string()),
        ("docs", corpus.num_docs().to_string()),
        ("vocab_size", corpus.vocab_size().to_string()),
        ("tokens", corpus.num_tokens().to_string()),
        ("loglik_per_token", format!("{final_loglik:.12}")),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let snapshot = Snapshot {
        theta: result.theta,
        phi: result.phi,
        metadata,
    };
    snapshot.write(&a.snapshot)?;

    let file = File::create(&a.metrics).map_err(|e| io_failure(&a.metrics, e))?;
    let mut csv = BufWriter::new(file);
    eval::write_metrics(&mut csv, &result.reports)
        .and_then(|()| csv.flush())
        .map_err(|e| io_failure(&a.metrics, e))?;

    let elapsed: f64 = result.reports.iter().map(|r| r.elapsed_sec).sum();
    let mean_tps = if elapsed > 0.0 {
        eval::tokens_per_sec(corpus.num_tokens(), result.reports.len(), elapsed)?
    } else {
        0.0
    };
    let _ = writeln!(
        out,
        "trained K={} on D={} V={} T={} with G={} M={} for {} iterations",
        cfg.topics,
        corpus.num_docs(),
        corpus.vocab_size(),
        corpus.num_tokens(),
        cfg.workers,
        result.chunks_per_worker,
        cfg.iterations
    );
    if let Some(init) = result.initial_loglik {
        let _ = writeln!(out, "initial loglik_per_token: {init:.12}");
    }
    let _ = writeln!(out, "final loglik_per_token: {final_loglik:.12}");
    let _ = writeln!(out, "mean tokens/sec: {mean_tps:.1}");
    let _ = writeln!(out, "snapshot: {}", a.snapshot.display());
    let _ = writeln!(out, "metrics: {}", a.metrics.display());
    Ok(())
}

fn metadata_f64(s: &Snapshot, key: &str) -> Result<f64, Failure> {
    s.metadata_value(key)
        .ok_or_else(|| Failure::data(format!("snapshot metadata lacks {key}")))?
        .parse()
        .map_err(|_| Failure::data(format!("snapshot metadata {key} is not a number")))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let snapshot = Snapshot::read(&a.snapshot)?;
    let corpus = load_uci_bow(&a.docword, &a.vocab)?;
    let (k, v, d) = (snapshot.phi.k(), snapshot.phi.v(), snapshot.theta.num_docs());
    if v != corpus.vocab_size() {
        return Err(Failure::data(format!(
            "vocabulary size mismatch: snapshot V={v}, corpus V={}",
            corpus.vocab_size()
        )));
    }
    if d != corpus.num_docs() {
        return Err(Failure::data(format!(
            "document count mismatch: snapshot D={d}, corpus D={}",
            corpus.num_docs()
        )));
    }
    if let Some(meta_k) = snapshot.metadata_value("topics") {
        if meta_k != k.to_string() {
            return Err(Failure::data(format!(
                "topic count mismatch: matrices K={k}, metadata K={meta_k}"
            )));
        }
    }
    let alpha = metadata_f64(&snapshot, "alpha")?;
    let beta = metadata_f64(&snapshot, "beta")?;
    let report = check_conservation(&snapshot.theta, &snapshot.phi, &corpus);
    let loglik = eval::loglik_per_token(&snapshot.theta, &snapshot.phi, &corpus, alpha, beta)?;
    let _ = writeln!(out, "K={k} V={v} D={d} T={}", corpus.num_tokens());
    let _ = writeln!(out, "loglik_per_token: {loglik:.12}");
    let _ = writeln!(out, "conservation: {report}");
    if !report.passed() {
        return Err(Failure::data("snapshot is inconsistent with the corpus"));
    }
    Ok(())
}

fn cmd_roofline(a: &RooflineArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let steps = StepKind::ALL
        .iter()
        .map(|&kind| RooflineStep::new(kind, a.int_width, a.float_width))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::usage(e.to_string()))?;
    let _ = writeln!(out, "{:<10} {:>6} {:>8}", "step", "2dp", "exact");
    for s in &steps {
        let r = eval::flops_per_byte(s);
        let _ = writeln!(out, "{:<10} {:>6} {:>8.4}", s.kind.name(), round2(r), r);
    }
    let weighted: Vec<_> = steps.iter().map(|&s| (s, 1.0 / steps.len() as f64)).collect();
    let mean = eval::mean_flops_per_byte(&weighted)?;
    let _ = writeln!(out, "{:<10} {:>6} {:>8.4}", "mean", round2(mean), mean);
    Ok(())
}

/// Two decimals, rounding halves away from zero.
pub fn round2(x: f64) -> String {
    format!("{:.2}", (x * 100.0).round() / 100.0)
}

fn cmd_inspect(a: &InspectArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let s = Snapshot::read(&a.snapshot)?;
    let (k, v) = (s.phi.k(), s.phi.v());
    let _ = writeln!(out, "K={k} V={v} D={} NNZ={}", s.theta.num_docs(), s.theta.nnz());
    let _ = writeln!(out, "phi_width={} tokens={}", s.phi.width().bits(), s.phi.total());
    for (key, value) in &s.metadata {
        let _ = writeln!(out, "{key}={value}");
    }
    let Some(vocab_path) = &a.vocab else { return Ok(()) };
    let words: Vec<String> = std::fs::read_to_string(vocab_path)
        .map_err(|e| io_failure(vocab_path, e))?
        .lines()
        .map(str::to_string)
        .collect();
    if words.len() != v {
        return Err(Failure::data(format!(
            "vocabulary size mismatch: snapshot V={v}, vocabulary file has {}",
            words.len()
        )));
    }
    for topic in 0..k {
        let mut ranked: Vec<(u32, usize)> = (0..v).map(|w| (s.phi.count(topic, w), w)).collect();
        ranked.sort_by(|x, y| y.0.cmp(&x.0).then(x.1.cmp(&y.1)));
        let top: Vec<&str> = ranked
            .iter()
            .take(a.top)
            .filter(|(c, _)| *c > 0)
            .map(|&(_, w)| words[w].as_str())
            .collect();
        let _ = writeln!(
            out,
            "topic {topic} ({} tokens): {}",
            s.phi.topic_totals()[topic],
            top.join(" ")
        );
    }
    Ok(())
}
