use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use msl_cli::eval::{evaluate, EvalOptions};
use msl_cli::infer::{format_text, infer_file, load_screening_model};
use msl_cli::service::{check_bind_host, run, AppState};
use msl_cli::MODEL_ENV;
use msl_core::datasets::{self, dedup_check, ingest, DatasetManifest, Split, SplitMix, SplitRatios};
use msl_core::metrics::{ConfusionMatrix, DiagnosticsReport};
use msl_core::model_io::{load_model, validate_envelope};
use msl_core::screening::{SessionLog, TriageThresholds};
use serde_json::json;

#[derive(Parser)]
#[command(name = "msl", version, about = "Offline Mpox screening toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Screen one image.
    Infer(InferArgs),
    /// Evaluate a model on one split of a manifest.
    Eval(EvalArgs),
    /// Build, split and compare dataset manifests.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Render a confusion matrix or saved report.
    Report(ReportArgs),
    /// Run the loopback screening service.
    Serve(ServeArgs),
    /// Inspect model containers.
    #[command(subcommand)]
    Model(ModelCommand),
}

#[derive(Args)]
struct ThresholdArgs {
    /// p(mpox) at or above which a case screens positive.
    #[arg(long, default_value_t = 0.5)]
    positive_threshold: f64,
    /// p(mpox) at or above which a non-positive case goes to review.
    #[arg(long, default_value_t = 0.2)]
    review_floor: f64,
}

impl ThresholdArgs {
    fn thresholds(&self) -> Result<TriageThresholds, String> {
        let (p, r) = (self.positive_threshold, self.review_floor);
        if !(0.0 < r && r <= p && p <= 1.0) {
            return Err(format!("thresholds need 0 < review floor <= positive <= 1, got {r} and {p}"));
        }
        Ok(TriageThresholds {
            positive: p,
            review_floor: r,
        })
    }
}

#[derive(Args)]
struct InferArgs {
    #[arg(long, env = MODEL_ENV)]
    model: PathBuf,
    #[arg(long)]
    image: PathBuf,
    /// Print the result as JSON.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, env = MODEL_ENV)]
    model: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value = "test")]
    split: Split,
    #[arg(long, default_value = "mpox")]
    target_class: String,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the text table.
    #[arg(long)]
    table: bool,
    /// Unreadable records tolerated before failing.
    #[arg(long, default_value_t = 0)]
    max_skip: usize,
    /// Directory record paths are relative to. Defaults to the manifest's directory.
    #[arg(long)]
    root: Option<PathBuf>,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Hash a `<label>/<source>/<file>` tree or a JSONL listing into a manifest.
    Ingest {
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Assign train/val/test splits.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.75)]
        train: f64,
        #[arg(long, default_value_t = 0.10)]
        val: f64,
        #[arg(long, default_value_t = 0.15)]
        test: f64,
        /// Share of the mpox train split that is synthetic.
        #[arg(long, default_value_t = 0.5)]
        synthetic_fraction: f64,
    },
    /// Find exact and near duplicates between two manifests.
    Dedup {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value_t = datasets::DEFAULT_HAMMING_THRESHOLD)]
        threshold: u32,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 1 when any pair is flagged.
        #[arg(long)]
        strict: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Table,
}

#[derive(Args)]
struct ReportArgs {
    /// A confusion matrix JSON or a saved report JSON.
    input: PathBuf,
    #[arg(long, default_value = "mpox")]
    target_class: String,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    #[arg(long, default_value_t = 0.95)]
    confidence: f64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = MODEL_ENV)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "msl-session.jsonl")]
    session_log: PathBuf,
    /// Permit binding a non-loopback address.
    #[arg(long)]
    allow_lan: bool,
    /// Concurrent inferences. Defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    /// Serve UI assets from this directory instead of the built-in page.
    #[arg(long)]
    static_dir: Option<PathBuf>,
    #[command(flatten)]
    thresholds: ThresholdArgs,
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Print metadata, fingerprint, envelope and graph summary.
    Inspect {
        #[arg(env = MODEL_ENV)]
        model: PathBuf,
    },
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
        )
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Infer(args) => cmd_infer(args),
        Command::Serve(args) => cmd_serve(args),
        Command::Eval(args) => finish(cmd_eval(args)),
        Command::Dataset(cmd) => finish(cmd_dataset(cmd)),
        Command::Report(args) => finish(cmd_report(args)),
        Command::Model(ModelCommand::Inspect { model }) => finish(cmd_inspect(&model)),
    }
}

/// Writes to stdout. A closed pipe ends output quietly.
fn emit(text: &str) {
    let mut out = std::io::stdout().lock();
    let _ = out.write_all(text.as_bytes()).and_then(|_| out.flush());
}

fn finish(r: Result<ExitCode>) -> ExitCode {
    r.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}

fn cmd_infer(args: InferArgs) -> ExitCode {
    let thresholds = match args.thresholds.thresholds() {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let outcome = load_screening_model(&args.model).and_then(|model| {
        let result = infer_file(&model, &args.image, &thresholds)?;
        Ok((model, result))
    });
    match outcome {
        Ok((model, result)) => {
            if args.json {
                emit(&format!("{}\n", serde_json::to_string_pretty(&result).expect("result serializes")));
            } else {
                emit(&format_text(&result, model.class_names()));
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn cmd_eval(args: EvalArgs) -> Result<ExitCode> {
    let model = load_model(&args.model).with_context(|| format!("loading {}", args.model.display()))?;
    let manifest = DatasetManifest::load(&args.manifest)?;
    let root = args.root.unwrap_or_else(|| {
        args.manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default()
    });
    let opts = EvalOptions {
        split: args.split,
        target_class: args.target_class,
        confidence: args.confidence,
        max_skip: args.max_skip,
        root,
    };
    let progress = |done: usize, total: usize| {
        if done == total || done.is_multiple_of(50) {
            eprintln!("evaluated {done}/{total}");
        }
    };
    let outcome = evaluate(&model, &manifest, &opts, Some(&progress))?;
    for s in &outcome.skipped {
        eprintln!("skipped {s}");
    }
    let json = outcome.report.to_json();
    match &args.report {
        Some(path) => std::fs::write(path, format!("{json}\n")).with_context(|| format!("writing {}", path.display()))?,
        None if !args.table => emit(&format!("{json}\n")),
        None => {}
    }
    if args.table {
        emit(&outcome.report.to_text_table());
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_dataset(cmd: DatasetCommand) -> Result<ExitCode> {
    match cmd {
        DatasetCommand::Ingest { input, out } => {
            let outcome = ingest(&input)?;
            outcome.manifest.save(&out)?;
            eprintln!(
                "{} records written to {}, {} files skipped",
                outcome.manifest.len(),
                out.display(),
                outcome.warning_count()
            );
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Split {
            manifest,
            out,
            seed,
            train,
            val,
            test,
            synthetic_fraction,
        } => {
            let m = DatasetManifest::load(&manifest)?;
            let ratios = SplitRatios { train, val, test };
            let mix = SplitMix {
                mpox_train_synthetic_fraction: synthetic_fraction,
            };
            let assigned = datasets::split(&m, ratios, mix, seed)?;
            assigned.save(&out)?;
            for s in [Split::Train, Split::Val, Split::Test] {
                eprintln!("{:<5} {}", s.as_str(), assigned.in_split(s).count());
            }
            Ok(ExitCode::SUCCESS)
        }
        DatasetCommand::Dedup {
            a,
            b,
            threshold,
            out,
            strict,
        } => {
            let report = dedup_check(&DatasetManifest::load(&a)?, &DatasetManifest::load(&b)?, threshold)?;
            let json = report.to_json();
            match out {
                Some(path) => std::fs::write(&path, format!("{json}\n"))?,
                None => emit(&format!("{json}\n")),
            }
            eprintln!("{} exact and {} near duplicate pairs", report.exact.len(), report.near.len());
            Ok(if strict && !report.is_clean() {
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            })
        }
    }
}

fn cmd_report(args: ReportArgs) -> Result<ExitCode> {
    let text = std::fs::read_to_string(&args.input).with_context(|| format!("reading {}", args.input.display()))?;
    let report = match serde_json::from_str::<DiagnosticsReport>(&text) {
        Ok(r) => r,
        Err(_) => {
            let raw: ConfusionMatrix = serde_json::from_str(&text)
                .context("input is neither a report nor a confusion matrix ({class_names, counts})")?;
            let cm = ConfusionMatrix::from_counts(raw.class_names().to_vec(), raw.counts().to_vec())?;
            let Some(target) = cm.class_index(&args.target_class) else {
                bail!("no class named {:?}", args.target_class);
            };
            DiagnosticsReport::new(&cm, target, args.confidence)?
        }
    };
    match args.format {
        Format::Json => emit(&format!("{}\n", report.to_json())),
        Format::Table => emit(&report.to_text_table()),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_inspect(path: &Path) -> Result<ExitCode> {
    let model = load_model(path).with_context(|| format!("loading {}", path.display()))?;
    let mut ops: BTreeMap<&str, usize> = BTreeMap::new();
    for n in model.graph().nodes() {
        *ops.entry(n.op.kind().as_str()).or_default() += 1;
    }
    let out = json!({
        "metadata": model.metadata(),
        "fingerprint": model.fingerprint(),
        "param_count": model.param_count(),
        "file_bytes": model.file_size(),
        "envelope": validate_envelope(&model),
        "nodes": model.graph().nodes().len(),
        "ops": ops,
        "input_shape": model.graph().input_shape(),
        "output_shape": model.graph().output_shape(),
    });
    emit(&format!("{}\n", serde_json::to_string_pretty(&out)?));
    Ok(ExitCode::SUCCESS)
}

fn cmd_serve(args: ServeArgs) -> ExitCode {
    let model = match load_screening_model(&args.model) {
        Ok(m) => m,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    finish(serve(args, model))
}

fn serve(args: ServeArgs, model: msl_core::ModelContainer) -> Result<ExitCode> {
    let thresholds = args.thresholds.thresholds().map_err(anyhow::Error::msg)?;
    let addr = check_bind_host(&args.host, args.port, args.allow_lan).map_err(anyhow::Error::msg)?;
    let log = SessionLog::open(&args.session_log)?;
    let workers = args
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    let state = Arc::new(AppState::new(model, thresholds, workers, log, args.static_dir));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .with_context(|| format!("binding {addr}"))?;
        let local = listener.local_addr()?;
        tracing::info!("serving on http://{local}, session log {}", args.session_log.display());
        run(listener, state).await?;
        Ok(ExitCode::SUCCESS)
    })
}
