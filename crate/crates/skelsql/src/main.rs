use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use skelsql::harness::{self, BackendKind, LlmKind, RunConfig};

#[derive(Parser)]
#[command(name = "skelsql", version, about = "Skeleton-retrieval text-to-SQL over Spider-format data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Embed the skeleton of every training question into an index file.
    BuildIndex(Flags),
    /// Run the pipeline over the dev split and report VA/EX.
    Evaluate(Flags),
}

#[derive(Args)]
struct Flags {
    #[arg(long)]
    tables: PathBuf,
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    db_dir: PathBuf,
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value_t = 8)]
    k: usize,
    #[arg(long, default_value_t = 0.9)]
    alpha: f64,
    #[arg(long, default_value_t = 0.5)]
    beta: f64,
    #[arg(long, default_value_t = 0.6)]
    tau: f64,
    #[arg(long, default_value_t = 0.4)]
    theta: f64,
    #[arg(long, default_value_t = 3)]
    max_fallbacks: usize,
    #[arg(long, value_enum, default_value_t = BackendKind::Reference)]
    backend: BackendKind,
    #[arg(long)]
    sidecar_url: Option<String>,
    #[arg(long, value_enum, default_value_t = LlmKind::Mock)]
    llm: LlmKind,
    #[arg(long)]
    llm_url: Option<String>,
    #[arg(long, default_value = "text-davinci-003")]
    model: String,
    /// Replay source for `--llm replay`; recording target for `--llm http`.
    #[arg(long)]
    cassette: Option<PathBuf>,
    /// Scripted responses for `--llm mock`; defaults to each question's gold SQL.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    exclude_same_db: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Reference backend vector dimension.
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    workers: usize,
    /// Per-query SQLite time limit in seconds.
    #[arg(long, default_value_t = 30.0)]
    query_timeout: f64,
    #[arg(long, default_value_t = 1000)]
    value_cap: usize,
    #[arg(long, default_value_t = 6000)]
    token_cap: usize,
    /// Per-question report, JSON lines; the summary goes next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    dump_relevance: Option<PathBuf>,
}

impl From<Flags> for RunConfig {
    fn from(f: Flags) -> Self {
        RunConfig {
            dev: f.dev,
            cassette: f.cassette,
            out: f.out,
            dump_relevance: f.dump_relevance,
            mock_script: f.mock_script,
            k: f.k,
            alpha: f.alpha,
            beta: f.beta,
            tau: f.tau,
            theta: f.theta,
            max_fallbacks: f.max_fallbacks,
            backend: f.backend,
            sidecar_url: f.sidecar_url,
            llm: f.llm,
            llm_url: f.llm_url,
            model: f.model,
            exclude_same_db: f.exclude_same_db,
            seed: f.seed,
            dim: f.dim,
            workers: f.workers,
            query_timeout_secs: f.query_timeout,
            value_cap: f.value_cap,
            token_cap: f.token_cap,
            ..RunConfig::new(f.tables, f.train, f.db_dir, f.index)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildIndex(flags) => {
            let cfg = RunConfig::from(flags);
            harness::make_backend(&cfg).and_then(|b| harness::build_index(&cfg, b.as_ref())).map(|index| {
                println!("{}", serde_json::json!({ "entries": index.len(), "index": cfg.index }));
            })
        }
        Command::Evaluate(flags) => {
            let cfg = RunConfig::from(flags);
            harness::evaluate(&cfg).map(|report| {
                let s = &report.summary;
                println!(
                    "{}",
                    serde_json::json!({
                        "questions": s.questions,
                        "va_rate": s.va_rate,
                        "ex_rate": s.ex_rate,
                        "fallback_count": s.fallback_count,
                    })
                );
            })
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
