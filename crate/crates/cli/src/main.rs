use clap::{Parser, Subcommand};
use hypnokit_cli::commands;
use hypnokit_cli::server::{self, AppState};
use hypnokit_cli::session::Session;
use hypnokit_cli::{CliError, PipelineConfig, Workspace};
use hypnokit_core::Track;
use std::path::{Path, PathBuf};
use std::sync::Arc;

#[derive(Parser)]
#[command(name = "hypnokit", version, about = "PSG conditioning, rendering, rule-based staging and evaluation")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, short, global = true, default_value = "hypnokit.toml")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a default configuration file.
    InitConfig {
        #[arg(long, default_value = "hypnokit.toml")]
        out: PathBuf,
    },
    /// Generate the scripted fixture nights as raw recordings.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 256.0)]
        rate: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Condition, resample and epoch raw recordings.
    Ingest,
    /// Render one PNG per epoch.
    Render,
    /// Per-second descriptor targets, one JSONL file per subject.
    Descriptors,
    /// Rule-based staging: hypnogram CSV and rationale JSONL.
    Stage,
    /// Assemble a training corpus.
    BuildCorpus {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        phase: u8,
        #[arg(long, default_value = "fine")]
        track: String,
        /// Annotation JSONL; defaults to the staging rationales.
        #[arg(long)]
        annotations: Option<PathBuf>,
    },
    /// Pick the lowest perplexity-gain valid candidate per epoch.
    SelectRft {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Metrics with subject-level bootstrap intervals.
    Evaluate {
        /// Directory of `<subject>*.csv` predictions; defaults to the staging output.
        #[arg(long)]
        pred: Option<PathBuf>,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stratified sample of staged epochs for expert rating.
    SampleEval {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the rating API (and optionally a static UI).
    Serve {
        #[arg(long)]
        session: Option<PathBuf>,
        #[arg(long)]
        store: Option<PathBuf>,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        ui: Option<PathBuf>,
    },
}

fn workspace(path: &Path) -> Result<Workspace, CliError> {
    Workspace::load(path)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::InitConfig { out } => {
            std::fs::write(&out, PipelineConfig::default().to_toml_string()?)?;
            println!("wrote {}", out.display());
        }
        Command::Synth { out, rate, seed } => {
            commands::synth(&out, rate, seed)?;
        }
        Command::Ingest => {
            commands::ingest(&workspace(&cli.config)?)?;
        }
        Command::Render => {
            commands::render(&workspace(&cli.config)?)?;
        }
        Command::Descriptors => {
            commands::descriptors(&workspace(&cli.config)?)?;
        }
        Command::Stage => {
            commands::stage(&workspace(&cli.config)?)?;
        }
        Command::BuildCorpus { phase, track, annotations } => {
            let track: Track = track.parse().map_err(|e| CliError::Config(format!("{e}")))?;
            commands::build_corpus(&workspace(&cli.config)?, phase, track, annotations.as_deref())?;
        }
        Command::SelectRft { candidates, gold, out } => {
            let ws = workspace(&cli.config)?;
            let out = out.unwrap_or_else(|| ws.corpus_dir().join("rft_selected.jsonl"));
            commands::select_rft(&ws, &candidates, &gold, &out)?;
        }
        Command::Evaluate { pred, truth, out } => {
            let ws = workspace(&cli.config)?;
            let pred = pred.unwrap_or_else(|| ws.stage_dir());
            let out = out.unwrap_or_else(|| ws.eval_dir());
            let table = commands::evaluate(&ws, &pred, &truth, &out)?;
            print!("{table}");
        }
        Command::SampleEval { out } => {
            let ws = workspace(&cli.config)?;
            let out = out.unwrap_or_else(|| ws.eval_dir().join("session.json"));
            commands::sample_eval(&ws, &out)?;
        }
        Command::Serve { session, store, addr, ui } => {
            let ws = workspace(&cli.config)?;
            let session = Session::load(&session.unwrap_or_else(|| ws.eval_dir().join("session.json")))?;
            let store = store.unwrap_or_else(|| ws.eval_dir().join("ratings.jsonl"));
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                let state = Arc::new(AppState::open(session, &store).await?);
                let app = server::router(state, Some(ws.images_root()), ui);
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::Server(format!("bind {addr}: {e}")))?;
                println!("serving on http://{}", listener.local_addr()?);
                server::serve(listener, app).await
            })?;
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error[{}]: {e}", e.category());
        std::process::exit(e.exit_code());
    }
}
