use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use patsim::config::Config;
use patsim::engine::{Engine, Upload};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "patsim", version, about = "Patent analog search over word embeddings")]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Document store directory.
    #[arg(long, global = true)]
    store_root: Option<PathBuf>,
    /// Override any config key, e.g. `--set phrase_threshold=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract and store plain-text documents; the id is the file stem.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        /// Source encoding: utf8 or win1251.
        #[arg(long, default_value = "utf8")]
        encoding: String,
    },
    Corpus {
        #[command(subcommand)]
        command: CorpusCommand,
    },
    Model {
        #[command(subcommand)]
        command: ModelCommand,
    },
    /// Rank stored patents against a query document.
    Search {
        file: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Run the HTTP API.
    Serve {
        #[arg(long)]
        addr: Option<String>,
    },
    Functions {
        #[command(subcommand)]
        command: FunctionsCommand,
    },
}

#[derive(Subcommand)]
enum CorpusCommand {
    /// Build the normalized corpus from stored documents (all by default).
    Build {
        #[arg(long = "doc")]
        doc_ids: Vec<String>,
    },
}

#[derive(Subcommand)]
enum ModelCommand {
    /// Train on the current corpus and index stored documents.
    Train(TrainArgs),
    /// Serve an existing model file and index stored documents.
    Init { path: PathBuf },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr0: Option<f64>,
    #[arg(long)]
    min_count: Option<u64>,
    #[arg(long)]
    subsample: Option<f64>,
    #[arg(long)]
    noise_power: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum FunctionsCommand {
    /// Show every function with its services and executability.
    List,
    /// Execute a function on a JSON task envelope.
    Exec {
        id: String,
        /// Envelope file; `-` reads stdin. Empty when omitted.
        #[arg(long)]
        task: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> anyhow::Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(root) = &cli.store_root {
        cfg.store_root = root.clone();
    }
    for kv in &cli.overrides {
        let Some((k, v)) = kv.split_once('=') else { bail!("--set expects KEY=VALUE, got {kv:?}") };
        cfg.set(k.trim(), v.trim(), Path::new("."))?;
    }
    Ok(cfg)
}

fn apply_train_args(cfg: &mut Config, a: &TrainArgs) {
    let t = &mut cfg.training;
    macro_rules! take {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { t.$f = v; } )* };
    }
    take!(dim, window, negatives, epochs, lr0, min_count, subsample, noise_power, seed);
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
}

fn print_json(v: &impl serde::Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    String::from_utf8(bytes).with_context(|| format!("{} is not UTF-8", path.display()))
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;
    if let Command::Model { command: ModelCommand::Train(args) } = &cli.command {
        apply_train_args(&mut cfg, args);
    }
    if let Command::Serve { addr: Some(addr) } = &cli.command {
        cfg.listen = addr.clone();
    }
    let engine = Engine::open(cfg)?;

    match &cli.command {
        Command::Ingest { files, encoding } => {
            use base64::Engine as _;
            for file in files {
                let id = file
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .with_context(|| format!("no usable file name in {}", file.display()))?;
                let bytes = std::fs::read(file).with_context(|| format!("reading {}", file.display()))?;
                let upload = Upload {
                    text: None,
                    payload_base64: Some(base64::engine::general_purpose::STANDARD.encode(bytes)),
                    encoding: Some(encoding.clone()),
                    ..Upload::text(id, "")
                };
                let doc = engine.ingest(&upload)?;
                println!("{}\t{}\t{} chars", doc.doc_id, doc.language, doc.text.chars().count());
            }
        }
        Command::Corpus { command: CorpusCommand::Build { doc_ids } } => {
            print_json(&engine.build_corpus(doc_ids, None)?)?;
        }
        Command::Model { command: ModelCommand::Train(_) } => {
            print_json(&engine.train(&engine.training_defaults())?)?;
        }
        Command::Model { command: ModelCommand::Init { path } } => {
            print_json(&engine.init_model(path)?)?;
        }
        Command::Search { file, k } => {
            print_json(&engine.search_text(&read_text(file)?, *k)?)?;
        }
        Command::Functions { command: FunctionsCommand::List } => {
            let reg = engine.registry();
            for f in reg.functions() {
                let services: Vec<String> = f.services.iter().map(|s| s.to_string()).collect();
                let state = if f.executable {
                    "executable".to_string()
                } else {
                    let missing: Vec<String> = reg.missing_services(f).iter().map(|s| s.to_string()).collect();
                    format!("missing {}", missing.join(","))
                };
                println!("{}\t{}\t{state}", f.id, services.join(","));
            }
        }
        Command::Functions { command: FunctionsCommand::Exec { id, task } } => {
            let task: Value = match task {
                None => Value::Null,
                Some(p) if p.as_os_str() == "-" => serde_json::from_reader(std::io::stdin().lock())?,
                Some(p) => serde_json::from_str(&read_text(p)?)?,
            };
            match engine.execute(id, task) {
                Ok(out) => print_json(&out)?,
                Err(e) => {
                    print_json(&e.to_json())?;
                    std::process::exit(1);
                }
            }
        }
        Command::Serve { .. } => serve(Arc::new(engine))?,
    }
    Ok(())
}

fn serve(engine: Arc<Engine>) -> anyhow::Result<()> {
    let addr = engine.config().listen.clone();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
        log::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, patsim::api::router(engine))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
