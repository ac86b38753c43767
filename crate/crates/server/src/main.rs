use std::fs;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pw_core::metadata::MetadataStore;
use pw_core::warehouse::Warehouse;
use pw_core::{fixtures, golden, ViewMode};
use pw_server::state::{AppState, METADATA_DIR, WAREHOUSE_DIR};

#[derive(Parser)]
#[command(name = "pw", version, about = "Preference-personalized star-schema warehouse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Create an empty warehouse from a schema, or load a bundled fixture.
    Init {
        #[arg(long)]
        data_dir: PathBuf,
        /// Schema JSON document.
        #[arg(long, conflicts_with = "fixture", required_unless_present = "fixture")]
        schema: Option<PathBuf>,
        /// Bundled dataset to load; only `cars-mini` exists.
        #[arg(long)]
        fixture: Option<String>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// How newly built views are stored: `ids` or `full`.
        #[arg(long, default_value = "ids")]
        view_mode: ViewMode,
    },
    /// Append a CSV batch (file path or `-` for stdin) to a table.
    Ingest {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        table: String,
        file: PathBuf,
    },
    /// Regenerate the oracle golden files.
    OracleRun {
        #[arg(long, default_value = "crates/core/tests/golden")]
        out: PathBuf,
        /// Only report files that are missing or outdated.
        #[arg(long)]
        check: bool,
    },
    /// Delete cached views. Without flags only stale ones go.
    PurgeViews {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        all: bool,
        /// Restrict to views owned by this user or group id.
        #[arg(long)]
        owner: Option<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("pw: {e}");
            ExitCode::FAILURE
        }
    }
}

type CliResult = Result<ExitCode, Box<dyn std::error::Error>>;

fn open_warehouse(data_dir: &Path) -> Result<Warehouse, Box<dyn std::error::Error>> {
    let root = data_dir.join(WAREHOUSE_DIR);
    if !Warehouse::exists(&root) {
        return Err(format!("no warehouse under {}; run `pw init` first", data_dir.display()).into());
    }
    Ok(Warehouse::open(root)?)
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Init { data_dir, schema, fixture } => {
            let root = data_dir.join(WAREHOUSE_DIR);
            let wh = match (schema, fixture.as_deref()) {
                (Some(path), _) => Warehouse::init(&root, &fs::read_to_string(&path)?)?,
                (None, Some("cars-mini")) => {
                    let mut wh = Warehouse::init(&root, fixtures::CARS_MINI_SCHEMA)?;
                    for (table, csv) in [
                        ("Car", fixtures::CARS_MINI_CAR),
                        ("Owner", fixtures::CARS_MINI_OWNER),
                        ("Advertisement", fixtures::CARS_MINI_ADVERTISEMENT),
                        ("Sales", fixtures::CARS_MINI_SALES),
                    ] {
                        wh.ingest(table, csv)?;
                    }
                    wh
                }
                (None, Some(other)) => return Err(format!("unknown fixture `{other}`").into()),
                (None, None) => unreachable!("clap requires one of them"),
            };
            MetadataStore::open(data_dir.join(METADATA_DIR))?;
            let ds = wh.dataset();
            println!(
                "initialized {} ({} fact rows, generation {})",
                wh.root().display(),
                ds.fact.len(),
                ds.ingest_generation()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { data_dir, port, host, view_mode } => {
            open_warehouse(&data_dir)?;
            let state = AppState::open(&data_dir, view_mode)?;
            tracing_subscriber::fmt()
                .with_env_filter(
                    tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()),
                )
                .init();
            let addr: SocketAddr = format!("{host}:{port}").parse()?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(addr).await?;
                tracing::info!("listening on http://{}/api/v1", listener.local_addr()?);
                pw_server::serve(state, listener).await
            })?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Ingest { data_dir, table, file } => {
            let mut wh = open_warehouse(&data_dir)?;
            let csv = if file.as_os_str() == "-" {
                let mut s = String::new();
                std::io::stdin().read_to_string(&mut s)?;
                s
            } else {
                fs::read_to_string(&file)?
            };
            let rows = wh.ingest(&table, &csv)?;
            let generation = wh.dataset().ingest_generation();
            let mut store = MetadataStore::open(data_dir.join(METADATA_DIR))?;
            let stale = store.mark_stale(generation);
            println!("ingested {rows} rows into {table}; generation {generation}; {stale} views now stale");
            Ok(ExitCode::SUCCESS)
        }
        Command::OracleRun { out, check } => {
            if check {
                let stale = golden::stale_files(&out)?;
                for rel in &stale {
                    println!("outdated: {rel}");
                }
                return Ok(if stale.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
            }
            let written = golden::write_all(&out)?;
            println!("wrote {written} golden files under {}", out.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::PurgeViews { data_dir, all, owner } => {
            let generation = open_warehouse(&data_dir)?.dataset().ingest_generation();
            let mut store = MetadataStore::open(data_dir.join(METADATA_DIR))?;
            let removed = store.purge_views(|o, env| {
                owner.as_deref().is_none_or(|want| want == o) && (all || env.built_generation < generation)
            })?;
            println!("removed {removed} views");
            Ok(ExitCode::SUCCESS)
        }
    }
}
