//! Argument parsing and command dispatch for the `dce` binary.

use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use dce_core::analysis::{analyze_corpus, default_stopwords, AttributeLexicon, TokenMode};
use dce_core::config::EngineConfig;
use dce_core::dataset::{load_coco_index, load_oracle_detections, read_records};
use dce_core::model::{CaptionRecord, RecordStatus};
use dce_core::pipeline::Engine;
use dce_core::specialists::{serve_fixtures, FixtureStore};

#[derive(Debug, Parser, PartialEq)]
#[command(name = "dce", version, about = "Caption images with visual specialists and an LLM composer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, PartialEq)]
pub enum Command {
    /// Caption every image of a COCO index into a JSONL file.
    Run(RunArgs),
    /// Write stats.csv, attributes.csv and words.csv for a caption file.
    Analyze(AnalyzeArgs),
    /// Check that a config loads and names an endpoint for every specialist.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Serve a fixture file over the specialist HTTP protocol.
    MockServe {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        port: u16,
        #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
        host: IpAddr,
    },
    /// Print corpus statistics for a caption file.
    Stats {
        #[arg(long)]
        captions: PathBuf,
    },
}

#[derive(Debug, clap::Args, PartialEq)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub images: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub oracle_detections: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = positive)]
    pub image_concurrency: Option<usize>,
}

#[derive(Debug, clap::Args, PartialEq)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub captions: PathBuf,
    #[arg(long)]
    pub lexicon: Option<PathBuf>,
    #[arg(long, default_value = "whitespace")]
    pub token_mode: TokenMode,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

pub fn parse_args<I, T>(argv: I) -> Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

/// Process exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

pub async fn execute(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::Run(args) => run(args).await,
        Command::Analyze(args) => analyze(args),
        Command::ValidateConfig { config } => {
            let cfg = EngineConfig::load(&config)?;
            cfg.validate()?;
            cfg.load_fixtures()?;
            cfg.load_routing()?;
            println!("config ok: {} endpoints", cfg.pipeline.endpoints.len());
            Ok(EXIT_OK)
        }
        Command::MockServe { fixtures, port, host } => mock_serve(&fixtures, SocketAddr::new(host, port)).await,
        Command::Stats { captions } => stats(&captions),
    }
}

async fn run(args: RunArgs) -> anyhow::Result<i32> {
    let mut cfg = EngineConfig::load(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.pipeline.geometry.rng_seed = seed;
    }
    if let Some(n) = args.image_concurrency {
        cfg.pipeline.image_concurrency = n;
    }
    cfg.validate()?;
    let index = load_coco_index(&args.annotations)?;
    let specialists = cfg.specialists()?;
    let mut engine = Engine::new(cfg.pipeline.clone(), specialists)
        .with_routing(cfg.load_routing()?)
        .with_image_root(&args.images)
        .with_progress(|e| eprintln!("{e}"));
    if let Some(path) = &args.oracle_detections {
        engine = engine.with_oracle_detections(load_oracle_detections(path)?);
    }
    tracing::info!(images = index.images.len(), out = %args.out.display(), "starting run");
    let summary = engine.run_batch(&index.images, &args.out, args.resume).await?;
    println!("{}", serde_json::to_string(&summary)?);
    Ok(if summary.failed == 0 { EXIT_OK } else { EXIT_FAILURE })
}

fn load_captions(path: &Path) -> anyhow::Result<Vec<CaptionRecord>> {
    let scan = read_records(path)?;
    for m in &scan.malformed {
        tracing::warn!(line = m.line, error = %m.error, "skipping malformed record");
    }
    Ok(scan.records)
}

fn captions_of(records: &[CaptionRecord]) -> Vec<&str> {
    records
        .iter()
        .filter(|r| r.status != RecordStatus::Failed && !r.image_caption.is_empty())
        .map(|r| r.image_caption.as_str())
        .collect()
}

fn analyze(args: AnalyzeArgs) -> anyhow::Result<i32> {
    let records = load_captions(&args.captions)?;
    let lexicon = match &args.lexicon {
        Some(p) => AttributeLexicon::load(p)?,
        None => AttributeLexicon::shipped().clone(),
    };
    let captions = captions_of(&records);
    let report = analyze_corpus(&captions, &lexicon, &default_stopwords(), args.token_mode);
    report.write_csv(&args.out_dir)?;
    eprintln!("wrote reports for {} captions to {}", report.captions, args.out_dir.display());
    Ok(EXIT_OK)
}

fn stats(path: &Path) -> anyhow::Result<i32> {
    let records = load_captions(path)?;
    let captions = captions_of(&records);
    let report = analyze_corpus(&captions, AttributeLexicon::shipped(), &default_stopwords(), TokenMode::Whitespace);
    let count = |s: RecordStatus| records.iter().filter(|r| r.status == s).count();
    println!("records {}", records.len());
    for s in [RecordStatus::Ok, RecordStatus::Degraded, RecordStatus::Failed] {
        println!("status_{s} {}", count(s));
    }
    for (k, v) in report.stats_rows() {
        println!("{k} {v}");
    }
    for (a, r) in &report.attribute_rates {
        println!("rate_{a} {r:.4}");
    }
    Ok(EXIT_OK)
}

async fn mock_serve(fixtures: &Path, addr: SocketAddr) -> anyhow::Result<i32> {
    let store = FixtureStore::load(fixtures)?;
    if store.is_empty() {
        bail!("fixture file {} has no entries", fixtures.display());
    }
    let server = serve_fixtures(Arc::new(store), addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    eprintln!("serving fixtures on {}", server.base_url());
    tokio::signal::ctrl_c().await.context("waiting for ctrl-c")?;
    server.shutdown().await?;
    Ok(EXIT_OK)
}

/// Maps `DCE_LOG` to a tracing level; unset means `info`.
pub fn log_level(value: Option<&str>) -> Result<tracing::Level, String> {
    match value.map(str::trim) {
        None | Some("") | Some("info") => Ok(tracing::Level::INFO),
        Some("error") => Ok(tracing::Level::ERROR),
        Some("debug") => Ok(tracing::Level::DEBUG),
        Some(other) => Err(format!("DCE_LOG must be error, info or debug, not {other:?}")),
    }
}
