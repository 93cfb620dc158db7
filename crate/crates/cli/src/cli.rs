//! The `atlas` command line. Analysis subcommands print the same JSON the
//! HTTP service returns for the same parameters.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use atlas_core::corpus::{read_uri, scan_corpus};
use atlas_core::embedding::encode_image;
use atlas_core::ingest::EmbedOptions;
use atlas_core::scatter::{export_scatter, sidecar_path, ExportFormat};
use atlas_core::street::{fetch_panoramas, FetchOptions, HttpStreetImagery};
use atlas_core::{
    embed_corpus, load_store, sample_points, save_store, zero_shot_classify, EmbeddingStore, EncoderBackend, GeoBBox,
    Normalization, Parallelism, Stat,
};
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde_json::json;

use crate::analysis::{
    prompt, render, ContrastRequest, ExtremesRequest, GridRequest, MapFormat, MapRequest, ScatterRequest,
    SearchRequest, DEFAULT_EXTREMES, DEFAULT_K,
};
use crate::backend::open_backend;
use crate::config::Config;
use crate::service::{serve, AppState};
use crate::{io_error, AppError};

#[derive(Debug, Parser)]
#[command(name = "atlas", version, about = "Concept retrieval, maps and scatters over image corpora")]
pub struct Cli {
    /// TOML settings file; ATLAS_* environment variables override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (scatter subsampling).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Encoder: "toy" or "http:<endpoint>".
    #[arg(long, global = true)]
    pub backend: Option<String>,
    /// Embedding dimensionality of an http backend.
    #[arg(long, global = true)]
    pub dim: Option<usize>,
    /// Name recorded for an http backend.
    #[arg(long, global = true)]
    pub backend_name: Option<String>,
    /// Worker threads: 0 for all cores, 1 for sequential.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Scan a directory or manifest and embed it into a store.
    #[command(visible_alias = "embed")]
    Ingest(IngestArgs),
    /// Rank a store's images against a prompt.
    Search(SearchArgs),
    /// Heat map of a prompt over geo-tagged images.
    Map(MapArgs),
    /// Heat map of where one prompt outscores another.
    Contrast(ContrastArgs),
    /// Place images on two prompt axes.
    Scatter(ScatterArgs),
    /// The images scoring highest and lowest for a prompt.
    Extremes(ExtremesArgs),
    /// Zero-shot classify one image against candidate labels.
    Classify(ClassifyArgs),
    /// Download street-level imagery on a lattice over a bounding box.
    Fetch(FetchArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).multiple(false)))]
pub struct IngestArgs {
    /// CSV or JSONL manifest.
    #[arg(long, group = "source")]
    pub manifest: Option<PathBuf>,
    /// Directory scanned recursively for images.
    #[arg(long, group = "source")]
    pub dir: Option<PathBuf>,
    /// Store file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Write the payload here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub prompt: String,
    #[arg(short, long, default_value_t = DEFAULT_K)]
    pub k: usize,
    /// Prompt template with one "{}"; defaults to "a photo of {}".
    #[arg(long)]
    pub template: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    /// lat_min,lon_min,lat_max,lon_max; defaults to the corpus extent.
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: Option<GeoBBox>,
    #[arg(long, default_value_t = 64)]
    pub rows: usize,
    #[arg(long, default_value_t = 64)]
    pub cols: usize,
    #[arg(long, default_value = "mean", value_parser = parse_stat)]
    pub stat: Stat,
    /// Cells with fewer images get no heat.
    #[arg(long, default_value_t = 3)]
    pub min_count: usize,
    #[arg(long, default_value = "geojson", value_parser = parse_format)]
    pub format: MapFormat,
}

impl GridArgs {
    fn request(&self) -> GridRequest {
        GridRequest {
            rows: self.rows,
            cols: self.cols,
            stat: self.stat,
            min_count: self.min_count,
            bbox: self.bbox,
            format: self.format,
        }
    }
}

fn parse_stat(s: &str) -> Result<Stat, String> {
    s.parse().map_err(|e: atlas_core::Error| e.to_string())
}

fn parse_norm(s: &str) -> Result<Normalization, String> {
    s.parse().map_err(|e: atlas_core::Error| e.to_string())
}

fn parse_format(s: &str) -> Result<MapFormat, String> {
    s.parse()
}

#[derive(Debug, Args)]
pub struct MapArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub prompt: String,
    #[arg(long)]
    pub template: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ContrastArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub a: String,
    #[arg(long)]
    pub b: String,
    #[arg(long)]
    pub template: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ScatterArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub x: String,
    #[arg(long)]
    pub y: String,
    /// none, rank or zscore, applied to both axes.
    #[arg(long, default_value = "none", value_parser = parse_norm)]
    pub norm: Normalization,
    /// Keep a seeded sample of this many images.
    #[arg(long)]
    pub sample: Option<usize>,
    #[arg(long)]
    pub template: Option<String>,
    /// Export points as .csv or .jsonl (with a .meta.json sidecar) instead of
    /// printing the JSON payload.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExtremesArgs {
    #[arg(long)]
    pub store: PathBuf,
    #[arg(long)]
    pub prompt: String,
    #[arg(short, long, default_value_t = DEFAULT_EXTREMES)]
    pub n: usize,
    #[arg(long)]
    pub template: Option<String>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Image file or URL.
    #[arg(long)]
    pub image: String,
    /// Candidate labels, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub labels: Vec<String>,
    #[arg(long, default_value_t = atlas_core::embedding::DEFAULT_LOGIT_SCALE)]
    pub logit_scale: f64,
    #[arg(long)]
    pub template: Option<String>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    /// lat_min,lon_min,lat_max,lon_max
    #[arg(long, allow_hyphen_values = true)]
    pub bbox: GeoBBox,
    /// Lattice spacing in degrees.
    #[arg(long)]
    pub interval: f64,
    /// Directory for images and manifest.jsonl.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// host:port to listen on.
    #[arg(long)]
    pub bind: Option<String>,
    /// NAME=STORE, repeatable; added to the corpora in the config file.
    #[arg(long = "corpus", value_parser = parse_corpus)]
    pub corpora: Vec<(String, PathBuf)>,
    /// Where thumbnails are cached.
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

fn parse_corpus(s: &str) -> Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() && !path.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected NAME=STORE, got {s:?}")),
    }
}

/// Effective settings: config file and environment, then flags.
pub fn settings(cli: &Cli) -> Result<Config, AppError> {
    let mut cfg = Config::from_env(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(b) = &cli.backend {
        cfg.backend = b.clone();
    }
    if cli.dim.is_some() {
        cfg.dim = cli.dim;
    }
    if cli.backend_name.is_some() {
        cfg.backend_name = cli.backend_name.clone();
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    Ok(cfg)
}

fn backend_of(cfg: &Config) -> Result<Arc<dyn EncoderBackend>, AppError> {
    open_backend(&cfg.backend, cfg.dim, cfg.backend_name.as_deref())
}

/// A store's analyses need the encoder it was built with; a toy store implies
/// the toy backend unless another one was asked for explicitly.
fn store_backend(cfg: &Config, store: &EmbeddingStore) -> Result<Arc<dyn EncoderBackend>, AppError> {
    let dim = cfg.dim.or(Some(store.dim()));
    let name = cfg.backend_name.as_deref().or(Some(store.backend_name()));
    open_backend(&cfg.backend, dim, name)
}

fn emit(out: &mut dyn Write, dest: Option<&Path>, payload: &[u8]) -> Result<(), AppError> {
    match dest {
        Some(path) => std::fs::write(path, payload).map_err(io_error(path)),
        None => out.write_all(payload).map_err(io_error("<stdout>")),
    }
}

fn open(cfg: &Config, path: &Path) -> Result<(EmbeddingStore, Arc<dyn EncoderBackend>), AppError> {
    let store = load_store(path)?;
    let backend = store_backend(cfg, &store)?;
    Ok((store, backend))
}

/// Runs one parsed command line, writing results to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), AppError> {
    let cfg = settings(&cli)?;
    let exec = Parallelism::workers(cfg.workers);
    match cli.command {
        Command::Ingest(a) => {
            let source = a.manifest.as_deref().or(a.dir.as_deref()).expect("clap requires a source");
            let records = scan_corpus(source)?;
            let backend = backend_of(&cfg)?;
            let options = EmbedOptions {
                batch_size: a.batch_size.unwrap_or(cfg.batch_size),
                parallelism: exec,
            };
            let (store, report) = embed_corpus(&records, backend.as_ref(), options)?;
            save_store(&store, &a.out)?;
            for f in &report.failed {
                log::warn!("skipped {}: {}", f.id, f.reason);
            }
            let failed: Vec<_> = report
                .failed
                .iter()
                .map(|f| json!({ "id": f.id, "reason": f.reason }))
                .collect();
            emit(
                out,
                None,
                &render(&json!({
                    "store": a.out,
                    "backend": store.backend_name(),
                    "dim": store.dim(),
                    "embedded": report.embedded,
                    "failed": failed,
                })),
            )
        }
        Command::Search(a) => {
            let (store, backend) = open(&cfg, &a.store)?;
            let req = SearchRequest {
                q: a.prompt,
                k: a.k,
                template: a.template,
            };
            emit(out, a.output.out.as_deref(), &req.run(&store, backend.as_ref(), exec)?)
        }
        Command::Map(a) => {
            let (store, backend) = open(&cfg, &a.store)?;
            let req = MapRequest {
                prompt: a.prompt,
                template: a.template,
                grid: a.grid.request(),
            };
            emit(out, a.output.out.as_deref(), &req.run(&store, backend.as_ref(), exec)?)
        }
        Command::Contrast(a) => {
            let (store, backend) = open(&cfg, &a.store)?;
            let req = ContrastRequest {
                a: a.a,
                b: a.b,
                template: a.template,
                grid: a.grid.request(),
            };
            emit(out, a.output.out.as_deref(), &req.run(&store, backend.as_ref(), exec)?)
        }
        Command::Scatter(a) => {
            let (store, backend) = open(&cfg, &a.store)?;
            let req = ScatterRequest {
                x: a.x,
                y: a.y,
                norm: a.norm,
                sample: a.sample,
                seed: cfg.seed,
                template: a.template,
            };
            match a.out {
                None => emit(out, None, &req.run(&store, backend.as_ref(), exec)?),
                Some(path) => {
                    let format = ExportFormat::from_path(&path)
                        .ok_or_else(|| AppError::Usage(format!("{}: expected a .csv or .jsonl path", path.display())))?;
                    let sc = req.compute(&store, backend.as_ref(), exec)?;
                    export_scatter(&sc, &path, format)?;
                    emit(
                        out,
                        None,
                        &render(&json!({
                            "points": path,
                            "meta": sidecar_path(&path),
                            "count": sc.points.len(),
                            "correlation": sc.correlation().ok(),
                        })),
                    )
                }
            }
        }
        Command::Extremes(a) => {
            let (store, backend) = open(&cfg, &a.store)?;
            let req = ExtremesRequest {
                prompt: a.prompt,
                n: a.n,
                template: a.template,
            };
            emit(out, a.output.out.as_deref(), &req.run(&store, backend.as_ref(), exec)?)
        }
        Command::Classify(a) => {
            let backend = backend_of(&cfg)?;
            let bytes = read_uri(&a.image)?;
            let image = encode_image(backend.as_ref(), &bytes).map_err(atlas_core::Error::from)?;
            let prompts = a
                .labels
                .iter()
                .map(|l| prompt(l, a.template.as_deref()))
                .collect::<Result<Vec<_>, _>>()?;
            let probs = zero_shot_classify(&image, &prompts, backend.as_ref(), a.logit_scale)?;
            emit(
                out,
                None,
                &render(&json!({
                    "labels": a.labels,
                    "prompts": prompts.iter().map(|p| p.render()).collect::<Vec<_>>(),
                    "probabilities": probs,
                })),
            )
        }
        Command::Fetch(a) => {
            let key = std::env::var(&cfg.street.api_key_env).map_err(|_| {
                AppError::Config(format!("set {} to the street imagery API key", cfg.street.api_key_env))
            })?;
            let client = HttpStreetImagery::new(&cfg.street.endpoint, key, cfg.street.size);
            let points = sample_points(&a.bbox, a.interval)?;
            let options = FetchOptions {
                retry: cfg.street.retry,
                concurrency: cfg.street.concurrency.max(1),
            };
            let outcome = fetch_panoramas(&points, &client, &a.out_dir, options)?;
            let failed: Vec<_> = outcome
                .report
                .failed
                .iter()
                .map(|(i, m)| json!({ "index": i, "reason": m }))
                .collect();
            emit(
                out,
                None,
                &render(&json!({
                    "manifest": outcome.manifest,
                    "points": points.len(),
                    "records": outcome.records.len(),
                    "missing": outcome.report.missing,
                    "failed": failed,
                })),
            )
        }
        Command::Serve(a) => {
            let backend = backend_of(&cfg)?;
            let cache_dir = a.cache_dir.unwrap_or(cfg.serve.cache_dir.clone());
            let state = Arc::new(AppState::new(backend, cache_dir, exec));
            let configured = cfg.serve.corpora.iter().map(|c| (c.name.clone(), c.store.clone()));
            for (name, path) in configured.chain(a.corpora) {
                state.register(&name, &path)?;
            }
            let bind = a.bind.unwrap_or(cfg.serve.bind.clone());
            let runtime = tokio::runtime::Runtime::new().map_err(io_error("<runtime>"))?;
            runtime.block_on(serve(state, &bind))
        }
    }
}
