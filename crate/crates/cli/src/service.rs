//! Read-only HTTP service over registered corpora.
//!
//! | method | path                                   | response                      |
//! |--------|----------------------------------------|-------------------------------|
//! | POST   | `/corpora` `{name, store_path}`        | corpus summary (201)          |
//! | GET    | `/corpora`                             | corpus summaries              |
//! | GET    | `/corpora/{n}/search?q&k&template`     | ranked hits                   |
//! | GET    | `/corpora/{n}/scatter?x&y&norm&sample&seed&template` | `{points, meta, correlation}` |
//! | GET    | `/corpora/{n}/map?prompt&rows&cols&stat&min_count&bbox&format&template` | GeoJSON |
//! | GET    | `/corpora/{n}/contrast?a&b&rows&cols&stat&min_count&bbox&format&template` | GeoJSON |
//! | GET    | `/corpora/{n}/extremes?prompt&n&template` | `{prompt, top, bottom}`    |
//! | GET    | `/corpora/{n}/images/{id}`             | original image bytes          |
//! | GET    | `/corpora/{n}/images/{id}/thumb`       | PNG, long edge at most 256 px |
//! | GET    | `/healthz`                             | `{status, corpora, backend}`  |
//!
//! Errors come back as `{"error": name, "message": text}`. Analyses run on
//! the blocking pool and are memoized in an LRU cache keyed by corpus,
//! operation and parameters. Store files are only ever read.

use std::collections::{BTreeMap, HashMap};
use std::io::Cursor;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use atlas_core::corpus::read_uri;
use atlas_core::scoring::check_backend;
use atlas_core::{load_store, EmbeddingStore, EncoderBackend, Error, Parallelism};
use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use image::ImageFormat;
use lru::LruCache;
use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};

use crate::analysis::{render, ContrastRequest, ExtremesRequest, MapFormat, MapRequest, ScatterRequest, SearchRequest};
use crate::{io_error, AppError};

pub const CACHE_CAPACITY: usize = 128;
pub const THUMB_EDGE: u32 = 256;

const JSON: &str = "application/json";
const GEOJSON: &str = "application/geo+json";

#[derive(Debug)]
pub struct Corpus {
    pub name: String,
    pub store_path: PathBuf,
    pub store: EmbeddingStore,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub name: String,
    pub store_path: PathBuf,
    pub count: usize,
    pub dim: usize,
    pub backend: String,
}

impl Corpus {
    pub fn summary(&self) -> CorpusSummary {
        CorpusSummary {
            name: self.name.clone(),
            store_path: self.store_path.clone(),
            count: self.store.len(),
            dim: self.store.dim(),
            backend: self.store.backend_name().to_string(),
        }
    }
}

#[derive(Debug, Deserialize)]
struct Registration {
    name: String,
    store_path: PathBuf,
}

pub struct AppState {
    corpora: RwLock<BTreeMap<String, Arc<Corpus>>>,
    registration: Mutex<()>,
    backend: Arc<dyn EncoderBackend>,
    cache: Mutex<LruCache<String, Arc<Vec<u8>>>>,
    cache_dir: PathBuf,
    exec: Parallelism,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 128
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
}

impl AppState {
    pub fn new(backend: Arc<dyn EncoderBackend>, cache_dir: impl Into<PathBuf>, exec: Parallelism) -> Self {
        AppState {
            corpora: RwLock::new(BTreeMap::new()),
            registration: Mutex::new(()),
            backend,
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(CACHE_CAPACITY).expect("nonzero capacity"))),
            cache_dir: cache_dir.into(),
            exec,
        }
    }

    pub fn backend(&self) -> &dyn EncoderBackend {
        self.backend.as_ref()
    }

    /// Loads the store at `path` and registers it under `name`. Fails if the
    /// name is taken or the store was built with a different encoder.
    pub fn register(&self, name: &str, path: &Path) -> Result<Arc<Corpus>, AppError> {
        if !valid_name(name) {
            return Err(AppError::BadQuery(format!(
                "corpus name {name:?} must be 1-128 characters of A-Z, a-z, 0-9, '-', '_' or '.'"
            )));
        }
        let _serial = self.registration.lock().expect("registration lock poisoned");
        if self.corpora.read().expect("corpus lock poisoned").contains_key(name) {
            return Err(AppError::DuplicateCorpus(name.to_string()));
        }
        let store = load_store(path)?;
        check_backend(&store, self.backend())?;
        let corpus = Arc::new(Corpus {
            name: name.to_string(),
            store_path: path.to_path_buf(),
            store,
        });
        self.corpora
            .write()
            .expect("corpus lock poisoned")
            .insert(name.to_string(), corpus.clone());
        log::info!("registered corpus {name} ({} images) from {}", corpus.store.len(), path.display());
        Ok(corpus)
    }

    pub fn corpus(&self, name: &str) -> Result<Arc<Corpus>, AppError> {
        self.corpora
            .read()
            .expect("corpus lock poisoned")
            .get(name)
            .cloned()
            .ok_or_else(|| AppError::UnknownCorpus(name.to_string()))
    }

    pub fn summaries(&self) -> Vec<CorpusSummary> {
        self.corpora
            .read()
            .expect("corpus lock poisoned")
            .values()
            .map(|c| c.summary())
            .collect()
    }

    fn cached(&self, key: &str) -> Option<Arc<Vec<u8>>> {
        self.cache.lock().expect("cache lock poisoned").get(key).cloned()
    }

    fn remember(&self, key: String, payload: Arc<Vec<u8>>) {
        self.cache.lock().expect("cache lock poisoned").put(key, payload);
    }

    /// Number of memoized analysis payloads.
    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock poisoned").len()
    }

    fn thumb_path(&self, corpus: &str, id: &str) -> PathBuf {
        let digest = hex::encode(Sha256::digest(id.as_bytes()));
        self.cache_dir.join("thumbs").join(corpus).join(format!("{digest}.png"))
    }
}

impl IntoResponse for AppError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        if status.is_server_error() {
            log::error!("{}: {self}", self.name());
        }
        (status, [(header::CONTENT_TYPE, JSON)], render(&self.to_json())).into_response()
    }
}

fn bytes_response(content_type: &'static str, body: impl Into<Body>) -> Response {
    ([(header::CONTENT_TYPE, content_type)], body.into()).into_response()
}

async fn blocking<T, F>(f: F) -> Result<T, AppError>
where
    T: Send + 'static,
    F: FnOnce() -> Result<T, AppError> + Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| AppError::Internal(format!("worker task failed: {e}")))?
}

/// Runs an analysis on the blocking pool, or answers from the cache.
async fn analysis<R, F>(state: Arc<AppState>, corpus: String, op: &'static str, request: R, run: F) -> Result<Arc<Vec<u8>>, AppError>
where
    R: Serialize + Send + 'static,
    F: FnOnce(&R, &EmbeddingStore, &dyn EncoderBackend, Parallelism) -> Result<Vec<u8>, AppError> + Send + 'static,
{
    let c = state.corpus(&corpus)?;
    let params = serde_json::to_string(&request).map_err(|e| AppError::Internal(e.to_string()))?;
    let key = format!("{corpus}\u{1f}{op}\u{1f}{params}");
    if let Some(hit) = state.cached(&key) {
        return Ok(hit);
    }
    let st = state.clone();
    let payload = Arc::new(blocking(move || run(&request, &c.store, st.backend(), st.exec)).await?);
    state.remember(key, payload.clone());
    Ok(payload)
}

async fn healthz(State(state): State<Arc<AppState>>) -> Response {
    let n = state.corpora.read().expect("corpus lock poisoned").len();
    bytes_response(JSON, render(&json!({ "status": "ok", "corpora": n, "backend": state.backend().name() })))
}

async fn list_corpora(State(state): State<Arc<AppState>>) -> Response {
    bytes_response(JSON, render(&json!(state.summaries())))
}

async fn register(State(state): State<Arc<AppState>>, body: Bytes) -> Result<Response, AppError> {
    let reg: Registration = serde_json::from_slice(&body)
        .map_err(|e| AppError::BadQuery(format!("expected {{\"name\", \"store_path\"}}: {e}")))?;
    let corpus = blocking(move || match state.register(&reg.name, &reg.store_path) {
        // an unreadable or foreign store is the caller's mistake
        Err(AppError::Core(e @ (Error::Io { .. } | Error::CorruptStore { .. } | Error::InvalidStore(_)))) => {
            Err(AppError::BadQuery(format!("{}: {e}", e.name())))
        }
        other => other,
    })
    .await?;
    Ok((StatusCode::CREATED, [(header::CONTENT_TYPE, JSON)], render(&json!(corpus.summary()))).into_response())
}

type Params = Query<HashMap<String, String>>;

async fn search(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, Query(q): Params) -> Result<Response, AppError> {
    let req = SearchRequest::from_query(&q)?;
    let body = analysis(state, name, "search", req, |r, s, b, e| r.run(s, b, e)).await?;
    Ok(bytes_response(JSON, body.as_ref().clone()))
}

async fn scatter(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, Query(q): Params) -> Result<Response, AppError> {
    let req = ScatterRequest::from_query(&q)?;
    let body = analysis(state, name, "scatter", req, |r, s, b, e| r.run(s, b, e)).await?;
    Ok(bytes_response(JSON, body.as_ref().clone()))
}

fn map_type(format: MapFormat) -> &'static str {
    match format {
        MapFormat::Geojson => GEOJSON,
        MapFormat::Matrix => JSON,
    }
}

async fn map(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, Query(q): Params) -> Result<Response, AppError> {
    let req = MapRequest::from_query(&q)?;
    let kind = map_type(req.grid.format);
    let body = analysis(state, name, "map", req, |r, s, b, e| r.run(s, b, e)).await?;
    Ok(bytes_response(kind, body.as_ref().clone()))
}

async fn contrast(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, Query(q): Params) -> Result<Response, AppError> {
    let req = ContrastRequest::from_query(&q)?;
    let kind = map_type(req.grid.format);
    let body = analysis(state, name, "contrast", req, |r, s, b, e| r.run(s, b, e)).await?;
    Ok(bytes_response(kind, body.as_ref().clone()))
}

async fn extremes(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>, Query(q): Params) -> Result<Response, AppError> {
    let req = ExtremesRequest::from_query(&q)?;
    let body = analysis(state, name, "extremes", req, |r, s, b, e| r.run(s, b, e)).await?;
    Ok(bytes_response(JSON, body.as_ref().clone()))
}

fn mime_of(bytes: &[u8]) -> &'static str {
    image::guess_format(bytes)
        .map(|f| f.to_mime_type())
        .unwrap_or("application/octet-stream")
}

/// Scales `img` so its long edge is at most [`THUMB_EDGE`], keeping the
/// aspect ratio, and encodes it as PNG.
pub fn make_thumbnail(bytes: &[u8]) -> Result<Vec<u8>, AppError> {
    let img = image::load_from_memory(bytes).map_err(|e| Error::Decode(e.to_string()))?;
    let (w, h) = (img.width(), img.height());
    let long = w.max(h);
    let img = if long > THUMB_EDGE {
        let scale = |v: u32| ((u64::from(v) * u64::from(THUMB_EDGE) + u64::from(long) / 2) / u64::from(long)).max(1) as u32;
        img.thumbnail_exact(scale(w), scale(h))
    } else {
        img
    };
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, ImageFormat::Png)
        .map_err(|e| AppError::Internal(format!("encoding thumbnail: {e}")))?;
    Ok(out.into_inner())
}

fn thumbnail(state: &AppState, corpus: &Corpus, id: &str) -> Result<Vec<u8>, AppError> {
    let path = state.thumb_path(&corpus.name, id);
    if let Ok(bytes) = std::fs::read(&path) {
        return Ok(bytes);
    }
    let record = corpus
        .store
        .record(id)
        .ok_or_else(|| Error::UnknownImage(id.to_string()))?;
    let thumb = make_thumbnail(&read_uri(&record.uri)?)?;
    let dir = path.parent().expect("thumbnail path has a parent");
    std::fs::create_dir_all(dir).map_err(io_error(dir))?;
    // write-then-rename so concurrent readers never see a partial file
    let tmp = path.with_extension(format!("{}.tmp", std::process::id()));
    std::fs::write(&tmp, &thumb).map_err(io_error(&tmp))?;
    std::fs::rename(&tmp, &path).map_err(io_error(&path))?;
    Ok(thumb)
}

/// `{id}` or `{id}/thumb`; ids may themselves contain slashes, and an id that
/// exists verbatim wins over the thumbnail reading.
async fn image(State(state): State<Arc<AppState>>, UrlPath((name, rest)): UrlPath<(String, String)>) -> Result<Response, AppError> {
    let corpus = state.corpus(&name)?;
    let (id, thumb) = match rest.strip_suffix("/thumb") {
        Some(base) if corpus.store.record(&rest).is_none() => (base.to_string(), true),
        _ => (rest, false),
    };
    let record = corpus
        .store
        .record(&id)
        .ok_or_else(|| Error::UnknownImage(id.clone()))?
        .clone();
    if thumb {
        let st = state.clone();
        let bytes = blocking(move || thumbnail(&st, &corpus, &id)).await?;
        return Ok(bytes_response("image/png", bytes));
    }
    let bytes = blocking(move || Ok(read_uri(&record.uri)?)).await?;
    Ok(bytes_response(mime_of(&bytes), bytes))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/corpora", get(list_corpora).post(register))
        .route("/corpora/{name}/search", get(search))
        .route("/corpora/{name}/scatter", get(scatter))
        .route("/corpora/{name}/map", get(map))
        .route("/corpora/{name}/contrast", get(contrast))
        .route("/corpora/{name}/extremes", get(extremes))
        .route("/corpora/{name}/images/{*id}", get(image))
        .with_state(state)
}

/// Serves until interrupted.
pub async fn serve(state: Arc<AppState>, bind: &str) -> Result<(), AppError> {
    let listener = tokio::net::TcpListener::bind(bind)
        .await
        .map_err(|e| AppError::Usage(format!("cannot listen on {bind}: {e}")))?;
    let addr = listener.local_addr().map_err(io_error(bind))?;
    log::info!("listening on http://{addr}");
    eprintln!("listening on http://{addr}");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(io_error(bind))
}
