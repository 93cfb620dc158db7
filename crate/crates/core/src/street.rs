//! Street-level imagery collection over a lattice of query points.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::{write_manifest, GeoPoint, ImageRecord};
use crate::error::{Error, Result};

/// One image returned for a query point. `location` is where the imagery was
/// actually captured, which may differ from the query point.
#[derive(Debug, Clone, PartialEq)]
pub struct Panorama {
    pub pano_id: String,
    pub location: GeoPoint,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientError {
    /// Retryable (network, 5xx, timeouts).
    Transport(String),
    /// Non-retryable; aborts the whole run.
    Quota(String),
}

impl std::fmt::Display for ClientError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClientError::Transport(m) => write!(f, "transport: {m}"),
            ClientError::Quota(m) => write!(f, "quota: {m}"),
        }
    }
}

pub trait StreetImageryClient: Send + Sync {
    /// Imagery nearest to the point, or `None` where there is none.
    fn panorama(&self, at: GeoPoint) -> std::result::Result<Option<Panorama>, ClientError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub attempts: u32,
    pub initial_backoff_secs: f64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            initial_backoff_secs: 1.0,
            multiplier: 2.0,
        }
    }
}

impl RetryPolicy {
    /// Waits between consecutive attempts: `attempts - 1` delays.
    pub fn delays(&self) -> Vec<Duration> {
        (0..self.attempts.saturating_sub(1))
            .map(|i| Duration::from_secs_f64(self.initial_backoff_secs * self.multiplier.powi(i as i32)))
            .collect()
    }
}

fn with_retries(
    client: &dyn StreetImageryClient,
    at: GeoPoint,
    policy: &RetryPolicy,
) -> std::result::Result<Option<Panorama>, ClientError> {
    let delays = policy.delays();
    let mut attempt = 0;
    loop {
        match client.panorama(at) {
            Err(ClientError::Transport(m)) if attempt < delays.len() => {
                log::warn!("imagery request at ({}, {}) failed ({m}); retrying", at.lat, at.lon);
                std::thread::sleep(delays[attempt]);
                attempt += 1;
            }
            other => return other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FetchOptions {
    pub retry: RetryPolicy,
    /// Requests in flight at once.
    pub concurrency: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        FetchOptions {
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FetchReport {
    /// Lattice points without imagery.
    pub missing: usize,
    /// Lattice index and message for points that failed after all retries.
    pub failed: Vec<(usize, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchOutcome {
    pub records: Vec<ImageRecord>,
    pub report: FetchReport,
    pub manifest: PathBuf,
}

pub const FETCH_MANIFEST: &str = "manifest.jsonl";

/// Fetches at most one image per lattice point into `out_dir` and writes
/// `out_dir/manifest.jsonl`. Records are in lattice order and carry the
/// imagery's own location. Quota exhaustion stops the run after saving what
/// was fetched so far.
pub fn fetch_panoramas(
    points: &[GeoPoint],
    client: &dyn StreetImageryClient,
    out_dir: &Path,
    options: FetchOptions,
) -> Result<FetchOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let manifest = out_dir.join(FETCH_MANIFEST);
    let mut records = Vec::new();
    let mut report = FetchReport::default();
    let mut quota: Option<String> = None;

    for (chunk_no, chunk) in points.chunks(options.concurrency.max(1)).enumerate() {
        let base = chunk_no * options.concurrency.max(1);
        let results: Vec<_> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|&p| s.spawn(move || with_retries(client, p, &options.retry)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(ClientError::Transport("client panicked".into()))))
                .collect()
        });
        for (offset, result) in results.into_iter().enumerate() {
            let index = base + offset;
            match result {
                Ok(Some(pano)) => {
                    let id = format!("pt{index:06}");
                    let path = out_dir.join(format!("{id}.jpg"));
                    std::fs::write(&path, &pano.bytes).map_err(|e| Error::io(&path, e))?;
                    let mut rec = ImageRecord::new(id, path.to_string_lossy()).with_geo(pano.location);
                    rec.metadata.insert("pano_id".into(), pano.pano_id);
                    rec.metadata.insert("query_lat".into(), points[index].lat.to_string());
                    rec.metadata.insert("query_lon".into(), points[index].lon.to_string());
                    records.push(rec);
                }
                Ok(None) => report.missing += 1,
                Err(ClientError::Transport(m)) => {
                    log::error!("lattice point {index}: {m}");
                    report.failed.push((index, m));
                }
                Err(ClientError::Quota(m)) => {
                    quota.get_or_insert(m);
                }
            }
        }
        if quota.is_some() {
            break;
        }
    }

    write_manifest(&manifest, &records)?;
    if let Some(m) = quota {
        log::error!("stopping: {m}");
        return Err(Error::QuotaExceeded {
            saved: records.len(),
            manifest,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(FetchOutcome {
        records,
        report,
        manifest,
    })
}

/// Client for a Street View-style HTTP API: a metadata call per point, then an
/// image download by panorama id.
#[cfg(feature = "http")]
#[derive(Debug, Clone)]
pub struct HttpStreetImagery {
    endpoint: String,
    api_key: String,
    size: (u32, u32),
    agent: ureq::Agent,
}

#[cfg(feature = "http")]
impl HttpStreetImagery {
    /// `endpoint` is the image URL (e.g. `https://maps.googleapis.com/maps/api/streetview`);
    /// metadata is read from `{endpoint}/metadata`.
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>, size: (u32, u32)) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpStreetImagery {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
            size,
            agent,
        }
    }

    fn get(&self, url: &str, query: &[(&str, String)]) -> std::result::Result<ureq::http::Response<ureq::Body>, ClientError> {
        let mut req = self.agent.get(url);
        for (k, v) in query {
            req = req.query(*k, v);
        }
        let resp = req.call().map_err(|e| ClientError::Transport(e.to_string()))?;
        match resp.status().as_u16() {
            200..=299 => Ok(resp),
            429 | 403 => Err(ClientError::Quota(format!("HTTP {}", resp.status()))),
            s => Err(ClientError::Transport(format!("HTTP {s}"))),
        }
    }
}

#[cfg(feature = "http")]
#[derive(Deserialize)]
struct StreetMetadata {
    status: String,
    pano_id: Option<String>,
    location: Option<LatLng>,
    error_message: Option<String>,
}

#[cfg(feature = "http")]
#[derive(Deserialize)]
struct LatLng {
    lat: f64,
    lng: f64,
}

#[cfg(feature = "http")]
impl StreetImageryClient for HttpStreetImagery {
    fn panorama(&self, at: GeoPoint) -> std::result::Result<Option<Panorama>, ClientError> {
        let location = format!("{},{}", at.lat, at.lon);
        let mut resp = self.get(
            &format!("{}/metadata", self.endpoint),
            &[("location", location), ("key", self.api_key.clone())],
        )?;
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ClientError::Transport(format!("metadata: {e}")))?;
        let meta: StreetMetadata =
            serde_json::from_str(&body).map_err(|e| ClientError::Transport(format!("metadata: {e}")))?;
        match meta.status.as_str() {
            "OK" => {}
            "ZERO_RESULTS" | "NOT_FOUND" => return Ok(None),
            "OVER_QUERY_LIMIT" | "REQUEST_DENIED" => {
                return Err(ClientError::Quota(meta.error_message.unwrap_or(meta.status)))
            }
            other => return Err(ClientError::Transport(format!("metadata status {other}"))),
        }
        let (Some(pano_id), Some(loc)) = (meta.pano_id, meta.location) else {
            return Err(ClientError::Transport("metadata without pano_id/location".into()));
        };
        let location = GeoPoint::new(loc.lat, loc.lng).map_err(|e| ClientError::Transport(e.to_string()))?;
        let mut img = self.get(
            &self.endpoint,
            &[
                ("pano", pano_id.clone()),
                ("size", format!("{}x{}", self.size.0, self.size.1)),
                ("key", self.api_key.clone()),
            ],
        )?;
        let bytes = img
            .body_mut()
            .with_config()
            .limit(32 * 1024 * 1024)
            .read_to_vec()
            .map_err(|e| ClientError::Transport(format!("image: {e}")))?;
        Ok(Some(Panorama {
            pano_id,
            location,
            bytes,
        }))
    }
}

/// In-memory client for tests and dry runs: answers from a fixed table keyed
/// by lattice position, with optional scripted failures.
#[derive(Debug, Default)]
pub struct StubClient {
    responses: std::collections::HashMap<(u64, u64), StubResponse>,
    calls: std::sync::Mutex<Vec<GeoPoint>>,
}

#[derive(Debug, Clone)]
pub enum StubResponse {
    Image(Panorama),
    Nothing,
    /// Fails with a transport error this many times, then serves the image.
    Flaky(u32, Panorama),
    Quota,
    Down,
}

fn key(p: GeoPoint) -> (u64, u64) {
    (p.lat.to_bits(), p.lon.to_bits())
}

impl StubClient {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn respond(&mut self, at: GeoPoint, response: StubResponse) {
        self.responses.insert(key(at), response);
    }

    /// Every query made, in call order.
    pub fn calls(&self) -> Vec<GeoPoint> {
        self.calls.lock().unwrap().clone()
    }

    fn calls_at(&self, at: GeoPoint) -> usize {
        self.calls.lock().unwrap().iter().filter(|p| key(**p) == key(at)).count()
    }
}

impl StreetImageryClient for StubClient {
    fn panorama(&self, at: GeoPoint) -> std::result::Result<Option<Panorama>, ClientError> {
        self.calls.lock().unwrap().push(at);
        match self.responses.get(&key(at)) {
            None | Some(StubResponse::Nothing) => Ok(None),
            Some(StubResponse::Image(p)) => Ok(Some(p.clone())),
            Some(StubResponse::Flaky(n, p)) => {
                if self.calls_at(at) as u32 > *n {
                    Ok(Some(p.clone()))
                } else {
                    Err(ClientError::Transport("flaky".into()))
                }
            }
            Some(StubResponse::Quota) => Err(ClientError::Quota("daily quota exhausted".into())),
            Some(StubResponse::Down) => Err(ClientError::Transport("connection refused".into())),
        }
    }
}
