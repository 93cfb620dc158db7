//! Image records and corpus discovery from directories or manifests.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const IMAGE_EXTENSIONS: &[&str] = &["jpg", "jpeg", "png", "gif", "bmp", "webp", "tif", "tiff"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat: f64,
    pub lon: f64,
}

impl GeoPoint {
    pub fn new(lat: f64, lon: f64) -> Result<Self> {
        if !(lat.is_finite() && (-90.0..=90.0).contains(&lat)) {
            return Err(Error::InvalidParameter(format!("latitude {lat} outside [-90, 90]")));
        }
        if !(lon.is_finite() && (-180.0..=180.0).contains(&lon)) {
            return Err(Error::InvalidParameter(format!("longitude {lon} outside [-180, 180]")));
        }
        Ok(GeoPoint { lat, lon })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub uri: String,
    pub geo: Option<GeoPoint>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Self {
        ImageRecord {
            id: id.into(),
            uri: uri.into(),
            geo: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn with_geo(mut self, geo: GeoPoint) -> Self {
        self.geo = Some(geo);
        self
    }
}

pub fn is_url(uri: &str) -> bool {
    uri.starts_with("http://") || uri.starts_with("https://")
}

/// Raw bytes behind a record's uri (local path, or http(s) URL with the
/// `http` feature).
pub fn read_uri(uri: &str) -> Result<Vec<u8>> {
    if is_url(uri) {
        return fetch_url(uri);
    }
    let path = uri.strip_prefix("file://").unwrap_or(uri);
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(feature = "http")]
fn fetch_url(uri: &str) -> Result<Vec<u8>> {
    let mut resp = ureq::get(uri).call().map_err(|e| Error::Client(format!("{uri}: {e}")))?;
    resp.body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| Error::Client(format!("{uri}: {e}")))
}

#[cfg(not(feature = "http"))]
fn fetch_url(uri: &str) -> Result<Vec<u8>> {
    Err(Error::Client(format!("{uri}: built without the `http` feature")))
}

/// Hex SHA-256 of the bytes; the fallback id for records without one.
pub fn content_id(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn ensure_unique_ids(records: &[ImageRecord]) -> Result<()> {
    let mut seen = HashSet::with_capacity(records.len());
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId(r.id.clone()));
        }
    }
    Ok(())
}

/// Records from a directory (recursive, image extensions only, ordered by
/// relative path) or from a `.csv` / `.jsonl` manifest (row order).
pub fn scan_corpus(source: &Path) -> Result<Vec<ImageRecord>> {
    let meta = std::fs::metadata(source).map_err(|e| Error::io(source, e))?;
    if meta.is_dir() {
        scan_directory(source)
    } else {
        scan_manifest(source)
    }
}

fn has_image_extension(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| e.eq_ignore_ascii_case(x)))
}

pub fn scan_directory(root: &Path) -> Result<Vec<ImageRecord>> {
    let mut records = Vec::new();
    for entry in walkdir::WalkDir::new(root).follow_links(true) {
        let entry = entry.map_err(|e| {
            let path = e.path().unwrap_or(root).to_path_buf();
            Error::io(path, e.into())
        })?;
        if !entry.file_type().is_file() || !has_image_extension(entry.path()) {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walkdir yields paths under root");
        let id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        records.push(ImageRecord::new(id, entry.path().to_string_lossy()));
    }
    records.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ManifestFormat {
    Csv,
    Jsonl,
}

fn manifest_format(path: &Path) -> ManifestFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("jsonl") || e.eq_ignore_ascii_case("json") || e.eq_ignore_ascii_case("ndjson") => {
            ManifestFormat::Jsonl
        }
        _ => ManifestFormat::Csv,
    }
}

pub fn scan_manifest(path: &Path) -> Result<Vec<ImageRecord>> {
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let rows = match manifest_format(path) {
        ManifestFormat::Csv => read_csv_rows(path)?,
        ManifestFormat::Jsonl => read_jsonl_rows(path)?,
    };
    let records = rows
        .into_iter()
        .map(|(line, fields)| record_from_fields(line, fields, &base))
        .collect::<Result<Vec<_>>>()?;
    ensure_unique_ids(&records)?;
    Ok(records)
}

type Row = (usize, BTreeMap<String, String>);

fn read_csv_rows(path: &Path) -> Result<Vec<Row>> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields = headers
            .iter()
            .cloned()
            .zip(rec.iter().map(str::to_string))
            .collect();
        rows.push((line, fields));
    }
    Ok(rows)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize);
    match (line, e.into_kind()) {
        (_, csv::ErrorKind::Io(io)) => Error::io(path, io),
        (Some(line), kind) => Error::Manifest {
            line,
            message: format!("{kind:?}"),
        },
        (None, kind) => Error::Manifest {
            line: 1,
            message: format!("{kind:?}"),
        },
    }
}

fn read_jsonl_rows(path: &Path) -> Result<Vec<Row>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| Error::Manifest {
            line: line_no,
            message: e.to_string(),
        })?;
        let obj = value.as_object().ok_or_else(|| Error::Manifest {
            line: line_no,
            message: "expected a JSON object".into(),
        })?;
        let mut fields = BTreeMap::new();
        for (k, v) in obj {
            let s = match v {
                serde_json::Value::Null => continue,
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                serde_json::Value::Bool(b) => b.to_string(),
                other => {
                    return Err(Error::Manifest {
                        line: line_no,
                        message: format!("field {k:?} must be a scalar, got {other}"),
                    })
                }
            };
            fields.insert(k.clone(), s);
        }
        rows.push((line_no, fields));
    }
    Ok(rows)
}

fn parse_coord(line: usize, name: &str, raw: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| Error::Manifest {
        line,
        message: format!("{name} {raw:?} is not a number"),
    })
}

fn record_from_fields(line: usize, mut fields: BTreeMap<String, String>, base: &Path) -> Result<ImageRecord> {
    let bad = |message: String| Error::Manifest { line, message };
    let uri = fields
        .remove("uri")
        .map(|u| u.trim().to_string())
        .filter(|u| !u.is_empty())
        .ok_or_else(|| bad("missing required field `uri`".into()))?;
    let uri = if is_url(&uri) || Path::new(&uri).is_absolute() {
        uri
    } else {
        base.join(&uri).to_string_lossy().into_owned()
    };
    let id = match fields.remove("id").map(|s| s.trim().to_string()) {
        Some(id) if !id.is_empty() => id,
        Some(_) => {
            let bytes = read_uri(&uri).map_err(|e| bad(format!("empty id and unreadable uri: {e}")))?;
            content_id(&bytes)
        }
        None => return Err(bad("missing required field `id`".into())),
    };
    let lat = fields.remove("lat").filter(|s| !s.trim().is_empty());
    let lon = fields.remove("lon").filter(|s| !s.trim().is_empty());
    let geo = match (lat, lon) {
        (None, None) => None,
        (Some(lat), Some(lon)) => {
            let lat = parse_coord(line, "lat", &lat)?;
            let lon = parse_coord(line, "lon", &lon)?;
            Some(GeoPoint::new(lat, lon).map_err(|e| bad(e.to_string()))?)
        }
        _ => return Err(bad("lat and lon must be given together".into())),
    };
    Ok(ImageRecord {
        id,
        uri,
        geo,
        metadata: fields,
    })
}

/// Writes records as a JSONL manifest that [`scan_manifest`] reads back.
pub fn write_manifest(path: &Path, records: &[ImageRecord]) -> Result<()> {
    let mut out = String::new();
    for r in records {
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), r.id.clone().into());
        obj.insert("uri".into(), r.uri.clone().into());
        if let Some(g) = r.geo {
            obj.insert("lat".into(), g.lat.into());
            obj.insert("lon".into(), g.lon.into());
        }
        for (k, v) in &r.metadata {
            obj.insert(k.clone(), v.clone().into());
        }
        out.push_str(&serde_json::Value::Object(obj).to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
