//! The analyses both front ends expose. Each request renders straight to the
//! response bytes, so the CLI and the HTTP service emit identical payloads for
//! identical inputs.

use std::collections::HashMap;
use std::str::FromStr;

use atlas_core::concept_map::{DEFAULT_COLS, DEFAULT_MIN_COUNT, DEFAULT_ROWS};
use atlas_core::scatter::ScatterOptions;
use atlas_core::{
    aggregate_map, contrast_map, extremes, scatter, score_corpus, search_text, AxisSpec, EmbeddingStore,
    EncoderBackend, Error, GeoBBox, Grid, HeatGrid, MapOptions, Normalization, Parallelism, Prompt, Stat,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::AppError;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_EXTREMES: usize = 5;

/// Half-width in degrees given to a corpus extent that collapses to a line or
/// a point, so it still forms a valid box.
const EXTENT_PAD: f64 = 5e-4;

/// Compact JSON plus a trailing newline.
pub fn render(value: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec(value).expect("JSON values always serialize");
    out.push(b'\n');
    out
}

/// `text` wrapped in `template`, or in the default template when none is given.
pub fn prompt(text: &str, template: Option<&str>) -> Result<Prompt, AppError> {
    if text.trim().is_empty() {
        return Err(AppError::BadQuery("prompt must not be empty".into()));
    }
    match template {
        None => Ok(Prompt::new(text)),
        Some(t) => Ok(Prompt::with_template(text, t)?),
    }
}

/// The smallest box holding every geo-tagged record.
pub fn corpus_extent(store: &EmbeddingStore) -> Result<GeoBBox, AppError> {
    let mut geos = store.records().iter().filter_map(|r| r.geo).peekable();
    if geos.peek().is_none() {
        return Err(Error::EmptyRegion.into());
    }
    let (mut s, mut n, mut w, mut e) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for g in geos {
        s = s.min(g.lat);
        n = n.max(g.lat);
        w = w.min(g.lon);
        e = e.max(g.lon);
    }
    let pad = |lo: f64, hi: f64, min: f64, max: f64| {
        if hi > lo {
            (lo, hi)
        } else {
            ((lo - EXTENT_PAD).max(min), (hi + EXTENT_PAD).min(max))
        }
    };
    let (s, n) = pad(s, n, -90.0, 90.0);
    let (w, e) = pad(w, e, -180.0, 180.0);
    Ok(GeoBBox::new(s, n, w, e)?)
}

type Query = HashMap<String, String>;

fn required<'a>(q: &'a Query, key: &str) -> Result<&'a str, AppError> {
    match q.get(key).map(String::as_str) {
        Some(v) if !v.trim().is_empty() => Ok(v),
        _ => Err(AppError::BadQuery(format!("missing query parameter {key:?}"))),
    }
}

fn optional<T: FromStr>(q: &Query, key: &str) -> Result<Option<T>, AppError>
where
    T::Err: std::fmt::Display,
{
    q.get(key)
        .map(|v| {
            v.trim()
                .parse::<T>()
                .map_err(|e| AppError::BadQuery(format!("bad value {v:?} for {key:?}: {e}")))
        })
        .transpose()
}

fn positive(value: usize, key: &str) -> Result<usize, AppError> {
    if value == 0 {
        return Err(AppError::BadQuery(format!("{key} must be at least 1")));
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub q: String,
    pub k: usize,
    pub template: Option<String>,
}

impl SearchRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        Ok(SearchRequest {
            q: required(q, "q")?.to_string(),
            k: positive(optional(q, "k")?.unwrap_or(DEFAULT_K), "k")?,
            template: q.get("template").cloned(),
        })
    }

    pub fn run(&self, store: &EmbeddingStore, backend: &dyn EncoderBackend, exec: Parallelism) -> Result<Vec<u8>, AppError> {
        let p = prompt(&self.q, self.template.as_deref())?;
        positive(self.k, "k")?;
        let hits = search_text(store, &p, backend, self.k, exec)?;
        Ok(render(&json!({
            "prompt": p.render(),
            "k": self.k,
            "hits": hits,
        })))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRequest {
    pub x: String,
    pub y: String,
    pub norm: Normalization,
    pub sample: Option<usize>,
    pub seed: u64,
    pub template: Option<String>,
}

impl ScatterRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        Ok(ScatterRequest {
            x: required(q, "x")?.to_string(),
            y: required(q, "y")?.to_string(),
            norm: optional(q, "norm")?.unwrap_or(Normalization::None),
            sample: optional::<usize>(q, "sample")?.map(|s| positive(s, "sample")).transpose()?,
            seed: optional(q, "seed")?.unwrap_or(0),
            template: q.get("template").cloned(),
        })
    }

    pub fn compute(
        &self,
        store: &EmbeddingStore,
        backend: &dyn EncoderBackend,
        exec: Parallelism,
    ) -> Result<atlas_core::scatter::Scatter, AppError> {
        let axis_x = AxisSpec::new(prompt(&self.x, self.template.as_deref())?, self.norm);
        let axis_y = AxisSpec::new(prompt(&self.y, self.template.as_deref())?, self.norm);
        let options = ScatterOptions {
            sample: self.sample,
            seed: self.seed,
        };
        Ok(scatter(store, &axis_x, &axis_y, backend, options, exec)?)
    }

    pub fn run(&self, store: &EmbeddingStore, backend: &dyn EncoderBackend, exec: Parallelism) -> Result<Vec<u8>, AppError> {
        let sc = self.compute(store, backend, exec)?;
        Ok(render(&json!({
            "points": sc.points,
            "meta": sc.meta,
            "correlation": sc.correlation().ok(),
        })))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapFormat {
    Geojson,
    Matrix,
}

impl FromStr for MapFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "geojson" => Ok(MapFormat::Geojson),
            "matrix" => Ok(MapFormat::Matrix),
            _ => Err(format!("expected geojson or matrix, got {s:?}")),
        }
    }
}

/// Grid settings shared by the map and contrast analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRequest {
    pub rows: usize,
    pub cols: usize,
    pub stat: Stat,
    pub min_count: usize,
    /// Defaults to the extent of the corpus' geo-tagged records.
    pub bbox: Option<GeoBBox>,
    pub format: MapFormat,
}

impl Default for GridRequest {
    fn default() -> Self {
        GridRequest {
            rows: DEFAULT_ROWS,
            cols: DEFAULT_COLS,
            stat: Stat::Mean,
            min_count: DEFAULT_MIN_COUNT,
            bbox: None,
            format: MapFormat::Geojson,
        }
    }
}

impl GridRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        let d = GridRequest::default();
        Ok(GridRequest {
            rows: positive(optional(q, "rows")?.unwrap_or(d.rows), "rows")?,
            cols: positive(optional(q, "cols")?.unwrap_or(d.cols), "cols")?,
            stat: optional(q, "stat")?.unwrap_or(d.stat),
            min_count: optional(q, "min_count")?.unwrap_or(d.min_count),
            bbox: optional(q, "bbox")?,
            format: optional(q, "format")?.unwrap_or(d.format),
        })
    }

    fn options(&self, store: &EmbeddingStore) -> Result<MapOptions, AppError> {
        let bbox = match self.bbox {
            Some(b) => b,
            None => corpus_extent(store)?,
        };
        let mut options = MapOptions::new(Grid::new(bbox, self.rows, self.cols)?);
        options.stat = self.stat;
        options.min_count = self.min_count;
        Ok(options)
    }

    fn render(&self, heat: &HeatGrid, prompts: Value) -> Vec<u8> {
        let mut out = match self.format {
            MapFormat::Geojson => heat.to_geojson(),
            MapFormat::Matrix => heat.to_matrix_json(),
        };
        let props = match self.format {
            MapFormat::Geojson => out["properties"].as_object_mut(),
            MapFormat::Matrix => out.as_object_mut(),
        };
        if let (Some(props), Value::Object(extra)) = (props, prompts) {
            props.extend(extra);
        }
        render(&out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapRequest {
    pub prompt: String,
    pub template: Option<String>,
    pub grid: GridRequest,
}

impl MapRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        Ok(MapRequest {
            prompt: required(q, "prompt")?.to_string(),
            template: q.get("template").cloned(),
            grid: GridRequest::from_query(q)?,
        })
    }

    pub fn run(&self, store: &EmbeddingStore, backend: &dyn EncoderBackend, exec: Parallelism) -> Result<Vec<u8>, AppError> {
        let p = prompt(&self.prompt, self.template.as_deref())?;
        let heat = aggregate_map(store, &p, backend, &self.grid.options(store)?, exec)?;
        Ok(self.grid.render(&heat, json!({ "prompt": p.render() })))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastRequest {
    pub a: String,
    pub b: String,
    pub template: Option<String>,
    pub grid: GridRequest,
}

impl ContrastRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        Ok(ContrastRequest {
            a: required(q, "a")?.to_string(),
            b: required(q, "b")?.to_string(),
            template: q.get("template").cloned(),
            grid: GridRequest::from_query(q)?,
        })
    }

    pub fn run(&self, store: &EmbeddingStore, backend: &dyn EncoderBackend, exec: Parallelism) -> Result<Vec<u8>, AppError> {
        let a = prompt(&self.a, self.template.as_deref())?;
        let b = prompt(&self.b, self.template.as_deref())?;
        let heat = contrast_map(store, &a, &b, backend, &self.grid.options(store)?, exec)?;
        Ok(self.grid.render(&heat, json!({ "a": a.render(), "b": b.render() })))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremesRequest {
    pub prompt: String,
    pub n: usize,
    pub template: Option<String>,
}

impl ExtremesRequest {
    pub fn from_query(q: &Query) -> Result<Self, AppError> {
        Ok(ExtremesRequest {
            prompt: required(q, "prompt")?.to_string(),
            n: positive(optional(q, "n")?.unwrap_or(DEFAULT_EXTREMES), "n")?,
            template: q.get("template").cloned(),
        })
    }

    pub fn run(&self, store: &EmbeddingStore, backend: &dyn EncoderBackend, exec: Parallelism) -> Result<Vec<u8>, AppError> {
        let p = prompt(&self.prompt, self.template.as_deref())?;
        positive(self.n, "n")?;
        let scores = score_corpus(store, &p, backend, exec)?;
        let (top, bottom) = extremes(&scores, self.n);
        Ok(render(&json!({
            "prompt": p.render(),
            "top": top,
            "bottom": bottom,
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use atlas_core::{normalize, GeoPoint, ImageRecord};

    fn query(pairs: &[(&str, &str)]) -> Query {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn query_parsing() {
        let s = SearchRequest::from_query(&query(&[("q", "red"), ("k", "3")])).unwrap();
        assert_eq!((s.q.as_str(), s.k, s.template), ("red", 3, None));
        assert_eq!(SearchRequest::from_query(&query(&[("q", "red")])).unwrap().k, DEFAULT_K);
        assert!(matches!(SearchRequest::from_query(&query(&[("k", "3")])), Err(AppError::BadQuery(_))));
        assert!(matches!(SearchRequest::from_query(&query(&[("q", "a"), ("k", "0")])), Err(AppError::BadQuery(_))));
        assert!(matches!(SearchRequest::from_query(&query(&[("q", "a"), ("k", "x")])), Err(AppError::BadQuery(_))));

        let m = MapRequest::from_query(&query(&[("prompt", "Paris"), ("rows", "8"), ("stat", "max"), ("bbox", "0,0,1,2")])).unwrap();
        assert_eq!((m.grid.rows, m.grid.cols, m.grid.stat), (8, DEFAULT_COLS, Stat::Max));
        assert_eq!(m.grid.bbox, Some(GeoBBox::new(0.0, 1.0, 0.0, 2.0).unwrap()));
        assert!(MapRequest::from_query(&query(&[("prompt", "p"), ("stat", "median")])).is_err());

        let sc = ScatterRequest::from_query(&query(&[("x", "naked"), ("y", "nude"), ("norm", "rank")])).unwrap();
        assert_eq!((sc.norm, sc.sample, sc.seed), (Normalization::Rank, None, 0));
    }

    #[test]
    fn extent_pads_degenerate_boxes() {
        let rows = vec![
            (ImageRecord::new("a", "").with_geo(GeoPoint::new(48.8, 2.3).unwrap()), normalize(&[1.0, 0.0]).unwrap()),
            (ImageRecord::new("b", ""), normalize(&[0.0, 1.0]).unwrap()),
        ];
        let store = EmbeddingStore::from_embeddings("t", 2, rows).unwrap();
        let b = corpus_extent(&store).unwrap();
        assert!(b.lat_min < 48.8 && 48.8 < b.lat_max && b.lon_min < 2.3 && 2.3 < b.lon_max);

        let rows = vec![(ImageRecord::new("a", ""), normalize(&[1.0, 0.0]).unwrap())];
        let store = EmbeddingStore::from_embeddings("t", 2, rows).unwrap();
        assert!(matches!(corpus_extent(&store), Err(AppError::Core(Error::EmptyRegion))));
    }
}
