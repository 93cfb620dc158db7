//! Two-prompt concept scatters: each image placed by its similarity to an X
//! prompt and a Y prompt, with its signed distance from the diagonal.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::{EncoderBackend, Prompt};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::scoring::prompt_scores;
use crate::stats::{pearson, rank_normalize, zscores};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    #[default]
    None,
    Rank,
    Zscore,
}

impl FromStr for Normalization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Normalization::None),
            "rank" => Ok(Normalization::Rank),
            "zscore" => Ok(Normalization::Zscore),
            other => Err(Error::InvalidParameter(format!(
                "unknown normalization {other:?} (none|rank|zscore)"
            ))),
        }
    }
}

impl Normalization {
    pub fn as_str(&self) -> &'static str {
        match self {
            Normalization::None => "none",
            Normalization::Rank => "rank",
            Normalization::Zscore => "zscore",
        }
    }

    pub fn apply(&self, scores: &[f32]) -> Result<Vec<f32>> {
        Ok(match self {
            Normalization::None => scores.to_vec(),
            Normalization::Rank => rank_normalize(scores).into_iter().map(|v| v as f32).collect(),
            Normalization::Zscore => zscores(scores)?.into_iter().map(|v| v as f32).collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub prompt: Prompt,
    pub normalization: Normalization,
}

impl AxisSpec {
    pub fn new(prompt: Prompt, normalization: Normalization) -> Self {
        AxisSpec { prompt, normalization }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub id: String,
    pub x: f32,
    pub y: f32,
    /// Signed distance from `y = x`; positive above the diagonal.
    pub residual: f32,
}

/// `(y - x) / sqrt(2)`. The f32 subtraction is exact in sign (gradual
/// underflow), and the scaling never rounds a nonzero difference to zero.
pub fn diagonal_residual(x: f32, y: f32) -> f32 {
    (y - x) * std::f32::consts::FRAC_1_SQRT_2
}

impl ScatterPoint {
    pub fn new(id: impl Into<String>, x: f32, y: f32) -> Self {
        ScatterPoint {
            id: id.into(),
            x,
            y,
            residual: diagonal_residual(x, y),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ScatterOptions {
    /// Keep a seeded uniform sample of this many images when the corpus is larger.
    pub sample: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterMeta {
    pub x: AxisSpec,
    pub y: AxisSpec,
    pub backend: String,
    pub seed: u64,
    pub sample: Option<usize>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scatter {
    pub points: Vec<ScatterPoint>,
    pub meta: ScatterMeta,
}

impl Scatter {
    /// Correlation between the axes. A scatter of one prompt against itself
    /// measures nothing, so its correlation is undefined rather than 1.
    pub fn correlation(&self) -> Result<f64> {
        if self.meta.x == self.meta.y {
            return Err(Error::DegenerateScores("both axes are the same prompt and normalization".into()));
        }
        correlation(&self.points)
    }
}

/// Seeded uniform subsample of `0..n`, ascending; all of `0..n` when `m >= n`.
pub fn sample_indices(n: usize, m: Option<usize>, seed: u64) -> Vec<usize> {
    match m {
        Some(m) if m < n => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

/// Places every image (or a seeded sample) on the two prompt axes. Points keep
/// store order; residuals are taken after normalization.
pub fn scatter(
    store: &EmbeddingStore,
    axis_x: &AxisSpec,
    axis_y: &AxisSpec,
    backend: &dyn EncoderBackend,
    options: ScatterOptions,
    exec: Parallelism,
) -> Result<Scatter> {
    let raw_x = prompt_scores(store, &axis_x.prompt, backend, exec)?;
    let raw_y = prompt_scores(store, &axis_y.prompt, backend, exec)?;
    let keep = sample_indices(store.len(), options.sample, options.seed);
    let pick = |v: &[f32]| keep.iter().map(|&i| v[i]).collect::<Vec<f32>>();
    let xs = axis_x
        .normalization
        .apply(&pick(&raw_x))
        .map_err(|_| Error::DegenerateScores(format!("x axis {:?} has zero variance", axis_x.prompt.render())))?;
    let ys = axis_y
        .normalization
        .apply(&pick(&raw_y))
        .map_err(|_| Error::DegenerateScores(format!("y axis {:?} has zero variance", axis_y.prompt.render())))?;
    let points: Vec<ScatterPoint> = keep
        .iter()
        .zip(xs.iter().zip(&ys))
        .map(|(&i, (&x, &y))| ScatterPoint::new(store.records()[i].id.clone(), x, y))
        .collect();
    Ok(Scatter {
        meta: ScatterMeta {
            x: axis_x.clone(),
            y: axis_y.clone(),
            backend: backend.name().to_string(),
            seed: options.seed,
            sample: options.sample,
            count: points.len(),
        },
        points,
    })
}

/// Pearson correlation between the axes.
pub fn correlation(points: &[ScatterPoint]) -> Result<f64> {
    let xs: Vec<f64> = points.iter().map(|p| f64::from(p.x)).collect();
    let ys: Vec<f64> = points.iter().map(|p| f64::from(p.y)).collect();
    pearson(&xs, &ys)
}

/// The `n` points furthest above the diagonal and the `n` furthest below,
/// ties to the smaller id.
pub fn residual_extremes(points: &[ScatterPoint], n: usize) -> (Vec<ScatterPoint>, Vec<ScatterPoint>) {
    let mut above: Vec<&ScatterPoint> = points.iter().collect();
    above.sort_by(|a, b| b.residual.total_cmp(&a.residual).then_with(|| a.id.cmp(&b.id)));
    let mut below: Vec<&ScatterPoint> = points.iter().collect();
    below.sort_by(|a, b| a.residual.total_cmp(&b.residual).then_with(|| a.id.cmp(&b.id)));
    let take = |v: Vec<&ScatterPoint>| v.into_iter().take(n).cloned().collect();
    (take(above), take(below))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Jsonl,
}

impl ExportFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "csv" => Some(ExportFormat::Csv),
            "jsonl" | "ndjson" => Some(ExportFormat::Jsonl),
            _ => None,
        }
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

/// Writes `id,x,y,residual` rows (CSV with header, or one JSON object per
/// line) plus a `<path>.meta.json` sidecar. Floats use the shortest decimal
/// that reads back to the same f32.
pub fn export_scatter(scatter: &Scatter, path: &Path, format: ExportFormat) -> Result<()> {
    if scatter.points.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let io = |e: std::io::Error| Error::io(path, e);
    match format {
        ExportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(|e| Error::io(path, e.into()))?;
            w.write_record(["id", "x", "y", "residual"]).map_err(|e| Error::io(path, e.into()))?;
            for p in &scatter.points {
                w.write_record([p.id.clone(), p.x.to_string(), p.y.to_string(), p.residual.to_string()])
                    .map_err(|e| Error::io(path, e.into()))?;
            }
            w.flush().map_err(io)?;
        }
        ExportFormat::Jsonl => {
            let mut w = BufWriter::new(File::create(path).map_err(io)?);
            for p in &scatter.points {
                serde_json::to_writer(&mut w, p).map_err(|e| Error::io(path, e.into()))?;
                w.write_all(b"\n").map_err(io)?;
            }
            w.flush().map_err(io)?;
        }
    }
    let meta = sidecar_path(path);
    let body = serde_json::to_vec_pretty(&scatter.meta).expect("meta always serializes");
    std::fs::write(&meta, body).map_err(|e| Error::io(&meta, e))
}

/// Reads points written by [`export_scatter`].
pub fn read_scatter(path: &Path, format: ExportFormat) -> Result<Vec<ScatterPoint>> {
    let bad = |line: usize, message: String| Error::Manifest { line, message };
    match format {
        ExportFormat::Csv => {
            let mut r = csv::Reader::from_path(path).map_err(|e| Error::io(path, e.into()))?;
            let mut out = Vec::new();
            for (i, rec) in r.records().enumerate() {
                let rec = rec.map_err(|e| bad(i + 2, e.to_string()))?;
                let num = |k: usize| -> Result<f32> {
                    rec.get(k)
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| bad(i + 2, format!("column {k} is not a number")))
                };
                out.push(ScatterPoint {
                    id: rec.get(0).unwrap_or_default().to_string(),
                    x: num(1)?,
                    y: num(2)?,
                    residual: num(3)?,
                });
            }
            Ok(out)
        }
        ExportFormat::Jsonl => {
            let f = File::open(path).map_err(|e| Error::io(path, e))?;
            BufReader::new(f)
                .lines()
                .enumerate()
                .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
                .map(|(i, l)| {
                    let l = l.map_err(|e| Error::io(path, e))?;
                    serde_json::from_str(&l).map_err(|e| bad(i + 1, e.to_string()))
                })
                .collect()
        }
    }
}
