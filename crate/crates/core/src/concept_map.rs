//! Concept heat maps over geo-tagged corpora: per-image scores binned into a
//! lat/lon grid, aggregated per cell and min-max normalized to heat.

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::corpus::GeoPoint;
use crate::embedding::{ConceptScore, EncoderBackend, Prompt};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::geo::Grid;
use crate::scoring::prompt_scores;
use crate::stats::zscores;
use crate::store::EmbeddingStore;

pub const DEFAULT_ROWS: usize = 64;
pub const DEFAULT_COLS: usize = 64;
pub const DEFAULT_MIN_COUNT: usize = 3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stat {
    #[default]
    Mean,
    Max,
}

impl FromStr for Stat {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(Stat::Mean),
            "max" => Ok(Stat::Max),
            other => Err(Error::InvalidParameter(format!("unknown statistic {other:?} (mean|max)"))),
        }
    }
}

impl Stat {
    pub fn as_str(&self) -> &'static str {
        match self {
            Stat::Mean => "mean",
            Stat::Max => "max",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MapOptions {
    pub grid: Grid,
    pub stat: Stat,
    /// Cells with fewer members get no heat.
    pub min_count: usize,
}

impl MapOptions {
    pub fn new(grid: Grid) -> Self {
        MapOptions {
            grid,
            stat: Stat::Mean,
            min_count: DEFAULT_MIN_COUNT,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub count: usize,
    /// Statistic over member scores; `None` for empty cells.
    pub aggregate: Option<f64>,
    /// Normalized aggregate in [0, 1]; `None` below `min_count`.
    pub heat: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatGrid {
    pub grid: Grid,
    pub stat: Stat,
    pub min_count: usize,
    /// Row-major, `grid.rows * grid.cols` cells; row 0 is the southern band.
    pub cells: Vec<Cell>,
}

impl HeatGrid {
    pub fn cell(&self, row: usize, col: usize) -> &Cell {
        &self.cells[row * self.grid.cols + col]
    }

    pub fn total_count(&self) -> usize {
        self.cells.iter().map(|c| c.count).sum()
    }

    /// GeoJSON FeatureCollection with one polygon per non-empty cell.
    /// Coordinates are `[lon, lat]`; rings run counter-clockwise.
    pub fn to_geojson(&self) -> Value {
        let g = &self.grid;
        let mut features = Vec::new();
        for r in 0..g.rows {
            for c in 0..g.cols {
                let cell = self.cell(r, c);
                if cell.count == 0 {
                    continue;
                }
                let (s, n) = (g.lat_edge(r), g.lat_edge(r + 1));
                let (w, e) = (g.lon_edge(c), g.lon_edge(c + 1));
                features.push(json!({
                    "type": "Feature",
                    "geometry": {
                        "type": "Polygon",
                        "coordinates": [[[w, s], [e, s], [e, n], [w, n], [w, s]]],
                    },
                    "properties": {
                        "row": r,
                        "col": c,
                        "count": cell.count,
                        "aggregate": cell.aggregate,
                        "heat": cell.heat,
                    },
                }));
            }
        }
        json!({
            "type": "FeatureCollection",
            "bbox": [g.bbox.lon_min, g.bbox.lat_min, g.bbox.lon_max, g.bbox.lat_max],
            "properties": {
                "rows": g.rows,
                "cols": g.cols,
                "stat": self.stat.as_str(),
                "min_count": self.min_count,
                "total_count": self.total_count(),
            },
            "features": features,
        })
    }

    /// Plain matrices (row 0 south) of counts, aggregates and heats.
    pub fn to_matrix_json(&self) -> Value {
        let g = &self.grid;
        let grid_of = |f: &dyn Fn(&Cell) -> Value| -> Vec<Vec<Value>> {
            (0..g.rows)
                .map(|r| (0..g.cols).map(|c| f(self.cell(r, c))).collect())
                .collect()
        };
        json!({
            "bbox": g.bbox,
            "rows": g.rows,
            "cols": g.cols,
            "stat": self.stat.as_str(),
            "min_count": self.min_count,
            "count": grid_of(&|c| json!(c.count)),
            "aggregate": grid_of(&|c| json!(c.aggregate)),
            "heat": grid_of(&|c| json!(c.heat)),
        })
    }
}

/// Min-max normalizes the defined values to [0, 1]. When every defined value is
/// equal, each becomes 0.5.
pub fn min_max_heat(values: &[Option<f64>]) -> Vec<Option<f64>> {
    let defined = values.iter().flatten();
    let min = defined.clone().copied().fold(f64::INFINITY, f64::min);
    let max = defined.copied().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .map(|v| {
            v.map(|x| {
                if max > min {
                    (x - min) / (max - min)
                } else {
                    0.5
                }
            })
        })
        .collect()
}

/// Bins per-image values (in store order) by location and aggregates them.
/// Records without geo or outside the box are ignored.
pub fn bin_values(
    geos: &[Option<GeoPoint>],
    values: &[f64],
    options: &MapOptions,
    exec: Parallelism,
) -> Result<HeatGrid> {
    if geos.len() != values.len() {
        return Err(Error::InvalidParameter(format!(
            "{} locations for {} values",
            geos.len(),
            values.len()
        )));
    }
    let grid = options.grid;
    let assigned = exec.map(geos, |g| g.and_then(|p| grid.assign_cell(p)));

    let mut members: Vec<Vec<f64>> = vec![Vec::new(); grid.cell_count()];
    for (cell, &v) in assigned.iter().zip(values) {
        if let Some((r, c)) = cell {
            members[r * grid.cols + c].push(v);
        }
    }
    if members.iter().all(Vec::is_empty) {
        return Err(Error::EmptyRegion);
    }

    let aggregates: Vec<Option<f64>> = members
        .iter()
        .map(|m| {
            if m.is_empty() {
                return None;
            }
            Some(match options.stat {
                Stat::Mean => m.iter().sum::<f64>() / m.len() as f64,
                Stat::Max => m.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            })
        })
        .collect();
    let eligible: Vec<Option<f64>> = members
        .iter()
        .zip(&aggregates)
        .map(|(m, a)| a.filter(|_| m.len() >= options.min_count.max(1)))
        .collect();
    let heats = min_max_heat(&eligible);

    let cells = members
        .iter()
        .zip(aggregates)
        .zip(heats)
        .map(|((m, aggregate), heat)| Cell {
            count: m.len(),
            aggregate,
            heat,
        })
        .collect();
    Ok(HeatGrid {
        grid,
        stat: options.stat,
        min_count: options.min_count,
        cells,
    })
}

fn geos(store: &EmbeddingStore) -> Vec<Option<GeoPoint>> {
    store.records().iter().map(|r| r.geo).collect()
}

/// Heat map of one prompt's scores.
pub fn aggregate_map(
    store: &EmbeddingStore,
    prompt: &Prompt,
    backend: &dyn EncoderBackend,
    options: &MapOptions,
    exec: Parallelism,
) -> Result<HeatGrid> {
    let scores = prompt_scores(store, prompt, backend, exec)?;
    let values: Vec<f64> = scores.iter().map(|&s| f64::from(s)).collect();
    bin_values(&geos(store), &values, options, exec)
}

/// Per-image contrast `z(a) - z(b)`, z-scores taken over the whole corpus.
pub fn contrast_scores(scores_a: &[f32], scores_b: &[f32]) -> Result<Vec<f64>> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::InvalidParameter("score lists differ in length".into()));
    }
    let za = zscores(scores_a).map_err(|_| Error::DegenerateScores("first prompt's scores have zero variance".into()))?;
    let zb = zscores(scores_b).map_err(|_| Error::DegenerateScores("second prompt's scores have zero variance".into()))?;
    Ok(za.iter().zip(&zb).map(|(a, b)| a - b).collect())
}

/// Heat map of where prompt `a` outscores prompt `b` relative to each prompt's
/// own corpus-wide distribution.
pub fn contrast_map(
    store: &EmbeddingStore,
    prompt_a: &Prompt,
    prompt_b: &Prompt,
    backend: &dyn EncoderBackend,
    options: &MapOptions,
    exec: Parallelism,
) -> Result<HeatGrid> {
    let a = prompt_scores(store, prompt_a, backend, exec)?;
    let b = prompt_scores(store, prompt_b, backend, exec)?;
    let contrast = contrast_scores(&a, &b)?;
    bin_values(&geos(store), &contrast, options, exec)
}

/// The `n` highest and `n` lowest scores, ties to the smaller id. With `n` at
/// least the corpus size both lists hold the whole ranked corpus.
pub fn extremes(scores: &[ConceptScore], n: usize) -> (Vec<ConceptScore>, Vec<ConceptScore>) {
    let mut top: Vec<&ConceptScore> = scores.iter().collect();
    top.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.image_id.cmp(&b.image_id)));
    let mut bottom: Vec<&ConceptScore> = scores.iter().collect();
    bottom.sort_by(|a, b| a.score.total_cmp(&b.score).then_with(|| a.image_id.cmp(&b.image_id)));
    let take = |v: Vec<&ConceptScore>| v.into_iter().take(n).cloned().collect();
    (take(top), take(bottom))
}
