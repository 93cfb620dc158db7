//! Bounding boxes, lattices and the equirectangular cell grid.
//!
//! Cells are plain degree ranges. Row 0 is the southernmost band, column 0 the
//! westernmost. Cell `i` along an axis covers `[edge(i), edge(i + 1))`, except
//! the last cell, which also includes the maximum edge.

use serde::{Deserialize, Serialize};

use crate::corpus::GeoPoint;
use crate::error::{Error, Result};

/// Absorbs rounding in `span / interval` when counting lattice steps.
const LATTICE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl GeoBBox {
    /// Rejects inverted, empty, out-of-range and antimeridian-crossing boxes
    /// (the latter show up as `lon_min >= lon_max`).
    pub fn new(lat_min: f64, lat_max: f64, lon_min: f64, lon_max: f64) -> Result<Self> {
        let all_finite = [lat_min, lat_max, lon_min, lon_max].iter().all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::BadBBox("coordinates must be finite".into()));
        }
        if lat_min < -90.0 || lat_max > 90.0 || lon_min < -180.0 || lon_max > 180.0 {
            return Err(Error::BadBBox("coordinates out of range".into()));
        }
        if lat_min >= lat_max {
            return Err(Error::BadBBox(format!("lat_min {lat_min} must be below lat_max {lat_max}")));
        }
        if lon_min >= lon_max {
            return Err(Error::BadBBox(format!(
                "lon_min {lon_min} must be below lon_max {lon_max} (antimeridian-crossing boxes are not supported)"
            )));
        }
        Ok(GeoBBox {
            lat_min,
            lat_max,
            lon_min,
            lon_max,
        })
    }

    pub fn lat_span(&self) -> f64 {
        self.lat_max - self.lat_min
    }

    pub fn lon_span(&self) -> f64 {
        self.lon_max - self.lon_min
    }

    pub fn contains(&self, p: GeoPoint) -> bool {
        (self.lat_min..=self.lat_max).contains(&p.lat) && (self.lon_min..=self.lon_max).contains(&p.lon)
    }
}

impl std::str::FromStr for GeoBBox {
    type Err = Error;

    /// `lat_min,lon_min,lat_max,lon_max` (south-west corner, then north-east).
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::BadBBox(format!("expected lat_min,lon_min,lat_max,lon_max, got {s:?}")))?;
        match parts[..] {
            [lat_min, lon_min, lat_max, lon_max] => GeoBBox::new(lat_min, lat_max, lon_min, lon_max),
            _ => Err(Error::BadBBox(format!("expected 4 numbers, got {}", parts.len()))),
        }
    }
}

fn lattice_steps(span: f64, interval: f64) -> usize {
    (span / interval + LATTICE_EPS).floor() as usize + 1
}

/// Number of points [`sample_points`] returns.
pub fn lattice_size(bbox: &GeoBBox, interval: f64) -> usize {
    lattice_steps(bbox.lat_span(), interval) * lattice_steps(bbox.lon_span(), interval)
}

/// The regular lattice `lat_min + i * interval` x `lon_min + j * interval`
/// inside the box, row-major (latitude outer).
pub fn sample_points(bbox: &GeoBBox, interval: f64) -> Result<Vec<GeoPoint>> {
    let max_interval = bbox.lat_span().min(bbox.lon_span());
    if !(interval.is_finite() && interval > 0.0 && interval <= max_interval * (1.0 + LATTICE_EPS)) {
        return Err(Error::BadInterval(interval));
    }
    let lat_steps = lattice_steps(bbox.lat_span(), interval);
    let lon_steps = lattice_steps(bbox.lon_span(), interval);
    let mut points = Vec::with_capacity(lat_steps * lon_steps);
    for i in 0..lat_steps {
        let lat = (bbox.lat_min + i as f64 * interval).min(bbox.lat_max);
        for j in 0..lon_steps {
            let lon = (bbox.lon_min + j as f64 * interval).min(bbox.lon_max);
            points.push(GeoPoint { lat, lon });
        }
    }
    Ok(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub bbox: GeoBBox,
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn new(bbox: GeoBBox, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::BadGrid(format!("grid must be at least 1x1, got {rows}x{cols}")));
        }
        Ok(Grid { bbox, rows, cols })
    }

    /// Southern edge of row `i`; `lat_edge(rows)` is `lat_max`.
    pub fn lat_edge(&self, i: usize) -> f64 {
        edge(self.bbox.lat_min, self.bbox.lat_max, self.rows, i)
    }

    /// Western edge of column `j`; `lon_edge(cols)` is `lon_max`.
    pub fn lon_edge(&self, j: usize) -> f64 {
        edge(self.bbox.lon_min, self.bbox.lon_max, self.cols, j)
    }

    /// The cell holding `p`, or `None` outside the box.
    pub fn assign_cell(&self, p: GeoPoint) -> Option<(usize, usize)> {
        if !self.bbox.contains(p) {
            return None;
        }
        let r = bin(p.lat, self.rows, |i| self.lat_edge(i));
        let c = bin(p.lon, self.cols, |j| self.lon_edge(j));
        Some((r, c))
    }

    pub fn cell_count(&self) -> usize {
        self.rows * self.cols
    }
}

fn edge(min: f64, max: f64, n: usize, i: usize) -> f64 {
    if i >= n {
        max
    } else {
        min + (max - min) * i as f64 / n as f64
    }
}

/// Index of the half-open bin holding `x`, assuming `edge(0) <= x <= edge(n)`.
/// The initial guess is corrected against the same edges used for export.
fn bin(x: f64, n: usize, edge: impl Fn(usize) -> f64) -> usize {
    let lo = edge(0);
    let hi = edge(n);
    let mut i = (((x - lo) / (hi - lo)) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize;
    while i > 0 && x < edge(i) {
        i -= 1;
    }
    while i + 1 < n && x >= edge(i + 1) {
        i += 1;
    }
    i
}

pub fn assign_cell(p: GeoPoint, grid: &Grid) -> Option<(usize, usize)> {
    grid.assign_cell(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit() -> GeoBBox {
        GeoBBox::new(0.0, 1.0, 0.0, 1.0).unwrap()
    }

    fn pt(lat: f64, lon: f64) -> GeoPoint {
        GeoPoint { lat, lon }
    }

    #[test]
    fn lattice_examples() {
        let pts = sample_points(&unit(), 0.5).unwrap();
        assert_eq!(pts.len(), 9);
        assert_eq!(pts[0], pt(0.0, 0.0));
        assert_eq!(pts[1], pt(0.0, 0.5));
        assert_eq!(pts[8], pt(1.0, 1.0));

        let corners = sample_points(&unit(), 1.0).unwrap();
        assert_eq!(corners, vec![pt(0.0, 0.0), pt(0.0, 1.0), pt(1.0, 0.0), pt(1.0, 1.0)]);

        assert!(matches!(sample_points(&unit(), 0.0), Err(Error::BadInterval(_))));
        assert!(matches!(sample_points(&unit(), -0.1), Err(Error::BadInterval(_))));
        assert!(matches!(sample_points(&unit(), 1.5), Err(Error::BadInterval(_))));
        assert!(matches!(sample_points(&unit(), f64::NAN), Err(Error::BadInterval(_))));
    }

    #[test]
    fn lattice_absorbs_decimal_rounding() {
        // 0.3 / 0.1 is 2.9999999999999996 in binary floating point
        let b = GeoBBox::new(0.0, 0.3, 0.0, 0.3).unwrap();
        assert_eq!(sample_points(&b, 0.1).unwrap().len(), 16);
    }

    #[test]
    fn bbox_validation() {
        assert!(GeoBBox::new(1.0, 0.0, 0.0, 1.0).is_err());
        assert!(GeoBBox::new(0.0, 1.0, 170.0, -170.0).is_err());
        assert!(GeoBBox::new(-91.0, 0.0, 0.0, 1.0).is_err());
        assert!(GeoBBox::new(0.0, 0.0, 0.0, 1.0).is_err());
        let b: GeoBBox = "48.81,2.22,48.91,2.47".parse().unwrap();
        assert_eq!(b, GeoBBox::new(48.81, 48.91, 2.22, 2.47).unwrap());
        assert!("1,2,3".parse::<GeoBBox>().is_err());
    }

    #[test]
    fn half_open_cells_with_inclusive_max() {
        let g = Grid::new(unit(), 2, 2).unwrap();
        assert_eq!(g.assign_cell(pt(0.25, 0.25)), Some((0, 0)));
        assert_eq!(g.assign_cell(pt(0.5, 0.5)), Some((1, 1)));
        assert_eq!(g.assign_cell(pt(1.0, 1.0)), Some((1, 1)));
        assert_eq!(g.assign_cell(pt(0.0, 0.0)), Some((0, 0)));
        assert_eq!(g.assign_cell(pt(0.49999, 0.5)), Some((0, 1)));
        assert_eq!(g.assign_cell(pt(1.0000001, 0.5)), None);
        assert_eq!(g.assign_cell(pt(0.5, -0.0001)), None);
        assert!(Grid::new(unit(), 0, 2).is_err());
    }

    proptest! {
        #[test]
        fn lattice_size_formula(
            lat_min in -80.0f64..80.0, lat_span in 0.01f64..10.0,
            lon_min in -170.0f64..170.0, lon_span in 0.01f64..10.0,
            frac in 0.01f64..1.0,
        ) {
            let b = GeoBBox::new(lat_min, (lat_min + lat_span).min(90.0), lon_min, (lon_min + lon_span).min(180.0)).unwrap();
            let interval = b.lat_span().min(b.lon_span()) * frac;
            let pts = sample_points(&b, interval).unwrap();
            let expected = ((b.lat_span() / interval + 1e-9).floor() as usize + 1)
                * ((b.lon_span() / interval + 1e-9).floor() as usize + 1);
            prop_assert_eq!(pts.len(), expected);
            prop_assert!(pts.iter().all(|p| b.contains(*p)));
        }

        #[test]
        fn every_inside_point_lands_in_its_edges(
            rows in 1usize..80, cols in 1usize..80,
            u in 0.0f64..=1.0, v in 0.0f64..=1.0,
        ) {
            let b = GeoBBox::new(48.8156, 48.9022, 2.2242, 2.4699).unwrap();
            let g = Grid::new(b, rows, cols).unwrap();
            let p = pt(b.lat_min + u * b.lat_span(), b.lon_min + v * b.lon_span());
            let p = pt(p.lat.min(b.lat_max), p.lon.min(b.lon_max));
            let (r, c) = g.assign_cell(p).unwrap();
            prop_assert!(g.lat_edge(r) <= p.lat);
            prop_assert!(p.lat < g.lat_edge(r + 1) || (r + 1 == rows && p.lat == b.lat_max));
            prop_assert!(g.lon_edge(c) <= p.lon);
            prop_assert!(p.lon < g.lon_edge(c + 1) || (c + 1 == cols && p.lon == b.lon_max));
        }
    }
}
