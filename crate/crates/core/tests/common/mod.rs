//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use atlas_core::embedding::{normalize, EncodeError};
use atlas_core::{EmbeddingStore, EncoderBackend, GeoPoint, ImageRecord};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f32> {
    loop {
        let v: Vec<f32> = (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        if let Ok(e) = normalize(&v) {
            return e.into_inner();
        }
    }
}

/// Text encoder answering from a fixed table; images are not supported.
pub struct TableBackend {
    pub dim: usize,
    pub texts: HashMap<String, Vec<f32>>,
}

impl TableBackend {
    pub fn new(dim: usize) -> Self {
        TableBackend {
            dim,
            texts: HashMap::new(),
        }
    }

    pub fn with(mut self, text: &str, v: Vec<f32>) -> Self {
        self.texts.insert(text.to_string(), v);
        self
    }
}

impl EncoderBackend for TableBackend {
    fn name(&self) -> &str {
        "table"
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn encode_image(&self, _bytes: &[u8]) -> Result<Vec<f32>, EncodeError> {
        Err(EncodeError::Input("table backend has no image encoder".into()))
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncodeError> {
        self.texts
            .get(text)
            .cloned()
            .ok_or_else(|| EncodeError::Backend(format!("no vector for {text:?}")))
    }
}

/// A store of random unit rows with random locations in the given box, built
/// for the "table" backend.
pub fn random_geo_store(rng: &mut ChaCha8Rng, n: usize, dim: usize, lat: (f64, f64), lon: (f64, f64)) -> EmbeddingStore {
    let rows = (0..n)
        .map(|i| {
            let geo = GeoPoint::new(rng.random_range(lat.0..=lat.1), rng.random_range(lon.0..=lon.1)).unwrap();
            let rec = ImageRecord::new(format!("p{i:05}"), "").with_geo(geo);
            (rec, normalize(&random_unit(rng, dim)).unwrap())
        })
        .collect();
    EmbeddingStore::from_embeddings("table", dim, rows).unwrap()
}
