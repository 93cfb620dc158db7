//! Concept analysis of image corpora through a shared text-image embedding
//! space: free-text retrieval, geospatial concept heat maps, and two-prompt
//! concept scatters.
//!
//! All analyses score images through [`scoring::score_corpus`], so a prompt's
//! score for an image is the same number whether it shows up in a search, a
//! map cell or a scatter axis.

pub mod ann;
pub mod concept_map;
pub mod corpus;
pub mod embedding;
pub mod error;
pub mod exec;
pub mod geo;
#[cfg(feature = "http")]
pub mod http_backend;
pub mod index;
pub mod ingest;
pub mod scatter;
pub mod scoring;
pub mod stats;
pub mod store;
pub mod street;
pub mod toy;

pub use concept_map::{aggregate_map, contrast_map, extremes, HeatGrid, MapOptions, Stat};
pub use corpus::{scan_corpus, GeoPoint, ImageRecord};
pub use embedding::{
    cosine_similarity, normalize, zero_shot_classify, ConceptScore, EncoderBackend, Embedding, Prompt,
};
pub use error::{Error, Result};
pub use exec::Parallelism;
pub use geo::{sample_points, GeoBBox, Grid};
pub use index::{search_text, top_k, SearchHit};
pub use ingest::{embed_corpus, EmbedOptions, EmbedReport};
pub use scatter::{correlation, residual_extremes, scatter, AxisSpec, Normalization, ScatterPoint};
pub use scoring::score_corpus;
pub use store::{load_store, save_store, EmbeddingStore};
pub use toy::ToyEncoder;
