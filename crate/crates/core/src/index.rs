//! Exact ranked retrieval over a store.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::{encode_prompt, EncoderBackend, Embedding, Prompt};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::scoring::{check_backend, score_embedding};
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub id: String,
    pub score: f32,
    pub rank: usize,
}

/// Score descending, then id ascending.
pub fn rank_order(a: (f32, &str), b: (f32, &str)) -> Ordering {
    b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1))
}

/// Indices of the `k` best entries under [`rank_order`], best first.
pub(crate) fn best_k(scores: &[f32], ids: &[&str], k: usize) -> Vec<usize> {
    let cmp = |&a: &usize, &b: &usize| rank_order((scores[a], ids[a]), (scores[b], ids[b]));
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    idx
}

pub(crate) fn hits_from(store: &EmbeddingStore, scores: &[f32], order: &[usize]) -> Vec<SearchHit> {
    order
        .iter()
        .enumerate()
        .map(|(r, &i)| SearchHit {
            id: store.records()[i].id.clone(),
            score: scores[i],
            rank: r + 1,
        })
        .collect()
}

/// The `k` records most similar to `query` (all of them if the corpus is
/// smaller), by exact full scan.
pub fn top_k(store: &EmbeddingStore, query: &Embedding, k: usize, exec: Parallelism) -> Result<Vec<SearchHit>> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be at least 1".into()));
    }
    if query.dim() != store.dim() {
        return Err(Error::DimMismatch {
            expected: store.dim(),
            found: query.dim(),
        });
    }
    if store.is_empty() {
        return Ok(Vec::new());
    }
    let scores = score_embedding(store, query, exec)?;
    let ids: Vec<&str> = store.records().iter().map(|r| r.id.as_str()).collect();
    Ok(hits_from(store, &scores, &best_k(&scores, &ids, k)))
}

/// Encodes the rendered prompt, then [`top_k`].
pub fn search_text(
    store: &EmbeddingStore,
    prompt: &Prompt,
    backend: &dyn EncoderBackend,
    k: usize,
    exec: Parallelism,
) -> Result<Vec<SearchHit>> {
    check_backend(store, backend)?;
    let query = encode_prompt(backend, prompt)?;
    top_k(store, &query, k, exec)
}
