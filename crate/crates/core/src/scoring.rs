//! Per-image concept scores over a store. This is the only place corpus
//! scores are computed; retrieval, maps and scatters all call into it.

use crate::embedding::{encode_prompt, score_rows, ConceptScore, EncoderBackend, Embedding, Prompt};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::store::EmbeddingStore;

/// Fails unless `backend` is the encoder the store was built with.
pub fn check_backend(store: &EmbeddingStore, backend: &dyn EncoderBackend) -> Result<()> {
    if backend.dimensionality() != store.dim() {
        return Err(Error::DimMismatch {
            expected: store.dim(),
            found: backend.dimensionality(),
        });
    }
    if backend.name() != store.backend_name() {
        return Err(Error::Backend(format!(
            "store was embedded with backend {:?}, not {:?}",
            store.backend_name(),
            backend.name()
        )));
    }
    Ok(())
}

/// Cosine of every row against an already-encoded query, in store order.
pub fn score_embedding(store: &EmbeddingStore, query: &Embedding, exec: Parallelism) -> Result<Vec<f32>> {
    if store.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if query.dim() != store.dim() {
        return Err(Error::DimMismatch {
            expected: store.dim(),
            found: query.dim(),
        });
    }
    score_rows(store.matrix(), query, exec)
}

/// Raw scores for a prompt, in store order.
pub fn prompt_scores(
    store: &EmbeddingStore,
    prompt: &Prompt,
    backend: &dyn EncoderBackend,
    exec: Parallelism,
) -> Result<Vec<f32>> {
    if store.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    check_backend(store, backend)?;
    let query = encode_prompt(backend, prompt)?;
    score_embedding(store, &query, exec)
}

/// One [`ConceptScore`] per image, in store order.
pub fn score_corpus(
    store: &EmbeddingStore,
    prompt: &Prompt,
    backend: &dyn EncoderBackend,
    exec: Parallelism,
) -> Result<Vec<ConceptScore>> {
    let scores = prompt_scores(store, prompt, backend, exec)?;
    Ok(store
        .records()
        .iter()
        .zip(scores)
        .map(|(r, score)| ConceptScore {
            image_id: r.id.clone(),
            score,
        })
        .collect())
}
