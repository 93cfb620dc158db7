//! Embedding a list of records into an [`EmbeddingStore`].

use crate::corpus::{read_uri, ImageRecord};
use crate::embedding::{encode_image, EncodeError, EncoderBackend, Embedding};
use crate::error::{Error, Result};
use crate::exec::Parallelism;
use crate::store::EmbeddingStore;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbedOptions {
    pub batch_size: usize,
    pub parallelism: Parallelism,
}

impl Default for EmbedOptions {
    fn default() -> Self {
        EmbedOptions {
            batch_size: 64,
            parallelism: Parallelism::Auto,
        }
    }
}

/// A record left out of the store, with the reason.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FailedRecord {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EmbedReport {
    pub embedded: usize,
    pub failed: Vec<FailedRecord>,
}

enum Outcome {
    Row(Embedding),
    Dropped(String),
}

fn embed_one(record: &ImageRecord, backend: &dyn EncoderBackend) -> Result<Outcome> {
    let bytes = match read_uri(&record.uri) {
        Ok(b) => b,
        Err(e) => return Ok(Outcome::Dropped(e.to_string())),
    };
    match encode_image(backend, &bytes) {
        Ok(e) => Ok(Outcome::Row(e)),
        Err(EncodeError::Input(m)) => Ok(Outcome::Dropped(m)),
        Err(EncodeError::Backend(m)) => Err(Error::Backend(format!("{}: {m}", record.id))),
    }
}

/// Encodes every record's image in batches. Rows come out in record order
/// whatever the batch size or parallelism; unreadable or undecodable images are
/// dropped and listed in the report.
pub fn embed_corpus(
    records: &[ImageRecord],
    backend: &dyn EncoderBackend,
    options: EmbedOptions,
) -> Result<(EmbeddingStore, EmbedReport)> {
    if records.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if options.batch_size == 0 {
        return Err(Error::InvalidParameter("batch size must be positive".into()));
    }
    crate::corpus::ensure_unique_ids(records)?;
    let exec = if backend.concurrent() {
        options.parallelism
    } else {
        Parallelism::Sequential
    };

    let mut rows = Vec::with_capacity(records.len());
    let mut report = EmbedReport::default();
    for batch in records.chunks(options.batch_size) {
        let outcomes = exec.map(batch, |r| embed_one(r, backend));
        for (record, outcome) in batch.iter().zip(outcomes) {
            match outcome? {
                Outcome::Row(e) => rows.push((record.clone(), e)),
                Outcome::Dropped(reason) => {
                    log::warn!("dropping {}: {reason}", record.id);
                    report.failed.push(FailedRecord {
                        id: record.id.clone(),
                        reason,
                    });
                }
            }
        }
        log::debug!("embedded {}/{} records", rows.len() + report.failed.len(), records.len());
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    report.embedded = rows.len();
    let store = EmbeddingStore::from_embeddings(backend.name(), backend.dimensionality(), rows)?;
    Ok((store, report))
}
