//! The embedding store and its on-disk format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        4 bytes  "CATL"
//! version      u16
//! dim          u32
//! count        u64
//! backend      u32 byte length + UTF-8
//! matrix       count * dim f32, row-major
//! records      u64 byte length + JSONL, one ImageRecord per line, count lines
//! ```

use std::collections::HashMap;
use std::path::Path;

use crate::corpus::{ensure_unique_ids, ImageRecord};
use crate::embedding::{l2_norm, Embedding};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"CATL";
pub const FORMAT_VERSION: u16 = 1;

/// Tolerance on stored row norms.
pub const ROW_NORM_TOLERANCE: f64 = 1e-5;

/// An immutable corpus of unit-norm embeddings, row `i` belonging to record `i`.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    backend_name: String,
    dim: usize,
    matrix: Vec<f32>,
    records: Vec<ImageRecord>,
    by_id: HashMap<String, usize>,
}

impl PartialEq for EmbeddingStore {
    /// Bit-level equality of the matrix, plus records and backend.
    fn eq(&self, other: &Self) -> bool {
        self.backend_name == other.backend_name
            && self.dim == other.dim
            && self.records == other.records
            && self.matrix.len() == other.matrix.len()
            && self
                .matrix
                .iter()
                .zip(&other.matrix)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    pub fn new(
        backend_name: impl Into<String>,
        dim: usize,
        matrix: Vec<f32>,
        records: Vec<ImageRecord>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidStore("dimensionality must be positive".into()));
        }
        if matrix.len() != dim * records.len() {
            return Err(Error::InvalidStore(format!(
                "{} matrix values for {} records of dimensionality {dim}",
                matrix.len(),
                records.len()
            )));
        }
        for (i, row) in matrix.chunks_exact(dim).enumerate() {
            let norm = l2_norm(row);
            if (norm - 1.0).abs() > ROW_NORM_TOLERANCE {
                return Err(Error::InvalidStore(format!(
                    "row {i} ({}) has norm {norm}",
                    records[i].id
                )));
            }
        }
        ensure_unique_ids(&records)?;
        let by_id = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.id.clone(), i))
            .collect();
        Ok(EmbeddingStore {
            backend_name: backend_name.into(),
            dim,
            matrix,
            records,
            by_id,
        })
    }

    /// Builds a store from already-normalized embeddings.
    pub fn from_embeddings(
        backend_name: impl Into<String>,
        dim: usize,
        rows: Vec<(ImageRecord, Embedding)>,
    ) -> Result<Self> {
        let mut matrix = Vec::with_capacity(rows.len() * dim);
        let mut records = Vec::with_capacity(rows.len());
        for (rec, emb) in rows {
            if emb.dim() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: emb.dim(),
                });
            }
            matrix.extend_from_slice(emb.as_slice());
            records.push(rec);
        }
        Self::new(backend_name, dim, matrix, records)
    }

    pub fn backend_name(&self) -> &str {
        &self.backend_name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn matrix(&self) -> &[f32] {
        &self.matrix
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.matrix[i * self.dim..(i + 1) * self.dim]
    }

    pub fn embedding(&self, i: usize) -> Embedding {
        Embedding::from_unit_unchecked(self.row(i).to_vec())
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn record(&self, id: &str) -> Option<&ImageRecord> {
        self.position(id).map(|i| &self.records[i])
    }

    /// The subset of rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut matrix = Vec::with_capacity(indices.len() * self.dim);
        let mut records = Vec::with_capacity(indices.len());
        for &i in indices {
            matrix.extend_from_slice(self.row(i));
            records.push(self.records[i].clone());
        }
        Self::new(self.backend_name.clone(), self.dim, matrix, records)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut table = String::new();
        for r in &self.records {
            table.push_str(&serde_json::to_string(r).expect("records always serialize"));
            table.push('\n');
        }
        let mut out = Vec::with_capacity(
            4 + 2 + 4 + 8 + 4 + self.backend_name.len() + self.matrix.len() * 4 + 8 + table.len(),
        );
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.records.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.backend_name.len() as u32).to_le_bytes());
        out.extend_from_slice(self.backend_name.as_bytes());
        for v in &self.matrix {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(table.len() as u64).to_le_bytes());
        out.extend_from_slice(table.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(r.corrupt_at(0, format!("bad magic {magic:?}, expected {MAGIC:?}")));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != FORMAT_VERSION {
            return Err(r.corrupt_at(
                4,
                format!("unsupported version: expected {FORMAT_VERSION}, found {version}"),
            ));
        }
        let dim = u32::from_le_bytes(r.array("dimensionality")?) as usize;
        let count_at = r.pos;
        let count = u64::from_le_bytes(r.array("count")?);
        let name_len = u32::from_le_bytes(r.array("backend name length")?) as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len, "backend name")?)
            .map_err(|e| r.corrupt_at(name_at as u64, format!("backend name is not UTF-8: {e}")))?
            .to_string();

        let matrix_at = r.pos;
        let matrix_len = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| r.corrupt_at(count_at as u64, format!("count {count} overflows")))?;
        let raw = r.take(matrix_len, "matrix")?;
        let matrix: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let table_len = u64::from_le_bytes(r.array("record table length")?);
        let table_at = r.pos;
        let table_len = usize::try_from(table_len)
            .map_err(|_| r.corrupt_at(table_at as u64 - 8, "record table length overflows".into()))?;
        let table = std::str::from_utf8(r.take(table_len, "record table")?)
            .map_err(|e| r.corrupt_at(table_at as u64, format!("record table is not UTF-8: {e}")))?;
        if r.pos != bytes.len() {
            return Err(r.corrupt_at(
                r.pos as u64,
                format!("{} trailing bytes", bytes.len() - r.pos),
            ));
        }

        let mut records = Vec::with_capacity(count as usize);
        let mut line_at = table_at;
        for line in table.split_terminator('\n') {
            let rec: ImageRecord = serde_json::from_str(line)
                .map_err(|e| r.corrupt_at(line_at as u64, format!("bad record: {e}")))?;
            records.push(rec);
            line_at += line.len() + 1;
        }
        if records.len() as u64 != count {
            return Err(r.corrupt_at(
                table_at as u64,
                format!("header declares {count} records, table holds {}", records.len()),
            ));
        }
        Self::new(name, dim, matrix, records).map_err(|e| match e {
            Error::InvalidStore(m) => r.corrupt_at(matrix_at as u64, m),
            Error::DuplicateId(id) => r.corrupt_at(table_at as u64, format!("duplicate id {id}")),
            other => other,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

pub fn save_store(store: &EmbeddingStore, path: &Path) -> Result<()> {
    store.save(path)
}

pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::load(path)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(self.corrupt_at(
                self.bytes.len() as u64,
                format!(
                    "truncated {what}: need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N]> {
        Ok(self.take(N, what)?.try_into().unwrap())
    }

    fn corrupt_at(&self, offset: u64, message: String) -> Error {
        Error::CorruptStore { offset, message }
    }
}
