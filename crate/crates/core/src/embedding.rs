//! The shared text-image embedding space: unit-norm vectors, prompts, the
//! encoder contract, cosine scoring and zero-shot classification.
//!
//! Every concept score in the crate is a cosine between unit-norm vectors and
//! is produced by [`score_rows`]; the corpus, map and scatter layers all go
//! through it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Parallelism;

/// Norms below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-12;

/// Vectors whose norm is already this close to 1 are returned unchanged, which
/// makes normalization idempotent on its own output.
const UNIT_SLACK: f64 = 2.5e-7;

pub const DEFAULT_TEMPLATE: &str = "a photo of {}";
pub const DEFAULT_LOGIT_SCALE: f64 = 100.0;

/// A unit-norm embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(Vec<f32>);

impl Embedding {
    pub fn as_slice(&self) -> &[f32] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f32> {
        self.0
    }

    /// Wraps a vector the caller guarantees to be unit-norm.
    pub(crate) fn from_unit_unchecked(values: Vec<f32>) -> Self {
        Embedding(values)
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt()
}

/// Scales `v` to unit Euclidean norm.
pub fn normalize(v: &[f32]) -> Result<Embedding> {
    let norm = l2_norm(v);
    if !norm.is_finite() || norm < ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    if (norm - 1.0).abs() <= UNIT_SLACK {
        return Ok(Embedding(v.to_vec()));
    }
    Ok(Embedding(
        v.iter().map(|&x| (f64::from(x) / norm) as f32).collect(),
    ))
}

/// Dot product accumulated in f64.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| f64::from(x) * f64::from(y))
        .sum()
}

pub fn cosine_similarity(a: &Embedding, b: &Embedding) -> Result<f32> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(clamp_unit(dot(&a.0, &b.0)))
}

/// Rounds to f32, clamps to [-1, 1] and folds -0.0 into +0.0 so equal scores
/// compare equal under `total_cmp`.
#[inline]
pub(crate) fn clamp_unit(x: f64) -> f32 {
    (x as f32).clamp(-1.0, 1.0) + 0.0
}

/// Cosine of every `dim`-wide row of `matrix` against `query`, in row order.
pub fn score_rows(matrix: &[f32], query: &Embedding, exec: Parallelism) -> Result<Vec<f32>> {
    let dim = query.dim();
    if dim == 0 || matrix.len() % dim != 0 {
        return Err(Error::DimMismatch {
            expected: dim,
            found: matrix.len(),
        });
    }
    let rows = matrix.len() / dim;
    Ok(exec.map_range(rows, |i| {
        clamp_unit(dot(&matrix[i * dim..(i + 1) * dim], query.as_slice()))
    }))
}

/// A free-text concept and the template it is wrapped in before encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    pub template: String,
}

impl Prompt {
    /// `text` wrapped in [`DEFAULT_TEMPLATE`].
    pub fn new(text: impl Into<String>) -> Self {
        Prompt {
            text: text.into(),
            template: DEFAULT_TEMPLATE.to_string(),
        }
    }

    /// `text` passed through as-is.
    pub fn verbatim(text: impl Into<String>) -> Self {
        Prompt {
            text: text.into(),
            template: "{}".to_string(),
        }
    }

    pub fn with_template(text: impl Into<String>, template: impl Into<String>) -> Result<Self> {
        let template = template.into();
        if template.matches("{}").count() != 1 {
            return Err(Error::BadTemplate(template));
        }
        Ok(Prompt {
            text: text.into(),
            template,
        })
    }

    pub fn render(&self) -> String {
        self.template.replacen("{}", &self.text, 1)
    }
}

impl fmt::Display for Prompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}

/// Similarity of one image to one rendered prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptScore {
    pub image_id: String,
    pub score: f32,
}

/// Why an encoder could not produce a vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncodeError {
    /// The input itself is unusable (undecodable image, empty text). Ingestion
    /// drops the record and reports it.
    Input(String),
    /// The backend failed. Ingestion aborts.
    Backend(String),
}

impl fmt::Display for EncodeError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EncodeError::Input(m) => write!(f, "bad input: {m}"),
            EncodeError::Backend(m) => write!(f, "backend failure: {m}"),
        }
    }
}

impl From<EncodeError> for Error {
    fn from(e: EncodeError) -> Self {
        match e {
            EncodeError::Input(m) => Error::Decode(m),
            EncodeError::Backend(m) => Error::Backend(m),
        }
    }
}

/// An image/text encoder mapping both media into one embedding space.
///
/// Implementations must be deterministic and always return vectors of
/// [`dimensionality`](EncoderBackend::dimensionality). Raw outputs need not be
/// normalized; the engine normalizes them.
pub trait EncoderBackend: Send + Sync {
    fn name(&self) -> &str;

    fn dimensionality(&self) -> usize;

    fn encode_image(&self, bytes: &[u8]) -> std::result::Result<Vec<f32>, EncodeError>;

    fn encode_text(&self, text: &str) -> std::result::Result<Vec<f32>, EncodeError>;

    /// Whether the engine may call this backend from several threads at once.
    /// Backends returning `false` are only ever called sequentially.
    fn concurrent(&self) -> bool {
        true
    }
}

fn check_dim(backend: &dyn EncoderBackend, raw: &[f32]) -> Result<()> {
    if raw.len() != backend.dimensionality() {
        return Err(Error::Backend(format!(
            "{} declared dimensionality {} but returned {} values",
            backend.name(),
            backend.dimensionality(),
            raw.len()
        )));
    }
    Ok(())
}

/// Encodes the rendered prompt and normalizes it.
pub fn encode_prompt(backend: &dyn EncoderBackend, prompt: &Prompt) -> Result<Embedding> {
    let raw = backend.encode_text(&prompt.render()).map_err(|e| match e {
        EncodeError::Input(m) => Error::Backend(format!("prompt {:?} rejected: {m}", prompt.render())),
        EncodeError::Backend(m) => Error::Backend(m),
    })?;
    check_dim(backend, &raw)?;
    normalize(&raw).map_err(|_| Error::Backend(format!("zero embedding for prompt {:?}", prompt.render())))
}

/// Encodes image bytes and normalizes the result. Input problems (including an
/// all-zero embedding) come back as [`EncodeError::Input`].
pub fn encode_image(backend: &dyn EncoderBackend, bytes: &[u8]) -> std::result::Result<Embedding, EncodeError> {
    let raw = backend.encode_image(bytes)?;
    if raw.len() != backend.dimensionality() {
        return Err(EncodeError::Backend(format!(
            "{} declared dimensionality {} but returned {} values",
            backend.name(),
            backend.dimensionality(),
            raw.len()
        )));
    }
    normalize(&raw).map_err(|_| EncodeError::Input("image encodes to a zero vector".into()))
}

/// Softmax of `logit_scale * similarities`.
pub fn softmax_scaled(similarities: &[f32], logit_scale: f64) -> Result<Vec<f64>> {
    if similarities.len() < 2 {
        return Err(Error::InsufficientClasses(similarities.len()));
    }
    if !(logit_scale.is_finite() && logit_scale > 0.0) {
        return Err(Error::BadLogitScale(logit_scale));
    }
    let logits: Vec<f64> = similarities
        .iter()
        .map(|&s| logit_scale * f64::from(s))
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

/// Zero-shot classification of one image against candidate prompts: a
/// probability per prompt, in prompt order.
pub fn zero_shot_classify(
    image: &Embedding,
    prompts: &[Prompt],
    backend: &dyn EncoderBackend,
    logit_scale: f64,
) -> Result<Vec<f64>> {
    if prompts.len() < 2 {
        return Err(Error::InsufficientClasses(prompts.len()));
    }
    let sims = prompts
        .iter()
        .map(|p| cosine_similarity(image, &encode_prompt(backend, p)?))
        .collect::<Result<Vec<_>>>()?;
    softmax_scaled(&sims, logit_scale)
}
