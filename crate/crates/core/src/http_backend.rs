//! Out-of-process encoder reached over a local HTTP endpoint.
//!
//! Text is POSTed as `{"text": "..."}` with `Content-Type: application/json`;
//! images are POSTed as raw bytes with `Content-Type: application/octet-stream`.
//! The endpoint answers with a JSON array of floats. HTTP 400, 415 and 422
//! mean the input was rejected; any other failure is a backend failure.

use std::time::Duration;

use crate::embedding::{EncodeError, EncoderBackend};

#[derive(Debug, Clone)]
pub struct HttpEncoder {
    name: String,
    endpoint: String,
    dim: usize,
    agent: ureq::Agent,
}

impl HttpEncoder {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>, dim: usize) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(60)))
            .http_status_as_error(false)
            .build()
            .into();
        HttpEncoder {
            name: name.into(),
            endpoint: endpoint.into(),
            dim,
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    fn finish(&self, resp: Result<ureq::http::Response<ureq::Body>, ureq::Error>) -> Result<Vec<f32>, EncodeError> {
        let mut resp = resp.map_err(|e| EncodeError::Backend(format!("{}: {e}", self.endpoint)))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| EncodeError::Backend(format!("{}: reading body: {e}", self.endpoint)))?;
        match status {
            200..=299 => serde_json::from_str::<Vec<f32>>(&body)
                .map_err(|e| EncodeError::Backend(format!("{}: expected a JSON float array: {e}", self.endpoint))),
            400 | 415 | 422 => Err(EncodeError::Input(format!("{}: HTTP {status}: {}", self.endpoint, body.trim()))),
            _ => Err(EncodeError::Backend(format!("{}: HTTP {status}: {}", self.endpoint, body.trim()))),
        }
    }
}

impl EncoderBackend for HttpEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dimensionality(&self) -> usize {
        self.dim
    }

    fn encode_image(&self, bytes: &[u8]) -> Result<Vec<f32>, EncodeError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/octet-stream")
            .send(bytes);
        self.finish(resp)
    }

    fn encode_text(&self, text: &str) -> Result<Vec<f32>, EncodeError> {
        let resp = self
            .agent
            .post(&self.endpoint)
            .header("Content-Type", "application/json")
            .send(serde_json::json!({ "text": text }).to_string());
        self.finish(resp)
    }
}
