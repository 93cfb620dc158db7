//! Choosing an encoder from a backend spec string.

use std::sync::Arc;

use atlas_core::http_backend::HttpEncoder;
use atlas_core::{EncoderBackend, ToyEncoder};

use crate::AppError;

/// Name recorded in stores built over HTTP when no other name is configured.
pub const DEFAULT_HTTP_NAME: &str = "http";

/// `toy`, or `http:<endpoint>` together with a dimensionality.
pub fn open_backend(spec: &str, dim: Option<usize>, name: Option<&str>) -> Result<Arc<dyn EncoderBackend>, AppError> {
    if spec == "toy" {
        return Ok(Arc::new(ToyEncoder::new()));
    }
    if let Some(endpoint) = spec.strip_prefix("http:") {
        let dim = dim
            .filter(|&d| d > 0)
            .ok_or_else(|| AppError::Usage("an http backend needs a positive --dim".into()))?;
        let name = name.unwrap_or(DEFAULT_HTTP_NAME);
        return Ok(Arc::new(HttpEncoder::new(name, endpoint, dim)));
    }
    Err(AppError::Usage(format!("unknown backend {spec:?}; expected \"toy\" or \"http:<url>\"")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn specs() {
        assert_eq!(open_backend("toy", None, None).unwrap().name(), "toy");
        let b = open_backend("http:http://127.0.0.1:1/e", Some(8), Some("clip")).unwrap();
        assert_eq!((b.name(), b.dimensionality()), ("clip", 8));
        assert!(open_backend("http:http://x", None, None).is_err());
        assert!(open_backend("onnx:model.onnx", None, None).is_err());
    }
}
