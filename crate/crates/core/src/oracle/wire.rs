//! JSON messages of the oracle protocol, shared by the HTTP and line-based transports.
//!
//! Request: `{"id": string, "image_png_b64": string, "top_k": int}`.
//! Response: `{"id": string, "labels": [{"class": int, "prob": float}]}`.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{ClassProb, OracleError, OracleVerdict};
use crate::image_ops::{decode_png, encode_png, Image};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyRequest {
    pub id: String,
    pub image_png_b64: String,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub id: String,
    pub labels: Vec<ClassProb>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub model: String,
    pub side: usize,
    pub classes: usize,
}

impl ClassifyRequest {
    pub fn new(id: impl Into<String>, image: &Image, top_k: usize) -> Result<Self, OracleError> {
        Ok(ClassifyRequest {
            id: id.into(),
            image_png_b64: STANDARD.encode(encode_png(image)?),
            top_k,
        })
    }

    pub fn png_bytes(&self) -> Result<Vec<u8>, OracleError> {
        STANDARD
            .decode(&self.image_png_b64)
            .map_err(|e| OracleError::Transport(format!("bad base64 image: {e}")))
    }

    pub fn image(&self) -> Result<Image, OracleError> {
        Ok(decode_png(&self.png_bytes()?)?)
    }
}

impl ClassifyResponse {
    pub fn from_verdict(id: impl Into<String>, verdict: &OracleVerdict) -> Self {
        ClassifyResponse {
            id: id.into(),
            labels: verdict.probs.clone().unwrap_or_else(|| vec![ClassProb { class: verdict.top, prob: 1.0 }]),
        }
    }

    /// Validates the reply against the request it answers.
    pub fn into_verdict(self, expected_id: &str) -> Result<OracleVerdict, OracleError> {
        if self.id != expected_id {
            return Err(OracleError::Transport(format!("response id `{}` does not match `{expected_id}`", self.id)));
        }
        OracleVerdict::from_labels(self.labels)
    }
}
