//! Remote oracle over stateless JSON-over-HTTP.

use std::sync::atomic::{AtomicU64, Ordering};
use std::thread::sleep;
use std::time::{Duration, Instant};

use super::wire::{ClassifyRequest, ClassifyResponse, HealthResponse};
use super::{Oracle, OracleError, OracleVerdict};
use crate::image_ops::Image;

pub type HealthInfo = HealthResponse;

/// `POST {base}/classify` client. Connection failures are retried with
/// backoff; any non-200 status is a transport error.
pub struct HttpOracle {
    base: String,
    token: Option<String>,
    agent: ureq::Agent,
    retries: u32,
    next_id: AtomicU64,
    side: Option<usize>,
    classes: Option<usize>,
}

impl HttpOracle {
    pub fn new(base: &str, token: Option<String>) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(60)))
            .build()
            .into();
        HttpOracle {
            base: base.trim_end_matches('/').to_string(),
            token,
            agent,
            retries: 2,
            next_id: AtomicU64::new(0),
            side: None,
            classes: None,
        }
    }

    pub fn with_retries(mut self, retries: u32) -> Self {
        self.retries = retries;
        self
    }

    /// `GET {base}/health`; also records side and class count for later checks.
    pub fn health(&mut self) -> Result<HealthInfo, OracleError> {
        let url = format!("{}/health", self.base);
        let mut req = self.agent.get(&url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.call().map_err(|e| OracleError::Transport(format!("{url}: {e}")))?;
        if resp.status() != 200 {
            return Err(OracleError::Transport(format!("{url}: HTTP {}", resp.status())));
        }
        let info: HealthInfo = resp
            .body_mut()
            .read_json()
            .map_err(|e| OracleError::Transport(format!("{url}: malformed health reply: {e}")))?;
        self.side = Some(info.side);
        self.classes = Some(info.classes);
        Ok(info)
    }

    fn post(&self, body: &ClassifyRequest) -> Result<ClassifyResponse, OracleError> {
        let url = format!("{}/classify", self.base);
        let mut attempt = 0;
        loop {
            let mut req = self.agent.post(&url);
            if let Some(t) = &self.token {
                req = req.header("Authorization", &format!("Bearer {t}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    if resp.status() != 200 {
                        return Err(OracleError::Transport(format!("{url}: HTTP {}", resp.status())));
                    }
                    return resp
                        .body_mut()
                        .read_json()
                        .map_err(|e| OracleError::Transport(format!("{url}: malformed reply: {e}")));
                }
                Err(e) if attempt >= self.retries => {
                    return Err(OracleError::Transport(format!("{url}: {e}")));
                }
                Err(_) => {
                    sleep(Duration::from_millis(100 << attempt));
                    attempt += 1;
                }
            }
        }
    }
}

impl Oracle for HttpOracle {
    fn query(&self, image: &Image, top_k: usize) -> Result<OracleVerdict, OracleError> {
        let id = format!("q{}", self.next_id.fetch_add(1, Ordering::SeqCst));
        let request = ClassifyRequest::new(id.clone(), image, top_k)?;
        let start = Instant::now();
        let mut verdict = self.post(&request)?.into_verdict(&id)?;
        verdict.latency = Some(start.elapsed());
        Ok(verdict)
    }

    fn side(&self) -> Option<usize> {
        self.side
    }

    fn classes(&self) -> Option<usize> {
        self.classes
    }
}
