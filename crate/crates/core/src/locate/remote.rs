//! Blocking HTTP client for the model sidecar.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;
use ureq::Agent;

use super::wire::{
    DetectRequest, DetectResponse, ErrorResponse, HealthResponse, ParseRequest, ParseResponse, TrackInitRequest,
    TrackInitResponse, TrackNextRequest, TrackNextResponse,
};

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SidecarError {
    #[error("sidecar unreachable: {0}")]
    Transport(String),
    #[error("sidecar returned {status}: {message}")]
    Status { status: u16, message: String },
    #[error("malformed sidecar response: {0}")]
    Protocol(String),
}

impl SidecarError {
    pub fn status(&self) -> Option<u16> {
        match self {
            Self::Status { status, .. } => Some(*status),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SidecarClient {
    base: String,
    agent: Agent,
}

impl SidecarClient {
    pub fn new(base_url: &str, timeout: Duration) -> Self {
        let agent: Agent =
            Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(false).build().into();
        Self { base: base_url.trim_end_matches('/').to_string(), agent }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn decode<R: DeserializeOwned>(status: u16, body: &str) -> Result<R, SidecarError> {
        if !(200..300).contains(&status) {
            let message = serde_json::from_str::<ErrorResponse>(body)
                .map(|e| e.error)
                .unwrap_or_else(|_| body.chars().take(200).collect());
            return Err(SidecarError::Status { status, message });
        }
        serde_json::from_str(body).map_err(|e| SidecarError::Protocol(e.to_string()))
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, path: &str, body: &B) -> Result<R, SidecarError> {
        let url = format!("{}{path}", self.base);
        let mut resp = self.agent.post(&url).send_json(body).map_err(|e| SidecarError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_string()
            .map_err(|e| SidecarError::Transport(e.to_string()))?;
        Self::decode(status, &text)
    }

    pub fn health(&self) -> Result<HealthResponse, SidecarError> {
        let url = format!("{}/health", self.base);
        let mut resp = self.agent.get(&url).call().map_err(|e| SidecarError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(|e| SidecarError::Transport(e.to_string()))?;
        Self::decode(status, &text)
    }

    /// Free-text roadmap to script CSV.
    pub fn parse(&self, text: &str) -> Result<String, SidecarError> {
        let r: ParseResponse = self.post("/parse", &ParseRequest { text: text.to_string() })?;
        Ok(r.csv)
    }

    pub fn detect(&self, frame_b64: String, description: &str) -> Result<DetectResponse, SidecarError> {
        self.post("/detect", &DetectRequest { frame: frame_b64, description: description.to_string() })
    }

    pub fn track_init(&self, frame_b64: String, bbox: [u32; 4]) -> Result<TrackInitResponse, SidecarError> {
        self.post("/track/init", &TrackInitRequest { frame: frame_b64, bbox })
    }

    pub fn track_next(&self, session_id: &str, frame_b64: String) -> Result<TrackNextResponse, SidecarError> {
        self.post("/track/next", &TrackNextRequest { session_id: session_id.to_string(), frame: frame_b64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_bodies_become_errors() {
        let e = SidecarClient::decode::<HealthResponse>(404, r#"{"error":"target not found"}"#).unwrap_err();
        assert_eq!(e, SidecarError::Status { status: 404, message: "target not found".into() });
        let e = SidecarClient::decode::<HealthResponse>(500, "boom").unwrap_err();
        assert_eq!(e.status(), Some(500));
        let e = SidecarClient::decode::<DetectResponse>(200, r#"{"bbox":[1,2]}"#).unwrap_err();
        assert!(matches!(e, SidecarError::Protocol(_)));
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let c = SidecarClient::new("http://127.0.0.1:9/", Duration::from_millis(300));
        assert_eq!(c.base_url(), "http://127.0.0.1:9");
        assert!(matches!(c.health(), Err(SidecarError::Transport(_))));
    }
}
