use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    excerpt, parse_checked, BackendError, DetectRequest, DetectResponse, SegmentRequest, SegmentResponse, Segmenter,
    Teacher,
};
use crate::schema::WireSchema;

/// JSON-over-HTTP client for the teacher, segmenter and trainer endpoints.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    agent: ureq::Agent,
}

fn classify(err: ureq::Error) -> BackendError {
    match err {
        ureq::Error::Status(code, resp) => {
            let body = resp.into_string().unwrap_or_default();
            let msg = format!("HTTP {code}: {}", excerpt(&body));
            if code >= 500 || code == 429 {
                BackendError::Transient(msg)
            } else {
                BackendError::Permanent(msg)
            }
        }
        ureq::Error::Transport(t) => BackendError::Transient(t.to_string()),
    }
}

impl HttpBackend {
    pub fn new(base: &str, timeout: Duration) -> Self {
        Self {
            base: base.trim_end_matches('/').to_string(),
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn read(resp: ureq::Response) -> Result<String, BackendError> {
        resp.into_string()
            .map_err(|e| BackendError::Transient(format!("reading response body: {e}")))
    }

    pub fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
        response: WireSchema,
    ) -> Result<T, BackendError> {
        let payload = serde_json::to_string(body).map_err(|e| BackendError::Permanent(e.to_string()))?;
        let resp = self
            .agent
            .post(&format!("{}{path}", self.base))
            .set("Content-Type", "application/json")
            .send_string(&payload)
            .map_err(classify)?;
        parse_checked(response, &Self::read(resp)?)
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str, response: WireSchema) -> Result<T, BackendError> {
        let resp = self
            .agent
            .get(&format!("{}{path}", self.base))
            .call()
            .map_err(classify)?;
        parse_checked(response, &Self::read(resp)?)
    }

    /// GET returning any JSON document, unchecked.
    pub fn get_raw(&self, path: &str) -> Result<serde_json::Value, BackendError> {
        let resp = self
            .agent
            .get(&format!("{}{path}", self.base))
            .call()
            .map_err(classify)?;
        let body = Self::read(resp)?;
        serde_json::from_str(&body).map_err(|e| BackendError::protocol(format!("invalid JSON: {e}"), &body))
    }
}

impl Teacher for HttpBackend {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, BackendError> {
        self.post("/v1/detect", req, WireSchema::DetectResponse)
    }
}

impl Segmenter for HttpBackend {
    fn segment(&self, req: &SegmentRequest) -> Result<SegmentResponse, BackendError> {
        self.post("/v1/segment", req, WireSchema::SegmentResponse)
    }
}
