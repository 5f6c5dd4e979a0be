use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{EpochRecord, Hyperparams, ModelDescription};
use crate::backend::{excerpt, BackendError, DetectResponse, HttpBackend};
use crate::schema::WireSchema;

/// Drives a training job. The trainer owns shuffling, batching, the forward
/// and backward passes and the losses; the orchestrator only checks what it
/// reports.
pub trait Trainer: Send + Sync {
    /// Starts a run and returns its id.
    fn start(&self, dataset_path: &str, hp: &Hyperparams) -> Result<String, BackendError>;
    /// Records for epochs `from`, `from + 1`, ... that are available so far.
    fn epochs(&self, run_id: &str, from: usize) -> Result<Vec<EpochRecord>, BackendError>;
}

/// A trained model that can be timed and described.
pub trait InferenceBackend: Send + Sync {
    fn infer(&self, image_b64: &str) -> Result<DetectResponse, BackendError>;
    fn describe(&self) -> Result<ModelDescription, BackendError>;
}

#[derive(Serialize)]
struct StartRequest<'a> {
    dataset_path: &'a str,
    hyperparams: &'a Hyperparams,
}

#[derive(Deserialize)]
struct StartResponse {
    run_id: String,
}

#[derive(Serialize)]
struct InferRequest<'a> {
    image_b64: &'a str,
}

/// Trainer and inference endpoints over HTTP.
#[derive(Debug, Clone)]
pub struct HttpTrainer {
    http: HttpBackend,
}

impl HttpTrainer {
    pub fn new(endpoint: &str, timeout: Duration) -> Self {
        Self {
            http: HttpBackend::new(endpoint, timeout),
        }
    }
}

impl Trainer for HttpTrainer {
    fn start(&self, dataset_path: &str, hp: &Hyperparams) -> Result<String, BackendError> {
        let r: StartResponse = self.http.post(
            "/v1/train/start",
            &StartRequest {
                dataset_path,
                hyperparams: hp,
            },
            WireSchema::TrainStartResponse,
        )?;
        Ok(r.run_id)
    }

    /// Records are deserialized without range checks. Out-of-range values
    /// show up later as run diagnostics.
    fn epochs(&self, run_id: &str, from: usize) -> Result<Vec<EpochRecord>, BackendError> {
        let v: serde_json::Value = self.http.get_raw(&format!("/v1/train/{run_id}/epochs?from={from}"))?;
        let body = v.to_string();
        serde_json::from_value(v).map_err(|e| BackendError::Protocol {
            reason: format!("epoch records: {e}"),
            excerpt: excerpt(&body),
        })
    }
}

impl InferenceBackend for HttpTrainer {
    fn infer(&self, image_b64: &str) -> Result<DetectResponse, BackendError> {
        self.http
            .post("/v1/infer", &InferRequest { image_b64 }, WireSchema::InferResponse)
    }

    fn describe(&self) -> Result<ModelDescription, BackendError> {
        self.http.get("/v1/model/describe", WireSchema::DescribeResponse)
    }
}
