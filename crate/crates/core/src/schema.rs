//! JSON Schemas for every wire message and for the CLI's `--json` summary.
//! The documents ship in `schemas/` and are compiled once on first use.

use std::fmt;
use std::sync::OnceLock;

use jsonschema::JSONSchema;
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WireSchema {
    DetectRequest,
    DetectResponse,
    SegmentRequest,
    SegmentResponse,
    TrainStartRequest,
    TrainStartResponse,
    EpochsResponse,
    DescribeResponse,
    InferRequest,
    /// Same document as [`WireSchema::DetectResponse`].
    InferResponse,
    CliSummary,
}

impl WireSchema {
    pub const ALL: [WireSchema; 11] = [
        WireSchema::DetectRequest,
        WireSchema::DetectResponse,
        WireSchema::SegmentRequest,
        WireSchema::SegmentResponse,
        WireSchema::TrainStartRequest,
        WireSchema::TrainStartResponse,
        WireSchema::EpochsResponse,
        WireSchema::DescribeResponse,
        WireSchema::InferRequest,
        WireSchema::InferResponse,
        WireSchema::CliSummary,
    ];

    pub fn name(self) -> &'static str {
        match self {
            WireSchema::DetectRequest => "detect_request",
            WireSchema::DetectResponse => "detect_response",
            WireSchema::SegmentRequest => "segment_request",
            WireSchema::SegmentResponse => "segment_response",
            WireSchema::TrainStartRequest => "train_start_request",
            WireSchema::TrainStartResponse => "train_start_response",
            WireSchema::EpochsResponse => "epochs_response",
            WireSchema::DescribeResponse => "describe_response",
            WireSchema::InferRequest => "infer_request",
            WireSchema::InferResponse => "infer_response",
            WireSchema::CliSummary => "cli_summary",
        }
    }

    /// The schema document text.
    pub fn source(self) -> &'static str {
        match self {
            WireSchema::DetectRequest => include_str!("../schemas/detect_request.json"),
            WireSchema::DetectResponse | WireSchema::InferResponse => {
                include_str!("../schemas/detect_response.json")
            }
            WireSchema::SegmentRequest => include_str!("../schemas/segment_request.json"),
            WireSchema::SegmentResponse => include_str!("../schemas/segment_response.json"),
            WireSchema::TrainStartRequest => include_str!("../schemas/train_start_request.json"),
            WireSchema::TrainStartResponse => include_str!("../schemas/train_start_response.json"),
            WireSchema::EpochsResponse => include_str!("../schemas/epochs_response.json"),
            WireSchema::DescribeResponse => include_str!("../schemas/describe_response.json"),
            WireSchema::InferRequest => include_str!("../schemas/infer_request.json"),
            WireSchema::CliSummary => include_str!("../schemas/cli_summary.json"),
        }
    }

    fn index(self) -> usize {
        Self::ALL.iter().position(|s| *s == self).unwrap_or_default()
    }
}

impl fmt::Display for WireSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("{schema} schema violation: {}", errors.join("; "))]
pub struct SchemaError {
    pub schema: WireSchema,
    pub errors: Vec<String>,
}

fn compiled() -> &'static [JSONSchema] {
    static CACHE: OnceLock<Vec<JSONSchema>> = OnceLock::new();
    CACHE.get_or_init(|| {
        WireSchema::ALL
            .iter()
            .map(|s| {
                let doc: Value = serde_json::from_str(s.source()).expect("bundled schema is JSON");
                JSONSchema::compile(&doc).expect("bundled schema compiles")
            })
            .collect()
    })
}

pub fn validate(schema: WireSchema, value: &Value) -> Result<(), SchemaError> {
    compiled()[schema.index()].validate(value).map_err(|errs| SchemaError {
        schema,
        errors: errs
            .map(|e| {
                let path = e.instance_path.to_string();
                if path.is_empty() {
                    e.to_string()
                } else {
                    format!("{path}: {e}")
                }
            })
            .collect(),
    })
}
