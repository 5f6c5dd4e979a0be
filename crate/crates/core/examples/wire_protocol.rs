//! Shows the JSON messages exchanged with model backends, checks them against
//! the bundled schemas and talks JSON lines to a shell-script backend.
//!
//! Run with `cargo run --example wire_protocol` (needs `sh`).

use std::path::Path;

use herdpipe::backend::{open_backend, BackendSpec, DetectRequest, ImagePayload};
use herdpipe::schema::{validate, WireSchema};
use serde_json::json;

fn main() -> anyhow::Result<()> {
    let request = DetectRequest {
        image: ImagePayload::path(Path::new("/data/train/images/frame_000.png")),
        prompts: vec!["camel".into(), "rope".into()],
        box_threshold: 0.35,
        text_threshold: 0.25,
    };
    let value = serde_json::to_value(&request)?;
    validate(WireSchema::DetectRequest, &value)?;
    println!("detect request: {value}");

    let bad = json!({"detections": [{"bbox": [0, 0, 5], "prompt_index": 0, "confidence": 0.9}], "model": "m", "latency_ms": 1});
    println!(
        "malformed response rejected: {}",
        validate(WireSchema::DetectResponse, &bad).unwrap_err()
    );

    let script = r#"while read line; do echo '{"detections": [{"bbox": [12, 8, 80, 60], "prompt_index": 1, "confidence": 0.77}], "model": "echo", "latency_ms": 0.1}'; done"#;
    let backend = open_backend(&BackendSpec::subprocess(vec!["sh".into(), "-c".into(), script.into()]))?;
    let reply = backend.detect(&request)?;
    for d in &reply.detections {
        println!(
            "subprocess backend: `{}` at {:?} ({})",
            request.prompts[d.prompt_index], d.bbox, d.confidence
        );
    }
    for schema in WireSchema::ALL {
        println!("schema {}", schema.name());
    }
    Ok(())
}
