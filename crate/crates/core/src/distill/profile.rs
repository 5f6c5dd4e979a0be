use std::time::{Duration, Instant};

use base64::Engine;

use super::{DistillError, InferenceBackend, ModelProfile};

const WARM_UP_CALLS: usize = 3;

fn median_ms(mut samples: Vec<Duration>) -> f64 {
    samples.sort();
    let n = samples.len();
    let ms = |d: Duration| d.as_secs_f64() * 1e3;
    if n % 2 == 1 {
        ms(samples[n / 2])
    } else {
        (ms(samples[n / 2 - 1]) + ms(samples[n / 2])) / 2.0
    }
}

/// Times `trials` sequential inference calls over `probes` (cycled) after a
/// short warm-up. Latency is the median per-call wall time; throughput is
/// `trials` over the total wall time of the timed calls.
pub fn profile_backend(
    backend: &dyn InferenceBackend,
    probes: &[Vec<u8>],
    trials: usize,
) -> Result<ModelProfile, DistillError> {
    if probes.is_empty() || trials == 0 {
        return Err(DistillError::Config(
            "profiling needs at least one probe image and one trial".into(),
        ));
    }
    let encoded: Vec<String> = probes
        .iter()
        .map(|p| base64::engine::general_purpose::STANDARD.encode(p))
        .collect();
    for i in 0..WARM_UP_CALLS {
        backend.infer(&encoded[i % encoded.len()])?;
    }
    let mut samples = Vec::with_capacity(trials);
    let started = Instant::now();
    for i in 0..trials {
        let t = Instant::now();
        backend.infer(&encoded[i % encoded.len()])?;
        samples.push(t.elapsed());
    }
    let total = started.elapsed().as_secs_f64();
    if total <= 0.0 {
        return Err(DistillError::Precondition(
            "timed window has zero length; the clock cannot resolve this backend".into(),
        ));
    }
    let desc = backend.describe()?;
    Ok(ModelProfile {
        layers: desc.layers,
        params: desc.params,
        flops: desc.flops,
        weight_bytes: desc.weight_bytes,
        fps: Some(trials as f64 / total),
        latency_ms: Some(median_ms(samples)),
        ap: None,
    })
}
