//! Times an inference endpoint served by a local HTTP stub that takes about
//! 5 ms per request, and prints the size and speed profile.
//!
//! Run with `cargo run --example profile`.

use std::thread;
use std::time::Duration;

use herdpipe::distill::{profile_backend, HttpTrainer};

fn main() -> anyhow::Result<()> {
    let server = tiny_http::Server::http("127.0.0.1:0").map_err(|e| anyhow::anyhow!("{e}"))?;
    let url = format!("http://{}", server.server_addr().to_ip().expect("tcp listener"));
    let worker = thread::spawn(move || {
        for mut req in server.incoming_requests() {
            let mut body = String::new();
            let _ = req.as_reader().read_to_string(&mut body);
            let reply = if req.url() == "/v1/infer" {
                thread::sleep(Duration::from_millis(5));
                r#"{"detections": [], "model": "student", "latency_ms": 5.0}"#
            } else if req.url() == "/v1/model/describe" {
                r#"{"layers": 168, "params": 11100000, "flops": 2.84e10, "weight_bytes": 21500000}"#
            } else {
                "{}"
            };
            let last = req.url() == "/v1/shutdown";
            let _ = req.respond(tiny_http::Response::from_string(reply));
            if last {
                break;
            }
        }
    });

    let backend = HttpTrainer::new(&url, Duration::from_secs(5));
    let probes = vec![vec![0u8; 64], vec![1u8; 64]];
    let p = profile_backend(&backend, &probes, 30)?;
    println!(
        "layers {}, params {:.1}M, flops {:.1}G, weights {:.1}Mb",
        p.layers,
        p.params as f64 / 1e6,
        p.flops / 1e9,
        p.weight_bytes as f64 / 1e6
    );
    println!(
        "median latency {:.2} ms, {:.1} fps",
        p.latency_ms.unwrap_or_default(),
        p.fps.unwrap_or_default()
    );

    let _ = ureq::get(&format!("{url}/v1/shutdown")).call();
    let _ = worker.join();
    Ok(())
}
