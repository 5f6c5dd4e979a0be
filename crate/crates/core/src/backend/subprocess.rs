use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::Serialize;

use super::{
    excerpt, parse_checked, BackendError, DetectRequest, DetectResponse, SegmentRequest, SegmentResponse, Segmenter,
    Teacher,
};
use crate::schema::WireSchema;

struct Session {
    child: Child,
    stdin: ChildStdin,
    stdout: BufReader<ChildStdout>,
}

/// A long-lived child process answering one JSON request per line.
/// Requests are serialized: one is in flight at a time.
pub struct SubprocessBackend {
    program: String,
    session: Mutex<Session>,
}

impl SubprocessBackend {
    pub fn spawn(command: &[String]) -> Result<Self, BackendError> {
        let (program, args) = command
            .split_first()
            .ok_or_else(|| BackendError::Config("empty command".into()))?;
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Permanent(format!("cannot start `{program}`: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(Self {
            program: program.clone(),
            session: Mutex::new(Session { child, stdin, stdout }),
        })
    }

    pub fn call<B: Serialize, T: DeserializeOwned>(&self, body: &B, response: WireSchema) -> Result<T, BackendError> {
        let line = serde_json::to_string(body).map_err(|e| BackendError::Permanent(e.to_string()))?;
        let mut s = self
            .session
            .lock()
            .map_err(|_| BackendError::Permanent("backend session poisoned".into()))?;
        let gone = |e: std::io::Error| BackendError::Permanent(format!("`{}`: {e}", self.program));
        writeln!(s.stdin, "{line}").map_err(gone)?;
        s.stdin.flush().map_err(gone)?;
        let mut reply = String::new();
        let n = s.stdout.read_line(&mut reply).map_err(gone)?;
        if n == 0 {
            return Err(BackendError::Permanent(format!("`{}` closed its output", self.program)));
        }
        if let Ok(serde_json::Value::Object(map)) = serde_json::from_str::<serde_json::Value>(&reply) {
            if let Some(err) = map.get("error").filter(|_| map.len() == 1) {
                return Err(BackendError::Permanent(format!(
                    "`{}` reported: {}",
                    self.program,
                    excerpt(&err.to_string())
                )));
            }
        }
        parse_checked(response, reply.trim_end())
    }
}

impl Drop for SubprocessBackend {
    fn drop(&mut self) {
        if let Ok(s) = self.session.get_mut() {
            let _ = s.child.kill();
            let _ = s.child.wait();
        }
    }
}

impl Teacher for SubprocessBackend {
    fn detect(&self, req: &DetectRequest) -> Result<DetectResponse, BackendError> {
        self.call(req, WireSchema::DetectResponse)
    }
}

impl Segmenter for SubprocessBackend {
    fn segment(&self, req: &SegmentRequest) -> Result<SegmentResponse, BackendError> {
        self.call(req, WireSchema::SegmentResponse)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ImagePayload;

    fn shell(script: &str) -> Vec<String> {
        vec!["sh".into(), "-c".into(), script.into()]
    }

    #[test]
    fn line_protocol() {
        let reply =
            r#"{"detections":[{"bbox":[1,2,3,4],"prompt_index":0,"confidence":0.9}],"model":"echo","latency_ms":1}"#;
        let b = SubprocessBackend::spawn(&shell(&format!("while read l; do echo '{reply}'; done"))).unwrap();
        let req = DetectRequest {
            image: ImagePayload::ImagePath("a.png".into()),
            prompts: vec!["camel".into()],
            box_threshold: 0.35,
            text_threshold: 0.25,
        };
        for _ in 0..2 {
            let r = b.detect(&req).unwrap();
            assert_eq!(r.detections[0].bbox, [1.0, 2.0, 3.0, 4.0]);
        }
    }

    #[test]
    fn error_lines_and_exit() {
        let b = SubprocessBackend::spawn(&shell(r#"read l; echo '{"error":"boom"}'"#)).unwrap();
        let req = SegmentRequest {
            image: ImagePayload::ImagePath("a.png".into()),
            boxes: vec![],
        };
        assert!(matches!(b.segment(&req), Err(BackendError::Permanent(m)) if m.contains("boom")));
        assert!(matches!(b.segment(&req), Err(BackendError::Permanent(_))));
    }
}
