//! External model process driven over the [`wire`](super::wire) protocol.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::wire::{ErrorReply, PredictReply, PredictRequest, Request};
use super::{Adapter, AdapterError, Capabilities, Prediction, Probe};

pub struct ExecAdapter {
    command: String,
    child: Child,
    stdin: BufWriter<ChildStdin>,
    stdout: BufReader<ChildStdout>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Reply {
    Error(ErrorReply),
    Predict(PredictReply),
}

impl ExecAdapter {
    /// Starts `command` through `sh -c`. The child's stderr is inherited.
    pub fn spawn(command: &str) -> Result<ExecAdapter, AdapterError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(command)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| AdapterError::Unreachable(format!("{command}: {e}")))?;
        let stdin = BufWriter::new(child.stdin.take().expect("piped stdin"));
        let stdout = BufReader::new(child.stdout.take().expect("piped stdout"));
        Ok(ExecAdapter { command: command.to_string(), child, stdin, stdout })
    }

    fn round_trip(&mut self, request: &Request) -> std::io::Result<String> {
        serde_json::to_writer(&mut self.stdin, request)?;
        self.stdin.write_all(b"\n")?;
        self.stdin.flush()?;
        let mut line = String::new();
        if self.stdout.read_line(&mut line)? == 0 {
            let status = self.child.try_wait().ok().flatten();
            let what = status.map_or("closed its output".to_string(), |s| format!("exited ({s})"));
            return Err(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, format!("adapter process {what}")));
        }
        Ok(line)
    }
}

impl Adapter for ExecAdapter {
    fn identity(&self) -> String {
        format!("exec:{}", self.command)
    }

    fn handshake(&mut self) -> Result<Capabilities, AdapterError> {
        let line = self.round_trip(&Request::Hello).map_err(|e| AdapterError::Unreachable(e.to_string()))?;
        if let Ok(err) = serde_json::from_str::<ErrorReply>(&line) {
            return Err(AdapterError::MalformedHandshake(err.error));
        }
        let caps: Capabilities =
            serde_json::from_str(&line).map_err(|e| AdapterError::MalformedHandshake(format!("{e}: {}", line.trim_end())))?;
        caps.validate()?;
        Ok(caps)
    }

    fn predict(&mut self, probes: &[Probe], want_embedding: bool) -> Result<Vec<Prediction>, AdapterError> {
        let total = probes.len();
        let mut out = Vec::with_capacity(total);
        for (completed, probe) in probes.iter().enumerate() {
            let crashed = |message: String| AdapterError::Crashed { completed, total, message };
            let line = self
                .round_trip(&Request::Predict(PredictRequest::new(probe, want_embedding)))
                .map_err(|e| crashed(e.to_string()))?;
            match serde_json::from_str::<Reply>(&line) {
                Ok(Reply::Predict(r)) => out.push(r.into()),
                Ok(Reply::Error(e)) => return Err(crashed(e.error)),
                Err(e) => return Err(crashed(format!("unparseable reply: {e}"))),
            }
        }
        Ok(out)
    }
}

impl Drop for ExecAdapter {
    fn drop(&mut self) {
        let _ = serde_json::to_writer(&mut self.stdin, &Request::Bye);
        let _ = self.stdin.write_all(b"\n");
        let _ = self.stdin.flush();
        let deadline = Instant::now() + Duration::from_secs(2);
        while Instant::now() < deadline {
            match self.child.try_wait() {
                Ok(Some(_)) | Err(_) => return,
                Ok(None) => std::thread::sleep(Duration::from_millis(10)),
            }
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adapter::{Perturbation, Session};

    fn probe(id: &str) -> Probe {
        Probe {
            instance_id: id.into(),
            tokens: vec!["what".into()],
            image_id: "img".into(),
            image_override: Default::default(),
            question_override: Default::default(),
            probe_id: Perturbation::Full.to_string(),
        }
    }

    #[test]
    fn missing_embedding_dim_is_a_malformed_handshake() {
        let script = r#"read l; echo '{"has_embedding":true,"supports_mean_image":true,"supports_mean_question":true,"preferred_metric":"cosine"}'; cat >/dev/null"#;
        let mut a = ExecAdapter::spawn(script).unwrap();
        assert!(matches!(a.handshake(), Err(AdapterError::MalformedHandshake(_))));
    }

    #[test]
    fn silent_process_is_unreachable() {
        let mut a = ExecAdapter::spawn("exit 0").unwrap();
        assert!(matches!(a.handshake(), Err(AdapterError::Unreachable(_))));
    }

    #[test]
    fn crash_mid_batch_reports_last_good_index() {
        // answers the handshake and two predictions, then dies
        let script = r#"read l; echo '{"has_embedding":false,"supports_mean_image":false,"supports_mean_question":false,"preferred_metric":"euclidean"}'
read l; echo '{"id":"a","probe_id":"full","answer":"x"}'
read l; echo '{"id":"b","probe_id":"full","answer":"y"}'
exit 3"#;
        let mut s = Session::open(Box::new(ExecAdapter::spawn(script).unwrap())).unwrap();
        let err = s.predict(&[probe("a"), probe("b"), probe("c"), probe("d")], false).unwrap_err();
        assert!(matches!(err, AdapterError::Crashed { completed: 2, total: 4, .. }), "{err:?}");
        assert_eq!(err.last_good_index(), Some(1));
    }
}
