//! Line-delimited JSON protocol spoken by external adapters.
//!
//! Each request is one line on the adapter's stdin and gets exactly one reply
//! line on its stdout:
//!
//! ```text
//! {"op":"hello"}                      -> capabilities object
//! {"op":"predict","id":..,"probe_id":..,"tokens":[..],"image_id":..,
//!  "image_override":"none","question_override":"mean","want_embedding":true}
//!                                     -> {"id":..,"probe_id":..,"answer":..,"embedding":[..]}
//! {"op":"bye"}                        -> (no reply, process exits)
//! ```
//!
//! A reply of the form `{"error": "..."}` reports a failed request.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{Adapter, AdapterError, Override, Prediction, Probe};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "lowercase")]
pub enum Request {
    Hello,
    Predict(PredictRequest),
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictRequest {
    pub id: String,
    pub probe_id: String,
    pub tokens: Vec<String>,
    pub image_id: String,
    pub image_override: Override,
    pub question_override: Override,
    pub want_embedding: bool,
}

impl PredictRequest {
    pub fn new(probe: &Probe, want_embedding: bool) -> Self {
        PredictRequest {
            id: probe.instance_id.clone(),
            probe_id: probe.probe_id.clone(),
            tokens: probe.tokens.clone(),
            image_id: probe.image_id.clone(),
            image_override: probe.image_override,
            question_override: probe.question_override,
            want_embedding,
        }
    }

    pub fn probe(&self) -> Probe {
        Probe {
            instance_id: self.id.clone(),
            tokens: self.tokens.clone(),
            image_id: self.image_id.clone(),
            image_override: self.image_override,
            question_override: self.question_override,
            probe_id: self.probe_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReply {
    pub id: String,
    pub probe_id: String,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding: Option<Vec<f64>>,
}

impl From<Prediction> for PredictReply {
    fn from(p: Prediction) -> Self {
        PredictReply { id: p.instance_id, probe_id: p.probe_id, answer: p.answer, embedding: p.embedding }
    }
}

impl From<PredictReply> for Prediction {
    fn from(r: PredictReply) -> Self {
        Prediction { instance_id: r.id, probe_id: r.probe_id, answer: r.answer, embedding: r.embedding }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReply {
    pub error: String,
}

fn reply<W: Write, T: Serialize>(out: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Answers protocol requests from `input` using `adapter` until `bye` or EOF.
/// Per-request failures are reported in-band and do not stop the loop.
pub fn serve<R: BufRead, W: Write>(adapter: &mut dyn Adapter, input: R, mut output: W) -> Result<(), AdapterError> {
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let request: Request = match serde_json::from_str(&line) {
            Ok(r) => r,
            Err(e) => {
                reply(&mut output, &ErrorReply { error: format!("bad request: {e}") })?;
                continue;
            }
        };
        match request {
            Request::Bye => break,
            Request::Hello => match adapter.handshake() {
                Ok(caps) => reply(&mut output, &caps)?,
                Err(e) => reply(&mut output, &ErrorReply { error: e.to_string() })?,
            },
            Request::Predict(req) => match adapter.predict(&[req.probe()], req.want_embedding) {
                Ok(mut preds) if preds.len() == 1 => reply(&mut output, &PredictReply::from(preds.remove(0)))?,
                Ok(preds) => reply(&mut output, &ErrorReply { error: format!("{} predictions for one probe", preds.len()) })?,
                Err(e) => reply(&mut output, &ErrorReply { error: e.to_string() })?,
            },
        }
    }
    Ok(())
}
