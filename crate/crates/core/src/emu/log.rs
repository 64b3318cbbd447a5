use std::io::Write;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    /// Emulated time, seconds.
    pub timestamp: f64,
    pub actor: String,
    pub verb: String,
    /// SHA-256 of the JSON payload, hex.
    pub digest: String,
}

/// Shared, append-only interaction log. Clones write to the same log.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    inner: Arc<Mutex<Vec<LogRecord>>>,
}

pub fn payload_digest<T: Serialize + ?Sized>(payload: &T) -> String {
    let bytes = serde_json::to_vec(payload).unwrap_or_default();
    hex::encode(Sha256::digest(&bytes))
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record<T: Serialize + ?Sized>(&self, timestamp: f64, actor: &str, verb: &str, payload: &T) {
        let rec = LogRecord {
            timestamp,
            actor: actor.to_string(),
            verb: verb.to_string(),
            digest: payload_digest(payload),
        };
        self.inner.lock().expect("event log poisoned").push(rec);
    }

    pub fn records(&self) -> Vec<LogRecord> {
        self.inner.lock().expect("event log poisoned").clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("event log poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn verbs(&self) -> Vec<String> {
        self.records().into_iter().map(|r| r.verb).collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for rec in self.records() {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clones_share_records() {
        let log = EventLog::new();
        let other = log.clone();
        other.record(1.5, "A", "configure", &serde_json::json!({"x": 1}));
        assert_eq!(log.len(), 1);
        let rec = &log.records()[0];
        assert_eq!(rec.digest.len(), 64);
        assert_eq!(rec.digest, payload_digest(&serde_json::json!({"x": 1})));
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let log = EventLog::new();
        log.record(0.0, "a", "poll", "p");
        log.record(1.0, "b", "interrupt", "q");
        let mut out = Vec::new();
        log.write_jsonl(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 2);
        let first: LogRecord = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first.verb, "poll");
    }
}
