use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Result, TriageDecision, TriageError, TriagePolicy};

/// One consistency-log entry. Contains no timestamps, so identical inputs
/// produce identical records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub model_hash: String,
    pub backend_id: String,
    pub policy_hash: String,
    pub policy: TriagePolicy,
    pub decisions: Vec<TriageDecision>,
    pub record_hash: String,
}

#[derive(Serialize)]
struct Hashed<'a> {
    model_hash: &'a str,
    backend_id: &'a str,
    policy_hash: &'a str,
    policy: &'a TriagePolicy,
    decisions: &'a [TriageDecision],
}

impl LogRecord {
    pub fn new(decisions: &[TriageDecision], model_hash: &str, policy: &TriagePolicy, backend_id: &str) -> Self {
        let policy_hash = policy.snapshot_hash();
        let body = Hashed { model_hash, backend_id, policy_hash: &policy_hash, policy, decisions };
        let record_hash = hex::encode(Sha256::digest(serde_json::to_vec(&body).expect("log body serializes")));
        Self {
            model_hash: model_hash.to_string(),
            backend_id: backend_id.to_string(),
            policy_hash,
            policy: policy.clone(),
            decisions: decisions.to_vec(),
            record_hash,
        }
    }

    /// Recomputes the hash from the record's own fields.
    pub fn verify(&self) -> bool {
        LogRecord::new(&self.decisions, &self.model_hash, &self.policy, &self.backend_id) == *self
    }
}

/// Appends one line; earlier lines are never rewritten.
pub fn append_log(path: &Path, record: &LogRecord) -> Result<()> {
    let mut f = std::fs::OpenOptions::new().create(true).append(true).open(path)?;
    let line = serde_json::to_string(record).map_err(|e| TriageError::Log(e.to_string()))?;
    writeln!(f, "{line}")?;
    f.sync_data()?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRecord>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| TriageError::Log(format!("line {}: {e}", n + 1))))
        .collect()
}
