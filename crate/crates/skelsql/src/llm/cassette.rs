use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use skelsql_core::llm::BackendTag;
use skelsql_core::{Completer, CompletionParams, CompletionResult, LlmError};

/// One recorded exchange, stored as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub key: String,
    pub prompt_sha256: String,
    pub response: String,
    pub params: CompletionParams,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 over the prompt bytes, a zero separator, and the canonical JSON of
/// the parameters.
pub fn cassette_key(prompt: &str, params: &CompletionParams) -> String {
    let mut h = Sha256::new();
    h.update(prompt.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(params).expect("params serialize"));
    hex::encode(h.finalize())
}

/// Strict replay: a prompt that was never recorded is an error.
pub struct Replay {
    entries: HashMap<String, String>,
}

impl Replay {
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let file = File::open(path).map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        let mut entries = HashMap::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| LlmError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry = serde_json::from_str(&line)
                .map_err(|e| LlmError::Io(format!("{} line {}: {e}", path.display(), n + 1)))?;
            entries.insert(entry.key, entry.response);
        }
        Ok(Replay { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Completer for Replay {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        let key = cassette_key(prompt, params);
        let text = self.entries.get(&key).cloned().ok_or(LlmError::CassetteMiss(key))?;
        Ok(CompletionResult { text, latency: Duration::ZERO, backend: BackendTag::Replay })
    }
}

/// Wraps another completer and appends every successful exchange to a
/// cassette file.
pub struct Recorder<C> {
    inner: C,
    out: Mutex<File>,
}

impl<C: Completer> Recorder<C> {
    pub fn create(inner: C, path: &Path) -> Result<Self, LlmError> {
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LlmError::Io(format!("{}: {e}", path.display())))?;
        Ok(Recorder { inner, out: Mutex::new(out) })
    }
}

impl<C: Completer> Completer for Recorder<C> {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        let result = self.inner.complete(prompt, params)?;
        let entry = CassetteEntry {
            key: cassette_key(prompt, params),
            prompt_sha256: sha256_hex(prompt.as_bytes()),
            response: result.text.clone(),
            params: params.clone(),
        };
        let mut line = serde_json::to_string(&entry).expect("entry serializes");
        line.push('\n');
        let mut out = self.out.lock().expect("cassette lock");
        out.write_all(line.as_bytes()).and_then(|_| out.flush()).map_err(|e| LlmError::Io(e.to_string()))?;
        Ok(result)
    }
}
