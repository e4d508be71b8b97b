//! Completion backends: scripted mock, record/replay cassette, and an
//! OpenAI-compatible HTTP client.

mod cassette;
mod http;
mod mock;

pub use cassette::{cassette_key, CassetteEntry, Recorder, Replay};
pub use http::{HttpCompleter, HttpLimits, API_KEY_VAR};
pub use mock::MockCompleter;

/// Text after the last `-- Question:` marker in a prompt, with whitespace
/// collapsed. Demonstrations come first, so the last marker belongs to the
/// question being asked.
pub fn prompt_question(prompt: &str) -> Option<String> {
    let start = prompt.rfind("-- Question:")? + "-- Question:".len();
    let line = prompt[start..].lines().next().unwrap_or("");
    Some(line.split_whitespace().collect::<Vec<_>>().join(" "))
}
