use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use skelsql_core::llm::BackendTag;
use skelsql_core::{Completer, CompletionParams, CompletionResult, LlmError};

use super::prompt_question;

enum Script {
    Queue(VecDeque<String>),
    PerQuestion(HashMap<String, VecDeque<String>>),
    Constant(String),
}

/// Deterministic completer. Responses are consumed atomically per call.
pub struct MockCompleter {
    script: Mutex<Script>,
}

impl MockCompleter {
    /// Replies in order, regardless of the prompt.
    pub fn queue<I: IntoIterator<Item = S>, S: Into<String>>(responses: I) -> Self {
        Self::with(Script::Queue(responses.into_iter().map(Into::into).collect()))
    }

    /// Replies from a separate queue per question, keyed by the prompt's final
    /// `-- Question:` line.
    pub fn per_question<I, Q, R, S>(scripts: I) -> Self
    where
        I: IntoIterator<Item = (Q, R)>,
        Q: AsRef<str>,
        R: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut map: HashMap<String, VecDeque<String>> = HashMap::new();
        for (q, responses) in scripts {
            let key = q.as_ref().split_whitespace().collect::<Vec<_>>().join(" ");
            map.entry(key).or_default().extend(responses.into_iter().map(Into::into));
        }
        Self::with(Script::PerQuestion(map))
    }

    /// Same reply to every prompt.
    pub fn constant(response: impl Into<String>) -> Self {
        Self::with(Script::Constant(response.into()))
    }

    fn with(script: Script) -> Self {
        MockCompleter { script: Mutex::new(script) }
    }
}

impl Completer for MockCompleter {
    fn complete(&self, prompt: &str, params: &CompletionParams) -> Result<CompletionResult, LlmError> {
        if prompt.is_empty() {
            return Err(LlmError::EmptyPrompt);
        }
        params.validate()?;
        let mut script = self.script.lock().expect("mock script lock");
        let text = match &mut *script {
            Script::Queue(q) => q.pop_front(),
            Script::PerQuestion(map) => prompt_question(prompt).and_then(|k| map.get_mut(&k)).and_then(VecDeque::pop_front),
            Script::Constant(s) => Some(s.clone()),
        }
        .ok_or(LlmError::ScriptExhausted)?;
        Ok(CompletionResult { text, latency: Duration::ZERO, backend: BackendTag::Mock })
    }
}
